//! Values checked against independent computations (nalgebra eigen/SVD,
//! direct recomputation, exhaustive enumeration).

mod common;

use common::*;
use ratesel::coding_rate::*;
use ratesel::label_compress::*;
use ratesel::matrix::relative_error;
use ratesel::selector::*;
use ratesel::synthbench::*;
use ratesel::DenseMatrix;

#[test]
fn logdet_matches_eigenvalue_sum() {
    let mut r = rng(11);
    let a = gaussian(8, 8, &mut r);
    let spd = a
        .matmul(&a.transpose())
        .unwrap()
        .add(&DenseMatrix::identity(8).scale(0.5))
        .unwrap();
    let oracle: f64 = sym_eigenvalues(&spd).iter().map(|l| l.ln()).sum();
    assert!(rel(logdet_psd(&spd).unwrap(), oracle) < 1e-8);
}

#[test]
fn coding_rate_matches_eigen_oracle() {
    let mut r = rng(12);
    let z = gaussian(4, 6, &mut r);
    let params = CodingRateParams::adaptive(0.5);
    let gamma = 4.0 / (6.0 * 0.5);
    assert!(rel(coding_rate(&z, &params).unwrap(), rate_oracle(&z, gamma)) < 1e-8);
}

#[test]
fn class_rate_matches_per_class_eigen_oracle() {
    let mut r = rng(13);
    let z = gaussian(4, 8, &mut r);
    let labels = [0, 1, 1, 0, 1, 0, 0, 1];
    let params = CodingRateParams::adaptive(0.5);
    let mut oracle = 0.0;
    for class in 0..2 {
        let cols: Vec<usize> = (0..8).filter(|&i| labels[i] == class).collect();
        let nj = cols.len() as f64;
        let zj = z.select_columns(&cols);
        // prefactor n_j/(2n) applied to ln det, i.e. (n_j/n)·rate
        oracle += nj / 8.0 * rate_oracle(&zj, 4.0 / (nj * 0.5));
    }
    assert!(rel(class_coding_rate(&z, &labels, 2, &params).unwrap(), oracle) < 1e-8);
}

#[test]
fn label_rate_uses_transposed_orientation() {
    let mut r = rng(14);
    let y = gaussian(5, 7, &mut r);
    let params = CodingRateParams::adaptive(0.5);
    // d ← C = 7, n ← K = 5
    let oracle = rate_oracle(&y.transpose(), 7.0 / (5.0 * 0.5));
    assert!(rel(label_coding_rate(&y, &params).unwrap(), oracle) < 1e-10);
}

#[test]
fn rank_one_labels_have_lower_rate() {
    let mut r = rng(15);
    let row = gaussian_vec(6, &mut r);
    let rank1 = DenseMatrix::from_fn(4, 6, |_, j| row[j]);
    let full = gaussian(4, 6, &mut r);
    let full = full.scale(rank1.frobenius_norm() / full.frobenius_norm());
    let params = CodingRateParams::default();
    let a = label_coding_rate(&rank1, &params).unwrap();
    let b = label_coding_rate(&full, &params).unwrap();
    assert!(a < b, "{a} vs {b}");
    let rates = precompute_label_rates(&SoftLabelStack::from_samples(&[rank1, full]).unwrap(), &params).unwrap();
    assert_eq!(rates, vec![a, b]);
}

#[test]
fn cholesky_tracks_gram_after_inserts() {
    let mut r = rng(16);
    let gamma = 0.7;
    let mut g = GramState::new(5, &CodingRateParams::fixed(0.5, gamma)).unwrap();
    for _ in 0..10 {
        g.insert(&gaussian_vec(5, &mut r)).unwrap();
    }
    let direct = DenseMatrix::identity(5).add(&g.gram().scale(gamma)).unwrap();
    assert!(relative_error(&g.chol().reconstruct(), &direct) < 1e-8);
    assert_eq!(g.count(), 10);
}

#[test]
fn refresh_matches_fresh_state() {
    let mut r = rng(17);
    let params = CodingRateParams::adaptive(0.5);
    let mut a = GramState::new(4, &params).unwrap();
    let mut b = GramState::new(4, &params).unwrap();
    for _ in 0..6 {
        let z = gaussian_vec(4, &mut r);
        a.insert(&z).unwrap();
        b.insert(&z).unwrap();
    }
    a.refresh(0.3).unwrap();
    a.refresh(1.9).unwrap();
    b.refresh(1.9).unwrap();
    assert!(relative_error(a.chol().lower(), b.chol().lower()) < 1e-12);
    assert_eq!(a.round_gamma(), b.round_gamma());
}

#[test]
fn marginal_gain_matches_logdet_difference() {
    let mut r = rng(18);
    let d = 16;
    for trial in 0..100 {
        let gamma = 0.1 + (trial % 7) as f64 * 0.3;
        let params = CodingRateParams::fixed(0.5, gamma);
        let size = trial % 33;
        let mut g = GramState::new(d, &params).unwrap();
        let mut cols = Vec::new();
        for _ in 0..size {
            let z = gaussian_vec(d, &mut r);
            g.insert(&z).unwrap();
            cols.push(z);
        }
        let z = gaussian_vec(d, &mut r);
        let gain = g.marginal_gain(&z).unwrap();
        let before = half_logdet(&cols, d, gamma);
        cols.push(z);
        let after = half_logdet(&cols, d, gamma);
        assert!(rel(gain, after - before) < 1e-8, "trial {trial}");
    }
}

fn half_logdet(cols: &[Vec<f64>], d: usize, gamma: f64) -> f64 {
    if cols.is_empty() {
        return 0.0;
    }
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let z = DenseMatrix::from_columns(d, &refs).unwrap();
    rate_oracle(&z, gamma)
}

fn small_instance(seed: u64, n: usize) -> (FeatureSet, SoftLabelStack) {
    let spec = MixtureSpec {
        num_classes: 2,
        per_class: n / 2,
        dim: 4,
        subspace_rank: 2,
        separation: 1.5,
        noise: 0.5,
        seed,
    };
    let fs = gen_mixture(&spec).unwrap();
    let stack = gen_soft_labels(
        &fs,
        &LabelGenSpec {
            num_augs: 3,
            planted_rank: 2,
            rank_jitter: true,
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    (fs, stack)
}

#[test]
fn score_equals_full_criterion_difference() {
    let (fs, stack) = small_instance(19, 12);
    let params = CodingRateParams::adaptive(0.5);
    let (alpha, beta) = (5.0, 1.0);
    let rates = precompute_label_rates(&stack, &params).unwrap();
    let rows = fs.features().transpose();
    // two picks already made, one per class
    let chosen = [0usize, 6];
    let mut state = SelectionState::new(4, 2, &params).unwrap();
    for &p in &chosen {
        state.prepare_round(&[fs.labels()[p]]).unwrap();
        state.insert(rows.row(p), fs.labels()[p]).unwrap();
    }
    state.prepare_round(&[0, 1]).unwrap();
    let base = set_objective(&fs, &chosen, &rates, alpha, beta, &params).unwrap();
    for class in 0..2 {
        let cands: Vec<usize> = (0..12)
            .filter(|p| fs.labels()[*p] == class && !chosen.contains(p))
            .collect();
        let mut offsets = Vec::new();
        let mut best_score = (usize::MAX, f64::NEG_INFINITY);
        let mut best_full = (usize::MAX, f64::NEG_INFINITY);
        for &p in &cands {
            let score = state
                .score_candidate(rows.row(p), class, rates[p], alpha, beta)
                .unwrap();
            let mut with = chosen.to_vec();
            with.push(p);
            let full = set_objective(&fs, &with, &rates, alpha, beta, &params).unwrap() - base;
            offsets.push(full - score);
            if score > best_score.1 {
                best_score = (p, score);
            }
            if full > best_full.1 {
                best_full = (p, full);
            }
        }
        for o in &offsets {
            assert!((o - offsets[0]).abs() < 1e-9, "offset not constant: {offsets:?}");
        }
        assert_eq!(best_score.0, best_full.0);
    }
}

#[test]
fn huge_beta_picks_lowest_label_rate() {
    let mut r = rng(20);
    let n = 8;
    let features = gaussian(3, n, &mut r).scale(0.1);
    let fs = FeatureSet::new(features, vec![0; n], (0..n as u64).collect(), 1).unwrap();
    // sample 5 gets rank-1 labels; the rest are spread over several rows
    let mut samples = Vec::new();
    for i in 0..n {
        let m = if i == 5 {
            DenseMatrix::from_fn(4, 4, |_, j| if j == 0 { 1.0 } else { 0.0 })
        } else {
            DenseMatrix::from_fn(4, 4, |a, j| if (a + i) % 4 == j { 0.7 } else { 0.1 })
        };
        samples.push(m);
    }
    let stack = SoftLabelStack::from_samples(&samples).unwrap();
    let config = SelectionConfig {
        ipc: 1,
        beta: 1e6,
        ..Default::default()
    };
    let rates = precompute_label_rates(&stack, &config.params).unwrap();
    let argmin = (0..n).min_by(|&a, &b| rates[a].total_cmp(&rates[b])).unwrap();
    assert_eq!(argmin, 5);
    assert_eq!(select(&fs, &stack, &config).unwrap().order, vec![5]);
}

#[test]
fn greedy_within_bound_of_brute_force() {
    let bound = 1.0 - (-1.0f64).exp();
    for seed in 0..5 {
        let (fs, stack) = small_instance(100 + seed, 12);
        let config = SelectionConfig {
            ipc: 2,
            alpha: 0.0,
            beta: 0.0,
            params: CodingRateParams::fixed(0.5, 1.0),
            candidate_batch: 64,
            ..Default::default()
        };
        let greedy = select(&fs, &stack, &config).unwrap();
        let pos = greedy.positions(&fs).unwrap();
        let rates = vec![0.0; fs.len()];
        let value = set_objective(&fs, &pos, &rates, 0.0, 0.0, &config.params).unwrap();
        let oracle = brute_force_select(&fs, &stack, &config).unwrap();
        assert!(oracle.value >= value - 1e-12);
        assert!(value >= bound * oracle.value);
        assert_eq!(oracle.subsets_evaluated, 15 * 15);
    }
}

#[test]
fn truncation_error_equals_tail_spectrum() {
    let mut r = rng(21);
    let m = gaussian(30, 20, &mut r);
    let s = na_singular_values(&m);
    for rank in [1, 5, 12, 19] {
        let f = svd_truncate(&m, rank).unwrap();
        let err = m.sub(&f.reconstruct()).unwrap().frobenius_norm();
        let tail = s[rank..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((err - tail).abs() < 1e-9, "rank {rank}: {err} vs {tail}");
    }
}

fn decaying(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    let k = rows.min(cols);
    let u = gaussian(rows, k, &mut r);
    let v = gaussian(k, cols, &mut r);
    let d = DenseMatrix::from_diag(&(0..k).map(|i| 0.7f64.powi(i as i32)).collect::<Vec<_>>());
    u.matmul(&d).unwrap().matmul(&v).unwrap()
}

#[test]
fn randomized_svd_close_to_truncation() {
    let m = decaying(50, 40, 22);
    for rank in [3, 6, 10] {
        let exact = m
            .sub(&svd_truncate(&m, rank).unwrap().reconstruct())
            .unwrap()
            .frobenius_norm();
        let f = randomized_svd(&m, rank, 8, 2, 5).unwrap();
        let approx = m.sub(&f.reconstruct()).unwrap().frobenius_norm();
        assert!(approx <= 1.5 * exact, "rank {rank}: {approx} vs {exact}");
        assert_eq!(f, randomized_svd(&m, rank, 8, 2, 5).unwrap());
    }
}

#[test]
fn cur_recovers_planted_low_rank() {
    let p = planted_rpca_instance(60, 40, 3, 0.0, 1.0, 23).unwrap();
    let f = cur_decompose(&p.low_rank, 6, 6, 0, CurSampling::Leverage).unwrap();
    assert!(relative_error(&f.reconstruct().unwrap(), &p.low_rank) <= 1e-6);
    assert_eq!(
        f.col_indices,
        cur_decompose(&p.low_rank, 6, 6, 0, CurSampling::Leverage)
            .unwrap()
            .col_indices
    );
}

#[test]
fn rpca_recovers_planted_instance() {
    let p = planted_rpca_instance(60, 40, 3, 0.05, 1.0, 0).unwrap();
    let d = rpca_pcp(&p.m, &RpcaConfig::default()).unwrap();
    assert!(d.converged);
    assert!(d.iterations_used <= 500);
    assert!(relative_error(&d.low_rank, &p.low_rank) <= 1e-4);
    let support = |m: &DenseMatrix| -> Vec<usize> {
        (0..m.as_slice().len())
            .filter(|&i| m.as_slice()[i].abs() > 1e-6 * m.max_abs())
            .collect()
    };
    assert_eq!(support(&d.sparse_dense()), support(&p.sparse));
}

#[test]
fn svd_compression_of_near_rank_five_labels() {
    let spec = MixtureSpec {
        num_classes: 200,
        per_class: 1,
        dim: 4,
        subspace_rank: 2,
        ..Default::default()
    };
    let fs = gen_mixture(&spec).unwrap().subset(&[0, 1, 2, 3, 4, 5]);
    let stack = gen_soft_labels(
        &fs,
        &LabelGenSpec {
            num_augs: 100,
            planted_rank: 5,
            noise: 0.01,
            ..Default::default()
        },
    )
    .unwrap();
    let c = compress_labels(
        &stack,
        &CompressOptions::new(CompressionMethod::Svd, Budget::Ratio(10.0)),
    )
    .unwrap();
    assert!(c.stored_bytes * 10 <= c.original_bytes);
    let errors = reconstruction_errors(&decompress_labels(&c, false).unwrap(), &stack).unwrap();
    assert!(mean(&errors) <= 0.05, "mean error {}", mean(&errors));
}

#[test]
fn rpca_compression_matches_solver_output() {
    let p = planted_rpca_instance(30, 20, 2, 0.05, 1.0, 24).unwrap();
    let stack = SoftLabelStack::from_raw(1, 30, 20, p.m.as_slice().to_vec()).unwrap();
    let direct = rpca_pcp(&p.m, &RpcaConfig::default()).unwrap();
    let opts = CompressOptions::new(CompressionMethod::Rpca, Budget::Rank(20));
    let c = compress_labels(&stack, &opts).unwrap();
    let diag = c.rpca_diagnostics[0];
    assert_eq!(diag.iterations, direct.iterations_used);
    assert_eq!(diag.converged, direct.converged);
    assert_eq!(diag.sparse_found, direct.sparse.len());
    let recon = decompress_labels(&c, false).unwrap().sample(0);
    let expected = direct.low_rank.add(&direct.sparse_dense()).unwrap();
    assert!(relative_error(&recon, &expected) < 1e-10);
    // error against the input is the solver's own residual
    assert!((relative_error(&recon, &p.m) - diag.residual).abs() < 1e-10);
    assert!(relative_error(&recon, &p.m) <= RpcaConfig::default().tol);
}
