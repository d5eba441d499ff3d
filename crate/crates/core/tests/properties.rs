mod common;

use common::*;
use proptest::prelude::*;
use ratesel::coding_rate::*;
use ratesel::dataio::{decode_tensor, encode_tensor, Dtype};
use ratesel::label_compress::*;
use ratesel::matrix::relative_error;
use ratesel::selector::*;
use ratesel::synthbench::*;
use ratesel::DenseMatrix;
use std::path::Path;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn instance(seed: u64, classes: usize, per_class: usize, dim: usize) -> (FeatureSet, SoftLabelStack) {
    let fs = gen_mixture(&MixtureSpec {
        num_classes: classes,
        per_class,
        dim,
        subspace_rank: dim.min(3),
        seed,
        ..Default::default()
    })
    .unwrap();
    let stack = gen_soft_labels(
        &fs,
        &LabelGenSpec {
            num_augs: 4,
            planted_rank: 2.min(classes),
            rank_jitter: true,
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    (fs, stack)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn gain_is_submodular_on_nested_sets(seed in any::<u64>(), a_len in 0usize..6, extra in 1usize..8, gamma in 0.05f64..5.0) {
        let mut r = rng(seed);
        let d = 6;
        let params = CodingRateParams::fixed(0.5, gamma);
        let mut small = GramState::new(d, &params).unwrap();
        let mut large = GramState::new(d, &params).unwrap();
        for i in 0..a_len + extra {
            let z = gaussian_vec(d, &mut r);
            if i < a_len {
                small.insert(&z).unwrap();
            }
            large.insert(&z).unwrap();
        }
        let z = gaussian_vec(d, &mut r);
        prop_assert!(small.marginal_gain(&z).unwrap() >= large.marginal_gain(&z).unwrap() - 1e-10);
    }

    #[test]
    fn rate_grows_with_columns(seed in any::<u64>(), n in 1usize..10, gamma in 0.01f64..10.0) {
        let mut r = rng(seed);
        let params = CodingRateParams::fixed(0.5, gamma);
        let z = gaussian(5, n + 1, &mut r);
        let prefix = z.select_columns(&(0..n).collect::<Vec<_>>());
        prop_assert!(coding_rate(&z, &params).unwrap() >= coding_rate(&prefix, &params).unwrap());
        prop_assert!(coding_rate(&prefix, &params).unwrap() >= 0.0);
    }

    #[test]
    fn gram_side_symmetry(seed in any::<u64>(), d in 1usize..9, n in 1usize..9, gamma in 0.01f64..10.0) {
        let mut r = rng(seed);
        let z = gaussian(d, n, &mut r);
        let outer = DenseMatrix::identity(d).add(&z.outer_gram().scale(gamma)).unwrap();
        let inner = DenseMatrix::identity(n).add(&z.inner_gram().scale(gamma)).unwrap();
        let (a, b) = (logdet_psd(&outer).unwrap(), logdet_psd(&inner).unwrap());
        prop_assert!(rel(a, b) < 1e-9 || (a - b).abs() < 1e-12);
    }

    #[test]
    fn logdet_is_concave(seed in any::<u64>(), t in 0.01f64..0.99, lambda in 0.1f64..100.0) {
        let mut r = rng(seed);
        let a = gaussian(5, 3, &mut r).outer_gram();
        let b = gaussian(5, 4, &mut r).outer_gram();
        let f = |m: &DenseMatrix| logdet_psd(&DenseMatrix::identity(5).add(&m.scale(lambda)).unwrap()).unwrap();
        let mix = a.scale(t).add(&b.scale(1.0 - t)).unwrap();
        prop_assert!(f(&mix) >= t * f(&a) + (1.0 - t) * f(&b) - 1e-9);
    }

    #[test]
    fn single_class_collapse(seed in any::<u64>(), n in 1usize..12) {
        let mut r = rng(seed);
        let z = gaussian(4, n, &mut r);
        let params = CodingRateParams::default();
        let a = class_coding_rate(&z, &vec![0; n], 1, &params).unwrap();
        let b = coding_rate(&z, &params).unwrap();
        prop_assert!(rel(a, b) < 1e-10);
    }

    #[test]
    fn inserts_commute(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (x, y) = (gaussian_vec(4, &mut r), gaussian_vec(4, &mut r));
        let params = CodingRateParams::fixed(0.5, 1.0);
        let mut a = GramState::new(4, &params).unwrap();
        let mut b = GramState::new(4, &params).unwrap();
        a.insert(&x).unwrap();
        a.insert(&y).unwrap();
        b.insert(&y).unwrap();
        b.insert(&x).unwrap();
        prop_assert!(a.gram().sub(b.gram()).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn selection_is_deterministic_and_budgeted(seed in 0u64..1000, ipc in 1usize..4, batch in 1usize..12) {
        let (fs, stack) = instance(seed, 3, 6, 4);
        let config = SelectionConfig { ipc, candidate_batch: batch, seed, ..Default::default() };
        let a = select(&fs, &stack, &config).unwrap();
        let b = select(&fs, &stack, &config).unwrap();
        prop_assert_eq!(&a.selected_ids, &b.selected_ids);
        prop_assert_eq!(&a.per_round_scores, &b.per_round_scores);
        for ids in &a.selected_ids {
            prop_assert_eq!(ids.len(), ipc);
        }
        let mut all = a.order.clone();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), ipc * 3);
    }

    #[test]
    fn global_capped_respects_cap(seed in 0u64..1000, ipc in 1usize..4) {
        let (fs, stack) = instance(seed, 3, 6, 4);
        let config = SelectionConfig { ipc, mode: SelectionMode::GlobalCapped, seed, ..Default::default() };
        let res = select(&fs, &stack, &config).unwrap();
        for ids in &res.selected_ids {
            prop_assert!(ids.len() <= ipc);
        }
        prop_assert_eq!(res.total_selected(), ipc * 3);
    }

    #[test]
    fn argmax_is_scale_invariant(seed in 0u64..1000, scale in 0.1f64..10.0) {
        // k·(ΔR_I − αΔR_D − βR_C) = kΔR_I − (kα)ΔR_D − (kβ)R_C
        let (fs, stack) = instance(seed, 2, 5, 3);
        let params = CodingRateParams::fixed(0.5, 1.0);
        let rates = precompute_label_rates(&stack, &params).unwrap();
        let rows = fs.features().transpose();
        let mut state = SelectionState::new(3, 2, &params).unwrap();
        state.insert(rows.row(0), fs.labels()[0]).unwrap();
        let (alpha, beta) = (0.7, 0.4);
        let pick = |k: f64| {
            (1..fs.len())
                .map(|p| (p, k * state.score_candidate(rows.row(p), fs.labels()[p], rates[p], alpha, beta).unwrap()))
                .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
                .0
        };
        prop_assert_eq!(pick(1.0), pick(scale));
    }

    #[test]
    fn round_scores_never_increase(seed in 0u64..1000) {
        let (fs, stack) = instance(seed, 2, 6, 4);
        let config = SelectionConfig {
            ipc: 5,
            alpha: 0.0,
            beta: 0.0,
            params: CodingRateParams::fixed(0.5, 1.0),
            candidate_batch: 64,
            seed,
            ..Default::default()
        };
        let res = select(&fs, &stack, &config).unwrap();
        let labels = fs.labels();
        for class in 0..2 {
            let scores: Vec<f64> = res
                .order
                .iter()
                .zip(&res.per_round_scores)
                .filter(|(id, _)| labels[fs.position_of(**id).unwrap()] == class)
                .map(|(_, s)| *s)
                .collect();
            for w in scores.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", scores);
            }
        }
    }

    #[test]
    fn eckart_young(seed in any::<u64>(), rows in 2usize..12, cols in 2usize..12, frac in 0.0f64..1.0) {
        let mut r = rng(seed);
        let m = gaussian(rows, cols, &mut r);
        let k = rows.min(cols);
        let rank = 1 + ((k - 1) as f64 * frac) as usize;
        let s = na_singular_values(&m);
        let err = m.sub(&svd_truncate(&m, rank).unwrap().reconstruct()).unwrap().frobenius_norm();
        let tail = s[rank..].iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((err - tail).abs() < 1e-9);
    }

    #[test]
    fn svt_shrinks_singular_values(seed in any::<u64>(), rows in 1usize..10, cols in 1usize..10, tau in 0.0f64..3.0) {
        let mut r = rng(seed);
        let m = gaussian(rows, cols, &mut r);
        let expected: Vec<f64> = na_singular_values(&m).iter().map(|s| (s - tau).max(0.0)).collect();
        let got = na_singular_values(&svt(&m, tau).unwrap());
        for (a, b) in got.iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn shrink_is_elementwise(seed in any::<u64>(), tau in 0.0f64..2.0) {
        let mut r = rng(seed);
        let m = gaussian(4, 5, &mut r);
        let s = shrink(&m, tau).unwrap();
        for (x, y) in m.as_slice().iter().zip(s.as_slice()) {
            prop_assert_eq!(*y, x.signum() * (x.abs() - tau).max(0.0));
        }
    }

    #[test]
    fn budget_law_holds(k in 2usize..400, c in 2usize..1200, ratio in 1.01f64..40.0, bytes in prop::sample::select(vec![4u8, 8])) {
        for method in CompressionMethod::ALL {
            match planned_block_bytes(method, k, c, ratio, bytes, 0.8) {
                Ok(stored) => {
                    let original = (k * c) as u64 * bytes as u64;
                    prop_assert!(stored as f64 * ratio <= original as f64);
                }
                Err(e) => prop_assert!(matches!(e, ratesel::Error::RatioInfeasible { .. }), "{e}"),
            }
        }
    }

    #[test]
    fn pcp_feasible_on_success(seed in 0u64..200, rank in 1usize..3) {
        let p = planted_rpca_instance(20, 15, rank, 0.05, 1.0, seed).unwrap();
        let cfg = RpcaConfig::default();
        let d = rpca_pcp(&p.m, &cfg).unwrap();
        if d.converged {
            let recon = d.low_rank.add(&d.sparse_dense()).unwrap();
            prop_assert!(relative_error(&recon, &p.m) <= cfg.tol);
            prop_assert!(d.final_residual <= cfg.tol);
        }
    }

    #[test]
    fn tensors_round_trip(seed in any::<u64>(), dims in prop::collection::vec(1usize..6, 2..=3)) {
        let mut r = rng(seed);
        let n: usize = dims.iter().product();
        let data = gaussian_vec(n, &mut r);
        let bytes = encode_tensor(&dims, &data, Dtype::F64).unwrap();
        let t = decode_tensor(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(t.dims(), dims.clone());
        prop_assert_eq!(&t.data, &data);
        let t32 = decode_tensor(&encode_tensor(&dims, &data, Dtype::F32).unwrap(), Path::new("mem")).unwrap();
        for (a, b) in t32.data.iter().zip(&data) {
            prop_assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn compressed_bytes_recount(seed in 0u64..500, ratio in 1.5f64..6.0, m in 0usize..4) {
        let (_, stack) = instance(seed, 12, 1, 3);
        let method = CompressionMethod::ALL[m];
        let opts = CompressOptions { seed, ..CompressOptions::new(method, Budget::Ratio(ratio)) };
        match compress_labels(&stack, &opts) {
            Ok(c) => {
                prop_assert_eq!(c.recount_bytes(), c.stored_bytes);
                prop_assert!(c.stored_bytes as f64 * ratio <= c.original_bytes as f64);
            }
            Err(e) => prop_assert!(matches!(e, ratesel::Error::RatioInfeasible { .. }), "{e}"),
        }
    }

    #[test]
    fn generated_rows_on_simplex(seed in any::<u64>(), rank in 1usize..4, jitter in any::<bool>(), temp in 0.2f64..3.0, noise in 0.0f64..0.5) {
        let fs = gen_mixture(&MixtureSpec { num_classes: 5, per_class: 2, dim: 3, subspace_rank: 2, seed, ..Default::default() }).unwrap();
        let spec = LabelGenSpec { num_augs: 6, planted_rank: rank, rank_jitter: jitter, temperature: temp, noise, seed, ..Default::default() };
        // construction itself validates the simplex within 1e-6
        let stack = gen_soft_labels(&fs, &spec).unwrap();
        for row in stack.as_slice().chunks(5) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }
}
