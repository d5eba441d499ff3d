//! Synthetic data with known structure, exhaustive oracles and small
//! downstream metrics.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coding_rate::{class_coding_rate, coding_rate, CodingRateParams};
use crate::error::{Error, Result};
use crate::label_compress::singular_values;
use crate::matrix::DenseMatrix;
use crate::selector::{precompute_label_rates, FeatureSet, SelectionConfig, SoftLabelStack};

pub const MAX_ORACLE_SAMPLES: usize = 16;
pub const MAX_ORACLE_BUDGET: usize = 4;

/// Gaussian mixture where class `j` lives on `center_j + span(U_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub subspace_rank: usize,
    /// Norm of every class center.
    pub separation: f64,
    /// Standard deviation of the isotropic noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            per_class: 500,
            dim: 32,
            subspace_rank: 8,
            separation: 3.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl MixtureSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.per_class == 0 || self.dim == 0 {
            return Err(Error::InvalidSpec(
                "classes, per-class count and dim must be >= 1".into(),
            ));
        }
        if self.subspace_rank == 0 || self.subspace_rank > self.dim {
            return Err(Error::InvalidSpec(format!(
                "subspace rank {} must be in 1..={}",
                self.subspace_rank, self.dim
            )));
        }
        if !(self.separation >= 0.0 && self.noise >= 0.0) {
            return Err(Error::InvalidSpec("separation and noise must be >= 0".into()));
        }
        Ok(())
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn orthonormal_columns(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let q = gaussian_matrix(rows, cols, rng).to_nalgebra().qr().q();
    DenseMatrix::from_nalgebra(&q)
}

/// Train/test split drawn from one mixture: the first `spec.per_class`
/// samples of every class go to train, the next `test_per_class` to test.
/// Positions are class-major; ids are positions, continuing into the test
/// split.
pub fn gen_mixture_split(spec: &MixtureSpec, test_per_class: usize) -> Result<(FeatureSet, FeatureSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (c, d, k) = (spec.num_classes, spec.dim, spec.subspace_rank);
    let mut geometry = Vec::with_capacity(c);
    for _ in 0..c {
        let mut center = gaussian_vec(d, &mut rng);
        let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
        center.iter_mut().for_each(|v| *v *= spec.separation / norm);
        geometry.push((center, orthonormal_columns(d, k, &mut rng)));
    }
    let per = spec.per_class + test_per_class;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(c * per);
    for (center, basis) in &geometry {
        for _ in 0..per {
            let g = gaussian_vec(k, &mut rng);
            let mut z = center.clone();
            for (i, zi) in z.iter_mut().enumerate() {
                *zi += basis.row(i).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
                if spec.noise > 0.0 {
                    *zi += spec.noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
            columns.push(z);
        }
    }
    let build = |take: &dyn Fn(usize) -> bool, id_base: usize| -> Result<FeatureSet> {
        let mut cols = Vec::new();
        let mut labels = Vec::new();
        for class in 0..c {
            for s in 0..per {
                if take(s) {
                    cols.push(columns[class * per + s].as_slice());
                    labels.push(class);
                }
            }
        }
        let n = labels.len();
        let ids = (id_base as u64..(id_base + n) as u64).collect();
        FeatureSet::new(DenseMatrix::from_columns(d, &cols)?, labels, ids, c)
    };
    let train = build(&|s| s < spec.per_class, 0)?;
    let test = build(&|s| s >= spec.per_class, c * spec.per_class)?;
    Ok((train, test))
}

pub fn gen_mixture(spec: &MixtureSpec) -> Result<FeatureSet> {
    Ok(gen_mixture_split(spec, 0)?.0)
}

/// Soft labels `Y = W·P` per sample: `P` holds `rank` prototype
/// distributions, `W` assigns every augmentation mostly to one prototype
/// (round robin) with a little random spread.
///
/// Prototype `i` is the temperature softmax of logits that lift a group
/// `S_i` of other classes by `support_boost` and the true class by
/// `support_boost + class_margin`; the groups of one sample are disjoint
/// slices of a random permutation. The true class is the argmax of every
/// row, and the stable rank of `Y` follows the planted rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGenSpec {
    pub num_augs: usize,
    pub temperature: f64,
    pub planted_rank: usize,
    /// Draw each sample's rank uniformly from `1..=planted_rank`.
    pub rank_jitter: bool,
    /// Weight of an unstructured random distribution mixed into every row.
    pub noise: f64,
    pub support_boost: f64,
    pub class_margin: f64,
    /// Standard deviation of Gaussian jitter on all non-true-class logits.
    pub logit_jitter: f64,
    /// Share of each weight row spread randomly over all prototypes.
    pub mix_spread: f64,
    pub seed: u64,
}

impl Default for LabelGenSpec {
    fn default() -> Self {
        Self {
            num_augs: 20,
            temperature: 1.0,
            planted_rank: 3,
            rank_jitter: false,
            noise: 0.0,
            support_boost: 6.0,
            class_margin: 0.2,
            logit_jitter: 0.1,
            mix_spread: 0.05,
            seed: 0,
        }
    }
}

impl LabelGenSpec {
    fn validate(&self, num_classes: usize) -> Result<()> {
        let max = self.num_augs.min(num_classes);
        if self.planted_rank == 0 || self.planted_rank > max {
            return Err(Error::InvalidSpec(format!(
                "planted rank {} must be in 1..={max}",
                self.planted_rank
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        for (name, v) in [("noise", self.noise), ("mix spread", self.mix_spread)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSpec(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("support boost", self.support_boost),
            ("class margin", self.class_margin),
            ("logit jitter", self.logit_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out: Vec<f64> = logits.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

fn prototypes(class: usize, c: usize, rank: usize, spec: &LabelGenSpec, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let others: Vec<usize> = (0..c).filter(|&j| j != class).collect();
    let order: Vec<usize> = index::sample(rng, others.len(), others.len())
        .into_iter()
        .map(|i| others[i])
        .collect();
    let group = (order.len() / rank).max(1);
    (0..rank)
        .map(|i| {
            let mut logits: Vec<f64> = (0..c)
                .map(|_| spec.logit_jitter * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for g in 0..group.min(order.len()) {
                logits[order[(i * group + g) % order.len()]] += spec.support_boost;
            }
            let rival = logits
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != class)
                .fold(f64::NEG_INFINITY, |m, (_, &v)| m.max(v));
            logits[class] = if rival.is_finite() {
                rival + spec.class_margin
            } else {
                0.0
            };
            softmax(&logits, spec.temperature)
        })
        .collect()
}

pub fn gen_soft_labels(features: &FeatureSet, spec: &LabelGenSpec) -> Result<SoftLabelStack> {
    let c = features.num_classes();
    let k = spec.num_augs;
    spec.validate(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::with_capacity(features.len() * k * c);
    for &class in features.labels() {
        let rank = if spec.rank_jitter {
            rng.random_range(1..=spec.planted_rank)
        } else {
            spec.planted_rank
        };
        let protos = prototypes(class, c, rank, spec, &mut rng);
        let offset = rng.random_range(0..rank);
        for aug in 0..k {
            let mut weights = softmax(&gaussian_vec(rank, &mut rng), 1.0);
            weights.iter_mut().for_each(|w| *w *= spec.mix_spread);
            weights[(aug + offset) % rank] += 1.0 - spec.mix_spread;
            let mut row = vec![0.0; c];
            for (w, p) in weights.iter().zip(&protos) {
                row.iter_mut().zip(p).for_each(|(r, &v)| *r += w * v);
            }
            if spec.noise > 0.0 {
                let q = softmax(&gaussian_vec(c, &mut rng), 1.0);
                row.iter_mut()
                    .zip(&q)
                    .for_each(|(r, &v)| *r = (1.0 - spec.noise) * *r + spec.noise * v);
            }
            data.extend(row);
        }
    }
    SoftLabelStack::new(features.len(), k, c, data)
}

/// `‖M‖_F² / σ₁²`.
pub fn stable_rank(m: &DenseMatrix) -> Result<f64> {
    let s1 = singular_values(m)?[0];
    if s1 == 0.0 {
        return Ok(0.0);
    }
    Ok(m.frobenius_norm().powi(2) / (s1 * s1))
}

/// `R_I(Z_S) − α·R_D(Z_S) − β·Σ_{i∈S} R_C(Y_i)` by direct recomputation.
pub fn set_objective(
    features: &FeatureSet,
    positions: &[usize],
    label_rates: &[f64],
    alpha: f64,
    beta: f64,
    params: &CodingRateParams,
) -> Result<f64> {
    let sub = features.subset(positions);
    let mut value = coding_rate(sub.features(), params)?;
    if alpha != 0.0 && !positions.is_empty() {
        value -= alpha * class_coding_rate(sub.features(), sub.labels(), sub.num_classes(), params)?;
    }
    value -= beta * positions.iter().map(|&p| label_rates[p]).sum::<f64>();
    Ok(value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSelection {
    /// Positions of the optimal subset, ascending.
    pub positions: Vec<usize>,
    /// Their sample ids, ascending.
    pub ids: Vec<u64>,
    pub value: f64,
    pub subsets_evaluated: usize,
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        if items.len() - i < k {
            break;
        }
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive maximizer of [`set_objective`] over all subsets holding exactly
/// `config.ipc` samples of every class. Ties go to the lexicographically
/// smallest sorted id list.
pub fn brute_force_select(
    features: &FeatureSet,
    stack: &SoftLabelStack,
    config: &SelectionConfig,
) -> Result<OracleSelection> {
    config.validate()?;
    if features.len() > MAX_ORACLE_SAMPLES || config.ipc > MAX_ORACLE_BUDGET {
        return Err(Error::InstanceTooLarge(format!(
            "n = {}, budget = {} (limits {MAX_ORACLE_SAMPLES}, {MAX_ORACLE_BUDGET})",
            features.len(),
            config.ipc
        )));
    }
    let members = features.class_members();
    if let Some((class, m)) = members.iter().enumerate().find(|(_, m)| m.len() < config.ipc) {
        return Err(Error::InsufficientSamples {
            class,
            available: m.len(),
            required: config.ipc,
        });
    }
    let rates = precompute_label_rates(stack, &config.params)?;
    let per_class: Vec<Vec<Vec<usize>>> = members.iter().map(|m| combinations(m, config.ipc)).collect();
    let ids = features.sample_ids();
    let mut best: Option<(f64, Vec<u64>, Vec<usize>)> = None;
    let mut counter = vec![0usize; per_class.len()];
    let mut evaluated = 0;
    loop {
        let mut positions: Vec<usize> = counter
            .iter()
            .enumerate()
            .flat_map(|(c, &i)| per_class[c][i].iter().copied())
            .collect();
        positions.sort_unstable();
        let value = set_objective(features, &positions, &rates, config.alpha, config.beta, &config.params)?;
        evaluated += 1;
        let mut sorted_ids: Vec<u64> = positions.iter().map(|&p| ids[p]).collect();
        sorted_ids.sort_unstable();
        let better = match &best {
            None => true,
            Some((v, bid, _)) => value > *v || (value == *v && sorted_ids < *bid),
        };
        if better {
            best = Some((value, sorted_ids, positions));
        }
        // odometer over the per-class combination lists
        let mut c = 0;
        loop {
            if c == counter.len() {
                let (value, ids, positions) = best.expect("at least one subset");
                return Ok(OracleSelection {
                    positions,
                    ids,
                    value,
                    subsets_evaluated: evaluated,
                });
            }
            counter[c] += 1;
            if counter[c] < per_class[c].len() {
                break;
            }
            counter[c] = 0;
            c += 1;
        }
    }
}

fn class_means(train: &FeatureSet, weights: impl Fn(usize, usize) -> f64) -> Result<Vec<Vec<f64>>> {
    let d = train.dim();
    let mut means = vec![vec![0.0; d]; train.num_classes()];
    let mut mass = vec![0.0; train.num_classes()];
    for i in 0..train.len() {
        let z = train.feature(i);
        for (c, mean) in means.iter_mut().enumerate() {
            let w = weights(i, c);
            if w > 0.0 {
                mass[c] += w;
                mean.iter_mut().zip(&z).for_each(|(m, v)| *m += w * v);
            }
        }
    }
    for (c, mean) in means.iter_mut().enumerate() {
        if mass[c] <= 0.0 {
            return Err(Error::MissingClass(c));
        }
        mean.iter_mut().for_each(|m| *m /= mass[c]);
    }
    Ok(means)
}

fn nearest_mean_accuracy(means: &[Vec<f64>], test: &FeatureSet) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for i in 0..test.len() {
        let z = test.feature(i);
        let mut best = (0usize, f64::INFINITY);
        for (c, mean) in means.iter().enumerate() {
            let dist: f64 = mean.iter().zip(&z).map(|(m, v)| (m - v).powi(2)).sum();
            // strict comparison keeps the lowest class id on ties
            if dist < best.1 {
                best = (c, dist);
            }
        }
        if best.0 == test.labels()[i] {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}

/// Nearest class-mean classifier fit on `train`, scored on `test`.
pub fn eval_nearest_mean(train: &FeatureSet, test: &FeatureSet) -> Result<f64> {
    let labels = train.labels();
    let means = class_means(train, |i, c| if labels[i] == c { 1.0 } else { 0.0 })?;
    Ok(nearest_mean_accuracy(&means, test))
}

/// Like [`eval_nearest_mean`], but class means are weighted by each
/// sample's soft labels averaged over augmentations (negative weights
/// clamped to zero).
pub fn eval_soft_nearest_mean(train: &FeatureSet, labels: &SoftLabelStack, test: &FeatureSet) -> Result<f64> {
    if labels.num_samples() != train.len() || labels.num_classes() != train.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            found: labels.num_samples(),
        });
    }
    let k = labels.num_augs() as f64;
    let weights: Vec<Vec<f64>> = (0..train.len())
        .map(|i| {
            let block = labels.sample(i);
            (0..labels.num_classes())
                .map(|c| (0..block.rows()).map(|r| block[(r, c)]).sum::<f64>() / k)
                .collect()
        })
        .collect();
    let means = class_means(train, |i, c| weights[i][c].max(0.0))?;
    Ok(nearest_mean_accuracy(&means, test))
}

/// `ipc` uniformly drawn positions per class, classes in order.
pub fn random_subset_per_class(features: &FeatureSet, ipc: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(ipc * features.num_classes());
    for (class, members) in features.class_members().iter().enumerate() {
        if members.len() < ipc {
            return Err(Error::InsufficientSamples {
                class,
                available: members.len(),
                required: ipc,
            });
        }
        out.extend(index::sample(rng, members.len(), ipc).into_iter().map(|i| members[i]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRpca {
    pub m: DenseMatrix,
    pub low_rank: DenseMatrix,
    pub sparse: DenseMatrix,
}

/// `M = L₀ + S₀` with `L₀` a product of Gaussian factors and `S₀` holding
/// `round(fraction·rows·cols)` spikes of magnitude `spike_scale·σ₁(L₀)` and
/// random sign.
pub fn planted_rpca_instance(
    rows: usize,
    cols: usize,
    rank: usize,
    sparse_fraction: f64,
    spike_scale: f64,
    seed: u64,
) -> Result<PlantedRpca> {
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::InvalidSpec(format!(
            "rank {rank} must be in 1..={}",
            rows.min(cols)
        )));
    }
    if !(0.0..=0.2).contains(&sparse_fraction) {
        return Err(Error::InvalidSpec(format!(
            "sparse fraction {sparse_fraction} must be in [0, 0.2]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(rows, rank, &mut rng);
    let b = gaussian_matrix(rank, cols, &mut rng);
    let low_rank = a.matmul(&b)?;
    let sigma1 = singular_values(&low_rank)?[0];
    let count = (sparse_fraction * (rows * cols) as f64).round() as usize;
    let mut sparse = DenseMatrix::zeros(rows, cols);
    for flat in index::sample(&mut rng, rows * cols, count) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sparse.as_mut_slice()[flat] = sign * spike_scale * sigma1;
    }
    Ok(PlantedRpca {
        m: low_rank.add(&sparse)?,
        low_rank,
        sparse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_count() {
        let items: Vec<usize> = (0..6).collect();
        assert_eq!(combinations(&items, 2).len(), 15);
        assert_eq!(combinations(&items, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn mixture_is_deterministic() {
        let spec = MixtureSpec {
            per_class: 5,
            ..Default::default()
        };
        assert_eq!(gen_mixture(&spec).unwrap(), gen_mixture(&spec).unwrap());
    }

    #[test]
    fn mixture_rejects_bad_rank() {
        let spec = MixtureSpec {
            subspace_rank: 40,
            ..Default::default()
        };
        assert!(matches!(gen_mixture(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn nearest_mean_tie_goes_to_lowest_class() {
        let train = FeatureSet::new(
            DenseMatrix::from_rows(&[vec![-1.0, 1.0]]).unwrap(),
            vec![1, 0],
            vec![0, 1],
            2,
        )
        .unwrap();
        let test = FeatureSet::new(DenseMatrix::zeros(1, 1), vec![0], vec![9], 2).unwrap();
        assert_eq!(eval_nearest_mean(&train, &test).unwrap(), 1.0);
    }

    #[test]
    fn nearest_mean_missing_class() {
        let train = FeatureSet::new(DenseMatrix::zeros(1, 2), vec![0, 0], vec![0, 1], 2).unwrap();
        assert!(matches!(eval_nearest_mean(&train, &train), Err(Error::MissingClass(1))));
    }

    #[test]
    fn planted_without_spikes() {
        let p = planted_rpca_instance(10, 8, 2, 0.0, 1.0, 1).unwrap();
        assert_eq!(p.m, p.low_rank);
        assert!(planted_rpca_instance(10, 8, 2, 0.3, 1.0, 1).is_err());
    }

    #[test]
    fn oracle_size_cap() {
        let spec = MixtureSpec {
            per_class: 9,
            num_classes: 2,
            dim: 3,
            subspace_rank: 1,
            ..Default::default()
        };
        let fs = gen_mixture(&spec).unwrap();
        let stack = gen_soft_labels(
            &fs,
            &LabelGenSpec {
                num_augs: 2,
                planted_rank: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = SelectionConfig {
            ipc: 2,
            ..Default::default()
        };
        assert!(matches!(
            brute_force_select(&fs, &stack, &cfg),
            Err(Error::InstanceTooLarge(_))
        ));
    }
}
