//! Greedy subset selection under `R_I − α·R_D − β·R_C`.
//!
//! Each round draws a seeded batch of candidates, scores every candidate by
//! its marginal gain in feature coding rate minus the weighted marginal gain
//! in its own class's coding rate and the weighted coding rate of its soft
//! labels, and keeps the best one. Ties go to the smallest sample id.

mod data;

pub use data::{FeatureSet, SoftLabelStack};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding_rate::{label_coding_rate, CodingRateParams, GramState};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 5.0;
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_CANDIDATE_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Every class gets exactly `ipc` picks from its own pool. Classes take
    /// turns, one pick each per round.
    PerClass,
    /// One pool across classes; a class drops out once it holds `ipc`.
    GlobalCapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub ipc: usize,
    pub alpha: f64,
    pub beta: f64,
    pub params: CodingRateParams,
    pub candidate_batch: usize,
    pub mode: SelectionMode,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            ipc: 10,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            params: CodingRateParams::default(),
            candidate_batch: DEFAULT_CANDIDATE_BATCH,
            mode: SelectionMode::PerClass,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.ipc == 0 {
            return Err(Error::InvalidParams("ipc must be at least 1".into()));
        }
        if self.candidate_batch == 0 {
            return Err(Error::InvalidParams("candidate batch must be at least 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected ids per class, each list in pick order.
    pub selected_ids: Vec<Vec<u64>>,
    /// All picks in global round order.
    pub order: Vec<u64>,
    /// Criterion value of the winner of each round, aligned with `order`.
    pub per_round_scores: Vec<f64>,
    pub config: SelectionConfig,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

impl SelectionResult {
    pub fn total_selected(&self) -> usize {
        self.order.len()
    }

    /// Positions in `features` of the picks, in round order.
    pub fn positions(&self, features: &FeatureSet) -> Result<Vec<usize>> {
        self.order
            .iter()
            .map(|&id| {
                features
                    .position_of(id)
                    .ok_or_else(|| Error::SchemaMismatch(format!("unknown sample id {id}")))
            })
            .collect()
    }
}

/// `R_C(Y_i)` for every sample, computed once per selection run.
pub fn precompute_label_rates(stack: &SoftLabelStack, params: &CodingRateParams) -> Result<Vec<f64>> {
    params.validate()?;
    (0..stack.num_samples())
        .into_par_iter()
        .map(|i| label_coding_rate(&stack.sample(i), params))
        .collect()
}

/// Gram caches for the selected set: one over all picks (for `R_I`) and one
/// per class (for that class's term of `R_D`).
#[derive(Debug, Clone)]
pub struct SelectionState {
    params: CodingRateParams,
    global: GramState,
    per_class: Vec<GramState>,
    class_counts: Vec<usize>,
    total: usize,
}

impl SelectionState {
    pub fn new(dim: usize, num_classes: usize, params: &CodingRateParams) -> Result<Self> {
        let global = GramState::new(dim, params)?;
        Ok(Self {
            params: *params,
            per_class: vec![global.clone(); num_classes],
            global,
            class_counts: vec![0; num_classes],
            total: 0,
        })
    }

    pub fn global(&self) -> &GramState {
        &self.global
    }

    pub fn class_state(&self, class: usize) -> &GramState {
        &self.per_class[class]
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.class_counts[class]
    }

    /// Refactor for the coming round. Candidates are scored as if they were
    /// the `(total+1)`-th pick overall and the `(n_j+1)`-th of their class.
    /// With fixed scaling the factors are already current.
    pub fn prepare_round(&mut self, classes: &[usize]) -> Result<()> {
        if self.params.is_fixed() {
            return Ok(());
        }
        let dim = self.global.dim();
        self.global.refresh(self.params.gamma(dim, self.total + 1))?;
        for &c in classes {
            let gamma = self.params.gamma(dim, self.class_counts[c] + 1);
            self.per_class[c].refresh(gamma)?;
        }
        Ok(())
    }

    /// `ΔR_I − α·ΔR_D − β·R_C(Y)` for a candidate of class `class`.
    ///
    /// `ΔR_D` only tracks the candidate's own class term; with prefactor
    /// `(n_j+1)/(2(n+1))` held at the post-insertion counts it equals
    /// `(n_j+1)/(n+1)` times the class state's marginal gain.
    pub fn score_candidate(&self, z: &[f64], class: usize, label_rate: f64, alpha: f64, beta: f64) -> Result<f64> {
        let class_state = self.per_class.get(class).ok_or(Error::LabelOutOfRange {
            label: class,
            num_classes: self.per_class.len(),
        })?;
        let gain_i = self.global.marginal_gain(z)?;
        let mut score = gain_i - beta * label_rate;
        if alpha != 0.0 {
            let weight = (self.class_counts[class] + 1) as f64 / (self.total + 1) as f64;
            score -= alpha * weight * class_state.marginal_gain(z)?;
        }
        Ok(score)
    }

    pub fn insert(&mut self, z: &[f64], class: usize) -> Result<()> {
        self.global.insert(z)?;
        self.per_class[class].insert(z)?;
        self.class_counts[class] += 1;
        self.total += 1;
        Ok(())
    }
}

fn draw_batch(pool: &[usize], batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if pool.len() <= batch {
        return pool.to_vec();
    }
    rand::seq::index::sample(rng, pool.len(), batch)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Best candidate by score, ties broken by the smallest sample id.
fn argmax(scored: &[(usize, f64)], ids: &[u64]) -> (usize, f64) {
    let mut best = scored[0];
    for &(pos, s) in &scored[1..] {
        if s > best.1 || (s == best.1 && ids[pos] < ids[best.0]) {
            best = (pos, s);
        }
    }
    best
}

/// Greedy coding-rate selection. Deterministic given inputs and `config.seed`.
pub fn select(features: &FeatureSet, stack: &SoftLabelStack, config: &SelectionConfig) -> Result<SelectionResult> {
    let started = Instant::now();
    config.validate()?;
    if stack.num_samples() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: stack.num_samples(),
        });
    }
    let num_classes = features.num_classes();
    let members = features.class_members();
    match config.mode {
        SelectionMode::PerClass => {
            if let Some((class, m)) = members.iter().enumerate().find(|(_, m)| m.len() < config.ipc) {
                return Err(Error::InsufficientSamples {
                    class,
                    available: m.len(),
                    required: config.ipc,
                });
            }
        }
        SelectionMode::GlobalCapped => {
            let reachable: usize = members.iter().map(|m| m.len().min(config.ipc)).sum();
            if reachable < config.ipc * num_classes {
                let (class, m) = members
                    .iter()
                    .enumerate()
                    .find(|(_, m)| m.len() < config.ipc)
                    .expect("some class is short");
                return Err(Error::InsufficientSamples {
                    class,
                    available: m.len(),
                    required: config.ipc,
                });
            }
        }
    }

    let label_rates = precompute_label_rates(stack, &config.params)?;
    // n×d copy so each candidate's feature vector is contiguous.
    let rows = features.features().transpose();
    let labels = features.labels();
    let ids = features.sample_ids();
    let mut state = SelectionState::new(features.dim(), num_classes, &config.params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut selected_ids = vec![Vec::with_capacity(config.ipc); num_classes];
    let mut order = Vec::with_capacity(config.ipc * num_classes);
    let mut scores = Vec::with_capacity(config.ipc * num_classes);

    let mut run_round = |pool: &[usize], state: &mut SelectionState, rng: &mut ChaCha8Rng| -> Result<usize> {
        let batch = draw_batch(pool, config.candidate_batch, rng);
        let mut classes: Vec<usize> = batch.iter().map(|&p| labels[p]).collect();
        classes.sort_unstable();
        classes.dedup();
        state.prepare_round(&classes)?;
        let st = &*state;
        let scored = batch
            .par_iter()
            .map(|&p| {
                st.score_candidate(rows.row(p), labels[p], label_rates[p], config.alpha, config.beta)
                    .map(|s| (p, s))
            })
            .collect::<Result<Vec<_>>>()?;
        let (winner, score) = argmax(&scored, ids);
        state.insert(rows.row(winner), labels[winner])?;
        selected_ids[labels[winner]].push(ids[winner]);
        order.push(ids[winner]);
        scores.push(score);
        Ok(winner)
    };

    match config.mode {
        SelectionMode::PerClass => {
            let mut pools = members;
            for _ in 0..config.ipc {
                for pool in pools.iter_mut() {
                    let winner = run_round(pool, &mut state, &mut rng)?;
                    pool.retain(|&p| p != winner);
                }
            }
        }
        SelectionMode::GlobalCapped => {
            let mut pool: Vec<usize> = (0..features.len()).collect();
            let mut taken = vec![0usize; num_classes];
            for _ in 0..config.ipc * num_classes {
                let winner = run_round(&pool, &mut state, &mut rng)?;
                let class = labels[winner];
                taken[class] += 1;
                if taken[class] == config.ipc {
                    pool.retain(|&p| labels[p] != class);
                } else {
                    pool.retain(|&p| p != winner);
                }
            }
        }
    }

    Ok(SelectionResult {
        selected_ids,
        order,
        per_round_scores: scores,
        config: config.clone(),
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    fn tiny() -> (FeatureSet, SoftLabelStack) {
        let z = DenseMatrix::from_fn(3, 6, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0);
        let fs = FeatureSet::new(z, vec![0, 1, 0, 1, 0, 1], (10..16).collect(), 2).unwrap();
        let stack = SoftLabelStack::new(6, 1, 2, [0.5; 12].to_vec()).unwrap();
        (fs, stack)
    }

    #[test]
    fn per_class_budget_is_exact() {
        let (fs, stack) = tiny();
        let cfg = SelectionConfig {
            ipc: 2,
            ..Default::default()
        };
        let r = select(&fs, &stack, &cfg).unwrap();
        assert!(r.selected_ids.iter().all(|c| c.len() == 2));
        assert_eq!(r.order.len(), 4);
        assert_eq!(r.per_round_scores.len(), 4);
    }

    #[test]
    fn insufficient_samples() {
        let (fs, stack) = tiny();
        for mode in [SelectionMode::PerClass, SelectionMode::GlobalCapped] {
            let cfg = SelectionConfig {
                ipc: 4,
                mode,
                ..Default::default()
            };
            assert!(matches!(
                select(&fs, &stack, &cfg),
                Err(Error::InsufficientSamples { required: 4, .. })
            ));
        }
    }

    #[test]
    fn argmax_breaks_ties_by_id() {
        let ids = [7, 3, 5];
        assert_eq!(argmax(&[(0, 1.0), (1, 1.0), (2, 0.5)], &ids).0, 1);
        assert_eq!(argmax(&[(2, 1.0), (0, 1.0)], &ids).0, 2);
    }

    #[test]
    fn rejects_misaligned_stack() {
        let (fs, _) = tiny();
        let stack = SoftLabelStack::new(2, 1, 2, [0.5; 4].to_vec()).unwrap();
        assert!(select(&fs, &stack, &SelectionConfig::default()).is_err());
    }
}
