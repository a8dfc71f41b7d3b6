//! Relaxed-projection synthetic data: a continuous relaxation of the dataset
//! (per-attribute probability blocks, softmax-parameterized) is optimized by
//! gradient descent so its relaxed marginal answers match target answers,
//! then randomized rounding turns relaxed rows into discrete records.
//!
//! The differentially private variant proceeds in adaptive rounds: the
//! exponential mechanism selects the worst-answered queries, those queries
//! are measured with Gaussian noise, and the relaxation is optimized against
//! everything measured so far. Privacy accounting is basic composition over
//! all select and measure events, with the Gaussian scale set by the analytic
//! mechanism; the reported epsilon is therefore an upper bound.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Category, Dataset, DomainSchema};
use crate::dp::{analytic_gaussian_sigma, exponential_mechanism, gaussian};
use crate::query::{batch_counts, QuerySet};

use super::SdgError;

/// Continuous relaxation of a dataset: `rows` pseudo-records, each a
/// concatenation of per-attribute probability simplices.
#[derive(Debug, Clone)]
pub struct RelaxedDataset {
    pub schema: Arc<DomainSchema>,
    pub rows: usize,
    /// Block offset per attribute into a row of `blocks`.
    pub offsets: Vec<usize>,
    /// Total width of one relaxed row (sum of cardinalities).
    pub width: usize,
    /// rows x width, row-major; each attribute block is a simplex.
    pub blocks: Vec<f64>,
}

impl RelaxedDataset {
    pub fn block(&self, row: usize, attr: usize) -> &[f64] {
        let card = self.schema.cardinality(attr);
        let start = row * self.width + self.offsets[attr];
        &self.blocks[start..start + card]
    }
}

fn block_offsets(schema: &DomainSchema) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(schema.width());
    let mut acc = 0usize;
    for a in 0..schema.width() {
        offsets.push(acc);
        acc += schema.cardinality(a);
    }
    (offsets, acc)
}

/// Gradient-descent state for fitting a relaxed dataset to query targets.
/// Exposed so callers can inspect per-step losses and gradients.
pub struct RapOptimizer {
    schema: Arc<DomainSchema>,
    rows: usize,
    offsets: Vec<usize>,
    width: usize,
    lr: f64,
    /// Per query, the block positions (offset + value) it multiplies.
    query_pos: Vec<Vec<u32>>,
    targets: Vec<f64>,
    /// Queries currently contributing to the loss.
    active: Vec<usize>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl RapOptimizer {
    pub fn new(
        schema: Arc<DomainSchema>,
        queries: &QuerySet,
        targets: Vec<f64>,
        relaxed_rows: usize,
        learning_rate: f64,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<Self, SdgError> {
        if targets.len() != queries.len() {
            return Err(SdgError::InvalidConfig(
                "one target per query required".into(),
            ));
        }
        if relaxed_rows == 0 {
            return Err(SdgError::InvalidConfig("relaxed_rows must be >= 1".into()));
        }
        let (offsets, width) = block_offsets(&schema);
        let query_pos: Vec<Vec<u32>> = queries
            .queries
            .iter()
            .map(|q| {
                q.attrs
                    .iter()
                    .zip(&q.values)
                    .map(|(&a, &v)| (offsets[a] + v as usize) as u32)
                    .collect()
            })
            .collect();
        // Random logits break the row symmetry; identical rows would collapse
        // the relaxation to a single product distribution.
        let logits: Vec<f64> = (0..relaxed_rows * width)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                0.5 * z
            })
            .collect();
        let active: Vec<usize> = (0..query_pos.len()).collect();
        let mut opt = Self {
            schema,
            rows: relaxed_rows,
            offsets,
            width,
            lr: learning_rate,
            query_pos,
            targets,
            active,
            logits,
            probs: vec![0.0; relaxed_rows * width],
        };
        opt.refresh_probs();
        Ok(opt)
    }

    pub fn set_active(&mut self, indices: Vec<usize>) {
        self.active = indices;
    }

    pub fn set_target(&mut self, query: usize, value: f64) {
        self.targets[query] = value;
    }

    fn refresh_probs(&mut self) {
        for r in 0..self.rows {
            let base = r * self.width;
            for a in 0..self.schema.width() {
                let card = self.schema.cardinality(a);
                let start = base + self.offsets[a];
                let slice = &self.logits[start..start + card];
                let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (i, &l) in slice.iter().enumerate() {
                    let e = (l - max).exp();
                    self.probs[start + i] = e;
                    total += e;
                }
                for i in 0..card {
                    self.probs[start + i] /= total;
                }
            }
        }
    }

    /// Relaxed answer of one query: mean over rows of the product of the
    /// query's block entries.
    pub fn answer(&self, query: usize) -> f64 {
        let pos = &self.query_pos[query];
        let mut acc = 0.0;
        for r in 0..self.rows {
            let base = r * self.width;
            let mut p = 1.0;
            for &o in pos {
                p *= self.probs[base + o as usize];
            }
            acc += p;
        }
        acc / self.rows as f64
    }

    pub fn answers_all(&self) -> Vec<f64> {
        (0..self.query_pos.len()).map(|q| self.answer(q)).collect()
    }

    /// Squared-L2 error over the active queries.
    pub fn loss(&self) -> f64 {
        self.active
            .iter()
            .map(|&q| {
                let e = self.answer(q) - self.targets[q];
                e * e
            })
            .sum()
    }

    /// Loss gradient with respect to the logits.
    pub fn gradient(&self) -> Vec<f64> {
        let mut grad_probs = vec![0.0; self.probs.len()];
        let inv_rows = 1.0 / self.rows as f64;
        // Residuals first.
        let errs: Vec<(usize, f64)> = self
            .active
            .iter()
            .map(|&q| (q, self.answer(q) - self.targets[q]))
            .collect();
        let mut prefix: Vec<f64> = Vec::new();
        let mut suffix: Vec<f64> = Vec::new();
        for r in 0..self.rows {
            let base = r * self.width;
            for &(q, err) in &errs {
                let pos = &self.query_pos[q];
                let k = pos.len();
                prefix.clear();
                prefix.resize(k + 1, 1.0);
                suffix.clear();
                suffix.resize(k + 1, 1.0);
                for j in 0..k {
                    prefix[j + 1] = prefix[j] * self.probs[base + pos[j] as usize];
                }
                for j in (0..k).rev() {
                    suffix[j] = suffix[j + 1] * self.probs[base + pos[j] as usize];
                }
                let coeff = 2.0 * err * inv_rows;
                for j in 0..k {
                    grad_probs[base + pos[j] as usize] += coeff * prefix[j] * suffix[j + 1];
                }
            }
        }
        // Softmax backward per block.
        let mut grad = vec![0.0; self.logits.len()];
        for r in 0..self.rows {
            let base = r * self.width;
            for a in 0..self.schema.width() {
                let card = self.schema.cardinality(a);
                let start = base + self.offsets[a];
                let mut dot = 0.0;
                for i in 0..card {
                    dot += self.probs[start + i] * grad_probs[start + i];
                }
                for i in 0..card {
                    grad[start + i] = self.probs[start + i] * (grad_probs[start + i] - dot);
                }
            }
        }
        grad
    }

    /// Central-finite-difference gradient of the loss with respect to the
    /// logits. Independent of the analytic backward pass (it only evaluates
    /// the loss), so it doubles as the oracle for gradient checks.
    pub fn finite_difference_gradient(&mut self, h: f64) -> Vec<f64> {
        let mut fd = vec![0.0; self.logits.len()];
        for i in 0..self.logits.len() {
            let orig = self.logits[i];
            self.logits[i] = orig + h;
            self.refresh_probs();
            let up = self.loss();
            self.logits[i] = orig - h;
            self.refresh_probs();
            let down = self.loss();
            self.logits[i] = orig;
            fd[i] = (up - down) / (2.0 * h);
        }
        self.refresh_probs();
        fd
    }

    /// One fixed-step descent step; returns the loss before the step.
    pub fn step(&mut self) -> Result<f64, SdgError> {
        let loss = self.loss();
        if !loss.is_finite() {
            return Err(SdgError::NonFiniteLoss);
        }
        let grad = self.gradient();
        for (l, g) in self.logits.iter_mut().zip(&grad) {
            *l -= self.lr * g;
        }
        self.refresh_probs();
        Ok(loss)
    }

    pub fn relaxed(&self) -> RelaxedDataset {
        RelaxedDataset {
            schema: self.schema.clone(),
            rows: self.rows,
            offsets: self.offsets.clone(),
            width: self.width,
            blocks: self.probs.clone(),
        }
    }
}

/// Fits a relaxed dataset against exact query answers on `d`.
pub fn rap_fit(
    d: &Dataset,
    queries: &QuerySet,
    iterations: usize,
    relaxed_rows: usize,
    learning_rate: f64,
    rng: &mut (impl Rng + ?Sized),
) -> Result<RelaxedDataset, SdgError> {
    let n = d.n_rows() as f64;
    let targets: Vec<f64> = batch_counts(&queries.queries, d, d.schema())
        .into_iter()
        .map(|c| c as f64 / n)
        .collect();
    let mut opt = RapOptimizer::new(
        d.schema_arc(),
        queries,
        targets,
        relaxed_rows,
        learning_rate,
        rng,
    )?;
    for _ in 0..iterations {
        opt.step()?;
    }
    Ok(opt.relaxed())
}

#[derive(Debug, Clone, Copy)]
pub struct RapDpParams {
    pub iterations: usize,
    pub relaxed_rows: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub rounds: usize,
    pub queries_per_round: usize,
    /// Fraction of the budget spent on exponential-mechanism selection; the
    /// rest goes to Gaussian measurement. 0.5 splits evenly across all
    /// events. Selection needs far less budget than measurement, so
    /// measure-heavy splits often buy better utility at the same epsilon.
    pub select_budget_fraction: f64,
}

/// Diagnostics from a private fit: which queries were measured, their noisy
/// answers, and the calibrated noise scale.
#[derive(Debug, Clone)]
pub struct RapDpTrace {
    pub measured: Vec<(usize, f64)>,
    pub sigma: f64,
    pub epsilon_per_event: f64,
}

/// Private adaptive fit: `rounds * queries_per_round` exponential-mechanism
/// selections plus as many Gaussian measurements, composed with basic
/// composition. The epsilon budget is divided between selection and
/// measurement by `select_budget_fraction`, then evenly over each side's
/// events; delta is split across the measure events.
pub fn rap_dp_fit(
    d: &Dataset,
    queries: &QuerySet,
    params: RapDpParams,
    rng: &mut (impl Rng + ?Sized),
) -> Result<RelaxedDataset, SdgError> {
    rap_dp_fit_traced(d, queries, params, rng).map(|(r, _)| r)
}

pub fn rap_dp_fit_traced(
    d: &Dataset,
    queries: &QuerySet,
    params: RapDpParams,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(RelaxedDataset, RapDpTrace), SdgError> {
    let n = d.n_rows() as f64;
    let total_measures = params.rounds * params.queries_per_round;
    let total_events = 2 * total_measures;
    if total_measures > queries.len() {
        return Err(SdgError::BudgetExhausted {
            events: total_events,
            reason: format!(
                "cannot measure {total_measures} distinct queries out of {}",
                queries.len()
            ),
        });
    }
    if !(params.select_budget_fraction > 0.0 && params.select_budget_fraction < 1.0) {
        return Err(SdgError::InvalidConfig(format!(
            "select_budget_fraction must be in (0, 1), got {}",
            params.select_budget_fraction
        )));
    }
    let eps_select = params.epsilon * params.select_budget_fraction / total_measures as f64;
    let eps_measure =
        params.epsilon * (1.0 - params.select_budget_fraction) / total_measures as f64;
    let delta_event = params.delta / total_measures as f64;
    if !(eps_select > 0.0) || !(eps_measure > 0.0) || !(delta_event > 0.0) {
        return Err(SdgError::BudgetExhausted {
            events: total_events,
            reason: "per-event budget underflows to zero".into(),
        });
    }
    let sensitivity = 1.0 / n;
    let sigma = analytic_gaussian_sigma(sensitivity, eps_measure, delta_event)?;

    let exact: Vec<f64> = batch_counts(&queries.queries, d, d.schema())
        .into_iter()
        .map(|c| c as f64 / n)
        .collect();
    let mut opt = RapOptimizer::new(
        d.schema_arc(),
        queries,
        exact.clone(),
        params.relaxed_rows,
        params.learning_rate,
        rng,
    )?;
    opt.set_active(Vec::new());

    let steps_per_round = params.iterations.div_ceil(params.rounds);
    let mut available: Vec<bool> = vec![true; queries.len()];
    let mut measured: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..params.rounds {
        let answers = opt.answers_all();
        for _ in 0..params.queries_per_round {
            let pool: Vec<usize> = (0..queries.len()).filter(|&q| available[q]).collect();
            let scores: Vec<f64> = pool.iter().map(|&q| (exact[q] - answers[q]).abs()).collect();
            let pick = pool[exponential_mechanism(&scores, eps_select, sensitivity, rng)?];
            available[pick] = false;
            let noisy = (exact[pick] + gaussian(sigma, rng)).clamp(0.0, 1.0);
            opt.set_target(pick, noisy);
            measured.push(pick);
            trace.push((pick, noisy));
        }
        opt.set_active(measured.clone());
        for _ in 0..steps_per_round {
            opt.step()?;
        }
    }
    Ok((
        opt.relaxed(),
        RapDpTrace {
            measured: trace,
            sigma,
            epsilon_per_event: eps_measure,
        },
    ))
}

/// Randomized rounding: each output record picks a relaxed row uniformly and
/// samples every attribute from that row's simplex block.
pub fn round_relaxed(
    relaxed: &RelaxedDataset,
    m: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Dataset, SdgError> {
    let width = relaxed.schema.width();
    let mut cells = Vec::with_capacity(m * width);
    for _ in 0..m {
        let r = rng.gen_range(0..relaxed.rows);
        for a in 0..width {
            let block = relaxed.block(r, a);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut v = block.len() - 1;
            for (c, &p) in block.iter().enumerate() {
                acc += p;
                if u < acc {
                    v = c;
                    break;
                }
            }
            cells.push(v as Category);
        }
    }
    Ok(Dataset::new(relaxed.schema.clone(), cells, m)?)
}
