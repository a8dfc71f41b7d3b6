//! The linear-reconstruction attribute-inference attack. Secret-involving
//! marginal queries are answered on the synthetic dataset (optionally
//! rescaled into conditional form using the known quasi-identifiers), and a
//! linear program reconstructs the full secret column as the vector
//! t in [0,1]^n minimizing the total absolute query error. The target's
//! entry of t, rounded to the nearest integer, is the guess.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::{Category, Dataset, QuasiIdentifierTable};
use crate::lp::{solve_with, FitRow, L1FitProblem, SolveStatus, SolverOptions};
use crate::query::{batch_counts, enumerate_secret_queries, sample_queries, MarginalQuery, QuerySet};

use super::{AttackError, AttackGuess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryMode {
    /// Answers are raw marginal fractions on the synthetic data.
    Marginal,
    /// Answers are within-parent secret rates on the synthetic data,
    /// rescaled by the parent rate on the known quasi-identifiers. Queries
    /// whose parent has no synthetic support are dropped.
    Conditional,
}

fn default_k() -> usize {
    3
}
fn default_cap() -> usize {
    100_000
}
fn default_mode() -> QueryMode {
    QueryMode::Conditional
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_mode")]
    pub mode: QueryMode,
    /// Maximum number of queries; larger enumerations are uniformly sampled
    /// down to this budget.
    #[serde(default = "default_cap")]
    pub cap: usize,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            mode: default_mode(),
            cap: default_cap(),
        }
    }
}

/// A ready-to-solve reconstruction instance: retained queries, their
/// answers, and the per-query sets of quasi-identifier rows they touch.
#[derive(Debug, Clone)]
pub struct ReconstructionProblem {
    pub queries: QuerySet,
    pub answers: Vec<f64>,
    pub n: usize,
    rows: Vec<FitRow>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionSolution {
    /// Reconstructed secret column, one entry per quasi-identifier row.
    pub t: Vec<f64>,
    /// Total absolute query error at the optimum.
    pub objective: f64,
    pub status: SolveStatus,
}

/// Enumerates all k-way secret-involving queries (sampled down to `cap`),
/// answers them on the synthetic data, and assembles the linear program.
pub fn build_problem(
    s: &Dataset,
    x: &QuasiIdentifierTable,
    cfg: &ReconstructionConfig,
    rng: &mut dyn RngCore,
) -> Result<ReconstructionProblem, AttackError> {
    if s.schema() != x.schema() {
        return Err(AttackError::SchemaMismatch);
    }
    let enumerated = enumerate_secret_queries(s.schema(), cfg.k)?;
    let queries = if enumerated.len() > cfg.cap {
        sample_queries(&enumerated, cfg.cap, &mut *rng)
    } else {
        enumerated
    };
    build_problem_from_queries(s, x, queries, cfg.mode)
}

/// Assembles the reconstruction program for a caller-supplied query set.
/// Every query must involve the secret attribute.
pub fn build_problem_from_queries(
    s: &Dataset,
    x: &QuasiIdentifierTable,
    queries: QuerySet,
    mode: QueryMode,
) -> Result<ReconstructionProblem, AttackError> {
    if s.schema() != x.schema() {
        return Err(AttackError::SchemaMismatch);
    }
    let schema = s.schema();
    let n = x.n_rows();
    let m = s.n_rows() as f64;

    let parents: Vec<MarginalQuery> = queries
        .queries
        .iter()
        .map(|q| q.drop_secret(schema))
        .collect::<Result<_, _>>()?;
    let counts_s = batch_counts(&queries.queries, s, schema);
    let parent_counts_s = batch_counts(&parents, s, schema);
    let parent_counts_x = batch_counts(&parents, x, schema);

    // Matching quasi-identifier rows per parent cell, bucketed one attribute
    // set at a time so the scan over X runs once per set.
    let mut groups: HashMap<&[usize], Vec<usize>> = HashMap::new();
    for (i, p) in parents.iter().enumerate() {
        groups.entry(&p.attrs).or_default().push(i);
    }
    let mut match_lists: Vec<Vec<u32>> = vec![Vec::new(); parents.len()];
    for (attrs, members) in groups {
        let cards: Vec<usize> = attrs.iter().map(|&a| schema.cardinality(a)).collect();
        let cells: usize = cards.iter().product::<usize>().max(1);
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); cells];
        for i in 0..n {
            let row = x.row(i);
            let mut idx = 0usize;
            for (pos, &a) in attrs.iter().enumerate() {
                idx = idx * cards[pos] + row[a] as usize;
            }
            buckets[idx].push(i as u32);
        }
        for &qi in &members {
            let mut idx = 0usize;
            for (pos, &v) in parents[qi].values.iter().enumerate() {
                idx = idx * cards[pos] + v as usize;
            }
            match_lists[qi] = buckets[idx].clone();
        }
    }

    let inv_n = 1.0 / n as f64;
    let mut kept = Vec::new();
    let mut answers = Vec::new();
    let mut rows = Vec::new();
    for (i, q) in queries.queries.iter().enumerate() {
        let answer = match mode {
            QueryMode::Marginal => counts_s[i] as f64 / m,
            QueryMode::Conditional => {
                if parent_counts_s[i] == 0 {
                    continue; // undefined: zero-support parent carries no information
                }
                (counts_s[i] as f64 / parent_counts_s[i] as f64)
                    * (parent_counts_x[i] as f64 * inv_n)
            }
        };
        let secret_value = q
            .secret_value(schema)
            .expect("secret queries involve the secret attribute");
        let cols = std::mem::take(&mut match_lists[i]);
        let (coef, target) = if secret_value == 1 {
            (inv_n, answer)
        } else {
            (-inv_n, answer - cols.len() as f64 * inv_n)
        };
        rows.push(FitRow { cols, coef, target });
        answers.push(answer);
        kept.push(q.clone());
    }
    if kept.is_empty() {
        return Err(AttackError::NoQueries);
    }
    let queries = QuerySet {
        queries: kept,
        k: queries.k,
        includes_secret: true,
    };
    Ok(ReconstructionProblem {
        queries,
        answers,
        n,
        rows,
    })
}

impl ReconstructionProblem {
    /// The assembled linear-program rows.
    pub fn lp_rows(&self) -> &[FitRow] {
        &self.rows
    }

    /// Plain-text dump of the program (objective, then one constraint per
    /// line) for cross-checking against an external solver.
    pub fn dump_lp(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "minimize sum_j |e_j|  subject to  e_j = target_j - coef_j * sum(t[cols_j]);  0 <= t_i <= 1;  n = {}",
            self.n
        )?;
        for (j, r) in self.rows.iter().enumerate() {
            write!(w, "row {} coef {:.17e} target {:.17e} cols", j, r.coef, r.target)?;
            for c in &r.cols {
                write!(w, " {c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Solves the assembled program. An iteration-limited solve still returns
/// its best feasible reconstruction, flagged in `status`.
pub fn solve(p: &ReconstructionProblem) -> Result<ReconstructionSolution, AttackError> {
    let lp = L1FitProblem::new(p.n, p.rows.clone())?;
    // Near-degenerate instances crawl long after the reconstruction has
    // stabilized; cut the tail once progress falls below noise level.
    let opts = SolverOptions {
        stall_window: 2000,
        stall_tolerance: 1e-6 * p.rows.len() as f64,
        ..Default::default()
    };
    let sol = solve_with(&lp, &opts)?;
    Ok(ReconstructionSolution {
        t: sol.values,
        objective: sol.objective,
        status: sol.status,
    })
}

/// Rounds the target row's reconstructed value to a guess; an exact 0.5 is
/// resolved by a fair coin so the game stays unbiased.
pub fn decode(sol: &ReconstructionSolution, u: usize, rng: &mut dyn RngCore) -> AttackGuess {
    let score = sol.t[u];
    let guess = if score > 0.5 {
        1
    } else if score < 0.5 {
        0
    } else {
        u8::from(rng.gen::<bool>())
    };
    AttackGuess { guess, score }
}

/// The full attack: locate the target row, build, solve, decode.
pub fn recon_attack(
    s: &Dataset,
    x_u: &[Category],
    x: &QuasiIdentifierTable,
    cfg: &ReconstructionConfig,
    rng: &mut dyn RngCore,
) -> Result<AttackGuess, AttackError> {
    let u = (0..x.n_rows())
        .find(|&i| x.row(i) == x_u)
        .ok_or(AttackError::TargetNotFound)?;
    let problem = build_problem(s, x, cfg, rng)?;
    let solution = solve(&problem)?;
    Ok(decode(&solution, u, rng))
}
