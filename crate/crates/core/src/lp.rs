//! Exact simplex solver for box-constrained least-absolute-deviation fitting:
//!
//! ```text
//!     minimize   sum_j | target_j - coef_j * sum_{i in cols_j} t_i |
//!     subject to 0 <= t_i <= 1
//! ```
//!
//! The absolute values are linearized with a pair of nonnegative slack
//! variables per row, giving a standard-form LP with `q` equality rows and
//! `n + 2q` variables. The solver is a revised simplex over that program and
//! exploits its structure: a basis always consists of one slack per
//! "unfitted" row plus a square submatrix pairing fitted rows with basic `t`
//! variables. Only that submatrix's inverse (at most `n x n`, typically much
//! smaller) is maintained densely, so memory and per-iteration work stay
//! modest even with a hundred thousand rows.
//!
//! Rows are normalized internally so the working matrix has entries in
//! {-1, 0, +1}; pivots are therefore well scaled regardless of the caller's
//! coefficient magnitudes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("problem has no variables")]
    NoVariables,
    #[error("problem has no rows")]
    NoRows,
    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// One constraint row: `coef * sum_{i in cols} t_i` should be close to
/// `target`. Columns must be sorted, unique, and in range; `coef` nonzero.
#[derive(Debug, Clone)]
pub struct FitRow {
    pub cols: Vec<u32>,
    pub coef: f64,
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct L1FitProblem {
    pub n_vars: usize,
    pub rows: Vec<FitRow>,
}

impl L1FitProblem {
    pub fn new(n_vars: usize, rows: Vec<FitRow>) -> Result<Self, LpError> {
        if n_vars == 0 {
            return Err(LpError::NoVariables);
        }
        if rows.is_empty() {
            return Err(LpError::NoRows);
        }
        for (j, r) in rows.iter().enumerate() {
            if !(r.coef != 0.0 && r.coef.is_finite()) {
                return Err(LpError::InvalidRow {
                    row: j,
                    reason: format!("coefficient {} must be finite and nonzero", r.coef),
                });
            }
            if !r.target.is_finite() {
                return Err(LpError::InvalidRow {
                    row: j,
                    reason: "target must be finite".into(),
                });
            }
            if !r.cols.windows(2).all(|w| w[0] < w[1]) {
                return Err(LpError::InvalidRow {
                    row: j,
                    reason: "columns must be sorted and unique".into(),
                });
            }
            if let Some(&c) = r.cols.last() {
                if c as usize >= n_vars {
                    return Err(LpError::InvalidRow {
                        row: j,
                        reason: format!("column {c} out of range"),
                    });
                }
            }
        }
        Ok(Self { n_vars, rows })
    }

    /// Objective value of an arbitrary assignment; the independent check used
    /// by tests and by the solver's own final report.
    pub fn objective_of(&self, t: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let s: f64 = r.cols.iter().map(|&i| t[i as usize]).sum();
                (r.target - r.coef * s).abs()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Optimality tolerance on reduced costs.
    pub tol: f64,
    /// Pivot magnitude below which a ratio-test candidate is skipped.
    pub pivot_tol: f64,
    /// Hard cap on pivots; `None` means `10 * (n + 2q)`.
    pub iteration_limit: Option<usize>,
    /// Rebuild the basis inverse from scratch this often.
    pub refactor_every: usize,
    /// Stop early (status `IterationLimit`) when this many consecutive
    /// iterations improve the objective by less than `stall_tolerance` in
    /// total. Zero disables the check. Near-degenerate instances can crawl
    /// for tens of thousands of pivots after the answer has stabilized.
    pub stall_window: usize,
    pub stall_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            pivot_tol: 1e-9,
            iteration_limit: None,
            refactor_every: 100,
            stall_window: 0,
            stall_tolerance: 1e-9,
        }
    }
}

pub fn solve(problem: &L1FitProblem) -> Result<L1Solution, LpError> {
    solve_with(problem, &SolverOptions::default())
}

pub fn solve_with(problem: &L1FitProblem, opts: &SolverOptions) -> Result<L1Solution, LpError> {
    Solver::new(problem, opts.clone()).run()
}

/// Square dense matrix that can grow and shrink by one row/column pair.
struct DenseInv {
    dim: usize,
    data: Vec<f64>,
}

impl DenseInv {
    fn new() -> Self {
        Self {
            dim: 0,
            data: Vec::new(),
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.dim + c]
    }

    /// Bordered-inverse growth: given R = M^-1, appends one row and one
    /// column to M with u = R b, z = c R, and Schur complement s.
    fn grow(&mut self, u: &[f64], z: &[f64], s: f64) {
        let old = self.dim;
        let new = old + 1;
        let mut data = vec![0.0; new * new];
        for r in 0..old {
            for c in 0..old {
                data[r * new + c] = self.at(r, c) + u[r] * z[c] / s;
            }
            data[r * new + old] = -u[r] / s;
        }
        for c in 0..old {
            data[old * new + c] = -z[c] / s;
        }
        data[old * new + old] = 1.0 / s;
        self.dim = new;
        self.data = data;
    }

    /// Removes row `r0` and column `c0` (order-preserving compaction) after
    /// applying the Schur correction R[l][f] -= R[l][c0] * R[r0][f] / R[r0][c0].
    fn shrink(&mut self, r0: usize, c0: usize) -> Result<(), LpError> {
        let pivot = self.at(r0, c0);
        if pivot.abs() < 1e-300 {
            return Err(LpError::Numerical("singular shrink pivot".into()));
        }
        let old = self.dim;
        let new = old - 1;
        let mut data = vec![0.0; new * new];
        let mut rr = 0usize;
        for r in 0..old {
            if r == r0 {
                continue;
            }
            let ratio = self.at(r, c0) / pivot;
            let mut cc = 0usize;
            for c in 0..old {
                if c == c0 {
                    continue;
                }
                data[rr * new + cc] = self.at(r, c) - ratio * self.at(r0, c);
                cc += 1;
            }
            rr += 1;
        }
        self.dim = new;
        self.data = data;
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum TState {
    Lower,
    Upper,
    Basic(usize), // slot in basic_t
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum RowState {
    Plus,          // e+ basic
    Minus,         // e- basic
    Fitted(usize), // slot in fitted (residual pinned to zero)
}

#[derive(Clone, Copy, Debug)]
enum Entering {
    T(usize),
    /// Slack on a fitted row; `positive` selects e+ over e-.
    E { row: usize, positive: bool },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Leaving {
    EnteringBound,
    BasicT { slot: usize, to_upper: bool },
    BasicE { row: usize },
}

struct Solver<'a> {
    problem: &'a L1FitProblem,
    opts: SolverOptions,
    n: usize,
    q: usize,
    sign: Vec<f64>,          // per row, signum(coef)
    cost: Vec<f64>,          // per row, |coef|
    rhs: Vec<f64>,           // per row, target / |coef|
    col_rows: Vec<Vec<u32>>, // rows touching each variable

    t_state: Vec<TState>,
    row_state: Vec<RowState>,
    fitted: Vec<usize>,  // row ids, slot-ordered (columns of the inverse)
    basic_t: Vec<usize>, // var ids, slot-ordered (rows of the inverse)
    rinv: DenseInv,

    t_val: Vec<f64>,
    e_val: Vec<f64>, // value of the basic slack per unfitted row (scaled units)

    // Scratch buffers.
    y: Vec<f64>,   // duals per row
    w_t: Vec<f64>, // FTRAN result over basic_t slots
    w_e: Vec<f64>, // FTRAN result per row (zero on fitted rows)

    // Devex reference weights: t variables first, then (e+, e-) per row.
    devex: Vec<f64>,
    alpha_t: Vec<f64>, // pivot-row scratch over t variables

    pivots_since_refactor: usize,
    degenerate_streak: usize,
    bland: bool,
}

impl<'a> Solver<'a> {
    fn new(problem: &'a L1FitProblem, opts: SolverOptions) -> Self {
        let n = problem.n_vars;
        let q = problem.rows.len();
        let mut col_rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut sign = Vec::with_capacity(q);
        let mut cost = Vec::with_capacity(q);
        let mut rhs = Vec::with_capacity(q);
        for (j, r) in problem.rows.iter().enumerate() {
            sign.push(r.coef.signum());
            cost.push(r.coef.abs());
            rhs.push(r.target / r.coef.abs());
            for &c in &r.cols {
                col_rows[c as usize].push(j as u32);
            }
        }
        // Initial basis: every t at its lower bound, every row covered by the
        // slack matching its residual sign. Always feasible.
        let row_state: Vec<RowState> = rhs
            .iter()
            .map(|&b| if b >= 0.0 { RowState::Plus } else { RowState::Minus })
            .collect();
        let e_val: Vec<f64> = rhs.iter().map(|&b| b.abs()).collect();
        Self {
            problem,
            opts,
            n,
            q,
            sign,
            cost,
            rhs,
            col_rows,
            t_state: vec![TState::Lower; n],
            row_state,
            fitted: Vec::new(),
            basic_t: Vec::new(),
            rinv: DenseInv::new(),
            t_val: vec![0.0; n],
            e_val,
            y: vec![0.0; q],
            w_t: Vec::new(),
            w_e: vec![0.0; q],
            devex: vec![1.0; n + 2 * q],
            alpha_t: vec![0.0; n],
            pivots_since_refactor: 0,
            degenerate_streak: 0,
            bland: false,
        }
    }

    #[inline]
    fn devex_index(&self, entering: Entering) -> usize {
        match entering {
            Entering::T(v) => v,
            Entering::E { row, positive } => self.n + 2 * row + usize::from(positive),
        }
    }

    #[inline]
    fn row_has_var(&self, row: usize, var: usize) -> bool {
        self.problem.rows[row]
            .cols
            .binary_search(&(var as u32))
            .is_ok()
    }

    #[inline]
    fn is_fitted(&self, row: usize) -> bool {
        matches!(self.row_state[row], RowState::Fitted(_))
    }

    #[inline]
    fn sigma(&self, row: usize) -> f64 {
        match self.row_state[row] {
            RowState::Plus => 1.0,
            RowState::Minus => -1.0,
            RowState::Fitted(_) => 0.0,
        }
    }

    /// Duals: fixed on unfitted rows, solved through the basis on fitted ones.
    fn compute_duals(&mut self) {
        for j in 0..self.q {
            self.y[j] = match self.row_state[j] {
                RowState::Plus => self.cost[j],
                RowState::Minus => -self.cost[j],
                RowState::Fitted(_) => 0.0,
            };
        }
        let tau = self.fitted.len();
        if tau == 0 {
            return;
        }
        // r_k = - sum over unfitted rows touching var_k of y_g * sign_g
        let mut r = vec![0.0; tau];
        for (k, &v) in self.basic_t.iter().enumerate() {
            let mut acc = 0.0;
            for &jr in &self.col_rows[v] {
                let j = jr as usize;
                if !self.is_fitted(j) {
                    acc += self.y[j] * self.sign[j];
                }
            }
            r[k] = -acc;
        }
        // y_F = R^T r, accumulated row-wise so the traversal stays sequential.
        let mut y_f = vec![0.0; tau];
        for (k, &rk) in r.iter().enumerate() {
            if rk == 0.0 {
                continue;
            }
            let row = &self.rinv.data[k * tau..(k + 1) * tau];
            for (acc, &v) in y_f.iter_mut().zip(row) {
                *acc += rk * v;
            }
        }
        for (f, &row_id) in self.fitted.iter().enumerate() {
            self.y[row_id] = y_f[f];
        }
    }

    /// Reduced cost of a t variable: -sum_j y_j * A[j][i].
    fn reduced_cost_t(&self, var: usize) -> f64 {
        let mut acc = 0.0;
        for &jr in &self.col_rows[var] {
            let j = jr as usize;
            acc += self.y[j] * self.sign[j];
        }
        -acc
    }

    /// Devex-priced entering choice: among columns whose reduced cost beats
    /// the tolerance, maximize d^2 / weight. In Bland mode the first eligible
    /// column in a fixed order is taken instead, which breaks cycles.
    fn pick_entering(&self) -> Option<Entering> {
        let tol = self.opts.tol;
        let mut best_merit = 0.0f64;
        let mut best: Option<Entering> = None;
        for v in 0..self.n {
            let d = match self.t_state[v] {
                TState::Lower => -self.reduced_cost_t(v),
                TState::Upper => self.reduced_cost_t(v),
                TState::Basic(_) => continue,
            };
            if d > tol {
                if self.bland {
                    return Some(Entering::T(v));
                }
                let merit = d * d / self.devex[v];
                if merit > best_merit {
                    best_merit = merit;
                    best = Some(Entering::T(v));
                }
            }
        }
        // Fixed row order keeps the Bland fallback cycle-free.
        for j in 0..self.q {
            if !self.is_fitted(j) {
                continue;
            }
            let dp = self.cost[j] - self.y[j];
            let dm = self.cost[j] + self.y[j];
            if -dp > tol {
                if self.bland {
                    return Some(Entering::E {
                        row: j,
                        positive: true,
                    });
                }
                let merit = dp * dp / self.devex[self.n + 2 * j + 1];
                if merit > best_merit {
                    best_merit = merit;
                    best = Some(Entering::E {
                        row: j,
                        positive: true,
                    });
                }
            }
            if -dm > tol {
                if self.bland {
                    return Some(Entering::E {
                        row: j,
                        positive: false,
                    });
                }
                let merit = dm * dm / self.devex[self.n + 2 * j];
                if merit > best_merit {
                    best_merit = merit;
                    best = Some(Entering::E {
                        row: j,
                        positive: false,
                    });
                }
            }
        }
        best
    }

    /// Devex weight update after the ratio test picks a leaving variable.
    /// Uses the pivot row through the current inverse, computed before the
    /// basis changes.
    fn update_devex(&mut self, entering: Entering, leaving: Leaving) {
        let tau = self.fitted.len();
        // Pivot row through B^-1, restricted to the fitted slots (beta), the
        // only rows where nonbasic columns have tableau coefficients.
        let (beta, extra_row): (Vec<f64>, Option<usize>) = match leaving {
            Leaving::EnteringBound => return, // bound flip: no basis change
            Leaving::BasicT { slot, .. } => (
                self.rinv.data[slot * tau..(slot + 1) * tau].to_vec(),
                None,
            ),
            Leaving::BasicE { row } => {
                let z = self.row_through_inverse(row);
                let sg = self.sigma(row);
                (z.iter().map(|&zf| -sg * zf).collect(), Some(row))
            }
        };
        let alpha_q = match leaving {
            Leaving::BasicT { slot, .. } => self.w_t[slot],
            Leaving::BasicE { row } => self.w_e[row],
            Leaving::EnteringBound => unreachable!(),
        };
        if alpha_q == 0.0 {
            return;
        }
        let gamma_q = self.devex[self.devex_index(entering)].max(1.0);
        let scale = gamma_q / (alpha_q * alpha_q);
        if scale > 1e9 || gamma_q > 1e10 {
            // Stale reference framework: restart it.
            for w in self.devex.iter_mut() {
                *w = 1.0;
            }
            return;
        }
        // Pivot-row coefficients over t variables: scatter each fitted row's
        // beta through its column list.
        for v in self.alpha_t.iter_mut() {
            *v = 0.0;
        }
        for (f, &j) in self.fitted.iter().enumerate() {
            let c = beta[f];
            if c == 0.0 {
                continue;
            }
            let s = c * self.sign[j];
            for &col in &self.problem.rows[j].cols {
                self.alpha_t[col as usize] += s;
            }
        }
        if let Some(g) = extra_row {
            let s = self.sigma(g) * self.sign[g];
            for &col in &self.problem.rows[g].cols {
                self.alpha_t[col as usize] += s;
            }
        }
        for v in 0..self.n {
            let a = self.alpha_t[v];
            if a != 0.0 {
                let cand = a * a * scale;
                if cand > self.devex[v] {
                    self.devex[v] = cand;
                }
            }
        }
        for (f, &j) in self.fitted.iter().enumerate() {
            let b = beta[f];
            if b != 0.0 {
                let cand = b * b * scale;
                let idx = self.n + 2 * j;
                if cand > self.devex[idx] {
                    self.devex[idx] = cand;
                }
                if cand > self.devex[idx + 1] {
                    self.devex[idx + 1] = cand;
                }
            }
        }
        if let Some(g) = extra_row {
            let cand = scale; // beta_g = sigma_g, squared is 1
            let idx = self.n + 2 * g;
            if cand > self.devex[idx] {
                self.devex[idx] = cand;
            }
            if cand > self.devex[idx + 1] {
                self.devex[idx + 1] = cand;
            }
        }
        // The leaving variable turns nonbasic with the classic floor weight.
        let leave_idx = match leaving {
            Leaving::BasicT { slot, .. } => self.basic_t[slot],
            Leaving::BasicE { row } => self.n + 2 * row + usize::from(self.sigma(row) > 0.0),
            Leaving::EnteringBound => unreachable!(),
        };
        self.devex[leave_idx] = scale.max(1.0);
    }

    /// FTRAN: per-unit motion of the basic variables when the entering
    /// variable increases. Fills `w_t` (per slot) and `w_e` (per row).
    fn compute_direction(&mut self, entering: Entering) {
        let tau = self.fitted.len();
        self.w_t.clear();
        self.w_t.resize(tau, 0.0);
        match entering {
            Entering::T(v) => {
                // Gather the sparse a_F, then take row-wise dot products so
                // the inverse is traversed sequentially.
                let mut a_f = vec![0.0; tau];
                let mut nonzero = false;
                for &jr in &self.col_rows[v] {
                    let j = jr as usize;
                    if let RowState::Fitted(f) = self.row_state[j] {
                        a_f[f] = self.sign[j];
                        nonzero = true;
                    }
                }
                if nonzero {
                    for k in 0..tau {
                        let row = &self.rinv.data[k * tau..(k + 1) * tau];
                        let mut acc = 0.0;
                        for (&r, &a) in row.iter().zip(&a_f) {
                            acc += r * a;
                        }
                        self.w_t[k] = acc;
                    }
                }
            }
            Entering::E { row, positive } => {
                let f = match self.row_state[row] {
                    RowState::Fitted(f) => f,
                    _ => unreachable!("entering slack must be on a fitted row"),
                };
                let s = if positive { 1.0 } else { -1.0 };
                for k in 0..tau {
                    self.w_t[k] = s * self.rinv.at(k, f);
                }
            }
        }
        // aw[g] = A[g, basic] . w_t accumulated per unfitted row.
        for g in 0..self.q {
            self.w_e[g] = 0.0;
        }
        for (k, &v) in self.basic_t.iter().enumerate() {
            let wk = self.w_t[k];
            if wk == 0.0 {
                continue;
            }
            for &jr in &self.col_rows[v] {
                let g = jr as usize;
                if !self.is_fitted(g) {
                    self.w_e[g] += self.sign[g] * wk;
                }
            }
        }
        // w_e[g] = sigma_g * (a_g - aw[g]).
        for g in 0..self.q {
            let sigma = self.sigma(g);
            if sigma == 0.0 {
                self.w_e[g] = 0.0;
            } else {
                self.w_e[g] = -sigma * self.w_e[g];
            }
        }
        if let Entering::T(v) = entering {
            for &jr in &self.col_rows[v] {
                let g = jr as usize;
                let sigma = self.sigma(g);
                if sigma != 0.0 {
                    self.w_e[g] += sigma * self.sign[g];
                }
            }
        }
    }

    /// Two-sided ratio test for bounded variables. Ties prefer the largest
    /// pivot magnitude for stability.
    fn ratio_test(&self, entering: Entering, dir: f64) -> (f64, Option<Leaving>) {
        let piv_tol = self.opts.pivot_tol;
        let mut limit = f64::INFINITY;
        let mut leaving: Option<Leaving> = None;
        let mut best_pivot = 0.0f64;
        let consider =
            |step: f64, pivot_mag: f64, cand: Leaving, limit: &mut f64, leaving: &mut Option<Leaving>, best_pivot: &mut f64| {
                let step = step.max(0.0);
                if step < *limit - 1e-12 {
                    *limit = step;
                    *leaving = Some(cand);
                    *best_pivot = pivot_mag;
                } else if step < *limit + 1e-12 && pivot_mag > *best_pivot {
                    *leaving = Some(cand);
                    *best_pivot = pivot_mag;
                }
            };
        if let Entering::T(_) = entering {
            // The entering variable itself can traverse to its other bound.
            consider(
                1.0,
                1.0,
                Leaving::EnteringBound,
                &mut limit,
                &mut leaving,
                &mut best_pivot,
            );
        }
        for (k, &v) in self.basic_t.iter().enumerate() {
            let w = dir * self.w_t[k];
            let x = self.t_val[v];
            if w > piv_tol {
                consider(
                    x / w,
                    w.abs(),
                    Leaving::BasicT {
                        slot: k,
                        to_upper: false,
                    },
                    &mut limit,
                    &mut leaving,
                    &mut best_pivot,
                );
            } else if w < -piv_tol {
                consider(
                    (1.0 - x) / (-w),
                    w.abs(),
                    Leaving::BasicT {
                        slot: k,
                        to_upper: true,
                    },
                    &mut limit,
                    &mut leaving,
                    &mut best_pivot,
                );
            }
        }
        for g in 0..self.q {
            if self.is_fitted(g) {
                continue;
            }
            let w = dir * self.w_e[g];
            if w > piv_tol {
                consider(
                    self.e_val[g] / w,
                    w.abs(),
                    Leaving::BasicE { row: g },
                    &mut limit,
                    &mut leaving,
                    &mut best_pivot,
                );
            }
        }
        (limit, leaving)
    }

    fn apply_step(&mut self, entering: Entering, dir: f64, step: f64) {
        for (k, &v) in self.basic_t.iter().enumerate() {
            self.t_val[v] = (self.t_val[v] - step * dir * self.w_t[k]).clamp(0.0, 1.0);
        }
        for g in 0..self.q {
            if !self.is_fitted(g) {
                self.e_val[g] = (self.e_val[g] - step * dir * self.w_e[g]).max(0.0);
            }
        }
        if let Entering::T(v) = entering {
            self.t_val[v] = (match self.t_state[v] {
                TState::Lower => dir * step,
                TState::Upper => 1.0 + dir * step,
                TState::Basic(_) => unreachable!(),
            })
            .clamp(0.0, 1.0);
        }
    }

    /// z[f] = A[row, basic_t] . R[:, f] -- the row-replacement BTRAN helper.
    fn row_through_inverse(&self, row: usize) -> Vec<f64> {
        let tau = self.fitted.len();
        let mut z = vec![0.0; tau];
        for &c in &self.problem.rows[row].cols {
            if let TState::Basic(k) = self.t_state[c as usize] {
                let a = self.sign[row];
                for f in 0..tau {
                    z[f] += a * self.rinv.at(k, f);
                }
            }
        }
        z
    }

    fn pivot(
        &mut self,
        entering: Entering,
        leaving: Leaving,
        step: f64,
        dir: f64,
    ) -> Result<(), LpError> {
        self.apply_step(entering, dir, step);
        match (entering, leaving) {
            (Entering::T(v), Leaving::EnteringBound) => {
                // Bound flip, no basis change.
                self.t_state[v] = match self.t_state[v] {
                    TState::Lower => {
                        self.t_val[v] = 1.0;
                        TState::Upper
                    }
                    TState::Upper => {
                        self.t_val[v] = 0.0;
                        TState::Lower
                    }
                    TState::Basic(_) => unreachable!(),
                };
            }
            (Entering::T(v), Leaving::BasicT { slot, to_upper }) => {
                let out = self.basic_t[slot];
                let pivot = self.w_t[slot];
                if pivot.abs() < 1e-300 {
                    return Err(LpError::Numerical("zero column-replacement pivot".into()));
                }
                // Column replacement: R' = (I - (w - e_k) e_k^T / pivot) R.
                let tau = self.fitted.len();
                let pivot_row: Vec<f64> = (0..tau).map(|f| self.rinv.at(slot, f) / pivot).collect();
                for k in 0..tau {
                    if k == slot {
                        continue;
                    }
                    let wk = self.w_t[k];
                    if wk == 0.0 {
                        continue;
                    }
                    for f in 0..tau {
                        *self.rinv.at_mut(k, f) -= wk * pivot_row[f];
                    }
                }
                for f in 0..tau {
                    *self.rinv.at_mut(slot, f) = pivot_row[f];
                }
                self.basic_t[slot] = v;
                self.t_state[v] = TState::Basic(slot);
                self.t_state[out] = if to_upper {
                    self.t_val[out] = 1.0;
                    TState::Upper
                } else {
                    self.t_val[out] = 0.0;
                    TState::Lower
                };
            }
            (Entering::T(v), Leaving::BasicE { row }) => {
                // Basis grows: `row` becomes fitted, `v` becomes basic.
                let z = self.row_through_inverse(row);
                let a_g = if self.row_has_var(row, v) {
                    self.sign[row]
                } else {
                    0.0
                };
                let mut aw = 0.0;
                for (k, &vk) in self.basic_t.iter().enumerate() {
                    if self.row_has_var(row, vk) {
                        aw += self.sign[row] * self.w_t[k];
                    }
                }
                let s = a_g - aw;
                if s.abs() < 1e-300 {
                    return Err(LpError::Numerical("zero grow pivot".into()));
                }
                let u = self.w_t.clone();
                self.rinv.grow(&u, &z, s);
                let new_slot = self.fitted.len();
                self.fitted.push(row);
                self.basic_t.push(v);
                self.row_state[row] = RowState::Fitted(new_slot);
                self.t_state[v] = TState::Basic(new_slot);
                self.e_val[row] = 0.0;
            }
            (Entering::E { row, positive }, Leaving::BasicT { slot, to_upper }) => {
                // Basis shrinks: `row` stops being fitted, var at `slot` hits a bound.
                let f = match self.row_state[row] {
                    RowState::Fitted(f) => f,
                    _ => unreachable!(),
                };
                let out = self.basic_t[slot];
                self.rinv.shrink(slot, f)?;
                self.fitted.remove(f);
                self.basic_t.remove(slot);
                for (fi, &r) in self.fitted.iter().enumerate() {
                    self.row_state[r] = RowState::Fitted(fi);
                }
                for (k, &tv) in self.basic_t.iter().enumerate() {
                    self.t_state[tv] = TState::Basic(k);
                }
                self.row_state[row] = if positive {
                    RowState::Plus
                } else {
                    RowState::Minus
                };
                self.e_val[row] = step;
                self.t_state[out] = if to_upper {
                    self.t_val[out] = 1.0;
                    TState::Upper
                } else {
                    self.t_val[out] = 0.0;
                    TState::Lower
                };
            }
            (Entering::E { row, positive }, Leaving::BasicE { row: g }) => {
                // Fitted-row swap: `row` leaves the fitted set, `g` joins it.
                let f = match self.row_state[row] {
                    RowState::Fitted(f) => f,
                    _ => unreachable!(),
                };
                let z = self.row_through_inverse(g);
                let pivot = z[f];
                if pivot.abs() < 1e-300 {
                    return Err(LpError::Numerical("zero row-replacement pivot".into()));
                }
                let tau = self.fitted.len();
                let pivot_col: Vec<f64> = (0..tau).map(|k| self.rinv.at(k, f) / pivot).collect();
                for ff in 0..tau {
                    if ff == f {
                        continue;
                    }
                    let zf = z[ff];
                    if zf == 0.0 {
                        continue;
                    }
                    for k in 0..tau {
                        *self.rinv.at_mut(k, ff) -= zf * pivot_col[k];
                    }
                }
                for k in 0..tau {
                    *self.rinv.at_mut(k, f) = pivot_col[k];
                }
                self.fitted[f] = g;
                self.row_state[g] = RowState::Fitted(f);
                self.row_state[row] = if positive {
                    RowState::Plus
                } else {
                    RowState::Minus
                };
                self.e_val[row] = step;
                self.e_val[g] = 0.0;
            }
            (Entering::E { .. }, Leaving::EnteringBound) => {
                unreachable!("slack variables have no upper bound")
            }
        }
        self.pivots_since_refactor += 1;
        Ok(())
    }

    /// Rebuilds the dense inverse from scratch and recomputes basic values.
    /// A numerically singular basis (which valid pivots should never create)
    /// degrades to the all-slack basis, keeping the current t profile.
    fn refactor(&mut self) {
        let tau = self.fitted.len();
        if tau > 0 {
            let mut m = vec![0.0; tau * tau];
            for (f, &row) in self.fitted.iter().enumerate() {
                for (k, &v) in self.basic_t.iter().enumerate() {
                    m[f * tau + k] = if self.row_has_var(row, v) {
                        self.sign[row]
                    } else {
                        0.0
                    };
                }
            }
            match invert(&m, tau) {
                Some(inv) => {
                    self.rinv.dim = tau;
                    self.rinv.data = inv;
                }
                None => {
                    for &v in &self.basic_t.clone() {
                        let x = self.t_val[v];
                        self.t_state[v] = if x >= 0.5 { TState::Upper } else { TState::Lower };
                    }
                    for &row in &self.fitted.clone() {
                        self.row_state[row] = RowState::Plus; // realigned below
                    }
                    self.fitted.clear();
                    self.basic_t.clear();
                    self.rinv = DenseInv::new();
                }
            }
        }
        self.recompute_values();
        self.pivots_since_refactor = 0;
    }

    /// Recomputes values exactly from the basis: nonbasic t at its bound,
    /// basic t through the inverse, slacks from residuals. Repairs drift.
    fn recompute_values(&mut self) {
        for v in 0..self.n {
            match self.t_state[v] {
                TState::Lower => self.t_val[v] = 0.0,
                TState::Upper => self.t_val[v] = 1.0,
                TState::Basic(_) => {}
            }
        }
        let tau = self.fitted.len();
        if tau > 0 {
            let mut rhs_f = vec![0.0; tau];
            for (f, &row) in self.fitted.iter().enumerate() {
                let mut fixed = 0.0;
                for &c in &self.problem.rows[row].cols {
                    if self.t_state[c as usize] == TState::Upper {
                        fixed += 1.0;
                    }
                }
                rhs_f[f] = self.rhs[row] - self.sign[row] * fixed;
            }
            for (k, &v) in self.basic_t.iter().enumerate() {
                let mut acc = 0.0;
                for f in 0..tau {
                    acc += self.rinv.at(k, f) * rhs_f[f];
                }
                self.t_val[v] = acc.clamp(0.0, 1.0);
            }
        }
        for g in 0..self.q {
            match self.row_state[g] {
                RowState::Fitted(_) => self.e_val[g] = 0.0,
                RowState::Plus | RowState::Minus => {
                    let sum: f64 = self.problem.rows[g]
                        .cols
                        .iter()
                        .map(|&c| self.t_val[c as usize])
                        .sum();
                    let resid = self.rhs[g] - self.sign[g] * sum;
                    // Keep the slack choice aligned with the residual sign so
                    // the state stays primal feasible.
                    if resid >= 0.0 {
                        self.row_state[g] = RowState::Plus;
                        self.e_val[g] = resid;
                    } else {
                        self.row_state[g] = RowState::Minus;
                        self.e_val[g] = -resid;
                    }
                }
            }
        }
    }

    fn scaled_objective(&self) -> f64 {
        (0..self.q)
            .filter(|&g| !self.is_fitted(g))
            .map(|g| self.cost[g] * self.e_val[g])
            .sum()
    }

    fn run(mut self) -> Result<L1Solution, LpError> {
        let limit = self
            .opts
            .iteration_limit
            .unwrap_or(10 * (self.n + 2 * self.q));
        let mut iterations = 0usize;
        let mut status = SolveStatus::Optimal;
        let mut last_obj = self.scaled_objective();
        let mut stall_anchor = last_obj;
        let mut stalled_for = 0usize;
        while iterations < limit {
            if self.pivots_since_refactor >= self.opts.refactor_every {
                self.refactor();
            }
            self.compute_duals();
            let entering = match self.pick_entering() {
                Some(e) => e,
                None => break,
            };
            let dir = match entering {
                Entering::T(v) => match self.t_state[v] {
                    TState::Lower => 1.0,
                    TState::Upper => -1.0,
                    TState::Basic(_) => unreachable!(),
                },
                Entering::E { .. } => 1.0,
            };
            self.compute_direction(entering);
            let (step, leaving) = self.ratio_test(entering, dir);
            let leaving = match leaving {
                Some(l) => l,
                None => {
                    return Err(LpError::Numerical(
                        "unbounded direction in a bounded problem".into(),
                    ))
                }
            };
            iterations += 1;
            self.update_devex(entering, leaving);
            if self.pivot(entering, leaving, step, dir).is_err() {
                // Bad pivot: the entering variable may sit off its bound.
                // A refactor snaps every value back to a consistent basis.
                self.refactor();
                continue;
            }
            // Stall detection drives the Bland fallback that guarantees
            // termination under degeneracy.
            let obj = self.scaled_objective();
            if obj < last_obj - 1e-13 {
                self.degenerate_streak = 0;
                self.bland = false;
            } else {
                self.degenerate_streak += 1;
                if self.degenerate_streak > 40 {
                    self.bland = true;
                }
            }
            last_obj = obj;
            if self.opts.stall_window > 0 {
                if obj < stall_anchor - self.opts.stall_tolerance {
                    stall_anchor = obj;
                    stalled_for = 0;
                } else {
                    stalled_for += 1;
                    if stalled_for >= self.opts.stall_window {
                        status = SolveStatus::IterationLimit;
                        break;
                    }
                }
            }
        }
        if iterations >= limit {
            status = SolveStatus::IterationLimit;
        }
        self.refactor(); // final value polish
        let values = self.t_val.clone();
        let objective = self.problem.objective_of(&values);
        Ok(L1Solution {
            values,
            objective,
            status,
            iterations,
        })
    }
}

/// Dense inverse by Gauss-Jordan with partial pivoting; `None` on a
/// numerically singular matrix.
fn invert(m: &[f64], dim: usize) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv = vec![0.0; dim * dim];
    for i in 0..dim {
        inv[i * dim + i] = 1.0;
    }
    for col in 0..dim {
        let mut piv_row = col;
        let mut piv_val = a[col * dim + col].abs();
        for r in col + 1..dim {
            let v = a[r * dim + col].abs();
            if v > piv_val {
                piv_val = v;
                piv_row = r;
            }
        }
        if piv_val < 1e-10 {
            return None;
        }
        if piv_row != col {
            for c in 0..dim {
                a.swap(piv_row * dim + c, col * dim + c);
                inv.swap(piv_row * dim + c, col * dim + c);
            }
        }
        let p = a[col * dim + col];
        for c in 0..dim {
            a[col * dim + c] /= p;
            inv[col * dim + c] /= p;
        }
        for r in 0..dim {
            if r == col {
                continue;
            }
            let f = a[r * dim + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..dim {
                a[r * dim + c] -= f * a[col * dim + c];
                inv[r * dim + c] -= f * inv[col * dim + c];
            }
        }
    }
    Some(inv)
}
