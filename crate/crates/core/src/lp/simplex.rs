//! Revised simplex on a sparse LU factorisation of the basis.
//!
//! Models are first rewritten with non-negative variables only. The solver
//! then runs a two-phase revised simplex either on that problem directly
//! (basis size = number of rows) or on its LP dual (basis size = number of
//! columns), whichever basis is smaller. In the dual route the primal
//! solution is read off the simplex multipliers.
//!
//! Pricing is Devex with a switch to Bland's rule after a run of degenerate
//! pivots; it returns to Devex after the next pivot that moves the
//! objective. Every stall is therefore resolved by Bland's rule, which
//! cannot cycle.

use serde::{Deserialize, Serialize};

use super::factor::{Factor, Singular};
use super::model::{LpModel, Sense};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Which problem the simplex iterates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// Smaller basis wins; ties go to the primal.
    #[default]
    Auto,
    Primal,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Absolute tolerance on constraint satisfaction.
    pub feasibility_tol: f64,
    /// Reduced-cost tolerance for optimality.
    pub optimality_tol: f64,
    pub route: Route,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 1_000_000,
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            route: Route::Auto,
        }
    }
}

/// Anything that can solve an [`LpModel`]. Lets callers swap in an external
/// solver keyed on the model's JSON schema.
pub trait LpBackend {
    fn solve(&self, model: &LpModel) -> Result<LpSolution>;
}

#[derive(Debug, Clone, Default)]
pub struct SimplexSolver {
    pub options: SolverOptions,
}

impl SimplexSolver {
    pub fn new(options: SolverOptions) -> Self {
        SimplexSolver { options }
    }
}

impl LpBackend for SimplexSolver {
    fn solve(&self, model: &LpModel) -> Result<LpSolution> {
        solve_with(model, &self.options)
    }
}

/// Solves `model` with default options.
pub fn solve(model: &LpModel) -> Result<LpSolution> {
    solve_with(model, &SolverOptions::default())
}

pub fn solve_with(model: &LpModel, opts: &SolverOptions) -> Result<LpSolution> {
    model.validate()?;
    let canon = Canonical::from_model(model);
    let primal_rows = canon.le.len() + canon.eq.len();
    let use_dual = match opts.route {
        Route::Primal => false,
        Route::Dual => true,
        Route::Auto => canon.ncols < primal_rows,
    };
    if use_dual {
        let (sol, fallback) = solve_dual_route(model, &canon, opts)?;
        if !fallback {
            return Ok(sol);
        }
        // The dual is infeasible: the primal is infeasible or unbounded and
        // only the primal phase 1 can tell which.
        let mut primal = solve_primal_route(model, &canon, opts)?;
        primal.iterations += sol.iterations;
        return Ok(primal);
    }
    solve_primal_route(model, &canon, opts)
}

type SparseVec = Vec<(usize, f64)>;

/// `min cost·x  s.t.  le rows, eq rows, x >= 0`, plus the map back to the
/// model's variables.
struct Canonical {
    ncols: usize,
    cost: Vec<f64>,
    le: Vec<(SparseVec, f64)>,
    eq: Vec<(SparseVec, f64)>,
    /// Per model variable: (offset, plus column, optional minus column).
    var_map: Vec<(f64, usize, Option<usize>)>,
}

impl Canonical {
    fn from_model(model: &LpModel) -> Self {
        let sign = match model.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut ncols = 0;
        let mut var_map = Vec::with_capacity(model.num_vars);
        for lb in &model.lower_bounds {
            match lb {
                Some(l) => {
                    var_map.push((*l, ncols, None));
                    ncols += 1;
                }
                None => {
                    var_map.push((0.0, ncols, Some(ncols + 1)));
                    ncols += 2;
                }
            }
        }
        let expand = |coefs: &[(usize, f64)], rhs: f64| -> (SparseVec, f64) {
            let mut out = Vec::with_capacity(coefs.len());
            let mut rhs = rhs;
            for &(j, a) in coefs {
                let (off, p, q) = var_map[j];
                rhs -= a * off;
                out.push((p, a));
                if let Some(q) = q {
                    out.push((q, -a));
                }
            }
            (out, rhs)
        };
        let mut le: Vec<_> = model.le_rows.iter().map(|r| expand(&r.coefs, r.rhs)).collect();
        let eq: Vec<_> = model.eq_rows.iter().map(|r| expand(&r.coefs, r.rhs)).collect();
        if let Some(ub) = &model.upper_bounds {
            for (j, u) in ub.iter().enumerate() {
                if let Some(u) = u {
                    le.push(expand(&[(j, 1.0)], *u));
                }
            }
        }
        let mut cost = vec![0.0; ncols];
        for &(j, c) in &model.objective {
            let (_, p, q) = var_map[j];
            cost[p] += sign * c;
            if let Some(q) = q {
                cost[q] -= sign * c;
            }
        }
        Canonical {
            ncols,
            cost,
            le,
            eq,
            var_map,
        }
    }

    fn model_values(&self, cols: &[f64]) -> Vec<f64> {
        self.var_map
            .iter()
            .map(|&(off, p, q)| off + cols[p] - q.map_or(0.0, |q| cols[q]))
            .collect()
    }
}

/// `min cost·x  s.t.  A x = rhs, x >= 0` with `rhs >= 0`, stored by column.
struct StandardForm {
    m: usize,
    cols: Vec<SparseVec>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    /// Column usable as the initial basic variable of each row (a +1 unit
    /// column), if any.
    initial: Vec<Option<usize>>,
}

impl StandardForm {
    /// Flips rows so every right-hand side is non-negative. Returns the sign
    /// applied to each row.
    fn normalise_rows(&mut self) -> Vec<f64> {
        let signs: Vec<f64> = self
            .rhs
            .iter()
            .map(|&b| if b < 0.0 { -1.0 } else { 1.0 })
            .collect();
        for b in self.rhs.iter_mut() {
            *b = b.abs();
        }
        for col in self.cols.iter_mut() {
            for (i, a) in col.iter_mut() {
                *a *= signs[*i];
            }
        }
        // a flipped unit column is -1 and no longer a valid starting basis
        for (init, s) in self.initial.iter_mut().zip(&signs) {
            if *s < 0.0 {
                *init = None;
            }
        }
        signs
    }
}

fn solve_primal_route(model: &LpModel, canon: &Canonical, opts: &SolverOptions) -> Result<LpSolution> {
    let n_le = canon.le.len();
    let m = n_le + canon.eq.len();
    let n = canon.ncols;
    let mut cols: Vec<SparseVec> = vec![Vec::new(); n + n_le];
    let mut rhs = Vec::with_capacity(m);
    let mut initial = vec![None; m];
    for (i, (coefs, b)) in canon.le.iter().chain(canon.eq.iter()).enumerate() {
        for &(j, a) in coefs {
            cols[j].push((i, a));
        }
        rhs.push(*b);
        if i < n_le {
            cols[n + i].push((i, 1.0));
            initial[i] = Some(n + i);
        }
    }
    let mut cost = canon.cost.clone();
    cost.resize(n + n_le, 0.0);
    let mut sf = StandardForm {
        m,
        cols,
        cost,
        rhs,
        initial,
    };
    sf.normalise_rows();
    let out = Simplex::new(&sf, opts)?.run()?;

    let mut x = vec![0.0; n + n_le];
    for (r, &j) in out.basis.iter().enumerate() {
        if j < x.len() {
            x[j] = out.xb[r];
        }
    }
    let values = canon.model_values(&x);
    finish(model, values, out.status, out.iterations, opts)
}

/// Returns the solution and whether the primal route must decide the status.
fn solve_dual_route(
    model: &LpModel,
    canon: &Canonical,
    opts: &SolverOptions,
) -> Result<(LpSolution, bool)> {
    // One row per canonical primal column, one column per primal row plus a
    // slack per primal column:
    //   -A_le' u + A_eq' (w+ - w-) + s = c,   u, w+, w-, s >= 0
    //   min  b_le·u - b_eq·w+ + b_eq·w-
    // The multipliers y of this problem satisfy x = -y.
    let m = canon.ncols;
    let mut cols: Vec<SparseVec> = Vec::with_capacity(canon.le.len() + 2 * canon.eq.len() + m);
    let mut cost = Vec::with_capacity(cols.capacity());
    for (coefs, b) in &canon.le {
        cols.push(coefs.iter().map(|&(j, a)| (j, -a)).collect());
        cost.push(*b);
    }
    for (coefs, b) in &canon.eq {
        cols.push(coefs.clone());
        cost.push(-*b);
        cols.push(coefs.iter().map(|&(j, a)| (j, -a)).collect());
        cost.push(*b);
    }
    let slack0 = cols.len();
    let mut initial = vec![None; m];
    for j in 0..m {
        cols.push(vec![(j, 1.0)]);
        cost.push(0.0);
        initial[j] = Some(slack0 + j);
    }
    let mut sf = StandardForm {
        m,
        cols,
        cost,
        rhs: canon.cost.clone(),
        initial,
    };
    let signs = sf.normalise_rows();
    let out = Simplex::new(&sf, opts)?.run()?;

    let status = match out.status {
        LpStatus::Optimal => LpStatus::Optimal,
        LpStatus::Unbounded => LpStatus::Infeasible,
        LpStatus::IterationLimit => LpStatus::IterationLimit,
        LpStatus::Infeasible => {
            let sol = LpSolution {
                status: LpStatus::Infeasible,
                objective_value: f64::NAN,
                values: vec![f64::NAN; model.num_vars],
                iterations: out.iterations,
            };
            return Ok((sol, true));
        }
    };
    let x: Vec<f64> = out.y.iter().zip(&signs).map(|(y, s)| -y * s).collect();
    let values = canon.model_values(&x);
    Ok((finish(model, values, status, out.iterations, opts)?, false))
}

/// Snaps near-bound values onto their bounds and certifies feasibility of
/// optimal solutions against the original model.
fn finish(
    model: &LpModel,
    mut values: Vec<f64>,
    status: LpStatus,
    iterations: usize,
    opts: &SolverOptions,
) -> Result<LpSolution> {
    match status {
        LpStatus::Infeasible | LpStatus::Unbounded => {
            return Ok(LpSolution {
                status,
                objective_value: match status {
                    LpStatus::Unbounded if model.sense == Sense::Maximize => f64::INFINITY,
                    LpStatus::Unbounded => f64::NEG_INFINITY,
                    _ => f64::NAN,
                },
                values: vec![f64::NAN; model.num_vars],
                iterations,
            })
        }
        _ => {}
    }
    for (j, v) in values.iter_mut().enumerate() {
        if let Some(l) = model.lower_bounds[j] {
            if *v < l && l - *v <= opts.feasibility_tol {
                *v = l;
            }
        }
        if let Some(Some(u)) = model.upper_bounds.as_ref().map(|ub| ub[j]) {
            if *v > u && *v - u <= opts.feasibility_tol {
                *v = u;
            }
        }
    }
    if status == LpStatus::Optimal {
        let viol = model.max_row_violation(&values);
        if !(viol <= opts.feasibility_tol) {
            return Err(Error::Numerical(format!(
                "optimal basis reproduces the constraints only to within {viol:e}"
            )));
        }
    }
    Ok(LpSolution {
        status,
        objective_value: model.objective_value(&values),
        values,
        iterations,
    })
}

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const DEGENERATE_RUN: usize = 50;
const REFACTOR_EVERY: usize = 64;
/// Devex weights are reset once any of them grows past this.
const DEVEX_RESET: f64 = 1e8;

struct RunOutcome {
    status: LpStatus,
    basis: Vec<usize>,
    xb: Vec<f64>,
    y: Vec<f64>,
    iterations: usize,
}

struct Simplex<'a> {
    m: usize,
    cols: Vec<&'a [(usize, f64)]>,
    /// Unit columns appended after the structural ones.
    artificial_cols: Vec<SparseVec>,
    n_struct: usize,
    cost: &'a [f64],
    rhs: &'a [f64],
    opts: &'a SolverOptions,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    factor: Factor,
    xb: Vec<f64>,
    y: Vec<f64>,
    devex: Vec<f64>,
    iterations: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
}

fn singular(e: Singular) -> Error {
    Error::Numerical(format!(
        "simplex basis became numerically singular at position {}",
        e.0
    ))
}

impl<'a> Simplex<'a> {
    fn new(sf: &'a StandardForm, opts: &'a SolverOptions) -> Result<Self> {
        let m = sf.m;
        let n_struct = sf.cols.len();
        let mut basis = Vec::with_capacity(m);
        let mut artificial_cols = Vec::new();
        for r in 0..m {
            match sf.initial[r] {
                Some(j) => basis.push(j),
                None => {
                    basis.push(n_struct + artificial_cols.len());
                    artificial_cols.push(vec![(r, 1.0)]);
                }
            }
        }
        let n_total = n_struct + artificial_cols.len();
        let mut in_basis = vec![false; n_total];
        for &j in &basis {
            in_basis[j] = true;
        }
        let cols: Vec<&[(usize, f64)]> = sf.cols.iter().map(|c| c.as_slice()).collect();
        let factor = Factor::new(m, |p| {
            let j = basis[p];
            if j < n_struct {
                cols[j]
            } else {
                artificial_cols[j - n_struct].as_slice()
            }
        })
        .map_err(singular)?;
        Ok(Simplex {
            m,
            cols,
            artificial_cols,
            n_struct,
            cost: &sf.cost,
            rhs: &sf.rhs,
            opts,
            basis,
            in_basis,
            factor,
            xb: sf.rhs.clone(),
            y: vec![0.0; m],
            devex: vec![1.0; n_total],
            iterations: 0,
        })
    }

    fn column(&self, j: usize) -> &[(usize, f64)] {
        if j < self.n_struct {
            self.cols[j]
        } else {
            &self.artificial_cols[j - self.n_struct]
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_struct
    }

    fn run(mut self) -> Result<RunOutcome> {
        if !self.artificial_cols.is_empty() {
            let n_total = self.n_struct + self.artificial_cols.len();
            let phase1: Vec<f64> = (0..n_total)
                .map(|j| if self.is_artificial(j) { 1.0 } else { 0.0 })
                .collect();
            let end = self.phase(&phase1, true)?;
            if let PhaseEnd::IterationLimit = end {
                return self.outcome(LpStatus::IterationLimit);
            }
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(&j, _)| self.is_artificial(j))
                .map(|(_, &v)| v.max(0.0))
                .sum();
            let scale = 1.0 + self.rhs.iter().copied().fold(0.0, f64::max);
            if infeas > self.opts.feasibility_tol * scale {
                return self.outcome(LpStatus::Infeasible);
            }
            self.drive_out_artificials()?;
        }
        let mut phase2 = self.cost.to_vec();
        phase2.resize(self.n_struct + self.artificial_cols.len(), 0.0);
        let status = match self.phase(&phase2, false)? {
            PhaseEnd::Optimal => LpStatus::Optimal,
            PhaseEnd::Unbounded => LpStatus::Unbounded,
            PhaseEnd::IterationLimit => LpStatus::IterationLimit,
        };
        self.outcome(status)
    }

    fn outcome(mut self, status: LpStatus) -> Result<RunOutcome> {
        if status == LpStatus::Optimal {
            let mut c = self.cost.to_vec();
            c.resize(self.n_struct + self.artificial_cols.len(), 0.0);
            self.refactor()?;
            self.refresh(&c);
        }
        Ok(RunOutcome {
            status,
            basis: self.basis,
            xb: self.xb,
            y: self.y,
            iterations: self.iterations,
        })
    }

    fn refactor(&mut self) -> Result<()> {
        let basis = &self.basis;
        let n_struct = self.n_struct;
        let (cols, arts) = (&self.cols, &self.artificial_cols);
        self.factor = Factor::new(self.m, |p| {
            let j = basis[p];
            if j < n_struct {
                cols[j]
            } else {
                arts[j - n_struct].as_slice()
            }
        })
        .map_err(singular)?;
        Ok(())
    }

    /// Recomputes `xb = B⁻¹ b` and `y = c_B B⁻¹` from the factorisation.
    fn refresh(&mut self, cost: &[f64]) {
        self.factor.ftran(self.rhs, &mut self.xb);
        let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
        self.factor.btran(&cb, &mut self.y);
    }

    fn dot(&self, v: &[f64], j: usize) -> f64 {
        self.column(j).iter().map(|&(i, a)| v[i] * a).sum()
    }

    fn ftran(&self, j: usize, alpha: &mut [f64]) {
        let mut a = vec![0.0; self.m];
        for &(i, v) in self.column(j) {
            a[i] += v;
        }
        self.factor.ftran(&a, alpha);
    }

    /// Row `r` of the basis inverse.
    fn inverse_row(&self, r: usize, rho: &mut [f64]) {
        let mut e = vec![0.0; self.m];
        e[r] = 1.0;
        self.factor.btran(&e, rho);
    }

    fn phase(&mut self, cost: &[f64], phase_one: bool) -> Result<PhaseEnd> {
        let m = self.m;
        let n_total = self.n_struct + self.artificial_cols.len();
        self.refactor()?;
        self.refresh(cost);
        self.devex.iter_mut().for_each(|w| *w = 1.0);
        let mut alpha = vec![0.0; m];
        let mut rho = vec![0.0; m];
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Ok(PhaseEnd::IterationLimit);
            }
            let bland = degenerate_run >= DEGENERATE_RUN;

            // pricing
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..n_total {
                if self.in_basis[j] || (!phase_one && self.is_artificial(j)) {
                    continue;
                }
                let d = cost[j] - self.dot(&self.y, j);
                if d >= -self.opts.optimality_tol {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                let score = d * d / self.devex[j];
                if score > best {
                    best = score;
                    entering = Some((j, d));
                }
            }
            let Some((q, dq)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            self.ftran(q, &mut alpha);
            let Some(r) = self.ratio_test(&alpha, bland, phase_one) else {
                return Ok(PhaseEnd::Unbounded);
            };
            let theta = self.xb[r].max(0.0) / alpha[r];
            if theta.abs() <= DEGENERATE_STEP {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.inverse_row(r, &mut rho);
            if !bland {
                self.update_devex(q, r, &alpha, &rho, phase_one);
            }
            self.pivot(q, r, &alpha, &rho, dq)?;
            self.iterations += 1;
            if self.factor.num_updates() == 0 {
                self.refresh(cost);
            }
        }
    }

    fn update_devex(&mut self, q: usize, r: usize, alpha: &[f64], rho: &[f64], phase_one: bool) {
        let n_total = self.n_struct + self.artificial_cols.len();
        let arq = alpha[r];
        let wq = self.devex[q];
        let mut reset = false;
        for j in 0..n_total {
            if self.in_basis[j] || j == q || (!phase_one && self.is_artificial(j)) {
                continue;
            }
            let arj = self.dot(rho, j);
            if arj != 0.0 {
                let ratio = arj / arq;
                let w = (ratio * ratio * wq).max(self.devex[j]);
                reset |= w > DEVEX_RESET;
                self.devex[j] = w;
            }
        }
        self.devex[self.basis[r]] = (wq / (arq * arq)).max(1.0);
        if reset {
            self.devex.iter_mut().for_each(|w| *w = 1.0);
        }
    }

    fn ratio_test(&self, alpha: &[f64], bland: bool, phase_one: bool) -> Option<usize> {
        // Artificial variables left basic after phase 1 sit at zero and must
        // stay there: any nonzero entry in their row blocks immediately.
        if !phase_one {
            let mut forced = None;
            for (i, &a) in alpha.iter().enumerate() {
                if self.is_artificial(self.basis[i]) && a.abs() > PIVOT_TOL {
                    if forced.is_none_or(|(_, fa): (usize, f64)| a.abs() > fa) {
                        forced = Some((i, a.abs()));
                    }
                }
            }
            if let Some((i, _)) = forced {
                return Some(i);
            }
        }
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            return best.map(|(i, _)| i);
        }
        // Harris two-pass test: find the largest step any row tolerates with
        // relaxed bounds, then take the largest pivot element within it.
        let tol = self.opts.feasibility_tol * 1e-2;
        let mut theta_max = f64::INFINITY;
        for (i, &a) in alpha.iter().enumerate() {
            if a > PIVOT_TOL {
                theta_max = theta_max.min((self.xb[i].max(0.0) + tol) / a);
            }
        }
        if theta_max.is_infinite() {
            return None;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            if a > PIVOT_TOL && self.xb[i].max(0.0) / a <= theta_max {
                if pick.is_none_or(|(_, pa)| a > pa) {
                    pick = Some((i, a));
                }
            }
        }
        pick.map(|(i, _)| i)
    }

    /// Replaces basis position `r` by column `q`. `rho` is row `r` of the old
    /// basis inverse.
    fn pivot(&mut self, q: usize, r: usize, alpha: &[f64], rho: &[f64], dq: f64) -> Result<()> {
        let piv = alpha[r];
        let step = dq / piv;
        if step != 0.0 {
            for (yk, &v) in self.y.iter_mut().zip(rho) {
                *yk += step * v;
            }
        }
        let theta = self.xb[r] / piv;
        for (i, &f) in alpha.iter().enumerate() {
            if i != r && f != 0.0 {
                self.xb[i] -= theta * f;
            }
        }
        self.xb[r] = theta;

        let leaving = self.basis[r];
        self.in_basis[leaving] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
        self.factor.update(r, alpha);
        if self.factor.num_updates() >= REFACTOR_EVERY || self.factor.eta_nnz() > 32 * self.m {
            self.refactor()?;
        }
        Ok(())
    }

    /// Pivots artificial variables out of the basis after phase 1 wherever a
    /// structural column has a usable entry in their row.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        let mut rho = vec![0.0; m];
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            self.inverse_row(r, &mut rho);
            let mut pick: Option<(usize, f64)> = None;
            for j in 0..self.n_struct {
                if self.in_basis[j] {
                    continue;
                }
                let v = self.dot(&rho, j);
                if v.abs() > 1e-7 && pick.is_none_or(|(_, pv)| v.abs() > pv) {
                    pick = Some((j, v.abs()));
                }
            }
            if let Some((j, _)) = pick {
                self.ftran(j, &mut alpha);
                self.pivot(j, r, &alpha, &rho, 0.0)?;
                self.iterations += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::model::Row;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + b.abs())
    }

    #[test]
    fn single_lower_bound() {
        // minimize x s.t. x >= 3
        let mut m = LpModel::new(1);
        m.objective = vec![(0, 1.0)];
        m.lower_bounds = vec![Some(3.0)];
        let s = solve(&m).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(approx(s.objective_value, 3.0));

        // same problem as a row constraint, -x <= -3
        let mut m = LpModel::new(1);
        m.objective = vec![(0, 1.0)];
        m.le_rows.push(Row::new(vec![(0, -1.0)], -3.0));
        for route in [Route::Primal, Route::Dual] {
            let opts = SolverOptions { route, ..Default::default() };
            let s = solve_with(&m, &opts).unwrap();
            assert_eq!(s.status, LpStatus::Optimal, "{route:?}");
            assert!(approx(s.objective_value, 3.0), "{route:?}: {}", s.objective_value);
        }
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut m = LpModel::new(2);
        m.sense = Sense::Maximize;
        m.objective = vec![(0, 3.0), (1, 5.0)];
        m.le_rows = vec![
            Row::new(vec![(0, 1.0)], 4.0),
            Row::new(vec![(1, 2.0)], 12.0),
            Row::new(vec![(0, 3.0), (1, 2.0)], 18.0),
        ];
        for route in [Route::Primal, Route::Dual] {
            let opts = SolverOptions { route, ..Default::default() };
            let s = solve_with(&m, &opts).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert!(approx(s.objective_value, 36.0));
            assert!(approx(s.values[0], 2.0) && approx(s.values[1], 6.0));
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut m = LpModel::new(1);
        m.objective = vec![(0, 1.0)];
        m.le_rows.push(Row::new(vec![(0, 1.0)], -1.0));
        for route in [Route::Primal, Route::Dual] {
            let opts = SolverOptions { route, ..Default::default() };
            assert_eq!(solve_with(&m, &opts).unwrap().status, LpStatus::Infeasible);
        }

        let mut m = LpModel::new(2);
        m.objective = vec![(0, -1.0)];
        m.le_rows.push(Row::new(vec![(0, 1.0), (1, -1.0)], 1.0));
        for route in [Route::Primal, Route::Dual] {
            let opts = SolverOptions { route, ..Default::default() };
            assert_eq!(solve_with(&m, &opts).unwrap().status, LpStatus::Unbounded);
        }
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |shape| : x free, x + y = 1, y <= 3, y >= 0; min x -> x = -2
        let mut m = LpModel::new(2);
        m.objective = vec![(0, 1.0)];
        m.lower_bounds = vec![None, Some(0.0)];
        m.upper_bounds = Some(vec![None, Some(3.0)]);
        m.eq_rows.push(Row::new(vec![(0, 1.0), (1, 1.0)], 1.0));
        for route in [Route::Primal, Route::Dual] {
            let opts = SolverOptions { route, ..Default::default() };
            let s = solve_with(&m, &opts).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert!(approx(s.objective_value, -2.0), "{route:?} {}", s.objective_value);
        }
    }

    #[test]
    fn redundant_equalities() {
        // x + y = 1 twice; min x + 2y -> 1
        let mut m = LpModel::new(2);
        m.objective = vec![(0, 1.0), (1, 2.0)];
        m.eq_rows.push(Row::new(vec![(0, 1.0), (1, 1.0)], 1.0));
        m.eq_rows.push(Row::new(vec![(0, 2.0), (1, 2.0)], 2.0));
        for route in [Route::Primal, Route::Dual] {
            let opts = SolverOptions { route, ..Default::default() };
            let s = solve_with(&m, &opts).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert!(approx(s.objective_value, 1.0));
        }
    }

    #[test]
    fn iteration_limit() {
        let mut m = LpModel::new(2);
        m.sense = Sense::Maximize;
        m.objective = vec![(0, 3.0), (1, 5.0)];
        m.le_rows = vec![
            Row::new(vec![(0, 1.0)], 4.0),
            Row::new(vec![(1, 2.0)], 12.0),
            Row::new(vec![(0, 3.0), (1, 2.0)], 18.0),
        ];
        let opts = SolverOptions {
            max_iterations: 1,
            route: Route::Primal,
            ..Default::default()
        };
        let s = solve_with(&m, &opts).unwrap();
        assert_eq!(s.status, LpStatus::IterationLimit);
        assert!(!s.is_optimal());
    }
}
