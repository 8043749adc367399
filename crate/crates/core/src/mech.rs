//! Obfuscation mechanisms: the LP-optimal constructions, the Planar Laplace
//! and exponential baselines, and sampling from a mechanism.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::quality_loss;
use crate::geo::{LocationSet, Metric, Point};
use crate::lp::{self, LpBackend, LpModel, LpStatus, SimplexSolver};
use crate::spanner::{get_spanner, Spanner};

/// Row sums must match 1 within this.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// LP values below this are treated as exact zeros.
const LP_ZERO: f64 = 1e-12;

pub const MIN_PL_SAMPLES: usize = 10_000;

/// A probability distribution over the locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub struct Prior {
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PriorRepr {
    weights: Vec<f64>,
}

impl TryFrom<PriorRepr> for Prior {
    type Error = Error;
    fn try_from(r: PriorRepr) -> Result<Self> {
        Prior::new(r.weights)
    }
}

impl From<Prior> for PriorRepr {
    fn from(p: Prior) -> Self {
        PriorRepr { weights: p.weights }
    }
}

impl Prior {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Prior("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Prior(format!("weight {w} is not a finite non-negative number")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Prior(format!("weights sum to {total}, not 1")));
        }
        Ok(Prior { weights })
    }

    /// Normalises non-negative counts into a prior.
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Prior("counts are all zero".into()));
        }
        Prior::new(counts.iter().map(|c| c / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Prior {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Prior { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    OptqlExact,
    OptqlSpanner,
    PlanarLaplace,
    Exponential,
    External,
}

impl MechanismKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MechanismKind::OptqlExact => "optql-exact",
            MechanismKind::OptqlSpanner => "optql-spanner",
            MechanismKind::PlanarLaplace => "planar-laplace",
            MechanismKind::Exponential => "exponential",
            MechanismKind::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: MechanismKind,
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn external() -> Self {
        Provenance {
            kind: MechanismKind::External,
            epsilon: None,
            delta: None,
            seed: None,
        }
    }
}

/// Row-stochastic matrix `k[x][z]`: probability of reporting `z` from `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    locations: LocationSet,
    n: usize,
    matrix: Vec<f64>,
    provenance: Provenance,
}

impl Mechanism {
    /// Validates entries in `[0, 1]` and row sums within [`STOCHASTIC_TOL`].
    pub fn new(locations: LocationSet, rows: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        let n = locations.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::input(format!("mechanism must be {n}x{n}")));
        }
        Self::from_flat(locations, rows.into_iter().flatten().collect(), provenance)
    }

    pub(crate) fn from_flat(locations: LocationSet, matrix: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let n = locations.len();
        debug_assert_eq!(matrix.len(), n * n);
        for (x, row) in matrix.chunks(n).enumerate() {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::input(format!("row {x} has entry {v} outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::input(format!("row {x} sums to {s}")));
            }
        }
        Ok(Mechanism {
            locations,
            n,
            matrix,
            provenance,
        })
    }

    pub fn identity(locations: LocationSet) -> Self {
        let n = locations.len();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        Mechanism {
            locations,
            n,
            matrix,
            provenance: Provenance::external(),
        }
    }

    /// Every row equal to the uniform distribution.
    pub fn uniform(locations: LocationSet) -> Self {
        let n = locations.len();
        Mechanism {
            locations,
            n,
            matrix: vec![1.0 / n as f64; n * n],
            provenance: Provenance::external(),
        }
    }

    /// Reads the mechanism out of the first `n²` LP values, zeroing solver
    /// noise and renormalising rows.
    pub fn from_lp_values(locations: LocationSet, values: &[f64], provenance: Provenance) -> Result<Self> {
        let n = locations.len();
        if values.len() < n * n {
            return Err(Error::input("LP solution too short for the location set"));
        }
        let mut matrix: Vec<f64> = values[..n * n]
            .iter()
            .map(|&v| if v < LP_ZERO { 0.0 } else { v.min(1.0) })
            .collect();
        for row in matrix.chunks_mut(n) {
            let s: f64 = row.iter().sum();
            if !(s > 0.0) {
                return Err(Error::Numerical("LP solution has an all-zero row".into()));
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Self::from_flat(locations, matrix, provenance)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn locations(&self) -> &LocationSet {
        &self.locations
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, z: usize) -> f64 {
        self.matrix[x * self.n + z]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.matrix[x * self.n..(x + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.matrix.chunks(self.n)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    /// Largest entrywise difference to another mechanism of the same size.
    pub fn max_abs_diff(&self, other: &Mechanism) -> f64 {
        self.matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV: a header of location labels, then one row per true location.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.n).map(|i| csv_field(&self.locations.label(i))).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|&v| format_sig12(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(locations: LocationSet, s: &str, provenance: Provenance) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(s.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::input(format!("bad probability {f:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Mechanism::new(locations, rows, provenance)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MechanismFile {
            provenance: self.provenance.clone(),
            matrix: self
                .rows()
                .map(|r| r.iter().map(|&v| round_sig12(v)).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(locations: LocationSet, s: &str) -> Result<Self> {
        let file: MechanismFile = serde_json::from_str(s)?;
        Mechanism::new(locations, file.matrix, file.provenance)
    }

    pub fn load_json(locations: LocationSet, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(locations, &std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct MechanismFile {
    provenance: Provenance,
    matrix: Vec<Vec<f64>>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `v` rounded to 12 significant digits.
pub fn round_sig12(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Decimal rendering of `v` with 12 significant digits, trailing zeros
/// trimmed.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-30..=15).contains(&mag) {
        return format!("{v:.11e}");
    }
    let decimals = (11 - mag).max(0) as usize;
    let mut s = String::new();
    let _ = write!(s, "{v:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        s = trimmed.to_string();
    }
    s
}

/// Timing and size figures of an LP-based construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub variables: usize,
    pub inequalities: usize,
    pub equalities: usize,
    pub iterations: usize,
    pub objective: f64,
    pub solve_seconds: f64,
}

fn solve_mechanism_lp(
    backend: &dyn LpBackend,
    locs: &LocationSet,
    model: &LpModel,
    provenance: Provenance,
) -> Result<(Mechanism, SolveReport)> {
    let start = Instant::now();
    let sol = backend.solve(model)?;
    let solve_seconds = start.elapsed().as_secs_f64();
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver {
            status: sol.status,
            detail: format!("after {} iterations", sol.iterations),
        });
    }
    let mech = Mechanism::from_lp_values(locs.clone(), &sol.values, provenance)?;
    let report = SolveReport {
        variables: model.num_vars,
        inequalities: model.le_rows.len(),
        equalities: model.eq_rows.len(),
        iterations: sol.iterations,
        objective: sol.objective_value,
        solve_seconds,
    };
    log::info!(
        "solved {} x {} LP in {:.3}s ({} iterations), QL {}",
        report.inequalities + report.equalities,
        report.variables,
        report.solve_seconds,
        report.iterations,
        report.objective
    );
    Ok((mech, report))
}

/// Quality-loss-optimal mechanism under the full `epsilon * dX` constraint
/// set.
pub fn build_optql_exact(
    locs: &LocationSet,
    dx: &Metric,
    epsilon: f64,
    pi: &Prior,
    dq: &Metric,
) -> Result<Mechanism> {
    build_optql_exact_with(&SimplexSolver::default(), locs, dx, epsilon, pi, dq).map(|r| r.0)
}

pub fn build_optql_exact_with(
    backend: &dyn LpBackend,
    locs: &LocationSet,
    dx: &Metric,
    epsilon: f64,
    pi: &Prior,
    dq: &Metric,
) -> Result<(Mechanism, SolveReport)> {
    let model = lp::build_primal_exact(locs, dx, epsilon, pi, dq)?;
    let prov = Provenance {
        kind: MechanismKind::OptqlExact,
        epsilon: Some(epsilon),
        delta: None,
        seed: None,
    };
    solve_mechanism_lp(backend, locs, &model, prov)
}

/// Builds the greedy `delta`-spanner of `dx` and solves the reduced LP. The
/// result is `epsilon * dX`-private.
pub fn build_optql_spanner(
    locs: &LocationSet,
    dx: &Metric,
    epsilon: f64,
    delta: f64,
    pi: &Prior,
    dq: &Metric,
) -> Result<Mechanism> {
    let spanner = get_spanner(locs, dx, delta)?;
    optql_from_spanner(&SimplexSolver::default(), locs, &spanner, epsilon, delta, pi, dq).map(|r| r.0)
}

pub fn optql_from_spanner(
    backend: &dyn LpBackend,
    locs: &LocationSet,
    spanner: &Spanner,
    epsilon: f64,
    delta: f64,
    pi: &Prior,
    dq: &Metric,
) -> Result<(Mechanism, SolveReport)> {
    let model = lp::build_primal_spanner(locs, spanner, epsilon, delta, pi, dq)?;
    let prov = Provenance {
        kind: MechanismKind::OptqlSpanner,
        epsilon: Some(epsilon),
        delta: Some(delta),
        seed: None,
    };
    solve_mechanism_lp(backend, locs, &model, prov)
}

/// `k[x][z] ∝ exp(-(epsilon/2) dX(x, z))`.
pub fn build_exponential(locs: &LocationSet, dx: &Metric, epsilon: f64) -> Result<Mechanism> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = locs.len();
    dx.require_len(n)?;
    let mut matrix = vec![0.0; n * n];
    for x in 0..n {
        let row = &mut matrix[x * n..(x + 1) * n];
        for (z, v) in row.iter_mut().enumerate() {
            *v = (-0.5 * epsilon * dx.get(x, z)).exp();
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let prov = Provenance {
        kind: MechanismKind::Exponential,
        epsilon: Some(epsilon),
        delta: None,
        seed: None,
    };
    Mechanism::from_flat(locs.clone(), matrix, prov)
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Discretised Planar Laplace: polar noise with uniform angle and
/// Gamma(2, 1/epsilon) radius, snapped to the nearest location (lowest index
/// on ties). Entries are empirical frequencies over `samples` draws per row.
///
/// Each row uses its own ChaCha stream derived from `seed`, so the result is
/// identical however rows are scheduled. The radius is drawn as a unit
/// Gamma(2, 1) variate scaled by `1/epsilon`: for a fixed seed, changing
/// epsilon only rescales the same noise.
pub fn build_planar_laplace(
    locs: &LocationSet,
    epsilon: f64,
    seed: u64,
    samples: usize,
) -> Result<Mechanism> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
    }
    if samples < MIN_PL_SAMPLES {
        return Err(Error::input(format!(
            "need at least {MIN_PL_SAMPLES} samples per location, got {samples}"
        )));
    }
    let n = locs.len();
    let unit_gamma = Gamma::new(2.0, 1.0).expect("valid gamma parameters");
    let scale = 1.0 / epsilon;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut rng = row_rng(seed, x);
            let origin = locs.points()[x];
            let mut counts = vec![0u64; n];
            for _ in 0..samples {
                let theta = rng.random::<f64>() * 2.0 * PI;
                let r = unit_gamma.sample(&mut rng) * scale;
                let p = Point::new(origin.x + r * theta.cos(), origin.y + r * theta.sin());
                counts[locs.nearest(p)] += 1;
            }
            counts.iter().map(|&c| c as f64 / samples as f64).collect()
        })
        .collect();
    let prov = Provenance {
        kind: MechanismKind::PlanarLaplace,
        epsilon: Some(epsilon),
        delta: None,
        seed: Some(seed),
    };
    let matrix: Vec<f64> = rows.into_iter().flatten().collect();
    Mechanism::from_flat(locs.clone(), matrix, prov)
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub epsilon_prime: f64,
    pub quality_loss: f64,
    pub evaluations: usize,
    pub mechanism: Mechanism,
}

const CALIBRATION_EPS_MIN: f64 = 1e-6;
const CALIBRATION_EPS_MAX: f64 = 1e6;
const CALIBRATION_MAX_STEPS: usize = 200;

/// Finds `epsilon'` such that the Planar Laplace mechanism's quality loss is
/// within `tol` of `target_ql`, by bracket expansion from 1 then geometric
/// bisection. The same seed is used at every step.
pub fn calibrate_planar_laplace(
    locs: &LocationSet,
    pi: &Prior,
    dq: &Metric,
    target_ql: f64,
    tol: f64,
    seed: u64,
    samples: usize,
) -> Result<Calibration> {
    if !(target_ql.is_finite() && target_ql > 0.0) {
        return Err(Error::input(format!("target quality loss must be positive, got {target_ql}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::input(format!("tolerance must be positive, got {tol}")));
    }
    let mut evaluations = 0usize;
    let mut min_seen = f64::INFINITY;
    let mut max_seen: f64 = 0.0;
    let mut eval = |eps: f64| -> Result<(f64, Mechanism)> {
        let m = build_planar_laplace(locs, eps, seed, samples)?;
        let q = quality_loss(&m, pi, dq)?;
        evaluations += 1;
        min_seen = min_seen.min(q);
        max_seen = max_seen.max(q);
        log::debug!("calibration: epsilon' = {eps} gives QL {q}");
        Ok((q, m))
    };
    let mut best: Option<(f64, f64, Mechanism)> = None;
    let consider = |eps: f64, q: f64, m: Mechanism, best: &mut Option<(f64, f64, Mechanism)>| {
        if best.as_ref().is_none_or(|b| (q - target_ql).abs() < (b.1 - target_ql).abs()) {
            *best = Some((eps, q, m));
        }
    };

    // Quality loss decreases as epsilon' grows. Find lo < hi with
    // QL(lo) >= target >= QL(hi).
    let (mut lo, mut hi);
    let (q1, m1) = eval(1.0)?;
    let hit = (q1 - target_ql).abs() <= tol;
    consider(1.0, q1, m1, &mut best);
    if !hit {
        if q1 > target_ql {
            lo = 1.0;
            hi = 2.0;
            loop {
                if hi > CALIBRATION_EPS_MAX {
                    return Err(Error::Calibration { target: target_ql, min_ql: min_seen, max_ql: max_seen });
                }
                let (q, m) = eval(hi)?;
                let done = q <= target_ql;
                consider(hi, q, m, &mut best);
                if done {
                    break;
                }
                lo = hi;
                hi *= 2.0;
            }
        } else {
            hi = 1.0;
            lo = 0.5;
            loop {
                if lo < CALIBRATION_EPS_MIN {
                    return Err(Error::Calibration { target: target_ql, min_ql: min_seen, max_ql: max_seen });
                }
                let (q, m) = eval(lo)?;
                let done = q >= target_ql;
                consider(lo, q, m, &mut best);
                if done {
                    break;
                }
                hi = lo;
                lo /= 2.0;
            }
        }
        for _ in 0..CALIBRATION_MAX_STEPS {
            if best.as_ref().is_some_and(|b| (b.1 - target_ql).abs() <= tol) || hi / lo - 1.0 < 1e-12 {
                break;
            }
            let mid = (lo * hi).sqrt();
            let (q, m) = eval(mid)?;
            if q > target_ql {
                lo = mid;
            } else {
                hi = mid;
            }
            consider(mid, q, m, &mut best);
        }
    }
    let (epsilon_prime, q, mechanism) = best.expect("at least one evaluation");
    if (q - target_ql).abs() > tol {
        return Err(Error::Calibration { target: target_ql, min_ql: min_seen, max_ql: max_seen });
    }
    Ok(Calibration {
        epsilon_prime,
        quality_loss: q,
        evaluations,
        mechanism,
    })
}

/// Draws a reported location for true location `x` by inverse CDF over
/// row `x`.
pub fn obfuscate(mech: &Mechanism, x: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    obfuscate_with(mech, x, &mut rng)
}

pub fn obfuscate_with<R: RngCore + ?Sized>(mech: &Mechanism, x: usize, rng: &mut R) -> Result<usize> {
    if x >= mech.len() {
        return Err(Error::Index { index: x, len: mech.len() });
    }
    let u: f64 = rng.random();
    let row = mech.row(x);
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (z, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = z;
            if u < acc {
                return Ok(z);
            }
        }
    }
    Ok(last_positive)
}
