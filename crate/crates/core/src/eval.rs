//! Privacy and utility metrics of mechanisms.
//!
//! Quality loss is the expected distance between true and reported
//! location. Adversary error is the expected distance between the true
//! location and the guess of a Bayesian adversary applying the best
//! remapping of reported locations. Because the expected distance is linear
//! in each row of the remapping, a deterministic remapping attains the
//! optimum and is computed directly.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geo::Metric;
use crate::mech::{Mechanism, Prior, Provenance, STOCHASTIC_TOL};

/// Default absolute slack of [`verify_dx_privacy`].
pub const PRIVACY_SLACK: f64 = 1e-6;

fn check_dims(mech: &Mechanism, pi: &Prior, d: &Metric) -> Result<usize> {
    let n = mech.len();
    if pi.len() != n {
        return Err(Error::input(format!("prior has {} entries, mechanism {n}", pi.len())));
    }
    d.require_len(n)?;
    Ok(n)
}

/// `Σ_{x,z} π_x k[x][z] d(x, z)`.
pub fn expected_distance(mech: &Mechanism, pi: &Prior, d: &Metric) -> Result<f64> {
    let n = check_dims(mech, pi, d)?;
    let mut total = 0.0;
    for x in 0..n {
        let px = pi.weights()[x];
        if px == 0.0 {
            continue;
        }
        let row = mech.row(x);
        let s: f64 = (0..n).map(|z| row[z] * d.get(x, z)).sum();
        total += px * s;
    }
    Ok(total)
}

pub fn quality_loss(mech: &Mechanism, pi: &Prior, dq: &Metric) -> Result<f64> {
    expected_distance(mech, pi, dq)
}

/// Row-stochastic remapping `h[z][x̂]` applied to reported locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Remapping {
    n: usize,
    matrix: Vec<f64>,
}

impl Remapping {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("remapping must be a non-empty square matrix"));
        }
        for (z, r) in rows.iter().enumerate() {
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::input(format!("remapping row {z} has entries outside [0, 1]")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::input(format!("remapping row {z} sums to {s}")));
            }
        }
        Ok(Remapping {
            n,
            matrix: rows.into_iter().flatten().collect(),
        })
    }

    /// The deterministic remapping sending `z` to `targets[z]`.
    pub fn deterministic(targets: &[usize]) -> Result<Self> {
        let n = targets.len();
        if let Some(&t) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::Index { index: t, len: n });
        }
        let mut matrix = vec![0.0; n * n];
        for (z, &t) in targets.iter().enumerate() {
            matrix[z * n + t] = 1.0;
        }
        Ok(Remapping { n, matrix })
    }

    pub fn identity(n: usize) -> Self {
        let targets: Vec<usize> = (0..n).collect();
        Self::deterministic(&targets).expect("identity targets are in range")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, z: usize, guess: usize) -> f64 {
        self.matrix[z * self.n + guess]
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.matrix[z * self.n..(z + 1) * self.n]
    }

    /// For deterministic remappings, the guess made for each `z`.
    pub fn targets(&self) -> Option<Vec<usize>> {
        (0..self.n)
            .map(|z| self.row(z).iter().position(|&v| v == 1.0))
            .collect()
    }
}

/// Best adversary remapping: for each reported `z`, the guess minimising
/// `Σ_x π_x k[x][z] dA(x, guess)`, ties to the lowest index.
pub fn optimal_remap(mech: &Mechanism, pi: &Prior, da: &Metric) -> Result<Remapping> {
    let n = check_dims(mech, pi, da)?;
    let w = pi.weights();
    let mut targets = Vec::with_capacity(n);
    let mut joint = vec![0.0; n];
    for z in 0..n {
        for (x, j) in joint.iter_mut().enumerate() {
            *j = w[x] * mech.get(x, z);
        }
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for guess in 0..n {
            let cost: f64 = joint
                .iter()
                .enumerate()
                .filter(|(_, &j)| j != 0.0)
                .map(|(x, &j)| j * da.get(x, guess))
                .sum();
            if cost < best_cost {
                best_cost = cost;
                best = guess;
            }
        }
        targets.push(best);
    }
    Remapping::deterministic(&targets)
}

/// Expected error of the optimal Bayesian adversary.
pub fn adv_error(mech: &Mechanism, pi: &Prior, da: &Metric) -> Result<f64> {
    let h = optimal_remap(mech, pi, da)?;
    expected_distance(&compose(mech, &h)?, pi, da)
}

/// The mechanism `K·H`: report with `K`, then remap with `H`.
pub fn compose(mech: &Mechanism, remap: &Remapping) -> Result<Mechanism> {
    let n = mech.len();
    if remap.len() != n {
        return Err(Error::input(format!(
            "remapping has {} locations, mechanism {n}",
            remap.len()
        )));
    }
    let mut matrix = vec![0.0; n * n];
    for x in 0..n {
        let out = &mut matrix[x * n..(x + 1) * n];
        for (z, &k) in mech.row(x).iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            for (o, &h) in out.iter_mut().zip(remap.row(z)) {
                *o += k * h;
            }
        }
        // guard against sums drifting past 1 by an ulp
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    Mechanism::from_flat(mech.locations().clone(), matrix, Provenance {
        epsilon: mech.provenance().epsilon,
        ..Provenance::external()
    })
}

/// Result of checking a mechanism against a scaled metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyReport {
    /// Smallest `e` such that the mechanism is `e * d`-private for the
    /// unscaled base metric `d`. Infinite when some column is zero for one
    /// location and positive for another.
    #[serde(serialize_with = "serialize_extended_f64")]
    pub effective_epsilon: f64,
    /// Ordered triple `(x, x', z)` attaining `effective_epsilon`.
    pub worst_triple: Option<(usize, usize, usize)>,
    /// Whether `k[x][z] <= e^{d(x,x')} k[x'][z] + slack` for every triple,
    /// with `d` the scaled metric.
    pub satisfied: bool,
    /// Largest `k[x][z] - e^{d(x,x')} k[x'][z]` over all triples (can be
    /// negative).
    pub max_violation: f64,
}

/// Checks `k[x][z] <= e^{d(x,x')} k[x'][z]` for all ordered triples with
/// absolute slack [`PRIVACY_SLACK`].
pub fn verify_dx_privacy(mech: &Mechanism, scaled: &Metric) -> PrivacyReport {
    verify_dx_privacy_with_slack(mech, scaled, PRIVACY_SLACK)
}

pub fn verify_dx_privacy_with_slack(mech: &Mechanism, scaled: &Metric, slack: f64) -> PrivacyReport {
    let n = mech.len();
    assert_eq!(scaled.len(), n, "metric and mechanism sizes differ");
    let mut effective: f64 = 0.0;
    let mut worst_triple = None;
    let mut max_violation = f64::NEG_INFINITY;
    for x in 0..n {
        for xp in 0..n {
            if x == xp {
                continue;
            }
            let base = scaled.base(x, xp);
            let bound = scaled.get(x, xp).exp();
            for z in 0..n {
                let a = mech.get(x, z);
                let b = mech.get(xp, z);
                max_violation = max_violation.max(a - bound * b);
                if base <= 0.0 {
                    continue;
                }
                let ratio = if a == 0.0 {
                    0.0
                } else if b == 0.0 {
                    f64::INFINITY
                } else {
                    (a / b).ln() / base
                };
                if ratio > effective || (worst_triple.is_none() && ratio == effective && ratio > 0.0) {
                    effective = ratio;
                    worst_triple = Some((x, xp, z));
                }
            }
        }
    }
    if n < 2 {
        max_violation = 0.0;
    }
    PrivacyReport {
        effective_epsilon: effective,
        worst_triple,
        satisfied: max_violation <= slack,
        max_violation,
    }
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub user_id: Option<String>,
    pub prior_name: String,
    pub mechanism_kind: String,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub ql_km: f64,
    pub adv_error_km: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub effective_epsilon: f64,
}

/// Metrics of `mech` under prior `pi`: quality loss under `dq`, adversary
/// error under `da` and effective epsilon against the base metric `dx`.
pub fn evaluate(
    mech: &Mechanism,
    pi: &Prior,
    dq: &Metric,
    da: &Metric,
    dx: &Metric,
    user_id: Option<&str>,
    prior_name: &str,
) -> Result<ReportRow> {
    dx.require_len(mech.len())?;
    let prov = mech.provenance();
    Ok(ReportRow {
        user_id: user_id.map(str::to_string),
        prior_name: prior_name.to_string(),
        mechanism_kind: prov.kind.as_str().to_string(),
        epsilon: prov.epsilon,
        delta: prov.delta,
        ql_km: quality_loss(mech, pi, dq)?,
        adv_error_km: adv_error(mech, pi, da)?,
        effective_epsilon: verify_dx_privacy(mech, dx).effective_epsilon,
    })
}

pub fn report_to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "user_id",
            "prior_name",
            "mechanism_kind",
            "epsilon",
            "delta",
            "ql_km",
            "adv_error_km",
            "effective_epsilon",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Serialises infinities as the string `"inf"`, which JSON cannot represent
/// as a number.
pub fn serialize_extended_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}
