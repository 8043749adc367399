//! Linear programs for quality-loss-optimal mechanisms.
//!
//! Primal variables are the mechanism entries `k[x,z]` at index `x*n + z`.

use super::model::{LpModel, Row, Sense};
use crate::error::{Error, Result};
use crate::geo::{LocationSet, Metric};
use crate::mech::Prior;
use crate::spanner::Spanner;

/// Largest exponent accepted in a privacy coefficient `e^{eps*d}`.
const MAX_EXPONENT: f64 = 700.0;
/// Above this `eps * diameter` the coefficient range hurts conditioning.
const CONDITIONING_WARN: f64 = 40.0;

fn check_common(locs: &LocationSet, epsilon: f64, pi: &Prior, dq: &Metric) -> Result<usize> {
    let n = locs.len();
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
    }
    if pi.len() != n {
        return Err(Error::Prior(format!("prior has {} entries for {n} locations", pi.len())));
    }
    dq.require_len(n)?;
    Ok(n)
}

fn privacy_coef(exponent: f64) -> Result<f64> {
    if exponent > MAX_EXPONENT {
        return Err(Error::input(format!(
            "privacy coefficient e^{exponent} overflows; reduce epsilon or the location spread"
        )));
    }
    Ok(exponent.exp())
}

fn warn_conditioning(epsilon_eff: f64, diameter: f64) {
    if epsilon_eff * diameter > CONDITIONING_WARN {
        log::warn!(
            "epsilon * diameter = {:.1} exceeds {CONDITIONING_WARN}; the LP may be badly conditioned",
            epsilon_eff * diameter
        );
    }
}

fn quality_objective(model: &mut LpModel, n: usize, pi: &Prior, dq: &Metric) {
    for x in 0..n {
        let px = pi.weights()[x];
        for z in 0..n {
            let c = px * dq.get(x, z);
            if c != 0.0 {
                model.objective.push((x * n + z, c));
            }
        }
    }
}

fn stochastic_rows(model: &mut LpModel, n: usize) {
    for x in 0..n {
        model
            .eq_rows
            .push(Row::new((0..n).map(|z| (x * n + z, 1.0)).collect(), 1.0));
    }
}

fn mechanism_names(n: usize) -> Vec<String> {
    (0..n)
        .flat_map(|x| (0..n).map(move |z| format!("k[{x},{z}]")))
        .collect()
}

/// The exact primal: one constraint `k[x,z] - e^{eps*dX(x,x')} k[x',z] <= 0`
/// for every ordered triple with `x != x'`.
pub fn build_primal_exact(
    locs: &LocationSet,
    dx: &Metric,
    epsilon: f64,
    pi: &Prior,
    dq: &Metric,
) -> Result<LpModel> {
    let n = check_common(locs, epsilon, pi, dq)?;
    dx.require_len(n)?;
    warn_conditioning(epsilon, dx.diameter());

    let mut model = LpModel::new(n * n);
    quality_objective(&mut model, n, pi, dq);
    model.le_rows.reserve(n * n * n.saturating_sub(1));
    for x in 0..n {
        for xp in 0..n {
            if x == xp {
                continue;
            }
            let c = privacy_coef(epsilon * dx.get(x, xp))?;
            for z in 0..n {
                model
                    .le_rows
                    .push(Row::new(vec![(x * n + z, 1.0), (xp * n + z, -c)], 0.0));
            }
        }
    }
    stochastic_rows(&mut model, n);
    model.names = Some(mechanism_names(n));
    Ok(model)
}

fn check_spanner(locs: &LocationSet, spanner: &Spanner, delta: f64) -> Result<()> {
    if spanner.locations() != locs {
        return Err(Error::input("spanner was built over a different location set"));
    }
    if !(delta.is_finite() && delta >= 1.0) {
        return Err(Error::input(format!("dilation must be at least 1, got {delta}")));
    }
    if delta < spanner.delta_requested() {
        return Err(Error::input(format!(
            "spanner only guarantees dilation {}, below the requested {delta}",
            spanner.delta_requested()
        )));
    }
    Ok(())
}

/// Oriented edges: `(a, b)` then `(b, a)` for each undirected edge.
fn orientations(spanner: &Spanner) -> Vec<(usize, usize, f64)> {
    spanner
        .edges()
        .iter()
        .flat_map(|e| [(e.a, e.b, e.weight), (e.b, e.a, e.weight)])
        .collect()
}

/// The spanner-reduced primal: privacy constraints only along spanner
/// edges, in both orientations, at level `epsilon / delta`.
pub fn build_primal_spanner(
    locs: &LocationSet,
    spanner: &Spanner,
    epsilon: f64,
    delta: f64,
    pi: &Prior,
    dq: &Metric,
) -> Result<LpModel> {
    let n = check_common(locs, epsilon, pi, dq)?;
    check_spanner(locs, spanner, delta)?;
    let eps_g = epsilon / delta;
    let oriented = orientations(spanner);
    warn_conditioning(eps_g, oriented.iter().map(|o| o.2).fold(0.0, f64::max));

    let mut model = LpModel::new(n * n);
    quality_objective(&mut model, n, pi, dq);
    model.le_rows.reserve(oriented.len() * n);
    for &(x, xp, w) in &oriented {
        let c = privacy_coef(eps_g * w)?;
        for z in 0..n {
            model
                .le_rows
                .push(Row::new(vec![(x * n + z, 1.0), (xp * n + z, -c)], 0.0));
        }
    }
    stochastic_rows(&mut model, n);
    model.names = Some(mechanism_names(n));
    Ok(model)
}

/// Index of the dual variable `a[x,x',z]` for oriented edge `o`.
pub fn dual_edge_var(n: usize, oriented_edge: usize, z: usize) -> usize {
    oriented_edge * n + z
}

/// Index of the free dual variable `b[x]`.
pub fn dual_row_var(n: usize, num_edges: usize, x: usize) -> usize {
    2 * num_edges * n + x
}

/// LP dual of [`build_primal_spanner`]:
///
/// maximize `Σ_x b[x]` subject to, for every `(x, z)`,
/// `b[x] + Σ_{(x,x')∈E} (e^{(eps/delta) d(x,x')} a[x',x,z] - a[x,x',z]) <= π_x dQ(x,z)`
/// with `a >= 0` and `b` free.
pub fn build_dual_spanner(
    locs: &LocationSet,
    spanner: &Spanner,
    epsilon: f64,
    delta: f64,
    pi: &Prior,
    dq: &Metric,
) -> Result<LpModel> {
    let n = check_common(locs, epsilon, pi, dq)?;
    check_spanner(locs, spanner, delta)?;
    let eps_g = epsilon / delta;
    let oriented = orientations(spanner);
    let num_edges = spanner.edges().len();
    let num_vars = oriented.len() * n + n;

    // position of each orientation's reverse: orientations come in pairs
    let reverse = |o: usize| o ^ 1;

    let mut model = LpModel::new(num_vars);
    model.sense = Sense::Maximize;
    model.objective = (0..n).map(|x| (dual_row_var(n, num_edges, x), 1.0)).collect();
    for x in 0..n {
        let outgoing: Vec<usize> = (0..oriented.len()).filter(|&o| oriented[o].0 == x).collect();
        let coefs: Vec<f64> = outgoing
            .iter()
            .map(|&o| privacy_coef(eps_g * oriented[o].2))
            .collect::<Result<_>>()?;
        for z in 0..n {
            let mut row = Vec::with_capacity(1 + 2 * outgoing.len());
            row.push((dual_row_var(n, num_edges, x), 1.0));
            for (&o, &c) in outgoing.iter().zip(&coefs) {
                row.push((dual_edge_var(n, reverse(o), z), c));
                row.push((dual_edge_var(n, o, z), -1.0));
            }
            model
                .le_rows
                .push(Row::new(row, pi.weights()[x] * dq.get(x, z)));
        }
    }
    for x in 0..n {
        model.lower_bounds[dual_row_var(n, num_edges, x)] = None;
    }
    let mut names = Vec::with_capacity(num_vars);
    for &(x, xp, _) in &oriented {
        for z in 0..n {
            names.push(format!("a[{x},{xp},{z}]"));
        }
    }
    for x in 0..n {
        names.push(format!("b[{x}]"));
    }
    model.names = Some(names);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Point;
    use crate::spanner::get_spanner;

    fn two_points() -> (LocationSet, Metric) {
        let l = LocationSet::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
        let m = Metric::euclidean(&l);
        (l, m)
    }

    #[test]
    fn exact_shape() {
        let (l, m) = two_points();
        let pi = Prior::uniform(2);
        let model = build_primal_exact(&l, &m, 1.0, &pi, &m).unwrap();
        assert_eq!(model.num_vars, 4);
        assert_eq!(model.le_rows.len(), 4);
        assert_eq!(model.eq_rows.len(), 2);
        model.validate().unwrap();

        let l5 = LocationSet::new((0..5).map(|i| Point::new(i as f64, (i * i) as f64)).collect()).unwrap();
        let m5 = Metric::euclidean(&l5);
        let model = build_primal_exact(&l5, &m5, 1.0, &Prior::uniform(5), &m5).unwrap();
        assert_eq!(model.le_rows.len(), 5 * 5 * 4);
    }

    #[test]
    fn spanner_shape_matches_count() {
        let l = LocationSet::new((0..3).map(|i| Point::new(i as f64, 0.0)).collect()).unwrap();
        let m = Metric::euclidean(&l);
        let s = get_spanner(&l, &m, 1.0).unwrap();
        let model = build_primal_spanner(&l, &s, 1.0, 1.0, &Prior::uniform(3), &m).unwrap();
        let cc = crate::spanner::constraint_count(&s);
        assert_eq!(model.le_rows.len(), 12);
        assert_eq!(model.le_rows.len(), cc.inequalities);
        assert_eq!(model.eq_rows.len(), cc.equalities);
        assert_eq!(model.num_vars, cc.variables);
    }

    #[test]
    fn dual_shape() {
        let (l, m) = two_points();
        let s = get_spanner(&l, &m, 1.0).unwrap();
        let model = build_dual_spanner(&l, &s, 1.0, 1.0, &Prior::uniform(2), &m).unwrap();
        assert_eq!(model.le_rows.len(), 4);
        assert_eq!(model.num_vars, 4 + 2);
        assert_eq!(model.lower_bounds.iter().filter(|b| b.is_none()).count(), 2);
        assert_eq!(model.sense, Sense::Maximize);
        model.validate().unwrap();
    }

    #[test]
    fn rejects_mismatch() {
        let (l, m) = two_points();
        let other = LocationSet::new(vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0)]).unwrap();
        let om = Metric::euclidean(&other);
        let s = get_spanner(&other, &om, 1.0).unwrap();
        let pi = Prior::uniform(2);
        assert!(build_primal_spanner(&l, &s, 1.0, 1.0, &pi, &m).is_err());
        assert!(build_dual_spanner(&l, &s, 1.0, 1.0, &pi, &m).is_err());
        assert!(build_primal_exact(&l, &m, 0.0, &pi, &m).is_err());
        assert!(build_primal_exact(&l, &m, 1.0, &Prior::uniform(3), &m).is_err());
        let s = get_spanner(&l, &m, 1.5).unwrap();
        assert!(build_primal_spanner(&l, &s, 1.0, 1.2, &pi, &m).is_err());
    }
}
