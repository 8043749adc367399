use std::path::Path;
use std::time::Instant;

use optql_core::ingest::{
    build_prior, count_points, densest_window, filter_users, parse_geolife_dir,
    parse_traces_csv_file, select_regions, GridFrame, TracePoint,
};
use optql_core::mech::{build_optql_exact_with, optql_from_spanner};
use optql_core::{
    build_exponential, build_planar_laplace, calibrate_planar_laplace, constraint_count, evaluate,
    get_spanner, measured_dilation, quality_loss, report_to_csv, verify_dx_privacy, ConstraintCount,
    LocationSet, Mechanism, Metric, Prior, ReportRow, SimplexSolver, SolveReport,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{read_to_string, OutDir};
use crate::Kind;

struct Instance {
    locs: LocationSet,
    dx: Metric,
    dq: Metric,
    da: Metric,
}

fn instance(cfg: &ExperimentConfig) -> Result<Instance, CliError> {
    let locs = cfg.load_locations()?;
    Ok(Instance {
        dx: cfg.load_metric(&cfg.metrics.dx, &locs)?,
        dq: cfg.load_metric(&cfg.metrics.dq, &locs)?,
        da: cfg.load_metric(&cfg.metrics.da, &locs)?,
        locs,
    })
}

fn prior(cfg: &ExperimentConfig, n: usize) -> Result<Prior, CliError> {
    match &cfg.prior {
        Some(p) => {
            let pi = Prior::load(p)?;
            if pi.len() != n {
                return Err(CliError::Config(format!(
                    "prior {} has {} weights for {n} locations",
                    p.display(),
                    pi.len()
                )));
            }
            Ok(pi)
        }
        None => Ok(Prior::uniform(n)),
    }
}

#[derive(Serialize)]
struct SpannerStats {
    delta: f64,
    locations: usize,
    edges: usize,
    measured_dilation: f64,
    max_degree: usize,
    constraint_count: ConstraintCount,
}

pub fn spanner(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let inst = instance(cfg)?;
    let delta = cfg.delta()?;
    let start = Instant::now();
    let s = get_spanner(&inst.locs, &inst.dx, delta)?;
    log::info!(
        "spanner over {} locations at delta {delta}: {} edges in {:.3}s",
        inst.locs.len(),
        s.edges().len(),
        start.elapsed().as_secs_f64()
    );
    s.check_invariants(&inst.dx)
        .map_err(|e| CliError::Invariant(e.to_string()))?;
    let stats = SpannerStats {
        delta,
        locations: inst.locs.len(),
        edges: s.edges().len(),
        measured_dilation: measured_dilation(&s, &inst.dx)?,
        max_degree: s.max_degree(),
        constraint_count: constraint_count(&s),
    };
    let out = OutDir::create(cfg.output_dir())?;
    out.write("spanner.json", s.to_json()?.as_bytes())?;
    out.write_json("spanner_stats.json", &stats)?;
    Ok(())
}

#[derive(Serialize)]
struct BuildStats {
    kind: &'static str,
    epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    locations: usize,
    ql_km: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    variables: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inequalities: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equalities: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
}

fn build_mechanism(
    cfg: &ExperimentConfig,
    inst: &Instance,
    kind: Kind,
    pi: &Prior,
) -> Result<(Mechanism, Option<SolveReport>), CliError> {
    let eps = cfg.epsilon()?;
    let solver = SimplexSolver::new(cfg.solver.options());
    Ok(match kind {
        Kind::OptqlExact => {
            let (m, r) = build_optql_exact_with(&solver, &inst.locs, &inst.dx, eps, pi, &inst.dq)?;
            (m, Some(r))
        }
        Kind::OptqlSpanner => {
            let delta = cfg.delta()?;
            let s = get_spanner(&inst.locs, &inst.dx, delta)?;
            let (m, r) = optql_from_spanner(&solver, &inst.locs, &s, eps, delta, pi, &inst.dq)?;
            (m, Some(r))
        }
        Kind::Exponential => (build_exponential(&inst.locs, &inst.dx, eps)?, None),
        Kind::PlanarLaplace => (
            build_planar_laplace(&inst.locs, eps, cfg.seed(), cfg.samples)?,
            None,
        ),
    })
}

pub fn build(cfg: &ExperimentConfig, kind: Kind) -> Result<(), CliError> {
    let inst = instance(cfg)?;
    let pi = prior(cfg, inst.locs.len())?;
    let eps = cfg.epsilon()?;
    let start = Instant::now();
    let (mech, report) = build_mechanism(cfg, &inst, kind, &pi)?;
    let name = mech.provenance().kind.as_str();
    if let Some(r) = &report {
        log::info!(
            "{name}: {} variables, {} inequalities, {} iterations, LP solve {:.3}s",
            r.variables,
            r.inequalities,
            r.iterations,
            r.solve_seconds
        );
    }
    log::info!("{name}: built in {:.3}s", start.elapsed().as_secs_f64());

    // Sampled Planar Laplace matrices are not exactly private on the grid.
    if kind != Kind::PlanarLaplace {
        let rep = verify_dx_privacy(&mech, &inst.dx.scaled(eps)?);
        if !rep.satisfied {
            return Err(CliError::Invariant(format!(
                "{name} violates {eps}*dX privacy by {:e} at {:?}",
                rep.max_violation, rep.worst_triple
            )));
        }
    }
    let ql = quality_loss(&mech, &pi, &inst.dq)?;
    log::info!("{name}: quality loss {ql} km");

    let stats = BuildStats {
        kind: name,
        epsilon: eps,
        delta: mech.provenance().delta,
        locations: inst.locs.len(),
        ql_km: ql,
        variables: report.as_ref().map(|r| r.variables),
        inequalities: report.as_ref().map(|r| r.inequalities),
        equalities: report.as_ref().map(|r| r.equalities),
        iterations: report.as_ref().map(|r| r.iterations),
    };
    let out = OutDir::create(cfg.output_dir())?;
    out.write(&format!("{name}.json"), mech.to_json()?.as_bytes())?;
    out.write(&format!("{name}.csv"), mech.to_csv().as_bytes())?;
    out.write_json(&format!("{name}_stats.json"), &stats)?;
    Ok(())
}

/// One entry of the priors file written by `ingest`.
#[derive(Debug, Serialize, Deserialize)]
pub struct UserPrior {
    pub user_id: String,
    pub period: String,
    pub weights: Vec<f64>,
}

pub fn eval(cfg: &ExperimentConfig, mechanisms: &[std::path::PathBuf], priors: Option<&Path>) -> Result<(), CliError> {
    let inst = instance(cfg)?;
    let n = inst.locs.len();
    let mut named: Vec<(Option<String>, String, Prior)> = Vec::new();
    match priors {
        Some(p) => {
            let list: Vec<UserPrior> = serde_json::from_str(&read_to_string(p)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            for up in list {
                if up.weights.len() != n {
                    return Err(CliError::Config(format!(
                        "prior for {} / {} has {} weights for {n} locations",
                        up.user_id,
                        up.period,
                        up.weights.len()
                    )));
                }
                named.push((Some(up.user_id), up.period, Prior::new(up.weights)?));
            }
        }
        None => {
            let name = cfg
                .prior
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "uniform".to_string());
            named.push((None, name, prior(cfg, n)?));
        }
    }

    let mut rows: Vec<ReportRow> = Vec::new();
    for path in mechanisms {
        let mech = Mechanism::load_json(inst.locs.clone(), path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for (user, pname, pi) in &named {
            rows.push(evaluate(&mech, pi, &inst.dq, &inst.da, &inst.dx, user.as_deref(), pname)?);
        }
    }
    log::info!("evaluated {} mechanisms against {} priors", mechanisms.len(), named.len());
    let out = OutDir::create(cfg.output_dir())?;
    out.write("report.csv", report_to_csv(&rows)?.as_bytes())?;
    out.write_json("report.json", &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct Funnel {
    points_parsed: usize,
    points_outside_grid: usize,
    users_total: usize,
    users_after_min_points: usize,
    regions_selected: usize,
    regions_short: bool,
    users_after_region_filter: usize,
}

fn load_traces(path: &Path) -> Result<Vec<TracePoint>, CliError> {
    if path.is_dir() {
        Ok(parse_geolife_dir(path)?)
    } else if path.is_file() {
        Ok(parse_traces_csv_file(path)?)
    } else {
        Err(CliError::Config(format!("traces {} not found", path.display())))
    }
}

pub fn ingest(cfg: &ExperimentConfig, traces: &Path) -> Result<(), CliError> {
    let ic = cfg
        .ingest
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no `ingest` section".into()))?;
    let frame = GridFrame {
        grid: ic.grid,
        ref_lat: ic.ref_lat,
        ref_lon: ic.ref_lon,
        utc_offset_hours: ic.utc_offset_hours,
    };
    let mut points = load_traces(traces)?;
    if let Some(days) = ic.window_days {
        points = densest_window(&points, days);
    }
    let table = count_points(&points, &frame, &cfg.periods)?;
    let users_total = table.counts.len();
    let kept = filter_users(&table, ic.min_points, None);
    let out = OutDir::create(cfg.output_dir())?;
    out.write("counts.json", table.to_json()?.as_bytes())?;

    if kept.is_empty() {
        out.write_json(
            "funnel.json",
            &Funnel {
                points_parsed: points.len(),
                points_outside_grid: table.dropped_outside,
                users_total,
                users_after_min_points: 0,
                regions_selected: 0,
                regions_short: true,
                users_after_region_filter: 0,
            },
        )?;
        return Err(CliError::Warning(format!(
            "no user has {} points in every period ({users_total} users seen); no priors written",
            ic.min_points
        )));
    }

    let full_day = cfg
        .periods
        .iter()
        .position(|p| p.covers_full_day())
        .unwrap_or(0);
    let sel = select_regions(&table, &kept, full_day, ic.per_user_top, ic.keep)?;
    if sel.short {
        log::warn!("only {} distinct regions available, {} requested", sel.regions.len(), ic.keep);
    }
    let final_users = filter_users(&table, ic.min_points, Some(&sel.regions));

    let mut priors = Vec::new();
    let mut csv = String::from("user_id,period");
    for r in &sel.regions {
        csv.push_str(&format!(",r{r}"));
    }
    csv.push('\n');
    for user in &final_users {
        for (p, period) in cfg.periods.iter().enumerate() {
            let pi = match build_prior(&table, user, p, &sel.regions) {
                Ok(pi) => pi,
                Err(optql_core::Error::Prior(_)) => {
                    log::warn!("user {user} has no points in period {}", period.name);
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            csv.push_str(&format!("{user},{}", period.name));
            for w in pi.weights() {
                csv.push_str(&format!(",{w}"));
            }
            csv.push('\n');
            priors.push(UserPrior {
                user_id: user.clone(),
                period: period.name.clone(),
                weights: pi.weights().to_vec(),
            });
        }
    }

    let funnel = Funnel {
        points_parsed: points.len(),
        points_outside_grid: table.dropped_outside,
        users_total,
        users_after_min_points: kept.len(),
        regions_selected: sel.regions.len(),
        regions_short: sel.short,
        users_after_region_filter: final_users.len(),
    };
    log::info!(
        "{} users -> {} with {} points -> {} regions -> {} users",
        funnel.users_total,
        funnel.users_after_min_points,
        ic.min_points,
        funnel.regions_selected,
        funnel.users_after_region_filter
    );
    out.write("regions.json", sel.to_location_set(&ic.grid)?.to_json()?.as_bytes())?;
    out.write_json("priors.json", &priors)?;
    out.write("priors.csv", csv.as_bytes())?;
    out.write_json("funnel.json", &funnel)?;
    Ok(())
}

#[derive(Serialize)]
struct CalibrationStats {
    target_ql: f64,
    epsilon_prime: f64,
    achieved_ql: f64,
    tolerance: f64,
    evaluations: usize,
    seed: u64,
    samples: usize,
}

pub fn calibrate(cfg: &ExperimentConfig, target_ql: Option<f64>) -> Result<(), CliError> {
    let inst = instance(cfg)?;
    let pi = prior(cfg, inst.locs.len())?;
    let target = match target_ql {
        Some(q) => q,
        None => {
            let kind = if cfg.delta.is_some() { Kind::OptqlSpanner } else { Kind::OptqlExact };
            let (m, _) = build_mechanism(cfg, &inst, kind, &pi)?;
            quality_loss(&m, &pi, &inst.dq)?
        }
    };
    let tol = cfg.calibration_tol * target;
    let seed = cfg.seed();
    let c = calibrate_planar_laplace(&inst.locs, &pi, &inst.dq, target, tol, seed, cfg.samples)?;
    log::info!(
        "planar laplace epsilon' {} reaches quality loss {} (target {target}) after {} evaluations",
        c.epsilon_prime,
        c.quality_loss,
        c.evaluations
    );
    let stats = CalibrationStats {
        target_ql: target,
        epsilon_prime: c.epsilon_prime,
        achieved_ql: c.quality_loss,
        tolerance: tol,
        evaluations: c.evaluations,
        seed,
        samples: cfg.samples,
    };
    let out = OutDir::create(cfg.output_dir())?;
    out.write("planar-laplace.json", c.mechanism.to_json()?.as_bytes())?;
    out.write("planar-laplace.csv", c.mechanism.to_csv().as_bytes())?;
    out.write_json("calibration.json", &stats)?;
    Ok(())
}
