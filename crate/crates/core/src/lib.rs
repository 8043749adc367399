//! Location obfuscation mechanisms that minimise expected quality loss
//! under geo-indistinguishability.
//!
//! The optimal mechanism is the solution of a linear program with one
//! privacy constraint per ordered pair of locations and per output. A
//! δ-spanner of the location graph lets the same guarantee be enforced with
//! constraints only along spanner edges, at level `ε/δ`.
//!
//! ```
//! use optql_core::{build_optql_spanner, quality_loss, LocationSet, Metric, Point, Prior};
//!
//! let locs = LocationSet::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)])?;
//! let d = Metric::euclidean(&locs);
//! let pi = Prior::uniform(3);
//! let k = build_optql_spanner(&locs, &d, 1.0, 1.2, &pi, &d)?;
//! assert!(quality_loss(&k, &pi, &d)? >= 0.0);
//! # Ok::<(), optql_core::Error>(())
//! ```

pub mod error;
pub mod eval;
pub mod geo;
pub mod ingest;
pub mod lp;
pub mod mech;
pub mod spanner;

pub use error::{Error, Result};
pub use eval::{
    adv_error, compose, evaluate, expected_distance, optimal_remap, quality_loss, report_to_csv,
    verify_dx_privacy, verify_dx_privacy_with_slack, PrivacyReport, Remapping, ReportRow,
    PRIVACY_SLACK,
};
pub use geo::{build_grid, project, GridSpec, LocationSet, Metric, MetricKind, Point};
pub use lp::{LpModel, LpSolution, LpStatus, SimplexSolver, SolverOptions};
pub use mech::{
    build_exponential, build_optql_exact, build_optql_spanner, build_planar_laplace,
    calibrate_planar_laplace, obfuscate, Calibration, Mechanism, MechanismKind, Prior, Provenance,
    SolveReport,
};
pub use spanner::{
    all_pairs_shortest_paths, constraint_count, get_spanner, measured_dilation, ConstraintCount,
    Edge, Spanner,
};
