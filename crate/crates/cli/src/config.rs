use std::path::{Path, PathBuf};

use optql_core::ingest::TimePeriod;
use optql_core::lp::SolverOptions;
use optql_core::{GridSpec, LocationSet, Metric};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSource {
    Grid(GridSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    #[default]
    Euclidean,
    /// JSON file holding a square distance matrix in km.
    Matrix(PathBuf),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    #[serde(default)]
    pub dx: MetricSource,
    #[serde(default)]
    pub dq: MetricSource,
    #[serde(default)]
    pub da: MetricSource,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_feasibility_tol")]
    pub feasibility_tol: f64,
    #[serde(default = "default_optimality_tol")]
    pub optimality_tol: f64,
}

fn default_max_iterations() -> usize {
    SolverOptions::default().max_iterations
}
fn default_feasibility_tol() -> f64 {
    SolverOptions::default().feasibility_tol
}
fn default_optimality_tol() -> f64 {
    SolverOptions::default().optimality_tol
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: default_max_iterations(),
            feasibility_tol: default_feasibility_tol(),
            optimality_tol: default_optimality_tol(),
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iterations: self.max_iterations,
            feasibility_tol: self.feasibility_tol,
            optimality_tol: self.optimality_tol,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub grid: GridSpec,
    pub ref_lat: f64,
    pub ref_lon: f64,
    #[serde(default)]
    pub utc_offset_hours: i32,
    #[serde(default = "default_min_points")]
    pub min_points: u64,
    #[serde(default = "default_per_user_top")]
    pub per_user_top: usize,
    #[serde(default = "default_keep")]
    pub keep: usize,
    /// Keep only each user's densest window of this many days.
    #[serde(default)]
    pub window_days: Option<u32>,
}

fn default_min_points() -> u64 {
    20
}
fn default_per_user_top() -> usize {
    30
}
fn default_keep() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub locations: Option<LocationSource>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub metrics: Metrics,
    #[serde(default = "TimePeriod::standard")]
    pub periods: Vec<TimePeriod>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Prior JSON `{"weights": [...]}`; uniform when absent.
    #[serde(default)]
    pub prior: Option<PathBuf>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_calibration_tol")]
    pub calibration_tol: f64,
    #[serde(default)]
    pub ingest: Option<IngestConfig>,
}

fn default_samples() -> usize {
    100_000
}
fn default_calibration_tol() -> f64 {
    0.005
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl ExperimentConfig {
    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.check_files()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(LocationSource::File(p)) = &mut self.locations {
            fix(p);
        }
        for m in [&mut self.metrics.dx, &mut self.metrics.dq, &mut self.metrics.da] {
            if let MetricSource::Matrix(p) = m {
                fix(p);
            }
        }
        if let Some(p) = &mut self.prior {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    fn check_files(&self) -> Result<(), CliError> {
        let mut files: Vec<&Path> = Vec::new();
        if let Some(LocationSource::File(p)) = &self.locations {
            files.push(p);
        }
        for m in [&self.metrics.dx, &self.metrics.dq, &self.metrics.da] {
            if let MetricSource::Matrix(p) = m {
                files.push(p);
            }
        }
        if let Some(p) = &self.prior {
            files.push(p);
        }
        for f in files {
            if !f.exists() {
                return Err(CliError::Config(format!("referenced file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e > 0.0) {
                return Err(CliError::Config(format!("epsilon must be positive, got {e}")));
            }
        }
        if let Some(d) = self.delta {
            if !(d.is_finite() && d >= 1.0) {
                return Err(CliError::Config(format!("delta must be at least 1, got {d}")));
            }
        }
        for p in &self.periods {
            p.validate()?;
        }
        Ok(())
    }

    pub fn epsilon(&self) -> Result<f64, CliError> {
        self.epsilon
            .ok_or_else(|| CliError::Config("epsilon is required (config or --epsilon)".into()))
    }

    pub fn delta(&self) -> Result<f64, CliError> {
        self.delta
            .ok_or_else(|| CliError::Config("delta is required (config or --delta)".into()))
    }

    pub fn seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn load_locations(&self) -> Result<LocationSet, CliError> {
        match &self.locations {
            Some(LocationSource::Grid(g)) => Ok(optql_core::build_grid(g)?),
            Some(LocationSource::File(p)) => Ok(LocationSet::load(p)?),
            None => Err(CliError::Config("no locations configured".into())),
        }
    }

    pub fn load_metric(&self, src: &MetricSource, locs: &LocationSet) -> Result<Metric, CliError> {
        match src {
            MetricSource::Euclidean => Ok(Metric::euclidean(locs)),
            MetricSource::Matrix(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let m = Metric::from_matrix(rows)?;
                m.require_len(locs.len())?;
                Ok(m)
            }
        }
    }
}
