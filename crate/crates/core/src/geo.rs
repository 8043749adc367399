//! Planar locations, distance metrics and grid construction.
//!
//! All distances are kilometers, so a privacy level `epsilon` carries units of
//! 1/km. Index order in a [`LocationSet`] is the canonical order of every
//! matrix and vector built on top of it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by [`project`], in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Tolerance for the triangle inequality on explicit distance matrices.
pub const TRIANGLE_TOL: f64 = 1e-9;

/// A point in the plane, kilometers east (`x`) and north (`y`) of some origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Equirectangular projection of `(lat, lon)` around a reference point.
pub fn project(lat: f64, lon: f64, ref_lat: f64, ref_lon: f64) -> Result<Point> {
    for (name, v, lim) in [
        ("lat", lat, 90.0),
        ("lon", lon, 180.0),
        ("ref_lat", ref_lat, 90.0),
        ("ref_lon", ref_lon, 180.0),
    ] {
        if !v.is_finite() || v.abs() > lim {
            return Err(Error::input(format!("{name} = {v} outside [-{lim}, {lim}]")));
        }
    }
    let rad = std::f64::consts::PI / 180.0;
    let x = EARTH_RADIUS_KM * (lon - ref_lon) * rad * (ref_lat * rad).cos();
    let y = EARTH_RADIUS_KM * (lat - ref_lat) * rad;
    Ok(Point { x, y })
}

/// Ordered set of distinct locations.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    points: Vec<Point>,
    labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct LocationRecord {
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl LocationSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        Self::build(points, None)
    }

    pub fn with_labels(points: Vec<Point>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::input(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        Self::build(points, Some(labels))
    }

    fn build(points: Vec<Point>, labels: Option<Vec<String>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("a location set needs at least one point"));
        }
        if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::input(format!("non-finite point {p:?}")));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (points[a], points[b]);
            pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y))
        });
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(Error::input(format!(
                    "locations {} and {} coincide",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(LocationSet { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Result<Point> {
        self.points.get(i).copied().ok_or(Error::Index {
            index: i,
            len: self.len(),
        })
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Display label of location `i`, falling back to its index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    /// Index of the location closest to `p`; ties go to the lowest index.
    pub fn nearest(&self, p: Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let dx = q.x - p.x;
            let dy = q.y - p.y;
            let d = dx * dx + dy * dy;
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        let records: Vec<LocationRecord> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| LocationRecord {
                x: p.x,
                y: p.y,
                label: self.labels.as_ref().map(|l| l[i].clone()),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let records: Vec<LocationRecord> = serde_json::from_str(s)?;
        let any_label = records.iter().any(|r| r.label.is_some());
        let points = records.iter().map(|r| Point::new(r.x, r.y)).collect();
        if any_label {
            let labels = records
                .into_iter()
                .enumerate()
                .map(|(i, r)| r.label.unwrap_or_else(|| i.to_string()))
                .collect();
            Self::with_labels(points, labels)
        } else {
            Self::new(points)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Rectangular grid of equally sized cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point,
    pub cell_width: f64,
    pub cell_height: f64,
    pub columns: usize,
    pub rows: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.cell_width > 0.0
            && self.cell_height > 0.0
            && self.cell_width.is_finite()
            && self.cell_height.is_finite();
        if !dims_ok {
            return Err(Error::input(format!(
                "grid cells must have positive size, got {} x {}",
                self.cell_width, self.cell_height
            )));
        }
        if self.columns == 0 || self.rows == 0 {
            return Err(Error::input("grid needs at least one row and column"));
        }
        if !self.origin.x.is_finite() || !self.origin.y.is_finite() {
            return Err(Error::input("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.columns
    }

    /// Center of cell `(row, col)`.
    pub fn center(&self, row: usize, col: usize) -> Point {
        Point {
            x: self.origin.x + (col as f64 + 0.5) * self.cell_width,
            y: self.origin.y + (row as f64 + 0.5) * self.cell_height,
        }
    }

    /// Center of the cell with row-major index `idx`.
    pub fn cell_center(&self, idx: usize) -> Point {
        self.center(idx / self.columns, idx % self.columns)
    }

    /// Row-major index of the cell containing `p`, if inside the grid.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let c = ((p.x - self.origin.x) / self.cell_width).floor();
        let r = ((p.y - self.origin.y) / self.cell_height).floor();
        if c < 0.0 || r < 0.0 || c >= self.columns as f64 || r >= self.rows as f64 {
            return None;
        }
        Some(r as usize * self.columns + c as usize)
    }
}

/// Centers of all cells of `spec`, in row-major order.
pub fn build_grid(spec: &GridSpec) -> Result<LocationSet> {
    spec.validate()?;
    let points = (0..spec.rows)
        .flat_map(|r| (0..spec.columns).map(move |c| spec.center(r, c)))
        .collect();
    LocationSet::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Euclidean,
    GraphInduced,
    ExplicitMatrix,
}

/// A metric over the indices of a location set, stored as a dense matrix of
/// base distances together with a multiplicative scale.
///
/// `distance` returns `scale * base`; `base_distance` ignores the scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    kind: MetricKind,
    scale: f64,
    n: usize,
    dist: Vec<f64>,
}

impl Metric {
    pub fn euclidean(locs: &LocationSet) -> Self {
        let n = locs.len();
        let pts = locs.points();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = pts[i].dist(&pts[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Metric {
            kind: MetricKind::Euclidean,
            scale: 1.0,
            n,
            dist,
        }
    }

    /// Validates symmetry, zero diagonal, positivity and the triangle
    /// inequality (within [`TRIANGLE_TOL`]).
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::input("empty distance matrix"));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::input(format!("row {i} has {} entries, expected {n}", rows[i].len())));
        }
        let dist: Vec<f64> = rows.into_iter().flatten().collect();
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::input(format!("d({i},{i}) = {} is not zero", dist[i * n + i])));
            }
            for j in 0..n {
                let d = dist[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::input(format!("d({i},{j}) = {d} is not a finite non-negative distance")));
                }
                if i != j && d <= 0.0 {
                    return Err(Error::input(format!("d({i},{j}) = 0 for distinct locations")));
                }
                if d != dist[j * n + i] {
                    return Err(Error::input(format!("matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        for i in 0..n {
            for k in 0..n {
                let dik = dist[i * n + k];
                for j in 0..n {
                    if dist[i * n + j] > dik + dist[k * n + j] + TRIANGLE_TOL {
                        return Err(Error::input(format!(
                            "triangle inequality fails for ({i},{k},{j})"
                        )));
                    }
                }
            }
        }
        Ok(Metric {
            kind: MetricKind::ExplicitMatrix,
            scale: 1.0,
            n,
            dist,
        })
    }

    /// Metric induced by shortest paths in a connected graph. `apsp` is the
    /// row-major all-pairs matrix.
    pub(crate) fn graph_induced(n: usize, apsp: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(apsp.len(), n * n);
        if apsp.iter().any(|d| !d.is_finite()) {
            return Err(Error::Structural("graph is disconnected".into()));
        }
        Ok(Metric {
            kind: MetricKind::GraphInduced,
            scale: 1.0,
            n,
            dist: apsp,
        })
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The same metric multiplied by `factor` (e.g. `epsilon * dX`).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::input(format!("metric scale must be positive, got {factor}")));
        }
        Ok(Metric {
            scale: self.scale * factor,
            ..self.clone()
        })
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.get(i, j))
    }

    pub fn base_distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.dist[i * self.n + j])
    }

    /// Unchecked scaled distance; panics on out-of-range indices.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scale * self.dist[i * self.n + j]
    }

    #[inline]
    pub(crate) fn base(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::Index { index: i, len: self.n });
        }
        Ok(())
    }

    /// Largest distance between any two locations.
    pub fn diameter(&self) -> f64 {
        self.scale * self.dist.iter().copied().fold(0.0, f64::max)
    }

    pub fn require_len(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::input(format!(
                "metric covers {} locations, expected {n}",
                self.n
            )));
        }
        Ok(())
    }
}
