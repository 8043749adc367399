//! GPS trace ingestion and prior construction.
//!
//! Traces are projected onto a grid of regions. A user's points falling in
//! the same region during the same calendar hour (local time) count once.
//! Users are filtered by their deduplicated counts per time period, regions
//! are ranked by how many users have them among their most visited, and
//! priors are the normalised counts over the selected regions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{project, GridSpec, LocationSet};
use crate::mech::Prior;

/// Largest tolerated share of malformed input lines.
pub const MALFORMED_LIMIT: f64 = 0.01;

const SECONDS_PER_HOUR: i64 = 3600;
const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub user_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

/// Named set of local-time hour ranges `[start, end)`; `start > end` wraps
/// past midnight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimePeriod {
    pub name: String,
    pub hour_ranges: Vec<(u8, u8)>,
}

impl TimePeriod {
    pub fn new(name: impl Into<String>, hour_ranges: Vec<(u8, u8)>) -> Result<Self> {
        let p = TimePeriod {
            name: name.into(),
            hour_ranges,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hour_ranges.is_empty() {
            return Err(Error::input(format!("period {:?} has no hour ranges", self.name)));
        }
        for &(s, e) in &self.hour_ranges {
            if s >= 24 || e > 24 || s == e {
                return Err(Error::input(format!(
                    "period {:?}: bad hour range [{s}, {e})",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, hour: u8) -> bool {
        self.hour_ranges.iter().any(|&(s, e)| {
            if s < e {
                (s..e).contains(&hour)
            } else {
                hour >= s || hour < e
            }
        })
    }

    pub fn covers_full_day(&self) -> bool {
        (0..24).all(|h| self.contains(h))
    }

    /// Full day, morning `[7, 12)`, afternoon `[12, 19)`, night `[19, 7)`.
    pub fn standard() -> Vec<TimePeriod> {
        vec![
            TimePeriod { name: "all_day".into(), hour_ranges: vec![(0, 24)] },
            TimePeriod { name: "morning".into(), hour_ranges: vec![(7, 12)] },
            TimePeriod { name: "afternoon".into(), hour_ranges: vec![(12, 19)] },
            TimePeriod { name: "night".into(), hour_ranges: vec![(19, 7)] },
        ]
    }
}

/// Where a projected grid sits on the globe and which clock it reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub grid: GridSpec,
    pub ref_lat: f64,
    pub ref_lon: f64,
    /// Hours added to trace timestamps to obtain local time.
    #[serde(default)]
    pub utc_offset_hours: i32,
}

fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    None
}

fn finish_parse(mut points: Vec<TracePoint>, bad: Vec<usize>, total: usize) -> Result<Vec<TracePoint>> {
    if !bad.is_empty() {
        if bad.len() as f64 > MALFORMED_LIMIT * total as f64 {
            return Err(Error::Ingest {
                malformed: bad.len(),
                total,
                lines: bad.into_iter().take(20).collect(),
            });
        }
        log::warn!("skipped {} malformed of {total} lines (first: {:?})", bad.len(), &bad[..bad.len().min(5)]);
    }
    points.sort_by(|a, b| a.user_id.cmp(&b.user_id).then(a.timestamp.cmp(&b.timestamp)));
    Ok(points)
}

fn valid_coords(lat: f64, lon: f64) -> bool {
    lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0
}

/// Parses `user_id,timestamp_iso8601,lat,lon` with a header line. Results
/// are ordered by user, then time.
pub fn parse_traces_csv<R: Read>(input: R) -> Result<Vec<TracePoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut points = Vec::new();
    let mut bad = Vec::new();
    let mut total = 0;
    for (i, rec) in rdr.records().enumerate() {
        total += 1;
        // line 1 is the header
        let line = i + 2;
        let parsed = rec.ok().and_then(|r| {
            if r.len() != 4 || r[0].is_empty() {
                return None;
            }
            let ts = parse_timestamp(&r[1])?;
            let lat: f64 = r[2].parse().ok()?;
            let lon: f64 = r[3].parse().ok()?;
            valid_coords(lat, lon).then(|| TracePoint {
                user_id: r[0].to_string(),
                timestamp: ts,
                lat,
                lon,
            })
        });
        match parsed {
            Some(p) => points.push(p),
            None => bad.push(line),
        }
    }
    finish_parse(points, bad, total)
}

pub fn parse_traces_csv_file(path: impl AsRef<Path>) -> Result<Vec<TracePoint>> {
    parse_traces_csv(std::fs::File::open(path)?)
}

const PLT_HEADER_LINES: usize = 6;

/// Parses one PLT file body: six header lines, then
/// `lat,lon,0,alt,days,date,time`. Returns points and malformed line numbers.
fn parse_plt(user: &str, text: &str, points: &mut Vec<TracePoint>, bad: &mut Vec<usize>) -> usize {
    let mut total = 0;
    for (i, line) in text.lines().enumerate().skip(PLT_HEADER_LINES) {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (f.len() == 7)
            .then_some(())
            .and_then(|_| {
                let lat: f64 = f[0].parse().ok()?;
                let lon: f64 = f[1].parse().ok()?;
                let date = NaiveDate::parse_from_str(f[5], "%Y-%m-%d").ok()?;
                let time = NaiveTime::parse_from_str(f[6], "%H:%M:%S").ok()?;
                valid_coords(lat, lon).then(|| TracePoint {
                    user_id: user.to_string(),
                    timestamp: date.and_time(time).and_utc().timestamp(),
                    lat,
                    lon,
                })
            });
        match parsed {
            Some(p) => points.push(p),
            None => bad.push(i + 1),
        }
    }
    total
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut v: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    v.sort();
    Ok(v)
}

/// Reads a GeoLife-style tree: one folder per user (optionally under a
/// `Data/` folder), each holding `.plt` files directly or in `Trajectory/`.
pub fn parse_geolife_dir(root: impl AsRef<Path>) -> Result<Vec<TracePoint>> {
    let mut root = root.as_ref().to_path_buf();
    if root.join("Data").is_dir() {
        root = root.join("Data");
    }
    let mut points = Vec::new();
    let mut bad = Vec::new();
    let mut total = 0;
    let mut line_base = 0;
    for user_dir in sorted_entries(&root)? {
        if !user_dir.is_dir() {
            continue;
        }
        let user = user_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let traj = user_dir.join("Trajectory");
        let dir = if traj.is_dir() { traj } else { user_dir.clone() };
        for file in sorted_entries(&dir)? {
            let is_plt = file
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("plt"));
            if !is_plt {
                continue;
            }
            let text = std::fs::read_to_string(&file)?;
            let mut file_bad = Vec::new();
            total += parse_plt(&user, &text, &mut points, &mut file_bad);
            // report positions as running line numbers across all files
            bad.extend(file_bad.into_iter().map(|l| line_base + l));
            line_base += text.lines().count();
        }
    }
    finish_parse(points, bad, total)
}

/// Keeps, per user, the `days`-long window holding the most points
/// (earliest window on ties).
pub fn densest_window(points: &[TracePoint], days: u32) -> Vec<TracePoint> {
    let span = days as i64 * SECONDS_PER_DAY;
    let mut by_user: BTreeMap<&str, Vec<&TracePoint>> = BTreeMap::new();
    for p in points {
        by_user.entry(p.user_id.as_str()).or_default().push(p);
    }
    let mut out = Vec::with_capacity(points.len());
    for (_, mut pts) in by_user {
        pts.sort_by_key(|p| p.timestamp);
        let mut best = (0usize, 0usize);
        let mut end = 0;
        for start in 0..pts.len() {
            while end < pts.len() && pts[end].timestamp < pts[start].timestamp + span {
                end += 1;
            }
            if end - start > best.1 - best.0 {
                best = (start, end);
            }
        }
        out.extend(pts[best.0..best.1].iter().map(|p| (*p).clone()));
    }
    out
}

/// Deduplicated point counts per `(user, period, region)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub periods: Vec<String>,
    pub num_regions: usize,
    /// Points outside the grid.
    pub dropped_outside: usize,
    /// user -> one map per period from region index to count.
    pub counts: BTreeMap<String, Vec<BTreeMap<usize, u64>>>,
}

impl CountTable {
    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn period_index(&self, name: &str) -> Option<usize> {
        self.periods.iter().position(|p| p == name)
    }

    pub fn count(&self, user: &str, period: usize, region: usize) -> u64 {
        self.counts
            .get(user)
            .and_then(|p| p.get(period))
            .and_then(|m| m.get(&region))
            .copied()
            .unwrap_or(0)
    }

    /// Total count of `user` in `period`, optionally restricted to `regions`.
    pub fn total(&self, user: &str, period: usize, regions: Option<&[usize]>) -> u64 {
        let Some(m) = self.counts.get(user).and_then(|p| p.get(period)) else {
            return 0;
        };
        match regions {
            None => m.values().sum(),
            Some(rs) => rs.iter().map(|r| m.get(r).copied().unwrap_or(0)).sum(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Counts each `(user, region, local calendar hour)` at most once and adds
/// it to every period containing that hour.
pub fn count_points(points: &[TracePoint], frame: &GridFrame, periods: &[TimePeriod]) -> Result<CountTable> {
    frame.grid.validate()?;
    for p in periods {
        p.validate()?;
    }
    let offset = frame.utc_offset_hours as i64 * SECONDS_PER_HOUR;
    let mut seen: BTreeSet<(&str, usize, i64)> = BTreeSet::new();
    let mut dropped = 0;
    for p in points {
        let xy = project(p.lat, p.lon, frame.ref_lat, frame.ref_lon)?;
        match frame.grid.locate(xy) {
            Some(region) => {
                let bucket = (p.timestamp + offset).div_euclid(SECONDS_PER_HOUR);
                seen.insert((p.user_id.as_str(), region, bucket));
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::info!("{dropped} points fell outside the grid");
    }
    let mut counts: BTreeMap<String, Vec<BTreeMap<usize, u64>>> = BTreeMap::new();
    for p in points {
        counts
            .entry(p.user_id.clone())
            .or_insert_with(|| vec![BTreeMap::new(); periods.len()]);
    }
    for (user, region, bucket) in seen {
        let hour = bucket.rem_euclid(24) as u8;
        let per = counts.get_mut(user).expect("user registered above");
        for (i, period) in periods.iter().enumerate() {
            if period.contains(hour) {
                *per[i].entry(region).or_insert(0) += 1;
            }
        }
    }
    Ok(CountTable {
        periods: periods.iter().map(|p| p.name.clone()).collect(),
        num_regions: frame.grid.num_cells(),
        dropped_outside: dropped,
        counts,
    })
}

/// Users with at least `min_points` in every period, counting only
/// `regions` when given.
pub fn filter_users(table: &CountTable, min_points: u64, regions: Option<&[usize]>) -> Vec<String> {
    table
        .users()
        .filter(|u| (0..table.periods.len()).all(|p| table.total(u, p, regions) >= min_points))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSelection {
    /// Selected region indices, ascending.
    pub regions: Vec<usize>,
    /// Score (number of users ranking it) of each selected region.
    pub scores: Vec<usize>,
    /// Set when fewer distinct regions than requested were available.
    pub short: bool,
}

impl RegionSelection {
    pub fn to_location_set(&self, grid: &GridSpec) -> Result<LocationSet> {
        let points = self.regions.iter().map(|&r| grid.cell_center(r)).collect();
        let labels = self.regions.iter().map(|r| format!("r{r}")).collect();
        LocationSet::with_labels(points, labels)
    }
}

/// Ranks each user's regions by count in `period` (ties to lower index),
/// scores every region by how many users have it in their top
/// `per_user_top`, and keeps the `keep` best-scoring regions (ties to lower
/// index).
pub fn select_regions(
    table: &CountTable,
    users: &[String],
    period: usize,
    per_user_top: usize,
    keep: usize,
) -> Result<RegionSelection> {
    if per_user_top == 0 || keep == 0 {
        return Err(Error::input("per_user_top and keep must be at least 1"));
    }
    if period >= table.periods.len() {
        return Err(Error::Index { index: period, len: table.periods.len() });
    }
    let mut score: BTreeMap<usize, usize> = BTreeMap::new();
    for u in users {
        let Some(m) = table.counts.get(u).map(|p| &p[period]) else {
            continue;
        };
        let mut ranked: Vec<(usize, u64)> = m.iter().filter(|(_, &c)| c > 0).map(|(&r, &c)| (r, c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for (r, _) in ranked.into_iter().take(per_user_top) {
            *score.entry(r).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(usize, usize)> = score.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let short = ranked.len() < keep;
    if short {
        log::warn!("only {} regions available, {keep} requested", ranked.len());
    }
    ranked.truncate(keep);
    ranked.sort_by_key(|&(r, _)| r);
    Ok(RegionSelection {
        regions: ranked.iter().map(|&(r, _)| r).collect(),
        scores: ranked.iter().map(|&(_, s)| s).collect(),
        short,
    })
}

/// Prior of `user` in `period`: counts over `regions`, normalised.
pub fn build_prior(table: &CountTable, user: &str, period: usize, regions: &[usize]) -> Result<Prior> {
    let counts: Vec<f64> = regions
        .iter()
        .map(|&r| table.count(user, period, r) as f64)
        .collect();
    if counts.iter().all(|&c| c == 0.0) {
        return Err(Error::Prior(format!(
            "user {user} has no points in the selected regions during period {period}"
        )));
    }
    Prior::from_counts(&counts)
}
