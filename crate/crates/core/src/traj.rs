//! Raw visit logs to canonical trajectory windows: grid cells, half-hour
//! slots, three-day sliding windows with length filters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_jsonl;
use crate::rq::LocationTokenSeq;

pub const SLOT_MINUTES: u32 = 30;
pub const SLOTS_PER_DAY: u8 = 48;
pub const SECONDS_PER_DAY: i64 = 86_400;
const EARTH_RADIUS_M: f64 = 6_371_008.8;

pub const WEEKDAY_NAMES: [&str; 7] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];
pub const THURSDAY: u8 = 3;
pub const FRIDAY: u8 = 4;
pub const SATURDAY: u8 = 5;

/// A grid cell; the location key used by features, metrics and rewards.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Loc {
    pub row: u32,
    pub col: u32,
}

impl Loc {
    pub fn new(row: u32, col: u32) -> Self {
        Loc { row, col }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawVisit {
    pub user_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: f64,
    pub lat: f64,
    pub lon: f64,
}

impl RawVisit {
    pub fn validate(&self) -> Result<()> {
        if !self.timestamp.is_finite() {
            return Err(Error::Invalid("timestamp is not finite".into()));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Invalid(format!(
                "coordinates ({}, {}) out of range",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// City extent and clock. The grid origin is the south-west corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityConfig {
    pub name: String,
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
    /// Fixed offset from UTC, seconds.
    #[serde(default)]
    pub tz_offset_seconds: i64,
}

impl CityConfig {
    pub fn grid(&self, cell_size_m: f64) -> Result<Grid> {
        if !(self.min_lat < self.max_lat && self.min_lon < self.max_lon) {
            return Err(Error::Config(format!("city {} has an empty extent", self.name)));
        }
        Grid::new(self.min_lat, self.min_lon, self.min_lat, cell_size_m).map(|g| Grid {
            max_lat: self.max_lat,
            max_lon: self.max_lon,
            ..g
        })
    }
}

/// Equirectangular grid anchored at `origin`. `ref_lat` fixes the
/// longitude scale, so moving the origin never rescales the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub ref_lat: f64,
    pub cell_size_m: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl Grid {
    pub fn new(origin_lat: f64, origin_lon: f64, ref_lat: f64, cell_size_m: f64) -> Result<Self> {
        if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
            return Err(Error::Config("cell size must be positive".into()));
        }
        Ok(Grid {
            origin_lat,
            origin_lon,
            ref_lat,
            cell_size_m,
            max_lat: 90.0,
            max_lon: 180.0,
        })
    }

    /// `(northing, easting)` of a point relative to the origin, meters.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let north = (lat - self.origin_lat).to_radians() * EARTH_RADIUS_M;
        let east = (lon - self.origin_lon).to_radians() * EARTH_RADIUS_M * self.ref_lat.to_radians().cos();
        (north, east)
    }

    /// Inverse of [`Grid::project`].
    pub fn unproject(&self, north: f64, east: f64) -> (f64, f64) {
        let lat = self.origin_lat + (north / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin_lon
            + (east / (EARTH_RADIUS_M * self.ref_lat.to_radians().cos())).to_degrees();
        (lat, lon)
    }

    /// Signed cell indices; no bounds check.
    pub fn cell_of(&self, lat: f64, lon: f64) -> (i64, i64) {
        let (n, e) = self.project(lat, lon);
        (
            (n / self.cell_size_m).floor() as i64,
            (e / self.cell_size_m).floor() as i64,
        )
    }
}

/// Grid cell of a point inside the city extent.
pub fn assign_grid(lat: f64, lon: f64, grid: &Grid) -> Result<Loc> {
    let inside = lat >= grid.origin_lat
        && lat <= grid.max_lat
        && lon >= grid.origin_lon
        && lon <= grid.max_lon;
    if !inside || !lat.is_finite() || !lon.is_finite() {
        return Err(Error::Invalid(format!(
            "point ({lat}, {lon}) lies outside the city bounding box"
        )));
    }
    let (row, col) = grid.cell_of(lat, lon);
    Ok(Loc::new(row.max(0) as u32, col.max(0) as u32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeBin {
    /// Local calendar day, days since 1970-01-01.
    pub day: i64,
    /// Monday = 0.
    pub weekday: u8,
    pub slot: u8,
}

pub fn weekday_of_day(day: i64) -> u8 {
    // 1970-01-01 was a Thursday.
    (day + THURSDAY as i64).rem_euclid(7) as u8
}

pub fn bin_time(timestamp: f64, tz_offset_seconds: i64) -> TimeBin {
    let local = timestamp.floor() as i64 + tz_offset_seconds;
    let day = local.div_euclid(SECONDS_PER_DAY);
    let secs = local.rem_euclid(SECONDS_PER_DAY);
    TimeBin {
        day,
        weekday: weekday_of_day(day),
        slot: (secs / (SLOT_MINUTES as i64 * 60)) as u8,
    }
}

/// `HH:MM` for the start of a slot.
pub fn slot_label(slot: u8) -> String {
    let minutes = slot as u32 * SLOT_MINUTES;
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajPoint {
    /// Day offset within the window; absent in single-day records.
    #[serde(default)]
    pub day: u32,
    pub weekday: u8,
    pub slot: u8,
    pub row: u32,
    pub col: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<LocationTokenSeq>,
}

impl TrajPoint {
    pub fn new(day: u32, weekday: u8, slot: u8, loc: Loc) -> Self {
        TrajPoint {
            day,
            weekday,
            slot,
            row: loc.row,
            col: loc.col,
            tokens: None,
        }
    }

    pub fn loc(&self) -> Loc {
        Loc::new(self.row, self.col)
    }

    pub fn time_key(&self) -> (u32, u8) {
        (self.day, self.slot)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub window_start_day: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    pub points: Vec<TrajPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.points.windows(2).all(|w| w[0].time_key() <= w[1].time_key())
    }

    pub fn key(&self) -> (String, i64) {
        (self.user_id.clone(), self.window_start_day)
    }

    /// Splits a window into the first `history_days` days and the rest, with
    /// the future's day offsets rebased to zero.
    pub fn split_days(&self, history_days: u32) -> (Trajectory, Trajectory) {
        let (hist, fut): (Vec<_>, Vec<_>) =
            self.points.iter().cloned().partition(|p| p.day < history_days);
        let future = fut
            .into_iter()
            .map(|mut p| {
                p.day -= history_days;
                p
            })
            .collect();
        (
            Trajectory {
                points: hist,
                ..self.clone()
            },
            Trajectory {
                window_start_day: self.window_start_day + history_days as i64,
                points: future,
                ..self.clone()
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub cell_size_m: f64,
    pub window_days: u32,
    pub stride_days: u32,
    pub min_points: usize,
    pub max_points: usize,
    pub dedupe: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cell_size_m: 500.0,
            window_days: 3,
            stride_days: 1,
            min_points: 5,
            max_points: 145,
            dedupe: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_days == 0 || self.stride_days == 0 {
            return Err(Error::Config("window and stride must be at least one day".into()));
        }
        if self.max_points == 0 || self.min_points > self.max_points {
            return Err(Error::Config(format!(
                "min_points {} and max_points {} are inconsistent",
                self.min_points, self.max_points
            )));
        }
        if !(self.cell_size_m > 0.0) {
            return Err(Error::Config("cell size must be positive".into()));
        }
        Ok(())
    }
}

/// One visit after binning, still in absolute days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinnedVisit {
    pub time: TimeBin,
    pub loc: Loc,
}

/// Drops a visit when it repeats the previous visit's cell in the same slot
/// of the same day.
pub fn dedupe_consecutive(visits: &[BinnedVisit]) -> Vec<BinnedVisit> {
    let mut out: Vec<BinnedVisit> = Vec::with_capacity(visits.len());
    for v in visits {
        if out
            .last()
            .is_some_and(|p| p.time.day == v.time.day && p.time.slot == v.time.slot && p.loc == v.loc)
        {
            continue;
        }
        out.push(*v);
    }
    out
}

/// Sliding windows over one user's time-ordered visits. Every window of
/// `window_days` consecutive days that overlaps the data is a candidate;
/// candidates below `min_points` are dropped and longer ones keep their
/// most recent `max_points` points.
pub fn window_trajectories(
    user_id: &str,
    visits: &[BinnedVisit],
    cfg: &PipelineConfig,
    city: Option<&str>,
) -> Vec<Trajectory> {
    let (Some(first), Some(last)) = (visits.first(), visits.last()) else {
        return Vec::new();
    };
    let span = cfg.window_days as i64;
    let mut out = Vec::new();
    let mut start = first.time.day - (span - 1);
    while start <= last.time.day {
        let end = start + span;
        let lo = visits.partition_point(|v| v.time.day < start);
        let hi = visits.partition_point(|v| v.time.day < end);
        let window = &visits[lo..hi];
        if window.len() >= cfg.min_points {
            let keep = &window[window.len().saturating_sub(cfg.max_points)..];
            out.push(Trajectory {
                user_id: user_id.to_string(),
                window_start_day: start,
                city: city.map(str::to_string),
                points: keep
                    .iter()
                    .map(|v| TrajPoint::new((v.time.day - start) as u32, v.time.weekday, v.time.slot, v.loc))
                    .collect(),
            });
        }
        start += cfg.stride_days as i64;
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessOutput {
    pub trajectories: Vec<Trajectory>,
    /// Visits dropped as invalid or outside the city, with reasons.
    pub rejected: Vec<String>,
}

/// Full pipeline: validate, grid, bin, sort, dedupe and window. Output is
/// ordered by `(user_id, window_start_day)`.
pub fn preprocess(
    visits: &[RawVisit],
    city: &CityConfig,
    cfg: &PipelineConfig,
    strict: bool,
) -> Result<PreprocessOutput> {
    cfg.validate()?;
    let grid = city.grid(cfg.cell_size_m)?;
    let mut rejected = Vec::new();
    let mut by_user: BTreeMap<&str, Vec<(f64, BinnedVisit)>> = BTreeMap::new();
    for (i, v) in visits.iter().enumerate() {
        let binned = v.validate().and_then(|_| {
            Ok(BinnedVisit {
                time: bin_time(v.timestamp, city.tz_offset_seconds),
                loc: assign_grid(v.lat, v.lon, &grid)?,
            })
        });
        match binned {
            Ok(b) => by_user.entry(&v.user_id).or_default().push((v.timestamp, b)),
            Err(e) if strict => {
                return Err(Error::Record {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
            Err(e) => rejected.push(format!("visit {}: {e}", i + 1)),
        }
    }

    let mut trajectories = Vec::new();
    for (user, mut vs) in by_user {
        vs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut binned: Vec<BinnedVisit> = vs.into_iter().map(|(_, b)| b).collect();
        if cfg.dedupe {
            binned = dedupe_consecutive(&binned);
        }
        trajectories.extend(window_trajectories(user, &binned, cfg, Some(&city.name)));
    }
    Ok(PreprocessOutput {
        trajectories,
        rejected,
    })
}

/// Reads a raw visits file. Lenient mode skips malformed lines.
pub fn load_visits(path: &Path, strict: bool) -> Result<(Vec<RawVisit>, Vec<String>)> {
    let mut out = Vec::new();
    let mut rejected = Vec::new();
    for (line, parsed) in read_jsonl::<RawVisit>(path)? {
        match parsed.map_err(|m| Error::Record { line, message: m }).and_then(|v| {
            v.validate().map_err(|e| Error::Record {
                line,
                message: e.to_string(),
            })?;
            Ok(v)
        }) {
            Ok(v) => out.push(v),
            Err(e) if strict => return Err(e),
            Err(e) => rejected.push(e.to_string()),
        }
    }
    Ok((out, rejected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn city() -> CityConfig {
        CityConfig {
            name: "test".into(),
            min_lat: 33.6,
            min_lon: -84.6,
            max_lat: 33.9,
            max_lon: -84.2,
            tz_offset_seconds: 0,
        }
    }

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.cell_size_m, 500.0);
        assert_eq!(c.window_days, 3);
        assert_eq!(c.min_points, 5);
        assert_eq!(c.max_points, 145);
        assert_eq!(SLOT_MINUTES, 30);
    }

    #[test]
    fn grid_origin_and_offsets() {
        let grid = city().grid(500.0).unwrap();
        assert_eq!(assign_grid(33.6, -84.6, &grid).unwrap(), Loc::new(0, 0));
        let (lat, lon) = grid.unproject(750.0, 250.0);
        assert_eq!(assign_grid(lat, lon, &grid).unwrap(), Loc::new(1, 0));
        let (lat, lon) = grid.unproject(1250.0, 2600.0);
        assert_eq!(assign_grid(lat, lon, &grid).unwrap(), Loc::new(2, 5));
        assert!(assign_grid(34.5, -84.5, &grid).is_err());
        assert!(assign_grid(33.7, -85.0, &grid).is_err());
    }

    #[test]
    fn time_bins() {
        assert_eq!(bin_time(0.0, 0).slot, 0);
        assert_eq!(bin_time(0.0, 0).weekday, THURSDAY);
        assert_eq!(bin_time((23 * 3600 + 59 * 60) as f64, 0).slot, 47);
        assert_eq!(bin_time((13 * 3600 + 15 * 60) as f64, 0).slot, 26);
        // 02:00 UTC is 21:00 the previous day at UTC-5.
        let b = bin_time(86_400.0 + 7200.0, -5 * 3600);
        assert_eq!((b.day, b.slot, b.weekday), (0, 42, THURSDAY));
        assert_eq!(slot_label(27), "13:30");
    }

    fn visits_on(day: i64, slots: &[u8]) -> Vec<BinnedVisit> {
        slots
            .iter()
            .enumerate()
            .map(|(i, &s)| BinnedVisit {
                time: TimeBin {
                    day,
                    weekday: weekday_of_day(day),
                    slot: s,
                },
                loc: Loc::new(i as u32, 0),
            })
            .collect()
    }

    #[test]
    fn sparse_windows_are_dropped() {
        let mut v = Vec::new();
        for d in 0..6 {
            v.extend(visits_on(d * 3, &[10, 20, 30, 40]));
        }
        let out = window_trajectories("u", &v, &PipelineConfig::default(), None);
        assert!(out.is_empty());
    }

    #[test]
    fn long_windows_keep_latest_points() {
        let mut v = Vec::new();
        for d in 0..3 {
            let slots: Vec<u8> = (0..48).collect();
            v.extend(visits_on(d, &slots));
        }
        // 144 points over three days; add 56 more on day 2 with other cells.
        let mut extra = visits_on(2, &[47; 56]);
        for (i, e) in extra.iter_mut().enumerate() {
            e.loc = Loc::new(1000 + i as u32, 1);
        }
        v.extend(extra);
        assert_eq!(v.len(), 200);
        let cfg = PipelineConfig::default();
        let out = window_trajectories("u", &v, &cfg, None);
        let full = out.iter().find(|t| t.window_start_day == 0).unwrap();
        assert_eq!(full.points.len(), 145);
        assert_eq!(full.points.last().unwrap().row, 1055);
        assert_eq!(full.points[0].slot, 55 % 48);
    }

    #[test]
    fn five_visits_on_one_day_give_three_windows() {
        let v = visits_on(10, &[1, 5, 9, 20, 30]);
        let out = window_trajectories("u", &v, &PipelineConfig::default(), None);
        let starts: Vec<i64> = out.iter().map(|t| t.window_start_day).collect();
        assert_eq!(starts, vec![8, 9, 10]);
        assert!(out.iter().all(|t| t.points.len() == 5 && t.is_sorted()));
        assert_eq!(out[0].points[0].day, 2);
    }

    #[test]
    fn dedupe_collapses_repeats() {
        let mut v = visits_on(1, &[3, 3, 4]);
        v[1].loc = v[0].loc;
        let d = dedupe_consecutive(&v);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn preprocess_orders_and_is_deterministic() {
        let c = city();
        let grid = c.grid(500.0).unwrap();
        let mut visits = Vec::new();
        for user in ["b", "a"] {
            for k in 0..6 {
                let (lat, lon) = grid.unproject(100.0 + 600.0 * k as f64, 300.0);
                visits.push(RawVisit {
                    user_id: user.into(),
                    timestamp: 86_400.0 * 5.0 + 3600.0 * k as f64,
                    lat,
                    lon,
                });
            }
        }
        visits.push(RawVisit {
            user_id: "a".into(),
            timestamp: 0.0,
            lat: 0.0,
            lon: 0.0,
        });
        let cfg = PipelineConfig::default();
        let out = preprocess(&visits, &c, &cfg, false).unwrap();
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.trajectories.len(), 6);
        assert_eq!(out.trajectories[0].user_id, "a");
        assert!(preprocess(&visits, &c, &cfg, true).is_err());
        let again = preprocess(&visits, &c, &cfg, false).unwrap();
        assert_eq!(again.trajectories, out.trajectories);
    }
}
