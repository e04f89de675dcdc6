//! Trajectory feature sets, summary rendering and scenario cohorts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{Loc, TrajPoint, Trajectory, FRIDAY, SATURDAY, SLOTS_PER_DAY, THURSDAY};

pub const MAX_FREQUENT: usize = 3;
pub const NO_REPEAT_SENTENCE: &str = "No location was visited more than once";
pub const LATE_NIGHT_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimePeriod {
    pub name: String,
    /// Half-open slot ranges `[start, end)`.
    pub ranges: Vec<(u8, u8)>,
}

impl TimePeriod {
    pub fn contains(&self, slot: u8) -> bool {
        self.ranges.iter().any(|&(s, e)| slot >= s && slot < e)
    }

    pub fn label(&self) -> String {
        // A range ending at midnight joins one starting there.
        let mut ranges = self.ranges.clone();
        if let (Some(i), Some(j)) = (
            ranges.iter().position(|r| r.1 == SLOTS_PER_DAY),
            ranges.iter().position(|r| r.0 == 0),
        ) {
            if i != j {
                let end = ranges[j].1;
                ranges[i].1 = end;
                ranges.remove(j);
            }
        }
        let spans: Vec<String> = ranges
            .iter()
            .map(|&(s, e)| {
                format!(
                    "{}-{}",
                    crate::traj::slot_label(s),
                    crate::traj::slot_label(e % SLOTS_PER_DAY)
                )
            })
            .collect();
        format!("{} ({})", self.name, spans.join(", "))
    }
}

/// A partition of the 48 daily slots into named periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TimePeriod>", into = "Vec<TimePeriod>")]
pub struct Partition {
    periods: Vec<TimePeriod>,
    lookup: [u8; SLOTS_PER_DAY as usize],
}

impl Partition {
    pub fn new(periods: Vec<TimePeriod>) -> Result<Self> {
        if periods.is_empty() || periods.len() > u8::MAX as usize {
            return Err(Error::Config("a partition needs 1 to 255 periods".into()));
        }
        let mut lookup = [u8::MAX; SLOTS_PER_DAY as usize];
        for (i, p) in periods.iter().enumerate() {
            for &(s, e) in &p.ranges {
                if s >= e || e > SLOTS_PER_DAY {
                    return Err(Error::Config(format!(
                        "period {} has an invalid range [{s}, {e})",
                        p.name
                    )));
                }
                for slot in s..e {
                    if lookup[slot as usize] != u8::MAX {
                        return Err(Error::Config(format!("slot {slot} belongs to two periods")));
                    }
                    lookup[slot as usize] = i as u8;
                }
            }
        }
        if let Some(slot) = lookup.iter().position(|&x| x == u8::MAX) {
            return Err(Error::Config(format!("slot {slot} is not covered by any period")));
        }
        Ok(Partition { periods, lookup })
    }

    pub fn periods(&self) -> &[TimePeriod] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn period_of(&self, slot: u8) -> usize {
        self.lookup[slot as usize] as usize
    }

    /// First and last slot of every contiguous range, sorted. A small slot
    /// alphabet that still lets a point sit before, at or after others in
    /// the same period.
    pub fn representative_slots(&self) -> Vec<u8> {
        let mut out: BTreeSet<u8> = BTreeSet::new();
        for p in &self.periods {
            for &(s, e) in &p.ranges {
                out.insert(s);
                out.insert(e - 1);
            }
        }
        out.into_iter().collect()
    }
}

impl Default for Partition {
    fn default() -> Self {
        let p = |name: &str, ranges: &[(u8, u8)]| TimePeriod {
            name: name.into(),
            ranges: ranges.to_vec(),
        };
        Partition::new(vec![
            p("night", &[(44, 48), (0, 12)]),
            p("morning", &[(12, 24)]),
            p("afternoon", &[(24, 36)]),
            p("evening", &[(36, 44)]),
        ])
        .expect("default partition is valid")
    }
}

impl TryFrom<Vec<TimePeriod>> for Partition {
    type Error = Error;
    fn try_from(v: Vec<TimePeriod>) -> Result<Self> {
        Partition::new(v)
    }
}

impl From<Partition> for Vec<TimePeriod> {
    fn from(p: Partition) -> Self {
        p.periods
    }
}

/// Night as 22:00 to 06:00, fixed by the cohort definition.
pub fn is_late_night_slot(slot: u8) -> bool {
    !(12..44).contains(&slot)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatFeatureSet {
    pub frequent_locations: Vec<Loc>,
    /// Percent, a multiple of 5, one entry per period in partition order.
    pub period_probs: Vec<u8>,
    pub period_frequent: Vec<Vec<Loc>>,
    pub length: usize,
}

/// Raw probability expressed as a count ratio, rounded half-up to 5%.
/// Integer arithmetic, so 1/40 rounds up exactly.
pub fn round_to_5pct(count: usize, total: usize) -> u8 {
    debug_assert!(total > 0 && count <= total);
    let units = (40 * count + total) / (2 * total);
    (units * 5) as u8
}

struct Tally {
    count: usize,
    first: (u32, u8),
}

/// Locations seen more than once, by count desc, first visit asc, cell asc.
fn ranked(points: &[&TrajPoint], only_repeats: bool) -> Vec<Loc> {
    let mut tally: BTreeMap<Loc, Tally> = BTreeMap::new();
    for p in points {
        let t = tally.entry(p.loc()).or_insert(Tally {
            count: 0,
            first: p.time_key(),
        });
        t.count += 1;
        t.first = t.first.min(p.time_key());
    }
    let mut v: Vec<(Loc, Tally)> = tally
        .into_iter()
        .filter(|(_, t)| !only_repeats || t.count > 1)
        .collect();
    v.sort_by(|a, b| {
        b.1.count
            .cmp(&a.1.count)
            .then(a.1.first.cmp(&b.1.first))
            .then(a.0.cmp(&b.0))
    });
    v.into_iter().map(|(l, _)| l).collect()
}

/// Top `n` locations by raw count with the same tie rules.
pub fn top_locations(points: &[TrajPoint], n: usize) -> Vec<Loc> {
    let refs: Vec<&TrajPoint> = points.iter().collect();
    let mut v = ranked(&refs, false);
    v.truncate(n);
    v
}

pub fn extract_features(points: &[TrajPoint], partition: &Partition) -> Result<StatFeatureSet> {
    if points.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let all: Vec<&TrajPoint> = points.iter().collect();
    let mut frequent = ranked(&all, true);
    frequent.truncate(MAX_FREQUENT);

    let mut by_period: Vec<Vec<&TrajPoint>> = vec![Vec::new(); partition.len()];
    for p in points {
        by_period[partition.period_of(p.slot)].push(p);
    }
    let period_probs = by_period
        .iter()
        .map(|v| round_to_5pct(v.len(), points.len()))
        .collect();
    let period_frequent = by_period.iter().map(|v| ranked(v, true)).collect();
    Ok(StatFeatureSet {
        frequent_locations: frequent,
        period_probs,
        period_frequent,
        length: points.len(),
    })
}

/// Unrounded per-period probabilities.
pub fn raw_period_probs(points: &[TrajPoint], partition: &Partition) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut counts = vec![0usize; partition.len()];
    for p in points {
        counts[partition.period_of(p.slot)] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / points.len() as f64)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryStyle {
    /// Header for trajectory features, all three lines.
    Features,
    /// Header for trajectory features, without the per-period lists.
    Prediction,
    /// Header for user preferences, all three lines.
    Preferences,
}

pub const FEATURES_HEADER: &str = "Summary of the spatio-temporal trajectory features:";
pub const PREFERENCES_HEADER: &str = "Summary of the trajectory preferences for this user:";

pub fn render_summary(
    f: &StatFeatureSet,
    partition: &Partition,
    style: SummaryStyle,
    label: &dyn Fn(Loc) -> String,
) -> String {
    let list = |locs: &[Loc]| {
        if locs.is_empty() {
            NO_REPEAT_SENTENCE.to_string()
        } else {
            locs.iter().map(|&l| label(l)).collect::<Vec<_>>().join(", ")
        }
    };
    let header = match style {
        SummaryStyle::Preferences => PREFERENCES_HEADER,
        _ => FEATURES_HEADER,
    };
    let probs: Vec<String> = partition
        .periods()
        .iter()
        .zip(&f.period_probs)
        .map(|(p, pct)| format!("{}: {}%", p.label(), pct))
        .collect();
    let mut out = format!(
        "{header}\n- Most frequently visited locations (visited more than once): {}\n- Probability of visits by time period (rounded to 5%): {}",
        list(&f.frequent_locations),
        probs.join("; ")
    );
    if style != SummaryStyle::Prediction {
        let per: Vec<String> = partition
            .periods()
            .iter()
            .zip(&f.period_frequent)
            .map(|(p, locs)| format!("{}: {}", p.name, list(locs)))
            .collect();
        out.push_str("\n- Frequently visited locations during each time period: ");
        out.push_str(&per.join("; "));
    }
    out
}

/// Feature export record; the same encoding is embedded in other exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub sample_id: String,
    pub length: usize,
    pub frequent_locations: Vec<Loc>,
    pub periods: Vec<PeriodFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodFeature {
    pub period: String,
    pub probability_pct: u8,
    pub frequent: Vec<Loc>,
}

impl FeatureRecord {
    pub fn new(sample_id: String, f: &StatFeatureSet, partition: &Partition) -> Self {
        FeatureRecord {
            sample_id,
            length: f.length,
            frequent_locations: f.frequent_locations.clone(),
            periods: partition
                .periods()
                .iter()
                .zip(f.period_probs.iter().zip(&f.period_frequent))
                .map(|(p, (&pct, fr))| PeriodFeature {
                    period: p.name.clone(),
                    probability_pct: pct,
                    frequent: fr.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioLabel {
    LateNightCommuter,
    TempPlanNew,
    TempPlanCancelled,
    WeekendUser,
    None,
}

impl ScenarioLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioLabel::LateNightCommuter => "late_night_commuter",
            ScenarioLabel::TempPlanNew => "temp_plan_new",
            ScenarioLabel::TempPlanCancelled => "temp_plan_cancelled",
            ScenarioLabel::WeekendUser => "weekend_user",
            ScenarioLabel::None => "none",
        }
    }
}

fn distinct_days(t: &Trajectory) -> BTreeSet<u32> {
    t.points.iter().map(|p| p.day).collect()
}

/// Cohort labels for a two-day history and the following day.
pub fn classify_scenario(history: &Trajectory, future: &Trajectory) -> Result<BTreeSet<ScenarioLabel>> {
    if history.is_empty() || future.is_empty() {
        return Err(Error::Invalid("scenario windows must be non-empty".into()));
    }
    if distinct_days(history).len() > 2 || distinct_days(future).len() != 1 {
        return Err(Error::Invalid(
            "scenario windows need at most two history days and exactly one future day".into(),
        ));
    }
    let mut labels = BTreeSet::new();

    let night = future.points.iter().filter(|p| is_late_night_slot(p.slot)).count();
    if night as f64 / future.len() as f64 > LATE_NIGHT_THRESHOLD {
        labels.insert(ScenarioLabel::LateNightCommuter);
    }

    let top: BTreeSet<Loc> = top_locations(&history.points, MAX_FREQUENT).into_iter().collect();
    let future_locs: BTreeSet<Loc> = future.points.iter().map(TrajPoint::loc).collect();
    if future_locs.iter().any(|l| !top.contains(l)) {
        labels.insert(ScenarioLabel::TempPlanNew);
    }
    if top.iter().any(|l| !future_locs.contains(l)) {
        labels.insert(ScenarioLabel::TempPlanCancelled);
    }

    let hist_days: BTreeSet<u8> = history.points.iter().map(|p| p.weekday).collect();
    let thu_fri: BTreeSet<u8> = [THURSDAY, FRIDAY].into();
    if hist_days == thu_fri && future.points.iter().all(|p| p.weekday == SATURDAY) {
        labels.insert(ScenarioLabel::WeekendUser);
    }

    if labels.is_empty() {
        labels.insert(ScenarioLabel::None);
    }
    Ok(labels)
}
