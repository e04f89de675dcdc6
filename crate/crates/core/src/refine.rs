//! Minimal-edit trajectory refinement: greedy single-edit hill climbing
//! toward a target feature set, plus an exhaustive search used to check it.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{component_matches, feature_locations, FeatureSpec};
use crate::rq::LocationTokenSeq;
use crate::stats::{extract_features, Partition, StatFeatureSet, MAX_FREQUENT};
use crate::traj::{slot_label, Loc, TrajPoint, SLOTS_PER_DAY};

pub const DEFAULT_BUDGET: usize = 10;
pub const ORACLE_MAX_POINTS: usize = 6;
pub const ORACLE_MAX_ALLOWED: usize = 5;
pub const ORACLE_MAX_DEPTH: usize = 3;

/// Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Modify,
    Add,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub index: usize,
    /// New `(slot, location)` for add and modify.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<Loc>,
}

impl EditOp {
    pub fn modify(index: usize, slot: u8, loc: Loc) -> Self {
        EditOp {
            kind: EditKind::Modify,
            index,
            slot: Some(slot),
            loc: Some(loc),
        }
    }

    pub fn add(index: usize, slot: u8, loc: Loc) -> Self {
        EditOp {
            kind: EditKind::Add,
            index,
            slot: Some(slot),
            loc: Some(loc),
        }
    }

    pub fn delete(index: usize) -> Self {
        EditOp {
            kind: EditKind::Delete,
            index,
            slot: None,
            loc: None,
        }
    }

    pub fn key(&self) -> (EditKind, usize, u8, Loc) {
        (
            self.kind,
            self.index,
            self.slot.unwrap_or(0),
            self.loc.unwrap_or_default(),
        )
    }
}

/// Where new points land and how they are labeled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EditContext {
    pub day: u32,
    pub weekday: u8,
    pub tokens: BTreeMap<Loc, LocationTokenSeq>,
}

impl EditContext {
    pub fn label(&self, loc: Loc) -> String {
        match self.tokens.get(&loc) {
            Some(t) => t.to_string(),
            None => loc.to_string(),
        }
    }

    fn point(&self, day: u32, weekday: u8, slot: u8, loc: Loc) -> TrajPoint {
        TrajPoint {
            tokens: self.tokens.get(&loc).cloned(),
            ..TrajPoint::new(day, weekday, slot, loc)
        }
    }
}

/// Position after every point at or before `(day, slot)`.
fn insert_position(points: &[TrajPoint], day: u32, slot: u8) -> usize {
    points.partition_point(|p| p.time_key() <= (day, slot))
}

fn check_slot(slot: Option<u8>, loc: Option<Loc>) -> Result<(u8, Loc)> {
    match (slot, loc) {
        (Some(s), Some(l)) if s < SLOTS_PER_DAY => Ok((s, l)),
        _ => Err(Error::Invalid("add and modify need a slot below 48 and a location".into())),
    }
}

/// Applies one edit to a time-sorted trajectory, keeping it sorted.
pub fn apply_edit(points: &mut Vec<TrajPoint>, op: &EditOp, ctx: &EditContext) -> Result<()> {
    let n = points.len();
    match op.kind {
        EditKind::Modify => {
            let (slot, loc) = check_slot(op.slot, op.loc)?;
            if op.index >= n {
                return Err(Error::Invalid(format!("modify index {} out of bounds for {n} points", op.index)));
            }
            let old = points.remove(op.index);
            let at = insert_position(points, old.day, slot);
            points.insert(at, ctx.point(old.day, old.weekday, slot, loc));
        }
        EditKind::Add => {
            let (slot, loc) = check_slot(op.slot, op.loc)?;
            if op.index != insert_position(points, ctx.day, slot) {
                return Err(Error::Invalid(format!(
                    "add index {} is not the sorted position for slot {slot}",
                    op.index
                )));
            }
            points.insert(op.index, ctx.point(ctx.day, ctx.weekday, slot, loc));
        }
        EditKind::Delete => {
            if op.index >= n {
                return Err(Error::Invalid(format!("delete index {} out of bounds for {n} points", op.index)));
            }
            points.remove(op.index);
        }
    }
    Ok(())
}

/// Replays an edit log from the baseline.
pub fn replay(baseline: &[TrajPoint], edits: &[EditOp], ctx: &EditContext) -> Result<Vec<TrajPoint>> {
    let mut pts = baseline.to_vec();
    for e in edits {
        apply_edit(&mut pts, e, ctx)?;
    }
    Ok(pts)
}

fn component_names(partition: &Partition) -> Vec<String> {
    let mut v: Vec<String> = (1..=MAX_FREQUENT).map(|i| format!("frequent location {i}")).collect();
    v.extend(partition.periods().iter().map(|p| format!("{} probability", p.name)));
    v.extend(partition.periods().iter().map(|p| format!("{} frequent locations", p.name)));
    v.push("length".into());
    v
}

/// Per-component match flags; an empty trajectory matches nothing.
fn matches(points: &[TrajPoint], target: &StatFeatureSet, partition: &Partition) -> Vec<bool> {
    match extract_features(points, partition) {
        Ok(f) => component_matches(&f, target, FeatureSpec::REFINE),
        Err(_) => vec![false; FeatureSpec::REFINE.n_components(partition.len())],
    }
}

fn mismatches(points: &[TrajPoint], target: &StatFeatureSet, partition: &Partition) -> usize {
    matches(points, target, partition).iter().filter(|m| !**m).count()
}

/// Every single edit over the allowed locations and all 48 slots.
pub fn candidate_edits(points: &[TrajPoint], allowed: &BTreeSet<Loc>, ctx: &EditContext) -> Vec<EditOp> {
    let mut out = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for slot in 0..SLOTS_PER_DAY {
            for &loc in allowed {
                if slot != p.slot || loc != p.loc() {
                    out.push(EditOp::modify(i, slot, loc));
                }
            }
        }
    }
    for slot in 0..SLOTS_PER_DAY {
        let at = insert_position(points, ctx.day, slot);
        for &loc in allowed {
            out.push(EditOp::add(at, slot, loc));
        }
    }
    out.extend((0..points.len()).map(EditOp::delete));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedEdit {
    pub op: EditOp,
    pub mismatches_after: usize,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub trajectory: Vec<TrajPoint>,
    pub edits: Vec<LoggedEdit>,
    pub iterations: usize,
    pub satisfied: bool,
    pub initial_mismatches: usize,
    pub final_mismatches: usize,
    pub n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl RefineResult {
    pub fn ops(&self) -> Vec<EditOp> {
        self.edits.iter().map(|e| e.op).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub budget: usize,
    /// 1 is plain greedy hill climbing.
    pub beam_width: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            budget: DEFAULT_BUDGET,
            beam_width: 1,
        }
    }
}

/// Locations an edit may use: those in the history, the baseline, or
/// named by the target features.
pub fn allowed_locations(history: &[TrajPoint], baseline: &[TrajPoint], target: &StatFeatureSet) -> BTreeSet<Loc> {
    history
        .iter()
        .chain(baseline)
        .map(TrajPoint::loc)
        .chain(feature_locations(target))
        .collect()
}

fn describe(op: &EditOp, before: &[TrajPoint], fixed: &[String], from: usize, to: usize, ctx: &EditContext) -> String {
    let what = match op.kind {
        EditKind::Modify => {
            let p = &before[op.index];
            format!(
                "modify point {} ({} at {}) to {} at {}",
                op.index,
                slot_label(p.slot),
                ctx.label(p.loc()),
                slot_label(op.slot.unwrap_or(0)),
                ctx.label(op.loc.unwrap_or_default())
            )
        }
        EditKind::Add => format!(
            "add a visit at {} to {}",
            slot_label(op.slot.unwrap_or(0)),
            ctx.label(op.loc.unwrap_or_default())
        ),
        EditKind::Delete => {
            let p = &before[op.index];
            format!("delete point {} ({} at {})", op.index, slot_label(p.slot), ctx.label(p.loc()))
        }
    };
    if fixed.is_empty() {
        format!("{what}; mismatched features {from} -> {to}")
    } else {
        format!("{what}; aligns {}; mismatched features {from} -> {to}", fixed.join(", "))
    }
}

struct BeamState {
    points: Vec<TrajPoint>,
    log: Vec<LoggedEdit>,
    mismatches: usize,
}

/// Greedy refinement of `baseline` toward `target`. Each iteration applies
/// the best strictly improving single edit, scored by remaining mismatches
/// and then by the edit's ordering key.
pub fn refine_loop(
    baseline: &[TrajPoint],
    target: &StatFeatureSet,
    allowed: &BTreeSet<Loc>,
    partition: &Partition,
    ctx: &EditContext,
    cfg: &RefineConfig,
) -> Result<RefineResult> {
    if cfg.budget == 0 || cfg.beam_width == 0 {
        return Err(Error::Config("budget and beam width must be at least 1".into()));
    }
    if target.period_probs.len() != partition.len() || target.period_frequent.len() != partition.len() {
        return Err(Error::DimensionMismatch {
            expected: partition.len(),
            found: target.period_probs.len(),
        });
    }
    if baseline.windows(2).any(|w| w[0].time_key() > w[1].time_key()) {
        return Err(Error::Invalid("baseline must be sorted by time".into()));
    }
    let names = component_names(partition);
    let n_features = FeatureSpec::REFINE.n_components(partition.len());
    let initial = matches(baseline, target, partition);
    let initial_mismatches = initial.iter().filter(|m| !**m).count();
    let location_mismatch = initial[..MAX_FREQUENT].iter().any(|m| !m)
        || initial[MAX_FREQUENT + partition.len()..MAX_FREQUENT + 2 * partition.len()]
            .iter()
            .any(|m| !m);
    if allowed.is_empty() && location_mismatch {
        return Err(Error::Invalid(
            "no allowed locations but location features are unsatisfied".into(),
        ));
    }

    let mut beam = vec![BeamState {
        points: baseline.to_vec(),
        log: Vec::new(),
        mismatches: initial_mismatches,
    }];
    let mut iterations = 0;
    let mut stalled = false;
    while beam[0].mismatches > 0 && iterations < cfg.budget {
        // (mismatches, parent rank, key) orders children across the beam.
        let mut children: Vec<(usize, usize, (EditKind, usize, u8, Loc), EditOp, Vec<bool>)> = Vec::new();
        for (rank, state) in beam.iter().enumerate() {
            for op in candidate_edits(&state.points, allowed, ctx) {
                let mut pts = state.points.clone();
                apply_edit(&mut pts, &op, ctx)?;
                let m = matches(&pts, target, partition);
                let k = m.iter().filter(|x| !**x).count();
                if k < state.mismatches {
                    children.push((k, rank, op.key(), op, m));
                }
            }
        }
        if children.is_empty() {
            stalled = true;
            break;
        }
        children.sort_by_key(|c| (c.0, c.1, c.2));
        let mut next: Vec<BeamState> = Vec::new();
        let mut seen: HashSet<Vec<(u32, u8, Loc)>> = HashSet::new();
        for (k, rank, _, op, m) in children {
            if next.len() == cfg.beam_width {
                break;
            }
            let parent = &beam[rank];
            let mut pts = parent.points.clone();
            apply_edit(&mut pts, &op, ctx)?;
            if !seen.insert(pts.iter().map(|p| (p.day, p.slot, p.loc())).collect()) {
                continue;
            }
            let before = matches(&parent.points, target, partition);
            let fixed: Vec<String> = before
                .iter()
                .zip(&m)
                .zip(&names)
                .filter(|((b, a), _)| !**b && **a)
                .map(|(_, n)| n.clone())
                .collect();
            let mut log = parent.log.clone();
            log.push(LoggedEdit {
                op,
                mismatches_after: k,
                justification: describe(&op, &parent.points, &fixed, parent.mismatches, k, ctx),
            });
            next.push(BeamState {
                points: pts,
                log,
                mismatches: k,
            });
        }
        beam = next;
        iterations += 1;
    }

    let best = beam.swap_remove(0);
    let satisfied = best.mismatches == 0;
    let diagnostic = if satisfied {
        None
    } else {
        let outside: Vec<String> = feature_locations(target)
            .into_iter()
            .filter(|l| !allowed.contains(l))
            .map(|l| ctx.label(l))
            .collect();
        Some(if !outside.is_empty() {
            format!("target features name locations outside the allowed set: {}", outside.join(", "))
        } else if stalled {
            format!("no single edit reduces the remaining {} mismatched features", best.mismatches)
        } else {
            format!("edit budget of {} exhausted with {} mismatched features", cfg.budget, best.mismatches)
        })
    };
    Ok(RefineResult {
        trajectory: best.points,
        iterations,
        satisfied,
        initial_mismatches,
        final_mismatches: best.mismatches,
        n_features,
        diagnostic,
        edits: best.log,
    })
}

type Canon = Vec<(u32, u8, Loc)>;

fn canon(points: &[TrajPoint]) -> Canon {
    let mut v: Canon = points.iter().map(|p| (p.day, p.slot, p.loc())).collect();
    v.sort();
    v
}

fn from_canon(c: &Canon, ctx: &EditContext) -> Vec<TrajPoint> {
    c.iter().map(|&(d, s, l)| TrajPoint::new(d, ctx.weekday, s, l)).collect()
}

/// Breadth-first search for the fewest edits reaching a full feature
/// match. Slots are limited to the partition's representatives plus the
/// slots already present, so location-only modifications stay possible.
/// Returns `None` when no sequence of at most `max_depth` edits works.
pub fn minimal_edit_oracle(
    baseline: &[TrajPoint],
    target: &StatFeatureSet,
    allowed: &BTreeSet<Loc>,
    max_depth: usize,
    partition: &Partition,
    ctx: &EditContext,
) -> Result<Option<usize>> {
    if baseline.len() > ORACLE_MAX_POINTS || allowed.len() > ORACLE_MAX_ALLOWED || max_depth > ORACLE_MAX_DEPTH {
        return Err(Error::Invalid(format!(
            "oracle bounds exceeded: at most {ORACLE_MAX_POINTS} points, {ORACLE_MAX_ALLOWED} locations, depth {ORACLE_MAX_DEPTH}"
        )));
    }
    let mut slots: BTreeSet<u8> = partition.representative_slots().into_iter().collect();
    slots.extend(baseline.iter().map(|p| p.slot));
    let goal = |c: &Canon| mismatches(&from_canon(c, ctx), target, partition) == 0;

    let start = canon(baseline);
    if goal(&start) {
        return Ok(Some(0));
    }
    let mut seen: HashSet<Canon> = HashSet::from([start.clone()]);
    let mut frontier = vec![start];
    for depth in 1..=max_depth {
        let remaining = max_depth - depth;
        let mut next = Vec::new();
        for state in &frontier {
            let mut children: Vec<Canon> = Vec::new();
            for i in 0..state.len() {
                let mut del = state.clone();
                del.remove(i);
                children.push(del);
                for &s in &slots {
                    for &l in allowed {
                        let mut m = state.clone();
                        m[i] = (state[i].0, s, l);
                        children.push(m);
                    }
                }
            }
            for &s in &slots {
                for &l in allowed {
                    let mut a = state.clone();
                    a.push((ctx.day, s, l));
                    children.push(a);
                }
            }
            for mut c in children {
                c.sort();
                // Length changes by at most one per edit.
                if c.len().abs_diff(target.length) > remaining || !seen.insert(c.clone()) {
                    continue;
                }
                if goal(&c) {
                    return Ok(Some(depth));
                }
                if remaining > 0 {
                    next.push(c);
                }
            }
        }
        frontier = next;
    }
    Ok(None)
}
