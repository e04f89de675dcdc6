//! Instruction-tuning corpora: location/ID pairs, understanding plus
//! prediction, understanding plus generation, and self-reflection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{render_profile_text, LocationProfile};
use crate::refine::{allowed_locations, refine_loop, EditContext, RefineConfig, RefineResult};
use crate::rq::LocationTokenSeq;
use crate::stats::{classify_scenario, extract_features, render_summary, Partition, SummaryStyle};
use crate::traj::{slot_label, Loc, TrajPoint, Trajectory, WEEKDAY_NAMES};

/// One supervised example. `sequence` carries an opaque trajectory
/// embedding for the `<sequence>` placeholder when one was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<Vec<f64>>,
}

impl InstructionRecord {
    fn new(instruction: String, input: String, output: String) -> Self {
        InstructionRecord {
            instruction,
            input,
            output,
            sequence: None,
        }
    }
}

pub const LOC2ID_PREFIX: &str =
    "Your task is to infer the corresponding Location index based on the geographic location information: ";
pub const LOC2ID_SUFFIX: &str = "\n Its Location index is :";
pub const ID2LOC_PREFIX: &str = "Your goal is to learn and remember the geographic location information represented by the Location index.\n The geographic information of Location index ";
pub const ID2LOC_SUFFIX: &str = " is :";

pub fn loc2id_prompt(profile_text: &str) -> String {
    format!("{LOC2ID_PREFIX}{profile_text}{LOC2ID_SUFFIX}")
}

pub fn id2loc_prompt(tokens: &LocationTokenSeq) -> String {
    format!("{ID2LOC_PREFIX}{tokens}{ID2LOC_SUFFIX}")
}

/// Two records per location, ordered by location id: profile to tokens,
/// then tokens to profile.
pub fn export_bidirectional_pairs(
    tokens: &BTreeMap<String, LocationTokenSeq>,
    profiles: &BTreeMap<String, LocationProfile>,
) -> Result<Vec<InstructionRecord>> {
    let ids: BTreeSet<&String> = tokens.keys().chain(profiles.keys()).collect();
    let mut out = Vec::with_capacity(2 * ids.len());
    for id in ids {
        let seq = tokens.get(id).ok_or_else(|| Error::Missing {
            what: "location tokens",
            key: id.clone(),
        })?;
        let profile = profiles.get(id).ok_or_else(|| Error::Missing {
            what: "location profile",
            key: id.clone(),
        })?;
        let text = render_profile_text(profile);
        out.push(InstructionRecord::new(loc2id_prompt(&text), String::new(), seq.to_string()));
        out.push(InstructionRecord::new(id2loc_prompt(seq), String::new(), text));
    }
    Ok(out)
}

/// Token string when the point carries one, else the cell.
pub fn point_label(p: &TrajPoint) -> String {
    match &p.tokens {
        Some(t) => t.to_string(),
        None => p.loc().to_string(),
    }
}

/// Labels for every location seen in the given points.
pub fn label_map<'a>(points: impl IntoIterator<Item = &'a TrajPoint>) -> BTreeMap<Loc, String> {
    let mut m = BTreeMap::new();
    for p in points {
        let entry = m.entry(p.loc()).or_insert_with(|| point_label(p));
        if p.tokens.is_some() {
            *entry = point_label(p);
        }
    }
    m
}

fn labeler(map: &BTreeMap<Loc, String>) -> impl Fn(Loc) -> String + '_ {
    move |l| map.get(&l).cloned().unwrap_or_else(|| l.to_string())
}

/// `At 08:30, visited location X` per point, one per line.
pub fn render_points(points: &[TrajPoint]) -> String {
    points
        .iter()
        .map(|p| format!("At {}, visited location {}", slot_label(p.slot), point_label(p)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One line per day: `Thursday: At 08:30, visited location X; ...`.
pub fn render_days(points: &[TrajPoint]) -> String {
    let mut days: BTreeMap<u32, Vec<&TrajPoint>> = BTreeMap::new();
    for p in points {
        days.entry(p.day).or_default().push(p);
    }
    days.values()
        .map(|ps| {
            let visits: Vec<String> = ps
                .iter()
                .map(|p| format!("At {}, visited location {}", slot_label(p.slot), point_label(p)))
                .collect();
            format!("{}: {}", WEEKDAY_NAMES[ps[0].weekday as usize % 7], visits.join("; "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn sample_id(t: &Trajectory) -> String {
    format!("{}@{}", t.user_id, t.window_start_day)
}

pub const PREDICTION_TEMPLATE: &str = "This is a user trajectory prediction task. Your goal is to predict the next location index using both an authoritative trajectory text and a possibly noisy sequence embedding.
Provided:
- Ground-truth trajectory text (always correct): <traj_data>
- Sequence embedding of the trajectory (auxiliary signal): <sequence>
Conflict/irrelevance handling:
- If any embedding-based interpretation contradicts the trajectory text or reflects a trajectory largely unrelated to the text, disregard the embedding interpretation and rely on the text.
- Only incorporate embedding cues that align with the text.
Tasks:
1. Based on the trajectory text and your analysis of the sequence embedding (ignore it if inconsistent with the text), produce the user's spatio-temporal trajectory features, filling the template exactly:
Summary of the spatio-temporal trajectory features:
- Most frequently visited locations (visited more than once): [Output at most the first three (if any)]
- Probability of visits by time period (rounded to 5%): [list all periods with probability values, even if 0%]
2. Using these features and the inputs(if sequence embedding appears inconsistent with the textual trajectory, ignore it), predict the user's next location index.
Output only the completed feature block and the final prediction. Do not include explanations.";

pub const GENERATION_TEMPLATE: &str = "The user's original trajectory data contains weekday, timestamp, and location index information. Below is the encoded vector of the user's trajectory sequence for the past two days:
<sequence>
In addition, there also has a special text format description of the user's historical trajectory as supplementary information: <history_text>.
You need to first carefully interpret both the encoded trajectory sequence (embedding) and the historical textual trajectory description, and then complete the following two tasks:
Step 1: Generate 'Summary of the trajectory preferences for this user' strictly in the following format:
Summary of the trajectory preferences for this user:
- Most frequently visited locations (visited more than once): [Output at most the first three (if any)]
- Probability of visits by time period (rounded to 5%): [list all periods with probability values, even if 0%]
- Frequently visited locations during each time period: [list per period; if none, explicitly say 'No location was visited more than once'].
Step 2: Based on both the summary and the encoded vector together with the historical textual trajectory description, generate the user's trajectory activity for the next day. Each data point in the generated trajectory should be in the format: At [time], visited location [location index].";

pub const REASONING_TEMPLATE: &str = "Please answer the following questions step by step. You need to think and reason before answering, outputting your reasoning process between <think> and </think>, and providing your final answer between <answer> and </answer>.
Input: Historical trajectory data, initial generated trajectory, spatiotemporal constraints.
Task: Modify the initial trajectory data based on the historical data and the spatiotemporal constraints of the scene. Ensure that the modified trajectory conforms to the given statistical spatiotemporal characteristics and uses the minimum modification step size.";

pub const REFLECTION_TEMPLATE: &str = "You are an intelligent assistant skilled at asking questions and thinking. Please solve the following problem step by step. First, you should think through the reasoning process and then provide the answer to the user. The reasoning process and answer are contained in the <think> </think> and <answer> </answer> tags, respectively, i.e., <think>reasoning process here </think><answer>answer here </answer>.
You need to complete the following trajectory modification task:
Input:
Completely known input:
1. Given two days of historical behavior data
2. Previously generated user trajectory data for the next day
3. Statistical spatiotemporal features of historical behavior data
4. Statistical spatiotemporal features of real data for the next day
5. Given Modification Steps: [constraint], and then K trajectory modifications (the specific value of K is determined by your own analysis).
Task Requirements: Based on fully known inputs, modify and improve previously generated trajectory data for the next day, using the given modification steps, and ensure that the modified trajectory data is maximally consistent with the Statistical spatiotemporal features of real data for the next day. The analytical support should only be derived from fully known inputs.The final output should include a summary of the modification steps and the corresponding reasons, as well as the final user trajectory for the next day after the modification steps. Be careful not to analyze <a_x><b_x><b_x><d_x> separately. <a_x><b_x><b_x><d_x> together form a whole to describe a specific location. Do not add or generate new <a_x><b_x><b_x><d_x> when modifying. When modifying a previous future trajectory, only locations that have appeared in history and previously generated future trajectories, as well as locations that have appeared in the spatiotemporal features corresponding to the given future day's real trajectory data, can be used. For the time modification, you can generate timestamps that are not in the historical sequence or previously generated future tracks.Note that deleting a track, adding a track, or modifying a track (either location, time, or both) is considered a single operation. Please complete the reasoning analysis based on this,using as few modification steps as possible.
Specific input data is as follows:
Fully known input:
1. Given historical behavior data: [data1]
2. Previously generated user trajectory data for the next day: [data2]
3. Statistical spatiotemporal features of historical behavior data: [data3]
4. Statistical spatiotemporal features of real data for the next day: [data4]";

/// Opaque sequence embeddings keyed by sample id.
pub type SequenceVectors = BTreeMap<String, Vec<f64>>;

/// History is every point but the last; the answer is the last location.
pub fn export_prediction(
    trajectories: &[Trajectory],
    partition: &Partition,
    sequences: &SequenceVectors,
) -> Result<Vec<InstructionRecord>> {
    let mut out = Vec::new();
    for t in trajectories {
        let Some((last, history)) = t.points.split_last() else {
            continue;
        };
        if history.is_empty() {
            continue;
        }
        let labels = label_map(&t.points);
        let f = extract_features(history, partition)?;
        let summary = render_summary(&f, partition, SummaryStyle::Prediction, &labeler(&labels));
        let instruction = PREDICTION_TEMPLATE.replace("<traj_data>", &render_days(history));
        let mut rec = InstructionRecord::new(
            instruction,
            String::new(),
            format!("{summary}\nPrediction: {}", point_label(last)),
        );
        rec.sequence = sequences.get(&sample_id(t)).cloned();
        out.push(rec);
    }
    Ok(out)
}

/// Windows with a non-empty two-day history and third day.
pub fn history_future_pairs(trajectories: &[Trajectory]) -> Vec<(&Trajectory, Trajectory, Trajectory)> {
    trajectories
        .iter()
        .filter_map(|t| {
            let (h, f) = t.split_days(2);
            (!h.is_empty() && !f.is_empty()).then_some((t, h, f))
        })
        .collect()
}

pub fn export_generation(
    trajectories: &[Trajectory],
    partition: &Partition,
    sequences: &SequenceVectors,
) -> Result<Vec<InstructionRecord>> {
    let mut out = Vec::new();
    for (t, history, future) in history_future_pairs(trajectories) {
        let labels = label_map(&t.points);
        let f = extract_features(&history.points, partition)?;
        let summary = render_summary(&f, partition, SummaryStyle::Preferences, &labeler(&labels));
        let instruction = GENERATION_TEMPLATE.replace("<history_text>", &render_days(&history.points));
        let mut rec = InstructionRecord::new(
            instruction,
            String::new(),
            format!("{summary}\n{}", render_points(&future.points)),
        );
        rec.sequence = sequences.get(&sample_id(t)).cloned();
        out.push(rec);
    }
    Ok(out)
}

/// Stand-in generation when none is supplied: the last history day
/// replayed on the future day.
pub fn repeat_last_day(history: &Trajectory, future: &Trajectory) -> Vec<TrajPoint> {
    let Some(last_day) = history.points.iter().map(|p| p.day).max() else {
        return Vec::new();
    };
    let (day, weekday) = future.points.first().map(|p| (p.day, p.weekday)).unwrap_or((0, 0));
    history
        .points
        .iter()
        .filter(|p| p.day == last_day)
        .map(|p| TrajPoint {
            day,
            weekday,
            ..p.clone()
        })
        .collect()
}

fn think_text(result: &RefineResult) -> String {
    if result.edits.is_empty() && result.satisfied {
        return "No modification is needed: the trajectory already matches the features of the next day.".into();
    }
    let mut lines: Vec<String> = result
        .edits
        .iter()
        .enumerate()
        .map(|(i, e)| format!("Step {}: {}.", i + 1, e.justification))
        .collect();
    if let Some(d) = &result.diagnostic {
        lines.push(format!("Remaining issue: {d}."));
    }
    lines.join("\n")
}

/// Self-reflection example: the refiner's edit log as reasoning and the
/// refined day as the answer. `baseline` is the generation to repair.
pub fn reflection_record(
    history: &Trajectory,
    future: &Trajectory,
    baseline: &[TrajPoint],
    partition: &Partition,
    cfg: &RefineConfig,
) -> Result<(InstructionRecord, RefineResult)> {
    let all: Vec<&TrajPoint> = history.points.iter().chain(&future.points).chain(baseline).collect();
    let labels = label_map(all.iter().copied());
    let label = labeler(&labels);
    let hist_f = extract_features(&history.points, partition)?;
    let target = extract_features(&future.points, partition)?;
    let allowed = allowed_locations(&history.points, baseline, &target);
    let (day, weekday) = future.points.first().map(|p| (p.day, p.weekday)).unwrap_or((0, 0));
    let tokens = all
        .iter()
        .filter_map(|p| p.tokens.clone().map(|t| (p.loc(), t)))
        .collect();
    let ctx = EditContext { day, weekday, tokens };
    let result = refine_loop(baseline, &target, &allowed, partition, &ctx, cfg)?;

    let scenarios = classify_scenario(history, future)?;
    let constraint = scenarios.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ");
    let input = REFLECTION_TEMPLATE
        .replace("[constraint]", &constraint)
        .replace("[data1]", &render_days(&history.points))
        .replace("[data2]", &render_points(baseline))
        .replace("[data3]", &render_summary(&hist_f, partition, SummaryStyle::Features, &label))
        .replace("[data4]", &render_summary(&target, partition, SummaryStyle::Features, &label));
    let output = format!(
        "<think>{}</think><answer>{}</answer>",
        think_text(&result),
        render_points(&result.trajectory)
    );
    Ok((InstructionRecord::new(REASONING_TEMPLATE.into(), input, output), result))
}

/// Reflection corpus. Baselines are looked up by sample id; windows without
/// one use [`repeat_last_day`].
pub fn export_reflection(
    trajectories: &[Trajectory],
    baselines: &BTreeMap<String, Vec<TrajPoint>>,
    partition: &Partition,
    cfg: &RefineConfig,
) -> Result<Vec<InstructionRecord>> {
    let mut out = Vec::new();
    for (t, history, future) in history_future_pairs(trajectories) {
        let baseline = match baselines.get(&sample_id(t)) {
            Some(b) => b.clone(),
            None => repeat_last_day(&history, &future),
        };
        out.push(reflection_record(&history, &future, &baseline, partition, cfg)?.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{FRIDAY, SATURDAY, THURSDAY};

    fn profile(id: &str) -> LocationProfile {
        LocationProfile::new(id, 33.65, -84.40)
    }

    #[test]
    fn one_location_two_records() {
        let tokens: BTreeMap<String, LocationTokenSeq> = [("x".to_string(), LocationTokenSeq(vec![1, 2, 3, 4]))].into();
        let profiles: BTreeMap<String, LocationProfile> = [("x".to_string(), profile("x"))].into();
        let recs = export_bidirectional_pairs(&tokens, &profiles).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].instruction.contains("Its Location index is :"));
        assert!(recs[0].instruction.ends_with("\n Its Location index is :"));
        assert_eq!(recs[0].output, "<a_1><b_2><c_3><d_4>");
        assert!(recs[1].instruction.contains("Location index <a_1><b_2><c_3><d_4> is :"));
        assert_eq!(recs[1].output, render_profile_text(&profile("x")));
        let line = serde_json::to_string(&recs[0]).unwrap();
        let back: InstructionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), line);

        let missing: BTreeMap<String, LocationProfile> = BTreeMap::new();
        assert!(export_bidirectional_pairs(&tokens, &missing).is_err());
    }

    fn window() -> Trajectory {
        let mut points = Vec::new();
        for (day, wd) in [(0, THURSDAY), (1, FRIDAY), (2, SATURDAY)] {
            for (slot, loc) in [(16, 1), (20, 2), (36, 1)] {
                let mut p = TrajPoint::new(day, wd, slot, Loc::new(loc, 0));
                p.tokens = Some(LocationTokenSeq(vec![loc, 0]));
                points.push(p);
            }
        }
        points[8].row = 3;
        points[8].tokens = Some(LocationTokenSeq(vec![3, 0]));
        Trajectory {
            user_id: "u".into(),
            window_start_day: 10,
            city: None,
            points,
        }
    }

    #[test]
    fn prediction_and_generation_templates() {
        let p = Partition::default();
        let seqs: SequenceVectors = [("u@10".to_string(), vec![0.5, 0.25])].into();
        let pred = export_prediction(&[window()], &p, &seqs).unwrap();
        assert_eq!(pred.len(), 1);
        assert!(pred[0].instruction.contains("Thursday: At 08:00, visited location <a_1><b_0>"));
        assert!(pred[0].output.starts_with("Summary of the spatio-temporal trajectory features:"));
        assert!(pred[0].output.ends_with("Prediction: <a_3><b_0>"));
        assert_eq!(pred[0].sequence, Some(vec![0.5, 0.25]));

        let gen = export_generation(&[window()], &p, &seqs).unwrap();
        assert_eq!(gen.len(), 1);
        assert!(gen[0].output.starts_with("Summary of the trajectory preferences for this user:"));
        assert!(gen[0].output.contains("night: No location was visited more than once"));
        assert!(gen[0].output.ends_with("At 18:00, visited location <a_3><b_0>"));
    }

    #[test]
    fn reflection_record_shape() {
        let p = Partition::default();
        // The baseline repeats Friday, which visits L1 twice; the fix needs
        // L3, allowed because Thursday saw it.
        let mut w = window();
        w.points[1].row = 3;
        w.points[1].tokens = Some(LocationTokenSeq(vec![3, 0]));
        let recs = export_reflection(&[w], &BTreeMap::new(), &p, &RefineConfig::default()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert!(r.instruction.contains("<think> and </think>"));
        assert!(r.input.contains("Given Modification Steps: weekend_user,"));
        assert!(r.input.contains("Summary of the spatio-temporal trajectory features:"));
        assert!(r.output.starts_with("<think>Step 1: modify point 0 (08:00 at <a_1><b_0>) to 06:00 at <a_3><b_0>"));
        assert!(r.output.ends_with("At 18:00, visited location <a_1><b_0></answer>"));
    }
}
