use std::collections::BTreeMap;

use mobility_core::export::{history_future_pairs, reflection_record, repeat_last_day, sample_id};
use mobility_core::metrics::{evaluate_generation, BleuMode, Pooling};
use mobility_core::refine::LoggedEdit;
use mobility_core::reward::{group_advantages, reward as score, RewardRecord};
use mobility_core::traj::{TrajPoint, Trajectory};
use serde::{Deserialize, Serialize};

use super::{load_trajectories, read_records, BaselineRecord};
use crate::config::RunConfig;
use crate::manifest::Run;
use crate::{BleuModeArg, EvaluateArgs, GlobalArgs, PoolingArg, RefineArgs, RewardArgs};

pub fn evaluate(g: &GlobalArgs, mut cfg: RunConfig, a: &EvaluateArgs) -> anyhow::Result<()> {
    let e = &mut cfg.evaluate;
    if let Some(p) = a.pooling {
        e.pooling = match p {
            PoolingArg::Pooled => Pooling::Pooled,
            PoolingArg::PerUser => Pooling::PerUser,
        };
    }
    if let Some(m) = a.bleu_mode {
        e.bleu_mode = match m {
            BleuModeArg::Sentence => BleuMode::Sentence,
            BleuModeArg::Corpus => BleuMode::Corpus,
        };
    }
    if a.smoothing_epsilon.is_some() {
        e.smoothing_epsilon = a.smoothing_epsilon;
    }
    if let Some(v) = a.max_n {
        e.max_n = v;
    }
    if let Some(v) = a.log_base {
        e.log_base = v;
    }

    let mut run = Run::new("evaluate", &g.out_dir)?;
    let generated = load_trajectories(&mut run, &a.generated)?;
    let truth = load_trajectories(&mut run, &a.truth)?;
    let (report, plot) = evaluate_generation(&generated, &truth, &cfg.evaluate.options())?;
    run.write_json("eval_report.json", &report)?;
    run.write_json("plot_data.json", &plot)?;
    for (name, m) in [("time", &report.time), ("location", &report.location)] {
        println!("{name:<8} bleu {:.4}  tvd {:.4}  jsd {:.4}", m.bleu, m.tvd, m.jsd);
    }
    println!("{} pairs", report.n_pairs);
    run.finish(&cfg)?;
    Ok(())
}

pub fn reward(g: &GlobalArgs, cfg: RunConfig, a: &RewardArgs) -> anyhow::Result<()> {
    let partition = cfg.partition();
    let mut run = Run::new("reward", &g.out_dir)?;
    let generated = load_trajectories(&mut run, &a.generated)?;
    let truth: BTreeMap<(String, i64), Trajectory> =
        load_trajectories(&mut run, &a.truth)?.into_iter().map(|t| (t.key(), t)).collect();

    let mut groups: BTreeMap<(String, i64), Vec<&Trajectory>> = BTreeMap::new();
    for t in &generated {
        groups.entry(t.key()).or_default().push(t);
    }
    let mut records = Vec::with_capacity(generated.len());
    for (key, members) in &groups {
        let target = truth.get(key).ok_or_else(|| mobility_core::Error::Missing {
            what: "ground-truth trajectory",
            key: format!("{}@{}", key.0, key.1),
        })?;
        let scores = members
            .iter()
            .map(|m| score(&m.points, &target.points, &partition))
            .collect::<Result<Vec<_>, _>>()?;
        let advantages = if scores.len() >= 2 {
            let totals: Vec<f64> = scores.iter().map(|s| s.total).collect();
            group_advantages(&totals)?.into_iter().map(Some).collect()
        } else {
            vec![None; scores.len()]
        };
        for (i, (s, adv)) in scores.iter().zip(advantages).enumerate() {
            records.push(RewardRecord {
                sample_id: format!("{}@{}#{i}", key.0, key.1),
                matched_features: s.matched_features,
                n_features: s.n_features,
                r_distribution: s.r_distribution,
                r_length: s.r_length,
                total: s.total,
                advantages: adv,
            });
        }
    }
    run.write_jsonl("rewards.jsonl", &records)?;
    let mean = records.iter().map(|r| r.total).sum::<f64>() / records.len().max(1) as f64;
    println!("{} samples in {} groups, mean reward {mean:.4}", records.len(), groups.len());
    run.finish(&cfg)?;
    Ok(())
}

/// One line of `edit_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditLogRecord {
    pub sample_id: String,
    pub satisfied: bool,
    pub initial_mismatches: usize,
    pub final_mismatches: usize,
    pub n_features: usize,
    pub baseline: Vec<TrajPoint>,
    pub edits: Vec<LoggedEdit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

pub fn refine(g: &GlobalArgs, mut cfg: RunConfig, a: &RefineArgs) -> anyhow::Result<()> {
    if let Some(v) = a.budget {
        cfg.refine.budget = v;
    }
    if let Some(v) = a.beam_width {
        cfg.refine.beam_width = v;
    }
    let partition = cfg.partition();
    let mut run = Run::new("refine", &g.out_dir)?;
    let trajs = load_trajectories(&mut run, &a.trajectories)?;
    let baselines: BTreeMap<String, Vec<TrajPoint>> = match &a.baselines {
        Some(p) => read_records::<BaselineRecord>(&mut run, "baselines", p)?
            .into_iter()
            .map(|b| (b.sample_id, b.points))
            .collect(),
        None => BTreeMap::new(),
    };

    let mut refined = Vec::new();
    let mut log = Vec::new();
    for (t, history, future) in history_future_pairs(&trajs) {
        let id = sample_id(t);
        let baseline = baselines
            .get(&id)
            .cloned()
            .unwrap_or_else(|| repeat_last_day(&history, &future));
        let (_, result) = reflection_record(&history, &future, &baseline, &partition, &cfg.refine)?;
        refined.push(Trajectory {
            points: result.trajectory.clone(),
            ..future.clone()
        });
        log.push(EditLogRecord {
            sample_id: id,
            satisfied: result.satisfied,
            initial_mismatches: result.initial_mismatches,
            final_mismatches: result.final_mismatches,
            n_features: result.n_features,
            baseline,
            edits: result.edits,
            diagnostic: result.diagnostic,
        });
    }
    run.write_jsonl("refined.jsonl", &refined)?;
    run.write_jsonl("edit_log.jsonl", &log)?;
    let satisfied = log.iter().filter(|l| l.satisfied).count();
    let edits: usize = log.iter().map(|l| l.edits.len()).sum();
    println!("{} trajectories refined, {satisfied} satisfied, {edits} edits", log.len());
    run.finish(&cfg)?;
    Ok(())
}
