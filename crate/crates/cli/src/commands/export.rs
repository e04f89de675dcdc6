use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mobility_core::export::{
    export_bidirectional_pairs, export_generation, export_prediction, export_reflection, SequenceVectors,
};
use mobility_core::traj::TrajPoint;

use super::{load_profile_map, load_trajectories, read_records, BaselineRecord, LocationRecord, SequenceRecord};
use crate::config::RunConfig;
use crate::manifest::Run;
use crate::{ExportArgs, ExportKind, GlobalArgs, UsageError};

fn need<'a>(flag: &'a Option<PathBuf>, name: &str, corpus: &str) -> anyhow::Result<&'a Path> {
    flag.as_deref()
        .ok_or_else(|| UsageError(format!("the {corpus} corpus needs --{name}")).into())
}

pub fn export_sft(g: &GlobalArgs, mut cfg: RunConfig, a: &ExportArgs) -> anyhow::Result<()> {
    if let Some(v) = a.budget {
        cfg.refine.budget = v;
    }
    if let Some(v) = a.beam_width {
        cfg.refine.beam_width = v;
    }
    let want = |k: ExportKind| a.kind == k || a.kind == ExportKind::All;
    let partition = cfg.partition();
    let mut run = Run::new("export-sft", &g.out_dir)?;

    if want(ExportKind::Geo) {
        let locations: Vec<LocationRecord> =
            read_records(&mut run, "locations", need(&a.locations, "locations", "geo")?)?;
        let profiles = load_profile_map(&mut run, need(&a.profiles, "profiles", "geo")?, g)?;
        let tokens = locations.into_iter().map(|l| (l.location_id, l.tokens)).collect();
        let records = export_bidirectional_pairs(&tokens, &profiles)?;
        run.write_jsonl("sft_geo.jsonl", &records)?;
        println!("geo: {} records", records.len());
    }

    let traj_kinds = [ExportKind::Prediction, ExportKind::Generation, ExportKind::Reflection];
    if traj_kinds.iter().any(|&k| want(k)) {
        let corpus = if a.kind == ExportKind::All { "trajectory" } else { "requested" };
        let trajs = load_trajectories(&mut run, need(&a.trajectories, "trajectories", corpus)?)?;
        let sequences: SequenceVectors = match &a.sequences {
            Some(p) => read_records::<SequenceRecord>(&mut run, "sequences", p)?
                .into_iter()
                .map(|s| (s.sample_id, s.values))
                .collect(),
            None => BTreeMap::new(),
        };
        if want(ExportKind::Prediction) {
            let r = export_prediction(&trajs, &partition, &sequences)?;
            run.write_jsonl("sft_prediction.jsonl", &r)?;
            println!("prediction: {} records", r.len());
        }
        if want(ExportKind::Generation) {
            let r = export_generation(&trajs, &partition, &sequences)?;
            run.write_jsonl("sft_generation.jsonl", &r)?;
            println!("generation: {} records", r.len());
        }
        if want(ExportKind::Reflection) {
            let baselines: BTreeMap<String, Vec<TrajPoint>> = match &a.baselines {
                Some(p) => read_records::<BaselineRecord>(&mut run, "baselines", p)?
                    .into_iter()
                    .map(|b| (b.sample_id, b.points))
                    .collect(),
                None => BTreeMap::new(),
            };
            let r = export_reflection(&trajs, &baselines, &partition, &cfg.refine)?;
            run.write_jsonl("sft_reflection.jsonl", &r)?;
            println!("reflection: {} records", r.len());
        }
    }
    run.finish(&cfg)?;
    Ok(())
}
