use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use mobility_core::io::read_jsonl_strict;
use mobility_core::profile::{encode_profile_fallback, import_embeddings, load_profiles, LocationProfile};
use mobility_core::rq::LocationTokenSeq;
use mobility_core::traj::{TrajPoint, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::Run;
use crate::{Cli, Command, GlobalArgs, UsageError};

mod export;
mod pipeline;
mod scoring;

pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const TOKENIZED_FILE: &str = "trajectories_tokenized.jsonl";
pub const CODEBOOK_FILE: &str = "codebook.rqcb";
pub const LOCATIONS_FILE: &str = "locations.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.tkem";

/// One line of `locations.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub location_id: String,
    pub row: u32,
    pub col: u32,
    pub tokens: LocationTokenSeq,
    pub token_string: String,
}

/// An opaque trajectory embedding for the `<sequence>` placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub sample_id: String,
    pub values: Vec<f64>,
}

/// A generated next-day trajectory to be critiqued or refined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub sample_id: String,
    pub points: Vec<TrajPoint>,
}

pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    let cfg = RunConfig::resolve(g.config.as_deref(), g.seed)?;
    match &cli.command {
        Command::Preprocess(a) => pipeline::preprocess(g, cfg, a),
        Command::BuildCodebook(a) => pipeline::build_codebook(g, cfg, a),
        Command::Tokenize(a) => pipeline::tokenize(g, cfg, a),
        Command::Align(a) => pipeline::align(g, cfg, a),
        Command::ExportSft(a) => export::export_sft(g, cfg, a),
        Command::Evaluate(a) => scoring::evaluate(g, cfg, a),
        Command::Reward(a) => scoring::reward(g, cfg, a),
        Command::Refine(a) => scoring::refine(g, cfg, a),
    }
}

pub(crate) fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

pub(crate) fn load_trajectories(run: &mut Run, path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    run.input("trajectories", path)?;
    let t: Vec<Trajectory> =
        read_jsonl_strict(path).with_context(|| format!("reading trajectories {}", path.display()))?;
    if let Some(bad) = t.iter().find(|t| !t.is_sorted()) {
        anyhow::bail!("trajectory {}@{} is not in time order", bad.user_id, bad.window_start_day);
    }
    Ok(t)
}

pub(crate) fn load_profile_map(
    run: &mut Run,
    path: &Path,
    g: &GlobalArgs,
) -> anyhow::Result<BTreeMap<String, LocationProfile>> {
    run.input("profiles", path)?;
    let report = load_profiles(path, g.strict).with_context(|| format!("reading profiles {}", path.display()))?;
    for (line, why) in &report.rejected {
        warn(format!("{}: skipped line {line}: {why}", path.display()));
    }
    Ok(report.items.into_iter().map(|p| (p.location_id.clone(), p)).collect())
}

/// Semantic vectors per location: imported when `embeddings` is given,
/// otherwise the fallback encoder at `dim` over the profiles.
pub(crate) fn location_vectors(
    run: &mut Run,
    profiles: Option<&BTreeMap<String, LocationProfile>>,
    embeddings: Option<&Path>,
    dim: usize,
    seed: u64,
) -> anyhow::Result<BTreeMap<String, Vec<f64>>> {
    if let Some(path) = embeddings {
        run.input("embeddings", path)?;
        let m = import_embeddings(path, Some(dim)).with_context(|| format!("reading embeddings {}", path.display()))?;
        return Ok(m.into_iter().map(|(k, v)| (k, v.values)).collect());
    }
    let profiles = profiles.ok_or_else(|| UsageError("either --embeddings or --profiles is required".into()))?;
    profiles
        .iter()
        .map(|(id, p)| Ok((id.clone(), encode_profile_fallback(p, dim, seed)?.values)))
        .collect()
}

pub(crate) fn read_records<T: serde::de::DeserializeOwned>(
    run: &mut Run,
    role: &str,
    path: &Path,
) -> anyhow::Result<Vec<T>> {
    run.input(role, path)?;
    read_jsonl_strict(path).with_context(|| format!("reading {role} {}", path.display()))
}
