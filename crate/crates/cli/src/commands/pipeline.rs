use std::collections::BTreeMap;

use anyhow::Context;
use mobility_core::align::{
    build_pmi, optimize_embeddings, token_rows, AlignModel, AlignSample, EmbeddingTable, HashedEmbedder, PieceEmbedder,
    PieceRecord, TableEmbedder,
};
use mobility_core::rq::{all_token_names, codebook_report, layer_prefix, train_rqvae, CodebookStack};
use mobility_core::traj::{assign_grid, load_visits, preprocess as run_pipeline, Loc};
use serde::Serialize;

use super::{
    load_profile_map, load_trajectories, location_vectors, read_records, warn, LocationRecord, CODEBOOK_FILE,
    EMBEDDINGS_FILE, LOCATIONS_FILE, TOKENIZED_FILE, TRAJECTORIES_FILE,
};
use crate::config::RunConfig;
use crate::manifest::Run;
use crate::{AlignArgs, CodebookArgs, GlobalArgs, PreprocessArgs, TokenizeArgs};

pub fn preprocess(g: &GlobalArgs, mut cfg: RunConfig, a: &PreprocessArgs) -> anyhow::Result<()> {
    let p = &mut cfg.preprocess;
    if let Some(v) = a.cell_size {
        p.cell_size_m = v;
    }
    if let Some(v) = a.window_days {
        p.window_days = v;
    }
    if let Some(v) = a.stride_days {
        p.stride_days = v;
    }
    if let Some(v) = a.min_points {
        p.min_points = v;
    }
    if let Some(v) = a.max_points {
        p.max_points = v;
    }
    if a.no_dedupe {
        p.dedupe = false;
    }
    let city = cfg.city(a.city.as_deref())?;
    cfg.city = Some(city.clone());

    let mut run = Run::new("preprocess", &g.out_dir)?;
    run.input("visits", &a.visits)?;
    let (visits, skipped) =
        load_visits(&a.visits, g.strict).with_context(|| format!("reading visits {}", a.visits.display()))?;
    for s in &skipped {
        warn(format!("{}: skipped {s}", a.visits.display()));
    }
    if visits.is_empty() {
        warn("no valid visits; writing an empty trajectory file");
    }
    let out = run_pipeline(&visits, &city, &cfg.preprocess, g.strict)?;
    for r in &out.rejected {
        warn(format!("rejected {r}"));
    }
    run.write_jsonl(TRAJECTORIES_FILE, &out.trajectories)?;
    println!(
        "{} visits -> {} trajectories ({} skipped)",
        visits.len(),
        out.trajectories.len(),
        skipped.len() + out.rejected.len()
    );
    run.finish(&cfg)?;
    Ok(())
}

pub fn build_codebook(g: &GlobalArgs, mut cfg: RunConfig, a: &CodebookArgs) -> anyhow::Result<()> {
    let c = &mut cfg.codebook;
    if let Some(v) = a.n_layers {
        c.n_layers = v;
    }
    if let Some(v) = a.codebook_size {
        c.codebook_size = v;
    }
    if let Some(v) = &a.encoder_dims {
        c.encoder_dims = v.clone();
        if let Some(&last) = v.last() {
            c.code_dim = last;
        }
    }
    if let Some(v) = a.code_dim {
        c.code_dim = v;
        if a.encoder_dims.is_none() {
            if let Some(last) = c.encoder_dims.last_mut() {
                *last = v;
            }
        }
    }
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.alpha {
        c.alpha = v;
    }
    cfg.codebook.validate()?;

    let mut run = Run::new("build-codebook", &g.out_dir)?;
    let profiles = match &a.profiles {
        Some(p) if a.embeddings.is_none() => Some(load_profile_map(&mut run, p, g)?),
        _ => None,
    };
    let vectors = location_vectors(
        &mut run,
        profiles.as_ref(),
        a.embeddings.as_deref(),
        cfg.codebook.input_dim(),
        cfg.seed(),
    )?;
    let corpus: Vec<Vec<f64>> = vectors.into_values().collect();
    let (stack, train) = train_rqvae(&corpus, &cfg.codebook)?;
    let report = codebook_report(&stack, &corpus)?;

    run.write(CODEBOOK_FILE, &stack.to_bytes())?;
    run.write_json("codebook_report.json", &report)?;
    run.write_json("train_report.json", &train)?;
    println!(
        "trained on {} vectors: reconstruction mse {:.6} -> {:.6}",
        corpus.len(),
        train.initial().rec_mse,
        train.last().rec_mse
    );
    for (layer, used) in report.used_per_layer.iter().enumerate() {
        println!(
            "layer {}: {used}/{} codewords used ({:.1}%)",
            layer_prefix(layer),
            stack.config.codebook_size,
            100.0 * *used as f64 / stack.config.codebook_size as f64
        );
    }
    println!(
        "distinct sequences {} of {}, collision rate {:.4}",
        report.distinct_sequences, report.n_vectors, report.collision_rate
    );
    run.finish(&cfg)?;
    Ok(())
}

fn load_codebook(run: &mut Run, path: &std::path::Path) -> anyhow::Result<CodebookStack> {
    run.input("codebook", path)?;
    CodebookStack::load(path).with_context(|| format!("loading codebook {}", path.display()))
}

pub fn tokenize(g: &GlobalArgs, mut cfg: RunConfig, a: &TokenizeArgs) -> anyhow::Result<()> {
    if let Some(v) = a.cell_size {
        cfg.preprocess.cell_size_m = v;
    }
    let city = cfg.city(a.city.as_deref())?;
    cfg.city = Some(city.clone());
    let grid = city.grid(cfg.preprocess.cell_size_m)?;

    let mut run = Run::new("tokenize", &g.out_dir)?;
    let stack = load_codebook(&mut run, &a.codebook)?;
    let profiles = load_profile_map(&mut run, &a.profiles, g)?;
    let vectors = location_vectors(&mut run, Some(&profiles), a.embeddings.as_deref(), stack.input_dim(), cfg.seed())?;

    let mut records = Vec::new();
    let mut by_cell: BTreeMap<Loc, usize> = BTreeMap::new();
    let mut shadowed = 0usize;
    for (id, p) in &profiles {
        let loc = match assign_grid(p.center_lat, p.center_lon, &grid) {
            Ok(l) => l,
            Err(e) if g.strict => return Err(e).with_context(|| format!("location {id}")),
            Err(e) => {
                warn(format!("location {id} skipped: {e}"));
                continue;
            }
        };
        let v = vectors.get(id).ok_or_else(|| mobility_core::Error::Missing {
            what: "semantic vector",
            key: id.clone(),
        })?;
        let tokens = stack.encode(v)?.tokens;
        match by_cell.entry(loc) {
            std::collections::btree_map::Entry::Occupied(_) => shadowed += 1,
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(records.len());
            }
        }
        records.push(LocationRecord {
            location_id: id.clone(),
            row: loc.row,
            col: loc.col,
            token_string: tokens.to_string(),
            tokens,
        });
    }
    if shadowed > 0 {
        warn(format!(
            "{shadowed} locations share a grid cell with an earlier location id; trajectories use the first"
        ));
    }
    run.write_jsonl(LOCATIONS_FILE, &records)?;
    println!("tokenized {} locations into {} cells", records.len(), by_cell.len());

    if let Some(path) = &a.trajectories {
        let mut trajs = load_trajectories(&mut run, path)?;
        let mut unmatched = 0usize;
        for p in trajs.iter_mut().flat_map(|t| t.points.iter_mut()) {
            match by_cell.get(&p.loc()) {
                Some(&i) => p.tokens = Some(records[i].tokens.clone()),
                None => unmatched += 1,
            }
        }
        if unmatched > 0 {
            warn(format!("{unmatched} trajectory points fall in cells without a location"));
        }
        run.write_jsonl(TOKENIZED_FILE, &trajs)?;
    }
    run.finish(&cfg)?;
    Ok(())
}

#[derive(Serialize)]
struct AlignOutput<'a> {
    report: &'a mobility_core::align::AlignReport,
    n_locations: usize,
    n_edges: usize,
}

pub fn align(g: &GlobalArgs, mut cfg: RunConfig, a: &AlignArgs) -> anyhow::Result<()> {
    let c = &mut cfg.align;
    if let Some(v) = a.lambda_prior {
        c.lambda_prior = v;
    }
    if let Some(v) = a.lambda_coh {
        c.lambda_coh = v;
    }
    if let Some(v) = a.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.radius {
        c.neighborhood_radius_cells = v;
    }
    if let Some(v) = a.embed_dim {
        cfg.tokens.embed_dim = v;
    }
    cfg.align.validate()?;

    let mut run = Run::new("align", &g.out_dir)?;
    let stack = load_codebook(&mut run, &a.codebook)?;
    let locations: Vec<LocationRecord> = read_records(&mut run, "locations", &a.locations)?;
    let profiles = match &a.profiles {
        Some(p) if a.embeddings.is_none() => Some(load_profile_map(&mut run, p, g)?),
        _ => None,
    };
    let targets = location_vectors(&mut run, profiles.as_ref(), a.embeddings.as_deref(), stack.input_dim(), cfg.seed())?;

    let k = stack.config.codebook_size;
    let tokens = all_token_names(stack.config.n_layers, k);
    let table = match &a.piece_table {
        Some(path) => {
            let records: Vec<PieceRecord> = read_records(&mut run, "piece table", path)?;
            EmbeddingTable::init(tokens, &TableEmbedder::new(records)? as &dyn PieceEmbedder)?
        }
        None => EmbeddingTable::init(
            tokens,
            &HashedEmbedder {
                dim: cfg.tokens.embed_dim,
                seed: cfg.seed(),
            },
        )?,
    };

    let mut dataset = Vec::with_capacity(locations.len());
    let mut placed = Vec::with_capacity(locations.len());
    for l in &locations {
        l.tokens.validate(stack.config.n_layers, k)?;
        let target = targets.get(&l.location_id).ok_or_else(|| mobility_core::Error::Missing {
            what: "semantic target",
            key: l.location_id.clone(),
        })?;
        dataset.push(AlignSample {
            rows: token_rows(&l.tokens, k),
            target: target.clone(),
        });
        placed.push((Loc::new(l.row, l.col), l.tokens.clone()));
    }
    let pmi = build_pmi(&placed, k, cfg.align.neighborhood_radius_cells, cfg.align.pmi_floor)?;
    let model = AlignModel::new(table, stack.input_dim(), cfg.align.seed);
    let (best, report) = optimize_embeddings(&model, &dataset, &pmi, &cfg.align)?;

    run.write(EMBEDDINGS_FILE, &best.to_bytes())?;
    run.write_json(
        "align_report.json",
        &AlignOutput {
            report: &report,
            n_locations: dataset.len(),
            n_edges: pmi.edges().len(),
        },
    )?;
    let (first, kept) = (&report.epochs[0], &report.epochs[report.best_epoch]);
    println!(
        "alignment loss {:.6} -> {:.6} (epoch {}; main {:.6}, prior {:.6}, coh {:.6})",
        first.total, kept.total, report.best_epoch, kept.main, kept.prior, kept.coh
    );
    run.finish(&cfg)?;
    Ok(())
}
