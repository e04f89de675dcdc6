//! Shared fixtures: a synthetic city, location profiles, raw visits and the
//! seeded refine suite, plus a helper for running the binary.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mobility_core::refine::{apply_edit, EditContext, EditOp};
use mobility_core::stats::Partition;
use mobility_core::traj::{Loc, TrajPoint};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CITY_TOML: &str = "name = \"testville\"\n\
min_lat = 33.70\nmin_lon = -84.45\nmax_lat = 33.80\nmax_lon = -84.35\ntz_offset_seconds = -18000\n";

const CATEGORIES: [&str; 6] = ["restaurant", "cafe", "fast_food", "health", "retail", "office"];
const HOURS: [i64; 9] = [8, 9, 12, 13, 18, 19, 22, 23, 2];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mobility")
}

pub fn mobility(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).current_dir(dir).args(args).output().expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits with `code`.
pub fn expect_exit(dir: &Path, args: &[&str], code: i32) -> Output {
    let out = mobility(dir, args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "mobility {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn sha256_file(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))))
}

/// Digest of every regular file in `dir`, keyed by file name.
pub fn digests(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), sha256_file(&p)))
        .collect()
}

/// Writes `city.toml`, `profiles.jsonl` (40 locations) and `visits.jsonl`
/// (20 users with 50 visits each, so 1,000 in total) into `dir`.
pub fn write_inputs(dir: &Path, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::write(dir.join("city.toml"), CITY_TOML).unwrap();
    let mut locs = Vec::new();
    let mut profiles = String::new();
    for i in 0..40 {
        let lat = 33.70 + rng.gen_range(0.0..0.1);
        let lon = -84.45 + rng.gen_range(0.0..0.1);
        let cat = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
        let rec = serde_json::json!({
            "location_id": format!("loc-{i:02}"),
            "address": format!("{i} Main Street"),
            "center_lat": lat,
            "center_lon": lon,
            "poi_counts": { cat: rng.gen_range(1..6) },
        });
        writeln!(profiles, "{rec}").unwrap();
        locs.push((lat, lon));
    }
    fs::write(dir.join("profiles.jsonl"), profiles).unwrap();

    let mut visits = String::new();
    for u in 0..20 {
        let favorites: Vec<usize> = (0..40).collect::<Vec<_>>().choose_multiple(&mut rng, 4).copied().collect();
        for _ in 0..50 {
            let day = rng.gen_range(0..7i64);
            let hour = HOURS[rng.gen_range(0..HOURS.len())];
            let ts = 1_704_067_200 + day * 86_400 + hour * 3_600 + rng.gen_range(0..3_600) + 18_000;
            let (lat, lon) = locs[favorites[rng.gen_range(0..4)]];
            let rec = serde_json::json!({ "user_id": format!("u{u:02}"), "timestamp": ts, "lat": lat, "lon": lon });
            writeln!(visits, "{rec}").unwrap();
        }
    }
    fs::write(dir.join("visits.jsonl"), visits).unwrap();
}

/// The small-codebook flags used throughout the tests.
pub const SMALL_CODEBOOK: [&str; 10] = [
    "--encoder-dims",
    "48,32,8",
    "--n-layers",
    "2",
    "--codebook-size",
    "16",
    "--epochs",
    "10",
    "--batch-size",
    "16",
];

/// preprocess, build-codebook, tokenize, export-sft and evaluate into
/// `dir/out`, with inputs already in `dir`.
pub fn run_pipeline(dir: &Path) -> PathBuf {
    let out = dir.join("out");
    let o = out.to_str().unwrap();
    expect_exit(dir, &["preprocess", "--visits", "visits.jsonl", "--city", "city.toml", "--out-dir", o], 0);
    let mut args = vec!["build-codebook", "--profiles", "profiles.jsonl", "--out-dir", o];
    args.extend(SMALL_CODEBOOK);
    expect_exit(dir, &args, 0);
    let traj = out.join("trajectories.jsonl");
    let cb = out.join("codebook.rqcb");
    expect_exit(
        dir,
        &[
            "tokenize", "--codebook", cb.to_str().unwrap(), "--profiles", "profiles.jsonl", "--city", "city.toml",
            "--trajectories", traj.to_str().unwrap(), "--out-dir", o,
        ],
        0,
    );
    let locs = out.join("locations.jsonl");
    let tok = out.join("trajectories_tokenized.jsonl");
    expect_exit(
        dir,
        &[
            "export-sft", "--locations", locs.to_str().unwrap(), "--profiles", "profiles.jsonl", "--trajectories",
            tok.to_str().unwrap(), "--out-dir", o,
        ],
        0,
    );
    expect_exit(
        dir,
        &["evaluate", "--generated", tok.to_str().unwrap(), "--truth", tok.to_str().unwrap(), "--out-dir", o],
        0,
    );
    out
}

/// One refine instance: a small truth trajectory and a baseline a few
/// random edits away from it. The target features come from `truth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineFixture {
    pub id: String,
    pub weekday: u8,
    pub history: Vec<TrajPoint>,
    pub truth: Vec<TrajPoint>,
    pub baseline: Vec<TrajPoint>,
    /// Number of random edits used to derive the baseline.
    pub perturbations: usize,
}

pub const REFINE_SUITE_SEED: u64 = 1;
pub const REFINE_SUITE_LEN: usize = 100;

pub fn refine_suite_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/refine_suite.jsonl")
}

pub fn edit_context(weekday: u8) -> EditContext {
    EditContext { day: 0, weekday, tokens: Default::default() }
}

/// Regenerates the shipped suite. Fixtures are taken in generation order
/// with no filtering.
pub fn generate_refine_suite() -> Vec<RefineFixture> {
    let p = Partition::default();
    let reps = p.representative_slots();
    let weekday = 5;
    let ctx = edit_context(weekday);
    let mut rng = ChaCha8Rng::seed_from_u64(REFINE_SUITE_SEED);
    (0..REFINE_SUITE_LEN)
        .map(|i| {
            let pool: Vec<Loc> = (0..rng.gen_range(2..=5)).map(|l| Loc::new(l, 0)).collect();
            let mut truth: Vec<TrajPoint> = (0..rng.gen_range(2..=6))
                .map(|_| {
                    let slot =
                        if rng.gen_bool(0.5) { reps[rng.gen_range(0..reps.len())] } else { rng.gen_range(0..48) };
                    TrajPoint::new(0, weekday, slot, pool[rng.gen_range(0..pool.len())])
                })
                .collect();
            truth.sort_by_key(|q| q.time_key());
            let mut baseline = truth.clone();
            let perturbations = rng.gen_range(0..=3);
            for _ in 0..perturbations {
                let slot = reps[rng.gen_range(0..reps.len())];
                let loc = pool[rng.gen_range(0..pool.len())];
                match rng.gen_range(0..3) {
                    2 if baseline.len() > 1 => {
                        let at = rng.gen_range(0..baseline.len());
                        baseline.remove(at);
                    }
                    1 if baseline.len() < 6 => {
                        let at = baseline.partition_point(|q| q.slot <= slot);
                        apply_edit(&mut baseline, &EditOp::add(at, slot, loc), &ctx).unwrap();
                    }
                    _ => {
                        let at = rng.gen_range(0..baseline.len());
                        apply_edit(&mut baseline, &EditOp::modify(at, slot, loc), &ctx).unwrap();
                    }
                }
            }
            let history = pool.iter().map(|&l| TrajPoint::new(0, 3, 20, l)).collect();
            RefineFixture { id: format!("refine-{i:03}"), weekday, history, truth, baseline, perturbations }
        })
        .collect()
}

pub fn load_refine_suite() -> Vec<RefineFixture> {
    mobility_core::io::read_jsonl_strict(&refine_suite_path()).expect("shipped refine suite loads")
}
