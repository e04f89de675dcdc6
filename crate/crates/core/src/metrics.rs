//! Hit rate, BLEU, TVD, JSD, and the generation evaluation harness.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{Loc, Trajectory, SLOTS_PER_DAY};

const NORMALIZATION_TOL: f64 = 1e-9;

/// A finite distribution over ordered labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<K: Ord> {
    probs: BTreeMap<K, f64>,
}

impl<K: Ord + Clone> Distribution<K> {
    pub fn from_probs(entries: impl IntoIterator<Item = (K, f64)>) -> Result<Self> {
        let mut probs = BTreeMap::new();
        for (k, p) in entries {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Invalid(format!("probability {p} is not a finite non-negative value")));
            }
            *probs.entry(k).or_insert(0.0) += p;
        }
        let total: f64 = probs.values().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Distribution { probs })
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (K, u64)>) -> Result<Self> {
        let mut c: BTreeMap<K, u64> = BTreeMap::new();
        for (k, n) in counts {
            *c.entry(k).or_insert(0) += n;
        }
        let total: u64 = c.values().sum();
        if total == 0 {
            return Err(Error::Empty("distribution"));
        }
        Ok(Distribution {
            probs: c.into_iter().map(|(k, n)| (k, n as f64 / total as f64)).collect(),
        })
    }

    pub fn get(&self, k: &K) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = &K> {
        self.probs.keys()
    }

    /// Both distributions over the union of supports, zero-filled.
    pub fn align(&self, other: &Self) -> (Vec<f64>, Vec<f64>) {
        let mut keys: Vec<&K> = self.probs.keys().chain(other.probs.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter().map(|k| (self.get(k), other.get(k))).unzip()
    }
}

fn check_aligned(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    if p.iter().chain(q).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Invalid("probabilities must be finite and non-negative".into()));
    }
    Ok(())
}

pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    check_aligned(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `Σ p log(p/q)` with `0 log(0/q) = 0`; infinite if `q = 0 < p`.
pub fn kl_divergence(p: &[f64], q: &[f64], base: f64) -> Result<f64> {
    check_aligned(p, q)?;
    let ln_base = base.ln();
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            s += a * (a / b).ln();
        }
    }
    Ok(s / ln_base)
}

/// Square root of the Jensen-Shannon divergence.
pub fn jsd(p: &[f64], q: &[f64], base: f64) -> Result<f64> {
    check_aligned(p, q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let d = 0.5 * kl_divergence(p, &m, base)? + 0.5 * kl_divergence(q, &m, base)?;
    // Rounding can leave a tiny negative for identical inputs.
    Ok(d.max(0.0).sqrt())
}

pub fn tvd_dist<K: Ord + Clone>(p: &Distribution<K>, q: &Distribution<K>) -> f64 {
    let (a, b) = p.align(q);
    tvd(&a, &b).expect("aligned")
}

pub fn jsd_dist<K: Ord + Clone>(p: &Distribution<K>, q: &Distribution<K>, base: f64) -> f64 {
    let (a, b) = p.align(q);
    jsd(&a, &b, base).expect("aligned")
}

/// Fraction of cases whose truth appears in the first `k` entries.
pub fn hit_rate_at_k<T: PartialEq>(rankings: &[Vec<T>], truths: &[T], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if rankings.is_empty() {
        return Err(Error::Empty("rankings"));
    }
    if rankings.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: rankings.len(),
            found: truths.len(),
        });
    }
    if rankings.iter().any(Vec::is_empty) {
        return Err(Error::Invalid("every ranking must be non-empty".into()));
    }
    let hits = rankings
        .iter()
        .zip(truths)
        .filter(|(r, t)| r.iter().take(k).any(|x| x == *t))
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "epsilon")]
pub enum Smoothing {
    None,
    /// Zero n-gram match counts are replaced by `epsilon`.
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuOptions {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuOptions {
    fn default() -> Self {
        BleuOptions {
            max_n: 4,
            smoothing: Smoothing::None,
        }
    }
}

fn ngram_counts<T: Hash + Eq>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped matches and candidate n-gram total for one order.
fn modified_precision<T: Hash + Eq>(cand: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let matched = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, cand.len().saturating_sub(n - 1))
}

fn combine(matches: &[(usize, usize)], cand_len: usize, ref_len: usize, opts: &BleuOptions) -> f64 {
    let w = 1.0 / opts.max_n as f64;
    let mut log_sum = 0.0;
    for &(m, total) in matches {
        let num = match (m, opts.smoothing) {
            (0, Smoothing::None) => return 0.0,
            (0, Smoothing::Epsilon(e)) => e,
            (m, _) => m as f64,
        };
        log_sum += w * (num / total.max(1) as f64).ln();
    }
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * log_sum.exp()
}

fn check_bleu(opts: &BleuOptions) -> Result<()> {
    if opts.max_n == 0 {
        return Err(Error::Invalid("max_n must be at least 1".into()));
    }
    if let Smoothing::Epsilon(e) = opts.smoothing {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Invalid("smoothing epsilon must be positive".into()));
        }
    }
    Ok(())
}

/// Sentence BLEU with uniform weights and the standard brevity penalty.
pub fn bleu<T: Hash + Eq>(candidate: &[T], reference: &[T], opts: &BleuOptions) -> Result<f64> {
    check_bleu(opts)?;
    if candidate.is_empty() {
        return Err(Error::Empty("candidate"));
    }
    let m: Vec<_> = (1..=opts.max_n)
        .map(|n| modified_precision(candidate, reference, n))
        .collect();
    Ok(combine(&m, candidate.len(), reference.len(), opts))
}

/// Corpus BLEU: counts and lengths pooled before combining.
pub fn corpus_bleu<T: Hash + Eq>(pairs: &[(&[T], &[T])], opts: &BleuOptions) -> Result<f64> {
    check_bleu(opts)?;
    if pairs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut m = vec![(0usize, 0usize); opts.max_n];
    let (mut c_len, mut r_len) = (0, 0);
    for (c, r) in pairs {
        c_len += c.len();
        r_len += r.len();
        for (n, slot) in m.iter_mut().enumerate() {
            let (a, b) = modified_precision(c, r, n + 1);
            slot.0 += a;
            slot.1 += b;
        }
    }
    if c_len == 0 {
        return Err(Error::Empty("candidate"));
    }
    Ok(combine(&m, c_len, r_len, opts))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Pooled,
    PerUser,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuMode {
    #[default]
    Sentence,
    Corpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub pooling: Pooling,
    pub bleu_mode: BleuMode,
    pub bleu: BleuOptions,
    pub log_base: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            pooling: Pooling::Pooled,
            bleu_mode: BleuMode::Sentence,
            bleu: BleuOptions::default(),
            log_base: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub bleu: f64,
    pub tvd: f64,
    pub jsd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub time: ChannelMetrics,
    pub location: ChannelMetrics,
    pub n_pairs: usize,
    pub n_generated_points: usize,
    pub n_truth_points: usize,
}

/// Per-bucket counts behind a report, for plotting elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub time_generated: Vec<u64>,
    pub time_truth: Vec<u64>,
    pub location_generated: BTreeMap<String, u64>,
    pub location_truth: BTreeMap<String, u64>,
}

fn slot_hist(t: &[&Trajectory]) -> Vec<u64> {
    let mut h = vec![0u64; SLOTS_PER_DAY as usize];
    for p in t.iter().flat_map(|t| &t.points) {
        h[p.slot as usize] += 1;
    }
    h
}

fn loc_hist(t: &[&Trajectory]) -> BTreeMap<Loc, u64> {
    let mut h = BTreeMap::new();
    for p in t.iter().flat_map(|t| &t.points) {
        *h.entry(p.loc()).or_insert(0) += 1;
    }
    h
}

fn pair_up<'a>(
    generated: &'a [Trajectory],
    truth: &'a [Trajectory],
) -> Result<Vec<(&'a Trajectory, &'a Trajectory)>> {
    let mut index: BTreeMap<(&str, i64), &Trajectory> = BTreeMap::new();
    for t in truth {
        if index.insert((&t.user_id, t.window_start_day), t).is_some() {
            return Err(Error::DuplicateKey(format!("{}@{}", t.user_id, t.window_start_day)));
        }
    }
    generated
        .iter()
        .map(|g| {
            index
                .get(&(g.user_id.as_str(), g.window_start_day))
                .map(|t| (g, *t))
                .ok_or_else(|| Error::Missing {
                    what: "ground-truth trajectory",
                    key: format!("{}@{}", g.user_id, g.window_start_day),
                })
        })
        .collect()
}

fn distances(gen: Vec<f64>, truth: Vec<f64>, base: f64) -> Result<(f64, f64)> {
    Ok((tvd(&gen, &truth)?, jsd(&gen, &truth, base)?))
}

fn normalize(h: &[u64]) -> Result<Vec<f64>> {
    let total: u64 = h.iter().sum();
    if total == 0 {
        return Err(Error::Empty("trajectory points"));
    }
    Ok(h.iter().map(|&c| c as f64 / total as f64).collect())
}

fn loc_vectors(g: &BTreeMap<Loc, u64>, t: &BTreeMap<Loc, u64>) -> (Vec<u64>, Vec<u64>) {
    let mut keys: Vec<&Loc> = g.keys().chain(t.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|k| (g.get(k).copied().unwrap_or(0), t.get(k).copied().unwrap_or(0)))
        .unzip()
}

/// Time and location similarity between generated and true trajectories,
/// paired by `(user_id, window_start_day)`.
pub fn evaluate_generation(
    generated: &[Trajectory],
    truth: &[Trajectory],
    opts: &EvalOptions,
) -> Result<(EvalReport, PlotData)> {
    if generated.is_empty() {
        return Err(Error::Empty("generated cohort"));
    }
    let pairs = pair_up(generated, truth)?;
    let gens: Vec<&Trajectory> = pairs.iter().map(|p| p.0).collect();
    let truths: Vec<&Trajectory> = pairs.iter().map(|p| p.1).collect();

    let time_seqs: Vec<(Vec<u8>, Vec<u8>)> = pairs
        .iter()
        .map(|(g, t)| {
            (
                g.points.iter().map(|p| p.slot).collect(),
                t.points.iter().map(|p| p.slot).collect(),
            )
        })
        .collect();
    let loc_seqs: Vec<(Vec<Loc>, Vec<Loc>)> = pairs
        .iter()
        .map(|(g, t)| {
            (
                g.points.iter().map(|p| p.loc()).collect(),
                t.points.iter().map(|p| p.loc()).collect(),
            )
        })
        .collect();
    let time_bleu = channel_bleu(&time_seqs, opts)?;
    let loc_bleu = channel_bleu(&loc_seqs, opts)?;

    let (time_d, loc_d) = match opts.pooling {
        Pooling::Pooled => {
            let td = distances(
                normalize(&slot_hist(&gens))?,
                normalize(&slot_hist(&truths))?,
                opts.log_base,
            )?;
            let (g, t) = loc_vectors(&loc_hist(&gens), &loc_hist(&truths));
            let ld = distances(normalize(&g)?, normalize(&t)?, opts.log_base)?;
            (td, ld)
        }
        Pooling::PerUser => {
            let mut acc = [0.0; 4];
            for (g, t) in &pairs {
                let (ts, tt) = (slot_hist(&[g]), slot_hist(&[t]));
                let td = distances(normalize(&ts)?, normalize(&tt)?, opts.log_base)?;
                let (lg, lt) = loc_vectors(&loc_hist(&[g]), &loc_hist(&[t]));
                let ld = distances(normalize(&lg)?, normalize(&lt)?, opts.log_base)?;
                for (a, v) in acc.iter_mut().zip([td.0, td.1, ld.0, ld.1]) {
                    *a += v;
                }
            }
            let n = pairs.len() as f64;
            ((acc[0] / n, acc[1] / n), (acc[2] / n, acc[3] / n))
        }
    };

    let report = EvalReport {
        time: ChannelMetrics {
            bleu: time_bleu,
            tvd: time_d.0,
            jsd: time_d.1,
        },
        location: ChannelMetrics {
            bleu: loc_bleu,
            tvd: loc_d.0,
            jsd: loc_d.1,
        },
        n_pairs: pairs.len(),
        n_generated_points: gens.iter().map(|t| t.len()).sum(),
        n_truth_points: truths.iter().map(|t| t.len()).sum(),
    };
    let name = |m: BTreeMap<Loc, u64>| m.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let plot = PlotData {
        time_generated: slot_hist(&gens),
        time_truth: slot_hist(&truths),
        location_generated: name(loc_hist(&gens)),
        location_truth: name(loc_hist(&truths)),
    };
    Ok((report, plot))
}

/// Sentence mode scores an empty generation as 0 rather than failing.
fn channel_bleu<T: Hash + Eq>(seqs: &[(Vec<T>, Vec<T>)], opts: &EvalOptions) -> Result<f64> {
    match opts.bleu_mode {
        BleuMode::Sentence => {
            let mut s = 0.0;
            for (c, r) in seqs {
                if !c.is_empty() {
                    s += bleu(c, r, &opts.bleu)?;
                }
            }
            Ok(s / seqs.len() as f64)
        }
        BleuMode::Corpus => {
            let pairs: Vec<(&[T], &[T])> = seqs.iter().map(|(c, r)| (c.as_slice(), r.as_slice())).collect();
            corpus_bleu(&pairs, &opts.bleu)
        }
    }
}
