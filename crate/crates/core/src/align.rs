//! Embeddings for the codeword tokens: initialization from sub-piece
//! embeddings, co-occurrence PMI over the grid, and the alignment objective
//! (cosine to the semantic target, a prior pull toward the initial state,
//! and PMI-weighted coherence between co-occurring tokens).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Container;
use crate::nn::{dot, norm, AdamW, AdamWConfig, Dense};
use crate::profile::{fnv1a, mix64};
use crate::rq::LocationTokenSeq;
use crate::traj::Loc;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"TKEM";
pub const EMBEDDING_FORMAT_VERSION: u32 = 1;

/// Splits a token surface string into pieces: runs of alphanumerics and
/// single punctuation characters. `"<a_12>"` gives `< a _ 12 >`.
pub fn split_pieces(token: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in token.char_indices() {
        if ch.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&token[s..i]);
        }
        if !ch.is_whitespace() {
            out.push(&token[i..i + ch.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&token[s..]);
    }
    out
}

/// Maps a string piece to a base-vocabulary vector.
pub trait PieceEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, piece: &str) -> Result<Vec<f64>>;
}

/// Deterministic stand-in for a real vocabulary: signed hashing of
/// character trigrams of the padded piece, unit-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl PieceEmbedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, piece: &str) -> Result<Vec<f64>> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let padded: Vec<char> = std::iter::once('\u{2}')
            .chain(piece.chars())
            .chain(std::iter::once('\u{3}'))
            .collect();
        let mut v = vec![0.0; self.dim];
        for w in padded.windows(3) {
            let s: String = w.iter().collect();
            let h = mix64(fnv1a(s.as_bytes(), self.seed));
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let n = norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        Ok(v)
    }
}

/// An imported base-vocabulary table.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceRecord {
    pub piece: String,
    pub values: Vec<f64>,
}

impl TableEmbedder {
    pub fn new(records: Vec<PieceRecord>) -> Result<Self> {
        let dim = records.first().map(|r| r.values.len()).ok_or(Error::Empty("piece table"))?;
        let mut table = BTreeMap::new();
        for r in records {
            if r.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.values.len(),
                });
            }
            if r.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("piece {:?}", r.piece)));
            }
            if table.insert(r.piece.clone(), r.values).is_some() {
                return Err(Error::DuplicateKey(r.piece));
            }
        }
        Ok(TableEmbedder { dim, table })
    }
}

impl PieceEmbedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, piece: &str) -> Result<Vec<f64>> {
        self.table.get(piece).cloned().ok_or_else(|| Error::Missing {
            what: "piece embedding",
            key: piece.to_string(),
        })
    }
}

/// Token vectors plus a frozen copy of their initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    dim: usize,
    pub vectors: Vec<f64>,
    initial: Vec<f64>,
}

impl EmbeddingTable {
    /// Each token starts at the mean embedding of its pieces.
    pub fn init(tokens: Vec<String>, embedder: &dyn PieceEmbedder) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("token list"));
        }
        let dim = embedder.dim();
        let mut vectors = Vec::with_capacity(tokens.len() * dim);
        for t in &tokens {
            let pieces = split_pieces(t);
            if pieces.is_empty() {
                return Err(Error::Invalid(format!("token {t:?} has no pieces")));
            }
            let mut mean = vec![0.0; dim];
            for p in &pieces {
                let e = embedder.embed(p)?;
                if e.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: e.len(),
                    });
                }
                mean.iter_mut().zip(&e).for_each(|(m, x)| *m += x);
            }
            mean.iter_mut().for_each(|m| *m /= pieces.len() as f64);
            vectors.extend(mean);
        }
        Ok(EmbeddingTable {
            tokens,
            dim,
            initial: vectors.clone(),
            vectors,
        })
    }

    pub fn from_parts(tokens: Vec<String>, dim: usize, vectors: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        let n = tokens.len() * dim;
        if tokens.is_empty() || dim == 0 || vectors.len() != n || initial.len() != n {
            return Err(Error::Artifact("embedding table shape mismatch".into()));
        }
        if vectors.iter().chain(&initial).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding table".into()));
        }
        Ok(EmbeddingTable {
            tokens,
            dim,
            vectors,
            initial,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.vectors[t * self.dim..(t + 1) * self.dim]
    }

    pub fn initial_row(&self, t: usize) -> &[f64] {
        &self.initial[t * self.dim..(t + 1) * self.dim]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Largest Euclidean distance of any row from its initial value.
    pub fn max_displacement(&self) -> f64 {
        (0..self.len())
            .map(|t| crate::nn::sq_dist(self.row(t), self.initial_row(t)).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Row index of a location ID's token at each layer: `layer * K + code`.
pub fn token_rows(seq: &LocationTokenSeq, codebook_size: usize) -> Vec<usize> {
    seq.indices()
        .iter()
        .enumerate()
        .map(|(layer, &c)| layer * codebook_size + c as usize)
        .collect()
}

/// Window co-occurrence statistics and their PMI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceModel {
    pub token_counts: BTreeMap<usize, u64>,
    /// Keys are ordered pairs `(t, u)` with `t < u`.
    pub pair_counts: BTreeMap<(usize, usize), u64>,
    pub total_windows: u64,
    pub pmi_floor: f64,
}

impl CooccurrenceModel {
    pub fn from_counts(
        token_counts: BTreeMap<usize, u64>,
        pair_counts: BTreeMap<(usize, usize), u64>,
        total_windows: u64,
        pmi_floor: f64,
    ) -> Result<Self> {
        if total_windows == 0 {
            return Err(Error::Empty("co-occurrence windows"));
        }
        let mut canon = BTreeMap::new();
        for ((t, u), c) in pair_counts {
            if t == u {
                return Err(Error::Invalid("a token does not pair with itself".into()));
            }
            let key = (t.min(u), t.max(u));
            let ct = token_counts.get(&t).copied().unwrap_or(0);
            let cu = token_counts.get(&u).copied().unwrap_or(0);
            if c > ct.min(cu) {
                return Err(Error::Invalid(format!("pair ({t}, {u}) counted more often than its tokens")));
            }
            *canon.entry(key).or_insert(0) += c;
        }
        if token_counts.values().any(|&c| c > total_windows) {
            return Err(Error::Invalid("token counted in more windows than exist".into()));
        }
        Ok(CooccurrenceModel {
            token_counts,
            pair_counts: canon,
            total_windows,
            pmi_floor,
        })
    }

    /// Clipped PMI, symmetric; the floor when the pair never co-occurs.
    pub fn pmi(&self, t: usize, u: usize) -> f64 {
        let c = self.pair_counts.get(&(t.min(u), t.max(u))).copied().unwrap_or(0);
        if c == 0 || t == u {
            return self.pmi_floor;
        }
        let ct = self.token_counts[&t] as f64;
        let cu = self.token_counts[&u] as f64;
        let w = self.total_windows as f64;
        ((c as f64 * w) / (ct * cu)).ln().max(self.pmi_floor)
    }

    /// Observed pairs with positive clipped PMI, with their weights.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.pair_counts
            .keys()
            .map(|&(t, u)| (t, u, self.pmi(t, u)))
            .filter(|e| e.2 > 0.0)
            .collect()
    }
}

/// One window per occupied cell: the tokens of every location within
/// Chebyshev distance `radius` of it.
pub fn build_pmi(
    locations: &[(Loc, LocationTokenSeq)],
    codebook_size: usize,
    radius: u32,
    pmi_floor: f64,
) -> Result<CooccurrenceModel> {
    if locations.is_empty() {
        return Err(Error::Empty("location set"));
    }
    let mut by_cell: BTreeMap<Loc, BTreeSet<usize>> = BTreeMap::new();
    for (loc, seq) in locations {
        by_cell.entry(*loc).or_default().extend(token_rows(seq, codebook_size));
    }
    let r = radius as i64;
    let mut token_counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut pair_counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for center in by_cell.keys() {
        let mut window: BTreeSet<usize> = BTreeSet::new();
        for dr in -r..=r {
            for dc in -r..=r {
                let (row, col) = (center.row as i64 + dr, center.col as i64 + dc);
                if row < 0 || col < 0 {
                    continue;
                }
                if let Some(toks) = by_cell.get(&Loc::new(row as u32, col as u32)) {
                    window.extend(toks);
                }
            }
        }
        let toks: Vec<usize> = window.into_iter().collect();
        for (i, &t) in toks.iter().enumerate() {
            *token_counts.entry(t).or_insert(0) += 1;
            for &u in &toks[i + 1..] {
                *pair_counts.entry((t, u)).or_insert(0) += 1;
            }
        }
    }
    CooccurrenceModel::from_counts(token_counts, pair_counts, by_cell.len() as u64, pmi_floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub lambda_prior: f64,
    pub lambda_coh: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub neighborhood_radius_cells: u32,
    pub pmi_floor: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            lambda_prior: 0.1,
            lambda_coh: 0.01,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 256,
            seed: 42,
            neighborhood_radius_cells: 1,
            pmi_floor: 0.0,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_prior >= 0.0 && self.lambda_coh >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("learning rate and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// A location ID as table rows, with its semantic target.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignSample {
    pub rows: Vec<usize>,
    pub target: Vec<f64>,
}

/// Token table and the linear map from token space to the semantic space.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignModel {
    pub table: EmbeddingTable,
    pub projector: Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub main: f64,
    pub prior: f64,
    pub coh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignGrads {
    pub table: Vec<f64>,
    pub projector: Dense,
}

impl AlignModel {
    pub fn new(table: EmbeddingTable, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projector = Dense::init(table.dim(), out_dim, &mut rng);
        AlignModel { table, projector }
    }

    fn mean_embedding(&self, rows: &[usize]) -> Vec<f64> {
        let mut z = vec![0.0; self.table.dim()];
        for &t in rows {
            z.iter_mut().zip(self.table.row(t)).for_each(|(a, b)| *a += b);
        }
        z.iter_mut().for_each(|a| *a /= rows.len() as f64);
        z
    }

    /// Projected semantic vector for a location ID.
    pub fn project(&self, rows: &[usize]) -> Vec<f64> {
        self.projector.forward(&self.mean_embedding(rows))
    }

    fn check_batch(&self, batch: &[AlignSample]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Empty("alignment batch"));
        }
        for (i, s) in batch.iter().enumerate() {
            if s.rows.is_empty() || s.rows.iter().any(|&t| t >= self.table.len()) {
                return Err(Error::Invalid(format!("sample {i} references unknown tokens")));
            }
            if s.target.len() != self.projector.out_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.projector.out_dim,
                    found: s.target.len(),
                });
            }
        }
        Ok(())
    }

    pub fn loss(&self, batch: &[AlignSample], edges: &[(usize, usize, f64)], cfg: &AlignConfig) -> Result<LossParts> {
        self.loss_impl(batch, edges, cfg, None)
    }

    pub fn loss_and_grads(
        &self,
        batch: &[AlignSample],
        edges: &[(usize, usize, f64)],
        cfg: &AlignConfig,
    ) -> Result<(LossParts, AlignGrads)> {
        let mut g = AlignGrads {
            table: vec![0.0; self.table.vectors.len()],
            projector: Dense::zeros(self.projector.in_dim, self.projector.out_dim),
        };
        let parts = self.loss_impl(batch, edges, cfg, Some(&mut g))?;
        Ok((parts, g))
    }

    fn loss_impl(
        &self,
        batch: &[AlignSample],
        edges: &[(usize, usize, f64)],
        cfg: &AlignConfig,
        mut grads: Option<&mut AlignGrads>,
    ) -> Result<LossParts> {
        self.check_batch(batch)?;
        let d = self.table.dim();
        let b = batch.len() as f64;

        let mut main = 0.0;
        for (i, s) in batch.iter().enumerate() {
            let z = self.mean_embedding(&s.rows);
            let y_hat = self.projector.forward(&z);
            let (nh, ny) = (norm(&y_hat), norm(&s.target));
            if nh == 0.0 || ny == 0.0 {
                return Err(Error::Numerical(format!("sample {i}: cosine undefined for a zero vector")));
            }
            let cos = dot(&y_hat, &s.target) / (nh * ny);
            // cos never exceeds 1, so the hinge is inactive.
            main += (1.0 - cos).max(0.0);
            if let Some(g) = grads.as_deref_mut() {
                let g_out: Vec<f64> = y_hat
                    .iter()
                    .zip(&s.target)
                    .map(|(h, y)| -(y / (nh * ny) - cos * h / (nh * nh)) / b)
                    .collect();
                let g_z = self.projector.backward(&z, &g_out, &mut g.projector);
                let k = s.rows.len() as f64;
                for &t in &s.rows {
                    for (a, gz) in g.table[t * d..(t + 1) * d].iter_mut().zip(&g_z) {
                        *a += gz / k;
                    }
                }
            }
        }
        main /= b;

        let m = self.table.len() as f64;
        let mut prior = 0.0;
        for (i, (e, e0)) in self.table.vectors.iter().zip(self.table.initial()).enumerate() {
            prior += (e - e0) * (e - e0);
            if let Some(g) = grads.as_deref_mut() {
                g.table[i] += cfg.lambda_prior * 2.0 * (e - e0) / m;
            }
        }
        prior /= m;

        let mut coh = 0.0;
        if !edges.is_empty() {
            let ne = edges.len() as f64;
            for &(t, u, w) in edges {
                let (et, eu) = (self.table.row(t), self.table.row(u));
                coh += w * crate::nn::sq_dist(et, eu);
                if let Some(g) = grads.as_deref_mut() {
                    for j in 0..d {
                        let diff = cfg.lambda_coh * 2.0 * w * (et[j] - eu[j]) / ne;
                        g.table[t * d + j] += diff;
                        g.table[u * d + j] -= diff;
                    }
                }
            }
            coh /= ne;
        }

        Ok(LossParts {
            total: main + cfg.lambda_prior * prior + cfg.lambda_coh * coh,
            main,
            prior,
            coh,
        })
    }

    pub fn to_container(&self) -> Container {
        #[derive(Serialize)]
        struct Header<'a> {
            tokens: &'a [String],
            dim: usize,
            out_dim: usize,
        }
        Container {
            magic: EMBEDDING_MAGIC,
            version: EMBEDDING_FORMAT_VERSION,
            header: serde_json::to_string(&Header {
                tokens: self.table.tokens(),
                dim: self.table.dim(),
                out_dim: self.projector.out_dim,
            })
            .expect("header serializes"),
            arrays: vec![
                self.table.vectors.clone(),
                self.table.initial.clone(),
                self.projector.weight.clone(),
                self.projector.bias.clone(),
            ],
        }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            tokens: Vec<String>,
            dim: usize,
            out_dim: usize,
        }
        let h: Header =
            serde_json::from_str(&c.header).map_err(|e| Error::Artifact(format!("embedding header: {e}")))?;
        let [vectors, initial, weight, bias]: [Vec<f64>; 4] = c
            .arrays
            .try_into()
            .map_err(|_| Error::Artifact("embedding artifact needs four arrays".into()))?;
        if weight.len() != h.dim * h.out_dim || bias.len() != h.out_dim {
            return Err(Error::Artifact("projector shape mismatch".into()));
        }
        Ok(AlignModel {
            table: EmbeddingTable::from_parts(h.tokens, h.dim, vectors, initial)?,
            projector: Dense {
                in_dim: h.dim,
                out_dim: h.out_dim,
                weight,
                bias,
            },
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(Container::from_bytes(bytes, EMBEDDING_MAGIC, EMBEDDING_FORMAT_VERSION)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::load(path, EMBEDDING_MAGIC, EMBEDDING_FORMAT_VERSION)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    /// Full-dataset losses; entry 0 is before training.
    pub epochs: Vec<LossParts>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

/// Adam on token rows and projector over shuffled mini-batches. The
/// returned model is the lowest full-dataset loss seen, so the final loss
/// never exceeds the starting one.
pub fn optimize_embeddings(
    model: &AlignModel,
    dataset: &[AlignSample],
    pmi: &CooccurrenceModel,
    cfg: &AlignConfig,
) -> Result<(AlignModel, AlignReport)> {
    cfg.validate()?;
    let edges = pmi.edges();
    let mut cur = model.clone();
    let start = cur.loss(dataset, &edges, cfg)?;
    let mut best = (start.total, 0usize, cur.clone());
    let mut epochs = vec![start];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(AdamWConfig::new(cfg.learning_rate, 0.0));
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<AlignSample> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let (_, g) = cur.loss_and_grads(&batch, &edges, cfg)?;
            let AlignModel { table, projector } = &mut cur;
            opt.step(
                &mut [
                    table.vectors.as_mut_slice(),
                    projector.weight.as_mut_slice(),
                    projector.bias.as_mut_slice(),
                ],
                &[&g.table, &g.projector.weight, &g.projector.bias],
                &[false, false, false],
            );
        }
        let parts = cur.loss(dataset, &edges, cfg)?;
        if !parts.total.is_finite() {
            return Err(Error::Numerical(format!("alignment loss is {} at epoch {epoch}", parts.total)));
        }
        if parts.total < best.0 {
            best = (parts.total, epoch, cur.clone());
        }
        epochs.push(parts);
    }
    Ok((
        best.2,
        AlignReport {
            epochs,
            best_epoch: best.1,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces() {
        assert_eq!(split_pieces("<a_12>"), vec!["<", "a", "_", "12", ">"]);
        assert_eq!(split_pieces("ab cd"), vec!["ab", "cd"]);
        assert!(split_pieces("").is_empty());
    }

    struct Fixed(BTreeMap<&'static str, Vec<f64>>);

    impl PieceEmbedder for Fixed {
        fn dim(&self) -> usize {
            2
        }
        fn embed(&self, p: &str) -> Result<Vec<f64>> {
            Ok(self.0.get(p).cloned().unwrap_or(vec![9.0, 9.0]))
        }
    }

    #[test]
    fn init_is_mean_of_pieces() {
        let e = Fixed([("x", vec![1.0, 0.0]), ("-", vec![0.0, 1.0])].into());
        let t = EmbeddingTable::init(vec!["x-".into(), "x".into()], &e).unwrap();
        assert_eq!(t.row(0), &[0.5, 0.5]);
        assert_eq!(t.row(1), &[1.0, 0.0]);
        assert_eq!(t.initial(), t.vectors.as_slice());
        assert!(EmbeddingTable::init(vec![], &e).is_err());
        let h = HashedEmbedder { dim: 16, seed: 1 };
        let a = EmbeddingTable::init(vec!["<a_1>".into()], &h).unwrap();
        let b = EmbeddingTable::init(vec!["<a_1>".into()], &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pmi_eight_window_fixture() {
        let m = CooccurrenceModel::from_counts([(0, 4), (1, 4)].into(), [((0, 1), 4)].into(), 8, 0.0).unwrap();
        assert!((m.pmi(0, 1) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(m.pmi(0, 1), m.pmi(1, 0));
        // Independence: 2/8 = 4/8 * 4/8.
        let m = CooccurrenceModel::from_counts([(0, 4), (1, 4)].into(), [((0, 1), 2)].into(), 8, 0.0).unwrap();
        assert!(m.pmi(0, 1).abs() < 1e-12);
        assert!(m.edges().is_empty());
        assert_eq!(m.pmi(0, 5), 0.0);
    }

    #[test]
    fn pmi_from_grid() {
        let seq = |a: u32, b: u32| LocationTokenSeq(vec![a, b]);
        let locs = vec![
            (Loc::new(0, 0), seq(0, 0)),
            (Loc::new(0, 1), seq(1, 0)),
            (Loc::new(5, 5), seq(2, 1)),
        ];
        let m = build_pmi(&locs, 4, 1, 0.0).unwrap();
        assert_eq!(m.total_windows, 3);
        // <b_0> is row 4; it appears in both windows of the first cluster.
        assert_eq!(m.token_counts[&4], 2);
        assert_eq!(m.pair_counts[&(0, 1)], 2);
        assert!(m.pmi(0, 1) > 0.0);
        assert_eq!(m.pmi(0, 2), 0.0);
        assert!(build_pmi(&[], 4, 1, 0.0).is_err());
    }

    fn toy() -> (AlignModel, Vec<AlignSample>) {
        let h = HashedEmbedder { dim: 6, seed: 3 };
        let table = EmbeddingTable::init(crate::rq::all_token_names(2, 5), &h).unwrap();
        let model = AlignModel::new(table, 4, 7);
        let data = (0..5)
            .map(|i| AlignSample {
                rows: vec![i, 5 + (i * 2) % 5],
                target: (0..4).map(|j| ((i * 4 + j) as f64 * 0.7).sin() + 0.1).collect(),
            })
            .collect();
        (model, data)
    }

    #[test]
    fn prior_is_zero_at_init_and_coherence_value() {
        let (model, data) = toy();
        let cfg = AlignConfig::default();
        let l = model.loss(&data, &[], &cfg).unwrap();
        assert_eq!(l.prior, 0.0);
        assert_eq!(l.coh, 0.0);
        // One pair, PMI ln 2, squared distance 4.
        let mut m2 = model.clone();
        let d = m2.table.dim();
        m2.table.vectors[..d].fill(0.0);
        m2.table.vectors[d..2 * d].fill(0.0);
        m2.table.vectors[0] = 2.0;
        let l = m2.loss(&data, &[(0, 1, 2f64.ln())], &cfg).unwrap();
        assert!((l.coh - 4.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_prediction_costs_one() {
        let table = EmbeddingTable::from_parts(vec!["t".into()], 2, vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        let model = AlignModel {
            table,
            projector: Dense {
                in_dim: 2,
                out_dim: 2,
                weight: vec![1.0, 0.0, 0.0, 1.0],
                bias: vec![0.0, 0.0],
            },
        };
        let cfg = AlignConfig::default();
        let perp = [AlignSample {
            rows: vec![0],
            target: vec![0.0, 3.0],
        }];
        assert!((model.loss(&perp, &[], &cfg).unwrap().main - 1.0).abs() < 1e-15);
        let par = [AlignSample {
            rows: vec![0],
            target: vec![5.0, 0.0],
        }];
        assert_eq!(model.loss(&par, &[], &cfg).unwrap().total, 0.0);
        let zero = [AlignSample {
            rows: vec![0],
            target: vec![0.0, 0.0],
        }];
        let err = model.loss(&zero, &[], &cfg).unwrap_err();
        assert!(err.to_string().contains("sample 0"));
    }

    #[test]
    fn zero_epochs_leave_table_unchanged() {
        let (model, data) = toy();
        let pmi = CooccurrenceModel::from_counts(BTreeMap::new(), BTreeMap::new(), 1, 0.0).unwrap();
        let cfg = AlignConfig {
            epochs: 0,
            ..Default::default()
        };
        let (out, report) = optimize_embeddings(&model, &data, &pmi, &cfg).unwrap();
        assert_eq!(out, model);
        assert_eq!(report.epochs.len(), 1);
    }

    #[test]
    fn artifact_round_trip() {
        let (model, _) = toy();
        let bytes = model.to_bytes();
        let back = AlignModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
    }
}
