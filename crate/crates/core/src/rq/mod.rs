//! Residual-quantized autoencoder mapping semantic vectors to multi-token
//! location IDs.
//!
//! An MLP encoder maps `E` to a latent `r_0`. Each of the `N` layers picks
//! the codeword nearest to the current residual and subtracts it, so
//! `r_0 = sum_n v^n_{c_n} + r_N`. The decoder mirrors the encoder and
//! reconstructs `E` from the quantized sum.

mod train;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Container;
use crate::nn::{sq_dist, Dense, Mlp};

pub use train::{
    batch_gradients, init_codebooks, train_rqvae, train_rqvae_with_init, EpochStats, TrainReport,
};

pub const CODEBOOK_MAGIC: [u8; 4] = *b"RQCB";
pub const CODEBOOK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RqConfig {
    pub n_layers: usize,
    pub codebook_size: usize,
    pub code_dim: usize,
    /// Encoder widths including the input dimension; the last entry is the
    /// latent (code) dimension. The decoder uses the reverse.
    pub encoder_dims: Vec<usize>,
    pub alpha: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RqConfig {
    fn default() -> Self {
        RqConfig {
            n_layers: 4,
            codebook_size: 512,
            code_dim: 64,
            encoder_dims: vec![2048, 1024, 512, 256, 128, 64],
            alpha: 0.25,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            batch_size: 1024,
            epochs: 50,
            seed: 42,
        }
    }
}

impl RqConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1".into());
        }
        if self.n_layers > 26 {
            return fail("n_layers is limited to 26 (one letter prefix per layer)".into());
        }
        if self.codebook_size < 2 {
            return fail("codebook_size must be at least 2".into());
        }
        if self.encoder_dims.contains(&0) {
            return fail("encoder dimensions must be positive".into());
        }
        if self.encoder_dims.last() != Some(&self.code_dim) {
            return fail(format!(
                "last encoder dimension {:?} must equal code_dim {}",
                self.encoder_dims.last(),
                self.code_dim
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be finite and non-negative".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_dims[0]
    }

    pub fn decoder_dims(&self) -> Vec<usize> {
        self.encoder_dims.iter().rev().copied().collect()
    }
}

/// The discrete location ID: one codeword index per quantization layer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationTokenSeq(pub Vec<u32>);

impl LocationTokenSeq {
    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Token names per position, e.g. `["<a_3>", "<b_17>"]`.
    pub fn token_names(&self) -> Vec<String> {
        self.0
            .iter()
            .enumerate()
            .map(|(layer, &c)| token_name(layer, c))
            .collect()
    }

    pub fn validate(&self, n_layers: usize, codebook_size: usize) -> Result<()> {
        if self.0.len() != n_layers {
            return Err(Error::Invalid(format!(
                "location ID has {} tokens, expected {n_layers}",
                self.0.len()
            )));
        }
        if let Some(&c) = self.0.iter().find(|&&c| c as usize >= codebook_size) {
            return Err(Error::Invalid(format!(
                "codeword index {c} outside [0, {codebook_size})"
            )));
        }
        Ok(())
    }
}

/// `<a_c>` for layer 0, `<b_c>` for layer 1, and so on.
pub fn token_name(layer: usize, code: u32) -> String {
    format!("<{}_{code}>", layer_prefix(layer))
}

pub fn layer_prefix(layer: usize) -> char {
    assert!(layer < 26, "at most 26 quantization layers");
    (b'a' + layer as u8) as char
}

/// All `N * K` codeword token names, layer-major.
pub fn all_token_names(n_layers: usize, codebook_size: usize) -> Vec<String> {
    (0..n_layers)
        .flat_map(|l| (0..codebook_size as u32).map(move |c| token_name(l, c)))
        .collect()
}

impl fmt::Display for LocationTokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (layer, c) in self.0.iter().enumerate() {
            write!(f, "<{}_{c}>", layer_prefix(layer))?;
        }
        Ok(())
    }
}

impl FromStr for LocationTokenSeq {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("malformed location ID {s:?}"));
        let mut out = Vec::new();
        let mut rest = s;
        while !rest.is_empty() {
            let body = rest.strip_prefix('<').ok_or_else(bad)?;
            let end = body.find('>').ok_or_else(bad)?;
            let (prefix, code) = body[..end].split_once('_').ok_or_else(bad)?;
            let expected = layer_prefix(out.len().min(25)).to_string();
            if prefix != expected || out.len() >= 26 {
                return Err(bad());
            }
            out.push(code.parse::<u32>().map_err(|_| bad())?);
            rest = &body[end + 1..];
        }
        if out.is_empty() {
            return Err(bad());
        }
        Ok(LocationTokenSeq(out))
    }
}

/// One quantization layer: `size` codewords of `dim` entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub size: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Codebook {
    pub fn zeros(size: usize, dim: usize) -> Self {
        Codebook {
            size,
            dim,
            data: vec![0.0; size * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::Empty("codebook rows"))?.len();
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        Ok(Codebook {
            size: rows.len(),
            dim,
            data: rows.concat(),
        })
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn codeword_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the nearest codeword by squared L2 distance; lowest index
    /// wins ties.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.size {
            let d = sq_dist(x, self.codeword(i));
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Selects the nearest codeword for `residual` and returns it with the next
/// residual `residual - codeword`.
pub fn quantize_layer(residual: &[f64], layer: &Codebook) -> Result<(usize, Vec<f64>)> {
    if residual.len() != layer.dim {
        return Err(Error::DimensionMismatch {
            expected: layer.dim,
            found: residual.len(),
        });
    }
    if residual.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("residual".into()));
    }
    let idx = layer.nearest(residual);
    let next = residual
        .iter()
        .zip(layer.codeword(idx))
        .map(|(r, v)| r - v)
        .collect();
    Ok((idx, next))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookStack {
    pub config: RqConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub codebooks: Vec<Codebook>,
}

/// Result of pushing one vector through the encoder and the quantizer cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub tokens: LocationTokenSeq,
    /// Sum of the selected codewords.
    pub quantized: Vec<f64>,
    /// `r_0 .. r_N`; `residuals[0]` is the encoder output.
    pub residuals: Vec<Vec<f64>>,
}

impl Encoding {
    pub fn latent(&self) -> &[f64] {
        &self.residuals[0]
    }

    pub fn final_residual(&self) -> &[f64] {
        self.residuals.last().unwrap()
    }
}

impl CodebookStack {
    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim().unwrap_or(self.config.code_dim)
    }

    pub fn encode_latent(&self, latent: &[f64]) -> Result<Encoding> {
        let mut residuals = Vec::with_capacity(self.codebooks.len() + 1);
        residuals.push(latent.to_vec());
        let mut quantized = vec![0.0; latent.len()];
        let mut tokens = Vec::with_capacity(self.codebooks.len());
        for cb in &self.codebooks {
            let (idx, next) = quantize_layer(residuals.last().unwrap(), cb)?;
            for (q, v) in quantized.iter_mut().zip(cb.codeword(idx)) {
                *q += v;
            }
            tokens.push(idx as u32);
            residuals.push(next);
        }
        Ok(Encoding {
            tokens: LocationTokenSeq(tokens),
            quantized,
            residuals,
        })
    }

    /// Maps a semantic vector to its location ID and quantized sum.
    pub fn encode(&self, v: &[f64]) -> Result<Encoding> {
        if v.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("semantic vector".into()));
        }
        self.encode_latent(&self.encoder.forward(v))
    }

    pub fn decode(&self, quantized: &[f64]) -> Vec<f64> {
        self.decoder.forward(quantized)
    }

    /// Quantized sum for a known token sequence.
    pub fn lookup(&self, tokens: &LocationTokenSeq) -> Result<Vec<f64>> {
        tokens.validate(self.codebooks.len(), self.config.codebook_size)?;
        let mut q = vec![0.0; self.config.code_dim];
        for (cb, &c) in self.codebooks.iter().zip(tokens.indices()) {
            for (x, v) in q.iter_mut().zip(cb.codeword(c as usize)) {
                *x += v;
            }
        }
        Ok(q)
    }

    pub fn check_finite(&self) -> Result<()> {
        if !self.encoder.is_finite() || !self.decoder.is_finite() {
            return Err(Error::NonFinite("network weights".into()));
        }
        if self
            .codebooks
            .iter()
            .any(|c| c.data.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite("codewords".into()));
        }
        Ok(())
    }

    pub fn to_container(&self) -> Container {
        #[derive(Serialize)]
        struct Header<'a> {
            config: &'a RqConfig,
        }
        let mut arrays = Vec::new();
        for l in self.encoder.layers.iter().chain(&self.decoder.layers) {
            arrays.push(l.weight.clone());
            arrays.push(l.bias.clone());
        }
        arrays.extend(self.codebooks.iter().map(|c| c.data.clone()));
        Container {
            magic: CODEBOOK_MAGIC,
            version: CODEBOOK_FORMAT_VERSION,
            header: serde_json::to_string(&Header {
                config: &self.config,
            })
            .expect("config serializes"),
            arrays,
        }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            config: RqConfig,
        }
        let header: Header = serde_json::from_str(&c.header)
            .map_err(|e| Error::Artifact(format!("codebook header: {e}")))?;
        let config = header.config;
        config.validate()?;

        let mut arrays = c.arrays.into_iter();
        let mut take = |len: usize, what: &str| -> Result<Vec<f64>> {
            let a = arrays
                .next()
                .ok_or_else(|| Error::Artifact(format!("missing {what}")))?;
            if a.len() != len {
                return Err(Error::Artifact(format!(
                    "{what} has {} values, expected {len}",
                    a.len()
                )));
            }
            Ok(a)
        };
        let mut build = |dims: &[usize]| -> Result<Mlp> {
            let mut layers = Vec::new();
            for w in dims.windows(2) {
                layers.push(Dense {
                    in_dim: w[0],
                    out_dim: w[1],
                    weight: take(w[0] * w[1], "layer weight")?,
                    bias: take(w[1], "layer bias")?,
                });
            }
            Ok(Mlp { layers })
        };
        let encoder = build(&config.encoder_dims)?;
        let decoder = build(&config.decoder_dims())?;
        let mut codebooks = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            codebooks.push(Codebook {
                size: config.codebook_size,
                dim: config.code_dim,
                data: take(config.codebook_size * config.code_dim, "codebook")?,
            });
        }
        if arrays.next().is_some() {
            return Err(Error::Artifact("unexpected extra arrays".into()));
        }
        Ok(CodebookStack {
            config,
            encoder,
            decoder,
            codebooks,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(Container::from_bytes(
            bytes,
            CODEBOOK_MAGIC,
            CODEBOOK_FORMAT_VERSION,
        )?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::load(
            path,
            CODEBOOK_MAGIC,
            CODEBOOK_FORMAT_VERSION,
        )?)
    }
}

/// Codebook term plus `alpha` times the commitment term, summed over layers:
/// `sum_n ||sg[r_n] - v_n||^2 + alpha ||r_n - sg[v_n]||^2`. The two terms
/// are numerically equal in the forward pass; they differ only in which
/// parameters receive their gradient (codewords vs. encoder).
pub fn rq_loss(residuals: &[Vec<f64>], codewords: &[Vec<f64>], alpha: f64) -> Result<f64> {
    if residuals.len() != codewords.len() {
        return Err(Error::Invalid(format!(
            "{} residuals but {} codewords",
            residuals.len(),
            codewords.len()
        )));
    }
    let mut total = 0.0;
    for (r, v) in residuals.iter().zip(codewords) {
        if r.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: r.len(),
                found: v.len(),
            });
        }
        total += (1.0 + alpha) * sq_dist(r, v);
    }
    Ok(total)
}

/// `||E - decoder(E_hat)||^2`.
pub fn rec_loss(e: &[f64], quantized: &[f64], decoder: &Mlp) -> Result<f64> {
    if let Some(d) = decoder.in_dim() {
        if d != quantized.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: quantized.len(),
            });
        }
    }
    let out = decoder.forward(quantized);
    if out.len() != e.len() {
        return Err(Error::DimensionMismatch {
            expected: out.len(),
            found: e.len(),
        });
    }
    Ok(sq_dist(e, &out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookReport {
    pub n_vectors: usize,
    /// Per layer, how many corpus vectors selected each codeword.
    pub usage: Vec<Vec<u64>>,
    pub used_per_layer: Vec<usize>,
    pub distinct_sequences: usize,
    /// `1 - distinct_sequences / n_vectors`.
    pub collision_rate: f64,
}

pub fn codebook_report(stack: &CodebookStack, corpus: &[Vec<f64>]) -> Result<CodebookReport> {
    let mut usage = vec![vec![0u64; stack.config.codebook_size]; stack.codebooks.len()];
    let mut seqs = BTreeSet::new();
    for v in corpus {
        let enc = stack.encode(v)?;
        for (layer, &c) in enc.tokens.indices().iter().enumerate() {
            usage[layer][c as usize] += 1;
        }
        seqs.insert(enc.tokens);
    }
    let used_per_layer = usage
        .iter()
        .map(|u| u.iter().filter(|&&n| n > 0).count())
        .collect();
    let collision_rate = if corpus.is_empty() {
        0.0
    } else {
        1.0 - seqs.len() as f64 / corpus.len() as f64
    };
    Ok(CodebookReport {
        n_vectors: corpus.len(),
        usage,
        used_per_layer,
        distinct_sequences: seqs.len(),
        collision_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_codebook() -> Codebook {
        Codebook::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn published_defaults() {
        let c = RqConfig::default();
        assert_eq!(c.n_layers, 4);
        assert_eq!(c.codebook_size, 512);
        assert_eq!(c.code_dim, 64);
        assert_eq!(c.encoder_dims, vec![2048, 1024, 512, 256, 128, 64]);
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.batch_size, 1024);
        c.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let mut c = RqConfig {
            code_dim: 32,
            ..RqConfig::default()
        };
        assert!(c.validate().is_err());
        c.code_dim = 64;
        c.codebook_size = 1;
        assert!(c.validate().is_err());
        c.codebook_size = 2;
        c.n_layers = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn quantize_exact_match() {
        let cb = unit_codebook();
        let (i, r) = quantize_layer(&[0.0, 1.0], &cb).unwrap();
        assert_eq!(i, 1);
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn quantize_nearest_and_residual() {
        // ||[0.9,0.1]-[1,0]||^2 = 0.02 < ||[0.9,0.1]-[0,1]||^2 = 1.62
        let (i, r) = quantize_layer(&[0.9, 0.1], &unit_codebook()).unwrap();
        assert_eq!(i, 0);
        assert!((r[0] + 0.1).abs() < 1e-12 && (r[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn quantize_tie_takes_lowest_index() {
        let cb = unit_codebook();
        let d0 = sq_dist(&[0.5, 0.5], cb.codeword(0));
        let d1 = sq_dist(&[0.5, 0.5], cb.codeword(1));
        assert_eq!(d0, d1);
        assert_eq!(quantize_layer(&[0.5, 0.5], &cb).unwrap().0, 0);
    }

    #[test]
    fn quantize_errors() {
        let cb = unit_codebook();
        assert!(matches!(
            quantize_layer(&[1.0], &cb),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            quantize_layer(&[f64::NAN, 0.0], &cb),
            Err(Error::NonFinite(_))
        ));
    }

    fn identity_stack(first: Vec<f64>) -> CodebookStack {
        let dim = first.len();
        let config = RqConfig {
            n_layers: 3,
            codebook_size: 2,
            code_dim: dim,
            encoder_dims: vec![dim],
            ..RqConfig::default()
        };
        let mut layer1 = Codebook::zeros(2, dim);
        layer1.codeword_mut(1).copy_from_slice(&first);
        CodebookStack {
            config,
            encoder: Mlp::identity(),
            decoder: Mlp::identity(),
            codebooks: vec![layer1, Codebook::zeros(2, dim), Codebook::zeros(2, dim)],
        }
    }

    #[test]
    fn perfect_first_layer_quantization() {
        let r0 = vec![0.3, -1.2, 2.0];
        let stack = identity_stack(r0.clone());
        let enc = stack.encode(&r0).unwrap();
        assert_eq!(enc.tokens.indices(), &[1, 0, 0]);
        assert_eq!(enc.quantized, r0);
        assert!(enc.residuals[1].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn token_rendering_and_parsing() {
        let t = LocationTokenSeq(vec![3, 17, 0, 511]);
        assert_eq!(t.to_string(), "<a_3><b_17><c_0><d_511>");
        assert_eq!("<a_3><b_17><c_0><d_511>".parse::<LocationTokenSeq>().unwrap(), t);
        assert!("<a_3><c_1>".parse::<LocationTokenSeq>().is_err());
        assert!("<a_x>".parse::<LocationTokenSeq>().is_err());
        assert!("".parse::<LocationTokenSeq>().is_err());
        assert_eq!(all_token_names(2, 3).len(), 6);
        assert!(t.validate(4, 512).is_ok());
        assert!(t.validate(4, 511).is_err());
        assert!(t.validate(3, 512).is_err());
    }

    #[test]
    fn rq_loss_values() {
        let r = vec![vec![1.0, 2.0], vec![0.5, 0.5]];
        assert_eq!(rq_loss(&r, &r, 0.25).unwrap(), 0.0);
        let one = rq_loss(&[vec![1.0, 0.0]], &[vec![0.0, 0.0]], 0.25).unwrap();
        assert!((one - 1.25).abs() < 1e-12);

        let v = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        let sum_sq: f64 = r.iter().zip(&v).map(|(a, b)| sq_dist(a, b)).sum();
        let a = rq_loss(&r, &v, 0.3).unwrap();
        let b = rq_loss(&r, &v, 0.6).unwrap();
        assert!((b - a - 0.3 * sum_sq).abs() < 1e-12);
        assert!(rq_loss(&r, &v[..1], 0.3).is_err());
    }

    #[test]
    fn rec_loss_values() {
        assert_eq!(rec_loss(&[1.0, 0.0], &[1.0, 0.0], &Mlp::identity()).unwrap(), 0.0);
        assert_eq!(rec_loss(&[1.0, 0.0], &[0.0, 0.0], &Mlp::identity()).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dec = Mlp::new(&[2, 3], &mut rng);
        assert!(rec_loss(&[1.0, 0.0], &[0.0, 0.0, 0.0], &dec).is_err());
    }

    #[test]
    fn report_single_and_duplicate() {
        let stack = identity_stack(vec![1.0, 1.0]);
        let r = codebook_report(&stack, &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(r.distinct_sequences, 1);
        assert_eq!(r.collision_rate, 0.0);
        let r = codebook_report(&stack, &[vec![0.2, 0.1], vec![0.2, 0.1]]).unwrap();
        assert_eq!(r.distinct_sequences, 1);
        assert_eq!(r.collision_rate, 0.5);
    }

    #[test]
    fn artifact_round_trip_is_byte_exact() {
        let config = RqConfig {
            n_layers: 2,
            codebook_size: 4,
            code_dim: 3,
            encoder_dims: vec![5, 4, 3],
            ..RqConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let codebooks = (0..2)
            .map(|_| Codebook {
                size: 4,
                dim: 3,
                data: (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        let stack = CodebookStack {
            encoder: Mlp::new(&config.encoder_dims, &mut rng),
            decoder: Mlp::new(&config.decoder_dims(), &mut rng),
            config,
            codebooks,
        };
        let bytes = stack.to_bytes();
        let back = CodebookStack::from_bytes(&bytes).unwrap();
        assert_eq!(back, stack);
        assert_eq!(back.to_bytes(), bytes);

        let mut wrong = bytes.clone();
        wrong[4] = 99;
        assert!(matches!(
            CodebookStack::from_bytes(&wrong),
            Err(Error::Version { .. })
        ));
    }
}
