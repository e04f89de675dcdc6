use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Codebook, CodebookStack, RqConfig};
use crate::error::{Error, Result};
use crate::nn::{sq_dist, AdamW, AdamWConfig, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 is the evaluation before any gradient step.
    pub epoch: usize,
    /// Mean of `||E - MLP(E_hat)||^2` over the corpus.
    pub rec_loss: f64,
    /// `rec_loss` divided by the vector dimension.
    pub rec_mse: f64,
    pub rq_loss: f64,
    pub total: f64,
    pub reseeded: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn initial(&self) -> &EpochStats {
        &self.epochs[0]
    }

    pub fn last(&self) -> &EpochStats {
        self.epochs.last().unwrap()
    }
}

/// Trains encoder, decoder and codebooks on `L_rec + L_RQ` with mini-batch
/// AdamW. Gradients cross the quantizer straight-through: the decoder's
/// input gradient is routed to the encoder output unchanged.
pub fn train_rqvae(corpus: &[Vec<f64>], config: &RqConfig) -> Result<(CodebookStack, TrainReport)> {
    config.validate()?;
    check_corpus(corpus, config.input_dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let encoder = Mlp::new(&config.encoder_dims, &mut rng);
    let decoder = Mlp::new(&config.decoder_dims(), &mut rng);

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let first: Vec<Vec<f64>> = order
        .iter()
        .take(config.batch_size)
        .map(|&i| encoder.forward(&corpus[i]))
        .collect();
    let codebooks = init_codebooks(&first, config.n_layers, config.codebook_size, &mut rng);

    let stack = CodebookStack {
        config: config.clone(),
        encoder,
        decoder,
        codebooks,
    };
    fit(stack, corpus, &mut rng)
}

/// Continues training from an existing stack (its config supplies the
/// hyperparameters; `seed` drives batch order and reseeding).
pub fn train_rqvae_with_init(
    stack: CodebookStack,
    corpus: &[Vec<f64>],
    seed: u64,
) -> Result<(CodebookStack, TrainReport)> {
    stack.config.validate()?;
    check_corpus(corpus, stack.input_dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fit(stack, corpus, &mut rng)
}

fn check_corpus(corpus: &[Vec<f64>], dim: usize) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    for v in corpus {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("training vector".into()));
        }
    }
    Ok(())
}

/// k-means++ seeding, layer by layer: layer `n` is seeded from the residuals
/// left after quantizing `points` with layers `0..n`.
pub fn init_codebooks<R: Rng>(
    points: &[Vec<f64>],
    n_layers: usize,
    size: usize,
    rng: &mut R,
) -> Vec<Codebook> {
    let mut residuals = points.to_vec();
    let mut out = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = kmeans_pp(&residuals, size, rng);
        let cb = Codebook::from_rows(&rows).expect("non-empty seeds");
        for r in residuals.iter_mut() {
            let c = cb.nearest(r);
            for (x, v) in r.iter_mut().zip(cb.codeword(c)) {
                *x -= v;
            }
        }
        out.push(cb);
    }
    out
}

fn kmeans_pp<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

struct Grads {
    encoder: Mlp,
    decoder: Mlp,
    codebooks: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros(stack: &CodebookStack) -> Self {
        Grads {
            encoder: stack.encoder.zeros_like(),
            decoder: stack.decoder.zeros_like(),
            codebooks: stack
                .codebooks
                .iter()
                .map(|c| vec![0.0; c.data.len()])
                .collect(),
        }
    }
}

/// Accumulates `scale * d(L_rec + L_RQ)/d(params)` for one vector, with the
/// stop-gradient and straight-through conventions applied. Returns the
/// sample's `(rec, rq)` losses and its per-layer residuals/codes.
fn accumulate_sample(
    stack: &CodebookStack,
    e: &[f64],
    scale: f64,
    grads: &mut Grads,
) -> Result<(f64, f64, Vec<(usize, Vec<f64>)>)> {
    let alpha = stack.config.alpha;
    let enc_trace = stack.encoder.forward_trace(e);
    let enc = stack.encode_latent(enc_trace.output())?;
    let dec_trace = stack.decoder.forward_trace(&enc.quantized);
    let out = dec_trace.output();

    let rec = sq_dist(e, out);
    let g_out: Vec<f64> = out.iter().zip(e).map(|(y, t)| 2.0 * scale * (y - t)).collect();
    // Straight-through: dL/dE_hat becomes dL/dr_0.
    let mut g_latent = stack.decoder.backward(&dec_trace, &g_out, &mut grads.decoder);

    let mut rq = 0.0;
    let mut picks = Vec::with_capacity(stack.codebooks.len());
    for (n, cb) in stack.codebooks.iter().enumerate() {
        let r = &enc.residuals[n];
        let c = enc.tokens.0[n] as usize;
        let v = cb.codeword(c);
        rq += (1.0 + alpha) * sq_dist(r, v);
        let g_cb = &mut grads.codebooks[n][c * cb.dim..(c + 1) * cb.dim];
        for i in 0..cb.dim {
            // ||sg[r] - v||^2 reaches only the codeword.
            g_cb[i] += 2.0 * scale * (v[i] - r[i]);
            // alpha ||r - sg[v]||^2 reaches only the encoder.
            g_latent[i] += 2.0 * scale * alpha * (r[i] - v[i]);
        }
        picks.push((c, r.clone()));
    }
    stack
        .encoder
        .backward(&enc_trace, &g_latent, &mut grads.encoder);
    Ok((rec, rq, picks))
}

/// Gradient of the batch-mean loss; exposed for gradient checks.
#[doc(hidden)]
pub fn batch_gradients(
    stack: &CodebookStack,
    batch: &[Vec<f64>],
) -> Result<(Mlp, Mlp, Vec<Vec<f64>>)> {
    let mut grads = Grads::zeros(stack);
    let scale = 1.0 / batch.len() as f64;
    for e in batch {
        accumulate_sample(stack, e, scale, &mut grads)?;
    }
    Ok((grads.encoder, grads.decoder, grads.codebooks))
}

fn evaluate(stack: &CodebookStack, corpus: &[Vec<f64>], epoch: usize) -> Result<EpochStats> {
    let mut rec = 0.0;
    let mut rq = 0.0;
    for e in corpus {
        let enc = stack.encode(e)?;
        rec += sq_dist(e, &stack.decode(&enc.quantized));
        for (n, cb) in stack.codebooks.iter().enumerate() {
            let v = cb.codeword(enc.tokens.0[n] as usize);
            rq += (1.0 + stack.config.alpha) * sq_dist(&enc.residuals[n], v);
        }
    }
    let n = corpus.len() as f64;
    let dim = corpus[0].len() as f64;
    let stats = EpochStats {
        epoch,
        rec_loss: rec / n,
        rec_mse: rec / n / dim,
        rq_loss: rq / n,
        total: (rec + rq) / n,
        reseeded: 0,
    };
    if !stats.total.is_finite() {
        return Err(Error::Numerical(format!(
            "loss is {} at epoch {epoch}",
            stats.total
        )));
    }
    Ok(stats)
}

fn fit(
    mut stack: CodebookStack,
    corpus: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<(CodebookStack, TrainReport)> {
    let cfg = stack.config.clone();
    let mut opt = AdamW::new(AdamWConfig::new(cfg.learning_rate, cfg.weight_decay));
    let decay: Vec<bool> = stack
        .encoder
        .decay_mask()
        .into_iter()
        .chain(stack.decoder.decay_mask())
        .chain(std::iter::repeat_n(false, stack.codebooks.len()))
        .collect();

    let mut report = TrainReport {
        epochs: vec![evaluate(&stack, corpus, 0)?],
    };
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut usage = vec![vec![0u64; cfg.codebook_size]; cfg.n_layers];
        let mut last_residuals: Vec<Vec<Vec<f64>>> = vec![Vec::new(); cfg.n_layers];

        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Grads::zeros(&stack);
            let scale = 1.0 / batch.len() as f64;
            for layer in last_residuals.iter_mut() {
                layer.clear();
            }
            for &i in batch {
                let (rec, rq, picks) = accumulate_sample(&stack, &corpus[i], scale, &mut grads)?;
                if !(rec + rq).is_finite() {
                    return Err(Error::Numerical(format!(
                        "loss is NaN or infinite at epoch {epoch} (sample {i})"
                    )));
                }
                for (n, (c, r)) in picks.into_iter().enumerate() {
                    usage[n][c] += 1;
                    last_residuals[n].push(r);
                }
            }

            let mut grad_bufs: Vec<&[f64]> = grads.encoder.params();
            grad_bufs.extend(grads.decoder.params());
            grad_bufs.extend(grads.codebooks.iter().map(|g| g.as_slice()));
            let mut params: Vec<&mut [f64]> = stack.encoder.params_mut();
            params.extend(stack.decoder.params_mut());
            params.extend(stack.codebooks.iter_mut().map(|c| c.data.as_mut_slice()));
            opt.step(&mut params, &grad_bufs, &decay);
        }

        let mut reseeded = 0;
        for (n, cb) in stack.codebooks.iter_mut().enumerate() {
            for c in 0..cb.size {
                if usage[n][c] == 0 && !last_residuals[n].is_empty() {
                    let pick = rng.gen_range(0..last_residuals[n].len());
                    cb.codeword_mut(c).copy_from_slice(&last_residuals[n][pick]);
                    reseeded += 1;
                }
            }
        }

        let mut stats = evaluate(&stack, corpus, epoch)?;
        stats.reseeded = reseeded;
        report.epochs.push(stats);
    }
    stack.check_finite()?;
    Ok((stack, report))
}
