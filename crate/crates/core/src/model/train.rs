use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, init_model, Gradients, ModelParams, Mode, SeaConfig};
use crate::error::{Error, Result};
use crate::features::FrameMatrix;
use crate::numerics::{Matrix, Real};

/// Momentum SGD: `v ← momentum·v − lr·g; p ← p + v`.
pub fn sgd_step<T: Real>(
    p: &mut ModelParams<T>,
    g: &Gradients<T>,
    velocity: &mut Gradients<T>,
    lr: f64,
    momentum: f64,
) {
    for ((pt, gt), vt) in p
        .tensors_mut()
        .into_iter()
        .zip(g.tensors())
        .zip(velocity.tensors_mut())
    {
        for ((pv, &gv), vv) in pt
            .as_mut_slice()
            .iter_mut()
            .zip(gt.as_slice())
            .zip(vt.as_mut_slice())
        {
            let v = momentum * vv.as_f64() - lr * gv.as_f64();
            *vv = T::from_f64(v);
            *pv = T::from_f64(pv.as_f64() + v);
        }
    }
}

/// Splits every utterance into non-overlapping runs of `chunk_frames`
/// frames, dropping the remainder. Returns the chunks and the number of
/// utterances too short to yield any.
pub fn chunk_corpus(corpus: &[FrameMatrix], chunk_frames: usize) -> (Vec<Matrix<f32>>, usize) {
    let mut chunks = Vec::new();
    let mut skipped = 0;
    for utt in corpus {
        let n = utt.num_frames();
        if n < chunk_frames {
            skipped += 1;
            continue;
        }
        for c in 0..n / chunk_frames {
            chunks.push(utt.values.slice_rows(c * chunk_frames, (c + 1) * chunk_frames));
        }
    }
    (chunks, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub direct: f64,
    pub expressed: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: ModelParams<f32>,
    pub epochs: Vec<EpochLoss>,
    pub skipped_utterances: usize,
    pub num_chunks: usize,
}

fn run_epochs(
    mut params: ModelParams<f32>,
    corpus: &[FrameMatrix],
    cfg: &SeaConfig,
    mode: Mode,
    epochs: usize,
    stream: u64,
) -> Result<TrainReport> {
    cfg.validate()?;
    if let Some(u) = corpus.iter().find(|u| u.dim() != params.input_dim()) {
        return Err(Error::ShapeMismatch(format!(
            "utterance {} has dimension {}, model expects {}",
            u.utt_id,
            u.dim(),
            params.input_dim()
        )));
    }
    let (chunks, skipped) = chunk_corpus(corpus, cfg.chunk_frames);
    if chunks.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed as u64);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    let mut velocity = params.zeros_like();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut sum = EpochLoss {
            direct: 0.0,
            expressed: 0.0,
            total: 0.0,
        };
        for &c in &order {
            let trace = forward(&params, &chunks[c], mode)?;
            let grads = backward(&params, &trace, mode, cfg.stop_gradient)?;
            sgd_step(&mut params, &grads, &mut velocity, cfg.learning_rate, cfg.momentum);
            sum.direct += trace.loss_direct;
            sum.expressed += trace.loss_self;
            sum.total += trace.loss_total;
        }
        let n = chunks.len() as f64;
        let mean = EpochLoss {
            direct: sum.direct / n,
            expressed: sum.expressed / n,
            total: sum.total / n,
        };
        if !mean.total.is_finite() {
            return Err(Error::NonFiniteGradient("epoch loss"));
        }
        history.push(mean);
    }
    Ok(TrainReport {
        params,
        epochs: history,
        skipped_utterances: skipped,
        num_chunks: chunks.len(),
    })
}

/// Stage one: a plain autoencoder (direct reconstruction only) from a fresh
/// initialization.
pub fn pretrain_autoencoder(corpus: &[FrameMatrix], cfg: &SeaConfig) -> Result<TrainReport> {
    let params = init_model(cfg)?;
    run_epochs(params, corpus, cfg, Mode::Pretrain, cfg.pretrain_epochs, 1)
}

/// Stage two: adapt `params` on the full two-branch loss.
pub fn train_sea(
    params: ModelParams<f32>,
    corpus: &[FrameMatrix],
    cfg: &SeaConfig,
) -> Result<TrainReport> {
    run_epochs(params, corpus, cfg, Mode::Sea, cfg.sea_epochs, 2)
}
