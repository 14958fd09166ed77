use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LossWeights, TrainConfig};
use super::eval::{evaluate, EvalReport};
use super::model::{ForwardVars, TassModel};
use super::optim::Adam;
use crate::error::{Result, TassError};
use crate::featureio::{load_dataset, Dataset};
use crate::nn::Bound;
use crate::numcore::{Tape, Tensor, Var};
use crate::tsg::{self, MatchPair};

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const PAIR_STREAM: u64 = 3;
pub(crate) const EVAL_STREAM: u64 = 4;

pub(crate) fn seeded_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 32) | index);
    rng
}

/// Mean loss terms; `total = qa + cms + λ·match_loss`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub qa: f64,
    pub cms: f64,
    pub match_loss: f64,
    pub total: f64,
}

impl LossComponents {
    pub fn combine(qa: f64, cms: f64, match_loss: f64, lambda: f64) -> Self {
        Self {
            qa,
            cms,
            match_loss,
            total: qa + cms + lambda * match_loss,
        }
    }
}

/// A sample's forward tape, kept alive until its seeded backward.
pub(crate) struct SampleRun {
    pub tape: Tape,
    pub bound: Bound,
    pub fwd: ForwardVars,
    pub loss: Var,
    pub qa: f64,
    pub cms: f64,
}

pub(crate) fn run_sample(model: &TassModel, ds: &Dataset, i: usize, weights: LossWeights) -> Result<SampleRun> {
    let sample = &ds.samples[i];
    let mut tape = Tape::new();
    let bound = model.bind_body(&mut tape);
    let fwd = model.forward(&mut tape, &bound, ds.video_of(i), sample, weights)?;
    let ce = tape.cross_entropy(fwd.logits, &[sample.answer])?;
    let qa = tape.value(ce).item();
    let (loss, cms) = match fwd.cms {
        Some(c) => (tape.add(ce, c)?, tape.value(c).item()),
        None => (ce, 0.0),
    };
    Ok(SampleRun {
        tape,
        bound,
        fwd,
        loss,
        qa,
        cms,
    })
}

/// Match-loss pairs for a batch, one per `(item, segment)`.
pub fn draw_pairs(ds: &Dataset, batch: &[usize], rng: &mut ChaCha8Rng) -> Vec<MatchPair> {
    let ids: Vec<&str> = batch.iter().map(|&i| ds.samples[i].video_id.as_str()).collect();
    tsg::sample_match_pairs(&ids, ds.dims.t, rng)
}

/// Match loss over already-computed grounded sequences, on its own tape.
/// Returns the loss and, when `with_grads`, `∂L_s/∂visual_i` and the match
/// head gradients (store order, zeros elsewhere).
fn match_phase(
    model: &TassModel,
    visual: &[&Tensor],
    audio: &[&Tensor],
    pairs: &[MatchPair],
    with_grads: bool,
) -> Result<(f64, Vec<Tensor>, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let bound = model.params.bind_where(&mut tape, tsg::is_match_param);
    let v: Vec<Var> = visual.iter().map(|t| tape.param((*t).clone())).collect();
    let a: Vec<Var> = audio.iter().map(|t| tape.leaf((*t).clone())).collect();
    let loss = tsg::match_loss(&mut tape, &bound, &a, &v, pairs)?;
    let value = tape.value(loss).item();
    if !with_grads {
        return Ok((value, Vec::new(), Vec::new()));
    }
    tape.backward(loss)?;
    let dv = v
        .iter()
        .zip(visual)
        .map(|(&var, t)| tape.grad(var).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, dv, bound.grads(&tape, &model.params)))
}

/// Forward-only loss terms of a batch, for evaluation.
pub(crate) fn batch_losses(
    model: &TassModel,
    runs: &[SampleRun],
    pairs: &[MatchPair],
    weights: LossWeights,
) -> Result<LossComponents> {
    let b = runs.len() as f64;
    let qa = runs.iter().map(|r| r.qa).sum::<f64>() / b;
    let cms = runs.iter().map(|r| r.cms).sum::<f64>() / b;
    let match_loss = if weights.lambda > 0.0 {
        let visual: Vec<&Tensor> = runs.iter().map(|r| r.tape.value(r.fwd.visual)).collect();
        let audio: Vec<&Tensor> = runs.iter().map(|r| r.tape.value(r.fwd.audio)).collect();
        match_phase(model, &visual, &audio, pairs, false)?.0
    } else {
        0.0
    };
    Ok(LossComponents::combine(qa, cms, match_loss, weights.lambda))
}

#[derive(Clone, Debug)]
pub struct BatchGradients {
    /// One tensor per parameter, store order.
    pub grads: Vec<Tensor>,
    pub loss: LossComponents,
}

/// Gradient of `mean_i(L_qa,i + L_cms,i) + λ·L_s` over `batch`.
///
/// Samples run on independent tapes. The match loss couples them, so it is
/// evaluated on a separate tape over the grounded sequences, and its gradient
/// is fed back into each sample tape as a seed on that sample's sequence.
pub fn batch_gradients(
    model: &TassModel,
    ds: &Dataset,
    batch: &[usize],
    pairs: &[MatchPair],
    weights: LossWeights,
) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(TassError::Contract("empty batch".into()));
    }
    let mut runs = batch
        .par_iter()
        .map(|&i| run_sample(model, ds, i, weights))
        .collect::<Result<Vec<_>>>()?;
    let b = runs.len() as f64;
    let qa = runs.iter().map(|r| r.qa).sum::<f64>() / b;
    let cms = runs.iter().map(|r| r.cms).sum::<f64>() / b;

    let (match_loss, seeds, mut grads) = if weights.lambda > 0.0 {
        let visual: Vec<&Tensor> = runs.iter().map(|r| r.tape.value(r.fwd.visual)).collect();
        let audio: Vec<&Tensor> = runs.iter().map(|r| r.tape.value(r.fwd.audio)).collect();
        let (value, dv, head) = match_phase(model, &visual, &audio, pairs, true)?;
        let scaled = |t: Tensor| -> Tensor {
            let data = t.data().iter().map(|x| weights.lambda * x).collect();
            Tensor::new(t.shape(), data).expect("shape preserved")
        };
        let seeds: Vec<Option<Tensor>> = dv.into_iter().map(|g| Some(scaled(g))).collect();
        (value, seeds, head.into_iter().map(scaled).collect())
    } else {
        let zeros: Vec<Tensor> = model.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        (0.0, vec![None; runs.len()], zeros)
    };

    let per_sample = runs
        .par_iter_mut()
        .zip(seeds)
        .map(|(run, seed): (&mut SampleRun, Option<Tensor>)| {
            let seeds: Vec<(Var, Tensor)> = seed.map(|g| (run.fwd.visual, g)).into_iter().collect();
            run.tape.backward_seeded(run.loss, 1.0 / b, &seeds)?;
            Ok(run.bound.grads(&run.tape, &model.params))
        })
        .collect::<Result<Vec<_>>>()?;
    for sample_grads in &per_sample {
        for (acc, g) in grads.iter_mut().zip(sample_grads) {
            for (a, x) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += x;
            }
        }
    }
    Ok(BatchGradients {
        grads,
        loss: LossComponents::combine(qa, cms, match_loss, weights.lambda),
    })
}

/// The same objective as [`batch_gradients`] recorded on one tape with every
/// parameter bound from `params`; the reference for checking the split path.
pub fn batch_loss_on_tape(
    tape: &mut Tape,
    params: &Bound,
    model: &TassModel,
    ds: &Dataset,
    batch: &[usize],
    pairs: &[MatchPair],
    weights: LossWeights,
) -> Result<Var> {
    let mut sample_losses = Vec::with_capacity(batch.len());
    let mut visual = Vec::with_capacity(batch.len());
    let mut audio = Vec::with_capacity(batch.len());
    for &i in batch {
        let sample = &ds.samples[i];
        let fwd = model.forward(tape, params, ds.video_of(i), sample, weights)?;
        let mut loss = tape.cross_entropy(fwd.logits, &[sample.answer])?;
        if let Some(c) = fwd.cms {
            loss = tape.add(loss, c)?;
        }
        sample_losses.push(loss);
        visual.push(fwd.visual);
        audio.push(fwd.audio);
    }
    let mut total = sample_losses[0];
    for &l in &sample_losses[1..] {
        total = tape.add(total, l)?;
    }
    total = tape.scale(total, 1.0 / batch.len() as f64)?;
    if weights.lambda > 0.0 {
        let ls = tsg::match_loss(tape, params, &audio, &visual, pairs)?;
        let ls = tape.scale(ls, weights.lambda)?;
        total = tape.add(total, ls)?;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the evaluation before any update.
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the batch losses; absent for epoch 0.
    pub train: Option<LossComponents>,
    /// Total loss of every batch, in order.
    pub batch_losses: Vec<f64>,
    pub val: EvalReport,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TassModel,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn final_report(&self) -> &EvalReport {
        &self.history.last().expect("history holds the initial evaluation").val
    }
}

/// Loads and checks the train and validation sets named by `config`.
pub fn load_data(config: &TrainConfig) -> Result<(Dataset, Dataset)> {
    Ok((load_dataset(&config.train_data)?, load_dataset(&config.val_data)?))
}

fn check_data(config: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<()> {
    config.validate()?;
    config.check_dims(&train.dims, "training set")?;
    config.check_dims(&val.dims, "validation set")?;
    if train.is_empty() {
        return Err(TassError::Config("training set has no samples".into()));
    }
    if train.answer_vocab != val.answer_vocab {
        return Err(TassError::Config(format!(
            "answer vocabularies differ: train has {} entries, validation has {}",
            train.answer_vocab.len(),
            val.answer_vocab.len()
        )));
    }
    Ok(())
}

pub fn init_model(config: &TrainConfig, vocab: usize) -> Result<TassModel> {
    let mut rng = seeded_rng(config.seed, INIT_STREAM, 0);
    TassModel::init(config.model_config(vocab), &mut rng)
}

/// Trains from a seeded initialization, evaluating on `val` before the first
/// epoch and after each one. `on_epoch` sees every record as it is produced.
pub fn train(
    config: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    check_data(config, train, val)?;
    let model = init_model(config, train.answer_vocab.len())?;
    train_model(config, model, train, val, &mut on_epoch)
}

/// Continues from `model`.
pub fn train_model(
    config: &TrainConfig,
    mut model: TassModel,
    train: &Dataset,
    val: &Dataset,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    check_data(config, train, val)?;
    let weights = config.loss_weights();
    let mut adam = Adam::new(&model.params);
    let mut history = Vec::with_capacity(config.epochs + 1);

    let initial = EpochRecord {
        epoch: 0,
        lr: config.lr_at(1),
        train: None,
        batch_losses: Vec::new(),
        val: evaluate(&model, val, weights, config.batch_size, config.seed)?,
    };
    info!("epoch 0: val accuracy {:.4}", initial.val.overall);
    on_epoch(&initial);
    history.push(initial);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let lr = config.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut seeded_rng(config.seed, SHUFFLE_STREAM, epoch as u64));
        let mut pair_rng = seeded_rng(config.seed, PAIR_STREAM, epoch as u64);
        let mut batch_losses = Vec::new();
        let mut sums = LossComponents::default();
        for (batch_id, batch) in order.chunks(config.batch_size).enumerate() {
            let pairs = if weights.lambda > 0.0 {
                draw_pairs(train, batch, &mut pair_rng)
            } else {
                Vec::new()
            };
            let step = batch_gradients(&model, train, batch, &pairs, weights)?;
            if !step.loss.total.is_finite() {
                return Err(TassError::NonFiniteLoss { epoch, batch: batch_id });
            }
            adam.step(&mut model.params, &step.grads, lr)?;
            let n = batch.len() as f64;
            sums.qa += n * step.loss.qa;
            sums.cms += n * step.loss.cms;
            sums.match_loss += n * step.loss.match_loss;
            sums.total += n * step.loss.total;
            batch_losses.push(step.loss.total);
        }
        let n = train.len() as f64;
        let mean = LossComponents {
            qa: sums.qa / n,
            cms: sums.cms / n,
            match_loss: sums.match_loss / n,
            total: sums.total / n,
        };
        let record = EpochRecord {
            epoch,
            lr,
            train: Some(mean),
            batch_losses,
            val: evaluate(&model, val, weights, config.batch_size, config.seed)?,
        };
        info!(
            "epoch {epoch}: loss {:.4} (qa {:.4}, cms {:.4}, match {:.4}), val accuracy {:.4}, {:.1}s",
            mean.total,
            mean.qa,
            mean.cms,
            mean.match_loss,
            record.val.overall,
            started.elapsed().as_secs_f64()
        );
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome { model, history })
}
