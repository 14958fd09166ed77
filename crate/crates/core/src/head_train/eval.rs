use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::LossWeights;
use super::model::{argmax, TassModel};
use super::train::{batch_losses, draw_pairs, run_sample, seeded_rng, LossComponents, EVAL_STREAM};
use crate::error::{Result, TassError};
use crate::featureio::{write_tensor_file, Dataset};
use crate::jtg;
use crate::numcore::{Tape, Tensor, Var};
use crate::types::QuestionType;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub question_type: QuestionType,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Question types present in the data, in canonical order.
    pub per_type: Vec<TypeAccuracy>,
    pub overall: f64,
    pub correct: usize,
    pub total: usize,
    pub loss: LossComponents,
    pub trainable_params: usize,
    pub wall_time_secs: f64,
    pub predictions: Vec<usize>,
}

impl EvalReport {
    /// Equality of everything but wall time.
    pub fn same_results(&self, other: &Self) -> bool {
        Self {
            wall_time_secs: 0.0,
            ..self.clone()
        } == Self {
            wall_time_secs: 0.0,
            ..other.clone()
        }
    }

    pub fn accuracy_of(&self, kind: QuestionType) -> Option<f64> {
        self.per_type
            .iter()
            .find(|t| t.question_type == kind)
            .map(|t| t.accuracy)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Accuracy and loss terms over `ds`, in batches of `batch_size`. Match-loss
/// pairs are drawn from `seed`, so repeated calls agree exactly.
pub fn evaluate(
    model: &TassModel,
    ds: &Dataset,
    weights: LossWeights,
    batch_size: usize,
    seed: u64,
) -> Result<EvalReport> {
    let started = Instant::now();
    if ds.answer_vocab.len() != model.config.vocab {
        return Err(TassError::Config(format!(
            "model predicts {} answers but the dataset vocabulary has {}",
            model.config.vocab,
            ds.answer_vocab.len()
        )));
    }
    let batch_size = batch_size.max(1);
    let mut pair_rng = seeded_rng(seed, EVAL_STREAM, 0);
    let mut predictions = Vec::with_capacity(ds.len());
    let mut sums = LossComponents::default();
    let indices: Vec<usize> = (0..ds.len()).collect();
    for batch in indices.chunks(batch_size) {
        let runs = batch
            .par_iter()
            .map(|&i| run_sample(model, ds, i, weights))
            .collect::<Result<Vec<_>>>()?;
        predictions.extend(runs.iter().map(|r| argmax(r.tape.value(r.fwd.logits))));
        let pairs = if weights.lambda > 0.0 {
            draw_pairs(ds, batch, &mut pair_rng)
        } else {
            Vec::new()
        };
        let loss = batch_losses(model, &runs, &pairs, weights)?;
        let n = batch.len() as f64;
        sums.qa += n * loss.qa;
        sums.cms += n * loss.cms;
        sums.match_loss += n * loss.match_loss;
        sums.total += n * loss.total;
    }

    let mut per_type = Vec::new();
    for kind in QuestionType::ALL {
        let (mut correct, mut total) = (0, 0);
        for (s, &p) in ds.samples.iter().zip(&predictions) {
            if s.question_type == kind {
                total += 1;
                correct += usize::from(p == s.answer);
            }
        }
        if total > 0 {
            per_type.push(TypeAccuracy {
                question_type: kind,
                correct,
                total,
                accuracy: ratio(correct, total),
            });
        }
    }
    let correct = per_type.iter().map(|t| t.correct).sum();
    let n = ds.len().max(1) as f64;
    Ok(EvalReport {
        per_type,
        overall: ratio(correct, ds.len()),
        correct,
        total: ds.len(),
        loss: LossComponents {
            qa: sums.qa / n,
            cms: sums.cms / n,
            match_loss: sums.match_loss / n,
            total: sums.total / n,
        },
        trainable_params: model.trainable_params(weights),
        wall_time_secs: started.elapsed().as_secs_f64(),
        predictions,
    })
}

/// Writes every sample's attention and grounding maps under
/// `dir/<index>/<name>.tass`, plus `predictions.json`. Per-segment maps are
/// stacked to `T×hw`.
pub fn dump_attention(model: &TassModel, ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let weights = LossWeights {
        cms: false,
        lambda: 0.0,
    };
    let mut rows = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let sample = &ds.samples[i];
        let mut tape = Tape::new();
        let bound = model.bind_body(&mut tape);
        let fwd = model.forward(&mut tape, &bound, ds.video_of(i), sample, weights)?;
        let rec = fwd.attention.values(&tape);
        let (a_q, v_q) = jtg::question_aware_weights(&mut tape, fwd.question, fwd.audio, fwd.visual)?;
        let stack = |tape: &mut Tape, pick: fn(&crate::tsg::GroundingVars) -> Var| -> Result<Tensor> {
            let vars: Vec<Var> = fwd.grounding.iter().map(pick).collect();
            let joined = tape.concat_rows(&vars)?;
            Ok(tape.value(joined).clone())
        };
        let maps = [
            ("s_a", stack(&mut tape, |g| g.s_a)?),
            ("s_q", stack(&mut tape, |g| g.s_q)?),
            ("s_q_gated", stack(&mut tape, |g| g.s_q_gated)?),
            ("spatial_weights", stack(&mut tape, |g| g.weights)?),
            ("f_v", tape.value(fwd.visual).clone()),
            ("w_av", rec.w_av),
            ("w_v", rec.w_v),
            ("w_a", rec.w_a),
            ("f_att", rec.f_att),
            ("f_avq", rec.f_avq),
            ("a_q", tape.value(a_q).clone()),
            ("v_q", tape.value(v_q).clone()),
            ("logits", tape.value(fwd.logits).clone()),
        ];
        let sample_dir = dir.join(format!("{i:06}"));
        std::fs::create_dir_all(&sample_dir).map_err(|e| TassError::io(&sample_dir, e))?;
        for (name, t) in &maps {
            write_tensor_file(t, sample_dir.join(format!("{name}.tass")))?;
        }
        rows.push(serde_json::json!({
            "index": i,
            "video_id": sample.video_id,
            "question_type": sample.question_type,
            "answer": sample.answer,
            "predicted": argmax(tape.value(fwd.logits)),
        }));
    }
    let path = dir.join("predictions.json");
    let text = serde_json::to_string_pretty(&rows)?;
    std::fs::write(&path, text).map_err(|e| TassError::io(&path, e))
}
