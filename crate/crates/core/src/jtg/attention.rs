use rand::Rng;

use super::layout::{Modality, SlotOrder};
use crate::error::{Result, TassError};
use crate::nn::{add_mlp, linear, mlp, Bound, ParamStore};
use crate::numcore::{Tape, Tensor, Var};

/// Adds `prefix.{w_q, w_k, w_v, w_o}`, each `d×d`.
pub fn init_mha<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut R) {
    for name in ["w_q", "w_k", "w_v", "w_o"] {
        store.add_matrix(&format!("{prefix}.{name}"), d, d, rng);
    }
}

pub fn init_residual_mlp<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut R) {
    add_mlp(store, prefix, d, d, d, rng);
}

/// Output of one question-guided attention over a key/value sequence.
#[derive(Clone, Debug)]
pub struct HeadsOutput {
    /// Output-projected concatenation of per-head context vectors, `1×d`.
    pub context: Var,
    /// Head-averaged attention over the slots, `1×S`.
    pub weights: Var,
    pub per_head: Vec<Var>,
}

/// Multi-head attention of a single query row over `keys` (`S×d`), with
/// `softmax(q_h k_hᵀ / √d_h)` per head.
pub fn multi_head_attention(
    tape: &mut Tape,
    params: &Bound,
    prefix: &str,
    query: Var,
    keys: Var,
    n_heads: usize,
) -> Result<HeadsOutput> {
    let d = tape.value(query).last_dim();
    if n_heads == 0 || !d.is_multiple_of(n_heads) {
        return Err(TassError::Config(format!(
            "model width {d} is not divisible by {n_heads} heads"
        )));
    }
    let dh = d / n_heads;
    let q = tape.matmul(query, params.var(&format!("{prefix}.w_q"))?)?;
    let k = tape.matmul(keys, params.var(&format!("{prefix}.w_k"))?)?;
    let v = tape.matmul(keys, params.var(&format!("{prefix}.w_v"))?)?;
    let kt = tape.transpose(k)?;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut per_head = Vec::with_capacity(n_heads);
    let mut contexts = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = tape.slice_last(q, h * dh, dh)?;
        let kth = tape.gather_rows(kt, &(h * dh..(h + 1) * dh).collect::<Vec<_>>())?;
        let vh = tape.slice_last(v, h * dh, dh)?;
        let logits = tape.matmul(qh, kth)?;
        let logits = tape.scale(logits, scale)?;
        let scores = tape.softmax(logits)?;
        contexts.push(tape.matmul(scores, vh)?);
        per_head.push(scores);
    }
    let mut joined = contexts[0];
    for &c in &contexts[1..] {
        joined = tape.concat_last(joined, c)?;
    }
    let context = tape.matmul(joined, params.var(&format!("{prefix}.w_o"))?)?;
    let mut weights = per_head[0];
    for &s in &per_head[1..] {
        weights = tape.add(weights, s)?;
    }
    let weights = tape.scale(weights, 1.0 / n_heads as f64)?;
    Ok(HeadsOutput {
        context,
        weights,
        per_head,
    })
}

/// Tape handles of the temporal-grounding output.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    /// Weights over the joint sequence, `1×2T`.
    pub w_av: Var,
    /// Renormalized visual and audio weights, `1×T` each, in segment order.
    pub w_v: Var,
    pub w_a: Var,
    pub f_att: Var,
    /// `f_att + MLP(mean of the joint rows)`.
    pub f_avq: Var,
}

/// Values of [`AttentionVars`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub w_av: Tensor,
    pub w_v: Tensor,
    pub w_a: Tensor,
    pub f_att: Tensor,
    pub f_avq: Tensor,
}

impl AttentionVars {
    pub fn values(&self, tape: &Tape) -> AttentionRecord {
        AttentionRecord {
            w_av: tape.value(self.w_av).clone(),
            w_v: tape.value(self.w_v).clone(),
            w_a: tape.value(self.w_a).clone(),
            f_att: tape.value(self.f_att).clone(),
            f_avq: tape.value(self.f_avq).clone(),
        }
    }
}

fn pooled_residual(tape: &mut Tape, params: &Bound, mlp_prefix: &str, rows: Var) -> Result<Var> {
    let d = tape.value(rows).last_dim();
    let avg = tape.mean_axis(rows, 0)?;
    let avg = tape.reshape(avg, &[1, d])?;
    mlp(tape, params, mlp_prefix, avg)
}

/// Single-stream grounding: one attention over the joint `2T×d` sequence laid
/// out by `order`. Per-modality weights are read from the slots that actually
/// hold each modality, then renormalized.
pub fn question_guided_attention(
    tape: &mut Tape,
    params: &Bound,
    prefix: &str,
    f_q: Var,
    f_av: Var,
    n_heads: usize,
    order: SlotOrder,
) -> Result<AttentionVars> {
    let heads = multi_head_attention(tape, params, &format!("{prefix}.mha"), f_q, f_av, n_heads)?;
    let t = tape.value(f_av).shape()[0] / 2;
    let visual = tape.gather_last(heads.weights, &order.positions(Modality::Visual, t))?;
    let audio = tape.gather_last(heads.weights, &order.positions(Modality::Audio, t))?;
    let w_v = tape.renormalize(visual)?;
    let w_a = tape.renormalize(audio)?;
    let residual = pooled_residual(tape, params, &format!("{prefix}.mlp"), f_av)?;
    let f_avq = tape.add(heads.context, residual)?;
    Ok(AttentionVars {
        w_av: heads.weights,
        w_v,
        w_a,
        f_att: heads.context,
        f_avq,
    })
}

/// Dual-stream comparison: separate attentions over `f_v` and `f_a`, fused
/// late by `FC([ctx_v; ctx_a])`. `w_av` is `[½w_v, ½w_a]`.
pub fn dual_stream_attention(
    tape: &mut Tape,
    params: &Bound,
    prefix: &str,
    f_q: Var,
    f_v: Var,
    f_a: Var,
    n_heads: usize,
) -> Result<AttentionVars> {
    let vis = multi_head_attention(tape, params, &format!("{prefix}.mha_v"), f_q, f_v, n_heads)?;
    let aud = multi_head_attention(tape, params, &format!("{prefix}.mha_a"), f_q, f_a, n_heads)?;
    let both = tape.concat_last(vis.context, aud.context)?;
    let f_att = linear(tape, params, &format!("{prefix}.late_fuse"), both)?;
    let half_v = tape.scale(vis.weights, 0.5)?;
    let half_a = tape.scale(aud.weights, 0.5)?;
    let w_av = tape.concat_last(half_v, half_a)?;
    let joint = tape.concat_rows(&[f_v, f_a])?;
    let residual = pooled_residual(tape, params, &format!("{prefix}.mlp"), joint)?;
    let f_avq = tape.add(f_att, residual)?;
    Ok(AttentionVars {
        w_av,
        w_v: vis.weights,
        w_a: aud.weights,
        f_att,
        f_avq,
    })
}

/// Parameter-free question-to-sequence weights `softmax(f_q fᵀ / √d)` for the
/// audio and visual sequences, reported for inspection only.
pub fn question_aware_weights(tape: &mut Tape, f_q: Var, f_a: Var, f_v: Var) -> Result<(Var, Var)> {
    let d = tape.value(f_q).last_dim() as f64;
    let weights = |tape: &mut Tape, seq: Var| -> Result<Var> {
        let st = tape.transpose(seq)?;
        let logits = tape.matmul(f_q, st)?;
        let logits = tape.scale(logits, 1.0 / d.sqrt())?;
        tape.softmax(logits)
    };
    let a_q = weights(tape, f_a)?;
    let v_q = weights(tape, f_v)?;
    Ok((a_q, v_q))
}

/// Cross-modal synchrony loss: JS divergence between audio and visual
/// temporal weights.
pub fn cms_loss(tape: &mut Tape, w_a: Var, w_v: Var) -> Result<Var> {
    tape.js_divergence(w_a, w_v)
}
