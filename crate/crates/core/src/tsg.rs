//! Target-aware spatial grounding.
//!
//! Per segment, region attention is computed twice over the `hw` cells of the
//! visual map: once steered by the audio vector (`s_a`) and once by the target
//! feature (`s_q`). The target map is gated at `τ`, added to the audio map, and
//! renormalized with a second softmax. The attended feature is fused with the
//! globally pooled map through `FC(tanh([f_vg; f_vi]))`.

use log::warn;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::Result;
use crate::nn::{add_mlp, linear, mlp, Bound, ParamStore};
use crate::numcore::{Tape, Tensor, Var};

pub const DEFAULT_TAU: f64 = 0.025;
pub const FUSE: &str = "tsg.fuse";
pub const MATCH_HEAD: &str = "tsg.match";

/// Label of a matched audio-visual pair.
pub const MATCHED: usize = 1;
pub const MISMATCHED: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TsgConfig {
    pub tau: f64,
    /// When false, the spatial weights are `s_a` alone (the w/o T-A ablation).
    pub target_aware: bool,
}

impl Default for TsgConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            target_aware: true,
        }
    }
}

/// Fusion layer (`2d→d`) and match head (`2d→d→2`).
pub fn init_params<R: Rng + ?Sized>(store: &mut ParamStore, d: usize, rng: &mut R) {
    store.add_linear(FUSE, 2 * d, d, rng);
    add_mlp(store, MATCH_HEAD, 2 * d, d, 2, rng);
}

pub fn is_match_param(name: &str) -> bool {
    name.starts_with(MATCH_HEAD)
}

/// `softmax_i(⟨f, v_map[i]⟩)` over the regions, `1×hw`.
pub fn region_attention(tape: &mut Tape, f: Var, v_map: Var) -> Result<Var> {
    let vt = tape.transpose(v_map)?;
    let logits = tape.matmul(f, vt)?;
    tape.softmax(logits)
}

/// `s · 𝕀(s − τ ≥ 0)`; gradient passes through kept entries only.
pub fn threshold_gate(tape: &mut Tape, s_q: Var, tau: f64) -> Result<Var> {
    tape.threshold_gate(s_q, tau)
}

/// Tape handles of one segment's grounding.
#[derive(Clone, Copy, Debug)]
pub struct GroundingVars {
    /// `f_v^t`, `1×d`.
    pub fused: Var,
    pub s_a: Var,
    pub s_q: Var,
    pub s_q_gated: Var,
    /// Final spatial weights, `1×hw`.
    pub weights: Var,
    /// `f_v,g`: mean of the map over regions, `1×d`.
    pub global: Var,
    /// `f_v,i`: weighted sum of regions, `1×d`.
    pub attended: Var,
}

/// Values of [`GroundingVars`], detached from the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundingOutput {
    pub fused: Tensor,
    pub s_a: Tensor,
    pub s_q: Tensor,
    pub s_q_gated: Tensor,
    pub weights: Tensor,
    pub global: Tensor,
    pub attended: Tensor,
}

impl GroundingVars {
    pub fn values(&self, tape: &Tape) -> GroundingOutput {
        GroundingOutput {
            fused: tape.value(self.fused).clone(),
            s_a: tape.value(self.s_a).clone(),
            s_q: tape.value(self.s_q).clone(),
            s_q_gated: tape.value(self.s_q_gated).clone(),
            weights: tape.value(self.weights).clone(),
            global: tape.value(self.global).clone(),
            attended: tape.value(self.attended).clone(),
        }
    }
}

/// Grounds one segment: `v_map` is `hw×d`, `f_a` and `f_tgt` are `1×d`.
pub fn target_aware_visual(
    tape: &mut Tape,
    params: &Bound,
    v_map: Var,
    f_a: Var,
    f_tgt: Var,
    config: TsgConfig,
) -> Result<GroundingVars> {
    let s_a = region_attention(tape, f_a, v_map)?;
    let s_q = region_attention(tape, f_tgt, v_map)?;
    let s_q_gated = threshold_gate(tape, s_q, config.tau)?;
    let weights = if config.target_aware {
        let combined = tape.add(s_a, s_q_gated)?;
        tape.softmax(combined)?
    } else {
        s_a
    };
    let attended = tape.matmul(weights, v_map)?;
    let global = tape.mean_axis(v_map, 0)?;
    let d = tape.value(global).numel();
    let global = tape.reshape(global, &[1, d])?;
    let both = tape.concat_last(global, attended)?;
    let both = tape.tanh(both)?;
    let fused = linear(tape, params, FUSE, both)?;
    Ok(GroundingVars {
        fused,
        s_a,
        s_q,
        s_q_gated,
        weights,
        global,
        attended,
    })
}

/// Two match logits for an `(f_a, f_v)` pair, both `1×d`.
pub fn match_logits(tape: &mut Tape, params: &Bound, f_a: Var, f_v: Var) -> Result<Var> {
    let pair = tape.concat_last(f_a, f_v)?;
    mlp(tape, params, MATCH_HEAD, pair)
}

/// One audio/visual pairing: audio from `(item, segment)`, visual from
/// `(partner_item, partner_segment)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchPair {
    pub item: usize,
    pub segment: usize,
    pub partner_item: usize,
    pub partner_segment: usize,
    pub label: usize,
}

/// Draws one pair per `(item, segment)`. With probability ½ the visual partner
/// is a uniformly chosen segment of an item from a different video (label 0),
/// otherwise the true pair (label 1). A batch holding a single video falls back
/// to other segments of that video.
pub fn sample_match_pairs<R: Rng + ?Sized>(
    video_ids: &[&str],
    segments: usize,
    rng: &mut R,
) -> Vec<MatchPair> {
    let single_video = video_ids.iter().all(|v| *v == video_ids[0]);
    if single_video && !video_ids.is_empty() {
        warn!("match-loss batch holds a single video; negatives come from other segments of it");
    }
    let mut pairs = Vec::with_capacity(video_ids.len() * segments);
    for (item, vid) in video_ids.iter().enumerate() {
        let others: Vec<usize> = (0..video_ids.len())
            .filter(|&j| video_ids[j] != *vid)
            .collect();
        for segment in 0..segments {
            let positive = MatchPair {
                item,
                segment,
                partner_item: item,
                partner_segment: segment,
                label: MATCHED,
            };
            if !rng.random_bool(0.5) {
                pairs.push(positive);
                continue;
            }
            let negative = if let Some(&j) = others.choose(rng) {
                Some((j, rng.random_range(0..segments)))
            } else if segments > 1 {
                let mut s = rng.random_range(0..segments - 1);
                if s >= segment {
                    s += 1;
                }
                Some((item, s))
            } else {
                None
            };
            pairs.push(match negative {
                Some((partner_item, partner_segment)) => MatchPair {
                    partner_item,
                    partner_segment,
                    label: MISMATCHED,
                    ..positive
                },
                None => positive,
            });
        }
    }
    pairs
}

/// Mean cross-entropy of the match head over `pairs`. `audio[i]` and
/// `visual[i]` are the `T×d` sequences of item `i`.
pub fn match_loss(
    tape: &mut Tape,
    params: &Bound,
    audio: &[Var],
    visual: &[Var],
    pairs: &[MatchPair],
) -> Result<Var> {
    let mut rows = Vec::with_capacity(pairs.len());
    for p in pairs {
        let a = tape.gather_rows(audio[p.item], &[p.segment])?;
        let v = tape.gather_rows(visual[p.partner_item], &[p.partner_segment])?;
        rows.push(match_logits(tape, params, a, v)?);
    }
    let logits = tape.concat_rows(&rows)?;
    let labels: Vec<usize> = pairs.iter().map(|p| p.label).collect();
    tape.cross_entropy(logits, &labels)
}
