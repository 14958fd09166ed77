use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{LossWeights, ModelConfig, Stream};
use crate::error::{Result, TassError};
use crate::featureio::VideoFeatures;
use crate::jtg::{self, AttentionVars};
use crate::nn::{linear, Bound, ParamStore};
use crate::numcore::{Tape, Tensor, Var};
use crate::tsg::{self, GroundingVars, TsgConfig};
use crate::types::QASample;

pub const HEAD: &str = "head.out";
pub const JTG: &str = "jtg";
pub const LSTM_V: &str = "jtg.lstm_v";
pub const LSTM_A: &str = "jtg.lstm_a";

/// Parameters plus the architecture they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct TassModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// Tape handles of one sample's forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// `1×C` answer logits.
    pub logits: Var,
    pub question: Var,
    /// Raw audio sequence, `T×d`.
    pub audio: Var,
    /// Grounded visual sequence `[f_v¹; …; f_vᵀ]`, `T×d`.
    pub visual: Var,
    pub grounding: Vec<GroundingVars>,
    pub attention: AttentionVars,
    /// Synchrony loss, when enabled.
    pub cms: Option<Var>,
}

fn init_store<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> ParamStore {
    let d = config.d;
    let mut store = ParamStore::new();
    tsg::init_params(&mut store, d, rng);
    jtg::init_lstm(&mut store, LSTM_V, d, d, rng);
    jtg::init_lstm(&mut store, LSTM_A, d, d, rng);
    match config.stream {
        Stream::Single => jtg::init_mha(&mut store, "jtg.mha", d, rng),
        Stream::Dual => {
            jtg::init_mha(&mut store, "jtg.mha_v", d, rng);
            jtg::init_mha(&mut store, "jtg.mha_a", d, rng);
            store.add_linear("jtg.late_fuse", 2 * d, d, rng);
        }
    }
    jtg::init_residual_mlp(&mut store, "jtg.mlp", d, rng);
    store.add_linear(HEAD, d, config.vocab, rng);
    store
}

/// `linear(f_avq ⊙ f_q)`.
pub fn answer_logits(tape: &mut Tape, params: &Bound, f_avq: Var, f_q: Var) -> Result<Var> {
    let e = tape.mul(f_avq, f_q)?;
    linear(tape, params, HEAD, e)
}

impl TassModel {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        if config.d == 0 || config.vocab == 0 || config.n_heads == 0 || !config.d.is_multiple_of(config.n_heads) {
            return Err(TassError::Config(format!(
                "invalid model shape: d={}, heads={}, vocab={}",
                config.d, config.n_heads, config.vocab
            )));
        }
        Ok(Self {
            params: init_store(&config, rng),
            config,
        })
    }

    /// Wraps loaded tensors, checking names and shapes against the layout
    /// `config` implies.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut probe = ChaCha8Rng::seed_from_u64(0);
        let expected = Self::init(config, &mut probe)?.params;
        if expected.names() != params.names() {
            return Err(TassError::Checkpoint(format!(
                "parameter names {:?} do not match the configured model {:?}",
                params.names(),
                expected.names()
            )));
        }
        for ((name, want), got) in expected.iter().zip(params.tensors()) {
            if want.shape() != got.shape() {
                return Err(TassError::Checkpoint(format!(
                    "{name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn tsg_config(&self) -> TsgConfig {
        TsgConfig {
            tau: self.config.tau,
            target_aware: self.config.target_aware,
        }
    }

    /// Number of scalars updated by training; the match head only counts when
    /// its loss is on.
    pub fn trainable_params(&self, weights: LossWeights) -> usize {
        self.params
            .iter()
            .filter(|(name, _)| weights.lambda > 0.0 || !tsg::is_match_param(name))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Records every parameter except the match head.
    pub fn bind_body(&self, tape: &mut Tape) -> Bound {
        self.params.bind_where(tape, |n| !tsg::is_match_param(n))
    }

    pub fn check_input(&self, video: &VideoFeatures, sample: &QASample) -> Result<()> {
        let c = &self.config;
        let dims = vec![video.d(), video.h(), video.w(), video.len()];
        let want = vec![c.d, c.h, c.w, c.t];
        if dims != want {
            return Err(TassError::FeatureDimension {
                sample: video.video_id.clone(),
                what: "video (d, h, w, t)".into(),
                found: dims,
                expected: want,
            });
        }
        for (what, t) in [("question", &sample.question), ("target", &sample.target)] {
            if t.shape() != [1, c.d] {
                return Err(TassError::FeatureDimension {
                    sample: sample.video_id.clone(),
                    what: what.into(),
                    found: t.shape().to_vec(),
                    expected: vec![1, c.d],
                });
            }
        }
        Ok(())
    }

    /// One sample through spatial grounding, temporal grounding and the head.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Bound,
        video: &VideoFeatures,
        sample: &QASample,
        weights: LossWeights,
    ) -> Result<ForwardVars> {
        self.check_input(video, sample)?;
        let question = tape.leaf(sample.question.clone());
        let target = tape.leaf(sample.target.clone());
        let audio = tape.leaf(video.audio.clone());
        let tsg_config = self.tsg_config();

        let mut grounding = Vec::with_capacity(video.len());
        for t in 0..video.len() {
            let v_map = tape.leaf(video.visual_segment(t));
            let f_a = tape.gather_rows(audio, &[t])?;
            grounding.push(tsg::target_aware_visual(tape, params, v_map, f_a, target, tsg_config)?);
        }
        let fused: Vec<Var> = grounding.iter().map(|g| g.fused).collect();
        let visual = tape.concat_rows(&fused)?;

        let h_v = jtg::temporal_encode(tape, params, LSTM_V, visual)?;
        let h_a = jtg::temporal_encode(tape, params, LSTM_A, audio)?;
        let attention = match self.config.stream {
            Stream::Single => {
                let joint = jtg::interleave(tape, h_v, h_a, self.config.order)?;
                jtg::question_guided_attention(tape, params, JTG, question, joint, self.config.n_heads, self.config.order)?
            }
            Stream::Dual => jtg::dual_stream_attention(tape, params, JTG, question, h_v, h_a, self.config.n_heads)?,
        };
        let logits = answer_logits(tape, params, attention.f_avq, question)?;
        let cms = if weights.cms {
            Some(jtg::cms_loss(tape, attention.w_a, attention.w_v)?)
        } else {
            None
        };
        Ok(ForwardVars {
            logits,
            question,
            audio,
            visual,
            grounding,
            attention,
            cms,
        })
    }

    /// Predicted answer index for one sample.
    pub fn predict(&self, video: &VideoFeatures, sample: &QASample) -> Result<usize> {
        let mut tape = Tape::new();
        let params = self.bind_body(&mut tape);
        let out = self.forward(&mut tape, &params, video, sample, LossWeights { cms: false, lambda: 0.0 })?;
        Ok(argmax(tape.value(out.logits)))
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(t: &Tensor) -> usize {
    let mut best = 0;
    for (i, &x) in t.data().iter().enumerate() {
        if x > t.data()[best] {
            best = i;
        }
    }
    best
}
