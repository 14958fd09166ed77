use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TassError};
use crate::featureio::FeatureDims;
use crate::jtg::SlotOrder;
use crate::tsg::DEFAULT_TAU;

/// Temporal grounding variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    /// One attention over the joint audio-visual sequence.
    #[default]
    Single,
    /// Separate attentions per modality, fused late.
    Dual,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub no_target_aware: bool,
    pub no_match_loss: bool,
    pub no_cms: bool,
    pub stream: Stream,
    /// Joint-sequence layout; only meaningful for the single stream.
    pub order: Option<SlotOrder>,
}

impl Ablation {
    pub fn slot_order(&self) -> SlotOrder {
        self.order.unwrap_or_default()
    }

    /// Short label such as `full`, `no_cms` or `order_CatVA`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_target_aware {
            parts.push("no_target_aware".to_string());
        }
        if self.no_match_loss {
            parts.push("no_match_loss".to_string());
        }
        if self.no_cms {
            parts.push("no_cms".to_string());
        }
        if self.stream == Stream::Dual {
            parts.push("dual_stream".to_string());
        }
        if let Some(order) = self.order {
            parts.push(format!("order_{}", order.name()));
        }
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// Architecture fields that a checkpoint must agree with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub t: usize,
    pub n_heads: usize,
    pub vocab: usize,
    pub tau: f64,
    pub target_aware: bool,
    pub stream: Stream,
    pub order: SlotOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the match loss.
    pub lambda: f64,
    pub tau: f64,
    pub t: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub n_heads: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub train_data: PathBuf,
    pub val_data: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            tau: DEFAULT_TAU,
            t: 10,
            d: 64,
            h: 7,
            w: 7,
            n_heads: 4,
            batch_size: 64,
            epochs: 30,
            lr: 2e-4,
            lr_decay: 0.1,
            lr_decay_every: 12,
            seed: 0,
            ablation: Ablation::default(),
            train_data: PathBuf::from("data/train"),
            val_data: PathBuf::from("data/val"),
        }
    }
}

impl TrainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TassError::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.train_data, &mut config.val_data] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TassError::Config(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be a finite value >= 0, got {}", self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return bad(format!("lr_decay must be > 0, got {}", self.lr_decay));
        }
        if [self.t, self.d, self.h, self.w, self.n_heads, self.batch_size, self.lr_decay_every].contains(&0) {
            return bad("t, d, h, w, n_heads, batch_size and lr_decay_every must be positive".into());
        }
        if !self.d.is_multiple_of(self.n_heads) {
            return bad(format!("d={} is not divisible by n_heads={}", self.d, self.n_heads));
        }
        if self.ablation.stream == Stream::Dual && self.ablation.order.is_some() {
            return bad("the dual stream has no joint sequence; drop the order flag".into());
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = (epoch.saturating_sub(1) / self.lr_decay_every) as i32;
        self.lr * self.lr_decay.powi(drops)
    }

    /// Checks the feature dimensions a dataset was built with.
    pub fn check_dims(&self, dims: &FeatureDims, what: &str) -> Result<()> {
        let want = (self.d, self.h, self.w, self.t);
        let got = (dims.d, dims.h, dims.w, dims.t);
        if want != got {
            return Err(TassError::Config(format!(
                "{what} has (d, h, w, t) = {got:?} but the config expects {want:?}"
            )));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab: usize) -> ModelConfig {
        ModelConfig {
            d: self.d,
            h: self.h,
            w: self.w,
            t: self.t,
            n_heads: self.n_heads,
            vocab,
            tau: self.tau,
            target_aware: !self.ablation.no_target_aware,
            stream: self.ablation.stream,
            order: self.ablation.slot_order(),
        }
    }

    /// Weights of the auxiliary terms after ablation flags.
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            cms: !self.ablation.no_cms,
            lambda: if self.ablation.no_match_loss { 0.0 } else { self.lambda },
        }
    }
}

/// Which auxiliary losses are computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cms: bool,
    /// Zero skips the match loss entirely.
    pub lambda: f64,
}
