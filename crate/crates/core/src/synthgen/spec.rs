use serde::{Deserialize, Serialize};

use crate::error::{Result, TassError};
use crate::types::QuestionType;

/// Relative frequency of each question family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionMix {
    pub existential: f64,
    pub counting: f64,
    pub temporal_first: f64,
    pub location: f64,
}

impl Default for QuestionMix {
    fn default() -> Self {
        Self {
            existential: 0.25,
            counting: 0.25,
            temporal_first: 0.25,
            location: 0.25,
        }
    }
}

impl QuestionMix {
    pub fn only(kind: QuestionType) -> Self {
        let mut mix = Self {
            existential: 0.0,
            counting: 0.0,
            temporal_first: 0.0,
            location: 0.0,
        };
        *mix.weight_mut(kind) = 1.0;
        mix
    }

    pub fn weight(&self, kind: QuestionType) -> f64 {
        match kind {
            QuestionType::Existential => self.existential,
            QuestionType::Counting => self.counting,
            QuestionType::TemporalFirst => self.temporal_first,
            QuestionType::Location => self.location,
        }
    }

    fn weight_mut(&mut self, kind: QuestionType) -> &mut f64 {
        match kind {
            QuestionType::Existential => &mut self.existential,
            QuestionType::Counting => &mut self.counting,
            QuestionType::TemporalFirst => &mut self.temporal_first,
            QuestionType::Location => &mut self.location,
        }
    }

    pub fn enabled(&self) -> Vec<QuestionType> {
        QuestionType::ALL
            .into_iter()
            .filter(|&k| self.weight(k) > 0.0)
            .collect()
    }
}

fn default_max_sounding() -> usize {
    3
}

fn default_position_scale() -> f64 {
    0.5
}

/// Scene statistics of the synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Number of object prototypes (K).
    pub num_prototypes: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    /// Raw segments per video (T₁).
    pub segments: usize,
    pub noise_std: f64,
    /// Probability that each non-sounding prototype appears as a silent distractor.
    pub distractor_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub question_mix: QuestionMix,
    /// Upper bound on distinct sounding objects per video.
    #[serde(default = "default_max_sounding")]
    pub max_sounding: usize,
    /// Magnitude of the per-quadrant signature added to occupied cells.
    #[serde(default = "default_position_scale")]
    pub position_scale: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            num_prototypes: 6,
            d: 64,
            h: 7,
            w: 7,
            segments: 10,
            noise_std: 0.1,
            distractor_rate: 0.3,
            seed: 0,
            question_mix: QuestionMix::default(),
            max_sounding: default_max_sounding(),
            position_scale: default_position_scale(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TassError::Config(msg));
        if self.num_prototypes < 2 {
            return bad(format!("need K ≥ 2 prototypes, got {}", self.num_prototypes));
        }
        if self.d == 0 || self.h == 0 || self.w == 0 || self.segments == 0 {
            return bad("all dimensions must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return bad(format!("distractor_rate {} outside [0, 1]", self.distractor_rate));
        }
        if !(self.noise_std >= 0.0) || !(self.position_scale >= 0.0) {
            return bad("noise_std and position_scale must be nonnegative".into());
        }
        if self.max_sounding == 0 {
            return bad("max_sounding must be ≥ 1".into());
        }
        let weights = QuestionType::ALL.map(|k| self.question_mix.weight(k));
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("question mix weights must be nonnegative".into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("question mix sums to {total}, expected 1"));
        }
        Ok(())
    }

    /// Largest number of distinct sounding objects a video can hold.
    pub fn sounding_cap(&self) -> usize {
        self.max_sounding
            .min(self.num_prototypes)
            .min(self.segments)
            .min(self.h * self.w)
    }
}

/// Input of the `gen-data` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDataSpec {
    pub scenario: ScenarioSpec,
    pub train_videos: usize,
    pub val_videos: usize,
    #[serde(default = "one")]
    pub questions_per_video: usize,
}

fn one() -> usize {
    1
}

impl Default for GenDataSpec {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::default(),
            train_videos: 2000,
            val_videos: 500,
            questions_per_video: 1,
        }
    }
}
