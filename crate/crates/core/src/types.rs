use serde::{Deserialize, Serialize};

use crate::numcore::Tensor;

/// Question families of the synthetic benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Existential,
    Counting,
    TemporalFirst,
    Location,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::Existential,
        QuestionType::Counting,
        QuestionType::TemporalFirst,
        QuestionType::Location,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Existential => "existential",
            Self::Counting => "counting",
            Self::TemporalFirst => "temporal_first",
            Self::Location => "location",
        }
    }
}

impl std::fmt::Display for QuestionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One question about one video, with its features and ground-truth answer.
#[derive(Clone, Debug, PartialEq)]
pub struct QASample {
    pub video_id: String,
    /// Sentence-level question feature, `1×d`.
    pub question: Tensor,
    /// Feature of the queried target, `1×d`.
    pub target: Tensor,
    pub question_type: QuestionType,
    pub answer: usize,
}
