//! Target-aware single-stream audio-visual question answering.

pub mod error;
pub mod featureio;
pub mod head_train;
pub mod jtg;
pub mod nn;
pub mod numcore;
pub mod synthgen;
pub mod tsg;
pub mod types;

pub use error::{Result, TassError};
pub use numcore::{Tape, Tensor, Var};
pub use types::{QASample, QuestionType};
