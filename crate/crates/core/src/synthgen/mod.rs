//! Synthetic audio-visual scenes with planted, script-computable answers.

mod dataset;
mod protos;
mod question;
mod scene;
mod spec;

pub use dataset::{generate, generate_split, vocab_for, write_generated, GeneratedData, GeneratedSplit, Split, SCRIPTS_FILE};
pub use protos::{cosine, gen_prototypes, norm, normalize, PrototypeBank, MAX_VISUAL_COSINE, TEXT_JITTER};
pub use question::{gen_question_answer, oracle_answer, Answer, AnswerVocab, Question};
pub use scene::{gen_video, render, Quadrant, SceneObject, SceneScript};
pub use spec::{GenDataSpec, QuestionMix, ScenarioSpec};
