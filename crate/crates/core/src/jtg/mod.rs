//! Joint temporal grounding: per-modality LSTMs, slot layout, question-guided
//! attention over the joint sequence, and the synchrony loss.

mod attention;
mod layout;
mod lstm;

pub use attention::{
    cms_loss, dual_stream_attention, init_mha, init_residual_mlp, multi_head_attention,
    question_aware_weights, question_guided_attention, AttentionRecord, AttentionVars, HeadsOutput,
};
pub use layout::{deinterleave, interleave, Modality, SlotOrder};
pub use lstm::{init_lstm, lstm_cell, temporal_encode};
