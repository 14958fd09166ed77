use serde::{Deserialize, Serialize};

use crate::error::{Result, TassError};
use crate::numcore::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Visual,
    Audio,
}

/// Arrangement of the `2T` segment features in the joint sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotOrder {
    /// `[v¹, a¹, v², a², …]`
    #[default]
    #[serde(rename = "ILVA")]
    InterleaveVA,
    /// `[a¹, v¹, a², v², …]`
    #[serde(rename = "ILAV")]
    InterleaveAV,
    /// `[v¹, …, vᵀ, a¹, …, aᵀ]`
    #[serde(rename = "CatVA")]
    ConcatVA,
    /// `[a¹, …, aᵀ, v¹, …, vᵀ]`
    #[serde(rename = "CatAV")]
    ConcatAV,
}

impl SlotOrder {
    pub const ALL: [SlotOrder; 4] = [
        SlotOrder::InterleaveVA,
        SlotOrder::InterleaveAV,
        SlotOrder::ConcatVA,
        SlotOrder::ConcatAV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::InterleaveVA => "ILVA",
            Self::InterleaveAV => "ILAV",
            Self::ConcatVA => "CatVA",
            Self::ConcatAV => "CatAV",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| TassError::Config(format!("unknown slot order {s:?}")))
    }

    /// What each of the `2T` slots holds.
    pub fn slots(self, t: usize) -> Vec<(Modality, usize)> {
        use Modality::*;
        match self {
            Self::InterleaveVA => (0..t).flat_map(|i| [(Visual, i), (Audio, i)]).collect(),
            Self::InterleaveAV => (0..t).flat_map(|i| [(Audio, i), (Visual, i)]).collect(),
            Self::ConcatVA => (0..t).map(|i| (Visual, i)).chain((0..t).map(|i| (Audio, i))).collect(),
            Self::ConcatAV => (0..t).map(|i| (Audio, i)).chain((0..t).map(|i| (Visual, i))).collect(),
        }
    }

    /// Slot positions of `modality`, in segment order.
    pub fn positions(self, modality: Modality, t: usize) -> Vec<usize> {
        let mut found: Vec<(usize, usize)> = self
            .slots(t)
            .into_iter()
            .enumerate()
            .filter(|(_, (m, _))| *m == modality)
            .map(|(pos, (_, seg))| (seg, pos))
            .collect();
        found.sort_unstable();
        found.into_iter().map(|(_, pos)| pos).collect()
    }
}

/// Arranges `f_v` and `f_a` (both `T×d`) into the `2T×d` joint sequence.
pub fn interleave(tape: &mut Tape, f_v: Var, f_a: Var, order: SlotOrder) -> Result<Var> {
    let (tv, ta) = (tape.value(f_v).shape()[0], tape.value(f_a).shape()[0]);
    if tv != ta {
        return Err(TassError::Dimension {
            op: "interleave",
            lhs: tape.value(f_v).shape().to_vec(),
            rhs: tape.value(f_a).shape().to_vec(),
        });
    }
    let stacked = tape.concat_rows(&[f_v, f_a])?;
    let rows: Vec<usize> = order
        .slots(tv)
        .into_iter()
        .map(|(m, i)| match m {
            Modality::Visual => i,
            Modality::Audio => tv + i,
        })
        .collect();
    tape.gather_rows(stacked, &rows)
}

/// Inverse of [`interleave`]: returns `(f_v, f_a)`.
pub fn deinterleave(tape: &mut Tape, f_av: Var, order: SlotOrder) -> Result<(Var, Var)> {
    let rows = tape.value(f_av).shape()[0];
    if !rows.is_multiple_of(2) {
        return Err(TassError::Dimension {
            op: "deinterleave",
            lhs: tape.value(f_av).shape().to_vec(),
            rhs: vec![],
        });
    }
    let t = rows / 2;
    let v = tape.gather_rows(f_av, &order.positions(Modality::Visual, t))?;
    let a = tape.gather_rows(f_av, &order.positions(Modality::Audio, t))?;
    Ok((v, a))
}
