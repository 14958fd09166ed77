//! Dense tensors, the reverse-mode tape, and the finite-difference oracle.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    analytic_gradients, compare_gradients, finite_diff_check, finite_diff_check_many,
    numeric_gradients, relative_error, GradCheckReport, REL_ERR_FLOOR,
};
pub use tape::{Tape, Var, PROBABILITY_SUM_TOL};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use tape::{sigmoid, softmax_in_place};
