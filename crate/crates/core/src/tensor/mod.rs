//! Dense matrices and the differentiation tape behind every trainable
//! computation in the crate.

mod fd;
mod matrix;
mod tape;

pub use fd::{finite_difference_check, relative_error, FdReport, REL_ERR_FLOOR};
pub use matrix::{softmax_in_place, Matrix};
pub use tape::{Gradients, Tape, Var};
