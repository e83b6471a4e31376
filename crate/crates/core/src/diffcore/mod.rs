//! Reverse-mode differentiation substrate: tensors, parameters, the tape,
//! Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use adam::{adam_step, Adam};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use param::{zero_grads, Param, ParamRef};
pub use tape::{Tape, Var, LOG_CLAMP};
pub use tensor::Tensor;
