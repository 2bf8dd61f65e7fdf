//! Dense `f64` numerics: tensors, a reverse-mode tape, MLPs, Adam and
//! finite-difference gradient checks.

mod adam;
mod gradcheck;
mod mlp;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, grad_check_against};
pub use mlp::{
    bias_name, init_params, mlp_forward, mlp_forward_tape, weight_name, Activation, Mlp, MlpSpec,
};
pub use tape::{eval_value, eval_with_grads, Bindings, Tape, Var, L1_GUARD};
pub use tensor::{ParamSet, Tensor};
