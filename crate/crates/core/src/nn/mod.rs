//! Dense numerical core: tensors, differentiable operations, optimisation
//! and gradient checking.

pub mod checkpoint;
pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use ops::{BatchNormState, Mode, Reduction};
pub use optim::{cosine_lr, AdamW};
pub use params::{Param, ParamStore};
pub use tensor::Tensor;
