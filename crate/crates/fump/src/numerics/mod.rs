//! Dense-tensor math with reverse-mode automatic differentiation.
//!
//! Everything is 64-bit: the equivariance and finite-difference tolerances
//! that gate this artifact leave no room for single precision. The design is
//! a classic record/replay tape — values are recorded during the forward
//! pass, the backward pass walks the tape once in reverse.

pub mod checkpoint;
pub mod finite_diff;
pub mod nn;
pub mod store;
pub mod tape;
pub mod tensor;

pub use finite_diff::{finite_diff_check, CoordSampling};
pub use nn::{cross_attention, mlp_forward, register_cross_attention, register_mlp, MlpSpec};
pub use store::ParameterStore;
pub use tape::{Tape, Val};
pub use tensor::Tensor;
