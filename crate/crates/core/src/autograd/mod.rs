//! A small reverse-mode differentiation engine specialised to the
//! convolutional networks and losses used here.

pub mod checkpoint;
pub(crate) mod conv;
mod graph;
pub mod layers;
mod optim;
pub mod receptive;
mod tensor;

pub use conv::ConvGeom;
pub use graph::{Gradients, Graph, Var};
pub use layers::{Activation, LayerKind, LayerParams, LayerSpec};
pub use optim::{Adam, AdamConfig};
pub use receptive::{gradient_support, receptive_field, receptive_field_axes};
pub use tensor::Tensor;
