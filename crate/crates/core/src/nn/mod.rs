//! Dense f64 building blocks with hand-written backward passes.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod params;
pub mod tensor;
pub mod transformer;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport};
pub use attention::{masked_softmax, AttentionCache, MultiHeadAttention};
pub use layers::{relu, relu_backward, FeedForward, LayerNorm, Linear, Mode};
pub use loss::{bce_loss, bce_with_logit, sigmoid};
pub use params::{GradStore, ParamId, ParamStore};
pub use tensor::Tensor2;
pub use transformer::{readout, readout_backward, LayerCache, TransformerLayer};
