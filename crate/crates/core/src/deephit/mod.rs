//! The multimodal discrete-time survival network.
//!
//! Each modality vector goes through its own `Linear → ReLU` projection to an
//! embedding of width `embed_dim` (128 by default). The `M` embeddings of a
//! patient attend over each other with single-head scaled dot-product
//! attention (shared `W_Q`, `W_K`, `W_V`, no residual); the `M` attended rows
//! are concatenated and passed through fully connected ReLU layers with
//! inverted dropout, then a linear layer producing `K` logits and a softmax
//! PMF over time bins.
//!
//! Training minimizes mean negative log-likelihood plus a pairwise ranking
//! penalty plus an L2 penalty on the projection weights, full batch, with
//! Adam and early stopping on validation C-index. Gradients are computed
//! analytically in [`gradient`].

mod adam;
mod backward;
mod config;
mod loss;
mod model;
mod params;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use backward::{gradient, gradient_with_masks};
pub use config::{TrainConfig, DEFAULT_EMBED_DIM};
pub use loss::{nll_loss, ranking_loss, total_loss, total_loss_with_masks, LossBreakdown, PROB_FLOOR};
pub use model::{cross_attention_fuse, forward, forward_batch, predict_pmfs, project_modality, DropoutMasks, Fused};
pub use params::{init_params, Linear, ModelParams};
pub use train::{train_fold, Batch, EpochRecord, TrainOutcome, TrainingSet};
