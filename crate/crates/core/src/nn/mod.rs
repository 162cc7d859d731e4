//! Dense neural-network kernel: tensors, convolutions, activations, pooling,
//! the detection heads, the optimizer and the learning-rate schedule.

mod activation;
mod checkpoint;
mod conv;
mod head;
mod model;
mod optim;
mod pool;
mod tensor;

pub use activation::{
    activate, activate_channels, activate_channels_backward, activation_backward, logistic, logit, Activation,
    LEAKY_SLOPE,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, MANIFEST};
pub use conv::{conv2d, conv2d_backward, conv_output_size, Conv, ConvGrads, Init};
pub use head::{build_head, Branch, BranchKind, Head, HeadCache, HeadSpec, HeadVariant, HEAT_PRIOR};
pub use model::{BackboneSpec, Detector, DetectorCache};
pub use optim::{adamw_step, one_cycle, AdamWConfig, OptimState, ScheduleConfig};
pub use pool::maxpool2d_3x3_same;
pub use tensor::{ParamId, ParamStore, Tensor};
