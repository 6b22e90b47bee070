//! Raw forward/backward kernels on flat NHWC buffers. The tape wraps these;
//! they carry no graph state.

mod conv;
mod norm;
mod pool;

pub use conv::{
    conv2d_backward_input, conv2d_backward_weight, conv2d_forward, conv_transpose_geometry,
    ConvGeometry, Padding,
};
pub use norm::{batchnorm_backward, batchnorm_forward, channel_stats, BatchStats};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward};

/// Output rows handled per work item. Fixed so that every reduction order
/// is independent of the thread count.
pub(crate) const ROW_CHUNK: usize = 512;
