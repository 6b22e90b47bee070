//! Synthetic forgeries with exact ground truth: copy-move, splicing and a
//! diffusion-fill removal, over procedural or user-supplied base images.

mod base;
mod build;
mod forge;
mod region;

pub use base::procedural_base;
pub use build::{build_dataset, load_bases, split_for, DatasetConfig};
pub use forge::{diffusion_fill, gen_copy_move, gen_removal, gen_splice, generate, ForgerySpec, Sample, SampleMeta};
pub use region::{apply_transform, RegionShape, Transform, TransformSet};
