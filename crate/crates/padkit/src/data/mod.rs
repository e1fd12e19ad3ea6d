//! Manifest-driven dataset ingestion: frame selection, face cropping,
//! augmentation, and class-balanced batch composition.

mod augment;
mod crop;
mod frames;
mod manifest;
mod pipeline;
mod sampler;

pub use augment::{augment, AugmentationConfig};
pub use crop::{crop_face, expand_box, CROP_SIZE};
pub use frames::{sample_frame_indices, FrameDecoder, FrameDirDecoder, NullDecoder};
pub use manifest::{
    load_manifest, write_manifest, FaceBox, Label, Manifest, MediaKind, Sample,
    MANIFEST_FORMAT_VERSION, MANIFEST_HEADER,
};
pub use pipeline::{images_to_tensor, load_sample_rgb, prepare_sample};
pub use sampler::{compose_balanced_batches, BalancedBatches};
