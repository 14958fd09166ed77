//! Feature files, dataset manifests, and temporal pooling.

mod manifest;
mod tensor_file;
mod video;

pub use manifest::{
    load_dataset, load_manifest, save_dataset, Dataset, FeatureDims, Manifest, ManifestHandle,
    SampleEntry, VideoEntry, MANIFEST_FILE,
};
pub use tensor_file::{
    decode_tensor, encode_tensor, read_tensor_file, read_tensor_shape, write_tensor_file,
    FORMAT_VERSION, MAGIC,
};
pub use video::{pool_preprocess, VideoFeatures};
