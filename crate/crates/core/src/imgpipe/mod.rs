//! Image ingestion and preprocessing: decode, resize, rescale, normalize and
//! optionally ZCA-whiten; plus the synthetic dataset generator.

pub mod dataset;
pub mod image_ops;
pub mod normalize;
pub mod preprocess;
pub mod synth;
pub mod zca;

pub use dataset::{
    default_class_names, load_dataset, load_samples, Dataset, LoadReport, Sample, SampleSource,
    Split, SplitName, SplitRatios, CLASS_NAMES, DEFAULT_IMAGE_SIZE,
};
pub use image_ops::{
    decode_rgb, prepare_image, rescale, resize_bilinear, sniff_format, DecodedImage, RESCALE_FACTOR,
};
pub use normalize::NormStats;
pub use preprocess::{Preprocessor, ZcaOptions, DEFAULT_ZCA_MAX_DIM};
pub use synth::{
    generate_synthetic_dataset, synthesize_images, write_synthetic_images, SyntheticImage, SYNTHETIC_CLASS_DIRS,
};
pub use zca::ZcaTransform;
