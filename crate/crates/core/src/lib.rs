pub mod error;
pub mod gradcheck;
pub mod imgpipe;
pub mod infer;
pub mod model;
pub mod modelfmt;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use infer::{classify, ClassificationResult};
pub use model::{Model, ModelMeta, DEFAULT_THRESHOLD};
pub use rng::Rng;
pub use tensor::{Element, Precision, Tensor};
