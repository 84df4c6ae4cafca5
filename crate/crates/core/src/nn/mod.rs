//! Dense tensors, differentiable layers and the UNet model family.

mod model_io;
pub mod ops;
mod tensor;
mod unet;

pub use model_io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use tensor::{MatMut, MatRef, Scalar, Tensor};
pub use unet::{SampleCache, Task, UNetConfig, UNetModel, Variant};
