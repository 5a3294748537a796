//! Layers shared by both fusion architectures.

mod attention;
pub mod checkpoint;
mod encoder_block;
mod linear;
mod params;

pub use attention::MultiHeadAttention;
pub use encoder_block::EncoderBlock;
pub use linear::Linear;
pub use params::{Param, ParamId, ParamStore};
