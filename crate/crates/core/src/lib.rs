//! Lossless geometry compression for sequences of voxelized point clouds.
//!
//! Each sequence gets its own small convolutional probability model,
//! trained on a few of its frames and shipped in the file header. Frames
//! are coded level by level through the octree: the occupancy of every
//! candidate 2x2 block of every section is range-coded with the pmf the
//! model assigns to the block's 4x6x6 context.

pub mod cloud;
pub mod cnn;
pub mod codec;
pub mod coder;
pub mod context;
pub mod error;
pub mod image;
pub mod octree;
pub mod ply;

pub use cloud::{Voxel, VoxelPointCloud};
pub use cnn::{CnnArchitecture, CnnModel, OutputStack, TrainingConfig};
pub use codec::{decode_sequence, encode_sequence, CodecConfig};
pub use context::{Axis, ContextHistogramStore, InputStack, Phase, PhaseMode};
pub use error::{Error, Result};
pub use image::{BinaryImage, ImageGeometry, MixingImage};
