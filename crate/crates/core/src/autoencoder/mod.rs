//! Shallow, wide, sparse autoencoders with tri-banded masks on the encoder
//! input and decoder output layers.

mod checkpoint;
mod mask;
mod network;
mod subnet;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mask::{build_mask, MaskedMatrix, SparsityMask};
pub use network::{swish, swish_prime, Architecture, Normalization, SparseAutoencoder};
pub use subnet::{extract_subnet, Subnet};
pub use train::{loss_gradient, mean_loss, split_indices, train, TrainConfig, TrainReport};
