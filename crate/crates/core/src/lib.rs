//! Domain-decomposed reduced-order models for the steady 2D Burgers equation.
//!
//! The crate covers the whole offline/online pipeline: the finite-difference
//! full-order model ([`burgers`]), its algebraic domain decomposition
//! ([`dd`]), snapshot generation and storage ([`snapshots`], [`matfile`]),
//! linear POD decoders ([`pod`]), shallow sparse autoencoders
//! ([`autoencoder`]), collocation hyper-reduction ([`hyper`]), the
//! Gauss–Newton SQP solver ([`sqp`]) and the ROM driver that ties them
//! together ([`rom`]).

pub mod autoencoder;
pub mod burgers;
pub mod config;
pub mod dd;
pub mod decoder;
pub mod error;
pub mod hyper;
pub mod linalg;
pub mod matfile;
pub mod newton;
pub mod par;
pub mod pod;
pub mod rom;
pub mod snapshots;
pub mod sqp;
pub mod stencil;
pub mod workflow;

pub use error::{Error, Result};
