//! Pseudorandom error-correcting codes over GF(2) and a latent-space watermark built on them.
//!
//! Layers, bottom up: [`gf2`] linear algebra, [`prc`] the keyed code, [`softdecode`]
//! belief propagation and ordered statistics decoding, [`latentsim`] Gaussian latents and a
//! noise channel, [`analysis`] undetectability audits, [`harness`] reproducible experiments.

pub mod analysis;
pub mod gf2;
pub mod harness;
pub mod latentsim;
pub mod prc;
pub mod rng;
pub mod softdecode;

pub use gf2::{BitMatrix, BitVec, Permutation, SparseCheck};
pub use prc::{DetectionResult, PrcError, PrcKey, PrcParams, SoftVector};
pub use rng::Seed;
