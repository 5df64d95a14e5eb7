//! The pseudorandom code: parameters, keys, encoding, soft detection and decoding.

mod codec;
mod format;
mod key;
mod params;

use thiserror::Error;

use crate::gf2::Gf2Error;
use crate::softdecode::SoftDecodeError;

pub use codec::{
    accept_payload, decode, decode_with, detect, encode, encode_traced, rescale, Codeword,
    DecoderConfig, DetectionResult, EncodeTrace, Payload, SoftVector,
};
pub use format::{deserialize_key, serialize_key, KeyFormatError, MAGIC, VERSION};
pub use key::{checks_independent, PrcKey};
pub use params::{binomial, floor_log2_binomial, PrcParams};

#[derive(Debug, Error)]
pub enum PrcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "payload does not fit: message_length + 2*lambda + num_test_bits = {required} >= n = {n}"
    )]
    Capacity { required: usize, n: usize },
    #[error("message has {got} bits but the key carries at most {max}")]
    MessageTooLong { got: usize, max: usize },
    #[error("soft vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("soft value {value} at index {index} is outside [-1, 1]")]
    SoftOutOfRange { index: usize, value: f64 },
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
    #[error(transparent)]
    Decode(#[from] SoftDecodeError),
}
