//! Binary key file.
//!
//! ```text
//! "PRC1" | version: u16 = 1
//! n: u32 | message_length: u32 | t: u16 | lambda: u16 | num_test_bits: u16 | max_bp_iter: u16
//! k: u32 | r: u32 | fpr: f64 | eta: f64
//! otp: ceil(n/8) bytes | testbits: ceil(num_test_bits/8) bytes
//! G: n rows of ceil(k/8) bytes | P: r records of t u32 indices, ascending
//! crc32 of everything above: u32
//! ```
//!
//! Integers and floats are little-endian; bit strings are packed LSB-first.

use thiserror::Error;

use crate::gf2::{BitMatrix, BitVec, SparseCheck};

use super::{PrcError, PrcKey, PrcParams};

pub const MAGIC: &[u8; 4] = b"PRC1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 2 * 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum KeyFormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported key format version {0}")]
    UnsupportedVersion(u16),
    #[error("key file truncated")]
    Truncated,
    #[error("key file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("field out of range: {0}")]
    FieldRange(&'static str),
    #[error("invalid key: {0}")]
    Invariant(String),
}

pub fn serialize_key(key: &PrcKey) -> Vec<u8> {
    let p = key.params();
    let mut out = Vec::with_capacity(
        HEADER_LEN + p.n.div_ceil(8) * (1 + p.k.div_ceil(8)) + p.r * p.t * 4 + 4,
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.n as u32).to_le_bytes());
    out.extend_from_slice(&(p.message_length as u32).to_le_bytes());
    out.extend_from_slice(&(p.t as u16).to_le_bytes());
    out.extend_from_slice(&(p.lambda as u16).to_le_bytes());
    out.extend_from_slice(&(p.num_test_bits as u16).to_le_bytes());
    out.extend_from_slice(&(p.max_bp_iter as u16).to_le_bytes());
    out.extend_from_slice(&(p.k as u32).to_le_bytes());
    out.extend_from_slice(&(p.r as u32).to_le_bytes());
    out.extend_from_slice(&p.fpr.to_le_bytes());
    out.extend_from_slice(&p.eta.to_le_bytes());
    out.extend_from_slice(&key.otp().to_bytes());
    out.extend_from_slice(&key.testbits().to_bytes());
    for row in 0..p.n {
        out.extend_from_slice(&key.generator().row(row).to_bytes());
    }
    for check in key.checks() {
        for &j in check.support() {
            out.extend_from_slice(&(j as u32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], KeyFormatError> {
        let end = self.pos.checked_add(len).ok_or(KeyFormatError::Truncated)?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(KeyFormatError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, KeyFormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, KeyFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, KeyFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bits(&mut self, len: usize, what: &'static str) -> Result<BitVec, KeyFormatError> {
        BitVec::from_bytes(len, self.take(len.div_ceil(8))?).ok_or(KeyFormatError::FieldRange(what))
    }
}

/// Parses and fully validates a key; any violated invariant is an error.
pub fn deserialize_key(bytes: &[u8]) -> Result<PrcKey, KeyFormatError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(KeyFormatError::BadMagic);
    }
    let mut rd = Reader { buf: bytes, pos: 4 };
    let version = rd.u16()?;
    if version != VERSION {
        return Err(KeyFormatError::UnsupportedVersion(version));
    }
    let n = rd.u32()? as usize;
    let message_length = rd.u32()? as usize;
    let t = rd.u16()? as usize;
    let lambda = rd.u16()? as usize;
    let num_test_bits = rd.u16()? as usize;
    let max_bp_iter = rd.u16()? as usize;
    let k = rd.u32()? as usize;
    let r = rd.u32()? as usize;
    let fpr = rd.f64()?;
    let eta = rd.f64()?;

    let stored = PrcParams {
        n,
        message_length,
        fpr,
        t,
        lambda,
        eta,
        num_test_bits,
        k,
        r,
        max_bp_iter,
    };
    let derived = PrcParams::derive(n, message_length, fpr, t)
        .map_err(|e| KeyFormatError::Invariant(format!("header parameters: {e}")))?;
    if stored != derived {
        return Err(KeyFormatError::Invariant(format!(
            "header {stored:?} disagrees with derived {derived:?}"
        )));
    }

    // Sizes are now bounded by the derived parameters, so the body length can be checked
    // before any large allocation.
    let body = n.div_ceil(8) + num_test_bits.div_ceil(8) + n * k.div_ceil(8) + r * t * 4;
    let expected_len = HEADER_LEN + body + 4;
    if bytes.len() < expected_len {
        return Err(KeyFormatError::Truncated);
    }
    if bytes.len() > expected_len {
        return Err(KeyFormatError::TrailingBytes(bytes.len() - expected_len));
    }
    let stored_crc = u32::from_le_bytes(bytes[expected_len - 4..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..expected_len - 4]);
    if stored_crc != computed {
        return Err(KeyFormatError::Checksum {
            stored: stored_crc,
            computed,
        });
    }

    let otp = rd.bits(n, "otp padding")?;
    let testbits = rd.bits(num_test_bits, "testbits padding")?;
    let mut generator = BitMatrix::zeros(n, k);
    for row in 0..n {
        let bits = rd.bits(k, "generator row padding")?;
        generator.set_row(row, &bits);
    }
    let mut checks = Vec::with_capacity(r);
    for i in 0..r {
        let mut support = Vec::with_capacity(t);
        for _ in 0..t {
            support.push(rd.u32()? as usize);
        }
        let check = SparseCheck::new(support, n)
            .map_err(|e| KeyFormatError::Invariant(format!("check {i}: {e}")))?;
        checks.push(check);
    }

    let key = PrcKey {
        params: derived,
        otp,
        testbits,
        generator,
        checks,
    };
    key.validate().map_err(|e| match e {
        PrcError::InvalidKey(msg) => KeyFormatError::Invariant(msg),
        other => KeyFormatError::Invariant(other.to_string()),
    })?;
    Ok(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    fn key() -> PrcKey {
        PrcKey::generate(300, 10, 0.05, 3, Seed::from_u64(11)).unwrap()
    }

    fn refresh_crc(bytes: &mut [u8]) {
        let len = bytes.len();
        let crc = crc32fast::hash(&bytes[..len - 4]);
        bytes[len - 4..].copy_from_slice(&crc.to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let key = key();
        let bytes = serialize_key(&key);
        let back = deserialize_key(&bytes).unwrap();
        assert!(back == key);
        assert_eq!(serialize_key(&back), bytes);
    }

    #[test]
    fn header_layout() {
        let key = key();
        let bytes = serialize_key(&key);
        assert_eq!(&bytes[..4], b"PRC1");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 300);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 10);
        assert_eq!(u16::from_le_bytes([bytes[14], bytes[15]]), 3);
        let p = key.params();
        let expected = HEADER_LEN + 38 + 1 + 300 * p.k.div_ceil(8) + p.r * 3 * 4 + 4;
        assert_eq!(bytes.len(), expected);
        assert_eq!(
            &bytes[HEADER_LEN..HEADER_LEN + 38],
            &key.otp().to_bytes()[..]
        );
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = serialize_key(&key());
        bytes[0] = b'X';
        assert!(matches!(
            deserialize_key(&bytes),
            Err(KeyFormatError::BadMagic)
        ));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = serialize_key(&key());
        bytes[4] = 2;
        assert!(matches!(
            deserialize_key(&bytes),
            Err(KeyFormatError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncation_and_trailing() {
        let bytes = serialize_key(&key());
        for cut in [3, 10, HEADER_LEN, bytes.len() / 2, bytes.len() - 1] {
            let err = deserialize_key(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, KeyFormatError::Truncated | KeyFormatError::BadMagic),
                "cut at {cut}: {err}"
            );
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            deserialize_key(&long),
            Err(KeyFormatError::TrailingBytes(1))
        ));
    }

    #[test]
    fn checksum_catches_bit_flip() {
        let mut bytes = serialize_key(&key());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(
            deserialize_key(&bytes),
            Err(KeyFormatError::Checksum { .. })
        ));
    }

    #[test]
    fn flipped_generator_bit_violates_annihilation() {
        let key = key();
        let mut bytes = serialize_key(&key);
        let row = key.checks()[0].support()[0];
        let p = key.params();
        let offset =
            HEADER_LEN + p.n.div_ceil(8) + p.num_test_bits.div_ceil(8) + row * p.k.div_ceil(8);
        bytes[offset] ^= 1;
        refresh_crc(&mut bytes);
        match deserialize_key(&bytes) {
            Err(KeyFormatError::Invariant(msg)) => assert!(msg.contains("annihilate"), "{msg}"),
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn header_must_match_derivation() {
        let mut bytes = serialize_key(&key());
        // lambda field
        bytes[16] ^= 1;
        refresh_crc(&mut bytes);
        assert!(matches!(
            deserialize_key(&bytes),
            Err(KeyFormatError::Invariant(_))
        ));
    }
}
