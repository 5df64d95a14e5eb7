//! Deterministic randomness.
//!
//! Every random draw in the crate comes from ChaCha20 seeded with a 256-bit [`Seed`]. Distinct
//! consumers take distinct named substreams: the substream seed is `SHA-256(seed || 0x00 ||
//! name)`, so the generator matrix, parity checks, permutation, pad and test bits can each be
//! reproduced on their own. Cross-implementation bit compatibility of the streams is not a goal.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// The RNG handle used throughout.
pub type PrcRng = ChaCha20Rng;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    /// Expands a 64-bit value into a full seed.
    pub fn from_u64(x: u64) -> Self {
        Self::hash_parts(&[b"prc-seed-u64", &x.to_le_bytes()])
    }

    /// Seed of the named substream.
    pub fn substream(&self, name: &str) -> Seed {
        Self::hash_parts(&[&self.0, &[0u8], name.as_bytes()])
    }

    /// Counter-derived seed, e.g. one per (grid point, trial) pair.
    pub fn child(&self, label: &str, counters: &[u64]) -> Seed {
        let mut h = Sha256::new();
        h.update(self.0);
        h.update([1u8]);
        h.update(label.as_bytes());
        for c in counters {
            h.update(c.to_le_bytes());
        }
        Seed(h.finalize().into())
    }

    pub fn rng(&self) -> PrcRng {
        ChaCha20Rng::from_seed(self.0)
    }

    /// Shorthand for `self.substream(name).rng()`.
    pub fn stream(&self, name: &str) -> PrcRng {
        self.substream(name).rng()
    }

    fn hash_parts(parts: &[&[u8]]) -> Seed {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        Seed(h.finalize().into())
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({self})")
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Accepts either a decimal `u64` (expanded with [`Seed::from_u64`]) or 64 hex digits.
impl FromStr for Seed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(x) = s.parse::<u64>() {
            return Ok(Seed::from_u64(x));
        }
        let s = s.strip_prefix("0x").unwrap_or(s);
        if s.len() != 64 {
            return Err(format!("seed must be a u64 or 64 hex digits, got {s:?}"));
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let pair = std::str::from_utf8(chunk).map_err(|e| e.to_string())?;
            out[i] = u8::from_str_radix(pair, 16).map_err(|e| format!("bad hex in seed: {e}"))?;
        }
        Ok(Seed(out))
    }
}
