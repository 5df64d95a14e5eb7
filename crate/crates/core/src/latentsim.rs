//! Gaussian latents carrying codeword signs, a parameterized degradation channel standing in
//! for generation, attack and inversion, and the posterior map back to soft beliefs.

use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;
use thiserror::Error;

use crate::gf2::BitVec;
use crate::prc::{self, DetectionResult, PrcError, PrcKey, SoftVector};

pub const LATENT_MAGIC: &[u8; 4] = b"LAT1";

/// Recovery noise level assumed by default for detection.
pub const DEFAULT_SIGMA: f64 = 1.224_744_871_391_589; // sqrt(3/2)

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("latent entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("bad latent file magic")]
    BadMagic,
    #[error("latent file truncated: expected {expected} bytes of values, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A real vector in standard-normal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent(Vec<f64>);

impl Latent {
    pub fn new(values: Vec<f64>) -> Result<Self, LatentError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(LatentError::NonFinite { index });
        }
        Ok(Latent(values))
    }

    /// iid standard normal.
    pub fn gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Latent((0..n).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Hard sign bits: 1 where the entry is negative.
    pub fn sign_bits(&self) -> BitVec {
        let mut b = BitVec::zeros(self.0.len());
        for (i, &v) in self.0.iter().enumerate() {
            if v < 0.0 {
                b.set(i, true);
            }
        }
        b
    }
}

/// One stage of a degradation channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelStage {
    Identity,
    /// Additive iid `N(0, sigma^2)`.
    Awgn(f64),
    /// Each coordinate negated independently with this probability.
    SignFlip(f64),
    /// A uniform random `floor(q n)`-subset is zeroed.
    Erasure(f64),
    /// Multiplication by a positive factor.
    Scale(f64),
}

impl ChannelStage {
    pub fn kind(&self) -> &'static str {
        match self {
            ChannelStage::Identity => "identity",
            ChannelStage::Awgn(_) => "awgn",
            ChannelStage::SignFlip(_) => "flip",
            ChannelStage::Erasure(_) => "erasure",
            ChannelStage::Scale(_) => "scale",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            ChannelStage::Identity => None,
            ChannelStage::Awgn(x)
            | ChannelStage::SignFlip(x)
            | ChannelStage::Erasure(x)
            | ChannelStage::Scale(x) => Some(x),
        }
    }

    fn validate(&self) -> Result<(), LatentError> {
        let ok = match *self {
            ChannelStage::Identity => true,
            ChannelStage::Awgn(s) => s.is_finite() && s >= 0.0,
            ChannelStage::SignFlip(p) | ChannelStage::Erasure(p) => (0.0..=1.0).contains(&p),
            ChannelStage::Scale(a) => a.is_finite() && a > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(LatentError::InvalidChannel(format!(
                "{self} is out of range"
            )))
        }
    }
}

impl fmt::Display for ChannelStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            None => f.write_str(self.kind()),
            Some(x) => write!(f, "{}:{}", self.kind(), x),
        }
    }
}

impl FromStr for ChannelStage {
    type Err = LatentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let value = || -> Result<f64, LatentError> {
            let p = param.ok_or_else(|| {
                LatentError::InvalidChannel(format!("{kind} needs a parameter, e.g. {kind}:0.5"))
            })?;
            p.parse::<f64>()
                .map_err(|e| LatentError::InvalidChannel(format!("{s}: {e}")))
        };
        let stage = match kind {
            "identity" | "none" => ChannelStage::Identity,
            "awgn" => ChannelStage::Awgn(value()?),
            "flip" | "sign_flip" => ChannelStage::SignFlip(value()?),
            "erasure" | "erase" => ChannelStage::Erasure(value()?),
            "scale" => ChannelStage::Scale(value()?),
            other => {
                return Err(LatentError::InvalidChannel(format!(
                    "unknown channel kind {other:?}"
                )))
            }
        };
        stage.validate()?;
        Ok(stage)
    }
}

/// Ordered composition of stages.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelSpec(Vec<ChannelStage>);

impl ChannelSpec {
    pub fn new(stages: Vec<ChannelStage>) -> Result<Self, LatentError> {
        for s in &stages {
            s.validate()?;
        }
        Ok(ChannelSpec(stages))
    }

    pub fn identity() -> Self {
        ChannelSpec(vec![ChannelStage::Identity])
    }

    pub fn awgn(sigma: f64) -> Result<Self, LatentError> {
        Self::new(vec![ChannelStage::Awgn(sigma)])
    }

    pub fn stages(&self) -> &[ChannelStage] {
        &self.0
    }

    /// Stage kinds joined with `+`.
    pub fn kind_label(&self) -> String {
        if self.0.is_empty() {
            return "identity".into();
        }
        self.0
            .iter()
            .map(|s| s.kind())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Stage parameters joined with `+`; empty for parameterless stages.
    pub fn param_label(&self) -> String {
        self.0
            .iter()
            .map(|s| s.param().map(|x| x.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("identity");
        }
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join("+"))
    }
}

/// Parses `kind[:param]` stages joined with `+`, e.g. `awgn:0.4+scale:2`.
impl FromStr for ChannelSpec {
    type Err = LatentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let stages = s
            .split('+')
            .map(str::parse)
            .collect::<Result<Vec<ChannelStage>, _>>()?;
        Ok(ChannelSpec(stages))
    }
}

pub fn apply_channel<R: Rng + ?Sized>(z: &Latent, ch: &ChannelSpec, rng: &mut R) -> Latent {
    let mut v = z.0.clone();
    let n = v.len();
    for stage in &ch.0 {
        match *stage {
            ChannelStage::Identity => {}
            ChannelStage::Awgn(sigma) => {
                if sigma > 0.0 {
                    for x in v.iter_mut() {
                        *x += sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            ChannelStage::SignFlip(p) => {
                for x in v.iter_mut() {
                    if rng.random::<f64>() < p {
                        *x = -*x;
                    }
                }
            }
            ChannelStage::Erasure(q) => {
                let count = ((q * n as f64).floor() as usize).min(n);
                for i in index::sample(rng, n, count) {
                    v[i] = 0.0;
                }
            }
            ChannelStage::Scale(alpha) => {
                for x in v.iter_mut() {
                    *x *= alpha;
                }
            }
        }
    }
    Latent(v)
}

/// Assumed standard deviation of the recovery error; zero selects hard signs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverConfig {
    pub sigma: f64,
}

impl RecoverConfig {
    pub fn new(sigma: f64) -> Result<Self, LatentError> {
        if sigma.is_finite() && sigma >= 0.0 {
            Ok(RecoverConfig { sigma })
        } else {
            Err(LatentError::InvalidChannel(format!(
                "recovery sigma must be finite and non-negative, got {sigma}"
            )))
        }
    }

    pub fn hard() -> Self {
        RecoverConfig { sigma: 0.0 }
    }
}

impl Default for RecoverConfig {
    fn default() -> Self {
        RecoverConfig {
            sigma: DEFAULT_SIGMA,
        }
    }
}

/// Latent with `|N(0, 1)|` magnitudes and the codeword's signs (bit 0 positive).
pub fn sample_watermarked_latent<R: Rng + ?Sized>(
    key: &PrcKey,
    message: &BitVec,
    rng: &mut R,
) -> Result<Latent, PrcError> {
    let c = prc::encode(key, message, rng)?;
    Ok(latent_with_signs(c.bits(), rng))
}

pub fn latent_with_signs<R: Rng + ?Sized>(bits: &BitVec, rng: &mut R) -> Latent {
    Latent(
        bits.iter()
            .map(|b| {
                let g: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                if b {
                    -g
                } else {
                    g
                }
            })
            .collect(),
    )
}

/// `E[sign(z) | z']` under `z ~ N(0, 1)`, `z' ~ N(z, sigma^2)`: `erf(z' / sqrt(2 sigma^2 (1 + sigma^2)))`.
/// With `sigma = 0` this is the sign of `z'`, and zero entries stay zero.
pub fn soft_from_latent(z: &Latent, cfg: &RecoverConfig) -> SoftVector {
    let values = if cfg.sigma > 0.0 {
        let s2 = cfg.sigma * cfg.sigma;
        let scale = 1.0 / (2.0 * s2 * (1.0 + s2)).sqrt();
        z.0.iter()
            .map(|&x| erf(x * scale).clamp(-1.0, 1.0))
            .collect()
    } else {
        z.0.iter()
            .map(|&x| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect()
    };
    SoftVector::new(values).expect("posterior lies in [-1, 1]")
}

pub fn wat_detect(
    key: &PrcKey,
    z: &Latent,
    cfg: &RecoverConfig,
) -> Result<DetectionResult, PrcError> {
    prc::detect(key, &soft_from_latent(z, cfg))
}

pub fn wat_decode(
    key: &PrcKey,
    z: &Latent,
    cfg: &RecoverConfig,
) -> Result<Option<BitVec>, PrcError> {
    prc::decode(key, &soft_from_latent(z, cfg))
}

/// Hooks standing in for image generation and latent recovery.
pub trait LatentBackend {
    fn generate(&self, latent: Latent, rng: &mut dyn rand::RngCore) -> Latent;
    fn recover(&self, observed: Latent, rng: &mut dyn rand::RngCore) -> Latent;
}

/// Generation is the identity and recovery applies a channel.
#[derive(Debug, Clone, Default)]
pub struct SimulatedBackend {
    pub channel: ChannelSpec,
}

impl LatentBackend for SimulatedBackend {
    fn generate(&self, latent: Latent, _rng: &mut dyn rand::RngCore) -> Latent {
        latent
    }

    fn recover(&self, observed: Latent, rng: &mut dyn rand::RngCore) -> Latent {
        apply_channel(&observed, &self.channel, rng)
    }
}

/// `"LAT1" | n: u32 | n x f32`, little-endian.
pub fn write_latent<W: Write>(mut w: W, z: &Latent) -> io::Result<()> {
    let mut buf = Vec::with_capacity(8 + 4 * z.len());
    buf.extend_from_slice(LATENT_MAGIC);
    buf.extend_from_slice(&(z.len() as u32).to_le_bytes());
    for &v in &z.0 {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_latent<R: Read>(mut r: R) -> Result<Latent, LatentError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 8 || &buf[..4] != LATENT_MAGIC {
        return Err(LatentError::BadMagic);
    }
    let n = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let body = &buf[8..];
    if body.len() != 4 * n {
        return Err(LatentError::Truncated {
            expected: 4 * n,
            found: body.len(),
        });
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Latent::new(values)
}
