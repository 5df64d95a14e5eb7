use std::f64::consts::LN_2;

use rand::Rng;

use crate::gf2::BitVec;
use crate::softdecode::{self, BpConfig, OsdConfig};

use super::{PrcError, PrcKey};

/// Per-coordinate beliefs `s_i = E[(-1)^{c_i} | observation]`, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftVector(Vec<f64>);

impl SoftVector {
    pub fn new(values: Vec<f64>) -> Result<Self, PrcError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(-1.0..=1.0).contains(*v))
        {
            return Err(PrcError::SoftOutOfRange { index, value });
        }
        Ok(SoftVector(values))
    }

    /// Hard beliefs: bit 0 maps to +1, bit 1 to -1.
    pub fn from_bits(bits: &BitVec) -> Self {
        SoftVector(bits.iter().map(|b| if b { -1.0 } else { 1.0 }).collect())
    }

    pub fn zeros(n: usize) -> Self {
        SoftVector(vec![0.0; n])
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

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// The encoded payload `y = (testbits, salt, message)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub testbits: BitVec,
    pub salt: BitVec,
    pub message: BitVec,
}

impl Payload {
    pub fn to_bitvec(&self) -> BitVec {
        BitVec::concat(&[&self.testbits, &self.salt, &self.message])
    }

    pub fn split(key: &PrcKey, y: &BitVec) -> Payload {
        let p = key.params();
        assert_eq!(y.len(), p.k);
        Payload {
            testbits: y.slice(0, p.num_test_bits),
            salt: y.slice(p.salt_range().start, p.salt_range().end),
            message: y.slice(p.message_range().start, p.k),
        }
    }
}

/// A codeword as bits; bit `b` corresponds to the sign `(-1)^b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword(pub BitVec);

impl Codeword {
    pub fn bits(&self) -> &BitVec {
        &self.0
    }

    pub fn signs(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|b| if b { -1.0 } else { 1.0 })
    }
}

/// Everything drawn during one encoding.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    pub payload: BitVec,
    pub noise: BitVec,
    pub codeword: Codeword,
}

/// `c = G·(testbits || salt || message) ^ e ^ otp`, with `e` iid Bernoulli(eta).
///
/// Messages shorter than `message_length` are zero-padded on the right.
pub fn encode<R: Rng + ?Sized>(
    key: &PrcKey,
    message: &BitVec,
    rng: &mut R,
) -> Result<Codeword, PrcError> {
    encode_traced(key, message, rng).map(|t| t.codeword)
}

pub fn encode_traced<R: Rng + ?Sized>(
    key: &PrcKey,
    message: &BitVec,
    rng: &mut R,
) -> Result<EncodeTrace, PrcError> {
    let p = key.params();
    if message.len() > p.message_length {
        return Err(PrcError::MessageTooLong {
            got: message.len(),
            max: p.message_length,
        });
    }
    let payload = Payload {
        testbits: key.testbits().clone(),
        salt: BitVec::random(p.lambda, rng),
        message: message.resized(p.message_length),
    }
    .to_bitvec();
    let noise = BitVec::bernoulli(p.n, p.eta, rng);
    let mut bits = key.generator().matvec(&payload)?;
    bits ^= &noise;
    bits ^= key.otp();
    Ok(EncodeTrace {
        payload,
        noise,
        codeword: Codeword(bits),
    })
}

/// Outcome of the soft threshold test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    pub detected: bool,
    /// `sum_w log((1 + s_w) / 2)`.
    pub lhs: f64,
    /// `1/2 sum_w log((1 - s_w^2) / 4)`.
    pub centering: f64,
    /// `C = 1/2 sum_w log^2((1 + s_w) / (1 - s_w))`.
    pub variance_proxy: f64,
    /// `(lhs - centering) / sqrt(C)`, zero when `C = 0`.
    pub tau: f64,
    /// `exp(-tau^2)` for positive `tau`, otherwise 1. At most `F` exactly when detected.
    pub p_bound: f64,
    pub checks_used: usize,
    pub threshold: f64,
}

impl DetectionResult {
    /// Applies the threshold test to per-check products `s_w`. Zero products are skipped:
    /// they add `log(1/2)` to both `lhs` and `centering` and nothing to `C`.
    pub fn from_check_products<I: IntoIterator<Item = f64>>(products: I, fpr: f64) -> Self {
        let mut lhs = 0.0;
        let mut centering = 0.0;
        let mut c = 0.0;
        let mut used = 0;
        for s in products {
            if s == 0.0 {
                continue;
            }
            // |s| = 1 only arises with a zero noise rate.
            let s = s.clamp(-1.0 + f64::EPSILON, 1.0 - f64::EPSILON);
            let log_plus = s.ln_1p();
            let log_minus = (-s).ln_1p();
            lhs += log_plus - LN_2;
            centering += 0.5 * (log_plus + log_minus - 2.0 * LN_2);
            c += 0.5 * (log_plus - log_minus).powi(2);
            used += 1;
        }
        let threshold = (c * (1.0 / fpr).ln()).sqrt() + centering;
        let detected = used > 0 && c > 0.0 && lhs >= threshold;
        let tau = if c > 0.0 {
            (lhs - centering) / c.sqrt()
        } else {
            0.0
        };
        let p_bound = if tau > 0.0 { (-tau * tau).exp() } else { 1.0 };
        DetectionResult {
            detected,
            lhs,
            centering,
            variance_proxy: c,
            tau,
            p_bound,
            checks_used: used,
            threshold,
        }
    }
}

fn check_input(key: &PrcKey, s: &SoftVector) -> Result<(), PrcError> {
    if s.len() != key.params().n {
        return Err(PrcError::LengthMismatch {
            expected: key.params().n,
            got: s.len(),
        });
    }
    Ok(())
}

/// `s_i <- (-1)^{otp_i} (1 - 2 eta) s_i`.
pub fn rescale(key: &PrcKey, s: &SoftVector) -> Vec<f64> {
    let scale = 1.0 - 2.0 * key.params().eta;
    s.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if key.otp().get(i) {
                -scale * v
            } else {
                scale * v
            }
        })
        .collect()
}

pub fn detect(key: &PrcKey, s: &SoftVector) -> Result<DetectionResult, PrcError> {
    check_input(key, s)?;
    let scaled = rescale(key, s);
    let products = key
        .checks()
        .iter()
        .map(|w| w.support().iter().map(|&i| scaled[i]).product::<f64>());
    Ok(DetectionResult::from_check_products(
        products,
        key.params().fpr,
    ))
}

/// Decoder knobs; the defaults are what [`decode`] uses.
#[derive(Debug, Clone, Default)]
pub struct DecoderConfig {
    /// Iteration cap override; `None` uses the key's `max_bp_iter`.
    pub max_iter: Option<usize>,
    pub bp: BpConfig,
    pub osd: OsdConfig,
}

pub fn decode(key: &PrcKey, s: &SoftVector) -> Result<Option<BitVec>, PrcError> {
    decode_with(key, s, &DecoderConfig::default())
}

/// BP followed by OSD, then the test-bit gate.
pub fn decode_with(
    key: &PrcKey,
    s: &SoftVector,
    cfg: &DecoderConfig,
) -> Result<Option<BitVec>, PrcError> {
    check_input(key, s)?;
    let scaled = SoftVector(rescale(key, s));
    let prior = softdecode::llr_from_soft(&scaled);
    let mut bp_cfg = cfg.bp.clone();
    bp_cfg.max_iter = cfg.max_iter.unwrap_or(key.params().max_bp_iter);
    let bp = softdecode::bp_decode_with(key.checks(), &prior, &bp_cfg);
    let y = softdecode::osd_decode(key.generator(), &bp, &cfg.osd)?;
    Ok(accept_payload(key, &y))
}

/// Returns the message part of `y` iff its test bits match the key.
pub fn accept_payload(key: &PrcKey, y: &BitVec) -> Option<BitVec> {
    let payload = Payload::split(key, y);
    (payload.testbits == *key.testbits()).then_some(payload.message)
}
