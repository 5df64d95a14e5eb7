use num_bigint::BigUint;

use super::PrcError;

/// Parameters of one code, derived from `(n, message_length, F, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrcParams {
    /// Block length (latent dimension).
    pub n: usize,
    pub message_length: usize,
    /// Target false-positive rate.
    pub fpr: f64,
    /// Weight of every parity check.
    pub t: usize,
    /// Security parameter, `floor(log2 C(n, t))`.
    pub lambda: usize,
    /// Bernoulli noise rate applied to codewords, `1 - 2^(-1/lambda)`.
    pub eta: f64,
    pub num_test_bits: usize,
    /// Generator columns (payload length).
    pub k: usize,
    /// Number of parity checks.
    pub r: usize,
    pub max_bp_iter: usize,
}

impl PrcParams {
    pub fn derive(n: usize, message_length: usize, fpr: f64, t: usize) -> Result<Self, PrcError> {
        if t < 2 {
            return Err(PrcError::InvalidParameter(format!(
                "t must be at least 2, got {t}"
            )));
        }
        if n < t {
            return Err(PrcError::InvalidParameter(format!(
                "block length {n} smaller than check weight {t}"
            )));
        }
        if !(fpr > 0.0 && fpr < 1.0) {
            return Err(PrcError::InvalidParameter(format!(
                "false-positive rate must lie in (0, 1), got {fpr}"
            )));
        }

        let lambda = floor_log2_binomial(n, t);
        if lambda == 0 {
            return Err(PrcError::InvalidParameter(format!(
                "C({n}, {t}) = 1 leaves no security parameter"
            )));
        }
        let eta = 1.0 - (-1.0 / lambda as f64).exp2();
        let num_test_bits = (1.0 / fpr).log2().ceil() as usize;
        let k = message_length + lambda + num_test_bits;
        let required = k + lambda;
        if required >= n {
            return Err(PrcError::Capacity { required, n });
        }

        Ok(PrcParams {
            n,
            message_length,
            fpr,
            t,
            lambda,
            eta,
            num_test_bits,
            k,
            r: n - required,
            max_bp_iter: floor_log(n, t),
        })
    }

    /// Rows of the generator that are sampled uniformly rather than derived from checks.
    pub fn free_rows(&self) -> usize {
        self.n - self.r
    }

    pub fn salt_range(&self) -> std::ops::Range<usize> {
        self.num_test_bits..self.num_test_bits + self.lambda
    }

    pub fn message_range(&self) -> std::ops::Range<usize> {
        self.num_test_bits + self.lambda..self.k
    }
}

/// `floor(log2 C(n, t))`, exact.
pub fn floor_log2_binomial(n: usize, t: usize) -> usize {
    binomial(n, t).bits().saturating_sub(1) as usize
}

pub fn binomial(n: usize, t: usize) -> BigUint {
    let t = t.min(n - t.min(n));
    let mut acc = BigUint::from(1u32);
    for i in 0..t {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Largest `m` with `base^m <= x`.
fn floor_log(x: usize, base: usize) -> usize {
    let mut m = 0;
    let mut pow = base as u128;
    while pow <= x as u128 {
        m += 1;
        pow *= base as u128;
    }
    m
}
