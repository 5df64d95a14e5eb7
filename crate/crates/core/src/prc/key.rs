use crate::gf2::{self, BitMatrix, BitVec, Permutation, SparseCheck};
use crate::rng::Seed;

use super::{PrcError, PrcParams};

/// Secret key material for one deployment.
#[derive(Clone, PartialEq)]
pub struct PrcKey {
    pub(crate) params: PrcParams,
    pub(crate) otp: BitVec,
    pub(crate) testbits: BitVec,
    /// `n x k`; every column is annihilated by every check.
    pub(crate) generator: BitMatrix,
    pub(crate) checks: Vec<SparseCheck>,
}

impl std::fmt::Debug for PrcKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrcKey")
            .field("params", &self.params)
            .field("checks", &self.checks.len())
            .finish_non_exhaustive()
    }
}

impl PrcKey {
    /// Samples a key. Deterministic in `seed`.
    ///
    /// The generator starts as `n - r` uniform rows; check `i` picks `t - 1` of the rows built so
    /// far, the XOR of those rows becomes row `n - r + i`, and the check is that support plus the
    /// new row. A shared random permutation then relabels generator rows and check columns.
    pub fn generate(
        n: usize,
        message_length: usize,
        fpr: f64,
        t: usize,
        seed: Seed,
    ) -> Result<Self, PrcError> {
        let params = PrcParams::derive(n, message_length, fpr, t)?;
        Ok(Self::generate_with_params(params, seed))
    }

    pub fn generate_with_params(params: PrcParams, seed: Seed) -> Self {
        let PrcParams {
            n,
            k,
            r,
            t,
            num_test_bits,
            ..
        } = params;
        let free = params.free_rows();

        let otp = BitVec::random(n, &mut seed.stream("otp"));
        let testbits = BitVec::random(num_test_bits, &mut seed.stream("testbits"));

        // Resample the free block until it has full column rank, so the payload is always
        // recoverable from the codeword. With k + lambda rows this fails with probability
        // about 2^-lambda.
        let mut g_rng = seed.stream("generator");
        let mut generator = loop {
            let block = BitMatrix::random(free, k, &mut g_rng);
            if gf2::column_rank_is_full(&block) {
                let mut g = BitMatrix::zeros(n, k);
                for row in 0..free {
                    g.row_words_mut(row).copy_from_slice(block.row_words(row));
                }
                break g;
            }
        };

        let mut w_rng = seed.stream("checks");
        let mut checks = Vec::with_capacity(r);
        for i in 0..r {
            let row = free + i;
            let w = gf2::sample_sparse(row, t - 1, &mut w_rng).expect("t - 1 <= n - r");
            for &j in w.support() {
                generator.xor_rows(row, j);
            }
            let mut support = w.support().to_vec();
            support.push(row);
            checks.push(SparseCheck::new(support, n).expect("row exceeds every sampled index"));
        }

        let pi = Permutation::random(n, &mut seed.stream("permutation"));
        let generator = pi.permute_rows(&generator);
        let checks = checks.iter().map(|c| pi.permute_check(c)).collect();

        PrcKey {
            params,
            otp,
            testbits,
            generator,
            checks,
        }
    }

    pub fn params(&self) -> &PrcParams {
        &self.params
    }

    pub fn otp(&self) -> &BitVec {
        &self.otp
    }

    pub fn testbits(&self) -> &BitVec {
        &self.testbits
    }

    pub fn generator(&self) -> &BitMatrix {
        &self.generator
    }

    pub fn checks(&self) -> &[SparseCheck] {
        &self.checks
    }

    /// Copy with zero noise rate and an all-zero pad, so encodings are exact codewords `G·y`.
    #[doc(hidden)]
    pub fn noiseless(&self) -> PrcKey {
        let mut key = self.clone();
        key.params.eta = 0.0;
        key.otp = BitVec::zeros(self.params.n);
        key
    }

    /// Checks every structural invariant; used when loading keys from disk.
    pub fn validate(&self) -> Result<(), PrcError> {
        let p = &self.params;
        let fail = |msg: String| Err(PrcError::InvalidKey(msg));

        if self.otp.len() != p.n {
            return fail(format!("otp has {} bits, expected {}", self.otp.len(), p.n));
        }
        if self.testbits.len() != p.num_test_bits {
            return fail(format!(
                "testbits has {} bits, expected {}",
                self.testbits.len(),
                p.num_test_bits
            ));
        }
        if self.generator.rows() != p.n || self.generator.cols() != p.k {
            return fail(format!(
                "generator is {}x{}, expected {}x{}",
                self.generator.rows(),
                self.generator.cols(),
                p.n,
                p.k
            ));
        }
        if self.checks.len() != p.r {
            return fail(format!("{} checks, expected {}", self.checks.len(), p.r));
        }
        for (i, check) in self.checks.iter().enumerate() {
            if check.weight() != p.t {
                return fail(format!(
                    "check {i} has weight {}, expected {}",
                    check.weight(),
                    p.t
                ));
            }
            if check.support().iter().any(|&j| j >= p.n) {
                return fail(format!("check {i} indexes past the block length"));
            }
        }
        if let Some(i) = self.first_unsatisfied_check() {
            return fail(format!("check {i} does not annihilate the generator"));
        }
        if !checks_independent(&self.checks, p.n) {
            return fail("parity checks are linearly dependent".into());
        }
        if !gf2::column_rank_is_full(&self.generator) {
            return fail("generator does not have full column rank".into());
        }
        Ok(())
    }

    /// Index of the first check `w` with `w·G != 0`.
    pub fn first_unsatisfied_check(&self) -> Option<usize> {
        let mut acc = vec![0u64; self.generator.row_words(0).len()];
        self.checks.iter().position(|check| {
            acc.fill(0);
            for &j in check.support() {
                gf2::xor_into(&mut acc, self.generator.row_words(j));
            }
            acc.iter().any(|&w| w != 0)
        })
    }
}

/// Linear independence of sparse checks.
///
/// Peels checks that own a column no other remaining check touches; that is enough for keys
/// produced by [`PrcKey::generate`]. Whatever cannot be peeled is row-reduced densely.
pub fn checks_independent(checks: &[SparseCheck], n: usize) -> bool {
    let mut col_checks: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut col_count = vec![0usize; n];
    for (ci, c) in checks.iter().enumerate() {
        for &j in c.support() {
            col_checks[j].push(ci);
            col_count[j] += 1;
        }
    }
    let mut alive = vec![true; checks.len()];
    let mut remaining = checks.len();
    let mut queue: Vec<usize> = (0..n).filter(|&j| col_count[j] == 1).collect();
    while let Some(j) = queue.pop() {
        if col_count[j] != 1 {
            continue;
        }
        let Some(&ci) = col_checks[j].iter().find(|&&ci| alive[ci]) else {
            continue;
        };
        alive[ci] = false;
        remaining -= 1;
        for &jj in checks[ci].support() {
            col_count[jj] -= 1;
            if col_count[jj] == 1 {
                queue.push(jj);
            }
        }
    }
    if remaining == 0 {
        return true;
    }
    let rest: Vec<BitVec> = checks
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(c, _)| c.to_bitvec(n))
        .collect();
    let m = BitMatrix::from_rows(n, &rest).expect("rows have length n");
    gf2::rank(&m) == rest.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_checks(key: &PrcKey) -> BitMatrix {
        let rows: Vec<BitVec> = key
            .checks
            .iter()
            .map(|c| c.to_bitvec(key.params.n))
            .collect();
        BitMatrix::from_rows(key.params.n, &rows).unwrap()
    }

    #[test]
    fn small_key_invariants() {
        let key = PrcKey::generate(64, 0, 0.5, 3, Seed::from_u64(1)).unwrap();
        let p = key.params;
        assert_eq!(key.checks.len(), p.r);
        assert!(key.checks.iter().all(|c| c.weight() == 3));
        assert_eq!(gf2::rank(&dense_checks(&key)), p.r);
        assert_eq!(key.first_unsatisfied_check(), None);
        key.validate().unwrap();
    }

    #[test]
    fn annihilation_checked_exhaustively() {
        let key = PrcKey::generate(300, 20, 0.01, 3, Seed::from_u64(2)).unwrap();
        let p = key.params;
        for check in &key.checks {
            for col in 0..p.k {
                let parity = check
                    .support()
                    .iter()
                    .fold(false, |acc, &j| acc ^ key.generator.get(j, col));
                assert!(!parity);
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = PrcKey::generate(200, 8, 0.1, 3, Seed::from_u64(5)).unwrap();
        let b = PrcKey::generate(200, 8, 0.1, 3, Seed::from_u64(5)).unwrap();
        let c = PrcKey::generate(200, 8, 0.1, 3, Seed::from_u64(6)).unwrap();
        assert!(a == b);
        assert!(a != c);
    }

    #[test]
    fn independence_detects_dependent_sets() {
        let n = 6;
        let c = |v: Vec<usize>| SparseCheck::new(v, n).unwrap();
        assert!(checks_independent(&[c(vec![0, 1]), c(vec![1, 2])], n));
        // Cycle: no column is private, and the three rows sum to zero.
        assert!(!checks_independent(
            &[c(vec![0, 1]), c(vec![1, 2]), c(vec![0, 2])],
            n
        ));
        // Cycle plus a chord that breaks dependence.
        assert!(checks_independent(
            &[c(vec![0, 1, 3]), c(vec![1, 2]), c(vec![0, 2])],
            n
        ));
    }

    #[test]
    fn validate_rejects_tampering() {
        let key = PrcKey::generate(128, 4, 0.25, 3, Seed::from_u64(3)).unwrap();
        let mut bad = key.clone();
        let row = bad.checks[0].support()[0];
        let bit = bad.generator.get(row, 0);
        bad.generator.set(row, 0, !bit);
        assert!(matches!(bad.validate(), Err(PrcError::InvalidKey(_))));

        let mut bad = key.clone();
        bad.checks[1] = bad.checks[0].clone();
        assert!(bad.validate().is_err());
    }
}
