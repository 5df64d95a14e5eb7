//! Undetectability audits over codeword corpora: a brute-force sparse parity check scan and
//! a bias/correlation battery. Samples are bit vectors; a sign product of +1 is even parity.

use std::collections::HashSet;
use std::io::Write;

use num_bigint::BigUint;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::gf2::{sample_sparse, BitVec, SparseCheck};
use crate::prc::binomial;

/// Family-wise error rate used by both audits.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Minimum corpus size for the correlation audit.
pub const MIN_AUDIT_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sample {index} has length {got}, expected {expected}")]
    InconsistentLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("check weight {weight} must be in 2..={n}")]
    InvalidWeight { weight: usize, n: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Corpus transposed to one packed column of length `samples` per coordinate.
#[derive(Debug, Clone)]
pub struct Columns {
    n: usize,
    samples: usize,
    cols: Vec<BitVec>,
}

impl Columns {
    pub fn from_samples(samples: &[BitVec]) -> Result<Self, AnalysisError> {
        let n = samples.first().map_or(0, BitVec::len);
        let mut cols = vec![BitVec::zeros(samples.len()); n];
        for (s, v) in samples.iter().enumerate() {
            if v.len() != n {
                return Err(AnalysisError::InconsistentLength {
                    index: s,
                    expected: n,
                    got: v.len(),
                });
            }
            for j in v.iter_ones() {
                cols[j].set(s, true);
            }
        }
        Ok(Columns {
            n,
            samples: samples.len(),
            cols,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn column(&self, j: usize) -> &BitVec {
        &self.cols[j]
    }

    /// Number of samples with odd parity on `support`.
    pub fn odd_count(&self, support: &[usize]) -> usize {
        match support {
            [] => 0,
            [a] => self.cols[*a].count_ones(),
            [a, b] => self.cols[*a]
                .words()
                .iter()
                .zip(self.cols[*b].words())
                .map(|(x, y)| (x ^ y).count_ones() as usize)
                .sum(),
            [first, rest @ ..] => {
                let mut acc = self.cols[*first].clone();
                for &j in rest {
                    acc ^= &self.cols[j];
                }
                acc.count_ones()
            }
        }
    }

    /// Fraction of samples with even parity on `support`.
    pub fn satisfaction_rate(&self, support: &[usize]) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        1.0 - self.odd_count(support) as f64 / self.samples as f64
    }
}

/// `z = (even - odd) / sqrt(N)`, standard normal under a fair coin.
fn parity_z(odd: usize, samples: usize) -> f64 {
    let even = samples - odd;
    (even as f64 - odd as f64) / (samples as f64).sqrt()
}

/// Two-sided Bonferroni threshold on `|z|` for `m` simultaneous tests.
pub fn bonferroni_threshold(alpha: f64, m: usize) -> f64 {
    if m == 0 {
        return f64::INFINITY;
    }
    let normal = Normal::standard();
    -normal.inverse_cdf(alpha / (2.0 * m as f64))
}

/// Two-sided normal tail probability of `|z|`.
fn two_sided_p(z: f64) -> f64 {
    2.0 * Normal::standard().sf(z.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub check: SparseCheck,
    pub satisfaction_rate: f64,
    /// `|z|`; the direction is visible in `satisfaction_rate`.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistinguisherReport {
    pub candidates: Vec<Candidate>,
    pub threshold_z: f64,
    pub examined: usize,
    pub exhaustive: bool,
    pub found: bool,
}

impl DistinguisherReport {
    /// One row per flagged candidate: space-separated indices, rate, z.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["indices", "rate", "z"])?;
        for c in &self.candidates {
            let idx: Vec<String> = c.check.support().iter().map(|i| i.to_string()).collect();
            out.write_record([
                idx.join(" "),
                format!("{:.6}", c.satisfaction_rate),
                format!("{:.4}", c.z_score),
            ])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Advances the increasing tuple `c` to its lexicographic successor among tuples below `n`.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Scans weight-`weight` index sets for a parity bias at family-wise level
/// [`DEFAULT_ALPHA`]. Exhaustive and lexicographic when `C(n, weight) <= budget`, otherwise
/// `budget` distinct sets drawn uniformly.
pub fn sparse_check_distinguisher<R: Rng + ?Sized>(
    samples: &[BitVec],
    weight: usize,
    budget: usize,
    rng: &mut R,
) -> Result<DistinguisherReport, AnalysisError> {
    sparse_check_distinguisher_at(samples, weight, budget, DEFAULT_ALPHA, rng)
}

pub fn sparse_check_distinguisher_at<R: Rng + ?Sized>(
    samples: &[BitVec],
    weight: usize,
    budget: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<DistinguisherReport, AnalysisError> {
    let cols = Columns::from_samples(samples)?;
    let n = cols.n();
    if weight < 2 || weight > n {
        return Err(AnalysisError::InvalidWeight { weight, n });
    }
    let total = binomial(n, weight);
    let exhaustive = total <= BigUint::from(budget);
    let examined = if exhaustive {
        usize::try_from(&total).expect("bounded by budget")
    } else {
        budget
    };
    let threshold_z = bonferroni_threshold(alpha, examined);
    let ns = cols.samples();
    let score = |support: &[usize]| -> Option<Candidate> {
        let odd = cols.odd_count(support);
        let z = parity_z(odd, ns).abs();
        (ns > 0 && z >= threshold_z).then(|| Candidate {
            check: SparseCheck::new(support.to_vec(), n).expect("valid combination"),
            satisfaction_rate: 1.0 - odd as f64 / ns as f64,
            z_score: z,
        })
    };

    let candidates: Vec<Candidate> = if examined == 0 {
        Vec::new()
    } else if exhaustive {
        // Parallel over the leading index; collect preserves lexicographic order.
        (0..=n - weight)
            .into_par_iter()
            .flat_map_iter(|first| {
                let mut c: Vec<usize> = (first..first + weight).collect();
                let mut found = Vec::new();
                loop {
                    if let Some(cand) = score(&c) {
                        found.push(cand);
                    }
                    if !next_combination(&mut c[1..], n) {
                        break;
                    }
                }
                found
            })
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(budget);
        let mut sets = Vec::with_capacity(budget);
        while sets.len() < budget {
            let s = sample_sparse(n, weight, rng)
                .expect("weight checked above")
                .support()
                .to_vec();
            if seen.insert(s.clone()) {
                sets.push(s);
            }
        }
        sets.par_iter().filter_map(|s| score(s)).collect()
    };

    Ok(DistinguisherReport {
        found: !candidates.is_empty(),
        candidates,
        threshold_z,
        examined,
        exhaustive,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedPair {
    pub i: usize,
    pub j: usize,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub samples: usize,
    pub alpha: f64,
    pub max_abs_correlation: f64,
    pub max_pair: Option<(usize, usize)>,
    /// Two-sided p-value of each coordinate's bias away from 1/2.
    pub bias_p_values: Vec<f64>,
    pub flagged_bits: Vec<usize>,
    pub flagged_pairs: Vec<FlaggedPair>,
}

impl CorrelationReport {
    pub fn is_clean(&self) -> bool {
        self.flagged_bits.is_empty() && self.flagged_pairs.is_empty()
    }
}

pub fn correlation_audit(samples: &[BitVec]) -> Result<CorrelationReport, AnalysisError> {
    correlation_audit_at(samples, DEFAULT_ALPHA)
}

/// Per-bit bias tests and an all-pairs Pearson scan on the `±1` signs, each family
/// Bonferroni-corrected at `alpha`. Pair statistic: `r sqrt(N)`.
pub fn correlation_audit_at(
    samples: &[BitVec],
    alpha: f64,
) -> Result<CorrelationReport, AnalysisError> {
    if samples.len() < MIN_AUDIT_SAMPLES {
        return Err(AnalysisError::TooFewSamples {
            got: samples.len(),
            min: MIN_AUDIT_SAMPLES,
        });
    }
    let cols = Columns::from_samples(samples)?;
    let n = cols.n();
    let ns = cols.samples();
    let nf = ns as f64;

    let ones: Vec<usize> = (0..n).map(|j| cols.column(j).count_ones()).collect();
    let bias_p_values: Vec<f64> = ones.iter().map(|&o| two_sided_p(parity_z(o, ns))).collect();
    let bit_cut = alpha / n.max(1) as f64;
    let flagged_bits = (0..n).filter(|&j| bias_p_values[j] < bit_cut).collect();

    let mean: Vec<f64> = ones.iter().map(|&o| 1.0 - 2.0 * o as f64 / nf).collect();
    let sd: Vec<f64> = mean.iter().map(|m| (1.0 - m * m).max(0.0).sqrt()).collect();
    let pairs = n * n.saturating_sub(1) / 2;
    let pair_cut = bonferroni_threshold(alpha, pairs);

    type RowScan = (f64, Option<(usize, usize)>, Vec<FlaggedPair>);
    let per_row: Vec<RowScan> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0f64, None);
            let mut flagged = Vec::new();
            for j in i + 1..n {
                if sd[i] == 0.0 || sd[j] == 0.0 {
                    continue;
                }
                let exy = 1.0 - 2.0 * cols.odd_count(&[i, j]) as f64 / nf;
                let r = (exy - mean[i] * mean[j]) / (sd[i] * sd[j]);
                if r.abs() > best.0 {
                    best = (r.abs(), Some((i, j)));
                }
                if r.abs() * nf.sqrt() >= pair_cut {
                    flagged.push(FlaggedPair {
                        i,
                        j,
                        correlation: r,
                    });
                }
            }
            (best.0, best.1, flagged)
        })
        .collect();

    let mut max_abs_correlation = 0.0;
    let mut max_pair = None;
    let mut flagged_pairs = Vec::new();
    for (m, p, f) in per_row {
        if m > max_abs_correlation {
            max_abs_correlation = m;
            max_pair = p;
        }
        flagged_pairs.extend(f);
    }

    Ok(CorrelationReport {
        samples: ns,
        alpha,
        max_abs_correlation,
        max_pair,
        bias_p_values,
        flagged_bits,
        flagged_pairs,
    })
}
