//! LLR-domain belief propagation on the sparse check graph, followed by ordered-statistics
//! decoding against the generator matrix.
//!
//! LLRs are positive when bit 0 is more likely. Messages are passed with a flooding schedule:
//! every check updates from the previous round's variable messages, then every variable
//! updates from the fresh check messages.

use thiserror::Error;

use crate::gf2::{self, BitMatrix, BitVec, EchelonBasis, SparseCheck};
use crate::prc::SoftVector;

pub const DEFAULT_LLR_MAX: f64 = 30.0;
/// Largest supported OSD order.
pub const MAX_OSD_ORDER: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SoftDecodeError {
    #[error("generator has rank {rank}, expected {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("OSD order {order} exceeds the supported maximum {cap}")]
    OrderTooLarge { order: usize, cap: usize },
    #[error("generator has {rows} rows but the BP result covers {len} bits")]
    DimensionMismatch { rows: usize, len: usize },
}

/// Log-likelihood ratios clipped to `[-llr_max, llr_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrVector(Vec<f64>);

impl LlrVector {
    pub fn new(values: Vec<f64>, llr_max: f64) -> Self {
        LlrVector(
            values
                .into_iter()
                .map(|v| v.clamp(-llr_max, llr_max))
                .collect(),
        )
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
}

/// `log((1 + s) / (1 - s))`, clipped at the default limit.
pub fn llr_from_soft(s: &SoftVector) -> LlrVector {
    LlrVector::new(
        s.values().iter().map(|&v| 2.0 * v.atanh()).collect(),
        DEFAULT_LLR_MAX,
    )
}

/// Inverse of [`llr_from_soft`] away from the clip: `tanh(llr / 2)`.
pub fn soft_from_llr(llr: &LlrVector) -> SoftVector {
    SoftVector::new(llr.values().iter().map(|&l| (0.5 * l).tanh()).collect())
        .expect("tanh lies in [-1, 1]")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckRule {
    /// Exact tanh rule.
    #[default]
    SumProduct,
    /// Sign-product times minimum magnitude.
    MinSum,
}

#[derive(Debug, Clone)]
pub struct BpConfig {
    pub max_iter: usize,
    pub rule: CheckRule,
    /// Weight of the previous check message in each update; 0 disables damping.
    pub damping: f64,
    pub llr_max: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            max_iter: 20,
            rule: CheckRule::SumProduct,
            damping: 0.0,
            llr_max: DEFAULT_LLR_MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BpResult {
    /// Bit 1 where the posterior is negative.
    pub hard_estimate: BitVec,
    pub posterior: LlrVector,
    /// Every check is satisfied by `hard_estimate` and touches no zero-posterior bit.
    pub converged: bool,
    pub iterations_run: usize,
}

pub fn bp_decode(checks: &[SparseCheck], prior: &LlrVector, max_iter: usize) -> BpResult {
    bp_decode_with(
        checks,
        prior,
        &BpConfig {
            max_iter,
            ..BpConfig::default()
        },
    )
}

pub fn bp_decode_with(checks: &[SparseCheck], prior: &LlrVector, cfg: &BpConfig) -> BpResult {
    let n = prior.len();
    let mut offsets = Vec::with_capacity(checks.len() + 1);
    let mut edge_var = Vec::new();
    offsets.push(0);
    for c in checks {
        for &v in c.support() {
            assert!(v < n, "check index {v} out of range for {n} bits");
            edge_var.push(v);
        }
        offsets.push(edge_var.len());
    }

    let prior = prior.values();
    let mut v2c: Vec<f64> = edge_var.iter().map(|&v| prior[v]).collect();
    let mut c2v = vec![0.0; edge_var.len()];
    let mut scratch = Vec::new();
    let mut posterior = prior.to_vec();
    let mut hard = BitVec::zeros(n);
    let mut converged = false;
    let mut iterations_run = 0;

    for _ in 0..cfg.max_iter.max(1) {
        iterations_run += 1;
        for c in 0..checks.len() {
            let edges = offsets[c]..offsets[c + 1];
            update_check(&v2c[edges.clone()], &mut c2v[edges], cfg, &mut scratch);
        }

        posterior.copy_from_slice(prior);
        for (e, &v) in edge_var.iter().enumerate() {
            posterior[v] += c2v[e];
        }

        hard = BitVec::zeros(n);
        for (v, &l) in posterior.iter().enumerate() {
            if l < 0.0 {
                hard.set(v, true);
            }
        }
        converged = checks
            .iter()
            .all(|c| !c.parity(&hard) && c.support().iter().all(|&v| posterior[v] != 0.0));
        if converged {
            break;
        }

        for (e, &v) in edge_var.iter().enumerate() {
            v2c[e] = (posterior[v] - c2v[e]).clamp(-cfg.llr_max, cfg.llr_max);
        }
    }

    BpResult {
        hard_estimate: hard,
        posterior: LlrVector::new(posterior, cfg.llr_max),
        converged,
        iterations_run,
    }
}

fn update_check(incoming: &[f64], outgoing: &mut [f64], cfg: &BpConfig, scratch: &mut Vec<f64>) {
    let deg = incoming.len();
    let limit = cfg.llr_max;
    let damp = cfg.damping;
    match cfg.rule {
        CheckRule::SumProduct => {
            // Product of tanh(m/2) over all other edges via prefix/suffix products.
            scratch.clear();
            scratch.extend(incoming.iter().map(|&m| (0.5 * m).tanh()));
            let mut prefix = 1.0;
            for e in 0..deg {
                let suffix: f64 = scratch[e + 1..].iter().product();
                let p = (prefix * suffix).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                let msg = (2.0 * p.atanh()).clamp(-limit, limit);
                outgoing[e] = (1.0 - damp) * msg + damp * outgoing[e];
                prefix *= scratch[e];
            }
        }
        CheckRule::MinSum => {
            let mut sign_all = 1.0;
            let (mut min1, mut min2, mut argmin) = (f64::INFINITY, f64::INFINITY, usize::MAX);
            for (e, &m) in incoming.iter().enumerate() {
                if m < 0.0 {
                    sign_all = -sign_all;
                }
                let a = m.abs();
                if a < min1 {
                    min2 = min1;
                    min1 = a;
                    argmin = e;
                } else if a < min2 {
                    min2 = a;
                }
            }
            for (e, &m) in incoming.iter().enumerate() {
                let sign = if m < 0.0 { -sign_all } else { sign_all };
                let mag = if e == argmin { min2 } else { min1 };
                let msg = if mag.is_finite() {
                    (sign * mag).clamp(-limit, limit)
                } else {
                    0.0
                };
                outgoing[e] = (1.0 - damp) * msg + damp * outgoing[e];
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OsdConfig {
    /// Maximum number of information-set bits flipped per candidate.
    pub order: usize,
    /// Flips are drawn from this many least-reliable information-set positions.
    pub window: usize,
}

impl Default for OsdConfig {
    fn default() -> Self {
        OsdConfig {
            order: 0,
            window: 24,
        }
    }
}

/// Ordered-statistics decoding of the payload `y` from a BP result.
///
/// Positions are ranked by `|posterior|`; the first `k` whose generator rows are independent
/// form the information set and `y` solves `G_I·y = hard_I`. With `order > 0`, subsets of up
/// to `order` of the `window` least reliable information positions are flipped and the
/// candidate whose re-encoding agrees with the hard decisions on the most reliability mass
/// wins.
pub fn osd_decode(
    g: &BitMatrix,
    bp: &BpResult,
    cfg: &OsdConfig,
) -> Result<BitVec, SoftDecodeError> {
    if cfg.order > MAX_OSD_ORDER {
        return Err(SoftDecodeError::OrderTooLarge {
            order: cfg.order,
            cap: MAX_OSD_ORDER,
        });
    }
    let n = bp.hard_estimate.len();
    if g.rows() != n {
        return Err(SoftDecodeError::DimensionMismatch {
            rows: g.rows(),
            len: n,
        });
    }
    let k = g.cols();
    let reliability: Vec<f64> = bp.posterior.values().iter().map(|l| l.abs()).collect();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| reliability[b].total_cmp(&reliability[a]));

    let info_set = select_information_set(g, &bp.hard_estimate, &ranked)?;
    let y = info_set
        .basis
        .solve()
        .expect("information set has full rank");
    if cfg.order == 0 || k == 0 {
        return Ok(y);
    }

    // Column j of the inverse of G restricted to the information set is the change in y
    // caused by flipping the hard decision at information position j.
    let restricted = g.select_rows(&info_set.positions);
    let inverse_cols = invert(&restricted).transpose();
    let base = g.matvec(&y).expect("y has k bits");
    let mut base_disagree = base;
    base_disagree ^= &bp.hard_estimate;
    let cost = |d: &BitVec| d.iter_ones().map(|i| reliability[i]).sum::<f64>();

    let window: Vec<usize> = (k.saturating_sub(cfg.window)..k).collect();
    let deltas: Vec<(BitVec, BitVec)> = window
        .iter()
        .map(|&j| {
            let dy = inverse_cols.row(j);
            let dc = g.matvec(&dy).expect("k bits");
            (dy, dc)
        })
        .collect();

    let mut best_y = y.clone();
    let mut best_cost = cost(&base_disagree);
    let mut consider = |flips: &[usize]| {
        let mut d = base_disagree.clone();
        for &f in flips {
            d ^= &deltas[f].1;
        }
        let c = cost(&d);
        if c < best_cost {
            best_cost = c;
            let mut cand = y.clone();
            for &f in flips {
                cand ^= &deltas[f].0;
            }
            best_y = cand;
        }
    };
    for a in 0..deltas.len() {
        consider(&[a]);
        if cfg.order >= 2 {
            for b in a + 1..deltas.len() {
                consider(&[a, b]);
            }
        }
    }
    Ok(best_y)
}

struct InformationSet {
    basis: EchelonBasis,
    positions: Vec<usize>,
}

fn select_information_set(
    g: &BitMatrix,
    hard: &BitVec,
    ranked: &[usize],
) -> Result<InformationSet, SoftDecodeError> {
    let k = g.cols();
    let mut basis = EchelonBasis::new(k);
    let mut positions = Vec::with_capacity(k);
    for &i in ranked {
        if basis.is_full() {
            break;
        }
        if basis.insert(g.row_words(i), hard.get(i)).is_some() {
            positions.push(i);
        }
    }
    if !basis.is_full() {
        return Err(SoftDecodeError::RankDeficient {
            rank: basis.rank(),
            needed: k,
        });
    }
    Ok(InformationSet { basis, positions })
}

fn invert(a: &BitMatrix) -> BitMatrix {
    let k = a.rows();
    let mut aug = BitMatrix::zeros(k, 2 * k);
    for r in 0..k {
        for c in a.row(r).iter_ones() {
            aug.set(r, c, true);
        }
        aug.set(r, k + r, true);
    }
    let rr = gf2::row_reduce(&aug);
    let mut inv = BitMatrix::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            if rr.reduced.get(r, k + c) {
                inv.set(r, c, true);
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prc::PrcKey;
    use crate::rng::Seed;
    use rand::Rng;

    fn llr(v: Vec<f64>) -> LlrVector {
        LlrVector::new(v, DEFAULT_LLR_MAX)
    }

    #[test]
    fn llr_examples() {
        let s = SoftVector::new(vec![0.0, 0.9, 1.0, -1.0]).unwrap();
        let l = llr_from_soft(&s);
        assert_eq!(l.values()[0], 0.0);
        assert!((l.values()[1] - 19f64.ln()).abs() < 1e-12);
        assert!((l.values()[1] - 2.944).abs() < 1e-3);
        assert_eq!(l.values()[2], DEFAULT_LLR_MAX);
        assert_eq!(l.values()[3], -DEFAULT_LLR_MAX);
    }

    #[test]
    fn llr_round_trip() {
        let vals: Vec<f64> = (-999..=999).map(|i| i as f64 / 1000.0).collect();
        let s = SoftVector::new(vals.clone()).unwrap();
        let back = soft_from_llr(&llr_from_soft(&s));
        for (a, b) in vals.iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_codeword_is_fixed_point() {
        let key = PrcKey::generate(256, 8, 0.1, 3, Seed::from_u64(1))
            .unwrap()
            .noiseless();
        let mut rng = Seed::from_u64(2).rng();
        let c = crate::prc::encode(&key, &BitVec::random(8, &mut rng), &mut rng).unwrap();
        let prior = llr(c.signs().map(|s| 4.0 * s).collect());
        let bp = bp_decode(key.checks(), &prior, 8);
        assert!(bp.converged);
        assert_eq!(bp.iterations_run, 1);
        assert_eq!(bp.hard_estimate, *c.bits());
    }

    #[test]
    fn zero_prior_never_converges() {
        let key = PrcKey::generate(256, 8, 0.1, 3, Seed::from_u64(1)).unwrap();
        let bp = bp_decode(key.checks(), &llr(vec![0.0; 256]), 5);
        assert!(!bp.converged);
        assert_eq!(bp.iterations_run, 5);
    }

    #[test]
    fn corrects_single_flip_on_small_code() {
        let key = PrcKey::generate(16, 0, 0.5, 2, Seed::from_u64(4))
            .unwrap()
            .noiseless();
        let mut rng = Seed::from_u64(5).rng();
        let c = crate::prc::encode(&key, &BitVec::zeros(0), &mut rng).unwrap();
        // Flip a checked coordinate, give it a weaker magnitude than its neighbours.
        let victim = key.checks()[0].support()[0];
        let prior: Vec<f64> = c
            .signs()
            .enumerate()
            .map(|(i, s)| if i == victim { -1.5 * s } else { 3.0 * s })
            .collect();
        let bp = bp_decode(key.checks(), &llr(prior.clone()), key.params().max_bp_iter);
        assert!(bp.converged);
        assert_eq!(bp.hard_estimate, *c.bits());

        // Brute-force nearest check-satisfying word under the same weights.
        let best = (0u32..1 << 16)
            .map(|w| BitVec::from_words(16, vec![w as u64]))
            .filter(|x| key.checks().iter().all(|ch| !ch.parity(x)))
            .max_by(|a, b| {
                let score = |x: &BitVec| {
                    prior
                        .iter()
                        .enumerate()
                        .map(|(i, l)| if x.get(i) { -l } else { *l })
                        .sum::<f64>()
                };
                score(a).total_cmp(&score(b))
            })
            .unwrap();
        assert_eq!(best, *c.bits());
    }

    #[test]
    fn single_check_monotone_in_prior_magnitude() {
        let check = vec![SparseCheck::new(vec![0, 1, 2], 3).unwrap()];
        let mut last = 0.0;
        for step in 1..40 {
            let m = step as f64 * 0.25;
            let bp = bp_decode(&check, &llr(vec![0.5, m, m]), 1);
            let post = bp.posterior.values()[0].abs();
            assert!(post >= last - 1e-12, "posterior shrank at prior {m}");
            last = post;
        }
    }

    #[test]
    fn min_sum_and_damping_variants_decode_clean_input() {
        let key = PrcKey::generate(512, 8, 0.1, 3, Seed::from_u64(6))
            .unwrap()
            .noiseless();
        let mut rng = Seed::from_u64(7).rng();
        let c = crate::prc::encode(&key, &BitVec::random(8, &mut rng), &mut rng).unwrap();
        let bits = c.bits().clone();
        let victim = key.checks()[5].support()[1];
        let prior = llr(bits
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let m = if i == victim { -0.5 } else { 3.0 };
                if b {
                    -m
                } else {
                    m
                }
            })
            .collect());
        for cfg in [
            BpConfig {
                max_iter: 10,
                rule: CheckRule::MinSum,
                ..BpConfig::default()
            },
            BpConfig {
                max_iter: 10,
                damping: 0.3,
                ..BpConfig::default()
            },
        ] {
            let bp = bp_decode_with(key.checks(), &prior, &cfg);
            assert!(bp.converged, "{:?} did not converge", cfg.rule);
            assert_eq!(bp.hard_estimate, bits);
        }
    }

    fn clean_bp(key: &PrcKey, y: &BitVec, strength: f64) -> BpResult {
        let x = key.generator().matvec(y).unwrap();
        let posterior = llr(x
            .iter()
            .map(|b| if b { -strength } else { strength })
            .collect());
        BpResult {
            hard_estimate: x,
            posterior,
            converged: true,
            iterations_run: 1,
        }
    }

    #[test]
    fn osd_recovers_consistent_payload() {
        let key = PrcKey::generate(512, 16, 0.1, 3, Seed::from_u64(8)).unwrap();
        let mut rng = Seed::from_u64(9).rng();
        let y = BitVec::random(key.params().k, &mut rng);
        let bp = clean_bp(&key, &y, 5.0);
        assert_eq!(
            osd_decode(key.generator(), &bp, &OsdConfig::default()).unwrap(),
            y
        );
    }

    #[test]
    fn osd_skips_corrupted_low_reliability_positions() {
        let key = PrcKey::generate(512, 16, 0.1, 3, Seed::from_u64(8)).unwrap();
        let mut rng = Seed::from_u64(10).rng();
        let y = BitVec::random(key.params().k, &mut rng);
        let mut bp = clean_bp(&key, &y, 5.0);
        let mut post = bp.posterior.values().to_vec();
        for _ in 0..3 {
            let i = rng.random_range(0..512);
            bp.hard_estimate.flip(i);
            post[i] = if bp.hard_estimate.get(i) { -0.1 } else { 0.1 };
        }
        bp.posterior = llr(post);
        let got = osd_decode(key.generator(), &bp, &OsdConfig::default()).unwrap();
        assert_eq!(got, y);
    }

    #[test]
    fn osd_skips_dependent_rows() {
        // Rows 0 and 1 are equal and most reliable; row 2 completes the basis.
        let g = BitMatrix::from_strs(&["10", "10", "01", "11"]);
        let y = BitVec::from_bools(&[true, false]);
        let x = g.matvec(&y).unwrap();
        let bp = BpResult {
            hard_estimate: x,
            posterior: llr(vec![9.0, -8.0, 7.0, -1.0]),
            converged: true,
            iterations_run: 1,
        };
        assert_eq!(osd_decode(&g, &bp, &OsdConfig::default()).unwrap(), y);
    }

    #[test]
    fn osd_errors() {
        let g = BitMatrix::from_strs(&["10", "10"]);
        let bp = BpResult {
            hard_estimate: BitVec::zeros(2),
            posterior: llr(vec![1.0, 1.0]),
            converged: true,
            iterations_run: 1,
        };
        assert_eq!(
            osd_decode(&g, &bp, &OsdConfig::default()),
            Err(SoftDecodeError::RankDeficient { rank: 1, needed: 2 })
        );
        assert!(matches!(
            osd_decode(
                &g,
                &bp,
                &OsdConfig {
                    order: 3,
                    window: 4
                }
            ),
            Err(SoftDecodeError::OrderTooLarge { .. })
        ));
    }

    #[test]
    fn osd_higher_order_repairs_information_set_error() {
        let key = PrcKey::generate(512, 16, 0.1, 3, Seed::from_u64(8)).unwrap();
        let mut rng = Seed::from_u64(11).rng();
        let y = BitVec::random(key.params().k, &mut rng);
        let mut bp = clean_bp(&key, &y, 5.0);
        // Give every position a distinct reliability, then corrupt the k-th most reliable
        // one: it lands in the information set at its least reliable slot.
        let mut post: Vec<f64> = (0..512).map(|i| 5.0 + i as f64 * 0.01).collect();
        for (i, p) in post.iter_mut().enumerate() {
            if bp.hard_estimate.get(i) {
                *p = -*p;
            }
        }
        bp.posterior = llr(post);
        let order0 = osd_decode(key.generator(), &bp, &OsdConfig::default()).unwrap();
        assert_eq!(order0, y);
        let ranked: Vec<usize> = (0..512).rev().collect();
        let info = select_information_set(key.generator(), &bp.hard_estimate, &ranked).unwrap();
        let weakest = *info.positions.last().unwrap();
        bp.hard_estimate.flip(weakest);
        let order0 = osd_decode(key.generator(), &bp, &OsdConfig::default()).unwrap();
        assert_ne!(order0, y);
        let order1 = osd_decode(
            key.generator(),
            &bp,
            &OsdConfig {
                order: 1,
                window: 8,
            },
        )
        .unwrap();
        assert_eq!(order1, y);
        let order2 = osd_decode(
            key.generator(),
            &bp,
            &OsdConfig {
                order: 2,
                window: 8,
            },
        )
        .unwrap();
        assert_eq!(order2, y);
    }
}
