//! Seeded experiment campaigns: robustness sweeps over channel grids, false-positive
//! validation against fresh keys, and message-capacity curves.
//!
//! Trial seeds come from the master seed by counters: the sweep key is
//! `master.child("key", [])`, trial `j` of grid point `i` uses `master.child("trial", [i, j])`,
//! FPR key `i` is `master.child("fpr-key", [i])`, and capacity trial `j` at length index `i` is
//! `master.child("capacity", [i, j])`. Trials run on the rayon pool; results are reduced in
//! trial order, so outputs do not depend on scheduling.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::gf2::BitVec;
use crate::latentsim::{
    apply_channel, sample_watermarked_latent, soft_from_latent, wat_decode, wat_detect,
    ChannelSpec, Latent, RecoverConfig,
};
use crate::prc::{self, PrcError, PrcKey, PrcParams, SoftVector};
use crate::rng::Seed;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "PRC_THREADS";

/// Header row of every CSV this module writes.
pub const CSV_HEADER: [&str; 12] = [
    "experiment",
    "n",
    "t",
    "F",
    "sigma",
    "channel_kind",
    "channel_param",
    "trials",
    "detect_tpr",
    "decode_tpr",
    "mean_stat",
    "seconds",
];

/// FPR experiments need at least this many keys.
pub const MIN_FPR_KEYS: usize = 100;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prc(#[from] PrcError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Sizes the global rayon pool from [`THREADS_ENV`] if it is set. Call before any parallel work.
pub fn init_thread_pool_from_env() -> Result<Option<usize>, HarnessError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        HarnessError::InvalidConfig(format!("{THREADS_ENV}={raw:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    Ok(Some(threads))
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    pub message_length: usize,
    pub fpr: f64,
    pub t: usize,
    pub recover: RecoverConfig,
    pub grid: Vec<ChannelSpec>,
    pub trials: usize,
    pub seed: Seed,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<PrcParams, HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::InvalidConfig(
                "trials must be at least 1".into(),
            ));
        }
        if self.grid.is_empty() {
            return Err(HarnessError::InvalidConfig("channel grid is empty".into()));
        }
        Ok(PrcParams::derive(
            self.n,
            self.message_length,
            self.fpr,
            self.t,
        )?)
    }
}

/// One CSV line. `detect_tpr` and `decode_tpr` are fractions of `trials`; `mean_stat` is the
/// mean detection `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub experiment: String,
    pub n: usize,
    pub t: usize,
    pub fpr: f64,
    pub sigma: f64,
    pub channel_kind: String,
    pub channel_param: String,
    pub trials: usize,
    pub detect_tpr: f64,
    pub decode_tpr: f64,
    pub mean_stat: f64,
    pub seconds: f64,
}

impl SweepRow {
    /// Equality ignoring wall time.
    pub fn same_result(&self, other: &SweepRow) -> bool {
        SweepRow {
            seconds: 0.0,
            ..self.clone()
        } == SweepRow {
            seconds: 0.0,
            ..other.clone()
        }
    }

    fn record(&self) -> [String; 12] {
        [
            self.experiment.clone(),
            self.n.to_string(),
            self.t.to_string(),
            self.fpr.to_string(),
            self.sigma.to_string(),
            self.channel_kind.clone(),
            self.channel_param.clone(),
            self.trials.to_string(),
            format!("{:.6}", self.detect_tpr),
            format!("{:.6}", self.decode_tpr),
            format!("{:.6}", self.mean_stat),
            format!("{:.3}", self.seconds),
        ]
    }
}

pub fn write_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for row in rows {
        out.write_record(row.record())?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    detected: bool,
    decoded: bool,
    tau: f64,
}

fn aggregate(outcomes: &[TrialOutcome]) -> (f64, f64, f64) {
    let n = outcomes.len() as f64;
    let det = outcomes.iter().filter(|o| o.detected).count() as f64;
    let dec = outcomes.iter().filter(|o| o.decoded).count() as f64;
    let tau: f64 = outcomes.iter().map(|o| o.tau).sum();
    (det / n, dec / n, tau / n)
}

fn watermark_trial(
    key: &PrcKey,
    channel: &ChannelSpec,
    recover: &RecoverConfig,
    seed: Seed,
) -> Result<TrialOutcome, PrcError> {
    let mut rng = seed.rng();
    let message = BitVec::random(key.params().message_length, &mut rng);
    let z = sample_watermarked_latent(key, &message, &mut rng)?;
    let observed = apply_channel(&z, channel, &mut rng);
    let det = wat_detect(key, &observed, recover)?;
    let decoded = wat_decode(key, &observed, recover)?;
    Ok(TrialOutcome {
        detected: det.detected,
        decoded: decoded.as_ref() == Some(&message),
        tau: det.tau,
    })
}

/// One key per sweep; every grid point draws fresh messages, latents and channel noise.
pub fn run_robustness_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, HarnessError> {
    let params = cfg.validate()?;
    let key = PrcKey::generate_with_params(params, cfg.seed.child("key", &[]));
    let mut rows = Vec::with_capacity(cfg.grid.len());
    for (i, channel) in cfg.grid.iter().enumerate() {
        let start = Instant::now();
        let outcomes = (0..cfg.trials)
            .into_par_iter()
            .map(|j| {
                watermark_trial(
                    &key,
                    channel,
                    &cfg.recover,
                    cfg.seed.child("trial", &[i as u64, j as u64]),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (detect_tpr, decode_tpr, mean_stat) = aggregate(&outcomes);
        rows.push(SweepRow {
            experiment: "robustness".into(),
            n: cfg.n,
            t: cfg.t,
            fpr: cfg.fpr,
            sigma: cfg.recover.sigma,
            channel_kind: channel.kind_label(),
            channel_param: channel.param_label(),
            trials: cfg.trials,
            detect_tpr,
            decode_tpr,
            mean_stat,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

/// Where the key-independent soft vector of an FPR run comes from.
#[derive(Debug, Clone)]
pub enum SoftSource {
    /// One vector uniform on `[-1, 1]^n`, drawn from the master seed.
    UniformRandom,
    /// Posterior of one fresh unwatermarked Gaussian latent.
    GaussianLatent(RecoverConfig),
    Fixed(SoftVector),
    /// Positive control: every key is tested against a latent carrying its own watermark.
    OwnWatermark(RecoverConfig),
}

#[derive(Debug, Clone)]
pub struct FprConfig {
    pub n: usize,
    pub message_length: usize,
    pub fpr: f64,
    pub t: usize,
    pub num_keys: usize,
    pub source: SoftSource,
    pub seed: Seed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FprResult {
    pub keys: usize,
    pub detections: usize,
    pub rate: f64,
    /// 95% Wilson score interval.
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `F + 3 sqrt(F (1 - F) / keys)`.
    pub bound_3se: f64,
    pub mean_tau: f64,
    pub seconds: f64,
}

impl FprResult {
    pub fn to_row(&self, cfg: &FprConfig) -> SweepRow {
        let (kind, sigma) = match &cfg.source {
            SoftSource::UniformRandom => ("uniform", 0.0),
            SoftSource::GaussianLatent(r) => ("gaussian", r.sigma),
            SoftSource::Fixed(_) => ("fixed", 0.0),
            SoftSource::OwnWatermark(r) => ("own_watermark", r.sigma),
        };
        SweepRow {
            experiment: "fpr".into(),
            n: cfg.n,
            t: cfg.t,
            fpr: cfg.fpr,
            sigma,
            channel_kind: kind.into(),
            channel_param: String::new(),
            trials: self.keys,
            detect_tpr: self.rate,
            decode_tpr: 0.0,
            mean_stat: self.mean_tau,
            seconds: self.seconds,
        }
    }
}

/// Wilson score interval for `successes` of `trials` at two-sided confidence `1 - alpha`.
pub fn wilson_interval(successes: usize, trials: usize, alpha: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = -Normal::standard().inverse_cdf(alpha / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Detection rate of `num_keys` fresh keys against one key-independent soft vector.
pub fn run_fpr_experiment(cfg: &FprConfig) -> Result<FprResult, HarnessError> {
    if cfg.num_keys < MIN_FPR_KEYS {
        return Err(HarnessError::InvalidConfig(format!(
            "num_keys must be at least {MIN_FPR_KEYS}, got {}",
            cfg.num_keys
        )));
    }
    let params = PrcParams::derive(cfg.n, cfg.message_length, cfg.fpr, cfg.t)?;
    let start = Instant::now();
    let fixed = match &cfg.source {
        SoftSource::UniformRandom => {
            let mut rng = cfg.seed.stream("fpr-soft");
            let v = (0..cfg.n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            Some(SoftVector::new(v)?)
        }
        SoftSource::GaussianLatent(r) => {
            let z = Latent::gaussian(cfg.n, &mut cfg.seed.stream("fpr-soft"));
            Some(soft_from_latent(&z, r))
        }
        SoftSource::Fixed(s) => {
            if s.len() != cfg.n {
                return Err(PrcError::LengthMismatch {
                    expected: cfg.n,
                    got: s.len(),
                }
                .into());
            }
            Some(s.clone())
        }
        SoftSource::OwnWatermark(_) => None,
    };

    let outcomes = (0..cfg.num_keys)
        .into_par_iter()
        .map(|i| -> Result<(bool, f64), PrcError> {
            let seed = cfg.seed.child("fpr-key", &[i as u64]);
            let key = PrcKey::generate_with_params(params, seed);
            let r = match (&fixed, &cfg.source) {
                (Some(s), _) => prc::detect(&key, s)?,
                (None, SoftSource::OwnWatermark(rc)) => {
                    let mut rng = seed.stream("positive-control");
                    let message = BitVec::random(params.message_length, &mut rng);
                    let z = sample_watermarked_latent(&key, &message, &mut rng)?;
                    wat_detect(&key, &z, rc)?
                }
                (None, _) => unreachable!("only the positive control lacks a fixed vector"),
            };
            Ok((r.detected, r.tau))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let detections = outcomes.iter().filter(|o| o.0).count();
    let keys = cfg.num_keys;
    let (wilson_low, wilson_high) = wilson_interval(detections, keys, 0.05);
    Ok(FprResult {
        keys,
        detections,
        rate: detections as f64 / keys as f64,
        wilson_low,
        wilson_high,
        bound_3se: cfg.fpr + 3.0 * (cfg.fpr * (1.0 - cfg.fpr) / keys as f64).sqrt(),
        mean_tau: outcomes.iter().map(|o| o.1).sum::<f64>() / keys as f64,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct CapacityConfig {
    pub n: usize,
    pub t: usize,
    pub fpr: f64,
    pub lengths: Vec<usize>,
    pub trials: usize,
    pub recover: RecoverConfig,
    pub seed: Seed,
}

/// Clean-channel decode success per message length, with a fresh key per trial. Lengths that
/// do not fit become rows with `channel_kind = "infeasible"` and zero trials.
pub fn run_capacity_sweep(cfg: &CapacityConfig) -> Result<Vec<SweepRow>, HarnessError> {
    if cfg.trials == 0 {
        return Err(HarnessError::InvalidConfig(
            "trials must be at least 1".into(),
        ));
    }
    if cfg.lengths.is_empty() {
        return Err(HarnessError::InvalidConfig(
            "no message lengths given".into(),
        ));
    }
    let identity = ChannelSpec::identity();
    let mut rows = Vec::with_capacity(cfg.lengths.len());
    for (i, &len) in cfg.lengths.iter().enumerate() {
        let start = Instant::now();
        let base = SweepRow {
            experiment: format!("capacity[len={len}]"),
            n: cfg.n,
            t: cfg.t,
            fpr: cfg.fpr,
            sigma: cfg.recover.sigma,
            channel_kind: identity.kind_label(),
            channel_param: identity.param_label(),
            trials: cfg.trials,
            detect_tpr: 0.0,
            decode_tpr: 0.0,
            mean_stat: 0.0,
            seconds: 0.0,
        };
        let params = match PrcParams::derive(cfg.n, len, cfg.fpr, cfg.t) {
            Ok(p) => p,
            Err(PrcError::Capacity { .. }) => {
                rows.push(SweepRow {
                    channel_kind: "infeasible".into(),
                    trials: 0,
                    ..base
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let outcomes = (0..cfg.trials)
            .into_par_iter()
            .map(|j| {
                let seed = cfg.seed.child("capacity", &[i as u64, j as u64]);
                let key = PrcKey::generate_with_params(params, seed.substream("key"));
                watermark_trial(&key, &identity, &cfg.recover, seed.substream("trial"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (detect_tpr, decode_tpr, mean_stat) = aggregate(&outcomes);
        rows.push(SweepRow {
            detect_tpr,
            decode_tpr,
            mean_stat,
            seconds: start.elapsed().as_secs_f64(),
            ..base
        });
    }
    Ok(rows)
}

/// `P(sign(z + e) != sign(z))` for `z ~ N(0, 1)`, `e ~ N(0, sigma_a^2)`:
/// `arccos(1 / sqrt(1 + sigma_a^2)) / pi`.
pub fn analytic_flip_rate(sigma_a: f64) -> f64 {
    (1.0 / (1.0 + sigma_a * sigma_a).sqrt()).acos() / std::f64::consts::PI
}

/// Monte-Carlo sign-flip rate of the awgn channel and its standard error.
pub fn simulated_flip_rate(sigma_a: f64, draws: usize, seed: Seed) -> (f64, f64) {
    const CHUNK: usize = 1 << 16;
    let channel = ChannelSpec::awgn(sigma_a).expect("non-negative sigma");
    let chunks = draws.div_ceil(CHUNK);
    let flips: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(draws - c * CHUNK);
            let mut rng = seed.child("flip-rate", &[c as u64]).rng();
            let z = Latent::gaussian(len, &mut rng);
            let z2 = apply_channel(&z, &channel, &mut rng);
            z.values()
                .iter()
                .zip(z2.values())
                .filter(|(a, b)| (**a < 0.0) != (**b < 0.0))
                .count()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let p = flips as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}
