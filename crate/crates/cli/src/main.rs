//! `prc`: key generation, watermark embedding, detection, decoding and experiment campaigns.
//!
//! Exit codes: 0 success or detected, 1 not detected or no message, 2 usage error, 3 data or
//! format error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::RngCore;

use prc_core::analysis::sparse_check_distinguisher;
use prc_core::harness::{
    self, run_capacity_sweep, run_fpr_experiment, run_robustness_sweep, CapacityConfig,
    ExperimentConfig, FprConfig, SoftSource,
};
use prc_core::latentsim::{
    apply_channel, read_latent, sample_watermarked_latent, soft_from_latent, write_latent,
    ChannelSpec, Latent, RecoverConfig, DEFAULT_SIGMA,
};
use prc_core::prc::{self, deserialize_key, serialize_key, DetectionResult, PrcError};
use prc_core::{BitVec, PrcKey, PrcParams, Seed};

/// `println!` that ignores a closed stdout.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser, Debug)]
#[command(
    name = "prc",
    version,
    about = "Pseudorandom-code watermarks for Gaussian latents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a key file.
    Keygen(KeygenArgs),
    /// Embed a message into a fresh watermarked latent.
    Encode(EncodeArgs),
    /// Test a latent for the watermark.
    Detect(ReadArgs),
    /// Recover the message carried by a latent.
    Decode(ReadArgs),
    /// Detection and decoding rates over a channel grid, as CSV.
    Sweep(SweepArgs),
    /// Empirical false-positive rate over fresh keys, as CSV.
    Fpr(FprArgs),
    /// Clean decode success per message length, as CSV.
    Capacity(CapacityArgs),
    /// Sparse parity-check scan over a directory of latent files.
    Distinguish(DistinguishArgs),
}

#[derive(Args, Debug, Clone)]
struct CodeArgs {
    #[arg(long, default_value_t = 16384)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    message_length: usize,
    #[arg(long, default_value_t = 0.01)]
    fpr: f64,
    #[arg(long, default_value_t = 3)]
    t: usize,
}

#[derive(Args, Debug)]
struct KeygenArgs {
    #[command(flatten)]
    code: CodeArgs,
    /// Decimal u64 or 64 hex digits; OS entropy when omitted.
    #[arg(long)]
    seed: Option<Seed>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    key: PathBuf,
    /// Message bytes as hex, bits taken LSB-first per byte. Empty when neither this nor
    /// --message-file is given.
    #[arg(long, conflicts_with = "message_file")]
    message: Option<String>,
    /// File whose bytes are the message.
    #[arg(long)]
    message_file: Option<PathBuf>,
    /// Channel applied after embedding, e.g. awgn:0.5+scale:2.
    #[arg(long, default_value = "identity")]
    channel: ChannelSpec,
    #[arg(long)]
    seed: Option<Seed>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReadArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    latent: PathBuf,
    /// Recovery noise level; 0 uses hard signs.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    code: CodeArgs,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Grid point; repeat for more points.
    #[arg(long, required = true)]
    channel: Vec<ChannelSpec>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value = "0")]
    seed: Seed,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FprArgs {
    #[command(flatten)]
    code: CodeArgs,
    /// Number of fresh keys.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Soft vector tested against every key: `uniform`, or `gaussian` for the posterior of
    /// an unwatermarked latent at --sigma.
    #[arg(long, default_value = "uniform")]
    source: String,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value = "0")]
    seed: Seed,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[arg(long, default_value_t = 16384)]
    n: usize,
    #[arg(long, default_value_t = 1e-9)]
    fpr: f64,
    #[arg(long, default_value_t = 4)]
    t: usize,
    /// Comma-separated message lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 40)]
    trials: usize,
    #[arg(long, default_value = "0")]
    seed: Seed,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistinguishArgs {
    /// Directory of `.lat` files; their signs form the corpus.
    #[arg(long)]
    latent: PathBuf,
    #[arg(long, default_value_t = 2)]
    weight: usize,
    /// Maximum number of candidate checks; exhaustive when the full set fits.
    #[arg(long, default_value_t = 1_000_000)]
    budget: usize,
    #[arg(long, default_value = "0")]
    seed: Seed,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes, mapped to exit codes 2 and 3.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

type CmdResult = Result<ExitCode, Failure>;

fn fresh_seed() -> Seed {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    Seed(bytes)
}

fn recover_config(sigma: f64) -> Result<RecoverConfig, Failure> {
    RecoverConfig::new(sigma).map_err(usage)
}

/// Parameter errors are usage errors; everything else is data.
fn classify(e: PrcError) -> Failure {
    match e {
        PrcError::InvalidParameter(_)
        | PrcError::Capacity { .. }
        | PrcError::MessageTooLong { .. } => Failure::Usage(e.into()),
        other => Failure::Data(other.into()),
    }
}

fn classify_harness(e: harness::HarnessError) -> Failure {
    match e {
        harness::HarnessError::InvalidConfig(_) => Failure::Usage(e.into()),
        harness::HarnessError::Prc(p) => classify(p),
        other => Failure::Data(other.into()),
    }
}

fn load_key(path: &Path) -> anyhow::Result<PrcKey> {
    let bytes = fs::read(path).with_context(|| format!("reading key {}", path.display()))?;
    deserialize_key(&bytes).with_context(|| format!("parsing key {}", path.display()))
}

fn load_latent(path: &Path) -> anyhow::Result<Latent> {
    let file =
        fs::File::open(path).with_context(|| format!("opening latent {}", path.display()))?;
    read_latent(std::io::BufReader::new(file))
        .with_context(|| format!("parsing latent {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_detection(r: &DetectionResult) {
    emit!("detected={}", r.detected);
    emit!("lhs={}", r.lhs);
    emit!("centering={}", r.centering);
    emit!("variance_proxy={}", r.variance_proxy);
    emit!("threshold={}", r.threshold);
    emit!("tau={}", r.tau);
    emit!("p_bound={}", r.p_bound);
    emit!("checks_used={}", r.checks_used);
}

fn keygen(a: KeygenArgs) -> CmdResult {
    let c = &a.code;
    let params = PrcParams::derive(c.n, c.message_length, c.fpr, c.t).map_err(classify)?;
    let key = PrcKey::generate_with_params(params, a.seed.unwrap_or_else(fresh_seed));
    write_file(&a.out, &serialize_key(&key))?;
    emit!("n={}", params.n);
    emit!("message_length={}", params.message_length);
    emit!("t={}", params.t);
    emit!("fpr={}", params.fpr);
    emit!("lambda={}", params.lambda);
    emit!("eta={}", params.eta);
    emit!("num_test_bits={}", params.num_test_bits);
    emit!("k={}", params.k);
    emit!("r={}", params.r);
    emit!("max_bp_iter={}", params.max_bp_iter);
    Ok(ExitCode::SUCCESS)
}

fn parse_message(a: &EncodeArgs) -> Result<BitVec, Failure> {
    let bytes = match (&a.message, &a.message_file) {
        (Some(h), _) => {
            hex::decode(h.trim()).map_err(|e| usage(anyhow!("--message is not hex: {e}")))?
        }
        (None, Some(p)) => {
            fs::read(p).with_context(|| format!("reading message {}", p.display()))?
        }
        (None, None) => Vec::new(),
    };
    Ok(BitVec::from_bytes(bytes.len() * 8, &bytes).expect("whole bytes have no padding"))
}

fn encode(a: EncodeArgs) -> CmdResult {
    let key = load_key(&a.key)?;
    let mut message = parse_message(&a)?;
    let max = key.params().message_length;
    if message.len() > max {
        // Whole-byte input may overhang the key's length by zero bits only.
        if message.iter_ones().any(|i| i >= max) {
            return Err(classify(PrcError::MessageTooLong {
                got: message.len(),
                max,
            }));
        }
        message = message.slice(0, max);
    }
    let mut rng = a.seed.unwrap_or_else(fresh_seed).rng();
    let z = sample_watermarked_latent(&key, &message, &mut rng).map_err(classify)?;
    let z = apply_channel(&z, &a.channel, &mut rng);
    let mut buf = Vec::new();
    write_latent(&mut buf, &z).context("serializing latent")?;
    write_file(&a.out, &buf)?;
    emit!("n={}", z.len());
    emit!("message_bits={}", message.len());
    emit!("channel={}", a.channel);
    Ok(ExitCode::SUCCESS)
}

fn read_pair(a: &ReadArgs) -> Result<(PrcKey, prc::SoftVector), Failure> {
    let cfg = recover_config(a.sigma)?;
    let key = load_key(&a.key)?;
    let z = load_latent(&a.latent)?;
    if z.len() != key.params().n {
        return Err(Failure::Data(anyhow!(
            "latent has {} coordinates but the key expects {}",
            z.len(),
            key.params().n
        )));
    }
    Ok((key, soft_from_latent(&z, &cfg)))
}

fn detect(a: ReadArgs) -> CmdResult {
    let (key, s) = read_pair(&a)?;
    let r = prc::detect(&key, &s).map_err(classify)?;
    print_detection(&r);
    Ok(if r.detected {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn decode(a: ReadArgs) -> CmdResult {
    let (key, s) = read_pair(&a)?;
    let det = prc::detect(&key, &s).map_err(classify)?;
    let msg = prc::decode(&key, &s).map_err(classify)?;
    emit!("decoded={}", msg.is_some());
    if let Some(m) = &msg {
        emit!("message_length={}", m.len());
        emit!("message={}", hex::encode(m.to_bytes()));
    }
    print_detection(&det);
    Ok(if msg.is_some() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn write_rows(path: &Path, rows: &[harness::SweepRow]) -> Result<(), Failure> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    harness::write_csv(file, rows).map_err(classify_harness)
}

fn sweep(a: SweepArgs) -> CmdResult {
    let c = a.code;
    let cfg = ExperimentConfig {
        n: c.n,
        message_length: c.message_length,
        fpr: c.fpr,
        t: c.t,
        recover: recover_config(a.sigma)?,
        grid: a.channel,
        trials: a.trials,
        seed: a.seed,
    };
    let rows = run_robustness_sweep(&cfg).map_err(classify_harness)?;
    write_rows(&a.out, &rows)?;
    for r in &rows {
        emit!(
            "channel={}:{} detect_tpr={} decode_tpr={}",
            r.channel_kind,
            r.channel_param,
            r.detect_tpr,
            r.decode_tpr
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn fpr(a: FprArgs) -> CmdResult {
    let c = a.code;
    let rc = recover_config(a.sigma)?;
    let source = match a.source.as_str() {
        "uniform" => SoftSource::UniformRandom,
        "gaussian" => SoftSource::GaussianLatent(rc),
        other => {
            return Err(usage(anyhow!(
                "unknown --source {other:?}; use uniform or gaussian"
            )))
        }
    };
    let cfg = FprConfig {
        n: c.n,
        message_length: c.message_length,
        fpr: c.fpr,
        t: c.t,
        num_keys: a.trials,
        source,
        seed: a.seed,
    };
    let r = run_fpr_experiment(&cfg).map_err(classify_harness)?;
    write_rows(&a.out, &[r.to_row(&cfg)])?;
    emit!("keys={}", r.keys);
    emit!("detections={}", r.detections);
    emit!("rate={}", r.rate);
    emit!("wilson_low={}", r.wilson_low);
    emit!("wilson_high={}", r.wilson_high);
    emit!("bound_3se={}", r.bound_3se);
    Ok(ExitCode::SUCCESS)
}

fn capacity(a: CapacityArgs) -> CmdResult {
    let cfg = CapacityConfig {
        n: a.n,
        t: a.t,
        fpr: a.fpr,
        lengths: a.lengths,
        trials: a.trials,
        recover: recover_config(a.sigma)?,
        seed: a.seed,
    };
    let rows = run_capacity_sweep(&cfg).map_err(classify_harness)?;
    write_rows(&a.out, &rows)?;
    for r in &rows {
        emit!(
            "{} trials={} decode_tpr={}",
            r.experiment,
            r.trials,
            r.decode_tpr
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn distinguish(a: DistinguishArgs) -> CmdResult {
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.latent)
        .with_context(|| format!("listing {}", a.latent.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "lat"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Data(anyhow!(
            "no .lat files in {}",
            a.latent.display()
        )));
    }
    let samples = paths
        .iter()
        .map(|p| load_latent(p).map(|z| z.sign_bits()))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut rng = a.seed.rng();
    let report = sparse_check_distinguisher(&samples, a.weight, a.budget, &mut rng).map_err(
        |e| match e {
            prc_core::analysis::AnalysisError::InvalidWeight { .. } => usage(e),
            other => Failure::Data(other.into()),
        },
    )?;
    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    report.write_csv(file).context("writing report")?;
    emit!("samples={}", samples.len());
    emit!("examined={}", report.examined);
    emit!("exhaustive={}", report.exhaustive);
    emit!("threshold_z={}", report.threshold_z);
    emit!("flagged={}", report.candidates.len());
    emit!("found={}", report.found);
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> CmdResult {
    harness::init_thread_pool_from_env().map_err(usage)?;
    match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Encode(a) => encode(a),
        Command::Detect(a) => detect(a),
        Command::Decode(a) => decode(a),
        Command::Sweep(a) => sweep(a),
        Command::Fpr(a) => fpr(a),
        Command::Capacity(a) => capacity(a),
        Command::Distinguish(a) => distinguish(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("prc: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("prc: {e:#}");
            ExitCode::from(3)
        }
    }
}
