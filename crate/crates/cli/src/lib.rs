//! Command-line front end: `pretrain`, `train`, `eval`, `pace`, `blobs`, `gradcheck`.
//!
//! Exit codes: 0 on success, 1 for usage or validation errors, 2 for runtime
//! failures (I/O, malformed data, divergence, failed gradient check).

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use idcl_core::autoencoder::checkpoint;
use idcl_core::curriculum::pace;
use idcl_core::data::{self, ExportPaths};
use idcl_core::kmeans::lloyd_best_of;
use idcl_core::metrics::evaluate;
use idcl_core::numerics::rank_position;
use idcl_core::pipeline::{gradient_self_check, pretrain_phase, train_from, RunStreams};
use idcl_core::{Dataset, Error, RngStream, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "idcl", version, about = "Density-driven curriculum deep clustering")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the autoencoder on reconstruction only and save a checkpoint.
    Pretrain {
        #[command(flatten)]
        input: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to write.
        #[arg(long, default_value = "pretrained.ckpt")]
        out: PathBuf,
    },
    /// Full training; writes <out>.metrics.jsonl, <out>.embeddings.csv,
    /// <out>.labels.txt and <out>.ckpt.
    Train {
        #[command(flatten)]
        input: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Start from this checkpoint instead of pretraining.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Output path prefix.
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Score predicted labels, or a raw-data k-means baseline, against the data's classes.
    Eval {
        #[command(flatten)]
        input: DataArgs,
        /// File with one predicted cluster id per line.
        #[arg(long, required_unless_present = "kmeans_baseline")]
        pred: Option<PathBuf>,
        /// Also cluster the raw features with k-means (best of this many restarts).
        #[arg(long)]
        kmeans_baseline: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the pacing schedule as CSV.
    Pace {
        #[arg(long, default_value_t = 0.6)]
        zeta0: f64,
        #[arg(long, default_value_t = 0.95)]
        zeta_max: f64,
        #[arg(long, default_value_t = 50)]
        tgrow: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        /// Cluster size used for the `selected` column.
        #[arg(long, default_value_t = 100)]
        cluster_size: usize,
    },
    /// Write a synthetic Gaussian-blob data set as CSV.
    Blobs {
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 20.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on random small instances.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        /// Number of random instances.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Pick from the file contents.
    Auto,
    Optdigits,
    Idx,
    Csv,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Data file (optdigits text, IDX images or CSV table).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    format: Format,
    /// IDX label file accompanying IDX images.
    #[arg(long)]
    labels: Option<PathBuf>,
}

/// Flags mirroring the run configuration; each overrides the config file.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Config file (`[section]` headers with `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    zeta0: Option<f64>,
    #[arg(long)]
    zeta_max: Option<f64>,
    #[arg(long)]
    tgrow: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    pretrain_lr: Option<f64>,
    /// Step size of the clustering phase.
    #[arg(long)]
    lr: Option<f64>,
    /// Encoder hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long)]
    bottleneck: Option<usize>,
    /// Target per-coordinate standard deviation of the embedding when the
    /// clustering phase starts.
    #[arg(long)]
    latent_std: Option<f64>,
    #[arg(long, value_name = "BOOL")]
    augment_pretrain: Option<bool>,
    #[arg(long, value_name = "BOOL")]
    augment_train: Option<bool>,
    /// Seed each epoch's k-means with the previous centers.
    #[arg(long, value_name = "BOOL")]
    warm_start: Option<bool>,
    #[arg(long)]
    kmeans_max_iter: Option<usize>,
    #[arg(long)]
    kmeans_tol: Option<f64>,
    #[arg(long)]
    kmeans_restarts: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::TooManyClusters { .. } | Error::MissingLabels(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

impl RunArgs {
    /// Defaults, then the config file, then explicit flags.
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_file(&text).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.k, &self.k);
        set(&mut cfg.alpha, &self.alpha);
        set(&mut cfg.lambda1, &self.lambda1);
        set(&mut cfg.lambda2, &self.lambda2);
        set(&mut cfg.zeta0, &self.zeta0);
        set(&mut cfg.zeta_max, &self.zeta_max);
        set(&mut cfg.t_grow, &self.tgrow);
        set(&mut cfg.mu, &self.mu);
        set(&mut cfg.max_iter, &self.max_iter);
        set(&mut cfg.pretrain_epochs, &self.pretrain_epochs);
        set(&mut cfg.batch_size, &self.batch_size);
        set(&mut cfg.pretrain_lr, &self.pretrain_lr);
        set(&mut cfg.lr, &self.lr);
        set(&mut cfg.widths, &self.widths);
        set(&mut cfg.bottleneck, &self.bottleneck);
        set(&mut cfg.kmeans_max_iter, &self.kmeans_max_iter);
        set(&mut cfg.kmeans_tol, &self.kmeans_tol);
        set(&mut cfg.kmeans_restarts, &self.kmeans_restarts);
        set(&mut cfg.augment_pretrain, &self.augment_pretrain);
        set(&mut cfg.augment_train, &self.augment_train);
        set(&mut cfg.warm_start, &self.warm_start);
        if self.latent_std.is_some() {
            cfg.latent_std = self.latent_std;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// The seed must come from the command line or the config file.
    fn has_seed(&self) -> CliResult<bool> {
        if self.seed.is_some() {
            return Ok(true);
        }
        let Some(path) = &self.config else {
            return Ok(false);
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut probe = RunConfig {
            seed: u64::MAX,
            ..RunConfig::default()
        };
        probe.apply_file(&text).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut other = RunConfig {
            seed: 0,
            ..RunConfig::default()
        };
        other.apply_file(&text).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(probe.seed == other.seed)
    }
}

fn detect_format(path: &Path) -> CliResult<Format> {
    let mut head = [0u8; 4];
    let mut file = fs::File::open(path)?;
    let got = file.read(&mut head)?;
    if got == 4 && u32::from_be_bytes(head) == 0x0000_0803 {
        return Ok(Format::Idx);
    }
    let mut first = String::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            first = t.to_string();
            break;
        }
    }
    let fields: Vec<&str> = first.split(',').map(str::trim).collect();
    let integers = fields.iter().all(|f| f.parse::<u32>().is_ok());
    if fields.len() == 65 && integers {
        Ok(Format::Optdigits)
    } else {
        Ok(Format::Csv)
    }
}

fn load(input: &DataArgs) -> CliResult<Dataset> {
    let format = match input.format {
        Format::Auto => detect_format(&input.data)?,
        f => f,
    };
    let data = match format {
        Format::Optdigits => data::load_optdigits(&input.data)?,
        Format::Idx => data::load_idx(&input.data, input.labels.as_deref())?,
        Format::Csv | Format::Auto => data::load_table(&input.data)?,
    };
    log::info!("loaded {}: n = {}, dim = {}", data.name, data.n(), data.dim());
    Ok(data)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_pretrain(input: &DataArgs, run: &RunArgs, out: &Path) -> CliResult {
    let cfg = run.resolve()?;
    let data = load(input)?;
    let mut streams = RunStreams::new(cfg.seed);
    let (params, opt, losses) = pretrain_phase(&cfg, &data, &mut streams)?;
    checkpoint::save(out, &params, &opt)?;
    if let Some(last) = losses.last() {
        println!("pretrained {} epochs, reconstruction loss {last:.6}", losses.len());
    }
    println!("checkpoint: {}", out.display());
    Ok(())
}

fn cmd_train(input: &DataArgs, run: &RunArgs, init: Option<&Path>, out: &Path) -> CliResult {
    if !run.has_seed()? {
        return Err(CliError::Usage("train requires --seed (or `seed` under [run] in --config)".into()));
    }
    let cfg = run.resolve()?;
    let data = load(input)?;
    let ckpt_path = with_suffix(out, ".ckpt");
    let mut streams = RunStreams::new(cfg.seed);
    let params = match init {
        Some(path) => checkpoint::load(path)?.0,
        None => pretrain_phase(&cfg, &data, &mut streams)?.0,
    };
    let outcome = train_from(&cfg, &data, params, &mut streams, |_, params, opt| {
        checkpoint::save(&ckpt_path, params, opt)
    })?;
    let paths: ExportPaths = data::export_run(
        &outcome.history,
        &outcome.embeddings,
        &outcome.labels,
        data.labels.as_deref(),
        out,
    )?;
    let labels_path = with_suffix(out, ".labels.txt");
    let text: String = outcome.labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&labels_path, text)?;
    checkpoint::save(&ckpt_path, &outcome.params, &outcome.optimizer)?;

    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "{} after {} epochs",
        if outcome.converged { "converged" } else { "stopped at max_iter" },
        last.epoch
    );
    if let (Some(acc), Some(nmi)) = (last.acc, last.nmi) {
        println!("acc {acc:.4} nmi {nmi:.4}");
    }
    println!("metrics: {}", paths.metrics.display());
    println!("embeddings: {}", paths.embeddings.display());
    println!("labels: {}", labels_path.display());
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| CliError::Runtime(format!("{}:{}: `{l}` is not a cluster id", path.display(), i + 1)))
        })
        .collect()
}

fn cmd_eval(
    input: &DataArgs,
    pred: Option<&Path>,
    baseline: Option<usize>,
    k: Option<usize>,
    seed: u64,
) -> CliResult {
    let data = load(input)?;
    let truth = data.require_labels()?;
    if let Some(path) = pred {
        let labels = read_labels(path)?;
        let report = evaluate(truth, &labels)?;
        println!("acc {:.4} nmi {:.4}", report.acc, report.nmi);
    }
    if let Some(restarts) = baseline {
        let k = k.or(data.class_count()).expect("labelled data");
        let km = lloyd_best_of(data.x.view(), k, restarts, &mut RngStream::new(seed), &Default::default())?;
        let report = evaluate(truth, &km.labels)?;
        println!("kmeans baseline acc {:.4} nmi {:.4}", report.acc, report.nmi);
    }
    Ok(())
}

fn cmd_pace(zeta0: f64, zeta_max: f64, tgrow: usize, epochs: usize, size: usize) -> CliResult {
    let sched = idcl_core::PaceSchedule::new(zeta0, zeta_max, tgrow)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "epoch,zeta,selected")?;
    for t in 0..epochs {
        let z = pace(t, &sched);
        writeln!(out, "{t},{z},{}", rank_position(size, z))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_blobs(n: usize, k: usize, dim: usize, separation: f64, sigma: f64, seed: u64, out: &Path) -> CliResult {
    let data = data::synth_blobs(n, k, dim, separation, sigma, &mut RngStream::new(seed))?;
    let mut w = io::BufWriter::new(fs::File::create(out)?);
    data::write_table(&mut w, &data)?;
    w.flush()?;
    println!("wrote {} samples to {}", n, out.display());
    Ok(())
}

fn cmd_gradcheck(seed: u64, instances: usize) -> CliResult {
    let mut worst: f64 = 0.0;
    for i in 0..instances as u64 {
        let r = gradient_self_check(seed.wrapping_add(i))?;
        log::info!(
            "instance {i}: n {} dim {} k {}: embedding {:.3e}, network {:.3e} ({} checked, {} skipped)",
            r.n,
            r.dim,
            r.k,
            r.embedding_error,
            r.network.max_relative_error,
            r.network.checked,
            r.network.skipped
        );
        worst = worst.max(r.max_error());
    }
    println!("max relative error {worst:.3e} over {instances} instances");
    if worst >= 1e-4 {
        return Err(CliError::Runtime(format!("gradient check failed: {worst:.3e} >= 1e-4")));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Pretrain { input, run, out } => cmd_pretrain(input, run, out),
        Command::Train {
            input,
            run,
            init,
            out,
        } => cmd_train(input, run, init.as_deref(), out),
        Command::Eval {
            input,
            pred,
            kmeans_baseline,
            k,
            seed,
        } => cmd_eval(input, pred.as_deref(), *kmeans_baseline, *k, *seed),
        Command::Pace {
            zeta0,
            zeta_max,
            tgrow,
            epochs,
            cluster_size,
        } => cmd_pace(*zeta0, *zeta_max, *tgrow, *epochs, *cluster_size),
        Command::Blobs {
            n,
            k,
            dim,
            separation,
            sigma,
            seed,
            out,
        } => cmd_blobs(*n, *k, *dim, *separation, *sigma, *seed, out),
        Command::Gradcheck { seed, instances } => cmd_gradcheck(*seed, *instances),
    }
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run `idcl --help` for usage");
            1
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}
