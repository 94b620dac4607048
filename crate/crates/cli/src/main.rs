use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use flashnet::harness::mnist::{locate, read_images, read_labels, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS};
use flashnet::harness::{run_experiment, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "flashnet", version, about = "Floating-gate crossbar classifier simulator")]
struct Cli {
    /// TOML experiment config; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory holding the MNIST IDX files.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Relative tuning accuracy.
    #[arg(long, global = true)]
    accuracy: Option<f64>,
    /// Fraction of cells tuned.
    #[arg(long, global = true)]
    tuned_fraction: Option<f64>,
    /// Cell read noise during evaluation.
    #[arg(long, global = true)]
    noise: Option<Switch>,
    /// Technology profile for `project` (builtin name or file); repeatable.
    #[arg(long, global = true)]
    tech: Vec<String>,
    /// Binarization threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the software reference network.
    Train,
    /// Import trained weights into simulated arrays.
    Import,
    /// Classify the test set with the imported networks.
    Evaluate,
    /// Static power, latency and energy per classification.
    Power,
    /// Project a large convolutional workload onto technology profiles.
    Project,
    /// train, import, evaluate and power in sequence.
    Full,
    /// Sweep disturb parameters against end-to-end fidelity.
    Calibrate,
    /// Print the resolved config as TOML.
    Config,
    /// Download the MNIST IDX files.
    Fetch {
        /// Base URL serving the four `.gz` files.
        #[arg(long, env = "FLASHNET_MNIST_MIRROR")]
        mirror: String,
    },
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(a) = cli.accuracy {
        cfg.import.accuracy = a;
    }
    if let Some(f) = cli.tuned_fraction {
        cfg.import.tuned_fraction = f;
    }
    if let Some(n) = cli.noise {
        cfg.noise = matches!(n, Switch::On);
    }
    if !cli.tech.is_empty() {
        cfg.techs = cli.tech.clone();
    }
    if let Some(t) = cli.threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fetch(mirror: &str, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for name in [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS] {
        if let Some(p) = locate(dir, name) {
            eprintln!("{} present", p.display());
            continue;
        }
        let url = format!("{}/{name}.gz", mirror.trim_end_matches('/'));
        eprintln!("fetching {url}");
        let bytes = ureq::get(&url)
            .call()
            .with_context(|| format!("GET {url}"))?
            .body_mut()
            .with_config()
            .limit(64 << 20)
            .read_to_vec()?;
        let mut raw = Vec::new();
        flate2::read::GzDecoder::new(bytes.as_slice())
            .read_to_end(&mut raw)
            .with_context(|| format!("{url} is not a gzip stream"))?;
        let dest = dir.join(format!("{name}.gz"));
        fs::write(&dest, &bytes)?;
        let check = if name.contains("images") { read_images(&dest).map(|_| ()) } else { read_labels(&dest).map(|_| ()) };
        if let Err(e) = check {
            fs::remove_file(&dest)?;
            bail!("{url}: {e}");
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = resolve(&cli)?;
    let command = match &cli.command {
        Cmd::Config => {
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
        Cmd::Fetch { mirror } => return fetch(mirror, &cfg.data_dir),
        Cmd::Train => Command::Train,
        Cmd::Import => Command::Import,
        Cmd::Evaluate => Command::Evaluate,
        Cmd::Power => Command::Power,
        Cmd::Project => Command::Project,
        Cmd::Full => Command::Full,
        Cmd::Calibrate => Command::Calibrate,
    };
    let outcome = run_experiment(&cfg, command)?;
    for p in &outcome.written {
        eprintln!("wrote {}", p.display());
    }
    let mut summary = outcome.summary;
    if let Some(obj) = summary.as_object_mut() {
        obj.remove("histograms");
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
