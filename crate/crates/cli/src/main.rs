//! `dyadsim`: campaigns over gain-dissipative condensate networks.
//!
//! ```sh
//! dyadsim perturb --J 0.45 --gamma 1.8 --g 0.4 --xi 2
//! dyadsim ensemble --preset fig1cd --r-gamma 1.0 --r-g 1.0 --trials 400
//! dyadsim chain --preset fig4a --samples 1000 --out out/fig4a
//! ```
//!
//! Every run command writes CSV data, `summary.json` and `manifest.json` into
//! `--out`. Failures print `{"error": {"kind", "message"}}` to stderr and exit nonzero.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dyadsim_core::topology::TetradShape;

use crate::config::RunConfig;
use crate::output::OutDir;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dyadsim_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "dyadsim", version, about = "Asymmetric condensate dyads: ensembles, calibration and chain RNG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One noise-seeded trial; writes final densities and phases.
    Trial(Common),
    /// Trials with seeds seed, seed+1, ...; writes per-trial rows and the outcome histogram.
    Ensemble(Common),
    /// p1 and sigma against r_g at one r_gamma, with spline critical points.
    Calibrate(Common),
    /// Critical points over several r_gamma and the fitted slope.
    Locus(Common),
    /// Tetrad outcome histograms and bias over alpha.
    Tetrad(Common),
    /// Asymmetric-region classification over (g, |J|, xi).
    Region(Common),
    /// Chain outcome histogram with randomness tests.
    Chain(Common),
    /// Chain sample stream, packed bits and randomness tests.
    Rng(Common),
    /// Equal-occupancy state and first-order pump correction.
    Perturb(Common),
    /// Print the default configuration (or a preset) as JSON.
    Defaults {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        full_scale: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config file (a manifest.json is accepted too).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedded figure preset: fig1a, fig1b, fig1cd, fig2, fig3, fig4a, fig4b, fig4c.
    #[arg(long)]
    preset: Option<String>,
    /// Use the original (large) trial counts of the preset.
    #[arg(long)]
    full_scale: bool,
    /// Output directory [default: dyadsim-out/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides DYADSIM_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long = "J", allow_negative_numbers = true)]
    j: Option<f64>,
    #[arg(long)]
    noise_amplitude: Option<f64>,
    #[arg(long)]
    r_g: Option<f64>,
    #[arg(long)]
    r_gamma: Option<f64>,
    /// Inter-dyad alpha of a single tetrad (tetrad command scans campaign.alphas unless given).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_shape)]
    shape: Option<TetradShape>,
}

fn parse_shape(s: &str) -> Result<TetradShape, String> {
    match s.to_ascii_lowercase().as_str() {
        "square" => Ok(TetradShape::Square),
        "crossed" | "x" => Ok(TetradShape::Crossed),
        _ => Err(format!("unknown shape '{s}' (square or crossed)")),
    }
}

impl Common {
    /// Preset or file, then DYADSIM_SEED, then flags.
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match (&self.preset, &self.config) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either --preset or --config, not both".into())),
            (Some(p), None) => config::preset(p, self.full_scale)?,
            (None, Some(path)) => config::load(path)?,
            (None, None) => RunConfig::default(),
        };
        if let Ok(s) = std::env::var("DYADSIM_SEED") {
            c.noise.seed = s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("DYADSIM_SEED is not an unsigned integer: '{s}'")))?;
        }
        if let Some(s) = self.seed {
            c.noise.seed = s;
        }
        if let Some(v) = self.trials {
            c.campaign.trials = v;
        }
        if let Some(v) = self.samples {
            c.campaign.samples = v;
        }
        if let Some(v) = self.gamma {
            c.model.gamma = v;
        }
        if let Some(v) = self.g {
            c.model.g = v;
        }
        if let Some(v) = self.xi {
            c.model.xi = v;
        }
        if let Some(v) = self.j {
            c.model.j = Some(v);
            if let Some(ch) = c.model.chain.as_mut() {
                ch.intra_coupling = v;
            }
        }
        if let Some(v) = self.noise_amplitude {
            c.noise.amplitude = v;
        }
        if let Some(v) = self.r_g {
            c.campaign.r_g = v;
        }
        if let Some(v) = self.r_gamma {
            c.campaign.r_gamma = v;
        }
        if let Some(v) = self.alpha {
            c.campaign.alphas = vec![v];
            if let Some(t) = c.model.tetrad.as_mut() {
                t.alpha = v;
            }
        }
        if let Some(v) = self.shape {
            c.campaign.shape = v;
            if let Some(t) = c.model.tetrad.as_mut() {
                t.shape = v;
            }
        }
        Ok(c)
    }
}

fn run(name: &str, common: &Common) -> Result<(), CliError> {
    let cfg = common.resolve()?;
    let threads = common.threads.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("dyadsim-out").join(name));
    let mut out = OutDir::create(&dir)?;
    let start = Instant::now();
    pool.install(|| commands::dispatch(name, &cfg, &mut out))?;
    out.finish(name, &cfg, threads, start.elapsed().as_secs_f64())?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Trial(c) => run("trial", c),
        Command::Ensemble(c) => run("ensemble", c),
        Command::Calibrate(c) => run("calibrate", c),
        Command::Locus(c) => run("locus", c),
        Command::Tetrad(c) => run("tetrad", c),
        Command::Region(c) => run("region", c),
        Command::Chain(c) => run("chain", c),
        Command::Rng(c) => run("rng", c),
        Command::Perturb(c) => run("perturb", c),
        Command::Defaults { preset, full_scale } => match preset {
            Some(p) => config::preset(p, *full_scale).map(|c| println!("{}", c.to_canonical_json())),
            None => {
                println!("{}", RunConfig::default().to_canonical_json());
                Ok(())
            }
        },
    };
    if let Err(e) = result {
        let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
        eprintln!("{body}");
        std::process::exit(e.exit_code());
    }
}
