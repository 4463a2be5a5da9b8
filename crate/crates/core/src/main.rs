use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dictrnn::artifact::OutPaths;
use dictrnn::config::{ActivationConfig, Config, ConfigError};
use dictrnn::harness::{
    cmd_build, cmd_generate, cmd_report, cmd_run, cmd_verify, resolve_out_dir, HarnessError,
};

#[derive(Parser)]
#[command(name = "dictrnn", about = "delay-dictionary RNN pipeline", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the benchmark trajectory into the output directory.
    Generate(ConfigArgs),
    /// Build grid, dictionary, certificate, and weights from the stored trajectory.
    Build(ConfigArgs),
    /// Replay the network against the stored artifacts and verify every invariant.
    Run(ConfigArgs),
    /// Run the whole pipeline and verification in memory, writing nothing.
    Verify(ConfigArgs),
    /// Summarize a finished run directory from its ledger.
    Report {
        /// Run directory (falls back to "out", rooted at $DICTRNN_OUT_ROOT if set).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(short, long)]
    config: PathBuf,

    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override map name (params stay as configured).
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    train_len: Option<usize>,
    #[arg(long)]
    eval_len: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    grid_seed: Option<u64>,
    #[arg(long)]
    jitter_scale: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Activation table seed; valid only in tabulated mode.
    #[arg(long)]
    h_seed: Option<u64>,
    /// Activation gain; valid only in analytic mode.
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated seed window, newest value first.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seed_window: Option<Vec<f64>>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(Config, OutPaths), HarnessError> {
        let mut cfg = Config::from_file(&self.config)?;
        if let Some(map) = &self.map {
            cfg.map.name = map.clone();
        }
        if let Some(l) = self.l {
            cfg.l = l;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(v) = self.train_len {
            cfg.train_len = v;
        }
        if let Some(v) = self.eval_len {
            cfg.eval_len = Some(v);
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.grid_seed {
            cfg.grid_seed = v;
        }
        if let Some(v) = self.jitter_scale {
            cfg.jitter_scale = v;
        }
        if let Some(v) = self.max_retries {
            cfg.max_retries = v;
        }
        if let Some(seed) = self.h_seed {
            match &mut cfg.activation {
                ActivationConfig::Tabulated { h_seed, .. } => *h_seed = seed,
                ActivationConfig::Analytic { .. } => {
                    return Err(ConfigError::Invalid {
                        field: "activation",
                        reason: "--h-seed applies only to tabulated mode".into(),
                    }
                    .into());
                }
            }
        }
        if let Some(b) = self.beta {
            match &mut cfg.activation {
                ActivationConfig::Analytic { beta } => *beta = b,
                ActivationConfig::Tabulated { .. } => {
                    return Err(ConfigError::Invalid {
                        field: "activation",
                        reason: "--beta applies only to analytic mode".into(),
                    }
                    .into());
                }
            }
        }
        if let Some(w) = &self.seed_window {
            cfg.seed_window = w.clone();
        }
        cfg.validate()?;
        let dir = resolve_out_dir(self.out.as_deref(), cfg.output_dir.as_deref());
        Ok((cfg, OutPaths::new(dir)))
    }
}

fn dispatch(cli: &Cli) -> Result<i32, HarnessError> {
    match &cli.cmd {
        Cmd::Generate(args) => {
            let (cfg, paths) = args.load()?;
            cmd_generate(&cfg, &paths)
        }
        Cmd::Build(args) => {
            let (cfg, paths) = args.load()?;
            cmd_build(&cfg, &paths)
        }
        Cmd::Run(args) => {
            let (cfg, paths) = args.load()?;
            cmd_run(&cfg, &paths)
        }
        Cmd::Verify(args) => {
            let (cfg, _) = args.load()?;
            cmd_verify(&cfg)
        }
        Cmd::Report { out } => {
            let dir = resolve_out_dir(out.as_deref(), None);
            cmd_report(&OutPaths::new(dir))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code.clamp(0, u8::MAX as i32) as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
