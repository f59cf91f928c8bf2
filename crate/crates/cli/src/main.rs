use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use llpr::models::Regressor;
use llpr_cli::config::{ConfigError, ExperimentConfig, ExperimentKind};
use llpr_cli::output::Outputs;
use llpr_cli::recipes;

#[derive(Parser)]
#[command(name = "llpr", version, about = "Prediction-rigidity uncertainty pipelines")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the dataset cache directory.
    #[arg(long = "cache-dir", global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured model.
    Fit,
    /// Accumulate, calibrate and report uncertainties for a trained model.
    Uq {
        /// Model file; defaults to `model.json` in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Seeded multi-split benchmark on the manifest datasets.
    Benchmark,
    /// Out-of-domain detection experiment.
    Ood,
    /// Kernel recursion and approximation-gap study.
    NtkStudy,
    /// Calibration quality as a function of hidden width.
    WidthStudy,
    /// Config helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print a complete default config.
    Init {
        #[arg(long, value_enum)]
        kind: ExperimentKind,
    },
}

#[derive(Serialize, Default)]
struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cache_dir: Option<PathBuf>,
}

enum Failure {
    Config(ConfigError),
    Pipeline(llpr::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<llpr::Error> for Failure {
    fn from(e: llpr::Error) -> Self {
        Failure::Pipeline(e)
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, String, Overrides), ConfigError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError("--config is required for this command".into()))?;
    let (mut cfg, text) = ExperimentConfig::load(path)?;
    let ov = Overrides {
        seed: cli.seed,
        output_dir: cli.out.clone(),
        cache_dir: cli.cache_dir.clone(),
    };
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(o) = &ov.output_dir {
        cfg.output_dir = o.clone();
    }
    if let Some(c) = &ov.cache_dir {
        cfg.cache_dir = c.clone();
    }
    Ok((cfg, text, ov))
}

fn require(cfg: &ExperimentConfig, kinds: &[ExperimentKind], command: &str) -> Result<(), ConfigError> {
    if kinds.contains(&cfg.kind) {
        Ok(())
    } else {
        let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
        Err(ConfigError(format!(
            "`{command}` needs a config of kind {}, got {}",
            names.join(" or "),
            cfg.kind.name()
        )))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Config {
        action: ConfigAction::Init { kind },
    } = &cli.command
    {
        print!("{}", ExperimentConfig::defaults(*kind).to_toml());
        return Ok(());
    }
    let (cfg, text, ov) = load(&cli)?;
    use ExperimentKind as K;
    match &cli.command {
        Command::Fit | Command::Uq { .. } => require(&cfg, &[K::ToyFit, K::Ood, K::WidthStudy], "fit/uq")?,
        Command::Benchmark => require(&cfg, &[K::Benchmark], "benchmark")?,
        Command::Ood => require(&cfg, &[K::Ood], "ood")?,
        Command::NtkStudy => require(&cfg, &[K::NtkStudy], "ntk-study")?,
        Command::WidthStudy => require(&cfg, &[K::WidthStudy, K::NtkStudy], "width-study")?,
        Command::Config { .. } => unreachable!("handled above"),
    }
    if matches!(cli.command, Command::WidthStudy) && cfg.width.is_none() {
        return Err(ConfigError("width-study needs a [width] section".into()).into());
    }
    let out = Outputs::create(&cfg.output_dir)?;
    out.text("config.toml", &text)?;
    out.json("overrides.json", &ov)?;

    match &cli.command {
        Command::Fit => {
            let f = recipes::run_fit(&cfg, &out)?;
            println!("best epoch {} with validation loss {:.6e}", f.log.best_epoch, f.log.best_val_loss);
            if let Some(t) = &f.toy {
                let worst = t.training_variances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                println!("probe variance {:.6e}, largest training-point variance {:.6e}", t.probe_variance, worst);
            }
        }
        Command::Uq { model } => {
            let path = model.clone().unwrap_or_else(|| out.path("model.json"));
            let m = Regressor::load(&path)?;
            let u = recipes::run_uq_for_config(&cfg, &m, &out)?;
            println!(
                "{} variances: alpha2 {:.6e}, regularizer {:.6e}, test rmse {:.6}, nll {:.6}",
                if u.state.is_calibrated() { "calibrated" } else { "raw" },
                u.state.alpha2(),
                u.state.regularizer(),
                u.test.rmse,
                u.test.nll
            );
            if let Some(o) = &u.out_of_domain {
                println!("mean variance in-domain {:.6e} vs out-of-domain {:.6e}", u.test.mean_variance, o.mean_variance);
            }
        }
        Command::Benchmark => {
            let b = recipes::run_benchmark_default(&cfg, &out)?;
            for r in &b.table {
                println!("{}: rmse {} nll {} ({}/{} splits)", r.dataset, r.rmse, r.nll, r.n_completed, r.n_splits);
            }
        }
        Command::Ood => {
            let o = recipes::run_ood(&cfg, &out)?;
            println!(
                "mean variance in-domain {:.6e} vs out-of-domain {:.6e}: {}",
                o.in_domain_mean_variance,
                o.out_of_domain_mean_variance,
                if o.flagged() { "flagged" } else { "not flagged" }
            );
        }
        Command::NtkStudy => {
            let s = recipes::run_ntk_study(&cfg, &out)?;
            for g in &s.gaps {
                let smaller = g.rows.iter().filter(|r| r.delta_smaller).count();
                println!("{}: |delta| < |xi| in {smaller}/{} rows", g.activation, g.rows.len());
            }
            if let Some(w) = &s.width {
                println!("{}", w.trend.summary_line());
            }
        }
        Command::WidthStudy => {
            let w = recipes::run_width_study(&cfg, &out)?;
            println!("{}", w.trend.summary_line());
        }
        Command::Config { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, report) = match f {
                Failure::Config(e) => (2, ErrorReport { error: "config", message: e.0 }),
                Failure::Pipeline(e) => (1, ErrorReport { error: "pipeline", message: e.to_string() }),
            };
            eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
            ExitCode::from(code)
        }
    }
}
