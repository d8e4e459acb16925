use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stagewise::harness::{self, ExperimentConfig, Replayed};
use stagewise::kernels::build_dot_kernel;
use stagewise::{Activation, Error, Result};

#[derive(Parser)]
#[command(name = "stagewise", version, about = "Gradient-flow and random-feature SGD experiments on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-key override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the kernel eigenvalue table for `activation`, `d` and `K`.
    Spectrum(ConfigArgs),
    /// Gradient-flow train/test/oracle curves.
    Flow(ConfigArgs),
    /// Random-feature SGD in both worlds.
    RfSgd(ConfigArgs),
    /// Cyclic-kernel flow vs dot-kernel flow on augmented data.
    AugmentCheck {
        #[arg(long, default_value_t = 6)]
        d: usize,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value = "relu")]
        activation: Activation,
        #[arg(long = "K", default_value_t = 30)]
        max_degree: usize,
        /// Number of log-spaced times between 1e-2 and 1e2.
        #[arg(long, default_value_t = 10)]
        times: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exit with status 3 when the discrepancy exceeds this.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Top kernel eigenvalues and recommended SGD step sizes.
    Stepsize(ConfigArgs),
    /// Rerun the experiment recorded in a CSV file.
    Replay {
        csv: PathBuf,
        /// Write here instead of the recorded output path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Spectrum(a) => {
            let cfg = a.load()?;
            let spec = build_dot_kernel(&cfg.activation, cfg.d, cfg.max_degree)?;
            emit(cfg.output.as_ref(), &spec.spectrum_table())?;
        }
        Command::Flow(a) => {
            let cfg = a.load()?;
            let curves = harness::run_flow_experiment(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", harness::flow_csv(&curves));
            }
        }
        Command::RfSgd(a) => {
            let cfg = a.load()?;
            let curves = harness::run_rf_experiment(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", harness::rf_csv(&curves));
            }
        }
        Command::AugmentCheck { d, n, activation, max_degree, times, seed, tol } => {
            if times < 2 {
                return Err(Error::Config("augment-check needs --times >= 2".into()));
            }
            let grid: Vec<f64> = (0..times).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / (times - 1) as f64)).collect();
            let r = harness::augment_check(d, n, &activation, max_degree, &grid, seed)?;
            println!("# d={d} n={n} activation={activation} K={max_degree} seed={seed}");
            println!("t,max_abs_discrepancy");
            for (t, e) in r.times.iter().zip(&r.discrepancy) {
                println!("{t:e},{e:e}");
            }
            println!("# max discrepancy {:e} (tolerance {tol:e})", r.max_discrepancy);
            return Ok(r.max_discrepancy <= tol);
        }
        Command::Stepsize(a) => {
            let cfg = a.load()?;
            let n = cfg.sample_size();
            let r = harness::stepsize_report(&cfg.activation, cfg.max_degree, cfg.d, n, cfg.seed)?;
            println!("# d={} n={n} activation={} K={}", cfg.d, cfg.activation, cfg.max_degree);
            println!("lambda_max(H/n) dot    = {:e}  eta = {:e}", r.lambda_bar_dot, r.eta_dot);
            println!("lambda_max(H/n) cyclic = {:e}  eta = {:e}", r.lambda_bar_cyclic, r.eta_cyclic);
            match (r.lambda_augmented, r.augmented_ratio()) {
                (Some(l), Some(q)) => println!("lambda_max augmented = {l:e}  ratio to cyclic = {q:.4} (d = {})", cfg.d),
                _ => println!("augmented matrix skipped (n d > {})", harness::AUGMENT_CAP),
            }
        }
        Command::Replay { csv, output } => {
            let (cfg, out) = harness::replay(&csv, output)?;
            if cfg.output.is_none() {
                match out {
                    Replayed::Flow(c) => print!("{}", harness::flow_csv(&c)),
                    Replayed::Rf(c) => print!("{}", harness::rf_csv(&c)),
                }
            }
        }
    }
    Ok(true)
}

fn emit(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
