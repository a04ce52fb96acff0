// `!(a <= b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use wassrobust::data::{gen_synthetic, metrics_bytes, write_csv, SyntheticKind};
use wassrobust::experiment::{attack_eval, run_experiment};
use wassrobust::verify::{duality_check, grad_check};

/// Wasserstein distributionally robust training and evaluation.
///
/// Set WASSROBUST_THREADS to cap the worker thread pool.
#[derive(Parser)]
#[command(name = "wassrobust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every algorithm in a config file and write its metrics CSV.
    Run { config: PathBuf },
    /// Compare the minimized dual with the exact worst case on random instances.
    VerifyDuality {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest acceptable absolute gap.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Finite-difference check of every model's analytic gradients.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate saved parameters on a config's test split; CSV on stdout.
    AttackEval { params: PathBuf, config: PathBuf },
    /// Write a synthetic dataset as CSV.
    GenData {
        #[arg(long, default_value = "two-gaussians")]
        kind: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("WASSROBUST_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("WASSROBUST_THREADS = {raw:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Run { config } => {
            let s = run_experiment(&config).with_context(|| format!("run {}", config.display()))?;
            println!("wrote {} rows to {}", s.rows.len(), s.metrics_path.display());
            for p in &s.params_files {
                println!("wrote {}", p.display());
            }
        }
        Command::VerifyDuality { instances, seed, tol } => {
            let r = duality_check(instances, seed)?;
            println!(
                "instances {}  max |dual - primal| {:e}  (instance {})",
                r.instances, r.max_gap, r.worst_instance
            );
            if !(r.max_gap <= tol) {
                bail!("duality gap {:e} exceeds {tol:e}", r.max_gap);
            }
        }
        Command::GradCheck { trials, seed } => {
            let r = grad_check(trials, seed);
            println!("checks {}  max error {:e}  failures {}", r.checks, r.max_error, r.failures.len());
            for f in &r.failures {
                eprintln!("{f}");
            }
            if !r.failures.is_empty() {
                bail!("{} coordinates outside tolerance", r.failures.len());
            }
        }
        Command::AttackEval { params, config } => {
            let rows = attack_eval(&params, &config)?;
            std::io::stdout().write_all(&metrics_bytes(&rows))?;
        }
        Command::GenData {
            kind,
            n,
            d,
            noise,
            seed,
            out,
        } => {
            let Some(k) = SyntheticKind::parse(&kind) else {
                bail!("unknown kind {kind:?} (two-gaussians, two-moons, linear-regression)");
            };
            let ds = gen_synthetic::<f64>(k, n, d, noise, seed)?;
            write_csv(&out, &ds)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
