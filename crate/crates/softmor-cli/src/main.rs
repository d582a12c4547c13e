//! `softmor` — benchmark front end for the coupled solid/soft-tissue
//! model: forward and LQR full-order runs, reduction sweeps, error tables,
//! and SVG plots.

mod config;
mod plot;
mod records;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{DampingCfg, ExperimentConfig};

#[derive(Parser)]
#[command(name = "softmor", version, about = "Coupled solid/soft-tissue reduction benchmarks")]
struct Cli {
    /// JSON configuration file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    nx: Option<usize>,
    #[arg(long, global = true)]
    ny: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Solid (hand) mass per translational DOF.
    #[arg(long, global = true)]
    mass: Option<f64>,
    /// Rayleigh damping, mass-proportional part.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Rayleigh damping, stiffness-proportional part.
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    q_scale: Option<f64>,
    #[arg(long, global = true)]
    r_scale: Option<f64>,
    #[arg(long, global = true)]
    t_forward: Option<f64>,
    #[arg(long, global = true)]
    t_lqr: Option<f64>,
    #[arg(long, global = true)]
    nt: Option<usize>,
    /// Target solid displacement "x,y".
    #[arg(long, global = true)]
    target: Option<String>,
    /// Comma-separated method tags.
    #[arg(long, global = true)]
    methods: Option<String>,
    /// Comma-separated basis sizes; omit to use the energy rule.
    #[arg(long, global = true)]
    sizes: Option<String>,
    #[arg(long, global = true)]
    energy: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Timing repetitions (median); 0 disables timing for byte-stable CSVs.
    #[arg(long, global = true)]
    timing_reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full-order forward simulation; writes the trajectory CSV.
    ForwardFom,
    /// Forward reduction sweep over methods and basis sizes.
    ForwardSweep {
        /// Also export each basis matrix in Matrix Market format.
        #[arg(long)]
        export_bases: bool,
    },
    /// Dense Riccati solve and closed-loop drive to the target.
    LqrFom {
        /// Also export P, Z, and K_f in Matrix Market format.
        #[arg(long)]
        export_solution: bool,
    },
    /// Reduced-basis Riccati sweep over methods and basis sizes.
    LqrSweep,
    /// Render error plots from previously written record CSVs.
    Plot {
        /// Record CSV files to plot.
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
    },
    /// Export E, A, B, C and the raw FEM operators in Matrix Market format.
    DumpMatrices,
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    if let Some(nx) = o.nx {
        cfg.mesh.nx = nx;
    }
    if let Some(ny) = o.ny {
        cfg.mesh.ny = ny;
    }
    if let Some(v) = o.lambda {
        cfg.material.lambda = v;
    }
    if let Some(v) = o.mu {
        cfg.material.mu = v;
    }
    if let Some(v) = o.rho {
        cfg.material.rho = v;
    }
    if let Some(v) = o.mass {
        cfg.solid.mass = v;
    }
    if o.alpha.is_some() || o.beta.is_some() {
        let current = cfg.damping.unwrap_or(DampingCfg { alpha: 0.0, beta: 0.0 });
        cfg.damping = Some(DampingCfg {
            alpha: o.alpha.unwrap_or(current.alpha),
            beta: o.beta.unwrap_or(current.beta),
        });
    }
    if let Some(v) = o.q_scale {
        cfg.weights.q_scale = v;
    }
    if let Some(v) = o.r_scale {
        cfg.weights.r_scale = v;
    }
    if let Some(v) = o.t_forward {
        cfg.grid.t_forward = v;
    }
    if let Some(v) = o.t_lqr {
        cfg.grid.t_lqr = v;
    }
    if let Some(v) = o.nt {
        cfg.grid.n_t = v;
    }
    if let Some(t) = &o.target {
        let parts: Vec<f64> = t
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| anyhow::anyhow!("bad --target: {e}"))?;
        anyhow::ensure!(parts.len() == 2, "--target expects two comma-separated values");
        cfg.target_solid = [parts[0], parts[1]];
    }
    if let Some(m) = &o.methods {
        cfg.methods = m.split(',').map(|s| s.trim().to_string()).collect();
    }
    if let Some(s) = &o.sizes {
        cfg.basis_sizes = s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| anyhow::anyhow!("bad --sizes: {e}"))?;
    }
    if let Some(v) = o.energy {
        cfg.energy_fraction = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(p) = &o.out {
        cfg.out_dir = p.clone();
    }
    if let Some(v) = o.timing_reps {
        cfg.timing_reps = v;
    }
    cfg.validate()?;
    Ok(())
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, &cli.overrides)?;

    match &cli.command {
        Command::ForwardFom => {
            runner::forward_fom(&cfg)?;
            println!("forward trajectory written to {}", cfg.out_dir.display());
            Ok(0)
        }
        Command::ForwardSweep { export_bases } => {
            let outcome = runner::forward_sweep(&cfg, *export_bases)?;
            Ok(runner::report_outcome(&outcome, &cfg.out_dir.join("records_forward.csv")))
        }
        Command::LqrFom { export_solution } => {
            runner::lqr_fom(&cfg, *export_solution)?;
            println!("closed-loop trajectory written to {}", cfg.out_dir.display());
            Ok(0)
        }
        Command::LqrSweep => {
            let outcome = runner::lqr_sweep(&cfg)?;
            Ok(runner::report_outcome(&outcome, &cfg.out_dir.join("records_lqr.csv")))
        }
        Command::Plot { records } => {
            runner::plot_records(&cfg, records)?;
            println!("plots written to {}", cfg.out_dir.display());
            Ok(0)
        }
        Command::DumpMatrices => {
            runner::dump_matrices(&cfg)?;
            println!("matrices written to {}", cfg.out_dir.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
