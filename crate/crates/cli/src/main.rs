//! `tfac`: convergence study, coarsening simulation and kernel fuzzing for
//! the variable-step L1 fractional Allen-Cahn solver.
//!
//! Exit status is 0 on success, 1 on errors and 2 when a run completes but a
//! runtime monitor or property check reports a violation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tfac_core::config::{ConfigFile, Mode};
use tfac_core::experiments::{run_coarsen, run_converge, run_kernel_fuzz, snapshot_name};
use tfac_core::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "tfac", version, about = "Variable-step L1 solver for the time-fractional Allen-Cahn equation")]
struct Cli {
    /// TOML file of configuration keys; command-line values take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Manufactured-solution errors and observed orders on composite meshes.
    Converge(ConvergeArgs),
    /// Coarsening from small random data with adaptive steps.
    Coarsen(CoarsenArgs),
    /// Fuzz the kernel identities and sign properties on random meshes.
    Kernels(KernelsArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    #[arg(long)]
    kappa: Option<f64>,
    /// Grid points per direction.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `strict` refuses steps above the solvability cap; `override` takes
    /// them and reports a violation.
    #[arg(long)]
    cap_policy: Option<String>,
    /// Anderson depth of the fixed-point solver; 0 selects the plain iteration.
    #[arg(long)]
    anderson_depth: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    eps2: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Steps of the fine graded reference run.
    #[arg(long)]
    reference_n: Option<usize>,
    /// 512^2 grid measured against the exact solution.
    #[arg(long)]
    full: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct CoarsenArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    #[arg(long)]
    tau_max: Option<f64>,
    #[arg(long)]
    tau_min: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct KernelsArgs {
    #[arg(long, value_delimiter = ',')]
    alpha_list: Option<Vec<f64>>,
    #[arg(long = "N-max")]
    n_max: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples of the quadratic-form inequality.
    #[arg(long)]
    form_samples: Option<usize>,
}

impl CommonArgs {
    fn apply(&self, f: &mut ConfigFile) {
        f.kappa = self.kappa;
        f.grid = self.grid;
        f.seed = self.seed;
        f.out = self.out.clone();
        f.cap_policy = self.cap_policy.clone();
        f.anderson_depth = self.anderson_depth;
        f.max_iterations = self.max_iterations;
    }
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Converge(_) => Mode::Converge,
            Command::Coarsen(_) => Mode::Coarsen,
            Command::Kernels(_) => Mode::Kernels,
        }
    }

    /// Command-line values as a config layer.
    fn overrides(&self) -> ConfigFile {
        let mut f = ConfigFile::default();
        match self {
            Command::Converge(a) => {
                a.common.apply(&mut f);
                f.alpha = a.alpha;
                f.sigma = a.sigma;
                f.gammas = a.gamma.clone();
                f.n_list = a.n.clone();
                f.eps2 = a.eps2;
                f.t_end = a.t_end;
                f.reference_n = a.reference_n;
                f.full = a.full.then_some(true);
            }
            Command::Coarsen(a) => {
                a.common.apply(&mut f);
                f.alpha = a.alpha;
                f.eps = a.eps;
                f.t_end = a.t_end;
                f.snapshot_times = a.snapshots.clone();
                f.tau_max = a.tau_max;
                f.tau_min = a.tau_min;
                f.eta = a.eta;
            }
            Command::Kernels(a) => {
                f.alpha_list = a.alpha_list.clone();
                f.n_max = a.n_max;
                f.trials = a.trials;
                f.seed = a.seed;
                f.form_samples = a.form_samples;
            }
        }
        f
    }
}

fn report_violations(violations: &[String]) -> ExitCode {
    if violations.is_empty() {
        return ExitCode::SUCCESS;
    }
    eprintln!("monitor violations:");
    for v in violations {
        eprintln!("  {v}");
    }
    ExitCode::from(2)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let base = match &cli.config {
        Some(path) => ConfigFile::from_path(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ConfigFile::default(),
    };
    let file = base.overlay(cli.command.overrides());
    let config = ExperimentConfig::resolve(Some(cli.command.mode()), &file)?;

    match config {
        ExperimentConfig::Converge(cfg) => {
            let study = run_converge(&cfg)?;
            for table in &study.tables {
                println!("gamma = {}", table.gamma);
                println!("{:>6} {:>10} {:>10} {:>6}", "N", "tau", "e(N)", "order");
                for r in &table.rows {
                    let order = r.order.map_or("-".to_string(), |o| format!("{o:.2}"));
                    println!("{:>6} {:>10.2e} {:>10.2e} {:>6}", r.n, r.tau_max, r.error, order);
                }
            }
            if let Some(dir) = &cfg.out {
                for p in study.write(dir)? {
                    println!("wrote {}", p.display());
                }
            }
            Ok(report_violations(&study.violations()))
        }
        ExperimentConfig::Coarsen(cfg) => {
            let out = run_coarsen(&cfg)?;
            let last = out.records.last().expect("records are never empty");
            println!(
                "{} steps to t = {}, E = {:.6e}, E_alpha = {:.6e}, max|phi| = {:.6}",
                out.mesh.steps(),
                last.energy.t,
                last.energy.free_energy,
                last.energy.variational_energy,
                last.max_abs_phi
            );
            if out.cap_bound_steps > 0 {
                println!("{} adaptive step(s) limited by the solvability cap", out.cap_bound_steps);
            }
            if let Some(dir) = &cfg.out {
                out.write(dir)?;
                println!("wrote records.csv, mesh.csv and {} snapshot(s) to {}", out.snapshots.len(), dir.display());
                for (t, _) in &out.snapshots {
                    println!("  {}", snapshot_name(*t));
                }
            }
            Ok(report_violations(&out.monitor.summary()))
        }
        ExperimentConfig::Kernels(cfg) => {
            let r = run_kernel_fuzz(&cfg)?;
            println!(
                "{} meshes ({} levels): max residuals orthogonal {:.3e}, mutual {:.3e}, complementary {:.3e}",
                r.meshes, r.levels_checked, r.worst.orthogonal, r.worst.mutual, r.worst.complementary
            );
            println!("{} quadratic-form samples: min slack {:.3e}", r.form_samples, r.min_slack);
            println!("{} DOC round trips: max deviation {:.3e}", r.roundtrip_samples, r.roundtrip_max);
            let mut problems = r.property_failures.clone();
            if r.worst.max() >= cfg.identity_tol {
                problems.push(format!("identity residual {:.3e} >= {:e}", r.worst.max(), cfg.identity_tol));
            }
            if r.min_slack < -1e-12 {
                problems.push(format!("quadratic-form slack {:.3e} below -1e-12", r.min_slack));
            }
            if r.roundtrip_max >= 1e-12 {
                problems.push(format!("DOC round trip deviation {:.3e}", r.roundtrip_max));
            }
            Ok(report_violations(&problems))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
