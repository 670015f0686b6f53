//! Drivers for the manufactured-solution convergence study, the coarsening
//! simulation and the kernel property fuzzer.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{CoarsenConfig, ConvergeConfig, KernelsConfig, Reference};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D, LpNorm};
use crate::io::{convergence_rows, write_convergence_csv, write_snapshot_file, ConvergenceRow};
use crate::kernels::{IdentityResiduals, KernelWorkspace};
use crate::mesh::TimeMesh;
use crate::model::{ManufacturedCase, ModelParams};
use crate::stepper::{write_records_csv, MonitorReport, SolverOptions, StepRecord, Stepper};

/// Grids at or above this size run the sweep one mesh at a time to bound
/// memory, since every run keeps its full history.
const PARALLEL_GRID_LIMIT: usize = 256;

/// Runs the forced problem on `mesh` from zero initial data.
pub fn run_manufactured(
    params: ModelParams,
    case: ManufacturedCase,
    grid: Grid2D,
    mesh: &TimeMesh,
    solver: SolverOptions,
) -> Result<Stepper> {
    let forcing = Arc::new(case.forcing(params));
    let mut st = Stepper::new(params, solver, grid.zeros(), Some(forcing))?;
    st.run_mesh(mesh)?;
    Ok(st)
}

/// A stored trajectory evaluated between its nodes by linear interpolation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    nodes: Vec<f64>,
    fields: Vec<Field>,
}

impl Trajectory {
    pub fn new(mesh: &TimeMesh, fields: Vec<Field>) -> Result<Self> {
        if fields.len() != mesh.nodes().len() {
            return Err(Error::LengthMismatch {
                expected: mesh.nodes().len(),
                got: fields.len(),
            });
        }
        Ok(Self {
            nodes: mesh.nodes().to_vec(),
            fields,
        })
    }

    pub fn at(&self, t: f64) -> Result<Field> {
        let last = *self.nodes.last().expect("nonempty");
        if !(t >= 0.0 && t <= last * (1.0 + 1e-14)) {
            return Err(Error::Domain(format!("time {t} outside [0, {last}]")));
        }
        let i = self.nodes.partition_point(|&s| s < t);
        if i < self.nodes.len() && self.nodes[i] == t {
            return Ok(self.fields[i].clone());
        }
        let i = i.min(self.nodes.len() - 1).max(1);
        let (t0, t1) = (self.nodes[i - 1], self.nodes[i]);
        let w = (t - t0) / (t1 - t0);
        let mut out = self.fields[i - 1].clone();
        out.scale(1.0 - w);
        out.axpy(w, &self.fields[i])?;
        Ok(out)
    }
}

/// `max_n |ref(t_n) - phi^n|` over levels `1..=N`.
fn max_error(st: &Stepper, reference: &dyn Fn(f64) -> Result<Field>) -> Result<f64> {
    let mut worst = 0.0f64;
    for n in 1..=st.level() {
        let r = reference(st.mesh().t(n))?;
        worst = worst.max(r.sub(st.phi(n))?.norm(LpNorm::L2));
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub gamma: f64,
    pub rows: Vec<ConvergenceRow>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceStudy {
    pub tables: Vec<ConvergenceTable>,
    /// Monitor findings per run, labelled `gamma=.., N=..`.
    pub monitors: Vec<(String, MonitorReport)>,
}

impl ConvergenceStudy {
    pub fn violations(&self) -> Vec<String> {
        self.monitors
            .iter()
            .flat_map(|(label, m)| m.summary().into_iter().map(move |s| format!("{label}: {s}")))
            .collect()
    }

    /// Writes `convergence_gamma<g>.csv` per table.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for t in &self.tables {
            let path = dir.join(format!("convergence_gamma{}.csv", t.gamma));
            let mut f = fs::File::create(&path)?;
            write_convergence_csv(&t.rows, &mut f)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Fine-mesh reference trajectory for the manufactured problem.
pub fn fine_reference(cfg: &ConvergeConfig, n: usize, gamma: f64) -> Result<Trajectory> {
    let mesh = TimeMesh::graded(cfg.t_end, n, gamma)?;
    // Identity checks cost O(n^2) per level; the kernel store is verified
    // separately, so skip them for the long reference run.
    let solver = SolverOptions {
        check_kernels: false,
        ..cfg.solver
    };
    let st = run_manufactured(cfg.params, cfg.case, cfg.grid, &mesh, solver)?;
    if !st.monitor().is_clean() {
        return Err(Error::Domain(format!(
            "reference run reported violations: {:?}",
            st.monitor().summary()
        )));
    }
    Trajectory::new(&mesh, st.into_history())
}

/// Errors `e(N)` and observed orders on the composite graded/random meshes.
pub fn run_converge(cfg: &ConvergeConfig) -> Result<ConvergenceStudy> {
    let reference: Box<dyn Fn(f64) -> Result<Field> + Sync> = match cfg.reference {
        Reference::Exact => {
            let (case, grid) = (cfg.case, cfg.grid);
            Box::new(move |t| Ok(case.exact_field(&grid, t)))
        }
        Reference::FineMesh { n, gamma } => {
            let traj = fine_reference(cfg, n, gamma)?;
            Box::new(move |t| traj.at(t))
        }
    };

    let one = |gamma: f64, n: usize| -> Result<(f64, f64, MonitorReport)> {
        let mesh = TimeMesh::composite_random(n, gamma, cfg.t_end, cfg.seed)?;
        let st = run_manufactured(cfg.params, cfg.case, cfg.grid, &mesh, cfg.solver)?;
        let err = max_error(&st, &*reference)?;
        Ok((mesh.tau_max(), err, st.monitor().clone()))
    };

    let mut study = ConvergenceStudy::default();
    for &gamma in &cfg.gammas {
        let results: Vec<Result<(f64, f64, MonitorReport)>> = if cfg.grid.m() >= PARALLEL_GRID_LIMIT {
            cfg.n_list.iter().map(|&n| one(gamma, n)).collect()
        } else {
            cfg.n_list.par_iter().map(|&n| one(gamma, n)).collect()
        };
        let mut runs = Vec::new();
        for (&n, r) in cfg.n_list.iter().zip(results) {
            let (tau, err, monitor) = r?;
            runs.push((n, tau, err));
            study.monitors.push((format!("gamma={gamma}, N={n}"), monitor));
        }
        study.tables.push(ConvergenceTable {
            gamma,
            rows: convergence_rows(&runs),
        });
    }
    Ok(study)
}

/// Uniform random values in `[-amplitude, amplitude]`, row-major.
pub fn random_initial_field(grid: Grid2D, amplitude: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| rng.random_range(-amplitude..=amplitude))
        .collect();
    Field::from_values(grid, values).expect("finite samples")
}

#[derive(Debug, Clone)]
pub struct CoarsenOutcome {
    pub records: Vec<StepRecord>,
    pub mesh: TimeMesh,
    pub monitor: MonitorReport,
    pub snapshots: Vec<(f64, Field)>,
    /// Adaptive steps shortened by the solvability cap.
    pub cap_bound_steps: usize,
}

/// Graded start on `[0, T0]`, then adaptive steps to `T`, clipped so that
/// every snapshot time and `T` are hit exactly.
pub fn run_coarsen(cfg: &CoarsenConfig) -> Result<CoarsenOutcome> {
    let phi0 = random_initial_field(cfg.grid, 1e-3, cfg.seed);
    let mut st = Stepper::new(cfg.params, cfg.solver, phi0, None)?;

    let graded_end = cfg.t0.min(cfg.t_end);
    let graded = TimeMesh::graded(graded_end, cfg.n0, cfg.graded_gamma)?;
    st.run_mesh(&graded)?;

    let mut targets: Vec<f64> = cfg.snapshot_times.clone();
    if targets.last() != Some(&cfg.t_end) {
        targets.push(cfg.t_end);
    }
    let mut snapshots = Vec::new();
    let mut next = 0;
    let mut cap_bound_steps = 0;
    while next < targets.len() && targets[next] <= st.time() {
        if targets[next] == st.time() && cfg.snapshot_times.contains(&targets[next]) {
            snapshots.push((st.time(), st.current().clone()));
        }
        next += 1;
    }
    while next < targets.len() {
        let n = st.level();
        let tau_prev = st.mesh().tau(n);
        let mut diff = st.phi(n).sub(st.phi(n - 1))?;
        diff.scale(1.0 / tau_prev);
        let norm = diff.norm(LpNorm::L2);
        let tau = cfg.adaptive.next_tau(norm, st.cap());
        if tau < cfg.adaptive.next_tau(norm, f64::INFINITY) {
            cap_bound_steps += 1;
        }
        let target = targets[next];
        let mut t = st.time() + tau;
        if t >= target - 1e-12 * target.max(1.0) {
            t = target;
        }
        // The stored step is a node difference, which can round past the cap.
        while cfg.adaptive.enforce_cap && t - st.time() > st.cap() {
            t = t.next_down();
        }
        st.advance_to(t)?;
        if t == target {
            if cfg.snapshot_times.contains(&target) {
                snapshots.push((t, st.current().clone()));
            }
            next += 1;
        }
    }

    Ok(CoarsenOutcome {
        records: st.records().to_vec(),
        mesh: st.mesh().clone(),
        monitor: st.monitor().clone(),
        snapshots,
        cap_bound_steps,
    })
}

/// File name of the snapshot at time `t`.
pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t}.txt")
}

impl CoarsenOutcome {
    /// Writes `records.csv`, `mesh.csv` and one snapshot file per time.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_records_csv(&self.records, fs::File::create(dir.join("records.csv"))?)?;
        self.mesh.write_csv(fs::File::create(dir.join("mesh.csv"))?)?;
        for (t, f) in &self.snapshots {
            write_snapshot_file(f, *t, &dir.join(snapshot_name(*t)))?;
        }
        Ok(())
    }
}

/// Random mesh with `n` steps: log-uniform steps, a pure graded mesh, or the
/// composite graded/random construction.
pub fn random_mesh(rng: &mut ChaCha8Rng, n: usize) -> Result<TimeMesh> {
    let t_end = rng.random_range(0.5..2.0);
    match rng.random_range(0..3u8) {
        0 if n >= 2 => {
            let gamma = rng.random_range(1.0..6.0);
            match TimeMesh::composite_random(n, gamma, t_end, rng.random()) {
                Ok(m) => Ok(m),
                Err(_) => TimeMesh::graded(t_end, n, gamma),
            }
        }
        1 => TimeMesh::graded(t_end, n, rng.random_range(1.0..6.0)),
        _ => {
            let steps: Vec<f64> = (0..n)
                .map(|_| 10f64.powf(rng.random_range(-2.0..0.0)) * t_end / n as f64)
                .collect();
            TimeMesh::from_steps(&steps)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct KernelFuzzReport {
    pub meshes: usize,
    pub levels_checked: usize,
    pub worst: IdentityResiduals,
    /// `alpha=.., trial=..: <failed properties>`.
    pub property_failures: Vec<String>,
    pub form_samples: usize,
    pub min_slack: f64,
    pub roundtrip_samples: usize,
    pub roundtrip_max: f64,
}

impl KernelFuzzReport {
    pub fn passes(&self, identity_tol: f64, slack_tol: f64, roundtrip_tol: f64) -> bool {
        self.worst.max() < identity_tol
            && self.property_failures.is_empty()
            && self.min_slack >= -slack_tol
            && self.roundtrip_max < roundtrip_tol
    }
}

/// Identity residuals and sign properties at every level of one mesh.
pub fn check_mesh(mesh: &TimeMesh, alpha: f64) -> Result<(IdentityResiduals, Vec<String>)> {
    let ws = KernelWorkspace::from_mesh(mesh, alpha)?;
    let mut worst = IdentityResiduals::default();
    let mut failures = Vec::new();
    for n in 1..=mesh.steps() {
        worst = worst.merge(ws.check_identities(n)?);
        let p = ws.check_properties(n)?;
        if !p.all_hold() {
            failures.push(format!("level {n}: {p:?}"));
        }
    }
    Ok((worst, failures))
}

/// Identity/property sweep, quadratic-form slack sampling and DOC round trips.
pub fn run_kernel_fuzz(cfg: &KernelsConfig) -> Result<KernelFuzzReport> {
    let mut report = KernelFuzzReport {
        min_slack: f64::INFINITY,
        ..Default::default()
    };

    for (ai, &alpha) in cfg.alpha_list.iter().enumerate() {
        let results: Vec<Result<(usize, IdentityResiduals, Vec<String>)>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    cfg.seed ^ ((ai as u64) << 32) ^ (trial as u64).wrapping_mul(0x9E37_79B9),
                );
                let n = rng.random_range(1..=cfg.n_max);
                let mesh = random_mesh(&mut rng, n)?;
                let (res, fails) = check_mesh(&mesh, alpha)?;
                let fails = fails
                    .into_iter()
                    .map(|f| format!("alpha={alpha}, trial={trial}, {f}"))
                    .collect();
                Ok((n, res, fails))
            })
            .collect();
        for r in results {
            let (n, res, fails) = r?;
            report.meshes += 1;
            report.levels_checked += n;
            report.worst = report.worst.merge(res);
            report.property_failures.extend(fails);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
    for _ in 0..cfg.form_samples {
        let n = rng.random_range(1..=cfg.form_n_max);
        let alpha = rng.random_range(0.01..0.99);
        let mesh = random_mesh(&mut rng, n)?;
        let ws = KernelWorkspace::from_mesh(&mesh, alpha)?;
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        report.min_slack = report.min_slack.min(ws.quadratic_bound_slack(&w, n)?);
        report.form_samples += 1;
    }

    report.roundtrip_max = 0.0;
    for _ in 0..cfg.roundtrip_samples {
        let alpha = rng.random_range(0.01..0.99);
        let mesh = random_mesh(&mut rng, cfg.roundtrip_n)?;
        let ws = KernelWorkspace::from_mesh(&mesh, alpha)?;
        let v: Vec<f64> = (0..=cfg.roundtrip_n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let back = ws.doc_transform(&ws.caputo_l1(&v)?)?;
        for (m, b) in back.iter().enumerate() {
            let inc = v[m + 1] - v[m];
            report.roundtrip_max = report.roundtrip_max.max((b - inc).abs());
        }
        report.roundtrip_samples += 1;
    }
    Ok(report)
}
