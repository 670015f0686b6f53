//! Time stepping for the implicit variable-step L1 scheme
//!
//! `a0 (phi^n - phi^{n-1}) + sum_{k<n} a^{(n)}_{n-k} (phi^k - phi^{k-1})
//!     = -kappa (f(phi^n) - eps^2 Delta_h phi^n) + g^n`
//!
//! with the nonlinear system solved by a fixed-point iteration whose linear
//! part is inverted spectrally.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::energy::{chemical_potential, free_energy, variational_energy, EnergyRecord};
use crate::error::{domain, Error, Result};
use crate::grid::{Field, Grid2D, HelmholtzSolver, LpNorm};
use crate::kernels::{KernelWorkspace, DEFAULT_IDENTITY_TOL};
use crate::mesh::{solvability_cap, TimeMesh};
use crate::model::{Forcing, ModelParams};

/// Grid points per work unit in the history sum.
const HISTORY_CHUNK: usize = 1024;

/// Iterations between refreshes of the stabilization shift.
const SHIFT_REFRESH: usize = 10;

/// How the nonlinear fixed-point map is accelerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceleration {
    /// Lagged nonlinearity, `(a0 - kappa eps^2 Delta) phi^{m+1} = b - kappa f(phi^m)`.
    Plain,
    /// Lagged nonlinearity with a stabilizing shift `S` (the midpoint of the
    /// range of `f'` over the current iterate) moved to the implicit side,
    /// combined with Anderson mixing of the given depth.
    Anderson { depth: usize },
}

/// What happens when a requested step exceeds the solvability cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapPolicy {
    /// Refuse the step with [`Error::StepCapExceeded`].
    Strict,
    /// Take the step and record a monitor violation. Fixed-point failures are
    /// likewise recorded instead of raised, as long as the iterate is finite.
    Override,
}

/// Solver tolerances and monitor thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `|phi^{(m+1)} - phi^{(m)}|_inf` falls to this value.
    pub fp_tol: f64,
    pub max_iterations: usize,
    pub acceleration: Acceleration,
    pub cap_policy: CapPolicy,
    /// Verify kernel identities as each level is built.
    pub check_kernels: bool,
    pub identity_tol: f64,
    /// Dissipation tolerance relative to `E_alpha[phi^0]`.
    pub dissipation_rel_tol: f64,
    /// Allowed excess of `|phi|_inf` over 1.
    pub max_bound_tol: f64,
    /// Scheme residual threshold as a multiple of `fp_tol`.
    pub residual_factor: f64,
    /// Upper bound asserted on `|phi^n|_{l6}`, if any.
    pub l6_ceiling: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            fp_tol: 1e-12,
            max_iterations: 200,
            acceleration: Acceleration::Anderson { depth: 5 },
            cap_policy: CapPolicy::Strict,
            check_kernels: true,
            identity_tol: DEFAULT_IDENTITY_TOL,
            dissipation_rel_tol: 1e-9,
            max_bound_tol: 1e-10,
            residual_factor: 100.0,
            l6_ceiling: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) || self.max_iterations == 0 {
            return Err(domain("fixed-point tolerance and budget must be positive"));
        }
        if let Acceleration::Anderson { depth } = self.acceleration {
            if depth == 0 {
                return Err(domain("Anderson depth must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Outcome of one nonlinear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `|phi^{(m+1)} - phi^{(m)}|_inf`.
    pub residual: f64,
    pub converged: bool,
}

/// Solves `a0 u - kappa eps^2 Delta_h u + kappa f(u) = base` by fixed-point
/// iteration started from `init`.
pub fn solve_implicit(
    solver: &mut HelmholtzSolver,
    a0: f64,
    params: &ModelParams,
    base: &Field,
    init: &Field,
    opts: &SolverOptions,
) -> Result<(Field, SolveStats)> {
    let kappa = params.kappa;
    let c = kappa * params.eps2();
    let n = base.values().len();
    let grid = *base.grid();
    let (depth, stabilize) = match opts.acceleration {
        Acceleration::Plain => (0, false),
        Acceleration::Anderson { depth } => (depth, true),
    };

    let mut x = init.clone();
    let mut g = grid.zeros();
    let mut rhs = grid.zeros();
    let mut anderson = Anderson::new(depth, n);
    let mut shift = 0.0;
    let mut residual = f64::INFINITY;

    for it in 1..=opts.max_iterations {
        if stabilize && (it - 1) % SHIFT_REFRESH == 0 {
            let s = stabilization_shift(&x, a0, kappa);
            if s != shift {
                shift = s;
                anderson.clear();
            }
        }
        for ((r, b), v) in rhs.values_mut().iter_mut().zip(base.values()).zip(x.values()) {
            *r = b - kappa * (v * v * v - v - shift * v);
        }
        solver.solve_into(a0 + kappa * shift, c, &rhs, &mut g)?;

        residual = g
            .values()
            .iter()
            .zip(x.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.fp_tol {
            return Ok((
                g,
                SolveStats {
                    iterations: it,
                    residual,
                    converged: true,
                },
            ));
        }
        if depth > 0 {
            anderson.mix(x.values_mut(), g.values());
        } else {
            std::mem::swap(&mut x, &mut g);
        }
    }
    Ok((
        g,
        SolveStats {
            iterations: opts.max_iterations,
            residual,
            converged: false,
        },
    ))
}

/// Midpoint of `[min f'(u), max f'(u)]` for `f'(u) = 3u^2 - 1`, kept above
/// `-a0/kappa` so the shifted operator stays positive.
fn stabilization_shift(u: &Field, a0: f64, kappa: f64) -> f64 {
    let (lo, hi) = u
        .values()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            let s = v * v;
            (lo.min(s), hi.max(s))
        });
    let mid = 0.5 * ((3.0 * lo - 1.0) + (3.0 * hi - 1.0));
    mid.max(-0.999 * a0 / kappa)
}

/// Type-II Anderson mixing over the last `depth` map evaluations.
struct Anderson {
    depth: usize,
    // Previous iterate's map value and residual.
    last_g: Vec<f64>,
    last_f: Vec<f64>,
    have_last: bool,
    // Differences of consecutive map values and residuals, oldest first.
    dg: Vec<Vec<f64>>,
    df: Vec<Vec<f64>>,
    f: Vec<f64>,
}

impl Anderson {
    fn new(depth: usize, n: usize) -> Self {
        let alloc = if depth > 0 { n } else { 0 };
        Self {
            depth,
            last_g: vec![0.0; alloc],
            last_f: vec![0.0; alloc],
            have_last: false,
            dg: Vec::new(),
            df: Vec::new(),
            f: vec![0.0; alloc],
        }
    }

    fn clear(&mut self) {
        self.have_last = false;
        self.dg.clear();
        self.df.clear();
    }

    /// Overwrites `x` with the mixed next iterate given `g = G(x)`.
    fn mix(&mut self, x: &mut [f64], g: &[f64]) {
        for ((f, gi), xi) in self.f.iter_mut().zip(g).zip(x.iter()) {
            *f = gi - xi;
        }
        if self.have_last {
            let mut dg = if self.dg.len() == self.depth {
                let v = self.dg.remove(0);
                self.df.remove(0);
                v
            } else {
                vec![0.0; g.len()]
            };
            let mut df = vec![0.0; g.len()];
            for i in 0..g.len() {
                dg[i] = g[i] - self.last_g[i];
                df[i] = self.f[i] - self.last_f[i];
            }
            self.dg.push(dg);
            self.df.push(df);
        }
        self.last_g.copy_from_slice(g);
        self.last_f.copy_from_slice(&self.f);
        self.have_last = true;

        let gamma = least_squares(&self.df, &self.f);
        x.copy_from_slice(g);
        for (col, w) in self.dg.iter().zip(&gamma) {
            if *w != 0.0 {
                for (xi, d) in x.iter_mut().zip(col) {
                    *xi -= w * d;
                }
            }
        }
    }
}

/// Minimizes `|f - sum_j gamma_j cols_j|_2` by modified Gram-Schmidt.
/// Nearly dependent columns get a zero coefficient.
fn least_squares(cols: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    let m = cols.len();
    let mut gamma = vec![0.0; m];
    if m == 0 {
        return gamma;
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r = vec![vec![0.0; m]; m];
    let mut keep = vec![false; m];
    for j in 0..m {
        let mut v = cols[j].clone();
        let orig = dot(&v, &v).sqrt();
        for (i, qi) in q.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            let rij = dot(qi, &v);
            r[i][j] = rij;
            for (a, b) in v.iter_mut().zip(qi) {
                *a -= rij * b;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 * orig && norm > 0.0 {
            r[j][j] = norm;
            v.iter_mut().for_each(|a| *a /= norm);
            keep[j] = true;
        }
        q.push(v);
    }
    let qtf: Vec<f64> = q.iter().map(|qi| dot(qi, f)).collect();
    for j in (0..m).rev() {
        if !keep[j] {
            continue;
        }
        let mut s = qtf[j];
        for k in j + 1..m {
            if keep[k] {
                s -= r[j][k] * gamma[k];
            }
        }
        gamma[j] = s / r[j][j];
    }
    gamma
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_{k=1}^{n-1} a_row[n-k] (phi^k - phi^{k-1})` into `out`, where
/// `a_row` is the L1 row of level `n` and `history` holds at least `n`
/// levels. Each grid point sums over `k` in increasing order, so the result
/// does not depend on the thread count.
pub fn history_sum_into(history: &[Field], a_row: &[f64], n: usize, out: &mut [f64]) -> Result<()> {
    if history.len() < n || a_row.len() < n {
        return Err(Error::MissingHistory {
            level: n,
            available: history.len(),
        });
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    if n < 2 {
        return Ok(());
    }
    out.par_chunks_mut(HISTORY_CHUNK)
        .enumerate()
        .for_each(|(c, acc)| {
            let lo = c * HISTORY_CHUNK;
            let hi = lo + acc.len();
            for k in 1..n {
                let w = a_row[n - k];
                let cur = &history[k].values()[lo..hi];
                let prev = &history[k - 1].values()[lo..hi];
                for ((o, a), b) in acc.iter_mut().zip(cur).zip(prev) {
                    *o += w * (a - b);
                }
            }
        });
    Ok(())
}

/// Per-level diagnostics written to the records CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub energy: EnergyRecord,
    /// `tau_n`; zero at level 0.
    pub tau: f64,
    pub max_abs_phi: f64,
    pub l6_norm: f64,
    pub fp_iterations: usize,
    pub fp_residual: f64,
    /// `max |R|` of the scheme equation evaluated with the stencil Laplacian.
    pub scheme_residual: f64,
}

pub const RECORDS_HEADER: &str =
    "n,t,tau,E,E_alpha,mu_norm_sq,max_abs_phi,l6_norm,fp_iters,fp_residual";

pub fn write_records_csv<W: Write>(records: &[StepRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RECORDS_HEADER}")?;
    for r in records {
        let e = &r.energy;
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e}",
            e.level,
            e.t,
            r.tau,
            e.free_energy,
            e.variational_energy,
            e.mu_norm_sq,
            r.max_abs_phi,
            r.l6_norm,
            r.fp_iterations,
            r.fp_residual
        )?;
    }
    Ok(())
}

/// Levels at which a runtime check failed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorReport {
    pub cap_exceeded: Vec<usize>,
    pub fixed_point_failures: Vec<usize>,
    pub scheme_residual: Vec<usize>,
    pub dissipation: Vec<usize>,
    /// `E[phi^n] > E[phi^0]` beyond the dissipation tolerance.
    pub global_energy: Vec<usize>,
    pub max_bound: Vec<usize>,
    pub l6_ceiling: Vec<usize>,
    pub max_energy_increase: f64,
    pub max_scheme_residual: f64,
    pub max_fp_iterations: usize,
}

impl MonitorReport {
    pub fn violation_count(&self) -> usize {
        self.cap_exceeded.len()
            + self.fixed_point_failures.len()
            + self.scheme_residual.len()
            + self.dissipation.len()
            + self.global_energy.len()
            + self.max_bound.len()
            + self.l6_ceiling.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0
    }

    /// One line per violated check, empty when clean.
    pub fn summary(&self) -> Vec<String> {
        let lists = [
            ("step above solvability cap", &self.cap_exceeded),
            ("fixed-point budget exhausted", &self.fixed_point_failures),
            ("scheme residual above threshold", &self.scheme_residual),
            ("variational energy increased", &self.dissipation),
            ("free energy above initial energy", &self.global_energy),
            ("maximum bound exceeded", &self.max_bound),
            ("l6 norm above ceiling", &self.l6_ceiling),
        ];
        lists
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(name, v)| {
                let shown: Vec<String> = v.iter().take(8).map(|k| k.to_string()).collect();
                let more = if v.len() > 8 { ", ..." } else { "" };
                format!("{name}: {} level(s) [{}{more}]", v.len(), shown.join(", "))
            })
            .collect()
    }
}

/// Solution history, kernel store and diagnostics of one simulation.
#[derive(Clone)]
pub struct Stepper {
    params: ModelParams,
    opts: SolverOptions,
    grid: Grid2D,
    mesh: TimeMesh,
    kernels: KernelWorkspace,
    helmholtz: HelmholtzSolver,
    forcing: Option<Arc<dyn Forcing>>,
    cap: f64,
    history: Vec<Field>,
    mu_norm_sq: Vec<f64>,
    records: Vec<StepRecord>,
    monitor: MonitorReport,
    inside_unit_box: bool,
    a_row: Vec<f64>,
    hist_buf: Vec<f64>,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper")
            .field("params", &self.params)
            .field("grid", &self.grid)
            .field("level", &self.level())
            .field("t", &self.time())
            .finish_non_exhaustive()
    }
}

impl Stepper {
    pub fn new(
        params: ModelParams,
        opts: SolverOptions,
        phi0: Field,
        forcing: Option<Arc<dyn Forcing>>,
    ) -> Result<Self> {
        params.validate()?;
        opts.validate()?;
        let grid = *phi0.grid();
        let kernels = KernelWorkspace::new(params.alpha)?.with_tolerance(opts.identity_tol);
        let e0 = free_energy(&phi0, &params);
        let mu0 = chemical_potential(&phi0, &params).norm_sq();
        let max0 = phi0.max_abs();
        let record = StepRecord {
            energy: EnergyRecord {
                level: 0,
                t: 0.0,
                free_energy: e0,
                variational_energy: e0,
                mu_norm_sq: mu0,
                dissipation_slack: 0.0,
            },
            tau: 0.0,
            max_abs_phi: max0,
            l6_norm: phi0.norm(LpNorm::L6),
            fp_iterations: 0,
            fp_residual: 0.0,
            scheme_residual: 0.0,
        };
        Ok(Self {
            params,
            opts,
            grid,
            mesh: TimeMesh::empty(),
            kernels,
            helmholtz: HelmholtzSolver::new(grid),
            forcing,
            cap: solvability_cap(params.alpha, params.kappa),
            history: vec![phi0],
            mu_norm_sq: Vec::new(),
            records: vec![record],
            monitor: MonitorReport::default(),
            inside_unit_box: max0 <= 1.0,
            a_row: Vec::new(),
            hist_buf: vec![0.0; grid.len()],
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn level(&self) -> usize {
        self.history.len() - 1
    }

    pub fn time(&self) -> f64 {
        self.mesh.t_end()
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn kernels(&self) -> &KernelWorkspace {
        &self.kernels
    }

    /// The solvability cap for the model parameters.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// `phi^n` for an accepted level.
    pub fn phi(&self, n: usize) -> &Field {
        &self.history[n]
    }

    pub fn current(&self) -> &Field {
        &self.history[self.level()]
    }

    pub fn history(&self) -> &[Field] {
        &self.history
    }

    /// Consumes the stepper, returning `phi^0..phi^n`.
    pub fn into_history(self) -> Vec<Field> {
        self.history
    }

    /// `|mu^j|^2` for `j = 1..=n`.
    pub fn mu_norm_sq(&self) -> &[f64] {
        &self.mu_norm_sq
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn energy_records(&self) -> Vec<EnergyRecord> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn monitor(&self) -> &MonitorReport {
        &self.monitor
    }

    /// `sum_{k=1}^{n-1} a^{(n)}_{n-k} (phi^k - phi^{k-1})` for a level `n`
    /// whose kernel row exists and whose predecessors are accepted.
    pub fn history_term(&self, n: usize) -> Result<Field> {
        if n == 0 || n > self.level() + 1 {
            return Err(Error::MissingHistory {
                level: n,
                available: self.history.len(),
            });
        }
        let row = self.kernels.l1_row(n)?;
        let mut out = self.grid.zeros();
        history_sum_into(&self.history, row.coeffs(), n, out.values_mut())?;
        Ok(out)
    }

    /// Advances by `tau`.
    pub fn advance(&mut self, tau: f64) -> Result<&StepRecord> {
        let t = self.time() + tau;
        self.advance_to(t)
    }

    /// Advances to the node `t`, landing on it exactly.
    pub fn advance_to(&mut self, t: f64) -> Result<&StepRecord> {
        let n = self.level() + 1;
        let tau = t - self.time();
        if !(tau > 0.0) || !t.is_finite() {
            return Err(Error::InvalidMesh(format!(
                "node {t} does not follow {}",
                self.time()
            )));
        }
        let over_cap = tau > self.cap;
        if over_cap && self.opts.cap_policy == CapPolicy::Strict {
            return Err(Error::StepCapExceeded {
                level: n,
                tau,
                cap: self.cap,
            });
        }

        let mut mesh = self.mesh.clone();
        mesh.push_node(t)?;
        if self.opts.check_kernels {
            self.kernels.extend_checked(&mesh)?;
        } else {
            self.kernels.extend(&mesh)?;
        }
        self.mesh = mesh;
        let result = self.solve_level(n, t);
        if result.is_err() {
            self.rollback();
        }
        result?;
        if over_cap {
            self.monitor.cap_exceeded.push(n);
        }
        Ok(self.records.last().expect("records are never empty"))
    }

    /// Walks the remaining nodes of `mesh`, whose prefix must match the nodes
    /// already taken.
    pub fn run_mesh(&mut self, mesh: &TimeMesh) -> Result<()> {
        let done = self.level();
        if mesh.steps() < done || mesh.nodes()[..=done] != self.mesh.nodes()[..] {
            return Err(Error::InvalidMesh(
                "mesh does not extend the nodes already taken".into(),
            ));
        }
        for k in done + 1..=mesh.steps() {
            self.advance_to(mesh.t(k))?;
        }
        Ok(())
    }

    fn rollback(&mut self) {
        let keep = self.level();
        let nodes = self.mesh.nodes()[..=keep].to_vec();
        self.mesh = TimeMesh::from_nodes(nodes).expect("prefix of a valid mesh");
        let mut ws = KernelWorkspace::new(self.params.alpha)
            .expect("alpha validated")
            .with_tolerance(self.opts.identity_tol);
        ws.extend_to(&self.mesh, keep).expect("rebuilding accepted levels");
        self.kernels = ws;
    }

    fn solve_level(&mut self, n: usize, t: f64) -> Result<()> {
        let params = self.params;
        let kappa = params.kappa;
        self.kernels.l1_row_into(n, &mut self.a_row)?;
        let a0 = self.a_row[0];
        history_sum_into(&self.history, &self.a_row, n, &mut self.hist_buf)?;

        let prev = &self.history[n - 1];
        let forcing = self.forcing.as_ref().map(|f| f.sample(&self.grid, t));
        let mut base = prev.clone();
        {
            let vals = base.values_mut();
            for (b, h) in vals.iter_mut().zip(&self.hist_buf) {
                *b = a0 * *b - h;
            }
            if let Some(g) = &forcing {
                for (b, gv) in vals.iter_mut().zip(g.values()) {
                    *b += gv;
                }
            }
        }

        let (phi, stats) =
            solve_implicit(&mut self.helmholtz, a0, &params, &base, prev, &self.opts)?;
        if !stats.converged {
            let finite = phi.values().iter().all(|v| v.is_finite());
            if self.opts.cap_policy == CapPolicy::Strict || !finite {
                return Err(Error::FixedPointFailed {
                    level: n,
                    iterations: stats.iterations,
                    residual: stats.residual,
                });
            }
            self.monitor.fixed_point_failures.push(n);
        }

        // Scheme residual with the stencil Laplacian, independent of the solve.
        let mu = chemical_potential(&phi, &params);
        let mut scheme_residual = 0.0f64;
        for i in 0..phi.values().len() {
            let g = forcing.as_ref().map_or(0.0, |f| f.values()[i]);
            let r = a0 * (phi.values()[i] - prev.values()[i]) + self.hist_buf[i]
                + kappa * mu.values()[i]
                - g;
            scheme_residual = scheme_residual.max(r.abs());
        }

        let e = free_energy(&phi, &params);
        self.mu_norm_sq.push(mu.norm_sq());
        let e_alpha = variational_energy(e, self.kernels.p(n)?, &self.mu_norm_sq, kappa)?;
        let prev_record = *self.records.last().expect("records are never empty");
        let record = StepRecord {
            energy: EnergyRecord {
                level: n,
                t,
                free_energy: e,
                variational_energy: e_alpha,
                mu_norm_sq: *self.mu_norm_sq.last().unwrap(),
                dissipation_slack: prev_record.energy.variational_energy - e_alpha,
            },
            tau: self.mesh.tau(n),
            max_abs_phi: phi.max_abs(),
            l6_norm: phi.norm(LpNorm::L6),
            fp_iterations: stats.iterations,
            fp_residual: stats.residual,
            scheme_residual,
        };
        self.update_monitors(&record);
        self.history.push(phi);
        self.records.push(record);
        Ok(())
    }

    fn update_monitors(&mut self, r: &StepRecord) {
        let n = r.energy.level;
        let m = &mut self.monitor;
        m.max_scheme_residual = m.max_scheme_residual.max(r.scheme_residual);
        m.max_fp_iterations = m.max_fp_iterations.max(r.fp_iterations);
        if r.scheme_residual > self.opts.residual_factor * self.opts.fp_tol {
            m.scheme_residual.push(n);
        }
        if let Some(ceiling) = self.opts.l6_ceiling {
            if r.l6_norm > ceiling {
                m.l6_ceiling.push(n);
            }
        }
        // The energy law and the maximum bound hold for the unforced model only.
        if self.forcing.is_some() {
            return;
        }
        let e0 = self.records[0].energy.variational_energy;
        let tol = self.opts.dissipation_rel_tol * e0.abs();
        let increase = -r.energy.dissipation_slack;
        m.max_energy_increase = m.max_energy_increase.max(increase);
        if increase > tol {
            m.dissipation.push(n);
        }
        if r.energy.free_energy > e0 + tol {
            m.global_energy.push(n);
        }
        if self.inside_unit_box {
            if r.max_abs_phi > 1.0 + self.opts.max_bound_tol {
                m.max_bound.push(n);
            }
        } else if r.max_abs_phi <= 1.0 {
            self.inside_unit_box = true;
        }
    }

    /// Residual of the DOC form of the scheme,
    /// `max_n |(phi^n - phi^{n-1}) + kappa sum_j theta^{(n)}_{n-j} mu^j - sum_j theta^{(n)}_{n-j} g^j|_2`,
    /// with `mu^j` recomputed from the stored fields.
    pub fn doc_form_residual(&self) -> Result<f64> {
        let n_max = self.level();
        let mus: Vec<Field> = (1..=n_max)
            .map(|j| chemical_potential(&self.history[j], &self.params))
            .collect();
        let gs: Option<Vec<Field>> = self.forcing.as_ref().map(|f| {
            (1..=n_max)
                .map(|j| f.sample(&self.grid, self.mesh.t(j)))
                .collect()
        });
        let mut worst = 0.0f64;
        for n in 1..=n_max {
            let theta = self.kernels.theta(n)?;
            let mut r = self.history[n].sub(&self.history[n - 1])?;
            for j in 1..=n {
                r.axpy(self.params.kappa * theta[n - j], &mus[j - 1])?;
                if let Some(gs) = &gs {
                    r.axpy(-theta[n - j], &gs[j - 1])?;
                }
            }
            worst = worst.max(r.norm(LpNorm::L2));
        }
        Ok(worst)
    }
}

/// Backward Euler for the classical Allen-Cahn equation,
/// `(phi^n - phi^{n-1}) / tau_n = -kappa mu^n + g^n`, sharing the nonlinear
/// solver with the L1 scheme. Returns `phi^0..phi^N`.
pub fn backward_euler(
    params: &ModelParams,
    opts: &SolverOptions,
    phi0: Field,
    mesh: &TimeMesh,
    forcing: Option<&dyn Forcing>,
) -> Result<Vec<Field>> {
    let grid = *phi0.grid();
    let mut solver = HelmholtzSolver::new(grid);
    let mut out = vec![phi0];
    for n in 1..=mesh.steps() {
        let a0 = 1.0 / mesh.tau(n);
        let prev = &out[n - 1];
        let mut base = prev.map(|v| a0 * v);
        if let Some(f) = forcing {
            base.axpy(1.0, &f.sample(&grid, mesh.t(n)))?;
        }
        let (phi, stats) = solve_implicit(&mut solver, a0, params, &base, prev, opts)?;
        if !stats.converged {
            return Err(Error::FixedPointFailed {
                level: n,
                iterations: stats.iterations,
                residual: stats.residual,
            });
        }
        out.push(phi);
    }
    Ok(out)
}
