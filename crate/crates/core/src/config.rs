//! Experiment configuration: a flat TOML file of optional keys, overlaid by
//! command-line values, then resolved against per-mode defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::mesh::AdaptiveConfig;
use crate::model::{ManufacturedCase, ModelParams};
use crate::stepper::{Acceleration, CapPolicy, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Converge,
    Coarsen,
    Kernels,
}

/// Every recognised key. Unset keys fall back to the mode defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Option<Mode>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    /// Interface width; `eps2` may be given instead.
    pub eps: Option<f64>,
    pub eps2: Option<f64>,
    pub grid: Option<usize>,
    pub length: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,

    pub sigma: Option<f64>,
    pub gammas: Option<Vec<f64>>,
    pub n_list: Option<Vec<usize>>,
    pub full: Option<bool>,
    pub reference_n: Option<usize>,
    pub reference_gamma: Option<f64>,

    pub graded_gamma: Option<f64>,
    pub n0: Option<usize>,
    pub t0: Option<f64>,
    pub tau_max: Option<f64>,
    pub tau_min: Option<f64>,
    pub eta: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,

    pub fp_tol: Option<f64>,
    pub max_iterations: Option<usize>,
    /// 0 selects the plain lagged iteration.
    pub anderson_depth: Option<usize>,
    /// `"strict"` or `"override"`.
    pub cap_policy: Option<String>,
    pub identity_tol: Option<f64>,
    pub dissipation_rel_tol: Option<f64>,
    pub l6_ceiling: Option<f64>,

    pub alpha_list: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub trials: Option<usize>,
    pub form_samples: Option<usize>,
    pub form_n_max: Option<usize>,
    pub roundtrip_samples: Option<usize>,
    pub roundtrip_n: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            context: "config".into(),
            message: e.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Keys set in `top` replace those in `self`.
    pub fn overlay(mut self, top: ConfigFile) -> Self {
        let base = &mut self;
        overlay_fields!(base, top;
            mode, alpha, kappa, eps, eps2, grid, length, t_end, seed, out,
            sigma, gammas, n_list, full, reference_n, reference_gamma,
            graded_gamma, n0, t0, tau_max, tau_min, eta, snapshot_times,
            fp_tol, max_iterations, anderson_depth, cap_policy, identity_tol,
            dissipation_rel_tol, l6_ceiling,
            alpha_list, n_max, trials, form_samples, form_n_max,
            roundtrip_samples, roundtrip_n,
        );
        self
    }

    fn eps_or(&self, default: f64) -> Result<f64> {
        match (self.eps, self.eps2) {
            (Some(_), Some(_)) => Err(Error::Config("set either eps or eps2, not both".into())),
            (Some(e), None) => Ok(e),
            (None, Some(e2)) if e2 > 0.0 => Ok(e2.sqrt()),
            (None, Some(e2)) => Err(Error::Config(format!("eps2 must be positive, got {e2}"))),
            (None, None) => Ok(default),
        }
    }

    fn solver(&self, l6_default: Option<f64>) -> Result<SolverOptions> {
        let d = SolverOptions::default();
        let acceleration = match self.anderson_depth {
            Some(0) => Acceleration::Plain,
            Some(depth) => Acceleration::Anderson { depth },
            None => d.acceleration,
        };
        let cap_policy = match self.cap_policy.as_deref() {
            None | Some("strict") => CapPolicy::Strict,
            Some("override") => CapPolicy::Override,
            Some(other) => {
                return Err(Error::Config(format!(
                    "cap_policy must be \"strict\" or \"override\", got {other:?}"
                )))
            }
        };
        let opts = SolverOptions {
            fp_tol: self.fp_tol.unwrap_or(d.fp_tol),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            acceleration,
            cap_policy,
            identity_tol: self.identity_tol.unwrap_or(d.identity_tol),
            dissipation_rel_tol: self.dissipation_rel_tol.unwrap_or(d.dissipation_rel_tol),
            l6_ceiling: self.l6_ceiling.or(l6_default),
            ..d
        };
        opts.validate()?;
        Ok(opts)
    }
}

/// Ceiling for `|phi|_{l6}` matching a field bounded by 2 in magnitude.
fn default_l6_ceiling(grid: &Grid2D) -> f64 {
    2.0 * grid.area().powf(1.0 / 6.0)
}

/// What the manufactured-solution errors are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// The exact solution at grid points.
    Exact,
    /// A same-grid run on the graded mesh `t_k = T (k/n)^gamma`, linearly
    /// interpolated in time.
    FineMesh { n: usize, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeConfig {
    pub params: ModelParams,
    pub case: ManufacturedCase,
    pub gammas: Vec<f64>,
    pub n_list: Vec<usize>,
    pub grid: Grid2D,
    pub t_end: f64,
    pub seed: u64,
    pub reference: Reference,
    pub solver: SolverOptions,
    pub out: Option<PathBuf>,
}

impl ConvergeConfig {
    pub fn from_file(f: &ConfigFile) -> Result<Self> {
        let full = f.full.unwrap_or(false);
        let params = ModelParams::new(
            f.alpha.unwrap_or(0.4),
            f.kappa.unwrap_or(1.0),
            f.eps_or(0.5f64.sqrt())?,
        )?;
        let case = ManufacturedCase::new(f.sigma.unwrap_or(0.4))?;
        let grid = Grid2D::new(
            f.grid.unwrap_or(if full { 512 } else { 64 }),
            f.length.unwrap_or(std::f64::consts::TAU),
        )?;
        let reference = if full {
            Reference::Exact
        } else {
            Reference::FineMesh {
                n: f.reference_n.unwrap_or(4096),
                gamma: f.reference_gamma.unwrap_or(6.0),
            }
        };
        let mut n_list = f.n_list.clone().unwrap_or_else(|| vec![40, 80, 160, 320]);
        n_list.sort_unstable();
        let gammas = f.gammas.clone().unwrap_or_else(|| vec![3.0, 4.0, 5.0]);
        if n_list.is_empty() || gammas.is_empty() {
            return Err(Error::Config("N list and gamma list must be nonempty".into()));
        }
        let t_end = f.t_end.unwrap_or(1.0);
        if !(t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be positive, got {t_end}")));
        }
        Ok(Self {
            params,
            case,
            gammas,
            n_list,
            grid,
            t_end,
            seed: f.seed.unwrap_or(1),
            reference,
            solver: f.solver(Some(default_l6_ceiling(&grid)))?,
            out: f.out.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarsenConfig {
    pub params: ModelParams,
    pub grid: Grid2D,
    pub t_end: f64,
    pub seed: u64,
    pub graded_gamma: f64,
    pub n0: usize,
    pub t0: f64,
    pub adaptive: AdaptiveConfig,
    /// Snapshot times in `(t0, t_end]`, ascending.
    pub snapshot_times: Vec<f64>,
    pub solver: SolverOptions,
    pub out: Option<PathBuf>,
}

impl CoarsenConfig {
    pub fn from_file(f: &ConfigFile) -> Result<Self> {
        let params = ModelParams::new(
            f.alpha.unwrap_or(0.7),
            f.kappa.unwrap_or(1.0),
            f.eps_or(0.05)?,
        )?;
        let grid = Grid2D::new(
            f.grid.unwrap_or(128),
            f.length.unwrap_or(std::f64::consts::TAU),
        )?;
        let t_end = f.t_end.unwrap_or(300.0);
        let t0 = f.t0.unwrap_or(0.01);
        if !(t0 > 0.0) || !(t_end >= t0) {
            return Err(Error::Config(format!(
                "need 0 < t0 <= t_end, got t0={t0}, t_end={t_end}"
            )));
        }
        let adaptive = AdaptiveConfig {
            tau_max: f.tau_max.unwrap_or(0.1),
            tau_min: f.tau_min.unwrap_or(1e-3),
            eta: f.eta.unwrap_or(1e3),
            enforce_cap: true,
        };
        adaptive.validate()?;
        let requested = f
            .snapshot_times
            .clone()
            .unwrap_or_else(|| vec![10.0, 50.0, 100.0, 300.0]);
        if let Some(bad) = requested.iter().find(|&&s| !(s > t0)) {
            return Err(Error::Config(format!(
                "snapshot time {bad} must exceed the graded interval end {t0}"
            )));
        }
        // Times beyond the horizon are dropped so the documented defaults stay
        // usable for short runs.
        let mut snapshot_times: Vec<f64> = requested.into_iter().filter(|&s| s <= t_end).collect();
        snapshot_times.sort_by(f64::total_cmp);
        snapshot_times.dedup();
        Ok(Self {
            params,
            grid,
            t_end,
            seed: f.seed.unwrap_or(1),
            graded_gamma: f.graded_gamma.unwrap_or(3.0),
            n0: f.n0.unwrap_or(30),
            t0,
            adaptive,
            snapshot_times,
            solver: f.solver(Some(default_l6_ceiling(&grid)))?,
            out: f.out.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelsConfig {
    pub alpha_list: Vec<f64>,
    pub n_max: usize,
    pub trials: usize,
    pub seed: u64,
    pub identity_tol: f64,
    pub form_samples: usize,
    pub form_n_max: usize,
    pub roundtrip_samples: usize,
    pub roundtrip_n: usize,
}

impl KernelsConfig {
    pub fn from_file(f: &ConfigFile) -> Result<Self> {
        let alpha_list = f
            .alpha_list
            .clone()
            .unwrap_or_else(|| vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        if let Some(bad) = alpha_list.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Config(format!("alpha {bad} outside (0, 1)")));
        }
        let cfg = Self {
            alpha_list,
            n_max: f.n_max.unwrap_or(100),
            trials: f.trials.unwrap_or(100),
            seed: f.seed.unwrap_or(1),
            identity_tol: f.identity_tol.unwrap_or(crate::kernels::DEFAULT_IDENTITY_TOL),
            form_samples: f.form_samples.unwrap_or(10_000),
            form_n_max: f.form_n_max.unwrap_or(40),
            roundtrip_samples: f.roundtrip_samples.unwrap_or(50),
            roundtrip_n: f.roundtrip_n.unwrap_or(30),
        };
        if cfg.n_max == 0 || cfg.form_n_max == 0 || cfg.roundtrip_n == 0 {
            return Err(Error::Config("mesh sizes must be positive".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    Converge(ConvergeConfig),
    Coarsen(CoarsenConfig),
    Kernels(KernelsConfig),
}

impl ExperimentConfig {
    /// Resolves `file` for `mode`, or for the file's own `mode` key.
    pub fn resolve(mode: Option<Mode>, file: &ConfigFile) -> Result<Self> {
        let mode = mode
            .or(file.mode)
            .ok_or_else(|| Error::Config("no mode given".into()))?;
        Ok(match mode {
            Mode::Converge => Self::Converge(ConvergeConfig::from_file(file)?),
            Mode::Coarsen => Self::Coarsen(CoarsenConfig::from_file(file)?),
            Mode::Kernels => Self::Kernels(KernelsConfig::from_file(file)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converge_defaults() {
        let c = ConvergeConfig::from_file(&ConfigFile::default()).unwrap();
        assert_eq!(c.params.alpha, 0.4);
        assert!((c.params.eps2() - 0.5).abs() < 1e-15);
        assert_eq!(c.n_list, vec![40, 80, 160, 320]);
        assert_eq!(c.grid.m(), 64);
        assert_eq!(c.reference, Reference::FineMesh { n: 4096, gamma: 6.0 });
        let full = ConfigFile {
            full: Some(true),
            ..Default::default()
        };
        let c = ConvergeConfig::from_file(&full).unwrap();
        assert_eq!(c.grid.m(), 512);
        assert_eq!(c.reference, Reference::Exact);
    }

    #[test]
    fn coarsen_defaults_and_snapshot_filter() {
        let c = CoarsenConfig::from_file(&ConfigFile::default()).unwrap();
        assert_eq!(c.params.eps, 0.05);
        assert_eq!(c.grid.m(), 128);
        assert_eq!(c.snapshot_times, vec![10.0, 50.0, 100.0, 300.0]);
        assert_eq!((c.graded_gamma, c.n0, c.t0), (3.0, 30, 0.01));
        let short = ConfigFile {
            t_end: Some(60.0),
            ..Default::default()
        };
        assert_eq!(
            CoarsenConfig::from_file(&short).unwrap().snapshot_times,
            vec![10.0, 50.0]
        );
        let bad = ConfigFile {
            t_end: Some(0.001),
            ..Default::default()
        };
        assert!(CoarsenConfig::from_file(&bad).is_err());
    }

    #[test]
    fn toml_parsing_and_overlay() {
        let f = ConfigFile::from_toml_str(
            "mode = \"coarsen\"\nalpha = 0.9\ngrid = 32\nsnapshot_times = [1.0, 2.0]\ncap_policy = \"override\"\n",
        )
        .unwrap();
        let f = f.overlay(ConfigFile {
            grid: Some(16),
            ..Default::default()
        });
        match ExperimentConfig::resolve(None, &f).unwrap() {
            ExperimentConfig::Coarsen(c) => {
                assert_eq!(c.params.alpha, 0.9);
                assert_eq!(c.grid.m(), 16);
                assert_eq!(c.solver.cap_policy, CapPolicy::Override);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(ConfigFile::from_toml_str("unknown_key = 1").is_err());
        assert!(ConfigFile::from_toml_str("cap_policy = \"loose\"")
            .and_then(|f| ConvergeConfig::from_file(&f))
            .is_err());
        let both = ConfigFile {
            eps: Some(0.1),
            eps2: Some(0.01),
            ..Default::default()
        };
        assert!(ConvergeConfig::from_file(&both).is_err());
    }
}
