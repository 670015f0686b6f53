//! Nonuniform time meshes: uniform, graded, the composite graded+random mesh
//! used for accuracy studies, and the adaptive step controller.

use std::io::Write;

use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::special::gamma;

/// Strictly increasing time nodes `0 = t_0 < t_1 < ... < t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    nodes: Vec<f64>,
}

impl TimeMesh {
    /// Validates and wraps a node sequence.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidMesh("no nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidMesh(format!("t_0 must be 0, got {}", nodes[0])));
        }
        for (k, w) in nodes.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "nodes not strictly increasing at k={}: {} -> {}",
                    k + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self { nodes })
    }

    /// Builds a mesh from step sizes `tau_1..tau_N`.
    pub fn from_steps(steps: &[f64]) -> Result<Self> {
        let mut nodes = Vec::with_capacity(steps.len() + 1);
        nodes.push(0.0);
        let mut t = 0.0;
        for &tau in steps {
            t += tau;
            nodes.push(t);
        }
        Self::from_nodes(nodes)
    }

    /// A mesh with only `t_0 = 0`, to be grown with [`TimeMesh::push_step`].
    pub fn empty() -> Self {
        Self { nodes: vec![0.0] }
    }

    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0) || n == 0 {
            return Err(domain(format!("uniform mesh needs T > 0 and N >= 1, got T={t_end}, N={n}")));
        }
        let tau = t_end / n as f64;
        let mut nodes: Vec<f64> = (0..=n).map(|k| k as f64 * tau).collect();
        nodes[n] = t_end;
        Self::from_nodes(nodes)
    }

    /// Graded mesh `t_k = T0 (k/N0)^gamma`, `k = 0..N0`.
    pub fn graded(t0: f64, n0: usize, grading: f64) -> Result<Self> {
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(domain(format!("graded mesh needs T0 > 0, got {t0}")));
        }
        if n0 == 0 {
            return Err(domain("graded mesh needs N0 >= 1"));
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(domain(format!("grading exponent must be >= 1, got {grading}")));
        }
        let nodes: Vec<f64> = (0..=n0)
            .map(|k| t0 * (k as f64 / n0 as f64).powf(grading))
            .collect();
        Self::from_nodes(nodes)
    }

    /// Composite mesh for the manufactured-solution study: a graded mesh on
    /// `[0, T0]` followed by `N - N0` randomly sized steps filling `[T0, T]`.
    pub fn composite_random(n: usize, grading: f64, t_end: f64, seed: u64) -> Result<Self> {
        let split = CompositeSplit::new(n, grading, t_end)?;
        let mut nodes = Self::graded(split.t0, split.n0, grading)?.nodes;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..split.n1).map(|_| Open01.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        let span = t_end - split.t0;
        let mut acc = 0.0;
        for (i, e) in draws.iter().enumerate() {
            acc += e;
            let t = if i + 1 == split.n1 {
                t_end
            } else {
                split.t0 + span * (acc / total)
            };
            nodes.push(t);
        }
        Self::from_nodes(nodes)
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().expect("mesh has at least t_0")
    }

    /// Step `tau_k = t_k - t_{k-1}` for `1 <= k <= N`.
    #[inline]
    pub fn tau(&self, k: usize) -> f64 {
        self.nodes[k] - self.nodes[k - 1]
    }

    /// Step ratio `r_k = tau_k / tau_{k-1}` for `2 <= k <= N`.
    pub fn ratio(&self, k: usize) -> f64 {
        self.tau(k) / self.tau(k - 1)
    }

    pub fn tau_max(&self) -> f64 {
        (1..=self.steps()).map(|k| self.tau(k)).fold(0.0, f64::max)
    }

    /// Appends `t_{N+1} = t_N + tau`.
    pub fn push_step(&mut self, tau: f64) -> Result<()> {
        let t = self.t_end() + tau;
        if !(tau > 0.0) || !(t > self.t_end()) || !t.is_finite() {
            return Err(Error::InvalidMesh(format!("cannot append step {tau}")));
        }
        self.nodes.push(t);
        Ok(())
    }

    /// Appends a node directly, used to land exactly on target times.
    pub fn push_node(&mut self, t: f64) -> Result<()> {
        if !(t > self.t_end()) || !t.is_finite() {
            return Err(Error::InvalidMesh(format!(
                "node {t} does not follow {}",
                self.t_end()
            )));
        }
        self.nodes.push(t);
        Ok(())
    }

    /// Checks the mesh regularity condition AG for grading `gamma` and
    /// constant `c_gamma`:
    /// `tau_k <= tau * min(1, C t_k^(1 - 1/gamma))` and `t_k <= C t_{k-1}`.
    ///
    /// Comparisons allow a relative slack of `1e-12` so that meshes meeting a
    /// bound with equality (e.g. `t_2 = 2^gamma t_1`) are not rejected by
    /// rounding in the node values.
    pub fn ag_check(&self, grading: f64, c_gamma: f64) -> AgReport {
        const SLACK: f64 = 1.0 + 1e-12;
        let tau = self.tau_max();
        let expo = 1.0 - 1.0 / grading;
        for k in 1..=self.steps() {
            let tk = self.t(k);
            let bound = tau * f64::min(1.0, c_gamma * tk.powf(expo));
            if self.tau(k) > bound * SLACK {
                return AgReport::violated(k);
            }
            if k >= 2 && tk > c_gamma * self.t(k - 1) * SLACK {
                return AgReport::violated(k);
            }
        }
        AgReport {
            satisfied: true,
            first_violation: None,
        }
    }

    /// CSV dump with columns `k,t_k,tau_k,r_k`; undefined entries are empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,t_k,tau_k,r_k")?;
        for k in 0..=self.steps() {
            let tau = if k >= 1 { format!("{:e}", self.tau(k)) } else { String::new() };
            let r = if k >= 2 { format!("{:e}", self.ratio(k)) } else { String::new() };
            writeln!(out, "{k},{:e},{tau},{r}", self.t(k))?;
        }
        Ok(())
    }
}

/// `T0 = min(1/gamma, T)` and `N0 = ceil(N / (T + 1 - 1/gamma))` of the
/// composite mesh, with the random-part count `N1 = N - N0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeSplit {
    pub t0: f64,
    pub n0: usize,
    pub n1: usize,
}

impl CompositeSplit {
    pub fn new(n: usize, grading: f64, t_end: f64) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("composite mesh needs N >= 2, got {n}")));
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(domain(format!("grading exponent must be >= 1, got {grading}")));
        }
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(domain(format!("horizon must be positive, got {t_end}")));
        }
        let t0 = f64::min(1.0 / grading, t_end);
        let n0 = (n as f64 / (t_end + 1.0 - 1.0 / grading)).ceil() as usize;
        if n0 >= n {
            return Err(domain(format!(
                "composite mesh leaves no random part: N0 = {n0} >= N = {n} (gamma={grading}, T={t_end})"
            )));
        }
        Ok(Self { t0, n0, n1: n - n0 })
    }
}

/// Outcome of [`TimeMesh::ag_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgReport {
    pub satisfied: bool,
    pub first_violation: Option<usize>,
}

impl AgReport {
    fn violated(k: usize) -> Self {
        Self {
            satisfied: false,
            first_violation: Some(k),
        }
    }
}

/// Largest step keeping the implicit scheme uniquely solvable and energy
/// dissipative: `(kappa Gamma(2 - alpha))^(-1/alpha)`.
pub fn solvability_cap(alpha: f64, kappa: f64) -> f64 {
    (kappa * gamma(2.0 - alpha)).powf(-1.0 / alpha)
}

/// Parameters of the adaptive step controller
/// `tau = max(tau_min, tau_max / sqrt(1 + eta |d_tau phi|^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub tau_max: f64,
    pub tau_min: f64,
    pub eta: f64,
    /// Also bound the step by the solvability cap.
    pub enforce_cap: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            tau_max: 1e-1,
            tau_min: 1e-3,
            eta: 1e3,
            enforce_cap: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0) || !(self.tau_min <= self.tau_max) || !self.tau_max.is_finite() {
            return Err(domain(format!(
                "adaptive steps need 0 < tau_min <= tau_max, got [{}, {}]",
                self.tau_min, self.tau_max
            )));
        }
        if !(self.eta >= 0.0) {
            return Err(domain(format!("eta must be nonnegative, got {}", self.eta)));
        }
        Ok(())
    }

    /// Next step from the discrete L2 norm of the last divided difference.
    /// The cap is applied last, so it wins over `tau_min` when smaller.
    pub fn next_tau(&self, update_norm: f64, cap: f64) -> f64 {
        let raw = self.tau_max / (1.0 + self.eta * update_norm * update_norm).sqrt();
        let tau = f64::max(self.tau_min, raw);
        if self.enforce_cap {
            f64::min(cap, tau)
        } else {
            tau
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn graded_examples() {
        let m = TimeMesh::graded(1.0, 4, 1.0).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let m = TimeMesh::graded(1.0, 2, 2.0).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 1.0]);
        let m = TimeMesh::graded(0.25, 23, 4.0).unwrap();
        assert_relative_eq!(m.t(1), 0.25 * (1.0f64 / 23.0).powi(4), max_relative = 1e-15);
        assert_relative_eq!(m.t(1), 8.93e-7, max_relative = 1e-3);
    }

    #[test]
    fn graded_rejects_bad_parameters() {
        assert!(TimeMesh::graded(0.0, 4, 2.0).is_err());
        assert!(TimeMesh::graded(1.0, 0, 2.0).is_err());
        assert!(TimeMesh::graded(1.0, 4, 0.5).is_err());
    }

    #[test]
    fn composite_split_arithmetic() {
        let s = CompositeSplit::new(40, 4.0, 1.0).unwrap();
        assert_eq!(s.t0, 0.25);
        assert_eq!(s.n0, 23);
        assert_eq!(s.n1, 17);
        let s = CompositeSplit::new(80, 3.0, 1.0).unwrap();
        assert_relative_eq!(s.t0, 1.0 / 3.0);
        assert_eq!(s.n0, 48);
        // gamma = 1 with T = 1 leaves nothing for the random part.
        assert!(CompositeSplit::new(40, 1.0, 1.0).is_err());
        assert!(CompositeSplit::new(1, 4.0, 1.0).is_err());
    }

    #[test]
    fn composite_mesh_structure() {
        let m = TimeMesh::composite_random(40, 4.0, 1.0, 7).unwrap();
        assert_eq!(m.steps(), 40);
        assert_eq!(m.t(23), 0.25);
        assert_eq!(m.t_end(), 1.0);
        let again = TimeMesh::composite_random(40, 4.0, 1.0, 7).unwrap();
        assert_eq!(m, again);
        let other = TimeMesh::composite_random(40, 4.0, 1.0, 8).unwrap();
        assert_ne!(m, other);
    }

    #[test]
    fn ag_uniform_and_graded() {
        let m = TimeMesh::uniform(1.0, 20).unwrap();
        assert!(m.ag_check(1.0, 2.0).satisfied);

        let g = 3.0;
        let m = TimeMesh::graded(1.0, 64, g).unwrap();
        let r = m.ag_check(g, 2f64.powf(g));
        assert!(r.satisfied, "{r:?}");
    }

    #[test]
    fn ag_detects_constructed_violation() {
        let m = TimeMesh::from_steps(&[0.01, 1.0, 1.0]).unwrap();
        let r = m.ag_check(1.0, 1.5);
        assert!(!r.satisfied);
        assert_eq!(r.first_violation, Some(2));
    }

    #[test]
    fn graded_meshes_satisfy_ag_over_range() {
        for &g in &[1.0, 1.5, 2.0, 3.0, 4.0, 5.0] {
            for &n in &[2usize, 3, 10, 100, 1000, 10_000] {
                let m = TimeMesh::graded(1.0, n, g).unwrap();
                let c = 2f64.powf(g);
                assert!(m.ag_check(g, c).satisfied, "gamma={g} N={n}");
            }
        }
    }

    #[test]
    fn solvability_cap_examples() {
        for &a in &[0.1, 0.4, 0.7, 0.95] {
            assert_relative_eq!(solvability_cap(a, 1.0 / gamma(2.0 - a)), 1.0, max_relative = 1e-13);
        }
        assert_relative_eq!(solvability_cap(0.5, 1.0), 4.0 / std::f64::consts::PI, max_relative = 1e-13);
        assert_relative_eq!(solvability_cap(0.999, 2.0), 0.5, max_relative = 2e-3);
    }

    #[test]
    fn adaptive_examples() {
        let cfg = AdaptiveConfig::default();
        assert_eq!(cfg.next_tau(0.0, 10.0), 0.1);
        assert_eq!(cfg.next_tau(0.0, 0.05), 0.05);
        let cfg = AdaptiveConfig {
            tau_max: 0.1,
            tau_min: 1e-3,
            eta: 3.0,
            enforce_cap: true,
        };
        assert_relative_eq!(cfg.next_tau(1.0, f64::INFINITY), 0.05, max_relative = 1e-15);
        assert_eq!(cfg.next_tau(1e12, 1.0), 1e-3);
        let uncapped = AdaptiveConfig { enforce_cap: false, ..cfg };
        assert_eq!(uncapped.next_tau(0.0, 0.01), 0.1);
    }

    #[test]
    fn adaptive_config_validation() {
        assert!(AdaptiveConfig::default().validate().is_ok());
        let bad = AdaptiveConfig { tau_min: 1.0, tau_max: 0.1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mesh_validation_and_csv() {
        assert!(TimeMesh::from_nodes(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeMesh::from_nodes(vec![0.1, 0.5]).is_err());
        let m = TimeMesh::from_steps(&[0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "k,t_k,tau_k,r_k\n0,0e0,,\n1,5e-1,5e-1,\n2,7.5e-1,2.5e-1,5e-1\n");
    }

    proptest! {
        #[test]
        fn composite_mesh_sums_to_horizon(
            n in 8usize..400, g in 1.5f64..5.0, t in 0.5f64..3.0, seed in any::<u64>()
        ) {
            if let Ok(m) = TimeMesh::composite_random(n, g, t, seed) {
                prop_assert_eq!(m.steps(), n);
                prop_assert_eq!(m.t_end(), t);
                let sum: f64 = (1..=n).map(|k| m.tau(k)).sum();
                prop_assert!((sum - t).abs() <= 10.0 * f64::EPSILON * t);
                prop_assert!((1..=n).all(|k| m.tau(k) > 0.0));
            }
        }

        #[test]
        fn adaptive_step_stays_in_range(
            u in 0.0f64..1e6, eta in 0.0f64..1e4, cap in 1e-3f64..10.0
        ) {
            let cfg = AdaptiveConfig { tau_max: 0.1, tau_min: 1e-3, eta, enforce_cap: true };
            let tau = cfg.next_tau(u, cap);
            prop_assert!(tau >= cfg.tau_min && tau <= f64::min(cap, cfg.tau_max));
        }
    }
}
