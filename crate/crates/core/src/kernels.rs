//! L1 kernels of the nonuniform Caputo discretization together with the
//! discrete orthogonal (DOC) and complementary (DCC) convolution kernels.
//!
//! Indexing follows the convolution form: for level `n`, coefficient `j`
//! belongs to the interval `k = n - j`. So `a^{(n)}_0` is the weight of the
//! newest step and `a^{(n)}_{n-1}` the weight of the first one.
//!
//! The DOC kernels solve the triangular system
//! `sum_{j=k}^{n} theta^{(n)}_{n-j} a^{(j)}_{j-k} = delta_{nk}` and the DCC
//! kernels are their partial sums `p^{(n)}_{n-k} = sum_{j=k}^{n} theta^{(j)}_{j-k}`,
//! which satisfy `sum_{j=k}^{n} p^{(n)}_{n-j} a^{(j)}_{j-k} = 1`.

use std::io::Write;

use crate::error::{domain, Error, Result};
use crate::mesh::TimeMesh;
use crate::special::{gamma, omega_unchecked};

/// Default absolute tolerance for the kernel identities.
pub const DEFAULT_IDENTITY_TOL: f64 = 1e-11;

macro_rules! kernel_row {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            level: usize,
            coeffs: Vec<f64>,
        }

        impl $name {
            pub fn level(&self) -> usize {
                self.level
            }

            /// Coefficients indexed by `j = 0..level`.
            pub fn coeffs(&self) -> &[f64] {
                &self.coeffs
            }

            pub fn get(&self, j: usize) -> f64 {
                self.coeffs[j]
            }

            pub fn sum(&self) -> f64 {
                self.coeffs.iter().sum()
            }
        }
    };
}

kernel_row!(
    /// L1 coefficients `a^{(n)}_j`, positive and strictly decreasing in `j`.
    L1Row
);
kernel_row!(
    /// DOC coefficients `theta^{(n)}_j`: positive at `j = 0`, negative
    /// otherwise, with a positive sum.
    DocRow
);
kernel_row!(
    /// DCC coefficients `p^{(n)}_j`, nonnegative and summing to at most
    /// `omega_{1+alpha}(t_n)`.
    DccRow
);

/// `(x + tau)^beta - x^beta` for `x >= 0`, `tau > 0`, `0 < beta < 1`.
///
/// `upper` is `x + tau` as computed from the mesh nodes. When the step is
/// small compared with the distance to the evaluation point (`tau < x`) the
/// direct difference cancels, so it switches to
/// `x^beta * expm1(beta * ln1p(tau / x))`.
#[inline]
fn power_difference(x: f64, upper: f64, tau: f64, beta: f64) -> f64 {
    if x <= 0.0 {
        upper.powf(beta)
    } else if tau >= x {
        upper.powf(beta) - x.powf(beta)
    } else {
        x.powf(beta) * (beta * (tau / x).ln_1p()).exp_m1()
    }
}

#[inline]
fn l1_coefficient(nodes: &[f64], n: usize, k: usize, beta: f64, gamma_2ma: f64) -> f64 {
    let tn = nodes[n];
    let tau = nodes[k] - nodes[k - 1];
    let diff = power_difference(tn - nodes[k], tn - nodes[k - 1], tau, beta);
    diff / (tau * gamma_2ma)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("fractional order must lie in (0, 1), got {alpha}")))
    }
}

/// L1 row at level `n` in closed form:
/// `a^{(n)}_{n-k} = [(t_n - t_{k-1})^{1-alpha} - (t_n - t_k)^{1-alpha}] / (tau_k Gamma(2-alpha))`.
pub fn l1_row(mesh: &TimeMesh, n: usize, alpha: f64) -> Result<L1Row> {
    check_alpha(alpha)?;
    if n == 0 || n > mesh.steps() {
        return Err(domain(format!("level {n} outside 1..={}", mesh.steps())));
    }
    let g = gamma(2.0 - alpha);
    let beta = 1.0 - alpha;
    let coeffs = (0..n)
        .map(|j| l1_coefficient(mesh.nodes(), n, n - j, beta, g))
        .collect();
    Ok(L1Row { level: n, coeffs })
}

/// Maximum absolute residuals of the kernel identities at one level.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IdentityResiduals {
    /// `sum theta^{(n)}_{n-j} a^{(j)}_{j-k} - delta_{nk}`.
    pub orthogonal: f64,
    /// `sum a^{(n)}_{n-j} theta^{(j)}_{j-k} - delta_{nk}`.
    pub mutual: f64,
    /// `sum p^{(n)}_{n-j} a^{(j)}_{j-k} - 1`.
    pub complementary: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.orthogonal.max(self.mutual).max(self.complementary)
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            orthogonal: self.orthogonal.max(other.orthogonal),
            mutual: self.mutual.max(other.mutual),
            complementary: self.complementary.max(other.complementary),
        }
    }
}

/// Sign and monotonicity properties of the kernels at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyReport {
    pub level: usize,
    /// `a^{(n)}_{j-1} > a^{(n)}_j > 0`.
    pub l1_decreasing: bool,
    /// `a^{(n-1)}_{j-1} > a^{(n)}_j`.
    pub l1_level_decreasing: bool,
    /// `a^{(n-1)}_{j-1} a^{(n)}_{j+1} > a^{(n-1)}_j a^{(n)}_j`.
    pub l1_product: bool,
    /// `theta_0 > 0`, `theta_j < 0` for `j >= 1`.
    pub doc_signs: bool,
    pub doc_positive_sum: bool,
    pub dcc_nonnegative: bool,
    /// `sum_j p^{(n)}_j <= omega_{1+alpha}(t_n)`.
    pub dcc_bounded: bool,
}

impl PropertyReport {
    pub fn all_hold(&self) -> bool {
        self.l1_decreasing
            && self.l1_level_decreasing
            && self.l1_product
            && self.doc_signs
            && self.doc_positive_sum
            && self.dcc_nonnegative
            && self.dcc_bounded
    }
}

/// Append-only triangular store of L1, DOC and DCC kernels, grown one level
/// at a time along a (possibly still growing) time mesh.
#[derive(Debug, Clone)]
pub struct KernelWorkspace {
    alpha: f64,
    gamma_2ma: f64,
    tolerance: f64,
    nodes: Vec<f64>,
    // a_cols[k-1][i] = a^{(k+i)}_i, the weight of interval k seen from level
    // k+i. This keeps the DOC recursion on contiguous memory.
    a_cols: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
}

impl KernelWorkspace {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            gamma_2ma: gamma(2.0 - alpha),
            tolerance: DEFAULT_IDENTITY_TOL,
            nodes: vec![0.0],
            a_cols: Vec::new(),
            theta: Vec::new(),
            p: Vec::new(),
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// Workspace filled through every level of `mesh`.
    pub fn from_mesh(mesh: &TimeMesh, alpha: f64) -> Result<Self> {
        let mut ws = Self::new(alpha)?;
        ws.extend_to(mesh, mesh.steps())?;
        Ok(ws)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Number of completed levels.
    pub fn levels(&self) -> usize {
        self.theta.len()
    }

    pub fn t(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.nodes[k] - self.nodes[k - 1]
    }

    fn require(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.levels() {
            Err(Error::MissingRows {
                needed: n,
                available: self.levels(),
            })
        } else {
            Ok(())
        }
    }

    /// Computes the next level from `mesh`, which must agree with the nodes
    /// already consumed.
    pub fn extend(&mut self, mesh: &TimeMesh) -> Result<()> {
        let n = self.levels() + 1;
        if mesh.steps() < n {
            return Err(Error::InvalidMesh(format!(
                "mesh has {} steps, cannot build level {n}",
                mesh.steps()
            )));
        }
        if mesh.t(n - 1) != self.nodes[n - 1] {
            return Err(Error::InvalidMesh(format!(
                "mesh node t_{} = {} differs from workspace node {}",
                n - 1,
                mesh.t(n - 1),
                self.nodes[n - 1]
            )));
        }
        self.nodes.push(mesh.t(n));

        let beta = 1.0 - self.alpha;
        self.a_cols.push(Vec::new());
        for k in 1..=n {
            let a = l1_coefficient(&self.nodes, n, k, beta, self.gamma_2ma);
            self.a_cols[k - 1].push(a);
        }

        // DOC recursion in decreasing k:
        // theta_{n-k} = -(1/a^{(k)}_0) sum_{j=k+1}^{n} theta_{n-j} a^{(j)}_{j-k}.
        let mut theta = vec![0.0; n];
        theta[0] = 1.0 / self.a_cols[n - 1][0];
        for k in (1..n).rev() {
            let col = &self.a_cols[k - 1];
            let m = n - k;
            let s: f64 = (1..=m).map(|i| theta[m - i] * col[i]).sum();
            theta[m] = -s / col[0];
        }

        // p^{(n)}_j = p^{(n-1)}_{j-1} + theta^{(n)}_j, the partial sums of the
        // definition accumulated in the same order.
        let mut p = Vec::with_capacity(n);
        p.push(theta[0]);
        if n > 1 {
            let prev = &self.p[n - 2];
            for j in 1..n {
                p.push(prev[j - 1] + theta[j]);
            }
        }

        self.theta.push(theta);
        self.p.push(p);
        Ok(())
    }

    /// Like [`extend`](Self::extend), then rejects the level if an identity
    /// residual exceeds the configured tolerance.
    pub fn extend_checked(&mut self, mesh: &TimeMesh) -> Result<IdentityResiduals> {
        self.extend(mesh)?;
        let n = self.levels();
        let res = self.check_identities(n)?;
        if res.max() > self.tolerance {
            return Err(Error::Domain(format!(
                "kernel identity residual {:e} at level {n} exceeds tolerance {:e}",
                res.max(),
                self.tolerance
            )));
        }
        Ok(res)
    }

    pub fn extend_to(&mut self, mesh: &TimeMesh, n: usize) -> Result<()> {
        while self.levels() < n {
            self.extend(mesh)?;
        }
        Ok(())
    }

    /// `a^{(n)}_j`.
    #[inline]
    pub fn a(&self, n: usize, j: usize) -> f64 {
        self.a_cols[n - j - 1][j]
    }

    pub fn l1_row(&self, n: usize) -> Result<L1Row> {
        self.require(n)?;
        let coeffs = (0..n).map(|j| self.a(n, j)).collect();
        Ok(L1Row { level: n, coeffs })
    }

    /// Writes `a^{(n)}_j` for `j = 0..n` into `out`.
    pub fn l1_row_into(&self, n: usize, out: &mut Vec<f64>) -> Result<()> {
        self.require(n)?;
        out.clear();
        out.extend((0..n).map(|j| self.a(n, j)));
        Ok(())
    }

    pub fn theta(&self, n: usize) -> Result<&[f64]> {
        self.require(n)?;
        Ok(&self.theta[n - 1])
    }

    pub fn p(&self, n: usize) -> Result<&[f64]> {
        self.require(n)?;
        Ok(&self.p[n - 1])
    }

    pub fn doc_row(&self, n: usize) -> Result<DocRow> {
        Ok(DocRow {
            level: n,
            coeffs: self.theta(n)?.to_vec(),
        })
    }

    pub fn dcc_row(&self, n: usize) -> Result<DccRow> {
        Ok(DccRow {
            level: n,
            coeffs: self.p(n)?.to_vec(),
        })
    }

    /// Auxiliary kernels `zeta^{(n)}_{n-k} = sum_{j=k}^{n} theta^{(n)}_{n-j}`,
    /// i.e. prefix sums of the DOC row; nonnegative and nonincreasing in `j`.
    pub fn auxiliary_row(&self, n: usize) -> Result<Vec<f64>> {
        let theta = self.theta(n)?;
        let mut acc = 0.0;
        Ok(theta
            .iter()
            .map(|&t| {
                acc += t;
                acc
            })
            .collect())
    }

    /// Residuals of the orthogonal, mutual and complementary identities at
    /// level `n`. Read-only.
    pub fn check_identities(&self, n: usize) -> Result<IdentityResiduals> {
        self.require(n)?;
        let theta = &self.theta[n - 1];
        let p = &self.p[n - 1];
        let mut res = IdentityResiduals::default();
        for k in 1..=n {
            let col = &self.a_cols[k - 1];
            let m = n - k;
            let delta = if k == n { 1.0 } else { 0.0 };

            let orth: f64 = (0..=m).map(|i| theta[m - i] * col[i]).sum();
            res.orthogonal = res.orthogonal.max((orth - delta).abs());

            let comp: f64 = (0..=m).map(|i| p[m - i] * col[i]).sum();
            res.complementary = res.complementary.max((comp - 1.0).abs());

            let mutual: f64 = (k..=n)
                .map(|j| self.a(n, n - j) * self.theta[j - 1][j - k])
                .sum();
            res.mutual = res.mutual.max((mutual - delta).abs());
        }
        Ok(res)
    }

    /// Worst residuals over levels `1..=n`.
    pub fn check_all_identities(&self, n: usize) -> Result<IdentityResiduals> {
        (1..=n).try_fold(IdentityResiduals::default(), |acc, m| {
            Ok(acc.merge(self.check_identities(m)?))
        })
    }

    /// Checks the sign, monotonicity and bound properties at level `n`.
    pub fn check_properties(&self, n: usize) -> Result<PropertyReport> {
        self.require(n)?;
        let a = |m: usize, j: usize| self.a(m, j);

        let mut l1_decreasing = a(n, n - 1) > 0.0;
        for j in 1..n {
            l1_decreasing &= a(n, j - 1) > a(n, j);
        }
        let mut l1_level_decreasing = true;
        let mut l1_product = true;
        if n >= 2 {
            for j in 1..n {
                l1_level_decreasing &= a(n - 1, j - 1) > a(n, j);
            }
            for j in 1..n.saturating_sub(1) {
                l1_product &= a(n - 1, j - 1) * a(n, j + 1) > a(n - 1, j) * a(n, j);
            }
        }

        let theta = &self.theta[n - 1];
        let doc_signs = theta[0] > 0.0 && theta[1..].iter().all(|&t| t < 0.0);
        let doc_positive_sum = theta.iter().sum::<f64>() > 0.0;

        let p = &self.p[n - 1];
        let dcc_nonnegative = p.iter().all(|&v| v >= 0.0);
        let dcc_bounded = p.iter().sum::<f64>() <= omega_unchecked(1.0 + self.alpha, self.nodes[n]);

        Ok(PropertyReport {
            level: n,
            l1_decreasing,
            l1_level_decreasing,
            l1_product,
            doc_signs,
            doc_positive_sum,
            dcc_nonnegative,
            dcc_bounded,
        })
    }

    /// L1 approximation of the Caputo derivative for `v^0..v^n`, returning
    /// `(d^alpha v)^m` for `m = 1..=n`.
    pub fn caputo_l1(&self, values: &[f64]) -> Result<Vec<f64>> {
        let n = values.len().saturating_sub(1);
        if n == 0 {
            return Ok(Vec::new());
        }
        self.require(n)?;
        Ok((1..=n)
            .map(|m| {
                (1..=m)
                    .map(|k| self.a(m, m - k) * (values[k] - values[k - 1]))
                    .sum()
            })
            .collect())
    }

    /// Applies the DOC kernels to `v^1..v^n`: `sum_j theta^{(m)}_{m-j} v^j`
    /// for each `m = 1..=n`. Composed with [`caputo_l1`](Self::caputo_l1)
    /// this recovers the increments `v^m - v^{m-1}`.
    pub fn doc_transform(&self, values: &[f64]) -> Result<Vec<f64>> {
        let n = values.len();
        if n > self.levels() {
            return Err(Error::LengthMismatch {
                expected: self.levels(),
                got: n,
            });
        }
        Ok((1..=n)
            .map(|m| {
                let theta = &self.theta[m - 1];
                (1..=m).map(|j| theta[m - j] * values[j - 1]).sum()
            })
            .collect())
    }

    /// Discrete Riemann-Liouville derivative of order `1 - alpha` induced by
    /// the DOC kernels: `(1/tau_m) sum_j theta^{(m)}_{m-j} v^j`.
    pub fn riemann_liouville(&self, values: &[f64]) -> Result<Vec<f64>> {
        let sums = self.doc_transform(values)?;
        Ok(sums
            .into_iter()
            .enumerate()
            .map(|(i, s)| s / self.tau(i + 1))
            .collect())
    }

    /// DCC approximation of the fractional integral of order `alpha` at
    /// `t_n`: `sum_j p^{(n)}_{n-j} v^j` with `n = values.len()`.
    pub fn fractional_integral(&self, values: &[f64]) -> Result<f64> {
        let n = values.len();
        if n == 0 {
            return Ok(0.0);
        }
        let p = self.p(n)?;
        Ok((1..=n).map(|j| p[n - j] * values[j - 1]).sum())
    }

    /// `LHS - RHS` of the quadratic-form inequality
    /// `2 w_n sum theta_{n-k} w_k >= sum p^{(n)}_{n-k} w_k^2
    ///  - sum p^{(n-1)}_{n-k-1} w_k^2 + (sum theta_{n-k} w_k)^2 / theta_0`,
    /// which is nonnegative for every real sequence `w_1..w_n`.
    pub fn quadratic_bound_slack(&self, w: &[f64], n: usize) -> Result<f64> {
        self.require(n)?;
        if w.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: w.len(),
            });
        }
        let theta = &self.theta[n - 1];
        let p = &self.p[n - 1];
        let tw: f64 = (1..=n).map(|k| theta[n - k] * w[k - 1]).sum();
        let lhs = 2.0 * w[n - 1] * tw;
        let cur: f64 = (1..=n).map(|k| p[n - k] * w[k - 1] * w[k - 1]).sum();
        let prev: f64 = if n >= 2 {
            let pp = &self.p[n - 2];
            (1..n).map(|k| pp[n - k - 1] * w[k - 1] * w[k - 1]).sum()
        } else {
            0.0
        };
        Ok(lhs - (cur - prev + tw * tw / theta[0]))
    }

    /// CSV dump with columns `n,j,a,theta,p`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,j,a,theta,p")?;
        for n in 1..=self.levels() {
            for j in 0..n {
                writeln!(
                    out,
                    "{n},{j},{:e},{:e},{:e}",
                    self.a(n, j),
                    self.theta[n - 1][j],
                    self.p[n - 1][j]
                )?;
            }
        }
        Ok(())
    }
}
