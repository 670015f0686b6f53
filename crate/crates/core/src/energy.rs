//! Discrete free energy, chemical potential and the variational energy whose
//! monotone decay is the discrete dissipation law of the L1 scheme.

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::ModelParams;

/// `mu = phi^3 - phi - eps^2 Delta_h phi`.
pub fn chemical_potential(phi: &Field, params: &ModelParams) -> Field {
    let eps2 = params.eps2();
    let lap = phi.laplacian();
    let mut mu = phi.map(|v| v * v * v - v);
    for (m, l) in mu.values_mut().iter_mut().zip(lap.values()) {
        *m -= eps2 * l;
    }
    mu
}

/// `E[phi] = (eps^2/2) ||grad_h phi||^2 + (1/4) ||phi^2 - 1||^2`.
pub fn free_energy(phi: &Field, params: &ModelParams) -> f64 {
    let h2 = phi.grid().h().powi(2);
    let bulk: f64 = phi
        .values()
        .iter()
        .map(|v| {
            let w = v * v - 1.0;
            w * w
        })
        .sum();
    0.5 * params.eps2() * phi.grad_norm_sq() + 0.25 * h2 * bulk
}

/// `E_alpha[phi^n] = E[phi^n] + (kappa/2) sum_j p^{(n)}_{n-j} ||mu^j||^2`,
/// where `n = mu_norm_sq.len()` and `dcc_row` is `p^{(n)}`. With an empty
/// history this is `E[phi^0]`.
pub fn variational_energy(
    free_energy: f64,
    dcc_row: &[f64],
    mu_norm_sq: &[f64],
    kappa: f64,
) -> Result<f64> {
    let n = mu_norm_sq.len();
    if n == 0 {
        return Ok(free_energy);
    }
    if dcc_row.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: dcc_row.len(),
        });
    }
    let memory: f64 = (1..=n).map(|j| dcc_row[n - j] * mu_norm_sq[j - 1]).sum();
    Ok(free_energy + 0.5 * kappa * memory)
}

/// Energy bookkeeping at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub level: usize,
    pub t: f64,
    pub free_energy: f64,
    pub variational_energy: f64,
    pub mu_norm_sq: f64,
    /// `E_alpha[phi^{n-1}] - E_alpha[phi^n]`; zero at level 0.
    pub dissipation_slack: f64,
}

/// Levels where the variational energy grew by more than the tolerance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DissipationReport {
    /// Largest observed increase `E_alpha[phi^n] - E_alpha[phi^{n-1}]`, or 0.
    pub max_increase: f64,
    pub violations: Vec<usize>,
}

impl DissipationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flags every level with `E_alpha[phi^n] > E_alpha[phi^{n-1}] + tol_abs`.
pub fn dissipation_check(records: &[EnergyRecord], tol_abs: f64) -> DissipationReport {
    let mut report = DissipationReport::default();
    for w in records.windows(2) {
        let inc = w[1].variational_energy - w[0].variational_energy;
        report.max_increase = report.max_increase.max(inc);
        if inc > tol_abs {
            report.violations.push(w[1].level);
        }
    }
    report
}
