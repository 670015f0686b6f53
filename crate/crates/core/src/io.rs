//! Plain-text snapshot files and the convergence table CSV.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};

/// Writes `# t=<t> M=<M> L=<L>` followed by `M` rows of `M` values with 17
/// significant digits; row `i` holds the values at the `i`-th `y` coordinate.
pub fn write_snapshot<W: Write>(field: &Field, t: f64, mut out: W) -> std::io::Result<()> {
    let g = field.grid();
    let m = g.m();
    writeln!(out, "# t={t:e} M={m} L={:e}", g.length())?;
    let mut line = String::new();
    for i in 0..m {
        line.clear();
        for j in 0..m {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:.16e}", field.at(i, j)));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_snapshot_file(field: &Field, t: f64, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    write_snapshot(field, t, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Parses a snapshot written by [`write_snapshot`], returning the time and field.
pub fn read_snapshot<R: Read>(input: R) -> Result<(f64, Field)> {
    let parse_err = |message: String| Error::Parse {
        context: "snapshot".into(),
        message,
    };
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("empty file".into()))??;
    let rest = header
        .strip_prefix('#')
        .ok_or_else(|| parse_err(format!("bad header {header:?}")))?;
    let (mut t, mut m, mut len) = (None, None, None);
    for item in rest.split_whitespace() {
        match item.split_once('=') {
            Some(("t", v)) => t = v.parse::<f64>().ok(),
            Some(("M", v)) => m = v.parse::<usize>().ok(),
            Some(("L", v)) => len = v.parse::<f64>().ok(),
            _ => return Err(parse_err(format!("unknown header item {item:?}"))),
        }
    }
    let (t, m, len) = match (t, m, len) {
        (Some(t), Some(m), Some(l)) => (t, m, l),
        _ => return Err(parse_err(format!("incomplete header {header:?}"))),
    };
    let grid = Grid2D::new(m, len)?;
    let mut values = Vec::with_capacity(m * m);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|e| parse_err(format!("row {row}: {tok:?}: {e}")))?;
            values.push(v);
        }
        if values.len() - before != m {
            return Err(parse_err(format!(
                "row {row} has {} values, expected {m}",
                values.len() - before
            )));
        }
    }
    if values.len() != m * m {
        return Err(parse_err(format!("expected {m} rows, got {}", values.len() / m)));
    }
    Ok((t, Field::from_values(grid, values)?))
}

pub fn read_snapshot_file(path: &Path) -> Result<(f64, Field)> {
    read_snapshot(fs::File::open(path)?)
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Largest step of the mesh.
    pub tau_max: f64,
    /// `max_n |Phi^n - phi^n|` in the discrete L2 norm.
    pub error: f64,
    /// Observed order against the previous row; `None` on the first row.
    pub order: Option<f64>,
}

/// `log(e_prev / e) / log(tau_prev / tau)`.
pub fn observed_order(e_prev: f64, e: f64, tau_prev: f64, tau: f64) -> f64 {
    (e_prev / e).ln() / (tau_prev / tau).ln()
}

/// Builds table rows from `(N, tau_max, error)` triples sorted by `N`.
pub fn convergence_rows(runs: &[(usize, f64, f64)]) -> Vec<ConvergenceRow> {
    runs.iter()
        .enumerate()
        .map(|(i, &(n, tau_max, error))| ConvergenceRow {
            n,
            tau_max,
            error,
            order: (i > 0).then(|| observed_order(runs[i - 1].2, error, runs[i - 1].1, tau_max)),
        })
        .collect()
}

pub const CONVERGENCE_HEADER: &str = "N,tau_max,error,order";

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        let order = r.order.map(|o| format!("{o:e}")).unwrap_or_default();
        writeln!(out, "{},{:e},{:e},{order}", r.n, r.tau_max, r.error)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let g = Grid2D::periodic_2pi(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals = (0..g.len()).map(|_| rng.random_range(-1.0..1.0) * 1e-3).collect();
        let f = Field::from_values(g, vals).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&f, 12.5, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# t=1.25e1 M=6 L=6.283185307179586e0\n"));
        assert_eq!(text.lines().count(), 7);
        let (t, back) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(t, 12.5);
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn snapshot_rejects_malformed_input() {
        assert!(read_snapshot(&b""[..]).is_err());
        assert!(read_snapshot(&b"t=1 M=4\n"[..]).is_err());
        assert!(read_snapshot(&b"# t=1 M=4 L=1\n1 2 3 4\n"[..]).is_err());
        assert!(read_snapshot(&b"# t=1 M=4 L=1\n1 2 3\n1 2 3\n1 2 3\n1 2 3\n"[..]).is_err());
    }

    #[test]
    fn order_estimator_arithmetic() {
        assert!((observed_order(1e-2, 2.5e-3, 0.1, 0.05) - 2.0).abs() < 1e-12);
        let rows = convergence_rows(&[(40, 0.1, 1e-2), (80, 0.05, 2.5e-3)]);
        assert_eq!(rows[0].order, None);
        assert!((rows[1].order.unwrap() - 2.0).abs() < 1e-12);
        let mut buf = Vec::new();
        write_convergence_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CONVERGENCE_HEADER);
        assert_eq!(lines[1], "40,1e-1,1e-2,");
    }
}
