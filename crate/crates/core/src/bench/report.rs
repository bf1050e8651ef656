use std::io::{BufRead, Write};

use crate::adapt::{fit_power_law, AdaptRecord};
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "step,k,nov,grad_error,eta_global,eff_index";
const SCHEMA_LINE: &str = "# schema: report/v1";

/// `η / ‖∇u − ∇u_h‖`.
pub fn efficiency_index(eta: f64, error: f64) -> Result<f64> {
    if !(error > 0.0) || !error.is_finite() {
        return Err(Error::Fit(format!(
            "efficiency index needs a positive error, got {error}"
        )));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::Fit(format!("estimator {eta} is not a non-negative number")));
    }
    Ok(eta / error)
}

/// Least-squares slope of `log(error)` against `log(N)` over `(N, error)`.
pub fn convergence_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    let samples: Vec<(f64, f64)> = points.iter().map(|&(n, e)| (e, n)).collect();
    Ok(-fit_power_law(&samples)?.p + 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub step: usize,
    pub k: usize,
    pub nov: usize,
    /// Unknown when the report was built from a records file.
    pub grad_error: Option<f64>,
    pub eta: f64,
    pub eff_index: Option<f64>,
}

/// Per-iteration errors and estimators with fitted rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    /// Whether the slopes below fit the gradient error (true) or, when it is
    /// missing, the global estimator.
    pub slope_of_error: bool,
    /// Slope over every iteration of every step.
    pub slope_all: Option<f64>,
    /// Slope over the last iteration of each step.
    pub slope_final: Option<f64>,
}

impl ConvergenceReport {
    pub fn from_rows(rows: Vec<ReportRow>) -> Result<Self> {
        for r in &rows {
            let ok = |v: f64| v.is_finite() && v >= 0.0;
            if !ok(r.eta) || !r.grad_error.is_none_or(ok) || !r.eff_index.is_none_or(ok) {
                return Err(Error::Records(format!(
                    "step {} iteration {}: negative or non-finite entry",
                    r.step, r.k
                )));
            }
        }
        let slope_of_error = !rows.is_empty() && rows.iter().all(|r| r.grad_error.is_some_and(|e| e > 0.0));
        let value = |r: &ReportRow| {
            if slope_of_error {
                r.grad_error.unwrap_or(f64::NAN)
            } else {
                r.eta
            }
        };
        let all: Vec<(f64, f64)> = rows.iter().map(|r| (r.nov as f64, value(r))).collect();
        let finals: Vec<(f64, f64)> = rows
            .iter()
            .enumerate()
            .filter(|(i, r)| rows.get(i + 1).is_none_or(|next| next.step != r.step))
            .map(|(_, r)| (r.nov as f64, value(r)))
            .collect();
        Ok(Self {
            slope_all: convergence_slope(&all).ok(),
            slope_final: convergence_slope(&finals).ok(),
            slope_of_error,
            rows,
        })
    }

    pub fn from_records(records: &[AdaptRecord]) -> Result<Self> {
        let mut rows = Vec::new();
        for rec in records {
            for it in &rec.iterations {
                let eff_index = match it.grad_error {
                    Some(e) if e > 0.0 => Some(efficiency_index(it.eta, e)?),
                    _ => None,
                };
                rows.push(ReportRow {
                    step: rec.step,
                    k: it.k,
                    nov: it.nov,
                    grad_error: it.grad_error,
                    eta: it.eta,
                    eff_index,
                });
            }
        }
        Self::from_rows(rows)
    }

    /// `(N, error)` pairs; the final-iteration view when `finals` is set.
    pub fn points(&self, finals: bool, estimator: bool) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(i, r)| !finals || self.rows.get(i + 1).is_none_or(|next| next.step != r.step))
            .filter_map(|(_, r)| {
                let v = if estimator { Some(r.eta) } else { r.grad_error };
                v.map(|v| (r.nov as f64, v))
            })
            .collect()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(out, "{SCHEMA_LINE}\n{REPORT_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:e},{}",
                r.step,
                r.k,
                r.nov,
                opt(r.grad_error),
                r.eta,
                opt(r.eff_index)
            )?;
        }
        Ok(())
    }

    /// Human-readable summary of the fitted slopes.
    pub fn summary(&self) -> String {
        let what = if self.slope_of_error {
            "gradient error"
        } else {
            "estimator"
        };
        let fmt = |s: Option<f64>| s.map_or("n/a".to_string(), |s| format!("{s:.4}"));
        format!(
            "slope of {what} vs NOV: all iterations {}, final iterations {}",
            fmt(self.slope_all),
            fmt(self.slope_final)
        )
    }
}

/// Parses a report CSV written by [`ConvergenceReport::write_csv`].
pub fn read_report(input: impl BufRead) -> Result<ConvergenceReport> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != REPORT_HEADER {
                return Err(Error::Records(format!("unexpected header `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let bad = |what: &str| Error::Records(format!("line {}: bad {what}", lineno + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad("column count"));
        }
        let opt = |i: usize, what: &str| -> Result<Option<f64>> {
            if f[i].is_empty() {
                Ok(None)
            } else {
                f[i].parse().map(Some).map_err(|_| bad(what))
            }
        };
        rows.push(ReportRow {
            step: f[0].parse().map_err(|_| bad("step"))?,
            k: f[1].parse().map_err(|_| bad("k"))?,
            nov: f[2].parse().map_err(|_| bad("nov"))?,
            grad_error: opt(3, "grad_error")?,
            eta: f[4].parse().map_err(|_| bad("eta_global"))?,
            eff_index: opt(5, "eff_index")?,
        });
    }
    if !header_seen {
        return Err(Error::Records("missing header".into()));
    }
    ConvergenceReport::from_rows(rows)
}
