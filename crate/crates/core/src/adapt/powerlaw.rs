use crate::error::{Error, Result};

/// `η ≈ c N^{-p}` fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub c: f64,
    pub p: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

/// Least squares on `log η = log c − p log N` over `(η, N)` samples.
pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<PowerLawFit> {
    if samples.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 samples, got {}", samples.len())));
    }
    if let Some(&(eta, n)) = samples.iter().find(|(eta, n)| !(*eta > 0.0 && *n > 0.0)) {
        return Err(Error::Fit(format!("non-positive sample (eta {eta}, N {n})")));
    }
    let m = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx <= 1e-24 * xm.abs().max(1.0) {
        return Err(Error::Fit("all N are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(PowerLawFit {
        c: intercept.exp(),
        p: -slope,
        residual,
    })
}

/// `N = ⌈(c / eTol)^{1/p}⌉`. Fails when the estimator is not decreasing
/// (`p <= 0`), meaning no prediction can be made.
pub fn predict_nov(fit: &PowerLawFit, etol: f64) -> Result<usize> {
    if !(fit.p > 0.0) {
        return Err(Error::Fit(format!("exponent {} is not positive", fit.p)));
    }
    if !(etol > 0.0) {
        return Err(Error::Fit("tolerance must be positive".into()));
    }
    let n = (fit.c / etol).powf(1.0 / fit.p);
    if !n.is_finite() {
        return Err(Error::Fit("predicted vertex count overflows".into()));
    }
    // guard against ceil() of values one ulp above an integer
    let rounded = n.round();
    let n = if (n - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        n.ceil()
    };
    Ok((n as usize).max(1))
}

/// `max(⌈log₂(N_target / N_prev)⌉, 1)`.
pub fn compute_itero(n_target: usize, n_prev: usize) -> u32 {
    assert!(n_target > 0 && n_prev > 0, "vertex counts must be positive");
    if n_target <= n_prev {
        return 1;
    }
    let ratio = n_target as f64 / n_prev as f64;
    let l = ratio.log2();
    let r = l.round();
    let c = if (l - r).abs() < 1e-12 { r } else { l.ceil() };
    (c as u32).max(1)
}
