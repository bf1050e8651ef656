//! Manufactured benchmark problems and convergence reporting.

mod plot;
mod report;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{GradientFn, ParabolicProblem, SpaceTimeFn};
use crate::mesh::PolygonDomain;

pub use plot::{write_dat, write_svg};
pub use report::{convergence_slope, efficiency_index, read_report, ConvergenceReport, ReportRow, REPORT_HEADER};

pub const CASE_NAMES: [&str; 3] = ["rotation", "diffusion", "splitting"];

/// A heat problem with a known smooth solution on `[-1, 1]²`, unit
/// diffusivity and a source derived by hand from `u`.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub u: SpaceTimeFn,
    pub grad: GradientFn,
    /// `u_t − Δu`.
    pub source: SpaceTimeFn,
    pub default_etol: f64,
    pub default_tau: f64,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("default_etol", &self.default_etol)
            .field("default_tau", &self.default_tau)
            .finish_non_exhaustive()
    }
}

impl ManufacturedCase {
    /// The boundary data `u|∂Ω`. All three solutions are below `e^-140` on
    /// the boundary of the square, so problems use homogeneous data.
    pub fn boundary_value(&self, p: [f64; 2], t: f64) -> f64 {
        (self.u)(p, t)
    }

    /// The heat problem on `[-1, 1]²` up to `t_end`.
    pub fn problem(&self, t_end: f64) -> ParabolicProblem {
        let u = self.u.clone();
        let mut p = ParabolicProblem::heat(
            Arc::new(PolygonDomain::reference_square()),
            Arc::new(move |x| u(x, 0.0)),
            t_end,
        );
        p.source = self.source.clone();
        p.exact = Some(self.u.clone());
        p.exact_gradient = Some(self.grad.clone());
        p
    }
}

/// Looks up a case by name.
pub fn make_case(name: &str) -> Result<ManufacturedCase> {
    match name {
        "rotation" => Ok(rotation()),
        "diffusion" => Ok(diffusion()),
        "splitting" => Ok(splitting()),
        _ => Err(Error::UnknownCase(name.to_string())),
    }
}

// exp(-500 (x - cx)^2) exp(-500 (y - cy)^2) with the centre on a circle of
// radius 0.3 turning once per unit time
fn rotation() -> ManufacturedCase {
    fn centre(t: f64) -> ([f64; 2], [f64; 2]) {
        let (s, c) = (2.0 * PI * t).sin_cos();
        ([0.3 * c, 0.3 * s], [-0.6 * PI * s, 0.6 * PI * c])
    }
    fn parts(p: [f64; 2], t: f64) -> (f64, f64, f64, [f64; 2]) {
        let (c, dc) = centre(t);
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        let u = (-500.0 * (dx * dx + dy * dy)).exp();
        (u, dx, dy, dc)
    }
    ManufacturedCase {
        name: "rotation",
        u: Arc::new(|p, t| parts(p, t).0),
        grad: Arc::new(|p, t| {
            let (u, dx, dy, _) = parts(p, t);
            [-1000.0 * dx * u, -1000.0 * dy * u]
        }),
        source: Arc::new(|p, t| {
            let (u, dx, dy, dc) = parts(p, t);
            let ut = 1000.0 * (dx * dc[0] + dy * dc[1]) * u;
            let lap = (1e6 * (dx * dx + dy * dy) - 2000.0) * u;
            ut - lap
        }),
        default_etol: 0.01,
        default_tau: 0.1,
    }
}

// exp(-5000 (r + 0.3 t - 0.4)^2): a ring shrinking at speed 0.3
fn diffusion() -> ManufacturedCase {
    // below this radius the value is smaller than e^-300 for t < 1.1, so the
    // cone tip of the source is harmless; the radius is clamped to keep 1/r
    // finite
    const R_MIN: f64 = 1e-12;
    fn parts(p: [f64; 2], t: f64) -> (f64, f64, f64) {
        let r = p[0].hypot(p[1]);
        let s = r + 0.3 * t - 0.4;
        ((-5000.0 * s * s).exp(), s, r)
    }
    ManufacturedCase {
        name: "diffusion",
        u: Arc::new(|p, t| parts(p, t).0),
        grad: Arc::new(|p, t| {
            let (u, s, r) = parts(p, t);
            if r < R_MIN {
                return [0.0, 0.0];
            }
            let g = -10000.0 * s * u / r;
            [g * p[0], g * p[1]]
        }),
        source: Arc::new(|p, t| {
            let (u, s, r) = parts(p, t);
            let r = r.max(R_MIN);
            let ut = -3000.0 * s * u;
            // radial Laplacian u'' + u'/r
            let lap = (1e8 * s * s - 10000.0 - 10000.0 * s / r) * u;
            ut - lap
        }),
        default_etol: 0.05,
        default_tau: 0.1,
    }
}

// two Gaussians of width 1/sqrt(600) leaving the origin along the x axis
fn splitting() -> ManufacturedCase {
    fn peaks(p: [f64; 2], t: f64) -> [(f64, f64, f64); 2] {
        [0.3 * t, -0.3 * t].map(|a| {
            let (dx, dy) = (p[0] - a, p[1]);
            ((-300.0 * (dx * dx + dy * dy)).exp(), dx, dy)
        })
    }
    ManufacturedCase {
        name: "splitting",
        u: Arc::new(|p, t| peaks(p, t).iter().map(|q| q.0).sum()),
        grad: Arc::new(|p, t| {
            peaks(p, t).iter().fold([0.0, 0.0], |g, &(u, dx, dy)| {
                [g[0] - 600.0 * dx * u, g[1] - 600.0 * dy * u]
            })
        }),
        source: Arc::new(|p, t| {
            let [(u1, dx1, dy1), (u2, dx2, dy2)] = peaks(p, t);
            let ut = 180.0 * dx1 * u1 - 180.0 * dx2 * u2;
            let lap =
                (360000.0 * (dx1 * dx1 + dy1 * dy1) - 1200.0) * u1 + (360000.0 * (dx2 * dx2 + dy2 * dy2) - 1200.0) * u2;
            ut - lap
        }),
        default_etol: 0.01,
        default_tau: 0.1,
    }
}
