//! Adaptive drivers: the surrogate-enhanced size-field loop and the
//! bisection baseline.

mod baseline;
mod driver;
mod powerlaw;
mod records;

use crate::error::{Error, Result};
use crate::fem::SolverConfig;
use crate::mesh::GeneratorConfig;
use crate::surrogate::TrainConfig;

pub use crate::mesh::bisect_refine;
pub use baseline::{check_nesting, dorfler_mark, nested_interpolate, run_baseline};
pub use driver::{adapt_initial, adapt_step, initial_mesh, run, StepOutcome};
pub use powerlaw::{compute_itero, fit_power_law, predict_nov, PowerLawFit};
pub use records::{read_records, write_records, AdaptRecord, CsvSink, IterationRecord, RecordSink, RECORDS_HEADER};

/// Iteration cap of the size-field loop.
pub const MAX_ITERS: usize = 7;

/// Iteration at which the power-law fit sets `iteRO`.
pub const FIT_ITERATION: usize = 5;

#[derive(Debug, Clone)]
pub struct AdaptConfig {
    /// Tolerance on the global estimator.
    pub etol: f64,
    pub tau: f64,
    pub t_end: f64,
    /// Mark ratio of the size field.
    pub theta_r: f64,
    pub max_iters: usize,
    /// Target edge length of the uniform initial mesh.
    pub initial_h: f64,
    /// Dörfler fraction of the baseline.
    pub theta_d: f64,
    pub baseline_max_iters: usize,
    /// The baseline stops refining once its mesh has this many vertices.
    pub baseline_max_vertices: usize,
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub solver: SolverConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            etol: 0.01,
            tau: 0.1,
            t_end: 0.3,
            theta_r: 0.5,
            max_iters: MAX_ITERS,
            initial_h: 0.25,
            theta_d: 0.5,
            baseline_max_iters: 40,
            baseline_max_vertices: 1_000_000,
            generator: GeneratorConfig::default(),
            train: TrainConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.into())) };
        check(self.etol > 0.0, "etol must be positive")?;
        check(self.tau > 0.0, "tau must be positive")?;
        check(self.t_end >= 0.0, "t_end must be non-negative")?;
        check(self.theta_r > 0.0 && self.theta_r <= 1.0, "theta_r must lie in (0, 1]")?;
        check(self.theta_d > 0.0 && self.theta_d <= 1.0, "theta_d must lie in (0, 1]")?;
        check(self.max_iters == MAX_ITERS, "max_iters is fixed at 7")?;
        check(self.initial_h > 0.0, "initial_h must be positive")?;
        check(self.baseline_max_iters > 0, "baseline_max_iters must be positive")?;
        check(self.baseline_max_vertices > 0, "baseline_max_vertices must be positive")?;
        check(self.solver.tol > 0.0, "solver.tol must be positive")?;
        self.train.validate()
    }

    /// Number of time steps to reach `t_end`.
    pub fn num_steps(&self) -> usize {
        ((self.t_end / self.tau) - 1e-9).ceil().max(0.0) as usize
    }
}
