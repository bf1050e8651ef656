use std::sync::Arc;
use std::time::Instant;

use log::{debug, info, warn};

use super::powerlaw::{compute_itero, fit_power_law, predict_nov};
use super::records::{AdaptRecord, IterationRecord, RecordSink};
use super::{AdaptConfig, FIT_ITERATION};
use crate::error::{Error, Result};
use crate::fem::{
    backward_euler_step, integrate_gradient_error, l2_project, FeFunction, FnField, ParabolicProblem, Previous,
    ScalarField,
};
use crate::mesh::{generate_mesh, ElementField, Mesh, MeshSize, Point};
use crate::recovery::{combine_estimators, estimate, previous_estimator_on_current_mesh, Estimate};
use crate::sizefield::{size_field, SizeFieldInput};
use crate::surrogate::{init_net, layer_dims, train, TrainingData};

/// Final mesh and solution of an adaptive loop with its trace.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub mesh: Arc<Mesh>,
    pub solution: FeFunction,
    pub record: AdaptRecord,
}

/// The uniform starting mesh shared by every step.
pub fn initial_mesh(problem: &ParabolicProblem, cfg: &AdaptConfig) -> Result<Arc<Mesh>> {
    let mesh = generate_mesh(&problem.domain, MeshSize::Uniform(cfg.initial_h), &cfg.generator)?;
    Ok(Arc::new(mesh))
}

/// Runs at most `cfg.max_iters` passes of solve/estimate/size/generate
/// starting from `start`.
fn size_field_loop(
    start: &Arc<Mesh>,
    cfg: &AdaptConfig,
    mut solve: impl FnMut(&Arc<Mesh>) -> Result<(FeFunction, Estimate)>,
    grad_exact: Option<&dyn Fn(Point) -> [f64; 2]>,
) -> Result<(Arc<Mesh>, FeFunction, Vec<IterationRecord>, bool)> {
    let mut mesh = start.clone();
    let mut trace: Vec<IterationRecord> = Vec::with_capacity(cfg.max_iters);
    for k in 1..=cfg.max_iters {
        let clock = Instant::now();
        let (u, est) = solve(&mesh)?;
        if !est.global.is_finite() {
            return Err(Error::NonFinite("global estimator"));
        }
        let grad_error = grad_exact.map(|g| integrate_gradient_error(&u, g));
        let mut rec = IterationRecord {
            k,
            nov: mesh.nov(),
            eta: est.global,
            itero: 0,
            wall_ms: 0,
            grad_error,
        };
        debug!("iteration {k}: NOV {}, estimator {:.3e}", mesh.nov(), est.global);
        let done = est.global <= cfg.etol;
        if done || k == cfg.max_iters {
            if !done {
                warn!(
                    "stopped at the iteration cap with estimator {:.3e} > {:.3e}",
                    est.global, cfg.etol
                );
            }
            rec.wall_ms = clock.elapsed().as_millis() as u64;
            trace.push(rec);
            return Ok((mesh, u, trace, done));
        }
        let mut itero = 1;
        if k == FIT_ITERATION {
            let samples: Vec<(f64, f64)> = trace[2..]
                .iter()
                .map(|r| (r.eta, r.nov as f64))
                .chain(std::iter::once((est.global, mesh.nov() as f64)))
                .collect();
            match fit_power_law(&samples).and_then(|fit| predict_nov(&fit, cfg.etol).map(|n| (fit, n))) {
                Ok((fit, n)) => {
                    itero = compute_itero(n, mesh.nov());
                    info!(
                        "power-law fit c={:.3e} p={:.3}: target NOV {n}, iteRO {itero}",
                        fit.c, fit.p
                    );
                }
                Err(e) => warn!("no NOV prediction ({e}); using iteRO = 1"),
            }
        }
        rec.itero = itero;
        let edges = ElementField::new(mesh.clone(), mesh.avg_edges())?;
        let size = size_field(
            &SizeFieldInput {
                estimators: &est.local,
                avg_edges: &edges,
                itero,
                dim: 2,
                theta_r: cfg.theta_r,
            },
            &mesh,
        )?;
        mesh = Arc::new(generate_mesh(mesh.domain(), MeshSize::Field(&size), &cfg.generator)?);
        rec.wall_ms = clock.elapsed().as_millis() as u64;
        trace.push(rec);
    }
    unreachable!("the loop returns at the iteration cap")
}

fn exact_gradient_at(problem: &ParabolicProblem, t: f64) -> Option<impl Fn(Point) -> [f64; 2] + '_> {
    problem.exact_gradient.as_ref().map(move |g| move |p: Point| g(p, t))
}

/// Initial loop: project `u0`, estimate, refine until the tolerance or the
/// iteration cap.
pub fn adapt_initial(problem: &ParabolicProblem, cfg: &AdaptConfig, start: &Arc<Mesh>) -> Result<StepOutcome> {
    let u0 = problem.initial.clone();
    let field = FnField(move |p| u0(p));
    let grad = exact_gradient_at(problem, 0.0);
    let (mesh, solution, iterations, converged) = size_field_loop(
        start,
        cfg,
        |mesh| {
            let u = l2_project(mesh, &field, &cfg.solver)?;
            let est = estimate(&u)?;
            Ok((u, est))
        },
        grad.as_ref().map(|g| g as &dyn Fn(Point) -> [f64; 2]),
    )?;
    Ok(StepOutcome {
        mesh,
        solution,
        record: AdaptRecord {
            step: 0,
            time: 0.0,
            iterations,
            train: None,
            converged,
        },
    })
}

/// One time step from the shared initial mesh, with the surrogate of the
/// previous level as data and the combined two-level estimator.
pub fn adapt_step(
    problem: &ParabolicProblem,
    step: usize,
    t: f64,
    previous: &dyn ScalarField,
    cfg: &AdaptConfig,
    start: &Arc<Mesh>,
) -> Result<StepOutcome> {
    let grad = exact_gradient_at(problem, t);
    let (mesh, solution, iterations, converged) = size_field_loop(
        start,
        cfg,
        |mesh| {
            let u = backward_euler_step(mesh, problem, cfg.tau, t, Previous::Field(previous), &cfg.solver)?;
            let current = estimate(&u)?;
            let prev = previous_estimator_on_current_mesh(previous, mesh)?;
            let combined = combine_estimators(&current.local, &prev)?;
            Ok((u, combined))
        },
        grad.as_ref().map(|g| g as &dyn Fn(Point) -> [f64; 2]),
    )?;
    Ok(StepOutcome {
        mesh,
        solution,
        record: AdaptRecord {
            step,
            time: t,
            iterations,
            train: None,
            converged,
        },
    })
}

/// Marches from 0 to `cfg.t_end`: initial loop, then per step LEARN (warm
/// started after the first fit) and the adaptive step. Records are passed to
/// `sink` as soon as they are complete and also returned.
pub fn run(problem: &ParabolicProblem, cfg: &AdaptConfig, sink: &mut dyn RecordSink) -> Result<Vec<AdaptRecord>> {
    cfg.validate()?;
    let start = initial_mesh(problem, cfg)?;
    let mut records = Vec::new();
    let init = adapt_initial(problem, cfg, &start)?;
    info!(
        "t=0: {} iterations, final NOV {}",
        init.record.iterations.len(),
        init.record.final_nov()
    );
    sink.record(&init.record)?;
    records.push(init.record);

    let dims = layer_dims(cfg.train.hidden_layers, cfg.train.width);
    let mut net = init_net(&dims, cfg.train.seed, problem.domain.clone())?;
    let mut previous = init.solution;
    for n in 1..=cfg.num_steps() {
        let t_prev = (n - 1) as f64 * cfg.tau;
        let t = n as f64 * cfg.tau;
        net.set_lift(
            problem
                .dirichlet
                .clone()
                .map(|g| Arc::new(move |p: Point| g(p, t_prev)) as Arc<dyn Fn(Point) -> f64 + Send + Sync>),
        );
        let data = TrainingData::from_fe(&net, &previous);
        let report = train(&mut net, &data, &cfg.train, n > 1)?;
        info!(
            "step {n}: trained with {} Adam epochs and {} L-BFGS iterations, loss {:.3e}",
            report.adam_epochs, report.lbfgs_iters, report.final_loss
        );
        let mut out = adapt_step(problem, n, t, &net, cfg, &start)?;
        out.record.train = Some(report);
        info!(
            "step {n}: {} iterations, final NOV {}, estimator {:.3e}",
            out.record.iterations.len(),
            out.record.final_nov(),
            out.record.last().eta
        );
        sink.record(&out.record)?;
        records.push(out.record);
        previous = out.solution;
    }
    Ok(records)
}
