//! Bisection h-AFEM baseline: every step starts from the previous step's
//! final mesh, interpolates the old solution onto each refinement, marks
//! with the Dörfler criterion and bisects. Refine only.

use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};

use super::records::{AdaptRecord, IterationRecord, RecordSink};
use super::{initial_mesh, AdaptConfig};
use crate::error::{Error, Result};
use crate::fem::{
    backward_euler_step, integrate_gradient_error, l2_project, FeFunction, FnField, ParabolicProblem, Previous,
};
use crate::mesh::refine::with_longest_edge_refinement;
use crate::mesh::{bisect_refine, Ancestry, Mesh, Point};
use crate::recovery::{estimate, Estimate};

/// Smallest set of elements, taken in order of decreasing estimator (ties by
/// index), whose squared estimators reach `theta` of the total.
pub fn dorfler_mark(eta: &[f64], theta: f64) -> Vec<usize> {
    let sq: Vec<f64> = eta.iter().map(|e| e * e).collect();
    let total: f64 = sq.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
    let mut cum = 0.0;
    let mut marked = Vec::new();
    for i in order {
        if cum >= theta * total * (1.0 - 1e-12) {
            break;
        }
        cum += sq[i];
        marked.push(i);
    }
    marked
}

/// Interpolates a coarse P1 function onto a mesh produced from its mesh by
/// [`bisect_refine`]: old vertices keep their values, midpoints take the
/// mean of their parent edge.
pub fn nested_interpolate(coarse: &FeFunction, fine: &Arc<Mesh>, ancestry: &Ancestry) -> Result<FeFunction> {
    if coarse.mesh().nov() != ancestry.coarse_nov || fine.nov() != ancestry.coarse_nov + ancestry.parents.len() {
        return Err(Error::MeshMismatch);
    }
    let mut values = coarse.values().to_vec();
    values.reserve(ancestry.parents.len());
    for &(a, b) in &ancestry.parents {
        if a >= values.len() || b >= values.len() {
            return Err(Error::InvalidMesh(format!("parent edge ({a}, {b}) is not yet defined")));
        }
        values.push(0.5 * (values[a] + values[b]));
    }
    FeFunction::new(fine.clone(), values)
}

/// Nesting invariant: old vertices are unchanged and every new vertex is the
/// midpoint of an edge of the coarse mesh.
pub fn check_nesting(coarse: &Mesh, fine: &Mesh, ancestry: &Ancestry) -> Result<()> {
    if fine.nov() != ancestry.coarse_nov + ancestry.parents.len() || coarse.nov() != ancestry.coarse_nov {
        return Err(Error::MeshMismatch);
    }
    if fine.vertices()[..coarse.nov()] != *coarse.vertices() {
        return Err(Error::InvalidMesh("coarse vertices moved".into()));
    }
    let mut edges = std::collections::HashSet::new();
    for e in coarse.elements() {
        for i in 0..3 {
            let (a, b) = (e[i], e[(i + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    for (i, &(a, b)) in ancestry.parents.iter().enumerate() {
        if !edges.contains(&(a.min(b), a.max(b))) {
            return Err(Error::InvalidMesh(format!(
                "vertex {} has parent ({a}, {b}) outside the coarse mesh",
                coarse.nov() + i
            )));
        }
        let (pa, pb) = (coarse.vertices()[a], coarse.vertices()[b]);
        let p = fine.vertices()[coarse.nov() + i];
        if p != [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])] {
            return Err(Error::InvalidMesh(format!(
                "vertex {} is not its parent edge midpoint",
                coarse.nov() + i
            )));
        }
    }
    Ok(())
}

fn refine(mesh: &Arc<Mesh>, est: &Estimate, theta: f64) -> Result<(Arc<Mesh>, Ancestry)> {
    let marked = dorfler_mark(est.local.values(), theta);
    let (fine, ancestry) = bisect_refine(mesh, &marked)?;
    fine.check_conforming()?;
    check_nesting(mesh, &fine, &ancestry)?;
    Ok((Arc::new(fine), ancestry))
}

// Bisection never coarsens, so the mesh only grows over the run.
fn out_of_budget(k: usize, mesh: &Mesh, cfg: &AdaptConfig) -> bool {
    k == cfg.baseline_max_iters || mesh.nov() >= cfg.baseline_max_vertices
}

/// Runs the bisection baseline from 0 to `cfg.t_end`. At `t = 0` the initial
/// data is projected on each refinement; later steps interpolate the
/// previous solution through the refinement chain.
pub fn run_baseline(
    problem: &ParabolicProblem,
    cfg: &AdaptConfig,
    sink: &mut dyn RecordSink,
) -> Result<Vec<AdaptRecord>> {
    cfg.validate()?;
    let start = initial_mesh(problem, cfg)?;
    let mut mesh = Arc::new(with_longest_edge_refinement(&start));
    let mut records = Vec::new();

    let u0 = problem.initial.clone();
    let field = FnField(move |p| u0(p));
    let mut trace = Vec::new();
    let mut solution;
    let mut converged = false;
    let grad0 = problem.exact_gradient.clone();
    loop {
        let clock = Instant::now();
        let u = l2_project(&mesh, &field, &cfg.solver)?;
        let est = estimate(&u)?;
        let k = trace.len() + 1;
        converged |= est.global <= cfg.etol;
        let stop = converged || out_of_budget(k, &mesh, cfg);
        let grad_error = grad0.as_ref().map(|g| integrate_gradient_error(&u, &|p| g(p, 0.0)));
        solution = u;
        if !stop {
            mesh = refine(&mesh, &est, cfg.theta_d)?.0;
        }
        trace.push(IterationRecord {
            k,
            nov: solution.mesh().nov(),
            eta: est.global,
            itero: 0,
            wall_ms: clock.elapsed().as_millis() as u64,
            grad_error,
        });
        if stop {
            break;
        }
    }
    let rec = AdaptRecord {
        step: 0,
        time: 0.0,
        iterations: trace,
        train: None,
        converged,
    };
    info!(
        "baseline t=0: {} iterations, final NOV {}",
        rec.iterations.len(),
        rec.final_nov()
    );
    sink.record(&rec)?;
    records.push(rec);

    for n in 1..=cfg.num_steps() {
        let t = n as f64 * cfg.tau;
        let mut previous = solution.clone();
        let mut trace = Vec::new();
        let mut converged = false;
        loop {
            let clock = Instant::now();
            let u = backward_euler_step(&mesh, problem, cfg.tau, t, Previous::Fe(&previous), &cfg.solver)?;
            let est = estimate(&u)?;
            let k = trace.len() + 1;
            converged |= est.global <= cfg.etol;
            let stop = converged || out_of_budget(k, &mesh, cfg);
            let grad_error = problem
                .exact_gradient
                .as_ref()
                .map(|g| integrate_gradient_error(&u, &|p: Point| g(p, t)));
            trace.push(IterationRecord {
                k,
                nov: mesh.nov(),
                eta: est.global,
                itero: 0,
                wall_ms: 0,
                grad_error,
            });
            solution = u;
            if stop {
                if !converged {
                    warn!(
                        "baseline step {n} hit the iteration cap with estimator {:.3e}",
                        est.global
                    );
                }
                trace.last_mut().expect("pushed above").wall_ms = clock.elapsed().as_millis() as u64;
                break;
            }
            let (fine, ancestry) = refine(&mesh, &est, cfg.theta_d)?;
            previous = nested_interpolate(&previous, &fine, &ancestry)?;
            mesh = fine;
            trace.last_mut().expect("pushed above").wall_ms = clock.elapsed().as_millis() as u64;
        }
        let rec = AdaptRecord {
            step: n,
            time: t,
            iterations: trace,
            train: None,
            converged,
        };
        info!(
            "baseline step {n}: {} iterations, final NOV {}",
            rec.iterations.len(),
            rec.final_nov()
        );
        sink.record(&rec)?;
        records.push(rec);
    }
    Ok(records)
}
