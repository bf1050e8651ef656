//! Weighted-average gradient recovery and recovery-based error estimators.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{FeFunction, ScalarField};
use crate::mesh::{ElementField, Mesh};

/// Recovered nodal gradient, a vector-valued P1 field.
#[derive(Debug, Clone)]
pub struct RecoveredGradient {
    mesh: Arc<Mesh>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl RecoveredGradient {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn at(&self, v: usize) -> [f64; 2] {
        [self.gx[v], self.gy[v]]
    }
}

/// Local estimators together with their l2 sum.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub local: ElementField,
    pub global: f64,
}

impl Estimate {
    fn from_local(mesh: Arc<Mesh>, local: Vec<f64>) -> Result<Self> {
        let global = local.iter().map(|e| e * e).sum::<f64>().sqrt();
        Ok(Self {
            local: ElementField::new(mesh, local)?,
            global,
        })
    }
}

/// Patch weights `(1/|K_i|) / Σ_j (1/|K_j|)` for each vertex, aligned with
/// [`Mesh::node_to_cell`].
pub fn recovery_weights(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n2c = mesh.node_to_cell();
    (0..mesh.nov())
        .map(|v| {
            let inv: Vec<f64> = n2c.cells(v).iter().map(|&k| 1.0 / mesh.area(k)).collect();
            let total: f64 = inv.iter().sum();
            inv.into_iter().map(|w| w / total).collect()
        })
        .collect()
}

/// Averages the elementwise gradients of `u` at every vertex, weighting each
/// element by its inverse area.
pub fn recover_gradient(u: &FeFunction) -> RecoveredGradient {
    let mesh = u.mesh();
    let n2c = mesh.node_to_cell();
    let grads: Vec<[f64; 2]> = (0..mesh.num_elements()).map(|k| u.element_gradient(k)).collect();
    let weights = recovery_weights(mesh);
    let mut gx = vec![0.0; mesh.nov()];
    let mut gy = vec![0.0; mesh.nov()];
    for v in 0..mesh.nov() {
        for (&k, w) in n2c.cells(v).iter().zip(&weights[v]) {
            gx[v] += w * grads[k][0];
            gy[v] += w * grads[k][1];
        }
    }
    RecoveredGradient {
        mesh: mesh.clone(),
        gx,
        gy,
    }
}

/// `∫_K e²` for a linear `e` with vertex values `e`.
fn linear_square_integral(area: f64, e: [f64; 3]) -> f64 {
    let sq = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
    let cross = e[0] * e[1] + e[1] * e[2] + e[2] * e[0];
    area / 6.0 * (sq + cross)
}

/// Elementwise `‖G(∇u_h) − ∇u_h‖_{0,K}` and their l2 sum.
pub fn estimate(u: &FeFunction) -> Result<Estimate> {
    let mesh = u.mesh();
    let g = recover_gradient(u);
    let local: Vec<f64> = mesh
        .elements()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let gh = u.element_gradient(k);
            let ex = [g.gx[e[0]] - gh[0], g.gx[e[1]] - gh[0], g.gx[e[2]] - gh[0]];
            let ey = [g.gy[e[0]] - gh[1], g.gy[e[1]] - gh[1], g.gy[e[2]] - gh[1]];
            let area = mesh.area(k);
            (linear_square_integral(area, ex) + linear_square_integral(area, ey))
                .max(0.0)
                .sqrt()
        })
        .collect();
    Estimate::from_local(mesh.clone(), local)
}

/// Elementwise `(a + b + |a − b|) / 2` of two estimators on the same mesh.
/// That is `max(a, b)`, which is what gets computed: the sum form can be
/// one ulp off after rounding.
pub fn combine_estimators(current: &ElementField, previous: &ElementField) -> Result<Estimate> {
    if !same_mesh(current.mesh(), previous.mesh()) {
        return Err(Error::MeshMismatch);
    }
    let local = current
        .values()
        .iter()
        .zip(previous.values())
        .map(|(&a, &b)| a.max(b))
        .collect();
    Estimate::from_local(current.mesh().clone(), local)
}

/// Estimator of the previous time level on the current mesh: the nodal
/// interpolant of the surrogate is estimated like any FE solution.
pub fn previous_estimator_on_current_mesh(surrogate: &dyn ScalarField, mesh: &Arc<Mesh>) -> Result<ElementField> {
    let u = FeFunction::interpolate_field(mesh.clone(), surrogate)?;
    Ok(estimate(&u)?.local)
}

fn same_mesh(a: &Arc<Mesh>, b: &Arc<Mesh>) -> bool {
    Arc::ptr_eq(a, b) || (a.elements() == b.elements() && a.vertices() == b.vertices())
}
