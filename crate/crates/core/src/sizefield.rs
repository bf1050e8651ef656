//! Vertex-density mesh size field.
//!
//! Element sizes and errors are averaged to the vertices, a density
//! `ρ = E² / h^d` picks the smallest set of vertices carrying a fraction
//! `θ_r` of the total density, and those vertices get their size shrunk by
//! `(N_v/k + 1)^{-iteRO/d}`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{ElementField, Mesh, VertexField};

/// Relative slack on the marking threshold. Cumulative sums that equal the
/// threshold in exact arithmetic must not miss it through rounding.
const MARK_SLACK: f64 = 1e-12;

/// Sizes are never pushed below this fraction of the domain diameter.
pub const SIZE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SizeFieldInput<'a> {
    pub estimators: &'a ElementField,
    pub avg_edges: &'a ElementField,
    pub itero: u32,
    /// Spatial dimension, 2 or 3.
    pub dim: u32,
    pub theta_r: f64,
}

/// Mean of an element field over the elements incident to each vertex.
pub fn vertex_averages(field: &ElementField) -> Result<VertexField> {
    let mesh = field.mesh();
    let n2c = mesh.node_to_cell();
    let values = (0..mesh.nov())
        .map(|v| {
            let cells = n2c.cells(v);
            if cells.is_empty() {
                return Err(Error::IsolatedVertex(v));
            }
            Ok(cells.iter().map(|&k| field.values()[k]).sum::<f64>() / cells.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    VertexField::new(mesh.clone(), values)
}

/// `ρ_i = E_i² / h_i^d`.
pub fn node_density(h: &VertexField, e: &VertexField, dim: u32) -> Result<VertexField> {
    if h.values().len() != e.values().len() {
        return Err(Error::LengthMismatch {
            expected: h.values().len(),
            got: e.values().len(),
        });
    }
    let values = h
        .values()
        .iter()
        .zip(e.values())
        .enumerate()
        .map(|(i, (&hi, &ei))| {
            if hi <= 0.0 {
                return Err(Error::NonPositiveSize { vertex: i, value: hi });
            }
            Ok(ei * ei / hi.powi(dim as i32))
        })
        .collect::<Result<Vec<_>>>()?;
    VertexField::new(h.mesh().clone(), values)
}

/// Smallest prefix of the vertices sorted by descending density (ties by
/// ascending index) whose density sum reaches `θ_r` of the total. Returned
/// in that sorted order.
pub fn select_marked(rho: &[f64], theta_r: f64) -> Vec<usize> {
    assert!(theta_r > 0.0 && theta_r <= 1.0, "mark ratio must lie in (0, 1]");
    let total: f64 = rho.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    let threshold = theta_r * total * (1.0 - MARK_SLACK);
    let mut cum = 0.0;
    let mut marked = Vec::new();
    for i in order {
        if cum >= threshold || rho[i] <= 0.0 {
            break;
        }
        cum += rho[i];
        marked.push(i);
    }
    marked
}

/// `(N_v/k + 1)^{-1/d}` on the marked vertices, 1 elsewhere.
pub fn scale_factors(marked: &[usize], nv: usize, dim: u32) -> Vec<f64> {
    let mut scale = vec![1.0; nv];
    if marked.is_empty() {
        return scale;
    }
    let s = (nv as f64 / marked.len() as f64 + 1.0).powf(-1.0 / dim as f64);
    for &i in marked {
        scale[i] = s;
    }
    scale
}

/// Target vertex sizes `h_v ⊙ Scale^iteRO`, floored at
/// [`SIZE_FLOOR`] times the domain diameter.
pub fn size_field(input: &SizeFieldInput<'_>, mesh: &Arc<Mesh>) -> Result<VertexField> {
    if !(input.theta_r > 0.0 && input.theta_r <= 1.0) {
        return Err(Error::Config(format!("mark ratio {} outside (0, 1]", input.theta_r)));
    }
    if input.dim != 2 && input.dim != 3 {
        return Err(Error::Config(format!("dimension {} is not 2 or 3", input.dim)));
    }
    if input.estimators.values().len() != mesh.num_elements() || input.avg_edges.values().len() != mesh.num_elements() {
        return Err(Error::MeshMismatch);
    }
    if input.estimators.values().iter().any(|&e| e < 0.0) {
        return Err(Error::Config("estimators must be non-negative".into()));
    }
    let h_v = vertex_averages(input.avg_edges)?;
    let e_v = vertex_averages(input.estimators)?;
    let rho = node_density(&h_v, &e_v, input.dim)?;
    let marked = select_marked(rho.values(), input.theta_r);
    let scale = scale_factors(&marked, mesh.nov(), input.dim);
    let floor = SIZE_FLOOR * mesh.domain().diameter();
    let values = h_v
        .values()
        .iter()
        .zip(&scale)
        .map(|(&h, &s)| (h * s.powi(input.itero as i32)).max(floor))
        .collect();
    VertexField::new(mesh.clone(), values)
}
