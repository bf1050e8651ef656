use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Anything that can be sampled at a batch of points: analytic functions,
/// finite element functions, neural surrogates.
pub trait ScalarField: Send + Sync {
    fn eval_points(&self, points: &[Point]) -> Result<Vec<f64>>;
}

/// Adapts a plain closure to [`ScalarField`].
pub struct FnField<F>(pub F);

impl<F> ScalarField for FnField<F>
where
    F: Fn(Point) -> f64 + Send + Sync,
{
    fn eval_points(&self, points: &[Point]) -> Result<Vec<f64>> {
        let out: Vec<f64> = points.iter().map(|&p| (self.0)(p)).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("closure returned a non-finite value".into()));
        }
        Ok(out)
    }
}

/// Continuous piecewise linear function given by its nodal values.
#[derive(Debug, Clone)]
pub struct FeFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nov() {
            return Err(Error::LengthMismatch {
                expected: mesh.nov(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nodal values"));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.nov();
        Self {
            mesh,
            values: vec![0.0; n],
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = mesh.vertices().iter().map(|&p| f(p)).collect();
        Self::new(mesh, values)
    }

    /// Nodal interpolant of a batched field.
    pub fn interpolate_field(mesh: Arc<Mesh>, f: &dyn ScalarField) -> Result<Self> {
        let values = f.eval_points(mesh.vertices())?;
        Self::new(mesh, values)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Constant gradient on element `k`.
    pub fn element_gradient(&self, k: usize) -> [f64; 2] {
        let e = self.mesh.elements()[k];
        let g = self.mesh.basis_gradients(k);
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += self.values[e[i]] * g[i][0];
            out[1] += self.values[e[i]] * g[i][1];
        }
        out
    }

    /// Value inside element `k` at barycentric coordinates `bary`.
    pub fn eval_in(&self, k: usize, bary: [f64; 3]) -> f64 {
        let e = self.mesh.elements()[k];
        bary[0] * self.values[e[0]] + bary[1] * self.values[e[1]] + bary[2] * self.values[e[2]]
    }

    /// Point evaluation by element search; `None` outside the mesh.
    pub fn eval(&self, x: Point) -> Option<f64> {
        self.mesh.locate(x).map(|(k, l)| self.eval_in(k, l))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }
}

impl ScalarField for FeFunction {
    fn eval_points(&self, points: &[Point]) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|&p| {
                self.eval(p)
                    .ok_or_else(|| Error::Evaluation(format!("point ({}, {}) is outside the mesh", p[0], p[1])))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_linear_interpolant_is_exact() {
        let m = Arc::new(Mesh::structured_rectangle(-1.0, -1.0, 1.0, 1.0, 3, 4).unwrap());
        let u = FeFunction::interpolate(m.clone(), |p| 2.0 * p[0] - 3.0 * p[1] + 1.0).unwrap();
        for k in 0..m.num_elements() {
            let g = u.element_gradient(k);
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
        }
        let v = u.eval([0.1, 0.2]).unwrap();
        assert!((v - (0.2 - 0.6 + 1.0)).abs() < 1e-12);
        assert!(u.eval([3.0, 0.0]).is_none());
    }

    #[test]
    fn wrong_length_is_rejected() {
        let m = Arc::new(Mesh::two_triangle_unit_square());
        assert!(matches!(
            FeFunction::new(m, vec![0.0; 3]),
            Err(Error::LengthMismatch { expected: 4, got: 3 })
        ));
    }
}
