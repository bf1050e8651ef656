//! P1 finite elements: assembly, projection, one backward Euler step and
//! error norms.

mod function;
pub mod quadrature;
pub mod sparse;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, PolygonDomain};

pub use function::{FeFunction, FnField, ScalarField};
pub use quadrature::{QuadratureRule, CENTROID, DEGREE_4};
pub use sparse::{solve_spd, Solution, SolverConfig, SolverKind, SparseSystem};

pub type SpaceFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

/// `u_t - div(a grad u) = f` on a polygon with Dirichlet data on the whole
/// boundary.
#[derive(Clone)]
pub struct ParabolicProblem {
    pub domain: Arc<PolygonDomain>,
    pub coefficient: SpaceFn,
    /// Stated positive bounds `(min, max)` on the coefficient.
    pub coefficient_bounds: (f64, f64),
    pub source: SpaceTimeFn,
    /// Boundary data; `None` means homogeneous.
    pub dirichlet: Option<SpaceTimeFn>,
    pub initial: SpaceFn,
    pub final_time: f64,
    pub exact: Option<SpaceTimeFn>,
    pub exact_gradient: Option<GradientFn>,
}

impl std::fmt::Debug for ParabolicProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParabolicProblem")
            .field("domain", &self.domain)
            .field("coefficient_bounds", &self.coefficient_bounds)
            .field("homogeneous", &self.dirichlet.is_none())
            .field("final_time", &self.final_time)
            .finish_non_exhaustive()
    }
}

impl ParabolicProblem {
    /// Heat equation with `a = 1`, `f = 0`, homogeneous boundary data and the
    /// given initial value.
    pub fn heat(domain: Arc<PolygonDomain>, initial: SpaceFn, final_time: f64) -> Self {
        Self {
            domain,
            coefficient: Arc::new(|_| 1.0),
            coefficient_bounds: (1.0, 1.0),
            source: Arc::new(|_, _| 0.0),
            dirichlet: None,
            initial,
            final_time,
            exact: None,
            exact_gradient: None,
        }
    }

    /// Boundary value at `x`, time `t`.
    pub fn boundary_value(&self, x: Point, t: f64) -> f64 {
        self.dirichlet.as_ref().map_or(0.0, |g| g(x, t))
    }

    /// Samples the coefficient at element centroids and checks the stated
    /// bounds.
    pub fn check_coefficient(&self, mesh: &Mesh) -> Result<()> {
        let (lo, hi) = self.coefficient_bounds;
        for k in 0..mesh.num_elements() {
            let c = mesh.element_geometry(k)?.centroid;
            let a = (self.coefficient)(c);
            if !(a > 0.0 && a >= lo * (1.0 - 1e-12) && a <= hi * (1.0 + 1e-12)) {
                return Err(Error::NonPositiveCoefficient {
                    value: a,
                    x: c[0],
                    y: c[1],
                });
            }
        }
        Ok(())
    }
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> Result<SparseSystem> {
    let mut m = SparseSystem::with_mesh_pattern(mesh);
    for (k, e) in mesh.elements().iter().enumerate() {
        let area = mesh.element_geometry(k)?.area;
        for i in 0..3 {
            for j in 0..3 {
                let v = if i == j { area / 6.0 } else { area / 12.0 };
                m.add(e[i], e[j], v);
            }
        }
    }
    Ok(m)
}

/// P1 stiffness matrix with the coefficient sampled at element centroids.
pub fn assemble_stiffness(mesh: &Mesh, a: &dyn Fn(Point) -> f64) -> Result<SparseSystem> {
    let mut s = SparseSystem::with_mesh_pattern(mesh);
    for (k, e) in mesh.elements().iter().enumerate() {
        let geo = mesh.element_geometry(k)?;
        let coef = a(geo.centroid);
        if !(coef > 0.0) {
            return Err(Error::NonPositiveCoefficient {
                value: coef,
                x: geo.centroid[0],
                y: geo.centroid[1],
            });
        }
        let g = mesh.basis_gradients(k);
        for i in 0..3 {
            for j in 0..3 {
                let v = coef * geo.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                s.add(e[i], e[j], v);
            }
        }
    }
    Ok(s)
}

/// Quadrature points of every element, element-major.
pub fn quadrature_points(mesh: &Mesh, rule: &QuadratureRule) -> Vec<Point> {
    let mut pts = Vec::with_capacity(mesh.num_elements() * rule.len());
    for k in 0..mesh.num_elements() {
        pts.extend(rule.map(&mesh.element_points(k)));
    }
    pts
}

/// `b_i = ∫ w φ_i` given `w` sampled at [`quadrature_points`].
pub fn load_from_samples(mesh: &Mesh, rule: &QuadratureRule, samples: &[f64]) -> Vec<f64> {
    assert_eq!(samples.len(), mesh.num_elements() * rule.len());
    let mut b = vec![0.0; mesh.nov()];
    for (k, e) in mesh.elements().iter().enumerate() {
        let area = mesh.area(k);
        let w = &samples[k * rule.len()..(k + 1) * rule.len()];
        for (q, (l, wt)) in rule.points.iter().zip(rule.weights).enumerate() {
            let s = area * wt * w[q];
            for i in 0..3 {
                b[e[i]] += s * l[i];
            }
        }
    }
    b
}

/// `b_i = ∫ w φ_i` with the degree-4 rule.
pub fn load_vector(mesh: &Mesh, w: &dyn ScalarField) -> Result<Vec<f64>> {
    let samples = w.eval_points(&quadrature_points(mesh, &DEGREE_4))?;
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("load integrand"));
    }
    Ok(load_from_samples(mesh, &DEGREE_4, &samples))
}

/// L2 projection onto the P1 space of `mesh`.
///
/// The Jacobi-scaled mass matrix has a condition number bounded
/// independently of `h`, so the solve is tightened to `1e-13` at little cost.
pub fn l2_project(mesh: &Arc<Mesh>, w: &dyn ScalarField, solver: &SolverConfig) -> Result<FeFunction> {
    let m = assemble_mass(mesh)?;
    let b = load_vector(mesh, w)?;
    let cfg = SolverConfig {
        tol: solver.tol.min(1e-13),
        ..*solver
    };
    let sol = solve_spd(&m, &b, &cfg)?;
    FeFunction::new(mesh.clone(), sol.x)
}

/// Data from the previous time level entering the right-hand side.
#[derive(Clone, Copy)]
pub enum Previous<'a> {
    /// A finite element function on the same mesh; integrated exactly.
    Fe(&'a FeFunction),
    /// Any point-evaluable field, integrated with the degree-4 rule.
    Field(&'a dyn ScalarField),
}

/// One backward Euler step to time `t`: solves
/// `(M + τA) u = τF + B` with `u = g(·, t)` at boundary vertices.
pub fn backward_euler_step(
    mesh: &Arc<Mesh>,
    problem: &ParabolicProblem,
    tau: f64,
    t: f64,
    previous: Previous<'_>,
    solver: &SolverConfig,
) -> Result<FeFunction> {
    assert!(tau > 0.0, "time step must be positive");
    let mass = assemble_mass(mesh)?;
    let stiff = assemble_stiffness(mesh, problem.coefficient.as_ref())?;
    let mut system = mass.add_scaled(tau, &stiff);

    let source = problem.source.clone();
    let f = FnField(move |p| source(p, t));
    let mut rhs = load_vector(mesh, &f)?;
    rhs.iter_mut().for_each(|v| *v *= tau);
    let b = match previous {
        Previous::Fe(u) => {
            if !Arc::ptr_eq(u.mesh(), mesh) && u.mesh().elements() != mesh.elements() {
                return Err(Error::MeshMismatch);
            }
            mass.mul_vec(u.values())
        }
        Previous::Field(w) => load_vector(mesh, w)?,
    };
    for (r, bi) in rhs.iter_mut().zip(&b) {
        *r += bi;
    }

    let fixed = mesh.boundary_vertices();
    let values: Vec<f64> = fixed
        .iter()
        .map(|&v| problem.boundary_value(mesh.vertices()[v], t))
        .collect();
    system.eliminate_dirichlet(&mut rhs, fixed, &values);
    let sol = solve_spd(&system, &rhs, solver)?;
    FeFunction::new(mesh.clone(), sol.x)
}

/// `‖∇u − ∇u_h‖` over the mesh with the degree-4 rule.
pub fn integrate_gradient_error(u_h: &FeFunction, grad_exact: &dyn Fn(Point) -> [f64; 2]) -> f64 {
    let mesh = u_h.mesh();
    let mut total = 0.0;
    for k in 0..mesh.num_elements() {
        let gh = u_h.element_gradient(k);
        let area = mesh.area(k);
        for (p, w) in DEGREE_4.map(&mesh.element_points(k)).zip(DEGREE_4.weights) {
            let g = grad_exact(p);
            total += area * w * ((g[0] - gh[0]).powi(2) + (g[1] - gh[1]).powi(2));
        }
    }
    total.sqrt()
}

/// `‖u − u_h‖_{L2}` with the degree-4 rule.
pub fn l2_error(u_h: &FeFunction, exact: &dyn Fn(Point) -> f64) -> f64 {
    let mesh = u_h.mesh();
    let mut total = 0.0;
    for k in 0..mesh.num_elements() {
        let area = mesh.area(k);
        for ((p, w), l) in DEGREE_4
            .map(&mesh.element_points(k))
            .zip(DEGREE_4.weights)
            .zip(DEGREE_4.points)
        {
            total += area * w * (exact(p) - u_h.eval_in(k, *l)).powi(2);
        }
    }
    total.sqrt()
}

/// `sqrt(uᵀ M u)`.
pub fn mass_norm(u: &FeFunction) -> Result<f64> {
    let m = assemble_mass(u.mesh())?;
    let mu = m.mul_vec(u.values());
    Ok(mu.iter().zip(u.values()).map(|(a, b)| a * b).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            Arc::new(PolygonDomain::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap()),
        )
        .unwrap()
    }

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::structured_rectangle(-1.0, -1.0, 1.0, 1.0, n, n).unwrap())
    }

    #[test]
    fn local_mass_of_unit_triangle() {
        let m = assemble_mass(&unit_triangle()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 / 24.0 } else { 1.0 / 24.0 };
                assert!((m.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn local_stiffness_of_unit_triangle() {
        let mesh = unit_triangle();
        let a = assemble_stiffness(&mesh, &|_| 1.0).unwrap();
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let a2 = assemble_stiffness(&mesh, &|_| 2.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - want[i][j]).abs() < 1e-15);
                assert_eq!(a2.get(i, j), 2.0 * a.get(i, j));
            }
        }
    }

    #[test]
    fn crisscross_centre_entries() {
        let mesh = Mesh::crisscross_unit_square();
        assert!((assemble_mass(&mesh).unwrap().get(4, 4) - 1.0 / 6.0).abs() < 1e-15);
        assert!((assemble_stiffness(&mesh, &|_| 1.0).unwrap().get(4, 4) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn operator_row_sums_and_symmetry() {
        let mesh = square(7);
        let m = assemble_mass(&mesh).unwrap();
        let a = assemble_stiffness(&mesh, &|p| 1.0 + p[0] * p[0]).unwrap();
        assert!((m.row_sums().iter().sum::<f64>() - 4.0).abs() < 1e-10);
        assert!(a.row_sums().iter().all(|s| s.abs() < 1e-12));
        assert!(m.asymmetry() <= 1e-13 && a.asymmetry() <= 1e-13);
    }

    #[test]
    fn non_positive_coefficient_is_rejected() {
        let mesh = unit_triangle();
        assert!(matches!(
            assemble_stiffness(&mesh, &|_| 0.0),
            Err(Error::NonPositiveCoefficient { .. })
        ));
    }

    #[test]
    fn projection_reproduces_linears() {
        let mesh = square(6);
        let cfg = SolverConfig::default();
        let one = l2_project(&mesh, &FnField(|_| 1.0), &cfg).unwrap();
        assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        let x = l2_project(&mesh, &FnField(|p: Point| p[0]), &cfg).unwrap();
        for (v, p) in x.values().iter().zip(mesh.vertices()) {
            assert!((v - p[0]).abs() < 1e-10, "{} {}", v, p[0]);
        }
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    /// Exact `∫_K λ0^a λ1^b λ2^c = 2|K| a! b! c! / (a+b+c+2)!`.
    fn barycentric_moment(area: f64, pow: [usize; 3]) -> f64 {
        2.0 * area * pow.iter().map(|&p| factorial(p)).product::<f64>() / factorial(pow.iter().sum::<usize>() + 2)
    }

    #[test]
    fn projection_of_x_squared_matches_dense_oracle() {
        let mesh = Arc::new(Mesh::two_triangle_unit_square());
        let p = l2_project(&mesh, &FnField(|p: Point| p[0] * p[0]), &SolverConfig::default()).unwrap();
        // Hand-assembled mass matrix of the two half-unit triangles.
        let mut a = [
            [1.0 / 6.0, 1.0 / 24.0, 2.0 / 24.0, 1.0 / 24.0],
            [1.0 / 24.0, 1.0 / 12.0, 1.0 / 24.0, 0.0],
            [2.0 / 24.0, 1.0 / 24.0, 1.0 / 6.0, 1.0 / 24.0],
            [1.0 / 24.0, 0.0, 1.0 / 24.0, 1.0 / 12.0],
        ];
        // x^2 φ_i = Σ_jk x_j x_k λ_j λ_k λ_i, integrated monomial by monomial.
        let mut b = [0.0; 4];
        for e in mesh.elements() {
            let xs = [
                mesh.vertices()[e[0]][0],
                mesh.vertices()[e[1]][0],
                mesh.vertices()[e[2]][0],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let mut pow = [0; 3];
                        pow[i] += 1;
                        pow[j] += 1;
                        pow[k] += 1;
                        b[e[i]] += xs[j] * xs[k] * barycentric_moment(0.5, pow);
                    }
                }
            }
        }
        let mut x = b;
        for c in 0..4 {
            for r in c + 1..4 {
                let f = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= f * a[c][k];
                }
                x[r] -= f * x[c];
            }
        }
        for c in (0..4).rev() {
            for k in c + 1..4 {
                x[c] -= a[c][k] * x[k];
            }
            x[c] /= a[c][c];
        }
        for i in 0..4 {
            assert!(
                (p.values()[i] - x[i]).abs() < 1e-10,
                "{i}: {} vs {}",
                p.values()[i],
                x[i]
            );
        }
    }

    #[test]
    fn zero_data_gives_zero_step() {
        let mesh = square(4);
        let problem = ParabolicProblem::heat(mesh.domain().clone(), Arc::new(|_| 0.0), 1.0);
        let prev = FeFunction::zeros(mesh.clone());
        let u = backward_euler_step(&mesh, &problem, 0.1, 0.1, Previous::Fe(&prev), &SolverConfig::default()).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn harmonic_linear_solution_is_reproduced() {
        let mesh = square(5);
        let mut problem = ParabolicProblem::heat(mesh.domain().clone(), Arc::new(|p| p[0]), 1.0);
        problem.dirichlet = Some(Arc::new(|p, _| p[0]));
        let prev = FeFunction::interpolate(mesh.clone(), |p| p[0]).unwrap();
        let u = backward_euler_step(&mesh, &problem, 0.3, 0.3, Previous::Fe(&prev), &SolverConfig::default()).unwrap();
        for (v, p) in u.values().iter().zip(mesh.vertices()) {
            assert!((v - p[0]).abs() < 1e-9);
        }
        let via_field = backward_euler_step(
            &mesh,
            &problem,
            0.3,
            0.3,
            Previous::Field(&FnField(|p: Point| p[0])),
            &SolverConfig::default(),
        )
        .unwrap();
        for (v, p) in via_field.values().iter().zip(mesh.vertices()) {
            assert!((v - p[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn crisscross_single_unknown() {
        let mesh = Arc::new(Mesh::crisscross_unit_square());
        let mut problem = ParabolicProblem::heat(mesh.domain().clone(), Arc::new(|_| 0.0), 1.0);
        problem.source = Arc::new(|_, _| 1.0);
        let prev = FeFunction::zeros(mesh.clone());
        for kind in [SolverKind::Cg, SolverKind::Cholesky] {
            let cfg = SolverConfig { kind, tol: 1e-12 };
            let u = backward_euler_step(&mesh, &problem, 1.0, 1.0, Previous::Fe(&prev), &cfg).unwrap();
            assert!((u.values()[4] - 0.08).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_error_of_linear_interpolant_vanishes() {
        let mesh = square(3);
        let u = FeFunction::interpolate(mesh, |p| 3.0 * p[0] - p[1]).unwrap();
        assert!(integrate_gradient_error(&u, &|_| [3.0, -1.0]) < 1e-12);
    }

    #[test]
    fn gradient_error_of_x_squared_on_two_triangles() {
        let mesh = Arc::new(Mesh::two_triangle_unit_square());
        let u = FeFunction::interpolate(mesh, |p| p[0] * p[0]).unwrap();
        // u_h = x on both triangles. K0 has vertical extent x and K1 has 1 - x,
        // so the error is ∫ (2x-1)^2 x dx + ∫ (2x-1)^2 (1-x) dx = 1/6 + 1/6.
        let want = (1.0f64 / 6.0 + 1.0 / 6.0).sqrt();
        let got = integrate_gradient_error(&u, &|p| [2.0 * p[0], 0.0]);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn gradient_error_halves_with_h() {
        let grad = |p: Point| [2.0 * p[0] * p[1].cos(), -p[0] * p[0] * p[1].sin()];
        let errs: Vec<f64> = [8, 16]
            .iter()
            .map(|&n| {
                let u = FeFunction::interpolate(square(n), |p| p[0] * p[0] * p[1].cos()).unwrap();
                integrate_gradient_error(&u, &grad)
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn energy_decays_without_data() {
        let mesh = square(6);
        let problem = ParabolicProblem::heat(mesh.domain().clone(), Arc::new(|_| 0.0), 1.0);
        let prev = FeFunction::interpolate(mesh.clone(), |p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1])).unwrap();
        let u = backward_euler_step(
            &mesh,
            &problem,
            0.05,
            0.05,
            Previous::Fe(&prev),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(mass_norm(&u).unwrap() <= mass_norm(&prev).unwrap() + 1e-10);
    }
}
