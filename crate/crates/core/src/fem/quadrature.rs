/// A rule on the reference triangle in barycentric coordinates. Weights sum
/// to one and are scaled by the element area when used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
    /// Highest total polynomial degree integrated exactly.
    pub degree: usize,
}

#[allow(clippy::excessive_precision)]
const A1: f64 = 0.445_948_490_915_964_886_32;
const B1: f64 = 1.0 - 2.0 * A1;
#[allow(clippy::excessive_precision)]
const A2: f64 = 0.091_576_213_509_770_743_46;
const B2: f64 = 1.0 - 2.0 * A2;
#[allow(clippy::excessive_precision)]
const W1: f64 = 0.223_381_589_678_011_465_7;
#[allow(clippy::excessive_precision)]
const W2: f64 = 0.109_951_743_655_321_867_64;

/// Six-point symmetric rule of degree 4 (Dunavant).
pub const DEGREE_4: QuadratureRule = QuadratureRule {
    points: &[
        [B1, A1, A1],
        [A1, B1, A1],
        [A1, A1, B1],
        [B2, A2, A2],
        [A2, B2, A2],
        [A2, A2, B2],
    ],
    weights: &[W1, W1, W1, W2, W2, W2],
    degree: 4,
};

/// Centroid rule, exact for linear polynomials.
pub const CENTROID: QuadratureRule = QuadratureRule {
    points: &[[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
    weights: &[1.0],
    degree: 1,
};

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical coordinates of the rule's points on triangle `tri`.
    pub fn map(&self, tri: &[[f64; 2]; 3]) -> impl Iterator<Item = [f64; 2]> + '_ {
        let tri = *tri;
        self.points.iter().map(move |l| {
            [
                l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
            ]
        })
    }
}
