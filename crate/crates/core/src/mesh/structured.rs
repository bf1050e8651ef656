use std::sync::Arc;

use crate::error::{Error, Result};

use super::{Mesh, PolygonDomain};

impl Mesh {
    /// Uniform `nx × ny` grid over a rectangle, every cell cut along the
    /// diagonal from its lower-left to its upper-right corner.
    pub fn structured_rectangle(x0: f64, y0: f64, x1: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh("grid needs at least one cell".into()));
        }
        let domain = Arc::new(PolygonDomain::rectangle(x0, y0, x1, y1)?);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    x0 + (x1 - x0) * i as f64 / nx as f64,
                    y0 + (y1 - y0) * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                elements.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self::new(vertices, elements, domain)
    }

    /// The unit square split along its diagonal:
    /// `v0=(0,0) v1=(1,0) v2=(1,1) v3=(0,1)`, `K0=(v0,v1,v2)`, `K1=(v0,v2,v3)`.
    pub fn two_triangle_unit_square() -> Self {
        Self::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            Arc::new(PolygonDomain::unit_square()),
        )
        .expect("two-triangle square is valid")
    }

    /// The unit square cut by both diagonals; vertex 4 is the centre.
    pub fn crisscross_unit_square() -> Self {
        Self::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]],
            vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
            Arc::new(PolygonDomain::unit_square()),
        )
        .expect("crisscross square is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_grid_counts() {
        let m = Mesh::structured_rectangle(-1.0, -1.0, 1.0, 1.0, 8, 8).unwrap();
        assert_eq!(m.nov(), 81);
        assert_eq!(m.num_elements(), 128);
        assert_eq!(m.boundary_vertices().len(), 32);
        m.check_conforming().unwrap();
    }

    #[test]
    fn crisscross_has_one_interior_vertex() {
        let m = Mesh::crisscross_unit_square();
        assert_eq!(m.boundary_vertices(), &[0, 1, 2, 3]);
        assert!(!m.is_boundary(4));
    }
}
