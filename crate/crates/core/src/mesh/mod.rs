//! Conforming triangle meshes, geometry queries and mesh generation.
//!
//! A [`Mesh`] is immutable once built; refinement and generation always
//! return a new mesh. Fields living on a mesh ([`ElementField`],
//! [`VertexField`]) hold an `Arc` to it so that mismatched meshes are caught
//! at the call site.

mod domain;
pub mod gmsh;
pub mod msh;
pub mod refine;
mod structured;

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use domain::PolygonDomain;
pub(crate) use domain::{dist, orient};
pub use gmsh::{
    generate_mesh, gmsh_version, write_background_field, GeneratorConfig, GeneratorKind, MeshSize, GMSH_ENV,
};
pub use msh::parse_msh;
pub use refine::{bisect_refine, fallback_refine, fallback_refine_within, Ancestry, FallbackOutcome};

/// A point in the plane.
pub type Point = [f64; 2];

/// Conforming, counter-clockwise triangulation of a [`PolygonDomain`].
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    on_boundary: Vec<bool>,
    boundary_vertices: Vec<usize>,
    domain: Arc<PolygonDomain>,
}

/// Area, centroid and mean edge length of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub centroid: Point,
    pub avg_edge: f64,
}

impl Mesh {
    /// Builds a mesh, flipping clockwise elements and deriving the boundary
    /// from edges that belong to exactly one element. The result is checked
    /// with [`Mesh::check_conforming`].
    pub fn new(vertices: Vec<Point>, mut elements: Vec<[usize; 3]>, domain: Arc<PolygonDomain>) -> Result<Self> {
        let nv = vertices.len();
        if elements.is_empty() {
            return Err(Error::InvalidMesh("no elements".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("mesh vertices"));
        }
        for (k, e) in elements.iter_mut().enumerate() {
            if e.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "element {k} references a vertex outside 0..{nv}"
                )));
            }
            if e[0] == e[1] || e[1] == e[2] || e[0] == e[2] {
                return Err(Error::InvalidMesh(format!("element {k} repeats a vertex")));
            }
            let a = orient(vertices[e[0]], vertices[e[1]], vertices[e[2]]);
            if a == 0.0 {
                return Err(Error::DegenerateElement { index: k, area: 0.0 });
            }
            if a < 0.0 {
                e.swap(1, 2);
            }
        }
        let mesh = Self::from_parts_unchecked(vertices, elements, domain);
        mesh.check_conforming()?;
        Ok(mesh)
    }

    /// Assembles a mesh from oriented parts without running the checker.
    pub(crate) fn from_parts_unchecked(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        domain: Arc<PolygonDomain>,
    ) -> Self {
        let mut on_boundary = vec![false; vertices.len()];
        for ((a, b), count) in edge_counts(&elements) {
            if count == 1 {
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        let boundary_vertices = (0..vertices.len()).filter(|&i| on_boundary[i]).collect();
        Self {
            vertices,
            elements,
            on_boundary,
            boundary_vertices,
            domain,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    /// Number of vertices.
    pub fn nov(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Sorted indices of vertices on the domain boundary.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn domain(&self) -> &Arc<PolygonDomain> {
        &self.domain
    }

    pub fn element_points(&self, k: usize) -> [Point; 3] {
        let e = self.elements[k];
        [self.vertices[e[0]], self.vertices[e[1]], self.vertices[e[2]]]
    }

    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.element_points(k);
        0.5 * orient(a, b, c)
    }

    /// Area, centroid and mean edge length of element `k`.
    pub fn element_geometry(&self, k: usize) -> Result<ElementGeometry> {
        if k >= self.elements.len() {
            return Err(Error::ElementIndex {
                index: k,
                len: self.elements.len(),
            });
        }
        let [a, b, c] = self.element_points(k);
        let area = 0.5 * orient(a, b, c);
        if area <= 0.0 {
            return Err(Error::DegenerateElement { index: k, area });
        }
        Ok(ElementGeometry {
            area,
            centroid: [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0],
            avg_edge: (dist(a, b) + dist(b, c) + dist(c, a)) / 3.0,
        })
    }

    /// Mean edge length of every element.
    pub fn avg_edges(&self) -> Vec<f64> {
        (0..self.elements.len())
            .map(|k| {
                let [a, b, c] = self.element_points(k);
                (dist(a, b) + dist(b, c) + dist(c, a)) / 3.0
            })
            .collect()
    }

    /// Gradients of the three P1 basis functions on element `k`, in local
    /// vertex order.
    pub fn basis_gradients(&self, k: usize) -> [[f64; 2]; 3] {
        let [p0, p1, p2] = self.element_points(k);
        let twice = orient(p0, p1, p2);
        [
            [(p1[1] - p2[1]) / twice, (p2[0] - p1[0]) / twice],
            [(p2[1] - p0[1]) / twice, (p0[0] - p2[0]) / twice],
            [(p0[1] - p1[1]) / twice, (p1[0] - p0[0]) / twice],
        ]
    }

    /// Per-vertex list of incident elements.
    pub fn node_to_cell(&self) -> NodeToCell {
        let nv = self.vertices.len();
        let mut offsets = vec![0usize; nv + 1];
        for e in &self.elements {
            for &v in e {
                offsets[v + 1] += 1;
            }
        }
        for i in 0..nv {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut cells = vec![0usize; offsets[nv]];
        for (k, e) in self.elements.iter().enumerate() {
            for &v in e {
                cells[fill[v]] = k;
                fill[v] += 1;
            }
        }
        NodeToCell { offsets, cells }
    }

    /// Verifies every mesh invariant: index ranges, positive orientation,
    /// edge manifoldness with consistent orientation, boundary edges lying on
    /// the domain boundary (no hanging nodes) and total area.
    pub fn check_conforming(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (k, e) in self.elements.iter().enumerate() {
            if e.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("element {k} index out of range")));
            }
            if e[0] == e[1] || e[1] == e[2] || e[0] == e[2] {
                return Err(Error::InvalidMesh(format!("element {k} repeats a vertex")));
            }
            let area = self.area(k);
            if area <= 0.0 {
                return Err(Error::DegenerateElement { index: k, area });
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (k, e) in self.elements.iter().enumerate() {
            for i in 0..3 {
                if let Some(other) = directed.insert((e[i], e[(i + 1) % 3]), k) {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) traversed in the same direction by elements {other} and {k}",
                        e[i],
                        e[(i + 1) % 3]
                    )));
                }
            }
        }
        let tol = 1e-9 * self.domain.diameter();
        for (&(a, b), _) in directed.iter().filter(|(&(a, b), _)| !directed.contains_key(&(b, a))) {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let off = [pa, pb, mid]
                .iter()
                .map(|&p| self.domain.boundary_distance(p))
                .fold(0.0, f64::max);
            if off > tol {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge ({a}, {b}) lies {off:e} off the domain boundary (hanging node?)"
                )));
            }
            if !self.on_boundary[a] || !self.on_boundary[b] {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge ({a}, {b}) has an endpoint not flagged as boundary"
                )));
            }
        }
        let total: f64 = (0..self.elements.len()).map(|k| self.area(k)).sum();
        let expected = self.domain.area();
        if (total - expected).abs() > 1e-9 * expected {
            return Err(Error::InvalidMesh(format!(
                "elements cover area {total}, domain area is {expected}"
            )));
        }
        Ok(())
    }

    /// Locates the element containing `x`, returning it with barycentric
    /// coordinates. Linear scan; meant for tests and diagnostics.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for k in 0..self.elements.len() {
            let [a, b, c] = self.element_points(k);
            let twice = orient(a, b, c);
            let l = [
                orient(x, b, c) / twice,
                orient(a, x, c) / twice,
                orient(a, b, x) / twice,
            ];
            let worst = l.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((k, l));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((k, l, worst));
            }
        }
        best.filter(|b| b.2 > -1e-12).map(|b| (b.0, b.1))
    }
}

/// Undirected edges with the number of elements that contain them, in a
/// deterministic order.
pub(crate) fn edge_counts(elements: &[[usize; 3]]) -> Vec<((usize, usize), usize)> {
    let mut edges: Vec<(usize, usize)> = elements
        .iter()
        .flat_map(|e| (0..3).map(move |i| sorted_edge(e[i], e[(i + 1) % 3])))
        .collect();
    edges.sort_unstable();
    let mut out: Vec<((usize, usize), usize)> = Vec::new();
    for e in edges {
        match out.last_mut() {
            Some((last, c)) if *last == e => *c += 1,
            _ => out.push((e, 1)),
        }
    }
    out
}

pub(crate) fn sorted_edge(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Vertex-to-element incidence in compressed form; row `i` lists the
/// elements containing vertex `i` in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeToCell {
    offsets: Vec<usize>,
    cells: Vec<usize>,
}

impl NodeToCell {
    pub fn cells(&self, v: usize) -> &[usize] {
        &self.cells[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn valence(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// One scalar per element of a mesh.
#[derive(Debug, Clone)]
pub struct ElementField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl ElementField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_elements() {
            return Err(Error::LengthMismatch {
                expected: mesh.num_elements(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("element field"));
        }
        Ok(Self { mesh, values })
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
}

/// One scalar per vertex of a mesh.
#[derive(Debug, Clone)]
pub struct VertexField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl VertexField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nov() {
            return Err(Error::LengthMismatch {
                expected: mesh.nov(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vertex field"));
        }
        Ok(Self { mesh, values })
    }

    pub fn constant(mesh: Arc<Mesh>, value: f64) -> Self {
        let n = mesh.nov();
        Self {
            mesh,
            values: vec![value; n],
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation inside element `k` at barycentric `bary`.
    pub fn interpolate(&self, k: usize, bary: [f64; 3]) -> f64 {
        let e = self.mesh.elements[k];
        bary[0] * self.values[e[0]] + bary[1] * self.values[e[1]] + bary[2] * self.values[e[2]]
    }
}
