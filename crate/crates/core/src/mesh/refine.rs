//! Conforming bisection refinement.
//!
//! Both refiners share one kernel: every element carries a refinement edge,
//! stored as the edge opposite its first vertex (`[v0, v1, v2]` refines
//! `(v1, v2)`). Marking an element marks its refinement edge; closure marks
//! the refinement edge of any element that has some marked edge; each
//! element is then split into two, three or four children. Children put the
//! new midpoint first, so newest-vertex bisection falls out of the vertex
//! order. The longest-edge variant rotates every element before a sweep so
//! that its longest edge becomes the refinement edge.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};

use super::{dist, sorted_edge, Mesh, Point, VertexField};

/// Maximum number of marking sweeps performed by [`fallback_refine`].
pub const FALLBACK_MAX_SWEEPS: usize = 20;

/// How a refined mesh descends from its coarse parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ancestry {
    /// Number of vertices in the coarse mesh; they keep their indices.
    pub coarse_nov: usize,
    /// Parent edge of each new vertex `coarse_nov + i`, endpoints in the
    /// coarse mesh.
    pub parents: Vec<(usize, usize)>,
    /// Coarse element containing each fine element.
    pub element_parent: Vec<usize>,
}

impl Ancestry {
    /// Coarse-element to fine-children map.
    pub fn children(&self, coarse_elements: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); coarse_elements];
        for (fine, &p) in self.element_parent.iter().enumerate() {
            out[p].push(fine);
        }
        out
    }
}

struct Split {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    origin: Vec<usize>,
    parents: Vec<(usize, usize)>,
}

/// Marks the refinement edges of `seeds`, closes the marking and splits.
fn close_and_split(vertices: &[Point], elements: &[[usize; 3]], seeds: &[usize]) -> Result<Split> {
    let mut edge_elems: HashMap<(usize, usize), [usize; 2]> = HashMap::with_capacity(elements.len() * 2);
    for (k, e) in elements.iter().enumerate() {
        for i in 0..3 {
            let slot = edge_elems
                .entry(sorted_edge(e[i], e[(i + 1) % 3]))
                .or_insert([usize::MAX; 2]);
            if slot[0] == usize::MAX {
                slot[0] = k;
            } else {
                slot[1] = k;
            }
        }
    }

    let ref_edge = |k: usize| sorted_edge(elements[k][1], elements[k][2]);
    let mut marked: HashMap<(usize, usize), usize> = HashMap::new();
    let mut queue: Vec<(usize, usize)> = Vec::new();
    for &k in seeds {
        let e = ref_edge(k);
        if let Entry::Vacant(slot) = marked.entry(e) {
            slot.insert(usize::MAX);
            queue.push(e);
        }
    }
    // every element is revisited at most once per marked edge it owns
    let budget = 3 * elements.len() + seeds.len() + 1;
    let mut steps = 0;
    while let Some(edge) = queue.pop() {
        steps += 1;
        if steps > budget {
            return Err(Error::ClosureCap(budget));
        }
        for &k in edge_elems[&edge].iter().filter(|&&k| k != usize::MAX) {
            let r = ref_edge(k);
            if let Entry::Vacant(slot) = marked.entry(r) {
                slot.insert(usize::MAX);
                queue.push(r);
            }
        }
    }

    let mut out = Split {
        vertices: vertices.to_vec(),
        elements: Vec::with_capacity(elements.len() + 3 * marked.len()),
        origin: Vec::with_capacity(elements.len() + 3 * marked.len()),
        parents: Vec::with_capacity(marked.len()),
    };
    let mut midpoint = |a: usize, b: usize, out: &mut Split| -> Option<usize> {
        let slot = marked.get_mut(&sorted_edge(a, b))?;
        if *slot == usize::MAX {
            let (pa, pb) = (vertices[a], vertices[b]);
            *slot = out.vertices.len();
            out.vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            out.parents.push(sorted_edge(a, b));
        }
        Some(*slot)
    };
    for (k, &[v0, v1, v2]) in elements.iter().enumerate() {
        let Some(m) = midpoint(v1, v2, &mut out) else {
            out.elements.push([v0, v1, v2]);
            out.origin.push(k);
            continue;
        };
        for child in [[m, v0, v1], [m, v2, v0]] {
            match midpoint(child[1], child[2], &mut out) {
                Some(m2) => {
                    out.elements.push([m2, child[0], child[1]]);
                    out.elements.push([m2, child[2], child[0]]);
                    out.origin.extend([k, k]);
                }
                None => {
                    out.elements.push(child);
                    out.origin.push(k);
                }
            }
        }
    }
    Ok(out)
}

/// Rotates every element so that its longest edge is the refinement edge.
/// Ties go to the edge that comes first in local order.
pub fn with_longest_edge_refinement(mesh: &Mesh) -> Mesh {
    let v = mesh.vertices();
    let elements = mesh.elements().iter().map(|&e| rotate_longest(v, e)).collect();
    Mesh::from_parts_unchecked(v.to_vec(), elements, mesh.domain().clone())
}

fn rotate_longest(v: &[Point], e: [usize; 3]) -> [usize; 3] {
    let opp = |i: usize| dist(v[e[(i + 1) % 3]], v[e[(i + 2) % 3]]);
    let mut best = 0;
    for i in 1..3 {
        if opp(i) > opp(best) {
            best = i;
        }
    }
    [e[best], e[(best + 1) % 3], e[(best + 2) % 3]]
}

/// Newest-vertex bisection of the `marked` elements with conforming closure.
///
/// The refinement edge of each element is the edge opposite its first
/// vertex; use [`with_longest_edge_refinement`] once on an initial mesh to
/// assign longest edges. Children keep the newest-vertex convention, so the
/// output can be fed back in directly.
pub fn bisect_refine(mesh: &Mesh, marked: &[usize]) -> Result<(Mesh, Ancestry)> {
    if let Some(&k) = marked.iter().find(|&&k| k >= mesh.num_elements()) {
        return Err(Error::ElementIndex {
            index: k,
            len: mesh.num_elements(),
        });
    }
    let split = close_and_split(mesh.vertices(), mesh.elements(), marked)?;
    let ancestry = Ancestry {
        coarse_nov: mesh.nov(),
        parents: split.parents,
        element_parent: split.origin,
    };
    let fine = Mesh::from_parts_unchecked(split.vertices, split.elements, mesh.domain().clone());
    Ok((fine, ancestry))
}

/// Result of [`fallback_refine`].
#[derive(Debug, Clone)]
pub struct FallbackOutcome {
    pub mesh: Mesh,
    pub sweeps: usize,
    /// Elements still larger than their target when refinement stopped.
    pub remaining_violations: usize,
    /// Refinement stopped because the vertex budget was reached.
    pub budget_exhausted: bool,
}

/// Size-driven longest-edge refinement: bisect every element whose mean
/// edge exceeds the size field (interpolated from `size`'s mesh at the
/// element centroid) until none does or [`FALLBACK_MAX_SWEEPS`] is reached.
pub fn fallback_refine(mesh: &Mesh, size: &VertexField) -> Result<FallbackOutcome> {
    fallback_refine_within(mesh, size, usize::MAX)
}

/// [`fallback_refine`] that never produces more than `max_vertices`
/// vertices. When the field asks for more, it is scaled up by the smallest
/// factor (found by bisection in log scale) whose refinement fits, so the
/// grading of the field is kept while the density is capped.
pub fn fallback_refine_within(mesh: &Mesh, size: &VertexField, max_vertices: usize) -> Result<FallbackOutcome> {
    let guide: &Arc<Mesh> = size.mesh();
    if guide.nov() != mesh.nov() || guide.elements() != mesh.elements() {
        return Err(Error::MeshMismatch);
    }
    if let Some((v, &s)) = size.values().iter().enumerate().find(|(_, &s)| s <= 0.0) {
        return Err(Error::NonPositiveSize { vertex: v, value: s });
    }
    if let Some(out) = refine_scaled(mesh, size, 1.0, max_vertices)? {
        return Ok(out);
    }
    if mesh.nov() >= max_vertices {
        warn!(
            "fallback refinement skipped: the guide mesh already has {} vertices",
            mesh.nov()
        );
        return Ok(FallbackOutcome {
            mesh: mesh.clone(),
            sweeps: 0,
            remaining_violations: 0,
            budget_exhausted: true,
        });
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    let mut best = loop {
        match refine_scaled(mesh, size, hi, max_vertices)? {
            Some(out) => break out,
            None => (lo, hi) = (hi, 2.0 * hi),
        }
    };
    for _ in 0..BUDGET_SEARCH_STEPS {
        let mid = (lo * hi).sqrt();
        match refine_scaled(mesh, size, mid, max_vertices)? {
            Some(out) => (best, hi) = (out, mid),
            None => lo = mid,
        }
    }
    warn!(
        "size field scaled by {hi:.3} to stay within the {max_vertices}-vertex budget ({} vertices)",
        best.mesh.nov()
    );
    best.budget_exhausted = true;
    Ok(best)
}

const BUDGET_SEARCH_STEPS: usize = 10;

/// Refinement toward `factor * size`; `None` as soon as a sweep would exceed
/// `max_vertices`.
fn refine_scaled(mesh: &Mesh, size: &VertexField, factor: f64, max_vertices: usize) -> Result<Option<FallbackOutcome>> {
    let guide: &Arc<Mesh> = size.mesh();
    let mut vertices = mesh.vertices().to_vec();
    let mut elements: Vec<[usize; 3]> = mesh.elements().to_vec();
    let mut origin: Vec<usize> = (0..elements.len()).collect();

    let violators = |vertices: &[Point], elements: &[[usize; 3]], origin: &[usize]| -> Vec<usize> {
        elements
            .iter()
            .enumerate()
            .filter_map(|(k, e)| {
                let [a, b, c] = [vertices[e[0]], vertices[e[1]], vertices[e[2]]];
                let avg = (dist(a, b) + dist(b, c) + dist(c, a)) / 3.0;
                let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
                let target = factor * size.interpolate(origin[k], barycentric(guide, origin[k], centroid));
                (avg > target).then_some(k)
            })
            .collect()
    };

    let mut sweeps = 0;
    let remaining = loop {
        let marked = violators(&vertices, &elements, &origin);
        if marked.is_empty() {
            break 0;
        }
        if sweeps == FALLBACK_MAX_SWEEPS {
            warn!(
                "fallback refinement stopped after {sweeps} sweeps with {} oversized elements",
                marked.len()
            );
            break marked.len();
        }
        for e in elements.iter_mut() {
            *e = rotate_longest(&vertices, *e);
        }
        let split = close_and_split(&vertices, &elements, &marked)?;
        if split.vertices.len() > max_vertices {
            return Ok(None);
        }
        origin = split.origin.iter().map(|&k| origin[k]).collect();
        vertices = split.vertices;
        elements = split.elements;
        sweeps += 1;
    };
    Ok(Some(FallbackOutcome {
        mesh: Mesh::from_parts_unchecked(vertices, elements, mesh.domain().clone()),
        sweeps,
        remaining_violations: remaining,
        budget_exhausted: false,
    }))
}

fn barycentric(mesh: &Mesh, k: usize, x: Point) -> [f64; 3] {
    let [a, b, c] = mesh.element_points(k);
    let twice = super::orient(a, b, c);
    [
        super::orient(x, b, c) / twice,
        super::orient(a, x, c) / twice,
        super::orient(a, b, x) / twice,
    ]
}
