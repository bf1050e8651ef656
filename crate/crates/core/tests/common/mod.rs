//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use parafem::mesh::Mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A jittered `nx × ny` grid on `[0, 2] × [0, 1]`. Interior vertices move by
/// at most 15% of a cell, which keeps every triangle positively oriented.
pub fn jittered_mesh(nx: usize, ny: usize, seed: u64) -> Arc<Mesh> {
    let base = Mesh::structured_rectangle(0.0, 0.0, 2.0, 1.0, nx, ny).unwrap();
    let (hx, hy) = (2.0 / nx as f64, 1.0 / ny as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = base
        .vertices()
        .iter()
        .enumerate()
        .map(|(v, &[x, y])| {
            if base.is_boundary(v) {
                [x, y]
            } else {
                [
                    x + 0.15 * hx * rng.random_range(-1.0..1.0),
                    y + 0.15 * hy * rng.random_range(-1.0..1.0),
                ]
            }
        })
        .collect();
    Arc::new(Mesh::new(vertices, base.elements().to_vec(), base.domain().clone()).unwrap())
}

/// Straight-line reimplementation of the size field: loops only, selection
/// by repeated arg-max instead of a sort.
pub fn brute_force_size_field(mesh: &Mesh, est: &[f64], itero: u32, dim: u32, theta: f64) -> Vec<f64> {
    let nv = mesh.nov();
    let edges = mesh.avg_edges();
    let mut h = vec![0.0; nv];
    let mut e = vec![0.0; nv];
    let mut count = vec![0usize; nv];
    for (k, tri) in mesh.elements().iter().enumerate() {
        for &v in tri {
            h[v] += edges[k];
            e[v] += est[k];
            count[v] += 1;
        }
    }
    let mut rho = vec![0.0; nv];
    for v in 0..nv {
        h[v] /= count[v] as f64;
        e[v] /= count[v] as f64;
        rho[v] = e[v] * e[v] / h[v].powi(dim as i32);
    }
    let total: f64 = rho.iter().sum();
    let mut taken = vec![false; nv];
    let mut marked = Vec::new();
    let mut cum = 0.0;
    while total > 0.0 && cum < theta * total * (1.0 - 1e-12) {
        let mut best: Option<usize> = None;
        for v in 0..nv {
            if taken[v] || rho[v] <= 0.0 {
                continue;
            }
            if best.is_none_or(|b| rho[v] > rho[b]) {
                best = Some(v);
            }
        }
        let Some(b) = best else { break };
        taken[b] = true;
        cum += rho[b];
        marked.push(b);
    }
    let mut size = h.clone();
    if !marked.is_empty() {
        let s = (nv as f64 / marked.len() as f64 + 1.0).powf(-1.0 / dim as f64);
        for &v in &marked {
            size[v] = h[v] * s.powi(itero as i32);
        }
    }
    size
}
