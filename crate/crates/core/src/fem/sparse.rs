//! Compressed-row matrices and symmetric positive definite solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Square matrix in compressed sparse row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSystem {
    /// Zero matrix on the vertex adjacency pattern of `mesh` (diagonal
    /// included).
    pub fn with_mesh_pattern(mesh: &Mesh) -> Self {
        let n = mesh.nov();
        let mut neighbours: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for e in mesh.elements() {
            for &a in e {
                for &b in e {
                    if a != b {
                        neighbours[a].push(b);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for row in neighbours.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Adds `v` to an entry of the pattern. Panics if `(i, j)` is not stored.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is outside the sparsity pattern"));
        self.values[p] += v;
    }

    /// `self + alpha * other`; both must share the pattern.
    pub fn add_scaled(&self, alpha: f64, other: &SparseSystem) -> SparseSystem {
        assert_eq!(self.row_ptr, other.row_ptr, "patterns differ");
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                match self.position(j, i) {
                    Some(p) => worst = worst.max((v - self.values[p]).abs()),
                    None => worst = worst.max(v.abs()),
                }
            }
        }
        worst
    }

    /// Replaces the rows and columns of `fixed` by identity rows, moving the
    /// known values to the right-hand side. Symmetry is preserved.
    pub fn eliminate_dirichlet(&mut self, rhs: &mut [f64], fixed: &[usize], values: &[f64]) {
        let mut is_fixed = vec![None; self.n];
        for (&i, &v) in fixed.iter().zip(values) {
            is_fixed[i] = Some(v);
        }
        for i in 0..self.n {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            if let Some(g) = is_fixed[i] {
                for p in start..end {
                    self.values[p] = if self.col_idx[p] == i { 1.0 } else { 0.0 };
                }
                rhs[i] = g;
                continue;
            }
            for p in start..end {
                if let Some(g) = is_fixed[self.col_idx[p]] {
                    rhs[i] -= self.values[p] * g;
                    self.values[p] = 0.0;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] += v;
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Jacobi-preconditioned conjugate gradients.
    #[default]
    Cg,
    /// Envelope Cholesky factorization after reverse Cuthill-McKee reordering.
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Cg,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖` (absolute when `b = 0`).
    pub residual: f64,
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &SparseSystem, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    assert_eq!(a.dim(), b.len());
    let (x, iterations) = match cfg.kind {
        SolverKind::Cg => pcg(a, b, cfg.tol)?,
        SolverKind::Cholesky => (EnvelopeCholesky::factor(a)?.solve(b), 0),
    };
    let r = a.mul_vec(&x);
    let bnorm = norm(b);
    let rnorm = r.iter().zip(b).map(|(ri, bi)| (bi - ri).powi(2)).sum::<f64>().sqrt();
    Ok(Solution {
        x,
        iterations,
        residual: if bnorm > 0.0 { rnorm / bnorm } else { rnorm },
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(a: &SparseSystem, b: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
    let n = a.dim();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(Error::NotPositiveDefinite { row: i, pivot: d })
            }
        })
        .collect::<Result<_>>()?;
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let cap = 10 * n.max(1);
    for it in 1..=cap {
        a.mul_vec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::NotPositiveDefinite { row: it, pivot: pq });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok((x, it));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        iterations: cap,
        residual: norm(&r) / bnorm,
    })
}

/// Reverse Cuthill-McKee ordering of the matrix graph; `perm[new] = old`.
fn reverse_cuthill_mckee(a: &SparseSystem) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = a.row(v).0.iter().copied().filter(|&j| !visited[j]).collect();
            next.sort_by_key(|&j| (degree[j], j));
            for j in next {
                visited[j] = true;
                order.push(j);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor stored row-wise over each row's envelope.
struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeCholesky {
    fn factor(a: &SparseSystem) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for new_i in 0..n {
            for &old_j in a.row(perm[new_i]).0 {
                first[new_i] = first[new_i].min(inv[old_j]);
            }
        }
        let mut rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; i - first[i] + 1]).collect();
        for new_i in 0..n {
            let (cols, vals) = a.row(perm[new_i]);
            for (&old_j, &v) in cols.iter().zip(vals) {
                let new_j = inv[old_j];
                if new_j <= new_i {
                    rows[new_i][new_j - first[new_i]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = rows[i][j - fi];
                for k in lo..j {
                    s -= rows[i][k - fi] * rows[j][k - fj];
                }
                rows[i][j - fi] = s / rows[j][j - fj];
            }
            let mut d = rows[i][i - fi];
            for k in fi..i {
                d -= rows[i][k - fi].powi(2);
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { row: perm[i], pivot: d });
            }
            rows[i][i - fi] = d.sqrt();
        }
        Ok(Self { perm, first, rows })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.rows[i][k - fi] * y[k];
            }
            y[i] = s / self.rows[i][i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.rows[i][i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.rows[i][k - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
