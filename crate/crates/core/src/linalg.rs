//! Sparse symmetric storage, an envelope Cholesky factorization with
//! reverse Cuthill-McKee ordering, and generalized eigen solvers for pencils
//! `K v = λ B v` with `B` diagonal and positive semidefinite.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Symmetric forms store both triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// `A + diag(d)`, keeping the sparsity pattern (diagonal entries are
    /// inserted if missing).
    pub fn add_diagonal(&self, d: &[f64]) -> CsrMatrix {
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                trip.push((i, j, v));
            }
            trip.push((i, i, d[i]));
        }
        CsrMatrix::from_triplets(self.n, &trip)
    }

    pub fn scaled(&self, c: f64) -> CsrMatrix {
        CsrMatrix {
            vals: self.vals.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn principal_submatrix(&self, idx: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in idx.iter().enumerate() {
            map[i] = k;
        }
        let mut trip = Vec::new();
        for (k, &i) in idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                if map[j] != usize::MAX {
                    trip.push((k, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(idx.len(), &trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// Reverse Cuthill-McKee ordering of the adjacency graph of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // returns (last vertex of deepest level with min degree, depth)
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        dist[start] = 0;
        q.push_back(start);
        let mut far = start;
        while let Some(u) = q.pop_front() {
            if dist[u] > dist[far] || (dist[u] == dist[far] && degree[u] < degree[far]) {
                far = u;
            }
            for (v, _) in a.row(u) {
                if !visited[v] && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        (far, dist[far])
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start
        let mut start = seed;
        let (mut far, mut depth) = bfs_levels(start, &visited);
        for _ in 0..8 {
            let (f2, d2) = bfs_levels(far, &visited);
            if d2 <= depth {
                break;
            }
            start = far;
            far = f2;
            depth = d2;
        }
        let _ = start;
        let root = far;
        let mut q = VecDeque::new();
        visited[root] = true;
        q.push_back(root);
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = a
                .row(u)
                .map(|(v, _)| v)
                .filter(|&v| !visited[v])
                .collect();
            nbrs.sort_by_key(|&v| (degree[v], v));
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) Cholesky factorization `P A Pᵀ = L Lᵀ` of a sparse
/// symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = rcm_ordering(a);
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first = vec![0usize; n];
        for i in 0..n {
            let old = perm[i];
            first[i] = a.row(old).map(|(j, _)| inv_perm[j]).filter(|&j| j <= i).min().unwrap_or(i).min(i);
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; row_start[n]];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let jj = inv_perm[j];
                if jj <= i {
                    data[row_start[i] + jj - first[i]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = data[row_start[i] + j - fi];
                let ri = row_start[i] + k0 - fi;
                let rj = row_start[j] + k0 - fj;
                let len = j - k0;
                for t in 0..len {
                    s -= data[ri + t] * data[rj + t];
                }
                if j < i {
                    s /= data[row_start[j] + j - fj];
                    data[row_start[i] + j - fi] = s;
                } else {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite(perm[i]));
                    }
                    data[row_start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(SparseCholesky {
            n,
            perm,
            inv_perm,
            first,
            row_start,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        // forward: L y = b
        for i in 0..n {
            let fi = self.first[i];
            let r = self.row_start[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[r + k - fi] * y[k];
            }
            y[i] = s / self.data[r + i - fi];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let r = self.row_start[i];
            y[i] /= self.data[r + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.data[r + k - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = y[self.inv_perm[i]];
        }
        x
    }
}

/// Eigenpairs of a symmetric-definite pencil, ascending.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// Each vector is B-normalized.
    pub vectors: Vec<Vec<f64>>,
}

/// Dense generalized problem `K v = λ diag(b) v` with `b > 0`.
pub fn dense_generalized(k: &DMatrix<f64>, b: &[f64], count: usize) -> EigenPairs {
    let n = b.len();
    let s: Vec<f64> = b.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut c = k.clone();
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] *= s[i] * s[j];
        }
    }
    // exact symmetry for the solver
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = avg;
            c[(j, i)] = avg;
        }
    }
    let eig = SymmetricEigen::new(c);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let count = count.min(n);
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for &p in idx.iter().take(count) {
        values.push(eig.eigenvalues[p]);
        let v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, p)] * s[i]).collect();
        vectors.push(canonical_sign(v));
    }
    EigenPairs { values, vectors }
}

/// Fix the sign of an eigenvector so that its largest-magnitude entry is
/// positive. Keeps outputs deterministic across solver paths.
pub fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in &v {
        if x.abs() > best * (1.0 + 1e-9) {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Settings for [`shift_invert`].
#[derive(Clone, Copy, Debug)]
pub struct ShiftInvertOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ShiftInvertOpts {
    fn default() -> Self {
        ShiftInvertOpts {
            tol: 1e-10,
            max_iter: 500,
            seed: 0x5eed,
        }
    }
}

/// Backward-error residual `‖K v − λ B v‖ / (‖K‖∞‖v‖ + |λ|‖B v‖)`.
pub fn relative_residual(k: &CsrMatrix, b: &[f64], lambda: f64, v: &[f64], k_norm: f64) -> f64 {
    let kv = k.mul_vec(v);
    let mut r2 = 0.0;
    let mut bv2 = 0.0;
    let mut v2 = 0.0;
    for i in 0..v.len() {
        let bv = b[i] * v[i];
        r2 += (kv[i] - lambda * bv).powi(2);
        bv2 += bv * bv;
        v2 += v[i] * v[i];
    }
    let denom = k_norm * v2.sqrt() + lambda.abs() * bv2.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        r2.sqrt() / denom
    }
}

/// Lowest `count` eigenpairs of `K v = λ diag(b) v` by shift-invert subspace
/// iteration with Rayleigh-Ritz projection. `b` may be singular; directions
/// with zero `b`-mass correspond to infinite eigenvalues and never appear.
pub fn shift_invert(k: &CsrMatrix, b: &[f64], count: usize, opts: ShiftInvertOpts) -> Result<EigenPairs> {
    let n = k.dim();
    let rank = b.iter().filter(|&&x| x > 0.0).count();
    if count > rank {
        return Err(Error::RankDeficient {
            requested: count,
            rank,
        });
    }
    let block = (count + count.max(8)).min(rank);
    // negative shift keeps K - σB positive definite
    let ratios: Vec<f64> = (0..n)
        .filter(|&i| b[i] > 0.0)
        .map(|i| k.get(i, i).abs() / b[i])
        .collect();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let scale = sorted.get(sorted.len() / 2).copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let sigma = -1e-4 * scale;
    let shifted = k.add_diagonal(&b.iter().map(|x| -sigma * x).collect::<Vec<_>>());
    let chol = SparseCholesky::factor(&shifted)?;
    let k_norm = k.norm_inf();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let mut last_res = f64::INFINITY;
    for iter in 0..opts.max_iter {
        // Z = (K - σB)^{-1} B Q
        let z: Vec<Vec<f64>> = q
            .iter()
            .map(|qi| {
                let bq: Vec<f64> = qi.iter().zip(b).map(|(x, w)| x * w).collect();
                chol.solve(&bq)
            })
            .collect();
        let p = z.len();
        // Mp = Zᵀ(K-σB)Z = Zᵀ B Q ; Bp = Zᵀ B Z
        let mut mp = DMatrix::zeros(p, p);
        let mut bp = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let mut m_ij = 0.0;
                let mut b_ij = 0.0;
                for t in 0..n {
                    let bt = b[t];
                    if bt != 0.0 {
                        m_ij += z[i][t] * bt * q[j][t];
                        b_ij += z[i][t] * bt * z[j][t];
                    }
                }
                mp[(i, j)] = m_ij;
                mp[(j, i)] = m_ij;
                bp[(i, j)] = b_ij;
                bp[(j, i)] = b_ij;
            }
        }
        // symmetrize Mp (ZᵀBQ is symmetric only in exact arithmetic)
        let mp = (&mp + mp.transpose()) * 0.5;
        let chol_m = match mp.clone().cholesky() {
            Some(c) => c,
            None => {
                // subspace collapsed; re-randomize weakest directions
                for qi in q.iter_mut().skip(count) {
                    for x in qi.iter_mut() {
                        *x = rng.gen_range(-1.0..1.0);
                    }
                }
                continue;
            }
        };
        let l = chol_m.l();
        let linv = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite(0))?;
        let c = &linv * &bp * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        // Ritz vectors: Z L^{-T} w
        let coeff = linv.transpose() * &eig.eigenvectors;
        let mut new_q: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut lambdas = Vec::with_capacity(p);
        for &c_idx in &idx {
            let nu = eig.eigenvalues[c_idx];
            let mut v = vec![0.0; n];
            for (j, zj) in z.iter().enumerate() {
                let w = coeff[(j, c_idx)];
                if w != 0.0 {
                    for t in 0..n {
                        v[t] += w * zj[t];
                    }
                }
            }
            let lambda = if nu > 0.0 { sigma + 1.0 / nu } else { f64::INFINITY };
            lambdas.push(lambda);
            new_q.push(v);
        }
        let mut worst: f64 = 0.0;
        for i in 0..count {
            let r = relative_residual(k, b, lambdas[i], &new_q[i], k_norm);
            worst = worst.max(r);
        }
        q = new_q;
        last_res = worst;
        if worst <= opts.tol && iter > 0 {
            let mut values = Vec::with_capacity(count);
            let mut vectors = Vec::with_capacity(count);
            for i in 0..count {
                let v = &q[i];
                let nrm: f64 = v.iter().zip(b).map(|(x, w)| x * x * w).sum::<f64>().sqrt();
                values.push(lambdas[i]);
                vectors.push(canonical_sign(v.iter().map(|x| x / nrm).collect()));
            }
            return Ok(EigenPairs { values, vectors });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: last_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push((i, i, 1.0));
            t.push((i + 1, i + 1, 1.0));
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn cholesky_solves_shifted_laplacian() {
        let n = 40;
        let a = path_laplacian(n).add_diagonal(&vec![0.3; n]);
        let chol = SparseCholesky::factor(&a).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x);
        let y = chol.solve(&b);
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = path_laplacian(5).add_diagonal(&[-1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(SparseCholesky::factor(&a), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = path_laplacian(17);
        let mut p = rcm_ordering(&a);
        p.sort();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn shift_invert_matches_dense_on_path() {
        // path graph Laplacian eigenvalues: 2 - 2cos(kπ/n)
        let n = 60;
        let k = path_laplacian(n);
        let b = vec![1.0; n];
        let pairs = shift_invert(&k, &b, 5, ShiftInvertOpts::default()).unwrap();
        for (j, &lam) in pairs.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * (j as f64 * std::f64::consts::PI / n as f64).cos();
            assert!((lam - exact).abs() < 1e-9, "{j}: {lam} vs {exact}");
        }
        let dense = dense_generalized(&k.to_dense(), &b, 5);
        for j in 0..5 {
            assert!((dense.values[j] - pairs.values[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_invert_with_singular_mass() {
        let n = 30;
        let k = path_laplacian(n);
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        b[n - 1] = 1.0;
        let pairs = shift_invert(&k, &b, 2, ShiftInvertOpts::default()).unwrap();
        // harmonic extension on a path is linear: DtN eigenvalues 0 and 2/(n-1)
        assert!(pairs.values[0].abs() < 1e-9);
        assert!((pairs.values[1] - 2.0 / (n as f64 - 1.0)).abs() < 1e-9);
        assert!(matches!(
            shift_invert(&k, &b, 3, ShiftInvertOpts::default()),
            Err(Error::RankDeficient { .. })
        ));
    }
}
