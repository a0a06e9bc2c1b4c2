use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{pencil_eigs, SolverOpts};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseCholesky};
use crate::mesh::{self, ConformalDensity, TriMesh};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MaximizeOpts {
    /// Initial multiplicative step; adapted by the line search.
    pub step: f64,
    pub iters: usize,
    /// Try a lumped heat step of time `h²` on each candidate density.
    pub smoothing: bool,
    /// Lower bound on the density after each update (0 allows conical zeros).
    pub floor: f64,
    /// Target stationarity gap.
    pub tol: f64,
    /// Eigenvalues within this relative distance of `λ₁` count as one cluster.
    pub window: f64,
}

impl Default for MaximizeOpts {
    fn default() -> Self {
        MaximizeOpts {
            step: 0.5,
            iters: 200,
            smoothing: true,
            floor: 0.0,
            tol: 2e-4,
            window: 2e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaximizerReport {
    pub density: ConformalDensity,
    pub lambda_bar: f64,
    pub iterations: usize,
    /// Relative `L²(f)` distance from a convex combination of squared
    /// `λ₁`-eigenfunctions to the constant 1.
    pub stationarity_gap: f64,
    pub converged: bool,
    /// Size of the cluster at `λ₁` at exit.
    pub multiplicity: usize,
    /// Number of vertices with positive density.
    pub measure_rank: usize,
    /// `L²` size of the last accepted density change.
    pub last_change: f64,
    pub history: Vec<f64>,
}

struct Eval {
    f: Vec<f64>,
    lambda_bar: f64,
    gap: f64,
    direction: Vec<f64>,
    multiplicity: usize,
}

struct Problem<'a> {
    stiff: CsrMatrix,
    areas: Vec<f64>,
    heat: Option<SparseCholesky>,
    opts: &'a MaximizeOpts,
    solver: SolverOpts,
}

impl Problem<'_> {
    fn evaluate(&self, f: Vec<f64>) -> Result<Eval> {
        let mass: Vec<f64> = f.iter().zip(&self.areas).map(|(f, a)| f * a).collect();
        let count = 9.min(mass.iter().filter(|&&m| m > 0.0).count());
        let (pairs, _) = pencil_eigs(&self.stiff, &mass, count, &self.solver)?;
        let l1 = pairs.values[1];
        let active: Vec<usize> = (1..count)
            .filter(|&j| pairs.values[j] <= l1 * (1.0 + self.opts.window))
            .collect();
        let squares: Vec<Vec<f64>> = active
            .iter()
            .map(|&j| pairs.vectors[j].iter().map(|x| x * x).collect())
            .collect();
        let total: f64 = mass.iter().sum();
        let (combo, gap) = best_combination(&squares, &mass, total);
        Ok(Eval {
            lambda_bar: l1 * total,
            gap,
            direction: combo,
            multiplicity: active.len(),
            f,
        })
    }

    fn normalize(&self, mut f: Vec<f64>) -> Vec<f64> {
        for x in f.iter_mut() {
            *x = x.max(self.opts.floor);
        }
        let a: f64 = f.iter().zip(&self.areas).map(|(f, a)| f * a).sum();
        f.iter().map(|x| x / a).collect()
    }

    fn smooth(&self, f: &[f64]) -> Option<Vec<f64>> {
        let chol = self.heat.as_ref()?;
        let rhs: Vec<f64> = f.iter().zip(&self.areas).map(|(f, a)| f * a).collect();
        Some(chol.solve(&rhs))
    }
}

/// Nonnegative weights `c` (summing to the cluster size) minimizing
/// `‖Σ c_j s_j − 1‖` in `L²(m)`, found by enumerating active sets. Returns
/// the combination (scaled to mean 1) and the relative residual.
fn best_combination(squares: &[Vec<f64>], m: &[f64], total: f64) -> (Vec<f64>, f64) {
    let k = squares.len();
    let n = m.len();
    let gram = DMatrix::from_fn(k, k, |a, b| (0..n).map(|i| m[i] * squares[a][i] * squares[b][i]).sum::<f64>());
    let rhs = DVector::from_fn(k, |a, _| (0..n).map(|i| m[i] * squares[a][i]).sum::<f64>());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        let g = DMatrix::from_fn(idx.len(), idx.len(), |a, b| gram[(idx[a], idx[b])]);
        let r = DVector::from_fn(idx.len(), |a, _| rhs[idx[a]]);
        let Some(sol) = g.clone().cholesky().map(|c| c.solve(&r)) else {
            continue;
        };
        if sol.iter().any(|&c| c < 0.0) {
            continue;
        }
        let mut c = vec![0.0; k];
        for (a, &j) in idx.iter().enumerate() {
            c[j] = sol[a];
        }
        // ‖Σc s − 1‖² = cᵀGc − 2cᵀr + total
        let cv = DVector::from_vec(c.clone());
        let res = (cv.dot(&(&gram * &cv)) - 2.0 * cv.dot(&rhs) + total).max(0.0);
        if best.as_ref().map_or(true, |(b, _)| res < *b) {
            best = Some((res, c));
        }
    }
    let (res, c) = best.unwrap_or((total, vec![0.0; k]));
    let combo: Vec<f64> = (0..n).map(|i| (0..k).map(|j| c[j] * squares[j][i]).sum()).collect();
    let mean = combo.iter().zip(m).map(|(x, w)| x * w).sum::<f64>() / total;
    let combo = if mean > 0.0 {
        combo.iter().map(|x| x / mean).collect()
    } else {
        combo
    };
    (combo, (res / total).sqrt())
}

/// Ascent for `λ̄₁` over conformal densities, started from the constant
/// density.
pub fn maximize_lambda1_conformal(mesh: &TriMesh, opts: &MaximizeOpts) -> Result<MaximizerReport> {
    maximize_lambda1_from(mesh, &ConformalDensity::constant(mesh, 1.0), opts)
}

/// Multiplicative ascent `f ← f·exp(−s(Σ c_j φ_j² − 1))` with backtracking on
/// `s`, unit area kept throughout.
pub fn maximize_lambda1_from(mesh: &TriMesh, f0: &ConformalDensity, opts: &MaximizeOpts) -> Result<MaximizerReport> {
    if !mesh.is_closed() {
        return Err(Error::InvalidArgument("conformal maximization needs a closed mesh".into()));
    }
    f0.validate(mesh)?;
    let stiff = mesh::stiffness_matrix(mesh)?;
    let areas = mesh::vertex_areas(mesh);
    let heat = if opts.smoothing {
        let h2 = mean_edge_length(mesh).powi(2);
        Some(SparseCholesky::factor(&stiff.scaled(h2).add_diagonal(&areas))?)
    } else {
        None
    };
    let prob = Problem {
        stiff,
        areas,
        heat,
        opts,
        solver: SolverOpts::default(),
    };
    let mut cur = prob.evaluate(prob.normalize(f0.f.clone()))?;
    let mut history = vec![cur.lambda_bar];
    let mut step = opts.step;
    let mut last_change = 0.0;
    let mut iterations = 0;
    while iterations < opts.iters && cur.gap > opts.tol && step > 1e-12 {
        iterations += 1;
        let mut accepted = None;
        while step > 1e-12 {
            let raw: Vec<f64> = cur
                .f
                .iter()
                .zip(&cur.direction)
                .map(|(f, d)| f * (-step * (d - 1.0)).exp())
                .collect();
            let mut candidates = Vec::with_capacity(2);
            if let Some(s) = prob.smooth(&raw) {
                candidates.push(prob.normalize(s));
            }
            candidates.push(prob.normalize(raw));
            for cand in candidates {
                let e = prob.evaluate(cand)?;
                if e.lambda_bar > cur.lambda_bar {
                    accepted = Some(e);
                    break;
                }
            }
            if accepted.is_some() {
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        last_change = next
            .f
            .iter()
            .zip(&cur.f)
            .zip(&prob.areas)
            .map(|((a, b), w)| w * (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        cur = next;
        history.push(cur.lambda_bar);
        step = (step * 1.5).min(4.0 * opts.step);
    }
    Ok(MaximizerReport {
        lambda_bar: cur.lambda_bar,
        iterations,
        stationarity_gap: cur.gap,
        converged: cur.gap <= opts.tol,
        multiplicity: cur.multiplicity,
        measure_rank: cur.f.iter().filter(|&&x| x > 0.0).count(),
        last_change,
        history,
        density: ConformalDensity::new(cur.f),
    })
}

fn mean_edge_length(mesh: &TriMesh) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in 0..mesh.num_triangles() {
        let c = mesh.corners(t);
        for k in 0..3 {
            sum += mesh::norm(mesh::sub(c[(k + 1) % 3], c[k]));
            n += 1;
        }
    }
    sum / n as f64
}
