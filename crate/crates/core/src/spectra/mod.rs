//! Generalized eigenvalues `K v = λ B v` where `K` is the cotangent Dirichlet
//! form and `B` a lumped measure: conformal densities, arbitrary vertex
//! measures, and boundary length (Steklov).

mod holes;
mod maximize;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    canonical_sign, dense_generalized, relative_residual, shift_invert, CsrMatrix, EigenPairs, ShiftInvertOpts,
    SparseCholesky,
};
use crate::mesh::{self, ConformalDensity, MeasureKind, MeshMeasure, TriMesh};

pub use holes::{mesh_spacing, steklov_hole_sweep, HoleRow, HoleSweep};
pub use maximize::{maximize_lambda1_conformal, maximize_lambda1_from, MaximizeOpts, MaximizerReport};

pub const DEFAULT_CLUSTER_TOL: f64 = 1e-3;

/// Ascending eigenvalues with `B`-orthonormal eigenvectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Total mass of the right-hand measure (area, or boundary length).
    pub mass: f64,
    pub cluster_tol: f64,
}

impl Spectrum {
    /// Eigenvalues times the total mass: scale invariant.
    pub fn normalized(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.mass).collect()
    }

    /// Number of eigenvalues within `cluster_tol·max(1,|value|)` of `value`.
    pub fn multiplicity(&self, value: f64) -> usize {
        multiplicity(self, value)
    }

    pub fn to_json_value(&self) -> SpectrumDoc {
        SpectrumDoc {
            values: self.values.clone(),
            residuals: self.residuals.clone(),
            mass: self.mass,
            normalized: self.normalized(),
        }
    }
}

/// Serialized form of a [`Spectrum`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpectrumDoc {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub mass: f64,
    pub normalized: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOpts {
    /// Problems up to this size use a dense solve.
    pub dense_threshold: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub cluster_tol: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            dense_threshold: 400,
            tol: 1e-10,
            max_iter: 800,
            seed: 0x5eed,
            cluster_tol: DEFAULT_CLUSTER_TOL,
        }
    }
}

/// First `count` eigenpairs of `K v = λ diag(b) v`. Rank-deficient `b` is
/// handled by the Schur complement onto its support, i.e. the discrete
/// harmonic extension off the support.
pub fn pencil_eigs(k: &CsrMatrix, b: &[f64], count: usize, opts: &SolverOpts) -> Result<(EigenPairs, Vec<f64>)> {
    let n = k.dim();
    let support: Vec<usize> = (0..n).filter(|&i| b[i] > 0.0).collect();
    if count > support.len() {
        return Err(Error::RankDeficient {
            requested: count,
            rank: support.len(),
        });
    }
    let pairs = if support.len() == n {
        if n <= opts.dense_threshold {
            dense_generalized(&k.to_dense(), b, count)
        } else {
            shift_invert(
                k,
                b,
                count,
                ShiftInvertOpts {
                    tol: opts.tol,
                    max_iter: opts.max_iter,
                    seed: opts.seed,
                },
            )?
        }
    } else if support.len() <= opts.dense_threshold.max(2000) {
        schur_eigs(k, b, &support, count)?
    } else {
        shift_invert(
            k,
            b,
            count,
            ShiftInvertOpts {
                tol: opts.tol,
                max_iter: opts.max_iter,
                seed: opts.seed,
            },
        )?
    };
    let k_norm = k.norm_inf();
    let residuals = pairs
        .values
        .iter()
        .zip(&pairs.vectors)
        .map(|(&l, v)| relative_residual(k, b, l, v, k_norm))
        .collect();
    Ok((pairs, residuals))
}

fn schur_eigs(k: &CsrMatrix, b: &[f64], support: &[usize], count: usize) -> Result<EigenPairs> {
    let n = k.dim();
    let mut in_support = vec![usize::MAX; n];
    for (a, &s) in support.iter().enumerate() {
        in_support[s] = a;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| in_support[i] == usize::MAX).collect();
    let mut interior_pos = vec![usize::MAX; n];
    for (p, &i) in interior.iter().enumerate() {
        interior_pos[i] = p;
    }
    let ns = support.len();
    let mut schur = DMatrix::zeros(ns, ns);
    for (a, &s) in support.iter().enumerate() {
        for (j, v) in k.row(s) {
            if in_support[j] != usize::MAX {
                schur[(a, in_support[j])] += v;
            }
        }
    }
    // y_b = K_II^{-1} K_I,s_b ; Schur = K_SS - K_SI Y
    let mut ext: Vec<Vec<f64>> = Vec::new();
    if !interior.is_empty() {
        let kii = k.principal_submatrix(&interior);
        let chol = SparseCholesky::factor(&kii)?;
        ext.reserve(ns);
        for &s in support {
            let mut rhs = vec![0.0; interior.len()];
            for (j, v) in k.row(s) {
                if interior_pos[j] != usize::MAX {
                    rhs[interior_pos[j]] = v;
                }
            }
            ext.push(chol.solve(&rhs));
        }
        for (a, &s) in support.iter().enumerate() {
            for (j, v) in k.row(s) {
                let p = interior_pos[j];
                if p != usize::MAX {
                    for (bcol, y) in ext.iter().enumerate() {
                        schur[(a, bcol)] -= v * y[p];
                    }
                }
            }
        }
    }
    let bs: Vec<f64> = support.iter().map(|&s| b[s]).collect();
    let small = dense_generalized(&schur, &bs, count);
    let mut vectors = Vec::with_capacity(count);
    for vs in &small.vectors {
        let mut v = vec![0.0; n];
        for (a, &s) in support.iter().enumerate() {
            v[s] = vs[a];
        }
        for (p, &i) in interior.iter().enumerate() {
            v[i] = -ext.iter().zip(vs).map(|(y, c)| y[p] * c).sum::<f64>();
        }
        vectors.push(canonical_sign(v));
    }
    Ok(EigenPairs {
        values: small.values,
        vectors,
    })
}

fn spectrum_from(k: &CsrMatrix, b: &[f64], count: usize, opts: &SolverOpts) -> Result<Spectrum> {
    let (pairs, residuals) = pencil_eigs(k, b, count, opts)?;
    Ok(Spectrum {
        values: pairs.values,
        vectors: pairs.vectors,
        residuals,
        mass: b.iter().sum(),
        cluster_tol: opts.cluster_tol,
    })
}

/// First `k + 1` eigenpairs of the Laplacian of `f·g₀`.
pub fn laplace_eigs(mesh: &TriMesh, f: &ConformalDensity, k: usize) -> Result<Spectrum> {
    laplace_eigs_with(mesh, f, k, &SolverOpts::default())
}

pub fn laplace_eigs_with(mesh: &TriMesh, f: &ConformalDensity, k: usize, opts: &SolverOpts) -> Result<Spectrum> {
    if k >= mesh.num_vertices() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be below the vertex count {}",
            mesh.num_vertices()
        )));
    }
    let stiff = mesh::stiffness_matrix(mesh)?;
    let mass = mesh::mass_matrix(mesh, f)?;
    spectrum_from(&stiff, &mass, k + 1, opts)
}

/// Eigenvalues of a vertex measure `μ` (variational definition restricted
/// to functions that stay independent in `L²(μ)`).
pub fn measure_eigs(mesh: &TriMesh, mu: &MeshMeasure, k: usize) -> Result<Spectrum> {
    measure_eigs_with(mesh, mu, k, &SolverOpts::default())
}

pub fn measure_eigs_with(mesh: &TriMesh, mu: &MeshMeasure, k: usize, opts: &SolverOpts) -> Result<Spectrum> {
    mu.validate(mesh)?;
    let stiff = mesh::stiffness_matrix(mesh)?;
    measure_eigs_stiffness(&stiff, mu, k, opts)
}

/// As [`measure_eigs_with`] with a precomputed stiffness form.
pub fn measure_eigs_stiffness(stiff: &CsrMatrix, mu: &MeshMeasure, k: usize, opts: &SolverOpts) -> Result<Spectrum> {
    spectrum_from(stiff, &mu.weights, k + 1, opts)
}

/// Steklov eigenvalues: `μ` is the length measure of the whole boundary.
pub fn steklov_eigs(mesh: &TriMesh, k: usize) -> Result<Spectrum> {
    if mesh.is_closed() {
        return Err(Error::InvalidArgument("Steklov problem needs a mesh with boundary".into()));
    }
    let mu = mesh::full_boundary_measure(mesh)?;
    measure_eigs(mesh, &mu, k)
}

/// What a normalized eigenvalue is multiplied by.
#[derive(Clone, Copy, Debug)]
pub enum Normalization<'a> {
    Area(&'a ConformalDensity),
    BoundaryLength,
}

/// `λ̄ = λ·Area(M, f g₀)` or `σ̄ = σ·Length(∂M)`.
pub fn normalized(value: f64, mesh: &TriMesh, by: Normalization<'_>) -> Result<f64> {
    Ok(match by {
        Normalization::Area(f) => value * mesh::area(mesh, f),
        Normalization::BoundaryLength => value * mesh::full_boundary_measure(mesh)?.total_mass(),
    })
}

pub fn multiplicity(spec: &Spectrum, value: f64) -> usize {
    let tol = spec.cluster_tol * value.abs().max(1.0);
    spec.values.iter().filter(|&&v| (v - value).abs() <= tol).count()
}

/// Right-hand measure kind for a spectrum of `μ`.
pub fn measure_kind_label(kind: MeasureKind) -> &'static str {
    match kind {
        MeasureKind::Volume => "volume",
        MeasureKind::Curve => "curve",
    }
}
