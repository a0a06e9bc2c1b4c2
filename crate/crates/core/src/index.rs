//! Spectral and energy index of discrete harmonic maps.
//!
//! `Q_S(u) = ∫|du|² − |dΦ|²u²` is read off the pencil `(K, |dΦ|²)` at the
//! threshold 1, with `|dΦ|²` lumped as twice the multiplier masses.
//! `Q_E(V) = ∫|dV|² − |dΦ|²|V|²` is assembled on sections tangent to `Φ` at
//! every vertex.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::{energy_spectrum, include_equatorial, multiplier_masses, SphereMap};
use crate::mesh::{self, TriMesh};

pub const NORMALIZATION: &str = "density |dPhi|^2, threshold 1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralIndex {
    pub ind_s: usize,
    pub nul_s: usize,
    /// Eigenvalues of `(K, |dΦ|²)` that were computed.
    pub spectrum: Vec<f64>,
    /// Distance of the largest eigenvalue counted below 1 to 1, and of the
    /// nearest uncounted eigenvalue above the nullity cluster.
    pub margins: [f64; 2],
    /// Counts changed when the cluster tolerance was halved.
    pub unstable: bool,
}

fn counts(values: &[f64], tol: f64) -> (usize, usize) {
    let below = values.iter().filter(|&&v| v < 1.0 - tol).count();
    let at = values.iter().filter(|&&v| (v - 1.0).abs() <= tol).count();
    (below, at)
}

pub fn spectral_index(mesh: &TriMesh, phi: &SphereMap) -> Result<SpectralIndex> {
    let spec = energy_spectrum(mesh, phi, 2.0)?;
    let tol = spec.cluster_tol;
    let (ind_s, nul_s) = counts(&spec.values, tol);
    let unstable = counts(&spec.values, tol / 2.0) != (ind_s, nul_s);
    let below = spec
        .values
        .iter()
        .filter(|&&v| v < 1.0 - tol)
        .map(|v| 1.0 - v)
        .fold(f64::INFINITY, f64::min);
    let above = spec
        .values
        .iter()
        .filter(|&&v| v > 1.0 + tol)
        .map(|v| v - 1.0)
        .fold(f64::INFINITY, f64::min);
    Ok(SpectralIndex {
        ind_s,
        nul_s,
        spectrum: spec.values,
        margins: [below, above],
        unstable,
    })
}

/// Orthonormal bases of `Φ(x)^⊥` by Gram-Schmidt on the standard basis,
/// taken in order of increasing `|Φ_k(x)|`.
pub fn tangent_frames(phi: &SphereMap) -> Result<Vec<Vec<Vec<f64>>>> {
    let d = phi.ambient_dim;
    phi.values
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (r - 1.0).abs() > 1e-10 {
                return Err(Error::Frame(i));
            }
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| p[a].abs().total_cmp(&p[b].abs()));
            let mut basis: Vec<Vec<f64>> = vec![p.clone()];
            for &k in &order {
                if basis.len() == d {
                    break;
                }
                let mut v = vec![0.0; d];
                v[k] = 1.0;
                for _ in 0..2 {
                    for b in &basis {
                        let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                    }
                }
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.3 {
                    basis.push(v.iter().map(|x| x / n).collect());
                }
            }
            if basis.len() != d {
                return Err(Error::Frame(i));
            }
            basis.remove(0);
            Ok(basis)
        })
        .collect()
}

/// Matrix of `Q_E` on the frame coefficients, vertex-major.
pub fn energy_form(mesh: &TriMesh, phi: &SphereMap, frames: &[Vec<Vec<f64>>]) -> Result<DMatrix<f64>> {
    if phi.num_vertices() != mesh.num_vertices() || frames.len() != mesh.num_vertices() {
        return Err(Error::InvalidArgument("map or frames do not match the mesh".into()));
    }
    let k = mesh::stiffness_matrix(mesh)?;
    let w = multiplier_masses(&k, phi);
    if !(w.iter().sum::<f64>() > 1e-12) {
        return Err(Error::ZeroEnergy);
    }
    let n = phi.ambient_dim - 1;
    let dim = mesh.num_vertices() * n;
    let mut q = DMatrix::zeros(dim, dim);
    for i in 0..mesh.num_vertices() {
        for (j, kij) in k.row(i) {
            for a in 0..n {
                for b in 0..n {
                    let e: f64 = frames[i][a].iter().zip(&frames[j][b]).map(|(x, y)| x * y).sum();
                    q[(i * n + a, j * n + b)] += kij * e;
                }
            }
        }
        for a in 0..n {
            q[(i * n + a, i * n + a)] -= 2.0 * w[i];
        }
    }
    Ok(q)
}

/// Half-width of the band around 0 in which eigenvalues of the normalized
/// `Q_E` count as kernel. The kernel of a harmonic map (conformal
/// reparametrizations, Möbius motions) splits by `O(h²)` on a mesh.
pub const KERNEL_BAND: f64 = 0.2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyIndex {
    /// Eigenvalues of `Q_E` relative to `|dΦ|²` below `−band`.
    pub ind_e: usize,
    /// Eigenvalues within `band` of 0.
    pub nul_e: usize,
    /// Negative eigenvalues below `−10⁻⁶·‖Q_E‖`, kernel splitting included.
    pub ind_e_strict: usize,
    /// Lowest normalized eigenvalues, ascending.
    pub low: Vec<f64>,
    pub band: f64,
    /// Distance from `−band` to the nearest eigenvalue.
    pub margin: f64,
}

/// `Q_E` in the normalization of the pencil `(Q_E, |dΦ|² ⊗ I)`; eigenvalues
/// are unchanged by conformal changes of the domain metric.
pub fn energy_index_with(mesh: &TriMesh, phi: &SphereMap, frames: &[Vec<Vec<f64>>], band: f64) -> Result<EnergyIndex> {
    let q = energy_form(mesh, phi, frames)?;
    let k = mesh::stiffness_matrix(mesh)?;
    let w = multiplier_masses(&k, phi);
    if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(format!("|dΦ|² vanishes at vertex {i}")));
    }
    let n = phi.ambient_dim - 1;
    let s: Vec<f64> = (0..q.nrows()).map(|r| 1.0 / (2.0 * w[r / n]).sqrt()).collect();
    let qs = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * s[i] * s[j]);
    let mut ev: Vec<f64> = SymmetricEigen::new(qs).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let norm = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(EnergyIndex {
        ind_e: ev.iter().filter(|&&v| v < -band).count(),
        nul_e: ev.iter().filter(|&&v| v.abs() <= band).count(),
        ind_e_strict: ev.iter().filter(|&&v| v < -1e-6 * norm).count(),
        margin: ev.iter().map(|v| (v + band).abs()).fold(f64::INFINITY, f64::min),
        low: ev.into_iter().take(16).collect(),
        band,
    })
}

pub fn energy_index(mesh: &TriMesh, phi: &SphereMap) -> Result<EnergyIndex> {
    energy_index_with(mesh, phi, &tangent_frames(phi)?, KERNEL_BAND)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexReport {
    #[serde(rename = "ind_S")]
    pub ind_s: usize,
    #[serde(rename = "nul_S")]
    pub nul_s: usize,
    #[serde(rename = "ind_E")]
    pub ind_e: usize,
    #[serde(rename = "nul_E")]
    pub nul_e: usize,
    #[serde(rename = "ind_E_strict")]
    pub ind_e_strict: usize,
    pub margins: Vec<f64>,
    pub normalization: String,
    pub unstable: bool,
}

pub fn index_report(mesh: &TriMesh, phi: &SphereMap) -> Result<IndexReport> {
    let s = spectral_index(mesh, phi)?;
    let e = energy_index(mesh, phi)?;
    Ok(IndexReport {
        ind_s: s.ind_s,
        nul_s: s.nul_s,
        ind_e: e.ind_e,
        nul_e: e.nul_e,
        ind_e_strict: e.ind_e_strict,
        margins: vec![s.margins[0], s.margins[1], e.margin],
        normalization: NORMALIZATION.into(),
        unstable: s.unstable,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompositionCheck {
    pub m: usize,
    /// `ind_E(i_{n,m} ∘ Φ)` from its own `Q_E`.
    pub lhs: usize,
    /// `ind_E(Φ) + (m − n)·ind_S(Φ)`.
    pub rhs: usize,
    pub equal: bool,
}

pub fn check_composition_law(mesh: &TriMesh, phi: &SphereMap, m: usize) -> Result<CompositionCheck> {
    let n = phi.ambient_dim - 1;
    if m < n {
        return Err(Error::InvalidArgument(format!("cannot include S^{n} into S^{m}")));
    }
    let lhs = energy_index(mesh, &include_equatorial(phi, m)?)?.ind_e;
    let rhs = energy_index(mesh, phi)?.ind_e + (m - n) * spectral_index(mesh, phi)?.ind_s;
    Ok(CompositionCheck {
        m,
        lhs,
        rhs,
        equal: lhs == rhs,
    })
}
