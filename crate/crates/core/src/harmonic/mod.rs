//! Maps into the unit sphere: Dirichlet energy, tension field, projected
//! flow, the induced density `½|dΦ|²` and the Hopf differential.

mod maps;

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{self, ConformalDensity, MeasureKind, MeshMeasure, TriMesh};
use crate::spectra::{self, SolverOpts, Spectrum};

pub use maps::{clifford_map, identity_map, include_equatorial, random_map, sphere_power_map, torus_elliptic_map};

const UNIT_TOL: f64 = 1e-12;

/// Per-vertex unit vectors in `R^{n+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereMap {
    pub ambient_dim: usize,
    pub values: Vec<Vec<f64>>,
}

impl SphereMap {
    pub fn new(ambient_dim: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        let m = SphereMap { ambient_dim, values };
        m.validate()?;
        Ok(m)
    }

    /// Normalizes every row; fails on zero rows.
    pub fn from_unnormalized(ambient_dim: usize, mut values: Vec<Vec<f64>>) -> Result<Self> {
        for (i, v) in values.iter_mut().enumerate() {
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Frame(i));
            }
            v.iter_mut().for_each(|x| *x /= r);
        }
        SphereMap::new(ambient_dim, values)
    }

    pub fn constant(num_vertices: usize, value: Vec<f64>) -> Result<Self> {
        let d = value.len();
        SphereMap::new(d, vec![value; num_vertices])
    }

    pub fn validate(&self) -> Result<()> {
        if self.ambient_dim < 3 {
            return Err(Error::InvalidArgument(format!(
                "ambient dimension must be at least 3, got {}",
                self.ambient_dim
            )));
        }
        for (i, v) in self.values.iter().enumerate() {
            if v.len() != self.ambient_dim {
                return Err(Error::InvalidArgument(format!("vertex {i} has {} components", v.len())));
            }
            let r2: f64 = v.iter().map(|x| x * x).sum();
            if !((r2.sqrt() - 1.0).abs() <= UNIT_TOL) {
                return Err(Error::Frame(i));
            }
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.values.len()
    }

    /// Coordinate `c` as a vertex function.
    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    /// Applies `g` to every value.
    pub fn map_values(&self, g: impl Fn(&[f64]) -> Vec<f64>) -> Result<SphereMap> {
        let values: Vec<Vec<f64>> = self.values.iter().map(|v| g(v)).collect();
        let d = values.first().map_or(self.ambient_dim, |v| v.len());
        SphereMap::new(d, values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sphere map serializes")
    }

    pub fn from_json(s: &str) -> Result<SphereMap> {
        let m: SphereMap = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }
}

fn check_len(mesh: &TriMesh, phi: &SphereMap) -> Result<()> {
    if phi.num_vertices() != mesh.num_vertices() {
        return Err(Error::InvalidArgument(format!(
            "map has {} values for {} vertices",
            phi.num_vertices(),
            mesh.num_vertices()
        )));
    }
    Ok(())
}

/// `½ Σ_c Φ_cᵀ K Φ_c`.
pub fn energy(mesh: &TriMesh, phi: &SphereMap) -> Result<f64> {
    check_len(mesh, phi)?;
    Ok(energy_masses(mesh, phi)?.iter().sum())
}

/// `½|dΦ|²` masses: each face's Dirichlet energy split equally among its
/// three corners. Sums to the energy.
pub(crate) fn energy_masses(mesh: &TriMesh, phi: &SphereMap) -> Result<Vec<f64>> {
    let mut w = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let cot = mesh::corner_cotangents(mesh, t)?;
        let mut e = 0.0;
        for k in 0..3 {
            let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let d2: f64 = phi.values[i].iter().zip(&phi.values[j]).map(|(a, b)| (a - b).powi(2)).sum();
            e += 0.25 * cot[k] * d2;
        }
        for &v in tri {
            w[v] += e / 3.0;
        }
    }
    Ok(w)
}

/// `½|dΦ|²` as a density against the background vertex areas. Its lumped
/// mass is exactly [`energy`].
pub fn energy_density(mesh: &TriMesh, phi: &SphereMap) -> Result<ConformalDensity> {
    check_len(mesh, phi)?;
    let w = energy_masses(mesh, phi)?;
    let areas = mesh::vertex_areas(mesh);
    Ok(ConformalDensity::new(w.iter().zip(&areas).map(|(w, a)| w / a).collect()))
}

/// The measure `½|dΦ|² dv`.
pub fn energy_measure(mesh: &TriMesh, phi: &SphereMap) -> Result<MeshMeasure> {
    check_len(mesh, phi)?;
    Ok(MeshMeasure {
        kind: MeasureKind::Volume,
        weights: energy_masses(mesh, phi)?,
    })
}

/// `½⟨Φ_i, (KΦ)_i⟩`: half the Lagrange multiplier of the unit constraint in
/// the discrete harmonic map equation `(KΦ)_i = ν_i Φ_i`. Coordinates of a
/// discretely harmonic map are exact eigenfunctions with eigenvalue 2 for
/// this lumping of `½|dΦ|²`, and it sums to the energy of a unit map.
pub(crate) fn multiplier_masses(k: &CsrMatrix, phi: &SphereMap) -> Vec<f64> {
    let mut w = vec![0.0; k.dim()];
    for c in 0..phi.ambient_dim {
        let kc = k.mul_vec(&phi.coordinate(c));
        for i in 0..k.dim() {
            w[i] += 0.5 * kc[i] * phi.values[i][c];
        }
    }
    w
}

/// The measure `½|dΦ|² dv` lumped by [`multiplier_masses`]; used for the
/// spectral tests of harmonic maps.
pub fn multiplier_measure(mesh: &TriMesh, phi: &SphereMap) -> Result<MeshMeasure> {
    check_len(mesh, phi)?;
    let k = mesh::stiffness_matrix(mesh)?;
    Ok(MeshMeasure {
        kind: MeasureKind::Volume,
        weights: multiplier_masses(&k, phi),
    })
}

/// Per-vertex lumped tension: the part of `KΦ` tangent to the sphere at
/// each vertex, i.e. `KΦ − ⟨Φ, KΦ⟩Φ`.
pub(crate) fn tension_field(k: &CsrMatrix, phi: &SphereMap) -> Vec<Vec<f64>> {
    let d = phi.ambient_dim;
    let mut out = vec![vec![0.0; d]; k.dim()];
    for c in 0..d {
        let kc = k.mul_vec(&phi.coordinate(c));
        for i in 0..k.dim() {
            out[i][c] = kc[i];
        }
    }
    for (t, p) in out.iter_mut().zip(&phi.values) {
        let s: f64 = t.iter().zip(p).map(|(a, b)| a * b).sum();
        t.iter_mut().zip(p).for_each(|(a, b)| *a -= s * b);
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensionResidual {
    /// `|M⁻¹ τ|` per vertex.
    pub per_vertex: Vec<f64>,
    /// `‖M⁻¹τ‖ / ‖M⁻¹KΦ‖` in `L²(M)`; 0 for constant maps.
    pub aggregate: f64,
}

pub fn tension_residual(mesh: &TriMesh, phi: &SphereMap) -> Result<TensionResidual> {
    check_len(mesh, phi)?;
    let k = mesh::stiffness_matrix(mesh)?;
    let areas = mesh::vertex_areas(mesh);
    let tau = tension_field(&k, phi);
    let per_vertex: Vec<f64> = tau
        .iter()
        .zip(&areas)
        .map(|(t, a)| t.iter().map(|x| x * x).sum::<f64>().sqrt() / a)
        .collect();
    let num: f64 = per_vertex.iter().zip(&areas).map(|(r, a)| a * r * r).sum();
    let mut den = 0.0;
    for c in 0..phi.ambient_dim {
        let kc = k.mul_vec(&phi.coordinate(c));
        den += kc.iter().zip(&areas).map(|(x, a)| x * x / a).sum::<f64>();
    }
    let aggregate = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    Ok(TensionResidual { per_vertex, aggregate })
}

/// Largest stable explicit step: `1 / max_i (K_ii / A_i)`.
pub fn flow_step_bound(mesh: &TriMesh) -> Result<f64> {
    let k = mesh::stiffness_matrix(mesh)?;
    let areas = mesh::vertex_areas(mesh);
    let m = k.diagonal().iter().zip(&areas).map(|(d, a)| d / a).fold(0.0, f64::max);
    Ok(1.0 / m)
}

/// Projected explicit tension flow `Φ ← normalize(Φ − dt·M⁻¹τ)`.
pub fn harmonic_flow(mesh: &TriMesh, phi0: &SphereMap, steps: usize, dt: f64) -> Result<SphereMap> {
    Ok(harmonic_flow_traced(mesh, phi0, steps, dt)?.0)
}

/// As [`harmonic_flow`], also returning the energy after every step
/// (starting with the initial energy).
pub fn harmonic_flow_traced(mesh: &TriMesh, phi0: &SphereMap, steps: usize, dt: f64) -> Result<(SphereMap, Vec<f64>)> {
    check_len(mesh, phi0)?;
    phi0.validate()?;
    let bound = flow_step_bound(mesh)?;
    if !(dt > 0.0) || dt >= bound {
        return Err(Error::Unstable { dt, bound });
    }
    let k = mesh::stiffness_matrix(mesh)?;
    let areas = mesh::vertex_areas(mesh);
    let mut phi = phi0.clone();
    let mut energies = vec![energy(mesh, &phi)?];
    for _ in 0..steps {
        let tau = tension_field(&k, &phi);
        for ((v, t), a) in phi.values.iter_mut().zip(&tau).zip(&areas) {
            for (x, y) in v.iter_mut().zip(t) {
                *x -= dt * y / a;
            }
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= r);
        }
        energies.push(energy(mesh, &phi)?);
    }
    Ok((phi, energies))
}

/// Flow with half the stable step until the aggregate tension residual is
/// below `tol` or stops decreasing (checked every `chunk` steps). Returns the
/// map with the smallest residual seen.
pub fn relax_harmonic(mesh: &TriMesh, phi0: &SphereMap, tol: f64, max_steps: usize) -> Result<(SphereMap, f64)> {
    let dt = 0.5 * flow_step_bound(mesh)?;
    let chunk = 250;
    let mut best = phi0.clone();
    let mut best_res = tension_residual(mesh, phi0)?.aggregate;
    let mut steps = 0;
    while best_res > tol && steps < max_steps {
        let next = harmonic_flow(mesh, &best, chunk.min(max_steps - steps), dt)?;
        steps += chunk;
        let r = tension_residual(mesh, &next)?.aggregate;
        if r >= best_res {
            break;
        }
        best = next;
        best_res = r;
    }
    Ok((best, best_res))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenTwoReport {
    pub present: bool,
    pub multiplicity: usize,
    /// Distance from 2 to the nearest eigenvalue not counted as 2.
    pub gap: f64,
    pub spectrum: Vec<f64>,
}

/// Eigenvalues of the measure `½|dΦ|² dv` (see [`multiplier_measure`]);
/// coordinates of a harmonic `Φ` are eigenfunctions with eigenvalue 2.
pub fn check_eigenvalue_two(mesh: &TriMesh, phi: &SphereMap) -> Result<EigenTwoReport> {
    let spec = energy_spectrum(mesh, phi, 1.0)?;
    let mult = spec.multiplicity(2.0);
    let tol = spec.cluster_tol * 2.0;
    let gap = spec
        .values
        .iter()
        .filter(|&&v| (v - 2.0).abs() > tol)
        .map(|v| (v - 2.0).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(EigenTwoReport {
        present: mult > 0,
        multiplicity: mult,
        gap,
        spectrum: spec.values,
    })
}

/// Spectrum of `K v = λ (c·w) v` for the multiplier masses `w`, enough pairs to
/// pass `2/c` by one cluster when the rank allows.
pub(crate) fn energy_spectrum(mesh: &TriMesh, phi: &SphereMap, c: f64) -> Result<Spectrum> {
    check_len(mesh, phi)?;
    let mu = multiplier_measure(mesh, phi)?;
    if !(mu.total_mass() > 1e-12) {
        return Err(Error::ZeroEnergy);
    }
    let mu = mu.scaled(c);
    let stiff = mesh::stiffness_matrix(mesh)?;
    let rank = mu.rank();
    let target = 2.0 / c;
    let opts = SolverOpts::default();
    let mut k = 8.min(rank - 1);
    loop {
        let spec = spectra::measure_eigs_stiffness(&stiff, &mu, k, &opts)?;
        let top = *spec.values.last().unwrap();
        if top > target * (1.0 + 4.0 * opts.cluster_tol) || k + 1 >= rank {
            return Ok(spec);
        }
        k = (2 * k).min(rank - 1);
    }
}

/// Per-face `|Φ_x|² − |Φ_y|² − 2i⟨Φ_x,Φ_y⟩` in a chart whose real axis is the
/// face's first edge.
#[derive(Clone, Debug, PartialEq)]
pub struct HopfField {
    pub values: Vec<Complex64>,
}

impl HopfField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("face_id,re,im,abs\n");
        for (i, z) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i},{:?},{:?},{:?}", z.re, z.im, z.norm());
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn hopf_differential(mesh: &TriMesh, phi: &SphereMap) -> Result<HopfField> {
    check_len(mesh, phi)?;
    let mut values = Vec::with_capacity(mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[t];
        let c = mesh.corners(t);
        let e1 = mesh::sub(c[1], c[0]);
        let e2 = mesh::sub(c[2], c[0]);
        let l = mesh::norm(e1);
        let n = mesh::cross(e1, e2);
        let nn = mesh::norm(n);
        if !(l > 0.0 && nn > 0.0) {
            return Err(Error::DegenerateTriangle(t));
        }
        let x2 = mesh::dot(e2, e1) / l;
        let y2 = nn / l;
        let d = phi.ambient_dim;
        let p = |k: usize| &phi.values[tri[k]];
        let mut fx = vec![0.0; d];
        let mut fy = vec![0.0; d];
        for i in 0..d {
            fx[i] = (p(1)[i] - p(0)[i]) / l;
            fy[i] = (p(2)[i] - p(0)[i] - x2 * fx[i]) / y2;
        }
        let xx: f64 = fx.iter().map(|a| a * a).sum();
        let yy: f64 = fy.iter().map(|a| a * a).sum();
        let xy: f64 = fx.iter().zip(&fy).map(|(a, b)| a * b).sum();
        values.push(Complex64::new(xx - yy, -2.0 * xy));
    }
    Ok(HopfField { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_sphere_mesh, build_torus_mesh};
    use std::f64::consts::PI;

    #[test]
    fn constant_map_is_trivial() {
        let m = build_sphere_mesh(2);
        let phi = SphereMap::constant(m.num_vertices(), vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(energy(&m, &phi).unwrap(), 0.0);
        let r = tension_residual(&m, &phi).unwrap();
        assert!(r.per_vertex.iter().all(|&x| x == 0.0));
        assert_eq!(r.aggregate, 0.0);
        assert!(energy_density(&m, &phi).unwrap().f.iter().all(|&x| x == 0.0));
        assert!(matches!(check_eigenvalue_two(&m, &phi), Err(Error::ZeroEnergy)));
        assert_eq!(hopf_differential(&m, &phi).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn sphere_map_validation() {
        assert!(SphereMap::new(3, vec![vec![1.0, 0.0, 0.0]]).is_ok());
        assert!(SphereMap::new(3, vec![vec![1.1, 0.0, 0.0]]).is_err());
        assert!(SphereMap::new(2, vec![vec![1.0, 0.0]]).is_err());
        assert!(SphereMap::from_unnormalized(3, vec![vec![0.0; 3]]).is_err());
        let m = SphereMap::from_unnormalized(3, vec![vec![3.0, 4.0, 0.0]]).unwrap();
        assert_eq!(SphereMap::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn identity_energy_and_density() {
        let m = build_sphere_mesh(3);
        let phi = identity_map(&m).unwrap();
        let e = energy(&m, &phi).unwrap();
        assert!((e / (4.0 * PI) - 1.0).abs() < 0.01, "{e}");
        let f = energy_density(&m, &phi).unwrap();
        let mass = mesh::area(&m, &f);
        assert!((mass - e).abs() < 1e-10 * e);
        assert!(f.f.iter().all(|&x| (x - 1.0).abs() < 0.02));
    }

    #[test]
    fn identity_has_eigenvalue_two() {
        let m = build_sphere_mesh(3);
        let phi = identity_map(&m).unwrap();
        let r = check_eigenvalue_two(&m, &phi).unwrap();
        assert!(r.present);
        assert_eq!(r.multiplicity, 3);
        assert!(r.gap > 1.0);
        let mu = multiplier_measure(&m, &phi).unwrap();
        assert!((mu.total_mass() - energy(&m, &phi).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn flow_rejects_large_steps() {
        let m = build_sphere_mesh(1);
        let phi = identity_map(&m).unwrap();
        let b = flow_step_bound(&m).unwrap();
        assert!(matches!(harmonic_flow(&m, &phi, 1, 2.0 * b), Err(Error::Unstable { .. })));
    }

    #[test]
    fn hopf_of_uneven_speeds_on_torus() {
        let m = build_torus_mesh((0.0, 1.0), 32).unwrap();
        // geodesic circle in the (x0, x1) plane traversed by 2πx + 4πy
        let vals = m
            .vertices()
            .iter()
            .map(|p| {
                let s = 2.0 * PI * p[0] + 4.0 * PI * p[1];
                vec![s.cos(), s.sin(), 0.0]
            })
            .collect();
        let phi = SphereMap::new(3, vals).unwrap();
        let h = hopf_differential(&m, &phi).unwrap();
        // |H| = |(2π)² − (4π)² − 2i·8π²| = 20π² in any rotated chart
        let exact = 20.0 * PI * PI;
        assert!(h.values.iter().all(|z| (z.norm() / exact - 1.0).abs() < 0.05));
        let csv = h.to_csv();
        assert!(csv.starts_with("face_id,re,im,abs\n"));
        assert_eq!(csv.lines().count(), m.num_triangles() + 1);
    }
}
