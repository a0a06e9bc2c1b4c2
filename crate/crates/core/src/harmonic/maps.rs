use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SphereMap;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Inverse stereographic projection of `p/q` from the north pole.
fn from_projective(p: Complex64, q: Complex64) -> Vec<f64> {
    let pq = p * q.conj();
    let (a, b) = (p.norm_sqr(), q.norm_sqr());
    let s = a + b;
    vec![2.0 * pq.re / s, 2.0 * pq.im / s, (a - b) / s]
}

/// Vertex positions normalized onto the unit sphere.
pub fn identity_map(mesh: &TriMesh) -> Result<SphereMap> {
    SphereMap::from_unnormalized(3, mesh.vertices().iter().map(|v| v.to_vec()).collect())
}

/// `i_{n,m} ∘ Φ`: pads with zero coordinates up to `R^{m+1}`.
pub fn include_equatorial(phi: &SphereMap, m: usize) -> Result<SphereMap> {
    if m + 1 < phi.ambient_dim {
        return Err(Error::InvalidArgument(format!(
            "cannot include S^{} into S^{m}",
            phi.ambient_dim - 1
        )));
    }
    phi.map_values(|v| {
        let mut w = v.to_vec();
        w.resize(m + 1, 0.0);
        w
    })
}

/// `z ↦ z^d` in the stereographic chart, applied to the normalized vertex
/// positions: a branched conformal map of degree `d`.
pub fn sphere_power_map(mesh: &TriMesh, d: u32) -> Result<SphereMap> {
    if d == 0 {
        return Err(Error::InvalidArgument("degree must be positive".into()));
    }
    let id = identity_map(mesh)?;
    id.map_values(|v| {
        // [x+iy : 1−z] = [1+z : x−iy]; use whichever pair is far from 0
        let (p, q) = if v[2] <= 0.0 {
            (Complex64::new(v[0], v[1]), Complex64::new(1.0 - v[2], 0.0))
        } else {
            (Complex64::new(1.0 + v[2], 0.0), Complex64::new(v[0], -v[1]))
        };
        from_projective(p.powu(d), q.powu(d))
    })
}

fn lattice_coords(mesh: &TriMesh) -> Result<(Vec<(f64, f64)>, (f64, f64))> {
    let chart = mesh
        .chart()
        .ok_or_else(|| Error::InvalidArgument("map needs a flat torus chart".into()))?;
    let (re, im) = chart.tau;
    let s = chart.scale;
    let coords = mesh
        .vertices()
        .iter()
        .map(|p| {
            let t = p[1] / (s * im);
            (p[0] / s - t * re, t)
        })
        .collect();
    Ok((coords, chart.tau))
}

/// Jacobi theta functions `θ₁(z|q)`, `θ₄(z|q)`.
fn theta14(z: Complex64, q: Complex64) -> (Complex64, Complex64) {
    let mut t1 = Complex64::new(0.0, 0.0);
    let mut t4 = Complex64::new(1.0, 0.0);
    for n in 0..30 {
        let nf = n as f64;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let q1 = q.powf((nf + 0.5) * (nf + 0.5));
        t1 += 2.0 * sign * q1 * ((2.0 * nf + 1.0) * z).sin();
        if n > 0 {
            t4 += 2.0 * sign * q.powf(nf * nf) * (2.0 * nf * z).cos();
        }
    }
    (t1, t4)
}

/// Degree-2 holomorphic map of the flat torus `C/(Z+τZ)` onto the sphere:
/// `(θ₄(πz)/θ₁(πz))²` composed with inverse stereographic projection.
/// Branched at the four half-periods.
pub fn torus_elliptic_map(mesh: &TriMesh) -> Result<SphereMap> {
    let (coords, (re, im)) = lattice_coords(mesh)?;
    let tau = Complex64::new(re, im);
    let q = (Complex64::i() * PI * tau).exp();
    let values = coords
        .iter()
        .map(|&(s, t)| {
            let z = PI * (Complex64::new(s, 0.0) + t * tau);
            let (t1, t4) = theta14(z, q);
            from_projective(t4 * t4, t1 * t1)
        })
        .collect();
    SphereMap::from_unnormalized(3, values)
}

/// `(cos 2πs, sin 2πs, cos 2πt, sin 2πt)/√2` in lattice coordinates: the
/// Clifford torus in `S³`, conformal for the square lattice.
pub fn clifford_map(mesh: &TriMesh) -> Result<SphereMap> {
    let (coords, _) = lattice_coords(mesh)?;
    let r = 0.5f64.sqrt();
    let values = coords
        .iter()
        .map(|&(s, t)| {
            let (a, b) = (2.0 * PI * s, 2.0 * PI * t);
            vec![r * a.cos(), r * a.sin(), r * b.cos(), r * b.sin()]
        })
        .collect();
    SphereMap::from_unnormalized(4, values)
}

/// Independent uniformly distributed unit vectors.
pub fn random_map(num_vertices: usize, ambient_dim: usize, seed: u64) -> Result<SphereMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..num_vertices)
        .map(|_| loop {
            let v: Vec<f64> = (0..ambient_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r2: f64 = v.iter().map(|x| x * x).sum();
            if r2 > 1e-4 && r2 <= 1.0 {
                break v;
            }
        })
        .collect();
    SphereMap::from_unnormalized(ambient_dim, values)
}
