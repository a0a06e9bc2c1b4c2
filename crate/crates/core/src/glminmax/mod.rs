//! Ginzburg-Landau energy `E_ε(u) = ∫ ½|du|² + (1−|u|²)²/(4ε²)` of vector
//! maps, its variations and descent, and sampled min-max over the Möbius
//! and cap-reflection families.

mod family;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::SphereMap;
use crate::linalg::{CsrMatrix, SparseCholesky};
use crate::mesh::{self, TriMesh};

pub use family::{
    balanced_point, balanced_point_second, dimension_lift_check, eigen_lower_from_family, extract_critical, extract_schedule,
    family_first, family_second, minmax_upper, sweep_csv, Balanced, BalancedSecond, Critical, EigenLower, Family,
    FamilyKind, FamilySpec, LiftCheck, MinMaxReport, SweepRow, sandwich_bound,
};

/// Per-vertex vectors in `R^{n+1}` without a norm constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorMap {
    pub ambient_dim: usize,
    pub values: Vec<Vec<f64>>,
}

impl VectorMap {
    pub fn zeros(num_vertices: usize, ambient_dim: usize) -> Self {
        VectorMap {
            ambient_dim,
            values: vec![vec![0.0; ambient_dim]; num_vertices],
        }
    }

    pub fn constant(num_vertices: usize, value: &[f64]) -> Self {
        VectorMap {
            ambient_dim: value.len(),
            values: vec![value.to_vec(); num_vertices],
        }
    }

    pub fn from_sphere(phi: &SphereMap) -> Self {
        VectorMap {
            ambient_dim: phi.ambient_dim,
            values: phi.values.clone(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.values.len()
    }

    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    fn from_coordinates(cols: &[Vec<f64>]) -> Self {
        let n = cols.first().map_or(0, |c| c.len());
        VectorMap {
            ambient_dim: cols.len(),
            values: (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect(),
        }
    }

    /// Radial projection onto the sphere; fails where `u` vanishes.
    pub fn normalized(&self) -> Result<SphereMap> {
        SphereMap::from_unnormalized(self.ambient_dim, self.values.clone())
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &VectorMap) -> VectorMap {
        VectorMap {
            ambient_dim: self.ambient_dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> VectorMap {
        VectorMap {
            ambient_dim: self.ambient_dim,
            values: self.values.iter().map(|v| v.iter().map(|x| s * x).collect()).collect(),
        }
    }

    /// Euclidean pairing of the stacked coefficient vectors.
    pub fn dot(&self, other: &VectorMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    /// Apply an orthogonal (or any linear) map `r` to every value.
    pub fn transformed(&self, r: impl Fn(&[f64]) -> Vec<f64>) -> VectorMap {
        VectorMap {
            ambient_dim: self.ambient_dim,
            values: self.values.iter().map(|v| r(v)).collect(),
        }
    }
}

/// Stiffness and lumped mass of a mesh, shared by repeated evaluations.
#[derive(Clone, Debug)]
pub struct GlForms {
    pub stiff: CsrMatrix,
    pub mass: Vec<f64>,
}

impl GlForms {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        Ok(GlForms {
            stiff: mesh::stiffness_matrix(mesh)?,
            mass: mesh::vertex_areas(mesh),
        })
    }

    fn check(&self, u: &VectorMap, eps: f64) -> Result<()> {
        if u.num_vertices() != self.mass.len() {
            return Err(Error::InvalidArgument(format!(
                "map has {} values for {} vertices",
                u.num_vertices(),
                self.mass.len()
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
        }
        Ok(())
    }

    /// `(Dirichlet, potential)` parts of `E_ε`.
    pub fn energy_parts(&self, u: &VectorMap, eps: f64) -> (f64, f64) {
        // edge differences so that constants give exactly zero
        let mut dir = 0.0;
        for i in 0..self.stiff.dim() {
            for (j, k) in self.stiff.row(i) {
                if j > i {
                    let d2: f64 = u.values[i].iter().zip(&u.values[j]).map(|(a, b)| (a - b).powi(2)).sum();
                    dir -= 0.5 * k * d2;
                }
            }
        }
        let pot: f64 = u
            .values
            .iter()
            .zip(&self.mass)
            .map(|(v, m)| {
                let s = 1.0 - v.iter().map(|x| x * x).sum::<f64>();
                m * s * s
            })
            .sum::<f64>()
            / (4.0 * eps * eps);
        (dir, pot)
    }

    pub fn energy(&self, u: &VectorMap, eps: f64) -> f64 {
        let (d, p) = self.energy_parts(u, eps);
        d + p
    }

    /// Coefficients `Ku − ε⁻² M (1−|u|²) u`: `⟨E'(u), v⟩` is their Euclidean
    /// pairing with `v`.
    pub fn gradient(&self, u: &VectorMap, eps: f64) -> VectorMap {
        let cols: Vec<Vec<f64>> = (0..u.ambient_dim).map(|c| self.stiff.mul_vec(&u.coordinate(c))).collect();
        let mut g = VectorMap::from_coordinates(&cols);
        let e2 = 1.0 / (eps * eps);
        for ((gi, ui), m) in g.values.iter_mut().zip(&u.values).zip(&self.mass) {
            let s = 1.0 - ui.iter().map(|x| x * x).sum::<f64>();
            for (g, x) in gi.iter_mut().zip(ui) {
                *g -= e2 * m * s * x;
            }
        }
        g
    }

    /// `⟨E''(u) v, w⟩ = ∫⟨dv,dw⟩ + ε⁻²(2⟨u,v⟩⟨u,w⟩ − (1−|u|²)⟨v,w⟩)`.
    pub fn hessian(&self, u: &VectorMap, eps: f64, v: &VectorMap, w: &VectorMap) -> f64 {
        let dir: f64 = (0..u.ambient_dim)
            .map(|c| self.stiff.bilinear(&v.coordinate(c), &w.coordinate(c)))
            .sum();
        let e2 = 1.0 / (eps * eps);
        let pot: f64 = (0..u.num_vertices())
            .map(|i| {
                let (ui, vi, wi) = (&u.values[i], &v.values[i], &w.values[i]);
                let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                self.mass[i] * (2.0 * d(ui, vi) * d(ui, wi) - (1.0 - d(ui, ui)) * d(vi, wi))
            })
            .sum();
        dir + e2 * pot
    }

    /// `E_ε(u + s·d) − E_ε(u)` as an exact quartic in `s`, free of the
    /// cancellation in differencing two energies.
    pub fn line(&self, u: &VectorMap, d: &VectorMap, eps: f64) -> LineEnergy {
        let (mut ud, mut dd) = (0.0, 0.0);
        for c in 0..u.ambient_dim {
            let dc = d.coordinate(c);
            let kd = self.stiff.mul_vec(&dc);
            ud += u.coordinate(c).iter().zip(&kd).map(|(a, b)| a * b).sum::<f64>();
            dd += dc.iter().zip(&kd).map(|(a, b)| a * b).sum::<f64>();
        }
        let vertex = (0..u.num_vertices())
            .map(|i| {
                let (ui, di) = (&u.values[i], &d.values[i]);
                let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                [self.mass[i], 1.0 - dot(ui, ui), dot(ui, di), dot(di, di)]
            })
            .collect();
        LineEnergy {
            ud,
            dd,
            vertex,
            scale: 1.0 / (4.0 * eps * eps),
        }
    }

    /// `sqrt(Σ |g_i|² / M_i)`: the `L²` norm of the lumped gradient density.
    pub fn gradient_norm(&self, g: &VectorMap) -> f64 {
        g.values
            .iter()
            .zip(&self.mass)
            .map(|(v, m)| v.iter().map(|x| x * x).sum::<f64>() / m)
            .sum::<f64>()
            .sqrt()
    }
}

/// See [`GlForms::line`].
pub struct LineEnergy {
    ud: f64,
    dd: f64,
    /// `(M_i, 1−|u_i|², ⟨u_i,d_i⟩, |d_i|²)`
    vertex: Vec<[f64; 4]>,
    scale: f64,
}

impl LineEnergy {
    pub fn change(&self, s: f64) -> f64 {
        let pot: f64 = self
            .vertex
            .iter()
            .map(|&[m, q, ud, dd]| {
                let delta = 2.0 * s * ud + s * s * dd;
                m * delta * (delta - 2.0 * q)
            })
            .sum();
        s * self.ud + 0.5 * s * s * self.dd + self.scale * pot
    }
}

pub fn gl_energy(mesh: &TriMesh, u: &VectorMap, eps: f64) -> Result<f64> {
    let f = GlForms::new(mesh)?;
    f.check(u, eps)?;
    Ok(f.energy(u, eps))
}

pub fn gl_gradient(mesh: &TriMesh, u: &VectorMap, eps: f64) -> Result<VectorMap> {
    let f = GlForms::new(mesh)?;
    f.check(u, eps)?;
    Ok(f.gradient(u, eps))
}

pub fn gl_second_variation(mesh: &TriMesh, u: &VectorMap, eps: f64, v: &VectorMap) -> Result<f64> {
    let f = GlForms::new(mesh)?;
    f.check(u, eps)?;
    f.check(v, eps)?;
    Ok(f.hessian(u, eps, v, v))
}

/// Implicit lumped heat step `(M + tK)⁻¹ M`, applied coordinate-wise.
#[derive(Clone, Debug)]
pub struct Mollifier {
    chol: SparseCholesky,
    mass: Vec<f64>,
}

impl Mollifier {
    pub fn new(forms: &GlForms, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("mollification time must be positive, got {t}")));
        }
        Ok(Mollifier {
            chol: SparseCholesky::factor(&forms.stiff.scaled(t).add_diagonal(&forms.mass))?,
            mass: forms.mass.clone(),
        })
    }

    pub fn apply(&self, f: &VectorMap) -> VectorMap {
        let cols: Vec<Vec<f64>> = (0..f.ambient_dim)
            .map(|c| {
                let rhs: Vec<f64> = f.coordinate(c).iter().zip(&self.mass).map(|(x, m)| x * m).collect();
                self.chol.solve(&rhs)
            })
            .collect();
        VectorMap::from_coordinates(&cols)
    }
}

pub fn mollify(mesh: &TriMesh, f: &VectorMap, t: f64) -> Result<VectorMap> {
    let forms = GlForms::new(mesh)?;
    Ok(Mollifier::new(&forms, t)?.apply(f))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DescentOpts {
    /// Stop when the gradient norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Size of a random perturbation added to the start, drawn from `seed`.
    pub perturbation: f64,
    pub seed: u64,
    /// L-BFGS memory.
    pub memory: usize,
    /// Stay on the affine space `∫u dv = 0` through the start's projection.
    pub balanced: bool,
}

impl Default for DescentOpts {
    fn default() -> Self {
        DescentOpts {
            tol: 1e-6,
            max_iter: 2000,
            perturbation: 0.0,
            seed: 0x5eed,
            memory: 8,
            balanced: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Descent {
    pub map: VectorMap,
    pub energy: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

pub fn gl_descend(mesh: &TriMesh, u0: &VectorMap, eps: f64, opts: &DescentOpts) -> Result<Descent> {
    let forms = GlForms::new(mesh)?;
    descend_with(&forms, u0, eps, opts)
}

/// L-BFGS preconditioned by `K + M` with Armijo backtracking; the energy
/// never increases.
pub fn descend_with(forms: &GlForms, u0: &VectorMap, eps: f64, opts: &DescentOpts) -> Result<Descent> {
    forms.check(u0, eps)?;
    let precond = SparseCholesky::factor(&forms.stiff.add_diagonal(&forms.mass))?;
    let apply_p = |g: &VectorMap| -> VectorMap {
        let cols: Vec<Vec<f64>> = (0..g.ambient_dim).map(|c| precond.solve(&g.coordinate(c))).collect();
        VectorMap::from_coordinates(&cols)
    };
    let mut u = u0.clone();
    if opts.perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for v in u.values.iter_mut() {
            for x in v.iter_mut() {
                *x += opts.perturbation * rng.gen_range(-1.0..1.0);
            }
        }
    }
    let total: f64 = forms.mass.iter().sum();
    let remove_mean = |v: &mut VectorMap, weighted: bool| {
        for c in 0..v.ambient_dim {
            let m: f64 = if weighted {
                v.values.iter().zip(&forms.mass).map(|(x, w)| w * x[c]).sum::<f64>() / total
            } else {
                v.values.iter().map(|x| x[c]).sum::<f64>() / total
            };
            for (x, w) in v.values.iter_mut().zip(&forms.mass) {
                x[c] -= if weighted { m } else { m * w };
            }
        }
    };
    // with P = K + M, P⁻¹ maps zero-sum gradients to mass-balanced directions
    let grad = |u: &VectorMap| {
        let mut g = forms.gradient(u, eps);
        if opts.balanced {
            remove_mean(&mut g, false);
        }
        g
    };
    if opts.balanced {
        remove_mean(&mut u, true);
    }
    let mut g = grad(&u);
    let mut gn = forms.gradient_norm(&g);
    let mut hist: VecDeque<(VectorMap, VectorMap, f64)> = VecDeque::new();
    let mut iterations = 0;
    while gn > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * s.dot(&q);
            q = q.axpy(-a, y);
            alphas.push(a);
        }
        let mut r = apply_p(&q);
        if let Some((s, y, _)) = hist.back() {
            let py = apply_p(y);
            let gamma = s.dot(y) / y.dot(&py);
            r = r.scaled(gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&r);
            r = r.axpy(a - b, s);
        }
        let mut d = r.scaled(-1.0);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            hist.clear();
            d = apply_p(&g).scaled(-1.0);
            slope = g.dot(&d);
        }
        let line = forms.line(&u, &d, eps);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let de = line.change(step);
            if de <= 1e-4 * step * slope {
                accepted = Some((u.axpy(step, &d), de));
                break;
            }
            step *= 0.5;
        }
        let Some((un, de)) = accepted else { break };
        let gnew = grad(&un);
        let s = un.axpy(-1.0, &u);
        let y = gnew.axpy(-1.0, &g);
        let sy = s.dot(&y);
        if sy > 1e-300 {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.pop_front();
            }
        }
        u = un;
        g = gnew;
        gn = forms.gradient_norm(&g);
        if de == 0.0 {
            break;
        }
    }
    let e = forms.energy(&u, eps);
    Ok(Descent {
        energy: e,
        gradient_norm: gn,
        converged: gn <= opts.tol,
        iterations,
        seed: opts.seed,
        map: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::identity_map;
    use crate::mesh::{build_sphere_mesh, build_torus_mesh};
    use std::f64::consts::PI;

    #[test]
    fn energy_anchor_values() {
        let m = build_torus_mesh((0.0, 1.0), 8).unwrap();
        let n = m.num_vertices();
        assert!(gl_energy(&m, &VectorMap::constant(n, &[0.0, 1.0, 0.0]), 0.1).unwrap().abs() < 1e-12);
        let e = gl_energy(&m, &VectorMap::zeros(n, 3), 0.1).unwrap();
        assert!((e - 1.0 / (4.0 * 0.01)).abs() < 1e-10);
        assert!(gl_energy(&m, &VectorMap::zeros(n, 3), 0.0).is_err());
    }

    #[test]
    fn identity_energy_is_independent_of_eps() {
        let m = build_sphere_mesh(3);
        let u = VectorMap::from_sphere(&identity_map(&m).unwrap());
        let e1 = gl_energy(&m, &u, 0.2).unwrap();
        let e2 = gl_energy(&m, &u, 0.05).unwrap();
        assert!((e1 - e2).abs() < 1e-9);
        assert!((e1 / (4.0 * PI) - 1.0).abs() < 0.01);
    }

    #[test]
    fn radial_gradient_restores_unit_norm() {
        let m = build_sphere_mesh(1);
        let n = m.num_vertices();
        let u = VectorMap::constant(n, &[0.0, 0.0, 1.1]);
        let g = gl_gradient(&m, &u, 0.1).unwrap();
        // descent direction −g points inward
        assert!(g.values.iter().all(|v| v[2] > 0.0 && v[0].abs() < 1e-12));
        let u = VectorMap::constant(n, &[0.0, 0.0, 0.9]);
        let g = gl_gradient(&m, &u, 0.1).unwrap();
        assert!(g.values.iter().all(|v| v[2] < 0.0));
    }

    #[test]
    fn second_variation_tangent_constant_is_zero() {
        let m = build_sphere_mesh(1);
        let n = m.num_vertices();
        let u = VectorMap::constant(n, &[0.0, 0.0, 1.0]);
        let v = VectorMap::constant(n, &[1.0, 0.0, 0.0]);
        assert!(gl_second_variation(&m, &u, 0.1, &v).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mollifier_properties() {
        let m = build_sphere_mesh(2);
        let n = m.num_vertices();
        let c = VectorMap::constant(n, &[0.6, 0.8, 0.0]);
        let mc = mollify(&m, &c, 0.5).unwrap();
        assert!(mc.axpy(-1.0, &c).values.iter().flatten().all(|x| x.abs() < 1e-12));
        let u = VectorMap::from_sphere(&identity_map(&m).unwrap());
        let forms = GlForms::new(&m).unwrap();
        let before = forms.energy_parts(&u, 1.0).0;
        let after = forms.energy_parts(&mollify(&m, &u, 0.01).unwrap(), 1.0).0;
        assert!(after < before);
        let tiny = mollify(&m, &u, 1e-8).unwrap();
        assert!(tiny.axpy(-1.0, &u).values.iter().flatten().all(|x| x.abs() < 1e-6));
        assert!(mollify(&m, &u, 0.0).is_err());
    }

    #[test]
    fn descent_from_unit_constant_is_immediate() {
        let m = build_sphere_mesh(1);
        let u = VectorMap::constant(m.num_vertices(), &[1.0, 0.0, 0.0]);
        let d = gl_descend(&m, &u, 0.1, &DescentOpts::default()).unwrap();
        assert_eq!(d.iterations, 0);
        assert!(d.converged);
        assert!(d.energy.abs() < 1e-12);
    }

    #[test]
    fn descent_from_zero_falls_into_the_well() {
        let m = build_sphere_mesh(2);
        let u = VectorMap::zeros(m.num_vertices(), 3);
        let opts = DescentOpts {
            perturbation: 1e-3,
            seed: 7,
            ..DescentOpts::default()
        };
        let d = gl_descend(&m, &u, 0.2, &opts).unwrap();
        assert!(d.converged, "{}", d.gradient_norm);
        assert!(d.energy < 1e-8);
        let first = &d.map.values[0];
        for v in &d.map.values {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
            assert!(v.iter().zip(first).all(|(a, b)| (a - b).abs() < 1e-5));
        }
    }
}
