//! Conformal transformations of `Sⁿ ⊂ R^{n+1}`: the automorphisms `G_a`,
//! cap reflections `T_b`, their compositions `Υ_{a,b} = G_a ∘ T_b`, and the
//! conformal volume of a map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::{self, SphereMap};
use crate::mesh::TriMesh;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let r = norm2(&v).sqrt();
    if r > 0.0 {
        v.iter_mut().for_each(|x| *x /= r);
    }
    v
}

/// `G_a(x) = (1−|a|²)(x+a)/|x+a|² + a` for `|a| < 1`; the constant `a` for
/// `|a| = 1`.
pub fn mobius_apply(a: &[f64], x: &[f64]) -> Vec<f64> {
    let r2 = norm2(a);
    if r2 >= 1.0 {
        return normalized(a.to_vec());
    }
    if r2 == 0.0 {
        return x.to_vec();
    }
    let r = r2.sqrt();
    let c = (1.0 - r) * (1.0 + r);
    let d: Vec<f64> = x.iter().zip(a).map(|(x, a)| x + a).collect();
    let d2 = norm2(&d);
    if d2 == 0.0 {
        // x = −a only happens for |a| = 1; fall back to the antipodal fixed point
        return normalized(a.iter().map(|v| -v).collect());
    }
    let out: Vec<f64> = d.iter().zip(a).map(|(d, a)| c * d / d2 + a).collect();
    normalized(out)
}

/// Linear reflection through the hyperplane orthogonal to `b ≠ 0`.
pub fn reflect(b: &[f64], x: &[f64]) -> Vec<f64> {
    let s = 2.0 * dot(x, b) / norm2(b);
    x.iter().zip(b).map(|(x, b)| x - s * b).collect()
}

/// The conformal reflection `Rf_b` of the whole sphere fixing the circle
/// `∂C_b = {⟨x,b̂⟩ = 1 − |b|}`. Realized as `G_{s b̂} ∘ τ_b ∘ G_{−s b̂}`, where
/// `G_{s b̂}` carries the equator to height `h = 1 − |b|` (`2s/(1+s²) = h`).
/// Involutive; requires `0 < |b| ≤ 1`.
pub fn conformal_reflection(b: &[f64], x: &[f64]) -> Vec<f64> {
    let r = norm2(b).sqrt();
    let bh: Vec<f64> = b.iter().map(|v| v / r).collect();
    let h = (1.0 - r).max(0.0);
    if h == 0.0 {
        return reflect(&bh, x);
    }
    let s = h / (1.0 + (1.0 - h * h).sqrt());
    let a: Vec<f64> = bh.iter().map(|v| s * v).collect();
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    mobius_apply(&a, &reflect(&bh, &mobius_apply(&neg, x)))
}

/// Cap reflection `T_b`: identity on `C_b = {⟨x,b⟩ ≤ |b| − |b|²}` and
/// [`conformal_reflection`] on the complementary cap.
pub fn cap_reflection(b: &[f64], x: &[f64]) -> Vec<f64> {
    let r = norm2(b).sqrt();
    if r == 0.0 || dot(x, b) <= r * (1.0 - r).max(0.0) {
        return x.to_vec();
    }
    conformal_reflection(b, x)
}

/// `Υ_{a,b} = G_a ∘ T_b`.
pub fn upsilon(a: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    mobius_apply(a, &cap_reflection(b, x))
}

/// Options for sampled maximization over the closed ball of radius
/// `max_radius` in `R^d`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BallSearchOpts {
    /// Points per axis of the initial grid on `[−r, r]^d`.
    pub grid: usize,
    /// Local refinement rounds; the neighbourhood radius halves each round.
    pub rounds: usize,
    pub max_radius: f64,
    /// Extra random samples in the ball, drawn from `seed`.
    pub random: usize,
    pub seed: u64,
}

impl Default for BallSearchOpts {
    fn default() -> Self {
        BallSearchOpts {
            grid: 7,
            rounds: 3,
            max_radius: 0.999,
            random: 0,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallSearch {
    pub value: f64,
    pub argmax: Vec<f64>,
    /// Best value after the initial grid and after each refinement round.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn ticks(per_axis: usize) -> Vec<f64> {
    let n = per_axis.max(1);
    if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
    }
}

/// Points `center + radius·t` for `t` on the tick lattice, kept when every
/// factor block lies in the ball of radius `max_radius`.
fn grid_points(center: &[f64], factors: &[usize], radius: f64, per_axis: usize, max_radius: f64) -> Vec<Vec<f64>> {
    let d = center.len();
    let t = ticks(per_axis);
    let n = t.len();
    let total = n.pow(d as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let mut p = Vec::with_capacity(d);
        for k in 0..d {
            p.push(center[k] + radius * t[c % n]);
            c /= n;
        }
        if inside(&p, factors, max_radius) {
            out.push(p);
        }
    }
    out
}

fn inside(p: &[f64], factors: &[usize], r: f64) -> bool {
    let mut off = 0;
    factors.iter().all(|&d| {
        let ok = norm2(&p[off..off + d]).sqrt() <= r + 1e-15;
        off += d;
        ok
    })
}

/// Grid search with local refinement; evaluations run in parallel. Ties
/// resolve to the earliest sample so results are deterministic.
pub fn maximize_over_ball<F>(dim: usize, f: F, opts: &BallSearchOpts) -> Result<BallSearch>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    maximize_over_balls(&[dim], f, opts)
}

/// [`maximize_over_ball`] on a product of balls; `factors` lists their
/// dimensions and `f` receives the concatenated point.
pub fn maximize_over_balls<F>(factors: &[usize], f: F, opts: &BallSearchOpts) -> Result<BallSearch>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dim: usize = factors.iter().sum();
    if factors.is_empty() || factors.contains(&0) || !(opts.max_radius > 0.0) {
        return Err(Error::InvalidArgument("ball search needs dim ≥ 1 and a positive radius".into()));
    }
    let r = opts.max_radius;
    let origin = vec![0.0; dim];
    let mut pts = grid_points(&origin, factors, r, opts.grid, r);
    let target = pts.len() + opts.random;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while pts.len() < target {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-r..=r)).collect();
        if inside(&p, factors, r) {
            pts.push(p);
        }
    }
    let eval = |pts: &[Vec<f64>]| -> Result<Vec<f64>> { pts.par_iter().map(|p| f(p)).collect() };
    let vals = eval(&pts)?;
    let mut evaluations = pts.len();
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut argmax = pts[best_i].clone();
    let mut history = vec![best];
    let mut radius = if opts.grid > 1 { r / (opts.grid - 1) as f64 } else { r / 2.0 };
    let local_axis = if dim > 4 { 3 } else { opts.grid.clamp(3, 5) };
    for _ in 0..opts.rounds {
        let local = grid_points(&argmax, factors, radius, local_axis, r);
        let vals = eval(&local)?;
        evaluations += local.len();
        for (p, &v) in local.iter().zip(&vals) {
            if v > best {
                best = v;
                argmax = p.clone();
            }
        }
        history.push(best);
        radius *= 0.5;
    }
    Ok(BallSearch {
        value: best,
        argmax,
        history,
        evaluations,
    })
}

/// `G_a ∘ φ`.
pub fn compose_mobius(a: &[f64], phi: &SphereMap) -> Result<SphereMap> {
    if a.len() != phi.ambient_dim {
        return Err(Error::InvalidArgument(format!(
            "parameter has dimension {}, map has {}",
            a.len(),
            phi.ambient_dim
        )));
    }
    phi.map_values(|x| mobius_apply(a, x))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConformalVolume {
    /// Largest `E(G_a∘φ)` found: an estimate from below of `V_c(n, φ)`.
    pub estimate: f64,
    pub argmax: Vec<f64>,
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// Largest per-face Hopf magnitude of `φ`, relative to its mean energy
    /// density.
    pub hopf_ratio: f64,
}

/// Maximizes the energy (area for conformal `φ`) over the Möbius orbit.
pub fn conformal_volume(mesh: &TriMesh, phi: &SphereMap, opts: &BallSearchOpts) -> Result<ConformalVolume> {
    let e0 = harmonic::energy(mesh, phi)?;
    let hopf = harmonic::hopf_differential(mesh, phi)?;
    let total_area: f64 = (0..mesh.num_triangles()).map(|t| mesh.triangle_area(t)).sum();
    let mean_density = 2.0 * e0 / total_area;
    let hopf_ratio = if mean_density > 0.0 { hopf.max_abs() / mean_density } else { 0.0 };
    let s = maximize_over_ball(
        phi.ambient_dim,
        |a| harmonic::energy(mesh, &compose_mobius(a, phi)?),
        opts,
    )?;
    Ok(ConformalVolume {
        estimate: s.value,
        argmax: s.argmax,
        history: s.history,
        evaluations: s.evaluations,
        hopf_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        normalized(v.to_vec())
    }

    #[test]
    fn mobius_basics() {
        let x = unit(&[0.3, -0.4, 0.5]);
        assert_eq!(mobius_apply(&[0.0; 3], &x), x);
        let a = [0.2, 0.5, -0.1];
        let ah = unit(&a);
        let p = mobius_apply(&a, &ah);
        let q = mobius_apply(&a, &ah.iter().map(|v| -v).collect::<Vec<_>>());
        for k in 0..3 {
            assert!((p[k] - ah[k]).abs() < 1e-14);
            assert!((q[k] + ah[k]).abs() < 1e-14);
        }
        assert_eq!(mobius_apply(&[0.0, 1.0, 0.0], &x), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn mobius_inverse_is_negated_parameter() {
        let a = [0.6, -0.3, 0.2];
        let na = [-0.6, 0.3, -0.2];
        let x = unit(&[-0.1, 0.9, 0.4]);
        let y = mobius_apply(&na, &mobius_apply(&a, &x));
        for k in 0..3 {
            assert!((x[k] - y[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn cap_reflection_special_cases() {
        let x = unit(&[0.2, 0.3, 0.9]);
        assert_eq!(cap_reflection(&[0.0; 3], &x), x);
        let b = [0.0, 0.0, 1.0];
        assert_eq!(cap_reflection(&b, &x), reflect(&b, &x));
        let lower = unit(&[0.2, 0.3, -0.9]);
        assert_eq!(cap_reflection(&b, &lower), lower);
    }

    #[test]
    fn cap_boundary_is_fixed_and_reflection_involutive() {
        let b = [0.3, 0.1, 0.2];
        let r = norm2(&b).sqrt();
        let bh = unit(&b);
        let h = 1.0 - r;
        // boundary point: h·b̂ + √(1−h²)·e with e ⊥ b̂
        let e = unit(&reflect(&bh, &[1.0, 0.0, 0.0]).iter().zip(&[1.0, 0.0, 0.0]).map(|(p, q)| p + q).collect::<Vec<_>>());
        let xb: Vec<f64> = bh.iter().zip(&e).map(|(b, e)| h * b + (1.0 - h * h).sqrt() * e).collect();
        let y = cap_reflection(&b, &xb);
        for k in 0..3 {
            assert!((y[k] - xb[k]).abs() < 1e-12);
        }
        let inside = unit(&bh.iter().zip(&e).map(|(b, e)| b + 0.3 * e).collect::<Vec<_>>());
        assert!(dot(&inside, &bh) > h);
        let t = cap_reflection(&b, &inside);
        assert!(dot(&t, &bh) < h);
        assert!((norm2(&t) - 1.0).abs() < 1e-12);
        let back = conformal_reflection(&b, &t);
        for k in 0..3 {
            assert!((back[k] - inside[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_search_finds_quadratic_peak() {
        let target = [0.3, -0.2];
        let s = maximize_over_ball(
            2,
            |p| Ok(-((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2))),
            &BallSearchOpts::default(),
        )
        .unwrap();
        assert!(s.value > -1e-3);
        assert!(s.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(maximize_over_ball(0, |_| Ok(0.0), &BallSearchOpts::default()).is_err());
    }
}
