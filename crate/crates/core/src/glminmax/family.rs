use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{descend_with, DescentOpts, GlForms, Mollifier, VectorMap};
use crate::error::{Error, Result};
use crate::harmonic::{tension_residual, SphereMap};
use crate::mesh::{MeasureKind, MeshMeasure, TriMesh};
use crate::mobius::{self, BallSearchOpts};
use crate::spectra::{measure_eigs_stiffness, SolverOpts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// `F_a = G_a ∘ φ`, `a ∈ B^{n+1}`.
    First,
    /// `F_{a,b} = G_a ∘ T_b ∘ φ`, `(a,b) ∈ B^{n+1} × B^{n+1}`.
    Second,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(skip)]
    pub base_map: Option<SphereMap>,
    pub kind: FamilyKind,
    pub mollify_time: f64,
    pub eps: f64,
    pub search: BallSearchOpts,
}

impl FamilySpec {
    pub fn first(base_map: SphereMap, eps: f64) -> Self {
        FamilySpec {
            base_map: Some(base_map),
            kind: FamilyKind::First,
            mollify_time: 1e-3,
            eps,
            search: BallSearchOpts::default(),
        }
    }

    pub fn second(base_map: SphereMap, eps: f64) -> Self {
        FamilySpec {
            kind: FamilyKind::Second,
            search: BallSearchOpts {
                grid: 5,
                rounds: 2,
                ..BallSearchOpts::default()
            },
            ..FamilySpec::first(base_map, eps)
        }
    }
}

/// A family bound to a mesh, with the stiffness, masses and mollifier
/// factored once.
#[derive(Clone, Debug)]
pub struct Family {
    pub spec: FamilySpec,
    base: SphereMap,
    forms: GlForms,
    mollifier: Mollifier,
}

fn unit_or_constant(a: &[f64]) -> Option<Vec<f64>> {
    let r = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r >= 1.0 - 1e-14 {
        Some(a.iter().map(|x| x / r).collect())
    } else {
        None
    }
}

impl Family {
    pub fn new(mesh: &TriMesh, spec: FamilySpec) -> Result<Self> {
        let base = spec
            .base_map
            .clone()
            .ok_or_else(|| Error::InvalidArgument("family needs a base map".into()))?;
        if base.num_vertices() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "base map has {} values for {} vertices",
                base.num_vertices(),
                mesh.num_vertices()
            )));
        }
        if !(spec.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("ε must be positive, got {}", spec.eps)));
        }
        let forms = GlForms::new(mesh)?;
        let mollifier = Mollifier::new(&forms, spec.mollify_time)?;
        Ok(Family {
            spec,
            base,
            forms,
            mollifier,
        })
    }

    /// Same family at another `ε`, reusing the factorizations.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
        }
        let mut f = self.clone();
        f.spec.eps = eps;
        Ok(f)
    }

    pub fn forms(&self) -> &GlForms {
        &self.forms
    }

    pub fn base_map(&self) -> &SphereMap {
        &self.base
    }

    /// `n + 1`.
    pub fn ambient_dim(&self) -> usize {
        self.base.ambient_dim
    }

    pub fn factors(&self) -> Vec<usize> {
        match self.spec.kind {
            FamilyKind::First => vec![self.ambient_dim()],
            FamilyKind::Second => vec![self.ambient_dim(); 2],
        }
    }

    fn check_param(&self, p: &[f64]) -> Result<()> {
        let want: usize = self.factors().iter().sum();
        if p.len() != want {
            return Err(Error::InvalidArgument(format!("parameter has {} entries, expected {want}", p.len())));
        }
        Ok(())
    }

    pub fn first(&self, a: &[f64]) -> Result<VectorMap> {
        if a.len() != self.ambient_dim() {
            return Err(Error::InvalidArgument("parameter dimension mismatch".into()));
        }
        if let Some(c) = unit_or_constant(a) {
            return Ok(VectorMap::constant(self.base.num_vertices(), &c));
        }
        let raw = VectorMap {
            ambient_dim: self.ambient_dim(),
            values: self.base.values.iter().map(|x| mobius::mobius_apply(a, x)).collect(),
        };
        Ok(self.mollifier.apply(&raw))
    }

    pub fn second(&self, a: &[f64], b: &[f64]) -> Result<VectorMap> {
        if a.len() != self.ambient_dim() || b.len() != self.ambient_dim() {
            return Err(Error::InvalidArgument("parameter dimension mismatch".into()));
        }
        if let Some(c) = unit_or_constant(a) {
            return Ok(VectorMap::constant(self.base.num_vertices(), &c));
        }
        let raw = VectorMap {
            ambient_dim: self.ambient_dim(),
            values: self.base.values.iter().map(|x| mobius::upsilon(a, b, x)).collect(),
        };
        Ok(self.mollifier.apply(&raw))
    }

    /// Member at a concatenated parameter (`a` or `(a, b)`).
    pub fn member(&self, p: &[f64]) -> Result<VectorMap> {
        self.check_param(p)?;
        match self.spec.kind {
            FamilyKind::First => self.first(p),
            FamilyKind::Second => {
                let d = self.ambient_dim();
                self.second(&p[..d], &p[d..])
            }
        }
    }

    pub fn energy_at(&self, p: &[f64]) -> Result<f64> {
        Ok(self.forms.energy(&self.member(p)?, self.spec.eps))
    }
}

pub fn family_first(mesh: &TriMesh, spec: &FamilySpec, a: &[f64]) -> Result<VectorMap> {
    Family::new(mesh, spec.clone())?.first(a)
}

pub fn family_second(mesh: &TriMesh, spec: &FamilySpec, a: &[f64], b: &[f64]) -> Result<VectorMap> {
    Family::new(mesh, spec.clone())?.second(a, b)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Critical {
    pub map: VectorMap,
    pub energy: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Aggregate tension residual of `u/|u|`; absent when `u` vanishes.
    pub tension_residual: Option<f64>,
    /// Descent was restricted to `∫u dv = 0`.
    pub balanced: bool,
    pub eps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinMaxReport {
    pub kind: FamilyKind,
    pub eps: f64,
    pub mollify_time: f64,
    pub search: BallSearchOpts,
    pub sup_energy: f64,
    pub argmax: Vec<f64>,
    /// Best value after the initial grid and after each refinement round.
    pub refinement: Vec<f64>,
    pub evaluations: usize,
    pub balanced: Option<Vec<f64>>,
    pub eigen_lower_bound: Option<f64>,
    /// `2·sup/(1 − 2ε√sup)`, infinite when the denominator is not positive.
    pub eigen_upper_bound: f64,
    pub critical: Option<Critical>,
}

pub fn sandwich_bound(sup: f64, eps: f64) -> f64 {
    let d = 1.0 - 2.0 * eps * sup.sqrt();
    if d > 0.0 {
        2.0 * sup / d
    } else {
        f64::INFINITY
    }
}

/// Sampled supremum of `E_ε` over the family.
pub fn minmax_upper(family: &Family) -> Result<MinMaxReport> {
    let s = mobius::maximize_over_balls(&family.factors(), |p| family.energy_at(p), &family.spec.search)?;
    Ok(MinMaxReport {
        kind: family.spec.kind,
        eps: family.spec.eps,
        mollify_time: family.spec.mollify_time,
        search: family.spec.search,
        sup_energy: s.value,
        argmax: s.argmax,
        refinement: s.history,
        evaluations: s.evaluations,
        balanced: None,
        eigen_lower_bound: None,
        eigen_upper_bound: sandwich_bound(s.value, family.spec.eps),
        critical: None,
    })
}

fn to_ball(y: &[f64], factors: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut off = 0;
    for &d in factors {
        let blk = &y[off..off + d];
        let r = norm(blk);
        let s = if r < 1e-8 { 1.0 - r * r / 6.0 } else { r.sin() / r };
        out.extend(blk.iter().map(|x| x * s));
        off += d;
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const STARTS: usize = 8;

/// Damped Newton with a finite-difference Jacobian on the chart
/// `y ↦ y·sin|y|/|y|` onto each closed ball factor; multistart from `seed`.
fn solve_root<F>(factors: &[usize], f: F, tol: f64, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let dim: usize = factors.iter().sum();
    let g = |y: &[f64]| f(&to_ball(y, factors));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![vec![0.0; dim]];
    while starts.len() < STARTS {
        starts.push((0..dim).map(|_| rng.gen_range(-1.2..1.2)).collect());
    }
    let mut best = f64::INFINITY;
    for y0 in starts {
        let mut y = y0;
        let mut r = g(&y)?;
        let mut rn = norm(&r);
        for _ in 0..80 {
            if rn < tol {
                break;
            }
            let h = 1e-6;
            let cols: Vec<Vec<f64>> = (0..dim)
                .into_par_iter()
                .map(|k| {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[k] += h;
                    ym[k] -= h;
                    let (fp, fm) = (g(&yp)?, g(&ym)?);
                    Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
                })
                .collect::<Result<_>>()?;
            let jac = DMatrix::from_fn(r.len(), dim, |i, k| cols[k][i]);
            let rhs = DVector::from_iterator(r.len(), r.iter().map(|x| -x));
            let Ok(step) = jac.svd(true, true).solve(&rhs, 1e-12) else { break };
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-4 {
                let yt: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
                let rt = g(&yt)?;
                let rtn = norm(&rt);
                if rtn < rn {
                    y = yt;
                    r = rt;
                    rn = rtn;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        best = best.min(rn);
        if rn < tol {
            return Ok(to_ball(&y, factors));
        }
    }
    Err(Error::RootNotFound { residual: best })
}

fn check_measure(family: &Family, mu: &MeshMeasure) -> Result<f64> {
    if mu.weights.len() != family.base.num_vertices() {
        return Err(Error::InvalidMeasure("length mismatch".into()));
    }
    let mass = mu.total_mass();
    if !(mass > 0.0) {
        return Err(Error::InvalidMeasure("zero total mass".into()));
    }
    Ok(mass)
}

fn weighted_mean(u: &VectorMap, w: &[f64], phi: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; u.ambient_dim];
    for (i, v) in u.values.iter().enumerate() {
        let c = w[i] * phi.map_or(1.0, |p| p[i]);
        for (o, x) in out.iter_mut().zip(v) {
            *o += c * x;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Balanced {
    pub point: Vec<f64>,
    pub residual: f64,
}

/// A parameter `a` of a first family with `∫ F_a dμ = 0`, to residual
/// `10⁻⁶·μ(M)`.
pub fn balanced_point(family: &Family, mu: &MeshMeasure) -> Result<Balanced> {
    if family.spec.kind != FamilyKind::First {
        return Err(Error::InvalidArgument("balanced point needs a first family".into()));
    }
    let mass = check_measure(family, mu)?;
    let f = |a: &[f64]| Ok(weighted_mean(&family.first(a)?, &mu.weights, None));
    let point = solve_root(&family.factors(), f, 1e-6 * mass, family.spec.search.seed)?;
    let residual = norm(&weighted_mean(&family.first(&point)?, &mu.weights, None));
    Ok(Balanced { point, residual })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalancedSecond {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub residual: f64,
}

/// `(a, b)` with `∫ F_{a,b} dμ = ∫ φ₁ F_{a,b} dμ = 0`, to residual
/// `10⁻⁶·μ(M)`.
pub fn balanced_point_second(family: &Family, phi1: &[f64], mu: &MeshMeasure) -> Result<BalancedSecond> {
    if family.spec.kind != FamilyKind::Second {
        return Err(Error::InvalidArgument("needs a second family".into()));
    }
    let mass = check_measure(family, mu)?;
    if phi1.len() != mu.weights.len() {
        return Err(Error::InvalidArgument("eigenfunction length mismatch".into()));
    }
    let d = family.ambient_dim();
    let f = |p: &[f64]| {
        let u = family.second(&p[..d], &p[d..])?;
        let mut r = weighted_mean(&u, &mu.weights, None);
        r.extend(weighted_mean(&u, &mu.weights, Some(phi1)));
        Ok(r)
    };
    let p = solve_root(&family.factors(), f, 1e-6 * mass, family.spec.search.seed)?;
    let residual = norm(&f(&p)?);
    Ok(BalancedSecond {
        a: p[..d].to_vec(),
        b: p[d..].to_vec(),
        residual,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenLower {
    pub balanced: Vec<f64>,
    /// `∫|dF|² / ∫|F|² dμ` at the balanced member.
    pub rayleigh: f64,
    /// `λ₁` of the measure.
    pub lambda1: f64,
    pub holds: bool,
}

/// Rayleigh quotient of the `μ`-balanced member, an upper bound for `λ₁(μ)`.
pub fn eigen_lower_from_family(family: &Family, mu: &MeshMeasure) -> Result<EigenLower> {
    let bal = balanced_point(family, mu)?;
    let u = family.first(&bal.point)?;
    let num: f64 = (0..u.ambient_dim)
        .map(|c| family.forms.stiff.quad_form(&u.coordinate(c)))
        .sum();
    let den: f64 = u
        .values
        .iter()
        .zip(&mu.weights)
        .map(|(v, w)| w * v.iter().map(|x| x * x).sum::<f64>())
        .sum();
    let rayleigh = num / den;
    let spec = measure_eigs_stiffness(&family.forms.stiff, mu, 1, &SolverOpts::default())?;
    let lambda1 = spec.values[1];
    Ok(EigenLower {
        balanced: bal.point,
        rayleigh,
        lambda1,
        holds: lambda1 <= rayleigh * (1.0 + 1e-8),
    })
}

fn critical_from(mesh: &TriMesh, family: &Family, u0: &VectorMap, balanced: bool, opts: &DescentOpts) -> Result<Critical> {
    let opts = DescentOpts { balanced, ..*opts };
    let d = descend_with(&family.forms, u0, family.spec.eps, &opts)?;
    let tension = match d.map.normalized() {
        Ok(phi) => Some(tension_residual(mesh, &phi)?.aggregate),
        Err(_) => None,
    };
    Ok(Critical {
        energy: d.energy,
        gradient_norm: d.gradient_norm,
        converged: d.converged,
        iterations: d.iterations,
        tension_residual: tension,
        balanced,
        eps: family.spec.eps,
        map: d.map,
    })
}

/// Start of the critical-point search: the volume-balanced member for a
/// first family, the argmax member otherwise.
fn critical_start(family: &Family, report: &MinMaxReport) -> Result<(Vec<f64>, bool)> {
    match family.spec.kind {
        FamilyKind::First => {
            let vol = MeshMeasure {
                kind: MeasureKind::Volume,
                weights: family.forms.mass.clone(),
            };
            Ok((balanced_point(family, &vol)?.point, true))
        }
        FamilyKind::Second => Ok((report.argmax.clone(), false)),
    }
}

/// Descent from a family member toward a critical point of `E_ε`. First
/// families descend from the balanced member within the balanced maps
/// `∫u dv = 0`, which excludes the constants.
pub fn extract_critical(mesh: &TriMesh, family: &Family, report: &MinMaxReport, opts: &DescentOpts) -> Result<MinMaxReport> {
    let (start, balanced) = critical_start(family, report)?;
    let c = critical_from(mesh, family, &family.member(&start)?, balanced, opts)?;
    let mut out = report.clone();
    if balanced {
        out.balanced = Some(start);
    }
    out.critical = Some(c);
    Ok(out)
}

/// [`extract_critical`] along an `ε` schedule. Each step also descends from
/// the previous critical map and keeps the lower of the two energies.
pub fn extract_schedule(
    mesh: &TriMesh,
    family: &Family,
    report: &MinMaxReport,
    eps: &[f64],
    opts: &DescentOpts,
) -> Result<Vec<Critical>> {
    let (start, balanced) = critical_start(family, report)?;
    let fresh = family.member(&start)?;
    let mut out: Vec<Critical> = Vec::with_capacity(eps.len());
    for &e in eps {
        let fam = family.with_eps(e)?;
        let mut c = critical_from(mesh, &fam, &fresh, balanced, opts)?;
        if let Some(prev) = out.last() {
            let warm = critical_from(mesh, &fam, &prev.map, balanced, opts)?;
            if warm.energy < c.energy {
                c = warm;
            }
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiftCheck {
    pub samples: usize,
    /// Largest `E_ε(F̄_x)` over the samples.
    pub lifted_sup: f64,
    /// Largest `E_ε(F_y)` over the corresponding base parameters.
    pub base_sup: f64,
    /// Largest `E_ε(F̄_x) − E_ε(F_y)`.
    pub worst_excess: f64,
}

/// Lift of a first family into one more dimension,
/// `F̄_{(x,s)} = (√(1−s²)·F_{x/√(1−s²)}, s)` with `F̄_{(0,±1)} ≡ (0,±1)`,
/// compared sample by sample with the base family.
pub fn dimension_lift_check(family: &Family, samples: usize, seed: u64) -> Result<LiftCheck> {
    if family.spec.kind != FamilyKind::First {
        return Err(Error::InvalidArgument("lift needs a first family".into()));
    }
    let d = family.ambient_dim();
    let eps = family.spec.eps;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Vec<f64>> = vec![vec![0.0; d + 1]];
    let mut pole = vec![0.0; d + 1];
    pole[d] = 1.0;
    pts.push(pole);
    while pts.len() < samples.max(2) {
        let p: Vec<f64> = (0..=d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm(&p) < 1.0 {
            pts.push(p);
        }
    }
    let rows: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|p| {
            let h = p[d];
            let s = (1.0 - h * h).max(0.0).sqrt();
            let y: Vec<f64> = if s > 0.0 { p[..d].iter().map(|x| x / s).collect() } else { vec![0.0; d] };
            let base = if s > 0.0 {
                family.first(&y)?
            } else {
                VectorMap::constant(family.base.num_vertices(), &{
                    let mut e = vec![0.0; d];
                    e[0] = 1.0;
                    e
                })
            };
            let lifted = VectorMap {
                ambient_dim: d + 1,
                values: base
                    .values
                    .iter()
                    .map(|v| {
                        let mut w: Vec<f64> = v.iter().map(|x| s * x).collect();
                        w.push(h);
                        w
                    })
                    .collect(),
            };
            Ok((family.forms.energy(&lifted, eps), family.forms.energy(&base, eps)))
        })
        .collect::<Result<_>>()?;
    let mut out = LiftCheck {
        samples: rows.len(),
        lifted_sup: f64::NEG_INFINITY,
        base_sup: f64::NEG_INFINITY,
        worst_excess: f64::NEG_INFINITY,
    };
    for (l, b) in rows {
        out.lifted_sup = out.lifted_sup.max(l);
        out.base_sup = out.base_sup.max(b);
        out.worst_excess = out.worst_excess.max(l - b);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: Vec<f64>,
    pub energy: f64,
    pub dirichlet: f64,
    pub potential: f64,
    pub avg_norm: f64,
}

/// Energies along given parameters, plus the CSV text
/// `p0,..,E_eps,dirichlet,potential,avg_norm`.
pub fn sweep_csv(family: &Family, params: &[Vec<f64>]) -> Result<(Vec<SweepRow>, String)> {
    let rows: Vec<SweepRow> = params
        .par_iter()
        .map(|p| {
            let u = family.member(p)?;
            let (dir, pot) = family.forms.energy_parts(&u, family.spec.eps);
            let mass: f64 = family.forms.mass.iter().sum();
            let avg = u.values.iter().zip(&family.forms.mass).map(|(v, m)| m * norm(v)).sum::<f64>() / mass;
            Ok(SweepRow {
                param: p.clone(),
                energy: dir + pot,
                dirichlet: dir,
                potential: pot,
                avg_norm: avg,
            })
        })
        .collect::<Result<_>>()?;
    let width: usize = family.factors().iter().sum();
    let mut csv: String = (0..width).map(|k| format!("p{k},")).collect();
    csv.push_str("E_eps,dirichlet,potential,avg_norm\n");
    for r in &rows {
        for x in &r.param {
            csv.push_str(&format!("{x},"));
        }
        csv.push_str(&format!("{},{},{},{}\n", r.energy, r.dirichlet, r.potential, r.avg_norm));
    }
    Ok((rows, csv))
}
