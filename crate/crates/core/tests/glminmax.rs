use std::f64::consts::PI;

use proptest::prelude::*;
use specx_core::glminmax::*;
use specx_core::harmonic::{identity_map, torus_elliptic_map, SphereMap};
use specx_core::mesh::*;
use specx_core::mobius::{mobius_apply, reflect, BallSearchOpts};
use specx_core::spectra::steklov_eigs;

fn random_vector_map(n: usize, dim: usize, seed: u64) -> VectorMap {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    VectorMap {
        ambient_dim: dim,
        values: (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
    }
}

fn small_sphere() -> TriMesh {
    build_sphere_mesh(1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_central_difference(seed in 0u64..10_000, eps in 0.1f64..1.0) {
        let m = small_sphere();
        let forms = GlForms::new(&m).unwrap();
        let u = random_vector_map(m.num_vertices(), 3, seed);
        let v = random_vector_map(m.num_vertices(), 3, seed + 1);
        let h = 1e-5;
        let fd = (forms.energy(&u.axpy(h, &v), eps) - forms.energy(&u.axpy(-h, &v), eps)) / (2.0 * h);
        let an = forms.gradient(&u, eps).dot(&v);
        prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "fd {} analytic {}", fd, an);
    }

    #[test]
    fn second_variation_matches_second_difference(seed in 0u64..10_000, eps in 0.1f64..1.0) {
        let m = small_sphere();
        let u = random_vector_map(m.num_vertices(), 3, seed);
        let v = random_vector_map(m.num_vertices(), 3, seed + 7);
        let h = 1e-3;
        let e = |w: &VectorMap| gl_energy(&m, w, eps).unwrap();
        let fd = (e(&u.axpy(h, &v)) - 2.0 * e(&u) + e(&u.axpy(-h, &v))) / (h * h);
        let an = gl_second_variation(&m, &u, eps, &v).unwrap();
        prop_assert!((fd - an).abs() <= 1e-4 * an.abs().max(1.0), "fd {} analytic {}", fd, an);
    }

    #[test]
    fn energy_is_orthogonally_invariant(seed in 0u64..10_000, angle in 0.0f64..6.3) {
        let m = small_sphere();
        let u = random_vector_map(m.num_vertices(), 3, seed);
        let (c, s) = (angle.cos(), angle.sin());
        let ru = u.transformed(|x| vec![c * x[0] - s * x[1], s * x[0] + c * x[1], -x[2]]);
        let a = gl_energy(&m, &u, 0.3).unwrap();
        let b = gl_energy(&m, &ru, 0.3).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn second_family_boundary_symmetry(seed in 0u64..10_000) {
        use rand::{Rng, SeedableRng};
        let m = small_sphere();
        let spec = FamilySpec::second(identity_map(&m).unwrap(), 0.1);
        let fam = Family::new(&m, spec).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        b.iter_mut().for_each(|x| *x /= r);
        let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let lhs = fam.second(&a, &b).unwrap();
        let ta = reflect(&b, &a);
        let nb: Vec<f64> = b.iter().map(|x| -x).collect();
        let rhs = fam.second(&ta, &nb).unwrap().transformed(|x| reflect(&b, x));
        for (p, q) in lhs.values.iter().zip(&rhs.values) {
            for k in 0..3 {
                prop_assert!((p[k] - q[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn unit_constant_has_zero_gradient() {
    let m = small_sphere();
    let g = gl_gradient(&m, &VectorMap::constant(m.num_vertices(), &[0.0, 0.6, 0.8]), 0.1).unwrap();
    assert!(g.values.iter().flatten().all(|x| x.abs() < 1e-12));
}

#[test]
fn second_variation_along_the_map_is_positive() {
    let m = build_sphere_mesh(2);
    let u = VectorMap::from_sphere(&identity_map(&m).unwrap());
    assert!(gl_second_variation(&m, &u, 0.1, &u).unwrap() > 0.0);
}

#[test]
fn descent_keeps_the_identity() {
    let m = build_sphere_mesh(3);
    let u = VectorMap::from_sphere(&identity_map(&m).unwrap());
    let d = gl_descend(&m, &u, 0.02, &DescentOpts::default()).unwrap();
    assert!(d.converged);
    assert!((d.energy / (4.0 * PI) - 1.0).abs() < 0.01, "{}", d.energy);
    let drift = d
        .map
        .values
        .iter()
        .zip(&u.values)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    assert!(drift < 0.02, "{drift}");
}

#[test]
fn first_family_members() {
    let m = build_sphere_mesh(3);
    let id = identity_map(&m).unwrap();
    let spec = FamilySpec {
        mollify_time: 1e-9,
        ..FamilySpec::first(id.clone(), 0.1)
    };
    let f0 = family_first(&m, &spec, &[0.0; 3]).unwrap();
    for (p, q) in f0.values.iter().zip(&id.values) {
        assert!(p.iter().zip(q).all(|(x, y)| (x - y).abs() < 1e-6));
    }
    let spec = FamilySpec::first(id, 0.1);
    let c = family_first(&m, &spec, &[0.0, 1.0, 0.0]).unwrap();
    assert!(c.values.iter().all(|v| v == &vec![0.0, 1.0, 0.0]));
    assert_eq!(gl_energy(&m, &c, 0.1).unwrap(), 0.0);
    let u = family_first(&m, &spec, &[0.9, 0.0, 0.0]).unwrap();
    let (dir, pot) = GlForms::new(&m).unwrap().energy_parts(&u, 0.1);
    assert!(dir + pot <= 4.0 * PI * 1.03);
    assert!(u.values.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12));
}

#[test]
fn second_family_reduces_to_first() {
    let m = build_sphere_mesh(2);
    let spec = FamilySpec::second(identity_map(&m).unwrap(), 0.1);
    let a = [0.3, -0.2, 0.1];
    let s = family_second(&m, &spec, &a, &[0.0; 3]).unwrap();
    let f = family_first(&m, &spec, &a).unwrap();
    assert_eq!(s, f);
    let c = family_second(&m, &spec, &[0.0, 0.0, -1.0], &[0.4, 0.0, 0.0]).unwrap();
    assert!(c.values.iter().all(|v| v == &vec![0.0, 0.0, -1.0]));
}

#[test]
fn minmax_over_the_identity_family() {
    let m = build_sphere_mesh(3);
    let fam = Family::new(&m, FamilySpec::first(identity_map(&m).unwrap(), 0.1)).unwrap();
    let r = minmax_upper(&fam).unwrap();
    assert!((r.sup_energy / (4.0 * PI) - 1.0).abs() < 0.03, "{}", r.sup_energy);
    assert!(r.refinement.windows(2).all(|w| w[1] >= w[0]));

    let only_zero = Family::new(
        &m,
        FamilySpec {
            search: BallSearchOpts {
                grid: 1,
                rounds: 0,
                ..BallSearchOpts::default()
            },
            ..fam.spec.clone()
        },
    )
    .unwrap();
    let r0 = minmax_upper(&only_zero).unwrap();
    let direct = gl_energy(&m, &mollify(&m, &VectorMap::from_sphere(fam.base_map()), 1e-3).unwrap(), 0.1).unwrap();
    assert!((r0.sup_energy - direct).abs() < 1e-12);
}

#[test]
fn second_family_sup_is_below_twice_the_volume() {
    let m = build_sphere_mesh(2);
    let fam = Family::new(&m, FamilySpec::second(identity_map(&m).unwrap(), 0.1)).unwrap();
    let r = minmax_upper(&fam).unwrap();
    assert!(r.sup_energy <= 8.0 * PI * 1.03, "{}", r.sup_energy);
    assert!(r.sup_energy > 4.0 * PI * 0.9);
}

#[test]
fn balanced_points_of_the_first_family() {
    let m = build_sphere_mesh(3);
    let vol = volume_measure(&m, &ConformalDensity::constant(&m, 1.0)).unwrap();
    let fam = Family::new(&m, FamilySpec::first(identity_map(&m).unwrap(), 0.1)).unwrap();
    let b = balanced_point(&fam, &vol).unwrap();
    assert!(b.point.iter().all(|x| x.abs() < 1e-6));

    let shifted = identity_map(&m).unwrap().map_values(|x| mobius_apply(&[0.5, 0.0, 0.0], x)).unwrap();
    let fam = Family::new(&m, FamilySpec::first(shifted, 0.1)).unwrap();
    let b = balanced_point(&fam, &vol).unwrap();
    assert!(b.residual < 1e-6 * vol.total_mass());
    assert!(b.point[0] < -0.1);

    let flat = SphereMap::constant(m.num_vertices(), vec![0.0, 0.0, 1.0]).unwrap();
    let fam = Family::new(&m, FamilySpec::first(flat, 0.1)).unwrap();
    assert!(matches!(
        balanced_point(&fam, &vol),
        Err(specx_core::Error::RootNotFound { .. })
    ));
}

#[test]
fn balanced_point_of_the_second_family() {
    let m = build_sphere_mesh(2);
    let id = identity_map(&m).unwrap();
    let vol = volume_measure(&m, &ConformalDensity::constant(&m, 1.0)).unwrap().normalized();
    let fam = Family::new(&m, FamilySpec::second(id.clone(), 0.1)).unwrap();
    let z = id.coordinate(2);
    let r = balanced_point_second(&fam, &z, &vol).unwrap();
    assert!(r.residual < 1e-6, "{}", r.residual);
    let r3 = balanced_point_second(&fam, &z, &vol.scaled(3.0)).unwrap();
    assert!(r3.residual < 3e-6);
    for (x, y) in r.a.iter().chain(&r.b).zip(r3.a.iter().chain(&r3.b)) {
        assert!((x - y).abs() < 1e-3);
    }
    let first = Family::new(&m, FamilySpec::first(id, 0.1)).unwrap();
    assert!(balanced_point_second(&first, &z, &vol).is_err());
    assert!(balanced_point_second(&fam, &z[..5], &vol).is_err());
}

#[test]
fn rayleigh_bound_on_the_round_sphere() {
    let m = build_sphere_mesh(3);
    let vol = volume_measure(&m, &ConformalDensity::constant(&m, 1.0)).unwrap().normalized();
    let fam = Family::new(&m, FamilySpec::first(identity_map(&m).unwrap(), 0.1)).unwrap();
    let e = eigen_lower_from_family(&fam, &vol).unwrap();
    assert!(e.holds);
    assert!((e.rayleigh / (8.0 * PI) - 1.0).abs() < 0.02, "{}", e.rayleigh);
}

#[test]
fn rayleigh_bound_on_the_square_torus() {
    let m = build_torus_mesh((0.0, 1.0), 32).unwrap();
    let vol = volume_measure(&m, &ConformalDensity::constant(&m, 1.0)).unwrap();
    let fam = Family::new(&m, FamilySpec::first(torus_elliptic_map(&m).unwrap(), 0.05)).unwrap();
    let e = eigen_lower_from_family(&fam, &vol).unwrap();
    assert!(e.holds);
    let r = minmax_upper(&fam).unwrap();
    assert!(e.lambda1 < 2.0 * r.sup_energy, "{} {}", e.lambda1, r.sup_energy);
}

#[test]
fn steklov_bound_on_a_punctured_sphere() {
    let full = build_sphere_mesh(3);
    let north = (0..full.num_vertices())
        .max_by(|&a, &b| full.vertices()[a][2].total_cmp(&full.vertices()[b][2]))
        .unwrap();
    let m = puncture(&full, &[north], 0.5).unwrap();
    let mu = full_boundary_measure(&m).unwrap().normalized();
    let fam = Family::new(&m, FamilySpec::first(identity_map(&m).unwrap(), 0.1)).unwrap();
    let e = eigen_lower_from_family(&fam, &mu).unwrap();
    assert!(e.holds);
    let sigma_bar = steklov_eigs(&m, 1).unwrap().values[1] * full_boundary_measure(&m).unwrap().total_mass();
    assert!((sigma_bar - e.lambda1).abs() < 1e-6 * sigma_bar);
    let r = minmax_upper(&fam).unwrap();
    assert!(sigma_bar <= 2.0 * r.sup_energy);
}

#[test]
fn critical_point_on_the_sphere() {
    let m = build_sphere_mesh(3);
    let fam = Family::new(&m, FamilySpec::first(identity_map(&m).unwrap(), 0.05)).unwrap();
    let r = extract_critical(&m, &fam, &minmax_upper(&fam).unwrap(), &DescentOpts::default()).unwrap();
    let c = r.critical.as_ref().unwrap();
    assert!(c.converged);
    assert!((c.energy / (4.0 * PI) - 1.0).abs() < 0.02);
    assert!(c.energy <= r.sup_energy);
    assert!(c.tension_residual.unwrap() < 1e-2);
}

#[test]
fn critical_energies_rise_as_eps_shrinks_on_the_torus() {
    let m = build_torus_mesh((0.0, 1.0), 32).unwrap();
    let lam = specx_core::spectra::laplace_eigs(&m, &ConformalDensity::constant(&m, 1.0), 1).unwrap().values[1];
    let fam = Family::new(&m, FamilySpec::first(torus_elliptic_map(&m).unwrap(), 0.2)).unwrap();
    let report = minmax_upper(&fam).unwrap();
    let eps = [0.2, 0.1, 0.05];
    let cs = extract_schedule(&m, &fam, &report, &eps, &DescentOpts::default()).unwrap();
    for w in cs.windows(2) {
        assert!(w[1].energy >= w[0].energy - 1e-9);
    }
    for (c, &e) in cs.iter().zip(&eps) {
        let sup = minmax_upper(&fam.with_eps(e).unwrap()).unwrap().sup_energy;
        assert!(c.energy <= sup + 1e-9, "eps {e}: {} > {sup}", c.energy);
        assert!(2.0 * c.energy >= (1.0 - 2.0 * e * c.energy.sqrt()) * lam);
    }
}

#[test]
fn lifting_one_dimension_never_raises_energy() {
    let m = build_sphere_mesh(2);
    let fam = Family::new(&m, FamilySpec::first(identity_map(&m).unwrap(), 0.1)).unwrap();
    let l = dimension_lift_check(&fam, 40, 3).unwrap();
    assert!(l.worst_excess <= 1e-9);
    assert!(l.lifted_sup <= l.base_sup + 1e-9);
}

#[test]
fn sweep_rows_and_csv() {
    let m = build_sphere_mesh(1);
    let fam = Family::new(&m, FamilySpec::first(identity_map(&m).unwrap(), 0.1)).unwrap();
    let params = vec![vec![0.0; 3], vec![0.5, 0.0, 0.0], vec![1.0, 0.0, 0.0]];
    let (rows, csv) = sweep_csv(&fam, &params).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(csv.starts_with("p0,p1,p2,E_eps,dirichlet,potential,avg_norm\n"));
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(rows[2].energy, 0.0);
    assert!((rows[2].avg_norm - 1.0).abs() < 1e-12);
}
