use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use specx_core::harmonic::*;
use specx_core::mesh::*;

fn rotation(t: f64, u: f64) -> [[f64; 3]; 3] {
    let (c, s) = (t.cos(), t.sin());
    let (cu, su) = (u.cos(), u.sin());
    // rotation about z by t, then about x by u
    let rz = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cu, -su], [0.0, su, cu]];
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| rx[i][k] * rz[k][j]).sum();
        }
    }
    r
}

#[test]
fn fine_identity_energy_and_tension() {
    let m = build_sphere_mesh(4);
    let id = identity_map(&m).unwrap();
    let e = energy(&m, &id).unwrap();
    assert!((e / (4.0 * PI) - 1.0).abs() < 0.01, "{e}");
    let r = tension_residual(&m, &id).unwrap();
    assert!(r.aggregate < 1e-2, "{}", r.aggregate);
    let d = energy_density(&m, &id).unwrap();
    let mass = mass_matrix(&m, &d).unwrap().iter().sum::<f64>();
    assert!((mass - e).abs() < 1e-12 * e);
    assert!(d.f.iter().all(|&x| (x - 1.0).abs() < 0.02));
}

#[test]
fn tension_shrinks_under_refinement() {
    let r: Vec<f64> = (2..=4)
        .map(|s| {
            let m = build_sphere_mesh(s);
            tension_residual(&m, &identity_map(&m).unwrap()).unwrap().aggregate
        })
        .collect();
    assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
}

#[test]
fn random_map_is_far_from_harmonic() {
    let m = build_sphere_mesh(2);
    let phi = random_map(m.num_vertices(), 3, 9).unwrap();
    assert!(tension_residual(&m, &phi).unwrap().aggregate > 0.1);
}

#[test]
fn relaxed_map_is_a_fixed_point() {
    let m = build_sphere_mesh(2);
    let (phi, res) = relax_harmonic(&m, &identity_map(&m).unwrap(), 1e-9, 40_000).unwrap();
    assert!(res < 1e-6, "{res}");
    let dt = 0.5 * flow_step_bound(&m).unwrap();
    let (_, es) = harmonic_flow_traced(&m, &phi, 100, dt).unwrap();
    assert!((es[100] - es[0]).abs() < 1e-8, "{}", es[100] - es[0]);
}

#[test]
fn perturbed_identity_returns() {
    let m = build_sphere_mesh(3);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let id = identity_map(&m).unwrap();
    let values = id
        .values
        .iter()
        .map(|v| v.iter().map(|x| x + rng.gen_range(-0.1..0.1)).collect())
        .collect();
    let phi0 = SphereMap::from_unnormalized(3, values).unwrap();
    let (phi, res) = relax_harmonic(&m, &phi0, 1e-3, 20_000).unwrap();
    assert!(res < 1e-2, "{res}");
    let e = energy(&m, &phi).unwrap();
    assert!((e / energy(&m, &id).unwrap() - 1.0).abs() < 1e-3, "{e}");
}

#[test]
fn degree_zero_torus_map_flows_to_a_constant() {
    let m = build_torus_mesh((0.0, 1.0), 12).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    // values in the upper hemisphere miss the south pole, so the degree is 0
    let values = (0..m.num_vertices())
        .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.0)])
        .collect();
    let phi0 = SphereMap::from_unnormalized(3, values).unwrap();
    let dt = 0.9 * flow_step_bound(&m).unwrap();
    let (_, es) = harmonic_flow_traced(&m, &phi0, 4000, dt).unwrap();
    assert!(es.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    assert!(es[4000] < 1e-4 * es[0], "{} -> {}", es[0], es[4000]);
}

#[test]
fn equatorial_identity_has_eigenvalue_two_thrice() {
    let m = build_sphere_mesh(2);
    let phi = include_equatorial(&identity_map(&m).unwrap(), 4).unwrap();
    let r = check_eigenvalue_two(&m, &phi).unwrap();
    assert!(r.present);
    assert_eq!(r.multiplicity, 3);
    assert!(r.gap > 0.1);
}

#[test]
fn eigenvalue_two_needs_energy() {
    let m = build_sphere_mesh(1);
    let c = SphereMap::constant(m.num_vertices(), vec![0.0, 0.0, 1.0]).unwrap();
    assert!(check_eigenvalue_two(&m, &c).is_err());
    assert_eq!(hopf_differential(&m, &c).unwrap().max_abs(), 0.0);
}

#[test]
fn identity_is_nearly_conformal() {
    let m = build_sphere_mesh(3);
    let h = hopf_differential(&m, &identity_map(&m).unwrap()).unwrap();
    // |dΦ|² ≈ 2 per face for the identity
    assert!(h.max_abs() < 0.1, "{}", h.max_abs());
    let csv = h.to_csv();
    assert!(csv.starts_with("face_id,re,im,abs"));
    assert_eq!(csv.lines().count(), m.num_triangles() + 1);
}

#[test]
fn sphere_map_json_round_trip() {
    let m = build_sphere_mesh(1);
    let phi = random_map(m.num_vertices(), 4, 2).unwrap();
    let back = SphereMap::from_json(&phi.to_json()).unwrap();
    assert_eq!(back, phi);
    assert!(SphereMap::from_json(r#"{"ambient_dim":3,"values":[[1.0,1.0,0.0]]}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_rotation_invariant(t in 0.0f64..6.3, u in 0.0f64..6.3, seed in 0u64..100) {
        let m = build_sphere_mesh(2);
        let phi = random_map(m.num_vertices(), 3, seed).unwrap();
        let r = rotation(t, u);
        let rot = phi.map_values(|v| (0..3).map(|i| (0..3).map(|j| r[i][j] * v[j]).sum()).collect()).unwrap();
        let (a, b) = (energy(&m, &phi).unwrap(), energy(&m, &rot).unwrap());
        prop_assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn flow_never_raises_energy(seed in 0u64..1000, frac in 0.1f64..0.99) {
        let m = build_sphere_mesh(1);
        let phi = random_map(m.num_vertices(), 3, seed).unwrap();
        let dt = frac * flow_step_bound(&m).unwrap();
        let (out, es) = harmonic_flow_traced(&m, &phi, 30, dt).unwrap();
        prop_assert!(es.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        prop_assert!(out.values.iter().all(|v| (v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
    }
}
