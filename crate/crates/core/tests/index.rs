use rand::{Rng, SeedableRng};
use specx_core::harmonic::*;
use specx_core::index::*;
use specx_core::mesh::*;

fn relaxed_degree_two(m: &TriMesh) -> SphereMap {
    relax_harmonic(m, &sphere_power_map(m, 2).unwrap(), 1e-8, 20_000).unwrap().0
}

#[test]
fn identity_indices() {
    let m = build_sphere_mesh(2);
    let id = identity_map(&m).unwrap();
    let r = index_report(&m, &id).unwrap();
    assert_eq!((r.ind_s, r.nul_s, r.ind_e), (1, 3, 0));
    // rotations and conformal motions
    assert_eq!(r.nul_e, 6);
    assert!(!r.unstable);
    assert!(r.margins.iter().all(|&x| x > 0.0));
}

#[test]
fn spectral_index_ignores_the_ambient_dimension() {
    let m = build_sphere_mesh(2);
    let id = identity_map(&m).unwrap();
    let a = spectral_index(&m, &id).unwrap();
    let b = spectral_index(&m, &include_equatorial(&id, 4).unwrap()).unwrap();
    assert_eq!((a.ind_s, a.nul_s), (b.ind_s, b.nul_s));
    for (x, y) in a.spectrum.iter().zip(&b.spectrum) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn spectral_index_is_scale_invariant() {
    let m = build_sphere_mesh(2);
    let big = TriMesh::new(
        m.vertices().iter().map(|v| [3.0 * v[0], 3.0 * v[1], 3.0 * v[2]]).collect(),
        m.triangles().to_vec(),
    )
    .unwrap();
    let id = identity_map(&m).unwrap();
    let a = spectral_index(&m, &id).unwrap();
    let b = spectral_index(&big, &id).unwrap();
    assert_eq!((a.ind_s, a.nul_s), (b.ind_s, b.nul_s));
}

#[test]
fn constant_map_is_rejected() {
    let m = build_sphere_mesh(1);
    let c = SphereMap::constant(m.num_vertices(), vec![1.0, 0.0, 0.0]).unwrap();
    assert!(spectral_index(&m, &c).is_err());
    assert!(energy_index(&m, &c).is_err());
}

#[test]
fn frames_must_be_tangent_unit_maps() {
    let phi = SphereMap {
        ambient_dim: 3,
        values: vec![vec![0.0, 0.0, 1.1]],
    };
    assert!(matches!(tangent_frames(&phi), Err(specx_core::Error::Frame(0))));
}

#[test]
fn energy_index_is_frame_independent() {
    let m = build_sphere_mesh(2);
    let phi = include_equatorial(&identity_map(&m).unwrap(), 3).unwrap();
    let frames = tangent_frames(&phi).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    // rotate the 3-frame at each vertex by a random rotation about its first vector
    let rotated: Vec<Vec<Vec<f64>>> = frames
        .iter()
        .map(|f| {
            let t: f64 = rng.gen_range(0.0..6.3);
            let (c, s) = (t.cos(), t.sin());
            let e1: Vec<f64> = f[1].iter().zip(&f[2]).map(|(a, b)| c * a + s * b).collect();
            let e2: Vec<f64> = f[1].iter().zip(&f[2]).map(|(a, b)| -s * a + c * b).collect();
            vec![f[0].clone(), e1, e2]
        })
        .collect();
    let a = energy_index_with(&m, &phi, &frames, KERNEL_BAND).unwrap();
    let b = energy_index_with(&m, &phi, &rotated, KERNEL_BAND).unwrap();
    assert_eq!(a.ind_e, b.ind_e);
    assert_eq!(a.nul_e, b.nul_e);
    for (x, y) in a.low.iter().zip(&b.low) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn composition_law_for_the_identity() {
    let m = build_sphere_mesh(2);
    let id = identity_map(&m).unwrap();
    for (mm, want) in [(2, 0), (3, 1), (4, 2), (5, 3)] {
        let c = check_composition_law(&m, &id, mm).unwrap();
        assert!(c.equal, "{c:?}");
        assert_eq!(c.lhs, want);
    }
    assert!(check_composition_law(&m, &id, 1).is_err());
}

#[test]
fn composition_law_for_degree_two() {
    let m = build_sphere_mesh(2);
    let phi = relaxed_degree_two(&m);
    let c = check_composition_law(&m, &phi, 4).unwrap();
    assert!(c.equal, "{c:?}");
    let e = energy_index(&m, &phi).unwrap();
    assert_eq!(e.ind_e, 0);
    assert_eq!(e.nul_e, 10);
}

#[test]
fn twice_the_energy_is_the_normalized_eigenvalue_at_the_index() {
    let m = build_sphere_mesh(3);
    for phi in [identity_map(&m).unwrap(), relaxed_degree_two(&m)] {
        let s = spectral_index(&m, &phi).unwrap();
        let e = energy(&m, &phi).unwrap();
        let mu = multiplier_measure(&m, &phi).unwrap();
        // eigenvalue at 1 for |dΦ|² is eigenvalue 2 for ½|dΦ|², area of g_Φ is the energy
        let lam_bar = 2.0 * s.spectrum[s.ind_s] * mu.total_mass();
        assert!((lam_bar / (2.0 * e) - 1.0).abs() < 0.02, "{lam_bar} {e}");
    }
}

#[test]
fn report_json_keys() {
    let m = build_sphere_mesh(1);
    let r = index_report(&m, &identity_map(&m).unwrap()).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for k in ["ind_S", "nul_S", "ind_E", "margins", "normalization"] {
        assert!(v.get(k).is_some(), "{k}");
    }
    assert_eq!(v["normalization"], "density |dPhi|^2, threshold 1");
}
