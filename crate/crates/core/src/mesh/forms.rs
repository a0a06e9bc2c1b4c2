use super::{cross, dot, norm, sub, ConformalDensity, MeasureKind, MeshMeasure, TriMesh};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Cotangent stiffness form `K` with `uᵀKu = ∫|du|²` for piecewise-linear
/// `u`. Obtuse angles give negative weights, which are kept.
pub fn stiffness_matrix(mesh: &TriMesh) -> Result<CsrMatrix> {
    let mut trip = Vec::with_capacity(mesh.num_triangles() * 9);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[t];
        let cot = corner_cotangents(mesh, t)?;
        for k in 0..3 {
            // edge opposite corner k
            let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let w = 0.5 * cot[k];
            trip.push((i, j, -w));
            trip.push((j, i, -w));
            trip.push((i, i, w));
            trip.push((j, j, w));
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.num_vertices(), &trip))
}

/// Cotangents of the three corner angles of triangle `t`.
pub(crate) fn corner_cotangents(mesh: &TriMesh, t: usize) -> Result<[f64; 3]> {
    let c = mesh.corners(t);
    let mut out = [0.0; 3];
    let scale = (0..3).map(|k| dot(sub(c[(k + 1) % 3], c[k]), sub(c[(k + 1) % 3], c[k]))).fold(0.0, f64::max);
    for k in 0..3 {
        let a = sub(c[(k + 1) % 3], c[k]);
        let b = sub(c[(k + 2) % 3], c[k]);
        let area2 = norm(cross(a, b));
        if !(area2 > 1e-14 * scale) {
            return Err(Error::DegenerateTriangle(t));
        }
        out[k] = dot(a, b) / area2;
    }
    Ok(out)
}

/// Barycentric area (one third of incident triangle areas) per vertex.
pub fn vertex_areas(mesh: &TriMesh) -> Vec<f64> {
    let mut a = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let at = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            a[v] += at;
        }
    }
    a
}

/// Lumped mass for the metric `f·g₀`: `M_ii = f_i · A_i` with `A_i` the
/// barycentric vertex area. Trace equals [`area`].
pub fn mass_matrix(mesh: &TriMesh, f: &ConformalDensity) -> Result<Vec<f64>> {
    f.validate(mesh)?;
    Ok(vertex_areas(mesh).iter().zip(&f.f).map(|(a, w)| a * w).collect())
}

/// Area of `(M, f·g₀)`.
pub fn area(mesh: &TriMesh, f: &ConformalDensity) -> f64 {
    vertex_areas(mesh).iter().zip(&f.f).map(|(a, w)| a * w).sum()
}

pub fn volume_measure(mesh: &TriMesh, f: &ConformalDensity) -> Result<MeshMeasure> {
    Ok(MeshMeasure {
        kind: MeasureKind::Volume,
        weights: mass_matrix(mesh, f)?,
    })
}

/// Length measure of the selected boundary loops: each vertex gets half the
/// length of its two incident boundary edges.
pub fn curve_measure(mesh: &TriMesh, loop_ids: &[usize]) -> Result<MeshMeasure> {
    if loop_ids.is_empty() {
        return Err(Error::InvalidArgument("empty boundary loop selection".into()));
    }
    let loops = mesh.boundary_loops();
    let mut weights = vec![0.0; mesh.num_vertices()];
    for &id in loop_ids {
        let lp = loops
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no boundary loop {id}")))?;
        for k in 0..lp.len() {
            let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
            let len = boundary_edge_length(mesh, a, b);
            weights[a] += 0.5 * len;
            weights[b] += 0.5 * len;
        }
    }
    Ok(MeshMeasure {
        kind: MeasureKind::Curve,
        weights,
    })
}

/// Measure of every boundary loop.
pub fn full_boundary_measure(mesh: &TriMesh) -> Result<MeshMeasure> {
    let ids: Vec<usize> = (0..mesh.boundary_loops().len()).collect();
    curve_measure(mesh, &ids)
}

fn boundary_edge_length(mesh: &TriMesh, a: usize, b: usize) -> f64 {
    // read the edge from its triangle so chart shifts are honoured
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            if tri[k] == a && tri[(k + 1) % 3] == b {
                let c = mesh.corners(t);
                return norm(sub(c[(k + 1) % 3], c[k]));
            }
        }
    }
    norm(sub(mesh.vertices()[b], mesh.vertices()[a]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_disk_mesh, build_sphere_mesh, build_torus_mesh};

    #[test]
    fn right_isoceles_edge_weights() {
        let m = TriMesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let k = stiffness_matrix(&m).unwrap();
        // legs (0,1) and (0,2) weight 1/2; hypotenuse (1,2) weight 0
        assert!((k.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((k.get(0, 2) + 0.5).abs() < 1e-15);
        assert!(k.get(1, 2).abs() < 1e-15);
    }

    #[test]
    fn stiffness_kills_constants_and_is_scale_invariant() {
        let m = build_sphere_mesh(2);
        let k = stiffness_matrix(&m).unwrap();
        let r = k.mul_vec(&vec![1.0; m.num_vertices()]);
        assert!(r.iter().all(|x| x.abs() < 1e-12));
        assert!(k.is_symmetric());
        let k2 = stiffness_matrix(&m.scaled(2.0)).unwrap();
        assert_eq!(k, k2);
    }

    #[test]
    fn torus_stiffness_row_sums_vanish() {
        let m = build_torus_mesh((0.5, 3f64.sqrt() / 2.0), 10).unwrap();
        let k = stiffness_matrix(&m).unwrap();
        let r = k.mul_vec(&vec![1.0; m.num_vertices()]);
        assert!(r.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let m = TriMesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(stiffness_matrix(&m), Err(Error::DegenerateTriangle(0))));
    }

    #[test]
    fn mass_trace_equals_area() {
        let m = build_torus_mesh((0.0, 1.0), 16).unwrap();
        let one = ConformalDensity::constant(&m, 1.0);
        let tr: f64 = mass_matrix(&m, &one).unwrap().iter().sum();
        assert!((tr - 1.0).abs() < 1e-12);
        assert_eq!(tr, area(&m, &one));
        let c = ConformalDensity::constant(&m, 3.5);
        let tr_c: f64 = mass_matrix(&m, &c).unwrap().iter().sum();
        assert!((tr_c - 3.5).abs() < 1e-12);
    }

    #[test]
    fn density_on_one_star() {
        let m = build_sphere_mesh(1);
        let v = 5;
        let mut f = vec![0.0; m.num_vertices()];
        f[v] = 1.0;
        let star_area: f64 = m
            .triangles()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.contains(&v))
            .map(|(t, _)| m.triangle_area(t))
            .sum();
        let f = ConformalDensity::new(f);
        // not a valid metric density (zero triangles), but area() still sums
        assert!((area(&m, &f) - star_area / 3.0).abs() < 1e-14);
    }

    #[test]
    fn disk_boundary_length_is_inscribed_perimeter() {
        let rings = 8;
        let m = build_disk_mesh(rings).unwrap();
        let mu = curve_measure(&m, &[0]).unwrap();
        let n = 6.0 * rings as f64;
        let exact = n * 2.0 * (std::f64::consts::PI / n).sin();
        assert!((mu.total_mass() - exact).abs() < 1e-12);
        assert!(curve_measure(&m, &[1]).is_err());
        assert!(curve_measure(&m, &[]).is_err());
    }
}
