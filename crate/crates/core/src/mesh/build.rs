use std::collections::HashMap;
use std::f64::consts::PI;

use super::{cross, dot, sub, FlatChart, TriMesh, Vec3};
use crate::error::{Error, Result};

/// Icosahedron subdivided `subdivisions` times with vertices projected to
/// the unit sphere. `V = 10·4^s + 2`.
pub fn build_sphere_mesh(subdivisions: usize) -> TriMesh {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = vec![
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ];
    for v in verts.iter_mut() {
        *v = normalize(*v);
    }
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *cache.entry(key).or_insert_with(|| {
                let (va, vb) = (verts[a], verts[b]);
                verts.push(normalize([va[0] + vb[0], va[1] + vb[1], va[2] + vb[2]]));
                verts.len() - 1
            })
        };
        for t in &tris {
            let ab = mid(t[0], t[1], &mut verts);
            let bc = mid(t[1], t[2], &mut verts);
            let ca = mid(t[2], t[0], &mut verts);
            next.push([t[0], ab, ca]);
            next.push([t[1], bc, ab]);
            next.push([t[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    // outward orientation
    for t in tris.iter_mut() {
        let (a, b, c) = (verts[t[0]], verts[t[1]], verts[t[2]]);
        let n = cross(sub(b, a), sub(c, a));
        if dot(n, [a[0] + b[0] + c[0], a[1] + b[1] + c[1], a[2] + b[2] + c[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    TriMesh::new(verts, tris).expect("icosphere is a valid closed mesh")
}

/// Flat torus `R²/(Z + τZ)` triangulated by a `resolution × resolution`
/// lattice grid. Vertex positions hold the 2D chart (third coordinate 0).
pub fn build_torus_mesh(tau: (f64, f64), resolution: usize) -> Result<TriMesh> {
    let (re, im) = tau;
    if !(im > 0.0) || !re.is_finite() {
        return Err(Error::InvalidArgument(format!("Im τ must be positive, got {im}")));
    }
    if resolution < 3 {
        return Err(Error::InvalidArgument(format!("resolution must be at least 3, got {resolution}")));
    }
    let n = resolution;
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| (j % n) * n + (i % n);
    let mut verts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let (s, t) = (i as f64 * h, j as f64 * h);
            verts.push([s + t * re, t * im, 0.0]);
        }
    }
    let wrap = |i: usize| if i == n { 1 } else { 0 };
    let mut tris = Vec::with_capacity(2 * n * n);
    let mut shifts = Vec::with_capacity(2 * n * n);
    // split each cell along its shorter diagonal
    let short_antidiag = re > 0.0;
    for j in 0..n {
        for i in 0..n {
            let c00 = (idx(i, j), [0, 0]);
            let c10 = (idx(i + 1, j), [wrap(i + 1), 0]);
            let c11 = (idx(i + 1, j + 1), [wrap(i + 1), wrap(j + 1)]);
            let c01 = (idx(i, j + 1), [0, wrap(j + 1)]);
            let cells = if short_antidiag {
                [[c00, c10, c01], [c10, c11, c01]]
            } else {
                [[c00, c10, c11], [c00, c11, c01]]
            };
            for tri in cells {
                tris.push([tri[0].0, tri[1].0, tri[2].0]);
                shifts.push([tri[0].1, tri[1].1, tri[2].1]);
            }
        }
    }
    let chart = FlatChart {
        tau,
        resolution,
        scale: 1.0,
        shifts,
    };
    TriMesh::with_chart(verts, tris, Some(chart))
}

/// Unit disk: center plus `rings` concentric circles, ring `k` carrying `6k`
/// vertices at radius `k/rings`. The boundary has `6·rings` segments.
pub fn build_disk_mesh(rings: usize) -> Result<TriMesh> {
    if rings == 0 {
        return Err(Error::InvalidArgument("disk needs at least one ring".into()));
    }
    let mut verts: Vec<Vec3> = vec![[0.0, 0.0, 0.0]];
    let mut ring_ids: Vec<Vec<usize>> = vec![vec![0]];
    let mut ring_angles: Vec<Vec<f64>> = vec![vec![0.0]];
    for k in 1..=rings {
        let r = k as f64 / rings as f64;
        let m = 6 * k;
        let mut ids = Vec::with_capacity(m);
        let mut angs = Vec::with_capacity(m);
        for j in 0..m {
            let a = 2.0 * PI * j as f64 / m as f64;
            ids.push(verts.len());
            angs.push(a);
            verts.push([r * a.cos(), r * a.sin(), 0.0]);
        }
        ring_ids.push(ids);
        ring_angles.push(angs);
    }
    let mut tris = Vec::new();
    for k in 1..=rings {
        stitch_rings(
            &ring_ids[k - 1],
            &ring_angles[k - 1],
            &ring_ids[k],
            &ring_angles[k],
            &mut tris,
        );
    }
    TriMesh::new(verts, tris)
}

/// Annulus `inner ≤ r ≤ 1` with `rings + 1` circles of `segments` vertices
/// each, radii geometrically spaced, alternate circles rotated half a step.
pub fn build_annulus_mesh(inner: f64, rings: usize, segments: usize) -> Result<TriMesh> {
    if !(inner > 0.0 && inner < 1.0) {
        return Err(Error::InvalidArgument(format!("inner radius must lie in (0,1), got {inner}")));
    }
    if rings == 0 || segments < 3 {
        return Err(Error::InvalidArgument("annulus needs rings ≥ 1 and segments ≥ 3".into()));
    }
    let mut verts = Vec::new();
    let mut ring_ids = Vec::new();
    let mut ring_angles = Vec::new();
    for k in 0..=rings {
        let r = inner * (1.0 / inner).powf(k as f64 / rings as f64);
        let off = if k % 2 == 1 { 0.5 } else { 0.0 };
        let mut ids = Vec::with_capacity(segments);
        let mut angs = Vec::with_capacity(segments);
        for j in 0..segments {
            let a = 2.0 * PI * (j as f64 + off) / segments as f64;
            ids.push(verts.len());
            angs.push(a);
            verts.push([r * a.cos(), r * a.sin(), 0.0]);
        }
        ring_ids.push(ids);
        ring_angles.push(angs);
    }
    let mut tris = Vec::new();
    for k in 1..=rings {
        stitch_rings(
            &ring_ids[k - 1],
            &ring_angles[k - 1],
            &ring_ids[k],
            &ring_angles[k],
            &mut tris,
        );
    }
    TriMesh::new(verts, tris)
}

/// Triangulate the band between an inner and an outer ring, both listed by
/// increasing angle in `[0, 2π)`. Triangles are counter-clockwise.
fn stitch_rings(inner: &[usize], ia: &[f64], outer: &[usize], oa: &[f64], tris: &mut Vec<[usize; 3]>) {
    let (m, n) = (inner.len(), outer.len());
    if m == 1 {
        for j in 0..n {
            tris.push([inner[0], outer[j], outer[(j + 1) % n]]);
        }
        return;
    }
    let angle = |a: &[f64], k: usize| {
        let len = a.len();
        a[k % len] + 2.0 * PI * (k / len) as f64
    };
    let (mut i, mut j) = (0, 0);
    while i < m || j < n {
        let advance_outer = j < n && (i == m || angle(oa, j + 1) <= angle(ia, i + 1));
        if advance_outer {
            tris.push([inner[i % m], outer[j % n], outer[(j + 1) % n]]);
            j += 1;
        } else {
            tris.push([inner[i % m], outer[j % n], inner[(i + 1) % m]]);
            i += 1;
        }
    }
}

fn normalize(v: Vec3) -> Vec3 {
    let r = dot(v, v).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_counts() {
        let m = build_sphere_mesh(0);
        assert_eq!(m.num_vertices(), 12);
        assert_eq!(m.num_triangles(), 20);
        assert_eq!(m.genus_hint(), 0);
        assert!(m.is_closed());
    }

    #[test]
    fn subdivided_sphere_vertex_count() {
        for s in 0..4 {
            let m = build_sphere_mesh(s);
            assert_eq!(m.num_vertices(), 10 * 4usize.pow(s as u32) + 2);
            assert_eq!(m.euler_characteristic(), 2);
        }
    }

    #[test]
    fn torus_counts_and_topology() {
        let m = build_torus_mesh((0.0, 1.0), 16).unwrap();
        assert_eq!(m.num_vertices(), 256);
        assert_eq!(m.num_triangles(), 512);
        assert_eq!(m.genus_hint(), 1);
        assert!(m.is_closed());
    }

    #[test]
    fn torus_rejects_bad_input() {
        assert!(build_torus_mesh((0.0, 1.0), 2).is_err());
        assert!(build_torus_mesh((0.5, 0.0), 8).is_err());
        assert!(build_torus_mesh((0.5, -1.0), 8).is_err());
    }

    #[test]
    fn disk_and_annulus_topology() {
        let d = build_disk_mesh(6).unwrap();
        assert_eq!(d.boundary_loops().len(), 1);
        assert_eq!(d.boundary_loops()[0].len(), 36);
        assert_eq!(d.euler_characteristic(), 1);
        let a = build_annulus_mesh(0.3, 5, 40).unwrap();
        assert_eq!(a.boundary_loops().len(), 2);
        assert_eq!(a.euler_characteristic(), 0);
        assert_eq!(a.genus_hint(), 0);
    }
}
