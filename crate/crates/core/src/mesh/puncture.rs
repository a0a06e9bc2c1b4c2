use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{norm, sub, TriMesh};
use crate::error::{Error, Result};

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Intrinsic distance from `source` to every vertex. Flat tori use the exact
/// minimal-image distance in the chart; embedded meshes use shortest edge
/// paths.
pub fn geodesic_distances(mesh: &TriMesh, source: usize) -> Vec<f64> {
    if let Some(chart) = mesh.chart() {
        let p = mesh.vertices()[source];
        return mesh
            .vertices()
            .iter()
            .map(|q| {
                let mut best = f64::INFINITY;
                for m in -1..=1 {
                    for n in -1..=1 {
                        let off = chart.lattice_offset([m, n]);
                        let d = [q[0] + off[0] - p[0], q[1] + off[1] - p[1], 0.0];
                        best = best.min(norm(d));
                    }
                }
                best
            })
            .collect();
    }
    let nb = mesh.vertex_neighbors();
    let pos = mesh.vertices();
    let mut dist = vec![f64::INFINITY; mesh.num_vertices()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &v in &nb[u] {
            let nd = d + norm(sub(pos[v], pos[u]));
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

/// Farthest-point sample of `count` vertices starting at `start`.
pub fn spread_vertices(mesh: &TriMesh, count: usize, start: usize) -> Result<Vec<usize>> {
    let nv = mesh.num_vertices();
    if start >= nv || count > nv {
        return Err(Error::InvalidArgument(format!("cannot pick {count} vertices from {nv} starting at {start}")));
    }
    let mut centers = Vec::with_capacity(count);
    if count == 0 {
        return Ok(centers);
    }
    centers.push(start);
    let mut dist = geodesic_distances(mesh, start);
    while centers.len() < count {
        let next = (0..nv).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
        centers.push(next);
        for (d, e) in dist.iter_mut().zip(geodesic_distances(mesh, next)) {
            *d = d.min(e);
        }
    }
    Ok(centers)
}

/// Remove every triangle touching the open metric disk of `radius` around
/// each center. Each center yields one new boundary loop; vertex labels keep
/// pointing at the original mesh.
pub fn puncture(mesh: &TriMesh, centers: &[usize], radius: f64) -> Result<TriMesh> {
    if centers.is_empty() {
        return Ok(mesh.clone());
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("hole radius must be positive, got {radius}")));
    }
    let nv = mesh.num_vertices();
    let nb = mesh.vertex_neighbors();
    let mut hole_of_vertex = vec![usize::MAX; nv];
    let mut removed = vec![false; mesh.num_triangles()];
    for (h, &c) in centers.iter().enumerate() {
        if c >= nv {
            return Err(Error::InvalidArgument(format!("center {c} out of range")));
        }
        let dist = geodesic_distances(mesh, c);
        let inside: Vec<bool> = dist.iter().map(|&d| d < radius).collect();
        if !nb[c].iter().any(|&v| inside[v]) {
            return Err(Error::InvalidArgument(format!(
                "hole radius {radius} is below the mesh resolution at vertex {c}"
            )));
        }
        for (t, tri) in mesh.triangles().iter().enumerate() {
            if tri.iter().any(|&v| inside[v]) {
                if removed[t] {
                    return Err(Error::InvalidArgument(format!("holes around {c} overlap another hole")));
                }
                removed[t] = true;
                for &v in tri {
                    if hole_of_vertex[v] != usize::MAX && hole_of_vertex[v] != h {
                        return Err(Error::InvalidArgument(format!("holes around {c} overlap another hole")));
                    }
                    hole_of_vertex[v] = h;
                }
            }
        }
    }
    let mut keep_vertex = vec![false; nv];
    let mut kept_tris = Vec::new();
    let mut kept_shifts = Vec::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !removed[t] {
            kept_tris.push(*tri);
            if let Some(chart) = mesh.chart() {
                kept_shifts.push(chart.shifts[t]);
            }
            for &v in tri {
                keep_vertex[v] = true;
            }
        }
    }
    let mut remap = vec![usize::MAX; nv];
    let mut verts = Vec::new();
    let mut labels = Vec::new();
    for v in 0..nv {
        if keep_vertex[v] {
            remap[v] = verts.len();
            verts.push(mesh.vertices()[v]);
            labels.push(mesh.labels()[v]);
        }
    }
    let tris: Vec<[usize; 3]> = kept_tris
        .iter()
        .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
        .collect();
    let chart = mesh.chart().map(|c| super::FlatChart {
        shifts: kept_shifts,
        ..c.clone()
    });
    let mut out = TriMesh::with_chart(verts, tris, chart)?;
    out.labels = labels;
    let expected = mesh.boundary_loops().len() + centers.len();
    if out.boundary_loops().len() != expected || out.components() != mesh.components() {
        return Err(Error::InvalidArgument(format!(
            "puncturing produced {} boundary loops, expected {expected}",
            out.boundary_loops().len()
        )));
    }
    Ok(out)
}
