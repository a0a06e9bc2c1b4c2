//! Triangulated surfaces carrying a background conformal class.
//!
//! A [`TriMesh`] is either embedded (vertex positions in R³) or a flat torus
//! stored in a 2D chart with periodic identification; in the latter case each
//! triangle corner carries an integer lattice shift so that face geometry is
//! exact.

mod build;
mod forms;
mod off;
mod puncture;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::{build_annulus_mesh, build_disk_mesh, build_sphere_mesh, build_torus_mesh};
pub(crate) use forms::corner_cotangents;
pub use forms::{area, curve_measure, full_boundary_measure, mass_matrix, stiffness_matrix, vertex_areas, volume_measure};
pub use off::{load_mesh, save_mesh};
pub use puncture::{geodesic_distances, puncture, spread_vertices};

pub type Vec3 = [f64; 3];

/// Periodic chart data for a flat torus `R² / (Z + τZ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatChart {
    pub tau: (f64, f64),
    pub resolution: usize,
    /// Uniform scale applied to the lattice `Z + τZ`.
    pub scale: f64,
    /// Per-triangle, per-corner lattice shifts `(m, n)`: the corner sits at
    /// `vertex + m·(1,0) + n·(Re τ, Im τ)`.
    pub shifts: Vec<[[i32; 2]; 3]>,
}

impl FlatChart {
    pub fn lattice_offset(&self, s: [i32; 2]) -> Vec3 {
        let (re, im) = self.tau;
        [
            self.scale * (s[0] as f64 + s[1] as f64 * re),
            self.scale * s[1] as f64 * im,
            0.0,
        ]
    }
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    boundary_loops: Vec<Vec<usize>>,
    genus_hint: usize,
    components: usize,
    chart: Option<FlatChart>,
    labels: Vec<usize>,
}

impl TriMesh {
    /// Validate and build an embedded mesh.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_chart(vertices, triangles, None)
    }

    pub(crate) fn with_chart(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        chart: Option<FlatChart>,
    ) -> Result<Self> {
        let labels = (0..vertices.len()).collect();
        let topo = Topology::analyze(vertices.len(), &triangles)?;
        Ok(TriMesh {
            vertices,
            triangles,
            boundary_loops: topo.boundary_loops,
            genus_hint: topo.genus,
            components: topo.components,
            chart,
            labels,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn genus_hint(&self) -> usize {
        self.genus_hint
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn chart(&self) -> Option<&FlatChart> {
        self.chart.as_ref()
    }

    /// Index of each vertex in the mesh this one was cut from.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_loops.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| ordered(t[k], t[(k + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    /// Corner positions of triangle `t`, unwrapped through the periodic chart
    /// when present.
    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let tri = self.triangles[t];
        let mut c = [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]];
        if let Some(chart) = &self.chart {
            for k in 0..3 {
                let off = chart.lattice_offset(chart.shifts[t][k]);
                for d in 0..3 {
                    c[k][d] += off[d];
                }
            }
        }
        c
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    /// Vertices adjacent through an edge, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.num_vertices()];
        for t in &self.triangles {
            for k in 0..3 {
                nb[t[k]].push(t[(k + 1) % 3]);
                nb[t[k]].push(t[(k + 2) % 3]);
            }
        }
        for l in nb.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }

    /// Uniformly scaled copy (chart meshes scale the lattice as well).
    pub fn scaled(&self, c: f64) -> TriMesh {
        let mut m = self.clone();
        for v in m.vertices.iter_mut() {
            for x in v.iter_mut() {
                *x *= c;
            }
        }
        if let Some(chart) = m.chart.as_mut() {
            chart.scale *= c;
        }
        m
    }

    /// Set of boundary vertices.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut on = vec![false; self.num_vertices()];
        for l in &self.boundary_loops {
            for &v in l {
                on[v] = true;
            }
        }
        on
    }
}

/// Nonnegative per-vertex density `f` defining the metric `f·g₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalDensity {
    pub f: Vec<f64>,
}

impl ConformalDensity {
    pub fn constant(mesh: &TriMesh, c: f64) -> Self {
        ConformalDensity {
            f: vec![c; mesh.num_vertices()],
        }
    }

    pub fn new(f: Vec<f64>) -> Self {
        ConformalDensity { f }
    }

    /// Checks nonnegativity, positive total mass and that zeros are isolated
    /// (no triangle with three zero vertices).
    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        if self.f.len() != mesh.num_vertices() {
            return Err(Error::InvalidDensity(format!(
                "length {} != {} vertices",
                self.f.len(),
                mesh.num_vertices()
            )));
        }
        if let Some(i) = self.f.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidDensity(format!("negative or non-finite value at vertex {i}")));
        }
        if let Some(t) = mesh
            .triangles()
            .iter()
            .position(|t| t.iter().all(|&v| self.f[v] == 0.0))
        {
            return Err(Error::InvalidDensity(format!("triangle {t} has all-zero density")));
        }
        if !self.f.iter().any(|&x| x > 0.0) {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Volume,
    Curve,
}

/// Vertex-lumped Radon measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshMeasure {
    pub kind: MeasureKind,
    pub weights: Vec<f64>,
}

impl MeshMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> MeshMeasure {
        MeshMeasure {
            kind: self.kind,
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// Rescaled to unit total mass.
    pub fn normalized(&self) -> MeshMeasure {
        self.scaled(1.0 / self.total_mass())
    }

    pub fn point_mass(mesh: &TriMesh, vertex: usize, mass: f64) -> MeshMeasure {
        let mut weights = vec![0.0; mesh.num_vertices()];
        weights[vertex] = mass;
        MeshMeasure {
            kind: MeasureKind::Volume,
            weights,
        }
    }

    pub fn rank(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        if self.weights.len() != mesh.num_vertices() {
            return Err(Error::InvalidMeasure("length mismatch".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("negative or non-finite weight".into()));
        }
        if self.total_mass() <= 0.0 {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        if self.kind == MeasureKind::Curve {
            let on = mesh.boundary_vertices();
            if self.weights.iter().zip(&on).any(|(&w, &b)| w > 0.0 && !b) {
                return Err(Error::InvalidMeasure("curve measure supported off the boundary".into()));
            }
        }
        Ok(())
    }
}

struct Topology {
    boundary_loops: Vec<Vec<usize>>,
    genus: usize,
    components: usize,
}

impl Topology {
    fn analyze(nv: usize, triangles: &[[usize; 3]]) -> Result<Self> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
        let mut used = vec![false; nv];
        for (ti, t) in triangles.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!("triangle {ti} references vertex {v}")));
                }
                used[v] = true;
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidMesh(format!("triangle {ti} repeats a vertex")));
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *undirected.entry(ordered(a, b)).or_default() += 1;
                let c = directed.entry((a, b)).or_default();
                *c += 1;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("isolated vertex {v}")));
        }
        for (&(a, b), &c) in &undirected {
            if c > 2 {
                return Err(Error::NonManifoldEdge(a, b));
            }
        }
        for (&(a, b), &c) in &directed {
            if c > 1 {
                return Err(Error::InconsistentOrientation(a, b));
            }
        }
        // boundary: directed edges whose reverse is absent
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut bedges: Vec<(usize, usize)> = directed
            .keys()
            .copied()
            .filter(|&(a, b)| !directed.contains_key(&(b, a)))
            .collect();
        bedges.sort_unstable();
        for &(a, b) in &bedges {
            if next.insert(a, b).is_some() {
                return Err(Error::NonManifoldVertex(a));
            }
        }
        let mut loops = Vec::new();
        let mut seen: HashMap<usize, bool> = HashMap::new();
        for &(start, _) in &bedges {
            if seen.contains_key(&start) {
                continue;
            }
            let mut lp = vec![start];
            seen.insert(start, true);
            let mut cur = next[&start];
            while cur != start {
                if seen.contains_key(&cur) {
                    return Err(Error::NonManifoldVertex(cur));
                }
                seen.insert(cur, true);
                lp.push(cur);
                cur = *next.get(&cur).ok_or(Error::NonManifoldVertex(cur))?;
            }
            loops.push(lp);
        }
        // vertex fans must be connected (no pinch points)
        let mut vt: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for (ti, t) in triangles.iter().enumerate() {
            for &v in t {
                vt[v].push(ti);
            }
        }
        for v in 0..nv {
            let fan = &vt[v];
            if fan.len() <= 1 {
                continue;
            }
            let mut reached = vec![false; fan.len()];
            reached[0] = true;
            let mut stack = vec![0usize];
            while let Some(i) = stack.pop() {
                let ti = triangles[fan[i]];
                for (j, &tj) in fan.iter().enumerate() {
                    if reached[j] {
                        continue;
                    }
                    let t2 = triangles[tj];
                    let shared = ti.iter().filter(|&&x| x != v && t2.contains(&x)).count();
                    if shared > 0 {
                        reached[j] = true;
                        stack.push(j);
                    }
                }
            }
            if reached.iter().any(|r| !r) {
                return Err(Error::NonManifoldVertex(v));
            }
        }
        // connected components through triangles
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let nx = p[c];
                p[c] = r;
                c = nx;
            }
            r
        }
        for t in triangles {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let components = (0..nv).filter(|&v| find(&mut parent, v) == v).count();
        let chi = nv as i64 - undirected.len() as i64 + triangles.len() as i64;
        let twice_genus = 2 * components as i64 - loops.len() as i64 - chi;
        if twice_genus < 0 || twice_genus % 2 != 0 {
            return Err(Error::InvalidMesh(format!(
                "Euler characteristic {chi} incompatible with {} boundary loops",
                loops.len()
            )));
        }
        Ok(Topology {
            boundary_loops: loops,
            genus: (twice_genus / 2) as usize,
            components,
        })
    }
}

pub(crate) fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}
