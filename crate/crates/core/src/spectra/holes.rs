use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::steklov_eigs;
use crate::error::{Error, Result};
use crate::mesh::{self, ConformalDensity, TriMesh};

/// `√(Area/V)`, the typical vertex spacing.
pub fn mesh_spacing(mesh: &TriMesh) -> f64 {
    (mesh::area(mesh, &ConformalDensity::constant(mesh, 1.0)) / mesh.num_vertices() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleRow {
    pub holes: usize,
    pub sigma_bar1: f64,
    pub lambda_bar_ref: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoleSweep {
    pub radius: f64,
    pub start: usize,
    pub rows: Vec<HoleRow>,
    /// `σ̄₁` never decreases from one row to the next.
    pub nondecreasing: bool,
    /// Every `σ̄₁` is strictly below the reference.
    pub below_reference: bool,
}

impl HoleSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("holes,sigma_bar1,lambda_bar_ref\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:?},{:?}\n", r.holes, r.sigma_bar1, r.lambda_bar_ref));
        }
        s
    }
}

/// Normalized first Steklov eigenvalue of `mesh` with `n` holes of the given
/// radius, for each `n` in `counts`. Centers are the first `n` points of one
/// farthest-point sample started at `start`.
pub fn steklov_hole_sweep(
    mesh: &TriMesh,
    counts: &[usize],
    radius: f64,
    start: usize,
    lambda_bar_ref: f64,
) -> Result<HoleSweep> {
    if !mesh.is_closed() {
        return Err(Error::InvalidArgument("hole sweep needs a closed mesh".into()));
    }
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::InvalidArgument("hole counts must be positive".into()));
    }
    let max = *counts.iter().max().unwrap_or(&0);
    let centers = mesh::spread_vertices(mesh, max, start)?;
    let rows = counts
        .par_iter()
        .map(|&n| {
            let p = mesh::puncture(mesh, &centers[..n], radius)?;
            let s = steklov_eigs(&p, 1)?;
            Ok(HoleRow {
                holes: n,
                sigma_bar1: s.normalized()[1],
                lambda_bar_ref,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HoleSweep {
        radius,
        start,
        nondecreasing: rows.windows(2).all(|w| w[1].sigma_bar1 >= w[0].sigma_bar1),
        below_reference: rows.iter().all(|r| r.sigma_bar1 < lambda_bar_ref),
        rows,
    })
}
