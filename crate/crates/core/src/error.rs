use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-manifold edge ({0}, {1}) shared by more than two triangles")]
    NonManifoldEdge(usize, usize),

    #[error("inconsistent orientation on edge ({0}, {1})")]
    InconsistentOrientation(usize, usize),

    #[error("non-manifold vertex {0}")]
    NonManifoldVertex(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {0} (zero area)")]
    DegenerateTriangle(usize),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("requested {requested} eigenpairs but the measure has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    #[error("eigen solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("step size {dt} violates the stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },

    #[error("root search failed: best residual {residual:e}")]
    RootNotFound { residual: f64 },

    #[error("map has zero energy")]
    ZeroEnergy,

    #[error("tangent frame construction failed at vertex {0}")]
    Frame(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
