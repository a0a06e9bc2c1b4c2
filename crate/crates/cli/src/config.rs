use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Sphere,
    Torus,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Volume,
    Boundary,
    Energy,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    #[arg(long, value_enum)]
    pub surface: Option<Surface>,
    /// Icosphere subdivisions.
    #[arg(long)]
    pub subdiv: Option<usize>,
    /// Torus modulus as `re,im`.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<String>,
    /// Torus grid resolution.
    #[arg(long)]
    pub res: Option<usize>,
    /// OFF file for `--surface file`.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Per-vertex density, whitespace separated.
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Sphere map JSON used as the base map.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Comma-separated ε values.
    #[arg(long)]
    pub eps: Option<String>,
    /// Target sphere dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Hole counts `a..b` (inclusive) or a single count.
    #[arg(long)]
    pub holes: Option<String>,
    /// Hole radius; defaults to three mesh spacings.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of nonzero eigenvalues.
    #[arg(short = 'k', long = "k")]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    #[arg(long, value_enum)]
    pub measure: Option<Measure>,
    /// Convergence tolerance for descents and the maximizer.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap for the maximizer.
    #[arg(long)]
    pub iters: Option<usize>,
}

const KEYS: &[&str] = &[
    "surface", "subdiv", "tau", "res", "mesh", "density", "map", "eps", "n", "grid", "holes", "radius", "seed",
    "out", "k", "family", "measure", "tol", "iters",
];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| usage(format!("invalid value for {key}: {v:?}")))
}

fn parse_enum<T: ValueEnum>(key: &str, v: &str) -> Result<T, CliError> {
    T::from_str(v.trim(), true).map_err(|_| usage(format!("invalid value for {key}: {v:?}")))
}

impl Flags {
    /// Reads a `key=value` file; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Flags, CliError> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut f = Flags::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
            let (k, v) = (k.trim(), v.trim().to_string());
            match k {
                "surface" => f.surface = Some(parse_enum(k, &v)?),
                "subdiv" => f.subdiv = Some(parse_num(k, &v)?),
                "tau" => f.tau = Some(v),
                "res" => f.res = Some(parse_num(k, &v)?),
                "mesh" => f.mesh = Some(v.into()),
                "density" => f.density = Some(v.into()),
                "map" => f.map = Some(v.into()),
                "eps" => f.eps = Some(v),
                "n" => f.n = Some(parse_num(k, &v)?),
                "grid" => f.grid = Some(parse_num(k, &v)?),
                "holes" => f.holes = Some(v),
                "radius" => f.radius = Some(parse_num(k, &v)?),
                "seed" => f.seed = Some(parse_num(k, &v)?),
                "out" => f.out = Some(v.into()),
                "k" => f.k = Some(parse_num(k, &v)?),
                "family" => f.family = Some(parse_enum(k, &v)?),
                "measure" => f.measure = Some(parse_enum(k, &v)?),
                "tol" => f.tol = Some(parse_num(k, &v)?),
                "iters" => f.iters = Some(parse_num(k, &v)?),
                _ => {
                    return Err(usage(format!(
                        "{}:{}: unknown key {k:?} (known: {})",
                        path.display(),
                        i + 1,
                        KEYS.join(", ")
                    )))
                }
            }
        }
        Ok(f)
    }

    /// Fields set here win over `other`.
    pub fn or(self, other: Flags) -> Flags {
        Flags {
            surface: self.surface.or(other.surface),
            subdiv: self.subdiv.or(other.subdiv),
            tau: self.tau.or(other.tau),
            res: self.res.or(other.res),
            mesh: self.mesh.or(other.mesh),
            density: self.density.or(other.density),
            map: self.map.or(other.map),
            eps: self.eps.or(other.eps),
            n: self.n.or(other.n),
            grid: self.grid.or(other.grid),
            holes: self.holes.or(other.holes),
            radius: self.radius.or(other.radius),
            seed: self.seed.or(other.seed),
            out: self.out.or(other.out),
            config: self.config.or(other.config),
            k: self.k.or(other.k),
            family: self.family.or(other.family),
            measure: self.measure.or(other.measure),
            tol: self.tol.or(other.tol),
            iters: self.iters.or(other.iters),
        }
    }
}

/// Fully resolved run configuration, embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub surface: Surface,
    pub subdiv: usize,
    pub tau: [f64; 2],
    pub res: usize,
    pub mesh: Option<PathBuf>,
    pub density: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub eps: Vec<f64>,
    pub n: usize,
    pub grid: usize,
    pub holes: [usize; 2],
    pub radius: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub k: usize,
    pub family: Family,
    pub measure: Measure,
    pub tol: f64,
    pub iters: usize,
}

fn parse_tau(s: &str) -> Result<[f64; 2], CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(usage(format!("--tau expects re,im, got {s:?}")));
    }
    Ok([parse_num("tau", parts[0])?, parse_num("tau", parts[1])?])
}

fn parse_eps(s: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s.split(',').map(|x| parse_num("eps", x)).collect::<Result<_, _>>()?;
    if v.is_empty() || v.iter().any(|e| !(*e > 0.0)) {
        return Err(usage("--eps values must be positive"));
    }
    Ok(v)
}

fn parse_holes(s: &str) -> Result<[usize; 2], CliError> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (parse_num("holes", a)?, parse_num("holes", b)?),
        None => {
            let n = parse_num("holes", s)?;
            (n, n)
        }
    };
    if a == 0 || a > b {
        return Err(usage(format!("--holes expects 1 ≤ a ≤ b, got {s:?}")));
    }
    Ok([a, b])
}

impl RunConfig {
    /// Merges flags over the config file, applies `SPECX_OUT`, fills defaults
    /// and rejects contradictory settings.
    pub fn resolve(command: &str, flags: Flags, env_out: Option<PathBuf>) -> Result<RunConfig, CliError> {
        let file = match &flags.config {
            Some(p) => Flags::from_file(p)?,
            None => Flags::default(),
        };
        let f = flags.or(file);
        let surface = f.surface.unwrap_or(if f.mesh.is_some() { Surface::File } else { Surface::Sphere });
        match surface {
            Surface::Sphere => {
                if f.res.is_some() || f.tau.is_some() {
                    return Err(usage("--res/--tau apply to --surface torus, not sphere"));
                }
            }
            Surface::Torus => {
                if f.subdiv.is_some() {
                    return Err(usage("--subdiv applies to --surface sphere, not torus"));
                }
            }
            Surface::File => {
                if f.subdiv.is_some() || f.res.is_some() || f.tau.is_some() {
                    return Err(usage("--subdiv/--res/--tau conflict with --surface file"));
                }
                if f.mesh.is_none() {
                    return Err(usage("--surface file needs --mesh"));
                }
            }
        }
        if surface != Surface::File && f.mesh.is_some() {
            return Err(usage("--mesh needs --surface file"));
        }
        let tol = f.tol.unwrap_or(if command == "maximize" { 2e-4 } else { 1e-6 });
        if !(tol > 0.0) {
            return Err(usage("--tol must be positive"));
        }
        if let Some(r) = f.radius {
            if !(r > 0.0) {
                return Err(usage("--radius must be positive"));
            }
        }
        let n = f.n.unwrap_or(2);
        if n < 2 {
            return Err(usage("--n must be at least 2"));
        }
        let family = f.family.unwrap_or(Family::First);
        let grid = f.grid.unwrap_or(if family == Family::Second { 5 } else { 7 });
        if grid < 2 {
            return Err(usage("--grid must be at least 2"));
        }
        let res = f.res.unwrap_or(32);
        if res < 3 {
            return Err(usage("--res must be at least 3"));
        }
        Ok(RunConfig {
            command: command.to_string(),
            surface,
            subdiv: f.subdiv.unwrap_or(3),
            tau: f.tau.as_deref().map(parse_tau).transpose()?.unwrap_or([0.0, 1.0]),
            res,
            mesh: f.mesh,
            density: f.density,
            map: f.map,
            eps: f.eps.as_deref().map(parse_eps).transpose()?.unwrap_or(vec![0.2, 0.1, 0.05]),
            n,
            grid,
            holes: f.holes.as_deref().map(parse_holes).transpose()?.unwrap_or([1, 16]),
            radius: f.radius,
            seed: f.seed.unwrap_or(0),
            out: env_out.or(f.out).unwrap_or_else(|| PathBuf::from("specx-out")),
            k: f.k.unwrap_or(5),
            family,
            measure: f.measure.unwrap_or(Measure::Volume),
            tol,
            iters: f.iters.unwrap_or(200),
        })
    }

    /// Short label for ledger rows.
    pub fn surface_label(&self) -> String {
        match self.surface {
            Surface::Sphere => format!("sphere-s{}", self.subdiv),
            Surface::Torus => format!("torus-{}_{}-r{}", self.tau[0], self.tau[1], self.res),
            Surface::File => self
                .mesh
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        }
    }
}
