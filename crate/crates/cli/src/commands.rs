use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;
use specx_core::glminmax::{
    eigen_lower_from_family, extract_critical, extract_schedule, minmax_upper, sandwich_bound, DescentOpts, Family,
    FamilySpec, MinMaxReport,
};
use specx_core::harmonic::{
    clifford_map, identity_map, include_equatorial, multiplier_measure, relax_harmonic, tension_residual,
    torus_elliptic_map, SphereMap,
};
use specx_core::index::{check_composition_law, index_report, CompositionCheck, IndexReport};
use specx_core::mesh::{
    self, build_sphere_mesh, build_torus_mesh, load_mesh, puncture, spread_vertices, ConformalDensity, TriMesh,
};
use specx_core::mobius::{conformal_volume, BallSearchOpts};
use specx_core::spectra::{
    laplace_eigs, maximize_lambda1_conformal, maximize_lambda1_from, measure_eigs, mesh_spacing, steklov_eigs,
    steklov_hole_sweep, MaximizeOpts, Spectrum,
};

use crate::config::{self, Measure, RunConfig, Surface};
use crate::error::CliError;

pub const VERSION: &str = concat!("specx ", env!("CARGO_PKG_VERSION"));
const LEDGER: &str = "ledger.csv";
const LEDGER_HEADER: &str = "command,surface,vertices,seed,metric,value\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Normalized first Steklov eigenvalue against the number of holes.
    SteklovHoles,
    /// Min-max energies and critical points along the ε list.
    Eps,
    /// Sampled sup against the grid size.
    Grid,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn out_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

struct Run {
    cfg: RunConfig,
    mesh: TriMesh,
}

impl Run {
    fn new(cfg: RunConfig) -> Result<Run, CliError> {
        let mesh = match cfg.surface {
            Surface::Sphere => build_sphere_mesh(cfg.subdiv),
            Surface::Torus => build_torus_mesh((cfg.tau[0], cfg.tau[1]), cfg.res).map_err(|e| usage(e.to_string()))?,
            Surface::File => {
                let p = cfg.mesh.as_ref().expect("resolved file surface has a mesh");
                load_mesh(p).map_err(|e| usage(format!("cannot load mesh {}: {e}", p.display())))?
            }
        };
        Ok(Run { cfg, mesh })
    }

    fn closed(&self) -> Result<(), CliError> {
        if self.mesh.is_closed() {
            Ok(())
        } else {
            Err(usage(format!("{} needs a closed surface", self.cfg.command)))
        }
    }

    fn density(&self) -> Result<ConformalDensity, CliError> {
        let Some(p) = &self.cfg.density else {
            return Ok(ConformalDensity::constant(&self.mesh, 1.0));
        };
        let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read density {}: {e}", p.display())))?;
        let f: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| usage(format!("bad density value {t:?}"))))
            .collect::<Result<_, _>>()?;
        let d = ConformalDensity::new(f);
        d.validate(&self.mesh).map_err(|e| usage(e.to_string()))?;
        Ok(d)
    }

    /// `--map`, else the identity (sphere) or the theta / Clifford map
    /// (torus), included into `Sⁿ`.
    fn base_map(&self) -> Result<SphereMap, CliError> {
        if let Some(p) = &self.cfg.map {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read map {}: {e}", p.display())))?;
            let m = SphereMap::from_json(&text).map_err(|e| usage(format!("bad map {}: {e}", p.display())))?;
            if m.num_vertices() != self.mesh.num_vertices() {
                return Err(usage("map and mesh sizes differ"));
            }
            return Ok(m);
        }
        let n = self.cfg.n;
        let (base, dim) = match self.cfg.surface {
            Surface::Sphere => (identity_map(&self.mesh)?, 2),
            Surface::Torus if n == 2 => (torus_elliptic_map(&self.mesh)?, 2),
            Surface::Torus => (clifford_map(&self.mesh)?, 3),
            Surface::File => return Err(usage(format!("{} on a mesh file needs --map", self.cfg.command))),
        };
        if n > dim {
            Ok(include_equatorial(&base, n)?)
        } else {
            Ok(base)
        }
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let d = self.cfg.out.as_path();
        fs::create_dir_all(d).map_err(out_err(d))?;
        Ok(d)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.out_dir()?.join(name);
        fs::write(&p, text).map_err(out_err(&p))?;
        Ok(p)
    }

    fn report<T: Serialize>(&self, name: &str, result: &T) -> Result<PathBuf, CliError> {
        let doc = json!({ "version": VERSION, "config": &self.cfg, "result": result });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        self.write(&format!("{name}.json"), &text)
    }

    fn ledger(&self, rows: &[(String, f64)]) -> Result<(), CliError> {
        let p = self.out_dir()?.join(LEDGER);
        let fresh = !p.exists();
        let mut buf = String::new();
        if fresh {
            buf.push_str(LEDGER_HEADER);
        }
        for (metric, value) in rows {
            buf.push_str(&format!(
                "{},{},{},{},{},{:?}\n",
                self.cfg.command,
                self.cfg.surface_label(),
                self.mesh.num_vertices(),
                self.cfg.seed,
                metric,
                value
            ));
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&p).map_err(out_err(&p))?;
        f.write_all(buf.as_bytes()).map_err(out_err(&p))
    }

    fn descent(&self) -> DescentOpts {
        DescentOpts {
            tol: self.cfg.tol,
            seed: self.cfg.seed,
            ..Default::default()
        }
    }

    fn family(&self, base: &SphereMap, eps: f64) -> Result<Family, CliError> {
        let mut spec = match self.cfg.family {
            config::Family::First => FamilySpec::first(base.clone(), eps),
            config::Family::Second => FamilySpec::second(base.clone(), eps),
        };
        spec.search.grid = self.cfg.grid;
        spec.search.seed = self.cfg.seed;
        Ok(Family::new(&self.mesh, spec)?)
    }

    fn radius(&self) -> f64 {
        self.cfg.radius.unwrap_or(3.0 * mesh_spacing(&self.mesh))
    }

    fn start_vertex(&self) -> usize {
        (self.cfg.seed % self.mesh.num_vertices() as u64) as usize
    }
}

fn spectrum_csv(spec: &Spectrum) -> String {
    let mut s = String::from("index,value,normalized,residual\n");
    for (i, ((v, n), r)) in spec.values.iter().zip(spec.normalized()).zip(&spec.residuals).enumerate() {
        s.push_str(&format!("{i},{v:?},{n:?},{r:?}\n"));
    }
    s
}

pub fn eigs(cfg: RunConfig) -> Result<(), CliError> {
    let run = Run::new(cfg)?;
    let k = run.cfg.k;
    let spec = match run.cfg.measure {
        Measure::Volume => laplace_eigs(&run.mesh, &run.density()?, k)?,
        Measure::Boundary => {
            if run.mesh.is_closed() {
                return Err(usage("--measure boundary needs a surface with boundary"));
            }
            steklov_eigs(&run.mesh, k)?
        }
        Measure::Energy => measure_eigs(&run.mesh, &multiplier_measure(&run.mesh, &run.base_map()?)?, k)?,
    };
    let l1 = spec.values.get(1).copied().unwrap_or(f64::NAN);
    let result = json!({
        "measure": run.cfg.measure,
        "spectrum": spec.to_json_value(),
        "multiplicity_1": spec.multiplicity(l1),
    });
    let p = run.report("eigs", &result)?;
    run.write("eigs.csv", &spectrum_csv(&spec))?;
    run.ledger(&[("lambda1".into(), l1), ("lambda_bar1".into(), spec.normalized()[1])])?;
    println!("lambda_1 = {l1:.6}  normalized = {:.6}  ({})", spec.normalized()[1], p.display());
    Ok(())
}

pub fn maximize(cfg: RunConfig) -> Result<(), CliError> {
    let run = Run::new(cfg)?;
    run.closed()?;
    let opts = MaximizeOpts {
        iters: run.cfg.iters,
        tol: run.cfg.tol,
        ..Default::default()
    };
    let r = if run.cfg.density.is_some() {
        maximize_lambda1_from(&run.mesh, &run.density()?, &opts)?
    } else {
        maximize_lambda1_conformal(&run.mesh, &opts)?
    };
    let p = run.report("maximize", &r)?;
    let dens: String = r.density.f.iter().map(|x| format!("{x:?}\n")).collect();
    run.write("density.txt", &dens)?;
    run.ledger(&[
        ("lambda_bar".into(), r.lambda_bar),
        ("stationarity_gap".into(), r.stationarity_gap),
        ("iterations".into(), r.iterations as f64),
    ])?;
    println!(
        "lambda_bar_1 = {:.6}  gap = {:.2e}  converged = {}  ({})",
        r.lambda_bar,
        r.stationarity_gap,
        r.converged,
        p.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EpsResult {
    report: MinMaxReport,
    lambda_bar1: Option<f64>,
    rayleigh: Option<f64>,
    sandwich_holds: Option<bool>,
}

fn glminmax_at(run: &Run, base: &SphereMap, eps: f64) -> Result<EpsResult, CliError> {
    let family = run.family(base, eps)?;
    let mut report = minmax_upper(&family)?;
    let (mut lambda_bar1, mut rayleigh) = (None, None);
    if run.cfg.family == config::Family::First {
        let mu = mesh::volume_measure(&run.mesh, &ConformalDensity::constant(&run.mesh, 1.0))?.normalized();
        let lower = eigen_lower_from_family(&family, &mu)?;
        report.eigen_lower_bound = Some(lower.lambda1);
        lambda_bar1 = Some(lower.lambda1);
        rayleigh = Some(lower.rayleigh);
    }
    let report = extract_critical(&run.mesh, &family, &report, &run.descent())?;
    Ok(EpsResult {
        sandwich_holds: lambda_bar1.map(|l| l <= report.eigen_upper_bound),
        lambda_bar1,
        rayleigh,
        report,
    })
}

pub fn glminmax(cfg: RunConfig) -> Result<(), CliError> {
    let run = Run::new(cfg)?;
    let base = run.base_map()?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for &eps in &run.cfg.eps {
        let r = glminmax_at(&run, &base, eps)?;
        rows.push((format!("sup_energy[eps={eps}]"), r.report.sup_energy));
        if let Some(c) = &r.report.critical {
            rows.push((format!("critical_energy[eps={eps}]"), c.energy));
        }
        println!(
            "eps = {eps}: sup = {:.6}  critical = {}",
            r.report.sup_energy,
            r.report.critical.as_ref().map_or("-".into(), |c| format!("{:.6}", c.energy))
        );
        results.push(r);
    }
    let p = run.report("glminmax", &results)?;
    run.ledger(&rows)?;
    println!("({})", p.display());
    Ok(())
}

pub fn vc(cfg: RunConfig) -> Result<(), CliError> {
    let run = Run::new(cfg)?;
    let base = run.base_map()?;
    let opts = BallSearchOpts {
        grid: run.cfg.grid,
        seed: run.cfg.seed,
        ..Default::default()
    };
    let v = conformal_volume(&run.mesh, &base, &opts)?;
    let mut rows = vec![("conformal_volume".to_string(), v.estimate)];
    let li_yau = if run.mesh.is_closed() {
        let m = maximize_lambda1_conformal(&run.mesh, &MaximizeOpts::default())?;
        rows.push(("lambda_bar".into(), m.lambda_bar));
        Some(json!({
            "lambda_bar": m.lambda_bar,
            "two_vc": 2.0 * v.estimate,
            "holds": m.lambda_bar <= 2.0 * v.estimate * 1.02,
        }))
    } else {
        None
    };
    let p = run.report("vc", &json!({ "conformal_volume": v, "li_yau": li_yau }))?;
    run.ledger(&rows)?;
    println!("V_c estimate = {:.6}  ({})", v.estimate, p.display());
    Ok(())
}

pub fn steklov(cfg: RunConfig) -> Result<(), CliError> {
    let run = Run::new(cfg)?;
    let (domain, centers, radius) = if run.mesh.is_closed() {
        let n = run.cfg.holes[1];
        let centers = spread_vertices(&run.mesh, n, run.start_vertex())?;
        let r = run.radius();
        (puncture(&run.mesh, &centers, r).map_err(|e| usage(e.to_string()))?, centers, Some(r))
    } else {
        (run.mesh.clone(), Vec::new(), None)
    };
    let spec = steklov_eigs(&domain, run.cfg.k)?;
    let s1 = spec.normalized()[1];
    let result = json!({
        "holes": centers.len(),
        "centers": centers,
        "radius": radius,
        "boundary_length": spec.mass,
        "sigma_bar1": s1,
        "spectrum": spec.to_json_value(),
    });
    let p = run.report("steklov", &result)?;
    run.write("steklov.csv", &spectrum_csv(&spec))?;
    run.ledger(&[("sigma_bar1".into(), s1)])?;
    println!("sigma_bar_1 = {s1:.6}  ({})", p.display());
    Ok(())
}

#[derive(Serialize)]
struct IndexResult {
    relaxed: bool,
    tension_residual: f64,
    report: IndexReport,
    composition: Vec<CompositionCheck>,
}

pub fn index(cfg: RunConfig) -> Result<(), CliError> {
    let run = Run::new(cfg)?;
    let mut phi = run.base_map()?;
    let mut res = tension_residual(&run.mesh, &phi)?.aggregate;
    let relaxed = res > 1e-3;
    if relaxed {
        (phi, res) = relax_harmonic(&run.mesh, &phi, 1e-8, 20_000)?;
    }
    let report = index_report(&run.mesh, &phi)?;
    let n = phi.ambient_dim - 1;
    let composition = (n + 1..=n + 3)
        .map(|m| check_composition_law(&run.mesh, &phi, m))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = vec![
        ("ind_S".to_string(), report.ind_s as f64),
        ("nul_S".into(), report.nul_s as f64),
        ("ind_E".into(), report.ind_e as f64),
        ("nul_E".into(), report.nul_e as f64),
    ];
    println!(
        "ind_S = {}  nul_S = {}  ind_E = {}  nul_E = {}  composition law {}",
        report.ind_s,
        report.nul_s,
        report.ind_e,
        report.nul_e,
        if composition.iter().all(|c| c.equal) { "holds" } else { "FAILS" }
    );
    let p = run.report(
        "index",
        &IndexResult {
            relaxed,
            tension_residual: res,
            report,
            composition,
        },
    )?;
    run.ledger(&rows)?;
    println!("({})", p.display());
    Ok(())
}

pub fn sweep(kind: SweepKind, cfg: RunConfig) -> Result<(), CliError> {
    let run = Run::new(cfg)?;
    match kind {
        SweepKind::SteklovHoles => sweep_holes(&run),
        SweepKind::Eps => sweep_eps(&run),
        SweepKind::Grid => sweep_grid(&run),
    }
}

fn sweep_holes(run: &Run) -> Result<(), CliError> {
    run.closed()?;
    let reference = maximize_lambda1_conformal(&run.mesh, &MaximizeOpts::default())?.lambda_bar;
    let counts: Vec<usize> = (run.cfg.holes[0]..=run.cfg.holes[1]).collect();
    let s = steklov_hole_sweep(&run.mesh, &counts, run.radius(), run.start_vertex(), reference)
        .map_err(|e| match e {
            specx_core::Error::InvalidArgument(m) => usage(m),
            e => e.into(),
        })?;
    run.write("sweep-steklov-holes.csv", &s.to_csv())?;
    let p = run.report("sweep-steklov-holes", &s)?;
    let mut rows: Vec<(String, f64)> = s
        .rows
        .iter()
        .map(|r| (format!("sigma_bar1[holes={}]", r.holes), r.sigma_bar1))
        .collect();
    rows.push(("lambda_bar_ref".into(), reference));
    rows.push(("nondecreasing".into(), s.nondecreasing as u8 as f64));
    run.ledger(&rows)?;
    let last = s.rows.last().expect("at least one row");
    println!(
        "{} rows, last sigma_bar_1 = {:.4} ({:.1}% of {:.4}), nondecreasing = {}  ({})",
        s.rows.len(),
        last.sigma_bar1,
        100.0 * last.sigma_bar1 / reference,
        reference,
        s.nondecreasing,
        p.display()
    );
    Ok(())
}

fn sweep_eps(run: &Run) -> Result<(), CliError> {
    let base = run.base_map()?;
    let eps = &run.cfg.eps;
    let first = run.family(&base, eps[0])?;
    let report = minmax_upper(&first)?;
    let critical = extract_schedule(&run.mesh, &first, &report, eps, &run.descent())?;
    let lambda_bar1 = if run.mesh.is_closed() {
        Some(laplace_eigs(&run.mesh, &ConformalDensity::constant(&run.mesh, 1.0), 1)?.normalized()[1])
    } else {
        None
    };
    let mut csv = String::from("eps,sup_energy,critical_energy,gradient_norm,sandwich_bound,lambda_bar1\n");
    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    for (&e, c) in eps.iter().zip(&critical) {
        let sup = minmax_upper(&first.with_eps(e)?)?.sup_energy;
        let bound = sandwich_bound(sup, e);
        csv.push_str(&format!(
            "{e:?},{sup:?},{:?},{:?},{bound:?},{}\n",
            c.energy,
            c.gradient_norm,
            lambda_bar1.map_or(String::new(), |l| format!("{l:?}"))
        ));
        rows.push((format!("sup_energy[eps={e}]"), sup));
        rows.push((format!("critical_energy[eps={e}]"), c.energy));
        json_rows.push(json!({
            "eps": e,
            "sup_energy": sup,
            "critical_energy": c.energy,
            "gradient_norm": c.gradient_norm,
            "converged": c.converged,
            "sandwich_bound": bound,
        }));
    }
    run.write("sweep-eps.csv", &csv)?;
    let p = run.report("sweep-eps", &json!({ "lambda_bar1": lambda_bar1, "rows": json_rows }))?;
    run.ledger(&rows)?;
    print!("{csv}");
    println!("({})", p.display());
    Ok(())
}

fn sweep_grid(run: &Run) -> Result<(), CliError> {
    let base = run.base_map()?;
    let family = run.family(&base, run.cfg.eps[0])?;
    let mut csv = String::from("grid,sup_energy,evaluations\n");
    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    for g in (3..=run.cfg.grid).step_by(2) {
        let mut spec = family.spec.clone();
        spec.search.grid = g;
        let r = minmax_upper(&Family::new(&run.mesh, spec)?)?;
        csv.push_str(&format!("{g},{:?},{}\n", r.sup_energy, r.evaluations));
        rows.push((format!("sup_energy[grid={g}]"), r.sup_energy));
        json_rows.push(json!({ "grid": g, "sup_energy": r.sup_energy, "evaluations": r.evaluations }));
    }
    run.write("sweep-grid.csv", &csv)?;
    let p = run.report("sweep-grid", &json_rows)?;
    run.ledger(&rows)?;
    print!("{csv}");
    println!("({})", p.display());
    Ok(())
}
