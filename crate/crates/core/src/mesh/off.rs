//! ASCII OFF reader/writer. Flat tori get a `<file>.torus` sidecar holding
//! `tau_re=`, `tau_im=`, `res=` so the periodic chart can be rebuilt.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{build_torus_mesh, TriMesh, Vec3};
use crate::error::{Error, Result};

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".torus");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let (verts, tris) = parse_off(&text)?;
    let side = sidecar_path(path);
    if side.exists() {
        let s = fs::read_to_string(&side).map_err(io_err(&side))?;
        let (tau, res) = parse_sidecar(&s)?;
        let torus = build_torus_mesh(tau, res)?;
        if torus.num_vertices() != verts.len() || torus.num_triangles() != tris.len() {
            return Err(Error::Parse {
                line: 0,
                msg: "torus sidecar does not match OFF counts".into(),
            });
        }
        return Ok(torus);
    }
    TriMesh::new(verts, tris)
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.num_vertices(), mesh.num_triangles());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    fs::write(path, out).map_err(io_err(path))?;
    if let Some(chart) = mesh.chart() {
        let side = sidecar_path(path);
        let s = format!(
            "tau_re={:?}\ntau_im={:?}\nres={}\n",
            chart.tau.0, chart.tau.1, chart.resolution
        );
        fs::write(&side, s).map_err(io_err(&side))?;
    }
    Ok(())
}

fn parse_off(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    // tokens with their 1-based line numbers, comments stripped
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(|t| (ln + 1, t)));
    }
    let mut it = tokens.into_iter();
    match it.next() {
        Some((_, "OFF")) => {}
        Some((line, tok)) => {
            return Err(Error::Parse {
                line,
                msg: format!("expected OFF header, found {tok:?}"),
            })
        }
        None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
    }
    let mut next_num = |what: &str| -> Result<(usize, &str)> {
        it.next().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of file reading {what}"),
        })
    };
    fn num<T: std::str::FromStr>(tok: (usize, &str), what: &str) -> Result<T> {
        tok.1.parse().map_err(|_| Error::Parse {
            line: tok.0,
            msg: format!("invalid {what} {:?}", tok.1),
        })
    }
    let nv: usize = num(next_num("vertex count")?, "vertex count")?;
    let nf: usize = num(next_num("face count")?, "face count")?;
    let _ne: usize = num(next_num("edge count")?, "edge count")?;
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = num(next_num("coordinate")?, "coordinate")?;
        let y = num(next_num("coordinate")?, "coordinate")?;
        let z = num(next_num("coordinate")?, "coordinate")?;
        verts.push([x, y, z]);
    }
    let mut tris = Vec::with_capacity(nf);
    for _ in 0..nf {
        let tok = next_num("face size")?;
        let k: usize = num(tok, "face size")?;
        if k < 3 {
            return Err(Error::Parse {
                line: tok.0,
                msg: format!("face with {k} vertices"),
            });
        }
        let mut poly = Vec::with_capacity(k);
        for _ in 0..k {
            let t = next_num("face index")?;
            let v: usize = num(t, "face index")?;
            if v >= nv {
                return Err(Error::Parse {
                    line: t.0,
                    msg: format!("vertex index {v} out of range"),
                });
            }
            poly.push(v);
        }
        // fan triangulation of polygons
        for j in 1..k - 1 {
            tris.push([poly[0], poly[j], poly[j + 1]]);
        }
    }
    Ok((verts, tris))
}

fn parse_sidecar(s: &str) -> Result<((f64, f64), usize)> {
    let mut re = None;
    let mut im = None;
    let mut res = None;
    for (ln, line) in s.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: ln + 1,
            msg: format!("expected key=value, found {line:?}"),
        })?;
        let bad = || Error::Parse {
            line: ln + 1,
            msg: format!("invalid value for {k}"),
        };
        match k.trim() {
            "tau_re" => re = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
            "tau_im" => im = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
            "res" => res = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
            _ => {}
        }
    }
    match (re, im, res) {
        (Some(re), Some(im), Some(res)) => Ok(((re, im), res)),
        _ => Err(Error::Parse {
            line: 0,
            msg: "torus sidecar needs tau_re, tau_im and res".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "OFF\n# regular tetrahedron\n4 4 0\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

    #[test]
    fn tetrahedron_is_closed_sphere() {
        let (v, t) = parse_off(TETRA).unwrap();
        let m = TriMesh::new(v, t).unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.genus_hint(), 0);
        assert!(m.is_closed());
    }

    #[test]
    fn header_and_truncation_errors() {
        assert!(matches!(parse_off("OFX\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_off("OFF\n3 1 0\n0 0 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_manifold_file_is_rejected() {
        let txt = "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 -1 0\n0 0 1\n3 0 1 2\n3 1 0 3\n3 0 1 4\n";
        let (v, t) = parse_off(txt).unwrap();
        assert!(matches!(TriMesh::new(v, t), Err(Error::NonManifoldEdge(..))));
    }

    #[test]
    fn torus_round_trips_through_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.off");
        let m = build_torus_mesh((0.25, 0.9), 7).unwrap();
        save_mesh(&m, &p).unwrap();
        let back = load_mesh(&p).unwrap();
        assert_eq!(back.chart(), m.chart());
        assert_eq!(back.vertices(), m.vertices());
    }
}
