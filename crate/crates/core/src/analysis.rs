//! Flow-uniformity metrics and field export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::{norm2, Tables, Vec2};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    /// Fraction of the hold-all domain where the smoothed speed meets `u_t`.
    pub coverage_d: f64,
    /// Fraction of the fluid region where the raw speed meets `u_t`.
    pub coverage_omega: f64,
}

/// Relative slack for the inclusive threshold test, absorbing the roundoff
/// of interpolating a field that sits exactly on the threshold.
const THRESHOLD_SLACK: f64 = 1e-12;

fn meets(v: Vec2, u_t: f64) -> bool {
    norm2(v) >= u_t * (1.0 - THRESHOLD_SLACK)
}

/// Measure of `{|u_s| >= u_t}` sampled at the quadrature points, divided by
/// the domain area.
pub fn coverage_smoothed(mesh: &TriMesh, tables: &Tables, u_s: &[Vec2], u_t: f64) -> f64 {
    let vals = tables.eval_p2_vec(mesh, u_s);
    let weights = tables.weights(mesh);
    let hit: f64 = weights
        .iter()
        .zip(&vals)
        .filter(|(_, v)| meets(**v, u_t))
        .map(|(w, _)| w)
        .sum();
    hit / weights.iter().sum::<f64>()
}

/// Measure of `{|u| >= u_t}` inside the fluid region `{psi < 0}`, relative to
/// the fluid measure; both are sampled at the same quadrature points.
pub fn coverage_fluid(
    mesh: &TriMesh,
    tables: &Tables,
    u: &[Vec2],
    u_t: f64,
    psi: &[f64],
) -> Result<f64> {
    let vals = tables.eval_p2_vec(mesh, u);
    let levels = tables.eval_p1(mesh, psi);
    let weights = tables.weights(mesh);
    let (mut fluid, mut hit) = (0.0, 0.0);
    for ((w, v), l) in weights.iter().zip(&vals).zip(&levels) {
        if *l < 0.0 {
            fluid += w;
            if meets(*v, u_t) {
                hit += w;
            }
        }
    }
    if fluid <= 0.0 {
        return Err(Error::EmptyFluidRegion);
    }
    Ok(hit / fluid)
}

pub fn coverage(
    mesh: &TriMesh,
    tables: &Tables,
    u: &[Vec2],
    u_s: &[Vec2],
    u_t: f64,
    psi: &[f64],
) -> Result<CoverageReport> {
    Ok(CoverageReport {
        coverage_d: coverage_smoothed(mesh, tables, u_s, u_t),
        coverage_omega: coverage_fluid(mesh, tables, u, u_t, psi)?,
    })
}

/// Nodal fields of one design, as written by [`export_fields`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    /// Level set at the vertices.
    pub psi: Vec<f64>,
    /// Velocity at all P2 nodes.
    pub u: Vec<Vec2>,
    /// Pressure at the vertices.
    pub p: Vec<f64>,
    /// Smoothed velocity at all P2 nodes.
    pub u_s: Vec<Vec2>,
}

pub const VTK_FILE: &str = "fields.vtk";
pub const CSV_FILE: &str = "fields.csv";
const CSV_HEADER: &str = "node,x,y,psi,u_x,u_y,p,us_x,us_y";

/// Writes `fields.vtk` (vertex data, legacy ASCII) and `fields.csv`
/// (every P2 node, lossless) into `dir`.
pub fn export_fields(mesh: &TriMesh, fields: &FieldSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vtk = dir.join(VTK_FILE);
    fs::write(&vtk, vtk_string(mesh, fields)).map_err(|e| Error::io(&vtk, e))?;
    let csv = dir.join(CSV_FILE);
    fs::write(&csv, csv_string(mesh, fields)).map_err(|e| Error::io(&csv, e))?;
    Ok(())
}

fn vtk_string(mesh: &TriMesh, f: &FieldSet) -> String {
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let mut s = String::with_capacity(64 * nv);
    s.push_str("# vtk DataFile Version 3.0\nflowtopo fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:?} {:?} 0", v[0], v[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    let scalar = |s: &mut String, name: &str, vals: &mut dyn Iterator<Item = f64>| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in vals {
            let _ = writeln!(s, "{v:?}");
        }
    };
    scalar(&mut s, "psi", &mut f.psi.iter().copied());
    let _ = writeln!(s, "VECTORS u double");
    for v in &f.u[..nv] {
        let _ = writeln!(s, "{:?} {:?} 0", v[0], v[1]);
    }
    scalar(&mut s, "p", &mut f.p.iter().copied());
    scalar(&mut s, "speed", &mut f.u[..nv].iter().map(|v| norm2(*v)));
    scalar(
        &mut s,
        "speed_smoothed",
        &mut f.u_s[..nv].iter().map(|v| norm2(*v)),
    );
    s
}

fn csv_string(mesh: &TriMesh, f: &FieldSet) -> String {
    let nv = mesh.n_vertices();
    let mut s = String::with_capacity(128 * mesh.n_p2());
    s.push_str(CSV_HEADER);
    s.push('\n');
    for k in 0..mesh.n_p2() {
        let x = mesh.p2_node(k);
        let (psi, p) = if k < nv {
            (format!("{:?}", f.psi[k]), format!("{:?}", f.p[k]))
        } else {
            (String::new(), String::new())
        };
        let _ = writeln!(
            s,
            "{k},{:?},{:?},{psi},{:?},{:?},{p},{:?},{:?}",
            x[0], x[1], f.u[k][0], f.u[k][1], f.u_s[k][0], f.u_s[k][1]
        );
    }
    s
}

/// Reads a `fields.csv` written by [`export_fields`]. Vertex rows carry the
/// level set and pressure; edge rows leave those columns empty.
pub fn import_fields(path: &Path) -> Result<FieldSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::format(path, "missing or unexpected header"));
    }
    let mut out = FieldSet {
        psi: Vec::new(),
        u: Vec::new(),
        p: Vec::new(),
        u_s: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = |m: &str| Error::format(path, format!("row {}: {m}", i + 1));
        if cols.len() != 9 {
            return Err(bad("expected 9 columns"));
        }
        let num = |c: &str| c.trim().parse::<f64>().map_err(|_| bad("invalid number"));
        out.u.push([num(cols[4])?, num(cols[5])?]);
        out.u_s.push([num(cols[7])?, num(cols[8])?]);
        match (cols[3].is_empty(), cols[6].is_empty()) {
            (false, false) => {
                if out.psi.len() != i {
                    return Err(bad("vertex rows must precede edge rows"));
                }
                out.psi.push(num(cols[3])?);
                out.p.push(num(cols[6])?);
            }
            (true, true) => {}
            _ => return Err(bad("psi and p must be both present or both empty")),
        }
    }
    Ok(out)
}

/// Reads a level set from a CSV file with a header row containing a `psi`
/// column; rows with an empty `psi` entry are skipped, so a `fields.csv`
/// is accepted as well.
pub fn read_levelset(path: &Path, n_vertices: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let col = header
        .split(',')
        .position(|h| h.trim() == "psi")
        .ok_or_else(|| Error::format(path, "header has no `psi` column"))?;
    let mut psi = Vec::with_capacity(n_vertices);
    for (i, line) in lines.enumerate() {
        let cell = line.split(',').nth(col).map(str::trim).unwrap_or("");
        if cell.is_empty() {
            continue;
        }
        let v = cell.parse::<f64>().map_err(|_| {
            Error::format(path, format!("row {}: invalid psi value `{cell}`", i + 1))
        })?;
        psi.push(v);
    }
    if psi.len() != n_vertices {
        return Err(Error::format(
            path,
            format!("expected {n_vertices} psi values, found {}", psi.len()),
        ));
    }
    Ok(psi)
}

/// Mesh resolution implied by the number of vertices in a field set.
pub fn infer_n_div(fields: &FieldSet) -> Option<usize> {
    let nv = fields.psi.len();
    let side = (nv as f64).sqrt().round() as usize;
    (side >= 2 && side * side == nv).then(|| side - 1)
}
