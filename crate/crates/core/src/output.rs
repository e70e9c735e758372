//! Legacy ASCII VTK unstructured-grid snapshots.
//!
//! Values are written with 17 significant digits so identical inputs give
//! identical bytes and a reparse recovers every `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq)]
pub enum PointField {
    Scalar(String, Vec<f64>),
    /// Written with a zero third component.
    Vector(String, Vec<Vector2<f64>>),
}

impl PointField {
    pub fn name(&self) -> &str {
        match self {
            PointField::Scalar(n, _) | PointField::Vector(n, _) => n,
        }
    }

    fn len(&self) -> usize {
        match self {
            PointField::Scalar(_, v) => v.len(),
            PointField::Vector(_, v) => v.len(),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders the file contents. Vertex coordinates are multiplied by `length`.
pub fn vtk_string(mesh: &Mesh, length: f64, title: &str, fields: &[PointField]) -> Result<String> {
    let nv = mesh.n_vertices();
    for f in fields {
        if f.len() != nv {
            return Err(Error::DimensionMismatch { expected: nv, found: f.len() });
        }
        if f.name().is_empty() || f.name().contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("VTK field name `{}`", f.name())));
        }
    }
    let mut s = String::new();
    let title = title.replace('\n', " ");
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", num(v.x * length), num(v.y * length), num(0.0));
    }
    let nc = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {nc} {}", 4 * nc);
    for c in 0..nc {
        let [a, b, d] = mesh.triangle(c);
        let _ = writeln!(s, "3 {a} {b} {d}");
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        s.push_str("5\n");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
    }
    for f in fields {
        match f {
            PointField::Scalar(name, vals) => {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for v in vals {
                    let _ = writeln!(s, "{}", num(*v));
                }
            }
            PointField::Vector(name, vals) => {
                let _ = writeln!(s, "VECTORS {name} double");
                for v in vals {
                    let _ = writeln!(s, "{} {} {}", num(v.x), num(v.y), num(0.0));
                }
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(path: &Path, mesh: &Mesh, length: f64, title: &str, fields: &[PointField]) -> Result<()> {
    let s = vtk_string(mesh, length, title, fields)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Contents of a file produced by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub scalars: Vec<(String, Vec<f64>)>,
    pub vectors: Vec<(String, Vec<[f64; 3]>)>,
}

/// Minimal reader for the subset of the legacy format written here.
pub fn parse_vtk(text: &str) -> Result<VtkData> {
    let bad = |m: &str| Error::InvalidArgument(format!("malformed VTK: {m}"));
    let mut lines = text.lines();
    if !lines.next().is_some_and(|l| l.starts_with("# vtk DataFile")) {
        return Err(bad("missing header"));
    }
    lines.next();
    if lines.next() != Some("ASCII") {
        return Err(bad("not ASCII"));
    }
    let mut tokens = lines.flat_map(str::split_whitespace);
    let mut next = || tokens.next().ok_or_else(|| bad("unexpected end of file"));
    let float = |t: &str| t.parse::<f64>().map_err(|_| bad(t));
    let int = |t: &str| t.parse::<usize>().map_err(|_| bad(t));

    let mut data = VtkData { points: vec![], cells: vec![], cell_types: vec![], scalars: vec![], vectors: vec![] };
    let mut n_point_data = 0;
    while let Ok(kw) = next() {
        match kw {
            "DATASET" => {
                if next()? != "UNSTRUCTURED_GRID" {
                    return Err(bad("dataset type"));
                }
            }
            "POINTS" => {
                let n = int(next()?)?;
                next()?;
                for _ in 0..n {
                    data.points.push([float(next()?)?, float(next()?)?, float(next()?)?]);
                }
            }
            "CELLS" => {
                let n = int(next()?)?;
                next()?;
                for _ in 0..n {
                    let k = int(next()?)?;
                    let cell = (0..k).map(|_| next().and_then(int)).collect::<Result<Vec<_>>>()?;
                    data.cells.push(cell);
                }
            }
            "CELL_TYPES" => {
                let n = int(next()?)?;
                for _ in 0..n {
                    data.cell_types.push(next()?.parse().map_err(|_| bad("cell type"))?);
                }
            }
            "POINT_DATA" => n_point_data = int(next()?)?,
            "SCALARS" => {
                let name = next()?.to_string();
                next()?;
                next()?;
                if next()? != "LOOKUP_TABLE" {
                    return Err(bad("lookup table"));
                }
                next()?;
                let vals = (0..n_point_data).map(|_| next().and_then(float)).collect::<Result<Vec<_>>>()?;
                data.scalars.push((name, vals));
            }
            "VECTORS" => {
                let name = next()?.to_string();
                next()?;
                let mut vals = Vec::with_capacity(n_point_data);
                for _ in 0..n_point_data {
                    vals.push([float(next()?)?, float(next()?)?, float(next()?)?]);
                }
                data.vectors.push((name, vals));
            }
            other => return Err(bad(other)),
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_mesh_with_one_scalar() {
        let mesh = Mesh::build_structured(1).unwrap();
        let s = vtk_string(&mesh, 1.0, "t", &[PointField::Scalar("A".into(), vec![1.0; 4])]).unwrap();
        let d = parse_vtk(&s).unwrap();
        assert_eq!(d.points.len(), 4);
        assert_eq!(d.cells.len(), 2);
        assert_eq!(d.cell_types, vec![5, 5]);
        assert_eq!(d.scalars, vec![("A".to_string(), vec![1.0; 4])]);
    }

    #[test]
    fn round_trip_is_exact() {
        let mesh = Mesh::build_structured(3).unwrap();
        let nv = mesh.n_vertices();
        let a: Vec<f64> = (0..nv).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let u: Vec<Vector2<f64>> = (0..nv).map(|i| Vector2::new(1e-9 * i as f64 / 7.0, -(i as f64).sqrt())).collect();
        let fields = [PointField::Scalar("A".into(), a.clone()), PointField::Vector("u".into(), u.clone())];
        let s = vtk_string(&mesh, 5e5, "round trip", &fields).unwrap();
        assert_eq!(s, vtk_string(&mesh, 5e5, "round trip", &fields).unwrap());
        let d = parse_vtk(&s).unwrap();
        assert_eq!(d.scalars[0].1, a);
        for (v, w) in u.iter().zip(&d.vectors[0].1) {
            assert_eq!([v.x, v.y, 0.0], *w);
        }
        for (p, q) in mesh.vertices().iter().zip(&d.points) {
            assert_eq!([p.x * 5e5, p.y * 5e5, 0.0], *q);
        }
        for c in 0..mesh.n_triangles() {
            assert_eq!(d.cells[c], mesh.triangle(c).to_vec());
        }
    }

    #[test]
    fn errors() {
        let mesh = Mesh::build_structured(1).unwrap();
        assert!(vtk_string(&mesh, 1.0, "", &[PointField::Scalar("A".into(), vec![0.0; 3])]).is_err());
        assert!(vtk_string(&mesh, 1.0, "", &[PointField::Scalar("a b".into(), vec![0.0; 4])]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let err = write_vtk(&dir.path().join("missing/x.vtk"), &mesh, 1.0, "", &[]).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
