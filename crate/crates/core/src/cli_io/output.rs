//! Density images, VTK element fields and convergence logs.
//!
//! Every file is written to a sibling temporary path and renamed into place,
//! so readers never observe a partial file.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{check_len, Error, Result};
use crate::grid_fem::StructuredGrid;
use crate::optimizer::{ConvergenceLog, LogRow};

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("`{}` is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Gray level of a density: material is dark.
pub fn density_pixel(h: f64) -> u8 {
    (255.0 * (1.0 - h.clamp(0.0, 1.0))).round() as u8
}

/// Binary PGM bytes, top image row first.
pub fn density_pgm(grid: &StructuredGrid, h: &[f64]) -> Result<Vec<u8>> {
    check_len("density", grid.element_count(), h.len())?;
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for j in (0..grid.ny).rev() {
        for i in 0..grid.nx {
            out.push(density_pixel(h[grid.element_index(i, j)]));
        }
    }
    Ok(out)
}

pub fn write_density_pgm(path: &Path, grid: &StructuredGrid, h: &[f64]) -> Result<()> {
    write_atomic(path, &density_pgm(grid, h)?)
}

/// Terminal preview of a design, top row first, every `stride`-th row and column.
pub fn density_ascii(grid: &StructuredGrid, h: &[f64], stride: usize) -> Result<String> {
    check_len("density", grid.element_count(), h.len())?;
    let stride = stride.max(1);
    let mut out = String::new();
    for j in (0..grid.ny).rev().step_by(stride) {
        for i in (0..grid.nx).step_by(stride) {
            let v = h[grid.element_index(i, j)];
            out.push(match v {
                v if v > 0.75 => '#',
                v if v > 0.4 => '+',
                v if v > 0.15 => '.',
                _ => ' ',
            });
        }
        out.push('\n');
    }
    Ok(out)
}

/// Width, height and pixels of a binary PGM with maxval 255.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::InvalidInput(format!("malformed PGM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(bad("pixel count does not match the header"));
    }
    Ok((w, h, data.to_vec()))
}

/// One scalar per element.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub name: String,
    pub values: Vec<f64>,
}

impl CellField {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// Contents of a structured-points VTK file.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub nx: usize,
    pub ny: usize,
    pub spacing: (f64, f64),
    pub cells: Vec<CellField>,
    /// Dataset-level arrays, such as the modal variances of a random field.
    pub metadata: Vec<CellField>,
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::InvalidInput(format!("VTK array names need no whitespace, got `{name}`")));
    }
    Ok(())
}

/// Legacy ASCII structured-points text with element data.
pub fn field_vtk(grid: &StructuredGrid, cells: &[CellField], metadata: &[CellField]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\ndrtopo element fields\nASCII\nDATASET STRUCTURED_POINTS");
    if !metadata.is_empty() {
        let _ = writeln!(s, "FIELD FieldData {}", metadata.len());
        for m in metadata {
            check_name(&m.name)?;
            let _ = writeln!(s, "{} 1 {} double", m.name, m.values.len());
            for v in &m.values {
                let _ = writeln!(s, "{v}");
            }
        }
    }
    let _ = writeln!(s, "DIMENSIONS {} {} 1", grid.nx + 1, grid.ny + 1);
    let _ = writeln!(s, "ORIGIN 0 0 0");
    let _ = writeln!(s, "SPACING {} {} 1", grid.hx(), grid.hy());
    let _ = writeln!(s, "CELL_DATA {}", grid.element_count());
    for c in cells {
        check_name(&c.name)?;
        check_len("cell field", grid.element_count(), c.values.len())?;
        let _ = writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", c.name);
        for v in &c.values {
            let _ = writeln!(s, "{v}");
        }
    }
    Ok(s)
}

pub fn write_field_vtk(path: &Path, grid: &StructuredGrid, cells: &[CellField], metadata: &[CellField]) -> Result<()> {
    write_atomic(path, field_vtk(grid, cells, metadata)?.as_bytes())
}

/// Reads files produced by [`field_vtk`].
pub fn read_field_vtk(text: &str) -> Result<VtkData> {
    let bad = |m: String| Error::InvalidInput(format!("malformed VTK: {m}"));
    let mut tokens = text.lines().skip(2).flat_map(str::split_whitespace);
    let mut next = |what: &str| tokens.next().ok_or_else(|| bad(format!("missing {what}")));
    let num = |t: &str| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`")));
    let count = |t: &str| t.parse::<usize>().map_err(|_| bad(format!("bad count `{t}`")));
    if next("encoding")? != "ASCII" || next("DATASET")? != "DATASET" || next("type")? != "STRUCTURED_POINTS" {
        return Err(bad("expected ASCII STRUCTURED_POINTS".into()));
    }
    let mut metadata = Vec::new();
    let mut tok = next("keyword")?;
    if tok == "FIELD" {
        next("field name")?;
        let arrays = count(next("array count")?)?;
        for _ in 0..arrays {
            let name = next("array name")?.to_string();
            let comps = count(next("components")?)?;
            let n = count(next("tuples")?)?;
            next("type")?;
            let values = (0..comps * n).map(|_| num(next("value")?)).collect::<Result<Vec<_>>>()?;
            metadata.push(CellField { name, values });
        }
        tok = next("keyword")?;
    }
    if tok != "DIMENSIONS" {
        return Err(bad(format!("expected DIMENSIONS, found `{tok}`")));
    }
    let nx = count(next("nx")?)? - 1;
    let ny = count(next("ny")?)? - 1;
    next("nz")?;
    let mut spacing = (0.0, 0.0);
    let mut cells = Vec::new();
    let mut n_cells = nx * ny;
    while let Some(t) = tokens.next() {
        match t {
            "ORIGIN" => {
                for _ in 0..3 {
                    tokens.next();
                }
            }
            "SPACING" => {
                let sx = num(tokens.next().unwrap_or(""))?;
                let sy = num(tokens.next().unwrap_or(""))?;
                tokens.next();
                spacing = (sx, sy);
            }
            "CELL_DATA" => n_cells = count(tokens.next().unwrap_or(""))?,
            "SCALARS" => {
                let name = tokens.next().ok_or_else(|| bad("missing scalar name".into()))?.to_string();
                tokens.next();
                tokens.next();
                if tokens.next() != Some("LOOKUP_TABLE") {
                    return Err(bad("expected LOOKUP_TABLE".into()));
                }
                tokens.next();
                let values = (0..n_cells)
                    .map(|_| num(tokens.next().unwrap_or("")))
                    .collect::<Result<Vec<_>>>()?;
                cells.push(CellField { name, values });
            }
            other => return Err(bad(format!("unexpected token `{other}`"))),
        }
    }
    Ok(VtkData {
        nx,
        ny,
        spacing,
        cells,
        metadata,
    })
}

const LOG_COLUMNS: &[&str] = &["iter", "objective", "volume", "lambda", "alpha", "step_norm", "tau_norm", "s_norm"];

/// CSV text of a log; floats use the shortest representation that parses back exactly.
pub fn log_csv(log: &ConvergenceLog) -> String {
    let n_con = log.rows.iter().map(|r| r.constraints.len()).max().unwrap_or(0);
    let mut s = LOG_COLUMNS.join(",");
    for c in 1..=n_con {
        let _ = write!(s, ",constraint_{c}");
    }
    s.push('\n');
    for r in &log.rows {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.iter, r.objective, r.volume, r.lambda, r.alpha, r.step_norm, r.tau_norm, r.s_norm
        );
        for c in 0..n_con {
            match r.constraints.get(c) {
                Some(v) => {
                    let _ = write!(s, ",{v}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_log_csv(path: &Path, log: &ConvergenceLog) -> Result<()> {
    write_atomic(path, log_csv(log).as_bytes())
}

pub fn read_log_csv(text: &str) -> Result<ConvergenceLog> {
    let bad = |line: usize, m: String| Error::InvalidInput(format!("malformed log CSV line {line}: {m}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty file".into()))?.split(',').collect();
    if header.len() < LOG_COLUMNS.len() || header[..LOG_COLUMNS.len()] != *LOG_COLUMNS {
        return Err(bad(1, "unexpected header".into()));
    }
    let n_con = header.len() - LOG_COLUMNS.len();
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != header.len() {
            return Err(bad(idx + 2, format!("expected {} columns, found {}", header.len(), cols.len())));
        }
        let f = |k: usize| cols[k].parse::<f64>().map_err(|_| bad(idx + 2, format!("bad number `{}`", cols[k])));
        rows.push(LogRow {
            iter: cols[0].parse().map_err(|_| bad(idx + 2, format!("bad iteration `{}`", cols[0])))?,
            objective: f(1)?,
            volume: f(2)?,
            lambda: f(3)?,
            alpha: f(4)?,
            step_norm: f(5)?,
            tau_norm: f(6)?,
            s_norm: f(7)?,
            constraints: (0..n_con)
                .filter(|c| !cols[LOG_COLUMNS.len() + c].is_empty())
                .map(|c| f(LOG_COLUMNS.len() + c))
                .collect::<Result<Vec<_>>>()?,
        });
    }
    Ok(ConvergenceLog { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_material_is_black() {
        let grid = StructuredGrid::new(3, 2, 1.0, 1.0).unwrap();
        let bytes = density_pgm(&grid, &[1.0; 6]).unwrap();
        let (w, h, px) = read_pgm(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert!(px.iter().all(|p| *p == 0));
    }

    #[test]
    fn two_element_strip() {
        let grid = StructuredGrid::new(2, 1, 2.0, 1.0).unwrap();
        let (_, _, px) = read_pgm(&density_pgm(&grid, &[0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(px, vec![255, 0]);
    }

    #[test]
    fn top_row_comes_first() {
        let grid = StructuredGrid::new(1, 2, 1.0, 2.0).unwrap();
        let (_, _, px) = read_pgm(&density_pgm(&grid, &[1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(px, vec![255, 0]);
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/x.txt"), b"").is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e300f64..1e300, -1.0f64..1.0, Just(0.0), Just(f64::MIN_POSITIVE)]
    }

    proptest! {
        #[test]
        fn log_round_trips_exactly(
            rows in proptest::collection::vec(
                (proptest::collection::vec(finite(), 7), proptest::collection::vec(finite(), 0..3)),
                0..20,
            )
        ) {
            let n_con = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
            let log = ConvergenceLog {
                rows: rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (v, c))| LogRow {
                        iter: i,
                        objective: v[0],
                        volume: v[1],
                        lambda: v[2],
                        alpha: v[3],
                        step_norm: v[4],
                        tau_norm: v[5],
                        s_norm: v[6],
                        constraints: if c.len() == n_con { c } else { vec![0.5; n_con] },
                    })
                    .collect(),
            };
            let back = read_log_csv(&log_csv(&log)).unwrap();
            prop_assert_eq!(back, log);
        }

        #[test]
        fn vtk_round_trips_exactly(
            values in proptest::collection::vec(finite(), 12),
            extra in proptest::collection::vec(finite(), 0..5),
        ) {
            let grid = StructuredGrid::new(4, 3, 2.0, 1.5).unwrap();
            let cells = vec![CellField::new("design", values.clone()), CellField::new("twice", values.iter().map(|v| v / 2.0).collect())];
            let meta = if extra.is_empty() { vec![] } else { vec![CellField::new("eigenvalues", extra)] };
            let back = read_field_vtk(&field_vtk(&grid, &cells, &meta).unwrap()).unwrap();
            prop_assert_eq!((back.nx, back.ny), (4, 3));
            prop_assert_eq!(back.spacing, (0.5, 0.5));
            prop_assert_eq!(back.cells, cells);
            prop_assert_eq!(back.metadata, meta);
        }
    }
}
