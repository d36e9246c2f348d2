//! Plain-text exchange formats.
//!
//! Dense matrices are CSV, row-major, preceded by a one-line header holding
//! the dimension `n` (or `rows,cols` for rectangular data). Vectors use the
//! same layout with one value per line. Values are printed with 17
//! significant digits so files round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::{Classification, GroundState, ScfReport};

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = if m.is_square() {
        format!("{}\n", m.nrows())
    } else {
        format!("{},{}\n", m.nrows(), m.ncols())
    };
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("bad header `{header}`: {e}")))?;
    let (rows, cols) = match dims.as_slice() {
        [n] => (*n, *n),
        [r, c] => (*r, *c),
        _ => return Err(Error::Parse(format!("bad header `{header}`"))),
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
        if vals.len() != cols {
            return Err(Error::Parse(format!(
                "row {} has {} entries, expected {cols}",
                i + 1,
                vals.len()
            )));
        }
        data.extend(vals);
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {rows} rows, found {}",
            data.len() / cols.max(1)
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn format_vector(v: &DVector<f64>) -> String {
    let mut out = format!("{}\n", v.len());
    for x in v.iter() {
        out.push_str(&format!("{x:.16e}\n"));
    }
    out
}

pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty vector file".into()))?;
    let n: usize = header
        .parse()
        .map_err(|e| Error::Parse(format!("bad header `{header}`: {e}")))?;
    let vals: Vec<f64> = lines
        .map(|l| l.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(e.to_string()))?;
    if vals.len() != n {
        return Err(Error::Parse(format!("expected {n} values, found {}", vals.len())));
    }
    Ok(DVector::from_vec(vals))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    fs::write(path, format_vector(v))?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

/// Writes a simple CSV table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundStateManifest {
    format: String,
    n_sites: usize,
    n_electrons: usize,
    energy: f64,
    fermi_level: f64,
    n_full: usize,
    n_partial: usize,
    n_unocc: usize,
    lambda: Vec<Vec<f64>>,
    gaps: (f64, f64),
    classification: Classification,
    tol_cluster: f64,
}

const ARCHIVE_FORMAT: &str = "rhf-ground-state/1";

/// Stores a ground state as a directory of CSV blocks plus `manifest.json`.
pub fn save_ground_state(dir: &Path, gs: &GroundState) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = GroundStateManifest {
        format: ARCHIVE_FORMAT.into(),
        n_sites: gs.n_sites(),
        n_electrons: gs.n_electrons,
        energy: gs.energy,
        fermi_level: gs.fermi_level,
        n_full: gs.n_full,
        n_partial: gs.n_partial,
        n_unocc: gs.n_unocc,
        lambda: gs.lambda.row_iter().map(|r| r.iter().copied().collect()).collect(),
        gaps: gs.gaps,
        classification: gs.classification,
        tol_cluster: gs.tol_cluster,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json)?;
    write_matrix(&dir.join("gamma0.csv"), &gs.gamma0)?;
    write_matrix(&dir.join("h0.csv"), &gs.h0)?;
    write_matrix(&dir.join("eigvecs.csv"), &gs.eigvecs)?;
    write_vector(&dir.join("eigvals.csv"), &gs.eigvals)?;
    write_matrix(&dir.join("kernel.csv"), &gs.kernel)?;
    Ok(())
}

pub fn load_ground_state(dir: &Path) -> Result<GroundState> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let m: GroundStateManifest = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if m.format != ARCHIVE_FORMAT {
        return Err(Error::Parse(format!("unknown archive format `{}`", m.format)));
    }
    let gamma0 = read_matrix(&dir.join("gamma0.csv"))?;
    let h0 = read_matrix(&dir.join("h0.csv"))?;
    let eigvecs = read_matrix(&dir.join("eigvecs.csv"))?;
    let eigvals = read_vector(&dir.join("eigvals.csv"))?;
    let kernel = read_matrix(&dir.join("kernel.csv"))?;
    let n = m.n_sites;
    for (name, shape) in [
        ("gamma0", gamma0.shape()),
        ("h0", h0.shape()),
        ("eigvecs", eigvecs.shape()),
        ("kernel", kernel.shape()),
    ] {
        if shape != (n, n) {
            return Err(Error::Dimension(format!("{name} has shape {shape:?}, expected {n}x{n}")));
        }
    }
    if eigvals.len() != n || m.n_full + m.n_partial + m.n_unocc != n {
        return Err(Error::Dimension("archive block sizes are inconsistent".into()));
    }
    let np = m.n_partial;
    if m.lambda.len() != np || m.lambda.iter().any(|r| r.len() != np) {
        return Err(Error::Dimension("lambda has the wrong shape".into()));
    }
    let lambda = DMatrix::from_fn(np, np, |i, j| m.lambda[i][j]);
    Ok(GroundState {
        rho0: gamma0.diagonal(),
        gamma0,
        h0,
        eigvals,
        eigvecs,
        kernel,
        n_electrons: m.n_electrons,
        energy: m.energy,
        fermi_level: m.fermi_level,
        n_full: m.n_full,
        n_partial: np,
        n_unocc: m.n_unocc,
        lambda,
        gaps: m.gaps,
        classification: m.classification,
        tol_cluster: m.tol_cluster,
        report: ScfReport::default(),
    })
}
