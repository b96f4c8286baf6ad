//! CSV/JSON ingestion and emission.
//!
//! Dialect: comma separator, '.' decimal, an optional single header row
//! auto-detected by a non-numeric first row. Numbers are emitted with 17
//! significant digits so every f64 round-trips exactly. All writes go to a
//! temporary file first and are renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use qdesign_core::homotopy::HomotopyPath;
use qdesign_core::solvers::TraceRecord;
use qdesign_core::{Design, ProblemInstance, ScreeningMask, Target};

use crate::CliError;

/// Formats with 17 significant digits; parses back to the identical bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Instance input paths plus the scalar options of the problem.
#[derive(Debug, Clone)]
pub struct InstanceFiles {
    pub a_path: PathBuf,
    /// Exactly one of `c_path` / `k_path` is set.
    pub c_path: Option<PathBuf>,
    pub k_path: Option<PathBuf>,
    pub lambda: f64,
    pub normalize: bool,
}

fn parse_cell(path: &Path, row: usize, col: usize, cell: &str) -> Result<f64, CliError> {
    cell.trim().parse::<f64>().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        row,
        col,
        message: format!("cell '{}' is not numeric", cell.trim()),
    })
}

/// Reads a numeric CSV matrix, skipping one header row when the first row
/// contains any non-numeric cell.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (ri, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let cells: Vec<&str> = record.iter().collect();
        if cells.is_empty() || (cells.len() == 1 && cells[0].is_empty()) {
            continue;
        }
        if ri == 0 && cells.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            continue; // header row
        }
        let mut row = Vec::with_capacity(cells.len());
        for (ci, cell) in cells.iter().enumerate() {
            row.push(parse_cell(path, ri + 1, ci + 1, cell)?);
        }
        if width == 0 {
            width = row.len();
        } else if row.len() != width {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                row: ri + 1,
                col: row.len(),
                message: format!("expected {width} columns, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Io(format!("{}: no data rows", path.display())));
    }
    let m = rows.len();
    Ok(DMatrix::from_fn(m, width, |i, j| rows[i][j]))
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>, CliError> {
    let mat = read_matrix_csv(path)?;
    if mat.ncols() != 1 {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            row: 1,
            col: mat.ncols(),
            message: "expected a single column".into(),
        });
    }
    Ok(DVector::from_column_slice(mat.as_slice()))
}

/// Parses the instance files into a standardized problem; optionally scales
/// every column of A to unit Euclidean norm (zero columns are left as they
/// are, with a warning).
pub fn load_instance(files: &InstanceFiles) -> Result<ProblemInstance, CliError> {
    let mut a = read_matrix_csv(&files.a_path)?;
    if files.normalize {
        for i in 0..a.ncols() {
            let norm = a.column(i).norm();
            if norm > 0.0 {
                let mut col = a.column_mut(i);
                col /= norm;
            } else {
                eprintln!("warning: column {i} has zero norm and was not normalized");
            }
        }
    }
    let target = match (&files.c_path, &files.k_path) {
        (Some(c), None) => Target::C(read_vector_csv(c)?),
        (None, Some(k)) => Target::K(read_matrix_csv(k)?),
        _ => return Err(CliError::Usage("exactly one of --c-file / --k-file is required".into())),
    };
    Ok(ProblemInstance::new(a, target, files.lambda)?)
}

/// Writes content to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn save_matrix_csv(path: &Path, mat: &DMatrix<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..mat.nrows() {
        let row: Vec<String> = (0..mat.ncols()).map(|j| fmt_f64(mat[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn save_vector_csv(path: &Path, v: &DVector<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for x in v.iter() {
        out.push_str(&fmt_f64(*x));
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn save_design_csv(path: &Path, design: &Design) -> Result<(), CliError> {
    let mut out = String::from("index,weight\n");
    for (i, w) in design.weights().iter().enumerate() {
        out.push_str(&format!("{i},{}\n", fmt_f64(*w)));
    }
    write_atomic(path, &out)
}

pub const TRACE_HEADER: &str = "iter,value,gap_or_delta,surviving,elapsed_s";

pub fn trace_row(rec: &TraceRecord) -> String {
    format!(
        "{},{},{},{},{}",
        rec.iter,
        fmt_f64(rec.value),
        fmt_f64(rec.gap_or_delta),
        rec.surviving,
        fmt_f64(rec.elapsed_s)
    )
}

pub fn save_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<(), CliError> {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for rec in records {
        out.push_str(&trace_row(rec));
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// One row per breakpoint: k, alpha, lambda, nnz, active indices
/// (semicolon-separated inside the cell).
pub fn save_path_csv(path: &Path, homotopy: &HomotopyPath) -> Result<(), CliError> {
    let mut out = String::from("k,alpha,lambda,nnz,active_indices\n");
    for (k, bp) in homotopy.breakpoints.iter().enumerate() {
        let nnz = bp.x.iter().filter(|&&v| v != 0.0).count();
        let active: Vec<String> = bp.active_set.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            k + 1,
            fmt_f64(bp.alpha),
            fmt_f64(bp.lambda),
            nnz,
            active.join(";")
        ));
    }
    write_atomic(path, &out)
}

pub fn save_screen_report_csv(path: &Path, mask: &ScreeningMask) -> Result<(), CliError> {
    let mut out = String::from("index,value,eliminated\n");
    for i in 0..mask.eliminated.len() {
        out.push_str(&format!(
            "{i},{},{}\n",
            fmt_f64(mask.values[i]),
            u8::from(mask.eliminated[i])
        ));
    }
    write_atomic(path, &out)
}
