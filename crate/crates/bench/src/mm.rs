//! Matrix Market exchange format: coordinate files for sparse matrices and
//! array files for dense vectors.

use reskit_core::linalg::CsrMatrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("matrix structure: {0}")]
    Structure(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> MmError {
    MmError::Parse {
        line,
        message: message.into(),
    }
}

const MATRIX_BANNER: &str = "%%MatrixMarket matrix coordinate real general";
const ARRAY_BANNER: &str = "%%MatrixMarket matrix array real general";

/// Write a sparse matrix in coordinate format (1-based indices, entries in
/// row-major order, values in shortest round-trip decimal form).
pub fn mm_write_matrix(out: &mut dyn Write, a: &CsrMatrix) -> Result<(), MmError> {
    writeln!(out, "{MATRIX_BANNER}")?;
    writeln!(out, "{} {} {}", a.num_rows, a.num_cols, a.num_nonzeros())?;
    for i in 0..a.num_rows {
        let (cols, vals) = a.row(i);
        let mut entries: Vec<(usize, f64)> =
            cols.iter().copied().zip(vals.iter().copied()).collect();
        entries.sort_unstable_by_key(|&(c, _)| c);
        for (c, v) in entries {
            writeln!(out, "{} {} {}", i + 1, c + 1, v)?;
        }
    }
    Ok(())
}

pub fn mm_write_matrix_path(path: &Path, a: &CsrMatrix) -> Result<(), MmError> {
    let mut w = BufWriter::new(File::create(path)?);
    mm_write_matrix(&mut w, a)
}

fn check_banner(line: &str, want: &str) -> Result<(), MmError> {
    let got: Vec<&str> = line.split_whitespace().collect();
    let expect: Vec<&str> = want.split_whitespace().collect();
    if got != expect {
        return Err(parse_err(
            1,
            format!("bad banner: expected \"{want}\", got \"{}\"", line.trim_end()),
        ));
    }
    Ok(())
}

/// Read a coordinate-format matrix; duplicate entries sum.
pub fn mm_read_matrix(reader: impl BufRead) -> Result<CsrMatrix, MmError> {
    let mut lines = reader.lines().enumerate();
    let (_, banner) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    check_banner(&banner?, MATRIX_BANNER)?;

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "size line needs rows, cols, nnz"));
                }
                let parse = |s: &str, what: &str| -> Result<usize, MmError> {
                    s.parse()
                        .map_err(|_| parse_err(lineno, format!("cannot parse {what}: {s}")))
                };
                dims = Some((
                    parse(fields[0], "rows")?,
                    parse(fields[1], "cols")?,
                    parse(fields[2], "nnz")?,
                ));
            }
            Some((nr, nc, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "entry needs row, col, value"));
                }
                let r: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(lineno, "cannot parse row index"))?;
                let c: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, "cannot parse column index"))?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(lineno, "cannot parse value"))?;
                if r == 0 || r > nr || c == 0 || c > nc {
                    return Err(parse_err(lineno, format!("entry ({r}, {c}) out of range")));
                }
                triplets.push((r - 1, c - 1, v));
            }
        }
    }
    let (nr, nc, nnz) = dims.ok_or_else(|| parse_err(2, "missing size line"))?;
    if triplets.len() != nnz {
        return Err(MmError::Structure(format!(
            "header promised {nnz} entries, file holds {}",
            triplets.len()
        )));
    }
    CsrMatrix::from_triplets(nr, nc, &triplets).map_err(|e| MmError::Structure(e.to_string()))
}

pub fn mm_read_matrix_path(path: &Path) -> Result<CsrMatrix, MmError> {
    mm_read_matrix(BufReader::new(File::open(path)?))
}

/// Write a dense vector as an `n x 1` array file.
pub fn mm_write_vector(out: &mut dyn Write, v: &[f64]) -> Result<(), MmError> {
    writeln!(out, "{ARRAY_BANNER}")?;
    writeln!(out, "{} 1", v.len())?;
    for x in v {
        writeln!(out, "{x}")?;
    }
    Ok(())
}

pub fn mm_write_vector_path(path: &Path, v: &[f64]) -> Result<(), MmError> {
    let mut w = BufWriter::new(File::create(path)?);
    mm_write_vector(&mut w, v)
}

/// Read an `n x 1` array file (column-major order is trivial for vectors).
pub fn mm_read_vector(reader: impl BufRead) -> Result<Vec<f64>, MmError> {
    let mut lines = reader.lines().enumerate();
    let (_, banner) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    check_banner(&banner?, ARRAY_BANNER)?;
    let mut dims: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        match dims {
            None => {
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != 2 {
                    return Err(parse_err(lineno, "size line needs rows, cols"));
                }
                let nr: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(lineno, "cannot parse rows"))?;
                let nc: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, "cannot parse cols"))?;
                if nc != 1 {
                    return Err(parse_err(lineno, "vector files must have one column"));
                }
                dims = Some((nr, nc));
            }
            Some(_) => {
                values.push(
                    text.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("cannot parse value: {text}")))?,
                );
            }
        }
    }
    let (nr, _) = dims.ok_or_else(|| parse_err(2, "missing size line"))?;
    if values.len() != nr {
        return Err(MmError::Structure(format!(
            "header promised {nr} values, file holds {}",
            values.len()
        )));
    }
    Ok(values)
}

pub fn mm_read_vector_path(path: &Path) -> Result<Vec<f64>, MmError> {
    mm_read_vector(BufReader::new(File::open(path)?))
}
