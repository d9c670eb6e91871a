//! MatrixMarket files and CSV traces.
//!
//! The reader accepts array and coordinate MatrixMarket files with real or
//! integer entries and general or symmetric storage; repeated coordinate
//! entries are summed. The writer emits array format with shortest
//! round-trip decimal rendering, so write-then-read reproduces every f64
//! bit for bit. CSV output renders 17 significant digits for the same
//! reason.

use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("file not found: {path}")]
    NotFound { path: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line 1 is not a MatrixMarket header: {header}")]
    MalformedHeader { header: String },
    #[error("unsupported MatrixMarket variant: {what}")]
    Unsupported { what: String },
    #[error("missing or malformed dimension line")]
    BadDimensions,
    #[error("malformed entry on line {line}: {text}")]
    BadEntry { line: usize, text: String },
    #[error("coordinate index out of range on line {line}")]
    IndexOutOfRange { line: usize },
    #[error("expected {expected} data values, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("expected a single-column matrix, found {cols} columns")]
    NotAVector { cols: usize },
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| {
        let path = path.display().to_string();
        if e.kind() == ErrorKind::NotFound {
            IoError::NotFound { path }
        } else {
            IoError::Io { path, source: e }
        }
    })
}

/// Reads a MatrixMarket file into a dense matrix.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<DMatrix<f64>, IoError> {
    let text = read_to_string(path.as_ref())?;
    parse_matrix_market(&text)
}

/// Reads a MatrixMarket file holding a single column.
pub fn load_vector_market(path: impl AsRef<Path>) -> Result<DVector<f64>, IoError> {
    let m = load_matrix_market(path)?;
    if m.ncols() != 1 {
        return Err(IoError::NotAVector { cols: m.ncols() });
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

fn parse_matrix_market(text: &str) -> Result<DMatrix<f64>, IoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(IoError::MalformedHeader {
        header: String::new(),
    })?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5 || !tokens[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(IoError::MalformedHeader {
            header: header.to_string(),
        });
    }
    let object = tokens[1].to_ascii_lowercase();
    let format = tokens[2].to_ascii_lowercase();
    let field = tokens[3].to_ascii_lowercase();
    let symmetry = tokens[4].to_ascii_lowercase();
    if object != "matrix" {
        return Err(IoError::Unsupported { what: object });
    }
    if field != "real" && field != "integer" {
        return Err(IoError::Unsupported { what: field });
    }
    let symmetric = match symmetry.as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(IoError::Unsupported {
                what: other.to_string(),
            })
        }
    };
    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (_, dim_line) = data.next().ok_or(IoError::BadDimensions)?;
    let dims: Vec<usize> = dim_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| IoError::BadDimensions)?;
    match format.as_str() {
        "array" => {
            let [rows, cols] = dims[..] else {
                return Err(IoError::BadDimensions);
            };
            parse_array(data, rows, cols, symmetric)
        }
        "coordinate" => {
            let [rows, cols, nnz] = dims[..] else {
                return Err(IoError::BadDimensions);
            };
            parse_coordinate(data, rows, cols, nnz, symmetric)
        }
        other => Err(IoError::Unsupported {
            what: other.to_string(),
        }),
    }
}

fn parse_array<'a>(
    data: impl Iterator<Item = (usize, &'a str)>,
    rows: usize,
    cols: usize,
    symmetric: bool,
) -> Result<DMatrix<f64>, IoError> {
    if symmetric && rows != cols {
        return Err(IoError::BadDimensions);
    }
    let expected = if symmetric {
        cols * (cols + 1) / 2
    } else {
        rows * cols
    };
    let mut values = Vec::with_capacity(expected);
    for (line_no, line) in data {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| IoError::BadEntry {
                line: line_no + 1,
                text: tok.to_string(),
            })?;
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(IoError::WrongCount {
            expected,
            found: values.len(),
        });
    }
    let mut m = DMatrix::zeros(rows, cols);
    if symmetric {
        // Lower triangle, column-major.
        let mut it = values.into_iter();
        for j in 0..cols {
            for i in j..rows {
                let v = it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    } else {
        let mut it = values.into_iter();
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = it.next().unwrap();
            }
        }
    }
    Ok(m)
}

fn parse_coordinate<'a>(
    data: impl Iterator<Item = (usize, &'a str)>,
    rows: usize,
    cols: usize,
    nnz: usize,
    symmetric: bool,
) -> Result<DMatrix<f64>, IoError> {
    if symmetric && rows != cols {
        return Err(IoError::BadDimensions);
    }
    let mut m = DMatrix::zeros(rows, cols);
    let mut found = 0usize;
    for (line_no, line) in data {
        let mut toks = line.split_whitespace();
        let (Some(i_tok), Some(j_tok), Some(v_tok), None) =
            (toks.next(), toks.next(), toks.next(), toks.next())
        else {
            return Err(IoError::BadEntry {
                line: line_no + 1,
                text: line.to_string(),
            });
        };
        let parse_idx = |t: &str| {
            t.parse::<usize>().map_err(|_| IoError::BadEntry {
                line: line_no + 1,
                text: t.to_string(),
            })
        };
        let i = parse_idx(i_tok)?;
        let j = parse_idx(j_tok)?;
        let v: f64 = v_tok.parse().map_err(|_| IoError::BadEntry {
            line: line_no + 1,
            text: v_tok.to_string(),
        })?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(IoError::IndexOutOfRange { line: line_no + 1 });
        }
        // One-based indices; repeated entries accumulate.
        m[(i - 1, j - 1)] += v;
        if symmetric && i != j {
            m[(j - 1, i - 1)] += v;
        }
        found += 1;
    }
    if found != nnz {
        return Err(IoError::WrongCount {
            expected: nnz,
            found,
        });
    }
    Ok(m)
}

/// Writes a dense matrix in MatrixMarket array format at full precision.
pub fn store_matrix_market(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            // Shortest round-trip rendering keeps the value bit-exact.
            let _ = writeln!(out, "{:e}", m[(i, j)]);
        }
    }
    fs::write(path.as_ref(), out).map_err(|e| IoError::Io {
        path: path.as_ref().display().to_string(),
        source: e,
    })
}

/// Writes numeric records as CSV with a header row. Values carry 17
/// significant digits, enough to reparse the exact f64.
pub fn store_csv(
    header: &[&str],
    records: &[Vec<f64>],
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for rec in records {
        let mut first = true;
        for v in rec {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v:.16e}");
            first = false;
        }
        out.push('\n');
    }
    fs::write(path.as_ref(), out).map_err(|e| IoError::Io {
        path: path.as_ref().display().to_string(),
        source: e,
    })
}

/// Reads a CSV written by [`store_csv`]; returns the header and the rows.
pub fn load_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let text = read_to_string(path.as_ref())?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| IoError::BadEntry {
                    line: line_no + 1,
                    text: t.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
