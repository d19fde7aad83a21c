//! Matrix Market reader and writer (coordinate and array formats, real data).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::SparseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

struct Header {
    coordinate: bool,
    pattern: bool,
    symmetry: Symmetry,
}

fn bad(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::MatrixMarket { path: path.to_path_buf(), line, message: message.into() }
}

fn parse_header(path: &Path, first: &str) -> Result<Header> {
    let lower = first.to_ascii_lowercase();
    let parts: Vec<&str> = lower.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "%%matrixmarket" || parts[1] != "matrix" {
        return Err(bad(path, 1, "missing '%%MatrixMarket matrix' banner"));
    }
    let coordinate = match parts[2] {
        "coordinate" => true,
        "array" => false,
        other => return Err(bad(path, 1, format!("unsupported format '{other}'"))),
    };
    let pattern = match parts[3] {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(bad(path, 1, format!("unsupported field '{other}'"))),
    };
    let symmetry = match parts[4] {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(bad(path, 1, format!("unsupported symmetry '{other}'"))),
    };
    Ok(Header { coordinate, pattern, symmetry })
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: Option<&str>) -> Result<T> {
    let tok = tok.ok_or_else(|| bad(path, line, "line ended early"))?;
    tok.parse().map_err(|_| bad(path, line, format!("cannot parse '{tok}'")))
}

/// Content lines with their 1-based line numbers, comments and blanks skipped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

fn read_triplets(path: &Path) -> Result<(usize, usize, Vec<(usize, usize, f64)>)> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().ok_or_else(|| bad(path, 1, "empty file"))?;
    let header = parse_header(path, first)?;
    let mut lines = data_lines(&text);
    let (size_line, size) = lines.next().ok_or_else(|| bad(path, 2, "missing size line"))?;
    let mut tok = size.split_whitespace();
    let nrows: usize = parse_num(path, size_line, tok.next())?;
    let ncols: usize = parse_num(path, size_line, tok.next())?;
    if header.symmetry != Symmetry::General && nrows != ncols {
        return Err(bad(path, size_line, "symmetric storage needs a square matrix"));
    }
    let mirror = |i: usize, j: usize, v: f64, out: &mut Vec<(usize, usize, f64)>| {
        out.push((i, j, v));
        if i != j {
            match header.symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => out.push((j, i, v)),
                Symmetry::SkewSymmetric => out.push((j, i, -v)),
            }
        }
    };

    let mut out = Vec::new();
    if header.coordinate {
        let nnz: usize = parse_num(path, size_line, tok.next())?;
        let mut seen = 0;
        for (ln, l) in lines {
            let mut t = l.split_whitespace();
            let i: usize = parse_num(path, ln, t.next())?;
            let j: usize = parse_num(path, ln, t.next())?;
            let v: f64 = if header.pattern { 1.0 } else { parse_num(path, ln, t.next())? };
            if i == 0 || j == 0 || i > nrows || j > ncols {
                return Err(bad(path, ln, format!("index ({i}, {j}) out of range")));
            }
            mirror(i - 1, j - 1, v, &mut out);
            seen += 1;
        }
        if seen != nnz {
            return Err(bad(path, size_line, format!("expected {nnz} entries, found {seen}")));
        }
    } else {
        // Column-major; symmetric storage lists the lower triangle only.
        let mut cells = Vec::new();
        for j in 0..ncols {
            let start = if header.symmetry == Symmetry::General { 0 } else { j };
            let start = if header.symmetry == Symmetry::SkewSymmetric { j + 1 } else { start };
            for i in start..nrows {
                cells.push((i, j));
            }
        }
        let mut k = 0;
        for (ln, l) in lines {
            for t in l.split_whitespace() {
                if k >= cells.len() {
                    return Err(bad(path, ln, "too many values"));
                }
                let v: f64 = parse_num(path, ln, Some(t))?;
                let (i, j) = cells[k];
                if v != 0.0 {
                    mirror(i, j, v, &mut out);
                }
                k += 1;
            }
        }
        if k != cells.len() {
            return Err(bad(path, 0, format!("expected {} values, found {k}", cells.len())));
        }
    }
    Ok((nrows, ncols, out))
}

/// Read either format into a sparse matrix.
pub fn read_sparse(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let (r, c, t) = read_triplets(path)?;
    SparseMatrix::from_triplets(r, c, &t)
}

/// Read either format into a dense matrix.
pub fn read_dense(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let (r, c, t) = read_triplets(path)?;
    let mut m = DMatrix::zeros(r, c);
    for (i, j, v) in t {
        m[(i, j)] += v;
    }
    Ok(m)
}

/// Write in coordinate general format.
pub fn write_sparse(path: impl AsRef<Path>, m: &SparseMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path.as_ref())?);
    writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(f, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(f, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    f.flush()?;
    Ok(())
}

/// Write in array general format (column-major).
pub fn write_dense(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path.as_ref())?);
    writeln!(f, "%%MatrixMarket matrix array real general")?;
    writeln!(f, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(f, "{v:e}")?;
    }
    f.flush()?;
    Ok(())
}
