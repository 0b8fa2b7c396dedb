//! Reader and writer for the MatrixMarket exchange format (real
//! `coordinate` and `array` variants, `general` / `symmetric` /
//! `skew-symmetric` symmetry).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::lowrank::LowRankMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses MatrixMarket text into a dense matrix.
pub fn parse_matrix_market(text: &str) -> Result<Mat> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hno, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(hno, "expected '%%MatrixMarket matrix <layout> <field> <symmetry>'"));
    }
    let layout = match fields[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(hno, format!("unsupported layout '{other}'"))),
    };
    match fields[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(parse_err(hno, format!("unsupported field '{other}'"))),
    }
    let symmetry = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(hno, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (dno, dims_line) = body.next().ok_or_else(|| parse_err(hno + 1, "missing size line"))?;
    let dims: Vec<usize> = dims_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(dno, format!("bad size line: {e}")))?;

    let parse_f = |lno: usize, tok: &str| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|e| parse_err(lno, format!("bad value '{tok}': {e}")))
    };

    match layout {
        Layout::Coordinate => {
            if dims.len() != 3 {
                return Err(parse_err(dno, "coordinate size line needs 'rows cols nnz'"));
            }
            let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
            let mut a = Mat::zeros(rows, cols);
            let mut count = 0;
            for (lno, line) in body {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(parse_err(lno, "entry needs 'row col value'"));
                }
                let i: usize = toks[0].parse().map_err(|_| parse_err(lno, "bad row index"))?;
                let j: usize = toks[1].parse().map_err(|_| parse_err(lno, "bad column index"))?;
                if i < 1 || i > rows || j < 1 || j > cols {
                    return Err(parse_err(lno, format!("index ({i}, {j}) outside {rows}x{cols}")));
                }
                let v = parse_f(lno, toks[2])?;
                a[(i - 1, j - 1)] += v;
                if i != j {
                    match symmetry {
                        Symmetry::General => {}
                        Symmetry::Symmetric => a[(j - 1, i - 1)] += v,
                        Symmetry::SkewSymmetric => a[(j - 1, i - 1)] -= v,
                    }
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(dno, format!("header declares {nnz} entries, found {count}")));
            }
            Ok(a)
        }
        Layout::Array => {
            if dims.len() != 2 {
                return Err(parse_err(dno, "array size line needs 'rows cols'"));
            }
            let (rows, cols) = (dims[0], dims[1]);
            let mut values = Vec::new();
            let mut last = dno;
            for (lno, line) in body {
                for tok in line.split_whitespace() {
                    values.push((lno, parse_f(lno, tok)?));
                }
                last = lno;
            }
            let mut a = Mat::zeros(rows, cols);
            let mut it = values.into_iter();
            let expected;
            match symmetry {
                Symmetry::General => {
                    expected = rows * cols;
                    for j in 0..cols {
                        for i in 0..rows {
                            let (_, v) = it.next().ok_or_else(|| {
                                parse_err(last, format!("expected {expected} values"))
                            })?;
                            a[(i, j)] = v;
                        }
                    }
                }
                Symmetry::Symmetric | Symmetry::SkewSymmetric => {
                    if rows != cols {
                        return Err(parse_err(dno, "symmetric array must be square"));
                    }
                    let skew = symmetry == Symmetry::SkewSymmetric;
                    expected = if skew { rows * (rows - 1) / 2 } else { rows * (rows + 1) / 2 };
                    for j in 0..cols {
                        let start = if skew { j + 1 } else { j };
                        for i in start..rows {
                            let (_, v) = it.next().ok_or_else(|| {
                                parse_err(last, format!("expected {expected} values"))
                            })?;
                            a[(i, j)] = v;
                            a[(j, i)] = if skew { -v } else { v };
                        }
                    }
                }
            }
            if let Some((lno, _)) = it.next() {
                return Err(parse_err(lno, format!("more than the declared {expected} values")));
            }
            Ok(a)
        }
    }
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<Mat> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

/// Coordinate (sparse) text of the nonzero entries of `a`.
pub fn to_coordinate_text(a: &Mat) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let nnz = a.iter().filter(|v| **v != 0.0).count();
    let _ = writeln!(out, "{} {} {}", a.nrows(), a.ncols(), nnz);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v);
            }
        }
    }
    out
}

/// Dense array text, column-major.
pub fn to_array_text(a: &Mat) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let _ = writeln!(out, "{:.17e}", a[(i, j)]);
        }
    }
    out
}

pub fn write_coordinate(a: &Mat, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_coordinate_text(a))?;
    Ok(())
}

pub fn write_array(a: &Mat, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_array_text(a))?;
    Ok(())
}

/// Debug dump of the factors as `<prefix>_U.mtx`, `<prefix>_S.mtx` and
/// `<prefix>_V.mtx` in the array format.
pub fn dump_factors(y: &LowRankMatrix, dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
    let dir = dir.as_ref();
    write_array(y.u(), dir.join(format!("{prefix}_U.mtx")))?;
    write_array(y.s(), dir.join(format!("{prefix}_S.mtx")))?;
    write_array(y.v(), dir.join(format!("{prefix}_V.mtx")))?;
    Ok(())
}
