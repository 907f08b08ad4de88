//! Matrix Market I/O.
//!
//! Supported headers:
//!   `%%MatrixMarket matrix coordinate real {symmetric|general}` → sparse
//!   `%%MatrixMarket matrix array real general`                  → dense block
//!
//! Values are written with 17 significant decimal digits, so a write/read
//! round trip reproduces every `f64` bit-exactly. Symmetric coordinate files
//! store the lower triangle (row ≥ col, 1-based); general coordinate files
//! must be exactly symmetric in both pattern and value to load.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::block::VectorBlock;
use crate::linalg::dense::DenseSym;
use crate::linalg::sparse::SparseSym;

/// Parsed contents of a Matrix Market file.
#[derive(Clone, Debug)]
pub enum MmData {
    /// Coordinate file (symmetric storage, both triangles materialized).
    Sparse(SparseSym),
    /// Array file, column-major dense block (not necessarily square).
    Array(VectorBlock),
}

/// A symmetric matrix in whichever storage the input file used.
#[derive(Clone, Debug)]
pub enum SymStorage {
    Dense(DenseSym),
    Sparse(SparseSym),
}

impl SymStorage {
    pub fn as_operator(&self) -> &dyn crate::linalg::operator::SymmetricOperator {
        match self {
            SymStorage::Dense(d) => d,
            SymStorage::Sparse(s) => s,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SymStorage::Dense(d) => crate::linalg::operator::SymmetricOperator::n(d),
            SymStorage::Sparse(s) => crate::linalg::operator::SymmetricOperator::n(s),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    // 1 leading + 16 fractional significant digits: enough to round-trip f64.
    format!("{v:.16e}")
}

/// Render a dense block as `matrix array real general` (column-major).
pub fn format_block(b: &VectorBlock) -> String {
    let mut s = String::new();
    s.push_str("%%MatrixMarket matrix array real general\n");
    s.push_str(&format!("{} {}\n", b.nrows(), b.ncols()));
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            s.push_str(&fmt_f64(b.at(i, j)));
            s.push('\n');
        }
    }
    s
}

/// Render a dense symmetric matrix as `matrix array real general`.
pub fn format_dense(a: &DenseSym) -> String {
    format_block(&a.as_block())
}

/// Render a sparse symmetric matrix as `matrix coordinate real symmetric`
/// (lower triangle, 1-based indices).
pub fn format_sparse(a: &SparseSym) -> String {
    let lower = a.lower_triangle();
    let mut s = String::new();
    s.push_str("%%MatrixMarket matrix coordinate real symmetric\n");
    s.push_str(&format!(
        "{} {} {}\n",
        crate::linalg::operator::SymmetricOperator::n(a),
        crate::linalg::operator::SymmetricOperator::n(a),
        lower.len()
    ));
    for (i, j, v) in lower {
        s.push_str(&format!("{} {} {}\n", i + 1, j + 1, fmt_f64(v)));
    }
    s
}

pub fn write_block(path: &Path, b: &VectorBlock) -> Result<()> {
    std::fs::write(path, format_block(b))?;
    Ok(())
}

pub fn write_dense(path: &Path, a: &DenseSym) -> Result<()> {
    std::fs::write(path, format_dense(a))?;
    Ok(())
}

pub fn write_sparse(path: &Path, a: &SparseSym) -> Result<()> {
    std::fs::write(path, format_sparse(a))?;
    Ok(())
}

/// Parse Matrix Market text.
pub fn parse(text: &str) -> Result<MmData> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Market("empty file".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5 || !tokens[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(Error::Market(format!("malformed header line: {header:?}")));
    }
    let object = tokens[1].to_ascii_lowercase();
    let format = tokens[2].to_ascii_lowercase();
    let field = tokens[3].to_ascii_lowercase();
    let symmetry = tokens[4].to_ascii_lowercase();
    if object != "matrix" {
        return Err(Error::Market(format!("unsupported object {object:?}")));
    }
    if field != "real" {
        return Err(Error::Market(format!("unsupported field {field:?} (only real)")));
    }

    // Remaining non-comment, non-blank tokens.
    let mut body = lines
        .filter(|l| !l.trim_start().starts_with('%') && !l.trim().is_empty())
        .flat_map(|l| l.split_whitespace());

    let next_usize = |what: &str, body: &mut dyn Iterator<Item = &str>| -> Result<usize> {
        body.next()
            .ok_or_else(|| Error::Market(format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|e| Error::Market(format!("bad {what}: {e}")))
    };
    let parse_f64 = |tok: &str| -> Result<f64> {
        tok.parse::<f64>().map_err(|e| Error::Market(format!("bad value {tok:?}: {e}")))
    };

    match format.as_str() {
        "coordinate" => {
            let symmetric = match symmetry.as_str() {
                "symmetric" => true,
                "general" => false,
                other => {
                    return Err(Error::Market(format!("unsupported symmetry {other:?}")));
                }
            };
            let nrows = next_usize("row count", &mut body)?;
            let ncols = next_usize("column count", &mut body)?;
            if nrows != ncols {
                return Err(Error::Market(format!(
                    "coordinate matrix must be square, got {nrows}x{ncols}"
                )));
            }
            let nnz = next_usize("entry count", &mut body)?;
            let mut triples = Vec::with_capacity(nnz);
            for e in 0..nnz {
                let i = next_usize(&format!("row of entry {e}"), &mut body)?;
                let j = next_usize(&format!("column of entry {e}"), &mut body)?;
                let tok = body
                    .next()
                    .ok_or_else(|| Error::Market(format!("missing value of entry {e}")))?;
                let v = parse_f64(tok)?;
                if i < 1 || j < 1 || i > nrows || j > ncols {
                    return Err(Error::Market(format!(
                        "entry ({i}, {j}) outside 1..={nrows}"
                    )));
                }
                let (i, j) = (i - 1, j - 1);
                if symmetric && j > i {
                    return Err(Error::Market(format!(
                        "symmetric file stores the lower triangle, found upper entry ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                triples.push((i, j, v));
            }
            if body.next().is_some() {
                return Err(Error::Market("trailing data after the declared entries".into()));
            }
            if !symmetric {
                // A general file must be symmetric in pattern and value.
                use std::collections::BTreeMap;
                let mut map = BTreeMap::new();
                for &(i, j, v) in &triples {
                    if map.insert((i, j), v).is_some() {
                        return Err(Error::Market(format!(
                            "duplicate entry at ({}, {})",
                            i + 1,
                            j + 1
                        )));
                    }
                }
                for (&(i, j), &v) in &map {
                    match map.get(&(j, i)) {
                        Some(&w) if w == v => {}
                        _ => {
                            return Err(Error::Market(format!(
                                "general coordinate file is not symmetric at ({}, {})",
                                i + 1,
                                j + 1
                            )));
                        }
                    }
                }
            }
            Ok(MmData::Sparse(SparseSym::from_triples(nrows, &triples)?))
        }
        "array" => {
            if symmetry != "general" {
                return Err(Error::Market(format!(
                    "array files must be general, got {symmetry:?}"
                )));
            }
            let nrows = next_usize("row count", &mut body)?;
            let ncols = next_usize("column count", &mut body)?;
            let mut data = Vec::with_capacity(nrows * ncols);
            for e in 0..nrows * ncols {
                let tok =
                    body.next().ok_or_else(|| Error::Market(format!("missing value {e}")))?;
                data.push(parse_f64(tok)?);
            }
            if body.next().is_some() {
                return Err(Error::Market("trailing data after the declared entries".into()));
            }
            Ok(MmData::Array(VectorBlock::from_raw(nrows, ncols, data)?))
        }
        other => Err(Error::Market(format!("unsupported format {other:?}"))),
    }
}

pub fn read(path: &Path) -> Result<MmData> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}

/// Read a file that must contain a symmetric matrix (either storage).
pub fn read_operator(path: &Path) -> Result<SymStorage> {
    match read(path)? {
        MmData::Sparse(s) => Ok(SymStorage::Sparse(s)),
        MmData::Array(b) => {
            if b.nrows() != b.ncols() {
                return Err(Error::Market(format!(
                    "array file holds a {}x{} block, expected a square matrix",
                    b.nrows(),
                    b.ncols()
                )));
            }
            let n = b.nrows();
            let d = DenseSym::from_entries(n, b.data().to_vec())?;
            // Symmetrization must be a no-op for a matrix file.
            let max_skew = (0..n)
                .flat_map(|j| (0..j).map(move |i| (i, j)))
                .map(|(i, j)| (d.at(i, j) - b.at(i, j)).abs())
                .fold(0.0f64, f64::max);
            let scale = b.max_abs().max(1.0);
            if max_skew > 1e-12 * scale {
                return Err(Error::Market(
                    "array file is not symmetric; refusing to symmetrize it silently".into(),
                ));
            }
            Ok(SymStorage::Dense(d))
        }
    }
}

/// Read a file that must contain a dense block (eigenvector input).
pub fn read_block(path: &Path) -> Result<VectorBlock> {
    match read(path)? {
        MmData::Array(b) => Ok(b),
        MmData::Sparse(_) => Err(Error::Market(
            "expected a dense array file, found a coordinate file".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng::SplitMix64;

    #[test]
    fn block_round_trip_is_bit_exact() {
        let mut g = SplitMix64::new(8);
        let b = VectorBlock::from_fn(7, 3, |_, _| g.next_normal() * 10f64.powi((g.next_u64() % 9) as i32 - 4));
        let text = format_block(&b);
        match parse(&text).unwrap() {
            MmData::Array(b2) => assert_eq!(b, b2),
            _ => panic!("expected array"),
        }
    }

    #[test]
    fn sparse_round_trip_is_bit_exact() {
        let a = SparseSym::from_triples(
            4,
            &[(0, 0, 0.1), (1, 0, -2.0e-17), (2, 1, 3.25), (3, 3, 7.0 / 3.0)],
        )
        .unwrap();
        let text = format_sparse(&a);
        match parse(&text).unwrap() {
            MmData::Sparse(b) => {
                assert_eq!(a.lower_triangle(), b.lower_triangle());
            }
            _ => panic!("expected sparse"),
        }
    }

    #[test]
    fn symmetric_file_with_upper_entry_is_rejected() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 5.0\n";
        assert!(matches!(parse(text), Err(Error::Market(_))));
    }

    #[test]
    fn nonsymmetric_general_file_is_rejected() {
        let text =
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 5.0\n2 1 4.0\n";
        let err = parse(text).unwrap_err();
        assert!(err.to_string().contains("not symmetric"), "{err}");
    }

    #[test]
    fn symmetric_general_file_loads() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n1 2 5.0\n2 1 5.0\n";
        assert!(matches!(parse(text), Ok(MmData::Sparse(_))));
    }

    #[test]
    fn complex_field_is_rejected() {
        let text = "%%MatrixMarket matrix coordinate complex symmetric\n1 1 1\n1 1 1.0 0.0\n";
        assert!(matches!(parse(text), Err(Error::Market(_))));
    }

    #[test]
    fn malformed_header_is_rejected() {
        assert!(matches!(parse("%%NotMatrixMarket x\n"), Err(Error::Market(_))));
        assert!(matches!(parse(""), Err(Error::Market(_))));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "%%MatrixMarket matrix array real general\n% a comment\n\n2 1\n1.0\n2.0\n";
        match parse(text).unwrap() {
            MmData::Array(b) => assert_eq!(b.col(0), &[1.0, 2.0]),
            _ => panic!("expected array"),
        }
    }

    #[test]
    fn asymmetric_array_is_not_an_operator() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mtx");
        let b = VectorBlock::from_raw(2, 2, vec![1.0, 0.5, 0.25, 1.0]).unwrap();
        write_block(&p, &b).unwrap();
        assert!(read_operator(&p).is_err());
    }
}
