//! Matrix Market coordinate files.
//!
//! Reads `real` or `integer` coordinate matrices in `general` or `symmetric`
//! form; symmetric files are expanded to full storage. Writes `coordinate
//! real general`. Indices are 1-based on disk.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    read_from(File::open(path)?)
}

pub fn write_matrix_market(path: impl AsRef<Path>, a: &CsrMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, a)?;
    w.flush()?;
    Ok(())
}

pub fn read_from(reader: impl Read) -> Result<CsrMatrix> {
    let mut lines = BufReader::new(reader).lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(1, format!("unrecognised header `{header}`")));
    }
    if fields[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format `{}`", fields[2])));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field `{}`", fields[3])));
    }
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triples = Vec::new();
    let mut last = 1;
    for (no, line) in lines {
        last = no;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let tok: Vec<&str> = t.split_whitespace().collect();
        let Some((nrows, ncols, _)) = size else {
            if tok.len() != 3 {
                return Err(parse_err(no, "size line needs rows, columns and entry count"));
            }
            let p = |s: &str| s.parse::<usize>().map_err(|e| parse_err(no, format!("bad size `{s}`: {e}")));
            let s = (p(tok[0])?, p(tok[1])?, p(tok[2])?);
            if symmetric && s.0 != s.1 {
                return Err(parse_err(no, "symmetric matrix must be square"));
            }
            triples.reserve(if symmetric { 2 * s.2 } else { s.2 });
            size = Some(s);
            continue;
        };
        if tok.len() != 3 {
            return Err(parse_err(no, "entry needs row, column and value"));
        }
        let idx = |s: &str, max: usize| -> Result<usize> {
            let v = s.parse::<usize>().map_err(|e| parse_err(no, format!("bad index `{s}`: {e}")))?;
            if v == 0 || v > max {
                return Err(parse_err(no, format!("index {v} out of range 1..={max}")));
            }
            Ok(v - 1)
        };
        let i = idx(tok[0], nrows)?;
        let j = idx(tok[1], ncols)?;
        let v: f64 = tok[2].parse().map_err(|e| parse_err(no, format!("bad value `{}`: {e}", tok[2])))?;
        if symmetric && j > i {
            return Err(parse_err(no, "symmetric file stores an upper-triangle entry"));
        }
        triples.push((i, j, v));
        if symmetric && i != j {
            triples.push((j, i, v));
        }
    }
    let (nrows, ncols, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    let stored = if symmetric {
        triples.iter().filter(|(i, j, _)| j <= i).count()
    } else {
        triples.len()
    };
    if stored != nnz {
        return Err(parse_err(last, format!("size line declares {nnz} entries, file holds {stored}")));
    }
    CsrMatrix::from_coo(nrows, ncols, &triples)
}

pub fn write_to(w: &mut impl Write, a: &CsrMatrix) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::poisson_1d;

    #[test]
    fn round_trip() {
        let a = poisson_1d(3).unwrap();
        let mut buf = Vec::new();
        write_to(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2 + 7);
        assert_eq!(read_from(&buf[..]).unwrap(), a);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        let b = CsrMatrix::from_coo(2, 3, &[(0, 2, 0.1), (1, 0, -1e-300), (1, 1, 0.0)]).unwrap();
        write_matrix_market(&path, &b).unwrap();
        assert_eq!(read_matrix_market(&path).unwrap(), b);
    }

    #[test]
    fn symmetric_expansion() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% lower triangle\n3 3 5\n1 1 2\n2 1 -1\n2 2 2\n3 2 -1\n3 3 2\n";
        assert_eq!(read_from(text.as_bytes()).unwrap(), poisson_1d(3).unwrap());
    }

    #[test]
    fn integer_field() {
        let text = "%%MatrixMarket matrix coordinate integer general\n2 2 1\n2 1 7\n";
        assert_eq!(read_from(text.as_bytes()).unwrap().get(1, 0), 7.0);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n3 1 2.0\n";
        match read_from(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_value = "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 x\n";
        assert!(matches!(read_from(bad_value.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let bad_header = "%%MatrixMarket matrix array real general\n";
        assert!(matches!(read_from(bad_header.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(matches!(read_from(short.as_bytes()), Err(Error::Parse { .. })));
    }
}
