//! LIBSVM text format: `<label> <index>:<value> ...`, 1-based ascending
//! indices, `#` starts a comment.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::problems::sparse::CsrMatrix;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_label(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("non-numeric label {tok:?}")))?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1.0)
    } else {
        Err(parse_err(line, format!("label {tok:?} is not one of -1, 0, +1")))
    }
}

/// Parses a LIBSVM stream into the data matrix and ±1 labels. The column
/// count is the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<(CsrMatrix, Vec<f64>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut ncols = 0;
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| parse_err(line, e.to_string()))?;
        let content = text.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let label = parse_label(toks.next().expect("non-empty line"), line)?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in toks {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line, format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric index {idx:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric value {val:?}")))?;
            if idx == 0 {
                return Err(parse_err(line, "indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_err(line, format!("duplicate or non-ascending index {idx}")));
            }
            last = idx;
            ncols = ncols.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows"));
    }
    let a = CsrMatrix::from_rows(ncols, &rows).expect("indices validated while parsing");
    Ok((a, labels))
}

pub fn parse_libsvm_str(text: &str) -> Result<(CsrMatrix, Vec<f64>)> {
    parse_libsvm(text.as_bytes())
}

/// Writes `(A, b)` so that [`parse_libsvm`] reproduces it exactly; stored
/// entries are written even when zero.
pub fn write_libsvm<W: Write>(mut out: W, a: &CsrMatrix, b: &[f64]) -> io::Result<()> {
    for (i, &label) in b.iter().enumerate() {
        write!(out, "{}", if label > 0.0 { "+1" } else { "-1" })?;
        for (c, v) in a.row(i) {
            write!(out, " {}:{}", c + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_examples() {
        let (a, b) = parse_libsvm_str("+1 1:0.5 3:-2\n").unwrap();
        assert_eq!(a.to_dense(), vec![vec![0.5, 0.0, -2.0]]);
        assert_eq!(b, vec![1.0]);

        let (a, b) = parse_libsvm_str("-1 2:1").unwrap();
        assert_eq!(a.to_dense(), vec![vec![0.0, 1.0]]);
        assert_eq!(b, vec![-1.0]);
    }

    #[test]
    fn width_is_the_largest_index() {
        let (a, b) = parse_libsvm_str("1 1:1 # first\n0 4:2\n\n# only a comment\n").unwrap();
        assert_eq!(a.ncols(), 4);
        assert_eq!(b, vec![1.0, -1.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_libsvm_str("1 1:1 1:2").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_libsvm_str("+1 1:1\n-1 2:x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_libsvm_str("+1 3:1 2:1").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(matches!(parse_libsvm_str(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_libsvm_str("2 1:1"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        let text = "+1 1:0.1 5:-3.3333333333333335\n-1 2:1e-300 3:0\n+1\n";
        let (a, b) = parse_libsvm_str(text).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&mut buf, &a, &b).unwrap();
        let (a2, b2) = parse_libsvm(buf.as_slice()).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }
}
