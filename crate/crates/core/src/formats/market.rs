//! MatrixMarket coordinate-format reader.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{FormatError, SparseMatrix, Triple};

/// How the value words of a loaded matrix should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarketField {
    /// IEEE-754 single precision bits.
    Real,
    /// Two's-complement 32-bit integers.
    Integer,
    /// Pattern files; every stored value is the integer 1.
    Pattern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketMatrix {
    pub field: MarketField,
    pub matrix: SparseMatrix,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a coordinate MatrixMarket stream into canonical COO.
///
/// Symmetric files are expanded to full storage. Repeated coordinates
/// (including a mirrored entry given explicitly) are accepted only when the
/// values agree.
pub fn load_matrix_market<R: BufRead>(reader: R) -> Result<MarketMatrix, FormatError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (lineno, banner) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty input"))?;
    let banner = banner.map_err(|e| parse_err(lineno, e.to_string()))?;
    let tokens: Vec<String> = banner
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(lineno, "expected '%%MatrixMarket matrix ...' banner"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(lineno, format!("unsupported storage '{}'", tokens[2])));
    }
    let field = match tokens[3].as_str() {
        "real" | "double" => MarketField::Real,
        "integer" => MarketField::Integer,
        "pattern" => MarketField::Pattern,
        other => return Err(parse_err(lineno, format!("unsupported field '{other}'"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(lineno, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries: HashMap<(u32, u32), (u32, usize)> = HashMap::new();
    let mut seen = 0usize;

    for (lineno, line) in lines {
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let Some((rows, cols, nnz)) = size else {
            if fields.len() != 3 {
                return Err(parse_err(lineno, "size line needs 'rows cols nnz'"));
            }
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(lineno, format!("bad size field '{s}'")))
            };
            size = Some((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
            continue;
        };

        seen += 1;
        if seen > nnz {
            return Err(parse_err(lineno, format!("more than {nnz} entries")));
        }
        let want = if field == MarketField::Pattern { 2 } else { 3 };
        if fields.len() != want {
            return Err(parse_err(lineno, format!("expected {want} fields")));
        }
        let coord = |s: &str, bound: usize| -> Result<u32, FormatError> {
            let v: usize = s
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad coordinate '{s}'")))?;
            if v == 0 || v > bound {
                return Err(parse_err(lineno, format!("coordinate {v} out of range 1..={bound}")));
            }
            Ok((v - 1) as u32)
        };
        let r = coord(fields[0], rows)?;
        let c = coord(fields[1], cols)?;
        let value = match field {
            MarketField::Pattern => 1,
            MarketField::Integer => fields[2]
                .parse::<i32>()
                .map_err(|_| parse_err(lineno, format!("bad integer '{}'", fields[2])))?
                as u32,
            MarketField::Real => fields[2]
                .parse::<f32>()
                .map_err(|_| parse_err(lineno, format!("bad real '{}'", fields[2])))?
                .to_bits(),
        };

        let mut insert = |key: (u32, u32)| -> Result<(), FormatError> {
            match entries.get(&key) {
                Some(&(old, first)) if old != value => Err(parse_err(
                    lineno,
                    format!(
                        "entry ({}, {}) conflicts with line {first}",
                        key.0 + 1,
                        key.1 + 1
                    ),
                )),
                Some(_) => Ok(()),
                None => {
                    entries.insert(key, (value, lineno));
                    Ok(())
                }
            }
        };
        insert((r, c))?;
        if symmetry == Symmetry::Symmetric && r != c {
            insert((c, r))?;
        }
    }

    let (rows, cols, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if seen != nnz {
        return Err(parse_err(0, format!("expected {nnz} entries, found {seen}")));
    }
    let triples: Vec<Triple> = entries.into_iter().map(|((r, c), (v, _))| (r, c, v)).collect();
    let matrix = SparseMatrix::from_triples(rows, cols, triples)?;
    Ok(MarketMatrix { field, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<MarketMatrix, FormatError> {
        load_matrix_market(s.as_bytes())
    }

    #[test]
    fn general_integer_file() {
        let m = load("%%MatrixMarket matrix coordinate integer general\n% c\n2 2 2\n1 1 5\n2 2 7\n").unwrap();
        assert_eq!(m.field, MarketField::Integer);
        assert_eq!(m.matrix.to_triples(), vec![(0, 0, 5), (1, 1, 7)]);
    }

    #[test]
    fn empty_coordinate_section() {
        let m = load("%%MatrixMarket matrix coordinate real general\n3 3 0\n").unwrap();
        assert_eq!(m.matrix.nnz(), 0);
        assert_eq!(m.matrix.rows(), 3);
    }

    #[test]
    fn symmetric_entries_mirror() {
        let m = load("%%MatrixMarket matrix coordinate integer symmetric\n3 3 1\n2 1 4\n").unwrap();
        assert_eq!(m.matrix.to_triples(), vec![(0, 1, 4), (1, 0, 4)]);
    }

    #[test]
    fn pattern_and_real_values() {
        let m = load("%%MatrixMarket matrix coordinate pattern general\n2 3 1\n2 3\n").unwrap();
        assert_eq!(m.matrix.to_triples(), vec![(1, 2, 1)]);
        let m = load("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2.5\n").unwrap();
        assert_eq!(f32::from_bits(m.matrix.to_triples()[0].2), 2.5);
    }

    #[test]
    fn errors_name_the_line() {
        let e = load("%%MatrixMarket matrix coordinate integer general\n2 2 1\n3 1 1\n").unwrap_err();
        assert_eq!(e, FormatError::Parse { line: 3, message: "coordinate 3 out of range 1..=2".into() });
        let e = load("%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 1\n1 1 2\n").unwrap_err();
        assert!(matches!(e, FormatError::Parse { line: 4, .. }), "{e}");
        assert!(matches!(load("%%MatrixMarket matrix array real general\n"), Err(FormatError::Parse { line: 1, .. })));
        assert!(load("hello\n").is_err());
        assert!(load("%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 1\n").is_err());
    }

    #[test]
    fn agreeing_duplicates_collapse() {
        let m = load("%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 2 3\n1 2 3\n").unwrap();
        assert_eq!(m.matrix.to_triples(), vec![(0, 1, 3)]);
    }
}
