//! MatrixMarket ingestion of pruned weight matrices and pattern-derived statistics.

mod occupancy;
mod traffic;

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub use occupancy::{block_occupancy, instance_from_pattern, BlockOccupancy};
pub use traffic::{traffic_breakdown, LayerTraffic, TrafficBreakdown};

/// Nonzero positions of a matrix, zero-based, sorted row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    nrows: usize,
    ncols: usize,
    coords: Vec<(usize, usize)>,
}

impl SparsePattern {
    pub fn new(nrows: usize, ncols: usize, mut coords: Vec<(usize, usize)>) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(Error::InvalidGeometry(format!(
                "matrix dimensions must be >= 1, got {nrows}x{ncols}"
            )));
        }
        if let Some(&(r, c)) = coords.iter().find(|&&(r, c)| r >= nrows || c >= ncols) {
            return Err(Error::InvalidArgument(format!(
                "coordinate ({r}, {c}) is outside a {nrows}x{ncols} matrix"
            )));
        }
        coords.sort_unstable();
        if let Some(w) = coords.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Duplicate {
                what: "coordinate",
                key: format!("({}, {})", w[0].0, w[0].1),
            });
        }
        Ok(Self {
            nrows,
            ncols,
            coords,
        })
    }

    /// Builds a pattern from a row-major boolean mask.
    pub fn from_mask(nrows: usize, ncols: usize, mask: &[bool]) -> Result<Self> {
        if mask.len() != nrows * ncols {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                nrows * ncols
            )));
        }
        let coords = mask
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| (i / ncols, i % ncols))
            .collect();
        Self::new(nrows, ncols, coords)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    /// Fraction of zero entries.
    pub fn level(&self) -> f64 {
        1.0 - self.nnz() as f64 / (self.nrows as f64 * self.ncols as f64)
    }
}

/// Reads a coordinate MatrixMarket file (`real`, `integer` or `pattern`, general).
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparsePattern> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(BufReader::new(file), &path.display().to_string())
}

/// Parses MatrixMarket text; `context` names the source in error messages.
pub fn parse_matrix_market(reader: impl BufRead, context: &str) -> Result<SparsePattern> {
    let err = |line: usize, message: String| Error::ParseLine {
        context: context.to_string(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (lineno, header) = match lines.next() {
        Some((n, l)) => (n, l.map_err(|e| err(n, e.to_string()))?),
        None => return Err(err(1, "empty file".into())),
    };
    let banner: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if banner.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(err(lineno, "missing %%MatrixMarket banner".into()));
    }
    let expected_tokens = match banner.as_slice() {
        [_, object, format, field, symmetry] => {
            if object != "matrix" || format != "coordinate" {
                return Err(err(lineno, format!("unsupported {object} {format}; expected matrix coordinate")));
            }
            if symmetry != "general" {
                return Err(err(lineno, format!("unsupported symmetry `{symmetry}`")));
            }
            match field.as_str() {
                "pattern" => 2,
                "real" | "integer" => 3,
                other => return Err(err(lineno, format!("unsupported field `{other}`"))),
            }
        }
        _ => return Err(err(lineno, "malformed banner".into())),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut coords = Vec::new();
    let mut seen = HashSet::new();
    let mut last_line = lineno;
    for (lineno, line) in lines {
        last_line = lineno;
        let line = line.map_err(|e| err(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let parse_index = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| err(lineno, format!("`{t}` is not a non-negative integer")))
        };
        let Some((nrows, ncols, nnz)) = size else {
            if tokens.len() != 3 {
                return Err(err(lineno, "size line must be `rows cols nnz`".into()));
            }
            let dims = (parse_index(tokens[0])?, parse_index(tokens[1])?, parse_index(tokens[2])?);
            if dims.0 == 0 || dims.1 == 0 {
                return Err(err(lineno, "matrix dimensions must be >= 1".into()));
            }
            size = Some(dims);
            coords.reserve(dims.2);
            continue;
        };
        if tokens.len() != expected_tokens {
            return Err(err(lineno, format!("expected {expected_tokens} fields, found {}", tokens.len())));
        }
        let (r, c) = (parse_index(tokens[0])?, parse_index(tokens[1])?);
        if r == 0 || c == 0 || r > nrows || c > ncols {
            return Err(err(lineno, format!("entry ({r}, {c}) is outside a {nrows}x{ncols} matrix")));
        }
        if expected_tokens == 3 && tokens[2].parse::<f64>().is_err() {
            return Err(err(lineno, format!("`{}` is not a number", tokens[2])));
        }
        if !seen.insert((r - 1, c - 1)) {
            return Err(err(lineno, format!("duplicate entry ({r}, {c})")));
        }
        if coords.len() == nnz {
            return Err(err(lineno, format!("more than the declared {nnz} entries")));
        }
        coords.push((r - 1, c - 1));
    }
    let Some((nrows, ncols, nnz)) = size else {
        return Err(err(last_line, "missing size line".into()));
    };
    if coords.len() != nnz {
        return Err(err(last_line, format!("declared {nnz} entries, found {}", coords.len())));
    }
    SparsePattern::new(nrows, ncols, coords)
}

/// Writes `pattern` as a coordinate `pattern general` MatrixMarket file.
pub fn write_matrix_market(pattern: &SparsePattern, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate pattern general")?;
    writeln!(out, "{} {} {}", pattern.nrows, pattern.ncols, pattern.nnz())?;
    for &(r, c) in &pattern.coords {
        writeln!(out, "{} {}", r + 1, c + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SparsePattern> {
        parse_matrix_market(text.as_bytes(), "test")
    }

    #[test]
    fn identity_file() {
        let p = parse("%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n2 2 -3e-2\n").unwrap();
        assert_eq!(p.nnz(), 2);
        assert_eq!(p.coords(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn pattern_field_and_explicit_zero() {
        let p = parse("%%MatrixMarket matrix coordinate pattern general\n3 4 1\n3 4\n").unwrap();
        assert_eq!(p.coords(), &[(2, 3)]);
        // stored zeros count as nonzeros
        let z = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 0.0\n").unwrap();
        assert_eq!(z.nnz(), 1);
    }

    #[test]
    fn missing_banner_reports_line() {
        let err = parse("2 2 1\n1 1 1.0\n").unwrap_err();
        assert!(matches!(err, Error::ParseLine { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_entry() {
        let err = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").unwrap_err();
        assert!(matches!(err, Error::ParseLine { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn duplicates_and_count_mismatches() {
        let dup = parse("%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 1\n1 1\n").unwrap_err();
        assert!(dup.to_string().contains("duplicate"));
        let short = parse("%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 1\n").unwrap_err();
        assert!(short.to_string().contains("declared 2"));
        let sym = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 0\n").unwrap_err();
        assert!(sym.to_string().contains("symmetry"));
    }

    #[test]
    fn write_then_read() {
        let p = SparsePattern::new(3, 5, vec![(2, 4), (0, 1), (1, 1)]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&p, &mut buf).unwrap();
        assert_eq!(parse_matrix_market(buf.as_slice(), "rt").unwrap(), p);
    }
}
