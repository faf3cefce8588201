//! Minimal tab-separated reader/writer shared by every file format in the crate.
//!
//! Cells may not contain tabs or newlines, and there is no quoting. Input must
//! be valid UTF-8; an invalid line is reported with its line number instead of
//! being lossily decoded.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TsvError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl TsvError {
    pub(crate) fn format(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        TsvError::Format {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }

    /// Line number for format errors, `None` for I/O failures.
    pub fn line(&self) -> Option<usize> {
        match self {
            TsvError::Format { line, .. } => Some(*line),
            TsvError::Io { .. } => None,
        }
    }
}

/// One data line of a TSV file, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsvRow {
    pub line: usize,
    pub cells: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TsvSpec<'a> {
    /// Expected header; `None` for header-less files.
    pub header: Option<&'a [&'a str]>,
    pub columns: usize,
    /// Skip lines starting with `#`.
    pub comments: bool,
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, TsvError> {
    fs::read(path).map_err(|source| TsvError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits raw bytes into UTF-8 lines, yielding `(line_no, text)`. Handles
/// CRLF line endings and a leading byte-order mark.
pub(crate) fn utf8_lines<'a>(
    path: &'a Path,
    bytes: &'a [u8],
) -> impl Iterator<Item = Result<(usize, &'a str), TsvError>> + 'a {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let trailing_newline = bytes.last() == Some(&b'\n');
    let mut parts: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if trailing_newline || bytes.is_empty() {
        parts.pop();
    }
    parts.into_iter().enumerate().map(move |(i, raw)| {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        std::str::from_utf8(raw)
            .map(|s| (i + 1, s))
            .map_err(|e| TsvError::format(path, i + 1, format!("invalid UTF-8: {e}")))
    })
}

pub(crate) fn read_rows(path: &Path, spec: TsvSpec<'_>) -> Result<Vec<TsvRow>, TsvError> {
    let bytes = read_file(path)?;
    parse_rows(path, &bytes, spec)
}

pub(crate) fn parse_rows(
    path: &Path,
    bytes: &[u8],
    spec: TsvSpec<'_>,
) -> Result<Vec<TsvRow>, TsvError> {
    let mut rows = Vec::new();
    let mut header_seen = spec.header.is_none();
    for item in utf8_lines(path, bytes) {
        let (line, text) = item?;
        if !header_seen {
            let expected = spec.header.unwrap_or_default().join("\t");
            if text != expected {
                return Err(TsvError::format(
                    path,
                    line,
                    format!("expected header {expected:?}, found {text:?}"),
                ));
            }
            header_seen = true;
            continue;
        }
        if text.is_empty() || (spec.comments && text.starts_with('#')) {
            continue;
        }
        let cells: Vec<String> = text.split('\t').map(str::to_owned).collect();
        if cells.len() != spec.columns {
            return Err(TsvError::format(
                path,
                line,
                format!("expected {} columns, found {}", spec.columns, cells.len()),
            ));
        }
        rows.push(TsvRow { line, cells });
    }
    if !header_seen {
        return Err(TsvError::format(path, 1, "missing header line"));
    }
    Ok(rows)
}

/// Writes a TSV file, rejecting cells that would break the line format.
pub(crate) fn write_rows<I, R>(
    path: &Path,
    header: Option<&[&str]>,
    rows: I,
) -> Result<(), TsvError>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let mut out = String::new();
    if let Some(header) = header {
        out.push_str(&header.join("\t"));
        out.push('\n');
    }
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.as_ref();
        for (j, cell) in row.iter().enumerate() {
            if cell.contains(['\t', '\n', '\r']) {
                return Err(TsvError::format(
                    path,
                    i + 1 + usize::from(header.is_some()),
                    format!("cell {} contains a tab or newline", j + 1),
                ));
            }
            if j > 0 {
                out.push('\t');
            }
            out.push_str(cell);
        }
        out.push('\n');
    }
    let io_err = |source| TsvError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(out.as_bytes()).map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: TsvSpec<'static> = TsvSpec {
        header: Some(&["id", "x"]),
        columns: 2,
        comments: false,
    };

    #[test]
    fn parses_header_and_rows() {
        let rows = parse_rows(Path::new("t"), b"id\tx\r\na\t1\n\nb\t2", SPEC).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].line, 2);
        assert_eq!(rows[1].line, 4);
        assert_eq!(rows[1].cells, vec!["b", "2"]);
    }

    #[test]
    fn rejects_bad_header_and_column_count() {
        let err = parse_rows(Path::new("t"), b"id\ty\n", SPEC).unwrap_err();
        assert_eq!(err.line(), Some(1));
        let err = parse_rows(Path::new("t"), b"id\tx\na\t1\tz\n", SPEC).unwrap_err();
        assert_eq!(err.line(), Some(2));
        let err = parse_rows(Path::new("t"), b"", SPEC).unwrap_err();
        assert_eq!(err.line(), Some(1));
    }

    #[test]
    fn invalid_utf8_is_a_line_error() {
        let err = parse_rows(Path::new("t"), b"id\tx\na\t\xff\n", SPEC).unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().contains("UTF-8"));
    }

    #[test]
    fn writer_rejects_embedded_tabs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.tsv");
        let rows = vec![vec!["a".to_string(), "b\tc".to_string()]];
        assert!(write_rows(&path, Some(&["id", "x"]), &rows).is_err());
    }
}
