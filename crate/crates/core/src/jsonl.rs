//! Line-delimited JSON reading shared by the manifest, annotation and audit
//! log loaders.

use std::io::BufRead;

use serde::de::DeserializeOwned;

/// A malformed line. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

impl LineError {
    pub fn new(line: usize, reason: impl Into<String>) -> Self {
        LineError { line, reason: reason.into() }
    }
}

/// Streams non-blank lines to `each` with trailing whitespace removed.
///
/// Blank lines are tolerated only at the end of the stream; a blank line
/// followed by content is a parse error.
pub fn for_each_line<R, E, F>(reader: R, mut each: F) -> Result<(), E>
where
    R: BufRead,
    E: From<LineError>,
    F: FnMut(usize, &str) -> Result<(), E>,
{
    let mut first_blank: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| LineError::new(line_no, format!("read failed: {e}")))?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            first_blank.get_or_insert(line_no);
            continue;
        }
        if let Some(blank) = first_blank {
            return Err(LineError::new(blank, "blank line before end of stream").into());
        }
        each(line_no, trimmed)?;
    }
    Ok(())
}

pub fn parse_line<T: DeserializeOwned>(line_no: usize, text: &str) -> Result<T, LineError> {
    serde_json::from_str(text).map_err(|e| LineError::new(line_no, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(input: &str) -> Result<Vec<(usize, String)>, LineError> {
        let mut out = Vec::new();
        for_each_line(input.as_bytes(), |n, l| {
            out.push((n, l.to_string()));
            Ok::<_, LineError>(())
        })?;
        Ok(out)
    }

    #[test]
    fn trailing_whitespace_and_final_newline_ignored() {
        let a = collect("{}\n[]").unwrap();
        let b = collect("{}  \r\n[]\t\n\n  \n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interior_blank_line_rejected() {
        assert_eq!(collect("{}\n\n[]").unwrap_err().line, 2);
    }
}
