//! Shared reader for the pipe-separated registry files.
//!
//! One record per line, fields separated by `|` and trimmed. Blank lines and
//! lines starting with `#` are ignored.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Yields `(line_number, fields)` for every record line. Line numbers are 1-based.
pub fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('|').map(str::trim).collect()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_blanks() {
        let text = "# header\n\n a | B |c \n";
        let got: Vec<_> = records(text).collect();
        assert_eq!(got, vec![(3, vec!["a", "B", "c"])]);
    }
}
