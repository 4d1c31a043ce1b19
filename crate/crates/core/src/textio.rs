//! Line-oriented tokenizer shared by the text file formats.

use crate::epipolar::parse_f64;
use crate::error::{Error, Result};

/// Yields whitespace-split, non-empty lines with 1-based line numbers.
/// Lines starting with `#` are comments.
pub(crate) struct TextReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last_line: usize,
}

impl<'a> TextReader<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            last_line: 0,
        }
    }

    pub fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (no, line) in self.lines.by_ref() {
            self.last_line = no + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((no + 1, trimmed.split_whitespace().collect()));
        }
        None
    }

    pub fn expect_tokens(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        self.next_tokens()
            .ok_or_else(|| Error::parse(self.last_line, format!("unexpected end of input, expected {what}")))
    }

    /// Reads a line that must start with `keyword`; returns the remaining tokens.
    pub fn expect_keyword(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        let (no, toks) = self.expect_tokens(keyword)?;
        if toks[0] != keyword {
            return Err(Error::parse(no, format!("expected {keyword}, found {:?}", toks[0])));
        }
        Ok((no, toks[1..].to_vec()))
    }
}

pub(crate) fn numbers(line: usize, toks: &[&str], count: usize) -> Result<Vec<f64>> {
    if toks.len() != count {
        return Err(Error::parse(
            line,
            format!("expected {count} values, found {}", toks.len()),
        ));
    }
    toks.iter().map(|t| parse_f64(t, line)).collect()
}

pub(crate) fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::parse(line, format!("invalid integer {tok:?}")))
}

/// Parses a `<KEYWORD> <width> <height>` header.
pub(crate) fn dims_header(reader: &mut TextReader<'_>, keyword: &str) -> Result<(usize, usize)> {
    let (no, rest) = reader.expect_keyword(keyword)?;
    if rest.len() != 2 {
        return Err(Error::parse(no, format!("{keyword} header needs width and height")));
    }
    Ok((parse_usize(rest[0], no)?, parse_usize(rest[1], no)?))
}
