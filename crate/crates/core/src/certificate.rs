//! Line-oriented factorization certificates.
//!
//! ```text
//! S=4 R=7 F=2
//! u:1,0,0,1 v:1,0,0,1 w:1,0,0,1
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Factor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub size: usize,
    pub f_max: i32,
    pub factors: Vec<Factor>,
}

fn csv(x: &[i32]) -> String {
    let mut out = String::new();
    for (i, e) in x.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{e}").unwrap();
    }
    out
}

/// `u:<csv> v:<csv> w:<csv>`
pub fn factor_line(f: &Factor) -> String {
    format!("u:{} v:{} w:{}", csv(f.u()), csv(f.v()), csv(f.w()))
}

/// Parses a factor line; `line_no` is reported in errors.
pub fn parse_factor_line(line: &str, size: usize, line_no: usize) -> Result<Factor> {
    let parts: Vec<&str> = line.split(' ').collect();
    if parts.len() != 3 {
        return Err(Error::parse(line_no, format!("expected 3 vectors, got {line:?}")));
    }
    let mut vecs = Vec::with_capacity(3);
    for (part, key) in parts.iter().zip(["u:", "v:", "w:"]) {
        let body = part
            .strip_prefix(key)
            .ok_or_else(|| Error::parse(line_no, format!("expected {key} prefix in {part:?}")))?;
        let x = body
            .split(',')
            .map(|e| e.parse::<i32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(line_no, format!("bad integer in {part:?}: {e}")))?;
        if x.len() != size {
            return Err(Error::parse(
                line_no,
                format!("vector {key} has {} entries, expected {size}", x.len()),
            ));
        }
        vecs.push(x);
    }
    let w = vecs.pop().unwrap();
    let v = vecs.pop().unwrap();
    let u = vecs.pop().unwrap();
    Factor::new(u, v, w).map_err(|e| Error::parse(line_no, e.to_string()))
}

/// Parses `key=<int>` tokens of a header line in order.
pub(crate) fn header_fields<'a>(line: &'a str, keys: &[&str], line_no: usize) -> Result<Vec<&'a str>> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < keys.len() {
        return Err(Error::parse(line_no, format!("expected fields {keys:?} in {line:?}")));
    }
    keys.iter()
        .zip(&tokens)
        .map(|(key, tok)| {
            tok.strip_prefix(key)
                .and_then(|t| t.strip_prefix('='))
                .ok_or_else(|| Error::parse(line_no, format!("expected {key}=... in {line:?}")))
        })
        .collect()
}

pub(crate) fn parse_num<T: std::str::FromStr>(s: &str, line_no: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| Error::parse(line_no, format!("bad number {s:?}: {e}")))
}

impl Certificate {
    pub fn new(size: usize, f_max: i32, factors: Vec<Factor>) -> Self {
        Self { size, f_max, factors }
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("S={} R={} F={}\n", self.size, self.factors.len(), self.f_max);
        for f in &self.factors {
            out.push_str(&factor_line(f));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (no, header) = lines.next().ok_or_else(|| Error::parse(1, "empty certificate"))?;
        let fields = header_fields(header, &["S", "R", "F"], no)?;
        let size: usize = parse_num(fields[0], no)?;
        let rank: usize = parse_num(fields[1], no)?;
        let f_max: i32 = parse_num(fields[2], no)?;
        if size == 0 {
            return Err(Error::parse(no, "S must be positive"));
        }
        let mut factors = Vec::with_capacity(rank);
        for _ in 0..rank {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(factors.len() + 2, "certificate truncated"))?;
            factors.push(parse_factor_line(line, size, no)?);
        }
        if let Some((no, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::parse(no, format!("unexpected trailing line {line:?}")));
        }
        Ok(Self { size, f_max, factors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::strassen_2x2;

    #[test]
    fn strassen_certificate_round_trip() {
        let cert = Certificate::new(4, 2, strassen_2x2());
        let text = cert.to_text();
        assert!(text.starts_with("S=4 R=7 F=2\nu:1,0,0,1 v:1,0,0,1 w:1,0,0,1\n"));
        let back = Certificate::parse(&text).unwrap();
        assert_eq!(back, cert);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn truncated_certificate_names_line() {
        let text = "S=2 R=2 F=1\nu:1,0 v:0,1 w:1,1\n";
        match Certificate::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_length_vector_rejected() {
        let text = "S=2 R=1 F=1\nu:1,0,0 v:0,1 w:1,1\n";
        assert!(matches!(Certificate::parse(text), Err(Error::Parse { line: 2, .. })));
    }
}
