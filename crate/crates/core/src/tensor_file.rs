//! Plain-text tensors.
//!
//! ```text
//! TENSOR S=2
//! 1,0
//! 0,0
//! 0,0
//! 0,1
//! ```
//!
//! Line `a·S + b` (after the header) holds entries `T[a, b, 0..S]`.

use std::path::Path;

use crate::certificate::{header_fields, parse_num};
use crate::error::{Error, Result};
use crate::tensor::{Tensor3, DEFAULT_ENTRY_CAP};

pub fn tensor_to_text(t: &Tensor3) -> String {
    let s = t.size();
    let mut out = format!("TENSOR S={s}\n");
    for row in t.entries().chunks(s) {
        let cells: Vec<String> = row.iter().map(i32::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_tensor(text: &str) -> Result<Tensor3> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (no, header) = lines.next().ok_or_else(|| Error::parse(1, "empty tensor file"))?;
    let rest = header
        .strip_prefix("TENSOR ")
        .ok_or_else(|| Error::parse(no, "expected header `TENSOR S=<int>`"))?;
    let size: usize = parse_num(header_fields(rest, &["S"], no)?[0], no)?;
    if size == 0 {
        return Err(Error::parse(no, "S must be positive"));
    }
    let mut data = Vec::with_capacity(size.pow(3));
    for _ in 0..size * size {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(data.len() / size + 2, "tensor file truncated"))?;
        let row = line
            .split(',')
            .map(|c| parse_num::<i32>(c.trim(), no))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != size {
            return Err(Error::parse(no, format!("expected {size} entries, got {}", row.len())));
        }
        data.extend(row);
    }
    if let Some((no, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(no, format!("unexpected trailing line {line:?}")));
    }
    Tensor3::from_entries(size, data, DEFAULT_ENTRY_CAP)
}

pub fn write_tensor(t: &Tensor3, path: &Path) -> Result<()> {
    std::fs::write(path, tensor_to_text(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tensor(&text)
}
