//! Text persistence for demo datasets.
//!
//! ```text
//! OPENTENSOR-DEMOS v1 S=4 F=2
//! R=2 seed=17 lineage=gen rejected=3 check=5d41402abc4b2a76
//! u:1,0,0,0 v:0,1,0,0 w:1,0,0,-1
//! u:0,0,1,0 v:1,0,0,0 w:0,2,0,0
//! ...
//! ```
//!
//! Tensors are not stored; they are recomposed from the factors on read and
//! compared against the `check` digest of the tensor written.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::certificate::{factor_line, header_fields, parse_factor_line, parse_num};
use crate::error::{Error, Result};
use crate::synth::{Demo, DemoMeta};
use crate::tensor::{Tensor3, DEFAULT_ENTRY_CAP};

const MAGIC: &str = "OPENTENSOR-DEMOS v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub size: usize,
    pub f_max: i32,
    pub demos: Vec<Demo>,
}

fn digest(t: &Tensor3) -> String {
    let mut h = Sha256::new();
    for x in t.entries() {
        h.update(x.to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl Dataset {
    pub fn new(size: usize, f_max: i32, demos: Vec<Demo>) -> Result<Self> {
        if let Some(i) = demos.iter().position(|d| d.tensor().size() != size) {
            return Err(Error::usage(format!("demo {i} does not have size {size}")));
        }
        Ok(Self { size, f_max, demos })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} S={} F={}\n", self.size, self.f_max);
        for d in &self.demos {
            out.push_str(&format!(
                "R={} seed={} lineage={} rejected={} check={}\n",
                d.rank(),
                d.meta.seed,
                d.meta.lineage,
                d.meta.rejections,
                digest(d.tensor())
            ));
            for f in d.factors() {
                out.push_str(&factor_line(f));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let header = lines.first().ok_or_else(|| Error::parse(1, "empty dataset"))?;
        let rest = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::parse(1, format!("expected {MAGIC:?} header")))?;
        let fields = header_fields(rest.trim(), &["S", "F"], 1)?;
        let size: usize = parse_num(fields[0], 1)?;
        let f_max: i32 = parse_num(fields[1], 1)?;
        if size == 0 {
            return Err(Error::parse(1, "S must be positive"));
        }

        let mut demos = Vec::new();
        let mut i = 1;
        while i < lines.len() {
            let no = i + 1;
            if lines[i].trim().is_empty() {
                i += 1;
                continue;
            }
            let f = header_fields(lines[i], &["R", "seed", "lineage", "rejected", "check"], no)?;
            let rank: usize = parse_num(f[0], no)?;
            let seed: u64 = parse_num(f[1], no)?;
            let lineage = f[2].to_string();
            let rejections: u32 = parse_num(f[3], no)?;
            let check = f[4];
            let mut factors = Vec::with_capacity(rank);
            for k in 0..rank {
                let line = lines
                    .get(i + 1 + k)
                    .ok_or_else(|| Error::parse(no + 1 + k, "record truncated"))?;
                let factor = parse_factor_line(line, size, no + 1 + k)?;
                if !factor.in_domain(f_max) {
                    return Err(Error::Corruption(format!(
                        "line {}: factor leaves F = ±{f_max}",
                        no + 1 + k
                    )));
                }
                factors.push(factor);
            }
            let tensor = Tensor3::from_factors(size, &factors, DEFAULT_ENTRY_CAP)
                .map_err(|e| Error::Corruption(format!("record at line {no}: {e}")))?;
            if digest(&tensor) != check {
                return Err(Error::Corruption(format!(
                    "record at line {no}: recomposed tensor does not match check {check}"
                )));
            }
            let meta = DemoMeta {
                seed,
                lineage,
                rejections,
            };
            let demo =
                Demo::new(tensor, factors, meta).map_err(|e| Error::Corruption(format!("record at line {no}: {e}")))?;
            demos.push(demo);
            i += 1 + rank;
        }
        Ok(Self { size, f_max, demos })
    }
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, FilterConfig, GenParams};

    fn sample(n: usize) -> Dataset {
        let params = GenParams {
            seed: 4,
            ..GenParams::default()
        };
        let (demos, _) = generate_dataset(&params, n, Some(FilterConfig::default()), 1000).unwrap();
        Dataset::new(4, 2, demos).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let ds = sample(100);
        let text = ds.to_text();
        let back = Dataset::parse(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn truncated_file_names_line() {
        let text = sample(3).to_text();
        let lines: Vec<&str> = text.lines().collect();
        let cut = lines[..lines.len() - 1].join("\n");
        match Dataset::parse(&cut) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, lines.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tampered_factor_is_corruption() {
        let text = sample(2).to_text();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        // Negate the first non-zero entry of w on the first factor line.
        let line = &mut lines[2];
        let w_start = line.find("w:").unwrap() + 2;
        let w: Vec<i32> = line[w_start..].split(',').map(|x| x.parse().unwrap()).collect();
        let k = w.iter().position(|&x| x != 0).unwrap();
        let flipped: Vec<String> = w
            .iter()
            .enumerate()
            .map(|(i, &x)| if i == k { -x } else { x }.to_string())
            .collect();
        line.replace_range(w_start.., &flipped.join(","));
        let tampered = lines.join("\n");
        assert!(matches!(Dataset::parse(&tampered), Err(Error::Corruption(_))));
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(
            Dataset::parse("DEMOS v2 S=4 F=2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
