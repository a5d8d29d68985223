//! Human-readable listing of a bilinear matrix-multiplication algorithm.

use crate::error::{Error, Result};
use crate::tensor::{Factor, MatmulShape};

fn entry_name(matrix: char, row: usize, col: usize, wide: bool) -> String {
    if wide {
        format!("{matrix}_{}_{}", row + 1, col + 1)
    } else {
        format!("{matrix}_{}{}", row + 1, col + 1)
    }
}

fn linear_combination<'a>(terms: impl IntoIterator<Item = (i32, &'a str)>) -> String {
    let mut out = String::new();
    for (coef, name) in terms {
        if coef == 0 {
            continue;
        }
        let mag = coef.abs();
        let body = if mag == 1 {
            name.to_string()
        } else {
            format!("{mag}·{name}")
        };
        match (out.is_empty(), coef < 0) {
            (true, false) => out.push_str(&body),
            (true, true) => {
                out.push('-');
                out.push_str(&body);
            }
            (false, false) => {
                out.push_str(" + ");
                out.push_str(&body);
            }
            (false, true) => {
                out.push_str(" - ");
                out.push_str(&body);
            }
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// Renders one `m_r = (...)·(...)` line per factor, then one
/// `C_ik = ...` line per output entry in row-major order.
///
/// Refuses factor lists that do not decompose the product tensor exactly.
pub fn render_algorithm(factors: &[Factor], shape: MatmulShape) -> Result<String> {
    if !shape.is_decomposed_by(factors) {
        return Err(Error::usage(format!(
            "factors do not decompose the ({},{},{}) matrix product; refusing to render",
            shape.n, shape.m, shape.p
        )));
    }
    let (n, m, p) = (shape.n, shape.m, shape.p);
    let wide = n.max(m).max(p) >= 10;
    let a_names: Vec<String> = (0..n * m).map(|a| entry_name('A', a / m, a % m, wide)).collect();
    let b_names: Vec<String> = (0..m * p).map(|b| entry_name('B', b / p, b % p, wide)).collect();
    let m_names: Vec<String> = (1..=factors.len()).map(|r| format!("m_{r}")).collect();

    let mut out = String::new();
    for (f, name) in factors.iter().zip(&m_names) {
        let left = linear_combination(f.u().iter().copied().zip(a_names.iter().map(String::as_str)));
        let right = linear_combination(f.v().iter().copied().zip(b_names.iter().map(String::as_str)));
        out.push_str(&format!("{name} = ({left})·({right})\n"));
    }
    for c in 0..n * p {
        let terms = factors.iter().zip(&m_names).map(|(f, name)| (f.w()[c], name.as_str()));
        out.push_str(&format!(
            "{} = {}\n",
            entry_name('C', c / p, c % p, wide),
            linear_combination(terms)
        ));
    }
    Ok(out)
}
