//! Known matrix-multiplication algorithms, used as reference decompositions.

use crate::tensor::{Factor, MatmulShape};

fn factor(u: [i32; 4], v: [i32; 4], w: [i32; 4]) -> Factor {
    Factor::new(u.to_vec(), v.to_vec(), w.to_vec()).expect("fixture vectors are non-zero")
}

/// Strassen's seven products for 2×2 matrices, entries ordered
/// `X11, X12, X21, X22`, in canonical sign form.
pub fn strassen_2x2() -> Vec<Factor> {
    [
        // (A11 + A22)(B11 + B22) -> C11, C22
        factor([1, 0, 0, 1], [1, 0, 0, 1], [1, 0, 0, 1]),
        // (A21 + A22) B11 -> C21, -C22
        factor([0, 0, 1, 1], [1, 0, 0, 0], [0, 0, 1, -1]),
        // A11 (B12 - B22) -> C12, C22
        factor([1, 0, 0, 0], [0, 1, 0, -1], [0, 1, 0, 1]),
        // A22 (B21 - B11) -> C11, C21
        factor([0, 0, 0, 1], [-1, 0, 1, 0], [1, 0, 1, 0]),
        // (A11 + A12) B22 -> -C11, C12
        factor([1, 1, 0, 0], [0, 0, 0, 1], [-1, 1, 0, 0]),
        // (A21 - A11)(B11 + B12) -> C22
        factor([-1, 0, 1, 0], [1, 1, 0, 0], [0, 0, 0, 1]),
        // (A12 - A22)(B21 + B22) -> C11
        factor([0, 1, 0, -1], [0, 0, 1, 1], [1, 0, 0, 0]),
    ]
    .into_iter()
    .map(|f| f.canonical())
    .collect()
}

/// The textbook algorithm: one product `A_ij B_jk` per unit entry.
pub fn standard_algorithm(shape: MatmulShape) -> Vec<Factor> {
    let (la, lb, lc) = shape.vector_lengths();
    let unit = |len: usize, i: usize| {
        let mut x = vec![0; len];
        x[i] = 1;
        x
    };
    shape
        .unit_entries()
        .into_iter()
        .map(|(a, b, c)| Factor::new(unit(la, a), unit(lb, b), unit(lc, c)).expect("unit vectors are non-zero"))
        .collect()
}
