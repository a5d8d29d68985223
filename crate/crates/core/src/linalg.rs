//! Exact integer linear algebra on small dense matrices.

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn normalize(row: &mut [i128]) {
    let g = row.iter().fold(0i128, |g, &x| gcd(g, x));
    if g > 1 {
        row.iter_mut().for_each(|x| *x /= g);
    }
}

/// Incrementally built row space over the rationals, kept in echelon form
/// with integer rows (fraction-free elimination, rows divided by their gcd).
#[derive(Debug, Clone, Default)]
pub(crate) struct RowSpace {
    rows: Vec<(usize, Vec<i128>)>,
}

impl RowSpace {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Inserts `v` if it is independent of the current rows; returns whether it was.
    pub(crate) fn insert<I: IntoIterator<Item = i64>>(&mut self, v: I) -> bool {
        let mut v: Vec<i128> = v.into_iter().map(i128::from).collect();
        for (pivot, row) in &self.rows {
            let x = v[*pivot];
            if x == 0 {
                continue;
            }
            let p = row[*pivot];
            for (vi, ri) in v.iter_mut().zip(row) {
                *vi = *vi * p - ri * x;
            }
            normalize(&mut v);
        }
        match v.iter().position(|&x| x != 0) {
            Some(pivot) => {
                self.rows.push((pivot, v));
                true
            }
            None => false,
        }
    }
}

/// Rank over the rationals of the matrix whose rows are given.
pub(crate) fn rank<R, I>(rows: R) -> usize
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = i64>,
{
    let mut space = RowSpace::new();
    for row in rows {
        space.insert(row);
    }
    space.dim()
}

/// Determinant of a square row-major matrix by Bareiss elimination.
pub(crate) fn determinant(n: usize, data: &[i32]) -> i128 {
    let mut m: Vec<i128> = data.iter().map(|&x| i128::from(x)).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k * n + k] == 0 {
            let Some(swap) = (k + 1..n).find(|&r| m[r * n + k] != 0) else {
                return 0;
            };
            for c in 0..n {
                m.swap(k * n + c, swap * n + c);
            }
            sign = -sign;
        }
        let pivot = m[k * n + k];
        for i in k + 1..n {
            for j in k + 1..n {
                m[i * n + j] = (m[i * n + j] * pivot - m[i * n + k] * m[k * n + j]) / prev;
            }
            m[i * n + k] = 0;
        }
        prev = pivot;
    }
    if n == 0 {
        1
    } else {
        sign * m[n * n - 1]
    }
}
