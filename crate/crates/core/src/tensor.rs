//! Exact integer algebra on cubic order-3 tensors and rank-one factors.
//!
//! A [`Tensor3`] is an `S×S×S` integer array stored row-major, so entry
//! `[a, b, c]` lives at `(a * S + b) * S + c`. A [`Factor`] is one rank-one
//! term `u ⊗ v ⊗ w`. Subtracting factors from a target tensor until it
//! vanishes yields a decomposition whose length bounds the tensor rank.
//!
//! All arithmetic is exact. Entries are bounded by a cap (default
//! [`DEFAULT_ENTRY_CAP`]); leaving the cap is reported as
//! [`Error::Overflow`] rather than wrapping.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, RowSpace};

/// Default magnitude cap on tensor entries.
pub const DEFAULT_ENTRY_CAP: i32 = 64;

/// Default bound on factor entries: `F = {-2, ..., 2}`.
pub const DEFAULT_F_MAX: i32 = 2;

fn check_cap(value: i64, cap: i32) -> Result<i32> {
    if value.abs() > i64::from(cap) {
        Err(Error::Overflow { value, cap })
    } else {
        Ok(value as i32)
    }
}

/// Dense cubic integer tensor.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tensor3 {
    size: usize,
    data: Vec<i32>,
}

impl Tensor3 {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0; size * size * size],
        }
    }

    /// Builds a tensor from row-major entries, rejecting wrong lengths and
    /// entries beyond `cap`.
    pub fn from_entries(size: usize, data: Vec<i32>, cap: i32) -> Result<Self> {
        if size == 0 {
            return Err(Error::usage("tensor size must be positive"));
        }
        if data.len() != size * size * size {
            return Err(Error::usage(format!(
                "expected {} entries for size {size}, got {}",
                size * size * size,
                data.len()
            )));
        }
        for &x in &data {
            check_cap(i64::from(x), cap)?;
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self) -> &[i32] {
        &self.data
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.size + b) * self.size + c
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> i32 {
        self.data[self.index(a, b, c)]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&x| x != 0).count()
    }

    pub fn max_abs(&self) -> i32 {
        self.data.iter().map(|x| x.abs()).max().unwrap_or(0)
    }

    /// `self + sign * outer3(f)` with the cap enforced.
    pub(crate) fn add_outer(&self, f: &Factor, sign: i32, cap: i32) -> Result<Tensor3> {
        f.check_size(self.size)?;
        let s = self.size;
        let mut data = self.data.clone();
        for a in 0..s {
            let ua = f.u[a] * sign;
            if ua == 0 {
                continue;
            }
            for b in 0..s {
                let uv = ua * f.v[b];
                if uv == 0 {
                    continue;
                }
                let row = (a * s + b) * s;
                for c in 0..s {
                    let x = i64::from(data[row + c]) + i64::from(uv) * i64::from(f.w[c]);
                    data[row + c] = check_cap(x, cap)?;
                }
            }
        }
        Ok(Tensor3 { size: s, data })
    }

    /// Sum of the outer products of `factors`.
    pub fn from_factors(size: usize, factors: &[Factor], cap: i32) -> Result<Tensor3> {
        factors
            .iter()
            .try_fold(Tensor3::zeros(size), |t, f| t.add_outer(f, 1, cap))
    }

    /// Matrix slice along `mode` (0, 1 or 2) at position `k`, row-major `S×S`.
    fn slice(&self, mode: usize, k: usize) -> Vec<i64> {
        let s = self.size;
        let mut out = Vec::with_capacity(s * s);
        for i in 0..s {
            for j in 0..s {
                let x = match mode {
                    0 => self.get(k, i, j),
                    1 => self.get(i, k, j),
                    _ => self.get(i, j, k),
                };
                out.push(i64::from(x));
            }
        }
        out
    }
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor3(S={}, nnz={}, {:?})", self.size, self.nnz(), self.data)
    }
}

/// A rank-one term `u ⊗ v ⊗ w`. None of the three vectors is zero.
///
/// Ordering is lexicographic on `(u, v, w)`; search uses it for
/// deterministic tie-breaking.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Factor {
    u: Vec<i32>,
    v: Vec<i32>,
    w: Vec<i32>,
}

impl Factor {
    /// Vectors may have different lengths (rectangular matrix products);
    /// cubic tensor operations check that all three equal `S`.
    pub fn new(u: Vec<i32>, v: Vec<i32>, w: Vec<i32>) -> Result<Self> {
        for (name, x) in [("u", &u), ("v", &v), ("w", &w)] {
            if x.is_empty() {
                return Err(Error::usage(format!("factor vector {name} is empty")));
            }
            if x.iter().all(|&e| e == 0) {
                return Err(Error::usage(format!("factor vector {name} is zero")));
            }
        }
        Ok(Self { u, v, w })
    }

    pub fn u(&self) -> &[i32] {
        &self.u
    }

    pub fn v(&self) -> &[i32] {
        &self.v
    }

    pub fn w(&self) -> &[i32] {
        &self.w
    }

    pub fn vectors(&self) -> [&[i32]; 3] {
        [&self.u, &self.v, &self.w]
    }

    /// Length of all three vectors, if they agree.
    pub fn size(&self) -> Option<usize> {
        let s = self.u.len();
        (self.v.len() == s && self.w.len() == s).then_some(s)
    }

    fn check_size(&self, size: usize) -> Result<()> {
        match self.size() {
            Some(s) if s == size => Ok(()),
            _ => Err(Error::usage(format!(
                "factor lengths ({}, {}, {}) do not match tensor size {size}",
                self.u.len(),
                self.v.len(),
                self.w.len()
            ))),
        }
    }

    pub fn max_abs(&self) -> i32 {
        self.vectors()
            .iter()
            .flat_map(|x| x.iter())
            .map(|e| e.abs())
            .max()
            .unwrap_or(0)
    }

    /// True when every entry lies in `{-f_max, ..., f_max}`.
    pub fn in_domain(&self, f_max: i32) -> bool {
        self.max_abs() <= f_max
    }

    pub fn is_canonical(&self) -> bool {
        first_nonzero(&self.u) > 0 && first_nonzero(&self.v) > 0
    }

    /// Sign-normalized representative of `(λ1 u, λ2 v, λ3 w)`, `λ1 λ2 λ3 = 1`:
    /// λ1 and λ2 make the first non-zero entries of `u` and `v` positive and
    /// `λ3 = λ1 λ2`.
    pub fn canonical(&self) -> Factor {
        let l1 = first_nonzero(&self.u).signum();
        let l2 = first_nonzero(&self.v).signum();
        let l3 = l1 * l2;
        let scale = |x: &[i32], l: i32| x.iter().map(|e| e * l).collect();
        Factor {
            u: scale(&self.u, l1),
            v: scale(&self.v, l2),
            w: scale(&self.w, l3),
        }
    }

    /// All four members of the sign orbit, in a fixed order.
    pub fn sign_orbit(&self) -> [Factor; 4] {
        let scale = |x: &[i32], l: i32| x.iter().map(|e| e * l).collect::<Vec<_>>();
        [(1, 1, 1), (-1, -1, 1), (-1, 1, -1), (1, -1, -1)].map(|(a, b, c)| Factor {
            u: scale(&self.u, a),
            v: scale(&self.v, b),
            w: scale(&self.w, c),
        })
    }
}

impl fmt::Debug for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Factor(u={:?}, v={:?}, w={:?})", self.u, self.v, self.w)
    }
}

fn first_nonzero(x: &[i32]) -> i32 {
    x.iter().copied().find(|&e| e != 0).unwrap_or(0)
}

/// `result[a, b, c] = u[a] * v[b] * w[c]`.
pub fn outer3(u: &[i32], v: &[i32], w: &[i32]) -> Result<Tensor3> {
    let s = u.len();
    if v.len() != s || w.len() != s || s == 0 {
        return Err(Error::usage(format!(
            "outer3 needs equal non-zero lengths, got ({}, {}, {})",
            u.len(),
            v.len(),
            w.len()
        )));
    }
    let mut data = Vec::with_capacity(s * s * s);
    for &ua in u {
        for &vb in v {
            for &wc in w {
                data.push(ua * vb * wc);
            }
        }
    }
    Ok(Tensor3 { size: s, data })
}

/// Outer product of a factor's three vectors.
pub fn factor_tensor(f: &Factor) -> Result<Tensor3> {
    outer3(&f.u, &f.v, &f.w)
}

/// Residual update `T - u ⊗ v ⊗ w` under the default entry cap.
pub fn apply_factor(t: &Tensor3, f: &Factor) -> Result<Tensor3> {
    apply_factor_capped(t, f, DEFAULT_ENTRY_CAP)
}

pub fn apply_factor_capped(t: &Tensor3, f: &Factor, cap: i32) -> Result<Tensor3> {
    t.add_outer(f, -1, cap)
}

pub fn is_zero(t: &Tensor3) -> bool {
    t.is_zero()
}

/// Shape of a matrix product `(n×m) · (m×p)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatmulShape {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl MatmulShape {
    pub fn new(n: usize, m: usize, p: usize) -> Result<Self> {
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::usage("matrix dimensions must be positive"));
        }
        Ok(Self { n, m, p })
    }

    /// Factor vector lengths `(n·m, m·p, n·p)`.
    pub fn vector_lengths(&self) -> (usize, usize, usize) {
        (self.n * self.m, self.m * self.p, self.n * self.p)
    }

    /// Coordinates `(a, b, c)` of the unit entries, in `(i, j, k)` order.
    pub fn unit_entries(&self) -> Vec<(usize, usize, usize)> {
        let (n, m, p) = (self.n, self.m, self.p);
        let mut out = Vec::with_capacity(n * m * p);
        for i in 0..n {
            for j in 0..m {
                for k in 0..p {
                    out.push((i * m + j, j * p + k, i * p + k));
                }
            }
        }
        out
    }

    /// True if `factors` sum exactly to this product's tensor.
    pub fn is_decomposed_by(&self, factors: &[Factor]) -> bool {
        let (la, lb, lc) = self.vector_lengths();
        if factors
            .iter()
            .any(|f| f.u.len() != la || f.v.len() != lb || f.w.len() != lc)
        {
            return false;
        }
        let mut sum = vec![0i64; la * lb * lc];
        for f in factors {
            for (a, &ua) in f.u.iter().enumerate() {
                if ua == 0 {
                    continue;
                }
                for (b, &vb) in f.v.iter().enumerate() {
                    if vb == 0 {
                        continue;
                    }
                    for (c, &wc) in f.w.iter().enumerate() {
                        sum[(a * lb + b) * lc + c] += i64::from(ua * vb) * i64::from(wc);
                    }
                }
            }
        }
        for (a, b, c) in self.unit_entries() {
            sum[(a * lb + b) * lc + c] -= 1;
        }
        sum.iter().all(|&x| x == 0)
    }
}

impl std::str::FromStr for MatmulShape {
    type Err = Error;

    /// Parses `n,m,p`.
    fn from_str(s: &str) -> Result<Self> {
        let dims: Vec<usize> = s
            .split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::usage(format!("bad matmul shape {s:?}: {e}")))?;
        match dims[..] {
            [n, m, p] => MatmulShape::new(n, m, p),
            _ => Err(Error::usage(format!("matmul shape needs three dims: {s:?}"))),
        }
    }
}

/// Tensor of the `n×m` by `m×p` matrix product: `T[a, b, c] = 1` iff
/// `a = i·m + j`, `b = j·p + k`, `c = i·p + k`.
///
/// Only square products give a cubic tensor; rectangular shapes are handled
/// by [`MatmulShape::is_decomposed_by`] and [`verify_matmul_algorithm`].
pub fn build_matmul_tensor(n: usize, m: usize, p: usize) -> Result<Tensor3> {
    let shape = MatmulShape::new(n, m, p)?;
    if !(n == m && m == p) {
        return Err(Error::usage(format!(
            "matmul tensor ({n},{m},{p}) is not cubic; only n = m = p is supported"
        )));
    }
    let s = n * m;
    let mut t = Tensor3::zeros(s);
    for (a, b, c) in shape.unit_entries() {
        let idx = t.index(a, b, c);
        t.data[idx] = 1;
    }
    Ok(t)
}

/// Exact check that `factors` sum to `t`.
pub fn verify_decomposition(t: &Tensor3, factors: &[Factor]) -> bool {
    let s = t.size;
    if factors.iter().any(|f| f.size() != Some(s)) {
        return false;
    }
    let mut sum: Vec<i64> = t.data.iter().map(|&x| -i64::from(x)).collect();
    for f in factors {
        for a in 0..s {
            for b in 0..s {
                let uv = i64::from(f.u[a]) * i64::from(f.v[b]);
                if uv == 0 {
                    continue;
                }
                let row = (a * s + b) * s;
                for c in 0..s {
                    sum[row + c] += uv * i64::from(f.w[c]);
                }
            }
        }
    }
    sum.iter().all(|&x| x == 0)
}

/// First entry index where `factors` fail to reproduce `t`, with the
/// expected and obtained values.
pub fn first_mismatch(t: &Tensor3, factors: &[Factor]) -> Option<((usize, usize, usize), i64, i64)> {
    let s = t.size;
    let mut sum = vec![0i64; t.data.len()];
    for f in factors.iter().filter(|f| f.size() == Some(s)) {
        for a in 0..s {
            for b in 0..s {
                for c in 0..s {
                    sum[(a * s + b) * s + c] += i64::from(f.u[a]) * i64::from(f.v[b]) * i64::from(f.w[c]);
                }
            }
        }
    }
    (0..t.data.len())
        .find(|&i| sum[i] != i64::from(t.data[i]))
        .map(|i| ((i / (s * s), (i / s) % s, i % s), i64::from(t.data[i]), sum[i]))
}

/// Runs the bilinear algorithm encoded by `factors` on `trials` random
/// integer matrix pairs (entries in `[-9, 9]`) and compares every product
/// with naive multiplication.
///
/// Entry `c` of the flattened output is `Σ_r w_r[c] (u_r · vec A)(v_r · vec B)`
/// with row-major `vec`.
pub fn verify_matmul_algorithm(shape: MatmulShape, factors: &[Factor], trials: usize, seed: u64) -> Result<bool> {
    let (la, lb, lc) = shape.vector_lengths();
    for (r, f) in factors.iter().enumerate() {
        if f.u.len() != la || f.v.len() != lb || f.w.len() != lc {
            return Err(Error::usage(format!(
                "factor {r} has lengths ({}, {}, {}), expected ({la}, {lb}, {lc})",
                f.u.len(),
                f.v.len(),
                f.w.len()
            )));
        }
    }
    let mut rng = crate::rng::seeded(seed);
    let (n, m, p) = (shape.n, shape.m, shape.p);
    for _ in 0..trials {
        let a: Vec<i64> = (0..la).map(|_| rng.random_range(-9..=9)).collect();
        let b: Vec<i64> = (0..lb).map(|_| rng.random_range(-9..=9)).collect();
        let mut c = vec![0i64; lc];
        for f in factors {
            let x: i64 = f.u.iter().zip(&a).map(|(&u, &x)| i64::from(u) * x).sum();
            let y: i64 = f.v.iter().zip(&b).map(|(&v, &y)| i64::from(v) * y).sum();
            for (ci, &w) in c.iter_mut().zip(&f.w) {
                *ci += i64::from(w) * x * y;
            }
        }
        for i in 0..n {
            for k in 0..p {
                let naive: i64 = (0..m).map(|j| a[i * m + j] * b[j * p + k]).sum();
                if naive != c[i * p + k] {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Square integer matrix, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    n: usize,
    data: Vec<i32>,
}

impl IntMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0; n * n];
        for i in 0..n {
            data[i * n + i] = 1;
        }
        Self { n, data }
    }

    pub fn from_rows(n: usize, data: Vec<i32>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::usage(format!("expected {} entries, got {}", n * n, data.len())));
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.data[i * self.n + j]
    }

    pub fn entries(&self) -> &[i32] {
        &self.data
    }

    pub fn determinant(&self) -> i128 {
        linalg::determinant(self.n, &self.data)
    }

    pub fn max_abs(&self) -> i32 {
        self.data.iter().map(|x| x.abs()).max().unwrap_or(0)
    }

    pub fn mul_vec(&self, x: &[i32]) -> Vec<i64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| i64::from(self.get(i, j)) * i64::from(x[j])).sum())
            .collect()
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        let n = self.n;
        let mut data = vec![0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        IntMatrix { n, data }
    }

    /// Random signed permutation matrix.
    pub fn random_signed_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut data = vec![0; n * n];
        for (i, &j) in perm.iter().enumerate() {
            data[i * n + j] = if rng.random_bool(0.5) { 1 } else { -1 };
        }
        Self { n, data }
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntMatrix({}x{}, {:?})", self.n, self.n, self.data)
    }
}

/// Triple of unimodular matrices acting on the three tensor modes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisTransform {
    a: IntMatrix,
    b: IntMatrix,
    c: IntMatrix,
}

impl BasisTransform {
    /// Rejects non-square, mismatched or non-unimodular matrices.
    pub fn new(a: IntMatrix, b: IntMatrix, c: IntMatrix) -> Result<Self> {
        let n = a.n;
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if m.n != n {
                return Err(Error::usage(format!("{name} has size {}, expected {n}", m.n)));
            }
            if m.determinant().abs() != 1 {
                return Err(Error::usage(format!(
                    "{name} is not unimodular (det = {})",
                    m.determinant()
                )));
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            a: IntMatrix::identity(n),
            b: IntMatrix::identity(n),
            c: IntMatrix::identity(n),
        }
    }

    pub fn matrices(&self) -> [&IntMatrix; 3] {
        [&self.a, &self.b, &self.c]
    }

    pub fn size(&self) -> usize {
        self.a.n
    }

    /// `(A u, B v, C w)`. Images are never zero since the matrices are
    /// invertible.
    pub fn transform_factor(&self, f: &Factor) -> Factor {
        let conv = |x: Vec<i64>| x.into_iter().map(|e| e as i32).collect::<Vec<_>>();
        Factor {
            u: conv(self.a.mul_vec(&f.u)),
            v: conv(self.b.mul_vec(&f.v)),
            w: conv(self.c.mul_vec(&f.w)),
        }
    }
}

/// Draws a transform whose matrices are each a random signed permutation
/// followed by `ops` elementary row additions `row_i += ±row_j`, keeping
/// entries within `max_entry`.
pub fn random_basis_transform<R: Rng + ?Sized>(size: usize, ops: usize, max_entry: i32, rng: &mut R) -> BasisTransform {
    let draw = |rng: &mut R| {
        let mut m = IntMatrix::random_signed_permutation(size, rng);
        if size < 2 {
            return m;
        }
        for _ in 0..ops {
            // A few attempts per operation; skipped if every attempt breaks the bound.
            for _attempt in 0..8 {
                let i = rng.random_range(0..size);
                let mut j = rng.random_range(0..size - 1);
                if j >= i {
                    j += 1;
                }
                let s = if rng.random_bool(0.5) { 1 } else { -1 };
                let row: Vec<i32> = (0..size).map(|k| m.get(i, k) + s * m.get(j, k)).collect();
                if row.iter().all(|x| x.abs() <= max_entry) {
                    m.data[i * size..(i + 1) * size].copy_from_slice(&row);
                    break;
                }
            }
        }
        m
    };
    let a = draw(rng);
    let b = draw(rng);
    let c = draw(rng);
    BasisTransform { a, b, c }
}

/// Multilinear action `T'[a,b,c] = Σ A[a,x] B[b,y] C[c,z] T[x,y,z]`.
///
/// With this convention a decomposition `Σ u⊗v⊗w` of `T` maps to the
/// decomposition `Σ Au⊗Bv⊗Cw` of `T'`.
pub fn change_of_basis(t: &Tensor3, bt: &BasisTransform) -> Result<Tensor3> {
    change_of_basis_capped(t, bt, DEFAULT_ENTRY_CAP)
}

pub fn change_of_basis_capped(t: &Tensor3, bt: &BasisTransform, cap: i32) -> Result<Tensor3> {
    let s = t.size;
    if bt.size() != s {
        return Err(Error::usage(format!(
            "transform size {} does not match tensor size {s}",
            bt.size()
        )));
    }
    let mut cur: Vec<i64> = t.data.iter().map(|&x| i64::from(x)).collect();
    let mut next = vec![0i64; cur.len()];
    // One mode product at a time.
    for (mode, m) in bt.matrices().into_iter().enumerate() {
        next.iter_mut().for_each(|x| *x = 0);
        for x in 0..s {
            for y in 0..s {
                for z in 0..s {
                    let val = cur[(x * s + y) * s + z];
                    if val == 0 {
                        continue;
                    }
                    for r in 0..s {
                        let (src, dst) = match mode {
                            0 => (x, (r * s + y) * s + z),
                            1 => (y, (x * s + r) * s + z),
                            _ => (z, (x * s + y) * s + r),
                        };
                        next[dst] += i64::from(m.get(r, src)) * val;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let data = cur.into_iter().map(|x| check_cap(x, cap)).collect::<Result<Vec<_>>>()?;
    Ok(Tensor3 { size: s, data })
}

/// Maps each `(u, v, w)` to `(A u, B v, C w)`.
///
/// Returns the images and, per factor, whether it stayed inside
/// `{-f_max, ..., f_max}`.
pub fn transform_factors(factors: &[Factor], bt: &BasisTransform, f_max: i32) -> Vec<(Factor, bool)> {
    factors
        .iter()
        .map(|f| {
            let g = bt.transform_factor(f);
            let ok = g.in_domain(f_max);
            (g, ok)
        })
        .collect()
}

/// Upper bound on the CP rank.
///
/// For each mode, the slices span the mode's unfolding; writing every slice
/// in a basis chosen among the slices themselves gives a decomposition with
/// `Σ rank(basis slice)` terms. The greedy (matroid) choice of basis by
/// ascending slice rank minimizes that sum. The bound is the minimum over
/// the three modes; it is 0 exactly for the zero tensor and 1 for any
/// rank-one tensor.
pub fn rank_upper_bound(t: &Tensor3) -> usize {
    let s = t.size;
    (0..3)
        .map(|mode| {
            let mut slices: Vec<(usize, Vec<i64>)> = (0..s)
                .map(|k| {
                    let sl = t.slice(mode, k);
                    let r = linalg::rank(sl.chunks(s).map(|row| row.to_vec()));
                    (r, sl)
                })
                .filter(|(r, _)| *r > 0)
                .collect();
            slices.sort_by_key(|(r, _)| *r);
            let mut space = RowSpace::new();
            slices
                .into_iter()
                .filter(|(_, sl)| space.insert(sl.iter().copied()))
                .map(|(r, _)| r)
                .sum::<usize>()
        })
        .min()
        .unwrap_or(0)
}

/// Lower bound on the CP rank: the largest rank among the three unfoldings.
pub fn rank_lower_bound(t: &Tensor3) -> usize {
    let s = t.size;
    (0..3)
        .map(|mode| linalg::rank((0..s).map(|k| t.slice(mode, k))))
        .max()
        .unwrap_or(0)
}
