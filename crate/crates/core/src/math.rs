//! Dense linear algebra, statistics and seeded randomness.
//!
//! Matrices are row-major `f64`. The hot loops used by training live in the
//! `gemm_*` kernels, which work on raw slices so callers can reuse buffers.

use std::ops::{Deref, DerefMut};

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting bad lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::new",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "Matrix::from_rows",
                    left: (0, cols),
                    right: (i, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a 0-column matrix still has rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(indices.len(), self.cols, data)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Owned real vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Vector::new"));
        }
        Ok(Self(data))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm_nn(&a.data, &b.data, a.rows, a.cols, b.cols, &mut out.data);
    Ok(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out (m×n) = a (m×k) · b (k×n)`.
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    gemm_strided(m, k, n, a, (k, 1), b, (n, 1), out);
}

/// `out (m×n) = a (m×k) · bᵀ` where `b` is `n×k`.
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    gemm_strided(m, k, n, a, (k, 1), b, (1, k), out);
}

/// `out (m×n) = aᵀ · b` where `a` is `k×m` and `b` is `k×n`.
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    gemm_strided(m, k, n, a, (1, m), b, (n, 1), out);
}

#[allow(clippy::too_many_arguments)]
fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    out: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Centers `a` and scales it to unit Euclidean norm, so the Pearson
/// correlation of two vectors is the dot product of their standardized
/// forms. Returns `None` for (numerically) constant input.
pub fn standardize(a: &[f64]) -> Option<Vec<f64>> {
    if a.len() < 2 {
        return None;
    }
    let m = mean(a);
    let centered: Vec<f64> = a.iter().map(|v| v - m).collect();
    let ss = dot(&centered, &centered);
    let scale = dot(a, a);
    if ss <= 1e-24 * scale || ss == 0.0 {
        return None;
    }
    let inv = 1.0 / ss.sqrt();
    Some(centered.into_iter().map(|v| v * inv).collect())
}

/// Sample Pearson correlation coefficient, clamped to `[-1, 1]`.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            op: "pearson_correlation",
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    if a.len() < 2 {
        return Err(Error::out_of_range("vector length", "need at least 2 entries"));
    }
    let sa = standardize(a).ok_or(Error::DegenerateVector)?;
    let sb = standardize(b).ok_or(Error::DegenerateVector)?;
    Ok(dot(&sa, &sb).clamp(-1.0, 1.0))
}

/// The k-th largest value (1-based), counting ties with multiplicity.
pub fn kth_largest(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > values.len() {
        return Err(Error::out_of_range(
            "k",
            format!("k = {k} with {} values", values.len()),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(sorted[k - 1])
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed: `mix64(parent ^ mix64(index))`.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index))
}

/// Seedable random stream backed by ChaCha8 (`rand_chacha::ChaCha8Rng`),
/// seeded through `SeedableRng::seed_from_u64`. Both are specified
/// bit-for-bit, so a seed yields the same stream on every platform.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for parallel or nested work.
    pub fn child(&self, index: u64) -> Rng {
        Rng::new(child_seed(self.seed, index))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_assume, proptest, Strategy};

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn random_matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, (0..r * c).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_product_is_noop() {
        let mut rng = Rng::new(1);
        let m = random_matrix(&mut rng, 3, 4);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn small_hand_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(42);
        let a = random_matrix(&mut rng, 5, 4);
        let b = random_matrix(&mut rng, 4, 3);
        let fast = a.matmul(&b).unwrap();
        assert!(fast.max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
    }

    #[test]
    fn transposed_kernels_match_naive() {
        let mut rng = Rng::new(3);
        let a = random_matrix(&mut rng, 6, 5);
        let b = random_matrix(&mut rng, 7, 5);
        let mut out = vec![0.0; 6 * 7];
        gemm_nt(a.as_slice(), b.as_slice(), 6, 5, 7, &mut out);
        let expect = naive_matmul(&a, &b.transpose());
        assert!(Matrix::new(6, 7, out).unwrap().max_abs_diff(&expect) < 1e-12);

        let c = random_matrix(&mut rng, 6, 3);
        let mut out = vec![0.0; 5 * 3];
        gemm_tn(a.as_slice(), c.as_slice(), 6, 5, 3, &mut out);
        let expect = naive_matmul(&a.transpose(), &c);
        assert!(Matrix::new(5, 3, out).unwrap().max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn correlation_known_values() {
        let v = [0.3, -1.0, 2.0, 0.7];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson_correlation(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_correlation(&v, &neg).unwrap() + 1.0).abs() < 1e-15);

        // Textbook formula: r = (nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²))
        // x = [1,2,3,4], y = [2,4,5,9]: n=4, Σx=10, Σy=20, Σxy=61, Σx²=30, Σy²=126
        // r = (244 − 200) / sqrt((120 − 100)(504 − 400)) = 44 / sqrt(2080)
        let expected = 44.0 / 2080f64.sqrt();
        let r = pearson_correlation(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 9.0]).unwrap();
        assert!((r - expected).abs() < 1e-14, "{r} vs {expected}");
    }

    #[test]
    fn correlation_rejects_constant() {
        assert!(matches!(
            pearson_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateVector)
        ));
        assert!(matches!(
            pearson_correlation(&[0.1, 0.1, 0.1], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateVector)
        ));
    }

    #[test]
    fn kth_largest_examples() {
        assert_eq!(kth_largest(&[0.9, 0.8, 0.7, 0.6, 0.2], 4).unwrap(), 0.6);
        assert_eq!(kth_largest(&[0.5], 1).unwrap(), 0.5);
        assert_eq!(kth_largest(&[0.3, 0.3, 0.3], 2).unwrap(), 0.3);
        assert!(kth_largest(&[0.3], 0).is_err());
        assert!(kth_largest(&[0.3], 2).is_err());
    }

    #[test]
    fn rng_is_reproducible_and_children_differ() {
        let a: Vec<f64> = {
            let mut r = Rng::new(9);
            (0..5).map(|_| r.uniform()).collect()
        };
        let b: Vec<f64> = {
            let mut r = Rng::new(9);
            (0..5).map(|_| r.uniform()).collect()
        };
        assert_eq!(a, b);
        let root = Rng::new(9);
        assert_ne!(root.child(0).seed(), root.child(1).seed());
        assert_eq!(root.child(4).seed(), child_seed(9, 4));
    }

    fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn matmul_is_associative(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, n in 1usize..6, p in 1usize..6) {
            let mut rng = Rng::new(seed);
            let a = random_matrix(&mut rng, m, k);
            let b = random_matrix(&mut rng, k, n);
            let c = random_matrix(&mut rng, n, p);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.as_slice().iter().fold(1.0f64, |s, v| s.max(v.abs()));
            prop_assert!(left.max_abs_diff(&right) <= 1e-9 * scale);
        }

        #[test]
        fn correlation_symmetric_and_affine_invariant(
            a in finite_vec(8), b in finite_vec(8), alpha in 0.1f64..10.0, beta in -5.0f64..5.0
        ) {
            prop_assume!(standardize(&a).is_some() && standardize(&b).is_some());
            let r_ab = pearson_correlation(&a, &b).unwrap();
            let r_ba = pearson_correlation(&b, &a).unwrap();
            prop_assert!((r_ab - r_ba).abs() < 1e-12);
            let moved: Vec<f64> = a.iter().map(|x| alpha * x + beta).collect();
            let r_moved = pearson_correlation(&moved, &b).unwrap();
            prop_assert!((r_ab - r_moved).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r_ab));
        }

        #[test]
        fn kth_largest_extremes(v in prop::collection::vec(-1.0f64..1.0, 1..20)) {
            let max = v.iter().cloned().fold(f64::MIN, f64::max);
            let min = v.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert_eq!(kth_largest(&v, 1).unwrap(), max);
            prop_assert_eq!(kth_largest(&v, v.len()).unwrap(), min);
        }
    }
}
