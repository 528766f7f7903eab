//! Dense multiway arrays and the multilinear primitives every decomposition
//! in this crate is built from.
//!
//! All arrays use the same linear order: the first index varies fastest
//! (column-major for matrices). With that convention the mode-0 unfolding of
//! a tensor is its flat buffer reinterpreted as an `n_0 × (n_1⋯n_{d-1})`
//! matrix, and reshapes that merge or split adjacent modes never move data.
//!
//! Modes are numbered from zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense `d`-way array of `f64` in first-index-fastest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

/// A dense column-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::ShapeMismatch(
            "tensor needs at least one mode".into(),
        ));
    }
    if let Some(k) = dims.iter().position(|&n| n == 0) {
        return Err(Error::ShapeMismatch(format!("mode {k} has zero extent")));
    }
    Ok(dims.iter().product())
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

impl DenseTensor {
    /// Wraps `data` laid out in first-index-fastest order.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} need {len} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = check_dims(&dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_dims(&dims)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &dims);
        }
        Self::new(dims, data)
    }

    pub(crate) fn from_parts_unchecked(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, index: &[usize]) -> Result<usize> {
        linear_index(&self.dims, index)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.linear_index(index)?])
    }

    /// Reinterprets the buffer with new extents of equal product.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if len != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        Ok(Self {
            dims,
            data: self.data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn chebyshev_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_parts_unchecked(self.dims.clone(), data))
    }

    /// Relative Frobenius distance `‖self − other‖ / ‖self‖` (absolute when
    /// `self` is zero).
    pub fn relative_error(&self, approx: &DenseTensor) -> Result<f64> {
        let diff = self.sub(approx)?.frobenius_norm();
        let norm = self.frobenius_norm();
        Ok(if norm > 0.0 { diff / norm } else { diff })
    }

    /// Largest absolute cellwise difference.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        Ok(self.sub(other)?.chebyshev_norm())
    }
}

impl Matrix {
    /// Wraps column-major `data`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices, which reads naturally in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let mut data = vec![0.0; nrows * ncols];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[i + nrows * j] = v;
            }
        }
        Self::new(nrows, ncols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i + n * i] = 1.0;
        }
        m
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.rows * j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for j in 0..self.cols {
            for i in 0..self.rows {
                data[j + self.cols * i] = self.data[i + self.rows * j];
            }
        }
        Matrix::from_parts_unchecked(self.cols, self.rows, data)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for j in 0..other.cols {
            let dst = &mut out[j * self.rows..(j + 1) * self.rows];
            for (p, &b) in other.column(j).iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for (d, &a) in dst.iter_mut().zip(self.column(p)) {
                    *d += a * b;
                }
            }
        }
        Ok(Matrix::from_parts_unchecked(self.rows, other.cols, out))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Advances a first-index-fastest multi-index; wraps to all zeros at the end.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, n) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < *n {
            return;
        }
        *i = 0;
    }
}

pub(crate) fn linear_index(dims: &[usize], index: &[usize]) -> Result<usize> {
    if index.len() != dims.len() || index.iter().zip(dims).any(|(i, n)| i >= n) {
        return Err(Error::IndexOutOfRange {
            index: index.to_vec(),
            dims: dims.to_vec(),
        });
    }
    let mut lin = 0;
    let mut stride = 1;
    for (i, n) in index.iter().zip(dims) {
        lin += i * stride;
        stride *= n;
    }
    Ok(lin)
}

fn check_mode(order: usize, mode: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::ModeOutOfRange { mode, order });
    }
    Ok(())
}

/// Splits the extents around `mode` into (product before, extent, product after).
fn split_at_mode(dims: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = dims[..mode].iter().product();
    let right = dims[mode + 1..].iter().product();
    (left, dims[mode], right)
}

/// Mode-`mode` unfolding: an `n_mode × Π_{i≠mode} n_i` matrix whose columns
/// run over the remaining indices with the lowest mode varying fastest.
pub fn unfold(x: &DenseTensor, mode: usize) -> Result<Matrix> {
    check_mode(x.order(), mode)?;
    let (left, n, right) = split_at_mode(&x.dims, mode);
    let cols = left * right;
    let mut out = vec![0.0; x.len()];
    // x[l + left*(j + n*r)] -> out[j + n*(l + left*r)]
    for r in 0..right {
        for j in 0..n {
            let src = &x.data[left * (j + n * r)..left * (j + n * r + 1)];
            for (l, &v) in src.iter().enumerate() {
                out[j + n * (l + left * r)] = v;
            }
        }
    }
    Ok(Matrix::from_parts_unchecked(n, cols, out))
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
    let len = check_dims(dims)?;
    check_mode(dims.len(), mode)?;
    let (left, n, right) = split_at_mode(dims, mode);
    if m.rows != n || m.cols != left * right {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} matrix cannot fold along mode {mode} into {dims:?}",
            m.rows, m.cols
        )));
    }
    let mut out = vec![0.0; len];
    for r in 0..right {
        for j in 0..n {
            let dst = &mut out[left * (j + n * r)..left * (j + n * r + 1)];
            for (l, d) in dst.iter_mut().enumerate() {
                *d = m.data[j + n * (l + left * r)];
            }
        }
    }
    Ok(DenseTensor::from_parts_unchecked(dims.to_vec(), out))
}

/// Mode product `X ×_mode A`: the result's mode-`mode` unfolding is
/// `A · X_(mode)`, so extent `n_mode` is replaced by `A.rows()`.
pub fn mode_product(x: &DenseTensor, a: &Matrix, mode: usize) -> Result<DenseTensor> {
    check_mode(x.order(), mode)?;
    let (left, n, right) = split_at_mode(&x.dims, mode);
    if a.cols != n {
        return Err(Error::ShapeMismatch(format!(
            "mode {mode} has extent {n} but the matrix has {} columns",
            a.cols
        )));
    }
    let m = a.rows;
    let mut dims = x.dims.clone();
    dims[mode] = m;
    let mut out = vec![0.0; left * m * right];
    for r in 0..right {
        for j in 0..n {
            let src = &x.data[left * (j + n * r)..left * (j + n * r + 1)];
            for i in 0..m {
                let coef = a.data[i + m * j];
                if coef == 0.0 {
                    continue;
                }
                let dst = &mut out[left * (i + m * r)..left * (i + m * r + 1)];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += coef * s;
                }
            }
        }
    }
    Ok(DenseTensor::from_parts_unchecked(dims, out))
}

/// Mode product with the transpose, `X ×_mode Aᵀ`, without forming `Aᵀ`.
pub(crate) fn mode_product_transposed(
    x: &DenseTensor,
    a: &Matrix,
    mode: usize,
) -> Result<DenseTensor> {
    check_mode(x.order(), mode)?;
    let (left, n, right) = split_at_mode(&x.dims, mode);
    if a.rows != n {
        return Err(Error::ShapeMismatch(format!(
            "mode {mode} has extent {n} but the matrix has {} rows",
            a.rows
        )));
    }
    let m = a.cols;
    let mut dims = x.dims.clone();
    dims[mode] = m;
    let mut out = vec![0.0; left * m * right];
    for r in 0..right {
        for i in 0..m {
            let col = a.column(i);
            let dst = &mut out[left * (i + m * r)..left * (i + m * r + 1)];
            for (j, &coef) in col.iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                let src = &x.data[left * (j + n * r)..left * (j + n * r + 1)];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += coef * s;
                }
            }
        }
    }
    Ok(DenseTensor::from_parts_unchecked(dims, out))
}

/// `√(Σ x²)`.
pub fn frobenius_norm(x: &DenseTensor) -> f64 {
    x.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest absolute value over the cells selected by `defined` (all cells
/// when `None`).
pub fn chebyshev_norm(values: &[f64], defined: Option<&[bool]>) -> Result<f64> {
    let mut seen = false;
    let mut max = 0.0f64;
    match defined {
        Some(mask) => {
            if mask.len() != values.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} values but {} mask cells",
                    values.len(),
                    mask.len()
                )));
            }
            for (v, _) in values.iter().zip(mask).filter(|(_, &d)| d) {
                seen = true;
                max = max.max(v.abs());
            }
        }
        None => {
            for v in values {
                seen = true;
                max = max.max(v.abs());
            }
        }
    }
    if !seen {
        return Err(Error::EmptyDefinedSet);
    }
    Ok(max)
}

/// Keeps the entries at the given linear indices and zeroes the rest.
pub fn project_mask(x: &DenseTensor, omega: &[usize]) -> Result<DenseTensor> {
    let mut out = vec![0.0; x.len()];
    for &i in omega {
        if i >= x.len() {
            return Err(Error::IndexOutOfRange {
                index: vec![i],
                dims: vec![x.len()],
            });
        }
        out[i] = x.data[i];
    }
    Ok(DenseTensor::from_parts_unchecked(x.dims.clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counting(dims: &[usize]) -> DenseTensor {
        let len = dims.iter().product::<usize>();
        DenseTensor::new(dims.to_vec(), (0..len).map(|v| v as f64).collect()).unwrap()
    }

    fn lcg_tensor(dims: &[usize], seed: u64) -> DenseTensor {
        let mut s = seed;
        DenseTensor::from_fn(dims.to_vec(), |_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .unwrap()
    }

    #[test]
    fn unfold_vector_is_column() {
        let x = DenseTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let m = unfold(&x, 0).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 1));
        assert_eq!(m.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn unfold_two_by_two_by_two() {
        // x_{ijk} = 4i + 2j + k (zero-based)
        let x = DenseTensor::from_fn(vec![2, 2, 2], |ix| (4 * ix[0] + 2 * ix[1] + ix[2]) as f64)
            .unwrap();
        let m = unfold(&x, 0).unwrap();
        let expected = Matrix::from_rows(&[&[0.0, 2.0, 1.0, 3.0], &[4.0, 6.0, 5.0, 7.0]]).unwrap();
        assert_eq!(m, expected);

        let back = fold(&expected, 0, &[2, 2, 2]).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn fold_rejects_wrong_columns() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            fold(&m, 0, &[2, 2, 2]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn unfold_mode_out_of_range() {
        let x = counting(&[2, 3]);
        assert!(matches!(
            unfold(&x, 2),
            Err(Error::ModeOutOfRange { mode: 2, order: 2 })
        ));
    }

    #[test]
    fn fold_inverts_unfold_on_3x4x5() {
        let x = lcg_tensor(&[3, 4, 5], 1);
        for k in 0..3 {
            assert_eq!(fold(&unfold(&x, k).unwrap(), k, x.dims()).unwrap(), x);
        }
    }

    #[test]
    fn identity_mode_product_is_noop() {
        let x = lcg_tensor(&[3, 4, 2], 2);
        for k in 0..3 {
            let y = mode_product(&x, &Matrix::identity(x.dims()[k]), k).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn all_ones_mode_product() {
        let x = DenseTensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let a = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let y = mode_product(&x, &a, 0).unwrap();
        assert_eq!(y.as_slice(), &[2.0; 4]);
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let x = counting(&[2, 3]);
        assert!(mode_product(&x, &Matrix::zeros(4, 3), 0).is_err());
    }

    #[test]
    fn mode_products_commute_across_modes() {
        let x = lcg_tensor(&[3, 3, 3], 3);
        let a = unfold(&lcg_tensor(&[3, 3], 4), 0).unwrap();
        let b = unfold(&lcg_tensor(&[3, 3], 5), 0).unwrap();
        let ab = mode_product(&mode_product(&x, &a, 0).unwrap(), &b, 1).unwrap();
        let ba = mode_product(&mode_product(&x, &b, 1).unwrap(), &a, 0).unwrap();
        assert!(ab.relative_error(&ba).unwrap() < 1e-12);
    }

    #[test]
    fn transposed_product_matches_explicit_transpose() {
        let x = lcg_tensor(&[4, 3, 5], 6);
        let a = unfold(&lcg_tensor(&[3, 2], 7), 0).unwrap();
        let y1 = mode_product_transposed(&x, &a, 1).unwrap();
        let y2 = mode_product(&x, &a.transpose(), 1).unwrap();
        assert!(y1.relative_error(&y2).unwrap() < 1e-14);
    }

    #[test]
    fn frobenius_examples() {
        let ones = DenseTensor::new(vec![2, 3, 4], vec![1.0; 24]).unwrap();
        assert!((ones.frobenius_norm() - 24f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            DenseTensor::zeros(vec![3, 2]).unwrap().frobenius_norm(),
            0.0
        );
    }

    #[test]
    fn chebyshev_examples() {
        let v = [1.0, 99.0, -5.0];
        assert_eq!(chebyshev_norm(&v, Some(&[true, false, true])).unwrap(), 5.0);
        assert_eq!(chebyshev_norm(&[0.0; 4], None).unwrap(), 0.0);
        let x = lcg_tensor(&[3, 3], 8);
        assert_eq!(x.max_abs_diff(&x).unwrap(), 0.0);
        assert!(matches!(
            chebyshev_norm(&v, Some(&[false; 3])),
            Err(Error::EmptyDefinedSet)
        ));
    }

    #[test]
    fn project_mask_cases() {
        let x = lcg_tensor(&[3, 4], 9);
        let all: Vec<usize> = (0..12).collect();
        assert_eq!(project_mask(&x, &all).unwrap(), x);
        assert_eq!(project_mask(&x, &[]).unwrap().frobenius_norm(), 0.0);
        let omega = [0, 5, 7];
        let once = project_mask(&x, &omega).unwrap();
        assert_eq!(project_mask(&once, &omega).unwrap(), once);
        assert!(project_mask(&x, &[12]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            DenseTensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
    }

    fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..5, 1..=4)
    }

    proptest! {
        #[test]
        fn unfold_roundtrip_and_norm(dims in dims_strategy(), seed in any::<u64>()) {
            let x = lcg_tensor(&dims, seed);
            for k in 0..dims.len() {
                let m = unfold(&x, k).unwrap();
                prop_assert_eq!(&fold(&m, k, &dims).unwrap(), &x);
                let (a, b) = (m.frobenius_norm(), x.frobenius_norm());
                prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
            }
        }

        #[test]
        fn mode_product_is_matrix_product_of_unfolding(
            dims in dims_strategy(), rows in 1usize..4, seed in any::<u64>()
        ) {
            let x = lcg_tensor(&dims, seed);
            for (k, &n) in dims.iter().enumerate() {
                let a = unfold(&lcg_tensor(&[rows, n], seed ^ 0xabc), 0).unwrap();
                let y = mode_product(&x, &a, k).unwrap();
                let direct = a.matmul(&unfold(&x, k).unwrap()).unwrap();
                let yk = unfold(&y, k).unwrap();
                let diff: f64 = yk.as_slice().iter().zip(direct.as_slice())
                    .map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                prop_assert!(diff <= 1e-12 * direct.frobenius_norm().max(1e-300));
            }
        }

        #[test]
        fn repeated_mode_products_associate(
            dims in dims_strategy(), p in 1usize..4, q in 1usize..4, seed in any::<u64>()
        ) {
            let x = lcg_tensor(&dims, seed);
            let k = dims.len() - 1;
            let a = unfold(&lcg_tensor(&[p, dims[k]], seed.wrapping_add(1)), 0).unwrap();
            let b = unfold(&lcg_tensor(&[q, p], seed.wrapping_add(2)), 0).unwrap();
            let stepwise = mode_product(&mode_product(&x, &a, k).unwrap(), &b, k).unwrap();
            let fused = mode_product(&x, &b.matmul(&a).unwrap(), k).unwrap();
            let err = stepwise.sub(&fused).unwrap().frobenius_norm();
            prop_assert!(err <= 1e-12 * fused.frobenius_norm().max(1e-300));
        }
    }
}
