//! Deterministic truncated SVD.
//!
//! The factorization itself comes from faer, run sequentially, which returns
//! singular values in nonincreasing order. On top of it this module fixes
//! the sign of every singular pair: each
//! left singular vector is flipped so that its largest-magnitude entry is
//! positive, the first such entry winning ties. Identical inputs therefore
//! give bit-identical factors, which keeps archives reproducible.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::svd::{self as faer_svd, ComputeSvdVectors};
use faer::{Mat, MatRef, Par};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// How many singular triplets to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Keep everything (`min(rows, cols)` triplets).
    Full,
    /// Keep exactly this many.
    Rank(usize),
    /// Keep every `σ_i` with `σ_i / σ_1 ≥ τ`, and at least one.
    Threshold(f64),
    /// Keep the fewest triplets whose discarded tail satisfies
    /// `√(Σ_{i>r} σ_i²) ≤ δ`, and at least one.
    TailNorm(f64),
}

/// `M ≈ U · diag(S) · Vᵀ` with orthonormal columns in `U` and rows in `Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U · diag(S) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let r = self.s.len();
        let (m, n) = (self.u.rows(), self.vt.cols());
        let mut out = vec![0.0; m * n];
        for j in 0..n {
            let dst = &mut out[j * m..(j + 1) * m];
            for p in 0..r {
                let c = self.s[p] * self.vt.get(p, j);
                if c == 0.0 {
                    continue;
                }
                for (d, &u) in dst.iter_mut().zip(self.u.column(p)) {
                    *d += c * u;
                }
            }
        }
        Matrix::from_parts_unchecked(m, n, out)
    }
}

/// Number of singular values retained by `trunc` out of the full,
/// nonincreasing spectrum `s`.
pub fn retained_rank(s: &[f64], trunc: Truncation) -> Result<usize> {
    let full = s.len();
    match trunc {
        Truncation::Full => Ok(full),
        Truncation::Rank(r) => {
            if r == 0 || r > full {
                return Err(Error::RankOutOfRange {
                    mode: 0,
                    rank: r,
                    max: full,
                });
            }
            Ok(r)
        }
        Truncation::Threshold(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "threshold {tau} outside (0, 1]"
                )));
            }
            let top = s.first().copied().unwrap_or(0.0);
            if top <= 0.0 {
                return Ok(1.min(full));
            }
            Ok(s.iter().take_while(|&&v| v / top >= tau).count().max(1))
        }
        Truncation::TailNorm(delta) => {
            if !(delta >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "tail tolerance {delta} must be nonnegative"
                )));
            }
            let budget = delta * delta;
            let mut tail = 0.0;
            let mut r = full;
            while r > 1 {
                let next = tail + s[r - 1] * s[r - 1];
                if next > budget {
                    break;
                }
                tail = next;
                r -= 1;
            }
            Ok(r)
        }
    }
}

/// Thin SVD with the sign convention applied. `Vᵀ` is only formed when
/// `want_vt` is set.
pub(crate) fn thin_svd(m: &Matrix, want_vt: bool) -> Result<(Matrix, Vec<f64>, Option<Matrix>)> {
    let (rows, cols) = (m.rows(), m.cols());
    let k = rows.min(cols);
    let a = MatRef::from_column_major_slice(m.as_slice(), rows, cols);
    let mut s = Diag::<f64>::zeros(k);
    let mut u = Mat::<f64>::zeros(rows, k);
    let mut v = Mat::<f64>::zeros(if want_vt { cols } else { 0 }, if want_vt { k } else { 0 });
    let compute_v = if want_vt {
        ComputeSvdVectors::Thin
    } else {
        ComputeSvdVectors::No
    };
    // Sequential on purpose: results must not depend on thread scheduling.
    let par = Par::Seq;
    let scratch = faer_svd::svd_scratch::<f64>(
        rows,
        cols,
        ComputeSvdVectors::Thin,
        compute_v,
        par,
        Default::default(),
    );
    faer_svd::svd(
        a,
        s.as_mut(),
        Some(u.as_mut()),
        want_vt.then_some(v.as_mut()),
        par,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::InvalidArgument(format!("SVD did not converge: {e:?}")))?;

    let sv: Vec<f64> = s.column_vector().iter().map(|&x| x.max(0.0)).collect();
    let mut u_out = vec![0.0; rows * k];
    let mut vt_out = want_vt.then(|| vec![0.0; k * cols]);
    for p in 0..k {
        let col = u.col(p);
        let mut best = 0;
        for i in 0..rows {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..rows {
            u_out[i + rows * p] = sign * col[i];
        }
        if let Some(vt) = vt_out.as_mut() {
            for j in 0..cols {
                vt[p + k * j] = sign * v[(j, p)];
            }
        }
    }
    Ok((
        Matrix::from_parts_unchecked(rows, k, u_out),
        sv,
        vt_out.map(|vt| Matrix::from_parts_unchecked(k, cols, vt)),
    ))
}

/// Extends orthonormal columns to a full `n × n` basis by Gram–Schmidt
/// against the unit vectors, taken in index order.
pub(crate) fn complete_basis(u: &Matrix) -> Matrix {
    let n = u.rows();
    let mut cols: Vec<Vec<f64>> = (0..u.cols()).map(|j| u.column(j).to_vec()).collect();
    let mut e = 0;
    while cols.len() < n && e < n {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    let k = cols.len();
    Matrix::from_parts_unchecked(n, k, cols.concat())
}

/// Keeps the first `r` columns of a column-major matrix.
pub(crate) fn leading_columns(m: &Matrix, r: usize) -> Matrix {
    Matrix::from_parts_unchecked(m.rows(), r, m.as_slice()[..m.rows() * r].to_vec())
}

/// Keeps the first `r` rows of a column-major matrix.
pub(crate) fn leading_rows(m: &Matrix, r: usize) -> Matrix {
    let mut out = Vec::with_capacity(r * m.cols());
    for j in 0..m.cols() {
        out.extend_from_slice(&m.column(j)[..r]);
    }
    Matrix::from_parts_unchecked(r, m.cols(), out)
}

/// Truncated SVD of `m`.
pub fn truncated_svd(m: &Matrix, trunc: Truncation) -> Result<SvdResult> {
    let (u, s, vt) = thin_svd(m, true)?;
    let r = retained_rank(&s, trunc)?;
    let vt = vt.expect("requested");
    Ok(SvdResult {
        u: leading_columns(&u, r),
        s: s[..r].to_vec(),
        vt: leading_rows(&vt, r),
    })
}

/// Leading left singular vectors and the full spectrum, skipping `Vᵀ`.
pub(crate) fn left_singular(m: &Matrix, trunc: Truncation) -> Result<(Matrix, Vec<f64>)> {
    let (u, s, _) = thin_svd(m, false)?;
    let r = retained_rank(&s, trunc)?;
    Ok((leading_columns(&u, r), s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn orthonormality_defect(u: &Matrix) -> f64 {
        let g = u.transpose().matmul(u).unwrap();
        let mut worst = 0.0f64;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - target).abs());
            }
        }
        worst
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = seed | 1;
        let data = (0..rows * cols)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn rank_one_two_by_two() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        let full = truncated_svd(&m, Truncation::Full).unwrap();
        assert!((full.s[0] - 5.0).abs() < 1e-12);
        assert!(full.s[1].abs() < 1e-12);
        let r1 = truncated_svd(&m, Truncation::Rank(1)).unwrap();
        let back = r1.reconstruct();
        for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_spectrum() {
        let r = truncated_svd(&Matrix::identity(3), Truncation::Rank(3)).unwrap();
        for s in &r.s {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_counts_normalized_values() {
        let m =
            Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1e-2, 0.0], &[0.0, 0.0, 1e-6]]).unwrap();
        let r = truncated_svd(&m, Truncation::Threshold(1e-3)).unwrap();
        assert_eq!(r.rank(), 2);
    }

    #[test]
    fn rank_out_of_range() {
        let m = Matrix::identity(3);
        assert!(matches!(
            truncated_svd(&m, Truncation::Rank(4)),
            Err(Error::RankOutOfRange { .. })
        ));
        assert!(truncated_svd(&m, Truncation::Rank(0)).is_err());
    }

    #[test]
    fn zero_matrix_keeps_one() {
        let r = truncated_svd(&Matrix::zeros(3, 4), Truncation::Threshold(0.5)).unwrap();
        assert_eq!(r.rank(), 1);
        assert_eq!(r.s[0], 0.0);
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let m = random_matrix(7, 5, 3);
        let r = truncated_svd(&m, Truncation::Full).unwrap();
        for p in 0..r.rank() {
            let col = r.u.column(p);
            let big = col
                .iter()
                .fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn tail_norm_rule() {
        let s = [4.0, 3.0, 0.4, 0.3];
        // tail {0.3} = 0.3, tail {0.4,0.3} = 0.5, tail {3,0.4,0.3} > 3
        assert_eq!(retained_rank(&s, Truncation::TailNorm(0.5)).unwrap(), 2);
        assert_eq!(retained_rank(&s, Truncation::TailNorm(0.49)).unwrap(), 3);
        assert_eq!(retained_rank(&s, Truncation::TailNorm(0.0)).unwrap(), 4);
        assert_eq!(retained_rank(&s, Truncation::TailNorm(100.0)).unwrap(), 1);
    }

    proptest! {
        #[test]
        fn svd_contract(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>(), cut in 0usize..12) {
            let m = random_matrix(rows, cols, seed);
            let full = truncated_svd(&m, Truncation::Full).unwrap();
            prop_assert!(orthonormality_defect(&full.u) < 1e-10);
            prop_assert!(orthonormality_defect(&full.vt.transpose()) < 1e-10);
            prop_assert!(full.s.windows(2).all(|w| w[0] >= w[1]));
            let back = full.reconstruct();
            let err: f64 = back.as_slice().iter().zip(m.as_slice())
                .map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-8 * m.frobenius_norm());

            let r = 1 + cut % full.rank();
            let t = truncated_svd(&m, Truncation::Rank(r)).unwrap();
            let back = t.reconstruct();
            let err: f64 = back.as_slice().iter().zip(m.as_slice())
                .map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let tail = full.s[r..].iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((err - tail).abs() <= 1e-8 * m.frobenius_norm().max(tail));

            let again = truncated_svd(&m, Truncation::Full).unwrap();
            prop_assert_eq!(again, full);
        }

        #[test]
        fn rank_deficient_products_reconstruct(
            rows in 1usize..80,
            cols in 1usize..80,
            inner in 1usize..4,
            seed in any::<u64>(),
        ) {
            let m = random_matrix(rows, inner, seed)
                .matmul(&random_matrix(inner, cols, seed ^ 1))
                .unwrap();
            let r = inner.min(rows).min(cols);
            let t = truncated_svd(&m, Truncation::Rank(r)).unwrap();
            let back = t.reconstruct();
            let err: f64 = back.as_slice().iter().zip(m.as_slice())
                .map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-10 * m.frobenius_norm().max(1.0));
        }
    }
}
