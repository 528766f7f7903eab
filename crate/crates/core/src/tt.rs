//! Tensor-train format.
//!
//! Carriage `k` is a 3-way array `r_{k-1} × n_k × r_k` (first index fastest)
//! with `r_0 = r_d = 1`, and
//!
//! ```text
//! X(i_0, …, i_{d-1}) = G_0(:, i_0, :) · G_1(:, i_1, :) ⋯ G_{d-1}(:, i_{d-1}, :)
//! ```
//!
//! TT-SVD sweeps left to right, peeling one mode per SVD. Because every
//! array here is first-index-fastest, each reshape in the sweep is a
//! reinterpretation of the same buffer.
//!
//! The quantized variant (QTT) first splits every mode into its prime
//! factors, e.g. a `8 × 8 × 20 × 8` block becomes
//! `2×2×2 · 2×2×2 · 2×2×5 · 2×2×2`, and then runs the same sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svd::{leading_columns, left_singular, retained_rank, Truncation};
use crate::tensor::{DenseTensor, Matrix};

/// First relative tolerance tried by [`tt_compress_abs`].
pub const HALVING_START_TOLERANCE: f64 = 1e-2;

/// Below this relative tolerance the halving loop gives up truncating and
/// keeps every singular value.
const HALVING_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtFactorization {
    carriages: Vec<DenseTensor>,
}

/// Either a rank cap per interior bond or a relative Frobenius tolerance.
#[derive(Debug, Clone, PartialEq)]
pub enum TtTarget {
    Tolerance(f64),
    Ranks(Vec<usize>),
}

impl TtFactorization {
    /// Checks that the carriages are 3-way, the outer ranks are 1 and
    /// adjacent ranks agree.
    pub fn from_carriages(carriages: Vec<DenseTensor>) -> Result<Self> {
        if carriages.is_empty() {
            return Err(Error::ShapeMismatch(
                "a tensor train needs a carriage".into(),
            ));
        }
        let mut prev = 1;
        for (k, g) in carriages.iter().enumerate() {
            let d = g.dims();
            if d.len() != 3 || d[0] != prev {
                return Err(Error::ShapeMismatch(format!(
                    "carriage {k} has dims {d:?}, expected leading rank {prev}"
                )));
            }
            prev = d[2];
        }
        if prev != 1 {
            return Err(Error::ShapeMismatch("trailing rank must be 1".into()));
        }
        Ok(Self { carriages })
    }

    pub fn carriages(&self) -> &[DenseTensor] {
        &self.carriages
    }

    pub fn dims(&self) -> Vec<usize> {
        self.carriages.iter().map(|g| g.dims()[1]).collect()
    }

    /// Interior ranks `r_1 … r_{d-1}`.
    pub fn ranks(&self) -> Vec<usize> {
        self.carriages[..self.carriages.len() - 1]
            .iter()
            .map(|g| g.dims()[2])
            .collect()
    }

    pub fn storage_count(&self) -> usize {
        self.carriages.iter().map(DenseTensor::len).sum()
    }

    /// One entry via `d − 1` vector–matrix products.
    pub fn element(&self, index: &[usize]) -> Result<f64> {
        let dims = self.dims();
        if index.len() != dims.len() || index.iter().zip(&dims).any(|(i, n)| i >= n) {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                dims,
            });
        }
        let mut row = vec![1.0];
        for (g, &i) in self.carriages.iter().zip(index) {
            let [a, n, b] = [g.dims()[0], g.dims()[1], g.dims()[2]];
            let data = g.as_slice();
            debug_assert_eq!(row.len(), a);
            row = (0..b)
                .map(|beta| {
                    let slice = &data[a * (i + n * beta)..a * (i + n * beta + 1)];
                    row.iter().zip(slice).map(|(w, v)| w * v).sum()
                })
                .collect();
        }
        Ok(row[0])
    }

    /// Full dense evaluation.
    pub fn reconstruct(&self) -> DenseTensor {
        let first = &self.carriages[0];
        let mut acc = Matrix::from_parts_unchecked(
            first.dims()[1],
            first.dims()[2],
            first.as_slice().to_vec(),
        );
        for g in &self.carriages[1..] {
            let [a, n, b] = [g.dims()[0], g.dims()[1], g.dims()[2]];
            let next = Matrix::from_parts_unchecked(a, n * b, g.as_slice().to_vec());
            let prod = acc.matmul(&next).expect("adjacent ranks agree");
            let rows = prod.rows() * n;
            acc = Matrix::from_parts_unchecked(rows, b, prod.into_vec());
        }
        DenseTensor::from_parts_unchecked(self.dims(), acc.into_vec())
    }
}

/// TT-SVD. With a tolerance `ε`, each of the `d − 1` truncations discards
/// at most `δ = ε‖X‖_F / √(d−1)` in Frobenius norm, so the total error is at
/// most `ε‖X‖_F`. Rank requests above the unfolding bound are clipped.
pub fn ttsvd(x: &DenseTensor, target: &TtTarget) -> Result<TtFactorization> {
    let dims = x.dims().to_vec();
    let d = dims.len();
    let delta = match target {
        TtTarget::Tolerance(eps) => {
            if !(*eps >= 0.0) || !eps.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "relative tolerance {eps} must be nonnegative"
                )));
            }
            let denom = ((d.max(2) - 1) as f64).sqrt();
            Some(eps * x.frobenius_norm() / denom)
        }
        TtTarget::Ranks(r) => {
            if r.len() + 1 != d {
                return Err(Error::ShapeMismatch(format!(
                    "{} ranks for a {d}-way tensor (need {})",
                    r.len(),
                    d - 1
                )));
            }
            if r.contains(&0) {
                return Err(Error::InvalidArgument("TT ranks must be positive".into()));
            }
            None
        }
    };

    let mut carriages = Vec::with_capacity(d);
    let mut rest = x.as_slice().to_vec();
    let mut prev = 1usize;
    for (k, &n) in dims[..d - 1].iter().enumerate() {
        let rows = prev * n;
        let cols = rest.len() / rows;
        let m = Matrix::from_parts_unchecked(rows, cols, rest);
        let (u_full, s) = left_singular(&m, Truncation::Full)?;
        let r = match (&delta, target) {
            (Some(delta), _) => retained_rank(&s, Truncation::TailNorm(*delta))?,
            (None, TtTarget::Ranks(req)) => req[k].min(s.len()),
            _ => unreachable!(),
        };
        let u = leading_columns(&u_full, r);
        // Remainder Uᵀ M equals diag(S) Vᵀ restricted to the kept triplets.
        rest = u.transpose().matmul(&m)?.into_vec();
        carriages.push(DenseTensor::from_parts_unchecked(
            vec![prev, n, r],
            u.into_vec(),
        ));
        prev = r;
    }
    carriages.push(DenseTensor::from_parts_unchecked(
        vec![prev, dims[d - 1], 1],
        rest,
    ));
    TtFactorization::from_carriages(carriages)
}

pub fn tt_element(f: &TtFactorization, index: &[usize]) -> Result<f64> {
    f.element(index)
}

pub fn tt_reconstruct(f: &TtFactorization) -> DenseTensor {
    f.reconstruct()
}

/// Stored elements `Σ_k r_{k-1} n_k r_k` with `r_0 = r_d = 1`.
pub fn tt_storage_count(ranks: &[usize], dims: &[usize]) -> usize {
    let mut prev = 1;
    let mut total = 0;
    for (k, &n) in dims.iter().enumerate() {
        let next = ranks.get(k).copied().unwrap_or(1);
        total += prev * n * next;
        prev = next;
    }
    total
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    if n <= 1 {
        return vec![1];
    }
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Prime factors of every extent, ascending within a mode. Extent 1 keeps a
/// single factor `[1]` so the mode count is preserved.
pub fn qtt_factorize_modes(dims: &[usize]) -> Vec<Vec<usize>> {
    dims.iter().map(|&n| prime_factors(n)).collect()
}

/// A tensor train over reshaped ("virtual") modes together with the record
/// of how each original mode was split. Plain TT is the case where every
/// mode is its own single factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QttFactorization {
    tt: TtFactorization,
    mode_factors: Vec<Vec<usize>>,
}

impl QttFactorization {
    pub fn from_parts(tt: TtFactorization, mode_factors: Vec<Vec<usize>>) -> Result<Self> {
        let flat: Vec<usize> = mode_factors.iter().flatten().copied().collect();
        if flat != tt.dims() {
            return Err(Error::ShapeMismatch(format!(
                "mode factors {mode_factors:?} do not match train dims {:?}",
                tt.dims()
            )));
        }
        Ok(Self { tt, mode_factors })
    }

    pub fn tt(&self) -> &TtFactorization {
        &self.tt
    }

    pub fn mode_factors(&self) -> &[Vec<usize>] {
        &self.mode_factors
    }

    /// Extents of the original (unreshaped) tensor.
    pub fn dims(&self) -> Vec<usize> {
        self.mode_factors
            .iter()
            .map(|f| f.iter().product())
            .collect()
    }

    pub fn is_quantized(&self) -> bool {
        self.mode_factors.iter().any(|f| f.len() > 1)
    }

    pub fn storage_count(&self) -> usize {
        self.tt.storage_count()
    }

    pub fn reconstruct(&self) -> DenseTensor {
        let full = self.tt.reconstruct();
        full.reshape(self.dims()).expect("factor products match")
    }
}

fn reshaped_ttsvd(
    x: &DenseTensor,
    factors: Vec<Vec<usize>>,
    eps_rel: f64,
) -> Result<QttFactorization> {
    let flat: Vec<usize> = factors.iter().flatten().copied().collect();
    let virt = x.clone().reshape(flat)?;
    let tt = ttsvd(&virt, &TtTarget::Tolerance(eps_rel))?;
    QttFactorization::from_parts(tt, factors)
}

/// Reshape into prime-factor modes and run TT-SVD at relative tolerance
/// `eps_rel`.
pub fn qtt_compress(x: &DenseTensor, eps_rel: f64) -> Result<QttFactorization> {
    if !(eps_rel > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "relative tolerance {eps_rel} must be positive"
        )));
    }
    reshaped_ttsvd(x, qtt_factorize_modes(x.dims()), eps_rel)
}

/// Halves the relative Frobenius tolerance, starting from `1e-2`, until the
/// Chebyshev error is within `eps_max`. With `quantized` the modes are first
/// split into prime factors.
pub fn tt_compress_abs(x: &DenseTensor, eps_max: f64, quantized: bool) -> Result<QttFactorization> {
    if !(eps_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "error budget {eps_max} must be positive"
        )));
    }
    let factors = if quantized {
        qtt_factorize_modes(x.dims())
    } else {
        x.dims().iter().map(|&n| vec![n]).collect()
    };
    let mut eps_rel = HALVING_START_TOLERANCE;
    loop {
        let f = reshaped_ttsvd(x, factors.clone(), eps_rel)?;
        if x.max_abs_diff(&f.reconstruct())? <= eps_max {
            return Ok(f);
        }
        if eps_rel < HALVING_FLOOR {
            return reshaped_ttsvd(x, factors, 0.0);
        }
        eps_rel /= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::{random_dense, random_tt};
    use proptest::prelude::*;

    #[test]
    fn separable_tensor_has_unit_ranks() {
        let a = [1.0, 2.0, -1.0];
        let b = [0.5, 4.0];
        let c = [3.0, -2.0, 1.0, 0.25];
        let x = DenseTensor::from_fn(vec![3, 2, 4], |i| a[i[0]] * b[i[1]] * c[i[2]]).unwrap();
        let f = ttsvd(&x, &TtTarget::Tolerance(1e-12)).unwrap();
        assert_eq!(f.ranks(), vec![1, 1]);
        assert!(x.relative_error(&f.reconstruct()).unwrap() < 1e-10);
    }

    #[test]
    fn exact_tt_rank_recovered() {
        let x = random_tt(&[16, 16, 16], &[2, 3], 4).unwrap();
        let f = ttsvd(&x, &TtTarget::Ranks(vec![2, 3])).unwrap();
        assert_eq!(f.ranks(), vec![2, 3]);
        assert!(x.relative_error(&tt_reconstruct(&f)).unwrap() <= 1e-10);
    }

    #[test]
    fn tolerance_contract_on_noise() {
        let x = random_dense(&[6, 5, 7, 4], 12).unwrap();
        let f = ttsvd(&x, &TtTarget::Tolerance(1e-3)).unwrap();
        assert!(x.relative_error(&f.reconstruct()).unwrap() <= 1e-3);
    }

    #[test]
    fn rank_requests_are_clipped() {
        let x = random_dense(&[2, 3, 4], 1).unwrap();
        let f = ttsvd(&x, &TtTarget::Ranks(vec![50, 50])).unwrap();
        assert_eq!(f.ranks(), vec![2, 4]);
        assert!(x.relative_error(&f.reconstruct()).unwrap() < 1e-12);
        assert!(ttsvd(&x, &TtTarget::Ranks(vec![1])).is_err());
    }

    #[test]
    fn single_mode_train() {
        let x = random_dense(&[5], 3).unwrap();
        let f = ttsvd(&x, &TtTarget::Tolerance(0.1)).unwrap();
        assert_eq!(f.ranks(), Vec::<usize>::new());
        assert_eq!(f.reconstruct(), x);
    }

    #[test]
    fn unit_rank_element() {
        let u = [1.0, 2.0];
        let v = [3.0, -1.0, 0.5];
        let w = [2.0, 4.0];
        let f = TtFactorization::from_carriages(vec![
            DenseTensor::new(vec![1, 2, 1], u.to_vec()).unwrap(),
            DenseTensor::new(vec![1, 3, 1], v.to_vec()).unwrap(),
            DenseTensor::new(vec![1, 2, 1], w.to_vec()).unwrap(),
        ])
        .unwrap();
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                for (k, wk) in w.iter().enumerate() {
                    assert_eq!(f.element(&[i, j, k]).unwrap(), ui * vj * wk);
                }
            }
        }
        assert!(f.element(&[2, 0, 0]).is_err());
    }

    #[test]
    fn zero_train() {
        let f = TtFactorization::from_carriages(vec![
            DenseTensor::zeros(vec![1, 3, 2]).unwrap(),
            DenseTensor::zeros(vec![2, 4, 1]).unwrap(),
        ])
        .unwrap();
        assert_eq!(f.element(&[1, 2]).unwrap(), 0.0);
        assert_eq!(f.reconstruct().frobenius_norm(), 0.0);
    }

    #[test]
    fn inconsistent_carriages_rejected() {
        assert!(TtFactorization::from_carriages(vec![
            DenseTensor::zeros(vec![1, 3, 2]).unwrap(),
            DenseTensor::zeros(vec![3, 4, 1]).unwrap(),
        ])
        .is_err());
    }

    #[test]
    fn storage_counts() {
        assert_eq!(tt_storage_count(&[16, 53, 13], &[62, 199, 20, 256]), 186852);
        assert_eq!(tt_storage_count(&[1, 1], &[4, 5, 6]), 15);
        assert_eq!(tt_storage_count(&[2], &[3, 4]), 14);
    }

    #[test]
    fn mode_factorization() {
        assert_eq!(
            qtt_factorize_modes(&[8, 8, 20, 8]),
            vec![vec![2, 2, 2], vec![2, 2, 2], vec![2, 2, 5], vec![2, 2, 2]]
        );
        assert_eq!(qtt_factorize_modes(&[7]), vec![vec![7]]);
        assert_eq!(qtt_factorize_modes(&[12]), vec![vec![2, 2, 3]]);
        assert_eq!(qtt_factorize_modes(&[1, 9]), vec![vec![1], vec![3, 3]]);
    }

    #[test]
    fn qtt_of_constant_has_unit_ranks() {
        let x = DenseTensor::new(vec![8, 8], vec![1.0; 64]).unwrap();
        let f = qtt_compress(&x, 1e-10).unwrap();
        assert_eq!(f.tt().dims(), vec![2; 6]);
        assert_eq!(f.tt().ranks(), vec![1; 5]);
        assert!(x.relative_error(&f.reconstruct()).unwrap() < 1e-12);
    }

    #[test]
    fn qtt_roundtrip_tolerance() {
        let x = random_dense(&[8, 8, 20, 8], 31).unwrap();
        let f = qtt_compress(&x, 1e-8).unwrap();
        assert_eq!(f.dims(), vec![8, 8, 20, 8]);
        assert!(x.relative_error(&f.reconstruct()).unwrap() <= 1e-8);
    }

    #[test]
    fn abs_loop_huge_budget_first_iterate() {
        let x = random_dense(&[4, 5, 6], 2).unwrap();
        let f = tt_compress_abs(&x, 1e9, false).unwrap();
        let first = ttsvd(&x, &TtTarget::Tolerance(HALVING_START_TOLERANCE)).unwrap();
        assert_eq!(f.tt(), &first);
        assert!(!f.is_quantized());
    }

    #[test]
    fn abs_loop_exact_rank() {
        let x = random_tt(&[6, 7, 8, 5], &[2, 3, 2], 77).unwrap();
        for q in [false, true] {
            let f = tt_compress_abs(&x, 1e-6, q).unwrap();
            assert!(x.max_abs_diff(&f.reconstruct()).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn abs_loop_unreachable_budget_terminates() {
        let x = random_dense(&[3, 4, 2], 5).unwrap();
        let f = tt_compress_abs(&x, 1e-300, true).unwrap();
        assert!(x.relative_error(&f.reconstruct()).unwrap() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ttsvd_tolerance_and_rank_bounds(
            dims in prop::collection::vec(1usize..6, 2..=4),
            seed in any::<u64>(),
            tol in prop::sample::select(vec![1e-1, 1e-2, 1e-4]),
        ) {
            let x = random_dense(&dims, seed).unwrap();
            let f = ttsvd(&x, &TtTarget::Tolerance(tol)).unwrap();
            prop_assert!(x.relative_error(&f.reconstruct()).unwrap() <= tol);
            for (k, &r) in f.ranks().iter().enumerate() {
                let left: usize = dims[..=k].iter().product();
                let right: usize = dims[k + 1..].iter().product();
                prop_assert!(r <= left.min(right));
            }
        }

        #[test]
        fn element_matches_reconstruction(
            dims in prop::collection::vec(1usize..5, 2..=4),
            seed in any::<u64>(),
        ) {
            let x = random_dense(&dims, seed).unwrap();
            let f = ttsvd(&x, &TtTarget::Tolerance(0.2)).unwrap();
            let full = f.reconstruct();
            let mut idx = vec![0; dims.len()];
            for lin in 0..full.len() {
                let v = f.element(&idx).unwrap();
                let w = full.as_slice()[lin];
                prop_assert!((v - w).abs() <= 1e-10 * w.abs().max(1.0));
                crate::tensor::increment(&mut idx, &dims);
            }
        }
    }
}
