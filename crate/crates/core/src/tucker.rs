//! Tucker format: HOSVD, threshold-based rank selection, reconstruction,
//! storage accounting and the rank-escalation loop that meets an absolute
//! (Chebyshev) error budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svd::{complete_basis, leading_columns, left_singular, retained_rank, Truncation};
use crate::tensor::{mode_product, mode_product_transposed, unfold, DenseTensor, Matrix};

/// Normalized singular-value threshold for the first escalation iterate.
pub const ESCALATION_START_THRESHOLD: f64 = 1e-2;

/// `X ≈ G ×₀ U₀ ×₁ U₁ ⋯` with orthonormal factor columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerFactorization {
    core: DenseTensor,
    factors: Vec<Matrix>,
}

impl TuckerFactorization {
    /// Assembles a factorization, checking that factor `k` is
    /// `n_k × core.dims()[k]`.
    pub fn from_parts(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(Error::ShapeMismatch(format!(
                "{} factors for a {}-way core",
                factors.len(),
                core.order()
            )));
        }
        for (k, (u, &r)) in factors.iter().zip(core.dims()).enumerate() {
            if u.cols() != r || u.rows() == 0 {
                return Err(Error::ShapeMismatch(format!(
                    "factor {k} is {}x{}, core rank is {r}",
                    u.rows(),
                    u.cols()
                )));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.core.dims().to_vec()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    pub fn storage_count(&self) -> usize {
        tucker_storage_count(&self.ranks(), &self.dims())
    }

    pub fn reconstruct(&self) -> DenseTensor {
        let mut x = self.core.clone();
        for (k, u) in self.factors.iter().enumerate() {
            x = mode_product(&x, u, k).expect("shapes checked at construction");
        }
        x
    }
}

/// Per-mode left singular vectors and spectra of every unfolding. HOSVD at
/// any rank tuple is a truncation of this, so escalation loops compute it
/// once.
#[derive(Debug, Clone)]
pub struct ModeSpectra {
    bases: Vec<Matrix>,
    spectra: Vec<Vec<f64>>,
}

impl ModeSpectra {
    pub fn new(x: &DenseTensor) -> Result<Self> {
        let mut bases = Vec::with_capacity(x.order());
        let mut spectra = Vec::with_capacity(x.order());
        for k in 0..x.order() {
            let (mut u, mut s) = left_singular(&unfold(x, k)?, Truncation::Full)?;
            // Unfoldings with fewer columns than rows still admit ranks up
            // to n_k; the extra directions carry zero singular values.
            if u.cols() < u.rows() {
                u = complete_basis(&u);
                s.resize(u.cols(), 0.0);
            }
            bases.push(u);
            spectra.push(s);
        }
        Ok(Self { bases, spectra })
    }

    /// Singular values of the mode-`k` unfolding, nonincreasing.
    pub fn spectrum(&self, k: usize) -> &[f64] {
        &self.spectra[k]
    }

    /// Per-mode ranks retained by a normalized threshold `τ`.
    pub fn threshold_ranks(&self, tau: f64) -> Result<Vec<usize>> {
        self.spectra
            .iter()
            .map(|s| retained_rank(s, Truncation::Threshold(tau)))
            .collect()
    }

    /// Upper bound on the HOSVD error: `√(Σ_k Σ_{i>r_k} σ_{k,i}²)`.
    pub fn discarded_norm(&self, ranks: &[usize]) -> f64 {
        self.spectra
            .iter()
            .zip(ranks)
            .map(|(s, &r)| s.iter().skip(r).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// HOSVD of `x` at `ranks`, reusing the precomputed bases.
    pub fn factorize(&self, x: &DenseTensor, ranks: &[usize]) -> Result<TuckerFactorization> {
        check_ranks(x.dims(), ranks)?;
        let factors: Vec<Matrix> = self
            .bases
            .iter()
            .zip(ranks)
            .map(|(u, &r)| leading_columns(u, r))
            .collect();
        let mut core = x.clone();
        for (k, u) in factors.iter().enumerate() {
            core = mode_product_transposed(&core, u, k)?;
        }
        TuckerFactorization::from_parts(core, factors)
    }
}

fn check_ranks(dims: &[usize], ranks: &[usize]) -> Result<()> {
    if ranks.len() != dims.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ranks for a {}-way tensor",
            ranks.len(),
            dims.len()
        )));
    }
    for (k, (&r, &n)) in ranks.iter().zip(dims).enumerate() {
        if r == 0 || r > n {
            return Err(Error::RankOutOfRange {
                mode: k,
                rank: r,
                max: n,
            });
        }
    }
    Ok(())
}

/// Truncated HOSVD: factors are the `r_k` leading left singular vectors of
/// each unfolding, the core is `X ×₀ U₀ᵀ ⋯ ×_{d-1} U_{d-1}ᵀ`.
pub fn hosvd(x: &DenseTensor, ranks: &[usize]) -> Result<TuckerFactorization> {
    check_ranks(x.dims(), ranks)?;
    ModeSpectra::new(x)?.factorize(x, ranks)
}

/// HOSVD with per-mode ranks chosen as the number of singular values with
/// `σ_i / σ_1 ≥ τ`.
pub fn hosvd_tol(x: &DenseTensor, tau: f64) -> Result<TuckerFactorization> {
    let spectra = ModeSpectra::new(x)?;
    let ranks = spectra.threshold_ranks(tau)?;
    spectra.factorize(x, &ranks)
}

pub fn tucker_reconstruct(f: &TuckerFactorization) -> DenseTensor {
    f.reconstruct()
}

/// Stored elements: `Π r_k + Σ n_k r_k`.
pub fn tucker_storage_count(ranks: &[usize], dims: &[usize]) -> usize {
    ranks.iter().product::<usize>() + dims.iter().zip(ranks).map(|(n, r)| n * r).sum::<usize>()
}

/// One escalation step: `r ← min(n, r + max(1, ⌈r/10⌉))` in every mode.
pub fn escalate_ranks(ranks: &[usize], dims: &[usize]) -> Vec<usize> {
    ranks
        .iter()
        .zip(dims)
        .map(|(&r, &n)| n.min(r + r.div_ceil(10).max(1)))
        .collect()
}

/// Smallest Tucker approximation found by escalating ranks from the
/// `τ = 1e-2` threshold ranks until the Chebyshev error is within `eps_max`.
/// Returns full ranks if nothing smaller fits.
pub fn tucker_compress_abs(x: &DenseTensor, eps_max: f64) -> Result<TuckerFactorization> {
    if !(eps_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "error budget {eps_max} must be positive"
        )));
    }
    let spectra = ModeSpectra::new(x)?;
    let mut ranks = spectra.threshold_ranks(ESCALATION_START_THRESHOLD)?;
    loop {
        let f = spectra.factorize(x, &ranks)?;
        let err = x.max_abs_diff(&f.reconstruct())?;
        if err <= eps_max || ranks == x.dims() {
            return Ok(f);
        }
        ranks = escalate_ranks(&ranks, x.dims());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::{random_dense, random_tucker};
    use proptest::prelude::*;

    fn orthonormal(u: &Matrix) -> bool {
        let g = u.transpose().matmul(u).unwrap();
        (0..g.rows()).all(|i| {
            (0..g.cols()).all(|j| (g.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10)
        })
    }

    #[test]
    fn rank_one_outer_product_is_exact() {
        let a = [1.0, -2.0, 0.5];
        let b = [3.0, 1.0];
        let c = [0.2, 0.4, -1.0, 2.0];
        let x = DenseTensor::from_fn(vec![3, 2, 4], |i| a[i[0]] * b[i[1]] * c[i[2]]).unwrap();
        let f = hosvd(&x, &[1, 1, 1]).unwrap();
        assert!(x.relative_error(&f.reconstruct()).unwrap() < 1e-10);
    }

    #[test]
    fn exact_multilinear_rank_recovered() {
        let x = random_tucker(&[20, 20, 10, 16], &[3, 4, 2, 5], 11).unwrap();
        let f = hosvd(&x, &[3, 4, 2, 5]).unwrap();
        assert!(x.relative_error(&tucker_reconstruct(&f)).unwrap() <= 1e-10);
        for u in f.factors() {
            assert!(orthonormal(u));
        }
        // numerical ranks of the unfoldings match the construction
        let spectra = ModeSpectra::new(&x).unwrap();
        for (k, &r) in [3, 4, 2, 5].iter().enumerate() {
            let s = spectra.spectrum(k);
            assert_eq!(s.iter().filter(|&&v| v / s[0] > 1e-10).count(), r);
        }
    }

    #[test]
    fn full_ranks_are_exact() {
        let x = random_dense(&[4, 3, 5], 2).unwrap();
        let f = hosvd(&x, &[4, 3, 5]).unwrap();
        assert!(x.relative_error(&f.reconstruct()).unwrap() <= 1e-8);
    }

    #[test]
    fn rank_out_of_range_rejected() {
        let x = random_dense(&[4, 3], 2).unwrap();
        assert!(matches!(
            hosvd(&x, &[5, 1]),
            Err(Error::RankOutOfRange { mode: 0, .. })
        ));
        assert!(hosvd(&x, &[0, 1]).is_err());
        assert!(hosvd(&x, &[1]).is_err());
    }

    #[test]
    fn tolerance_extremes() {
        let x = random_dense(&[5, 4, 3], 3).unwrap();
        assert_eq!(hosvd_tol(&x, 1.0).unwrap().ranks(), vec![1, 1, 1]);
        assert_eq!(hosvd_tol(&x, 1e-300).unwrap().ranks(), vec![5, 4, 3]);
        assert!(hosvd_tol(&x, 0.0).is_err());
    }

    #[test]
    fn tolerance_recovers_exact_ranks() {
        let x = random_tucker(&[6, 7, 5], &[2, 2, 2], 5).unwrap();
        let spectra = ModeSpectra::new(&x).unwrap();
        let smallest = (0..3)
            .map(|k| spectra.spectrum(k)[1] / spectra.spectrum(k)[0])
            .fold(f64::INFINITY, f64::min);
        let f = hosvd_tol(&x, smallest * 0.5).unwrap();
        assert_eq!(f.ranks(), vec![2, 2, 2]);
    }

    #[test]
    fn zero_core_reconstructs_zero() {
        let f = TuckerFactorization::from_parts(
            DenseTensor::zeros(vec![1, 2]).unwrap(),
            vec![Matrix::zeros(3, 1), Matrix::zeros(4, 2)],
        )
        .unwrap();
        let x = f.reconstruct();
        assert_eq!(x.dims(), &[3, 4]);
        assert_eq!(x.frobenius_norm(), 0.0);
    }

    #[test]
    fn storage_counts() {
        assert_eq!(
            tucker_storage_count(&[15, 25, 10, 15], &[62, 199, 20, 256]),
            66195
        );
        assert_eq!(tucker_storage_count(&[1, 1, 1, 1], &[5, 6, 7, 8]), 1 + 26);
        assert_eq!(tucker_storage_count(&[2, 2, 2], &[4, 4, 4]), 32);
    }

    #[test]
    fn escalation_schedule() {
        assert_eq!(
            escalate_ranks(&[1, 10, 11, 19], &[50, 50, 50, 20]),
            vec![2, 11, 13, 20]
        );
    }

    #[test]
    fn compress_abs_huge_budget_accepts_first_iterate() {
        let x = random_dense(&[6, 5, 4], 8).unwrap();
        let f = tucker_compress_abs(&x, 1e6).unwrap();
        assert_eq!(f.ranks(), hosvd_tol(&x, 1e-2).unwrap().ranks());
    }

    #[test]
    fn compress_abs_exact_rank_tensor() {
        let x = random_tucker(&[20, 20, 10, 16], &[3, 4, 2, 5], 21).unwrap();
        let f = tucker_compress_abs(&x, 1e-6).unwrap();
        assert!(f.ranks().iter().zip([3, 4, 2, 5]).all(|(&r, c)| r <= c));
        assert!(x.max_abs_diff(&f.reconstruct()).unwrap() <= 1e-6);
    }

    #[test]
    fn compress_abs_unreachable_budget_returns_full_ranks() {
        let x = random_dense(&[4, 3, 2], 9).unwrap();
        let f = tucker_compress_abs(&x, 1e-300).unwrap();
        assert_eq!(f.ranks(), vec![4, 3, 2]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn hosvd_invariants(
            dims in prop::collection::vec(1usize..7, 2..=4),
            seed in any::<u64>(),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 4),
        ) {
            let x = random_dense(&dims, seed).unwrap();
            let ranks: Vec<usize> = dims.iter().zip(&picks).map(|(&n, p)| 1 + p.index(n)).collect();
            let spectra = ModeSpectra::new(&x).unwrap();
            let f = spectra.factorize(&x, &ranks).unwrap();
            let xh = f.reconstruct();
            for u in f.factors() {
                prop_assert!(orthonormal(u));
            }
            let (gc, gr) = (f.core().frobenius_norm(), xh.frobenius_norm());
            prop_assert!((gc - gr).abs() <= 1e-8 * gr.max(1e-300));
            let err = x.sub(&xh).unwrap().frobenius_norm();
            prop_assert!(err <= spectra.discarded_norm(&ranks) * (1.0 + 1e-10) + 1e-12);

            // raising one rank never hurts
            for k in 0..dims.len() {
                if ranks[k] < dims[k] {
                    let mut up = ranks.clone();
                    up[k] += 1;
                    let e2 = x.sub(&spectra.factorize(&x, &up).unwrap().reconstruct())
                        .unwrap().frobenius_norm();
                    prop_assert!(e2 <= err * (1.0 + 1e-10) + 1e-12);
                }
            }
        }
    }
}
