//! Low-rank Tucker completion by singular value projection (SVP).
//!
//! This is the baseline "compression by sampling" scheme: keep a random
//! subset `Ω` of the entries, then recover the rest by alternating a
//! gradient step on the observed entries with HOSVD truncation,
//!
//! ```text
//! X̂ ← HOSVD_r( X̂ − η · P_Ω(X̂ − X) )
//! ```
//!
//! starting from `X̂ = 0` and ranks `(1, …, 1)`, raising the working ranks by
//! `δ` per iteration until they reach the caps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use crate::tucker::hosvd;

/// Linear indices of the observed entries, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMask {
    pub shape: Vec<usize>,
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl ObservationMask {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Dense membership flags in linear order.
    pub fn flags(&self) -> Vec<bool> {
        let mut f = vec![false; self.shape.iter().product()];
        for &i in &self.indices {
            f[i] = true;
        }
        f
    }
}

/// Samples `⌊N / target_cr⌋` distinct entries uniformly, deterministically
/// for a given seed.
pub fn random_mask(shape: &[usize], target_cr: f64, seed: u64) -> Result<ObservationMask> {
    let total: usize = shape.iter().product();
    if !(target_cr >= 1.0) || target_cr > total as f64 {
        return Err(Error::InvalidArgument(format!(
            "target compression ratio {target_cr} outside [1, {total}]"
        )));
    }
    let count = (total as f64 / target_cr).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, total, count).into_vec();
    indices.sort_unstable();
    Ok(ObservationMask {
        shape: shape.to_vec(),
        indices,
        seed,
    })
}

/// `r_k ← min(cap_k, r_k + δ)`.
pub fn update_rank(ranks: &[usize], delta: usize, caps: &[usize]) -> Vec<usize> {
    ranks
        .iter()
        .zip(caps)
        .map(|(&r, &c)| c.min(r + delta))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvpParams {
    /// Per-mode rank caps `r̂`.
    pub target_ranks: Vec<usize>,
    /// Stop once the masked relative error drops below this.
    pub eps: f64,
    /// Rank increase per iteration.
    pub delta: usize,
    /// Gradient step.
    pub eta: f64,
    pub max_iters: usize,
    pub trace: bool,
}

impl SvpParams {
    pub fn new(target_ranks: Vec<usize>) -> Self {
        Self {
            target_ranks,
            eps: 1e-3,
            delta: 1,
            eta: 1.0,
            max_iters: 500,
            trace: false,
        }
    }

    fn validate(&self, dims: &[usize]) -> Result<()> {
        if self.target_ranks.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rank caps for a {}-way tensor",
                self.target_ranks.len(),
                dims.len()
            )));
        }
        for (k, (&r, &n)) in self.target_ranks.iter().zip(dims).enumerate() {
            if r == 0 || r > n {
                return Err(Error::RankOutOfRange {
                    mode: k,
                    rank: r,
                    max: n,
                });
            }
        }
        if !(self.eps > 0.0) || self.delta == 0 || !(self.eta > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "need eps > 0, delta >= 1, eta > 0, max_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-iteration error series, one entry per completed iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SvpTrace {
    /// `‖P_Ω(X̂ − X)‖_F / ‖P_Ω(X)‖_F`.
    pub masked_relative: Vec<f64>,
    /// `max |X̂ − X_ref|` over every entry; empty without a reference.
    pub chebyshev: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvpOutcome {
    pub completion: DenseTensor,
    pub iterations: usize,
    pub converged: bool,
    pub masked_error: f64,
    pub ranks: Vec<usize>,
    pub trace: Option<SvpTrace>,
}

fn masked_relative_error(
    xhat: &DenseTensor,
    observed: &DenseTensor,
    omega: &[usize],
    norm: f64,
) -> f64 {
    let (a, b) = (xhat.as_slice(), observed.as_slice());
    let diff = omega
        .iter()
        .map(|&i| (a[i] - b[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

/// `X̂ − η · P_Ω(X̂ − X)`. With `η = 1` this overwrites the observed entries
/// with the observations.
pub fn gradient_step(
    xhat: &DenseTensor,
    observed: &DenseTensor,
    omega: &[usize],
    eta: f64,
) -> DenseTensor {
    let obs = observed.as_slice();
    let mut step = xhat.as_slice().to_vec();
    for &i in omega {
        step[i] -= eta * (step[i] - obs[i]);
    }
    DenseTensor::from_parts_unchecked(xhat.dims().to_vec(), step)
}

/// Runs SVP on the entries of `observed` listed in `mask`; other entries
/// of `observed` are never read. When `reference` is given and tracing is
/// on, the full-tensor Chebyshev error against it is recorded as well.
///
/// Running out of iterations is reported through
/// [`SvpOutcome::converged`], not as an error.
pub fn svp_complete(
    observed: &DenseTensor,
    mask: &ObservationMask,
    params: &SvpParams,
    reference: Option<&DenseTensor>,
) -> Result<SvpOutcome> {
    let dims = observed.dims().to_vec();
    params.validate(&dims)?;
    if mask.shape != dims {
        return Err(Error::ShapeMismatch(format!(
            "mask shape {:?} vs data {dims:?}",
            mask.shape
        )));
    }
    if mask.is_empty() {
        return Err(Error::InvalidArgument("empty observation set".into()));
    }
    if let Some(r) = reference {
        if r.dims() != dims.as_slice() {
            return Err(Error::ShapeMismatch("reference shape".into()));
        }
    }
    let omega = &mask.indices;
    let obs = observed.as_slice();
    let norm = omega.iter().map(|&i| obs[i] * obs[i]).sum::<f64>().sqrt();

    let mut xhat = DenseTensor::zeros(dims.clone())?;
    let mut ranks = vec![1; dims.len()];
    let mut trace = params.trace.then(SvpTrace::default);
    let mut iterations = 0;
    let mut err = masked_relative_error(&xhat, observed, omega, norm);

    while err >= params.eps && iterations < params.max_iters {
        let stepped = gradient_step(&xhat, observed, omega, params.eta);
        xhat = hosvd(&stepped, &ranks)?.reconstruct();
        ranks = update_rank(&ranks, params.delta, &params.target_ranks);
        iterations += 1;
        err = masked_relative_error(&xhat, observed, omega, norm);
        if let Some(t) = trace.as_mut() {
            t.masked_relative.push(err);
            if let Some(r) = reference {
                t.chebyshev.push(xhat.max_abs_diff(r)?);
            }
        }
    }

    Ok(SvpOutcome {
        converged: err < params.eps,
        completion: xhat,
        iterations,
        masked_error: err,
        ranks,
        trace,
    })
}
