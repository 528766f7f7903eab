//! Random tensors with a prescribed Tucker or TT rank.
//!
//! These are built by direct contraction (QR for the orthonormal factors,
//! naive index loops for the chains), not through the decomposition code, so
//! they can serve as independent fixtures when checking that code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{increment, mode_product, DenseTensor, Matrix};

fn uniform(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// An `n × r` matrix with orthonormal columns (Householder QR of a random
/// Gaussian-like matrix).
pub fn random_orthonormal(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if r > n || r == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {r} orthonormal columns in dimension {n}"
        )));
    }
    let data = uniform(rng, n * r);
    let a = faer::MatRef::from_column_major_slice(&data, n, r);
    let q = a.qr().compute_thin_Q();
    Matrix::new(
        n,
        r,
        (0..r)
            .flat_map(|j| q.col(j).iter().copied().collect::<Vec<_>>())
            .collect(),
    )
}

/// A tensor of exact multilinear rank `ranks`: a random core multiplied by
/// random orthonormal factors.
pub fn random_tucker(dims: &[usize], ranks: &[usize], seed: u64) -> Result<DenseTensor> {
    if dims.len() != ranks.len() {
        return Err(Error::ShapeMismatch("one rank per mode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core_len = ranks.iter().product();
    let mut x = DenseTensor::new(ranks.to_vec(), uniform(&mut rng, core_len))?;
    for (k, (&n, &r)) in dims.iter().zip(ranks).enumerate() {
        let u = random_orthonormal(n, r, &mut rng)?;
        x = mode_product(&x, &u, k)?;
    }
    Ok(x)
}

/// Random TT carriages for `dims` with interior ranks `ranks`; carriage `k`
/// has shape `r_{k-1} × n_k × r_k`, first index fastest.
pub fn random_carriages(dims: &[usize], ranks: &[usize], seed: u64) -> Result<Vec<Vec<f64>>> {
    if ranks.len() + 1 != dims.len() {
        return Err(Error::ShapeMismatch("need d-1 interior ranks".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full: Vec<usize> = std::iter::once(1)
        .chain(ranks.iter().copied())
        .chain(std::iter::once(1))
        .collect();
    Ok(dims
        .iter()
        .enumerate()
        .map(|(k, &n)| uniform(&mut rng, full[k] * n * full[k + 1]))
        .collect())
}

/// Contracts a carriage chain by brute-force summation, entry by entry.
pub fn contract_chain(
    dims: &[usize],
    ranks: &[usize],
    carriages: &[Vec<f64>],
) -> Result<DenseTensor> {
    let full: Vec<usize> = std::iter::once(1)
        .chain(ranks.iter().copied())
        .chain(std::iter::once(1))
        .collect();
    let len: usize = dims.iter().product();
    let mut data = Vec::with_capacity(len);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..len {
        let mut row = vec![1.0];
        for (k, g) in carriages.iter().enumerate() {
            let (a, n, b) = (full[k], dims[k], full[k + 1]);
            let mut next = vec![0.0; b];
            for (beta, out) in next.iter_mut().enumerate() {
                for (alpha, &w) in row.iter().enumerate() {
                    *out += w * g[alpha + a * (idx[k] + n * beta)];
                }
            }
            row = next;
        }
        data.push(row[0]);
        increment(&mut idx, dims);
    }
    DenseTensor::new(dims.to_vec(), data)
}

/// A tensor of TT rank at most `ranks` (exactly, almost surely, when the
/// ranks respect the unfolding bounds).
pub fn random_tt(dims: &[usize], ranks: &[usize], seed: u64) -> Result<DenseTensor> {
    let carriages = random_carriages(dims, ranks, seed)?;
    contract_chain(dims, ranks, &carriages)
}

/// Uniform noise in `[-1, 1)`.
pub fn random_dense(dims: &[usize], seed: u64) -> Result<DenseTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dims.iter().product();
    DenseTensor::new(dims.to_vec(), uniform(&mut rng, len))
}
