//! Whole-dataset compression.
//!
//! The horizontal mask is partitioned into fully defined rectangles, the
//! time axis into intervals, and every (block, interval) subtensor is
//! compressed on its own under the absolute error budget `ε_max`. Defined
//! cells outside every block are kept verbatim as leftovers.
//!
//! Payloads are stored as 32-bit floats. Each block is checked against the
//! budget after that rounding; a block that misses it is retried with a
//! tighter target and, failing that, stored raw.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{scatter_block, GappyTensor4, Mask2};
use crate::partition::{greedy_partition, pow2_partition, temporal_split, BlockIndex, TimeSplit};
use crate::tensor::{DenseTensor, Matrix};
use crate::tt::{tt_compress_abs, QttFactorization, TtFactorization};
use crate::tucker::{tucker_compress_abs, TuckerFactorization};

/// Number of tightened retries before a block falls back to raw storage.
pub const BUDGET_RETRIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tucker,
    Tt,
    Qtt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Tucker, Method::Tt, Method::Qtt];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tucker => "tucker",
            Method::Tt => "tt",
            Method::Qtt => "qtt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tucker" => Ok(Method::Tucker),
            "tt" => Ok(Method::Tt),
            "qtt" => Ok(Method::Qtt),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// A compressed (block, interval) subtensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Tucker(TuckerFactorization),
    Tt(QttFactorization),
    /// Uncompressed values, used when no factorization met the budget.
    Raw(DenseTensor),
}

impl Payload {
    pub fn storage_count(&self) -> usize {
        match self {
            Payload::Tucker(f) => f.storage_count(),
            Payload::Tt(f) => f.storage_count(),
            Payload::Raw(t) => t.len(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            Payload::Tucker(f) => f.dims(),
            Payload::Tt(f) => f.dims(),
            Payload::Raw(t) => t.dims().to_vec(),
        }
    }

    pub fn reconstruct(&self) -> DenseTensor {
        match self {
            Payload::Tucker(f) => f.reconstruct(),
            Payload::Tt(f) => f.reconstruct(),
            Payload::Raw(t) => t.clone(),
        }
    }

    /// Tucker or TT ranks; empty for raw payloads.
    pub fn ranks(&self) -> Vec<usize> {
        match self {
            Payload::Tucker(f) => f.ranks(),
            Payload::Tt(f) => f.tt().ranks(),
            Payload::Raw(_) => Vec::new(),
        }
    }

    pub fn is_raw(&self) -> bool {
        matches!(self, Payload::Raw(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveBlock {
    pub rect: BlockIndex,
    /// Index into [`CompressedArchive::time_splits`].
    pub interval: usize,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedArchive {
    pub method: Method,
    pub eps_max: f64,
    pub dims: [usize; 4],
    pub mask: Mask2,
    pub time_splits: TimeSplit,
    pub blocks: Vec<ArchiveBlock>,
    /// Defined values outside every block, in linear order of the dataset.
    pub leftovers: Vec<f64>,
}

impl CompressedArchive {
    /// Distinct block rectangles in first-appearance order.
    pub fn rects(&self) -> Vec<BlockIndex> {
        let mut out: Vec<BlockIndex> = Vec::new();
        for b in &self.blocks {
            if !out.contains(&b.rect) {
                out.push(b.rect);
            }
        }
        out
    }

    /// `covered[i + N·j]` is true for cells inside some block.
    pub fn coverage(&self) -> Mask2 {
        let mut covered = Mask2::filled(self.dims[0], self.dims[1], false);
        for r in self.rects() {
            covered.fill_rect(&r, true);
        }
        covered
    }

    /// Stored real numbers: every payload plus the leftovers.
    pub fn stored_elements(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.payload.storage_count())
            .sum::<usize>()
            + self.leftovers.len()
    }

    /// Checks every structural invariant: blocks inside the grid, on ocean,
    /// mutually disjoint and present once per interval; payload shapes match;
    /// the leftover count matches the uncovered ocean.
    pub fn validate(&self) -> Result<()> {
        let [n, m, l, k] = self.dims;
        let bad = |msg: String| Err(Error::Format(msg));
        if self.dims.contains(&0) {
            return bad(format!("degenerate dims {:?}", self.dims));
        }
        if self.mask.nx() != n || self.mask.ny() != m {
            return bad("mask does not match dims".into());
        }
        if !(self.eps_max > 0.0) {
            return bad(format!("error budget {}", self.eps_max));
        }
        let iv = &self.time_splits.intervals;
        if iv.is_empty() || iv[0].0 != 0 || iv.last().map(|x| x.1) != Some(k) {
            return bad("time intervals do not cover the time axis".into());
        }
        if iv.iter().any(|&(a, b)| a >= b) || iv.windows(2).any(|w| w[0].1 != w[1].0) {
            return bad("time intervals are not contiguous".into());
        }
        let rects = self.rects();
        for (a, r) in rects.iter().enumerate() {
            if r.is_empty() || r.x_end > n || r.y_end > m {
                return bad(format!("block {r:?} outside the grid"));
            }
            if rects[..a].iter().any(|o| o.overlaps(r)) {
                return bad(format!("block {r:?} overlaps another"));
            }
            for j in r.y_start..r.y_end {
                for i in r.x_start..r.x_end {
                    if !self.mask.get(i, j) {
                        return bad(format!("block {r:?} covers land at ({i}, {j})"));
                    }
                }
            }
        }
        let mut seen = vec![vec![false; iv.len()]; rects.len()];
        for b in &self.blocks {
            let Some(&(t0, t1)) = iv.get(b.interval) else {
                return bad(format!("interval {} out of range", b.interval));
            };
            let r = rects.iter().position(|r| *r == b.rect).unwrap_or_default();
            if std::mem::replace(&mut seen[r][b.interval], true) {
                return bad(format!(
                    "duplicate payload for {:?} interval {}",
                    b.rect, b.interval
                ));
            }
            let want = vec![b.rect.width(), b.rect.height(), l, t1 - t0];
            if b.payload.dims() != want {
                return bad(format!(
                    "payload dims {:?}, expected {want:?}",
                    b.payload.dims()
                ));
            }
        }
        if seen.iter().flatten().any(|s| !s) {
            return bad("block missing a time interval".into());
        }
        let covered = self.coverage();
        let uncovered = (0..n * m)
            .filter(|&h| self.mask.cells()[h] && !covered.cells()[h])
            .count();
        if self.leftovers.len() != uncovered * l * k {
            return bad(format!(
                "{} leftover values, expected {}",
                self.leftovers.len(),
                uncovered * l * k
            ));
        }
        Ok(())
    }
}

/// Per (block, interval) accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub rect: BlockIndex,
    pub interval: (usize, usize),
    pub ranks: Vec<usize>,
    pub raw: bool,
    pub elements_before: usize,
    pub elements_after: usize,
    pub relative_frobenius: f64,
    pub chebyshev: f64,
    pub cr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub method: Method,
    pub eps_max: f64,
    pub n_splits: usize,
    pub dims: [usize; 4],
    pub blocks: Vec<BlockReport>,
    /// `N·M·L·K`, land included.
    pub total_elements: usize,
    pub defined_elements: usize,
    pub block_elements_before: usize,
    pub block_elements_after: usize,
    pub leftover_count: usize,
    pub cr_all: f64,
    pub cr_sub: f64,
    /// `CR_all` with land cells left out of the numerator.
    pub cr_all_defined: f64,
    /// Largest error over every defined cell of the dataset.
    pub max_error: f64,
}

/// `(CR_all, CR_sub)`: `total / (after + leftover)` and `before / after`.
pub fn cr_metrics(
    total: usize,
    before: usize,
    after: usize,
    leftover: usize,
) -> Result<(f64, f64)> {
    if after == 0 {
        return Err(Error::ZeroDenominator);
    }
    let all = total as f64 / (after + leftover) as f64;
    let sub = before as f64 / after as f64;
    Ok((all, sub))
}

fn round_values(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| v as f32 as f64).collect()
}

fn round_tensor(t: &DenseTensor) -> DenseTensor {
    DenseTensor::from_parts_unchecked(t.dims().to_vec(), round_values(t.as_slice()))
}

fn round_matrix(m: &Matrix) -> Matrix {
    Matrix::from_parts_unchecked(m.rows(), m.cols(), round_values(m.as_slice()))
}

/// The payload as it will be stored: every value rounded to `f32`.
pub fn round_payload(p: &Payload) -> Result<Payload> {
    Ok(match p {
        Payload::Tucker(f) => Payload::Tucker(TuckerFactorization::from_parts(
            round_tensor(f.core()),
            f.factors().iter().map(round_matrix).collect(),
        )?),
        Payload::Tt(f) => {
            let tt = TtFactorization::from_carriages(
                f.tt().carriages().iter().map(round_tensor).collect(),
            )?;
            Payload::Tt(QttFactorization::from_parts(tt, f.mode_factors().to_vec())?)
        }
        Payload::Raw(t) => Payload::Raw(round_tensor(t)),
    })
}

fn compress_block(x: &DenseTensor, method: Method, eps: f64) -> Result<Payload> {
    Ok(match method {
        Method::Tucker => Payload::Tucker(tucker_compress_abs(x, eps)?),
        Method::Tt => Payload::Tt(tt_compress_abs(x, eps, false)?),
        Method::Qtt => Payload::Tt(tt_compress_abs(x, eps, true)?),
    })
}

/// Compresses one subtensor so that its stored (rounded) form is within
/// `eps_max`, falling back to raw values.
fn compress_within_budget(
    x: &DenseTensor,
    method: Method,
    eps_max: f64,
) -> Result<(Payload, DenseTensor)> {
    let mut eps = eps_max;
    for _ in 0..=BUDGET_RETRIES {
        let p = round_payload(&compress_block(x, method, eps)?)?;
        let rec = p.reconstruct();
        if x.max_abs_diff(&rec)? <= eps_max && p.storage_count() < x.len() {
            return Ok((p, rec));
        }
        eps /= 2.0;
    }
    let raw = round_tensor(x);
    Ok((Payload::Raw(raw.clone()), raw))
}

/// Partitions `data` (power-of-two blocks for QTT, greedy otherwise),
/// splits time into `n_splits` intervals, and compresses every
/// (block, interval) subtensor independently.
pub fn compress_dataset(
    data: &GappyTensor4,
    method: Method,
    eps_max: f64,
    s_min: usize,
    n_splits: usize,
) -> Result<(CompressedArchive, CompressionReport)> {
    if !(eps_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "error budget {eps_max} must be positive"
        )));
    }
    let mask = data.mask();
    if mask.count() == 0 {
        return Err(Error::EmptyDomain);
    }
    let [n, m, l, k] = data.dims();
    let time_splits = temporal_split(k, n_splits)?;
    let partition = match method {
        Method::Qtt => pow2_partition(mask, s_min.max(1).next_power_of_two())?,
        _ => greedy_partition(mask, s_min),
    };

    let tasks: Vec<(BlockIndex, usize)> = partition
        .blocks
        .iter()
        .flat_map(|&r| (0..time_splits.len()).map(move |t| (r, t)))
        .collect();
    let results: Vec<Result<(ArchiveBlock, BlockReport)>> = tasks
        .par_iter()
        .map(|&(rect, interval)| {
            let (t0, t1) = time_splits.intervals[interval];
            let x = data.extract_block(&rect, t0, t1)?;
            let (payload, rec) = compress_within_budget(&x, method, eps_max)?;
            let report = BlockReport {
                rect,
                interval: (t0, t1),
                ranks: payload.ranks(),
                raw: payload.is_raw(),
                elements_before: x.len(),
                elements_after: payload.storage_count(),
                relative_frobenius: x.relative_error(&rec).unwrap_or(0.0),
                chebyshev: x.max_abs_diff(&rec)?,
                cr: x.len() as f64 / payload.storage_count() as f64,
            };
            Ok((
                ArchiveBlock {
                    rect,
                    interval,
                    payload,
                },
                report,
            ))
        })
        .collect();
    let mut blocks = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (b, rep) = r?;
        blocks.push(b);
        reports.push(rep);
    }

    let mut covered = Mask2::filled(n, m, false);
    for r in &partition.blocks {
        covered.fill_rect(r, true);
    }
    let plane = n * m;
    let mut leftovers = Vec::new();
    let mut leftover_error = 0.0f64;
    for (idx, &v) in data.values().iter().enumerate() {
        let h = idx % plane;
        if mask.cells()[h] && !covered.cells()[h] {
            let stored = v as f32 as f64;
            leftover_error = leftover_error.max((v - stored).abs());
            leftovers.push(stored);
        }
    }

    let before: usize = reports.iter().map(|r| r.elements_before).sum();
    let after: usize = reports.iter().map(|r| r.elements_after).sum();
    let total = n * m * l * k;
    let stored = after + leftovers.len();
    let (cr_all, cr_sub) = if after > 0 {
        cr_metrics(total, before, after, leftovers.len())?
    } else {
        (total as f64 / stored as f64, 1.0)
    };
    let max_error = reports
        .iter()
        .map(|r| r.chebyshev)
        .fold(leftover_error, f64::max);
    let report = CompressionReport {
        method,
        eps_max,
        n_splits,
        dims: data.dims(),
        blocks: reports,
        total_elements: total,
        defined_elements: data.defined_count(),
        block_elements_before: before,
        block_elements_after: after,
        leftover_count: leftovers.len(),
        cr_all,
        cr_sub,
        cr_all_defined: data.defined_count() as f64 / stored as f64,
        max_error,
    };
    let archive = CompressedArchive {
        method,
        eps_max,
        dims: data.dims(),
        mask: mask.clone(),
        time_splits,
        blocks,
        leftovers,
    };
    Ok((archive, report))
}

/// Rebuilds the dataset: block cells from their payloads, other ocean cells
/// from the leftovers, land as `NaN`.
pub fn decompress_dataset(archive: &CompressedArchive) -> Result<GappyTensor4> {
    archive.validate()?;
    let dims = archive.dims;
    let plane = dims[0] * dims[1];
    let mut values = vec![f64::NAN; plane * dims[2] * dims[3]];
    for b in &archive.blocks {
        let t0 = archive.time_splits.intervals[b.interval].0;
        scatter_block(dims, &mut values, &b.rect, t0, &b.payload.reconstruct())?;
    }
    let covered = archive.coverage();
    let mut rest = archive.leftovers.iter();
    for (idx, v) in values.iter_mut().enumerate() {
        let h = idx % plane;
        if archive.mask.cells()[h] && !covered.cells()[h] {
            *v = *rest
                .next()
                .ok_or_else(|| Error::Format("leftovers exhausted".into()))?;
        }
    }
    let out = GappyTensor4::from_values(dims, values)
        .map_err(|e| Error::Format(format!("decoded field is inconsistent: {e}")))?;
    if out.mask() != &archive.mask {
        return Err(Error::Format(
            "decoded mask differs from the stored mask".into(),
        ));
    }
    Ok(out)
}

/// One row of a split sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_splits: usize,
    pub cr_all: f64,
    pub cr_sub: f64,
    pub elements_after: usize,
    pub leftover_count: usize,
    pub max_error: f64,
}

/// Runs [`compress_dataset`] once per entry of `splits`.
pub fn sweep_splits(
    data: &GappyTensor4,
    method: Method,
    eps_max: f64,
    s_min: usize,
    splits: &[usize],
) -> Result<Vec<SweepRow>> {
    splits
        .iter()
        .map(|&n| {
            let (_, r) = compress_dataset(data, method, eps_max, s_min, n)?;
            Ok(SweepRow {
                n_splits: n,
                cr_all: r.cr_all,
                cr_sub: r.cr_sub,
                elements_after: r.block_elements_after,
                leftover_count: r.leftover_count,
                max_error: r.max_error,
            })
        })
        .collect()
}
