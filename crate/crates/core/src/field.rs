//! Gridded 4-D fields with land gaps.
//!
//! A field has extents `(N, M, L, K)` = (longitude, latitude, depth, time),
//! stored first-index-fastest. Missing cells hold `NaN`. Whether a cell is
//! missing depends only on its horizontal position `(i, j)`: the coastline
//! is the same at every depth and time step, so a single `N × M` mask
//! describes the whole gap structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::BlockIndex;
use crate::tensor::DenseTensor;

/// A boolean `nx × ny` grid, `x` fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask2 {
    nx: usize,
    ny: usize,
    cells: Vec<bool>,
}

impl Mask2 {
    pub fn new(nx: usize, ny: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != nx * ny {
            return Err(Error::ShapeMismatch(format!(
                "{nx}x{ny} mask needs {} cells, got {}",
                nx * ny,
                cells.len()
            )));
        }
        Ok(Self { nx, ny, cells })
    }

    pub fn filled(nx: usize, ny: usize, value: bool) -> Self {
        Self {
            nx,
            ny,
            cells: vec![value; nx * ny],
        }
    }

    /// Builds a mask from a predicate over `(i, j)`.
    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                cells.push(f(i, j));
            }
        }
        Self { nx, ny, cells }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i + self.nx * j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.cells[i + self.nx * j] = v;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn fill_rect(&mut self, rect: &BlockIndex, v: bool) {
        for j in rect.y_start..rect.y_end {
            for i in rect.x_start..rect.x_end {
                self.set(i, j, v);
            }
        }
    }
}

/// A 4-D field whose missing cells follow a depth- and time-invariant mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GappyTensor4 {
    dims: [usize; 4],
    values: Vec<f64>,
    mask: Mask2,
}

impl GappyTensor4 {
    /// Validates that every horizontal column is either entirely `NaN`
    /// (land) or entirely finite (ocean), and derives the mask from it.
    pub fn from_values(dims: [usize; 4], values: Vec<f64>) -> Result<Self> {
        let [n, m, l, k] = dims;
        if dims.contains(&0) {
            return Err(Error::ShapeMismatch(format!("degenerate dims {dims:?}")));
        }
        if values.len() != n * m * l * k {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} need {} values, got {}",
                n * m * l * k,
                values.len()
            )));
        }
        let plane = n * m;
        let mut cells = Vec::with_capacity(plane);
        for h in 0..plane {
            let defined = !values[h].is_nan();
            for lk in 0..l * k {
                let v = values[h + plane * lk];
                if v.is_infinite() {
                    return Err(Error::NonFinite(h + plane * lk));
                }
                if v.is_nan() == defined {
                    return Err(Error::InconsistentMask { i: h % n, j: h / n });
                }
            }
            cells.push(defined);
        }
        Ok(Self {
            dims,
            values,
            mask: Mask2 {
                nx: n,
                ny: m,
                cells,
            },
        })
    }

    /// Applies `mask` to `values`, overwriting land cells with `NaN`.
    pub fn with_mask(dims: [usize; 4], mut values: Vec<f64>, mask: Mask2) -> Result<Self> {
        let [n, m, _, _] = dims;
        if mask.nx != n || mask.ny != m {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} does not match dims {dims:?}",
                mask.nx, mask.ny
            )));
        }
        if values.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch("value count".into()));
        }
        let plane = n * m;
        for (idx, v) in values.iter_mut().enumerate() {
            if !mask.cells[idx % plane] {
                *v = f64::NAN;
            }
        }
        Self::from_values(dims, values)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &Mask2 {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of defined (ocean) values over all depths and times.
    pub fn defined_count(&self) -> usize {
        self.mask.count() * self.dims[2] * self.dims[3]
    }

    pub fn index(&self, i: usize, j: usize, l: usize, k: usize) -> usize {
        let [n, m, ll, _] = self.dims;
        i + n * (j + m * (l + ll * k))
    }

    pub fn get(&self, i: usize, j: usize, l: usize, k: usize) -> f64 {
        self.values[self.index(i, j, l, k)]
    }

    /// The dense subtensor over `rect` (all depths) and time steps
    /// `[t0, t1)`.
    pub fn extract_block(&self, rect: &BlockIndex, t0: usize, t1: usize) -> Result<DenseTensor> {
        let [n, m, l, k] = self.dims;
        if rect.x_end > n || rect.y_end > m || t1 > k || t0 >= t1 || rect.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "block {rect:?} x [{t0}, {t1}) outside dims {:?}",
                self.dims
            )));
        }
        let (w, h) = (rect.width(), rect.height());
        let mut out = Vec::with_capacity(w * h * l * (t1 - t0));
        for kk in t0..t1 {
            for ll in 0..l {
                for j in rect.y_start..rect.y_end {
                    let start = self.index(rect.x_start, j, ll, kk);
                    out.extend_from_slice(&self.values[start..start + w]);
                }
            }
        }
        DenseTensor::new(vec![w, h, l, t1 - t0], out)
    }

    /// Writes a dense block back; the inverse of [`Self::extract_block`].
    pub fn write_block(&mut self, rect: &BlockIndex, t0: usize, block: &DenseTensor) -> Result<()> {
        scatter_block(self.dims, &mut self.values, rect, t0, block)
    }

    /// Largest absolute difference over defined cells. Errors if the two
    /// fields have different shapes or masks.
    pub fn max_defined_error(&self, other: &GappyTensor4) -> Result<f64> {
        if self.dims != other.dims || self.mask != other.mask {
            return Err(Error::ShapeMismatch(
                "fields differ in shape or mask".into(),
            ));
        }
        let plane = self.dims[0] * self.dims[1];
        let mut worst = 0.0f64;
        let mut seen = false;
        for (idx, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            if self.mask.cells[idx % plane] {
                seen = true;
                worst = worst.max((a - b).abs());
            }
        }
        if !seen {
            return Err(Error::EmptyDefinedSet);
        }
        Ok(worst)
    }
}

/// Copies `block` (dims `[w, h, L, τ]`) into a raw `dims`-shaped buffer at
/// `rect` and time offset `t0`.
pub(crate) fn scatter_block(
    dims: [usize; 4],
    values: &mut [f64],
    rect: &BlockIndex,
    t0: usize,
    block: &DenseTensor,
) -> Result<()> {
    let [n, m, l, k] = dims;
    let (w, h) = (rect.width(), rect.height());
    let bd = block.dims();
    if bd.len() != 4
        || bd[0] != w
        || bd[1] != h
        || bd[2] != l
        || t0 + bd[3] > k
        || rect.x_end > n
        || rect.y_end > m
    {
        return Err(Error::ShapeMismatch(format!(
            "block dims {bd:?} do not fit {rect:?} at t={t0}"
        )));
    }
    let src = block.as_slice();
    let mut pos = 0;
    for kk in t0..t0 + bd[3] {
        for ll in 0..l {
            for j in rect.y_start..rect.y_end {
                let start = rect.x_start + n * (j + m * (ll + l * kk));
                values[start..start + w].copy_from_slice(&src[pos..pos + w]);
                pos += w;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> GappyTensor4 {
        let mask = Mask2::from_fn(4, 3, |i, j| !(i == 0 && j == 2));
        let dims = [4, 3, 2, 5];
        let values = (0..120).map(|v| v as f64).collect();
        GappyTensor4::with_mask(dims, values, mask).unwrap()
    }

    #[test]
    fn mask_derived_from_nan_columns() {
        let f = field();
        assert!(!f.mask().get(0, 2));
        assert_eq!(f.mask().count(), 11);
        assert_eq!(f.defined_count(), 11 * 10);
        let again = GappyTensor4::from_values(f.dims(), f.values().to_vec()).unwrap();
        assert_eq!(again.mask(), f.mask());
    }

    #[test]
    fn inconsistent_column_rejected() {
        let mut values: Vec<f64> = (0..24).map(|v| v as f64).collect();
        // cell (1,0) missing at (l=0,k=0) only
        values[1] = f64::NAN;
        assert!(matches!(
            GappyTensor4::from_values([2, 2, 2, 3], values),
            Err(Error::InconsistentMask { i: 1, j: 0 })
        ));
    }

    #[test]
    fn block_roundtrip() {
        let f = field();
        let rect = BlockIndex::new(1, 4, 0, 3);
        let b = f.extract_block(&rect, 1, 4).unwrap();
        assert_eq!(b.dims(), &[3, 3, 2, 3]);
        assert_eq!(b.get(&[0, 0, 0, 0]).unwrap(), f.get(1, 0, 0, 1));
        assert_eq!(b.get(&[2, 1, 1, 2]).unwrap(), f.get(3, 1, 1, 3));
        let mut g = f.clone();
        let zeros = DenseTensor::zeros(vec![3, 3, 2, 3]).unwrap();
        g.write_block(&rect, 1, &zeros).unwrap();
        assert_eq!(g.get(2, 2, 1, 2), 0.0);
        assert_eq!(g.get(2, 2, 1, 0), f.get(2, 2, 1, 0));
        g.write_block(&rect, 1, &b).unwrap();
        assert_eq!(g.max_defined_error(&f).unwrap(), 0.0);
    }

    #[test]
    fn block_over_land_is_rejected_as_nonfinite() {
        let f = field();
        assert!(f.extract_block(&BlockIndex::new(0, 2, 1, 3), 0, 1).is_err());
    }
}
