//! Greedy partitioning of the horizontal validity mask into rectangular
//! all-ocean blocks, plus splitting of the time axis into intervals.
//!
//! [`find_largest_block`] scans every seed position `(i, j)` (x outer, y
//! inner). A seed is usable when the `S_min × S_min` square anchored there
//! is entirely defined and unused. From a usable seed the rectangle first
//! grows along x as far as it stays valid, then along y; x is not revisited
//! after y grows. The largest rectangle wins, and since only a strictly
//! larger area replaces the incumbent, the earliest-scanned one wins ties.
//! [`greedy_partition`] repeats this until no usable seed is left.
//!
//! Validity is monotone (a rectangle containing an invalid one is invalid),
//! so each growth phase is a binary search over a summed-area table of
//! available cells rather than a cell-by-cell walk.
//!
//! All rectangles are half-open: `[x_start, x_end) × [y_start, y_end)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Mask2;

/// A horizontal rectangle `[x_start, x_end) × [y_start, y_end)`. The block
/// it selects always spans every depth level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockIndex {
    pub x_start: usize,
    pub x_end: usize,
    pub y_start: usize,
    pub y_end: usize,
}

impl BlockIndex {
    pub const fn new(x_start: usize, x_end: usize, y_start: usize, y_end: usize) -> Self {
        Self {
            x_start,
            x_end,
            y_start,
            y_end,
        }
    }

    pub fn width(&self) -> usize {
        self.x_end.saturating_sub(self.x_start)
    }

    pub fn height(&self) -> usize {
        self.y_end.saturating_sub(self.y_start)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.x_start..self.x_end).contains(&i) && (self.y_start..self.y_end).contains(&j)
    }

    pub fn overlaps(&self, other: &BlockIndex) -> bool {
        self.x_start < other.x_end
            && other.x_start < self.x_end
            && self.y_start < other.y_end
            && other.y_start < self.y_end
    }
}

/// Blocks in discovery order and the number of defined cells none of them
/// covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub blocks: Vec<BlockIndex>,
    pub leftover_cells: usize,
}

/// Contiguous half-open time intervals covering `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub intervals: Vec<(usize, usize)>,
}

impl TimeSplit {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total(&self) -> usize {
        self.intervals.last().map_or(0, |iv| iv.1)
    }
}

/// True iff both sides are at least `s_min` and every cell is defined and
/// not yet used. Rectangles reaching outside the grid are invalid.
pub fn is_valid_block(domain: &Mask2, used: &Mask2, rect: &BlockIndex, s_min: usize) -> bool {
    if rect.width() < s_min || rect.height() < s_min || rect.is_empty() {
        return false;
    }
    if rect.x_end > domain.nx() || rect.y_end > domain.ny() {
        return false;
    }
    (rect.y_start..rect.y_end)
        .all(|j| (rect.x_start..rect.x_end).all(|i| domain.get(i, j) && !used.get(i, j)))
}

/// Summed-area table over cells that are defined and unused.
struct Availability {
    nx: usize,
    ny: usize,
    sums: Vec<u32>,
}

impl Availability {
    fn new(domain: &Mask2, used: &Mask2) -> Self {
        let (nx, ny) = (domain.nx(), domain.ny());
        let w = nx + 1;
        let mut sums = vec![0u32; w * (ny + 1)];
        for j in 0..ny {
            let mut row = 0u32;
            for i in 0..nx {
                row += u32::from(domain.get(i, j) && !used.get(i, j));
                sums[(i + 1) + w * (j + 1)] = sums[(i + 1) + w * j] + row;
            }
        }
        Self { nx, ny, sums }
    }

    fn count(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> usize {
        let w = self.nx + 1;
        let s = |x: usize, y: usize| self.sums[x + w * y] as i64;
        (s(x1, y1) - s(x0, y1) - s(x1, y0) + s(x0, y0)) as usize
    }

    fn free(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> bool {
        self.count(x0, x1, y0, y1) == (x1 - x0) * (y1 - y0)
    }

    /// Largest `e` in `[lo, hi]` with `ok(e)`, given `ok(lo)` and
    /// monotonicity.
    fn grow(lo: usize, hi: usize, ok: impl Fn(usize) -> bool) -> usize {
        let (mut good, mut bad) = (lo, hi + 1);
        while bad - good > 1 {
            let mid = good + (bad - good) / 2;
            if ok(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    }
}

fn seeds(nx: usize, ny: usize, s_min: usize) -> impl Iterator<Item = (usize, usize)> {
    let xs = if s_min <= nx { nx - s_min + 1 } else { 0 };
    let ys = if s_min <= ny { ny - s_min + 1 } else { 0 };
    (0..xs).flat_map(move |i| (0..ys).map(move |j| (i, j)))
}

fn check_shapes(domain: &Mask2, used: &Mask2) {
    assert_eq!(
        (domain.nx(), domain.ny()),
        (used.nx(), used.ny()),
        "domain and used masks must have the same shape"
    );
}

/// The largest valid rectangle reachable by x-then-y growth from any seed,
/// or `None` when no `s_min × s_min` seed is valid.
pub fn find_largest_block(domain: &Mask2, used: &Mask2, s_min: usize) -> Option<BlockIndex> {
    check_shapes(domain, used);
    let s = s_min.max(1);
    let avail = Availability::new(domain, used);
    let (nx, ny) = (avail.nx, avail.ny);
    let mut best: Option<BlockIndex> = None;
    let mut best_area = 0;
    for (i, j) in seeds(nx, ny, s) {
        if (nx - i) * (ny - j) <= best_area || !avail.free(i, i + s, j, j + s) {
            continue;
        }
        let x_end = Availability::grow(i + s, nx, |x| avail.free(i, x, j, j + s));
        let y_end = Availability::grow(j + s, ny, |y| avail.free(i, x_end, j, y));
        let rect = BlockIndex::new(i, x_end, j, y_end);
        if rect.area() > best_area {
            best_area = rect.area();
            best = Some(rect);
        }
    }
    best
}

fn leftover(domain: &Mask2, blocks: &[BlockIndex]) -> usize {
    domain.count() - blocks.iter().map(BlockIndex::area).sum::<usize>()
}

/// Repeats [`find_largest_block`], marking each result used, until no valid
/// seed remains. `s_min = 0` behaves as 1.
pub fn greedy_partition(domain: &Mask2, s_min: usize) -> PartitionResult {
    let mut used = Mask2::filled(domain.nx(), domain.ny(), false);
    let mut blocks = Vec::new();
    while let Some(rect) = find_largest_block(domain, &used, s_min) {
        used.fill_rect(&rect, true);
        blocks.push(rect);
    }
    PartitionResult {
        leftover_cells: leftover(domain, &blocks),
        blocks,
    }
}

fn powers_of_two(from: usize, up_to: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = from;
    while p <= up_to {
        out.push(p);
        p *= 2;
    }
    out
}

/// `|log2 w − log2 h|` for powers of two.
fn aspect_gap(w: usize, h: usize) -> u32 {
    w.trailing_zeros().abs_diff(h.trailing_zeros())
}

/// Largest power-of-two rectangle anchored at each seed; see
/// [`pow2_partition`] for the ordering.
fn find_largest_pow2_block(avail: &Availability, s: usize) -> Option<BlockIndex> {
    let (nx, ny) = (avail.nx, avail.ny);
    let mut best: Option<(usize, u32, BlockIndex)> = None;
    for (i, j) in seeds(nx, ny, s) {
        if !avail.free(i, i + s, j, j + s) {
            continue;
        }
        let mut shapes: Vec<(usize, usize)> = powers_of_two(s, nx - i)
            .into_iter()
            .flat_map(|w| powers_of_two(s, ny - j).into_iter().map(move |h| (w, h)))
            .collect();
        // Larger area first, then squarer, then wider.
        shapes.sort_by(|a, b| {
            (b.0 * b.1)
                .cmp(&(a.0 * a.1))
                .then(aspect_gap(a.0, a.1).cmp(&aspect_gap(b.0, b.1)))
                .then(b.0.cmp(&a.0))
        });
        if let Some(&(w, h)) = shapes
            .iter()
            .find(|&&(w, h)| avail.free(i, i + w, j, j + h))
        {
            let key = (w * h, aspect_gap(w, h));
            let better = match &best {
                None => true,
                Some((area, gap, _)) => key.0 > *area || (key.0 == *area && key.1 < *gap),
            };
            if better {
                best = Some((key.0, key.1, BlockIndex::new(i, i + w, j, j + h)));
            }
        }
    }
    best.map(|b| b.2)
}

/// Greedy partitioning restricted to power-of-two side lengths. For each
/// seed the candidate shapes are tried by decreasing area, then by aspect
/// ratio closest to square, then wider first; the first valid shape is the
/// seed's candidate. Across seeds a candidate replaces the incumbent if it
/// is strictly larger, or equally large and strictly squarer.
pub fn pow2_partition(domain: &Mask2, s_min: usize) -> Result<PartitionResult> {
    if s_min == 0 || !s_min.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "minimum block side {s_min} is not a power of two"
        )));
    }
    let mut used = Mask2::filled(domain.nx(), domain.ny(), false);
    let mut blocks = Vec::new();
    loop {
        let avail = Availability::new(domain, &used);
        let Some(rect) = find_largest_pow2_block(&avail, s_min) else {
            break;
        };
        used.fill_rect(&rect, true);
        blocks.push(rect);
    }
    Ok(PartitionResult {
        leftover_cells: leftover(domain, &blocks),
        blocks,
    })
}

/// `n` contiguous intervals of `⌊T/n⌋` steps; the last one absorbs the
/// remainder.
pub fn temporal_split(t: usize, n: usize) -> Result<TimeSplit> {
    if n == 0 || n > t {
        return Err(Error::InvalidArgument(format!(
            "cannot split {t} time steps into {n} parts"
        )));
    }
    let base = t / n;
    let intervals = (0..n)
        .map(|p| (p * base, if p + 1 == n { t } else { (p + 1) * base }))
        .collect();
    Ok(TimeSplit { intervals })
}
