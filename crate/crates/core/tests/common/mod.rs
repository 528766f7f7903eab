//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use gapcomp::field::Mask2;
use gapcomp::partition::{BlockIndex, PartitionResult};

/// Every cell of `rect` is ocean and unused, checked one by one.
pub fn all_free(domain: &Mask2, used: &Mask2, rect: &BlockIndex) -> bool {
    (rect.y_start..rect.y_end)
        .all(|j| (rect.x_start..rect.x_end).all(|i| domain.get(i, j) && !used.get(i, j)))
}

/// Checks that `result` is a valid greedy cover of `domain`: blocks are in
/// bounds, at least `s_min` on each side, on ocean, pairwise disjoint, the
/// leftover count is right, and no free `s_min × s_min` square remains.
pub fn check_partition(
    domain: &Mask2,
    result: &PartitionResult,
    s_min: usize,
) -> Result<(), String> {
    let s = s_min.max(1);
    let mut used = Mask2::filled(domain.nx(), domain.ny(), false);
    for (a, r) in result.blocks.iter().enumerate() {
        if r.x_end > domain.nx() || r.y_end > domain.ny() {
            return Err(format!("block {r:?} out of bounds"));
        }
        if r.width() < s || r.height() < s {
            return Err(format!("block {r:?} smaller than {s}"));
        }
        if !all_free(domain, &used, r) {
            return Err(format!("block {r:?} covers land or overlaps"));
        }
        if result.blocks[..a].iter().any(|o| o.overlaps(r)) {
            return Err(format!("block {r:?} overlaps an earlier block"));
        }
        used.fill_rect(r, true);
    }
    let covered: usize = result.blocks.iter().map(BlockIndex::area).sum();
    if domain.count() - covered != result.leftover_cells {
        return Err("leftover count".into());
    }
    if let Some(sq) = free_square(domain, &used, s) {
        return Err(format!("free square {sq:?} left behind"));
    }
    Ok(())
}

pub fn free_square(domain: &Mask2, used: &Mask2, s: usize) -> Option<BlockIndex> {
    if s > domain.nx() || s > domain.ny() {
        return None;
    }
    for i in 0..=domain.nx() - s {
        for j in 0..=domain.ny() - s {
            let r = BlockIndex::new(i, i + s, j, j + s);
            if all_free(domain, used, &r) {
                return Some(r);
            }
        }
    }
    None
}

/// The greedy block search done literally: from every free `s × s` seed
/// (x outer, y inner) grow one column at a time in x, then one row at a
/// time in y, checking every cell; keep the first strictly largest result.
pub fn literal_largest_block(domain: &Mask2, used: &Mask2, s_min: usize) -> Option<BlockIndex> {
    let s = s_min.max(1);
    let (nx, ny) = (domain.nx(), domain.ny());
    if s > nx || s > ny {
        return None;
    }
    let mut best: Option<BlockIndex> = None;
    for i in 0..=nx - s {
        for j in 0..=ny - s {
            if !all_free(domain, used, &BlockIndex::new(i, i + s, j, j + s)) {
                continue;
            }
            let mut x_end = i + s;
            while x_end < nx && all_free(domain, used, &BlockIndex::new(i, x_end + 1, j, j + s)) {
                x_end += 1;
            }
            let mut y_end = j + s;
            while y_end < ny && all_free(domain, used, &BlockIndex::new(i, x_end, j, y_end + 1)) {
                y_end += 1;
            }
            let r = BlockIndex::new(i, x_end, j, y_end);
            if best.is_none_or(|b| r.area() > b.area()) {
                best = Some(r);
            }
        }
    }
    best
}
