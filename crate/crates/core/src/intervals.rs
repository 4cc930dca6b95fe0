//! Tiny interval-union arithmetic on the real line: merge, total length,
//! intersection measure. Used for neighborhood unions of frequency sets and
//! the pigeonhole steps that compare overlap masses of dilated ball unions.

/// Merge a list of (possibly overlapping, unordered) open intervals into a
/// sorted disjoint list. Degenerate intervals (hi ≤ lo) are dropped.
pub fn merge(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.retain(|&(lo, hi)| hi > lo);
    intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (lo, hi) in intervals {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Total length of a disjoint sorted interval list.
pub fn total_length(merged: &[(f64, f64)]) -> f64 {
    merged.iter().map(|&(lo, hi)| hi - lo).sum()
}

/// Lebesgue measure of the intersection of two merged (disjoint, sorted)
/// interval lists. Linear two-pointer sweep.
pub fn intersection_length(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}
