//! Fourier level sets and their covering / packing combinatorics.
//!
//! Conventions used throughout (and relied on by every caller):
//! level sets are strict (`|coeff| > δ`), balls are open with radius `M`
//! (a ball covers points strictly closer than `M` to its center), and
//! separated sets are strict (`pairwise distance > M`). In one dimension the
//! greedy left-to-right sweeps below are optimal for both problems, which the
//! test oracles (exhaustive enumeration) confirm on small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Spectrum;

/// A finite set of integer frequencies inside the window `[-N, N]`, sorted
/// ascending, with 0 excluded. `separated` records whether the set was
/// produced (or verified) to be strictly `sep_m`-separated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencySet {
    window_n: f64,
    sep_m: f64,
    elements: Vec<i64>,
    separated: bool,
}

impl FrequencySet {
    /// Validates: sorted, distinct, nonzero, within the window.
    pub fn new(window_n: f64, sep_m: f64, elements: Vec<i64>) -> Result<Self> {
        if !(window_n > 0.0) {
            return Err(Error::RejectedInput(format!(
                "window N must be positive; got {window_n}"
            )));
        }
        for pair in elements.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::RejectedInput(format!(
                    "frequency set must be strictly increasing; saw {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        for &a in &elements {
            if a == 0 {
                return Err(Error::RejectedInput(
                    "frequency 0 is excluded from level sets".into(),
                ));
            }
            if (a.abs() as f64) > window_n {
                return Err(Error::RejectedInput(format!(
                    "frequency {a} outside window [-{window_n}, {window_n}]"
                )));
            }
        }
        let separated = sep_m > 0.0 && is_separated(&elements, sep_m);
        Ok(FrequencySet { window_n, sep_m, elements, separated })
    }

    pub fn window_n(&self) -> f64 {
        self.window_n
    }

    pub fn sep_m(&self) -> f64 {
        self.sep_m
    }

    pub fn elements(&self) -> &[i64] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn separated(&self) -> bool {
        self.separated
    }

    /// Restrict to `|a| ≤ n1`, keeping the separation metadata.
    pub fn restrict_window(&self, n1: f64) -> FrequencySet {
        let elements: Vec<i64> =
            self.elements.iter().copied().filter(|a| (a.abs() as f64) <= n1).collect();
        FrequencySet {
            window_n: n1,
            sep_m: self.sep_m,
            elements,
            separated: self.separated,
        }
    }
}

fn is_separated(sorted: &[i64], m: f64) -> bool {
    sorted.windows(2).all(|p| (p[1] - p[0]) as f64 > m)
}

/// Strict level set `F(μ, δ) = {a ≠ 0, |a| ≤ N : |μ̂(a)| > δ}`.
///
/// Requires the spectrum window to contain `[-N, N]`.
pub fn level_set(spec: &Spectrum, delta: f64, window_n: f64) -> Result<FrequencySet> {
    if !(delta >= 0.0) {
        return Err(Error::RejectedInput(format!("delta must be ≥ 0; got {delta}")));
    }
    let n = window_n.floor() as i64;
    if n < 0 || window_n > spec.n_max() as f64 {
        return Err(Error::RejectedInput(format!(
            "window {window_n} exceeds spectrum n_max {}",
            spec.n_max()
        )));
    }
    let mut elements = Vec::new();
    for a in -n..=n {
        if a != 0 && spec.abs(a) > delta {
            elements.push(a);
        }
    }
    FrequencySet::new(window_n, 0.0, elements)
}

/// Covering report: `count` open balls of radius `radius` centered at
/// `centers` cover the input set, and no smaller number suffices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverReport {
    pub count: usize,
    pub centers: Vec<f64>,
    pub radius: f64,
}

/// Minimal covering of a sorted list of real points by open balls of radius
/// `m`. Greedy left-to-right: group a maximal run with span < 2m (such a run
/// fits under one ball centered at its midpoint); in 1-D this greedy count is
/// minimal.
pub fn covering_number_points(sorted: &[f64], m: f64) -> Result<CoverReport> {
    if !(m > 0.0) {
        return Err(Error::RejectedInput(format!("covering radius must be positive; got {m}")));
    }
    if sorted.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::RejectedInput("points must be sorted ascending".into()));
    }
    let mut centers = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] - start < 2.0 * m {
            j += 1;
        }
        centers.push((start + sorted[j]) / 2.0);
        i = j + 1;
    }
    Ok(CoverReport { count: centers.len(), centers, radius: m })
}

/// Covering number `𝒩(A; M)` of a frequency set by open balls of radius `m`.
pub fn covering_number(a: &FrequencySet, m: f64) -> Result<CoverReport> {
    let pts: Vec<f64> = a.elements().iter().map(|&x| x as f64).collect();
    covering_number_points(&pts, m)
}

/// Indices of a maximum-cardinality subset with pairwise gaps strictly > m.
/// Greedy left-to-right is optimal in 1-D.
pub fn max_separated_indices(sorted: &[f64], m: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        match kept.last() {
            Some(&k) if !(x - sorted[k] > m) => {}
            _ => kept.push(i),
        }
    }
    kept
}

/// Maximum strictly `m`-separated subset of a frequency set, returned as a
/// `FrequencySet` with `sep_m = m` and the separated flag set.
pub fn max_separated_subset(a: &FrequencySet, m: f64) -> Result<FrequencySet> {
    if !(m > 0.0) {
        return Err(Error::RejectedInput(format!(
            "separation scale must be positive; got {m}"
        )));
    }
    let pts: Vec<f64> = a.elements().iter().map(|&x| x as f64).collect();
    let kept = max_separated_indices(&pts, m);
    let elements: Vec<i64> = kept.into_iter().map(|i| a.elements()[i]).collect();
    let mut out = FrequencySet::new(a.window_n(), m, elements)?;
    out.sep_m = m;
    Ok(out)
}

/// `B_M(A)`: union of the open balls of radius `m` around the elements,
/// merged into disjoint intervals. Returns (total length, intervals).
pub fn neighborhood_union(a: &FrequencySet, m: f64) -> Result<(f64, Vec<(f64, f64)>)> {
    if !(m > 0.0) {
        return Err(Error::RejectedInput(format!("radius must be positive; got {m}")));
    }
    let intervals: Vec<(f64, f64)> = a
        .elements()
        .iter()
        .map(|&x| (x as f64 - m, x as f64 + m))
        .collect();
    let merged = crate::intervals::merge(intervals);
    Ok((crate::intervals::total_length(&merged), merged))
}

/// Box-dimension statistic `α = log 𝒩(F(μ,δ)∩[-N,N]; M) / log(N/M)`.
/// Returns 0 for an empty level set.
pub fn dimension_stat(spec: &Spectrum, delta: f64, window_n: f64, m: f64) -> Result<f64> {
    if !(window_n > m && m > 0.0) {
        return Err(Error::RejectedInput(format!(
            "need N > M > 0; got N={window_n}, M={m}"
        )));
    }
    let f = level_set(spec, delta, window_n)?;
    if f.is_empty() {
        return Ok(0.0);
    }
    let cover = covering_number(&f, m)?;
    Ok((cover.count as f64).ln() / (window_n / m).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{make_measure, spectrum, MeasureKind};

    #[test]
    fn level_set_strict_threshold_and_excludes_zero() {
        // 0.5·dirac(0) + 0.5·uniform: |coeff(a)| = 0.5 for every a ≠ 0;
        // coeff(0) = 1 but 0 is excluded.
        let mu = make_measure(
            &MeasureKind::Mixture {
                parts: vec![
                    (0.5, MeasureKind::Dirac { index: 0 }),
                    (0.5, MeasureKind::Uniform),
                ],
            },
            64,
        )
        .unwrap();
        let sp = spectrum(&mu, 16);
        let at_049 = level_set(&sp, 0.49, 16.0).unwrap();
        assert_eq!(at_049.len(), 32);
        // Strictness: threshold exactly 0.5 excludes everything.
        let at_05 = level_set(&sp, 0.5, 16.0).unwrap();
        assert!(at_05.is_empty());
    }

    #[test]
    fn level_set_window_guard() {
        let mu = make_measure(&MeasureKind::Uniform, 32).unwrap();
        let sp = spectrum(&mu, 8);
        assert!(level_set(&sp, 0.1, 9.0).is_err());
    }

    #[test]
    fn covering_greedy_on_known_example() {
        // {1, 2, 3, 10}, M = 2: run {1,2,3} has span 2 < 4 → one ball;
        // {10} → second ball.
        let f = FrequencySet::new(16.0, 0.0, vec![1, 2, 3, 10]).unwrap();
        let cover = covering_number(&f, 2.0).unwrap();
        assert_eq!(cover.count, 2);
        assert_eq!(cover.centers, vec![2.0, 10.0]);
    }

    #[test]
    fn max_separated_on_known_example() {
        // {1, 2, 3, 10}, M = 2: greedy keeps 1, skips 2 and 3 (gaps ≤ 2),
        // keeps 10.
        let f = FrequencySet::new(16.0, 0.0, vec![1, 2, 3, 10]).unwrap();
        let sep = max_separated_subset(&f, 2.0).unwrap();
        assert_eq!(sep.elements(), &[1, 10]);
        assert!(sep.separated());
        // Strictness: gap exactly M does not qualify, so 3 is skipped and 5
        // (gap 4 from 1) is kept.
        let g = FrequencySet::new(16.0, 0.0, vec![1, 3, 5]).unwrap();
        let sep2 = max_separated_subset(&g, 2.0).unwrap();
        assert_eq!(sep2.elements(), &[1, 5]);
    }

    #[test]
    fn neighborhood_union_merges_overlaps() {
        let f = FrequencySet::new(16.0, 0.0, vec![1, 2, 10]).unwrap();
        let (len, intervals) = neighborhood_union(&f, 1.5).unwrap();
        // (−0.5, 3.5) ∪ (8.5, 11.5): lengths 4 + 3.
        assert_eq!(intervals.len(), 2);
        assert!((len - 7.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_stat_full_and_empty() {
        let mu = make_measure(&MeasureKind::Dirac { index: 0 }, 256).unwrap();
        let sp = spectrum(&mu, 64);
        // All coefficients are 1: level set is the full window.
        let alpha = dimension_stat(&sp, 0.5, 64.0, 2.0).unwrap();
        assert!(alpha > 0.8 && alpha <= 1.05, "alpha={alpha}");
        let nu = make_measure(&MeasureKind::Uniform, 256).unwrap();
        let spu = spectrum(&nu, 64);
        assert_eq!(dimension_stat(&spu, 0.5, 64.0, 2.0).unwrap(), 0.0);
    }

    /// Exhaustive covering oracle: every cover by open balls corresponds to a
    /// partition of the sorted points into consecutive runs of span < 2M;
    /// minimize over all 2^(n-1) cut patterns.
    fn oracle_cover(points: &[i64], m: f64) -> usize {
        let n = points.len();
        if n == 0 {
            return 0;
        }
        let mut best = usize::MAX;
        for cuts in 0u32..(1 << (n - 1)) {
            let mut groups = 1;
            let mut start = 0;
            let mut ok = true;
            for i in 0..n {
                if i > start && (points[i] - points[start]) as f64 >= 2.0 * m {
                    ok = false;
                    break;
                }
                if i + 1 < n && cuts & (1 << i) != 0 {
                    groups += 1;
                    start = i + 1;
                }
            }
            if ok {
                best = best.min(groups);
            }
        }
        best
    }

    /// Exhaustive packing oracle over all subsets.
    fn oracle_max_separated(points: &[i64], m: f64) -> usize {
        let n = points.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let chosen: Vec<i64> =
                (0..n).filter(|i| mask & (1 << i) != 0).map(|i| points[i]).collect();
            if chosen.windows(2).all(|p| (p[1] - p[0]) as f64 > m) {
                best = best.max(chosen.len());
            }
        }
        best
    }

    #[test]
    fn greedy_matches_exhaustive_oracles() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..60 {
            let n = rng.gen_range(1..=10);
            let mut pts: std::collections::BTreeSet<i64> = Default::default();
            while pts.len() < n {
                let v = rng.gen_range(-30i64..=30);
                if v != 0 {
                    pts.insert(v);
                }
            }
            let pts: Vec<i64> = pts.into_iter().collect();
            let m = [0.5, 1.5, 2.5, 3.5][rng.gen_range(0..4)];
            let f = FrequencySet::new(40.0, 0.0, pts.clone()).unwrap();
            assert_eq!(
                covering_number(&f, m).unwrap().count,
                oracle_cover(&pts, m),
                "cover mismatch on {pts:?} m={m}"
            );
            assert_eq!(
                max_separated_subset(&f, m).unwrap().len(),
                oracle_max_separated(&pts, m),
                "packing mismatch on {pts:?} m={m}"
            );
        }
    }

    #[test]
    fn packing_covering_duality() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let n = rng.gen_range(2..=12);
            let mut pts: std::collections::BTreeSet<i64> = Default::default();
            while pts.len() < n {
                let v = rng.gen_range(-50i64..=50);
                if v != 0 {
                    pts.insert(v);
                }
            }
            let pts: Vec<i64> = pts.into_iter().collect();
            let f = FrequencySet::new(60.0, 0.0, pts).unwrap();
            // Half-integer scales avoid exact-distance boundary cases.
            let m = 2.5;
            let sep = max_separated_subset(&f, m).unwrap().len();
            let cover_half = covering_number(&f, m / 2.0).unwrap().count;
            let cover_full = covering_number(&f, m).unwrap().count;
            assert!(sep <= cover_half);
            assert!(sep >= cover_full);
        }
    }
}
