//! Additive-combinatorial extraction: Markov selection, Ruzsa
//! triangle-inequality verification, the bipartite graph refinement in the
//! Balog–Szemerédi–Gowers style, its Fourier-side driver, and dyadic
//! regular-subset extraction.
//!
//! Everything here is certified: each routine both constructs its object and
//! re-verifies the promised inequalities with exact integer counts (set
//! cardinalities, path counts via bitsets). A violated conclusion is an
//! [`Error::InternalAssertion`], never a silently wrong answer.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Spectrum;
use crate::spectral::{covering_number_points, level_set, FrequencySet};

// ---------------------------------------------------------------------------
// Markov selection
// ---------------------------------------------------------------------------

/// Result of [`markov_select`]: the indices whose value clears the threshold
/// `alpha / 2`, together with the guaranteed lower bound on their number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovSelection {
    pub alpha: f64,
    pub threshold: f64,
    pub selected: Vec<usize>,
    /// Guaranteed lower bound `(alpha/2) * n` on `selected.len()`.
    pub count_bound: f64,
}

/// Selects the indices `i` with `values[i] >= alpha / 2`.
///
/// Hypotheses: every value is `<= 1` and the values sum to at least
/// `alpha * n`. Under these the selected count is at least `(alpha/2) * n`:
/// writing the sum as (count above) * 1 + (count below) * (alpha/2) bounds it
/// from above, and values below the threshold may be arbitrarily negative
/// without hurting the argument.
pub fn markov_select(values: &[f64], alpha: f64) -> Result<MarkovSelection> {
    let n = values.len();
    if n == 0 {
        return Err(Error::RejectedInput("markov_select needs at least one value".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::RejectedInput(format!("alpha must be positive; got {alpha}")));
    }
    if let Some(v) = values.iter().find(|v| !(**v <= 1.0 + 1e-12)) {
        return Err(Error::RejectedInput(format!("values must be <= 1; saw {v}")));
    }
    let sum: f64 = values.iter().sum();
    if sum + 1e-9 < alpha * n as f64 {
        return Err(Error::HypothesisFailed(format!(
            "mean hypothesis fails: sum {sum} < alpha * n = {}",
            alpha * n as f64
        )));
    }
    let threshold = alpha / 2.0;
    let selected: Vec<usize> =
        (0..n).filter(|&i| values[i] >= threshold).collect();
    let count_bound = threshold * n as f64;
    if (selected.len() as f64) + 1e-9 < count_bound {
        return Err(Error::InternalAssertion(format!(
            "markov count {} fell below guaranteed bound {count_bound}",
            selected.len()
        )));
    }
    Ok(MarkovSelection { alpha, threshold, selected, count_bound })
}

// ---------------------------------------------------------------------------
// Ruzsa triangle inequality
// ---------------------------------------------------------------------------

/// Exact verification record for the triangle inequality
/// `|A - B| * |C| <= |A - C| * |B - C|` (middle set `C`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuzsaReport {
    pub size_a: usize,
    pub size_b: usize,
    pub size_c: usize,
    pub diff_ab: usize,
    pub diff_ac: usize,
    pub diff_bc: usize,
    pub lhs: u128,
    pub rhs: u128,
    pub holds: bool,
}

fn difference_set(a: &BTreeSet<i64>, b: &BTreeSet<i64>) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    for &x in a {
        for &y in b {
            out.insert(x - y);
        }
    }
    out
}

/// Checks `|A - B| * |C| <= |A - C| * |B - C|` with exact `u128` products.
///
/// The inequality holds for all finite nonempty sets; a violation is an
/// internal assertion failure, and the report carries both sides so callers
/// can log the slack.
pub fn ruzsa_bound_check(a: &[i64], b: &[i64], c: &[i64]) -> Result<RuzsaReport> {
    if a.is_empty() || b.is_empty() || c.is_empty() {
        return Err(Error::RejectedInput("ruzsa_bound_check needs nonempty sets".into()));
    }
    let sa: BTreeSet<i64> = a.iter().copied().collect();
    let sb: BTreeSet<i64> = b.iter().copied().collect();
    let sc: BTreeSet<i64> = c.iter().copied().collect();
    let dab = difference_set(&sa, &sb).len();
    let dac = difference_set(&sa, &sc).len();
    let dbc = difference_set(&sb, &sc).len();
    let lhs = dab as u128 * sc.len() as u128;
    let rhs = dac as u128 * dbc as u128;
    let holds = lhs <= rhs;
    if !holds {
        return Err(Error::InternalAssertion(format!(
            "triangle inequality violated: {lhs} > {rhs}"
        )));
    }
    Ok(RuzsaReport {
        size_a: sa.len(),
        size_b: sb.len(),
        size_c: sc.len(),
        diff_ab: dab,
        diff_ac: dac,
        diff_bc: dbc,
        lhs,
        rhs,
        holds,
    })
}

// ---------------------------------------------------------------------------
// Bipartite graphs with bitset adjacency
// ---------------------------------------------------------------------------

/// Bipartite graph on vertex classes `A` (size `n_a`) and `B` (size `n_b`)
/// with bitset adjacency in both directions, so common-neighbor and
/// path-count queries reduce to word-wise AND + popcount.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    n_a: usize,
    n_b: usize,
    /// `rows_a[a]`: neighbors of `a` as a bitset over `B`.
    rows_a: Vec<Vec<u64>>,
    /// `rows_b[b]`: neighbors of `b` as a bitset over `A`.
    rows_b: Vec<Vec<u64>>,
    edges: u64,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

fn bit_set(row: &mut [u64], i: usize) -> bool {
    let (w, b) = (i / 64, i % 64);
    let fresh = row[w] & (1 << b) == 0;
    row[w] |= 1 << b;
    fresh
}

fn bit_get(row: &[u64], i: usize) -> bool {
    row[i / 64] & (1 << (i % 64)) != 0
}

fn popcount_and(x: &[u64], y: &[u64]) -> u64 {
    x.iter().zip(y).map(|(a, b)| (a & b).count_ones() as u64).sum()
}

impl BipartiteGraph {
    pub fn new(n_a: usize, n_b: usize) -> Result<Self> {
        if n_a == 0 || n_b == 0 {
            return Err(Error::RejectedInput("graph classes must be nonempty".into()));
        }
        Ok(BipartiteGraph {
            n_a,
            n_b,
            rows_a: vec![vec![0; words(n_b)]; n_a],
            rows_b: vec![vec![0; words(n_a)]; n_b],
            edges: 0,
        })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn edges(&self) -> u64 {
        self.edges
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a >= self.n_a || b >= self.n_b {
            return Err(Error::RejectedInput(format!(
                "edge ({a}, {b}) out of range for {} x {}",
                self.n_a, self.n_b
            )));
        }
        if bit_set(&mut self.rows_a[a], b) {
            bit_set(&mut self.rows_b[b], a);
            self.edges += 1;
        }
        Ok(())
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        bit_get(&self.rows_a[a], b)
    }

    pub fn deg_a(&self, a: usize) -> u64 {
        self.rows_a[a].iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Number of common neighbors in `B` of two `A`-side vertices.
    pub fn common_neighbors(&self, a1: usize, a2: usize) -> u64 {
        popcount_and(&self.rows_a[a1], &self.rows_a[a2])
    }

    /// Number of walks `a — b' — a' — b` of length 3 (repeated vertices
    /// allowed, as in the standard path-count formulation): the `(a, b)`
    /// entry of M Mᵀ M for the adjacency matrix M.
    pub fn walks3(&self, a: usize, b: usize) -> u64 {
        let mut total = 0;
        for a2 in 0..self.n_a {
            if bit_get(&self.rows_b[b], a2) {
                total += self.common_neighbors(a, a2);
            }
        }
        total
    }

    /// Parses a whitespace-separated edge list. The first non-comment line is
    /// `n_a n_b`; every following line is an edge `a b` (0-based). Lines
    /// starting with `#` are comments.
    pub fn from_edge_list_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::RejectedInput("empty edge list".into()))?;
        let parse_pair = |line: &str| -> Result<(usize, usize)> {
            let mut it = line.split_whitespace();
            let x = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::RejectedInput(format!("bad edge-list line: {line:?}")))?;
            let y = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::RejectedInput(format!("bad edge-list line: {line:?}")))?;
            if it.next().is_some() {
                return Err(Error::RejectedInput(format!("trailing tokens on line: {line:?}")));
            }
            Ok((x, y))
        };
        let (n_a, n_b) = parse_pair(header)?;
        let mut g = BipartiteGraph::new(n_a, n_b)?;
        for line in lines {
            let (a, b) = parse_pair(line)?;
            g.add_edge(a, b)?;
        }
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// Graph refinement (Balog–Szemerédi–Gowers style)
// ---------------------------------------------------------------------------

/// Certificate produced by [`bsg_refine`]: the refined classes together with
/// every promised bound and the exact quantity it was checked against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Path3Certificate {
    pub n: usize,
    pub k: f64,
    /// Pivot vertex in `B` whose neighborhood seeded the refinement.
    pub pivot: usize,
    pub restarts_used: usize,
    pub a_refined: Vec<usize>,
    pub b_refined: Vec<usize>,
    /// Guaranteed lower bound `n / (16 K^2)` on `a_refined.len()`.
    pub a_size_bound: f64,
    /// Guaranteed lower bound `n / (4 K)` on `b_refined.len()`.
    pub b_size_bound: f64,
    pub edges_between: u64,
    /// Guaranteed lower bound `|A'| |B'| / (4 K)` on `edges_between`.
    pub edge_bound: f64,
    /// Exact minimum over `A' x B'` of the length-3 walk count.
    pub min_walks3: u64,
    /// Guaranteed lower bound `n^2 / (2^12 K^5)` on `min_walks3`.
    pub walks3_bound: f64,
}

/// Refines a dense bipartite graph into classes `A' ⊆ A`, `B' ⊆ B` such that
/// every pair `(a, b) ∈ A' x B'` is joined by many length-3 walks.
///
/// Hypotheses: `|A| = |B| = n` and `|E| >= n^2 / K`. Conclusions, all
/// re-verified with exact counts before returning:
///
/// 1. `|A'| >= n / (16 K^2)`;
/// 2. `|B'| >= n / (4 K)`;
/// 3. `e(A', B') >= |A'| |B'| / (4 K)`;
/// 4. every `(a, b) ∈ A' x B'` has at least `n^2 / (2^12 K^5)` walks of
///    length 3 (checked with the bitset walk-count oracle).
///
/// The construction prunes low-degree `A`-vertices, seeds `A'` with the
/// neighborhood of a pivot `b0`, peels vertices involved in poorly-connected
/// pairs until all surviving pairs share at least `n / (64 K^2)` common
/// neighbors, then collects `B'` as the vertices seeing a `1/(4K)` fraction
/// of `A'`. Up to 32 seeded pivot choices are tried; the first that satisfies
/// all four conclusions is returned.
pub fn bsg_refine(g: &BipartiteGraph, k: f64, seed: u64) -> Result<Path3Certificate> {
    if g.n_a() != g.n_b() {
        return Err(Error::RejectedInput(format!(
            "refinement needs equal classes; got {} x {}",
            g.n_a(),
            g.n_b()
        )));
    }
    let n = g.n_a();
    if !(k >= 1.0) {
        return Err(Error::RejectedInput(format!("density parameter K must be >= 1; got {k}")));
    }
    let e = g.edges();
    if (e as f64) * k < (n as f64) * (n as f64) {
        return Err(Error::HypothesisFailed(format!(
            "edge count {e} below n^2/K = {}",
            (n as f64) * (n as f64) / k
        )));
    }

    // Degree pruning: keep a with 2 * deg(a) * n >= e (exact integers).
    let pruned: Vec<usize> =
        (0..n).filter(|&a| 2 * g.deg_a(a) as u128 * n as u128 >= e as u128).collect();

    let t_pair = n as f64 / (64.0 * k * k);
    let a_size_bound = n as f64 / (16.0 * k * k);
    let b_size_bound = n as f64 / (4.0 * k);
    let walks3_bound = (n as f64) * (n as f64) / (4096.0 * k.powi(5));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tried: BTreeSet<usize> = BTreeSet::new();
    let mut restarts = 0;
    while restarts < 32 && tried.len() < n {
        let pivot = rng.gen_range(0..n);
        if !tried.insert(pivot) {
            continue;
        }
        restarts += 1;
        if let Some(cert) = try_pivot(g, &pruned, pivot, k, t_pair, a_size_bound, b_size_bound) {
            let mut cert = cert;
            cert.n = n;
            cert.k = k;
            cert.restarts_used = restarts;
            cert.walks3_bound = walks3_bound;
            // Independent verification of conclusion 4 against the walk
            // oracle; the peeling already guarantees it, so a miss here is a
            // bug, not bad luck.
            if (cert.min_walks3 as f64) + 1e-9 < walks3_bound {
                return Err(Error::InternalAssertion(format!(
                    "walk count {} fell below guaranteed bound {walks3_bound}",
                    cert.min_walks3
                )));
            }
            return Ok(cert);
        }
    }
    Err(Error::ExtractionFailed(format!(
        "no pivot among {restarts} seeded choices produced a refinement"
    )))
}

/// One pivot attempt; `None` when a size/edge check misses, so the caller
/// can retry with a different pivot.
fn try_pivot(
    g: &BipartiteGraph,
    pruned: &[usize],
    pivot: usize,
    k: f64,
    t_pair: f64,
    a_size_bound: f64,
    b_size_bound: f64,
) -> Option<Path3Certificate> {
    // Seed: pruned vertices adjacent to the pivot.
    let mut live: Vec<usize> =
        pruned.iter().copied().filter(|&a| g.has_edge(a, pivot)).collect();
    if (live.len() as f64) + 1e-9 < a_size_bound {
        return None;
    }

    // Peel until every surviving pair shares >= t_pair common neighbors.
    loop {
        let m = live.len();
        let mut bad_count = vec![0usize; m];
        let mut any_bad = false;
        for i in 0..m {
            for j in (i + 1)..m {
                if (g.common_neighbors(live[i], live[j]) as f64) < t_pair {
                    bad_count[i] += 1;
                    bad_count[j] += 1;
                    any_bad = true;
                }
            }
        }
        if !any_bad {
            break;
        }
        let worst = (0..m).max_by_key(|&i| (bad_count[i], std::cmp::Reverse(i))).unwrap();
        live.remove(worst);
        if (live.len() as f64) + 1e-9 < a_size_bound {
            return None;
        }
    }
    let a_refined = live;

    // B': vertices seeing at least |A'| / (4K) of the refined class.
    let b_thresh = a_refined.len() as f64 / (4.0 * k);
    let mut b_refined = Vec::new();
    let mut edges_between = 0u64;
    for b in 0..g.n_b() {
        let hits =
            a_refined.iter().filter(|&&a| g.has_edge(a, b)).count() as u64;
        if hits as f64 + 1e-9 >= b_thresh {
            b_refined.push(b);
            edges_between += hits;
        }
    }
    if (b_refined.len() as f64) + 1e-9 < b_size_bound {
        return None;
    }
    let edge_bound = a_refined.len() as f64 * b_refined.len() as f64 / (4.0 * k);
    if (edges_between as f64) + 1e-9 < edge_bound {
        return None;
    }

    // Exact minimum walk count over the refined rectangle.
    let mut min_walks3 = u64::MAX;
    for &a in &a_refined {
        for &b in &b_refined {
            min_walks3 = min_walks3.min(g.walks3(a, b));
        }
    }

    Some(Path3Certificate {
        n: 0,
        k: 0.0,
        pivot,
        restarts_used: 0,
        a_refined,
        b_refined,
        a_size_bound,
        b_size_bound,
        edges_between,
        edge_bound,
        min_walks3,
        walks3_bound: 0.0,
    })
}

// ---------------------------------------------------------------------------
// Phase partition
// ---------------------------------------------------------------------------

/// Splits indices by the phase quadrant of their value and returns the
/// largest class together with the rotation `theta` aligning it: for every
/// selected `i`, `Re(e^{i theta} values[i]) >= |values[i]| * sqrt(2)/2`.
///
/// Quadrants are the half-open arcs `[q pi/2, (q+1) pi/2)` of the argument;
/// ties between classes go to the smallest quadrant id.
pub fn phase_partition(values: &[Complex64]) -> Result<(Vec<usize>, f64)> {
    if values.is_empty() {
        return Err(Error::RejectedInput("phase_partition needs at least one value".into()));
    }
    let mut buckets: [Vec<usize>; 4] = Default::default();
    for (i, v) in values.iter().enumerate() {
        if v.norm() == 0.0 {
            return Err(Error::RejectedInput(format!("value {i} is zero; phase undefined")));
        }
        let arg = v.arg().rem_euclid(std::f64::consts::TAU);
        let q = ((arg / std::f64::consts::FRAC_PI_2) as usize).min(3);
        buckets[q].push(i);
    }
    let best = (0..4).max_by_key(|&q| (buckets[q].len(), std::cmp::Reverse(q))).unwrap();
    let center = best as f64 * std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_4;
    let theta = -center;
    let chosen = std::mem::take(&mut buckets[best]);
    for &i in &chosen {
        let rotated = values[i] * Complex64::from_polar(1.0, theta);
        if rotated.re + 1e-9 < values[i].norm() * std::f64::consts::FRAC_1_SQRT_2 {
            return Err(Error::InternalAssertion(format!(
                "alignment failed at index {i}: Re {} vs |v| {}",
                rotated.re,
                values[i].norm()
            )));
        }
    }
    Ok((chosen, theta))
}

// ---------------------------------------------------------------------------
// Fourier-side refinement driver
// ---------------------------------------------------------------------------

/// Full record of one Fourier-side refinement: the aligned class, the pair
/// set built from large positive real parts of difference coefficients, the
/// lattice model the graph refinement ran on, and the extracted subset with
/// its difference-set covering bound. Every `*_bound` field was checked
/// before this value was returned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BsgExtraction {
    /// Rotation aligning the chosen phase class.
    pub theta: f64,
    /// Aligned subclass `A ⊆ A0` (largest phase quadrant).
    pub aligned: FrequencySet,
    /// `|E|` where `E = {(a,b) ∈ A^2 : Re mu_hat(a-b) > delta^2/8}`.
    pub e_count: u64,
    /// Guaranteed lower bound `(delta^2/8) |A|^2` on `e_count`.
    pub e_bound: f64,
    /// Size of the integer lattice model `Ā` (floors and floors + 1).
    pub lattice_size: usize,
    /// Edges of the lattice graph; at least `e_count` by injectivity.
    pub e_bar_count: u64,
    /// Covering-number ratio `N(F(mu, delta^2/8) ∩ [-2N, 2N]; M) / N(A0; M)`.
    pub r_ratio: f64,
    /// Size of the lattice cover `H` of the admissible edge differences.
    pub h_size: usize,
    /// Guaranteed upper bound `16 R |Ā|` on `h_size`.
    pub h_bound: f64,
    /// Certificate of the lattice graph refinement (at `K = 32 / delta^2`).
    pub certificate: Path3Certificate,
    /// Pulled-back subset `A1 ⊆ A` (the larger of the two floor preimages).
    pub a1: FrequencySet,
    /// Guaranteed lower bound `2^-17 delta^4 |A0|` on `|A1|`.
    pub a1_bound: f64,
    /// Exact covering number of the difference set `A1 - A1` at scale `M`.
    pub diff_cover: usize,
    /// Asserted upper bound `2^105 R^6 delta^-8 |A0|` on `diff_cover`.
    pub diff_cover_bound: f64,
}

/// Extracts from an `M`-separated class `A0` of large Fourier coefficients a
/// subset `A1` whose difference set has small covering number.
///
/// Hypotheses: `A0` is strictly `M`-separated inside `[-N, N]`, every
/// coefficient on it exceeds `delta` in modulus, and the spectrum window
/// reaches `2N` (differences are looked up directly).
///
/// Pipeline: align the largest phase quadrant (keeping `|A| >= |A0|/4`);
/// collect pairs with `Re mu_hat(a - b) > delta^2/8` (at least
/// `(delta^2/8)|A|^2` of them, by Cauchy–Schwarz on the walk average and the
/// one-sided Markov count); transfer to the integer lattice `Ā` of floor
/// indices where separation makes the transfer injective; refine the lattice
/// graph at `K = 32/delta^2`; pull the refined class back two-sidedly (the
/// larger preimage keeps at least half); and certify the covering number of
/// `A1 - A1` at scale `M` against the `R^6 delta^-8` budget.
pub fn fourier_bsg(
    spec: &Spectrum,
    a0: &FrequencySet,
    delta: f64,
    seed: u64,
) -> Result<BsgExtraction> {
    if a0.is_empty() {
        return Err(Error::RejectedInput("fourier_bsg needs a nonempty class".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::RejectedInput(format!("delta must be in (0, 1]; got {delta}")));
    }
    let m = a0.sep_m();
    if !(m > 0.0) || !a0.separated() {
        return Err(Error::RejectedInput(
            "class must carry a positive separation certificate".into(),
        ));
    }
    let n_window = a0.window_n();
    if 2.0 * n_window > spec.n_max() as f64 {
        return Err(Error::RejectedInput(format!(
            "spectrum window {} too small for differences up to {}",
            spec.n_max(),
            2.0 * n_window
        )));
    }
    for &a in a0.elements() {
        if !(spec.abs(a) > delta) {
            return Err(Error::HypothesisFailed(format!(
                "coefficient at {a} has modulus {} <= delta = {delta}",
                spec.abs(a)
            )));
        }
    }

    // Phase alignment: largest quadrant, at least a quarter of A0.
    let values: Vec<Complex64> = a0.elements().iter().map(|&a| spec.coeff(a)).collect();
    let (chosen, theta) = phase_partition(&values)?;
    let aligned_elems: Vec<i64> = chosen.iter().map(|&i| a0.elements()[i]).collect();
    let aligned = FrequencySet::new(n_window, m, aligned_elems)?;
    let a_len = aligned.len();
    if 4 * a_len < a0.len() {
        return Err(Error::InternalAssertion(format!(
            "largest quadrant holds {a_len} of {}; expected at least a quarter",
            a0.len()
        )));
    }

    // Pair set E: large positive real part of the difference coefficient.
    let pair_thresh = delta * delta / 8.0;
    let mut pairs: Vec<(i64, i64)> = Vec::new();
    for &a in aligned.elements() {
        for &b in aligned.elements() {
            if spec.coeff(a - b).re > pair_thresh {
                pairs.push((a, b));
            }
        }
    }
    let e_count = pairs.len() as u64;
    let e_bound = pair_thresh * (a_len as f64) * (a_len as f64);
    if (e_count as f64) + 1e-9 < e_bound {
        return Err(Error::InternalAssertion(format!(
            "pair count {e_count} fell below guaranteed bound {e_bound}"
        )));
    }

    // Integer lattice model: floors and floors + 1. Separation by more than
    // M makes a -> floor(a/M) injective, which gives both sandwich bounds.
    let floor_of = |a: i64| -> i64 { (a as f64 / m).floor() as i64 };
    let mut lattice: BTreeSet<i64> = BTreeSet::new();
    for &a in aligned.elements() {
        lattice.insert(floor_of(a));
        lattice.insert(floor_of(a) + 1);
    }
    let lattice: Vec<i64> = lattice.into_iter().collect();
    let lattice_size = lattice.len();
    if lattice_size < a_len || lattice_size > 2 * a_len {
        return Err(Error::InternalAssertion(format!(
            "lattice size {lattice_size} outside sandwich [{a_len}, {}]",
            2 * a_len
        )));
    }
    let index_of = |v: i64| -> usize { lattice.binary_search(&v).expect("lattice member") };

    let mut g = BipartiteGraph::new(lattice_size, lattice_size)?;
    for &(a, b) in &pairs {
        g.add_edge(index_of(floor_of(a)), index_of(floor_of(b)))?;
    }
    let e_bar_count = g.edges();
    if e_bar_count < e_count {
        return Err(Error::InternalAssertion(format!(
            "lattice transfer lost pairs: {e_bar_count} < {e_count}"
        )));
    }

    // Covering-number ratio R and the lattice cover H of admissible edge
    // differences (every ball of radius M meets at most 4 lattice values).
    let wide = level_set(spec, pair_thresh, 2.0 * n_window)?;
    let cover_wide = crate::spectral::covering_number(&wide, m)?.count;
    let cover_a0 = crate::spectral::covering_number(a0, m)?.count;
    let r_ratio = cover_wide as f64 / cover_a0 as f64;
    let mut h: BTreeSet<i64> = BTreeSet::new();
    for &c in wide.elements() {
        h.insert(floor_of(c));
        h.insert(floor_of(c) + 1);
    }
    let h_size = h.len();
    let h_bound = 16.0 * r_ratio * lattice_size as f64;
    if h_size as f64 > h_bound + 1e-9 {
        return Err(Error::InternalAssertion(format!(
            "edge-difference cover {h_size} exceeds bound {h_bound}"
        )));
    }

    // Lattice graph refinement at K = 32 / delta^2.
    let k = 32.0 / (delta * delta);
    let certificate = bsg_refine(&g, k, seed)?;

    // Two-sided pullback: for each refined lattice value, it is a floor or a
    // floor + 1 of some aligned element; the larger preimage keeps at least
    // half of the refined class.
    let refined: BTreeSet<i64> =
        certificate.a_refined.iter().map(|&i| lattice[i]).collect();
    let mut low: Vec<i64> = Vec::new();
    let mut high: Vec<i64> = Vec::new();
    for &a in aligned.elements() {
        if refined.contains(&floor_of(a)) {
            low.push(a);
        }
        if refined.contains(&(floor_of(a) + 1)) {
            high.push(a);
        }
    }
    let a1_elems = if low.len() >= high.len() { low } else { high };
    if 2 * a1_elems.len() < refined.len() {
        return Err(Error::InternalAssertion(format!(
            "pullback kept {} of {} refined values; expected at least half",
            a1_elems.len(),
            refined.len()
        )));
    }
    let a1 = FrequencySet::new(n_window, m, a1_elems)?;
    let a1_bound = delta.powi(4) * a0.len() as f64 / f64::from(1u32 << 17);
    if (a1.len() as f64) + 1e-9 < a1_bound {
        return Err(Error::InternalAssertion(format!(
            "extracted class size {} fell below guaranteed bound {a1_bound}",
            a1.len()
        )));
    }

    // Difference-set covering certificate.
    let mut diffs: BTreeSet<i64> = BTreeSet::new();
    for &x in a1.elements() {
        for &y in a1.elements() {
            diffs.insert(x - y);
        }
    }
    let diff_pts: Vec<f64> = diffs.iter().map(|&d| d as f64).collect();
    let diff_cover = covering_number_points(&diff_pts, m)?.count;
    let diff_cover_bound =
        2f64.powi(105) * r_ratio.powi(6) * delta.powi(-8) * a0.len() as f64;
    if diff_cover as f64 >= diff_cover_bound {
        return Err(Error::InternalAssertion(format!(
            "difference cover {diff_cover} reached budget {diff_cover_bound}"
        )));
    }

    Ok(BsgExtraction {
        theta,
        aligned,
        e_count,
        e_bound,
        lattice_size,
        e_bar_count,
        r_ratio,
        h_size,
        h_bound,
        certificate,
        a1,
        a1_bound,
        diff_cover,
        diff_cover_bound,
    })
}

// ---------------------------------------------------------------------------
// Dyadic regular-subset extraction
// ---------------------------------------------------------------------------

/// Report of [`regular_subset_extract`]: the window that was accepted, the
/// kept subset, and its certified regularity constant with the witnessing
/// (center, scale) pair that attains it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularSubsetReport {
    /// Accepted half-window; the subset lives in `[-n1, n1]`.
    pub n1: f64,
    pub theta: f64,
    /// Smallest admissible window of the dyadic descent.
    pub n1_floor: f64,
    /// Points of the input inside `[-n1, n1]`.
    pub window_count: usize,
    pub kept: usize,
    pub subset: FrequencySet,
    /// Certified constant: max over centers `x` in the subset and dyadic
    /// scales `s` in `[M, 2 n1]` of `(count(B(x,s)) / kept) * (2 n1 / s)^alpha_reg`.
    pub c_reg: f64,
    pub witness_center: i64,
    pub witness_scale: f64,
    pub alpha_reg: f64,
}

/// Exponent of the dyadic descent floor `M (N/M)^theta` used by the
/// bootstrap: `theta = (1 - alpha + eps) / (1 - alpha + 8 eps)`, strictly
/// below 1 for positive `eps`.
pub fn descent_exponent(alpha: f64, eps: f64) -> f64 {
    (1.0 - alpha + eps) / (1.0 - alpha + 8.0 * eps)
}

/// Extracts a subset that is dimensionally regular at exponent `alpha_reg`
/// across all scales between `M` and its window.
///
/// Dyadic descent: try windows `N, N/2, N/4, ...` down to the floor
/// `M (N/M)^theta` (or `n1_floor` when given). At each window a top-down
/// quota cascade walks the dyadic interval tree: a child's quota is
/// `min(count, ceil(parent quota * 2^-alpha_reg))`, any overflow beyond the
/// parent quota is taken back from the larger child, and leaves keep their
/// smallest values. The window is accepted once the cascade keeps at least
/// half of the points in it — a window dominated by a tight cluster keeps
/// less and forces the descent toward the cluster's own scale.
///
/// The kept subset is then certified by direct scan: `c_reg` is the exact
/// maximum of `(count(B(x, s)) / kept) * (2 N1 / s)^alpha_reg` over centers
/// in the subset and dyadic scales `s ∈ [M, 2 N1]`; callers compare it
/// against their own budget.
pub fn regular_subset_extract(
    a: &FrequencySet,
    scale_m: f64,
    alpha_reg: f64,
    theta: f64,
    n1_floor: Option<f64>,
) -> Result<RegularSubsetReport> {
    if a.is_empty() {
        return Err(Error::RejectedInput("regular_subset_extract needs points".into()));
    }
    if !(scale_m > 0.0) || !(alpha_reg > 0.0) {
        return Err(Error::RejectedInput(format!(
            "need positive scale and exponent; got M={scale_m}, alpha={alpha_reg}"
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::RejectedInput(format!("theta must be in (0, 1]; got {theta}")));
    }
    let n = a.window_n();
    if n <= scale_m {
        return Err(Error::RejectedInput(format!("need N > M; got N={n}, M={scale_m}")));
    }
    let floor = n1_floor.unwrap_or_else(|| scale_m * (n / scale_m).powf(theta));

    let mut n1 = n;
    let mut last_attempt = (n, 0usize, 0usize);
    while n1 + 1e-9 >= floor && n1 > scale_m {
        let in_window: Vec<i64> = a
            .elements()
            .iter()
            .copied()
            .filter(|x| (x.abs() as f64) <= n1)
            .collect();
        let window_count = in_window.len();
        if window_count > 0 {
            let mut kept_values = Vec::new();
            cascade(&in_window, -n1, n1, window_count, alpha_reg, scale_m, &mut kept_values);
            kept_values.sort_unstable();
            let kept = kept_values.len();
            last_attempt = (n1, kept, window_count);
            if 2 * kept >= window_count {
                let subset = FrequencySet::new(n1, a.sep_m(), kept_values)?;
                let (c_reg, witness_center, witness_scale) =
                    certify_regularity(&subset, scale_m, n1, alpha_reg);
                return Ok(RegularSubsetReport {
                    n1,
                    theta,
                    n1_floor: floor,
                    window_count,
                    kept,
                    subset,
                    c_reg,
                    witness_center,
                    witness_scale,
                    alpha_reg,
                });
            }
        }
        n1 /= 2.0;
    }
    Err(Error::ExtractionFailed(format!(
        "no dyadic window in [{floor}, {n}] kept half its points; last tried {} (kept {} of {})",
        last_attempt.0, last_attempt.1, last_attempt.2
    )))
}

/// Top-down quota cascade over the dyadic interval tree. `points` is sorted;
/// the leaf scale is `m`. Appends kept values to `out`.
fn cascade(
    points: &[i64],
    lo: f64,
    hi: f64,
    quota: usize,
    alpha_reg: f64,
    m: f64,
    out: &mut Vec<i64>,
) {
    if points.is_empty() || quota == 0 {
        return;
    }
    if hi - lo <= m || points.len() <= 1 {
        // Leaf: keep the smallest values up to the quota.
        let take = quota.min(points.len());
        out.extend_from_slice(&points[..take]);
        return;
    }
    let mid = (lo + hi) / 2.0;
    let split = points.partition_point(|&x| (x as f64) < mid);
    let (left, right) = points.split_at(split);
    let child_cap = ((quota as f64) * 2f64.powf(-alpha_reg)).ceil() as usize;
    let mut q_left = left.len().min(child_cap);
    let mut q_right = right.len().min(child_cap);
    if q_left + q_right > quota {
        // Take the overflow back from the larger child.
        let over = q_left + q_right - quota;
        if q_left >= q_right {
            q_left -= over.min(q_left);
        } else {
            q_right -= over.min(q_right);
        }
    }
    cascade(left, lo, mid, q_left, alpha_reg, m, out);
    cascade(right, mid, hi, q_right, alpha_reg, m, out);
}

/// Exact regularity scan: returns `(c_reg, witness center, witness scale)`.
pub(crate) fn certify_regularity(
    subset: &FrequencySet,
    m: f64,
    n1: f64,
    alpha_reg: f64,
) -> (f64, i64, f64) {
    let pts = subset.elements();
    let n = pts.len();
    let mut best = (0.0f64, pts[0], m);
    let mut s = m;
    while s <= 2.0 * n1 + 1e-9 {
        for &x in pts {
            let lo = pts.partition_point(|&y| (y as f64) < x as f64 - s);
            let hi = pts.partition_point(|&y| (y as f64) <= x as f64 + s);
            let count = hi - lo;
            let value = (count as f64 / n as f64) * (2.0 * n1 / s).powf(alpha_reg);
            if value > best.0 {
                best = (value, x, s);
            }
        }
        s *= 2.0;
    }
    best
}
