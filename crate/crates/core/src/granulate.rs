//! Granulation: converting a rich set of large Fourier coefficients into a
//! family of well-separated "granules" — short subintervals that together
//! carry a definite fraction of the measure's mass.
//!
//! The first half of the module builds the smoothing window `F`: a
//! nonnegative kernel of tiny support whose Fourier transform is real,
//! nonnegative everywhere, and at least `1/2` on the target band `[-N, N]`.
//! The second half runs the granulation itself: smooth the measure with `F`,
//! locate the cubes at scale `1/M` where the smoothed density is large, pick
//! one peak point per cube, and keep a parity class of cubes so the selected
//! balls are pairwise disjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::GridMeasure;

/// Supremum constant for the window: `sup F <= C1 * N`.
pub const WINDOW_SUP_C1: f64 = 8.0;
/// Overlap constant: a ball of radius `1/N` meets at most `C2 / 2` cubes of
/// side `1/M` once `M <= N/2`; `C2 = 20` absorbs a factor-10 safety margin
/// on top of the exact worst case of 2 strictly-1-separated points per unit
/// interval.
pub const WINDOW_OVERLAP_C2: f64 = 20.0;

/// Combined constant `C3 = sqrt(C1 * C2)` used by the granule threshold.
pub fn window_c3() -> f64 {
    (WINDOW_SUP_C1 * WINDOW_OVERLAP_C2).sqrt()
}

// ---------------------------------------------------------------------------
// The smoothing window
// ---------------------------------------------------------------------------

/// A nonnegative window `F = F2 ⋆ F̌2` on the grid, where `F2` is the
/// normalized indicator of radius `0.1/N` mollified at width `0.025/N`.
/// Stored sparsely: `values[i]` is the density at offset `i - radius`.
///
/// Certified on construction: support radius at most `0.25/N` (well inside
/// `1/N`), unit mass, `sup F <= C1 * N`, and a real transform that is
/// nonnegative (it is an autocorrelation) and at least `1/2` on `[-N, N]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowBump {
    q: usize,
    level_n: u64,
    radius: usize,
    /// Density values at grid offsets `-radius ..= radius`.
    values: Vec<f64>,
    /// Minimum of the transform over `[-N, N]`.
    pub fhat_min_window: f64,
    /// `F̂(0)`, the maximum of the transform.
    pub fhat_max: f64,
    /// Supremum of the density.
    pub sup: f64,
}

impl WindowBump {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn level_n(&self) -> u64 {
        self.level_n
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Density at signed grid offset `j` from the center (0 off support).
    pub fn density(&self, j: i64) -> f64 {
        let r = self.radius as i64;
        if j < -r || j > r {
            0.0
        } else {
            self.values[(j + r) as usize]
        }
    }

    /// All (offset, density) pairs of the support.
    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let r = self.radius as i64;
        self.values.iter().enumerate().map(move |(i, &v)| (i as i64 - r, v))
    }

    /// Transform value `F̂(xi)`, real by symmetry: direct cosine sum over
    /// the sparse support.
    pub fn spectrum_at(&self, xi: i64) -> f64 {
        let q = self.q as f64;
        let mut acc = 0.0;
        for (j, v) in self.support() {
            acc += v * (std::f64::consts::TAU * (xi * j) as f64 / q).cos();
        }
        acc / q
    }
}

/// Builds and certifies the window for band `[-N, N]` on the grid of order
/// `Q`. Requires `Q > 16 N` so the inner indicator spans at least one grid
/// step.
pub fn build_window_bump(q: usize, level_n: u64) -> Result<WindowBump> {
    if level_n == 0 {
        return Err(Error::RejectedInput("window band must be at least 1".into()));
    }
    if (q as u64) <= 16 * level_n {
        return Err(Error::RejectedInput(format!(
            "grid order {q} too small for band {level_n}; need Q > 16 N"
        )));
    }
    let qf = q as f64;
    let nf = level_n as f64;
    let r2 = (0.1 * qf / nf).floor() as i64; // >= 1 since Q/N > 16
    let rm = (0.0125 * qf / nf).floor() as i64; // may be 0: mollifier off

    // F2 = indicator(r2) ⋆ indicator(rm), normalized to unit mass. The
    // convolution of two centered indicators is the trapezoid below.
    let r_f2 = r2 + rm;
    let denom = ((2 * r2 + 1) * (2 * rm + 1)) as f64;
    let f2: Vec<f64> = (-r_f2..=r_f2)
        .map(|j| {
            let lo = (-rm).max(j - r2);
            let hi = rm.min(j + r2);
            ((hi - lo + 1).max(0) as f64) / denom * qf
        })
        .collect();

    // F = F2 ⋆ F̌2 by direct autocorrelation: exact nonnegativity.
    let radius = (2 * r_f2) as usize;
    let mut values = vec![0.0f64; 2 * radius + 1];
    let len = f2.len() as i64;
    for (jj, slot) in values.iter_mut().enumerate() {
        let j = jj as i64 - radius as i64;
        let mut acc = 0.0;
        for k in 0..len {
            let k2 = k - j;
            if (0..len).contains(&k2) {
                acc += f2[k as usize] * f2[k2 as usize];
            }
        }
        *slot = acc / qf;
    }

    // Exact unit mass.
    let mass: f64 = values.iter().sum::<f64>() / qf;
    for v in values.iter_mut() {
        *v /= mass;
    }

    let sup = values.iter().cloned().fold(0.0, f64::max);
    let mut bump = WindowBump {
        q,
        level_n,
        radius,
        values,
        fhat_min_window: 0.0,
        fhat_max: 0.0,
        sup,
    };

    // Certification.
    let supp_torus = radius as f64 / qf;
    if supp_torus > 0.25 / nf {
        return Err(Error::InternalAssertion(format!(
            "window support {supp_torus} exceeds 0.25/N = {}",
            0.25 / nf
        )));
    }
    if sup > WINDOW_SUP_C1 * nf {
        return Err(Error::InternalAssertion(format!(
            "window sup {sup} exceeds C1 * N = {}",
            WINDOW_SUP_C1 * nf
        )));
    }
    let mut fhat_min = f64::INFINITY;
    for xi in 0..=level_n as i64 {
        let v = bump.spectrum_at(xi);
        if v < -1e-12 {
            return Err(Error::InternalAssertion(format!(
                "window transform negative at {xi}: {v}"
            )));
        }
        fhat_min = fhat_min.min(v);
    }
    if fhat_min < 0.5 {
        return Err(Error::InternalAssertion(format!(
            "window transform dips to {fhat_min} inside the band"
        )));
    }
    bump.fhat_min_window = fhat_min;
    bump.fhat_max = bump.spectrum_at(0);
    Ok(bump)
}

// ---------------------------------------------------------------------------
// Granulation
// ---------------------------------------------------------------------------

/// One selected granule: a cube index at scale `1/M`, the peak point of the
/// smoothed density inside it, and the exact measure it captures in the ball
/// of radius `1/N` around the peak.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Granule {
    pub cube: u64,
    /// Grid index of the smoothed-density peak inside the cube.
    pub peak: usize,
    /// Value of the smoothed density at the peak.
    pub peak_value: f64,
    /// Exact mass of the input measure within `|x - peak| < 1/N`.
    pub captured: f64,
}

/// A certified family of granules: pairwise `1/M`-separated balls of radius
/// `1/N` capturing a definite mass fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GranuleFamily {
    pub level_n: u64,
    pub scale_m: u64,
    pub granules: Vec<Granule>,
    pub captured_mass: f64,
    /// Guaranteed lower bound `(t s)^3 / (2^16 C3^3)` on `captured_mass`.
    pub captured_bound: f64,
}

/// Per-cube diagnostic row of the granulation trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeRecord {
    pub cube: u64,
    pub smoothed_mass: f64,
    pub ball_mass: f64,
    pub h_value: f64,
    pub selected: bool,
}

/// Trace of one granulation run: thresholds, constants, the phase rotation
/// used for alignment, and per-cube diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GranulationTrace {
    pub level_n: u64,
    pub scale_m: u64,
    pub threshold_t: f64,
    pub richness_s: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub theta: f64,
    pub level_set_size: usize,
    pub separated_size: usize,
    pub aligned_size: usize,
    pub cubes: Vec<CubeRecord>,
    pub parity_kept: u8,
    pub min_pair_gap: u64,
}

/// Output of [`granulate`]: the certified family plus the full trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GranulationOutcome {
    pub family: GranuleFamily,
    pub trace: GranulationTrace,
}

/// Runs the granulation step for a measure whose spectrum is `t`-rich at
/// scale `(N, M)`.
///
/// Hypotheses: `Q > 16 N`; `M` even with `2 <= M <= N/2`; and the level set
/// `{|a| <= N : |mu_hat(a)| > t}` (taken together with `a = 0`) must have at
/// least `s * (N/M)` strictly `M`-separated representatives — the richness
/// that makes a mass-carrying family possible at all.
///
/// Construction: phase-align the largest quadrant class of the separated
/// representatives; smooth the measure with the certified window `F`; score
/// each cube `[i/M, (i+1)/M)` by `H_i`, the ratio of its best smoothed value
/// to `C1 N` times the measure of the surrounding `1/M`-ball; keep cubes
/// with `sqrt(H_i) > t s / (2^5 C3)`; take the best parity class (even or
/// odd cube index — `M` even makes both classes wrap cleanly) so granules
/// are `1/M`-separated; and certify the captured mass against
/// `(t s)^3 / (2^16 C3^3)`.
pub fn granulate(
    mu: &GridMeasure,
    level_n: u64,
    scale_m: u64,
    threshold_t: f64,
    richness_s: f64,
) -> Result<GranulationOutcome> {
    let q = mu.q();
    if (q as u64) <= 16 * level_n {
        return Err(Error::RejectedInput(format!(
            "grid order {q} too small for band {level_n}; need Q > 16 N"
        )));
    }
    if scale_m < 2 || scale_m % 2 != 0 {
        return Err(Error::RejectedInput(format!(
            "cube count M must be even and at least 2; got {scale_m}"
        )));
    }
    if 2 * scale_m > level_n {
        return Err(Error::RejectedInput(format!(
            "need M <= N/2; got M = {scale_m}, N = {level_n}"
        )));
    }
    if !(threshold_t > 0.0 && threshold_t <= 1.0) {
        return Err(Error::RejectedInput(format!(
            "threshold t must be in (0, 1]; got {threshold_t}"
        )));
    }
    if !(richness_s > 0.0) {
        return Err(Error::RejectedInput(format!(
            "richness s must be positive; got {richness_s}"
        )));
    }

    // Level set at threshold t over [-N, N], including 0 (the smoothing
    // argument runs over the full set of large coefficients, and 0 always
    // qualifies for a nontrivial measure).
    let spec = crate::measure::full_spectrum(mu);
    let n_i = level_n as i64;
    let mut level: Vec<i64> = Vec::new();
    for a in -n_i..=n_i {
        if spec.coeff(a).norm() > threshold_t {
            level.push(a);
        }
    }
    let level_set_size = level.len();

    // Strictly M-separated representatives (greedy max) and the richness
    // hypothesis.
    let pts: Vec<f64> = level.iter().map(|&a| a as f64).collect();
    let kept = crate::spectral::max_separated_indices(&pts, scale_m as f64);
    let separated: Vec<i64> = kept.into_iter().map(|i| level[i]).collect();
    let separated_size = separated.len();
    let needed = richness_s * level_n as f64 / scale_m as f64;
    if (separated_size as f64) <= needed {
        return Err(Error::HypothesisFailed(format!(
            "separated level-set size {separated_size} does not exceed s*(N/M) = {needed}"
        )));
    }

    // Phase alignment of the separated representatives.
    let values: Vec<num_complex::Complex64> =
        separated.iter().map(|&a| spec.coeff(a)).collect();
    let (chosen, theta) = crate::addcomb::phase_partition(&values)?;
    let aligned_size = chosen.len();

    // Smooth with the certified window: lambda = mu * F, sparse convolution.
    let window = build_window_bump(q, level_n)?;
    let mut lambda = vec![0.0f64; q];
    for (j, w) in mu.weights().iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for (off, v) in window.support() {
            let idx = (j as i64 + off).rem_euclid(q as i64) as usize;
            lambda[idx] += w * v;
        }
    }

    // Ball radius 1/N in grid units, strict inequality |delta| < Q/N.
    let delta_max: i64 = if q as u64 % level_n == 0 {
        (q as u64 / level_n) as i64 - 1
    } else {
        (q as f64 / level_n as f64).floor() as i64
    };

    let c1 = WINDOW_SUP_C1;
    let c2 = WINDOW_OVERLAP_C2;
    let c3 = window_c3();
    let select_thresh = threshold_t * richness_s / (32.0 * c3);

    // Score each cube [floor(i Q / M), floor((i+1) Q / M)).
    let mut cubes: Vec<CubeRecord> = Vec::with_capacity(scale_m as usize);
    let mut candidates: Vec<Granule> = Vec::new();
    for i in 0..scale_m {
        let lo = (i as u128 * q as u128 / scale_m as u128) as usize;
        let hi = ((i + 1) as u128 * q as u128 / scale_m as u128) as usize;
        // Peak of the smoothed density in the cube; ties to the smallest
        // index.
        let mut peak = lo;
        let mut peak_value = f64::NEG_INFINITY;
        let mut smoothed_mass = 0.0;
        for j in lo..hi {
            smoothed_mass += lambda[j] / q as f64;
            if lambda[j] > peak_value {
                peak_value = lambda[j];
                peak = j;
            }
        }
        // Mass of mu in the 1/M-ball around the cube center.
        let center = (lo + hi) / 2;
        let ball_r = (q as u64 / scale_m) as i64;
        let mut ball_mass = 0.0;
        for d in -ball_r..=ball_r {
            let idx = (center as i64 + d).rem_euclid(q as i64) as usize;
            ball_mass += mu.weights()[idx];
        }
        let h_value = if ball_mass > 0.0 {
            (peak_value / (c1 * level_n as f64) / ball_mass).min(1.0)
        } else {
            0.0
        };
        let selected = h_value.sqrt() > select_thresh;
        if selected {
            // Exact captured mass in the strict 1/N-ball around the peak.
            let mut captured = 0.0;
            for d in -delta_max..=delta_max {
                let idx = (peak as i64 + d).rem_euclid(q as i64) as usize;
                captured += mu.weights()[idx];
            }
            candidates.push(Granule { cube: i, peak, peak_value, captured });
        }
        cubes.push(CubeRecord { cube: i, smoothed_mass, ball_mass, h_value, selected });
    }

    // Parity split: M is even, so each class wraps cleanly on the torus.
    // Keep the class with more captured mass.
    let mass_of = |par: u64| -> f64 {
        candidates.iter().filter(|g| g.cube % 2 == par).map(|g| g.captured).sum()
    };
    let parity_kept = if mass_of(0) >= mass_of(1) { 0u8 } else { 1u8 };
    let granules: Vec<Granule> = candidates
        .into_iter()
        .filter(|g| g.cube % 2 == parity_kept as u64)
        .collect();
    let captured_mass: f64 = granules.iter().map(|g| g.captured).sum();

    // Certify pairwise separation exactly: peaks in distinct same-parity
    // cubes differ by more than Q/M on the torus.
    let mut min_pair_gap = u64::MAX;
    for (i, g1) in granules.iter().enumerate() {
        for g2 in granules.iter().skip(i + 1) {
            let d = (g1.peak as i64 - g2.peak as i64).unsigned_abs();
            let gap = d.min(q as u64 - d);
            min_pair_gap = min_pair_gap.min(gap);
        }
    }
    if granules.len() > 1 && min_pair_gap as u128 * scale_m as u128 <= q as u128 {
        return Err(Error::InternalAssertion(format!(
            "granule peaks only {min_pair_gap} apart; need more than Q/M = {}",
            q as f64 / scale_m as f64
        )));
    }

    let captured_bound =
        (threshold_t * richness_s).powi(3) / (65536.0 * c3.powi(3));
    if captured_mass < captured_bound {
        return Err(Error::InternalAssertion(format!(
            "captured mass {captured_mass} fell below bound {captured_bound}"
        )));
    }

    let trace = GranulationTrace {
        level_n,
        scale_m,
        threshold_t,
        richness_s,
        c1,
        c2,
        c3,
        theta,
        level_set_size,
        separated_size,
        aligned_size,
        cubes,
        parity_kept,
        min_pair_gap: if min_pair_gap == u64::MAX { 0 } else { min_pair_gap },
    };
    let family = GranuleFamily {
        level_n,
        scale_m,
        granules,
        captured_mass,
        captured_bound,
    };
    Ok(GranulationOutcome { family, trace })
}

/// Re-verifies a granule family against its measure: exact captured masses,
/// pairwise separation, and the certified bound. Returns the recomputed
/// captured mass.
pub fn verify_family(mu: &GridMeasure, family: &GranuleFamily) -> Result<f64> {
    let q = mu.q();
    let delta_max: i64 = if q as u64 % family.level_n == 0 {
        (q as u64 / family.level_n) as i64 - 1
    } else {
        (q as f64 / family.level_n as f64).floor() as i64
    };
    let mut total = 0.0;
    for g in &family.granules {
        if g.peak >= q {
            return Err(Error::RejectedInput(format!(
                "granule peak {} outside grid of order {q}",
                g.peak
            )));
        }
        let mut captured = 0.0;
        for d in -delta_max..=delta_max {
            let idx = (g.peak as i64 + d).rem_euclid(q as i64) as usize;
            captured += mu.weights()[idx];
        }
        if (captured - g.captured).abs() > 1e-12 {
            return Err(Error::InternalAssertion(format!(
                "granule at cube {} records mass {} but recount gives {captured}",
                g.cube, g.captured
            )));
        }
        total += captured;
    }
    for (i, g1) in family.granules.iter().enumerate() {
        for g2 in family.granules.iter().skip(i + 1) {
            let d = (g1.peak as i64 - g2.peak as i64).unsigned_abs();
            let gap = d.min(q as u64 - d);
            if gap as u128 * family.scale_m as u128 <= q as u128 {
                return Err(Error::InternalAssertion(format!(
                    "granules at cubes {} and {} are only {gap} apart",
                    g1.cube, g2.cube
                )));
            }
        }
    }
    if total < family.captured_bound {
        return Err(Error::InternalAssertion(format!(
            "recounted mass {total} below certified bound {}",
            family.captured_bound
        )));
    }
    Ok(total)
}
