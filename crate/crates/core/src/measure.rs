//! Measures on the discretized torus and their Fourier spectra.
//!
//! A measure lives on the grid `{0/Q, 1/Q, …, (Q-1)/Q}` of the 1-D torus.
//! All multiplicative pushforwards `x ↦ s·x` act exactly on grid indices
//! (`j ↦ s·j mod Q`), so the random-walk evolution below introduces no
//! interpolation error whatsoever — only ordinary float accumulation.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiplier::MultiplierSet;

/// Tolerance for mass bookkeeping (pure float accumulation, no modelling error).
pub const MASS_TOL: f64 = 1e-12;

/// Tolerance for spectral identities (DFT path agreement, walk identity).
pub const SPECTRAL_TOL: f64 = 1e-10;

/// A nonnegative measure of total mass ≤ 1 on the grid `Z/Q`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMeasure {
    q: usize,
    weights: Vec<f64>,
    mass: f64,
}

/// Compensated (Neumaier) summation. Mass totals run over `Q` entries, and
/// naive accumulation drifts by `O(Q·eps)` — past `MASS_TOL` on large grids.
fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl GridMeasure {
    /// Build a measure from raw weights, validating the invariants:
    /// all weights finite and ≥ 0, total mass ≤ 1 + `MASS_TOL`.
    pub fn from_weights(q: usize, weights: Vec<f64>) -> Result<Self> {
        if q == 0 {
            return Err(Error::RejectedInput("grid resolution Q must be positive".into()));
        }
        if weights.len() != q {
            return Err(Error::RejectedInput(format!(
                "weight vector length {} does not match Q={q}",
                weights.len()
            )));
        }
        for (j, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::RejectedInput(format!(
                    "weight at index {j} is {w}; weights must be finite and nonnegative"
                )));
            }
        }
        let mass = compensated_sum(&weights);
        if mass > 1.0 + MASS_TOL {
            return Err(Error::RejectedInput(format!(
                "total mass {mass} exceeds 1 beyond tolerance"
            )));
        }
        Ok(GridMeasure { q, weights, mass })
    }

    /// The zero measure on `Z/Q`.
    pub fn zero(q: usize) -> Self {
        GridMeasure { q, weights: vec![0.0; q], mass: 0.0 }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Rescale to a probability measure. Errors on the zero measure.
    pub fn normalized(&self) -> Result<GridMeasure> {
        if self.mass <= 0.0 {
            return Err(Error::RejectedInput(
                "cannot normalize a measure with zero mass".into(),
            ));
        }
        let inv = 1.0 / self.mass;
        let weights: Vec<f64> = self.weights.iter().map(|w| w * inv).collect();
        let mass = compensated_sum(&weights);
        Ok(GridMeasure { q: self.q, weights, mass })
    }

    /// Re-check the stored mass against a fresh sum (test hook).
    pub fn mass_consistent(&self) -> bool {
        let fresh = compensated_sum(&self.weights);
        (fresh - self.mass).abs() <= MASS_TOL
    }
}

/// Symbolic description of a measure, used by constructors and config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    /// Uniform probability measure: weight 1/Q everywhere.
    Uniform,
    /// Unit point mass at grid index `index`.
    Dirac { index: usize },
    /// Unit point mass at the grid point nearest to the fraction `x` ∈ [0,1).
    DiracAt { x: f64 },
    /// Convex combination: `parts` are (weight, kind) with weights ≥ 0 summing to 1.
    Mixture { parts: Vec<(f64, MeasureKind)> },
    /// Explicit weight vector (validated like `from_weights`).
    Weights { values: Vec<f64> },
}

/// Materialize a `MeasureKind` on the grid `Z/Q`.
pub fn make_measure(kind: &MeasureKind, q: usize) -> Result<GridMeasure> {
    if q == 0 {
        return Err(Error::RejectedInput("grid resolution Q must be positive".into()));
    }
    match kind {
        MeasureKind::Uniform => {
            let w = 1.0 / q as f64;
            GridMeasure::from_weights(q, vec![w; q])
        }
        MeasureKind::Dirac { index } => {
            if *index >= q {
                return Err(Error::RejectedInput(format!(
                    "dirac index {index} out of range for Q={q}"
                )));
            }
            let mut weights = vec![0.0; q];
            weights[*index] = 1.0;
            GridMeasure::from_weights(q, weights)
        }
        MeasureKind::DiracAt { x } => {
            if !x.is_finite() || *x < 0.0 || *x >= 1.0 {
                return Err(Error::RejectedInput(format!(
                    "dirac position {x} must lie in [0,1)"
                )));
            }
            let index = ((x * q as f64).round() as usize) % q;
            make_measure(&MeasureKind::Dirac { index }, q)
        }
        MeasureKind::Mixture { parts } => {
            if parts.is_empty() {
                return Err(Error::RejectedInput("mixture must have at least one part".into()));
            }
            let total: f64 = parts.iter().map(|(w, _)| *w).sum();
            if (total - 1.0).abs() > MASS_TOL {
                return Err(Error::RejectedInput(format!(
                    "mixture weights sum to {total}, expected 1"
                )));
            }
            let mut weights = vec![0.0; q];
            for (w, part) in parts {
                if !w.is_finite() || *w < 0.0 {
                    return Err(Error::RejectedInput(format!(
                        "mixture weight {w} must be finite and nonnegative"
                    )));
                }
                let component = make_measure(part, q)?;
                for (acc, c) in weights.iter_mut().zip(component.weights()) {
                    *acc += w * c;
                }
            }
            GridMeasure::from_weights(q, weights)
        }
        MeasureKind::Weights { values } => GridMeasure::from_weights(q, values.clone()),
    }
}

/// Unit complex number `exp(-2πi·m/Q)`, with the phase reduced mod Q in exact
/// integer arithmetic first so large frequency·index products lose no precision.
#[inline]
fn unit_root(m: i64, q: usize) -> Complex64 {
    let r = m.rem_euclid(q as i64) as f64;
    let ang = -std::f64::consts::TAU * r / q as f64;
    Complex64::new(ang.cos(), ang.sin())
}

/// Fourier coefficients of a grid measure over a symmetric frequency window.
///
/// `coeff(n) = Σ_j w[j]·exp(-2πi·n·j/Q)` for `|n| ≤ n_max`. Coefficients are
/// Q-periodic in `n`; when `n_max ≥ Q` the window wraps the full period and
/// `aliased` is set (informational, not an error).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    n_max: usize,
    /// Index `i` holds the coefficient at frequency `i - n_max`.
    coeffs: Vec<Complex64>,
    source_mass: f64,
    aliased: bool,
}

impl Spectrum {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn source_mass(&self) -> f64 {
        self.source_mass
    }

    pub fn aliased(&self) -> bool {
        self.aliased
    }

    /// Coefficient at frequency `n`; panics if `|n| > n_max`.
    pub fn coeff(&self, n: i64) -> Complex64 {
        let idx = n + self.n_max as i64;
        self.coeffs[usize::try_from(idx).expect("frequency below -n_max")]
    }

    pub fn abs(&self, n: i64) -> f64 {
        self.coeff(n).norm()
    }

    /// Iterate `(n, coeff)` in ascending frequency order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let n_max = self.n_max as i64;
        self.coeffs.iter().enumerate().map(move |(i, c)| (i as i64 - n_max, *c))
    }

    /// Largest |coeff(n)| over 0 < |n| ≤ bound (0 if the range is empty).
    pub fn sup_abs_nonzero(&self, bound: usize) -> f64 {
        let b = bound.min(self.n_max) as i64;
        let mut sup: f64 = 0.0;
        for n in 1..=b {
            sup = sup.max(self.abs(n)).max(self.abs(-n));
        }
        sup
    }
}

/// Full period-length coefficient table `ŵ(k), k ∈ [0, Q)`, used wherever a
/// coefficient must be read at an arbitrary residue (walk identities, level
/// sets over wide windows).
#[derive(Debug, Clone)]
pub struct FullSpectrum {
    q: usize,
    coeffs: Vec<Complex64>,
}

impl FullSpectrum {
    pub fn q(&self) -> usize {
        self.q
    }

    /// Coefficient at any integer frequency, via mod-Q reduction.
    pub fn coeff(&self, n: i64) -> Complex64 {
        self.coeffs[n.rem_euclid(self.q as i64) as usize]
    }

    pub fn abs(&self, n: i64) -> f64 {
        self.coeff(n).norm()
    }

    /// Restrict to a symmetric window `|n| ≤ n_max`.
    pub fn window(&self, n_max: usize, source_mass: f64) -> Spectrum {
        let coeffs = (-(n_max as i64)..=n_max as i64).map(|n| self.coeff(n)).collect();
        Spectrum { n_max, coeffs, source_mass, aliased: n_max >= self.q }
    }
}

/// Full-period DFT of the weight vector (FFT-backed, works for any Q).
pub fn full_spectrum(mu: &GridMeasure) -> FullSpectrum {
    let q = mu.q();
    let mut buf: Vec<Complex64> =
        mu.weights().iter().map(|&w| Complex64::new(w, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(q);
    fft.process(&mut buf);
    FullSpectrum { q, coeffs: buf }
}

/// Windowed spectrum by direct per-frequency summation. Exact phases via
/// integer mod-Q reduction; cost O(n_max · Q).
pub fn spectrum_direct(mu: &GridMeasure, n_max: usize) -> Spectrum {
    let q = mu.q();
    let mut coeffs = Vec::with_capacity(2 * n_max + 1);
    for n in -(n_max as i64)..=n_max as i64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &w) in mu.weights().iter().enumerate() {
            if w != 0.0 {
                acc += w * unit_root(n * j as i64, q);
            }
        }
        coeffs.push(acc);
    }
    Spectrum { n_max, coeffs, source_mass: mu.mass(), aliased: n_max >= q }
}

/// Windowed spectrum via the full-period FFT table. Cost O(Q log Q).
pub fn spectrum_fft(mu: &GridMeasure, n_max: usize) -> Spectrum {
    full_spectrum(mu).window(n_max, mu.mass())
}

/// Fourier coefficients over the window `|n| ≤ n_max`.
///
/// Dispatches between the two evaluation routes (direct summation for narrow
/// windows, full-period FFT otherwise); the routes agree to `SPECTRAL_TOL`
/// and tests pin that agreement.
pub fn spectrum(mu: &GridMeasure, n_max: usize) -> Spectrum {
    // Direct summation costs (2·n_max+1)·Q; the FFT route Q·log2(Q) plus the
    // window copy. Crossover chosen with generous slack toward the FFT.
    let log_q = usize::BITS - mu.q().leading_zeros();
    if 2 * n_max + 1 <= 4 * log_q as usize {
        spectrum_direct(mu, n_max)
    } else {
        spectrum_fft(mu, n_max)
    }
}

/// Pushforward under `x ↦ s·x`: exact index map `j ↦ s·j mod Q`.
///
/// Satisfies `(T_s μ)^(n) = μ̂(s·n mod Q)` to `SPECTRAL_TOL`.
pub fn pushforward(mu: &GridMeasure, s: u64) -> GridMeasure {
    let q = mu.q();
    let mut weights = vec![0.0; q];
    for (j, &w) in mu.weights().iter().enumerate() {
        if w != 0.0 {
            let target = ((s as u128 * j as u128) % q as u128) as usize;
            weights[target] += w;
        }
    }
    let mass = compensated_sum(&weights);
    GridMeasure { q, weights, mass }
}

/// One step of the multiplicative random walk:
/// `μ ↦ (1/|S|) Σ_{s∈S} T_{s*} μ`. Mass is conserved to `MASS_TOL`.
pub fn walk_step(mu: &GridMeasure, s: &MultiplierSet) -> GridMeasure {
    let q = mu.q();
    let inv = 1.0 / s.len() as f64;
    let mut weights = vec![0.0; q];
    for &m in s.elements() {
        for (j, &w) in mu.weights().iter().enumerate() {
            if w != 0.0 {
                let target = ((m as u128 * j as u128) % q as u128) as usize;
                weights[target] += w * inv;
            }
        }
    }
    let mass = compensated_sum(&weights);
    GridMeasure { q, weights, mass }
}

/// n-fold iterate of `walk_step` (n = 0 returns a clone).
pub fn walk_power(mu: &GridMeasure, s: &MultiplierSet, n: usize) -> GridMeasure {
    let mut cur = mu.clone();
    for _ in 0..n {
        cur = walk_step(&cur, s);
    }
    cur
}

/// Split `μ = μ_rest + μ_region` by a set of grid indices: `μ_region` keeps the
/// weights on `region` (bitwise identical floats), `μ_rest` the complement.
/// The two parts sum back to `μ` weight-wise exactly.
pub fn split_by_union(
    mu: &GridMeasure,
    region: &BTreeSet<usize>,
) -> Result<(GridMeasure, GridMeasure)> {
    let q = mu.q();
    if let Some(&bad) = region.iter().find(|&&j| j >= q) {
        return Err(Error::RejectedInput(format!(
            "region index {bad} out of range for Q={q}"
        )));
    }
    let mut rest = mu.weights().to_vec();
    let mut captured = vec![0.0; q];
    for &j in region {
        captured[j] = rest[j];
        rest[j] = 0.0;
    }
    let rest_mass = compensated_sum(&rest);
    let cap_mass = compensated_sum(&captured);
    Ok((
        GridMeasure { q, weights: rest, mass: rest_mass },
        GridMeasure { q, weights: captured, mass: cap_mass },
    ))
}
