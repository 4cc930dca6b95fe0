//! Smoothing kernels on the torus: power bumps, the marginal profile of the
//! planar bump, the Fejér kernel, and the granulation window. Each profile
//! is sampled on the grid, normalized to unit mass, and shipped with its
//! (real) spectrum so callers can read certified coefficient bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::GridMeasure;

/// Kernel selector with its shape parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `(1 - (x/r)^2)^4` on `|x| <= r`, normalized.
    Bump { scale_r: f64 },
    /// `(1 - (x/r)^2)^{9/2}` on `|x| <= r`: the 1-D marginal of the planar
    /// bump, normalized.
    Marginal { scale_r: f64 },
    /// Fejér kernel of degree `n`: `(1/n) (sin(pi n x) / sin(pi x))^2`.
    Fejer { degree: u64 },
    /// The granulation window for band `[-N, N]` (see `granulate`).
    Window { level_n: u64 },
}

/// A sampled kernel: density values on the grid (centered at 0) and the
/// real Fourier coefficients up to `n_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelProfile {
    pub kind: KernelKind,
    pub q: usize,
    /// Density samples; index `j` is the grid point `j/Q` (wrapping).
    pub samples: Vec<f64>,
    /// Real coefficients, index `n + n_max` for `n in [-n_max, n_max]`.
    pub spectrum: Vec<f64>,
    pub n_max: usize,
}

impl KernelProfile {
    pub fn coeff(&self, n: i64) -> f64 {
        let idx = n + self.n_max as i64;
        assert!(
            (0..self.spectrum.len() as i64).contains(&idx),
            "coefficient {n} outside kernel window {}",
            self.n_max
        );
        self.spectrum[idx as usize]
    }

    /// The kernel as a unit-mass grid measure.
    pub fn to_measure(&self) -> Result<GridMeasure> {
        let qf = self.q as f64;
        GridMeasure::from_weights(self.q, self.samples.iter().map(|&v| v / qf).collect())
    }
}

/// Normalized bump profile `c (1 - u^2)^4` on `[-1, 1]` with unit integral:
/// `c = 315/256`.
pub fn bump_phi(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - u * u;
        315.0 / 256.0 * w * w * w * w
    }
}

/// Normalized marginal profile `c (1 - u^2)^{9/2}` on `[-1, 1]` with unit
/// integral: `c = 256 / (63 pi)`, obtained by integrating the planar bump
/// `(1 - |x|^2)^4` along one coordinate.
pub fn marginal_psi(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        256.0 / (63.0 * std::f64::consts::PI) * (1.0 - u * u).powf(4.5)
    }
}

/// Fejér kernel of degree `n` at torus position `u` (period 1); the
/// removable singularity at integer `u` takes the value `n`.
pub fn fejer(n: u64, u: f64) -> f64 {
    let nf = n as f64;
    let s = (std::f64::consts::PI * u).sin();
    if s.abs() < 1e-12 {
        return nf;
    }
    let t = (std::f64::consts::PI * nf * u).sin() / s;
    t * t / nf
}

/// Signed torus position of grid index `j`: the representative of `j/Q` in
/// `[-1/2, 1/2)`.
fn signed_pos(j: usize, q: usize) -> f64 {
    let half = q / 2;
    if j <= half && j != q - j {
        j as f64 / q as f64
    } else {
        j as f64 / q as f64 - 1.0
    }
}

/// Samples the chosen kernel on the grid of order `q`, normalizes it to
/// unit mass, and computes its coefficients up to `n_max`. The spectrum of
/// every kernel here is real (even symmetry); a residual imaginary part
/// beyond roundoff is an internal assertion failure.
pub fn build_kernel(kind: &KernelKind, q: usize, n_max: usize) -> Result<KernelProfile> {
    if q < 4 {
        return Err(Error::RejectedInput(format!("grid order {q} too small")));
    }
    if 2 * n_max + 1 > q {
        return Err(Error::RejectedInput(format!(
            "coefficient window {n_max} too wide for grid order {q}"
        )));
    }
    let samples: Vec<f64> = match kind {
        KernelKind::Bump { scale_r } => {
            check_scale(*scale_r)?;
            (0..q).map(|j| bump_phi(signed_pos(j, q) / scale_r) / scale_r).collect()
        }
        KernelKind::Marginal { scale_r } => {
            check_scale(*scale_r)?;
            (0..q).map(|j| marginal_psi(signed_pos(j, q) / scale_r) / scale_r).collect()
        }
        KernelKind::Fejer { degree } => {
            let n = *degree;
            if n == 0 {
                return Err(Error::RejectedInput("Fejér degree must be positive".into()));
            }
            if q as u64 <= 2 * n {
                return Err(Error::RejectedInput(format!(
                    "grid order {q} too small for exact Fejér sampling of degree {n}; need Q > 2n"
                )));
            }
            (0..q).map(|j| fejer(n, j as f64 / q as f64)).collect()
        }
        KernelKind::Window { level_n } => {
            let w = crate::granulate::build_window_bump(q, *level_n)?;
            let mut s = vec![0.0f64; q];
            for (off, v) in w.support() {
                s[off.rem_euclid(q as i64) as usize] += v;
            }
            s
        }
    };

    // Exact unit mass on the grid.
    let mass: f64 = samples.iter().sum::<f64>() / q as f64;
    if !(mass > 0.0) {
        return Err(Error::RejectedInput(
            "kernel vanished after sampling; grid too coarse for the scale".into(),
        ));
    }
    let samples: Vec<f64> = samples.into_iter().map(|v| v / mass).collect();

    let mu = GridMeasure::from_weights(q, samples.iter().map(|&v| v / q as f64).collect())?;
    let sp = crate::measure::spectrum(&mu, n_max);
    let mut spectrum = Vec::with_capacity(2 * n_max + 1);
    for n in -(n_max as i64)..=n_max as i64 {
        let c = sp.coeff(n);
        if c.im.abs() > 1e-9 {
            return Err(Error::InternalAssertion(format!(
                "kernel coefficient at {n} has imaginary part {}",
                c.im
            )));
        }
        spectrum.push(c.re);
    }
    Ok(KernelProfile { kind: kind.clone(), q, samples, spectrum, n_max })
}

fn check_scale(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::RejectedInput(format!(
            "kernel scale must lie in (0, 1/2); got {r}"
        )));
    }
    Ok(())
}
