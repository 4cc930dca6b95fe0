//! Constructive toolkit for decomposing a probability measure on the 1-D
//! torus into a granular part and a spectrally small remainder, driven by
//! random-walk evolution under a multiplier set.
//!
//! The torus is discretized as ℤ/Q ("grid measures"); all multiplicative
//! pushforwards are exact integer maps, so the walk itself introduces no
//! numerical error. On top of that sit:
//!
//! - [`measure`]: grid measures, Fourier coefficients (direct / FFT paths),
//!   the multiplicative random-walk step and its spectral identity;
//! - [`multiplier`]: multiplier sets `S ⊆ [L, 2L]` and their interval
//!   regularity certificates;
//! - [`spectral`]: Fourier level sets, covering numbers, separated subsets
//!   and dimension statistics;
//! - [`addcomb`]: additive-combinatorial extraction — Markov selection,
//!   Ruzsa triangle verification, the Balog–Szemerédi–Gowers refinement and
//!   its Fourier-side driver, dyadic regular-subset extraction;
//! - [`kernels`]: compactly supported bump/Fejér profiles with certified
//!   spectral lower bounds;
//! - [`energy`]: Riesz α-energies of grid and planar configurations, spatial
//!   and spectral forms;
//! - [`projection`]: planar lifts, directional projections, projected density
//!   bounds and the directional-energy / projection probes;
//! - [`granulate`]: the Fejér-window granulation step that converts a rich
//!   level set into a mass-carrying family of well-separated granules;
//! - [`decompose`]: the outer iteration that alternates coefficient search,
//!   granule extraction and mass splitting until the remainder is spectrally
//!   small, plus the bootstrap diagnostics it is built from;
//! - [`io`]: serialization helpers shared with the CLI harness.
//!
//! Failure taxonomy lives in [`error`]: rejected inputs, hypothesis failures
//! (an input does not satisfy a theorem's premises), extraction failures
//! (search exhausted), and internal assertion failures (a certified
//! inequality did not hold — always a bug or a genuinely out-of-range
//! instance, never silently ignored).

// Validation guards are written `if !(x >= bound)` on purpose: the negated
// form rejects NaN, which the "equivalent" `x < bound` would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod addcomb;
pub mod decompose;
pub mod energy;
pub mod error;
pub mod granulate;
pub(crate) mod intervals;
pub mod io;
pub mod kernels;
pub mod measure;
pub mod multiplier;
pub mod projection;
pub mod spectral;

pub use error::{Error, Result};
pub use measure::{GridMeasure, Spectrum};
pub use multiplier::MultiplierSet;
