//! Riesz s-energies of discrete measures, computed as a pair sum in space and as
//! a weighted integral of |μ̂|² in frequency.
//!
//! The frequency form used here is
//!
//! ```text
//! I_s(μ) = c(n,s) ∫_0^∞ σ(μ)(r) r^{s-1} dr
//! ```
//!
//! where σ is the spherical average with the probability normalization. The
//! radial integral is evaluated in the variable u = r^s, which removes the
//! singularity at the origin, with composite Simpson on a uniform u-grid.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fourier::{auto_directions, spherical_average};
use crate::measure::{builtin, DiscreteMeasure};
use crate::numeric::pairwise_sum;

/// Quadrature for the radial frequency integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    /// Upper frequency cutoff R.
    pub r_max: f64,
    /// Simpson nodes on [0, R^s]; rounded up to an odd count.
    pub n_nodes: usize,
    /// Fixed direction count per radius; `None` picks one per radius.
    pub n_directions: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptions {
    pub s: f64,
    /// Pair distances below this are clamped.
    pub mollify_scale: f64,
    pub fourier_radial_grid: RadialGrid,
    /// c(n,s); NaN until calibrated.
    pub calibration_constant: f64,
}

impl EnergyOptions {
    /// Uncalibrated options with cutoff R = 1/(4·mollify_scale) and 513 nodes.
    pub fn new(s: f64, mollify_scale: f64) -> Self {
        EnergyOptions {
            s,
            mollify_scale,
            fourier_radial_grid: RadialGrid {
                r_max: 0.25 / mollify_scale,
                n_nodes: 513,
                n_directions: None,
            },
            calibration_constant: f64::NAN,
        }
    }

    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.fourier_radial_grid.r_max = r_max;
        self
    }

    pub fn with_nodes(mut self, n_nodes: usize) -> Self {
        self.fourier_radial_grid.n_nodes = n_nodes;
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.calibration_constant = c;
        self
    }

    /// Looks up (or computes) c(n,s) for the given ambient dimension.
    pub fn calibrated(self, n: usize) -> Result<Self> {
        Ok(self.with_constant(calibrate_cns(n, self.s)?))
    }
}

fn check_exponent(mu: &DiscreteMeasure, s: f64) -> Result<()> {
    if !(s > 0.0 && s < mu.dim() as f64) {
        return Err(LabError::arg(format!(
            "energy exponent must satisfy 0 < s < n = {}, got {s}",
            mu.dim()
        )));
    }
    Ok(())
}

/// Σ_{i≠j} w_i w_j max(|p_i − p_j|, mollify_scale)^{-s}.
pub fn energy_spatial(mu: &DiscreteMeasure, opts: &EnergyOptions) -> Result<f64> {
    check_exponent(mu, opts.s)?;
    if !(opts.mollify_scale >= mu.gen_scale()) {
        return Err(LabError::arg(format!(
            "mollify_scale {} is below the generation scale {}",
            opts.mollify_scale,
            mu.gen_scale()
        )));
    }
    let dim = mu.dim();
    let pts = mu.points();
    let w = mu.weights();
    let floor2 = opts.mollify_scale * opts.mollify_scale;
    let half = -0.5 * opts.s;
    // Each row sums j > i; the total is doubled at the end.
    let rows: Vec<f64> = (0..mu.len())
        .into_par_iter()
        .map(|i| {
            let p = &pts[i * dim..(i + 1) * dim];
            let terms: Vec<f64> = (i + 1..mu.len())
                .map(|j| {
                    let q = &pts[j * dim..(j + 1) * dim];
                    let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    w[j] * d2.max(floor2).powf(half)
                })
                .collect();
            w[i] * pairwise_sum(&terms)
        })
        .collect();
    Ok(2.0 * pairwise_sum(&rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierEnergy {
    /// c(n,s) times the full radial integral, self-interaction included.
    pub value: f64,
    /// The self-interaction part c·Σw_i²·R^s/s, exact for every cutoff.
    pub diagonal: f64,
    /// `value - diagonal`: the counterpart of the spatial pair sum.
    pub off_diagonal: f64,
    pub r_max: f64,
    pub n_nodes: usize,
    /// False when the last fifth of the u-range carries more than 10% of the integral.
    pub converged: bool,
}

/// The radial integral ∫_0^R σ(r) r^{s-1} dr, without the constant. Returns
/// the full value and the share carried by the top fifth of the u-range.
fn radial_integral(mu: &DiscreteMeasure, s: f64, grid: &RadialGrid) -> Result<(f64, f64)> {
    if !(grid.r_max > 0.0) || grid.n_nodes < 3 {
        return Err(LabError::arg("radial grid needs r_max > 0 and at least 3 nodes"));
    }
    let nodes = grid.n_nodes | 1;
    let u_max = grid.r_max.powf(s);
    let h = u_max / (nodes - 1) as f64;
    let diam = mu.bbox_diameter();
    let mut sigma = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let r = (k as f64 * h).powf(1.0 / s);
        let m = grid
            .n_directions
            .unwrap_or_else(|| auto_directions(mu.dim(), r, diam))
            .max(16);
        sigma.push(spherical_average(mu, r, m)?.value);
    }
    // Composite Simpson, accumulated per panel so the tail share is available.
    let panels: Vec<f64> = (0..(nodes - 1) / 2)
        .map(|k| h / 3.0 * (sigma[2 * k] + 4.0 * sigma[2 * k + 1] + sigma[2 * k + 2]))
        .collect();
    let total = pairwise_sum(&panels) / s;
    let tail_start = panels.len() - panels.len() / 5;
    let tail = pairwise_sum(&panels[tail_start..]) / s;
    Ok((total, if total != 0.0 { tail / total } else { 0.0 }))
}

/// Frequency-side energy. Requires a calibrated constant.
pub fn energy_fourier_side(mu: &DiscreteMeasure, opts: &EnergyOptions) -> Result<FourierEnergy> {
    check_exponent(mu, opts.s)?;
    let c = opts.calibration_constant;
    if !c.is_finite() {
        return Err(LabError::Uncalibrated);
    }
    let grid = opts.fourier_radial_grid;
    if grid.r_max > 1.0 / opts.mollify_scale {
        return Err(LabError::arg("radial cutoff exceeds 1/mollify_scale"));
    }
    let (raw, tail_share) = radial_integral(mu, opts.s, &grid)?;
    let w2 = pairwise_sum(&mu.weights().iter().map(|w| w * w).collect::<Vec<_>>());
    let diagonal = c * w2 * grid.r_max.powf(opts.s) / opts.s;
    Ok(FourierEnergy {
        value: c * raw,
        diagonal,
        off_diagonal: c * raw - diagonal,
        r_max: grid.r_max,
        n_nodes: grid.n_nodes | 1,
        converged: tail_share.abs() <= 0.1,
    })
}

/// Size, spread and seed of the truncated Gaussian reference cloud.
pub const CALIBRATION_POINTS: usize = 2000;
pub const CALIBRATION_SIGMA: f64 = 0.2;
pub const CALIBRATION_SEED: u64 = 0xCA11_B8A7;
/// Frequency cutoff for calibration; the reference transform is negligible beyond it.
pub const CALIBRATION_R_MAX: f64 = 16.0;

/// Ratio of the spatial energy to the uncalibrated off-diagonal frequency
/// integral on `reference`.
pub fn calibration_ratio(reference: &DiscreteMeasure, s: f64) -> Result<f64> {
    let opts = EnergyOptions::new(s, reference.gen_scale()).with_r_max(CALIBRATION_R_MAX);
    let spatial = energy_spatial(reference, &opts)?;
    let raw = energy_fourier_side(reference, &opts.with_constant(1.0))?;
    if !(raw.off_diagonal > 0.0) {
        return Err(LabError::Numerical("non-positive frequency integral during calibration".into()));
    }
    Ok(spatial / raw.off_diagonal)
}

/// c(n,s) from the Gaussian reference cloud; cached per (n, s).
pub fn calibrate_cns(n: usize, s: f64) -> Result<f64> {
    if n == 0 || !(s > 0.0 && s < n as f64) {
        return Err(LabError::arg("calibration needs 0 < s < n"));
    }
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (n, s.to_bits());
    if let Some(&c) = cache.lock().unwrap().get(&key) {
        return Ok(c);
    }
    let reference = builtin::gaussian_cloud(n, CALIBRATION_POINTS, CALIBRATION_SIGMA, CALIBRATION_SEED)?;
    let c = calibration_ratio(&reference, s)?;
    cache.lock().unwrap().insert(key, c);
    Ok(c)
}
