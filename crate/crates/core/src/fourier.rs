//! Fourier transforms of discrete measures and their spherical averages.
//!
//! μ̂(ξ) = Σ w_i exp(-2πi p_i·ξ). All sums are direct; direction loops run in
//! parallel but every reduction happens in a fixed order, so results do not
//! depend on the thread count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::{linear_fit, pairwise_sum};

const TAU: f64 = std::f64::consts::TAU;

/// Values of the spherical average below this are floored before taking logs.
pub const DECAY_FLOOR: f64 = 1e-30;

pub fn fourier_transform(mu: &DiscreteMeasure, xi: &[f64]) -> Complex64 {
    assert_eq!(xi.len(), mu.dim(), "frequency has the wrong dimension");
    let (mut re, mut im) = (0.0, 0.0);
    for (p, w) in mu.points().chunks_exact(mu.dim()).zip(mu.weights()) {
        let phase: f64 = p.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() * TAU;
        let (s, c) = phase.sin_cos();
        re += w * c;
        im -= w * s;
    }
    Complex64::new(re, im)
}

/// |μ̂(ξ)|², the quantity every energy and spherical average integrates.
pub fn power(mu: &DiscreteMeasure, xi: &[f64]) -> f64 {
    fourier_transform(mu, xi).norm_sqr()
}

/// Deterministic direction set on S^{n-1}: equally spaced angles in the plane,
/// a Fibonacci lattice on S², ±1 on the line, and a fixed-seed Gaussian sample in
/// higher dimensions.
pub fn sphere_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|j| {
                let (s, c) = (TAU * (j as f64 + 0.5) / count as f64).sin_cos();
                vec![c, s]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let (s, c) = (golden * j as f64).sin_cos();
                    vec![rho * c, rho * s, z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5_9E1E);
            (0..count)
                .map(|_| {
                    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect()
        }
    }
}

/// Direction count that resolves the angular bandwidth of |μ̂(r·)|² for a support
/// of diameter `diam`: in the plane the equally spaced rule is exact for angular
/// frequencies below the count, and |μ̂(r e^{iθ})|² is essentially band-limited to
/// 2π r diam.
pub fn auto_directions(n: usize, r: f64, diam: f64) -> usize {
    let band = TAU * r * diam;
    match n {
        1 => 2,
        2 => (1.25 * band).ceil() as usize + 64,
        _ => ((band * band).ceil() as usize + 256).min(20_000),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalAverage {
    pub r: f64,
    pub value: f64,
    pub n_directions: usize,
    /// Set when r <= 1, outside the regime where the decay bound is stated.
    pub small_radius: bool,
}

/// σ(ν)(r): the mean of |ν̂(r v)|² over a deterministic direction set, i.e. the
/// integral against the normalized (probability) surface measure.
pub fn spherical_average(nu: &DiscreteMeasure, r: f64, n_directions: usize) -> Result<SphericalAverage> {
    if !(r >= 0.0) {
        return Err(LabError::arg("radius must be non-negative"));
    }
    if nu.dim() >= 2 && n_directions < 16 {
        return Err(LabError::arg("spherical_average needs at least 16 directions"));
    }
    let dirs = sphere_directions(nu.dim(), n_directions);
    let vals: Vec<f64> = dirs
        .par_iter()
        .map(|v| {
            let xi: Vec<f64> = v.iter().map(|x| x * r).collect();
            power(nu, &xi)
        })
        .collect();
    Ok(SphericalAverage {
        r,
        value: pairwise_sum(&vals) / vals.len() as f64,
        n_directions: dirs.len(),
        small_radius: r <= 1.0,
    })
}

/// Spherical average with the direction count chosen by [`auto_directions`].
pub fn spherical_average_auto(nu: &DiscreteMeasure, r: f64) -> Result<SphericalAverage> {
    let diam = nu.bbox_diameter();
    spherical_average(nu, r, auto_directions(nu.dim(), r, diam).max(16))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted slope of log σ(ν)(r) against log r.
    pub exponent: f64,
    pub stderr: f64,
    pub r_range: (f64, f64),
    /// -(n-1) t' / n.
    pub bound_exponent: f64,
    pub slack: f64,
    pub passes: bool,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// True when any average was numerically zero and had to be floored.
    pub floored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    pub slack: f64,
    /// Fixed direction count; `None` picks one per radius.
    pub n_directions: Option<usize>,
}

impl Default for DecayOptions {
    fn default() -> Self {
        DecayOptions {
            slack: 0.15,
            n_directions: None,
        }
    }
}

/// Fits the decay rate of σ(ν)(r) on the dyadic grid r_min·2^k <= r_max and
/// compares it with the exponent -(n-1) t'/n.
pub fn decay_fit(nu: &DiscreteMeasure, t_prime: f64, r_min: f64, r_max: f64, opts: &DecayOptions) -> Result<DecayFit> {
    let n = nu.dim() as f64;
    if !(r_min > 1.0 && r_min < r_max) {
        return Err(LabError::arg("decay_fit needs 1 < r_min < r_max"));
    }
    if r_max > 1.0 / nu.gen_scale() {
        return Err(LabError::ResolutionExceeded {
            requested: 1.0 / r_max,
            gen_scale: nu.gen_scale(),
        });
    }
    if !(t_prime > 0.0 && t_prime <= n) {
        return Err(LabError::arg("t' must lie in (0, n]"));
    }
    let mut radii = Vec::new();
    let mut r = r_min;
    while r <= r_max * (1.0 + 1e-12) {
        radii.push(r);
        r *= 2.0;
    }
    if radii.len() < 2 {
        return Err(LabError::InsufficientScales {
            found: radii.len(),
            needed: 2,
        });
    }
    let diam = nu.bbox_diameter();
    let mut values = Vec::with_capacity(radii.len());
    let mut floored = false;
    for &r in &radii {
        let m = opts
            .n_directions
            .unwrap_or_else(|| auto_directions(nu.dim(), r, diam))
            .max(16);
        let mut v = spherical_average(nu, r, m)?.value;
        if !(v > DECAY_FLOOR) {
            v = DECAY_FLOOR;
            floored = true;
        }
        values.push(v);
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| LabError::Numerical("degenerate decay fit".into()))?;
    let bound = -(n - 1.0) * t_prime / n;
    Ok(DecayFit {
        exponent: fit.slope,
        stderr: fit.slope_stderr,
        r_range: (radii[0], *radii.last().unwrap()),
        bound_exponent: bound,
        slack: opts.slack,
        passes: fit.slope <= bound + opts.slack,
        radii,
        values,
        floored,
    })
}
