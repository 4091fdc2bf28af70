//! Reference measures with known geometry: uniform boxes, segments, circles,
//! Gaussian clouds and balls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::DiscreteMeasure;
use crate::error::{LabError, Result};

/// `n` i.i.d. uniform points on [0,1]^dim, equal weights 1/n.
pub fn uniform_random(dim: usize, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(LabError::arg("uniform_random needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    let gen = (n as f64).powf(-1.0 / dim as f64);
    Ok(DiscreteMeasure::new(dim, pts, vec![1.0 / n as f64; n], gen)?
        .with_provenance(format!("uniform-random(dim={dim},n={n},seed={seed})")))
}

/// Cell midpoints of the regular grid with `per_side` cells per axis on [0,1]^dim.
pub fn uniform_grid(dim: usize, per_side: usize) -> Result<DiscreteMeasure> {
    if per_side == 0 {
        return Err(LabError::arg("uniform_grid needs per_side >= 1"));
    }
    let total = per_side
        .checked_pow(dim as u32)
        .filter(|&t| t <= super::DEFAULT_POINT_CAP)
        .ok_or(LabError::CapExceeded {
            requested: (per_side as u128).pow(dim as u32),
            cap: super::DEFAULT_POINT_CAP,
            hint: "use uniform_random for large boxes",
        })?;
    let h = 1.0 / per_side as f64;
    let mut pts = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        pts.extend(idx.iter().map(|&i| (i as f64 + 0.5) * h));
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < per_side {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(DiscreteMeasure::new(dim, pts, vec![1.0 / total as f64; total], h)?
        .with_provenance(format!("uniform-grid(dim={dim},per_side={per_side})")))
}

/// Unit-mass uniform measure on the segment [0,1] x {0} in the plane.
pub fn segment(n: usize) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(LabError::arg("segment needs n >= 1"));
    }
    let h = 1.0 / n as f64;
    let pts: Vec<f64> = (0..n).flat_map(|i| [(i as f64 + 0.5) * h, 0.0]).collect();
    Ok(DiscreteMeasure::new(2, pts, vec![h; n], h)?.with_provenance(format!("segment(n={n})")))
}

/// Unit-mass uniform measure on the unit circle, `n` equally spaced points.
pub fn circle(n: usize) -> Result<DiscreteMeasure> {
    if n < 3 {
        return Err(LabError::arg("circle needs n >= 3"));
    }
    let step = std::f64::consts::TAU / n as f64;
    let pts: Vec<f64> = (0..n)
        .flat_map(|i| {
            let (s, c) = (i as f64 * step).sin_cos();
            [c, s]
        })
        .collect();
    Ok(DiscreteMeasure::new(2, pts, vec![1.0 / n as f64; n], step)?.with_provenance(format!("circle(n={n})")))
}

/// Isotropic Gaussian cloud with standard deviation `sigma`, truncated to B(0, 1).
pub fn gaussian_cloud(dim: usize, n: usize, sigma: f64, seed: u64) -> Result<DiscreteMeasure> {
    if n == 0 || !(sigma > 0.0) {
        return Err(LabError::arg("gaussian_cloud needs n >= 1 and sigma > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n * dim);
    let mut p = vec![0.0; dim];
    while pts.len() < n * dim {
        for x in p.iter_mut() {
            *x = sigma * rng.sample::<f64, _>(StandardNormal);
        }
        if p.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            pts.extend_from_slice(&p);
        }
    }
    let gen = sigma * (n as f64).powf(-1.0 / dim as f64);
    Ok(DiscreteMeasure::new(dim, pts, vec![1.0 / n as f64; n], gen)?
        .with_provenance(format!("gaussian(dim={dim},n={n},sigma={sigma},seed={seed})")))
}

/// Uniform measure on the ball B(0, radius), `n` i.i.d. points.
pub fn uniform_ball(dim: usize, n: usize, radius: f64, seed: u64) -> Result<DiscreteMeasure> {
    if n == 0 || !(radius > 0.0) {
        return Err(LabError::arg("uniform_ball needs n >= 1 and radius > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n * dim);
    let mut p = vec![0.0; dim];
    while pts.len() < n * dim {
        for x in p.iter_mut() {
            *x = radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        if p.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
            pts.extend_from_slice(&p);
        }
    }
    let gen = radius * (n as f64).powf(-1.0 / dim as f64);
    Ok(DiscreteMeasure::new(dim, pts, vec![1.0 / n as f64; n], gen)?
        .with_provenance(format!("ball(dim={dim},n={n},radius={radius},seed={seed})")))
}
