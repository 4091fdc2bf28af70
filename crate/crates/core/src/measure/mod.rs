//! Discrete measures: weighted point clouds standing in for finite Borel measures
//! with compact support, resolved down to a stated generation scale.

pub mod builtin;
pub mod index;
pub mod io;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::{self, linear_fit, pairwise_sum, quantile};
pub use index::{GridIndex, MAX_DIM};

/// Slack allowed when checking that a point lies inside its bounding ball.
const BOUND_SLACK: f64 = 1e-9;

/// Default cap on the number of points a product or IFS expansion may create.
pub const DEFAULT_POINT_CAP: usize = 10_000_000;

/// Provenance and weight normalization carried along with a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub provenance: String,
    /// Product of every explicit weight rescaling applied since construction.
    pub weight_scale: f64,
}

impl Default for MeasureMeta {
    fn default() -> Self {
        MeasureMeta {
            provenance: String::from("anonymous"),
            weight_scale: 1.0,
        }
    }
}

#[derive(Default)]
struct IndexCache {
    by_octave: RwLock<HashMap<i32, Arc<GridIndex>>>,
}

/// Weighted point cloud in R^n.
///
/// Immutable after construction. Ball-query indices are built lazily, one per
/// radius octave, behind a lock so concurrent first queries do not race.
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    gen_scale: f64,
    total_mass: f64,
    bound: f64,
    meta: MeasureMeta,
    cache: IndexCache,
}

impl Clone for DiscreteMeasure {
    fn clone(&self) -> Self {
        DiscreteMeasure {
            dim: self.dim,
            points: self.points.clone(),
            weights: self.weights.clone(),
            gen_scale: self.gen_scale,
            total_mass: self.total_mass,
            bound: self.bound,
            meta: self.meta.clone(),
            cache: IndexCache::default(),
        }
    }
}

impl fmt::Debug for DiscreteMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteMeasure")
            .field("dim", &self.dim)
            .field("len", &self.len())
            .field("gen_scale", &self.gen_scale)
            .field("total_mass", &self.total_mass)
            .field("bound", &self.bound)
            .field("meta", &self.meta)
            .finish()
    }
}

impl PartialEq for DiscreteMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.gen_scale == other.gen_scale
            && self.points == other.points
            && self.weights == other.weights
    }
}

impl DiscreteMeasure {
    /// Builds a measure from a flat coordinate array (`dim` values per point).
    ///
    /// The bounding ball is B(0, 1) when the support fits inside it; otherwise the
    /// measure is flagged as unbounded-by-unit and `bound()` reports the smallest
    /// origin-centred ball that contains it.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>, gen_scale: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LabError::InvalidMeasure(format!(
                "ambient dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if weights.is_empty() {
            return Err(LabError::InvalidMeasure("a measure needs at least one point".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(LabError::InvalidMeasure(format!(
                "{} coordinates do not match {} weights in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(LabError::InvalidMeasure(format!("weights must be positive and finite, found {w}")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidMeasure("coordinates must be finite".into()));
        }
        if !(gen_scale > 0.0) || !gen_scale.is_finite() {
            return Err(LabError::InvalidMeasure(format!("gen_scale must be positive, got {gen_scale}")));
        }
        let max_norm = points
            .chunks_exact(dim)
            .map(numeric::norm)
            .fold(0.0f64, f64::max);
        let bound = if max_norm <= 1.0 + BOUND_SLACK { 1.0 } else { max_norm };
        let total_mass = pairwise_sum(&weights);
        Ok(DiscreteMeasure {
            dim,
            points,
            weights,
            gen_scale,
            total_mass,
            bound,
            meta: MeasureMeta::default(),
            cache: IndexCache::default(),
        })
    }

    pub fn with_meta(mut self, meta: MeasureMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.meta.provenance = provenance.into();
        self
    }

    /// Unit point mass (or weight `w`) at `x`. Exact at every scale, so the
    /// generation scale is set far below anything an experiment resolves.
    pub fn dirac(x: &[f64], w: f64) -> Result<Self> {
        Ok(DiscreteMeasure::new(x.len(), x.to_vec(), vec![w], 1e-12)?.with_provenance("dirac"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gen_scale(&self) -> f64 {
        self.gen_scale
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Radius of the origin-centred closed ball that contains the support.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn in_unit_ball(&self) -> bool {
        self.bound <= 1.0
    }

    pub fn meta(&self) -> &MeasureMeta {
        &self.meta
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for (p, w) in self.points.chunks_exact(self.dim).zip(&self.weights) {
            for (ck, pk) in c.iter_mut().zip(p) {
                *ck += w * pk;
            }
        }
        c.iter_mut().for_each(|x| *x /= self.total_mass);
        c
    }

    /// Diagonal of the axis-aligned bounding box (an upper bound for the diameter).
    pub fn bbox_diameter(&self) -> f64 {
        bbox_diagonal(&self.points, self.dim)
    }

    fn index_for(&self, r: f64) -> Arc<GridIndex> {
        let octave = if r > 0.0 { r.log2().ceil().clamp(-60.0, 60.0) as i32 } else { -60 };
        if let Some(idx) = self.cache.by_octave.read().unwrap().get(&octave) {
            return Arc::clone(idx);
        }
        let mut guard = self.cache.by_octave.write().unwrap();
        Arc::clone(
            guard
                .entry(octave)
                .or_insert_with(|| Arc::new(GridIndex::build(&self.points, self.dim, 2f64.powi(octave)))),
        )
    }

    /// Visits every point in the closed ball B(x, r), in a deterministic order.
    pub fn for_each_in_ball(&self, x: &[f64], r: f64, f: impl FnMut(usize)) {
        assert_eq!(x.len(), self.dim, "query point has the wrong dimension");
        if r < 0.0 || r.is_nan() {
            return;
        }
        self.index_for(r).for_each_within(&self.points, x, r, f);
    }

    /// μ(B(x, r)) over the closed ball; exact over the point cloud.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let mut m = 0.0;
        self.for_each_in_ball(x, r, |i| m += self.weights[i]);
        m
    }

    /// The restriction μ⌞B(center, r).
    pub fn restrict(&self, center: &[f64], r: f64) -> Result<DiscreteMeasure> {
        if center.len() != self.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                actual: center.len(),
            });
        }
        if !(r > 0.0) {
            return Err(LabError::arg("restriction radius must be positive"));
        }
        let mut idx = Vec::new();
        self.for_each_in_ball(center, r, |i| idx.push(i));
        if idx.is_empty() {
            return Err(LabError::EmptyRestriction);
        }
        idx.sort_unstable();
        self.subset(&idx).map(|m| {
            let prov = format!("{}|restrict(r={r})", self.meta.provenance);
            m.with_provenance(prov)
        })
    }

    /// Sub-cloud at the given point indices; weights and generation scale unchanged.
    pub fn subset(&self, idx: &[usize]) -> Result<DiscreteMeasure> {
        let d = self.dim;
        let mut pts = Vec::with_capacity(idx.len() * d);
        let mut w = Vec::with_capacity(idx.len());
        for &i in idx {
            pts.extend_from_slice(self.point(i));
            w.push(self.weights[i]);
        }
        Ok(DiscreteMeasure::new(d, pts, w, self.gen_scale)?.with_meta(self.meta.clone()))
    }

    /// r^{-s} T_{a,r}# μ with T_{a,r}(x) = (x - a)/r.
    ///
    /// Requires the support to lie in B(a, r) so the image lies in B(0, 1).
    pub fn rescale(&self, a: &[f64], r: f64, s: f64) -> Result<DiscreteMeasure> {
        if a.len() != self.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                actual: a.len(),
            });
        }
        if !(r > 0.0) || !(s > 0.0) {
            return Err(LabError::arg("rescale needs r > 0 and s > 0"));
        }
        let lim = r * (1.0 + BOUND_SLACK);
        if self
            .points
            .chunks_exact(self.dim)
            .any(|p| numeric::dist2(p, a).sqrt() > lim)
        {
            return Err(LabError::arg("support is not contained in B(a, r)"));
        }
        let factor = r.powf(-s);
        let pts: Vec<f64> = self
            .points
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(a).map(|(x, ak)| (x - ak) / r).collect::<Vec<_>>())
            .collect();
        let w: Vec<f64> = self.weights.iter().map(|w| w * factor).collect();
        let meta = MeasureMeta {
            provenance: format!("{}|rescale(r={r},s={s})", self.meta.provenance),
            weight_scale: self.meta.weight_scale * factor,
        };
        Ok(DiscreteMeasure::new(self.dim, pts, w, self.gen_scale / r)?.with_meta(meta))
    }

    /// Multiplies every weight by `factor`, recording it in the metadata.
    pub fn scale_weights(&self, factor: f64) -> Result<DiscreteMeasure> {
        let w: Vec<f64> = self.weights.iter().map(|w| w * factor).collect();
        let meta = MeasureMeta {
            provenance: self.meta.provenance.clone(),
            weight_scale: self.meta.weight_scale * factor,
        };
        Ok(DiscreteMeasure::new(self.dim, self.points.clone(), w, self.gen_scale)?.with_meta(meta))
    }

    /// Image under x ↦ g x + shift. Similarities are assumed, so the generation
    /// scale is multiplied by the operator norm bound supplied in `lipschitz`.
    pub fn affine_image(&self, g: &DMatrix<f64>, shift: &[f64], lipschitz: f64) -> Result<DiscreteMeasure> {
        if g.ncols() != self.dim || shift.len() != g.nrows() {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                actual: g.ncols(),
            });
        }
        let out_dim = g.nrows();
        let mut pts = Vec::with_capacity(self.len() * out_dim);
        for p in self.points.chunks_exact(self.dim) {
            for row in 0..out_dim {
                let mut acc = shift[row];
                for (k, x) in p.iter().enumerate() {
                    acc += g[(row, k)] * x;
                }
                pts.push(acc);
            }
        }
        Ok(DiscreteMeasure::new(out_dim, pts, self.weights.clone(), self.gen_scale * lipschitz)?
            .with_meta(self.meta.clone()))
    }

    /// Rotated copy g#μ for an orthogonal `g`.
    pub fn rotate(&self, g: &DMatrix<f64>) -> Result<DiscreteMeasure> {
        self.affine_image(g, &vec![0.0; self.dim], 1.0)
    }

    pub fn translate(&self, z: &[f64]) -> Result<DiscreteMeasure> {
        self.affine_image(&DMatrix::identity(self.dim, self.dim), z, 1.0)
    }

    /// Draws `n` point indices with probability proportional to weight.
    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut cum = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cum.push(acc);
        }
        (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                cum.partition_point(|c| *c <= u).min(self.len() - 1)
            })
            .collect()
    }
}

pub(crate) fn bbox_diagonal(points: &[f64], dim: usize) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points.chunks_exact(dim) {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
}

/// μ × ν on R^{n+l}: every pair of points, weights multiplied.
pub fn product_measure(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cap: usize) -> Result<DiscreteMeasure> {
    let count = mu.len() as u128 * nu.len() as u128;
    if count > cap as u128 {
        return Err(LabError::CapExceeded {
            requested: count,
            cap,
            hint: "subsample the factors (stochastic_sample) or raise the cap",
        });
    }
    let d = mu.dim + nu.dim;
    if d > MAX_DIM {
        return Err(LabError::InvalidMeasure(format!("product dimension {d} exceeds {MAX_DIM}")));
    }
    let mut pts = Vec::with_capacity(count as usize * d);
    let mut w = Vec::with_capacity(count as usize);
    for i in 0..mu.len() {
        for j in 0..nu.len() {
            pts.extend_from_slice(mu.point(i));
            pts.extend_from_slice(nu.point(j));
            w.push(mu.weights[i] * nu.weights[j]);
        }
    }
    let meta = MeasureMeta {
        provenance: format!("({})x({})", mu.meta.provenance, nu.meta.provenance),
        weight_scale: mu.meta.weight_scale * nu.meta.weight_scale,
    };
    Ok(DiscreteMeasure::new(d, pts, w, mu.gen_scale.max(nu.gen_scale))?.with_meta(meta))
}

/// Parameters for [`frostman_exponent`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrostmanOptions {
    pub r_min: f64,
    pub r_max: f64,
    pub n_centers: usize,
    pub seed: u64,
    /// Per-radius quantile of the sampled ball masses used for the fit; discards
    /// the heaviest outlier centres.
    pub guard_quantile: f64,
}

impl FrostmanOptions {
    pub fn new(r_min: f64, r_max: f64, n_centers: usize) -> Self {
        FrostmanOptions {
            r_min,
            r_max,
            n_centers,
            seed: 0x00F0_5714,
            guard_quantile: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostmanReport {
    pub exponent: f64,
    pub constant: f64,
    pub radii_range: (f64, f64),
    pub centers_sampled: usize,
    /// Largest relative excess of any sampled ball over `constant * r^exponent`.
    pub worst_violation: f64,
    pub stderr: f64,
    pub radii: Vec<f64>,
    /// Guarded (quantile) ball mass at each radius.
    pub guarded_mass: Vec<f64>,
}

/// Estimates the Frostman exponent of μ over the resolvable band.
///
/// Ball masses are sampled at centres drawn from μ on dyadic radii
/// `r_max * 2^-k >= r_min`; the exponent is the log-log slope of the per-radius
/// guarded quantile mass, and the constant is the smallest C with
/// `guarded(r) <= C r^s` on every radius.
pub fn frostman_exponent(mu: &DiscreteMeasure, opts: &FrostmanOptions) -> Result<FrostmanReport> {
    if opts.r_min < mu.gen_scale {
        return Err(LabError::ResolutionExceeded {
            requested: opts.r_min,
            gen_scale: mu.gen_scale,
        });
    }
    if !(opts.r_min < opts.r_max) {
        return Err(LabError::arg("frostman_exponent needs r_min < r_max"));
    }
    if opts.n_centers == 0 {
        return Err(LabError::arg("n_centers must be at least 1"));
    }
    let mut radii = Vec::new();
    let mut r = opts.r_max;
    while r >= opts.r_min * (1.0 - 1e-12) {
        radii.push(r);
        r *= 0.5;
    }
    if radii.len() < 2 {
        return Err(LabError::InsufficientScales {
            found: radii.len(),
            needed: 2,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let centers = mu.sample_indices(opts.n_centers, &mut rng);
    let masses: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|&c| {
            let x = mu.point(c);
            radii.iter().map(|&r| mu.ball_mass(x, r)).collect()
        })
        .collect();

    let guarded: Vec<f64> = (0..radii.len())
        .map(|k| {
            let col: Vec<f64> = masses.iter().map(|row| row[k]).collect();
            quantile(&col, opts.guard_quantile)
        })
        .collect();
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = guarded.iter().map(|m| m.ln()).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| LabError::Numerical("degenerate Frostman fit".into()))?;
    let exponent = fit.slope.max(0.0);
    let constant = radii
        .iter()
        .zip(&guarded)
        .map(|(r, m)| m / r.powf(exponent))
        .fold(0.0f64, f64::max);
    let mut worst = 0.0f64;
    for row in &masses {
        for (m, r) in row.iter().zip(&radii) {
            worst = worst.max(m / (constant * r.powf(exponent)) - 1.0);
        }
    }
    Ok(FrostmanReport {
        exponent,
        constant,
        radii_range: (*radii.last().unwrap(), radii[0]),
        centers_sampled: centers.len(),
        worst_violation: worst,
        stderr: fit.slope_stderr,
        radii,
        guarded_mass: guarded,
    })
}

/// Rescales weights so the sampled Frostman constant for exponent `s` is 1, i.e.
/// μ(B(x, r)) <= r^s on every sampled ball. Returns the measure and the factor.
pub fn frostman_normalize(mu: &DiscreteMeasure, s: f64, opts: &FrostmanOptions) -> Result<(DiscreteMeasure, f64)> {
    if opts.r_min < mu.gen_scale {
        return Err(LabError::ResolutionExceeded {
            requested: opts.r_min,
            gen_scale: mu.gen_scale,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let centers = mu.sample_indices(opts.n_centers.max(1), &mut rng);
    let mut radii = Vec::new();
    let mut r = opts.r_max;
    while r >= opts.r_min * (1.0 - 1e-12) {
        radii.push(r);
        r *= 0.5;
    }
    let worst = centers
        .par_iter()
        .map(|&c| {
            radii
                .iter()
                .map(|&r| mu.ball_mass(mu.point(c), r) / r.powf(s))
                .fold(0.0f64, f64::max)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0f64, f64::max);
    if !(worst > 0.0) {
        return Err(LabError::Numerical("no mass found in any sampled ball".into()));
    }
    let factor = 1.0 / worst;
    Ok((mu.scale_weights(factor)?, factor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub point: Vec<f64>,
    pub exponent: f64,
    pub lower_density: f64,
    pub upper_density: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Log-log slope of the density ratio against r; strongly negative slopes
    /// mean the ratio blows up as r shrinks.
    pub trend_exponent: f64,
    pub diverging: bool,
}

/// Finite-scale lower/upper s-densities: min and max over `radii` of
/// (2r)^{-s} μ(B(x, r)).
pub fn density_estimate(mu: &DiscreteMeasure, x: &[f64], s: f64, radii: &[f64]) -> Result<DensityReport> {
    if radii.is_empty() {
        return Err(LabError::arg("density_estimate needs at least one radius"));
    }
    if let Some(&r) = radii.iter().find(|&&r| r < mu.gen_scale) {
        return Err(LabError::ResolutionExceeded {
            requested: r,
            gen_scale: mu.gen_scale,
        });
    }
    let values: Vec<f64> = radii
        .iter()
        .map(|&r| (2.0 * r).powf(-s) * mu.ball_mass(x, r))
        .collect();
    let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = values.iter().copied().fold(0.0f64, f64::max);
    let positive: Vec<(f64, f64)> = radii
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
    let trend = linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(0.0);
    Ok(DensityReport {
        point: x.to_vec(),
        exponent: s,
        lower_density: lower,
        upper_density: upper,
        radii: radii.to_vec(),
        values,
        trend_exponent: trend,
        diverging: trend < -0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::builtin;
    use super::*;

    #[test]
    fn dirac_ball_mass() {
        let d = DiscreteMeasure::dirac(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(d.ball_mass(&[0.0, 0.0], 0.5), 1.0);
        assert_eq!(d.ball_mass(&[1.0, 0.0], 0.5), 0.0);
    }

    #[test]
    fn uniform_disk_mass_matches_area() {
        let mu = builtin::uniform_random(2, 10_000, 11).unwrap();
        let m = mu.ball_mass(&[0.5, 0.5], 0.25);
        let area = std::f64::consts::PI * 0.0625;
        // binomial sd ~ sqrt(p(1-p)/N) ~ 0.004
        assert!((m - area).abs() < 0.016, "{m} vs {area}");
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(DiscreteMeasure::new(2, vec![0.0, 0.0], vec![0.0], 0.1).is_err());
        assert!(DiscreteMeasure::new(2, vec![0.0], vec![1.0], 0.1).is_err());
        assert!(DiscreteMeasure::new(1, vec![0.0], vec![1.0], 0.0).is_err());
        assert!(DiscreteMeasure::new(1, vec![f64::NAN], vec![1.0], 0.1).is_err());
        assert!(DiscreteMeasure::new(9, vec![0.0; 9], vec![1.0], 0.1).is_err());
    }

    #[test]
    fn bound_flag_tracks_support() {
        let inside = DiscreteMeasure::new(2, vec![0.6, 0.8], vec![1.0], 0.1).unwrap();
        assert!(inside.in_unit_ball());
        let outside = DiscreteMeasure::new(2, vec![1.0, 1.0], vec![1.0], 0.1).unwrap();
        assert!(!outside.in_unit_ball());
        assert!((outside.bound() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn restrict_whole_support_is_identity() {
        let mu = builtin::uniform_random(2, 500, 3).unwrap();
        let r = mu.restrict(&[0.5, 0.5], 10.0).unwrap();
        assert_eq!(r, mu);
    }

    #[test]
    fn restrict_outside_errors() {
        let d = DiscreteMeasure::dirac(&[0.0, 0.0], 1.0).unwrap();
        assert!(matches!(d.restrict(&[1.0, 0.0], 0.5), Err(LabError::EmptyRestriction)));
    }

    #[test]
    fn restrict_quarter_disk() {
        let mu = builtin::uniform_random(2, 10_000, 5).unwrap();
        let r = mu.restrict(&[0.0, 0.0], 0.5).unwrap();
        let want = std::f64::consts::PI / 16.0;
        assert!((r.total_mass() - want).abs() < 0.016);
    }

    #[test]
    fn rescale_dirac() {
        let a = [0.3, -0.2];
        let d = DiscreteMeasure::dirac(&a, 2.0).unwrap();
        let out = d.rescale(&a, 0.25, 1.5).unwrap();
        assert_eq!(out.point(0), &[0.0, 0.0]);
        assert!((out.weights()[0] - 2.0 * 0.25f64.powf(-1.5)).abs() < 1e-12);
        assert!((out.meta().weight_scale - 0.25f64.powf(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn rescale_interval() {
        let r = 0.25;
        let n = 1000;
        let pts: Vec<f64> = (0..n).map(|i| r * (i as f64 + 0.5) / n as f64).collect();
        let mu = DiscreteMeasure::new(1, pts, vec![1.0 / n as f64; n], r / n as f64).unwrap();
        let out = mu.rescale(&[0.0], r, 1.0).unwrap();
        assert!((out.total_mass() - 1.0 / r).abs() < 1e-12 / r);
        assert!(out.points().iter().all(|x| (0.0..=1.0).contains(x)));
        assert!((out.gen_scale() - 1.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn rescale_requires_containment() {
        let mu = builtin::uniform_random(2, 100, 1).unwrap();
        assert!(mu.rescale(&[0.5, 0.5], 0.1, 1.0).is_err());
    }

    #[test]
    fn product_of_diracs_and_small_clouds() {
        let a = DiscreteMeasure::dirac(&[0.1], 2.0).unwrap();
        let b = DiscreteMeasure::dirac(&[0.2, 0.3], 3.0).unwrap();
        let p = product_measure(&a, &b, 10).unwrap();
        assert_eq!(p.point(0), &[0.1, 0.2, 0.3]);
        assert_eq!(p.weights(), &[6.0]);

        let two = DiscreteMeasure::new(1, vec![0.0, 0.5], vec![0.5; 2], 0.1).unwrap();
        let three = DiscreteMeasure::new(1, vec![0.0, 0.3, 0.6], vec![1.0 / 3.0; 3], 0.2).unwrap();
        let p = product_measure(&two, &three, 10).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.weights().iter().all(|w| (w - 1.0 / 6.0).abs() < 1e-15));
        assert_eq!(p.gen_scale(), 0.2);
        assert!(matches!(product_measure(&two, &three, 5), Err(LabError::CapExceeded { .. })));
    }

    #[test]
    fn frostman_of_dirac_is_zero() {
        let d = DiscreteMeasure::dirac(&[0.0, 0.0], 1.0).unwrap();
        let rep = frostman_exponent(&d, &FrostmanOptions::new(1e-3, 0.5, 4)).unwrap();
        assert!(rep.exponent.abs() < 1e-12);
        assert!((rep.constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frostman_rejects_subresolution_radii() {
        let mu = builtin::uniform_random(2, 100, 1).unwrap();
        let err = frostman_exponent(&mu, &FrostmanOptions::new(1e-6, 0.5, 4)).unwrap_err();
        assert!(matches!(err, LabError::ResolutionExceeded { .. }));
    }

    #[test]
    fn frostman_of_square_is_two() {
        let mu = builtin::uniform_grid(2, 256).unwrap();
        let rep = frostman_exponent(&mu, &FrostmanOptions::new(1.0 / 128.0, 0.25, 200)).unwrap();
        assert!((rep.exponent - 2.0).abs() < 0.1, "{}", rep.exponent);
        assert!(rep.worst_violation >= 0.0);
    }

    #[test]
    fn segment_density_is_one() {
        let mu = builtin::segment(10_000).unwrap();
        let radii = numeric::dyadic_scales(2f64.powi(-8), 2f64.powi(-4));
        let rep = density_estimate(&mu, &[0.5, 0.0], 1.0, &radii).unwrap();
        assert!((rep.lower_density - 1.0).abs() < 0.05);
        assert!(rep.lower_density <= rep.upper_density);
        assert!(!rep.diverging);
    }

    #[test]
    fn dirac_density_diverges() {
        let d = DiscreteMeasure::dirac(&[0.2, 0.2], 1.0).unwrap();
        let radii = [0.01, 0.1];
        let rep = density_estimate(&d, &[0.2, 0.2], 1.0, &radii).unwrap();
        assert!((rep.upper_density - 50.0).abs() < 1e-9);
        assert!((rep.lower_density - 5.0).abs() < 1e-9);
        assert!(rep.diverging);
    }

    #[test]
    fn density_needs_radii() {
        let d = DiscreteMeasure::dirac(&[0.0], 1.0).unwrap();
        assert!(density_estimate(&d, &[0.0], 1.0, &[]).is_err());
    }

    #[test]
    fn normalization_caps_sampled_balls() {
        let mu = builtin::uniform_grid(2, 64).unwrap();
        let opts = FrostmanOptions::new(1.0 / 32.0, 0.5, 50);
        let (nu, factor) = frostman_normalize(&mu, 2.0, &opts).unwrap();
        assert!(factor > 0.0);
        assert!((nu.meta().weight_scale - factor).abs() < 1e-15);
        let rep = frostman_exponent(&nu, &opts).unwrap();
        assert!(rep.guarded_mass.iter().zip(&rep.radii).all(|(m, r)| *m <= r * r * (1.0 + 1e-9)));
    }
}
