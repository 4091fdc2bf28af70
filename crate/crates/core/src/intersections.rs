//! Intersections A ∩ (g(B) + z) of two point clouds at matching width δ, swept
//! over translations and Haar rotations.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::ifs::{box_dimension_of_points, DimensionEstimate};
use crate::measure::{bbox_diagonal, DiscreteMeasure, GridIndex};
use crate::numeric::{derive_seed, median, pairwise_sum};
use crate::projections::{sample_haar, RotationSample};

/// Default dimension tolerance for a pass.
pub const DEFAULT_TOL: f64 = 0.2;
/// A rotation fails when fewer than this fraction of its translations pass.
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.05;

/// g(B) with a grid index of cell δ, reusable across translations.
pub struct MatchIndex {
    dim: usize,
    moved: Vec<f64>,
    index: GridIndex,
    delta: f64,
}

impl MatchIndex {
    pub fn new(b: &DiscreteMeasure, g: &DMatrix<f64>, delta: f64) -> Result<Self> {
        let n = b.dim();
        if g.nrows() != n || g.ncols() != n {
            return Err(LabError::DimensionMismatch {
                expected: n,
                actual: g.nrows(),
            });
        }
        if !(delta > 0.0) {
            return Err(LabError::arg("matching width must be positive"));
        }
        let mut moved = vec![0.0; b.len() * n];
        for (q, out) in b.points().chunks_exact(n).zip(moved.chunks_exact_mut(n)) {
            for i in 0..n {
                out[i] = (0..n).map(|j| g[(i, j)] * q[j]).sum();
            }
        }
        let index = GridIndex::build(&moved, n, delta);
        Ok(MatchIndex {
            dim: n,
            moved,
            index,
            delta,
        })
    }

    /// True when some point of g(B) + z lies within δ of `p`.
    pub fn hits(&self, p: &[f64], z: &[f64]) -> bool {
        let mut x = [0.0; crate::measure::MAX_DIM];
        for k in 0..self.dim {
            x[k] = p[k] - z[k];
        }
        self.index.any_within(&self.moved, &x[..self.dim], self.delta)
    }

    /// Indices j of B with |p - (g b_j + z)| <= δ.
    pub fn partners(&self, p: &[f64], z: &[f64], mut f: impl FnMut(usize)) {
        let mut x = [0.0; crate::measure::MAX_DIM];
        for k in 0..self.dim {
            x[k] = p[k] - z[k];
        }
        self.index.for_each_within(&self.moved, &x[..self.dim], self.delta, &mut f);
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Indices of A-points within δ of g(B) + z, in increasing order.
pub fn matched_indices(a: &DiscreteMeasure, idx: &MatchIndex, z: &[f64]) -> Vec<usize> {
    (0..a.len()).filter(|&i| idx.hits(a.point(i), z)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSpec {
    pub g: RotationSample,
    pub z: Vec<f64>,
    pub delta: f64,
    /// Box-count range; clipped to [δ, diameter of the matched set].
    pub scales: (f64, f64),
    /// Frostman exponents of A and B.
    pub s: f64,
    pub t: f64,
}

impl IntersectionSpec {
    pub fn target(&self) -> f64 {
        self.s + self.t - self.g.dim() as f64
    }

    /// s + (n-1) t / n > n.
    pub fn threshold_ok(&self) -> bool {
        threshold(self.s, self.t, self.g.dim()) > self.g.dim() as f64
    }
}

pub fn threshold(s: f64, t: f64, n: usize) -> f64 {
    let n = n as f64;
    s + (n - 1.0) * t / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionResult {
    pub z: Vec<f64>,
    /// Indices into A of the matched points.
    pub indices: Vec<usize>,
    pub mass: f64,
    pub dim_estimate: Option<DimensionEstimate>,
    pub empty: bool,
    pub target: f64,
}

impl IntersectionResult {
    pub fn points(&self, a: &DiscreteMeasure) -> Vec<f64> {
        self.indices.iter().flat_map(|&i| a.point(i).iter().copied()).collect()
    }

    pub fn dim(&self) -> Option<f64> {
        self.dim_estimate.as_ref().map(|d| d.value)
    }
}

fn check_pair(a: &DiscreteMeasure, b: &DiscreteMeasure, delta: f64) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(LabError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let floor = a.gen_scale().max(b.gen_scale());
    if delta < floor {
        return Err(LabError::ResolutionExceeded {
            requested: delta,
            gen_scale: floor,
        });
    }
    Ok(())
}

fn estimate(points: &[f64], dim: usize, delta: f64, scales: (f64, f64)) -> Option<DimensionEstimate> {
    let lo = scales.0.max(delta);
    let hi = scales.1.min(bbox_diagonal(points, dim));
    box_dimension_of_points(points, dim, lo, hi).ok()
}

fn evaluate(a: &DiscreteMeasure, idx: &MatchIndex, z: &[f64], scales: (f64, f64), target: f64) -> IntersectionResult {
    let indices = matched_indices(a, idx, z);
    let masses: Vec<f64> = indices.iter().map(|&i| a.weights()[i]).collect();
    let pts: Vec<f64> = indices.iter().flat_map(|&i| a.point(i).iter().copied()).collect();
    IntersectionResult {
        z: z.to_vec(),
        mass: pairwise_sum(&masses),
        dim_estimate: if indices.is_empty() {
            None
        } else {
            estimate(&pts, a.dim(), idx.delta(), scales)
        },
        empty: indices.is_empty(),
        indices,
        target,
    }
}

/// A-points within δ of g(B) + z, with a box-dimension estimate of that set.
pub fn intersect(a: &DiscreteMeasure, b: &DiscreteMeasure, spec: &IntersectionSpec) -> Result<IntersectionResult> {
    check_pair(a, b, spec.delta)?;
    if spec.z.len() != a.dim() {
        return Err(LabError::DimensionMismatch {
            expected: a.dim(),
            actual: spec.z.len(),
        });
    }
    let idx = MatchIndex::new(b, &spec.g.matrix, spec.delta)?;
    Ok(evaluate(a, &idx, &spec.z, spec.scales, spec.target()))
}

/// Mass of the B-points whose image g b + z lies within δ of A.
pub fn reverse_mass(a: &DiscreteMeasure, b: &DiscreteMeasure, g: &DMatrix<f64>, z: &[f64], delta: f64) -> Result<f64> {
    check_pair(a, b, delta)?;
    let n = a.dim();
    let index = GridIndex::build(a.points(), n, delta);
    let masses: Vec<f64> = (0..b.len())
        .filter_map(|j| {
            let q = b.point(j);
            let y: Vec<f64> = (0..n).map(|i| (0..n).map(|k| g[(i, k)] * q[k]).sum::<f64>() + z[i]).collect();
            index.any_within(a.points(), &y, delta).then(|| b.weights()[j])
        })
        .collect();
    Ok(pairwise_sum(&masses))
}

/// How translations are drawn in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZSampling {
    /// z = a - g b + jitter with a ~ A, b ~ B and jitter uniform in B(0, δ).
    OverlapAdapted,
    /// z uniform on the bounding box of A - g(B).
    UniformWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub delta: f64,
    pub scales: (f64, f64),
    pub s: f64,
    pub t: f64,
    pub tol: f64,
    pub sampling: ZSampling,
    pub failure_threshold: f64,
}

impl SweepOptions {
    pub fn new(delta: f64, scales: (f64, f64), s: f64, t: f64) -> Self {
        SweepOptions {
            delta,
            scales,
            s,
            t,
            tol: DEFAULT_TOL,
            sampling: ZSampling::OverlapAdapted,
            failure_threshold: DEFAULT_FAILURE_THRESHOLD,
        }
    }
}

/// One translation of a sweep, without the matched point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRow {
    pub z: Vec<f64>,
    pub matched: usize,
    pub mass: f64,
    pub dim: Option<f64>,
    pub stderr: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationSweep {
    pub g_seed: u64,
    pub target: f64,
    pub tol: f64,
    pub threshold_ok: bool,
    pub rows: Vec<TranslationRow>,
    pub n_empty: usize,
    /// Among nonempty intersections with an estimate.
    pub pass_fraction: f64,
    pub median_dim: Option<f64>,
    /// Lebesgue volume of the bounding box of A - g(B).
    pub window_volume: f64,
    /// pass_fraction times window_volume.
    pub positive_measure_proxy: f64,
}

fn difference_window(a: &DiscreteMeasure, idx: &MatchIndex) -> (Vec<f64>, Vec<f64>) {
    let n = a.dim();
    let bounds = |pts: &[f64]| {
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for p in pts.chunks_exact(n) {
            for k in 0..n {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    };
    let (alo, ahi) = bounds(a.points());
    let (blo, bhi) = bounds(&idx.moved);
    let lo = (0..n).map(|k| alo[k] - bhi[k]).collect();
    let hi = (0..n).map(|k| ahi[k] - blo[k]).collect();
    (lo, hi)
}

fn draw_z(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    idx: &MatchIndex,
    window: &(Vec<f64>, Vec<f64>),
    sampling: ZSampling,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = a.dim();
    match sampling {
        ZSampling::OverlapAdapted => {
            let i = a.sample_indices(1, rng)[0];
            let j = b.sample_indices(1, rng)[0];
            // Uniform point of B(0, δ): Gaussian direction, radius δ·U^{1/n}.
            let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let rad = idx.delta * rng.random::<f64>().powf(1.0 / n as f64);
            (0..n)
                .map(|k| a.point(i)[k] - idx.moved[j * n + k] + rad * dir[k] / norm)
                .collect()
        }
        ZSampling::UniformWindow => (0..n)
            .map(|k| window.0[k] + (window.1[k] - window.0[k]) * rng.random::<f64>())
            .collect(),
    }
}

fn sweep_with_index(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    g: &RotationSample,
    idx: &MatchIndex,
    n_translations: usize,
    opts: &SweepOptions,
    seed: u64,
) -> TranslationSweep {
    let n = a.dim();
    let target = opts.s + opts.t - n as f64;
    let window = difference_window(a, idx);
    let rows: Vec<TranslationRow> = (0..n_translations as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k]));
            let z = draw_z(a, b, idx, &window, opts.sampling, &mut rng);
            let r = evaluate(a, idx, &z, opts.scales, target);
            let dim = r.dim();
            TranslationRow {
                matched: r.indices.len(),
                mass: r.mass,
                stderr: r.dim_estimate.as_ref().map(|d| d.stderr),
                pass: dim.is_some_and(|d| d >= target - opts.tol),
                dim,
                z,
            }
        })
        .collect();
    let dims: Vec<f64> = rows.iter().filter_map(|r| r.dim).collect();
    let n_empty = rows.iter().filter(|r| r.matched == 0).count();
    let passes = rows.iter().filter(|r| r.pass).count();
    let pass_fraction = if dims.is_empty() {
        0.0
    } else {
        passes as f64 / dims.len() as f64
    };
    let window_volume: f64 = (0..n).map(|k| window.1[k] - window.0[k]).product();
    TranslationSweep {
        g_seed: g.seed,
        target,
        tol: opts.tol,
        threshold_ok: threshold(opts.s, opts.t, n) > n as f64,
        n_empty,
        pass_fraction,
        median_dim: (!dims.is_empty()).then(|| median(&dims)),
        window_volume,
        positive_measure_proxy: pass_fraction * window_volume,
        rows,
    }
}

/// Intersections over `n_translations` translations for a fixed rotation.
pub fn translation_sweep(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    g: &RotationSample,
    n_translations: usize,
    opts: &SweepOptions,
    seed: u64,
) -> Result<TranslationSweep> {
    check_pair(a, b, opts.delta)?;
    let idx = MatchIndex::new(b, &g.matrix, opts.delta)?;
    Ok(sweep_with_index(a, b, g, &idx, n_translations, opts, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalProbe {
    pub rotations_tested: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    /// n(n-1)/2 - (s + (n-1)t/n - n): the dimension bound for the exceptional set.
    pub exceptional_dim_bound: f64,
    pub threshold_ok: bool,
    pub failure_threshold: f64,
    pub sweeps: Vec<TranslationSweep>,
}

impl ExceptionalProbe {
    /// Fraction of all nonempty intersections (over every rotation) that pass.
    pub fn overall_pass_fraction(&self) -> f64 {
        let (mut pass, mut total) = (0usize, 0usize);
        for s in &self.sweeps {
            for r in &s.rows {
                if r.dim.is_some() {
                    total += 1;
                    pass += r.pass as usize;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            pass as f64 / total as f64
        }
    }
}

pub fn exceptional_dim_bound(s: f64, t: f64, n: usize) -> f64 {
    let nf = n as f64;
    nf * (nf - 1.0) / 2.0 - (threshold(s, t, n) - nf)
}

/// Haar rotations g_k (seeded by index), each with its own translation sweep.
pub fn rotation_sweep(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    n_rotations: usize,
    n_translations: usize,
    opts: &SweepOptions,
    seed: u64,
) -> Result<ExceptionalProbe> {
    check_pair(a, b, opts.delta)?;
    let n = a.dim();
    let sweeps: Vec<TranslationSweep> = (0..n_rotations as u64)
        .into_par_iter()
        .map(|k| {
            let g = sample_haar(n, derive_seed(seed, &[k, 0]))?;
            let idx = MatchIndex::new(b, &g.matrix, opts.delta)?;
            Ok(sweep_with_index(a, b, &g, &idx, n_translations, opts, derive_seed(seed, &[k, 1])))
        })
        .collect::<Result<_>>()?;
    let failures = sweeps
        .iter()
        .filter(|s| s.pass_fraction < opts.failure_threshold)
        .count();
    Ok(ExceptionalProbe {
        rotations_tested: n_rotations,
        failures,
        failure_fraction: if n_rotations == 0 {
            0.0
        } else {
            failures as f64 / n_rotations as f64
        },
        exceptional_dim_bound: exceptional_dim_bound(opts.s, opts.t, n),
        threshold_ok: threshold(opts.s, opts.t, n) > n as f64,
        failure_threshold: opts.failure_threshold,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::builtin;

    fn spec(z: Vec<f64>) -> IntersectionSpec {
        IntersectionSpec {
            g: RotationSample::identity(2),
            z,
            delta: 1.0 / 32.0,
            scales: (1.0 / 32.0, 0.5),
            s: 2.0,
            t: 2.0,
        }
    }

    #[test]
    fn full_overlap() {
        let sq = builtin::uniform_grid(2, 32).unwrap();
        let r = intersect(&sq, &sq, &spec(vec![0.0, 0.0])).unwrap();
        assert_eq!(r.indices.len(), sq.len());
        assert!((r.mass - 1.0).abs() < 1e-12);
        assert!((r.dim().unwrap() - 2.0).abs() < 0.1);
        assert_eq!(r.target, 2.0);
    }

    #[test]
    fn disjoint_supports() {
        let sq = builtin::uniform_grid(2, 32).unwrap();
        let r = intersect(&sq, &sq, &spec(vec![10.0, 0.0])).unwrap();
        assert!(r.empty);
        assert!(r.dim_estimate.is_none());
        assert_eq!(r.mass, 0.0);
    }

    #[test]
    fn bound_arithmetic() {
        let s = 3f64.ln() / 2f64.ln();
        assert!((threshold(s, s, 2) - 2.3774).abs() < 1e-4);
        assert!((exceptional_dim_bound(s, s, 2) - 0.6226).abs() < 1e-4);
    }

    #[test]
    fn matched_mass_grows_with_delta() {
        let a = builtin::uniform_random(2, 2000, 1).unwrap();
        let b = builtin::uniform_random(2, 2000, 2).unwrap();
        let g = sample_haar(2, 7).unwrap();
        let mut last = 0.0;
        for delta in [0.025, 0.03, 0.05, 0.1] {
            let m = intersect(
                &a,
                &b,
                &IntersectionSpec {
                    g: g.clone(),
                    z: vec![0.3, 0.1],
                    delta,
                    scales: (delta, 0.5),
                    s: 2.0,
                    t: 2.0,
                },
            )
            .unwrap()
            .mass;
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn overlap_adapted_translations_never_miss() {
        let a = builtin::uniform_random(2, 500, 1).unwrap();
        let g = sample_haar(2, 3).unwrap();
        let sw = translation_sweep(&a, &a, &g, 40, &SweepOptions::new(0.05, (0.05, 1.0), 2.0, 2.0), 9).unwrap();
        assert_eq!(sw.n_empty, 0);
    }
}
