//! δ-tube slices P⁻¹{u} ∩ A, slab masses, and statistical section tests over
//! sampled frames and levels.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::ifs::{box_dimension_of_points, DimensionEstimate};
use crate::intersections::MatchIndex;
use crate::measure::{bbox_diagonal, DiscreteMeasure};
use crate::numeric::{derive_seed, median};
use crate::projections::{sample_haar, FrameSampler, ProjectionFrame};

fn check_frame(mu: &DiscreteMeasure, frame: &ProjectionFrame) -> Result<()> {
    if mu.dim() != frame.source_dim() {
        return Err(LabError::DimensionMismatch {
            expected: frame.source_dim(),
            actual: mu.dim(),
        });
    }
    Ok(())
}

/// μ({y ∈ B(x, r) : |P(y - x)| <= δ}). Requires δ < r/2.
pub fn slab_mass(mu: &DiscreteMeasure, frame: &ProjectionFrame, x: &[f64], r: f64, delta: f64) -> Result<f64> {
    check_frame(mu, frame)?;
    if !(delta > 0.0 && delta < r / 2.0) {
        return Err(LabError::arg("slab_mass needs 0 < δ < r/2"));
    }
    let n = mu.dim();
    let m = frame.target_dim();
    let mut diff = vec![0.0; n];
    let mut u = vec![0.0; m];
    let mut mass = 0.0;
    mu.for_each_in_ball(x, r, |i| {
        for (k, d) in diff.iter_mut().enumerate() {
            *d = mu.point(i)[k] - x[k];
        }
        frame.apply_into(&diff, &mut u);
        if u.iter().map(|v| v * v).sum::<f64>() <= delta * delta {
            mass += mu.weights()[i];
        }
    });
    Ok(mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub frame: ProjectionFrame,
    pub u: Vec<f64>,
    /// Tube half-width.
    pub delta: f64,
}

/// The points p with |P p - u| <= δ, weights intact.
pub fn slice_extract(a: &DiscreteMeasure, spec: &SliceSpec) -> Result<DiscreteMeasure> {
    check_frame(a, &spec.frame)?;
    if spec.delta < a.gen_scale() {
        return Err(LabError::ResolutionExceeded {
            requested: spec.delta,
            gen_scale: a.gen_scale(),
        });
    }
    if spec.u.len() != spec.frame.target_dim() {
        return Err(LabError::DimensionMismatch {
            expected: spec.frame.target_dim(),
            actual: spec.u.len(),
        });
    }
    let mut v = vec![0.0; spec.u.len()];
    let keep: Vec<usize> = (0..a.len())
        .filter(|&i| {
            spec.frame.apply_into(a.point(i), &mut v);
            v.iter().zip(&spec.u).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() <= spec.delta * spec.delta
        })
        .collect();
    if keep.is_empty() {
        return Err(LabError::EmptySlice);
    }
    a.subset(&keep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingOptions {
    pub t: f64,
    pub r_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub n_centers: usize,
    pub seed: u64,
    /// Flag the scan when at least this fraction of centres fail to decrease.
    pub bad_fraction_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingRow {
    pub center: usize,
    pub frame_seed: u64,
    pub r: f64,
    pub delta: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingScan {
    pub t: f64,
    /// Radii in increasing order.
    pub radii: Vec<f64>,
    pub rows: Vec<VanishingRow>,
    /// statistic[c][k]: max over admissible δ of the ratio, centre c, radius radii[k].
    pub statistic: Vec<Vec<f64>>,
    /// Median over centres of the statistic at each radius.
    pub median_by_r: Vec<f64>,
    /// Median over centres of statistic(smallest r) / statistic(largest r).
    pub median_decay: f64,
    /// Centres whose statistic at the smallest radius is not below the largest.
    pub bad_fraction: f64,
    pub flagged: bool,
}

/// Tabulates r^{-t} δ^{-m} slab_mass over the grids at centres x ~ μ with one
/// frame per centre.
pub fn vanishing_ratio_scan(mu: &DiscreteMeasure, sampler: &FrameSampler, opts: &VanishingOptions) -> Result<VanishingScan> {
    if opts.r_grid.len() < 2 || opts.delta_grid.is_empty() || opts.n_centers == 0 {
        return Err(LabError::arg("vanishing scan needs two radii, one δ and one centre"));
    }
    let floor = opts.r_grid.iter().chain(&opts.delta_grid).cloned().fold(f64::INFINITY, f64::min);
    if floor < mu.gen_scale() {
        return Err(LabError::ResolutionExceeded {
            requested: floor,
            gen_scale: mu.gen_scale(),
        });
    }
    let mut radii = opts.r_grid.clone();
    radii.sort_by(f64::total_cmp);
    let m = sampler.target_dim() as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let centers = mu.sample_indices(opts.n_centers, &mut rng);
    let per_center: Vec<(Vec<VanishingRow>, Vec<f64>)> = centers
        .par_iter()
        .enumerate()
        .map(|(c, &i)| {
            let frame = sampler.frame(opts.seed, c as u64)?;
            let x = mu.point(i);
            let mut rows = Vec::new();
            let mut stats = Vec::with_capacity(radii.len());
            for &r in &radii {
                let mut best = f64::NAN;
                for &delta in opts.delta_grid.iter().filter(|&&d| d < r / 2.0) {
                    let ratio = r.powf(-opts.t) * delta.powi(-m) * slab_mass(mu, &frame, x, r, delta)?;
                    best = if best.is_nan() { ratio } else { best.max(ratio) };
                    rows.push(VanishingRow {
                        center: c,
                        frame_seed: frame.seed(),
                        r,
                        delta,
                        ratio,
                    });
                }
                if best.is_nan() {
                    return Err(LabError::arg(format!("no δ in the grid is below r/2 = {}", r / 2.0)));
                }
                stats.push(best);
            }
            Ok((rows, stats))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<VanishingRow> = per_center.iter().flat_map(|(r, _)| r.iter().cloned()).collect();
    let statistic: Vec<Vec<f64>> = per_center.into_iter().map(|(_, s)| s).collect();
    let last = radii.len() - 1;
    let median_by_r = (0..radii.len())
        .map(|k| median(&statistic.iter().map(|s| s[k]).collect::<Vec<_>>()))
        .collect();
    let decays: Vec<f64> = statistic.iter().map(|s| s[0] / s[last]).collect();
    let bad = statistic.iter().filter(|s| s[0] >= s[last]).count();
    let bad_fraction = bad as f64 / statistic.len() as f64;
    Ok(VanishingScan {
        t: opts.t,
        radii,
        rows,
        median_decay: median(&decays),
        median_by_r,
        bad_fraction,
        flagged: bad_fraction >= opts.bad_fraction_limit,
        statistic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionOptions {
    pub n_frames: usize,
    pub n_levels: usize,
    /// Tube half-width.
    pub delta: f64,
    /// Box-count range, clipped per slice to [δ, slice diameter].
    pub scales: (f64, f64),
    pub tol: f64,
    /// Side of the level cells used for the positive-measure proxy.
    pub level_cell: f64,
    pub seed: u64,
}

impl SectionOptions {
    pub fn new(n_frames: usize, n_levels: usize, delta: f64, scales: (f64, f64)) -> Self {
        SectionOptions {
            n_frames,
            n_levels,
            delta,
            scales,
            tol: 0.2,
            level_cell: 1.0 / 16.0,
            seed: 0x5EC7_1095,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSample {
    pub frame_index: usize,
    pub frame_seed: u64,
    pub level_index: usize,
    pub u: Vec<f64>,
    pub n_points: usize,
    pub estimate: Option<DimensionEstimate>,
    /// |dim - target| <= tol.
    pub within: bool,
    /// dim >= target - tol.
    pub at_least: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionStats {
    pub target: f64,
    pub tol: f64,
    pub samples: Vec<SliceSample>,
    pub n_estimated: usize,
    /// Slices too small for three box-count scales.
    pub n_unresolved: usize,
    /// Among estimated slices.
    pub fraction_within: f64,
    /// Among estimated slices; the lower-bound pass rate.
    pub fraction_at_least: f64,
    pub median_dim: Option<f64>,
    /// Fraction of occupied (frame, level-cell) pairs holding a slice within tol.
    pub positive_measure_proxy: f64,
}

fn summarize(target: f64, tol: f64, level_cell: f64, samples: Vec<SliceSample>, product: bool) -> SectionStats {
    let dims: Vec<f64> = samples.iter().filter_map(|s| s.estimate.as_ref().map(|e| e.value)).collect();
    let n_est = dims.len();
    let within = samples.iter().filter(|s| s.within).count();
    let at_least = samples.iter().filter(|s| s.at_least).count();
    let mut cells: BTreeMap<(usize, Vec<i64>), bool> = BTreeMap::new();
    for s in &samples {
        let key: Vec<i64> = s.u.iter().map(|v| (v / level_cell).floor() as i64).collect();
        let ok = if product { s.at_least } else { s.within };
        *cells.entry((s.frame_index, key)).or_insert(false) |= ok;
    }
    let frac = |k: usize| if n_est == 0 { 0.0 } else { k as f64 / n_est as f64 };
    SectionStats {
        target,
        tol,
        n_estimated: n_est,
        n_unresolved: samples.len() - n_est,
        fraction_within: frac(within),
        fraction_at_least: frac(at_least),
        median_dim: (n_est > 0).then(|| median(&dims)),
        positive_measure_proxy: if cells.is_empty() {
            0.0
        } else {
            cells.values().filter(|&&v| v).count() as f64 / cells.len() as f64
        },
        samples,
    }
}

fn slice_sample(
    pts: &[f64],
    dim: usize,
    opts: &SectionOptions,
    target: f64,
    ids: (usize, u64, usize),
    u: Vec<f64>,
) -> SliceSample {
    let n_points = pts.len() / dim;
    let estimate = if n_points == 0 {
        None
    } else {
        let hi = opts.scales.1.min(bbox_diagonal(pts, dim));
        box_dimension_of_points(pts, dim, opts.scales.0.max(opts.delta), hi).ok()
    };
    let value = estimate.as_ref().map(|e| e.value);
    SliceSample {
        frame_index: ids.0,
        frame_seed: ids.1,
        level_index: ids.2,
        u,
        n_points,
        within: value.is_some_and(|d| (d - target).abs() <= opts.tol),
        at_least: value.is_some_and(|d| d >= target - opts.tol),
        estimate,
    }
}

/// Slices of A (Frostman exponent s) along sampled frames, levels u = P x with
/// x ~ A. The target is s - m.
pub fn section_theorem_test(a: &DiscreteMeasure, s: f64, sampler: &FrameSampler, opts: &SectionOptions) -> Result<SectionStats> {
    let m = sampler.target_dim();
    if a.dim() != sampler.source_dim() {
        return Err(LabError::DimensionMismatch {
            expected: sampler.source_dim(),
            actual: a.dim(),
        });
    }
    if !(s > m as f64) {
        return Err(LabError::arg(format!("section test needs s > m = {m}")));
    }
    if opts.delta < a.gen_scale() {
        return Err(LabError::ResolutionExceeded {
            requested: opts.delta,
            gen_scale: a.gen_scale(),
        });
    }
    let target = s - m as f64;
    let n = a.dim();
    let per_frame: Vec<Vec<SliceSample>> = (0..opts.n_frames)
        .into_par_iter()
        .map(|k| {
            let frame = sampler.frame(opts.seed, k as u64)?;
            let proj = crate::projections::project(a, &frame)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[k as u64, 1]));
            let levels = a.sample_indices(opts.n_levels, &mut rng);
            // For lines, sorting the projections turns each slice into a range.
            let order: Option<Vec<usize>> = (m == 1).then(|| {
                let mut o: Vec<usize> = (0..a.len()).collect();
                o.sort_by(|&i, &j| proj.point(i)[0].total_cmp(&proj.point(j)[0]).then(i.cmp(&j)));
                o
            });
            let mut out = Vec::with_capacity(levels.len());
            for (j, &x) in levels.iter().enumerate() {
                let u = proj.point(x).to_vec();
                let members: Vec<usize> = match &order {
                    Some(o) => {
                        let lo = o.partition_point(|&i| proj.point(i)[0] < u[0] - opts.delta);
                        let hi = o.partition_point(|&i| proj.point(i)[0] <= u[0] + opts.delta);
                        let mut v = o[lo..hi].to_vec();
                        v.sort_unstable();
                        v
                    }
                    None => (0..a.len())
                        .filter(|&i| {
                            proj.point(i)
                                .iter()
                                .zip(&u)
                                .map(|(p, q)| (p - q) * (p - q))
                                .sum::<f64>()
                                <= opts.delta * opts.delta
                        })
                        .collect(),
                };
                let pts: Vec<f64> = members.iter().flat_map(|&i| a.point(i).iter().copied()).collect();
                out.push(slice_sample(&pts, n, opts, target, (k, frame.seed(), j), u));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<SliceSample> = per_frame.into_iter().flatten().collect();
    if samples.iter().all(|s| s.n_points == 0) {
        return Err(LabError::EmptySlice);
    }
    Ok(summarize(target, opts.tol, opts.level_cell, samples, false))
}

/// Product form: slices of A x B along P_g(x, y) = x - g y at levels u = P_g(x, y)
/// with x ~ A, y ~ B, for Haar rotations g. The slice is the set of pairs
/// (x', y') with |x' - g y' - u| <= δ, built by matching rather than by forming
/// A x B. Each estimate is checked against the lower bound s + t - n.
pub fn section_product_test(a: &DiscreteMeasure, b: &DiscreteMeasure, s: f64, t: f64, opts: &SectionOptions) -> Result<SectionStats> {
    let n = a.dim();
    if b.dim() != n {
        return Err(LabError::DimensionMismatch {
            expected: n,
            actual: b.dim(),
        });
    }
    if 2 * n > crate::measure::MAX_DIM {
        return Err(LabError::arg("product dimension too large"));
    }
    if !(s + t > n as f64) {
        return Err(LabError::arg("product section test needs s + t > m"));
    }
    let floor = a.gen_scale().max(b.gen_scale());
    if opts.delta < floor {
        return Err(LabError::ResolutionExceeded {
            requested: opts.delta,
            gen_scale: floor,
        });
    }
    let target = s + t - n as f64;
    let per_frame: Vec<Vec<SliceSample>> = (0..opts.n_frames)
        .into_par_iter()
        .map(|k| {
            let g = sample_haar(n, derive_seed(opts.seed, &[k as u64]))?;
            let idx = MatchIndex::new(b, &g.matrix, opts.delta)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[k as u64, 1]));
            let xs = a.sample_indices(opts.n_levels, &mut rng);
            let ys = b.sample_indices(opts.n_levels, &mut rng);
            let mut out = Vec::with_capacity(opts.n_levels);
            for (j, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
                let gy = g.matrix.clone() * nalgebra::DVector::from_column_slice(b.point(y));
                let u: Vec<f64> = (0..n).map(|c| a.point(x)[c] - gy[c]).collect();
                let mut pts = Vec::new();
                for i in 0..a.len() {
                    idx.partners(a.point(i), &u, |jb| {
                        pts.extend_from_slice(a.point(i));
                        pts.extend_from_slice(b.point(jb));
                    });
                }
                out.push(slice_sample(&pts, 2 * n, opts, target, (k, g.seed, j), u));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<SliceSample> = per_frame.into_iter().flatten().collect();
    Ok(summarize(target, opts.tol, opts.level_cell, samples, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::builtin;

    #[test]
    fn dirac_slab_is_full() {
        let d = DiscreteMeasure::dirac(&[0.2, 0.2], 0.7).unwrap();
        let f = ProjectionFrame::axis(2, 1).unwrap();
        assert_eq!(slab_mass(&d, &f, &[0.2, 0.2], 0.1, 0.01).unwrap(), 0.7);
        assert!(slab_mass(&d, &f, &[0.2, 0.2], 0.1, 0.06).is_err());
    }

    #[test]
    fn slab_is_monotone_and_below_ball() {
        let mu = builtin::uniform_random(2, 5000, 4).unwrap();
        let f = ProjectionFrame::grassmannian(&sample_haar(2, 1).unwrap(), 1).unwrap();
        let x = [0.4, 0.6];
        let mut last = 0.0;
        for (r, delta) in [(0.1, 0.02), (0.2, 0.02), (0.2, 0.05), (0.3, 0.1)] {
            let m = slab_mass(&mu, &f, &x, r, delta).unwrap();
            assert!(m >= last && m <= mu.ball_mass(&x, r));
            last = m;
        }
    }

    #[test]
    fn vertical_fiber_of_square() {
        let sq = builtin::uniform_grid(2, 256).unwrap();
        let spec = SliceSpec {
            frame: ProjectionFrame::axis(2, 1).unwrap(),
            u: vec![0.5],
            delta: 1.0 / 128.0,
        };
        let sl = slice_extract(&sq, &spec).unwrap();
        // Columns 126..=129 have centres within 1/128 of 0.5.
        assert_eq!(sl.len(), 4 * 256);
        let out = SliceSpec { u: vec![3.0], ..spec };
        assert!(matches!(slice_extract(&sq, &out), Err(LabError::EmptySlice)));
    }

    #[test]
    fn mass_outside_the_tube_does_not_leak_in() {
        let clean = builtin::uniform_grid(2, 64).unwrap();
        let mut pts = clean.points().to_vec();
        let mut w = clean.weights().to_vec();
        // A dense cluster just past the tube edge.
        for k in 0..500 {
            pts.extend([0.5 + 0.03 + 1e-4 * (k % 10) as f64, 0.001 * k as f64]);
            w.push(1e-3);
        }
        let dirty = DiscreteMeasure::new(2, pts, w, clean.gen_scale()).unwrap();
        let spec = SliceSpec {
            frame: ProjectionFrame::axis(2, 1).unwrap(),
            u: vec![0.5],
            delta: 1.0 / 64.0,
        };
        let a = slice_extract(&clean, &spec).unwrap();
        let b = slice_extract(&dirty, &spec).unwrap();
        assert_eq!(a.points(), b.points());
        assert_eq!(a.weights(), b.weights());
    }
}
