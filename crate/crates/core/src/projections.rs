//! Haar rotations, projection frames and histogram densities of pushforwards.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::{derive_seed, pairwise_sum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSample {
    pub matrix: DMatrix<f64>,
    pub seed: u64,
    /// True when drawn from SO(n) (det = +1).
    pub special: bool,
}

impl RotationSample {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn identity(n: usize) -> Self {
        RotationSample {
            matrix: DMatrix::identity(n, n),
            seed: 0,
            special: true,
        }
    }
}

/// Haar-distributed element of O(n): QR of a Gaussian matrix with the signs of
/// R's diagonal folded into Q.
pub fn sample_haar(n: usize, seed: u64) -> Result<RotationSample> {
    if n < 2 {
        return Err(LabError::arg("sample_haar needs n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(RotationSample {
        matrix: q,
        seed,
        special: false,
    })
}

/// Haar-distributed element of SO(n). Flipping one column is a measure-preserving
/// bijection between the two cosets, so the result is Haar on SO(n).
pub fn sample_haar_special(n: usize, seed: u64) -> Result<RotationSample> {
    let mut g = sample_haar(n, seed)?;
    if g.matrix.determinant() < 0.0 {
        g.matrix.column_mut(0).neg_mut();
    }
    g.special = true;
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilyTag {
    Grassmannian { n: usize, m: usize },
    Intersection { n: usize },
}

/// An m x source_dim projection matrix. For the Grassmannian family the rows are
/// orthonormal; for the intersection family the matrix is [I | -g] acting on
/// ℝⁿ x ℝⁿ, i.e. (x, y) ↦ x - g y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFrame {
    rows: DMatrix<f64>,
    tag: FamilyTag,
    seed: u64,
}

impl ProjectionFrame {
    /// Projection onto the first m coordinates.
    pub fn axis(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(LabError::arg("axis frame needs 0 < m < n"));
        }
        Ok(ProjectionFrame {
            rows: DMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 }),
            tag: FamilyTag::Grassmannian { n, m },
            seed: 0,
        })
    }

    /// First m rows of g: x ↦ (g x)_{1..m}.
    pub fn grassmannian(g: &RotationSample, m: usize) -> Result<Self> {
        let n = g.dim();
        if m == 0 || m >= n {
            return Err(LabError::arg("grassmannian frame needs 0 < m < n"));
        }
        Ok(ProjectionFrame {
            rows: g.matrix.rows(0, m).into_owned(),
            tag: FamilyTag::Grassmannian { n, m },
            seed: g.seed,
        })
    }

    /// P_g(x, y) = x - g y on ℝⁿ x ℝⁿ.
    pub fn intersection(g: &RotationSample) -> Self {
        let n = g.dim();
        let mut rows = DMatrix::zeros(n, 2 * n);
        rows.view_mut((0, 0), (n, n)).fill_with_identity();
        rows.view_mut((0, n), (n, n)).copy_from(&(-&g.matrix));
        ProjectionFrame {
            rows,
            tag: FamilyTag::Intersection { n },
            seed: g.seed,
        }
    }

    /// Frame with an explicit matrix; Grassmannian rows must be orthonormal.
    pub fn from_rows(rows: DMatrix<f64>) -> Result<Self> {
        let (m, n) = rows.shape();
        if m == 0 || m >= n {
            return Err(LabError::arg("frame needs 0 < m < n"));
        }
        let gram = &rows * rows.transpose();
        if (gram - DMatrix::identity(m, m)).amax() > 1e-10 {
            return Err(LabError::arg("frame rows are not orthonormal"));
        }
        Ok(ProjectionFrame {
            rows,
            tag: FamilyTag::Grassmannian { n, m },
            seed: 0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn tag(&self) -> FamilyTag {
        self.tag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn target_dim(&self) -> usize {
        self.rows.nrows()
    }

    pub fn source_dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..x.len()).map(|j| self.rows[(i, j)] * x[j]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target_dim()];
        self.apply_into(x, &mut out);
        out
    }

    /// The frame x ↦ P(h x).
    pub fn compose(&self, h: &DMatrix<f64>) -> Result<Self> {
        if h.nrows() != self.source_dim() || h.ncols() != self.source_dim() {
            return Err(LabError::DimensionMismatch {
                expected: self.source_dim(),
                actual: h.nrows(),
            });
        }
        Ok(ProjectionFrame {
            rows: &self.rows * h,
            tag: self.tag,
            seed: self.seed,
        })
    }
}

/// Draws frames by index from a fixed seed, so frame k is the same whatever
/// order or thread it is drawn on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FrameSampler {
    Grassmannian { n: usize, m: usize },
    Intersection { n: usize },
    Axis { n: usize, m: usize },
}

impl FrameSampler {
    pub fn frame(&self, seed: u64, index: u64) -> Result<ProjectionFrame> {
        let s = derive_seed(seed, &[index]);
        match *self {
            FrameSampler::Grassmannian { n, m } => ProjectionFrame::grassmannian(&sample_haar(n, s)?, m),
            FrameSampler::Intersection { n } => Ok(ProjectionFrame::intersection(&sample_haar(n, s)?)),
            FrameSampler::Axis { n, m } => ProjectionFrame::axis(n, m),
        }
    }

    pub fn frames(&self, seed: u64, count: usize) -> Result<Vec<ProjectionFrame>> {
        (0..count as u64).map(|k| self.frame(seed, k)).collect()
    }

    pub fn source_dim(&self) -> usize {
        match *self {
            FrameSampler::Grassmannian { n, .. } | FrameSampler::Axis { n, .. } => n,
            FrameSampler::Intersection { n } => 2 * n,
        }
    }

    pub fn target_dim(&self) -> usize {
        match *self {
            FrameSampler::Grassmannian { m, .. } | FrameSampler::Axis { m, .. } => m,
            FrameSampler::Intersection { n } => n,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            FrameSampler::Grassmannian { n, m } => format!("grassmannian({n},{m})"),
            FrameSampler::Intersection { n } => format!("intersection({n})"),
            FrameSampler::Axis { n, m } => format!("axis({n},{m})"),
        }
    }
}

/// Pushforward of μ under the frame. Weights and generation scale are kept.
pub fn project(mu: &DiscreteMeasure, frame: &ProjectionFrame) -> Result<DiscreteMeasure> {
    if mu.dim() != frame.source_dim() {
        return Err(LabError::DimensionMismatch {
            expected: frame.source_dim(),
            actual: mu.dim(),
        });
    }
    let m = frame.target_dim();
    let mut pts = vec![0.0; mu.len() * m];
    for (p, out) in mu.points().chunks_exact(mu.dim()).zip(pts.chunks_exact_mut(m)) {
        frame.apply_into(p, out);
    }
    let out = DiscreteMeasure::new(m, pts, mu.weights().to_vec(), mu.gen_scale())?;
    Ok(out.with_provenance(format!("project({})", mu.meta().provenance)))
}

/// Mass histogram of a measure on the δ-grid anchored at `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDensity {
    pub m: usize,
    pub delta: f64,
    pub origin: Vec<f64>,
    /// Occupied cells in lexicographic key order.
    pub cells: Vec<(Vec<i64>, f64)>,
    pub total_mass: f64,
}

impl BinnedDensity {
    pub fn occupied(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.delta.powi(self.m as i32)
    }

    pub fn densities(&self) -> Vec<f64> {
        let vol = self.cell_volume();
        self.cells.iter().map(|(_, mass)| mass / vol).collect()
    }

    /// Σ density^p · δ^m.
    pub fn lp_integral(&self, p: f64) -> f64 {
        let vol = self.cell_volume();
        let terms: Vec<f64> = self.cells.iter().map(|(_, mass)| (mass / vol).powf(p) * vol).collect();
        pairwise_sum(&terms)
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p > 1.0) {
            return Err(LabError::arg("lp_norm needs p > 1"));
        }
        Ok(self.lp_integral(p).powf(1.0 / p))
    }
}

pub fn binned_density(proj: &DiscreteMeasure, delta: f64) -> Result<BinnedDensity> {
    binned_density_at(proj, delta, &vec![0.0; proj.dim()])
}

pub fn binned_density_at(proj: &DiscreteMeasure, delta: f64, origin: &[f64]) -> Result<BinnedDensity> {
    if delta < proj.gen_scale() {
        return Err(LabError::ResolutionExceeded {
            requested: delta,
            gen_scale: proj.gen_scale(),
        });
    }
    if origin.len() != proj.dim() {
        return Err(LabError::DimensionMismatch {
            expected: proj.dim(),
            actual: origin.len(),
        });
    }
    let mut bins: HashMap<Vec<i64>, f64> = HashMap::new();
    for (p, w) in proj.points().chunks_exact(proj.dim()).zip(proj.weights()) {
        let key: Vec<i64> = p
            .iter()
            .zip(origin)
            .map(|(x, o)| ((x - o) / delta).floor() as i64)
            .collect();
        *bins.entry(key).or_insert(0.0) += w;
    }
    let mut cells: Vec<(Vec<i64>, f64)> = bins.into_iter().collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0));
    let masses: Vec<f64> = cells.iter().map(|c| c.1).collect();
    Ok(BinnedDensity {
        m: proj.dim(),
        delta,
        origin: origin.to_vec(),
        cells,
        total_mass: pairwise_sum(&masses),
    })
}

pub fn lp_norm(bd: &BinnedDensity, p: f64) -> Result<f64> {
    bd.lp_norm(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpMeasureRow {
    pub measure_id: String,
    /// Mean over frames of ∫(P#μ)^p at scale δ.
    pub integral: f64,
    pub mass: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpBoundReport {
    pub family: String,
    pub p: f64,
    pub delta: f64,
    pub n_frames: usize,
    pub rows: Vec<LpMeasureRow>,
    /// max over measures of integral / mass.
    pub empirical_constant: f64,
    /// Largest relative deviation of a ratio from the mean ratio.
    pub spread: f64,
    /// All ratios within ±25% of their mean.
    pub stable: bool,
}

/// Averages ∫(P_λ#μ)^p over `n_frames` frames (the same frames for every
/// measure) and compares the ratios integral/mass across the family. Inputs are
/// expected to be Frostman-normalized already.
pub fn lp_family_bound(
    measures: &[DiscreteMeasure],
    sampler: &FrameSampler,
    p: f64,
    delta: f64,
    n_frames: usize,
    seed: u64,
) -> Result<LpBoundReport> {
    if measures.is_empty() || n_frames == 0 {
        return Err(LabError::arg("lp_family_bound needs at least one measure and one frame"));
    }
    if !(p > 1.0) {
        return Err(LabError::arg("lp_family_bound needs p > 1"));
    }
    let frames = sampler.frames(seed, n_frames)?;
    let mut rows = Vec::with_capacity(measures.len());
    for (k, mu) in measures.iter().enumerate() {
        let per_frame: Vec<f64> = frames
            .par_iter()
            .map(|f| Ok(binned_density(&project(mu, f)?, delta)?.lp_integral(p)))
            .collect::<Result<_>>()?;
        let integral = pairwise_sum(&per_frame) / n_frames as f64;
        let id = if mu.meta().provenance.is_empty() {
            format!("measure-{k}")
        } else {
            mu.meta().provenance.clone()
        };
        rows.push(LpMeasureRow {
            measure_id: id,
            integral,
            mass: mu.total_mass(),
            ratio: integral / mu.total_mass(),
        });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let mean = pairwise_sum(&ratios) / ratios.len() as f64;
    let spread = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
    Ok(LpBoundReport {
        family: sampler.name(),
        p,
        delta,
        n_frames,
        empirical_constant: ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        spread,
        stable: spread <= 0.25,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::builtin;

    #[test]
    fn haar_is_orthogonal_and_seeded() {
        for seed in 0..200 {
            let g = sample_haar(3, seed).unwrap();
            let e = (g.matrix.transpose() * &g.matrix - DMatrix::identity(3, 3)).amax();
            assert!(e < 1e-10);
            let h = sample_haar_special(3, seed).unwrap();
            assert!((h.det() - 1.0).abs() < 1e-10);
        }
        assert_eq!(sample_haar(2, 5).unwrap(), sample_haar(2, 5).unwrap());
    }

    #[test]
    fn dirac_projects_to_dirac() {
        let d = DiscreteMeasure::dirac(&[0.3, 0.4], 1.0).unwrap();
        let p = project(&d, &ProjectionFrame::axis(2, 1).unwrap()).unwrap();
        assert_eq!(p.points(), &[0.3]);
        let pair = DiscreteMeasure::dirac(&[0.3, 0.4, 0.1, -0.2], 1.0).unwrap();
        let q = project(&pair, &ProjectionFrame::intersection(&RotationSample::identity(2))).unwrap();
        assert!((q.point(0)[0] - 0.2).abs() < 1e-15);
        assert!((q.point(0)[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let d = DiscreteMeasure::dirac(&[0.3, 0.4, 0.0], 1.0).unwrap();
        assert!(matches!(
            project(&d, &ProjectionFrame::axis(2, 1).unwrap()),
            Err(LabError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn square_shadow_is_flat() {
        let sq = builtin::uniform_grid(2, 64).unwrap();
        let p = project(&sq, &ProjectionFrame::axis(2, 1).unwrap()).unwrap();
        let bd = binned_density(&p, 0.125).unwrap();
        assert_eq!(bd.occupied(), 8);
        for d in bd.densities() {
            assert!((d - 1.0).abs() < 1e-12);
        }
        assert!((bd.lp_norm(3.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirac_norm_blows_up() {
        let d = DiscreteMeasure::dirac(&[0.3], 1.0).unwrap();
        let bd = binned_density(&d, 1.0).unwrap();
        assert_eq!(bd.densities(), vec![1.0]);
        for delta in [0.1, 0.01] {
            let n = binned_density(&d, delta).unwrap().lp_norm(2.0).unwrap();
            assert!((n - delta.powf(-0.5)).abs() < 1e-9 * n);
        }
    }

    #[test]
    fn below_generation_scale() {
        let sq = builtin::uniform_grid(1, 64).unwrap();
        assert!(matches!(
            binned_density(&sq, 1e-3),
            Err(LabError::ResolutionExceeded { .. })
        ));
    }
}
