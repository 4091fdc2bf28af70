//! Self-similar sets from iterated function systems of similitudes, with their
//! natural measures. These provide the ground-truth dimensions that every other
//! experiment is checked against.

mod boxcount;

pub use boxcount::{box_dimension, box_dimension_of_points, DimensionEstimate};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::measure::{DiscreteMeasure, MeasureMeta, DEFAULT_POINT_CAP};

/// x ↦ ratio · rotation · x + translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Similitude {
    ratio: f64,
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

impl Similitude {
    pub fn new(ratio: f64, rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(LabError::arg(format!("similitude ratio must be in (0,1), got {ratio}")));
        }
        let n = translation.len();
        if rotation.nrows() != n || rotation.ncols() != n {
            return Err(LabError::DimensionMismatch {
                expected: n,
                actual: rotation.nrows(),
            });
        }
        let defect = (rotation.transpose() * &rotation - DMatrix::identity(n, n)).abs().max();
        if defect > 1e-12 {
            return Err(LabError::arg(format!("rotation is not orthogonal (defect {defect:e})")));
        }
        Ok(Similitude {
            ratio,
            rotation,
            translation,
        })
    }

    /// Homothety x ↦ ratio · x + translation.
    pub fn scaling(ratio: f64, translation: &[f64]) -> Result<Self> {
        let n = translation.len();
        Similitude::new(ratio, DMatrix::identity(n, n), DVector::from_column_slice(translation))
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for (k, xk) in x.iter().enumerate() {
                acc += self.rotation[(i, k)] * xk;
            }
            *o = self.ratio * acc + self.translation[i];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    /// The unique fixed point, which lies on the attractor.
    pub fn fixed_point(&self) -> Vec<f64> {
        let n = self.dim();
        let a = DMatrix::identity(n, n) - &self.rotation * self.ratio;
        // contraction ⇒ I - ρR is invertible
        let x = a.lu().solve(&self.translation).expect("contraction has a fixed point");
        x.iter().copied().collect()
    }

    /// h ∘ self ∘ h⁻¹ for another similitude `h` (with any positive ratio).
    pub fn conjugate(&self, h_ratio: f64, h_rot: &DMatrix<f64>, h_shift: &[f64]) -> Similitude {
        // h(x) = λ U x + c,  h f h⁻¹(x) = ρ (U R Uᵀ) x + λ U t + c - ρ U R Uᵀ c
        let rot = h_rot * &self.rotation * h_rot.transpose();
        let c = DVector::from_column_slice(h_shift);
        let t = h_rot * &self.translation * h_ratio + &c - &rot * &c * self.ratio;
        Similitude {
            ratio: self.ratio,
            rotation: rot,
            translation: t,
        }
    }
}

/// A finite family of contracting similitudes on R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct IfsSpec {
    dim: usize,
    maps: Vec<Similitude>,
    open_set_ok: bool,
}

impl IfsSpec {
    pub fn new(maps: Vec<Similitude>, open_set_ok: bool) -> Result<Self> {
        if maps.len() < 2 {
            return Err(LabError::arg("an IFS needs at least two maps"));
        }
        let dim = maps[0].dim();
        if let Some(m) = maps.iter().find(|m| m.dim() != dim) {
            return Err(LabError::DimensionMismatch {
                expected: dim,
                actual: m.dim(),
            });
        }
        let spec = IfsSpec { dim, maps, open_set_ok };
        let s = moran_dimension(&spec);
        if !(s > 0.0 && s <= dim as f64 + 1e-12) {
            return Err(LabError::arg(format!(
                "similarity dimension {s} is outside (0, {dim}]; maps must overlap"
            )));
        }
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn maps(&self) -> &[Similitude] {
        &self.maps
    }

    pub fn open_set_ok(&self) -> bool {
        self.open_set_ok
    }

    pub fn max_ratio(&self) -> f64 {
        self.maps.iter().map(|m| m.ratio).fold(0.0, f64::max)
    }

    /// Natural-measure probabilities ratio_i^s, normalized to sum to one.
    pub fn probabilities(&self) -> Vec<f64> {
        let s = moran_dimension(self);
        let p: Vec<f64> = self.maps.iter().map(|m| m.ratio.powf(s)).collect();
        let total: f64 = p.iter().sum();
        p.into_iter().map(|x| x / total).collect()
    }

    /// Conjugates every map by the similarity h(x) = λ U x + c.
    pub fn conjugate(&self, h_ratio: f64, h_rot: &DMatrix<f64>, h_shift: &[f64]) -> IfsSpec {
        IfsSpec {
            dim: self.dim,
            maps: self.maps.iter().map(|m| m.conjugate(h_ratio, h_rot, h_shift)).collect(),
            open_set_ok: self.open_set_ok,
        }
    }
}

/// Built-in families with known similarity dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum IfsFamily {
    /// Middle-thirds Cantor set in R.
    Cantor,
    /// Product of two middle-thirds Cantor sets in R^2.
    CantorDust,
    /// Four corner squares of relative side `ratio` in [0,1]^2.
    FourCorner { ratio: f64 },
    /// Sierpinski gasket with vertices (0,0), (1,0), (1/2, √3/2).
    Sierpinski,
    /// [0,1]^dim split into 2^dim half-size cubes.
    UniformCube { dim: usize },
}

impl IfsFamily {
    pub fn spec(&self) -> Result<IfsSpec> {
        let maps = match *self {
            IfsFamily::Cantor => vec![
                Similitude::scaling(1.0 / 3.0, &[0.0])?,
                Similitude::scaling(1.0 / 3.0, &[2.0 / 3.0])?,
            ],
            IfsFamily::CantorDust => {
                let t = 2.0 / 3.0;
                [[0.0, 0.0], [t, 0.0], [0.0, t], [t, t]]
                    .iter()
                    .map(|c| Similitude::scaling(1.0 / 3.0, c))
                    .collect::<Result<_>>()?
            }
            IfsFamily::FourCorner { ratio } => {
                if !(ratio > 0.0 && ratio <= 0.5) {
                    return Err(LabError::arg("four-corner ratio must be in (0, 1/2]"));
                }
                let t = 1.0 - ratio;
                [[0.0, 0.0], [t, 0.0], [0.0, t], [t, t]]
                    .iter()
                    .map(|c| Similitude::scaling(ratio, c))
                    .collect::<Result<_>>()?
            }
            IfsFamily::Sierpinski => vec![
                Similitude::scaling(0.5, &[0.0, 0.0])?,
                Similitude::scaling(0.5, &[0.5, 0.0])?,
                Similitude::scaling(0.5, &[0.25, 3f64.sqrt() / 4.0])?,
            ],
            IfsFamily::UniformCube { dim } => {
                if dim == 0 || dim > 6 {
                    return Err(LabError::arg("uniform cube dimension must be in 1..=6"));
                }
                (0..1usize << dim)
                    .map(|mask| {
                        let c: Vec<f64> = (0..dim).map(|k| if mask >> k & 1 == 1 { 0.5 } else { 0.0 }).collect();
                        Similitude::scaling(0.5, &c)
                    })
                    .collect::<Result<_>>()?
            }
        };
        IfsSpec::new(maps, true)
    }

    pub fn name(&self) -> String {
        match self {
            IfsFamily::Cantor => "cantor".into(),
            IfsFamily::CantorDust => "cantor-dust".into(),
            IfsFamily::FourCorner { ratio } => format!("four-corner({ratio})"),
            IfsFamily::Sierpinski => "sierpinski".into(),
            IfsFamily::UniformCube { dim } => format!("uniform-cube({dim})"),
        }
    }
}

/// The similarity dimension: the root s of Σ ratio_i^s = 1.
pub fn moran_dimension(spec: &IfsSpec) -> f64 {
    let r0 = spec.maps[0].ratio;
    if spec.maps.iter().all(|m| m.ratio == r0) {
        return (spec.maps.len() as f64).ln() / (1.0 / r0).ln();
    }
    moran_root(&spec.maps.iter().map(|m| m.ratio).collect::<Vec<_>>())
}

/// Bisection for Σ r_i^s = 1 to absolute tolerance 1e-12.
pub(crate) fn moran_root(ratios: &[f64]) -> f64 {
    let f = |s: f64| ratios.iter().map(|r| r.powf(s)).sum::<f64>() - 1.0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One point per composition word of length `depth`, placed at the image of the
/// first map's fixed point, with weight equal to the product of the word's
/// probabilities. Points are ordered so that the depth-(k+1) measure is exactly
/// Σ p_i (f_i)# of the depth-k measure.
pub fn natural_measure(spec: &IfsSpec, depth: u32, cap: usize) -> Result<DiscreteMeasure> {
    if depth == 0 {
        return Err(LabError::arg("depth must be at least 1"));
    }
    let m = spec.maps.len() as u128;
    let count = m.checked_pow(depth).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(LabError::CapExceeded {
            requested: count,
            cap,
            hint: "use stochastic_sample (chaos game) for deep attractors",
        });
    }
    let n = spec.dim;
    let probs = spec.probabilities();
    let mut pts = spec.maps[0].fixed_point();
    let mut w = vec![1.0];
    for _ in 0..depth {
        let mut next_pts = Vec::with_capacity(pts.len() * spec.maps.len());
        let mut next_w = Vec::with_capacity(w.len() * spec.maps.len());
        let mut buf = vec![0.0; n];
        for (map, p) in spec.maps.iter().zip(&probs) {
            for (x, wx) in pts.chunks_exact(n).zip(&w) {
                map.apply_into(x, &mut buf);
                next_pts.extend_from_slice(&buf);
                next_w.push(p * wx);
            }
        }
        pts = next_pts;
        w = next_w;
    }
    let gen = spec.max_ratio().powi(depth as i32);
    let meta = MeasureMeta {
        provenance: format!("ifs-natural(maps={},depth={depth})", spec.maps.len()),
        weight_scale: 1.0,
    };
    Ok(DiscreteMeasure::new(n, pts, w, gen)?.with_meta(meta))
}

pub fn natural_measure_default(spec: &IfsSpec, depth: u32) -> Result<DiscreteMeasure> {
    natural_measure(spec, depth, DEFAULT_POINT_CAP)
}

/// Chaos-game samples of the natural measure, equal weights 1/n_points.
pub fn stochastic_sample(spec: &IfsSpec, n_points: usize, burn_in: usize, seed: u64) -> Result<DiscreteMeasure> {
    if n_points == 0 {
        return Err(LabError::arg("n_points must be at least 1"));
    }
    let n = spec.dim;
    let probs = spec.probabilities();
    let mut cum = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cum.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng| {
        let u = rng.random::<f64>() * acc;
        cum.partition_point(|c| *c <= u).min(cum.len() - 1)
    };
    let mut x = spec.maps[0].fixed_point();
    let mut buf = vec![0.0; n];
    for _ in 0..burn_in {
        spec.maps[pick(&mut rng)].apply_into(&x, &mut buf);
        std::mem::swap(&mut x, &mut buf);
    }
    let mut pts = Vec::with_capacity(n_points * n);
    for i in 0..n_points {
        if i > 0 || burn_in > 0 {
            spec.maps[pick(&mut rng)].apply_into(&x, &mut buf);
            std::mem::swap(&mut x, &mut buf);
        }
        pts.extend_from_slice(&x);
    }
    let s = moran_dimension(spec);
    let gen = (n_points as f64).powf(-1.0 / s);
    let meta = MeasureMeta {
        provenance: format!("ifs-chaos(maps={},n={n_points},seed={seed})", spec.maps.len()),
        weight_scale: 1.0,
    };
    Ok(DiscreteMeasure::new(n, pts, vec![1.0 / n_points as f64; n_points], gen)?.with_meta(meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn moran_closed_forms() {
        let cantor = IfsFamily::Cantor.spec().unwrap();
        assert!(close(moran_dimension(&cantor), 2f64.ln() / 3f64.ln(), 1e-15));
        let gasket = IfsFamily::Sierpinski.spec().unwrap();
        assert!(close(moran_dimension(&gasket), 3f64.ln() / 2f64.ln(), 1e-15));
        let corner = IfsFamily::FourCorner { ratio: 0.25 }.spec().unwrap();
        assert!(close(moran_dimension(&corner), 1.0, 1e-15));
    }

    #[test]
    fn bisection_agrees_with_closed_form() {
        // independent route: closed form for equal ratios vs the bisection solver
        for &(m, r) in &[(2usize, 1.0 / 3.0), (3, 0.5), (4, 0.25), (5, 0.3)] {
            let root = moran_root(&vec![r; m]);
            let exact = (m as f64).ln() / (1.0 / r).ln();
            assert!(close(root, exact, 1e-12), "{m} {r}: {root} vs {exact}");
        }
        // unequal ratios: 1/2 and 1/4 ⇒ x + x² = 1 with x = 2^-s
        let root = moran_root(&[0.5, 0.25]);
        let x = (5f64.sqrt() - 1.0) / 2.0;
        assert!(close(root, -x.log2(), 1e-12));
    }

    #[test]
    fn spec_validation() {
        assert!(IfsSpec::new(vec![Similitude::scaling(0.5, &[0.0]).unwrap()], true).is_err());
        assert!(Similitude::scaling(1.0, &[0.0]).is_err());
        let too_many: Vec<_> = (0..5).map(|i| Similitude::scaling(0.5, &[i as f64, 0.0]).unwrap()).collect();
        assert!(IfsSpec::new(too_many, false).is_err());
        let bad_rot = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(Similitude::new(0.5, bad_rot, DVector::zeros(2)).is_err());
    }

    #[test]
    fn cantor_depth_one() {
        let mu = natural_measure_default(&IfsFamily::Cantor.spec().unwrap(), 1).unwrap();
        assert_eq!(mu.points(), &[0.0, 2.0 / 3.0]);
        assert_eq!(mu.weights(), &[0.5, 0.5]);
        assert!(close(mu.gen_scale(), 1.0 / 3.0, 1e-16));
    }

    #[test]
    fn natural_measure_sizes_and_mass() {
        let g = natural_measure_default(&IfsFamily::Sierpinski.spec().unwrap(), 8).unwrap();
        assert_eq!(g.len(), 6561);
        assert!(close(g.total_mass(), 1.0, 1e-12));
        assert!(g.in_unit_ball());
        let c = natural_measure_default(&IfsFamily::FourCorner { ratio: 0.25 }.spec().unwrap(), 6).unwrap();
        assert_eq!(c.len(), 4096);
    }

    #[test]
    fn self_similarity_recursion_is_exact() {
        let spec = IfsFamily::Sierpinski.spec().unwrap();
        let k = natural_measure_default(&spec, 4).unwrap();
        let k1 = natural_measure_default(&spec, 5).unwrap();
        let probs = spec.probabilities();
        let mut pts = Vec::new();
        let mut w = Vec::new();
        for (map, p) in spec.maps().iter().zip(&probs) {
            for (x, wx) in k.points().chunks(2).zip(k.weights()) {
                pts.extend(map.apply(x));
                w.push(p * wx);
            }
        }
        assert_eq!(pts, k1.points());
        assert_eq!(w, k1.weights());
        // ball masses at radii above the coarser generation scale agree
        let r = 2.0 * k.gen_scale();
        for i in (0..k1.len()).step_by(97) {
            let x = k1.point(i);
            let a = k.ball_mass(x, r + k.gen_scale());
            let b = k1.ball_mass(x, r);
            assert!(a + 1e-12 >= b);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let spec = IfsFamily::UniformCube { dim: 2 }.spec().unwrap();
        assert!(matches!(natural_measure(&spec, 12, 1000), Err(LabError::CapExceeded { .. })));
    }

    #[test]
    fn chaos_game_is_deterministic() {
        let spec = IfsFamily::Cantor.spec().unwrap();
        let a = stochastic_sample(&spec, 1000, 20, 42).unwrap();
        let b = stochastic_sample(&spec, 1000, 20, 42).unwrap();
        assert_eq!(a, b);
        let one = stochastic_sample(&spec, 1, 0, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.weights(), &[1.0]);
    }

    #[test]
    fn conjugation_keeps_dimension_and_maps_attractor() {
        let spec = IfsFamily::Sierpinski.spec().unwrap();
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let u = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let conj = spec.conjugate(0.5, &u, &[0.1, -0.2]);
        assert_eq!(moran_dimension(&conj), moran_dimension(&spec));
        // h maps the fixed point of f to the fixed point of h f h⁻¹
        let f = &spec.maps()[1];
        let g = &conj.maps()[1];
        let fp = f.fixed_point();
        let hfp: Vec<f64> = (0..2).map(|i| 0.5 * (u[(i, 0)] * fp[0] + u[(i, 1)] * fp[1]) + [0.1, -0.2][i]).collect();
        let gp = g.fixed_point();
        assert!(close(hfp[0], gp[0], 1e-12) && close(hfp[1], gp[1], 1e-12));
    }
}
