use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::measure::index::cell_key;
use crate::measure::DiscreteMeasure;
use crate::numeric::{dyadic_scales, linear_fit};

/// Slope of a log-log box-count fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub value: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub fit_range: (f64, f64),
    /// Box sides used, largest first.
    pub scales: Vec<f64>,
    /// Occupied-box counts at each scale.
    pub counts: Vec<u64>,
}

/// Box-counting dimension over dyadic scales δ ∈ [δ_min, δ_max], grid anchored at
/// the origin. Scales below the generation scale are rejected.
pub fn box_dimension(a: &DiscreteMeasure, delta_min: f64, delta_max: f64) -> Result<DimensionEstimate> {
    if delta_min < a.gen_scale() {
        return Err(LabError::ResolutionExceeded {
            requested: delta_min,
            gen_scale: a.gen_scale(),
        });
    }
    box_dimension_of_points(a.points(), a.dim(), delta_min, delta_max)
}

/// Box counting on a raw point set; the caller is responsible for the lower scale.
pub fn box_dimension_of_points(points: &[f64], dim: usize, delta_min: f64, delta_max: f64) -> Result<DimensionEstimate> {
    let scales = dyadic_scales(delta_min, delta_max);
    if scales.len() < 3 {
        return Err(LabError::InsufficientScales {
            found: scales.len(),
            needed: 3,
        });
    }
    let counts: Vec<u64> = scales
        .iter()
        .map(|&d| {
            let cells: HashSet<_> = points.chunks_exact(dim).map(|p| cell_key(p, d)).collect();
            cells.len() as u64
        })
        .collect();
    let xs: Vec<f64> = scales.iter().map(|d| -d.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| LabError::Numerical("degenerate box-count fit".into()))?;
    Ok(DimensionEstimate {
        value: fit.slope,
        stderr: fit.slope_stderr,
        intercept: fit.intercept,
        fit_range: (*scales.last().unwrap(), scales[0]),
        scales,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::builtin;

    #[test]
    fn single_point_has_dimension_zero() {
        let d = DiscreteMeasure::dirac(&[0.3, 0.3], 1.0).unwrap();
        let est = box_dimension(&d, 2f64.powi(-10), 0.5).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn random_segment_is_one_dimensional() {
        let mu = builtin::uniform_random(1, 10_000, 3).unwrap();
        let est = box_dimension(&mu, 2f64.powi(-10), 2f64.powi(-3)).unwrap();
        assert!((est.value - 1.0).abs() < 0.05, "{}", est.value);
    }

    #[test]
    fn too_few_scales() {
        let mu = builtin::uniform_random(1, 100, 3).unwrap();
        assert!(matches!(
            box_dimension(&mu, 0.1, 0.3),
            Err(LabError::InsufficientScales { .. })
        ));
        assert!(matches!(
            box_dimension(&mu, 1e-6, 0.3),
            Err(LabError::ResolutionExceeded { .. })
        ));
    }
}
