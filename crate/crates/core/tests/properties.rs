use fraclab::error::LabError;
use fraclab::fourier::spherical_average;
use fraclab::intersections::{matched_indices, MatchIndex};
use fraclab::measure::builtin;
use fraclab::projections::{project, sample_haar, sample_haar_special, ProjectionFrame};
use fraclab::runner::exit_code;
use fraclab::verify::scaling_identity_error;
use fraclab::DiscreteMeasure;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn cloud(n: usize, seed: u64) -> DiscreteMeasure {
    builtin::uniform_ball(3, n, 0.5, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ball_mass_is_monotone(seed in 0u64..1000, x in prop::array::uniform3(-0.5f64..0.5), r1 in 0.0f64..1.0, dr in 0.0f64..0.5) {
        let mu = cloud(400, seed);
        prop_assert!(mu.ball_mass(&x, r1) <= mu.ball_mass(&x, r1 + dr) + 1e-15);
    }

    #[test]
    fn projection_and_rotation_keep_mass(seed in 0u64..1000, m in 1usize..3) {
        let mu = cloud(300, seed);
        let g = sample_haar(3, seed ^ 7).unwrap();
        let rotated = mu.rotate(&g.matrix).unwrap();
        prop_assert!((rotated.total_mass() - mu.total_mass()).abs() < 1e-12);
        let p = project(&mu, &ProjectionFrame::grassmannian(&g, m).unwrap()).unwrap();
        prop_assert!((p.total_mass() - mu.total_mass()).abs() < 1e-12);
        prop_assert_eq!(p.dim(), m);
    }

    #[test]
    fn projection_is_rotation_equivariant(seed in 0u64..1000) {
        let mu = cloud(200, seed);
        let h = sample_haar(3, seed + 1).unwrap();
        let frame = ProjectionFrame::grassmannian(&sample_haar(3, seed + 2).unwrap(), 2).unwrap();
        let lhs = project(&mu.rotate(&h.matrix).unwrap(), &frame).unwrap();
        let rhs = project(&mu, &frame.compose(&h.matrix).unwrap()).unwrap();
        for (a, b) in lhs.points().iter().zip(rhs.points()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spherical_average_is_bounded_by_mass_squared(seed in 0u64..1000, r in 0.0f64..200.0) {
        let mu = cloud(200, seed).scale_weights(0.7).unwrap();
        let avg = spherical_average(&mu, r, 64).unwrap();
        let m = mu.total_mass();
        prop_assert!(avg.value <= m * m * (1.0 + 1e-12));
        prop_assert!(avg.value >= 0.0);
    }

    #[test]
    fn matched_set_grows_with_width(seed in 0u64..1000, d in 0.005f64..0.05) {
        let a = builtin::uniform_random(2, 300, seed).unwrap();
        let b = builtin::uniform_random(2, 300, seed + 1).unwrap();
        let g = sample_haar(2, seed + 2).unwrap();
        let z = [0.1, -0.05];
        let narrow = matched_indices(&a, &MatchIndex::new(&b, &g.matrix, d).unwrap(), &z);
        let wide = matched_indices(&a, &MatchIndex::new(&b, &g.matrix, 2.0 * d).unwrap(), &z);
        prop_assert!(narrow.iter().all(|i| wide.binary_search(i).is_ok()));
    }

    #[test]
    fn blow_up_scaling_holds(seed in 0u64..200, r in 0.1f64..0.4) {
        let mu = builtin::uniform_random(2, 3000, seed).unwrap();
        let frames = vec![ProjectionFrame::axis(2, 1).unwrap()];
        // The blow-up must stay above its own generation scale, so the grid is coarse.
        let err = scaling_identity_error(&mu, &[0.5, 0.5], r, 1.2, &frames, 1.0 / 8.0, &[2.0, 3.0]).unwrap();
        prop_assert!(err < 1e-9, "{}", err);
    }
}

#[test]
fn haar_angles_are_uniform() {
    let bins = 24;
    let n = 10_000;
    let mut counts = vec![0usize; bins];
    for seed in 0..n as u64 {
        let g = sample_haar(2, seed).unwrap();
        let theta = g.matrix[(1, 0)].atan2(g.matrix[(0, 0)]);
        let k = (((theta + std::f64::consts::PI) / std::f64::consts::TAU) * bins as f64) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2} p {p}");
}

#[test]
fn haar_sampler_is_orthogonal_and_covers_both_cosets() {
    let id = nalgebra::DMatrix::<f64>::identity(3, 3);
    let draws: Vec<_> = (0..2000u64).map(|s| sample_haar(3, s).unwrap()).collect();
    assert!(draws.iter().all(|g| (g.matrix.transpose() * &g.matrix - &id).amax() < 1e-10));
    assert_eq!(draws[17].matrix, sample_haar(3, 17).unwrap().matrix);
    let negative = draws.iter().filter(|g| g.det() < 0.0).count();
    assert!((900..1100).contains(&negative), "{negative}");
    assert!((0..200u64).all(|s| sample_haar_special(3, s).unwrap().det() > 0.0));
}

#[test]
fn error_kinds_map_to_exit_codes() {
    assert_eq!(exit_code(&LabError::InvalidArgument("x".into())), 2);
    assert_eq!(exit_code(&LabError::Format("x".into())), 2);
    assert_eq!(exit_code(&LabError::ResolutionExceeded { requested: 0.1, gen_scale: 0.2 }), 2);
    assert_eq!(exit_code(&LabError::InsufficientScales { found: 1, needed: 3 }), 2);
    assert_eq!(exit_code(&LabError::EmptySlice), 3);
    assert_eq!(exit_code(&LabError::EmptyRestriction), 3);
    assert_eq!(exit_code(&LabError::Uncalibrated), 3);
    assert_eq!(exit_code(&LabError::Numerical("x".into())), 3);
    assert_eq!(exit_code(&LabError::Io(std::io::Error::other("x"))), 4);
}
