//! The built-in verification battery behind `fraclab verify`.
//!
//! Each check compares an estimator against a closed-form or ground-truth value
//! on a built-in measure. `Quick` shrinks depths and sample counts; `Full` uses
//! the desk-scale sizes. Reported values never depend on the thread count.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{calibrate_cns, energy_fourier_side, energy_spatial, EnergyOptions};
use crate::error::{LabError, Result};
use crate::fourier::{decay_fit, fourier_transform, DecayOptions};
use crate::ifs::box_dimension;
use crate::ifs::{moran_dimension, natural_measure_default, IfsFamily};
use crate::intersections::{rotation_sweep, SweepOptions, ZSampling};
use crate::measure::{builtin, product_measure, DiscreteMeasure, DEFAULT_POINT_CAP};
use crate::numeric::derive_seed;
use crate::projections::{binned_density_at, project, sample_haar, FrameSampler, ProjectionFrame};
use crate::report::{fmt_f64, Artifacts, Table};
use crate::sections::{section_theorem_test, vanishing_ratio_scan, SectionOptions, VanishingOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl Level {
    fn pick<T>(self, quick: T, full: T) -> T {
        match self {
            Level::Quick => quick,
            Level::Full => full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: String,
    pub metrics: Vec<Metric>,
    pub pass: bool,
}

impl CheckResult {
    fn new(id: u32, name: &str) -> Self {
        CheckResult {
            id,
            name: name.to_string(),
            metrics: Vec::new(),
            pass: true,
        }
    }

    fn value(&mut self, name: &str, value: f64) {
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
            pass: None,
        });
    }

    fn gate(&mut self, name: &str, value: f64, ok: bool) {
        self.pass &= ok;
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
            pass: Some(ok),
        });
    }

    pub fn line(&self) -> String {
        let shown: Vec<String> = self
            .metrics
            .iter()
            .filter(|m| m.pass.is_some())
            .map(|m| format!("{}={:.4}", m.name, m.value))
            .collect();
        format!(
            "[{}] {:>2} {:<24} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            shown.join(" ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub level: Level,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let key = serde_json::to_string(&(self.level, self.seed)).expect("serializable");
        hex::encode(Sha256::digest(key.as_bytes()))[..16].to_string()
    }

    /// verify.csv (one row per metric) and verify.json.
    pub fn write(&self, out: &Path) -> Result<Artifacts> {
        let mut art = Artifacts::new(out, "verify", &self.hash())?;
        let mut t = Table::new(&["check", "name", "metric", "value", "pass"]);
        for c in &self.checks {
            for m in &c.metrics {
                t.push(vec![
                    c.id.to_string(),
                    c.name.clone(),
                    m.name.clone(),
                    fmt_f64(m.value),
                    m.pass.map(|p| p.to_string()).unwrap_or_default(),
                ]);
            }
        }
        art.write_table("verify.csv", &t)?;
        art.write_json("verify.json", self)?;
        for c in &self.checks {
            art.record(&format!("check_{}_{}", c.id, c.name), c.pass as u8 as f64, None, Some(c.pass));
        }
        Ok(art)
    }
}

/// Box-count range for a depth-limited attractor: from the first dyadic scale
/// at or above twice the generation scale up to 1/2.
pub fn box_scales(gen_scale: f64) -> (f64, f64) {
    (2f64.powf((2.0 * gen_scale).log2().ceil()), 0.5)
}

fn natural(family: IfsFamily, depth: u32) -> Result<DiscreteMeasure> {
    natural_measure_default(&family.spec()?, depth)
}

fn dust_exponent() -> f64 {
    4f64.ln() / 3f64.ln()
}

fn check_moran(level: Level) -> Result<CheckResult> {
    let mut c = CheckResult::new(1, "moran-box-dimension");
    let cases = [
        ("cantor", IfsFamily::Cantor, level.pick(10, 12)),
        ("four-corner", IfsFamily::FourCorner { ratio: 0.25 }, 6),
        ("gasket", IfsFamily::Sierpinski, level.pick(7, 8)),
    ];
    for (name, fam, depth) in cases {
        let spec = fam.spec()?;
        let mu = natural_measure_default(&spec, depth)?;
        let (lo, hi) = box_scales(mu.gen_scale());
        let est = box_dimension(&mu, lo, hi)?;
        let want = moran_dimension(&spec);
        c.value(&format!("{name}_moran"), want);
        c.gate(&format!("{name}_box"), est.value, (est.value - want).abs() <= 0.07);
    }
    Ok(c)
}

fn check_energy(level: Level) -> Result<CheckResult> {
    let mut c = CheckResult::new(2, "energy-closed-form");
    let s = 0.5;
    let line = builtin::uniform_grid(1, 10_000)?;
    let e = energy_spatial(&line, &EnergyOptions::new(s, line.gen_scale()))?;
    // ∫∫|x-y|^{-s} on [0,1]^2 = 2 / ((1-s)(2-s)).
    let exact = 2.0 / ((1.0 - s) * (2.0 - s));
    c.gate("interval_rel_err", (e - exact).abs() / exact, (e - exact).abs() <= 0.02 * exact);
    let s = 0.9;
    let depths = level.pick([8u32, 10], [10, 12]);
    let mut energies = Vec::new();
    for d in depths {
        let mu = natural(IfsFamily::Cantor, d)?;
        energies.push(energy_spatial(&mu, &EnergyOptions::new(s, mu.gen_scale()))?);
    }
    let growth = energies[1] / energies[0];
    c.gate("cantor_growth_s0.9", growth, growth >= 1.5);
    Ok(c)
}

fn check_parseval(level: Level, seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(3, "parseval");
    let s = 1.0;
    let nodes = level.pick(129, 257);
    let cns = calibrate_cns(2, s)?;
    c.value("c_2_1", cns);
    let refs = [
        ("square", builtin::uniform_grid(2, level.pick(48, 64))?),
        ("ball", builtin::uniform_ball(2, level.pick(1500, 3000), 0.5, derive_seed(seed, &[3]))?),
    ];
    for (name, mu) in refs {
        let opts = EnergyOptions::new(s, mu.gen_scale())
            .with_r_max(16.0)
            .with_nodes(nodes)
            .with_constant(cns);
        let spatial = energy_spatial(&mu, &opts)?;
        let fourier = energy_fourier_side(&mu, &opts)?.off_diagonal;
        let gap = (fourier - spatial).abs() / spatial;
        c.gate(&format!("{name}_rel_gap"), gap, gap <= 0.1);
    }
    Ok(c)
}

/// ∫(P#μ)^p with bins of side δ anchored at `origin`.
fn lp_at(mu: &DiscreteMeasure, frame: &ProjectionFrame, delta: f64, origin: &[f64], p: f64) -> Result<f64> {
    Ok(binned_density_at(&project(mu, frame)?, delta, origin)?.lp_integral(p))
}

/// Worst relative violation of ∫(P#μ_j)^p = r^{m + p(s - m)} ∫(P#ν_j)^p, where
/// μ_j = μ restricted to B(a, r) and ν_j is its blow-up r^{-s} T_{a,r}# μ_j.
pub fn scaling_identity_error(
    mu: &DiscreteMeasure,
    a: &[f64],
    r: f64,
    s: f64,
    frames: &[ProjectionFrame],
    delta: f64,
    ps: &[f64],
) -> Result<f64> {
    let piece = mu.restrict(a, r)?;
    let blown = piece.rescale(a, r, s)?;
    let mut worst: f64 = 0.0;
    for f in frames {
        let m = f.target_dim() as f64;
        let pa = f.apply(a);
        let zero = vec![0.0; pa.len()];
        for &p in ps {
            let lhs = lp_at(&piece, f, delta, &pa, p)?;
            let rhs = r.powf(m + p * (s - m)) * lp_at(&blown, f, delta / r, &zero, p)?;
            worst = worst.max((lhs - rhs).abs() / lhs.abs());
        }
    }
    Ok(worst)
}

fn check_scaling(level: Level, seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(4, "scaling-identity");
    let s = dust_exponent();
    let ps = [1.5, 2.0, 3.0];
    let mu = natural(IfsFamily::CantorDust, level.pick(6, 7))?;
    let frames = FrameSampler::Grassmannian { n: 2, m: 1 }.frames(derive_seed(seed, &[4, 0]), level.pick(4, 8))?;
    let mut worst: f64 = 0.0;
    for r in [1.0 / 3.0, 1.0 / 9.0] {
        let a = [r / 2.0, r / 2.0];
        worst = worst.max(scaling_identity_error(&mu, &a, r, s, &frames, 1.0 / 64.0, &ps)?);
    }
    c.gate("grassmannian_max_rel_err", worst, worst <= 1e-6);

    let small = natural(IfsFamily::CantorDust, level.pick(4, 5))?;
    let prod = product_measure(&small, &small, DEFAULT_POINT_CAP)?;
    let frames = FrameSampler::Intersection { n: 2 }.frames(derive_seed(seed, &[4, 1]), level.pick(2, 4))?;
    let mut worst: f64 = 0.0;
    for r in [1.0 / 3.0, 1.0 / 9.0] {
        let h = r / 2.0;
        worst = worst.max(scaling_identity_error(&prod, &[h, h, h, h], r, 2.0 * s, &frames, 1.0 / 16.0, &ps)?);
    }
    c.gate("product_max_rel_err", worst, worst <= 1e-6);
    Ok(c)
}

fn check_sections(level: Level, seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(5, "section-dimension");
    let s = dust_exponent();
    let sampler = FrameSampler::Grassmannian { n: 2, m: 1 };
    let dust = natural(IfsFamily::CantorDust, level.pick(8, 9))?;
    let delta = dust.gen_scale();
    let mut opts = SectionOptions::new(level.pick(30, 100), level.pick(10, 20), delta, (4.0 * delta, 0.5));
    opts.seed = derive_seed(seed, &[5, 0]);
    let st = section_theorem_test(&dust, s, &sampler, &opts)?;
    let med = st.median_dim.unwrap_or(f64::NAN);
    c.value("target", st.target);
    c.gate("dust_median_dim", med, (med - st.target).abs() <= 0.2);
    c.gate("dust_positive_measure_proxy", st.positive_measure_proxy, st.positive_measure_proxy > 0.0);

    let square = builtin::uniform_grid(2, 512)?;
    let delta = square.gen_scale();
    let mut opts = SectionOptions::new(level.pick(30, 100), level.pick(10, 20), delta, (4.0 * delta, 0.5));
    opts.tol = 0.1;
    opts.seed = derive_seed(seed, &[5, 1]);
    let st = section_theorem_test(&square, 2.0, &sampler, &opts)?;
    c.value("square_median_dim", st.median_dim.unwrap_or(f64::NAN));
    c.gate("square_fraction_within_0.1", st.fraction_within, st.fraction_within >= 0.9);
    Ok(c)
}

fn check_vanishing(level: Level, seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(6, "vanishing-ratio");
    let s = dust_exponent();
    let dust = natural(IfsFamily::CantorDust, level.pick(8, 9))?;
    let opts = VanishingOptions {
        t: s - 1.0 - 0.3,
        r_grid: vec![2f64.powi(-6), 2f64.powi(-5), 2f64.powi(-4), 2f64.powi(-3)],
        delta_grid: vec![2f64.powi(-10), 2f64.powi(-9)],
        n_centers: level.pick(20, 50),
        seed: derive_seed(seed, &[6]),
        bad_fraction_limit: 0.05,
    };
    let scan = vanishing_ratio_scan(&dust, &FrameSampler::Grassmannian { n: 2, m: 1 }, &opts)?;
    c.gate("median_decay", scan.median_decay, scan.median_decay <= 0.6);
    c.value("bad_fraction", scan.bad_fraction);
    Ok(c)
}

fn check_intersections(level: Level, seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(7, "intersection-dimension");
    let gasket = natural(IfsFamily::Sierpinski, level.pick(7, 8))?;
    let s = 3f64.ln() / 2f64.ln();
    let delta = gasket.gen_scale();
    let mut opts = SweepOptions::new(delta, (delta, 0.5), s, s);
    opts.tol = 0.25;
    let probe = rotation_sweep(
        &gasket,
        &gasket,
        level.pick(10, 50),
        level.pick(20, 50),
        &opts,
        derive_seed(seed, &[7, 0]),
    )?;
    c.value("target", s + s - 2.0);
    let pf = probe.overall_pass_fraction();
    c.gate("pass_fraction", pf, pf >= 0.6);
    c.gate("failure_fraction", probe.failure_fraction, probe.failure_fraction <= 0.1);

    let sparse = natural(IfsFamily::FourCorner { ratio: 0.125 }, 4)?;
    let t = 4f64.ln() / 8f64.ln();
    let delta = sparse.gen_scale();
    let mut opts = SweepOptions::new(delta, (delta, 0.5), t, t);
    opts.sampling = ZSampling::UniformWindow;
    let neg = rotation_sweep(&sparse, &sparse, 10, level.pick(40, 100), &opts, derive_seed(seed, &[7, 1]))?;
    let total: usize = neg.sweeps.iter().map(|s| s.rows.len()).sum();
    let empty: usize = neg.sweeps.iter().map(|s| s.n_empty).sum();
    let frac = empty as f64 / total as f64;
    c.gate("negative_control_empty_fraction", frac, frac >= 0.9);
    Ok(c)
}

fn check_decay(level: Level) -> Result<CheckResult> {
    let mut c = CheckResult::new(8, "spherical-decay");
    let opts = DecayOptions::default();
    let corner = natural(IfsFamily::FourCorner { ratio: 0.25 }, 6)?;
    let fit = decay_fit(&corner, 0.9, 4.0, level.pick(128.0, 256.0), &opts)?;
    c.value("four_corner_bound", fit.bound_exponent);
    c.gate("four_corner_slope", fit.exponent, fit.exponent <= -0.30);
    let circle = builtin::circle(4096)?;
    let fit = decay_fit(&circle, 1.0, 4.0, level.pick(64.0, 256.0), &opts)?;
    c.gate("circle_slope", fit.exponent, (fit.exponent + 1.0).abs() <= 0.15);
    Ok(c)
}

/// max |P_g#(μ×ν)^(ξ)| - |μ^(ξ)||ν^(-g^{-1}ξ)| over random rotations and frequencies.
pub fn factorization_error(mu: &DiscreteMeasure, nu: &DiscreteMeasure, count: usize, radius: f64, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let n = mu.dim();
    let prod = product_measure(mu, nu, DEFAULT_POINT_CAP)?;
    let errs: Vec<f64> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let g = sample_haar(n, derive_seed(seed, &[k, 0]))?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k, 1]));
            let xi: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..radius)).collect();
            let pushed = project(&prod, &ProjectionFrame::intersection(&g))?;
            let lhs = fourier_transform(&pushed, &xi).norm();
            let gt_xi: Vec<f64> = (0..n).map(|j| -(0..n).map(|i| g.matrix[(i, j)] * xi[i]).sum::<f64>()).collect();
            let rhs = fourier_transform(mu, &xi).norm() * fourier_transform(nu, &gt_xi).norm();
            Ok((lhs - rhs).abs())
        })
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

fn check_factorization(level: Level, seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(9, "fourier-factorization");
    let mu = natural(IfsFamily::CantorDust, 3)?;
    let nu = natural(IfsFamily::Sierpinski, 4)?;
    let err = factorization_error(&mu, &nu, level.pick(200, 1000), 64.0, derive_seed(seed, &[9]))?;
    c.gate("max_abs_err", err, err <= 1e-10);
    Ok(c)
}

/// Reruns a slice of the battery on one thread and compares every value bit for bit.
fn check_thread_invariance(seed: u64, reference: &[CheckResult]) -> Result<CheckResult> {
    let mut c = CheckResult::new(10, "thread-invariance");
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| LabError::Numerical(e.to_string()))?;
    let again = single.install(|| -> Result<Vec<CheckResult>> {
        Ok(vec![check_scaling(Level::Quick, seed)?, check_factorization(Level::Quick, seed)?])
    })?;
    let mut mismatches = 0usize;
    for (r, a) in reference.iter().filter(|r| r.id == 4 || r.id == 9).zip(&again) {
        for (x, y) in r.metrics.iter().zip(&a.metrics) {
            mismatches += (x.value.to_bits() != y.value.to_bits()) as usize;
        }
    }
    c.gate("mismatched_values", mismatches as f64, mismatches == 0);
    Ok(c)
}

/// Runs the battery. With `Quick`, check 10 compares against quick-size reruns
/// of checks 4 and 9; with `Full` it reruns them at quick size on both sides.
pub fn verify_suite(level: Level, seed: u64, progress: &mut dyn FnMut(&CheckResult)) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut push = |c: CheckResult, checks: &mut Vec<CheckResult>| {
        progress(&c);
        checks.push(c);
    };
    push(check_moran(level)?, &mut checks);
    push(check_energy(level)?, &mut checks);
    push(check_parseval(level, seed)?, &mut checks);
    push(check_scaling(level, seed)?, &mut checks);
    push(check_sections(level, seed)?, &mut checks);
    push(check_vanishing(level, seed)?, &mut checks);
    push(check_intersections(level, seed)?, &mut checks);
    push(check_decay(level)?, &mut checks);
    push(check_factorization(level, seed)?, &mut checks);
    let reference = match level {
        Level::Quick => checks.clone(),
        Level::Full => vec![check_scaling(Level::Quick, seed)?, check_factorization(Level::Quick, seed)?],
    };
    push(check_thread_invariance(seed, &reference)?, &mut checks);
    Ok(VerifyReport { level, seed, checks })
}
