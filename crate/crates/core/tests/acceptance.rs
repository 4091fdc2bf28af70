//! Acceptance battery: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary (`harness = false`).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fraclab::energy::{calibrate_cns, energy_fourier_side, energy_spatial, EnergyOptions};
use fraclab::fourier::{decay_fit, DecayOptions};
use fraclab::ifs::{box_dimension, natural_measure_default, IfsFamily};
use fraclab::intersections::{rotation_sweep, threshold, SweepOptions, ZSampling};
use fraclab::measure::{builtin, product_measure, DiscreteMeasure, DEFAULT_POINT_CAP};
use fraclab::numeric::derive_seed;
use fraclab::projections::{binned_density_at, project, sample_haar, FrameSampler, ProjectionFrame};
use fraclab::sections::{section_theorem_test, vanishing_ratio_scan, SectionOptions, VanishingOptions};
use fraclab::verify::{verify_suite, Level};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            detail: String::new(),
        }
    }

    fn check(&mut self, label: &str, value: f64, ok: bool) {
        self.pass &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str(", ");
        }
        let shown = if value != 0.0 && value.abs() < 1e-3 {
            format!("{value:.2e}")
        } else {
            format!("{value:.4}")
        };
        self.detail.push_str(&format!("{label}={shown}{}", if ok { "" } else { " (!)" }));
    }

    fn within(&mut self, label: &str, elapsed: Duration, budget_s: f64) {
        self.check(label, elapsed.as_secs_f64(), elapsed.as_secs_f64() <= budget_s);
    }
}

fn natural(family: IfsFamily, depth: u32) -> DiscreteMeasure {
    natural_measure_default(&family.spec().unwrap(), depth).unwrap()
}

fn composite_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// ∫∫_{[0,1]^2} |x-y|^{-s} = 2∫_0^1 (1-u) u^{-s} du; u = v^k with k = 1/(1-s)
/// removes the singularity.
fn interval_energy_oracle(s: f64) -> f64 {
    let k = 1.0 / (1.0 - s);
    2.0 * k * composite_simpson(|v| 1.0 - v.powf(k), 0.0, 1.0, 2000)
}

/// Box side for a depth-limited attractor: first dyadic scale at least twice
/// the generation scale, up to 1/2.
fn scales_for(mu: &DiscreteMeasure) -> (f64, f64) {
    (2f64.powf((2.0 * mu.gen_scale()).log2().ceil()), 0.5)
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let cases = [
        ("cantor", IfsFamily::Cantor, 12, 2f64.ln() / 3f64.ln()),
        ("four_corner", IfsFamily::FourCorner { ratio: 0.25 }, 6, 1.0),
        ("gasket", IfsFamily::Sierpinski, 8, 3f64.ln() / 2f64.ln()),
    ];
    for (name, fam, depth, want) in cases {
        let t = Instant::now();
        let mu = natural(fam, depth);
        let (lo, hi) = scales_for(&mu);
        let est = box_dimension(&mu, lo, hi).unwrap();
        o.check(name, est.value, (est.value - want).abs() <= 0.07);
        o.within(&format!("{name}_s"), t.elapsed(), 10.0);
    }
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let s = 0.5;
    let oracle = interval_energy_oracle(s);
    o.check("oracle", oracle, (oracle - 8.0 / 3.0).abs() < 1e-9);
    let line = builtin::uniform_grid(1, 10_000).unwrap();
    assert_eq!(line.len(), 10_000);
    let e = energy_spatial(&line, &EnergyOptions::new(s, line.gen_scale())).unwrap();
    o.check("interval", e, (e - oracle).abs() <= 0.02 * oracle);

    // s = 0.9 exceeds dim = log2/log3 = 0.631.
    let s = 0.9;
    let e: Vec<f64> = [10u32, 12]
        .iter()
        .map(|&d| {
            let mu = natural(IfsFamily::Cantor, d);
            energy_spatial(&mu, &EnergyOptions::new(s, mu.gen_scale())).unwrap()
        })
        .collect();
    o.check("cantor_growth", e[1] / e[0], e[1] / e[0] >= 1.5);
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let (n, s) = (2usize, 1.0);
    let c = calibrate_cns(n, s).unwrap();
    // Independent closed form, used only as a sanity bound on the calibration.
    let g = statrs::function::gamma::gamma;
    let exact = 2.0 * PI.powf(s) * g((n as f64 - s) / 2.0) / (g(s / 2.0) * g(n as f64 / 2.0));
    o.check("c_over_closed_form", c / exact, (c / exact - 1.0).abs() <= 0.05);
    let refs = [
        ("square", builtin::uniform_grid(2, 64).unwrap()),
        ("ball", builtin::uniform_ball(2, 3000, 0.5, derive_seed(SEED, &[3])).unwrap()),
    ];
    for (name, mu) in refs {
        let opts = EnergyOptions::new(s, mu.gen_scale())
            .with_r_max(16.0)
            .with_nodes(257)
            .with_constant(c);
        let spatial = energy_spatial(&mu, &opts).unwrap();
        let fourier = energy_fourier_side(&mu, &opts).unwrap().off_diagonal;
        let gap = (fourier - spatial).abs() / spatial;
        o.check(name, gap, gap <= 0.10);
    }
    o
}

/// Histogram ∫ρ^p written out directly: cells of side δ anchored at `origin`.
fn lp_oracle(points: &[f64], weights: &[f64], m: usize, delta: f64, origin: &[f64], p: f64) -> f64 {
    let mut cells: HashMap<Vec<i64>, f64> = HashMap::new();
    for (x, w) in points.chunks_exact(m).zip(weights) {
        let key = x.iter().zip(origin).map(|(a, o)| ((a - o) / delta).floor() as i64).collect();
        *cells.entry(key).or_insert(0.0) += w;
    }
    let vol = delta.powi(m as i32);
    let mut masses: Vec<f64> = cells.into_values().collect();
    masses.sort_by(f64::total_cmp);
    masses.iter().map(|w| (w / vol).powf(p) * vol).sum()
}

/// Worst relative error of ∫(P#μ_j)^p = r^{m+p(s-m)} ∫(P#ν_j)^p, plus the worst
/// disagreement between the library histogram and the direct one.
fn scaling_errors(mu: &DiscreteMeasure, a: &[f64], r: f64, s: f64, frames: &[ProjectionFrame], delta: f64) -> (f64, f64) {
    let piece = mu.restrict(a, r).unwrap();
    let blown = piece.rescale(a, r, s).unwrap();
    let (mut worst, mut lib_vs_direct) = (0.0f64, 0.0f64);
    for f in frames {
        let m = f.target_dim();
        let pa = f.apply(a);
        let zero = vec![0.0; m];
        let (pp, pb) = (project(&piece, f).unwrap(), project(&blown, f).unwrap());
        for p in [1.5, 2.0, 3.0] {
            let lhs = binned_density_at(&pp, delta, &pa).unwrap().lp_integral(p);
            let rhs_raw = binned_density_at(&pb, delta / r, &zero).unwrap().lp_integral(p);
            let rhs = r.powf(m as f64 + p * (s - m as f64)) * rhs_raw;
            worst = worst.max((lhs - rhs).abs() / lhs);
            let direct = lp_oracle(pp.points(), pp.weights(), m, delta, &pa, p);
            lib_vs_direct = lib_vs_direct.max((lhs - direct).abs() / direct);
        }
    }
    (worst, lib_vs_direct)
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let s = 4f64.ln() / 3f64.ln();
    let dust = natural(IfsFamily::CantorDust, 7);
    let frames = FrameSampler::Grassmannian { n: 2, m: 1 }.frames(SEED, 8).unwrap();
    let small = natural(IfsFamily::CantorDust, 5);
    let prod = product_measure(&small, &small, DEFAULT_POINT_CAP).unwrap();
    let pframes = FrameSampler::Intersection { n: 2 }.frames(SEED ^ 1, 4).unwrap();
    for (label, r) in [("1/3", 1.0 / 3.0), ("1/9", 1.0 / 9.0)] {
        let h = r / 2.0;
        let (e, lib) = scaling_errors(&dust, &[h, h], r, s, &frames, 1.0 / 64.0);
        o.check(&format!("r={label}"), e, e <= 1e-6);
        o.check(&format!("hist_r={label}"), lib, lib <= 1e-12);
        let (e, _) = scaling_errors(&prod, &[h, h, h, h], r, 2.0 * s, &pframes, 1.0 / 16.0);
        o.check(&format!("product_r={label}"), e, e <= 1e-6);
    }
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    let s = 4f64.ln() / 3f64.ln();
    let target = s - 1.0;
    let sampler = FrameSampler::Grassmannian { n: 2, m: 1 };
    let dust = natural(IfsFamily::CantorDust, 9);
    let delta = dust.gen_scale();
    let opts = SectionOptions::new(100, 20, delta, (4.0 * delta, 0.5));
    let st = section_theorem_test(&dust, s, &sampler, &opts).unwrap();
    assert_eq!(st.samples.len(), 2000);
    assert!((st.target - target).abs() < 1e-12);
    let med = st.median_dim.unwrap_or(f64::NAN);
    o.check("median", med, (med - target).abs() <= 0.2);
    o.check("proxy", st.positive_measure_proxy, st.positive_measure_proxy > 0.0);

    let square = builtin::uniform_grid(2, 512).unwrap();
    let delta = square.gen_scale();
    let mut opts = SectionOptions::new(100, 20, delta, (4.0 * delta, 0.5));
    opts.tol = 0.1;
    let st = section_theorem_test(&square, 2.0, &sampler, &opts).unwrap();
    o.check("control_within_0.1", st.fraction_within, st.fraction_within >= 0.9);
    o.within("seconds", t.elapsed(), 300.0);
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let s = 4f64.ln() / 3f64.ln();
    let dust = natural(IfsFamily::CantorDust, 9);
    let opts = VanishingOptions {
        t: s - 1.0 - 0.3,
        r_grid: vec![2f64.powi(-3), 2f64.powi(-4), 2f64.powi(-5), 2f64.powi(-6)],
        delta_grid: vec![2f64.powi(-10), 2f64.powi(-9)],
        n_centers: 50,
        seed: SEED,
        bad_fraction_limit: 0.05,
    };
    let scan = vanishing_ratio_scan(&dust, &FrameSampler::Grassmannian { n: 2, m: 1 }, &opts).unwrap();
    // Independent of the library summary: per-centre ratio of the statistic at
    // 2^-6 to that at 2^-3, then the median.
    let lo = scan.radii.iter().position(|&r| r == 2f64.powi(-6)).unwrap();
    let hi = scan.radii.iter().position(|&r| r == 2f64.powi(-3)).unwrap();
    let mut ratios: Vec<f64> = scan.statistic.iter().map(|row| row[lo] / row[hi]).collect();
    ratios.sort_by(f64::total_cmp);
    let med = 0.5 * (ratios[24] + ratios[25]);
    o.check("median_ratio", med, med <= 0.6);
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let t0 = Instant::now();
    let s = 3f64.ln() / 2f64.ln();
    o.check("threshold", threshold(s, s, 2), (threshold(s, s, 2) - 2.377).abs() < 5e-4);
    let gasket = natural(IfsFamily::Sierpinski, 8);
    let delta = gasket.gen_scale();
    let mut opts = SweepOptions::new(delta, (delta, 0.5), s, s);
    opts.tol = 0.25;
    let probe = rotation_sweep(&gasket, &gasket, 50, 50, &opts, SEED).unwrap();
    let target = probe.sweeps[0].target;
    o.check("target", target, (target - 1.1699).abs() < 5e-4);
    let (mut pass, mut nonempty) = (0usize, 0usize);
    for sw in &probe.sweeps {
        for r in &sw.rows {
            if let Some(d) = r.dim {
                nonempty += 1;
                pass += (d >= target - 0.25) as usize;
            }
        }
    }
    let frac = pass as f64 / nonempty as f64;
    o.check("pass_fraction", frac, frac >= 0.6);
    o.check("failure_fraction", probe.failure_fraction, probe.failure_fraction <= 0.1);

    // Four-corner sets with ratio 1/8: s + t = 4/3 < 2.
    let sparse = natural(IfsFamily::FourCorner { ratio: 0.125 }, 4);
    let t = 4f64.ln() / 8f64.ln();
    let delta = sparse.gen_scale();
    let mut opts = SweepOptions::new(delta, (delta, 0.5), t, t);
    opts.sampling = ZSampling::UniformWindow;
    let neg = rotation_sweep(&sparse, &sparse, 10, 100, &opts, SEED ^ 7).unwrap();
    let total: usize = neg.sweeps.iter().map(|s| s.rows.len()).sum();
    let empty = neg.sweeps.iter().flat_map(|s| &s.rows).filter(|r| r.matched == 0).count();
    o.check("control_empty", empty as f64 / total as f64, empty as f64 >= 0.9 * total as f64);
    o.within("seconds", t0.elapsed(), 900.0);
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let corner = natural(IfsFamily::FourCorner { ratio: 0.25 }, 6);
    let fit = decay_fit(&corner, 0.9, 4.0, 256.0, &DecayOptions::default()).unwrap();
    o.check("bound", fit.bound_exponent, (fit.bound_exponent + 0.45).abs() < 1e-12);
    o.check("four_corner", fit.exponent, fit.exponent <= -0.30);
    o.check("passes", fit.passes as u8 as f64, fit.passes);
    let circle = builtin::circle(4096).unwrap();
    let fit = decay_fit(&circle, 1.0, 4.0, 256.0, &DecayOptions::default()).unwrap();
    o.check("circle", fit.exponent, (fit.exponent + 1.0).abs() <= 0.15);
    o
}

fn dft(points: &[f64], weights: &[f64], xi: &[f64]) -> (f64, f64) {
    let n = xi.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (x, w) in points.chunks_exact(n).zip(weights) {
        let phase = -2.0 * PI * x.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
        re += w * phase.cos();
        im += w * phase.sin();
    }
    (re, im)
}

fn modulus((re, im): (f64, f64)) -> f64 {
    re.hypot(im)
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let mu = natural(IfsFamily::CantorDust, 3);
    let nu = natural(IfsFamily::Sierpinski, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for k in 0..1000u64 {
        let g = sample_haar(2, derive_seed(SEED, &[9, k])).unwrap().matrix;
        let xi = [rng.random_range(-64.0..64.0), rng.random_range(-64.0..64.0)];
        // Push μ×ν forward by (x, y) -> x - g y directly.
        let mut pts = Vec::new();
        let mut w = Vec::new();
        for (x, wx) in mu.points().chunks_exact(2).zip(mu.weights()) {
            for (y, wy) in nu.points().chunks_exact(2).zip(nu.weights()) {
                pts.push(x[0] - (g[(0, 0)] * y[0] + g[(0, 1)] * y[1]));
                pts.push(x[1] - (g[(1, 0)] * y[0] + g[(1, 1)] * y[1]));
                w.push(wx * wy);
            }
        }
        let lhs = modulus(dft(&pts, &w, &xi));
        // g^{-1} = g^T.
        let back = [-(g[(0, 0)] * xi[0] + g[(1, 0)] * xi[1]), -(g[(0, 1)] * xi[0] + g[(1, 1)] * xi[1])];
        let rhs = modulus(dft(mu.points(), mu.weights(), &xi)) * modulus(dft(nu.points(), nu.weights(), &back));
        worst = worst.max((lhs - rhs).abs());
    }
    o.check("max_abs_err", worst, worst <= 1e-10);
    o
}

fn verify_csv(threads: usize) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let report = pool.install(|| verify_suite(Level::Quick, SEED, &mut |_| {})).unwrap();
    report.write(dir.path()).unwrap();
    std::fs::read(dir.path().join("verify.csv")).unwrap()
}

fn criterion_10() -> Outcome {
    let mut o = Outcome::new();
    let first = verify_csv(4);
    let second = verify_csv(4);
    let serial = verify_csv(1);
    o.check("rerun_identical", (first == second) as u8 as f64, first == second && !first.is_empty());
    o.check("threads_identical", (first == serial) as u8 as f64, first == serial);
    o
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("moran oracle", criterion_1),
        ("energy closed form", criterion_2),
        ("parseval consistency", criterion_3),
        ("scaling identity", criterion_4),
        ("section dimension", criterion_5),
        ("vanishing ratio", criterion_6),
        ("intersection dimension", criterion_7),
        ("spherical decay", criterion_8),
        ("fourier factorization", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        failed += !out.pass as usize;
        println!(
            "criterion {:>2} {:<24} {}  {} [{:.1}s]",
            k + 1,
            name,
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
