//! Executes one configured experiment and writes its artifacts.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, FamilyKind, FileFormat, SourceKind};
use crate::energy::{energy_fourier_side, energy_spatial, EnergyOptions};
use crate::error::{LabError, Result};
use crate::fourier::{decay_fit, DecayOptions};
use crate::intersections::{rotation_sweep, translation_sweep, SweepOptions, TranslationSweep, ZSampling};
use crate::measure::io::{self, MeasureFormat};
use crate::measure::{frostman_exponent, product_measure, DiscreteMeasure, FrostmanOptions, DEFAULT_POINT_CAP};
use crate::numeric::{derive_seed, dist2, median, pairwise_sum};
use crate::projections::{binned_density, lp_family_bound, project, sample_haar};
use crate::report::{fmt_f64, fmt_opt, fmt_vec, Artifacts, Table};
use crate::sections::{section_product_test, section_theorem_test, vanishing_ratio_scan, SectionOptions, VanishingOptions};

/// Process exit code for an error.
pub fn exit_code(e: &LabError) -> i32 {
    match e {
        LabError::Io(_) => 4,
        LabError::EmptySlice | LabError::EmptyRestriction | LabError::Numerical(_) | LabError::Uncalibrated => 3,
        _ => 2,
    }
}

pub struct RunOutcome {
    pub artifacts: Artifacts,
    pub summary: String,
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Numerical(format!("thread pool: {e}")))
}

/// Runs `kind` with `cfg`, writing into `out`. Records are appended to
/// `out/records.csv`; the other artifacts are named after the experiment.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let hash = cfg.hash(kind);
    let name = kind.name();
    let mut art = Artifacts::new(out, name, &hash)?;
    art.write_text(
        &format!("{name}.config.toml"),
        &format!("# experiment = \"{name}\"\n# config_hash = \"{hash}\"\n{}", cfg.to_toml()),
    )?;
    let start = Instant::now();
    pool(cfg.threads)?.install(|| dispatch(kind, cfg, &mut art))?;
    let summary = art.summary_text();
    art.write_text(&format!("{name}.summary.txt"), &summary)?;
    art.finish(start.elapsed().as_secs_f64())?;
    Ok(RunOutcome { artifacts: art, summary })
}

fn dispatch(kind: ExperimentKind, cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let seed = derive_seed(cfg.seed, &[kind as u64]);
    match kind {
        ExperimentKind::Generate => generate(cfg, art),
        ExperimentKind::Frostman => frostman(cfg, seed, art),
        ExperimentKind::Energy => energy(cfg, art),
        ExperimentKind::Decay => decay(cfg, art),
        ExperimentKind::Project => project_lp(cfg, seed, art),
        ExperimentKind::Lpbound => lpbound(cfg, seed, art),
        ExperimentKind::Sections => sections(cfg, seed, art),
        ExperimentKind::Intersect => intersect(cfg, seed, art),
        ExperimentKind::Exceptional => exceptional(cfg, seed, art),
    }
}

fn first(cfg: &ExperimentConfig) -> Result<DiscreteMeasure> {
    cfg.measure.build(cfg.seed, 0)
}

fn second(cfg: &ExperimentConfig) -> Result<DiscreteMeasure> {
    cfg.second_measure().build(cfg.seed, 1)
}

fn exponent_or(given: Option<f64>, nominal: Option<f64>, what: &str) -> Result<f64> {
    given
        .or(nominal)
        .ok_or_else(|| LabError::arg(format!("{what} has no known exponent; set it explicitly")))
}

fn id(mu: &DiscreteMeasure) -> String {
    mu.meta().provenance.clone()
}

fn generate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let mu = first(cfg)?;
    let format = match cfg.generate.format {
        FileFormat::Text => MeasureFormat::Text,
        FileFormat::Binary => MeasureFormat::Binary,
    };
    let path = art.path(&cfg.generate.file_name);
    io::save(&mu, &path, format)?;
    art.add_file(path);
    art.record("n_points", mu.len() as f64, None, None);
    art.record("total_mass", mu.total_mass(), None, None);
    art.record("gen_scale", mu.gen_scale(), None, None);
    if let Some(s) = cfg.measure.nominal_exponent() {
        art.record("nominal_exponent", s, None, None);
    }
    Ok(())
}

fn frostman(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Result<()> {
    let mu = first(cfg)?;
    let p = &cfg.frostman;
    let mut opts = FrostmanOptions::new(p.r_min.unwrap_or(4.0 * mu.gen_scale()), p.r_max, p.n_centers);
    opts.seed = seed;
    opts.guard_quantile = p.guard_quantile;
    let rep = frostman_exponent(&mu, &opts)?;
    let mut t = Table::new(&["measure_id", "r", "guarded_mass"]);
    for (r, m) in rep.radii.iter().zip(&rep.guarded_mass) {
        t.push(vec![id(&mu), fmt_f64(*r), fmt_f64(*m)]);
    }
    art.write_table("frostman.csv", &t)?;
    art.write_json("frostman.json", &rep)?;
    art.record("exponent", rep.exponent, Some(rep.stderr), None);
    art.record("constant", rep.constant, None, None);
    art.record("worst_violation", rep.worst_violation, None, None);
    if let Some(s) = cfg.measure.nominal_exponent() {
        art.record("nominal_exponent", s, None, None);
    }
    Ok(())
}

fn energy(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let mu = first(cfg)?;
    let p = &cfg.energy;
    let mut opts = EnergyOptions::new(p.s, p.mollify_scale.unwrap_or(mu.gen_scale())).with_nodes(p.nodes);
    if let Some(r) = p.r_max {
        opts = opts.with_r_max(r);
    }
    let spatial = energy_spatial(&mu, &opts)?;
    let mut t = Table::new(&["measure_id", "side", "s", "value", "stderr", "r_range", "pass"]);
    t.push(vec![id(&mu), "spatial".into(), fmt_f64(p.s), fmt_f64(spatial), String::new(), String::new(), String::new()]);
    art.record("energy_spatial", spatial, None, None);
    if p.fourier {
        let opts = opts.calibrated(mu.dim())?;
        let fe = energy_fourier_side(&mu, &opts)?;
        let gap = (fe.off_diagonal - spatial).abs() / spatial;
        let pass = fe.converged && gap <= 0.1;
        t.push(vec![
            id(&mu),
            "fourier".into(),
            fmt_f64(p.s),
            fmt_f64(fe.off_diagonal),
            String::new(),
            format!("0;{}", fmt_f64(fe.r_max)),
            pass.to_string(),
        ]);
        art.record("calibration_constant", opts.calibration_constant, None, None);
        art.record("energy_fourier", fe.value, None, None);
        art.record("energy_fourier_off_diagonal", fe.off_diagonal, None, Some(fe.converged));
        art.record("parseval_relative_gap", gap, None, Some(pass));
        art.write_json("energy.json", &json!({ "spatial": spatial, "fourier": fe, "s": p.s }))?;
    }
    art.write_table("energy.csv", &t)?;
    Ok(())
}

fn decay(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let mu = first(cfg)?;
    let p = &cfg.decay;
    let fit = decay_fit(
        &mu,
        p.t_prime,
        p.r_min,
        p.r_max.unwrap_or(0.25 / mu.gen_scale()),
        &DecayOptions {
            slack: p.slack,
            n_directions: p.n_directions,
        },
    )?;
    let mut t = Table::new(&["measure_id", "t_prime", "value", "stderr", "r_range", "pass"]);
    t.push(vec![
        id(&mu),
        fmt_f64(p.t_prime),
        fmt_f64(fit.exponent),
        fmt_f64(fit.stderr),
        fmt_vec(&[fit.r_range.0, fit.r_range.1]),
        fit.passes.to_string(),
    ]);
    art.write_table("decay.csv", &t)?;
    let mut curve = Table::new(&["measure_id", "r", "spherical_average"]);
    for (r, v) in fit.radii.iter().zip(&fit.values) {
        curve.push(vec![id(&mu), fmt_f64(*r), fmt_f64(*v)]);
    }
    art.write_table("decay_curve.csv", &curve)?;
    art.record("decay_exponent", fit.exponent, Some(fit.stderr), Some(fit.passes));
    art.record("bound_exponent", fit.bound_exponent, None, None);
    Ok(())
}

/// The input of a projection family: A itself, or A x B for the intersection family.
fn family_input(cfg: &ExperimentConfig, kind: FamilyKind) -> Result<DiscreteMeasure> {
    let a = first(cfg)?;
    match kind {
        FamilyKind::Intersection => product_measure(&a, &second(cfg)?, DEFAULT_POINT_CAP),
        _ => Ok(a),
    }
}

fn project_lp(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Result<()> {
    let p = &cfg.project;
    let mu = family_input(cfg, p.family.kind)?;
    let sampler = p.family.sampler(mu.dim());
    let frames = sampler.frames(seed, p.n_frames)?;
    let rows: Vec<(usize, f64, f64)> = frames
        .par_iter()
        .map(|f| {
            let bd = binned_density(&project(&mu, f)?, p.delta)?;
            Ok((bd.occupied(), bd.lp_integral(p.p), bd.lp_norm(p.p)?))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["family", "frame_index", "frame_seed", "p", "delta", "occupied", "integral", "lp_norm"]);
    for (k, (f, (occ, int, norm))) in frames.iter().zip(&rows).enumerate() {
        t.push(vec![
            sampler.name(),
            k.to_string(),
            f.seed().to_string(),
            fmt_f64(p.p),
            fmt_f64(p.delta),
            occ.to_string(),
            fmt_f64(*int),
            fmt_f64(*norm),
        ]);
    }
    art.write_table("project.csv", &t)?;
    let ints: Vec<f64> = rows.iter().map(|r| r.1).collect();
    art.record("mean_lp_integral", pairwise_sum(&ints) / ints.len() as f64, None, None);
    art.record("max_lp_integral", ints.iter().cloned().fold(f64::NEG_INFINITY, f64::max), None, None);
    Ok(())
}

/// f_0^k(A) inside the depth-`depth` natural measure, blown up to unit size
/// with weights scaled by r^{-s}.
fn blown_up_piece(mu: &DiscreteMeasure, n_maps: usize, depth: u32, k: u32, s: f64) -> Result<DiscreteMeasure> {
    if k >= depth {
        return Err(LabError::arg(format!("piece level {k} needs depth > {k}")));
    }
    let count = n_maps.pow(depth - k);
    let idx: Vec<usize> = (0..count).collect();
    let piece = mu.subset(&idx)?;
    let a = piece.centroid();
    let r = piece
        .points()
        .chunks_exact(piece.dim())
        .map(|x| dist2(x, &a))
        .fold(0.0, f64::max)
        .sqrt();
    if !(r > 0.0) {
        return Err(LabError::arg("piece is a single point"));
    }
    Ok(piece.rescale(&a, r, s)?.with_provenance(format!("piece(k={k})")))
}

fn lpbound(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Result<()> {
    let p = &cfg.lpbound;
    let pieces = |m: &crate::config::MeasureConfig, slot: u64| -> Result<Vec<DiscreteMeasure>> {
        if m.source != SourceKind::Ifs {
            return Err(LabError::arg("lpbound needs an 'ifs' measure source"));
        }
        let spec = m.family().spec()?;
        let mu = m.build(cfg.seed, slot)?;
        let s = exponent_or(p.s, m.nominal_exponent(), "measure")?;
        p.piece_levels
            .iter()
            .map(|&k| blown_up_piece(&mu, spec.maps().len(), m.depth, k, s))
            .collect()
    };
    let mut measures = pieces(&cfg.measure, 0)?;
    if p.family.kind == FamilyKind::Intersection {
        let other = pieces(cfg.second_measure(), 1)?;
        measures = measures
            .iter()
            .zip(&other)
            .map(|(a, b)| {
                let prov = format!("{}x{}", id(a), id(b));
                Ok(product_measure(a, b, DEFAULT_POINT_CAP)?.with_provenance(prov))
            })
            .collect::<Result<_>>()?;
    }
    let sampler = p.family.sampler(measures[0].dim());
    let finest = measures.iter().map(|m| m.gen_scale()).fold(0.0, f64::max);
    let delta = p.delta.unwrap_or_else(|| 2f64.powf(finest.log2().ceil()));
    let rep = lp_family_bound(&measures, &sampler, p.p, delta, p.n_frames, seed)?;
    let mut t = Table::new(&["family", "p", "delta", "measure_id", "integral", "mass", "ratio"]);
    for r in &rep.rows {
        t.push(vec![
            rep.family.clone(),
            fmt_f64(rep.p),
            fmt_f64(rep.delta),
            r.measure_id.clone(),
            fmt_f64(r.integral),
            fmt_f64(r.mass),
            fmt_f64(r.ratio),
        ]);
    }
    art.write_table("lpbound.csv", &t)?;
    art.write_json("lpbound.json", &rep)?;
    art.record("empirical_constant", rep.empirical_constant, None, None);
    art.record("ratio_spread", rep.spread, None, Some(rep.stable));
    Ok(())
}

fn sections(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Result<()> {
    let p = &cfg.sections;
    let a = first(cfg)?;
    let s = exponent_or(p.s, cfg.measure.nominal_exponent(), "measure")?;
    let (stats, m) = if p.product {
        let b = second(cfg)?;
        let t = exponent_or(p.t, cfg.second_measure().nominal_exponent(), "second measure")?;
        let delta = p.delta.unwrap_or(a.gen_scale().max(b.gen_scale()));
        let mut opts = SectionOptions::new(p.n_frames, p.n_levels, delta, (p.scale_min_factor * delta, p.scale_max));
        opts.tol = p.tol;
        opts.level_cell = p.level_cell;
        opts.seed = seed;
        (section_product_test(&a, &b, s, t, &opts)?, a.dim())
    } else {
        let sampler = p.family.sampler(a.dim());
        let delta = p.delta.unwrap_or(a.gen_scale());
        let mut opts = SectionOptions::new(p.n_frames, p.n_levels, delta, (p.scale_min_factor * delta, p.scale_max));
        opts.tol = p.tol;
        opts.level_cell = p.level_cell;
        opts.seed = seed;
        (section_theorem_test(&a, s, &sampler, &opts)?, sampler.target_dim())
    };
    if stats.samples.iter().all(|x| x.n_points == 0) {
        return Err(LabError::EmptySlice);
    }
    let mut t = Table::new(&[
        "frame_index",
        "frame_seed",
        "level_index",
        "u",
        "n_points",
        "dim",
        "stderr",
        "target",
        "within",
        "at_least",
    ]);
    for x in &stats.samples {
        t.push(vec![
            x.frame_index.to_string(),
            x.frame_seed.to_string(),
            x.level_index.to_string(),
            fmt_vec(&x.u),
            x.n_points.to_string(),
            fmt_opt(x.estimate.as_ref().map(|e| e.value)),
            fmt_opt(x.estimate.as_ref().map(|e| e.stderr)),
            fmt_f64(stats.target),
            x.within.to_string(),
            x.at_least.to_string(),
        ]);
    }
    art.write_table("sections.csv", &t)?;
    let mut summary = json!({
        "target": stats.target,
        "tol": stats.tol,
        "fraction_within": stats.fraction_within,
        "fraction_at_least": stats.fraction_at_least,
        "positive_measure_proxy": stats.positive_measure_proxy,
        "median_dim": stats.median_dim,
        "n_estimated": stats.n_estimated,
        "n_unresolved": stats.n_unresolved,
    });
    art.record("target", stats.target, None, None);
    if let Some(d) = stats.median_dim {
        art.record("median_dim", d, None, Some((d - stats.target).abs() <= stats.tol));
    }
    art.record("fraction_within", stats.fraction_within, None, None);
    art.record("fraction_at_least", stats.fraction_at_least, None, None);
    art.record("positive_measure_proxy", stats.positive_measure_proxy, None, Some(stats.positive_measure_proxy > 0.0));

    if p.vanishing && !p.product {
        let sampler = p.family.sampler(a.dim());
        let opts = VanishingOptions {
            t: p.vanishing_t.unwrap_or(s - m as f64 - 0.3),
            r_grid: p.vanishing_radii.clone(),
            delta_grid: p
                .vanishing_deltas
                .clone()
                .unwrap_or_else(|| vec![a.gen_scale(), 2.0 * a.gen_scale()]),
            n_centers: p.vanishing_centers,
            seed: derive_seed(seed, &[1]),
            bad_fraction_limit: 0.05,
        };
        let scan = vanishing_ratio_scan(&a, &sampler, &opts)?;
        let mut vt = Table::new(&["center", "frame_seed", "r", "delta", "ratio"]);
        for r in &scan.rows {
            vt.push(vec![r.center.to_string(), r.frame_seed.to_string(), fmt_f64(r.r), fmt_f64(r.delta), fmt_f64(r.ratio)]);
        }
        art.write_table("vanishing.csv", &vt)?;
        summary["vanishing"] = json!({
            "t": scan.t,
            "radii": scan.radii,
            "median_by_r": scan.median_by_r,
            "median_decay": scan.median_decay,
            "bad_fraction": scan.bad_fraction,
            "flagged": scan.flagged,
        });
        art.record("vanishing_median_decay", scan.median_decay, None, Some(!scan.flagged));
    }
    art.write_json("sections.json", &summary)?;
    Ok(())
}

struct PairSetup {
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    opts: SweepOptions,
}

fn pair_setup(cfg: &ExperimentConfig) -> Result<PairSetup> {
    let p = &cfg.intersect;
    let a = first(cfg)?;
    let b = second(cfg)?;
    let s = exponent_or(p.s, cfg.measure.nominal_exponent(), "measure")?;
    let t = exponent_or(p.t, cfg.second_measure().nominal_exponent(), "second measure")?;
    let delta = p.delta.unwrap_or(a.gen_scale().max(b.gen_scale()));
    let mut opts = SweepOptions::new(delta, (delta, p.scale_max), s, t);
    opts.tol = p.tol;
    opts.failure_threshold = cfg.exceptional.failure_threshold;
    if p.uniform_window {
        opts.sampling = ZSampling::UniformWindow;
    }
    Ok(PairSetup { a, b, opts })
}

fn sweep_rows(t: &mut Table, rotation: usize, sweep: &TranslationSweep) {
    for r in &sweep.rows {
        t.push(vec![
            rotation.to_string(),
            sweep.g_seed.to_string(),
            fmt_vec(&r.z),
            r.matched.to_string(),
            fmt_f64(r.mass),
            fmt_opt(r.dim),
            fmt_opt(r.stderr),
            fmt_f64(sweep.target),
            r.pass.to_string(),
        ]);
    }
}

const SWEEP_HEADER: [&str; 9] = ["rotation", "g_seed", "z", "matched", "matched_mass", "dim", "stderr", "target", "pass"];

fn sweep_summary(sweep: &TranslationSweep) -> serde_json::Value {
    json!({
        "g_seed": sweep.g_seed,
        "target": sweep.target,
        "tol": sweep.tol,
        "threshold_ok": sweep.threshold_ok,
        "n_translations": sweep.rows.len(),
        "n_empty": sweep.n_empty,
        "pass_fraction": sweep.pass_fraction,
        "median_dim": sweep.median_dim,
        "window_volume": sweep.window_volume,
        "positive_measure_proxy": sweep.positive_measure_proxy,
    })
}

fn intersect(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Result<()> {
    let PairSetup { a, b, opts } = pair_setup(cfg)?;
    let p = &cfg.intersect;
    let g = sample_haar(a.dim(), p.rotation_seed.unwrap_or_else(|| derive_seed(seed, &[0])))?;
    let sweep = translation_sweep(&a, &b, &g, p.n_translations, &opts, derive_seed(seed, &[1]))?;
    let mut t = Table::new(&SWEEP_HEADER);
    sweep_rows(&mut t, 0, &sweep);
    art.write_table("intersect.csv", &t)?;
    art.write_json("intersect.json", &sweep_summary(&sweep))?;
    let n = sweep.rows.len().max(1) as f64;
    art.record("target", sweep.target, None, None);
    art.record("pass_fraction", sweep.pass_fraction, None, None);
    if let Some(d) = sweep.median_dim {
        art.record("median_dim", d, None, None);
    }
    art.record("empty_fraction", sweep.n_empty as f64 / n, None, None);
    art.record("positive_measure_proxy", sweep.positive_measure_proxy, None, None);
    Ok(())
}

fn exceptional(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Result<()> {
    let PairSetup { a, b, opts } = pair_setup(cfg)?;
    let probe = rotation_sweep(
        &a,
        &b,
        cfg.exceptional.n_rotations,
        cfg.intersect.n_translations,
        &opts,
        seed,
    )?;
    let mut t = Table::new(&SWEEP_HEADER);
    for (k, s) in probe.sweeps.iter().enumerate() {
        sweep_rows(&mut t, k, s);
    }
    art.write_table("exceptional.csv", &t)?;
    let dims: Vec<f64> = probe.sweeps.iter().filter_map(|s| s.median_dim).collect();
    art.write_json(
        "exceptional.json",
        &json!({
            "rotations_tested": probe.rotations_tested,
            "failures": probe.failures,
            "failure_fraction": probe.failure_fraction,
            "failure_threshold": probe.failure_threshold,
            "exceptional_dim_bound": probe.exceptional_dim_bound,
            "threshold_ok": probe.threshold_ok,
            "overall_pass_fraction": probe.overall_pass_fraction(),
            "rotations": probe.sweeps.iter().map(sweep_summary).collect::<Vec<_>>(),
        }),
    )?;
    art.record("failure_fraction", probe.failure_fraction, None, None);
    art.record("overall_pass_fraction", probe.overall_pass_fraction(), None, None);
    art.record("exceptional_dim_bound", probe.exceptional_dim_bound, None, None);
    if !dims.is_empty() {
        art.record("median_of_median_dims", median(&dims), None, None);
    }
    Ok(())
}
