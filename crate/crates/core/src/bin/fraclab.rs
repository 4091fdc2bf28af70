use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fraclab::config::{ExperimentConfig, ExperimentKind};
use fraclab::runner::{exit_code, run};
use fraclab::verify::{verify_suite, Level};
use fraclab::LabError;

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Fractal measure experiments: dimensions, energies, Fourier decay, projections, slices, intersections")]
struct Cli {
    /// TOML experiment configuration; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); overrides the configured value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Reject unknown configuration keys instead of warning.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a measure and write it in the measure file format.
    Generate,
    /// Frostman exponent and constant from sampled ball masses.
    Frostman,
    /// Riesz s-energy, optionally with the calibrated frequency side.
    Energy,
    /// Decay rate of spherical averages of |μ̂|².
    Decay,
    /// L^p norms of binned projections over a frame family.
    Project,
    /// Uniformity of the L^p bound over blown-up IFS pieces.
    Lpbound,
    /// Box dimension of slices along random frames.
    Sections,
    /// Intersections A ∩ (g(B) + z) over translations for one rotation.
    Intersect,
    /// Translation sweeps over many rotations.
    Exceptional,
    /// Run the verification battery.
    Verify {
        #[arg(value_enum, default_value = "quick")]
        level: LevelArg,
    },
    /// Print the fully resolved configuration and exit.
    ShowConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

fn fail(e: &LabError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e) as u8)
}

fn load(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let parsed = ExperimentConfig::load(path)?;
            if !parsed.unknown_keys.is_empty() {
                let keys = parsed.unknown_keys.join(", ");
                if cli.strict {
                    return Err(LabError::InvalidArgument(format!("unknown config keys: {keys}")));
                }
                eprintln!("warning: ignoring unknown config keys: {keys}");
            }
            parsed.config
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let kind = match &cli.command {
        Command::Generate => ExperimentKind::Generate,
        Command::Frostman => ExperimentKind::Frostman,
        Command::Energy => ExperimentKind::Energy,
        Command::Decay => ExperimentKind::Decay,
        Command::Project => ExperimentKind::Project,
        Command::Lpbound => ExperimentKind::Lpbound,
        Command::Sections => ExperimentKind::Sections,
        Command::Intersect => ExperimentKind::Intersect,
        Command::Exceptional => ExperimentKind::Exceptional,
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return ExitCode::SUCCESS;
        }
        Command::Verify { level } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            return verify(&cli, &cfg, level);
        }
    };
    match run(kind, &cfg, &cli.out) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("artifacts in {}", cli.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn verify(cli: &Cli, cfg: &ExperimentConfig, level: Level) -> ExitCode {
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build() {
        Ok(p) => p,
        Err(e) => return fail(&LabError::Numerical(e.to_string())),
    };
    let start = std::time::Instant::now();
    let report = pool.install(|| verify_suite(level, cfg.seed, &mut |c| println!("{}", c.line())));
    let report = match report {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let written = report.write(&cli.out).and_then(|mut art| art.finish(start.elapsed().as_secs_f64()));
    if let Err(e) = written {
        return fail(&e);
    }
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {failed} failed, {:.1}s", report.checks.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
