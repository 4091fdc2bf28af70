//! Experiment configuration: a TOML file with one table per experiment kind.
//! Every field has a default, and the fully resolved configuration is echoed
//! next to the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::ifs::{natural_measure_default, stochastic_sample, IfsFamily};
use crate::measure::{builtin, io, DiscreteMeasure};
use crate::numeric::derive_seed;
use crate::projections::FrameSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Generate,
    Frostman,
    Energy,
    Decay,
    Project,
    Lpbound,
    Sections,
    Intersect,
    Exceptional,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Generate => "generate",
            ExperimentKind::Frostman => "frostman",
            ExperimentKind::Energy => "energy",
            ExperimentKind::Decay => "decay",
            ExperimentKind::Project => "project",
            ExperimentKind::Lpbound => "lpbound",
            ExperimentKind::Sections => "sections",
            ExperimentKind::Intersect => "intersect",
            ExperimentKind::Exceptional => "exceptional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Natural measure of a built-in IFS at a fixed depth.
    Ifs,
    /// Chaos-game sample of a built-in IFS.
    Chaos,
    Builtin,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Cantor,
    CantorDust,
    FourCorner,
    Sierpinski,
    UniformCube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinName {
    /// Midpoint grid on [0,1].
    UnitInterval,
    /// Midpoint grid on [0,1]^2 with round(sqrt(n)) points per side.
    UnitSquare,
    UniformRandom,
    Segment,
    Circle,
    Gaussian,
    Ball,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureConfig {
    pub source: SourceKind,
    pub family: FamilyName,
    /// Four-corner ratio.
    pub ratio: f64,
    pub depth: u32,
    pub n_points: usize,
    pub burn_in: usize,
    pub builtin: BuiltinName,
    pub dim: usize,
    pub sigma: f64,
    pub radius: f64,
    pub path: Option<PathBuf>,
    /// Defaults to a seed derived from the global one.
    pub seed: Option<u64>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            source: SourceKind::Ifs,
            family: FamilyName::Sierpinski,
            ratio: 0.25,
            depth: 8,
            n_points: 10_000,
            burn_in: 100,
            builtin: BuiltinName::UnitSquare,
            dim: 2,
            sigma: 0.2,
            radius: 0.5,
            path: None,
            seed: None,
        }
    }
}

impl MeasureConfig {
    pub fn family(&self) -> IfsFamily {
        match self.family {
            FamilyName::Cantor => IfsFamily::Cantor,
            FamilyName::CantorDust => IfsFamily::CantorDust,
            FamilyName::FourCorner => IfsFamily::FourCorner { ratio: self.ratio },
            FamilyName::Sierpinski => IfsFamily::Sierpinski,
            FamilyName::UniformCube => IfsFamily::UniformCube { dim: self.dim },
        }
    }

    /// The exponent the measure is built to have, when it is known in advance.
    pub fn nominal_exponent(&self) -> Option<f64> {
        match self.source {
            SourceKind::Ifs | SourceKind::Chaos => self.family().spec().ok().map(|s| crate::ifs::moran_dimension(&s)),
            SourceKind::Builtin => Some(match self.builtin {
                BuiltinName::UnitInterval | BuiltinName::Segment | BuiltinName::Circle => 1.0,
                BuiltinName::UnitSquare => 2.0,
                BuiltinName::UniformRandom | BuiltinName::Gaussian | BuiltinName::Ball => self.dim as f64,
            }),
            SourceKind::File => None,
        }
    }

    pub fn build(&self, global_seed: u64, slot: u64) -> Result<DiscreteMeasure> {
        let seed = self.seed.unwrap_or_else(|| derive_seed(global_seed, &[0x3EA5, slot]));
        match self.source {
            SourceKind::Ifs => natural_measure_default(&self.family().spec()?, self.depth),
            SourceKind::Chaos => stochastic_sample(&self.family().spec()?, self.n_points, self.burn_in, seed),
            SourceKind::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| LabError::arg("measure source 'file' needs a path"))?;
                io::load(path)
            }
            SourceKind::Builtin => match self.builtin {
                BuiltinName::UnitInterval => builtin::uniform_grid(1, self.n_points),
                BuiltinName::UnitSquare => builtin::uniform_grid(2, (self.n_points as f64).sqrt().round().max(1.0) as usize),
                BuiltinName::UniformRandom => builtin::uniform_random(self.dim, self.n_points, seed),
                BuiltinName::Segment => builtin::segment(self.n_points),
                BuiltinName::Circle => builtin::circle(self.n_points),
                BuiltinName::Gaussian => builtin::gaussian_cloud(self.dim, self.n_points, self.sigma, seed),
                BuiltinName::Ball => builtin::uniform_ball(self.dim, self.n_points, self.radius, seed),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Grassmannian,
    Axis,
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    /// Target dimension for Grassmannian and axis frames.
    pub m: usize,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            kind: FamilyKind::Grassmannian,
            m: 1,
        }
    }
}

impl FamilyConfig {
    pub fn sampler(&self, n: usize) -> FrameSampler {
        match self.kind {
            FamilyKind::Grassmannian => FrameSampler::Grassmannian { n, m: self.m },
            FamilyKind::Axis => FrameSampler::Axis { n, m: self.m },
            FamilyKind::Intersection => FrameSampler::Intersection { n: n / 2 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateParams {
    pub format: FileFormat,
    pub file_name: String,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams {
            format: FileFormat::Text,
            file_name: "measure.txt".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrostmanParams {
    /// Defaults to 4 x the generation scale.
    pub r_min: Option<f64>,
    pub r_max: f64,
    pub n_centers: usize,
    pub guard_quantile: f64,
}

impl Default for FrostmanParams {
    fn default() -> Self {
        FrostmanParams {
            r_min: None,
            r_max: 0.25,
            n_centers: 200,
            guard_quantile: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    pub s: f64,
    /// Defaults to the generation scale.
    pub mollify_scale: Option<f64>,
    /// Also evaluate the frequency side (calibrating c(n,s) first).
    pub fourier: bool,
    pub r_max: Option<f64>,
    pub nodes: usize,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            s: 0.5,
            mollify_scale: None,
            fourier: false,
            r_max: None,
            nodes: 257,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayParams {
    pub t_prime: f64,
    pub r_min: f64,
    /// Defaults to 1/(4 x generation scale).
    pub r_max: Option<f64>,
    pub slack: f64,
    pub n_directions: Option<usize>,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams {
            t_prime: 0.9,
            r_min: 2.0,
            r_max: None,
            slack: 0.15,
            n_directions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectParams {
    pub family: FamilyConfig,
    pub p: f64,
    pub delta: f64,
    pub n_frames: usize,
}

impl Default for ProjectParams {
    fn default() -> Self {
        ProjectParams {
            family: FamilyConfig::default(),
            p: 2.0,
            delta: 1.0 / 64.0,
            n_frames: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpBoundParams {
    pub family: FamilyConfig,
    pub p: f64,
    /// Bin side; defaults to the smallest power of two that resolves every piece.
    pub delta: Option<f64>,
    pub n_frames: usize,
    /// Pieces f_0^k(A) for these k, each blown up to unit size (k = 0 is A).
    pub piece_levels: Vec<u32>,
    /// Frostman exponent used for the rescaling; defaults to the nominal one.
    pub s: Option<f64>,
}

impl Default for LpBoundParams {
    fn default() -> Self {
        LpBoundParams {
            family: FamilyConfig::default(),
            p: 2.0,
            delta: None,
            n_frames: 32,
            piece_levels: vec![0, 1, 2],
            s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectionParams {
    pub family: FamilyConfig,
    pub n_frames: usize,
    pub n_levels: usize,
    /// Tube half-width; defaults to the generation scale.
    pub delta: Option<f64>,
    /// Lower box-count scale as a multiple of δ.
    pub scale_min_factor: f64,
    pub scale_max: f64,
    pub tol: f64,
    pub level_cell: f64,
    /// Exponent of A (and of B in product mode); defaults to the nominal one.
    pub s: Option<f64>,
    pub t: Option<f64>,
    /// Slice A x B along x - g y instead of A alone; uses the `second` measure.
    pub product: bool,
    /// Also run the small-radius slab scan.
    pub vanishing: bool,
    /// Scan exponent; defaults to s - m - 0.3.
    pub vanishing_t: Option<f64>,
    pub vanishing_radii: Vec<f64>,
    /// Slab half-widths; default to 1 and 2 times the generation scale.
    pub vanishing_deltas: Option<Vec<f64>>,
    pub vanishing_centers: usize,
}

impl Default for SectionParams {
    fn default() -> Self {
        SectionParams {
            family: FamilyConfig::default(),
            n_frames: 100,
            n_levels: 20,
            delta: None,
            scale_min_factor: 4.0,
            scale_max: 0.5,
            tol: 0.2,
            level_cell: 1.0 / 16.0,
            s: None,
            t: None,
            product: false,
            vanishing: false,
            vanishing_t: None,
            vanishing_radii: vec![0.125, 0.0625, 0.03125, 0.015625],
            vanishing_deltas: None,
            vanishing_centers: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntersectParams {
    /// Matching width; defaults to the larger generation scale.
    pub delta: Option<f64>,
    pub scale_max: f64,
    pub s: Option<f64>,
    pub t: Option<f64>,
    pub tol: f64,
    pub n_translations: usize,
    pub uniform_window: bool,
    /// Seed of the Haar rotation; defaults to one derived from the global seed.
    pub rotation_seed: Option<u64>,
}

impl Default for IntersectParams {
    fn default() -> Self {
        IntersectParams {
            delta: None,
            scale_max: 0.5,
            s: None,
            t: None,
            tol: 0.2,
            n_translations: 50,
            uniform_window: false,
            rotation_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExceptionalParams {
    pub n_rotations: usize,
    pub failure_threshold: f64,
}

impl Default for ExceptionalParams {
    fn default() -> Self {
        ExceptionalParams {
            n_rotations: 50,
            failure_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub measure: MeasureConfig,
    /// B for intersections and product sections; defaults to a copy of `measure`.
    pub second: Option<MeasureConfig>,
    pub generate: GenerateParams,
    pub frostman: FrostmanParams,
    pub energy: EnergyParams,
    pub decay: DecayParams,
    pub project: ProjectParams,
    pub lpbound: LpBoundParams,
    pub sections: SectionParams,
    pub intersect: IntersectParams,
    pub exceptional: ExceptionalParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            threads: 0,
            measure: MeasureConfig::default(),
            second: None,
            generate: GenerateParams::default(),
            frostman: FrostmanParams::default(),
            energy: EnergyParams::default(),
            decay: DecayParams::default(),
            project: ProjectParams::default(),
            lpbound: LpBoundParams::default(),
            sections: SectionParams::default(),
            intersect: IntersectParams::default(),
            exceptional: ExceptionalParams::default(),
        }
    }
}

/// A parsed configuration plus the keys it did not recognise.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub config: ExperimentConfig,
    pub unknown_keys: Vec<String>,
}

fn unknown_keys(user: &toml::Value, resolved: &toml::Value, path: &str, out: &mut Vec<String>) {
    if let (toml::Value::Table(u), toml::Value::Table(r)) = (user, resolved) {
        for (k, v) in u {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            match r.get(k) {
                Some(rv) => unknown_keys(v, rv, &p, out),
                None => out.push(p),
            }
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Parsed> {
        let user: toml::Value = toml::from_str(text).map_err(|e| LabError::Format(format!("config: {e}")))?;
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Format(format!("config: {e}")))?;
        let resolved = toml::Value::try_from(&config).map_err(|e| LabError::Format(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &resolved, "", &mut unknown);
        Ok(Parsed {
            config,
            unknown_keys: unknown,
        })
    }

    pub fn load(path: &Path) -> Result<Parsed> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn second_measure(&self) -> &MeasureConfig {
        self.second.as_ref().unwrap_or(&self.measure)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON of (kind, config).
    pub fn hash(&self, kind: ExperimentKind) -> String {
        let json = serde_json::to_string(&(kind, self)).expect("configuration serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}
