//! Declarative scene files: a data space, a piecewise-uniform distribution,
//! named candidate sequences and evaluation settings, all in JSON.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bioutput::GeometricBiOutput;
use crate::distributions::{ComponentSpec, DataDistribution, UniformNull};
use crate::error::{Error, Result};
use crate::geometry::{DataSpace, McConfig, Region};
use crate::mnist;
use crate::search::{default_tol, rank_candidates, Candidate, CandidateSet, RankedCandidate};
use crate::sequence::{evaluate_sequence, EfficiencyReport, EvalMode, EvalOptions, FunctionSequence};
use crate::spiking::{ContourConfig, CorrelationIndex, SpikingFunction};
use crate::stats::{self, StatConfig};

/// Smallest sampling size accepted in Monte Carlo mode.
pub const MIN_MC_SAMPLES: u64 = 1000;

pub const BUNDLED: &[(&str, &str)] = &[
    ("two_circles", include_str!("../scenes/two_circles.json")),
    ("diamonds", include_str!("../scenes/diamonds.json")),
    ("squares", include_str!("../scenes/squares.json")),
    ("concentric", include_str!("../scenes/concentric.json")),
];

/// Reference values for the bundled scenes: `scene,candidate,quantity,value,tol`.
pub const GOLDEN_CSV: &str = include_str!("../scenes/golden.csv");

pub fn bundled(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == stem).map(|(_, text)| *text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub distribution: DistributionSpec,
    #[serde(default)]
    pub null: NullSpec,
    pub candidates: Vec<CandidateSpec>,
    #[serde(default)]
    pub eval: EvalSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub space: DataSpace,
    pub components: Vec<ComponentSpec>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub overlapping: bool,
}

/// Only the uniform null over the space is supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullSpec {
    #[default]
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub name: String,
    pub functions: Vec<FunctionSpec>,
}

/// Exactly one of `indicator` or `maxcorr`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maxcorr: Option<MaxCorrSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    /// Indicator output inside its region (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxCorrSpec {
    pub refs: RefSource,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.15
}

/// Reference vectors given inline or read from an IDX image file. Relative
/// paths resolve against the scene file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RefSource {
    Inline(Vec<Vec<f64>>),
    Idx {
        idx: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    #[default]
    Expected,
    #[serde(alias = "montecarlo")]
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_tau1")]
    pub tau1: f64,
    pub tau2: f64,
}

fn default_tau1() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour: Option<ContourConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Sample count for region measures with no exact path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_samples: Option<u64>,
}

fn default_n() -> u64 {
    10_000
}

fn default_alpha() -> f64 {
    stats::DEFAULT_ALPHA
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            mode: ModeSpec::Expected,
            n: default_n(),
            seed: 0,
            alpha: default_alpha(),
            contour: None,
            thresholds: None,
            tol: None,
            measure_samples: None,
        }
    }
}

impl EvalSpec {
    pub fn options(&self) -> EvalOptions {
        let mode = match self.mode {
            ModeSpec::Expected => EvalMode::Expected { n: self.n },
            ModeSpec::Mc => EvalMode::MonteCarlo {
                n: self.n,
                seed: self.seed,
            },
        };
        EvalOptions {
            mode,
            alpha: self.alpha,
            contour: self.contour,
        }
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or_else(|| default_tol(&self.options().mode))
    }

    pub fn stat_config(&self) -> Option<StatConfig> {
        self.thresholds.map(|t| StatConfig {
            alpha: self.alpha,
            tau1: t.tau1,
            tau2: t.tau2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::schema("eval.n", "sampling size must be positive"));
        }
        if self.mode == ModeSpec::Mc && self.n < MIN_MC_SAMPLES {
            return Err(Error::schema(
                "eval.n",
                format!("Monte Carlo mode needs n >= {MIN_MC_SAMPLES}, got {}", self.n),
            ));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::schema("eval.alpha", "alpha must be positive"));
        }
        if let Some(c) = &self.contour {
            c.validate().map_err(|e| Error::schema("eval.contour", e.to_string()))?;
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) {
                return Err(Error::schema("eval.tol", "tolerance must be non-negative"));
            }
        }
        if self.measure_samples == Some(0) {
            return Err(Error::schema("eval.measure_samples", "must be positive"));
        }
        Ok(())
    }
}

/// Parses and validates a scene; errors carry the JSON path of the fault.
pub fn parse_scene(text: &[u8]) -> Result<Scene> {
    let text = std::str::from_utf8(text).map_err(|e| Error::schema("$", format!("not UTF-8: {e}")))?;
    let de = &mut serde_json::Deserializer::from_str(text);
    let scene: Scene = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })?;
    scene.validate()?;
    Ok(scene)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    parse_scene(&std::fs::read(path)?)
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let space = &self.distribution.space;
        space
            .validate()
            .map_err(|e| Error::schema("distribution.space", e.to_string()))?;
        let dim = space.dim();
        let check_region = |r: &Region, path: String| -> Result<()> {
            r.validate(&path)?;
            if r.dim() != dim {
                return Err(Error::schema(
                    path,
                    format!("region dimension {} does not match space dimension {dim}", r.dim()),
                ));
            }
            Ok(())
        };
        if self.distribution.components.is_empty() {
            return Err(Error::schema("distribution.components", "at least one component required"));
        }
        for (i, c) in self.distribution.components.iter().enumerate() {
            check_region(&c.region, format!("distribution.components[{i}].region"))?;
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::schema(
                    format!("distribution.components[{i}].weight"),
                    "weight must be positive",
                ));
            }
        }
        if self.candidates.is_empty() {
            return Err(Error::schema("candidates", "at least one candidate required"));
        }
        let mut names = HashSet::new();
        for (i, c) in self.candidates.iter().enumerate() {
            if !names.insert(c.name.as_str()) {
                return Err(Error::schema(format!("candidates[{i}].name"), format!("duplicate name {:?}", c.name)));
            }
            if c.functions.is_empty() {
                return Err(Error::schema(format!("candidates[{i}].functions"), "empty sequence"));
            }
            for (j, f) in c.functions.iter().enumerate() {
                let path = format!("candidates[{i}].functions[{j}]");
                match (&f.indicator, &f.maxcorr) {
                    (Some(r), None) => check_region(r, format!("{path}.indicator"))?,
                    (None, Some(mc)) => {
                        if f.value.is_some() {
                            return Err(Error::schema(format!("{path}.value"), "only indicators take a value"));
                        }
                        if let RefSource::Inline(refs) = &mc.refs {
                            if refs.is_empty() {
                                return Err(Error::schema(format!("{path}.maxcorr.refs"), "no reference vectors"));
                            }
                            if let Some(k) = refs.iter().position(|r| r.len() != dim) {
                                return Err(Error::schema(
                                    format!("{path}.maxcorr.refs[{k}]"),
                                    format!("expected {dim} coordinates"),
                                ));
                            }
                        }
                        if !mc.threshold.is_finite() {
                            return Err(Error::schema(format!("{path}.maxcorr.threshold"), "not finite"));
                        }
                    }
                    _ => {
                        return Err(Error::schema(path, "exactly one of \"indicator\" or \"maxcorr\" is required"));
                    }
                }
                if f.size == Some(0) {
                    return Err(Error::schema(format!("{path}.size"), "size must be at least 1"));
                }
                if let Some(v) = f.value {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::schema(format!("{path}.value"), "value must be positive"));
                    }
                }
            }
        }
        self.eval.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn candidate(&self, name: &str) -> Option<&CandidateSpec> {
        self.candidates.iter().find(|c| c.name == name)
    }

    pub fn measure_config(&self) -> Option<McConfig> {
        self.eval.measure_samples.map(|samples| McConfig {
            samples,
            seed: self.eval.seed,
        })
    }

    /// Builds the distribution, null and candidate sequences. `base` is the
    /// directory relative reference paths resolve against.
    pub fn bind(&self, base: Option<&Path>) -> Result<BoundScene> {
        let dist = DataDistribution::with_options(
            self.distribution.space.clone(),
            self.distribution.components.clone(),
            self.distribution.overlapping,
            self.measure_config(),
        )?;
        let null = UniformNull::new(self.distribution.space.clone());
        let candidates = self
            .candidates
            .iter()
            .map(|c| {
                let fns = c
                    .functions
                    .iter()
                    .map(|f| build_function(f, base))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Candidate {
                    name: c.name.clone(),
                    sequence: FunctionSequence::new(fns)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundScene {
            name: self.name.clone(),
            dist,
            null,
            candidates,
            eval: self.eval,
        })
    }
}

fn build_function(f: &FunctionSpec, base: Option<&Path>) -> Result<SpikingFunction> {
    let func = match (&f.indicator, &f.maxcorr) {
        (Some(region), None) => match f.value {
            Some(v) => SpikingFunction::scaled_indicator(region.clone(), v, 0.0),
            None => SpikingFunction::indicator(region.clone()),
        },
        (None, Some(mc)) => {
            let index = match &mc.refs {
                RefSource::Inline(refs) => CorrelationIndex::new(refs)?,
                RefSource::Idx { idx, limit } => {
                    let path = match base {
                        Some(b) if idx.is_relative() => b.join(idx),
                        _ => idx.clone(),
                    };
                    let data = mnist::load_idx(path)?;
                    let data = limit.map_or(data.clone(), |k| data.head(k));
                    CorrelationIndex::from_rows(data.images)?
                }
            };
            SpikingFunction::max_correlation(Arc::new(index), mc.threshold)?
        }
        _ => return Err(Error::InvalidConfig("function needs exactly one kind".into())),
    };
    match f.size {
        Some(s) => func.with_size(s),
        None => Ok(func),
    }
}

/// A scene with its distributions and sequences constructed.
#[derive(Clone, Debug)]
pub struct BoundScene {
    pub name: String,
    pub dist: DataDistribution,
    pub null: UniformNull,
    pub candidates: Vec<Candidate>,
    pub eval: EvalSpec,
}

impl BoundScene {
    pub fn candidate(&self, name: &str) -> Result<&Candidate> {
        self.candidates
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("scene {} has no candidate {name:?}", self.name)))
    }

    pub fn evaluate(&self, name: &str, opts: &EvalOptions) -> Result<EfficiencyReport> {
        evaluate_sequence(&self.candidate(name)?.sequence, &self.dist, &self.null, opts)
    }

    pub fn rank(&self, opts: &EvalOptions, tol: f64) -> Result<Vec<RankedCandidate>> {
        rank_candidates(
            &CandidateSet {
                candidates: self.candidates.clone(),
                dist: &self.dist,
                null: &self.null,
            },
            opts,
            tol,
        )
    }

    /// Candidate's indicators as bi-output functions with silent second heads.
    pub fn bioutputs(&self, name: &str) -> Result<Vec<GeometricBiOutput>> {
        self.candidate(name)?
            .sequence
            .functions()
            .iter()
            .map(|f| {
                let region = f
                    .region()
                    .ok_or_else(|| Error::Unsupported("bi-output heads need indicator functions".into()))?;
                GeometricBiOutput::new(region.clone(), None, Some(f.declared_size()))
            })
            .collect()
    }
}

/// One row of the golden table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenRow {
    pub scene: String,
    pub candidate: String,
    pub quantity: Quantity,
    pub value: f64,
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Ability,
    Se,
}

impl Quantity {
    pub fn of(&self, report: &EfficiencyReport) -> f64 {
        match self {
            Quantity::Ability => report.total.ability,
            Quantity::Se => report.total.se,
        }
    }
}

pub fn golden_rows() -> Result<Vec<GoldenRow>> {
    csv::Reader::from_reader(GOLDEN_CSV.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<GoldenRow>, _>>()
        .map_err(|e| Error::InvalidConfig(format!("golden table: {e}")))
}

/// Serialized form of a list of bi-output functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiOutputSpec {
    pub first: Region,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
}

impl BiOutputSpec {
    pub fn build(&self) -> Result<GeometricBiOutput> {
        self.first.validate("first")?;
        if let Some(s) = &self.second {
            s.validate("second")?;
        }
        GeometricBiOutput::new(self.first.clone(), self.second.clone(), self.size)
    }
}

/// Parses a JSON array of bi-output specs.
pub fn parse_bioutputs(text: &[u8]) -> Result<Vec<GeometricBiOutput>> {
    let de = &mut serde_json::Deserializer::from_slice(text);
    let specs: Vec<BiOutputSpec> = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })?;
    if specs.is_empty() {
        return Err(Error::EmptySequence);
    }
    specs.iter().map(BiOutputSpec::build).collect()
}
