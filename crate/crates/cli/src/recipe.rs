//! Experiment recipes: plain-text `key = value` files with `[dataset]`,
//! `[model]`, `[perturbation]` and `[eval]` sections.
//!
//! Keys before the first section header are experiment-level (`name`,
//! `out`). `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use uncle_core::datagen::{gen_lorenz96, gen_nc8, gen_nd8, gen_tvsem, GroundTruth, Lorenz96Params, TimeSeriesDataset};
use uncle_core::discovery::{PerturbationConfig, DEFAULT_SMOOTHING_SIGMA};
use uncle_core::model::ModelConfig;

use crate::error::CliError;

/// Offset between consecutive NC8 replica start times.
pub const NC8_REPLICA_OFFSET: i64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Generator {
    Lorenz96,
    Tvsem,
    Nc8,
    Nd8,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Lorenz96 => "lorenz96",
            Generator::Tvsem => "tvsem",
            Generator::Nc8 => "nc8",
            Generator::Nd8 => "nd8",
        }
    }

    /// Whether the generator's ground truth changes over time.
    pub fn is_dynamic(self) -> bool {
        matches!(self, Generator::Tvsem | Generator::Nd8)
    }

    pub fn default_steps(self) -> usize {
        match self {
            Generator::Lorenz96 => 250,
            Generator::Tvsem | Generator::Nc8 | Generator::Nd8 => 2000,
        }
    }
}

impl FromStr for Generator {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lorenz96" | "lorenz" => Ok(Generator::Lorenz96),
            "tvsem" => Ok(Generator::Tvsem),
            "nc8" => Ok(Generator::Nc8),
            "nd8" => Ok(Generator::Nd8),
            other => Err(CliError::Usage(format!(
                "unknown generator {other:?} (expected lorenz96, tvsem, nc8 or nd8)"
            ))),
        }
    }
}

/// Which corpus to generate and how many replicas.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub steps: usize,
    /// Lorenz-96 dimension.
    pub p: usize,
    /// Lorenz-96 forcing.
    pub forcing: f64,
    /// NC8 start offset of replica 0.
    pub t0: i64,
    pub replicas: usize,
    /// Replica `r` is generated with `seed + r`.
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(generator: Generator) -> Self {
        Self {
            generator,
            steps: generator.default_steps(),
            p: 20,
            forcing: 10.0,
            t0: 0,
            replicas: 1,
            seed: 0,
        }
    }

    pub fn replica_seed(&self, replica: usize) -> u64 {
        self.seed.wrapping_add(replica as u64)
    }

    pub fn generate(&self, replica: usize) -> uncle_core::Result<(TimeSeriesDataset, GroundTruth)> {
        let seed = self.replica_seed(replica);
        let (data, truth) = match self.generator {
            Generator::Lorenz96 => gen_lorenz96(&Lorenz96Params::new(self.p, self.steps, self.forcing), seed)?,
            Generator::Tvsem => gen_tvsem(self.steps, seed)?,
            Generator::Nc8 => gen_nc8(self.steps, self.t0 + NC8_REPLICA_OFFSET * replica as i64, seed)?,
            Generator::Nd8 => gen_nd8(self.steps, seed)?,
        };
        Ok((data.with_origin(replica, seed), truth))
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "gen" | "generator" => {
                let g: Generator = value.parse()?;
                if g != self.generator {
                    self.generator = g;
                    self.steps = g.default_steps();
                }
            }
            "T" | "steps" => self.steps = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "F" | "forcing" => self.forcing = parse(key, value)?,
            "t0" => self.t0 = parse(key, value)?,
            "replicas" => self.replicas = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown [dataset] key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        let mut kv = vec![("gen", self.generator.name().to_string()), ("T", self.steps.to_string())];
        match self.generator {
            Generator::Lorenz96 => {
                kv.push(("p", self.p.to_string()));
                kv.push(("F", self.forcing.to_string()));
            }
            Generator::Nc8 => kv.push(("t0", self.t0.to_string())),
            Generator::Tvsem | Generator::Nd8 => {}
        }
        kv.push(("replicas", self.replicas.to_string()));
        kv.push(("seed", self.seed.to_string()));
        kv
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Perturb,
    Aggregate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Perturb => "perturb",
            Mode::Aggregate => "aggregate",
        }
    }

    /// Row label in result tables.
    pub fn method(self) -> &'static str {
        match self {
            Mode::Perturb => "UnCLe(P)",
            Mode::Aggregate => "UnCLe(A)",
        }
    }
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perturb" | "p" => Ok(Mode::Perturb),
            "aggregate" | "a" => Ok(Mode::Aggregate),
            other => Err(CliError::Usage(format!("unknown mode {other:?} (expected perturb or aggregate)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSpec {
    pub modes: Vec<Mode>,
    /// Gaussian width for exported smoothed edge series.
    pub smooth: f64,
    /// Adds a time-invariant reference row for dynamic datasets.
    pub static_best: bool,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            modes: vec![Mode::Perturb, Mode::Aggregate],
            smooth: DEFAULT_SMOOTHING_SIGMA,
            static_best: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recipe {
    pub name: String,
    pub out: Option<PathBuf>,
    pub dataset: DatasetSpec,
    /// Ordered `[model]` overrides; `preset` is applied first.
    pub model: Vec<(String, String)>,
    pub perturbation: PerturbationConfig,
    pub eval: EvalSpec,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

impl Recipe {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read recipe {}: {e}", path.display())))?;
        let mut r = Self::parse(&text).map_err(|CliError::Usage(m)| CliError::Usage(format!("{}: {m}", path.display())))?;
        if r.name.is_empty() {
            r.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(r)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut section = String::new();
        let mut name = String::new();
        let mut out = None;
        let mut dataset: Vec<(String, String)> = Vec::new();
        let mut model = Vec::new();
        let mut perturbation = PerturbationConfig::default();
        let mut eval = EvalSpec::default();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |m: String| CliError::Usage(format!("line {}: {m}", lineno + 1));
            if let Some(inner) = line.strip_prefix('[') {
                let s = inner.strip_suffix(']').ok_or_else(|| at(format!("bad header {line:?}")))?.trim();
                if !["dataset", "model", "perturbation", "eval"].contains(&s) {
                    return Err(at(format!("unknown section [{s}]")));
                }
                section = s.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let wrap = |CliError::Usage(m)| at(m);
            match section.as_str() {
                "" => match k {
                    "name" => name = v.to_string(),
                    "out" => out = Some(PathBuf::from(v)),
                    _ => return Err(at(format!("unknown top-level key {k:?}"))),
                },
                "dataset" => dataset.push((k.to_string(), v.to_string())),
                "model" => model.push((k.to_string(), v.to_string())),
                "perturbation" => match k {
                    "strategy" => {
                        perturbation.strategy = v.parse().map_err(|e: uncle_core::UncleError| at(e.to_string()))?
                    }
                    "repeats" => perturbation.repeats = parse(k, v).map_err(wrap)?,
                    "noise_sigma" => perturbation.noise_sigma = parse(k, v).map_err(wrap)?,
                    "seed" => perturbation.seed = parse(k, v).map_err(wrap)?,
                    _ => return Err(at(format!("unknown [perturbation] key {k:?}"))),
                },
                "eval" => match k {
                    "modes" => {
                        eval.modes = v
                            .split(',')
                            .filter(|s| !s.trim().is_empty())
                            .map(str::parse)
                            .collect::<Result<_, _>>()
                            .map_err(wrap)?
                    }
                    "smooth" => eval.smooth = parse(k, v).map_err(wrap)?,
                    "static_best" => eval.static_best = parse(k, v).map_err(wrap)?,
                    _ => return Err(at(format!("unknown [eval] key {k:?}"))),
                },
                _ => unreachable!("sections are validated above"),
            }
        }

        let gen = dataset
            .iter()
            .find(|(k, _)| k == "gen" || k == "generator")
            .ok_or_else(|| CliError::Usage("[dataset] needs gen = lorenz96|tvsem|nc8|nd8".into()))?;
        let mut spec = DatasetSpec::new(gen.1.parse()?);
        for (k, v) in &dataset {
            spec.set(k, v)?;
        }
        if spec.replicas == 0 {
            return Err(CliError::Usage("replicas must be positive".into()));
        }
        if eval.modes.is_empty() {
            return Err(CliError::Usage("[eval] modes must name at least one mode".into()));
        }
        perturbation.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let r = Recipe {
            name,
            out,
            dataset: spec,
            model,
            perturbation,
            eval,
        };
        r.model_config(0, 1)?;
        Ok(r)
    }

    /// Model configuration for replica `replica`; its seed is offset by the
    /// replica index.
    pub fn model_config(&self, replica: usize, num_vars: usize) -> Result<ModelConfig, CliError> {
        model_config_from(&self.model, num_vars, replica)
    }

    pub fn perturbation_for(&self, replica: usize) -> PerturbationConfig {
        PerturbationConfig {
            seed: self.perturbation.seed.wrapping_add(replica as u64),
            ..self.perturbation.clone()
        }
    }

    /// Canonical text form; parsing it yields an equal recipe.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        let _ = writeln!(s, "\n[dataset]");
        for (k, v) in self.dataset.to_kv() {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[model]");
        for (k, v) in &self.model {
            let _ = writeln!(s, "{k} = {v}");
        }
        let p = &self.perturbation;
        let _ = writeln!(s, "\n[perturbation]");
        let _ = writeln!(s, "strategy = {}", p.strategy);
        let _ = writeln!(s, "repeats = {}", p.repeats);
        let _ = writeln!(s, "noise_sigma = {}", p.noise_sigma);
        let _ = writeln!(s, "seed = {}", p.seed);
        let _ = writeln!(s, "\n[eval]");
        let modes: Vec<&str> = self.eval.modes.iter().map(|m| m.name()).collect();
        let _ = writeln!(s, "modes = {}", modes.join(","));
        let _ = writeln!(s, "smooth = {}", self.eval.smooth);
        let _ = writeln!(s, "static_best = {}", self.eval.static_best);
        s
    }
}

/// Builds a configuration from ordered overrides. A `preset` entry is applied
/// before the others wherever it appears.
pub fn model_config_from(overrides: &[(String, String)], num_vars: usize, replica: usize) -> Result<ModelConfig, CliError> {
    let mut cfg = ModelConfig::new(num_vars);
    let usage = |e: uncle_core::UncleError| CliError::Usage(e.to_string());
    for (k, v) in overrides.iter().filter(|(k, _)| k == "preset") {
        cfg.set(k, v).map_err(usage)?;
    }
    for (k, v) in overrides.iter().filter(|(k, _)| k != "preset") {
        if k == "num_vars" {
            return Err(CliError::Usage("num_vars is taken from the data".into()));
        }
        cfg.set(k, v).map_err(usage)?;
    }
    cfg.seed = cfg.seed.wrapping_add(replica as u64);
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}
