//! Resolution of the common flags: command-line flag, then config file, then
//! built-in default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use serde::Deserialize;

use rangekit::projection::ModelConfig;
use rangekit::{ClassSchema, SensorPreset, SphericalProjectionModel};

use crate::CommonArgs;

pub const THREADS_ENV: &str = "RANGEKIT_THREADS";
pub const DEFAULT_MODEL: SensorPreset = SensorPreset::Os2_128;
pub const DEFAULT_OUTPUT: &str = "rangekit-out";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

/// Contents of a `--config` file. Every key is optional; subcommand tables
/// hold that command's own defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<String>,
    pub schema: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub parallel: Option<bool>,
    #[serde(default)]
    pub bench: BenchConfigFile,
    #[serde(default)]
    pub eval: EvalConfigFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfigFile {
    pub backend: Option<String>,
    pub budget_ms: Option<f64>,
    pub repetitions: Option<usize>,
    pub warmup: Option<usize>,
    pub enforce_budget: Option<bool>,
    pub synthetic_scans: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfigFile {
    pub classes: Option<Vec<String>>,
    pub domain: Option<String>,
}

impl ConfigFile {
    /// Relative paths inside the file are taken relative to the file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ConfigFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.schema);
        rebase(&mut cfg.output);
        if let Some(m) = cfg.model.as_mut() {
            if SensorPreset::from_name(m).is_none() && Path::new(m).is_relative() {
                *m = base.join(&*m).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved common settings.
#[derive(Debug)]
pub struct Settings {
    pub model: SphericalProjectionModel,
    pub model_name: String,
    pub schema: ClassSchema,
    pub output: PathBuf,
    pub output_given: bool,
    pub format: Format,
    pub parallel: bool,
    pub config: ConfigFile,
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> anyhow::Result<Self> {
        let config = match &args.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let model_name = args
            .model
            .clone()
            .or_else(|| config.model.clone())
            .unwrap_or_else(|| DEFAULT_MODEL.name().to_string());
        let model = parse_model(&model_name)?;
        let schema = match args.schema.as_ref().or(config.schema.as_ref()) {
            Some(p) => ClassSchema::from_file(p).with_context(|| format!("loading schema {}", p.display()))?,
            None => ClassSchema::semantic_thab(),
        };
        let output_given = args.output.is_some() || config.output.is_some();
        let output = args
            .output
            .clone()
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
        let format = args.format.or(config.format).unwrap_or_default();
        let parallel = args.parallel || config.parallel.unwrap_or(false);
        Ok(Self {
            model,
            model_name,
            schema,
            output,
            output_given,
            format,
            parallel,
            config,
        })
    }

    /// Runs `f` on a pool capped by RANGEKIT_THREADS when parallel mode is on,
    /// otherwise on the calling thread.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> anyhow::Result<R> {
        if !self.parallel {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(thread_cap()?).build()?;
        Ok(pool.install(f))
    }
}

/// A preset name or the path of a model TOML file.
pub fn parse_model(name: &str) -> anyhow::Result<SphericalProjectionModel> {
    if let Some(p) = SensorPreset::from_name(name) {
        return Ok(SphericalProjectionModel::preset(p));
    }
    let path = Path::new(name);
    if !path.is_file() {
        let presets: Vec<_> = SensorPreset::ALL.iter().map(|p| p.name()).collect();
        bail!("model {name:?} is neither a preset ({}) nor a file", presets.join(", "));
    }
    let text = std::fs::read_to_string(path)?;
    let model = ModelConfig::from_toml(&text)
        .and_then(|c| c.build())
        .with_context(|| format!("model file {}", path.display()))?;
    Ok(model)
}

/// Worker threads for parallel mode: RANGEKIT_THREADS if set, capped at the
/// available parallelism.
pub fn thread_cap() -> anyhow::Result<usize> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n.min(available)),
            _ => bail!("{THREADS_ENV} must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(available),
    }
}
