//! Effective settings: command-line flag, then config file, then default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memoprobe_core::analysis::{BaselineMode, DEFAULT_ALPHA};
use memoprobe_core::datamodel::{RunConfig, SamplingConfig, TaskKind};
use memoprobe_core::grading::GraderKind;
use memoprobe_core::modelclient::{PromptTemplate, TemplateSet};
use memoprobe_core::perturbation::PerturbationKind;
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUT: &str = "memoprobe-out";
pub const DEFAULT_CACHE: &str = ".memoprobe-cache";
pub const DEFAULT_TEST_TIMEOUT_SECS: u64 = 30;

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub benchmarks: Option<Vec<PathBuf>>,
    pub endpoints: Option<Vec<String>>,
    pub provider_url: Option<String>,
    pub levels: Option<u32>,
    pub samples: Option<u32>,
    pub repeats: Option<u32>,
    pub seed: Option<u64>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
    pub alpha: Option<f64>,
    pub max_concurrency: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub grader: Option<String>,
    pub kind: Option<String>,
    pub fallback_word_noise: Option<bool>,
    pub test_command: Option<String>,
    pub test_timeout: Option<u64>,
    pub baseline: Option<String>,
    #[serde(default)]
    pub templates: BTreeMap<String, PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Flag values as parsed, before merging.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub benchmarks: Vec<PathBuf>,
    pub endpoints: Vec<String>,
    pub provider_url: Option<String>,
    pub levels: Option<u32>,
    pub samples: Option<u32>,
    pub repeats: Option<u32>,
    pub seed: Option<u64>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
    pub alpha: Option<f64>,
    pub max_concurrency: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub grader: Option<String>,
    pub kind: Option<String>,
    pub fallback_word_noise: bool,
    pub test_command: Option<String>,
    pub test_timeout: Option<u64>,
    pub baseline: Option<String>,
    pub templates: Vec<String>,
}

/// The merged configuration used by every subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct CliConfig {
    pub benchmarks: Vec<PathBuf>,
    pub endpoints: Vec<String>,
    pub provider_url: Option<String>,
    #[serde(skip)]
    pub run: RunConfig,
    #[serde(skip)]
    pub sampling: SamplingConfig,
    pub alpha: f64,
    pub cache_dir: PathBuf,
    pub out: PathBuf,
    pub grader: Option<GraderKind>,
    pub kind: Option<PerturbationKind>,
    pub fallback_word_noise: bool,
    pub test_command: Option<String>,
    pub test_timeout: u64,
    pub baseline: BaselineMode,
    pub templates: BTreeMap<TaskKind, PathBuf>,
}

fn parse_baseline(s: &str) -> Result<BaselineMode> {
    match s {
        "pooled" | "pooled_complement" => Ok(BaselineMode::PooledComplement),
        "all-pairs" | "all_pairs" => Ok(BaselineMode::AllPairs),
        other => bail!("unknown baseline `{other}` (expected pooled or all-pairs)"),
    }
}

fn parse_task(s: &str) -> Result<TaskKind> {
    TaskKind::ALL
        .into_iter()
        .find(|t| t.as_str() == s)
        .with_context(|| format!("unknown task `{s}` in template override"))
}

impl CliConfig {
    pub fn merge(flags: Overrides, file: FileConfig) -> Result<Self> {
        let defaults = RunConfig::default();
        let sampling_defaults = SamplingConfig::default();
        let run = RunConfig {
            pr_max: flags.levels.or(file.levels).unwrap_or(defaults.pr_max),
            ans_max: flags.samples.or(file.samples).unwrap_or(defaults.ans_max),
            repeats: flags.repeats.or(file.repeats).unwrap_or(defaults.repeats),
            seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
            max_concurrency: flags.max_concurrency.or(file.max_concurrency).unwrap_or(defaults.max_concurrency),
        };
        run.validate()?;
        let sampling = SamplingConfig {
            temperature: flags.temperature.or(file.temperature).unwrap_or(sampling_defaults.temperature),
            nucleus: flags.top_p.or(file.top_p).unwrap_or(sampling_defaults.nucleus),
            max_tokens: flags.max_tokens.or(file.max_tokens).unwrap_or(sampling_defaults.max_tokens),
        };
        sampling.validate()?;
        let alpha = flags.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA);
        if !(alpha > 0.0 && alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {alpha}");
        }

        let grader = flags
            .grader
            .or(file.grader)
            .map(|g| g.parse::<GraderKind>().map_err(anyhow::Error::msg))
            .transpose()?;
        let kind = flags
            .kind
            .or(file.kind)
            .map(|k| k.parse::<PerturbationKind>().map_err(anyhow::Error::msg))
            .transpose()?;
        let baseline = match flags.baseline.or(file.baseline) {
            Some(b) => parse_baseline(&b)?,
            None => BaselineMode::default(),
        };

        let mut templates = BTreeMap::new();
        for (task, path) in file.templates {
            templates.insert(parse_task(&task)?, path);
        }
        for spec in flags.templates {
            let (task, path) = spec
                .split_once('=')
                .with_context(|| format!("template override `{spec}` must look like TASK=PATH"))?;
            templates.insert(parse_task(task)?, PathBuf::from(path));
        }

        Ok(CliConfig {
            benchmarks: if flags.benchmarks.is_empty() {
                file.benchmarks.unwrap_or_default()
            } else {
                flags.benchmarks
            },
            endpoints: if flags.endpoints.is_empty() {
                file.endpoints.unwrap_or_default()
            } else {
                flags.endpoints
            },
            provider_url: flags.provider_url.or(file.provider_url),
            run,
            sampling,
            alpha,
            cache_dir: flags.cache_dir.or(file.cache_dir).unwrap_or_else(|| DEFAULT_CACHE.into()),
            out: flags.out.or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
            grader,
            kind,
            fallback_word_noise: flags.fallback_word_noise || file.fallback_word_noise.unwrap_or(false),
            test_command: flags.test_command.or(file.test_command),
            test_timeout: flags.test_timeout.or(file.test_timeout).unwrap_or(DEFAULT_TEST_TIMEOUT_SECS),
            baseline,
            templates,
        })
    }

    pub fn template_set(&self) -> Result<TemplateSet> {
        let mut set = TemplateSet::default();
        for (task, path) in &self.templates {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("cannot read template {}", path.display()))?;
            set.set(PromptTemplate::new(*task, text)?);
        }
        Ok(set)
    }

    /// Driver-level values for the run manifest.
    pub fn settings(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self).expect("config serializes") {
            serde_json::Value::Object(map) => map
                .into_iter()
                .filter(|(k, _)| !matches!(k.as_str(), "benchmarks" | "endpoints" | "alpha"))
                .collect(),
            _ => unreachable!("config serializes to an object"),
        }
    }
}
