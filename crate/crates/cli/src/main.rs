use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "memoprobe", version, about = "Perturbation-sensitivity probe for benchmark memorization")]
struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Write the perturbation ladder of every sample to ladders.jsonl.
    Perturb(PerturbArgs),
    /// Evaluate every sample against every endpoint and write records.jsonl.
    Run(RunArgs),
    /// Run the advantage detectors over records and write findings.jsonl.
    Analyze(AnalyzeArgs),
    /// Write report.csv, findings.jsonl, summary.json and boxplots.
    Report(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct PerturbArgs {
    /// Benchmark JSONL file (repeatable).
    #[arg(long = "benchmark", value_name = "FILE")]
    benchmarks: Vec<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long, value_name = "URL")]
    provider_url: Option<String>,
    /// Use word-drop noise for prose inputs when no paraphrase provider is set.
    #[arg(long)]
    fallback_word_noise: bool,
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    perturb: PerturbArgs,
    /// `mock:memorizer`, `mock:generalizer?decay=D` or an http(s) URL,
    /// optionally prefixed with `name=` and suffixed with `#model_id`.
    #[arg(long = "endpoint", value_name = "SPEC")]
    endpoints: Vec<String>,
    /// Answers sampled per prompt.
    #[arg(long)]
    samples: Option<u32>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// text_similarity, code_token_similarity or execution.
    #[arg(long)]
    grader: Option<String>,
    /// Shell template for the execution grader; may use {candidate}, {cmd}, {expect}.
    #[arg(long, value_name = "TEMPLATE")]
    test_command: Option<String>,
    /// Per-test timeout in seconds.
    #[arg(long, value_name = "SECS")]
    test_timeout: Option<u64>,
    /// Prompt template override (repeatable).
    #[arg(long = "template", value_name = "TASK=FILE")]
    templates: Vec<String>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Records file; defaults to records.jsonl under --out.
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// pooled (each subject against the rest) or all-pairs.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl PerturbArgs {
    fn into_overrides(self) -> Overrides {
        Overrides {
            benchmarks: self.benchmarks,
            kind: self.kind,
            provider_url: self.provider_url,
            fallback_word_noise: self.fallback_word_noise,
            levels: self.levels,
            seed: self.seed,
            out: self.out,
            ..Overrides::default()
        }
    }
}

impl RunArgs {
    fn into_overrides(self) -> Overrides {
        Overrides {
            endpoints: self.endpoints,
            samples: self.samples,
            repeats: self.repeats,
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            alpha: self.alpha,
            max_concurrency: self.max_concurrency,
            cache_dir: self.cache_dir,
            grader: self.grader,
            test_command: self.test_command,
            test_timeout: self.test_timeout,
            templates: self.templates,
            ..self.perturb.into_overrides()
        }
    }
}

impl AnalyzeArgs {
    fn split(self) -> (Overrides, Option<PathBuf>) {
        let o = Overrides {
            alpha: self.alpha,
            baseline: self.baseline,
            out: self.out,
            ..Overrides::default()
        };
        (o, self.records)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
