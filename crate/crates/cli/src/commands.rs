use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use memoprobe_core::analysis::{detect_all, SensitivityMatrix};
use memoprobe_core::datamodel::{load_benchmark, BenchmarkSample};
use memoprobe_core::grading::{CommandRunner, GraderKind};
use memoprobe_core::modelclient::{Backend, MockEntry, ModelClient, ModelEndpoint, ResponseCache};
use memoprobe_core::perturbation::{perturb, HttpParaphraser, LadderRequest, ParaphraseProvider, PerturbError, PerturbationKind};
use memoprobe_core::report::{summarize, write_report, RunManifest, RunMetadata};
use memoprobe_core::seed::repeat_seed;
use memoprobe_core::sensitivity::{read_records, write_records, Evaluator, SensitivityRecord};

use crate::config::{CliConfig, FileConfig};
use crate::{Cli, Command};

pub const API_TOKEN_ENV: &str = "MEMOPROBE_API_TOKEN";
const PROVIDER_TIMEOUT: Duration = Duration::from_secs(120);
const PROVIDER_READY_WAIT: Duration = Duration::from_secs(60);

/// Some samples failed; the successful records were still written.
#[derive(Debug)]
pub struct PartialFailure {
    pub failed: usize,
    pub total: usize,
}

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} of {} evaluations failed", self.failed, self.total)
    }
}

impl std::error::Error for PartialFailure {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<PartialFailure>().is_some() {
        2
    } else {
        1
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Perturb(args) => cmd_perturb(&CliConfig::merge(args.into_overrides(), file)?),
        Command::Run(args) => cmd_run(&CliConfig::merge(args.into_overrides(), file)?),
        Command::Analyze(args) => {
            let (flags, records) = args.split();
            cmd_analyze(&CliConfig::merge(flags, file)?, records)
        }
        Command::Report(args) => {
            let (flags, records) = args.split();
            cmd_report(&CliConfig::merge(flags, file)?, records)
        }
    }
}

fn load_all(config: &CliConfig) -> Result<Vec<BenchmarkSample>> {
    if config.benchmarks.is_empty() {
        bail!("no benchmark given (use --benchmark FILE)");
    }
    let mut samples = Vec::new();
    for path in &config.benchmarks {
        samples.extend(load_benchmark(path)?);
    }
    Ok(samples)
}

fn provider(config: &CliConfig) -> Result<Option<HttpParaphraser>> {
    let Some(url) = &config.provider_url else {
        return Ok(None);
    };
    let p = HttpParaphraser::new(url.clone(), PROVIDER_TIMEOUT)?;
    let started = Instant::now();
    loop {
        match p.health() {
            Ok(true) => return Ok(Some(p)),
            Ok(false) | Err(_) if started.elapsed() < PROVIDER_READY_WAIT => std::thread::sleep(Duration::from_millis(500)),
            Ok(false) => bail!("paraphrase provider at {url} did not become ready"),
            Err(e) => return Err(e).with_context(|| format!("paraphrase provider at {url}")),
        }
    }
}

/// The kind forced on every sample, if any. A forced paraphrase without a
/// provider degrades to word noise only when the fallback is enabled.
fn forced_kind(config: &CliConfig, have_provider: bool) -> Result<Option<PerturbationKind>> {
    match config.kind {
        Some(PerturbationKind::Paraphrase) if !have_provider => {
            if config.fallback_word_noise {
                Ok(Some(PerturbationKind::WordNoise))
            } else {
                Err(PerturbError::MissingProvider.into())
            }
        }
        k => Ok(k),
    }
}

fn kind_for(sample: &BenchmarkSample, forced: Option<PerturbationKind>, config: &CliConfig, have_provider: bool) -> Result<PerturbationKind> {
    let kind = match forced {
        Some(k) => k,
        None => PerturbationKind::resolve(sample.input_kind, have_provider, config.fallback_word_noise)?,
    };
    if !kind.accepts(sample.input_kind) {
        return Err(PerturbError::IncompatibleKind {
            kind,
            input: sample.input_kind,
        })
        .with_context(|| format!("sample `{}`", sample.id));
    }
    Ok(kind)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn cmd_perturb(config: &CliConfig) -> Result<()> {
    let samples = load_all(config)?;
    let provider = provider(config)?;
    let forced = forced_kind(config, provider.is_some())?;
    let kinds = samples
        .iter()
        .map(|s| kind_for(s, forced, config, provider.is_some()))
        .collect::<Result<Vec<_>>>()?;
    create_out(&config.out)?;
    let path = config.out.join("ladders.jsonl");
    let mut out = BufWriter::new(fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?);
    for (sample, kind) in samples.iter().zip(kinds) {
        let ladder = perturb(
            &LadderRequest {
                sample_id: &sample.id,
                input: &sample.input,
                kind,
                pr_max: config.run.pr_max,
                seed: repeat_seed(config.run.seed, 0),
                language: sample.language,
            },
            provider.as_ref().map(|p| p as &dyn ParaphraseProvider),
        )
        .with_context(|| format!("sample `{}`", sample.id))?;
        writeln!(out, "{}", serde_json::to_string(&ladder)?)?;
    }
    out.flush()?;
    println!("wrote {} ladders to {}", samples.len(), path.display());
    Ok(())
}

fn cmd_run(config: &CliConfig) -> Result<()> {
    let samples = load_all(config)?;
    if config.endpoints.is_empty() {
        bail!("no endpoint given (use --endpoint mock:memorizer or --endpoint URL)");
    }
    let token = std::env::var(API_TOKEN_ENV).ok().filter(|t| !t.is_empty());
    let endpoints = config
        .endpoints
        .iter()
        .map(|spec| {
            let mut e = ModelEndpoint::parse(spec).with_context(|| format!("endpoint `{spec}`"))?;
            e.max_concurrency = config.run.max_concurrency;
            if matches!(e.backend()?, Backend::Http) {
                e.auth_token = token.clone();
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = endpoints.iter().map(|e| e.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!("endpoint name `{}` used twice; prefix one with NAME=", w[0]);
    }

    let templates = config.template_set()?;
    let provider = provider(config)?;
    let forced = forced_kind(config, provider.is_some())?;
    for s in &samples {
        kind_for(s, forced, config, provider.is_some())?;
    }
    let runner = match (&config.test_command, config.grader) {
        (Some(template), _) => Some(Arc::new(CommandRunner {
            template: template.clone(),
            timeout: Duration::from_secs(config.test_timeout),
        }) as Arc<_>),
        (None, Some(GraderKind::Execution)) => bail!("the execution grader needs --test-command"),
        (None, _) => None,
    };

    let mut client = ModelClient::new(ResponseCache::new(&config.cache_dir));
    for e in &endpoints {
        if matches!(e.backend()?, Backend::Mock(_)) {
            client.register_mock(e, MockEntry::from_samples(&samples, &templates, config.grader))?;
        }
    }
    let mut evaluator = Evaluator::new(&client, &config.run, &config.sampling, &templates);
    evaluator.provider = provider.as_ref().map(|p| p as &dyn ParaphraseProvider);
    evaluator.kind = forced;
    evaluator.fallback_word_noise = config.fallback_word_noise;
    evaluator.grader = config.grader;
    evaluator.runner = runner;

    let started = Instant::now();
    let run = evaluator.run_benchmark(&samples, &endpoints);

    create_out(&config.out)?;
    let records_path = config.out.join("records.jsonl");
    let mut out = BufWriter::new(
        fs::File::create(&records_path).with_context(|| format!("cannot write {}", records_path.display()))?,
    );
    write_records(&run.records, &mut out)?;
    out.flush()?;

    let mut manifest = RunManifest::new(&config.run, &config.sampling, config.alpha);
    manifest.endpoints = endpoints.iter().map(|e| e.name.clone()).collect();
    let mut benchmarks: Vec<String> = samples.iter().map(|s| s.benchmark.clone()).collect();
    benchmarks.sort();
    benchmarks.dedup();
    manifest.benchmarks = benchmarks;
    manifest.settings = config.settings();
    manifest.records = run.records.len();
    manifest.failures = run.failures.len();
    let manifest_path = config.out.join("run.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write {}", manifest_path.display()))?;

    for f in &run.failures {
        eprintln!("failed: sample `{}` on `{}`: {}", f.sample_id, f.model, f.source);
    }
    println!(
        "wrote {} records to {} ({} backend calls, {} network requests, {:.1}s)",
        run.records.len(),
        records_path.display(),
        client.backend_calls(),
        client.network_requests(),
        started.elapsed().as_secs_f64()
    );
    if !run.failures.is_empty() {
        return Err(PartialFailure {
            failed: run.failures.len(),
            total: run.records.len() + run.failures.len(),
        }
        .into());
    }
    Ok(())
}

fn load_records(config: &CliConfig, records: Option<PathBuf>) -> Result<(PathBuf, Vec<SensitivityRecord>)> {
    let path = records.unwrap_or_else(|| config.out.join("records.jsonl"));
    let records = read_records(&path).with_context(|| format!("cannot load records from {}", path.display()))?;
    if records.is_empty() {
        bail!("{} holds no records", path.display());
    }
    Ok((path, records))
}

fn cmd_analyze(config: &CliConfig, records: Option<PathBuf>) -> Result<()> {
    let (_, records) = load_records(config, records)?;
    let matrix = SensitivityMatrix::from_records(&records);
    let benchmarks = matrix.benchmarks();
    if benchmarks.len() < 2 {
        bail!(
            "at least 2 benchmarks required for the benchmark-advantage detector, found {}",
            benchmarks.len()
        );
    }
    let report = detect_all(&matrix, config.alpha, config.baseline)?;
    create_out(&config.out)?;
    let path = config.out.join("findings.jsonl");
    let mut out = BufWriter::new(fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?);
    for f in &report.findings {
        writeln!(out, "{}", serde_json::to_string(f)?)?;
    }
    out.flush()?;
    for f in report.flagged() {
        println!(
            "flagged: {} `{}` subject `{}` vs {} (adjusted p = {:.3e}, {:?})",
            f.scope, f.context, f.subject, f.baseline, f.adjusted_p, f.direction
        );
    }
    for s in &report.skipped {
        println!("skipped: {} `{}` / `{}`: {:?}", s.scope, s.context, s.subject, s.reason);
    }
    println!(
        "wrote {} findings ({} flagged) to {}",
        report.findings.len(),
        report.flagged().count(),
        path.display()
    );
    Ok(())
}

fn cmd_report(config: &CliConfig, records: Option<PathBuf>) -> Result<()> {
    let (path, records) = load_records(config, records)?;
    let manifest_path = path.with_file_name("run.json");
    let manifest = match fs::read_to_string(&manifest_path) {
        Ok(text) => Some(
            serde_json::from_str::<RunManifest>(&text)
                .with_context(|| format!("malformed run manifest {}", manifest_path.display()))?,
        ),
        Err(_) => None,
    };
    let bundle = summarize(&records, RunMetadata::new(manifest, config.alpha, config.baseline))?;
    let written = write_report(&bundle, &config.out)?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
