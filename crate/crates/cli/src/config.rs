//! Configuration: a plain-text `key = value` file with `[provider]`,
//! `[search]`, and `[paths]` sections, every key overridable by a same-named
//! command-line flag (flags win). The fully resolved configuration is echoed
//! to `<run_dir>/config.resolved`; re-invocations verify the echo matches
//! byte-for-byte and abort otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use apres_core::gateway::{ProviderConfig, ProviderKind};
use apres_core::nbreg;
use apres_core::scaffold::SearchConfig;

use crate::CliError;

/// Parsed `[section] key = value` file. `#` and `;` start comment lines.
fn parse_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>, String> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            sections.entry(name.trim().to_string()).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected `key = value` or `[section]`", i + 1));
        };
        let Some(section) = &current else {
            return Err(format!("line {}: key before any [section]", i + 1));
        };
        sections
            .get_mut(section)
            .expect("section inserted on header")
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

/// Flags shared by every subcommand. Flag values override file values.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonFlags {
    /// Configuration file ([provider]/[search]/[paths] sections).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Run directory holding cache, journals, and outputs (env: APRES_RUN_DIR).
    #[arg(long, value_name = "DIR")]
    pub run_dir: Option<PathBuf>,
    /// Corpus file (JSON lines, one paper per line).
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Rubric file; the bundled discovered rubric is used when omitted.
    #[arg(long, value_name = "FILE")]
    pub rubric: Option<PathBuf>,
    /// Provider kind: stub | http.
    #[arg(long, value_name = "KIND")]
    pub provider: Option<String>,
    /// Model name passed to the provider.
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,
    /// Seed for splits, searches, and tournaments.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Search proposal budget (defaults: rubric-search 200, revise 120).
    #[arg(long, value_name = "N")]
    pub max_iterations: Option<usize>,
    /// Tournament match budget (default 20000).
    #[arg(long, value_name = "N")]
    pub budget: Option<usize>,
    /// Shorthand for `--provider stub`.
    #[arg(long)]
    pub stub: bool,
}

/// Fully resolved configuration for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub search: SearchConfig,
    pub corpus: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub rubric: Option<PathBuf>,
    pub lambda_grid: Vec<f64>,
    pub tournament_budget: usize,
    pub quantile: f64,
}

fn parse_value<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| {
        CliError::Usage(format!("config [{section}] {key} = {value:?}: {e}"))
    })
}

impl RunConfig {
    /// Defaults → config file → flags → environment fallback for run_dir →
    /// per-command iteration default.
    pub fn resolve(
        flags: &CommonFlags,
        default_max_iterations: Option<usize>,
    ) -> Result<RunConfig, CliError> {
        let mut provider = ProviderConfig::default();
        let mut search = SearchConfig::default();
        let mut corpus = None;
        let mut run_dir = None;
        let mut rubric = None;
        let mut lambda_grid = nbreg::default_lambda_grid();
        let mut tournament_budget = 20_000usize;
        let mut quantile = 0.25f64;
        let mut iterations_set = false;

        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            let sections = parse_sections(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            for (section, entries) in &sections {
                for (key, value) in entries {
                    match (section.as_str(), key.as_str()) {
                        ("provider", "kind") => {
                            provider.kind = parse_kind(value)?;
                        }
                        ("provider", "base_url") => provider.base_url = value.clone(),
                        ("provider", "model") => provider.model = value.clone(),
                        ("provider", "api_key_env") => provider.api_key_env = value.clone(),
                        ("provider", "timeout_s") => {
                            provider.timeout_s = parse_value(section, key, value)?
                        }
                        ("provider", "max_retries") => {
                            provider.max_retries = parse_value(section, key, value)?
                        }
                        ("provider", "temperature") => {
                            provider.temperature = parse_value(section, key, value)?
                        }
                        ("provider", "max_tokens") => {
                            provider.max_tokens = parse_value(section, key, value)?
                        }
                        ("provider", "retry_base_ms") => {
                            provider.retry_base_ms = parse_value(section, key, value)?
                        }
                        ("provider", "stub_seed") => {
                            provider.stub.seed = parse_value(section, key, value)?
                        }
                        ("provider", "stub_review_noise") => {
                            provider.stub.review_noise = parse_value(section, key, value)?
                        }
                        ("provider", "stub_malformed_proposal_rate") => {
                            provider.stub.malformed_proposal_rate =
                                parse_value(section, key, value)?
                        }
                        ("provider", "stub_bad_edit_rate") => {
                            provider.stub.bad_edit_rate = parse_value(section, key, value)?
                        }
                        ("provider", "stub_malformed_verdict_rate") => {
                            provider.stub.malformed_verdict_rate =
                                parse_value(section, key, value)?
                        }
                        ("search", "n0") => search.n0 = parse_value(section, key, value)?,
                        ("search", "n") => search.n = parse_value(section, key, value)?,
                        ("search", "p_debug") => {
                            search.p_debug = parse_value(section, key, value)?
                        }
                        ("search", "d_max") => search.d_max = parse_value(section, key, value)?,
                        ("search", "max_iterations") => {
                            search.max_iterations = parse_value(section, key, value)?;
                            iterations_set = true;
                        }
                        ("search", "seed") => search.seed = parse_value(section, key, value)?,
                        ("search", "lambda_grid") => {
                            lambda_grid = value
                                .split(',')
                                .map(|v| parse_value(section, key, v.trim()))
                                .collect::<Result<Vec<f64>, _>>()?;
                        }
                        ("search", "tournament_budget") => {
                            tournament_budget = parse_value(section, key, value)?
                        }
                        ("search", "quantile") => quantile = parse_value(section, key, value)?,
                        ("paths", "corpus") => corpus = Some(PathBuf::from(value)),
                        ("paths", "run_dir") => run_dir = Some(PathBuf::from(value)),
                        ("paths", "rubric") => rubric = Some(PathBuf::from(value)),
                        _ => {
                            return Err(CliError::Usage(format!(
                                "config {}: unknown key [{section}] {key}",
                                path.display()
                            )))
                        }
                    }
                }
            }
        }

        if let Some(kind) = &flags.provider {
            provider.kind = parse_kind(kind)?;
        }
        if flags.stub {
            provider.kind = ProviderKind::Stub;
        }
        if let Some(model) = &flags.model {
            provider.model = model.clone();
        }
        if let Some(seed) = flags.seed {
            search.seed = seed;
        }
        if let Some(iters) = flags.max_iterations {
            search.max_iterations = iters;
            iterations_set = true;
        }
        if let Some(budget) = flags.budget {
            tournament_budget = budget;
        }
        if let Some(path) = &flags.corpus {
            corpus = Some(path.clone());
        }
        if let Some(path) = &flags.run_dir {
            run_dir = Some(path.clone());
        }
        if let Some(path) = &flags.rubric {
            rubric = Some(path.clone());
        }
        if run_dir.is_none() {
            if let Ok(dir) = std::env::var("APRES_RUN_DIR") {
                if !dir.is_empty() {
                    run_dir = Some(PathBuf::from(dir));
                }
            }
        }
        if !iterations_set {
            if let Some(default) = default_max_iterations {
                search.max_iterations = default;
            }
        }
        if provider.kind == ProviderKind::Http && provider.base_url.is_empty() {
            return Err(CliError::Usage(
                "provider kind `http` requires base_url in the [provider] section".into(),
            ));
        }
        Ok(RunConfig {
            provider,
            search,
            corpus,
            run_dir,
            rubric,
            lambda_grid,
            tournament_budget,
            quantile,
        })
    }

    pub fn corpus_path(&self) -> Result<&Path, CliError> {
        self.corpus.as_deref().ok_or_else(|| {
            CliError::Usage("a corpus is required: pass --corpus or set [paths] corpus".into())
        })
    }

    pub fn run_dir_path(&self) -> Result<&Path, CliError> {
        self.run_dir.as_deref().ok_or_else(|| {
            CliError::Usage(
                "a run directory is required: pass --run-dir, set [paths] run_dir, \
                 or export APRES_RUN_DIR"
                    .into(),
            )
        })
    }

    /// Canonical echo of the resolved configuration. Deterministic bytes:
    /// verified against `config.resolved` on re-invocation.
    pub fn render_resolved(&self, command: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# resolved configuration; written by apres, do not edit");
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "command = {command}");
        let _ = writeln!(out, "[provider]");
        let kind = match self.provider.kind {
            ProviderKind::Stub => "stub",
            ProviderKind::Http => "http",
        };
        let _ = writeln!(out, "kind = {kind}");
        let _ = writeln!(out, "base_url = {}", self.provider.base_url);
        let _ = writeln!(out, "model = {}", self.provider.model);
        let _ = writeln!(out, "api_key_env = {}", self.provider.api_key_env);
        let _ = writeln!(out, "timeout_s = {}", self.provider.timeout_s);
        let _ = writeln!(out, "max_retries = {}", self.provider.max_retries);
        let _ = writeln!(out, "temperature = {}", self.provider.temperature);
        let _ = writeln!(out, "max_tokens = {}", self.provider.max_tokens);
        let _ = writeln!(out, "retry_base_ms = {}", self.provider.retry_base_ms);
        let _ = writeln!(out, "stub_seed = {}", self.provider.stub.seed);
        let _ = writeln!(out, "stub_review_noise = {}", self.provider.stub.review_noise);
        let _ = writeln!(
            out,
            "stub_malformed_proposal_rate = {}",
            self.provider.stub.malformed_proposal_rate
        );
        let _ = writeln!(out, "stub_bad_edit_rate = {}", self.provider.stub.bad_edit_rate);
        let _ = writeln!(
            out,
            "stub_malformed_verdict_rate = {}",
            self.provider.stub.malformed_verdict_rate
        );
        let _ = writeln!(out, "[search]");
        let _ = writeln!(out, "n0 = {}", self.search.n0);
        let _ = writeln!(out, "n = {}", self.search.n);
        let _ = writeln!(out, "p_debug = {}", self.search.p_debug);
        let _ = writeln!(out, "d_max = {}", self.search.d_max);
        let _ = writeln!(out, "max_iterations = {}", self.search.max_iterations);
        let _ = writeln!(out, "seed = {}", self.search.seed);
        let grid: Vec<String> = self.lambda_grid.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "lambda_grid = {}", grid.join(","));
        let _ = writeln!(out, "tournament_budget = {}", self.tournament_budget);
        let _ = writeln!(out, "quantile = {}", self.quantile);
        let _ = writeln!(out, "[paths]");
        let fmt_path =
            |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let _ = writeln!(out, "corpus = {}", fmt_path(&self.corpus));
        let _ = writeln!(out, "run_dir = {}", fmt_path(&self.run_dir));
        let _ = writeln!(out, "rubric = {}", fmt_path(&self.rubric));
        out
    }
}

fn parse_kind(value: &str) -> Result<ProviderKind, CliError> {
    match value {
        "stub" => Ok(ProviderKind::Stub),
        "http" => Ok(ProviderKind::Http),
        other => Err(CliError::Usage(format!("unknown provider kind `{other}` (stub | http)"))),
    }
}

/// Write `config.resolved` on first use; verify byte-equality afterwards.
pub fn echo_or_verify(run_dir: &Path, rendered: &str) -> Result<(), CliError> {
    let path = run_dir.join("config.resolved");
    if path.exists() {
        let existing = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Op(format!("reading {}: {e}", path.display())))?;
        if existing != rendered {
            return Err(CliError::Op(format!(
                "{} was created with a different configuration; \
                 use a fresh run directory or the original settings",
                run_dir.display()
            )));
        }
        return Ok(());
    }
    std::fs::write(&path, rendered)
        .map_err(|e| CliError::Op(format!("writing {}: {e}", path.display())))
}
