//! One function per subcommand. Shared conventions:
//! - outputs are written with [`write_if_changed`] so re-running a completed
//!   command never touches a byte;
//! - commands that use a run directory echo their resolved configuration to
//!   `config.resolved` (verified on re-invocation) and hold `.lock` while
//!   running;
//! - progress and results go to stdout as `key = value` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use apres_core::corpus::{
    classify_stratum, load_corpus, mean_citations, split_corpus, Paper, Stratum,
};
use apres_core::discovery::RubricDiscoveryTask;
use apres_core::gateway::Gateway;
use apres_core::nbreg::{self, DesignMatrix};
use apres_core::ranking::{
    self, run_tournament, threshold_decisions, ConsistencyMatrix, DecisionLabel, DecisionVector,
    HUMAN_DR_BASELINES,
};
use apres_core::revision::{RevisionOutcome, RevisionTask};
use apres_core::rubric::{self, score_paper, Rubric};
use apres_core::scaffold::{ScaffoldError, SearchConfig, SearchRunner};
use sha2::{Digest, Sha256};

use crate::config::{echo_or_verify, RunConfig};
use crate::lock::RunLock;
use crate::CliError;

/// Write only when the target is missing or its bytes differ. Returns whether
/// a write happened, so callers stay idempotent against completed run dirs.
pub fn write_if_changed(path: &Path, content: &[u8]) -> Result<bool, CliError> {
    if let Ok(existing) = std::fs::read(path) {
        if existing == content {
            return Ok(false);
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Op(format!("creating {}: {e}", parent.display())))?;
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::Op(format!("writing {}: {e}", path.display())))?;
    Ok(true)
}

fn load_corpus_at(path: &Path) -> Result<Vec<Paper>, CliError> {
    load_corpus(path).map_err(|e| CliError::Op(format!("corpus {}: {e}", path.display())))
}

/// Create the run directory, echo/verify `config.resolved`, take the lock.
fn open_run_dir(
    config: &RunConfig,
    command: &str,
) -> Result<(PathBuf, RunLock), CliError> {
    let run_dir = config.run_dir_path()?.to_path_buf();
    std::fs::create_dir_all(&run_dir)
        .map_err(|e| CliError::Op(format!("creating {}: {e}", run_dir.display())))?;
    echo_or_verify(&run_dir, &config.render_resolved(command))?;
    let lock = RunLock::acquire(&run_dir)?;
    Ok((run_dir, lock))
}

fn build_gateway(config: &RunConfig, run_dir: &Path) -> Result<Gateway, CliError> {
    Gateway::new(config.provider.clone())
        .with_cache_dir(run_dir.join("cache"))
        .map_err(|e| CliError::Op(format!("gateway cache: {e}")))
}

fn load_rubric_choice(config: &RunConfig) -> Result<Rubric, CliError> {
    match &config.rubric {
        Some(path) => rubric::load_rubric(path)
            .map_err(|e| CliError::Op(format!("rubric {}: {e}", path.display()))),
        None => Ok(rubric::discovered().clone()),
    }
}

/// Quote a CSV field when it contains a delimiter, quote, or newline.
fn csv_field(value: &str) -> String {
    let flat = value.replace(['\n', '\r'], " ");
    if flat.contains(',') || flat.contains('"') {
        format!("\"{}\"", flat.replace('"', "\"\""))
    } else {
        flat
    }
}

// ---------------------------------------------------------------------------
// ingest

pub fn ingest(config: &RunConfig) -> Result<(), CliError> {
    let path = config.corpus_path()?;
    let papers = load_corpus_at(path)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for paper in &papers {
        let bucket = match classify_stratum(paper) {
            Ok(Stratum::ClearAccept) => "clear-accept",
            Ok(Stratum::Borderline) => "borderline",
            Ok(Stratum::ClearReject) => "clear-reject",
            Err(_) => "unclassified",
        };
        *counts.entry(bucket).or_default() += 1;
    }
    println!("papers = {}", papers.len());
    match mean_citations(&papers) {
        Some(mean) => println!("mean_citations_12mo = {mean:.4}"),
        None => println!("mean_citations_12mo ="),
    }
    for bucket in ["clear-accept", "borderline", "clear-reject", "unclassified"] {
        println!("{bucket} = {}", counts.get(bucket).copied().unwrap_or(0));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// split

pub fn split(config: &RunConfig) -> Result<(), CliError> {
    let papers = load_corpus_at(config.corpus_path()?)?;
    let (run_dir, _lock) = open_run_dir(config, "split")?;
    let splits = split_corpus(&papers, config.search.seed);
    let rendered = serde_json::to_vec_pretty(&splits).expect("splits serialize");
    let path = run_dir.join("splits.json");
    if path.exists() {
        let existing = std::fs::read(&path)
            .map_err(|e| CliError::Op(format!("reading {}: {e}", path.display())))?;
        if existing != rendered {
            return Err(CliError::Op(format!(
                "{} disagrees with the split derived from this corpus and seed; \
                 the corpus file changed, or the file was edited",
                path.display()
            )));
        }
    } else {
        write_if_changed(&path, &rendered)?;
    }
    println!("train = {}", splits.train.len());
    println!("validation = {}", splits.validation.len());
    println!("test = {}", splits.test.len());
    println!("output = {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// rubric-search

#[derive(serde::Serialize)]
struct DiscoverySummary {
    best_node: String,
    proposals: usize,
    stopped_early: bool,
    lambda: f64,
    val_mae: f64,
    test_mae: f64,
    constant_baseline_val_mae: f64,
    rubric_items: usize,
    /// Train+validation papers scored / dropped while fitting the winner.
    fit_scored: usize,
    fit_failed: usize,
    test_scored: usize,
    test_failed: usize,
}

pub fn rubric_search(config: &RunConfig) -> Result<(), CliError> {
    let papers = load_corpus_at(config.corpus_path()?)?;
    let (run_dir, _lock) = open_run_dir(config, "rubric-search")?;
    let gateway = build_gateway(config, &run_dir)?;
    let splits = split_corpus(&papers, config.search.seed);
    let train: Vec<Paper> = splits.select("train", &papers).into_iter().cloned().collect();
    let val: Vec<Paper> = splits.select("validation", &papers).into_iter().cloned().collect();
    let test: Vec<Paper> = splits.select("test", &papers).into_iter().cloned().collect();
    if train.is_empty() || val.is_empty() {
        return Err(CliError::Op(
            "the corpus is too small to form train and validation splits".into(),
        ));
    }

    let task = RubricDiscoveryTask::new(&gateway, &train, &val)
        .with_lambda_grid(config.lambda_grid.clone());
    let mut runner = SearchRunner::create_or_resume(&run_dir, config.search.clone(), task)
        .map_err(scaffold_err)?;
    let best = runner.run().map_err(scaffold_err)?;
    let raw = runner
        .artifact(&best.id)
        .ok_or_else(|| CliError::Op(format!("journal has no artifact for {}", best.id)))?
        .clone();

    // Refit the winning rubric (gateway cache makes rescoring free) and
    // evaluate it once on the held-out test split.
    let fitted = runner
        .task()
        .fit_candidate(&raw)
        .map_err(|e| CliError::Op(format!("provider: {e}")))?
        .map_err(|report| {
            CliError::Op(format!("best candidate no longer evaluates cleanly: {report}"))
        })?;
    let test_scored = runner
        .task()
        .score_split(&fitted.rubric, &test)
        .map_err(|e| CliError::Op(format!("provider: {e}")))?;
    let keys = fitted.rubric.keys();
    let design = DesignMatrix::from_scores(&test_scored.vectors, &keys)
        .map_err(|e| CliError::Op(format!("test design matrix: {e}")))?;
    let predicted = fitted
        .fit
        .model
        .predict_design(&design)
        .map_err(|e| CliError::Op(format!("test prediction: {e}")))?;
    let test_mae = nbreg::mae(&predicted, &test_scored.citations)
        .map_err(|e| CliError::Op(format!("test MAE: {e}")))?;

    let y_train: Vec<f64> = train.iter().map(|p| p.citations_12mo as f64).collect();
    let y_val: Vec<f64> = val.iter().map(|p| p.citations_12mo as f64).collect();
    let baseline = nbreg::constant_baseline(&y_train)
        .map_err(|e| CliError::Op(format!("baseline: {e}")))?;
    let baseline_val_mae =
        nbreg::mae(&vec![baseline; y_val.len()], &y_val).expect("same length");

    let summary = DiscoverySummary {
        best_node: best.id.clone(),
        proposals: runner.proposals(),
        stopped_early: runner.stopped_early(),
        lambda: fitted.fit.lambda,
        val_mae: fitted.fit.val_mae,
        test_mae,
        constant_baseline_val_mae: baseline_val_mae,
        rubric_items: fitted.rubric.len(),
        fit_scored: fitted.papers_scored,
        fit_failed: fitted.papers_failed,
        test_scored: test_scored.vectors.len(),
        test_failed: test_scored.failures,
    };

    write_if_changed(&run_dir.join("rubric.txt"), fitted.rubric.to_text().as_bytes())?;
    write_if_changed(
        &run_dir.join("rubric.json"),
        serde_json::to_string_pretty(&fitted.rubric.to_structured_json())
            .expect("rubric serializes")
            .as_bytes(),
    )?;
    write_if_changed(
        &run_dir.join("model.json"),
        serde_json::to_string_pretty(&fitted.fit.model)
            .expect("model serializes")
            .as_bytes(),
    )?;
    write_if_changed(
        &run_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes").as_bytes(),
    )?;
    append_final_metrics_row(&run_dir, &best.id, &summary)?;

    println!("best_node = {}", best.id);
    println!("proposals = {}", summary.proposals);
    println!("rubric_items = {}", summary.rubric_items);
    println!("lambda = {}", summary.lambda);
    println!("val_mae = {:.4}", summary.val_mae);
    println!("test_mae = {:.4}", summary.test_mae);
    println!("constant_baseline_val_mae = {:.4}", summary.constant_baseline_val_mae);
    println!("output = {}", run_dir.join("rubric.txt").display());
    Ok(())
}

/// Append the held-out evaluation of the final rubric to `metrics.csv`,
/// exactly once: per-iteration rows leave `test_mae` empty, and this sentinel
/// row carries it.
fn append_final_metrics_row(
    run_dir: &Path,
    best_node: &str,
    summary: &DiscoverySummary,
) -> Result<(), CliError> {
    let path = run_dir.join("metrics.csv");
    let existing = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Op(format!("reading {}: {e}", path.display())))?;
    if existing.lines().any(|l| l.starts_with("final,")) {
        return Ok(());
    }
    let row = format!(
        "final,{},ok,{},{},{},{}\n",
        best_node,
        -summary.val_mae,
        summary.lambda,
        summary.val_mae,
        summary.test_mae
    );
    let mut content = existing;
    content.push_str(&row);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Op(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn scaffold_err<E: std::error::Error + 'static>(e: ScaffoldError<E>) -> CliError {
    CliError::Op(format!("search: {e}"))
}

// ---------------------------------------------------------------------------
// score

pub fn score(config: &RunConfig, which: &str) -> Result<(), CliError> {
    let which = match which {
        "train" => "train",
        "validation" | "val" => "validation",
        "test" => "test",
        "all" => "all",
        other => {
            return Err(CliError::Usage(format!(
                "unknown split `{other}` (train | validation | test | all)"
            )))
        }
    };
    let papers = load_corpus_at(config.corpus_path()?)?;
    let (run_dir, _lock) = open_run_dir(config, "score")?;
    let gateway = build_gateway(config, &run_dir)?;
    let rubric = load_rubric_choice(config)?;
    let splits = split_corpus(&papers, config.search.seed);
    let selected: Vec<&Paper> = if which == "all" {
        papers.iter().collect()
    } else {
        splits.select(which, &papers)
    };

    let keys = rubric.keys();
    let mut rows = String::new();
    rows.push_str("paper_id,");
    rows.push_str(&keys.join(","));
    rows.push_str(",mean\n");
    let mut failures = String::from("paper_id,error\n");
    let mut scored = 0usize;
    let mut failed = 0usize;
    for paper in &selected {
        match score_paper(&rubric, paper, &gateway) {
            Ok(vector) => {
                let mut line = paper.id.clone();
                for key in &keys {
                    let v = vector.scores.get(key).copied().unwrap_or(f64::NAN);
                    let _ = write!(line, ",{v}");
                }
                let _ = write!(line, ",{}", vector.mean());
                rows.push_str(&line);
                rows.push('\n');
                scored += 1;
            }
            Err(e) => {
                eprintln!("warning: scoring {} failed: {e}", paper.id);
                let _ = writeln!(failures, "{},{}", paper.id, csv_field(&e.to_string()));
                failed += 1;
            }
        }
    }

    let out_dir = run_dir.join("scores");
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Op(format!("creating {}: {e}", out_dir.display())))?;
    let out = out_dir.join(format!("{which}.csv"));
    write_if_changed(&out, rows.as_bytes())?;
    if failed > 0 {
        write_if_changed(&out_dir.join(format!("{which}.failures.csv")), failures.as_bytes())?;
    }
    println!("split = {which}");
    println!("scored = {scored}");
    println!("failed = {failed}");
    println!("output = {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// revise

/// Stable per-paper seed so each paper's revision search is independent of
/// corpus order and of the other papers.
fn paper_seed(seed: u64, paper_id: &str) -> u64 {
    let digest = Sha256::digest(format!("revise:{seed}:{paper_id}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub fn revise(config: &RunConfig, stratum: Option<Stratum>) -> Result<(), CliError> {
    let papers = load_corpus_at(config.corpus_path()?)?;
    let (run_dir, _lock) = open_run_dir(config, "revise")?;
    let gateway = build_gateway(config, &run_dir)?;
    let rubric = load_rubric_choice(config)?;
    let splits = split_corpus(&papers, config.search.seed);
    let test: Vec<&Paper> = splits.select("test", &papers);

    let mut targets: Vec<&Paper> = Vec::new();
    for paper in test {
        match classify_stratum(paper) {
            Ok(s) if stratum.is_none() || stratum == Some(s) => targets.push(paper),
            Ok(_) => {}
            Err(e) => eprintln!("warning: skipping {}: {e}", paper.id),
        }
    }

    let mut csv = String::from("paper_id,stratum,s_original,s_revised,delta_s,best_node\n");
    let mut deltas: Vec<f64> = Vec::new();
    for paper in &targets {
        let stratum_label = classify_stratum(paper).expect("filtered above").to_string();
        let paper_dir = run_dir.join("revise").join(&paper.id);
        std::fs::create_dir_all(&paper_dir)
            .map_err(|e| CliError::Op(format!("creating {}: {e}", paper_dir.display())))?;
        let search = SearchConfig {
            // A lone root suffices: every root is the identical unmodified
            // paper, so extra roots would only burn budget.
            n0: 1,
            seed: paper_seed(config.search.seed, &paper.id),
            ..config.search.clone()
        };
        let task = RevisionTask::new(&gateway, &rubric, (*paper).clone());
        let outcome: Result<RevisionOutcome, String> = (|| {
            let mut runner = SearchRunner::create_or_resume(&paper_dir, search, task)
                .map_err(|e| e.to_string())?;
            let best = runner.run().map_err(|e| e.to_string())?;
            let s_original =
                runner.task().score(paper).map_err(|e| e.to_string())?.mean();
            let s_revised = best
                .metric
                .ok_or_else(|| "best node has no metric".to_string())?;
            Ok(RevisionOutcome {
                paper_id: paper.id.clone(),
                s_original,
                s_revised,
                delta_s: s_revised - s_original,
                best_node: best.id,
            })
        })();
        match outcome {
            Ok(outcome) => {
                write_if_changed(
                    &paper_dir.join("best.json"),
                    serde_json::to_string_pretty(&outcome)
                        .expect("outcome serializes")
                        .as_bytes(),
                )?;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    outcome.paper_id,
                    stratum_label,
                    outcome.s_original,
                    outcome.s_revised,
                    outcome.delta_s,
                    outcome.best_node
                );
                deltas.push(outcome.delta_s);
            }
            Err(reason) => {
                eprintln!("warning: revision of {} failed: {reason}", paper.id);
                let _ = writeln!(csv, "{},{},,,,", paper.id, stratum_label);
            }
        }
    }

    let out = run_dir.join("revisions.csv");
    write_if_changed(&out, csv.as_bytes())?;
    println!("papers = {}", targets.len());
    println!("revised = {}", deltas.len());
    if deltas.is_empty() {
        println!("mean_delta_s =");
    } else {
        println!("mean_delta_s = {:.4}", deltas.iter().sum::<f64>() / deltas.len() as f64);
    }
    println!("output = {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// rank

pub fn rank(config: &RunConfig) -> Result<(), CliError> {
    let papers = load_corpus_at(config.corpus_path()?)?;
    let (run_dir, _lock) = open_run_dir(config, "rank")?;
    let gateway = build_gateway(config, &run_dir)?;
    let rubric = load_rubric_choice(config)?;
    let splits = split_corpus(&papers, config.search.seed);
    let test: Vec<&Paper> = splits.select("test", &papers);

    let mut contenders: Vec<Paper> = Vec::new();
    let mut reviews: BTreeMap<String, String> = BTreeMap::new();
    for paper in test {
        match score_paper(&rubric, paper, &gateway) {
            Ok(vector) => {
                reviews.insert(paper.id.clone(), vector.render_reviews());
                contenders.push(paper.clone());
            }
            Err(e) => eprintln!("warning: dropping {} (reviews failed: {e})", paper.id),
        }
    }

    let result = run_tournament(
        &contenders,
        &reviews,
        config.tournament_budget,
        &gateway,
        config.search.seed,
    )
    .map_err(|e| CliError::Op(format!("tournament: {e}")))?;
    let decisions = threshold_decisions(&result.states, config.quantile)
        .map_err(|e| CliError::Op(format!("thresholding: {e}")))?;

    write_if_changed(&run_dir.join("ratings.csv"), result.ratings_csv().as_bytes())?;

    let mut decision_rows = String::from("paper_id,decision\n");
    let mut accepted = 0usize;
    for (id, label) in &decisions.decisions {
        let text = match label {
            DecisionLabel::Accept => {
                accepted += 1;
                "accept"
            }
            DecisionLabel::Reject => "reject",
        };
        let _ = writeln!(decision_rows, "{id},{text}");
    }
    write_if_changed(&run_dir.join("decisions.csv"), decision_rows.as_bytes())?;

    let mut match_rows = String::from("a,b,winner,confidence,score_difference\n");
    for m in &result.matches {
        let winner = match m.winner {
            ranking::Winner::A => "A",
            ranking::Winner::B => "B",
        };
        let _ = writeln!(
            match_rows,
            "{},{},{},{},{}",
            m.a, m.b, winner, m.confidence, m.score_difference
        );
    }
    write_if_changed(&run_dir.join("matches.csv"), match_rows.as_bytes())?;
    write_if_changed(
        &run_dir.join("tournament.json"),
        serde_json::to_string_pretty(&result).expect("result serializes").as_bytes(),
    )?;

    println!("papers = {}", contenders.len());
    println!("matches = {}", result.matches.len());
    println!("skipped = {}", result.skipped);
    println!("stopped_early = {}", result.stopped_early);
    println!("accepted = {accepted}");
    println!("output = {}", run_dir.join("ratings.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// consistency

fn read_decisions(dir: &Path) -> Result<DecisionVector, CliError> {
    let path = dir.join("decisions.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Op(format!("reading {}: {e}", path.display())))?;
    let mut decisions = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, label)) = line.split_once(',') else {
            return Err(CliError::Op(format!("{}: line {}: not `id,decision`", path.display(), i + 1)));
        };
        let label = match label.trim() {
            "accept" => DecisionLabel::Accept,
            "reject" => DecisionLabel::Reject,
            other => {
                return Err(CliError::Op(format!(
                    "{}: line {}: unknown decision `{other}`",
                    path.display(),
                    i + 1
                )))
            }
        };
        decisions.insert(id.trim().to_string(), label);
    }
    if decisions.is_empty() {
        return Err(CliError::Op(format!("{} holds no decisions", path.display())));
    }
    Ok(DecisionVector { decisions })
}

/// Seed recorded in a rank run's `config.resolved`, if readable.
fn recorded_seed(dir: &Path) -> Option<u64> {
    let text = std::fs::read_to_string(dir.join("config.resolved")).ok()?;
    let mut in_search = false;
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('[') {
            in_search = line == "[search]";
            continue;
        }
        if in_search {
            if let Some(value) = line.strip_prefix("seed =") {
                return value.trim().parse().ok();
            }
        }
    }
    None
}

#[derive(serde::Serialize)]
struct ConsistencyReport {
    labels: Vec<String>,
    matrix: Vec<Vec<Option<f64>>>,
    notes: Vec<String>,
    human_baselines_percent: Vec<(String, f64)>,
}

pub fn consistency(config: &RunConfig, runs: &[String]) -> Result<(), CliError> {
    // `label=dir` arguments; repeated labels form rerun groups in first
    // appearance order.
    let mut groups: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for arg in runs {
        let Some((label, dir)) = arg.split_once('=') else {
            return Err(CliError::Usage(format!(
                "`{arg}` is not `label=run_dir` (e.g. gpt-runs=/runs/rank-a)"
            )));
        };
        let label = label.trim();
        if label.is_empty() {
            return Err(CliError::Usage(format!("`{arg}` has an empty label")));
        }
        match groups.iter_mut().find(|(l, _)| l == label) {
            Some((_, dirs)) => dirs.push(PathBuf::from(dir)),
            None => groups.push((label.to_string(), vec![PathBuf::from(dir)])),
        }
    }

    let (run_dir, _lock) = open_run_dir(config, "consistency")?;
    let mut notes = Vec::new();
    let mut vector_groups: Vec<(String, Vec<DecisionVector>)> = Vec::new();
    for (label, dirs) in &groups {
        let mut vectors = Vec::new();
        for dir in dirs {
            vectors.push(read_decisions(dir)?);
        }
        if dirs.len() >= 2 {
            let seeds: Vec<Option<u64>> = dirs.iter().map(|d| recorded_seed(d)).collect();
            if seeds.iter().all(|s| s.is_some()) {
                let first = seeds[0];
                if seeds.iter().all(|s| *s == first) {
                    let note = format!(
                        "label `{label}`: rerun seeds are identical ({}); \
                         self-consistency will be trivially perfect",
                        first.expect("checked some")
                    );
                    eprintln!("warning: {note}");
                    notes.push(note);
                }
            }
        }
        vector_groups.push((label.clone(), vectors));
    }

    let matrix = ConsistencyMatrix::build(&vector_groups)
        .map_err(|e| CliError::Op(format!("consistency: {e}")))?;
    write_if_changed(&run_dir.join("consistency.csv"), matrix.to_csv().as_bytes())?;
    let report = ConsistencyReport {
        labels: matrix.labels.clone(),
        matrix: matrix.dr.clone(),
        notes,
        human_baselines_percent: HUMAN_DR_BASELINES
            .iter()
            .map(|(name, dr)| (name.to_string(), *dr))
            .collect(),
    };
    write_if_changed(
        &run_dir.join("consistency.json"),
        serde_json::to_string_pretty(&report).expect("report serializes").as_bytes(),
    )?;

    for (i, a) in matrix.labels.iter().enumerate() {
        for (j, b) in matrix.labels.iter().enumerate() {
            if let Some(dr) = matrix.dr[i][j] {
                println!("dr[{a}][{b}] = {dr:.4}");
            }
        }
    }
    println!("output = {}", run_dir.join("consistency.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// report

fn section_discovery(run_dir: &Path, out: &mut String) {
    let Ok(summary) = std::fs::read_to_string(run_dir.join("summary.json")) else {
        return;
    };
    let Ok(summary) = serde_json::from_str::<serde_json::Value>(&summary) else {
        return;
    };
    let _ = writeln!(out, "## Rubric discovery\n");
    let fields = [
        ("best_node", "Best node"),
        ("proposals", "Proposals evaluated"),
        ("rubric_items", "Rubric items"),
        ("lambda", "Ridge strength"),
        ("val_mae", "Validation MAE"),
        ("test_mae", "Test MAE"),
        ("constant_baseline_val_mae", "Constant-baseline validation MAE"),
    ];
    let _ = writeln!(out, "| Quantity | Value |");
    let _ = writeln!(out, "| --- | --- |");
    for (key, label) in fields {
        if let Some(v) = summary.get(key) {
            let _ = writeln!(out, "| {label} | {v} |");
        }
    }
    let _ = writeln!(out);

    // Best-so-far trajectory from the per-iteration metrics: rows where the
    // running best validation MAE improves.
    if let Ok(metrics) = std::fs::read_to_string(run_dir.join("metrics.csv")) {
        let mut best: Option<f64> = None;
        let mut improvements: Vec<(String, f64)> = Vec::new();
        for line in metrics.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() < 6 || cells[0] == "final" {
                continue;
            }
            if let Ok(val_mae) = cells[5].parse::<f64>() {
                if best.map_or(true, |b| val_mae < b) {
                    best = Some(val_mae);
                    improvements.push((cells[0].to_string(), val_mae));
                }
            }
        }
        if !improvements.is_empty() {
            let _ = writeln!(out, "Validation MAE improvements over the search:\n");
            let _ = writeln!(out, "| Iteration | Validation MAE |");
            let _ = writeln!(out, "| --- | --- |");
            for (iter, mae) in improvements {
                let _ = writeln!(out, "| {iter} | {mae:.4} |");
            }
            let _ = writeln!(out);
        }
    }
}

fn section_revision(run_dir: &Path, out: &mut String) {
    let Ok(csv) = std::fs::read_to_string(run_dir.join("revisions.csv")) else {
        return;
    };
    #[derive(Default)]
    struct Agg {
        n: usize,
        revised: usize,
        improved: usize,
        delta_sum: f64,
    }
    let mut strata: BTreeMap<String, Agg> = BTreeMap::new();
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 6 {
            continue;
        }
        let agg = strata.entry(cells[1].to_string()).or_default();
        agg.n += 1;
        if let Ok(delta) = cells[4].parse::<f64>() {
            agg.revised += 1;
            agg.delta_sum += delta;
            if delta > 0.0 {
                agg.improved += 1;
            }
        }
    }
    if strata.is_empty() {
        return;
    }
    let _ = writeln!(out, "## Revision\n");
    let _ = writeln!(out, "| Stratum | Papers | Revised | Mean ΔS | Improved |");
    let _ = writeln!(out, "| --- | --- | --- | --- | --- |");
    for (stratum, agg) in &strata {
        let mean = if agg.revised > 0 {
            format!("{:.4}", agg.delta_sum / agg.revised as f64)
        } else {
            String::from("–")
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            stratum, agg.n, agg.revised, mean, agg.improved
        );
    }
    let _ = writeln!(out);
}

fn section_ranking(run_dir: &Path, out: &mut String) {
    let Ok(ratings) = std::fs::read_to_string(run_dir.join("ratings.csv")) else {
        return;
    };
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    for line in ratings.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 3 {
            continue;
        }
        if let (Ok(rating), Ok(rd)) = (cells[1].parse::<f64>(), cells[2].parse::<f64>()) {
            rows.push((cells[0].to_string(), rating, rd));
        }
    }
    if rows.is_empty() {
        return;
    }
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let _ = writeln!(out, "## Ranking\n");
    let _ = writeln!(out, "Papers rated: {}\n", rows.len());
    let accepted = std::fs::read_to_string(run_dir.join("decisions.csv"))
        .ok()
        .map(|text| text.lines().skip(1).filter(|l| l.ends_with(",accept")).count());
    if let Some(accepted) = accepted {
        let _ = writeln!(out, "Accepted: {accepted}\n");
    }
    let _ = writeln!(out, "| Rank | Paper | Rating | RD |");
    let _ = writeln!(out, "| --- | --- | --- | --- |");
    for (i, (id, rating, rd)) in rows.iter().take(10).enumerate() {
        let _ = writeln!(out, "| {} | {} | {:.1} | {:.1} |", i + 1, id, rating, rd);
    }
    let _ = writeln!(out);
}

fn section_consistency(run_dir: &Path, out: &mut String) {
    let Ok(csv) = std::fs::read_to_string(run_dir.join("consistency.csv")) else {
        return;
    };
    let mut lines = csv.lines();
    let Some(header) = lines.next() else { return };
    let labels: Vec<&str> = header.split(',').skip(1).collect();
    let _ = writeln!(out, "## Decision consistency\n");
    let _ = writeln!(
        out,
        "Pairwise disagreement rates (diagonal: reruns of the same configuration).\n"
    );
    let _ = writeln!(out, "| | {} |", labels.join(" | "));
    let mut sep = String::from("| --- |");
    for _ in &labels {
        sep.push_str(" --- |");
    }
    let _ = writeln!(out, "{sep}");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.is_empty() || cells[0].is_empty() {
            continue;
        }
        let rendered: Vec<String> = cells[1..]
            .iter()
            .map(|c| if c.is_empty() { String::from("–") } else { c.to_string() })
            .collect();
        let _ = writeln!(out, "| {} | {} |", cells[0], rendered.join(" | "));
    }
    let _ = writeln!(out);
    if let Ok(json) = std::fs::read_to_string(run_dir.join("consistency.json")) {
        if let Ok(report) = serde_json::from_str::<serde_json::Value>(&json) {
            if let Some(notes) = report.get("notes").and_then(|n| n.as_array()) {
                for note in notes {
                    if let Some(text) = note.as_str() {
                        let _ = writeln!(out, "> Note: {text}\n");
                    }
                }
            }
        }
    }
}

pub fn report(config: &RunConfig) -> Result<(), CliError> {
    let run_dir = config.run_dir_path()?.to_path_buf();
    if !run_dir.is_dir() {
        return Err(CliError::Op(format!("{} is not a directory", run_dir.display())));
    }
    let _lock = RunLock::acquire(&run_dir)?;
    let mut out = String::from("# Pipeline report\n\n");
    section_discovery(&run_dir, &mut out);
    section_revision(&run_dir, &mut out);
    section_ranking(&run_dir, &mut out);
    section_consistency(&run_dir, &mut out);
    let _ = writeln!(out, "## Human consistency baselines\n");
    let _ = writeln!(
        out,
        "Published review-consistency experiments, for calibration of the rates above:\n"
    );
    let _ = writeln!(out, "| Experiment | Disagreement rate |");
    let _ = writeln!(out, "| --- | --- |");
    for (name, dr) in HUMAN_DR_BASELINES {
        let _ = writeln!(out, "| {name} | {dr}% |");
    }
    let path = run_dir.join("report.md");
    write_if_changed(&path, out.as_bytes())?;
    println!("report = {}", path.display());
    Ok(())
}
