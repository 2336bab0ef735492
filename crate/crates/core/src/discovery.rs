//! Rubric discovery as a tree-search task: candidate rubrics are proposed by
//! an LLM, every paper in the train and validation splits is scored against
//! the candidate, and a ridge-regularized negative-binomial regression from
//! score vectors to 12-month citations yields the node metric (negated
//! validation MAE, so higher is better).

use crate::corpus::Paper;
use crate::gateway::{Gateway, GatewayError};
use crate::nbreg::{self, DesignMatrix, GridSearchResult};
use crate::prompts::{proposer_messages, RefineContext};
use crate::rubric::{parse_rubric_response, score_paper, Rubric, RubricError, ScoreVector};
use crate::scaffold::{Evaluation, Node, RegressionMetrics, SearchTask, SelectionMode};

/// Fraction of papers allowed to fail scoring before the candidate is judged
/// broken.
pub const MAX_SCORE_FAILURE_FRACTION: f64 = 0.10;

/// A successfully fitted candidate rubric.
pub struct FittedCandidate {
    pub rubric: Rubric,
    pub fit: GridSearchResult,
    pub papers_scored: usize,
    pub papers_failed: usize,
}

/// Scores and responses for one split.
pub struct ScoredSplit {
    pub vectors: Vec<ScoreVector>,
    pub citations: Vec<f64>,
    pub failures: usize,
}

pub struct RubricDiscoveryTask<'a> {
    gateway: &'a Gateway,
    train: &'a [Paper],
    val: &'a [Paper],
    lambda_grid: Vec<f64>,
}

impl<'a> RubricDiscoveryTask<'a> {
    pub fn new(gateway: &'a Gateway, train: &'a [Paper], val: &'a [Paper]) -> Self {
        RubricDiscoveryTask { gateway, train, val, lambda_grid: nbreg::default_lambda_grid() }
    }

    pub fn with_lambda_grid(mut self, grid: Vec<f64>) -> Self {
        self.lambda_grid = grid;
        self
    }

    /// Score one split against a rubric. Per-paper scoring failures (bad
    /// reviewer output that survives the re-ask) drop the paper and count as
    /// failures; transport-level errors abort.
    pub fn score_split(
        &self,
        rubric: &Rubric,
        papers: &[Paper],
    ) -> Result<ScoredSplit, GatewayError> {
        let mut vectors = Vec::with_capacity(papers.len());
        let mut citations = Vec::with_capacity(papers.len());
        let mut failures = 0usize;
        for paper in papers {
            match score_paper(rubric, paper, self.gateway) {
                Ok(v) => {
                    vectors.push(v);
                    citations.push(paper.citations_12mo as f64);
                }
                Err(RubricError::Gateway(e)) => return Err(e),
                Err(_) => failures += 1,
            }
        }
        Ok(ScoredSplit { vectors, citations, failures })
    }

    /// Parse, score, and fit one candidate. The outer error is a pipeline
    /// abort (transport); the inner `Err(String)` is the bug report for a
    /// candidate that cannot be used.
    pub fn fit_candidate(&self, raw: &str) -> Result<Result<FittedCandidate, String>, GatewayError> {
        let rubric = match parse_rubric_response(raw) {
            Ok(r) => r,
            Err(e) => return Ok(Err(format!("rubric parse failure: {e}"))),
        };
        let train = self.score_split(&rubric, self.train)?;
        let val = self.score_split(&rubric, self.val)?;
        let total = self.train.len() + self.val.len();
        let failures = train.failures + val.failures;
        if (failures as f64) > MAX_SCORE_FAILURE_FRACTION * total as f64 {
            return Ok(Err(format!(
                "scoring failed on {failures} of {total} papers (above the {:.0}% limit)",
                MAX_SCORE_FAILURE_FRACTION * 100.0
            )));
        }
        let keys = rubric.keys();
        let design_train = match DesignMatrix::from_scores(&train.vectors, &keys) {
            Ok(d) => d,
            Err(e) => return Ok(Err(format!("design construction failed: {e}"))),
        };
        let design_val = match DesignMatrix::from_scores(&val.vectors, &keys) {
            Ok(d) => d,
            Err(e) => return Ok(Err(format!("design construction failed: {e}"))),
        };
        match nbreg::grid_search(
            &design_train,
            &train.citations,
            &design_val,
            &val.citations,
            &self.lambda_grid,
        ) {
            Ok(fit) => Ok(Ok(FittedCandidate {
                rubric,
                fit,
                papers_scored: total - failures,
                papers_failed: failures,
            })),
            Err(e) => Ok(Err(format!("regression failed: {e}"))),
        }
    }
}

impl SearchTask for RubricDiscoveryTask<'_> {
    type Artifact = String;
    type Error = GatewayError;

    fn propose_root(&mut self, attempt: &str) -> Result<String, GatewayError> {
        let messages = proposer_messages(attempt, None);
        let request = self.gateway.request(messages, self.gateway.config().temperature);
        Ok(self.gateway.complete(&request)?.text)
    }

    fn propose_child(
        &mut self,
        parent: &Node,
        parent_artifact: &String,
        mode: SelectionMode,
        attempt: &str,
    ) -> Result<String, GatewayError> {
        let critique = match mode {
            SelectionMode::Debug => format!(
                "The previous proposal could not be used: {}",
                parent.bug_report.as_deref().unwrap_or("unknown failure")
            ),
            SelectionMode::Improve => format!(
                "The rubric reached validation MAE {:.4} when its scores were regressed \
                 against 12-month citations. Revise it to predict impact better.",
                -parent.metric.unwrap_or(0.0)
            ),
        };
        let refine = RefineContext { current_rubric: parent_artifact, critique: &critique };
        let messages = proposer_messages(attempt, Some(refine));
        let request = self.gateway.request(messages, self.gateway.config().temperature);
        Ok(self.gateway.complete(&request)?.text)
    }

    fn evaluate(&mut self, artifact: &String) -> Result<Evaluation, GatewayError> {
        match self.fit_candidate(artifact)? {
            Ok(fitted) => Ok(Evaluation::Ok {
                metric: -fitted.fit.val_mae,
                regression: Some(RegressionMetrics {
                    lambda: fitted.fit.lambda,
                    val_mae: fitted.fit.val_mae,
                    test_mae: None,
                }),
            }),
            Err(report) => Ok(Evaluation::Buggy { report }),
        }
    }

    fn write_artifact(&self, path: &std::path::Path, artifact: &String) -> std::io::Result<()> {
        std::fs::write(path, artifact)
    }

    fn read_artifact(&self, path: &std::path::Path) -> std::io::Result<String> {
        std::fs::read_to_string(path)
    }
}
