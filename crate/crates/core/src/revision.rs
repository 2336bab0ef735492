//! Paper revision: exact-match edit scripts applied to section bodies, plus
//! the search task that drives revision through the tree scaffold.
//!
//! A revision model proposes edits as search/replace blocks. Each block's
//! SEARCH text must match exactly one location in the rendered paper, and the
//! matched span must lie entirely inside a single editable section body —
//! tables, headings, and layout separators are protected. Blocks apply
//! sequentially, re-rendering between edits so later matches see earlier
//! replacements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{render_with_spans, Paper, SectionSpan};
use crate::gateway::{Gateway, GatewayError};
use crate::prompts;
use crate::rubric::{score_paper, Rubric, RubricError};
use crate::scaffold::{Evaluation, Node, SearchTask, SelectionMode};

pub const SEARCH_MARKER: &str = "<<<<<<< SEARCH";
pub const DIVIDER_MARKER: &str = "=======";
pub const REPLACE_MARKER: &str = ">>>>>>> REPLACE";

/// One search/replace edit. Contents are lines joined with `\n` (markers
/// excluded).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditBlock {
    pub search: String,
    pub replace: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EditParseError {
    #[error("edit block opened at line {line} is never terminated")]
    UnterminatedBlock { line: usize },
    #[error("marker `{marker}` at line {line} is misplaced")]
    MisplacedMarker { marker: &'static str, line: usize },
    #[error("edit block ending at line {line} has an empty search text")]
    EmptySearch { line: usize },
    #[error("edit block ending at line {line} replaces text with itself")]
    NoOpBlock { line: usize },
    #[error("the response contains no edit blocks")]
    NoBlocks,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EditApplyError {
    #[error("search text not found: {snippet:?}")]
    SearchNotFound { snippet: String },
    #[error("search text matches {count} locations; it must match exactly one")]
    AmbiguousMatch { count: usize },
    #[error("edit touches a protected region (table, heading, or layout)")]
    ProtectedRegionEdit,
    #[error("edit would empty section {index}")]
    EmptiedSection { index: usize },
}

/// Parse an edit script out of model output. Markers must appear bit-exact on
/// their own lines; any prose outside blocks is ignored.
pub fn parse_edit_script(text: &str) -> Result<Vec<EditBlock>, EditParseError> {
    enum State {
        Outside,
        Search { opened: usize, lines: Vec<String> },
        Replace { opened: usize, search: Vec<String>, lines: Vec<String> },
    }
    let mut state = State::Outside;
    let mut blocks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let marker = match line {
            SEARCH_MARKER => Some(SEARCH_MARKER),
            DIVIDER_MARKER => Some(DIVIDER_MARKER),
            REPLACE_MARKER => Some(REPLACE_MARKER),
            _ => None,
        };
        state = match (state, marker) {
            (State::Outside, Some(SEARCH_MARKER)) => {
                State::Search { opened: line_no, lines: Vec::new() }
            }
            (State::Outside, Some(m)) => {
                return Err(EditParseError::MisplacedMarker { marker: m, line: line_no })
            }
            (State::Outside, None) => State::Outside,
            (State::Search { opened, lines }, Some(DIVIDER_MARKER)) => {
                State::Replace { opened, search: lines, lines: Vec::new() }
            }
            (State::Search { .. }, Some(m)) => {
                return Err(EditParseError::MisplacedMarker { marker: m, line: line_no })
            }
            (State::Search { opened, mut lines }, None) => {
                lines.push(line.to_string());
                State::Search { opened, lines }
            }
            (State::Replace { search, lines, .. }, Some(REPLACE_MARKER)) => {
                let search = search.join("\n");
                let replace = lines.join("\n");
                if search.is_empty() {
                    return Err(EditParseError::EmptySearch { line: line_no });
                }
                if search == replace {
                    return Err(EditParseError::NoOpBlock { line: line_no });
                }
                blocks.push(EditBlock { search, replace });
                State::Outside
            }
            (State::Replace { .. }, Some(m)) => {
                return Err(EditParseError::MisplacedMarker { marker: m, line: line_no })
            }
            (State::Replace { opened, search, mut lines }, None) => {
                lines.push(line.to_string());
                State::Replace { opened, search, lines }
            }
        };
    }
    match state {
        State::Outside => {
            if blocks.is_empty() {
                Err(EditParseError::NoBlocks)
            } else {
                Ok(blocks)
            }
        }
        State::Search { opened, .. } | State::Replace { opened, .. } => {
            Err(EditParseError::UnterminatedBlock { line: opened })
        }
    }
}

/// A paper together with its rendered text and section-body boundaries.
/// Edits address the rendered text; accepted edits rewrite the underlying
/// section bodies and re-render.
#[derive(Debug, Clone)]
pub struct Document {
    paper: Paper,
    text: String,
    spans: Vec<SectionSpan>,
}

impl Document {
    pub fn new(paper: Paper) -> Self {
        let (text, spans) = render_with_spans(&paper.sections);
        Document { paper, text, spans }
    }

    pub fn paper(&self) -> &Paper {
        &self.paper
    }

    pub fn into_paper(self) -> Paper {
        self.paper
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn spans(&self) -> &[SectionSpan] {
        &self.spans
    }

    /// Apply one block: unique match, containment in a single editable body,
    /// rewrite, re-render.
    fn apply_one(&self, block: &EditBlock) -> Result<Document, EditApplyError> {
        let matches: Vec<usize> = self.text.match_indices(&block.search).map(|(i, _)| i).collect();
        match matches.len() {
            0 => {
                let snippet: String = block.search.chars().take(60).collect();
                return Err(EditApplyError::SearchNotFound { snippet });
            }
            1 => {}
            count => return Err(EditApplyError::AmbiguousMatch { count }),
        }
        let start = matches[0];
        let end = start + block.search.len();
        let span = self
            .spans
            .iter()
            .find(|s| start >= s.body_start && end <= s.body_end)
            .ok_or(EditApplyError::ProtectedRegionEdit)?;
        if !span.editable {
            return Err(EditApplyError::ProtectedRegionEdit);
        }
        let body = &self.paper.sections[span.index].body;
        let off = start - span.body_start;
        let mut new_body = String::with_capacity(body.len() + block.replace.len());
        new_body.push_str(&body[..off]);
        new_body.push_str(&block.replace);
        new_body.push_str(&body[off + block.search.len()..]);
        if new_body.trim().is_empty() {
            return Err(EditApplyError::EmptiedSection { index: span.index });
        }
        let mut paper = self.paper.clone();
        paper.sections[span.index].body = new_body;
        Ok(Document::new(paper))
    }

    /// Apply blocks in order. Later blocks match against the re-rendered text,
    /// so positions shift correctly after earlier replacements.
    pub fn apply(&self, blocks: &[EditBlock]) -> Result<Document, EditApplyError> {
        let mut doc = self.clone();
        for block in blocks {
            doc = doc.apply_one(block)?;
        }
        Ok(doc)
    }
}

/// Journaled artifact of the revision search: a candidate paper state, or the
/// prior state plus the reason the proposed edits could not be applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Draft {
    pub paper: Paper,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub edit_failure: Option<String>,
}

#[derive(Debug, Error)]
pub enum RevisionError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("scoring failed: {0}")]
    Scoring(RubricError),
}

/// Revision as a tree-search task: the root is the unmodified paper, children
/// are edited drafts, the metric is the mean rubric score.
pub struct RevisionTask<'a> {
    gateway: &'a Gateway,
    rubric: &'a Rubric,
    original: Paper,
}

impl<'a> RevisionTask<'a> {
    pub fn new(gateway: &'a Gateway, rubric: &'a Rubric, original: Paper) -> Self {
        RevisionTask { gateway, rubric, original }
    }

    /// Mean rubric score of a paper (temperature-0 reviews, cached by the
    /// gateway, so re-deriving feedback is free on resume).
    pub fn score(&self, paper: &Paper) -> Result<crate::rubric::ScoreVector, RubricError> {
        score_paper(self.rubric, paper, self.gateway)
    }

    fn reviews_for(&self, paper: &Paper) -> Result<String, RevisionError> {
        match self.score(paper) {
            Ok(scores) => Ok(scores.render_reviews()),
            Err(RubricError::Gateway(e)) => Err(RevisionError::Gateway(e)),
            Err(other) => Err(RevisionError::Scoring(other)),
        }
    }
}

impl SearchTask for RevisionTask<'_> {
    type Artifact = Draft;
    type Error = RevisionError;

    fn propose_root(&mut self, _attempt: &str) -> Result<Draft, RevisionError> {
        Ok(Draft { paper: self.original.clone(), edit_failure: None })
    }

    fn propose_child(
        &mut self,
        parent: &Node,
        parent_artifact: &Draft,
        mode: SelectionMode,
        attempt: &str,
    ) -> Result<Draft, RevisionError> {
        let doc = Document::new(parent_artifact.paper.clone());
        let mut feedback = self.reviews_for(doc.paper())?;
        if mode == SelectionMode::Debug {
            let report = parent.bug_report.as_deref().unwrap_or("unknown failure");
            feedback = format!("{feedback}\n\nThe previous edit attempt failed: {report}");
        }
        let messages = prompts::revision_messages(
            &self.rubric.rubric_dict_text(),
            &self.rubric.guidelines_dict_text(),
            doc.text(),
            &feedback,
            attempt,
        );
        let request = self.gateway.request(messages, self.gateway.config().temperature);
        let completion = self.gateway.complete(&request)?;
        let applied = parse_edit_script(&completion.text)
            .map_err(|e| e.to_string())
            .and_then(|blocks| doc.apply(&blocks).map_err(|e| e.to_string()));
        Ok(match applied {
            Ok(new_doc) => Draft { paper: new_doc.into_paper(), edit_failure: None },
            Err(reason) => {
                Draft { paper: parent_artifact.paper.clone(), edit_failure: Some(reason) }
            }
        })
    }

    fn evaluate(&mut self, artifact: &Draft) -> Result<Evaluation, RevisionError> {
        if let Some(failure) = &artifact.edit_failure {
            return Ok(Evaluation::Buggy { report: failure.clone() });
        }
        match self.score(&artifact.paper) {
            Ok(scores) => Ok(Evaluation::Ok { metric: scores.mean(), regression: None }),
            Err(RubricError::Gateway(e)) => Err(RevisionError::Gateway(e)),
            Err(other) => Ok(Evaluation::Buggy { report: other.to_string() }),
        }
    }

    fn write_artifact(&self, path: &std::path::Path, artifact: &Draft) -> std::io::Result<()> {
        let bytes = serde_json::to_vec_pretty(artifact).expect("draft serializes");
        std::fs::write(path, bytes)
    }

    fn read_artifact(&self, path: &std::path::Path) -> std::io::Result<Draft> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
    }
}

/// Outcome of one paper's revision run, as exported by the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevisionOutcome {
    pub paper_id: String,
    pub s_original: f64,
    pub s_revised: f64,
    pub delta_s: f64,
    pub best_node: String,
}
