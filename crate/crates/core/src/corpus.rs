//! Paper corpus: JSON-lines ingestion, validation, acceptance strata, and
//! deterministic train/validation/test splits.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Publication venue. Score scales differ per venue, so stratum thresholds do too.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Venue {
    #[serde(rename = "ICLR")]
    Iclr,
    #[serde(rename = "NeurIPS")]
    Neurips,
}

impl fmt::Display for Venue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Venue::Iclr => write!(f, "ICLR"),
            Venue::Neurips => write!(f, "NeurIPS"),
        }
    }
}

/// Final decision recorded for a submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Oral,
    Spotlight,
    Poster,
    Reject,
    Withdrawn,
}

/// Section payload kind. Table bodies are protected from revision edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Text,
    Table,
    FigureCaption,
}

/// One section of a paper: an optional heading plus a non-empty body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<String>,
    pub body: String,
}

/// A single paper record as stored in the JSON-lines corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paper {
    pub id: String,
    pub venue: Venue,
    pub year: i32,
    pub title: String,
    pub sections: Vec<Section>,
    pub human_scores: Vec<f64>,
    pub decision: Decision,
    pub citations_12mo: u32,
}

/// Acceptance stratum derived from mean human score and venue thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stratum {
    ClearAccept,
    Borderline,
    ClearReject,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::ClearAccept => write!(f, "clear-accept"),
            Stratum::Borderline => write!(f, "borderline"),
            Stratum::ClearReject => write!(f, "clear-reject"),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error("duplicate paper id `{0}`")]
    DuplicateId(String),
    #[error("paper `{0}`: citations_12mo is negative")]
    NegativeCitations(String),
    #[error("paper `{0}` has no human scores")]
    NoScores(String),
}

/// Mirror of [`Paper`] with a signed citation count, so a negative value can be
/// reported as [`CorpusError::NegativeCitations`] instead of a type error.
#[derive(Deserialize)]
struct RawPaper {
    id: String,
    venue: Venue,
    year: i32,
    title: String,
    sections: Vec<RawSection>,
    human_scores: Vec<f64>,
    decision: Decision,
    citations_12mo: i64,
}

#[derive(Deserialize)]
struct RawSection {
    kind: SectionKind,
    #[serde(default)]
    heading: Option<String>,
    body: String,
}

fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n")
}

fn schema(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::SchemaViolation {
        line,
        reason: reason.into(),
    }
}

/// Parse a JSON-lines corpus from a string. Empty lines are ignored; the first
/// invalid record aborts the load. CRLF line endings inside titles, headings,
/// and bodies are normalized to LF.
pub fn parse_corpus(text: &str) -> Result<Vec<Paper>, CorpusError> {
    let mut papers = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPaper =
            serde_json::from_str(line).map_err(|e| schema(line_no, e.to_string()))?;
        let paper = validate_raw(raw, line_no)?;
        if !seen.insert(paper.id.clone()) {
            return Err(CorpusError::DuplicateId(paper.id));
        }
        papers.push(paper);
    }
    Ok(papers)
}

fn validate_raw(raw: RawPaper, line_no: usize) -> Result<Paper, CorpusError> {
    if raw.id.is_empty() {
        return Err(schema(line_no, "empty paper id"));
    }
    if raw.citations_12mo < 0 {
        return Err(CorpusError::NegativeCitations(raw.id));
    }
    if raw.sections.is_empty() {
        return Err(schema(line_no, format!("paper `{}` has no sections", raw.id)));
    }
    if raw.human_scores.is_empty() && raw.decision != Decision::Withdrawn {
        return Err(schema(
            line_no,
            format!("paper `{}` is not withdrawn but has no human scores", raw.id),
        ));
    }
    if raw.human_scores.iter().any(|s| !s.is_finite()) {
        return Err(schema(line_no, format!("paper `{}` has a non-finite score", raw.id)));
    }
    let mut sections = Vec::with_capacity(raw.sections.len());
    for (i, s) in raw.sections.into_iter().enumerate() {
        if s.body.is_empty() {
            return Err(schema(
                line_no,
                format!("paper `{}` section {i} has an empty body", raw.id),
            ));
        }
        sections.push(Section {
            kind: s.kind,
            heading: s.heading.map(|h| normalize_newlines(&h)),
            body: normalize_newlines(&s.body),
        });
    }
    Ok(Paper {
        id: raw.id,
        venue: raw.venue,
        year: raw.year,
        title: normalize_newlines(&raw.title),
        sections,
        human_scores: raw.human_scores,
        decision: raw.decision,
        citations_12mo: raw.citations_12mo as u32,
    })
}

/// Load a corpus from a JSON-lines file. See [`parse_corpus`].
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Paper>, CorpusError> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text)
}

/// Serialize papers back to JSON-lines. `parse_corpus(&serialize_corpus(p)) == p`
/// for any valid corpus.
pub fn serialize_corpus(papers: &[Paper]) -> String {
    let mut out = String::new();
    for p in papers {
        out.push_str(&serde_json::to_string(p).expect("paper serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Mean of a paper's human scores, if it has any.
pub fn mean_score(paper: &Paper) -> Option<f64> {
    if paper.human_scores.is_empty() {
        return None;
    }
    Some(paper.human_scores.iter().sum::<f64>() / paper.human_scores.len() as f64)
}

/// Classify a paper into an acceptance stratum from its mean human score.
///
/// ICLR (1–10 scale): mean > 6 is a clear accept, mean < 4 a clear reject.
/// NeurIPS (1–8 scale): mean > 5 is a clear accept, mean < 3 a clear reject.
/// Boundary means fall into the borderline stratum.
pub fn classify_stratum(paper: &Paper) -> Result<Stratum, CorpusError> {
    let m = mean_score(paper).ok_or_else(|| CorpusError::NoScores(paper.id.clone()))?;
    let (hi, lo) = match paper.venue {
        Venue::Iclr => (6.0, 4.0),
        Venue::Neurips => (5.0, 3.0),
    };
    Ok(if m > hi {
        Stratum::ClearAccept
    } else if m < lo {
        Stratum::ClearReject
    } else {
        Stratum::Borderline
    })
}

/// Train/validation/test split, stored as paper ids in shuffled order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    /// Materialize one split as paper references, in split order.
    pub fn select<'a>(&self, which: &str, papers: &'a [Paper]) -> Vec<&'a Paper> {
        let ids = match which {
            "train" => &self.train,
            "validation" => &self.validation,
            "test" => &self.test,
            other => panic!("unknown split `{other}`"),
        };
        let by_id: std::collections::HashMap<&str, &Paper> =
            papers.iter().map(|p| (p.id.as_str(), p)).collect();
        ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect()
    }
}

/// Deterministically shuffle the corpus with a seeded RNG and split it
/// 80/10/10: `floor(0.8 n)` train rows, `floor(0.1 n)` validation rows, and the
/// remainder as test rows. Same corpus order and seed always yield the same split.
pub fn split_corpus(papers: &[Paper], seed: u64) -> Splits {
    let mut ids: Vec<String> = papers.iter().map(|p| p.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_train = (0.8 * n as f64).floor() as usize;
    let n_val = (0.1 * n as f64).floor() as usize;
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Splits {
        train: ids,
        validation,
        test,
    }
}

/// Mean 12-month citation count over the corpus, if non-empty.
pub fn mean_citations(papers: &[Paper]) -> Option<f64> {
    if papers.is_empty() {
        return None;
    }
    Some(papers.iter().map(|p| p.citations_12mo as f64).sum::<f64>() / papers.len() as f64)
}

/// Byte span of one section's body within the rendered full text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectionSpan {
    pub index: usize,
    pub body_start: usize,
    pub body_end: usize,
    /// Table bodies are protected; text and figure-caption bodies may be edited.
    pub editable: bool,
}

/// Render sections to the canonical full text and report each body's byte span.
///
/// Layout: sections joined by a blank line; a section with a heading renders as
/// `heading\nbody`, otherwise just `body`. Headings and separators are never
/// part of any editable span.
pub fn render_with_spans(sections: &[Section]) -> (String, Vec<SectionSpan>) {
    let mut text = String::new();
    let mut spans = Vec::with_capacity(sections.len());
    for (i, s) in sections.iter().enumerate() {
        if i > 0 {
            text.push_str("\n\n");
        }
        if let Some(h) = &s.heading {
            if !h.is_empty() {
                text.push_str(h);
                text.push('\n');
            }
        }
        let body_start = text.len();
        text.push_str(&s.body);
        spans.push(SectionSpan {
            index: i,
            body_start,
            body_end: text.len(),
            editable: s.kind != SectionKind::Table,
        });
    }
    (text, spans)
}

impl Paper {
    /// Canonical rendered text used for prompts and for the edit engine.
    pub fn full_text(&self) -> String {
        render_with_spans(&self.sections).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, venue: &str, scores: &str, decision: &str, cites: i64) -> String {
        format!(
            r#"{{"id":"{id}","venue":"{venue}","year":2024,"title":"T","sections":[{{"kind":"text","heading":"Intro","body":"Hello."}}],"human_scores":{scores},"decision":"{decision}","citations_12mo":{cites}}}"#
        )
    }

    #[test]
    fn parses_minimal_record() {
        let papers = parse_corpus(&line("p1", "ICLR", "[6,7]", "poster", 3)).unwrap();
        assert_eq!(papers.len(), 1);
        assert_eq!(papers[0].id, "p1");
        assert_eq!(papers[0].venue, Venue::Iclr);
        assert_eq!(papers[0].decision, Decision::Poster);
        assert_eq!(papers[0].citations_12mo, 3);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let text = format!("{}\n{}", line("p1", "ICLR", "[6]", "poster", 0), line("p1", "ICLR", "[6]", "poster", 0));
        match parse_corpus(&text) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "p1"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_citations_by_id() {
        match parse_corpus(&line("p9", "NeurIPS", "[4]", "reject", -2)) {
            Err(CorpusError::NegativeCitations(id)) => assert_eq!(id, "p9"),
            other => panic!("expected NegativeCitations, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_enum_values_with_line_numbers() {
        let text = format!("{}\n{}", line("p1", "ICLR", "[5]", "poster", 1), line("p2", "AAAI", "[5]", "poster", 1));
        match parse_corpus(&text) {
            Err(CorpusError::SchemaViolation { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected SchemaViolation, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_scores_unless_withdrawn() {
        assert!(parse_corpus(&line("p1", "ICLR", "[]", "poster", 0)).is_err());
        let withdrawn = parse_corpus(&line("p1", "ICLR", "[]", "withdrawn", 0)).unwrap();
        assert_eq!(withdrawn[0].decision, Decision::Withdrawn);
    }

    #[test]
    fn rejects_empty_section_body() {
        let text = r#"{"id":"p1","venue":"ICLR","year":2024,"title":"T","sections":[{"kind":"text","body":""}],"human_scores":[5],"decision":"poster","citations_12mo":0}"#;
        assert!(matches!(parse_corpus(text), Err(CorpusError::SchemaViolation { .. })));
    }

    #[test]
    fn normalizes_crlf_at_ingest() {
        let text = r#"{"id":"p1","venue":"ICLR","year":2024,"title":"T","sections":[{"kind":"text","body":"a\r\nb"}],"human_scores":[5],"decision":"poster","citations_12mo":0}"#;
        let papers = parse_corpus(text).unwrap();
        assert_eq!(papers[0].sections[0].body, "a\nb");
    }

    #[test]
    fn stratum_thresholds_are_strict_per_venue() {
        let mk = |venue, scores: &[f64]| Paper {
            id: "x".into(),
            venue,
            year: 2024,
            title: "t".into(),
            sections: vec![Section { kind: SectionKind::Text, heading: None, body: "b".into() }],
            human_scores: scores.to_vec(),
            decision: Decision::Poster,
            citations_12mo: 0,
        };
        assert_eq!(classify_stratum(&mk(Venue::Iclr, &[6.0, 7.0])).unwrap(), Stratum::ClearAccept);
        assert_eq!(classify_stratum(&mk(Venue::Iclr, &[6.0])).unwrap(), Stratum::Borderline);
        assert_eq!(classify_stratum(&mk(Venue::Iclr, &[4.0])).unwrap(), Stratum::Borderline);
        assert_eq!(classify_stratum(&mk(Venue::Iclr, &[3.5])).unwrap(), Stratum::ClearReject);
        assert_eq!(classify_stratum(&mk(Venue::Neurips, &[3.0])).unwrap(), Stratum::Borderline);
        assert_eq!(classify_stratum(&mk(Venue::Neurips, &[2.5])).unwrap(), Stratum::ClearReject);
        assert_eq!(classify_stratum(&mk(Venue::Neurips, &[5.5])).unwrap(), Stratum::ClearAccept);
        let no_scores = Paper { human_scores: vec![], decision: Decision::Withdrawn, ..mk(Venue::Iclr, &[5.0]) };
        assert!(matches!(classify_stratum(&no_scores), Err(CorpusError::NoScores(_))));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let papers: Vec<Paper> = (0..103)
            .map(|i| Paper {
                id: format!("p{i}"),
                venue: Venue::Iclr,
                year: 2024,
                title: "t".into(),
                sections: vec![Section { kind: SectionKind::Text, heading: None, body: "b".into() }],
                human_scores: vec![5.0],
                decision: Decision::Poster,
                citations_12mo: 0,
            })
            .collect();
        let s = split_corpus(&papers, 7);
        assert_eq!(s.train.len(), 82); // floor(0.8 * 103)
        assert_eq!(s.validation.len(), 10); // floor(0.1 * 103)
        assert_eq!(s.test.len(), 11); // remainder
        let mut all: Vec<&String> = s.train.iter().chain(&s.validation).chain(&s.test).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 103, "splits must partition the corpus");
        assert_eq!(split_corpus(&papers, 7), s, "same seed, same split");
        assert_ne!(split_corpus(&papers, 8), s, "different seed, different shuffle");
    }

    #[test]
    fn render_layout_and_spans() {
        let sections = vec![
            Section { kind: SectionKind::Text, heading: Some("Intro".into()), body: "Alpha.".into() },
            Section { kind: SectionKind::Table, heading: Some("Table 1".into()), body: "| a | b |".into() },
            Section { kind: SectionKind::Text, heading: None, body: "Omega.".into() },
        ];
        let (text, spans) = render_with_spans(&sections);
        assert_eq!(text, "Intro\nAlpha.\n\nTable 1\n| a | b |\n\nOmega.");
        assert_eq!(&text[spans[0].body_start..spans[0].body_end], "Alpha.");
        assert_eq!(&text[spans[1].body_start..spans[1].body_end], "| a | b |");
        assert_eq!(&text[spans[2].body_start..spans[2].body_end], "Omega.");
        assert!(spans[0].editable && !spans[1].editable && spans[2].editable);
    }
}
