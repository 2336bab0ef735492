//! Evaluation rubrics: the item/guideline data model, a tolerant parser for
//! the two-dictionary proposal format, and per-item paper scoring through the
//! gateway.
//!
//! Proposals arrive as two Python-style dict literals (`EVALUATION_RUBRIC`,
//! `SCORING_GUIDELINES`). Models take liberties with that format, so the
//! parser accepts trailing commas, `#` comments, single- or double-quoted
//! strings, raw newlines inside strings, and guideline anchors written as
//! bare integers or quoted digits.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Paper;
use crate::gateway::{extract_fenced_block, strip_trailing_commas, Gateway, GatewayError, Message};
use crate::prompts;

/// Guideline anchors on the 0/5/10 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidelines {
    pub g0: String,
    pub g5: String,
    pub g10: String,
}

/// One rubric criterion: a snake_case key, the question it asks, and its
/// scoring anchors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricItem {
    pub key: String,
    pub question: String,
    #[serde(flatten)]
    pub guidelines: Guidelines,
}

/// A validated rubric: 1 to 128 items with unique, well-formed keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RubricItem>", into = "Vec<RubricItem>")]
pub struct Rubric {
    items: Vec<RubricItem>,
}

pub const MAX_ITEMS: usize = 128;

#[derive(Debug, Error)]
pub enum RubricError {
    #[error("invalid rubric key `{0}` (want ^[a-z][a-z0-9_]*$)")]
    InvalidKey(String),
    #[error("duplicate rubric key `{0}`")]
    DuplicateKey(String),
    #[error("rubric has no items")]
    Empty,
    #[error("rubric has {0} items, limit is {MAX_ITEMS}")]
    TooManyItems(usize),
    #[error("proposal parse failure: {0}")]
    ParseFailure(String),
    #[error("key `{key}` is missing its score-{level} guideline")]
    GuidelineMissing { key: String, level: u8 },
    #[error("reviewer returned score {value} for `{key}`, outside 0..=10")]
    ScoreOutOfRange { key: String, value: f64 },
    #[error("reviewer response for `{key}` carries no usable score")]
    MissingScore { key: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("rubric file I/O: {0}")]
    Io(#[from] std::io::Error),
}

fn valid_key(key: &str) -> bool {
    let mut chars = key.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Rubric {
    pub fn new(items: Vec<RubricItem>) -> Result<Self, RubricError> {
        if items.is_empty() {
            return Err(RubricError::Empty);
        }
        if items.len() > MAX_ITEMS {
            return Err(RubricError::TooManyItems(items.len()));
        }
        let mut seen = HashSet::new();
        for item in &items {
            if !valid_key(&item.key) {
                return Err(RubricError::InvalidKey(item.key.clone()));
            }
            if !seen.insert(item.key.clone()) {
                return Err(RubricError::DuplicateKey(item.key.clone()));
            }
        }
        Ok(Rubric { items })
    }

    pub fn items(&self) -> &[RubricItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn keys(&self) -> Vec<String> {
        self.items.iter().map(|i| i.key.clone()).collect()
    }

    /// Render the `EVALUATION_RUBRIC = {...}` dict literal.
    pub fn rubric_dict_text(&self) -> String {
        let mut out = String::from("EVALUATION_RUBRIC = {\n");
        for item in &self.items {
            writeln!(out, "    \"{}\": \"{}\",", item.key, escape_py(&item.question)).unwrap();
        }
        out.push('}');
        out
    }

    /// Render the `SCORING_GUIDELINES = {...}` dict literal.
    pub fn guidelines_dict_text(&self) -> String {
        let mut out = String::from("SCORING_GUIDELINES = {\n");
        for item in &self.items {
            writeln!(out, "    \"{}\": {{", item.key).unwrap();
            writeln!(out, "        0: \"{}\",", escape_py(&item.guidelines.g0)).unwrap();
            writeln!(out, "        5: \"{}\",", escape_py(&item.guidelines.g5)).unwrap();
            writeln!(out, "        10: \"{}\"", escape_py(&item.guidelines.g10)).unwrap();
            out.push_str("    },\n");
        }
        out.push('}');
        out
    }

    /// Canonical two-section text form: the same format proposals arrive in,
    /// suitable for rubric files. `parse_rubric_text` inverts it.
    pub fn to_text(&self) -> String {
        format!("{}\n\n{}\n", self.rubric_dict_text(), self.guidelines_dict_text())
    }

    /// Structured export: one `{key, question, g0, g5, g10}` record per item.
    pub fn to_structured_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.items
                .iter()
                .map(|i| {
                    serde_json::json!({
                        "key": i.key,
                        "question": i.question,
                        "g0": i.guidelines.g0,
                        "g5": i.guidelines.g5,
                        "g10": i.guidelines.g10,
                    })
                })
                .collect(),
        )
    }
}

impl TryFrom<Vec<RubricItem>> for Rubric {
    type Error = String;
    fn try_from(items: Vec<RubricItem>) -> Result<Self, String> {
        Rubric::new(items).map_err(|e| e.to_string())
    }
}

impl From<Rubric> for Vec<RubricItem> {
    fn from(r: Rubric) -> Vec<RubricItem> {
        r.items
    }
}

fn escape_py(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// The reference rubric shipped with the crate (61 items across problem
/// formulation, literature, methodology, results, discussion, novelty,
/// presentation, and influence-signal criteria).
pub fn discovered() -> &'static Rubric {
    static DISCOVERED: OnceLock<Rubric> = OnceLock::new();
    DISCOVERED.get_or_init(|| {
        parse_rubric_text(include_str!("../data/discovered_rubric.txt"))
            .expect("bundled rubric must parse")
    })
}

// ---------------------------------------------------------------------------
// Tolerant dict-literal parsing
// ---------------------------------------------------------------------------

struct Scanner<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str) -> Self {
        Scanner { src, pos: 0 }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    /// Skip whitespace and `#` line comments.
    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn expect(&mut self, want: char) -> Result<(), String> {
        self.skip_trivia();
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(format!("expected `{want}` at byte {}, found `{c}`", self.pos)),
            None => Err(format!("expected `{want}`, found end of input")),
        }
    }

    /// Parse a single- or double-quoted string. Raw newlines are tolerated;
    /// common escapes are decoded, unknown escapes kept verbatim.
    fn parse_string(&mut self) -> Result<String, String> {
        self.skip_trivia();
        let quote = match self.bump() {
            Some(q @ ('"' | '\'')) => q,
            Some(c) => return Err(format!("expected string at byte {}, found `{c}`", self.pos)),
            None => return Err("expected string, found end of input".into()),
        };
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c @ ('\\' | '"' | '\'')) => out.push(c),
                    Some(c) => {
                        out.push('\\');
                        out.push(c);
                    }
                    None => return Err("unterminated escape in string".into()),
                },
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
                None => return Err("unterminated string literal".into()),
            }
        }
    }

    /// Parse a guideline anchor key: a bare integer or quoted digits.
    fn parse_anchor(&mut self) -> Result<u8, String> {
        self.skip_trivia();
        match self.peek() {
            Some('"' | '\'') => {
                let s = self.parse_string()?;
                s.trim().parse().map_err(|_| format!("guideline key `{s}` is not an integer"))
            }
            Some(c) if c.is_ascii_digit() => {
                let mut n: u32 = 0;
                while let Some(c) = self.peek() {
                    if let Some(d) = c.to_digit(10) {
                        n = n * 10 + d;
                        self.bump();
                    } else {
                        break;
                    }
                }
                u8::try_from(n).map_err(|_| format!("guideline key {n} out of range"))
            }
            other => Err(format!("expected guideline key, found {other:?}")),
        }
    }

    /// After a key, allow an optional comma (trailing commas tolerated) and
    /// detect the closing brace.
    fn at_dict_end(&mut self) -> bool {
        self.skip_trivia();
        self.peek() == Some('}')
    }
}

/// Locate `NAME`, skip `=`, and return a scanner positioned at its `{`.
fn scanner_at_dict<'a>(text: &'a str, name: &str) -> Result<Scanner<'a>, String> {
    let at = text.find(name).ok_or_else(|| format!("`{name}` not found"))?;
    let mut sc = Scanner::new(text);
    sc.pos = at + name.len();
    sc.expect('=')?;
    sc.skip_trivia();
    if sc.peek() != Some('{') {
        return Err(format!("`{name}` is not followed by a dict literal"));
    }
    Ok(sc)
}

fn parse_string_dict(sc: &mut Scanner<'_>) -> Result<Vec<(String, String)>, String> {
    sc.expect('{')?;
    let mut entries = Vec::new();
    loop {
        if sc.at_dict_end() {
            sc.bump();
            return Ok(entries);
        }
        let key = sc.parse_string()?;
        sc.expect(':')?;
        let value = sc.parse_string()?;
        entries.push((key, value));
        sc.skip_trivia();
        if sc.peek() == Some(',') {
            sc.bump();
        }
    }
}

fn parse_guideline_dict(sc: &mut Scanner<'_>) -> Result<Vec<(String, Vec<(u8, String)>)>, String> {
    sc.expect('{')?;
    let mut entries = Vec::new();
    loop {
        if sc.at_dict_end() {
            sc.bump();
            return Ok(entries);
        }
        let key = sc.parse_string()?;
        sc.expect(':')?;
        sc.expect('{')?;
        let mut anchors = Vec::new();
        loop {
            if sc.at_dict_end() {
                sc.bump();
                break;
            }
            let level = sc.parse_anchor()?;
            sc.expect(':')?;
            let text = sc.parse_string()?;
            anchors.push((level, text));
            sc.skip_trivia();
            if sc.peek() == Some(',') {
                sc.bump();
            }
        }
        entries.push((key, anchors));
        sc.skip_trivia();
        if sc.peek() == Some(',') {
            sc.bump();
        }
    }
}

/// Parse the two-dictionary rubric form out of arbitrary surrounding text
/// (proposer responses, rubric files). Item order follows
/// `EVALUATION_RUBRIC`; every item must have 0/5/10 guideline anchors.
pub fn parse_rubric_text(text: &str) -> Result<Rubric, RubricError> {
    let mut sc = scanner_at_dict(text, "EVALUATION_RUBRIC").map_err(RubricError::ParseFailure)?;
    let rubric_entries = parse_string_dict(&mut sc)
        .map_err(|e| RubricError::ParseFailure(format!("EVALUATION_RUBRIC: {e}")))?;
    let mut sc = scanner_at_dict(text, "SCORING_GUIDELINES").map_err(RubricError::ParseFailure)?;
    let guide_entries = parse_guideline_dict(&mut sc)
        .map_err(|e| RubricError::ParseFailure(format!("SCORING_GUIDELINES: {e}")))?;
    let guides: BTreeMap<String, Vec<(u8, String)>> = guide_entries.into_iter().collect();

    let mut items = Vec::with_capacity(rubric_entries.len());
    for (key, question) in rubric_entries {
        let anchors = guides
            .get(&key)
            .ok_or_else(|| RubricError::GuidelineMissing { key: key.clone(), level: 0 })?;
        let pick = |level: u8| -> Result<String, RubricError> {
            anchors
                .iter()
                .find(|(l, _)| *l == level)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| RubricError::GuidelineMissing { key: key.clone(), level })
        };
        let guidelines = Guidelines { g0: pick(0)?, g5: pick(5)?, g10: pick(10)? };
        items.push(RubricItem { key, question, guidelines });
    }
    Rubric::new(items)
}

/// Alias for parsing a raw proposer completion.
pub fn parse_rubric_response(text: &str) -> Result<Rubric, RubricError> {
    parse_rubric_text(text)
}

/// Load a rubric from a two-section rubric file.
pub fn load_rubric(path: impl AsRef<Path>) -> Result<Rubric, RubricError> {
    let text = std::fs::read_to_string(path)?;
    parse_rubric_text(&text)
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Per-item scores and feedback for one paper under one rubric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub paper_id: String,
    pub scores: BTreeMap<String, f64>,
    pub feedback: BTreeMap<String, String>,
}

impl ScoreVector {
    /// Mean rubric score S.
    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.values().sum::<f64>() / self.scores.len() as f64
    }

    /// Deterministic human-readable rendering used in judge prompts.
    pub fn render_reviews(&self) -> String {
        let mut out = String::new();
        for (key, score) in &self.scores {
            let fb = self.feedback.get(key).map(String::as_str).unwrap_or("");
            let _ = writeln!(out, "- {key} (score {score:.1}): {fb}");
        }
        out
    }
}

enum ReviewIssue {
    Missing,
    OutOfRange(f64),
}

fn parse_review_response(text: &str, key: &str) -> Result<(f64, String), ReviewIssue> {
    let block = extract_fenced_block(text, "json").map_err(|_| ReviewIssue::Missing)?;
    let value: serde_json::Value =
        serde_json::from_str(&strip_trailing_commas(&block)).map_err(|_| ReviewIssue::Missing)?;
    let entry = value.get(key).ok_or(ReviewIssue::Missing)?;
    let score = entry.get("score").and_then(|s| s.as_f64()).ok_or(ReviewIssue::Missing)?;
    if !(0.0..=10.0).contains(&score) {
        return Err(ReviewIssue::OutOfRange(score));
    }
    let feedback = entry
        .get("feedback")
        .and_then(|f| f.as_str())
        .unwrap_or("")
        .to_string();
    Ok((score, feedback))
}

/// Score one paper against every rubric item, one reviewer call per item at
/// temperature 0. An invalid response earns exactly one corrective re-ask;
/// a second failure surfaces as `MissingScore`/`ScoreOutOfRange`. Scores are
/// recorded exactly as returned — no clamping.
pub fn score_paper(rubric: &Rubric, paper: &Paper, gateway: &Gateway) -> Result<ScoreVector, RubricError> {
    let full_text = paper.full_text();
    let mut scores = BTreeMap::new();
    let mut feedback = BTreeMap::new();
    for item in rubric.items() {
        let messages = prompts::reviewer_messages(
            &item.key,
            &item.question,
            &item.guidelines.g0,
            &item.guidelines.g5,
            &item.guidelines.g10,
            &paper.id,
            &paper.title,
            &full_text,
        );
        let request = gateway.request(messages.clone(), 0.0);
        let completion = gateway.complete(&request)?;
        let (score, fb) = match parse_review_response(&completion.text, &item.key) {
            Ok(parsed) => parsed,
            Err(first_issue) => {
                let reason = match &first_issue {
                    ReviewIssue::Missing => "it carried no usable score".to_string(),
                    ReviewIssue::OutOfRange(v) => format!("score {v} is outside 0..=10"),
                };
                let mut retry_messages = messages;
                retry_messages.push(Message::assistant(completion.text.clone()));
                retry_messages.push(Message::user(format!(
                    "Your previous reply could not be used ({reason}). Respond again with \
                     exactly the requested JSON format wrapped in ```json ``` tags."
                )));
                let retry = gateway.request(retry_messages, 0.0);
                let second = gateway.complete(&retry)?;
                match parse_review_response(&second.text, &item.key) {
                    Ok(parsed) => parsed,
                    Err(ReviewIssue::OutOfRange(v)) => {
                        return Err(RubricError::ScoreOutOfRange { key: item.key.clone(), value: v })
                    }
                    Err(ReviewIssue::Missing) => {
                        return Err(RubricError::MissingScore { key: item.key.clone() })
                    }
                }
            }
        };
        scores.insert(item.key.clone(), score);
        feedback.insert(item.key.clone(), fb);
    }
    Ok(ScoreVector { paper_id: paper.id.clone(), scores, feedback })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Decision, Section, SectionKind, Venue};
    use crate::gateway::{ChatRequest, Provider, ProviderConfig, ProviderFailure, ProviderKind};

    fn item(key: &str) -> RubricItem {
        RubricItem {
            key: key.into(),
            question: format!("How is the {key}?"),
            guidelines: Guidelines { g0: "bad".into(), g5: "ok".into(), g10: "great".into() },
        }
    }

    #[test]
    fn validation_rules() {
        assert!(matches!(Rubric::new(vec![]), Err(RubricError::Empty)));
        assert!(matches!(
            Rubric::new(vec![item("Bad-Key")]),
            Err(RubricError::InvalidKey(_))
        ));
        assert!(matches!(
            Rubric::new(vec![item("9starts_with_digit")]),
            Err(RubricError::InvalidKey(_))
        ));
        assert!(matches!(
            Rubric::new(vec![item("a"), item("a")]),
            Err(RubricError::DuplicateKey(_))
        ));
        let many: Vec<RubricItem> = (0..129).map(|i| item(&format!("k{i}"))).collect();
        assert!(matches!(Rubric::new(many), Err(RubricError::TooManyItems(129))));
        assert!(Rubric::new(vec![item("a_1"), item("b")]).is_ok());
    }

    #[test]
    fn parser_tolerates_messy_but_honest_output() {
        let text = r#"Sure! Here are the dictionaries you asked for.

EVALUATION_RUBRIC = {
    # the two criteria that matter
    'novelty': "Is the paper
genuinely new?",
    "clarity": 'Is it clear?',
}

SCORING_GUIDELINES = {
    "novelty": {0: "none", '5': "some", "10": "lots",},
    'clarity': {
        "0": 'murky',
        5: "fine",
        10: 'crystal',
    },
}

Hope this helps!"#;
        let rubric = parse_rubric_text(text).unwrap();
        assert_eq!(rubric.keys(), vec!["novelty".to_string(), "clarity".to_string()]);
        assert_eq!(rubric.items()[0].question, "Is the paper\ngenuinely new?");
        assert_eq!(rubric.items()[1].guidelines.g0, "murky");
    }

    #[test]
    fn parser_reports_missing_guideline_levels() {
        let text = r#"EVALUATION_RUBRIC = {"novelty": "new?"}
SCORING_GUIDELINES = {"novelty": {0: "none", 10: "lots"}}"#;
        match parse_rubric_text(text) {
            Err(RubricError::GuidelineMissing { key, level }) => {
                assert_eq!(key, "novelty");
                assert_eq!(level, 5);
            }
            other => panic!("expected GuidelineMissing, got {other:?}"),
        }
    }

    #[test]
    fn parser_rejects_prose_without_dicts() {
        assert!(matches!(
            parse_rubric_text("I would rather not produce a rubric."),
            Err(RubricError::ParseFailure(_))
        ));
    }

    #[test]
    fn text_roundtrip_preserves_items() {
        let rubric = Rubric::new(vec![
            RubricItem {
                key: "novelty".into(),
                question: "Quote \"this\" and\nwrap?".into(),
                guidelines: Guidelines { g0: "a".into(), g5: "b".into(), g10: "c".into() },
            },
            item("clarity"),
        ])
        .unwrap();
        let reparsed = parse_rubric_text(&rubric.to_text()).unwrap();
        assert_eq!(reparsed, rubric);
    }

    #[test]
    fn bundled_rubric_parses_with_61_items() {
        let rubric = discovered();
        assert_eq!(rubric.len(), 61);
        assert!(rubric.keys().iter().any(|k| k == "aha_factor"));
        for item in rubric.items() {
            assert!(!item.question.is_empty());
            assert!(!item.guidelines.g10.is_empty());
        }
    }

    fn paper_with_signal(q: f64) -> Paper {
        Paper {
            id: "p1".into(),
            venue: Venue::Iclr,
            year: 2024,
            title: "A Paper".into(),
            sections: vec![Section {
                kind: SectionKind::Text,
                heading: Some("Introduction".into()),
                body: format!("We study things.\nquality-signal: {q:.1}"),
            }],
            human_scores: vec![6.0],
            decision: Decision::Poster,
            citations_12mo: 4,
        }
    }

    #[test]
    fn score_paper_returns_one_score_per_item_via_stub() {
        let gateway = Gateway::new(ProviderConfig {
            kind: ProviderKind::Stub,
            ..ProviderConfig::default()
        });
        let rubric = Rubric::new(vec![item("novelty"), item("clarity")]).unwrap();
        let scores = score_paper(&rubric, &paper_with_signal(6.0), &gateway).unwrap();
        assert_eq!(scores.scores.len(), 2);
        assert!(scores.scores.values().all(|s| (0.0..=10.0).contains(s)));
        assert!(scores.mean() > 0.0);
        let rendered = scores.render_reviews();
        assert!(rendered.contains("- clarity (score"));
    }

    /// Provider that returns a fixed sequence of responses.
    struct Seq(std::cell::RefCell<Vec<String>>);
    impl Provider for Seq {
        fn id(&self) -> &str {
            "seq"
        }
        fn call(&self, _r: &ChatRequest) -> Result<String, ProviderFailure> {
            Ok(self.0.borrow_mut().remove(0))
        }
    }

    fn seq_gateway(responses: &[&str]) -> Gateway {
        Gateway::new(ProviderConfig::default())
            .with_provider(Box::new(Seq(std::cell::RefCell::new(
                responses.iter().map(|s| s.to_string()).collect(),
            ))))
    }

    #[test]
    fn invalid_score_gets_exactly_one_reask() {
        let bad = "```json\n{\"novelty\": {\"score\": 12, \"feedback\": \"x\"}}\n```";
        let good = "```json\n{\"novelty\": {\"score\": 7, \"feedback\": \"y\"}}\n```";
        let gateway = seq_gateway(&[bad, good]);
        let rubric = Rubric::new(vec![item("novelty")]).unwrap();
        let scores = score_paper(&rubric, &paper_with_signal(5.0), &gateway).unwrap();
        assert_eq!(scores.scores["novelty"], 7.0);

        let gateway = seq_gateway(&[bad, bad]);
        match score_paper(&rubric, &paper_with_signal(5.0), &gateway) {
            Err(RubricError::ScoreOutOfRange { key, value }) => {
                assert_eq!(key, "novelty");
                assert_eq!(value, 12.0);
            }
            other => panic!("expected ScoreOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn missing_score_after_reask_is_reported() {
        let no_json = "I decline to answer in the requested format.";
        let gateway = seq_gateway(&[no_json, no_json]);
        let rubric = Rubric::new(vec![item("novelty")]).unwrap();
        assert!(matches!(
            score_paper(&rubric, &paper_with_signal(5.0), &gateway),
            Err(RubricError::MissingScore { .. })
        ));
    }

    #[test]
    fn missing_feedback_is_accepted_as_empty() {
        let minimal = "```json\n{\"novelty\": {\"score\": 5}}\n```";
        let gateway = seq_gateway(&[minimal]);
        let rubric = Rubric::new(vec![item("novelty")]).unwrap();
        let scores = score_paper(&rubric, &paper_with_signal(5.0), &gateway).unwrap();
        assert_eq!(scores.feedback["novelty"], "");
    }

    #[test]
    fn trailing_comma_in_review_json_is_tolerated() {
        let trailing = "```json\n{\n  \"novelty\": {\"score\": 6.5, \"feedback\": \"z\"},\n}\n```";
        let gateway = seq_gateway(&[trailing]);
        let rubric = Rubric::new(vec![item("novelty")]).unwrap();
        let scores = score_paper(&rubric, &paper_with_signal(5.0), &gateway).unwrap();
        assert_eq!(scores.scores["novelty"], 6.5);
    }
}
