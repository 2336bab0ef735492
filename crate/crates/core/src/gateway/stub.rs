//! Deterministic stub provider.
//!
//! The stub recognizes the four pipeline prompts by their opening line and
//! answers with plausible, well-formed output that is a pure function of
//! `(seed, request hash, registered template)`. Synthetic papers embed a
//! latent quality scalar on a `quality-signal: <x>` line; the stub reads it so
//! reviews, edits, and verdicts all correlate with that latent value:
//!
//! - reviewer: per-key affine score `intercept + slope * quality + noise`,
//!   with slope/intercept/noise-sd derived from a hash of the key, so every
//!   key is informative but some are much noisier than others;
//! - proposer: rubrics drawn from a canned key pool (occasionally malformed);
//! - rewriter: a search/replace block bumping the quality marker by 0.5
//!   (occasionally broken or aimed at a protected table row);
//! - judge: picks the side with the higher latent quality.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{cache_key, ChatRequest, Provider, ProviderFailure};

/// Knobs controlling the stub's behavior. All responses are deterministic in
/// these settings plus the request content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubSettings {
    pub seed: u64,
    /// Scales reviewer noise; 0 makes reviews a deterministic affine function
    /// of the latent quality.
    pub review_noise: f64,
    /// Probability that a rubric proposal is malformed (unparseable).
    pub malformed_proposal_rate: f64,
    /// Probability that a rewrite targets missing or protected text.
    pub bad_edit_rate: f64,
    /// Probability that a judge verdict omits its JSON payload.
    pub malformed_verdict_rate: f64,
    /// Response template overrides by role name (`reviewer`, `proposer`,
    /// `rewriter`, `judge`). `{key}` is replaced by the rubric item under
    /// review. Used to script edge cases in tests.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub canned: BTreeMap<String, String>,
}

impl Default for StubSettings {
    fn default() -> Self {
        StubSettings {
            seed: 0,
            review_noise: 0.25,
            malformed_proposal_rate: 0.1,
            bad_edit_rate: 0.2,
            malformed_verdict_rate: 0.0,
            canned: BTreeMap::new(),
        }
    }
}

/// How a single rubric key maps latent quality to a review score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemProfile {
    pub slope: f64,
    pub intercept: f64,
    pub noise_sd: f64,
}

/// Derive a key's scoring profile from a hash of the key. Slopes stay
/// positive so every key carries signal; noise varies widely so key choice
/// changes how predictive a rubric is.
pub fn item_profile(key: &str) -> ItemProfile {
    let digest = Sha256::digest(format!("item-profile:{key}").as_bytes());
    let u = |i: usize| -> f64 {
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[i * 8..(i + 1) * 8]);
        u64::from_le_bytes(b) as f64 / u64::MAX as f64
    };
    ItemProfile {
        slope: 0.35 + 0.55 * u(0),
        intercept: u(1),
        noise_sd: 0.1 + 1.4 * u(2),
    }
}

/// Reviewer scoring rule shared with test oracles: affine in the latent
/// quality, clamped to [0, 10], rounded to one decimal.
pub fn review_score(profile: ItemProfile, quality: f64, noise: f64) -> f64 {
    let raw = profile.intercept + profile.slope * quality + noise;
    (raw.clamp(0.0, 10.0) * 10.0).round() / 10.0
}

/// Extract the latent quality marker from paper text, if present.
pub fn latent_signal(text: &str) -> Option<f64> {
    let start = text.find("quality-signal:")? + "quality-signal:".len();
    let rest = text[start..].trim_start();
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
        .unwrap_or(rest.len());
    rest[..end].parse().ok()
}

fn fallback_quality(text: &str) -> f64 {
    let digest = Sha256::digest(format!("latent:{text}").as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    2.0 + 6.0 * (u64::from_le_bytes(b) as f64 / u64::MAX as f64)
}

fn quality_of(text: &str) -> f64 {
    latent_signal(text).unwrap_or_else(|| fallback_quality(text))
}

/// Canned pool the stub proposer draws rubric items from.
pub const PROPOSER_POOL: &[(&str, &str)] = &[
    ("novelty", "Does the paper introduce genuinely new ideas or methods?"),
    ("clarity", "Is the paper's writing and structure exceptionally clear?"),
    ("technical_depth", "Does the paper demonstrate deep technical rigor?"),
    ("motivation", "Is the problem well motivated and clearly situated?"),
    ("empirical_strength", "Are the experiments thorough and convincing?"),
    ("reproducibility", "Could a competent reader reproduce the results?"),
    ("significance", "Will the results matter to a broad audience?"),
    ("related_work_coverage", "Does the paper engage fairly with prior work?"),
    ("soundness", "Are the claims fully supported by evidence or proofs?"),
    ("presentation", "Are figures, tables, and notation polished?"),
    ("impact_potential", "Is the work likely to influence future research?"),
    ("problem_scope", "Is the scope of the problem ambitious yet tractable?"),
    ("readability", "Can a non-specialist follow the main argument?"),
    ("originality", "Does the framing avoid rehashing established ideas?"),
    ("rigor", "Are the analyses statistically and methodologically careful?"),
    ("accessibility", "Are artifacts, data, or code made available?"),
];

enum PromptKind {
    Reviewer,
    Proposer,
    Rewriter,
    Judge,
    Unknown,
}

fn detect_kind(request: &ChatRequest) -> PromptKind {
    let first = match request.messages.first() {
        Some(m) => m.content.trim_start(),
        None => return PromptKind::Unknown,
    };
    if first.starts_with("You are an expert reviewer comparing two research papers") {
        PromptKind::Judge
    } else if first.starts_with("You are reviewing a paper") {
        PromptKind::Reviewer
    } else if first.starts_with("You are an expert in research evaluation") {
        PromptKind::Proposer
    } else if first.starts_with("You are an expert academic editor") {
        PromptKind::Rewriter
    } else {
        PromptKind::Unknown
    }
}

fn kind_name(kind: &PromptKind) -> &'static str {
    match kind {
        PromptKind::Reviewer => "reviewer",
        PromptKind::Proposer => "proposer",
        PromptKind::Rewriter => "rewriter",
        PromptKind::Judge => "judge",
        PromptKind::Unknown => "unknown",
    }
}

pub struct StubProvider {
    settings: StubSettings,
}

impl StubProvider {
    pub fn new(settings: StubSettings) -> Self {
        StubProvider { settings }
    }

    fn rng_for(&self, request: &ChatRequest) -> ChaCha8Rng {
        let key = cache_key("stub", request);
        let mut hasher = Sha256::new();
        hasher.update(b"apres-stub");
        hasher.update(self.settings.seed.to_le_bytes());
        hasher.update(key.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    fn respond_reviewer(&self, request: &ChatRequest, rng: &mut ChaCha8Rng) -> String {
        let system = &request.messages[0].content;
        let key = extract_bold_key(system).unwrap_or("criterion");
        let paper = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        let quality = quality_of(paper);
        let profile = item_profile(key);
        let z = standard_normal(rng);
        let score = review_score(profile, quality, z * profile.noise_sd * self.settings.review_noise);
        let feedback = format!(
            "Against the {key} guideline anchors this paper sits near {score:.1}; \
             tightening the weakest passages would raise it."
        );
        let payload = serde_json::json!({ key: { "score": score, "feedback": feedback } });
        format!(
            "THOUGHT:\nCalibrated the paper against the guideline anchors.\n\n```json\n{}\n```",
            serde_json::to_string_pretty(&payload).expect("stub payload serializes")
        )
    }

    fn respond_proposer(&self, rng: &mut ChaCha8Rng) -> String {
        let malformed = rng.random::<f64>() < self.settings.malformed_proposal_rate;
        let count = 2 + rng.random_range(0..5usize);
        let mut indices: Vec<usize> = (0..PROPOSER_POOL.len()).collect();
        for i in 0..count {
            let j = i + rng.random_range(0..indices.len() - i);
            indices.swap(i, j);
        }
        let picked: Vec<(&str, &str)> = indices[..count].iter().map(|&i| PROPOSER_POOL[i]).collect();
        if malformed {
            match rng.random_range(0..3u8) {
                0 => {
                    // Guidelines missing for the final key.
                    let mut out = render_proposal(&picked);
                    let (last_key, _) = picked[count - 1];
                    let needle = format!("    \"{last_key}\": {{");
                    if let Some(pos) = out.rfind(&needle) {
                        let end = out[pos..].find("},").map(|e| pos + e + 2).unwrap_or(out.len());
                        out.replace_range(pos..end, "");
                    }
                    out
                }
                1 => "After reflection, a single holistic score seems best; no rubric needed.".into(),
                _ => "EVALUATION_RUBRIC = {\n}\n\nSCORING_GUIDELINES = {\n}\n".into(),
            }
        } else {
            render_proposal(&picked)
        }
    }

    fn respond_rewriter(&self, request: &ChatRequest, rng: &mut ChaCha8Rng) -> String {
        let prompt = &request.messages[0].content;
        let draft = extract_draft(prompt);
        let bad = rng.random::<f64>() < self.settings.bad_edit_rate;
        let preamble = "The feedback points at framing; the edit below sharpens the contribution.";
        if !bad {
            if let Some(q) = latent_signal(draft) {
                let bumped = (q + 0.5).min(10.0);
                if bumped > q {
                    return format!(
                        "{preamble}\n\n<<<<<<< SEARCH\nquality-signal: {q:.1}\n=======\nquality-signal: {bumped:.1}\n>>>>>>> REPLACE\n"
                    );
                }
            }
        }
        // Broken edit: either aim at a protected table row or at absent text.
        if rng.random::<bool>() {
            if let Some(row) = draft.lines().find(|l| l.contains('|')) {
                return format!(
                    "{preamble}\n\n<<<<<<< SEARCH\n{row}\n=======\n{row} (revised)\n>>>>>>> REPLACE\n"
                );
            }
        }
        format!(
            "{preamble}\n\n<<<<<<< SEARCH\nThe flux capacitor subsection requires recalibration.\n=======\nThe flux capacitor subsection is now calibrated.\n>>>>>>> REPLACE\n"
        )
    }

    fn respond_judge(&self, request: &ChatRequest, rng: &mut ChaCha8Rng) -> String {
        if rng.random::<f64>() < self.settings.malformed_verdict_rate {
            return "THOUGHT:\nBoth papers have merit; I cannot commit to a verdict.".into();
        }
        let prompt = &request.messages[0].content;
        let (qa, qb) = judge_qualities(prompt);
        let winner = if (qa - qb).abs() < f64::EPSILON {
            if rng.random::<bool>() {
                "A"
            } else {
                "B"
            }
        } else if qa > qb {
            "A"
        } else {
            "B"
        };
        let gap = (qa - qb).abs();
        let score_difference = (gap * 1.5).round().clamp(1.0, 10.0) as u32;
        let confidence = (1.0 + gap).round().clamp(1.0, 5.0) as u32;
        format!(
            "THOUGHT:\nCompared the contributions and their reviews.\n\nDECISION:\n{{\n    \"confidence\": {confidence},\n    \"reasoning\": \"Paper {winner} presents the stronger overall signal.\",\n    \"score_difference\": {score_difference},\n    \"winner\": \"{winner}\",\n}}"
        )
    }
}

impl Provider for StubProvider {
    fn id(&self) -> &str {
        "stub"
    }

    fn call(&self, request: &ChatRequest) -> Result<String, ProviderFailure> {
        let kind = detect_kind(request);
        if let Some(template) = self.settings.canned.get(kind_name(&kind)) {
            let key = request
                .messages
                .first()
                .and_then(|m| extract_bold_key(&m.content))
                .unwrap_or("criterion");
            return Ok(template.replace("{key}", key));
        }
        let mut rng = self.rng_for(request);
        Ok(match kind {
            PromptKind::Reviewer => self.respond_reviewer(request, &mut rng),
            PromptKind::Proposer => self.respond_proposer(&mut rng),
            PromptKind::Rewriter => self.respond_rewriter(request, &mut rng),
            PromptKind::Judge => self.respond_judge(request, &mut rng),
            PromptKind::Unknown => "OK.".into(),
        })
    }
}

fn extract_bold_key(text: &str) -> Option<&str> {
    let start = text.find("**")? + 2;
    let end = text[start..].find("**")? + start;
    Some(&text[start..end])
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn render_proposal(items: &[(&str, &str)]) -> String {
    let mut rubric = String::from("EVALUATION_RUBRIC = {\n    # criteria chosen to track citation impact\n");
    for (key, question) in items {
        rubric.push_str(&format!("    \"{key}\": \"{question}\",\n"));
    }
    rubric.push('}');
    let mut guides = String::from("SCORING_GUIDELINES = {\n");
    for (key, _) in items {
        let topic = key.replace('_', " ");
        guides.push_str(&format!(
            "    \"{key}\": {{\n        0: \"No meaningful {topic}.\",\n        5: \"Adequate {topic} with notable gaps.\",\n        10: \"Outstanding {topic} throughout.\"\n    }},\n"
        ));
    }
    guides.push('}');
    format!("Here is a rubric aimed at predicting citation impact.\n\n{rubric}\n\n{guides}\n")
}

/// Slice the current draft out of a rendered revision prompt.
fn extract_draft(prompt: &str) -> &str {
    let marker = "### **Context: Original Paper**\n";
    let start = match prompt.find(marker) {
        Some(p) => p + marker.len(),
        None => return prompt,
    };
    let rest = &prompt[start..];
    let end = rest
        .find("\n\n---\n### **Context: Reviewer Feedback**")
        .or_else(|| rest.find("\n\n---"))
        .unwrap_or(rest.len());
    &rest[..end]
}

fn judge_qualities(prompt: &str) -> (f64, f64) {
    let a_start = prompt.find("Paper A:").unwrap_or(0);
    let b_start = prompt.find("Paper B:").unwrap_or(prompt.len());
    let a_slice = &prompt[a_start..b_start.max(a_start)];
    let b_slice = &prompt[b_start.min(prompt.len())..];
    (quality_of(a_slice), quality_of(b_slice))
}
