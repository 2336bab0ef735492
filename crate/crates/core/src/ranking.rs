//! Pairwise paper ranking: a Glicko-2 tournament driven by an LLM judge,
//! percentile accept/reject decisions, and decision-consistency matrices.
//!
//! Ratings live on the conventional display scale (initial 1500/350/0.06) and
//! are updated per match: both players are updated from their pre-match
//! states, sequentially in sampling order, so a fixed seed reproduces the
//! tournament byte for byte. Match outcomes are binary — the judge's
//! confidence and score difference are recorded for reports but do not enter
//! the rating math.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Paper;
use crate::gateway::{extract_fenced_block, strip_trailing_commas, Gateway, GatewayError};
use crate::prompts::{judge_messages, JudgeSide};

/// Conversion factor between the display scale and Glicko-2's internal scale.
pub const GLICKO2_SCALE: f64 = 173.7178;
pub const INITIAL_RATING: f64 = 1500.0;
pub const INITIAL_RD: f64 = 350.0;
pub const INITIAL_VOLATILITY: f64 = 0.06;
/// System constant bounding volatility drift.
pub const DEFAULT_TAU: f64 = 0.5;
/// Volatility root-finder tolerance and iteration cap.
const VOLATILITY_TOL: f64 = 1e-6;
const VOLATILITY_MAX_ITER: usize = 100;
/// A tournament stops early when every rating change in a sliding window of
/// one-match-per-paper is below this (display-scale) threshold.
pub const EARLY_STOP_DELTA: f64 = 1.0;
/// Fraction of the match budget that may be lost to unusable verdicts.
pub const SKIP_BUDGET_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlickoState {
    pub rating: f64,
    pub rd: f64,
    pub volatility: f64,
}

impl Default for GlickoState {
    fn default() -> Self {
        GlickoState { rating: INITIAL_RATING, rd: INITIAL_RD, volatility: INITIAL_VOLATILITY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Win,
    Loss,
}

impl Outcome {
    fn score(self) -> f64 {
        match self {
            Outcome::Win => 1.0,
            Outcome::Loss => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
}

/// One judged comparison. `confidence` and `score_difference` are stored for
/// reporting only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub a: String,
    pub b: String,
    pub winner: Winner,
    pub confidence: i64,
    pub score_difference: i64,
    pub reasoning: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionLabel {
    Accept,
    Reject,
}

/// Accept/reject labels over a rated paper set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub decisions: BTreeMap<String, DecisionLabel>,
}

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("judge verdict unusable: {0}")]
    MalformedVerdict(String),
    #[error("judge verdict field `{field}` out of range: {value}")]
    RangeViolation { field: &'static str, value: i64 },
    #[error("volatility update failed to converge within {VOLATILITY_MAX_ITER} iterations")]
    VolatilityNonConvergence,
    #[error("a tournament needs at least two papers")]
    TooFewPapers,
    #[error("paper {0} has no reviews attached")]
    MissingReviews(String),
    #[error("no ratings to threshold")]
    Empty,
    #[error("quantile {0} outside (0, 1)")]
    InvalidQuantile(f64),
    #[error("decision vectors cover different paper sets")]
    IdSetMismatch,
    #[error("{skipped} unusable verdicts exceed the skip budget of {allowed}")]
    SkipBudgetExceeded { skipped: usize, allowed: usize },
    #[error("consistency group `{0}` has no runs")]
    EmptyGroup(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Apply the published Glicko-2 update to one player given the listed
/// opponents (their pre-period states) and outcomes. An empty opponent list
/// leaves rating and volatility alone and inflates rd (capped at 350).
pub fn glicko_update(
    player: GlickoState,
    opponents: &[(GlickoState, Outcome)],
    tau: f64,
) -> Result<GlickoState, RankingError> {
    let mu = (player.rating - INITIAL_RATING) / GLICKO2_SCALE;
    let phi = player.rd / GLICKO2_SCALE;
    let sigma = player.volatility;

    if opponents.is_empty() {
        let phi_star = (phi * phi + sigma * sigma).sqrt();
        return Ok(GlickoState {
            rating: player.rating,
            rd: (phi_star * GLICKO2_SCALE).min(350.0),
            volatility: sigma,
        });
    }

    let g = |phi_j: f64| 1.0 / (1.0 + 3.0 * phi_j * phi_j / (std::f64::consts::PI.powi(2))).sqrt();
    let expect = |mu_j: f64, phi_j: f64| 1.0 / (1.0 + (-g(phi_j) * (mu - mu_j)).exp());

    let mut v_inv = 0.0;
    let mut delta_sum = 0.0;
    for (opp, outcome) in opponents {
        let mu_j = (opp.rating - INITIAL_RATING) / GLICKO2_SCALE;
        let phi_j = opp.rd / GLICKO2_SCALE;
        let gj = g(phi_j);
        let e = expect(mu_j, phi_j);
        v_inv += gj * gj * e * (1.0 - e);
        delta_sum += gj * (outcome.score() - e);
    }
    let v = 1.0 / v_inv;
    let delta = v * delta_sum;

    // Volatility update: find the zero of f on the log-variance axis with the
    // Illinois variant of regula falsi.
    let a = (sigma * sigma).ln();
    let f = |x: f64| {
        let ex = x.exp();
        let num = ex * (delta * delta - phi * phi - v - ex);
        let den = 2.0 * (phi * phi + v + ex).powi(2);
        num / den - (x - a) / (tau * tau)
    };
    let mut big_a = a;
    let mut big_b = if delta * delta > phi * phi + v {
        (delta * delta - phi * phi - v).ln()
    } else {
        let mut k = 1.0;
        let mut guard = 0;
        while f(a - k * tau) < 0.0 {
            k += 1.0;
            guard += 1;
            if guard > VOLATILITY_MAX_ITER {
                return Err(RankingError::VolatilityNonConvergence);
            }
        }
        a - k * tau
    };
    let mut f_a = f(big_a);
    let mut f_b = f(big_b);
    let mut iterations = 0;
    while (big_b - big_a).abs() > VOLATILITY_TOL {
        iterations += 1;
        if iterations > VOLATILITY_MAX_ITER {
            return Err(RankingError::VolatilityNonConvergence);
        }
        let big_c = big_a + (big_a - big_b) * f_a / (f_b - f_a);
        let f_c = f(big_c);
        if f_c * f_b <= 0.0 {
            big_a = big_b;
            f_a = f_b;
        } else {
            f_a /= 2.0;
        }
        big_b = big_c;
        f_b = f_c;
    }
    let sigma_prime = (big_a / 2.0).exp();

    let phi_star = (phi * phi + sigma_prime * sigma_prime).sqrt();
    let phi_prime = 1.0 / (1.0 / (phi_star * phi_star) + v_inv).sqrt();
    let mu_prime = mu + phi_prime * phi_prime * delta_sum;

    Ok(GlickoState {
        rating: INITIAL_RATING + GLICKO2_SCALE * mu_prime,
        rd: (phi_prime * GLICKO2_SCALE).min(350.0),
        volatility: sigma_prime,
    })
}

/// Parse a judge verdict: the fenced json block when present, otherwise the
/// JSON object following `DECISION:`. Trailing commas are tolerated; winner,
/// confidence, and score_difference are validated against their ranges.
pub fn parse_verdict(text: &str) -> Result<(Winner, i64, i64, String), RankingError> {
    let payload = match extract_fenced_block(text, "json") {
        Ok(block) => block,
        Err(_) => {
            let after = match text.find("DECISION:") {
                Some(pos) => &text[pos + "DECISION:".len()..],
                None => text,
            };
            let start = after
                .find('{')
                .ok_or_else(|| RankingError::MalformedVerdict("no JSON object found".into()))?;
            let end = after
                .rfind('}')
                .ok_or_else(|| RankingError::MalformedVerdict("unterminated JSON object".into()))?;
            if end < start {
                return Err(RankingError::MalformedVerdict("unterminated JSON object".into()));
            }
            after[start..=end].to_string()
        }
    };
    let cleaned = strip_trailing_commas(&payload);
    let value: serde_json::Value = serde_json::from_str(&cleaned)
        .map_err(|e| RankingError::MalformedVerdict(format!("invalid JSON: {e}")))?;
    let winner = match value.get("winner").and_then(|w| w.as_str()) {
        Some("A") => Winner::A,
        Some("B") => Winner::B,
        Some(other) => {
            return Err(RankingError::MalformedVerdict(format!("winner must be A or B, got {other:?}")))
        }
        None => return Err(RankingError::MalformedVerdict("missing winner".into())),
    };
    let int_field = |name: &'static str| -> Result<i64, RankingError> {
        value
            .get(name)
            .and_then(|v| v.as_i64())
            .ok_or_else(|| RankingError::MalformedVerdict(format!("missing integer {name}")))
    };
    let confidence = int_field("confidence")?;
    if !(1..=5).contains(&confidence) {
        return Err(RankingError::RangeViolation { field: "confidence", value: confidence });
    }
    let score_difference = int_field("score_difference")?;
    if !(1..=10).contains(&score_difference) {
        return Err(RankingError::RangeViolation {
            field: "score_difference",
            value: score_difference,
        });
    }
    let reasoning = value
        .get("reasoning")
        .and_then(|r| r.as_str())
        .unwrap_or_default()
        .to_string();
    Ok((winner, confidence, score_difference, reasoning))
}

/// Judge one pair with the comparison prompt (temperature 0) and validate the
/// verdict.
pub fn judge_pair(
    paper_a: &Paper,
    paper_b: &Paper,
    reviews_a: &str,
    reviews_b: &str,
    gateway: &Gateway,
) -> Result<MatchResult, RankingError> {
    let text_a = paper_a.full_text();
    let text_b = paper_b.full_text();
    let messages = judge_messages(
        JudgeSide { paper_id: &paper_a.id, text: &text_a, reviews: reviews_a },
        JudgeSide { paper_id: &paper_b.id, text: &text_b, reviews: reviews_b },
    );
    let request = gateway.request(messages, 0.0);
    let completion = gateway.complete(&request)?;
    let (winner, confidence, score_difference, reasoning) = parse_verdict(&completion.text)?;
    Ok(MatchResult {
        a: paper_a.id.clone(),
        b: paper_b.id.clone(),
        winner,
        confidence,
        score_difference,
        reasoning,
    })
}

/// Final states plus bookkeeping from one tournament.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TournamentResult {
    pub states: BTreeMap<String, GlickoState>,
    pub matches_played: BTreeMap<String, usize>,
    pub matches: Vec<MatchResult>,
    pub skipped: usize,
    pub stopped_early: bool,
}

impl TournamentResult {
    /// Ratings export: one record per paper, id-sorted.
    pub fn ratings_csv(&self) -> String {
        let mut out = String::from("paper_id,rating,rd,volatility,matches_played\n");
        for (id, state) in &self.states {
            let played = self.matches_played.get(id).copied().unwrap_or(0);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                id, state.rating, state.rd, state.volatility, played
            ));
        }
        out
    }
}

/// Run a judged tournament: sample unordered pairs uniformly (never the same
/// pair twice in a row, unless only one pair exists), judge each, and update
/// both players from their pre-match states. Stops at the match budget, or
/// earlier once every rating change in the sliding window is below
/// [`EARLY_STOP_DELTA`]. Unusable verdicts are skipped, up to 5% of the
/// budget.
pub fn run_tournament(
    papers: &[Paper],
    reviews: &BTreeMap<String, String>,
    budget: usize,
    gateway: &Gateway,
    seed: u64,
) -> Result<TournamentResult, RankingError> {
    if papers.len() < 2 {
        return Err(RankingError::TooFewPapers);
    }
    for paper in papers {
        if !reviews.contains_key(&paper.id) {
            return Err(RankingError::MissingReviews(paper.id.clone()));
        }
    }
    let n = papers.len();
    let mut states: BTreeMap<String, GlickoState> =
        papers.iter().map(|p| (p.id.clone(), GlickoState::default())).collect();
    let mut matches_played: BTreeMap<String, usize> =
        papers.iter().map(|p| (p.id.clone(), 0)).collect();
    let mut matches = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let allowed_skips = (SKIP_BUDGET_FRACTION * budget as f64).ceil() as usize;
    let mut skipped = 0usize;
    let mut stopped_early = false;
    let window = n;
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(window);
    let mut previous: Option<(usize, usize)> = None;

    let mut played = 0usize;
    while played < budget {
        let pair = loop {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let p = (i.min(j), i.max(j));
            if n == 2 || previous != Some(p) {
                break p;
            }
        };
        previous = Some(pair);
        let (pa, pb) = (&papers[pair.0], &papers[pair.1]);
        let result = match judge_pair(pa, pb, &reviews[&pa.id], &reviews[&pb.id], gateway) {
            Ok(result) => result,
            Err(RankingError::VolatilityNonConvergence) => unreachable!("judging does not rate"),
            Err(e) => {
                skipped += 1;
                if skipped > allowed_skips {
                    return Err(RankingError::SkipBudgetExceeded {
                        skipped,
                        allowed: allowed_skips,
                    });
                }
                // Record nothing; the match is not played.
                let _ = e;
                continue;
            }
        };
        let (outcome_a, outcome_b) = match result.winner {
            Winner::A => (Outcome::Win, Outcome::Loss),
            Winner::B => (Outcome::Loss, Outcome::Win),
        };
        let state_a = states[&pa.id];
        let state_b = states[&pb.id];
        let new_a = glicko_update(state_a, &[(state_b, outcome_a)], DEFAULT_TAU)?;
        let new_b = glicko_update(state_b, &[(state_a, outcome_b)], DEFAULT_TAU)?;
        let max_delta = (new_a.rating - state_a.rating)
            .abs()
            .max((new_b.rating - state_b.rating).abs());
        states.insert(pa.id.clone(), new_a);
        states.insert(pb.id.clone(), new_b);
        *matches_played.get_mut(&pa.id).unwrap() += 1;
        *matches_played.get_mut(&pb.id).unwrap() += 1;
        matches.push(result);
        played += 1;

        if recent.len() == window {
            recent.pop_front();
        }
        recent.push_back(max_delta);
        if recent.len() == window && recent.iter().all(|d| *d < EARLY_STOP_DELTA) {
            stopped_early = true;
            break;
        }
    }

    Ok(TournamentResult { states, matches_played, matches, skipped, stopped_early })
}

/// Accept the top ⌈quantile·n⌉ papers by rating (ties: higher rating first,
/// then lexicographically smaller id).
pub fn threshold_decisions(
    ratings: &BTreeMap<String, GlickoState>,
    quantile: f64,
) -> Result<DecisionVector, RankingError> {
    if ratings.is_empty() {
        return Err(RankingError::Empty);
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(RankingError::InvalidQuantile(quantile));
    }
    let n = ratings.len();
    let accept_count = (quantile * n as f64).ceil() as usize;
    let mut order: Vec<(&String, f64)> =
        ratings.iter().map(|(id, s)| (id, s.rating)).collect();
    order.sort_by(|(ida, ra), (idb, rb)| rb.total_cmp(ra).then_with(|| ida.cmp(idb)));
    let decisions = order
        .into_iter()
        .enumerate()
        .map(|(rank, (id, _))| {
            let label = if rank < accept_count { DecisionLabel::Accept } else { DecisionLabel::Reject };
            (id.clone(), label)
        })
        .collect();
    Ok(DecisionVector { decisions })
}

/// Fraction of papers on which two decision vectors disagree.
pub fn disagreement_rate(a: &DecisionVector, b: &DecisionVector) -> Result<f64, RankingError> {
    if a.decisions.len() != b.decisions.len()
        || !a.decisions.keys().eq(b.decisions.keys())
    {
        return Err(RankingError::IdSetMismatch);
    }
    let total = a.decisions.len();
    if total == 0 {
        return Ok(0.0);
    }
    let differing = a
        .decisions
        .iter()
        .filter(|(id, label)| b.decisions[*id] != **label)
        .count();
    Ok(differing as f64 / total as f64)
}

/// Pairwise disagreement between labeled runs. Off-diagonal entries compare
/// the first run of each label; a diagonal entry is the disagreement between
/// a label's first two runs (reruns) and is absent when no rerun exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyMatrix {
    pub labels: Vec<String>,
    pub dr: Vec<Vec<Option<f64>>>,
}

impl ConsistencyMatrix {
    pub fn build(groups: &[(String, Vec<DecisionVector>)]) -> Result<Self, RankingError> {
        for (label, runs) in groups {
            if runs.is_empty() {
                return Err(RankingError::EmptyGroup(label.clone()));
            }
        }
        let k = groups.len();
        let mut dr = vec![vec![None; k]; k];
        for i in 0..k {
            if groups[i].1.len() >= 2 {
                dr[i][i] = Some(disagreement_rate(&groups[i].1[0], &groups[i].1[1])?);
            }
            for j in (i + 1)..k {
                let value = disagreement_rate(&groups[i].1[0], &groups[j].1[0])?;
                dr[i][j] = Some(value);
                dr[j][i] = Some(value);
            }
        }
        Ok(ConsistencyMatrix { labels: groups.iter().map(|(l, _)| l.clone()).collect(), dr })
    }

    /// CSV with labels as header row and column; empty cells where no value
    /// is defined (a diagonal without a rerun pair).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("label,{}\n", self.labels.join(",")));
        for (i, label) in self.labels.iter().enumerate() {
            let cells: Vec<String> = self.dr[i]
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
                .collect();
            out.push_str(&format!("{},{}\n", label, cells.join(",")));
        }
        out
    }
}

/// Human-committee disagreement baselines quoted in reports, as percentages.
pub const HUMAN_DR_BASELINES: [(&str, f64); 2] =
    [("NeurIPS 2021 experiment", 23.0), ("NeurIPS 2014 experiment", 25.9)];
