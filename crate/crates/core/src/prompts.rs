//! Prompt templates for the four LLM roles (reviewer, rubric proposer, paper
//! rewriter, pairwise judge) and their renderers.
//!
//! Templates are fixed strings with `{placeholder}` slots. Renderers build the
//! message lists; callers choose the sampling temperature (0 for reviewer and
//! judge, the configured creative temperature for proposer and rewriter).

use std::collections::BTreeMap;

use crate::gateway::{render_template, Message};

/// Per-item review prompt. Placeholders: `{rubric_item}` (twice), `{Rubric
/// item description}`, `{Score N guideline}`. Used as the system message; the
/// paper under review is the user message.
pub const REVIEWER_TEMPLATE: &str = r#"You are reviewing a paper for a top-tier, highly selective academic conference.
Please evaluate the following paper according to these criteria with their scoring guidelines:

**{rubric_item}**: {Rubric item description}.
  Score 0: {Score 0 guideline}
  Score 5: {Score 5 guideline}
  Score 10: {Score 10 guideline}

Given the highly selective nature of this top conference,
please apply rigorous standards in your evaluation.
Only exceptional work should receive scores of 8-10,
while work with significant flaws should receive lower scores.

Please provide your response in the following JSON format
wrapped in ```json ``` tags:
```json
{
  "{rubric_item}": {"score": <0-10>, "feedback": "<detailed feedback>"},
}
```"#;

/// Rubric proposal prompt, used as the system message. The user message
/// carries the refinement context (parent rubric and critique) and the
/// attempt identifier.
pub const PROPOSER_TEMPLATE: &str = r#"You are an expert in research evaluation.
Your task is to propose a set of evaluation rubrics designed
to predict the future citation count of a research paper.

Your output must be two Python dictionaries:
`EVALUATION_RUBRIC` and `SCORING_GUIDELINES`.

1.  `EVALUATION_RUBRIC`: Keys should be short, snake_case strings
(e.g., `novelty`), and values should be a clear question defining the criterion.

2.  `SCORING_GUIDELINES`: Keys must match those in `EVALUATION_RUBRIC`.
Values should be a nested dictionary using a 0-5-10 scoring scale
(0=poor, 5=average, 10=exceptional) with a brief, clear description for each score.

The rubrics should focus on factors that make a paper influential and highly cited.

Example Format:
```python
EVALUATION_RUBRIC = {
    "clarity": "Is the paper's writing and structure exceptionally clear?",
}

SCORING_GUIDELINES = {
    "clarity": {
        0: "The paper is confusing or unintelligible.",
        5: "The paper is understandable but lacks precision.",
        10: "The paper is exceptionally clear and unambiguous."
    },
}
Please generate the complete EVALUATION_RUBRIC and SCORING_GUIDELINES dictionaries."#;

/// Revision prompt. Placeholders: `{EVALUATION_RUBRIC}`, `{SCORING_GUIDELINES}`,
/// `{Paper text}`. The edit-block output contract and the reviewer feedback
/// context are appended by [`revision_messages`], since revisions are applied
/// as search/replace edits rather than free-form rewrites.
pub const REVISION_TEMPLATE: &str = r#"You are an expert academic editor.
Your goal is to rewrite the paper provided below to achieve a higher score based on
the given evaluation rubrics.

**Instructions:**
1.  Work section-by-section (e.g., Abstract, Introduction, etc.).
2.  For each section, first briefly list the key weaknesses you are fixing by referencing
the `rubric_item_key`.
3.  Then, provide the improved, rewritten version of that section.
4.  Focus only on improving the writing, framing, and structure.
**Do not change the core data, findings, or results.**

---
### **Context: Evaluation Rubrics**
{EVALUATION_RUBRIC}
{SCORING_GUIDELINES}

---
### **Context: Original Paper**
{Paper text}

---"#;

/// Output-format contract appended to the revision prompt: edits are proposed
/// as exact-match search/replace blocks so they can be applied and audited.
pub const REVISION_OUTPUT_CONTRACT: &str = r#"### **Context: Reviewer Feedback**
{feedback}

---
### **Output Format**
Propose your changes as one or more edit blocks, exactly in this form:

<<<<<<< SEARCH
<text copied verbatim from the paper>
=======
<replacement text>
>>>>>>> REPLACE

Each SEARCH text must match exactly one location in the paper. Only edit prose:
never touch tables, headings, or anything outside the paper's section bodies.
Output nothing after the final edit block.

Attempt: {attempt}"#;

/// Pairwise comparison prompt for the judge. Placeholders:
/// `{review_instruction_form}`, `{paper_a_id}`, `{paper_a_text}`,
/// `{paper_a_reviews}`, and the `_b_` counterparts.
pub const JUDGE_TEMPLATE: &str = r#"You are an expert reviewer comparing two research papers. You have access to the full text of both papers and their detailed reviews.
The reviews are generated by the following system prompt:
{review_instruction_form}

Below are the reviews of the two papers:

Paper A:
Title: {paper_a_id}
Text: {paper_a_text}
Reviews: {paper_a_reviews}

Paper B:
Title: {paper_b_id}
Text: {paper_b_text}
Reviews: {paper_b_reviews}

Based on the papers and their reviews, which paper is better overall? Consider all aspects including:
- Technical soundness and correctness
- Novelty and originality
- Significance and impact
- Clarity of presentation
- Quality of experiments and evaluation
- Overall contribution to the field

Respond in the following format:

THOUGHT:
<Your reasoning for the comparison>

DECISION:
```json
{
    "confidence": 1-5 (1=very uncertain, 5=very confident),
    "reasoning": "Brief explanation of why one paper is better",
    "score_difference": 1-10 (how much better the winner is, 1=slightly better, 10=much better)
    "winner": "A" or "B",
}
```"#;

/// Render the per-item reviewer system message.
pub fn reviewer_system(key: &str, question: &str, g0: &str, g5: &str, g10: &str) -> String {
    let mut vars = BTreeMap::new();
    vars.insert("rubric_item", key.to_string());
    vars.insert("Rubric item description", question.to_string());
    vars.insert("Score 0 guideline", g0.to_string());
    vars.insert("Score 5 guideline", g5.to_string());
    vars.insert("Score 10 guideline", g10.to_string());
    render_template(REVIEWER_TEMPLATE, &vars)
}

/// Render the reviewer user message carrying the paper under review.
pub fn reviewer_user(paper_id: &str, title: &str, full_text: &str) -> String {
    format!("Paper ID: {paper_id}\nTitle: {title}\n\n{full_text}")
}

/// Build the message list for one per-item review call.
pub fn reviewer_messages(
    key: &str,
    question: &str,
    g0: &str,
    g5: &str,
    g10: &str,
    paper_id: &str,
    title: &str,
    full_text: &str,
) -> Vec<Message> {
    vec![
        Message::system(reviewer_system(key, question, g0, g5, g10)),
        Message::user(reviewer_user(paper_id, title, full_text)),
    ]
}

/// Refinement context for a non-root rubric proposal.
pub struct RefineContext<'a> {
    /// The parent rubric, rendered in the two-dictionary form.
    pub current_rubric: &'a str,
    /// Why the parent should be improved (metric summary or bug report).
    pub critique: &'a str,
}

/// Build the message list for a rubric proposal. `attempt` is a deterministic
/// identifier (e.g. the node id) that makes sibling proposals distinct while
/// keeping replays byte-identical.
pub fn proposer_messages(attempt: &str, refine: Option<RefineContext<'_>>) -> Vec<Message> {
    let user = match refine {
        None => format!("Propose a fresh rubric.\n\nAttempt: {attempt}"),
        Some(ctx) => format!(
            "### Current best rubric (to refine)\n{}\n\n### Critique\n{}\n\nAttempt: {attempt}",
            ctx.current_rubric, ctx.critique
        ),
    };
    vec![Message::system(PROPOSER_TEMPLATE.to_string()), Message::user(user)]
}

/// Build the single-message revision prompt: template, rubric, current draft,
/// reviewer feedback, edit-block contract, and the attempt identifier.
pub fn revision_messages(
    rubric_dicts: &str,
    guidelines_dicts: &str,
    draft_text: &str,
    feedback: &str,
    attempt: &str,
) -> Vec<Message> {
    let mut vars = BTreeMap::new();
    vars.insert("EVALUATION_RUBRIC", rubric_dicts.to_string());
    vars.insert("SCORING_GUIDELINES", guidelines_dicts.to_string());
    vars.insert("Paper text", draft_text.to_string());
    let head = render_template(REVISION_TEMPLATE, &vars);
    let mut tail_vars = BTreeMap::new();
    tail_vars.insert("feedback", feedback.to_string());
    tail_vars.insert("attempt", attempt.to_string());
    let tail = render_template(REVISION_OUTPUT_CONTRACT, &tail_vars);
    vec![Message::user(format!("{head}\n{tail}"))]
}

/// One side of a pairwise comparison.
pub struct JudgeSide<'a> {
    pub paper_id: &'a str,
    pub text: &'a str,
    pub reviews: &'a str,
}

/// Build the single-message judge prompt comparing paper A against paper B.
pub fn judge_messages(a: JudgeSide<'_>, b: JudgeSide<'_>) -> Vec<Message> {
    let mut vars = BTreeMap::new();
    vars.insert("review_instruction_form", REVIEWER_TEMPLATE.to_string());
    vars.insert("paper_a_id", a.paper_id.to_string());
    vars.insert("paper_a_text", a.text.to_string());
    vars.insert("paper_a_reviews", a.reviews.to_string());
    vars.insert("paper_b_id", b.paper_id.to_string());
    vars.insert("paper_b_text", b.text.to_string());
    vars.insert("paper_b_reviews", b.reviews.to_string());
    vec![Message::user(render_template(JUDGE_TEMPLATE, &vars))]
}
