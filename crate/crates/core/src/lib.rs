//! Core library for an automated paper-review pipeline: corpus handling, an
//! LLM gateway with a deterministic stub provider, rubric parsing and scoring,
//! negative-binomial citation regression, an agentic tree-search scaffold,
//! diff-based paper revision, and Glicko-2 pairwise ranking.

pub mod corpus;
pub mod discovery;
pub mod gateway;
pub mod nbreg;
pub mod prompts;
pub mod ranking;
pub mod revision;
pub mod rubric;
pub mod scaffold;
pub mod synth;
