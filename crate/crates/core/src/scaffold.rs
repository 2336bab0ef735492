//! Agentic tree-search scaffold.
//!
//! A search grows a tree of candidate artifacts: a handful of roots first,
//! then children proposed from parents chosen either to improve the current
//! best (exploit) or to debug a broken candidate. The whole run is
//! deterministic in `(config, seed)`: node ids follow creation order, the RNG
//! is a seeded ChaCha8 whose word position is journaled after every proposal,
//! and an interrupted run resumed from its journal behaves byte-for-byte like
//! an uninterrupted one.
//!
//! Journal layout under the run directory:
//! - `tree.json` — config echo, RNG position, and every node's bookkeeping;
//! - `nodes/<id>/artifact` — task-defined artifact bytes;
//! - `nodes/<id>/eval` — the node's evaluation record;
//! - `metrics.csv` — one row per proposal.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of root artifacts drafted before any child.
    pub n0: usize,
    /// Maximum children per node. Roots are counted by `n0`, not `n`.
    pub n: usize,
    /// Probability of picking a buggy node to debug instead of improving.
    pub p_debug: f64,
    /// Maximum consecutive debug-chain length.
    pub d_max: usize,
    /// Total proposal budget, roots included.
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { n0: 3, n: 3, p_debug: 0.5, d_max: 5, max_iterations: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Ok,
    Buggy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub parent: Option<String>,
    pub status: NodeStatus,
    /// Present exactly when the node is ok.
    pub metric: Option<f64>,
    /// Present exactly when the node is buggy.
    pub bug_report: Option<String>,
    /// Consecutive debug steps above this node (0 for roots and improve
    /// children).
    pub debug_depth: usize,
    pub children: Vec<String>,
}

/// Regression numbers a task may attach to an evaluation; they flow into
/// `metrics.csv` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub lambda: f64,
    pub val_mae: f64,
    pub test_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Evaluation {
    Ok { metric: f64, regression: Option<RegressionMetrics> },
    Buggy { report: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Improve,
    Debug,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub parent_id: String,
    pub mode: SelectionMode,
}

#[derive(Debug, Error)]
pub enum ScaffoldError<E: std::error::Error + 'static> {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("journal config mismatch on `{field}`: journal {journal}, requested {requested}")]
    ConfigMismatch { field: String, journal: String, requested: String },
    #[error("corrupt journal: {0}")]
    CorruptJournal(String),
    #[error("no eligible parent: every node is saturated or exhausted")]
    NoEligibleParent,
    #[error("search finished without a single valid node")]
    NoValidNode,
    #[error("task failure: {0}")]
    Task(#[source] E),
    #[error("journal I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// The search tree: nodes in creation order plus an id index.
#[derive(Debug, Clone, Default)]
pub struct Tree {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
}

impl Tree {
    pub fn new() -> Self {
        Tree::default()
    }

    /// Rebuild a tree from journaled nodes, checking structural coherence.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, String> {
        let mut tree = Tree::new();
        let declared_children: Vec<Vec<String>> =
            nodes.iter().map(|n| n.children.clone()).collect();
        for mut node in nodes {
            node.children.clear();
            tree.insert(node)?;
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            if node.children != declared_children[i] {
                return Err(format!("node {} child list disagrees with edges", node.id));
            }
        }
        Ok(tree)
    }

    fn insert(&mut self, node: Node) -> Result<(), String> {
        if self.index.contains_key(&node.id) {
            return Err(format!("duplicate node id {}", node.id));
        }
        match (&node.status, node.metric.is_some(), node.bug_report.is_some()) {
            (NodeStatus::Ok, true, false) | (NodeStatus::Buggy, false, true) => {}
            _ => return Err(format!("node {} status/metric/report mismatch", node.id)),
        }
        if let Some(parent) = &node.parent {
            let pi = *self
                .index
                .get(parent)
                .ok_or_else(|| format!("node {} references unknown parent {parent}", node.id))?;
            self.nodes[pi].children.push(node.id.clone());
        }
        self.index.insert(node.id.clone(), self.nodes.len());
        self.nodes.push(node);
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn get(&self, id: &str) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn roots(&self) -> usize {
        self.nodes.iter().filter(|n| n.parent.is_none()).count()
    }

    /// Best ok node: highest metric, ties to the earliest-created node.
    pub fn best(&self) -> Option<&Node> {
        self.nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Ok)
            .max_by(|a, b| {
                a.metric
                    .unwrap_or(f64::NEG_INFINITY)
                    .total_cmp(&b.metric.unwrap_or(f64::NEG_INFINITY))
                    // On metric ties, `max_by` keeps the earlier element when
                    // later ones compare as not-greater.
                    .then(std::cmp::Ordering::Greater)
            })
    }
}

/// Pick the next parent. Draws one uniform variate to choose the mode, then —
/// in debug mode — one more to pick uniformly among debuggable nodes. Improve
/// mode deterministically takes the best unsaturated ok node (next-best when
/// the best is saturated). Either mode falls through to the other when its
/// candidate set is empty.
pub fn select_parent<E: std::error::Error>(
    tree: &Tree,
    config: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Selection, ScaffoldError<E>> {
    let buggy: Vec<&Node> = tree
        .nodes
        .iter()
        .filter(|n| {
            n.status == NodeStatus::Buggy
                && n.debug_depth < config.d_max
                && n.children.len() < config.n
        })
        .collect();
    let improvable: Vec<&Node> = tree
        .nodes
        .iter()
        .filter(|n| n.status == NodeStatus::Ok && n.children.len() < config.n)
        .collect();
    let want_debug = rng.random::<f64>() < config.p_debug;
    let pick_debug = |rng: &mut ChaCha8Rng| -> Selection {
        let i = rng.random_range(0..buggy.len());
        Selection { parent_id: buggy[i].id.clone(), mode: SelectionMode::Debug }
    };
    let pick_improve = || -> Selection {
        // Highest metric wins; creation order (vector order) breaks ties.
        let best = improvable
            .iter()
            .max_by(|a, b| {
                a.metric
                    .unwrap_or(f64::NEG_INFINITY)
                    .total_cmp(&b.metric.unwrap_or(f64::NEG_INFINITY))
                    .then(std::cmp::Ordering::Greater)
            })
            .expect("caller checked non-empty");
        Selection { parent_id: best.id.clone(), mode: SelectionMode::Improve }
    };
    match (want_debug, buggy.is_empty(), improvable.is_empty()) {
        (true, false, _) => Ok(pick_debug(rng)),
        (true, true, false) => Ok(pick_improve()),
        (false, _, false) => Ok(pick_improve()),
        (false, false, true) => Ok(pick_debug(rng)),
        (_, true, true) => Err(ScaffoldError::NoEligibleParent),
    }
}

/// What a concrete search provides: drafting artifacts, evaluating them, and
/// (de)serializing them for the journal.
pub trait SearchTask {
    type Artifact;
    type Error: std::error::Error + 'static;

    /// Draft a fresh root artifact. `attempt` is the node id about to be
    /// assigned; tasks fold it into prompts so sibling drafts differ.
    fn propose_root(&mut self, attempt: &str) -> Result<Self::Artifact, Self::Error>;

    /// Draft a child of `parent`. In debug mode the parent is buggy and its
    /// bug report is the critique; in improve mode the parent is the current
    /// best and its metric is the critique.
    fn propose_child(
        &mut self,
        parent: &Node,
        parent_artifact: &Self::Artifact,
        mode: SelectionMode,
        attempt: &str,
    ) -> Result<Self::Artifact, Self::Error>;

    fn evaluate(&mut self, artifact: &Self::Artifact) -> Result<Evaluation, Self::Error>;

    fn write_artifact(&self, path: &Path, artifact: &Self::Artifact) -> std::io::Result<()>;
    fn read_artifact(&self, path: &Path) -> std::io::Result<Self::Artifact>;
}

#[derive(Serialize, Deserialize)]
struct Journal {
    config: SearchConfig,
    rng_word_pos: String,
    proposals: usize,
    stopped_early: bool,
    /// Id of the current best node, kept in step with `nodes`.
    best: Option<String>,
    nodes: Vec<Node>,
}

const METRICS_HEADER: &str = "iteration,node_id,status,metric,lambda,val_mae,test_mae\n";

/// Drives one tree search against a run directory.
pub struct SearchRunner<T: SearchTask> {
    config: SearchConfig,
    run_dir: PathBuf,
    task: T,
    tree: Tree,
    rng: ChaCha8Rng,
    proposals: usize,
    stopped_early: bool,
    artifacts: HashMap<String, T::Artifact>,
}

impl<T: SearchTask> SearchRunner<T> {
    /// Open a run directory: start fresh when no journal exists, otherwise
    /// resume — after verifying the journal was produced by this exact
    /// config — with identical future behavior to an uninterrupted run.
    pub fn create_or_resume(
        run_dir: impl AsRef<Path>,
        config: SearchConfig,
        task: T,
    ) -> Result<Self, ScaffoldError<T::Error>> {
        validate_config(&config)?;
        let run_dir = run_dir.as_ref().to_path_buf();
        fs::create_dir_all(run_dir.join("nodes"))?;
        let journal_path = run_dir.join("tree.json");
        if journal_path.exists() {
            let bytes = fs::read(&journal_path)?;
            let journal: Journal = serde_json::from_slice(&bytes)
                .map_err(|e| ScaffoldError::CorruptJournal(e.to_string()))?;
            check_config(&journal.config, &config)?;
            if journal.proposals != journal.nodes.len() {
                return Err(ScaffoldError::CorruptJournal(format!(
                    "journal claims {} proposals but records {} nodes",
                    journal.proposals,
                    journal.nodes.len()
                )));
            }
            let word_pos: u128 = journal
                .rng_word_pos
                .parse()
                .map_err(|_| ScaffoldError::CorruptJournal("bad rng_word_pos".into()))?;
            let tree = Tree::from_nodes(journal.nodes).map_err(ScaffoldError::CorruptJournal)?;
            let mut artifacts = HashMap::new();
            for node in tree.nodes() {
                let path = run_dir.join("nodes").join(&node.id).join("artifact");
                let artifact = task.read_artifact(&path).map_err(|e| {
                    ScaffoldError::CorruptJournal(format!("artifact {} unreadable: {e}", node.id))
                })?;
                artifacts.insert(node.id.clone(), artifact);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_word_pos(word_pos);
            Ok(SearchRunner {
                config,
                run_dir,
                task,
                tree,
                rng,
                proposals: journal.proposals,
                stopped_early: journal.stopped_early,
                artifacts,
            })
        } else {
            let runner = SearchRunner {
                rng: ChaCha8Rng::seed_from_u64(config.seed),
                config,
                run_dir,
                task,
                tree: Tree::new(),
                proposals: 0,
                stopped_early: false,
                artifacts: HashMap::new(),
            };
            fs::write(runner.run_dir.join("metrics.csv"), METRICS_HEADER)?;
            runner.write_journal()?;
            Ok(runner)
        }
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn proposals(&self) -> usize {
        self.proposals
    }

    /// True once the search halted before its budget because no parent was
    /// eligible for expansion.
    pub fn stopped_early(&self) -> bool {
        self.stopped_early
    }

    pub fn artifact(&self, id: &str) -> Option<&T::Artifact> {
        self.artifacts.get(id)
    }

    pub fn best(&self) -> Option<&Node> {
        self.tree.best()
    }

    pub fn task(&self) -> &T {
        &self.task
    }

    /// Run until the proposal budget is exhausted (or no parent is eligible),
    /// then return the best node. Already-complete runs return immediately
    /// without touching any journal bytes.
    pub fn run(&mut self) -> Result<Node, ScaffoldError<T::Error>> {
        self.step_many(usize::MAX)?;
        self.tree.best().cloned().ok_or(ScaffoldError::NoValidNode)
    }

    /// Perform at most `limit` proposals; returns how many actually ran.
    /// Useful for checkpointed execution — resuming afterwards is exactly
    /// equivalent to having kept going.
    pub fn step_many(&mut self, limit: usize) -> Result<usize, ScaffoldError<T::Error>> {
        let mut done = 0;
        while done < limit && self.proposals < self.config.max_iterations && !self.stopped_early {
            // Selection must precede id assignment only in its RNG use; all
            // draws happen before any file is written, so a failed proposal
            // replays identically on resume.
            let selection = if self.tree.roots() < self.config.n0 {
                None
            } else {
                match select_parent(&self.tree, &self.config, &mut self.rng) {
                    Ok(sel) => Some(sel),
                    Err(ScaffoldError::NoEligibleParent) => {
                        self.stopped_early = true;
                        self.write_journal()?;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            };
            let id = format!("n{:04}", self.proposals + 1);
            let (artifact, parent_id, debug_depth) = match &selection {
                None => (self.task.propose_root(&id).map_err(ScaffoldError::Task)?, None, 0),
                Some(sel) => {
                    let parent = self
                        .tree
                        .get(&sel.parent_id)
                        .expect("selection returns live ids")
                        .clone();
                    let parent_artifact = self
                        .artifacts
                        .get(&sel.parent_id)
                        .expect("artifacts track nodes");
                    let depth = match sel.mode {
                        SelectionMode::Debug => parent.debug_depth + 1,
                        SelectionMode::Improve => 0,
                    };
                    let artifact = self
                        .task
                        .propose_child(&parent, parent_artifact, sel.mode, &id)
                        .map_err(ScaffoldError::Task)?;
                    (artifact, Some(sel.parent_id.clone()), depth)
                }
            };
            let evaluation = self.task.evaluate(&artifact).map_err(ScaffoldError::Task)?;
            let (status, metric, bug_report, regression) = match &evaluation {
                Evaluation::Ok { metric, regression } => {
                    (NodeStatus::Ok, Some(*metric), None, regression.clone())
                }
                Evaluation::Buggy { report } => (NodeStatus::Buggy, None, Some(report.clone()), None),
            };
            let node = Node {
                id: id.clone(),
                parent: parent_id,
                status,
                metric,
                bug_report,
                debug_depth,
                children: Vec::new(),
            };

            let node_dir = self.run_dir.join("nodes").join(&id);
            fs::create_dir_all(&node_dir)?;
            self.task.write_artifact(&node_dir.join("artifact"), &artifact)?;
            fs::write(
                node_dir.join("eval"),
                serde_json::to_vec_pretty(&evaluation).expect("eval record serializes"),
            )?;

            self.tree.insert(node).map_err(ScaffoldError::CorruptJournal)?;
            self.artifacts.insert(id.clone(), artifact);
            self.proposals += 1;
            self.append_metrics_row(&id, metric, &regression)?;
            self.write_journal()?;
            done += 1;
        }
        Ok(done)
    }

    fn append_metrics_row(
        &self,
        id: &str,
        metric: Option<f64>,
        regression: &Option<RegressionMetrics>,
    ) -> std::io::Result<()> {
        let status = if metric.is_some() { "ok" } else { "buggy" };
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let row = format!(
            "{},{},{},{},{},{},{}\n",
            self.proposals,
            id,
            status,
            fmt(metric),
            fmt(regression.as_ref().map(|r| r.lambda)),
            fmt(regression.as_ref().map(|r| r.val_mae)),
            fmt(regression.as_ref().and_then(|r| r.test_mae)),
        );
        let mut file = fs::OpenOptions::new()
            .append(true)
            .open(self.run_dir.join("metrics.csv"))?;
        file.write_all(row.as_bytes())
    }

    fn write_journal(&self) -> std::io::Result<()> {
        let journal = Journal {
            config: self.config.clone(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
            proposals: self.proposals,
            stopped_early: self.stopped_early,
            best: self.tree.best().map(|n| n.id.clone()),
            nodes: self.tree.nodes().to_vec(),
        };
        let bytes = serde_json::to_vec_pretty(&journal).expect("journal serializes");
        let tmp = self.run_dir.join("tree.json.tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, self.run_dir.join("tree.json"))
    }
}

fn validate_config<E: std::error::Error>(config: &SearchConfig) -> Result<(), ScaffoldError<E>> {
    if config.n0 == 0 {
        return Err(ScaffoldError::InvalidConfig("n0 must be at least 1".into()));
    }
    if config.n == 0 {
        return Err(ScaffoldError::InvalidConfig("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.p_debug) {
        return Err(ScaffoldError::InvalidConfig("p_debug must lie in [0, 1]".into()));
    }
    Ok(())
}

fn check_config<E: std::error::Error>(
    journal: &SearchConfig,
    requested: &SearchConfig,
) -> Result<(), ScaffoldError<E>> {
    macro_rules! field {
        ($name:ident) => {
            if journal.$name != requested.$name {
                return Err(ScaffoldError::ConfigMismatch {
                    field: stringify!($name).into(),
                    journal: journal.$name.to_string(),
                    requested: requested.$name.to_string(),
                });
            }
        };
    }
    field!(n0);
    field!(n);
    field!(p_debug);
    field!(d_max);
    field!(max_iterations);
    field!(seed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    /// Deterministic toy task: artifacts are numbers derived from the attempt
    /// id; children perturb their parent. Some drafts are "buggy".
    struct ToyTask;

    fn attempt_value(attempt: &str, salt: &str) -> f64 {
        let digest = Sha256::digest(format!("{salt}:{attempt}").as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(b) as f64 / u64::MAX as f64) * 10.0
    }

    #[derive(Debug, thiserror::Error)]
    #[error("toy failure")]
    struct ToyError;

    impl SearchTask for ToyTask {
        type Artifact = f64;
        type Error = ToyError;

        fn propose_root(&mut self, attempt: &str) -> Result<f64, ToyError> {
            Ok(attempt_value(attempt, "root"))
        }

        fn propose_child(
            &mut self,
            _parent: &Node,
            parent_artifact: &f64,
            mode: SelectionMode,
            attempt: &str,
        ) -> Result<f64, ToyError> {
            let delta = attempt_value(attempt, "delta") / 10.0;
            Ok(match mode {
                SelectionMode::Improve => parent_artifact + delta,
                SelectionMode::Debug => attempt_value(attempt, "debugged"),
            })
        }

        fn evaluate(&mut self, artifact: &f64) -> Result<Evaluation, ToyError> {
            // A third of the value space is "buggy".
            if artifact.fract() < 0.33 {
                Ok(Evaluation::Buggy { report: format!("fraction too low: {artifact:.3}") })
            } else {
                Ok(Evaluation::Ok { metric: *artifact, regression: None })
            }
        }

        fn write_artifact(&self, path: &Path, artifact: &f64) -> std::io::Result<()> {
            fs::write(path, format!("{artifact}"))
        }

        fn read_artifact(&self, path: &Path) -> std::io::Result<f64> {
            let text = fs::read_to_string(path)?;
            text.trim()
                .parse()
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{e}")))
        }
    }

    fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let entry = entry.unwrap();
                let path = entry.path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    files.push((rel, fs::read(&path).unwrap()));
                }
            }
        }
        files.sort();
        files
    }

    fn run_config(iters: usize) -> SearchConfig {
        SearchConfig { max_iterations: iters, seed: 42, ..SearchConfig::default() }
    }

    #[test]
    fn roots_come_first_and_budget_counts_them() {
        let dir = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(dir.path(), run_config(2), ToyTask).unwrap();
        let _ = runner.run();
        assert_eq!(runner.tree().len(), 2);
        assert!(runner.tree().nodes().iter().all(|n| n.parent.is_none()), "budget < n0 means roots only");

        let dir2 = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(dir2.path(), run_config(30), ToyTask).unwrap();
        runner.run().unwrap();
        let nodes = runner.tree().nodes();
        assert_eq!(nodes.len(), 30);
        assert!(nodes[..3].iter().all(|n| n.parent.is_none()), "first n0 proposals are roots");
        assert_eq!(nodes.iter().filter(|n| n.parent.is_none()).count(), 3);
    }

    #[test]
    fn structural_invariants_hold_throughout() {
        let dir = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(dir.path(), run_config(80), ToyTask).unwrap();
        runner.run().unwrap();
        let tree = runner.tree();
        for node in tree.nodes() {
            assert!(node.children.len() <= 3, "node {} has too many children", node.id);
            assert!(node.debug_depth <= 5);
            if let Some(parent) = &node.parent {
                let p = tree.get(parent).unwrap();
                assert!(p.children.contains(&node.id));
                if node.debug_depth > 0 {
                    assert_eq!(node.debug_depth, p.debug_depth + 1, "debug chains increment");
                    assert_eq!(p.status, NodeStatus::Buggy);
                }
            }
        }
        // Node ids are creation-ordered.
        for (i, node) in tree.nodes().iter().enumerate() {
            assert_eq!(node.id, format!("n{:04}", i + 1));
        }
    }

    #[test]
    fn journals_are_byte_identical_across_runs_and_resumes() {
        let full = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(full.path(), run_config(60), ToyTask).unwrap();
        runner.run().unwrap();
        let reference = snapshot(full.path());

        // Same config, fresh directory.
        let again = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(again.path(), run_config(60), ToyTask).unwrap();
        runner.run().unwrap();
        assert_eq!(snapshot(again.path()), reference, "two runs must match byte for byte");

        // Interrupt after 17 proposals, then resume to completion.
        let resumed = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(resumed.path(), run_config(60), ToyTask).unwrap();
        assert_eq!(runner.step_many(17).unwrap(), 17);
        drop(runner);
        let mut runner = SearchRunner::create_or_resume(resumed.path(), run_config(60), ToyTask).unwrap();
        runner.run().unwrap();
        assert_eq!(snapshot(resumed.path()), reference, "resume must not perturb the run");

        // Re-running a completed directory changes nothing.
        let before = snapshot(resumed.path());
        let mut runner = SearchRunner::create_or_resume(resumed.path(), run_config(60), ToyTask).unwrap();
        runner.run().unwrap();
        assert_eq!(snapshot(resumed.path()), before);
    }

    #[test]
    fn resume_rejects_changed_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(dir.path(), run_config(10), ToyTask).unwrap();
        runner.run().unwrap();
        let mut other = run_config(10);
        other.seed = 43;
        match SearchRunner::create_or_resume(dir.path(), other, ToyTask) {
            Err(ScaffoldError::ConfigMismatch { field, .. }) => assert_eq!(field, "seed"),
            other => panic!("expected ConfigMismatch, got {:?}", other.err()),
        }
    }

    #[test]
    fn best_so_far_is_monotone_in_creation_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(dir.path(), run_config(80), ToyTask).unwrap();
        runner.run().unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut bests = Vec::new();
        for node in runner.tree().nodes() {
            if let Some(m) = node.metric {
                best = best.max(m);
            }
            bests.push(best);
        }
        for w in bests.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(runner.best().unwrap().metric, Some(best));
    }

    #[test]
    fn debug_selection_fraction_approaches_p_debug() {
        // A tree with both kinds of eligible parents available.
        let mut nodes = Vec::new();
        for i in 0..5 {
            nodes.push(Node {
                id: format!("n{:04}", i + 1),
                parent: None,
                status: NodeStatus::Ok,
                metric: Some(i as f64),
                bug_report: None,
                debug_depth: 0,
                children: Vec::new(),
            });
        }
        for i in 5..10 {
            nodes.push(Node {
                id: format!("n{:04}", i + 1),
                parent: None,
                status: NodeStatus::Buggy,
                metric: None,
                bug_report: Some("broken".into()),
                debug_depth: 0,
                children: Vec::new(),
            });
        }
        let tree = Tree::from_nodes(nodes).unwrap();
        let config = SearchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut debug_picks = 0usize;
        let trials = 10_000;
        for _ in 0..trials {
            let sel = select_parent::<ToyError>(&tree, &config, &mut rng).unwrap();
            if sel.mode == SelectionMode::Debug {
                debug_picks += 1;
            }
        }
        let fraction = debug_picks as f64 / trials as f64;
        assert!(
            (fraction - config.p_debug).abs() < 0.03,
            "debug fraction {fraction} should approximate {}",
            config.p_debug
        );
    }

    #[test]
    fn improve_mode_takes_best_then_next_best_when_saturated() {
        let mk = |id: &str, metric: f64, children: Vec<String>| Node {
            id: id.into(),
            parent: None,
            status: NodeStatus::Ok,
            metric: Some(metric),
            bug_report: None,
            debug_depth: 0,
            children,
        };
        // Best node saturated with n=3 children (children listed as ids of
        // later nodes to keep the structure valid).
        let nodes = vec![
            mk("n0001", 9.0, vec!["n0003".into(), "n0004".into(), "n0005".into()]),
            mk("n0002", 5.0, Vec::new()),
            Node { parent: Some("n0001".into()), ..mk("n0003", 1.0, Vec::new()) },
            Node { parent: Some("n0001".into()), ..mk("n0004", 2.0, Vec::new()) },
            Node { parent: Some("n0001".into()), ..mk("n0005", 3.0, Vec::new()) },
        ];
        let tree = Tree::from_nodes(nodes).unwrap();
        let config = SearchConfig { p_debug: 0.0, ..SearchConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sel = select_parent::<ToyError>(&tree, &config, &mut rng).unwrap();
        assert_eq!(sel.mode, SelectionMode::Improve);
        assert_eq!(sel.parent_id, "n0002", "saturated best yields to next-best");
    }

    #[test]
    fn no_eligible_parent_when_everything_is_saturated() {
        let nodes = vec![Node {
            id: "n0001".into(),
            parent: None,
            status: NodeStatus::Buggy,
            metric: None,
            bug_report: Some("broken".into()),
            debug_depth: 5, // at d_max: not debuggable
            children: Vec::new(),
        }];
        let tree = Tree::from_nodes(nodes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            select_parent::<ToyError>(&tree, &SearchConfig::default(), &mut rng),
            Err(ScaffoldError::NoEligibleParent)
        ));
    }

    #[test]
    fn metrics_csv_has_one_row_per_proposal() {
        let dir = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(dir.path(), run_config(25), ToyTask).unwrap();
        runner.run().unwrap();
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,node_id,status,metric,lambda,val_mae,test_mae");
        assert_eq!(lines.len(), 26);
        assert!(lines[1].starts_with("1,n0001,"));
        assert!(lines[25].starts_with("25,n0025,"));
    }

    #[test]
    fn corrupt_journal_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut runner = SearchRunner::create_or_resume(dir.path(), run_config(10), ToyTask).unwrap();
        runner.run().unwrap();
        fs::write(dir.path().join("tree.json"), b"{ not json").unwrap();
        assert!(matches!(
            SearchRunner::create_or_resume(dir.path(), run_config(10), ToyTask),
            Err(ScaffoldError::CorruptJournal(_))
        ));
    }
}
