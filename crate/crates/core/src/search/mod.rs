//! Monte-Carlo tree search over augmentation sequences.
//!
//! Each tree edge is one `(kind, magnitude, probability)` choice, so a path of
//! `sequence_length` edges is a full sequence. Iterations sample a path
//! (UCT descent, one expansion, random completion), score the sequence, and
//! back up the reward `clamp(1 - score / reward_baseline, 0, 1)`. Scores are
//! cached by sequence: a repeated sequence updates the tree without calling
//! the scorer again.

mod tree;

pub use tree::{reward, NodeInfo, SampledPath, SearchTree};

use crate::depth::{Dataset, Domain};
use crate::nnet::{score_sequence, TrainConfig, TrainError};
use crate::rng::Rng;
use crate::transforms::{AugmentationSequence, TransformKind, DEFAULT_SEQUENCE_LENGTH};
use std::collections::HashMap;
use std::sync::{Condvar, Mutex};

/// How the final sequence is picked from a finished tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestPath {
    /// Lowest cached score anywhere in the tree.
    #[default]
    ByScore,
    /// Most-visited descent, then the lowest cached score below it.
    ByVisits,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub sequence_length: usize,
    pub exploration_c: f64,
    /// Stop after this many consecutive fresh evaluations without a new best.
    pub plateau_patience: usize,
    /// Hard cap on iterations, cache hits included.
    pub max_iterations: usize,
    /// Score that maps to reward 0, normally the no-augmentation score.
    pub reward_baseline: f64,
    pub seed: u64,
    /// Kinds the tree may choose from.
    pub kinds: Vec<TransformKind>,
    /// Skip the duplicate magnitude of parameterless kinds.
    pub distinct_choices: bool,
    pub best_path: BestPath,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            sequence_length: DEFAULT_SEQUENCE_LENGTH,
            exploration_c: std::f64::consts::SQRT_2,
            plateau_patience: 50,
            max_iterations: 1000,
            reward_baseline: 1.0,
            seed: 0,
            kinds: TransformKind::ALL.to_vec(),
            distinct_choices: true,
            best_path: BestPath::ByScore,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::Config(m));
        if self.sequence_length == 0 || self.plateau_patience == 0 || self.max_iterations == 0 {
            return bad(
                "sequence_length, plateau_patience and max_iterations must be positive".into(),
            );
        }
        if !(self.reward_baseline > 0.0 && self.reward_baseline.is_finite()) {
            return bad(format!(
                "reward_baseline must be positive, got {}",
                self.reward_baseline
            ));
        }
        if !(self.exploration_c >= 0.0 && self.exploration_c.is_finite()) {
            return bad(format!(
                "exploration_c must be non-negative, got {}",
                self.exploration_c
            ));
        }
        let mut kinds = self.kinds.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.kinds.len() || kinds.is_empty() {
            return bad("kinds must be a non-empty list without repeats".into());
        }
        if !kinds.contains(&TransformKind::Identity) && kinds.len() < self.sequence_length {
            return bad(format!(
                "{} kinds without Identity cannot fill a sequence of length {}",
                kinds.len(),
                self.sequence_length
            ));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("path for {0} was not sampled from this tree or was already updated")]
    UnknownPath(String),
    #[error("no sequence has been evaluated")]
    EmptyCache,
    #[error("wrong dataset domain: {0}")]
    Domain(String),
    #[error("scoring {sequence} failed after {} evaluations: {source}", log.len())]
    Scorer {
        sequence: String,
        /// Evaluations completed before the failure.
        log: Vec<LogEntry>,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// Lower is better. Implementations must be deterministic for reproducible
/// single-worker searches.
pub trait Scorer: Sync {
    fn score(
        &self,
        seq: &AugmentationSequence,
    ) -> Result<f64, Box<dyn std::error::Error + Send + Sync>>;
}

impl<F> Scorer for F
where
    F: Fn(&AugmentationSequence) -> f64 + Sync,
{
    fn score(
        &self,
        seq: &AugmentationSequence,
    ) -> Result<f64, Box<dyn std::error::Error + Send + Sync>> {
        Ok(self(seq))
    }
}

/// Trains a fresh regressor per sequence and reports its median
/// shifted-domain error (meters).
pub struct RegressionScorer<'a> {
    pub sim: &'a Dataset,
    pub pseudo_real: &'a Dataset,
    pub train: TrainConfig,
}

impl Scorer for RegressionScorer<'_> {
    fn score(
        &self,
        seq: &AugmentationSequence,
    ) -> Result<f64, Box<dyn std::error::Error + Send + Sync>> {
        score_sequence(seq, self.sim, self.pseudo_real, &self.train)
            .map_err(|e: TrainError| e.into())
    }
}

/// One fresh evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    /// Tree iteration (1-based) that produced the evaluation.
    pub iteration: usize,
    pub sequence: AugmentationSequence,
    pub score: f64,
    pub best_so_far: f64,
}

/// CSV with header `iteration,sequence,score,best_so_far`.
pub fn log_csv(log: &[LogEntry]) -> String {
    let mut out = String::from("iteration,sequence,score,best_so_far\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.iteration, e.sequence, e.score, e.best_so_far
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Plateau,
    MaxIterations,
    /// Every legal sequence has been evaluated.
    Exhausted,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best_sequence: AugmentationSequence,
    pub best_score: f64,
    /// Fresh evaluations in completion order.
    pub log: Vec<LogEntry>,
    /// Iterations including cache hits.
    pub iterations: usize,
    pub stop: StopReason,
    pub tree: SearchTree,
}

struct State<'o> {
    tree: SearchTree,
    rng: Rng,
    iterations: usize,
    best: f64,
    stale: usize,
    stop: Option<StopReason>,
    log: Vec<LogEntry>,
    /// Sequences being scored, with paths waiting for the same score.
    in_flight: HashMap<AugmentationSequence, Vec<SampledPath>>,
    failure: Option<(String, Box<dyn std::error::Error + Send + Sync>)>,
    observer: &'o mut (dyn FnMut(&LogEntry) + Send),
}

impl State<'_> {
    fn check_stop(&mut self) {
        if self.stop.is_some() {
            return;
        }
        let cfg = self.tree.config();
        self.stop = if self.tree.is_exhausted() {
            Some(StopReason::Exhausted)
        } else if !self.log.is_empty() && self.stale >= cfg.plateau_patience {
            Some(StopReason::Plateau)
        } else if self.iterations >= cfg.max_iterations {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
    }

    fn record(&mut self, path: SampledPath, score: f64, iteration: usize) {
        let waiters = self.in_flight.remove(&path.sequence).unwrap_or_default();
        for p in std::iter::once(&path).chain(&waiters) {
            self.tree
                .update(p, score)
                .expect("paths come from this tree");
        }
        if score < self.best {
            self.best = score;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        let entry = LogEntry {
            iteration,
            sequence: path.sequence,
            score,
            best_so_far: self.best,
        };
        (self.observer)(&entry);
        self.log.push(entry);
        self.check_stop();
    }
}

/// Runs the search with `workers` concurrent scorers.
///
/// Tree updates happen under a lock in completion order, so results are
/// bit-reproducible only with one worker. `observer` sees every fresh
/// evaluation as it is recorded.
pub fn search(
    scorer: &dyn Scorer,
    cfg: &SearchConfig,
    workers: usize,
    observer: &mut (dyn FnMut(&LogEntry) + Send),
) -> Result<SearchResult, SearchError> {
    let state = Mutex::new(State {
        tree: SearchTree::new(cfg.clone())?,
        rng: Rng::new(cfg.seed),
        iterations: 0,
        best: f64::INFINITY,
        stale: 0,
        stop: None,
        log: Vec::new(),
        in_flight: HashMap::new(),
        failure: None,
        observer,
    });
    let wake = Condvar::new();
    std::thread::scope(|s| {
        for _ in 0..workers.max(1) {
            s.spawn(|| worker(scorer, &state, &wake));
        }
    });
    let st = state.into_inner().expect("worker panicked");
    if let Some((sequence, source)) = st.failure {
        return Err(SearchError::Scorer {
            sequence,
            log: st.log,
            source,
        });
    }
    let (best_sequence, best_score) = st.tree.select_best_path()?;
    Ok(SearchResult {
        best_sequence,
        best_score,
        log: st.log,
        iterations: st.iterations,
        stop: st.stop.unwrap_or(StopReason::MaxIterations),
        tree: st.tree,
    })
}

fn worker(scorer: &dyn Scorer, state: &Mutex<State<'_>>, wake: &Condvar) {
    let mut st = state.lock().unwrap();
    loop {
        st.check_stop();
        if st.stop.is_some() || st.failure.is_some() {
            break;
        }
        let State { tree, rng, .. } = &mut *st;
        let path = tree.sample_path(rng);
        st.iterations += 1;
        let iteration = st.iterations;
        if let Some(score) = st.tree.cached(&path.sequence) {
            st.tree
                .update(&path, score)
                .expect("path comes from this tree");
            continue;
        }
        if let Some(waiting) = st.in_flight.get_mut(&path.sequence) {
            // Another worker is scoring this sequence; its result will be
            // applied to this path too. Wait for progress before sampling
            // again so a converged tree does not spin.
            waiting.push(path);
            st = wake.wait(st).unwrap();
            continue;
        }
        st.in_flight.insert(path.sequence.clone(), Vec::new());
        drop(st);
        let outcome = scorer.score(&path.sequence);
        st = state.lock().unwrap();
        match outcome {
            Ok(score) => st.record(path, score, iteration),
            Err(e) => {
                st.in_flight.remove(&path.sequence);
                if st.failure.is_none() {
                    st.failure = Some((path.sequence.render(), e));
                }
            }
        }
        wake.notify_all();
    }
    drop(st);
    wake.notify_all();
}

/// [`search`] with the regression scorer on the given datasets.
pub fn run_search(
    sim: &Dataset,
    pseudo_real: &Dataset,
    cfg: &SearchConfig,
    train: &TrainConfig,
    workers: usize,
    observer: &mut (dyn FnMut(&LogEntry) + Send),
) -> Result<SearchResult, SearchError> {
    if sim.domain() != Domain::Sim || pseudo_real.domain() != Domain::PseudoReal {
        return Err(SearchError::Domain(format!(
            "expected sim and pseudoreal datasets, got {} and {}",
            sim.domain(),
            pseudo_real.domain()
        )));
    }
    train
        .validate()
        .map_err(|e| SearchError::Config(e.to_string()))?;
    let scorer = RegressionScorer {
        sim,
        pseudo_real,
        train: *train,
    };
    search(&scorer, cfg, workers, observer)
}
