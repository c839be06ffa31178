use super::{BestPath, SearchConfig, SearchError};
use crate::rng::Rng;
use crate::transforms::{enumerate_over, used_kinds, AugmentationSequence, TransformSpec};
use std::collections::HashMap;

#[derive(Clone, Debug)]
struct Node {
    spec: Option<TransformSpec>,
    parent: Option<usize>,
    depth: usize,
    /// Legal edges, computed the first time the node is descended from.
    choices: Vec<TransformSpec>,
    /// Child node per entry of `choices`.
    children: Vec<Option<usize>>,
    visits: u64,
    pending: u64,
    total_reward: f64,
    complete: bool,
}

impl Node {
    fn effective_visits(&self) -> u64 {
        self.visits + self.pending
    }
}

/// Read-only snapshot of one tree node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeInfo {
    /// Edge leading into the node; `None` for the root.
    pub spec: Option<TransformSpec>,
    pub parent: Option<usize>,
    pub depth: usize,
    pub children: Vec<usize>,
    pub visits: u64,
    /// Virtual visits of sampled paths still awaiting a score.
    pub pending: u64,
    pub total_reward: f64,
}

impl NodeInfo {
    /// Mean reward; zero before the first visit.
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total_reward / self.visits as f64
        }
    }
}

/// A sequence drawn by [`SearchTree::sample_path`], with the tree nodes it
/// passed through (root first). Pass it back to [`SearchTree::update`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPath {
    pub sequence: AugmentationSequence,
    nodes: Vec<usize>,
}

impl SampledPath {
    /// Number of tree nodes on the path, root included.
    pub fn tree_depth(&self) -> usize {
        self.nodes.len()
    }
}

/// UCT tree over augmentation sequences plus the cache of every score seen.
#[derive(Clone, Debug)]
pub struct SearchTree {
    cfg: SearchConfig,
    nodes: Vec<Node>,
    cache: HashMap<AugmentationSequence, f64>,
}

/// `clamp(1 - score / baseline, 0, 1)`; non-finite scores earn nothing.
pub fn reward(score: f64, baseline: f64) -> f64 {
    if score.is_finite() {
        (1.0 - score / baseline).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl SearchTree {
    pub fn new(cfg: SearchConfig) -> Result<Self, SearchError> {
        cfg.validate()?;
        let root = Node {
            spec: None,
            parent: None,
            depth: 0,
            choices: Vec::new(),
            children: Vec::new(),
            visits: 0,
            pending: 0,
            total_reward: 0.0,
            complete: false,
        };
        Ok(Self {
            cfg,
            nodes: vec![root],
            cache: HashMap::new(),
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> NodeInfo {
        let n = &self.nodes[id];
        NodeInfo {
            spec: n.spec,
            parent: n.parent,
            depth: n.depth,
            children: n.children.iter().flatten().copied().collect(),
            visits: n.visits,
            pending: n.pending,
            total_reward: n.total_reward,
        }
    }

    /// Edges from the root down to `id`.
    pub fn prefix(&self, id: usize) -> Vec<TransformSpec> {
        let mut out = Vec::with_capacity(self.nodes[id].depth);
        let mut at = Some(id);
        while let Some(i) = at {
            out.extend(self.nodes[i].spec);
            at = self.nodes[i].parent;
        }
        out.reverse();
        out
    }

    pub fn cache(&self) -> &HashMap<AugmentationSequence, f64> {
        &self.cache
    }

    pub fn cached(&self, seq: &AugmentationSequence) -> Option<f64> {
        self.cache.get(seq).copied()
    }

    /// True once every legal sequence is a fully visited tree leaf.
    pub fn is_exhausted(&self) -> bool {
        self.nodes[0].complete
    }

    fn legal(&self, specs: &[TransformSpec]) -> Vec<TransformSpec> {
        enumerate_over(
            &self.cfg.kinds,
            &used_kinds(specs),
            self.cfg.distinct_choices,
        )
    }

    fn ensure_choices(&mut self, id: usize) {
        if self.nodes[id].depth < self.cfg.sequence_length && self.nodes[id].choices.is_empty() {
            let choices = self.legal(&self.prefix(id));
            self.nodes[id].children = vec![None; choices.len()];
            self.nodes[id].choices = choices;
        }
    }

    fn child(&mut self, id: usize, slot: usize) -> usize {
        if let Some(c) = self.nodes[id].children[slot] {
            return c;
        }
        let c = self.nodes.len();
        self.nodes.push(Node {
            spec: Some(self.nodes[id].choices[slot]),
            parent: Some(id),
            depth: self.nodes[id].depth + 1,
            choices: Vec::new(),
            children: Vec::new(),
            visits: 0,
            pending: 0,
            total_reward: 0.0,
            complete: false,
        });
        self.nodes[id].children[slot] = Some(c);
        c
    }

    fn uct(&self, parent: usize, child: usize) -> f64 {
        let p = self.nodes[parent].effective_visits() as f64;
        let c = &self.nodes[child];
        let n = c.effective_visits() as f64;
        c.total_reward / n + self.cfg.exploration_c * (p.ln() / n).sqrt()
    }

    /// Slot chosen at `id`, and whether it was an unvisited (new) child.
    fn select(&self, id: usize, rng: &mut Rng) -> (usize, bool) {
        let node = &self.nodes[id];
        let unvisited: Vec<usize> = node
            .children
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none_or(|c| self.nodes[c].effective_visits() == 0))
            .map(|(i, _)| i)
            .collect();
        if !unvisited.is_empty() {
            return (pick(&unvisited, rng), true);
        }
        let mut best = f64::NEG_INFINITY;
        let mut ties = Vec::new();
        for (slot, c) in node.children.iter().enumerate() {
            let v = self.uct(id, c.expect("all children visited"));
            if v > best {
                best = v;
                ties.clear();
            }
            if v == best {
                ties.push(slot);
            }
        }
        (pick(&ties, rng), false)
    }

    /// Descends by UCT, expands one new child, completes the sequence with
    /// uniform random legal choices, and marks the tree part of the path
    /// with one virtual visit of reward zero.
    pub fn sample_path(&mut self, rng: &mut Rng) -> SampledPath {
        let n = self.cfg.sequence_length;
        let mut nodes = vec![0];
        let mut at = 0;
        while self.nodes[at].depth < n {
            self.ensure_choices(at);
            let (slot, fresh) = self.select(at, rng);
            at = self.child(at, slot);
            nodes.push(at);
            if fresh {
                break;
            }
        }
        let mut specs = self.prefix(at);
        while specs.len() < n {
            let legal = self.legal(&specs);
            specs.push(legal[rng.below(legal.len() as u64) as usize]);
        }
        for &i in &nodes {
            self.nodes[i].pending += 1;
        }
        let sequence = AugmentationSequence::new(specs).expect("legal by construction");
        SampledPath { sequence, nodes }
    }

    /// Backs up `score` along the path (replacing its virtual visit) and
    /// caches it. The reward is `clamp(1 - score / reward_baseline, 0, 1)`.
    pub fn update(&mut self, path: &SampledPath, score: f64) -> Result<(), SearchError> {
        if path.nodes.first() != Some(&0)
            || path
                .nodes
                .iter()
                .any(|&i| i >= self.nodes.len() || self.nodes[i].pending == 0)
        {
            return Err(SearchError::UnknownPath(path.sequence.render()));
        }
        let r = reward(score, self.cfg.reward_baseline);
        for &i in &path.nodes {
            let node = &mut self.nodes[i];
            node.pending -= 1;
            node.visits += 1;
            node.total_reward += r;
        }
        self.cache.insert(path.sequence.clone(), score);
        for &i in path.nodes.iter().rev() {
            let node = &self.nodes[i];
            let done = if node.depth == self.cfg.sequence_length {
                node.visits > 0
            } else {
                !node.choices.is_empty()
                    && node
                        .children
                        .iter()
                        .all(|c| c.is_some_and(|c| self.nodes[c].complete))
            };
            if !done {
                break;
            }
            self.nodes[i].complete = true;
        }
        Ok(())
    }

    /// Final answer of the search.
    ///
    /// `ByScore` returns the cached sequence with the lowest score, ties going
    /// to the lexicographically smaller text rendering. `ByVisits` follows the
    /// most visited child from the root and returns the best cached sequence
    /// under the node it stops at.
    pub fn select_best_path(&self) -> Result<(AugmentationSequence, f64), SearchError> {
        let prefix = match self.cfg.best_path {
            BestPath::ByScore => Vec::new(),
            BestPath::ByVisits => {
                let mut at = 0;
                loop {
                    let best = self.nodes[at]
                        .children
                        .iter()
                        .flatten()
                        .filter(|&&c| self.nodes[c].visits > 0)
                        .max_by(|&&a, &&b| {
                            let (na, nb) = (&self.nodes[a], &self.nodes[b]);
                            na.visits
                                .cmp(&nb.visits)
                                .then_with(|| nb.spec.cmp(&na.spec))
                        });
                    match best {
                        Some(&c) => at = c,
                        None => break self.prefix(at),
                    }
                }
            }
        };
        let mut best: Option<(String, &AugmentationSequence, f64)> = None;
        for (seq, &score) in &self.cache {
            if !seq.specs().starts_with(&prefix) {
                continue;
            }
            let text = seq.render();
            let better = match &best {
                None => true,
                Some((t, _, s)) => score.total_cmp(s).then_with(|| text.cmp(t)).is_lt(),
            };
            if better {
                best = Some((text, seq, score));
            }
        }
        best.map(|(_, seq, s)| (seq.clone(), s))
            .ok_or(SearchError::EmptyCache)
    }
}

fn pick(items: &[usize], rng: &mut Rng) -> usize {
    if items.len() == 1 {
        items[0]
    } else {
        items[rng.below(items.len() as u64) as usize]
    }
}
