//! Per-token tree search guided by a prefix scorer: PUCT selection over
//! nucleus-filtered children, a cached scorer value per expanded node, max
//! backup along the simulation path, and commit by visit count. The search
//! is fully deterministic; no randomness enters anywhere.

use serde::Serialize;
use thiserror::Error;

use crate::core::{Condition, CoreError, Sequence, TokenId, DEFAULT_MAX_LENGTH};
use crate::decoding::{filter_top_k_top_p, DecodeError, Decoded};
use crate::models::{policy_log_prob, ModelError, Policy, PrefixState, ValueScorer};

#[derive(Debug, Error)]
pub enum MctsError {
    #[error("node is not expanded")]
    NotExpanded,
    #[error("node is already expanded")]
    AlreadyExpanded,
    #[error("expanded node has no children")]
    NoChildren,
    #[error("invalid search config: {msg}")]
    InvalidConfig { msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl MctsError {
    fn config(msg: impl Into<String>) -> MctsError {
        MctsError::InvalidConfig { msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize, Serialize)]
#[serde(default)]
pub struct MctsConfig {
    /// Exploration constant in the selection score; 0 is pure exploitation.
    pub c_puct: f64,
    pub num_simulations: usize,
    /// Nucleus mass kept when creating children.
    pub expansion_top_p: f64,
    /// Temperature applied to the policy before the nucleus cut.
    pub pi_temperature: f64,
    /// Keep the committed child's subtree as the next root instead of
    /// starting a fresh tree per emitted token.
    pub reuse_subtree: bool,
    /// Output length cap, counting the trailing eos.
    pub max_length: usize,
}

impl Default for MctsConfig {
    fn default() -> MctsConfig {
        MctsConfig {
            c_puct: 3.0,
            num_simulations: 50,
            expansion_top_p: 0.95,
            pi_temperature: 1.0,
            reuse_subtree: true,
            max_length: DEFAULT_MAX_LENGTH,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), MctsError> {
        if !(self.c_puct.is_finite() && self.c_puct >= 0.0) {
            return Err(MctsError::config(format!(
                "c_puct {} must be non-negative",
                self.c_puct
            )));
        }
        if self.num_simulations == 0 {
            return Err(MctsError::config("num_simulations must be at least 1"));
        }
        if !(self.expansion_top_p.is_finite()
            && 0.0 < self.expansion_top_p
            && self.expansion_top_p <= 1.0)
        {
            return Err(MctsError::config(format!(
                "expansion_top_p {} outside (0, 1]",
                self.expansion_top_p
            )));
        }
        if !(self.pi_temperature.is_finite() && self.pi_temperature > 0.0) {
            return Err(MctsError::config(format!(
                "pi_temperature {} must be positive",
                self.pi_temperature
            )));
        }
        if self.max_length == 0 {
            return Err(MctsError::config("max_length must be positive"));
        }
        Ok(())
    }
}

/// Tree node. `depth` counts prefix tokens from the condition, so a node is
/// terminal once its edge token is eos or no room is left for content plus a
/// trailing eos.
#[derive(Debug, Clone)]
pub struct SearchNode {
    token: Option<TokenId>,
    prior: f64,
    visit_count: usize,
    q: f64,
    children: Vec<usize>,
    expanded: bool,
    terminal: bool,
    cached_value: f64,
    depth: usize,
}

impl SearchNode {
    pub fn token(&self) -> Option<TokenId> {
        self.token
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn visit_count(&self) -> usize {
        self.visit_count
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_expanded(&self) -> bool {
        self.expanded
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// Scorer value computed when this node was expanded.
    pub fn cached_value(&self) -> f64 {
        self.cached_value
    }
}

/// Arena-allocated search tree rooted at the current decode state.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    root: usize,
}

/// One simulation: the tokens selected from the root down to the evaluated
/// leaf, and the value backed up along that path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRecord {
    pub path: Vec<TokenId>,
    pub leaf_value: f64,
}

/// All simulations behind one committed token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub committed: TokenId,
    pub simulations: Vec<SimulationRecord>,
}

impl SearchTree {
    /// Fresh tree whose root sits `depth` content tokens into the output.
    pub fn new(depth: usize) -> SearchTree {
        SearchTree {
            nodes: vec![SearchNode {
                token: None,
                prior: 1.0,
                visit_count: 0,
                q: 0.0,
                children: Vec::new(),
                expanded: false,
                terminal: false,
                cached_value: 0.0,
                depth,
            }],
            root: 0,
        }
    }

    /// Depth-one tree with hand-set child statistics `(token, prior, visits,
    /// q)`, for worked examples of selection and backup.
    pub fn scripted(children: &[(TokenId, f64, usize, f64)]) -> SearchTree {
        let mut tree = SearchTree::new(0);
        tree.nodes[0].expanded = true;
        for &(token, prior, visit_count, q) in children {
            let id = tree.nodes.len();
            tree.nodes.push(SearchNode {
                token: Some(token),
                prior,
                visit_count,
                q,
                children: Vec::new(),
                expanded: false,
                terminal: false,
                cached_value: 0.0,
                depth: 1,
            });
            tree.nodes[0].children.push(id);
        }
        tree
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.nodes[id].children
    }

    /// Selection score argmax over the children: `Q + c_puct * prior *
    /// sqrt(sum_b N_b) / (1 + N)`. Ties prefer the higher prior, then the
    /// lower token index.
    pub fn puct_select(&self, parent: usize, c_puct: f64) -> Result<usize, MctsError> {
        let node = &self.nodes[parent];
        if !node.expanded {
            return Err(MctsError::NotExpanded);
        }
        if node.children.is_empty() {
            return Err(MctsError::NoChildren);
        }
        let total_visits: usize =
            node.children.iter().map(|&c| self.nodes[c].visit_count).sum();
        let sqrt_total = (total_visits as f64).sqrt();
        let mut best: Option<(usize, f64)> = None;
        for &child_id in &node.children {
            let child = &self.nodes[child_id];
            let score = child.q
                + c_puct * child.prior * sqrt_total / (1.0 + child.visit_count as f64);
            let better = match best {
                None => true,
                Some((best_id, best_score)) => {
                    let b = &self.nodes[best_id];
                    score > best_score
                        || (score == best_score
                            && (child.prior > b.prior
                                || (child.prior == b.prior && child.token < b.token)))
                }
            };
            if better {
                best = Some((child_id, score));
            }
        }
        Ok(best.expect("children is non-empty").0)
    }

    /// Creates children over the nucleus of the policy at `state`, caches the
    /// scorer's value of `state`, and returns it. Terminal nodes get the
    /// value and no children.
    pub fn expand<P: Policy + ?Sized, V: ValueScorer + ?Sized>(
        &mut self,
        id: usize,
        state: &PrefixState,
        policy: &P,
        scorer: &V,
        config: &MctsConfig,
    ) -> Result<f64, MctsError> {
        if self.nodes[id].expanded {
            return Err(MctsError::AlreadyExpanded);
        }
        let value = scorer.score(state);
        self.nodes[id].cached_value = value;
        self.nodes[id].expanded = true;
        if self.nodes[id].terminal {
            return Ok(value);
        }
        let dist = policy.next_token_distribution(state)?;
        let filtered =
            filter_top_k_top_p(&dist, None, Some(config.expansion_top_p), config.pi_temperature)?;
        let depth = self.nodes[id].depth;
        let eos = policy.eos_id();
        for (token, &p) in filtered.probs().iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let child_id = self.nodes.len();
            // Content space runs out one slot before max_length; that slot
            // is reserved for eos.
            let terminal = token == eos || depth + 1 >= config.max_length - 1;
            self.nodes.push(SearchNode {
                token: Some(token),
                prior: p,
                visit_count: 0,
                q: 0.0,
                children: Vec::new(),
                expanded: false,
                terminal,
                cached_value: 0.0,
                depth: depth + 1,
            });
            self.nodes[id].children.push(child_id);
        }
        Ok(value)
    }

    /// `Q <- max(Q, leaf_value)` and `N <- N + 1` for every node on the path.
    pub fn backup(&mut self, path: &[usize], leaf_value: f64) {
        for &id in path {
            let node = &mut self.nodes[id];
            node.q = node.q.max(leaf_value);
            node.visit_count += 1;
        }
    }

    fn child_with_token(&self, parent: usize, token: TokenId) -> Option<usize> {
        self.nodes[parent]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].token == Some(token))
    }

    /// Makes `child` the root. Its visit count is reset to the sum over its
    /// children, so the committed-root conservation law (children visits grow
    /// by exactly `num_simulations` per step) keeps holding across reuse.
    fn re_root(&mut self, child: usize) {
        let descended: usize =
            self.nodes[child].children.iter().map(|&c| self.nodes[c].visit_count).sum();
        self.nodes[child].visit_count = descended;
        self.root = child;
    }
}

/// Runs `num_simulations` selection/expansion/backup passes from the root
/// and returns the token of the most-visited root child; ties prefer the
/// higher Q, then the lower token index. Each simulation's path and leaf
/// value are appended to `trace` when given.
pub fn mcts_step<P: Policy + ?Sized, V: ValueScorer + ?Sized>(
    tree: &mut SearchTree,
    root_state: &PrefixState,
    policy: &P,
    scorer: &V,
    config: &MctsConfig,
    mut trace: Option<&mut Vec<SimulationRecord>>,
) -> Result<TokenId, MctsError> {
    config.validate()?;
    let root = tree.root;
    debug_assert_eq!(tree.nodes[root].depth, root_state.prefix.len());
    if !tree.nodes[root].expanded {
        // Pre-expansion: the root value is cached but takes part in no
        // commit decision, and simulation counting starts afterwards.
        tree.expand(root, root_state, policy, scorer, config)?;
    }
    if tree.children(root).is_empty() {
        return Err(MctsError::NoChildren);
    }
    let child_visits = |tree: &SearchTree| -> usize {
        tree.children(root).iter().map(|&c| tree.nodes[c].visit_count).sum()
    };
    let before = child_visits(tree);

    for _ in 0..config.num_simulations {
        let mut path = vec![root];
        let mut state = root_state.clone();
        let mut node = root;
        while tree.nodes[node].expanded && !tree.nodes[node].terminal {
            let child = tree.puct_select(node, config.c_puct)?;
            state = state.child(tree.nodes[child].token.expect("non-root nodes carry a token"));
            path.push(child);
            node = child;
        }
        let leaf_value = if tree.nodes[node].expanded {
            tree.nodes[node].cached_value
        } else {
            tree.expand(node, &state, policy, scorer, config)?
        };
        tree.backup(&path, leaf_value);
        if let Some(sink) = trace.as_deref_mut() {
            sink.push(SimulationRecord {
                path: path[1..]
                    .iter()
                    .map(|&id| tree.nodes[id].token.expect("non-root nodes carry a token"))
                    .collect(),
                leaf_value,
            });
        }
    }

    // Every simulation descends through exactly one root child.
    let descended = child_visits(tree) - before;
    assert_eq!(
        descended, config.num_simulations,
        "visit conservation broke: {descended} descents for {} simulations",
        config.num_simulations
    );

    let mut best: Option<usize> = None;
    for &child_id in tree.children(root) {
        let child = &tree.nodes[child_id];
        let better = match best {
            None => true,
            Some(best_id) => {
                let b = &tree.nodes[best_id];
                child.visit_count > b.visit_count
                    || (child.visit_count == b.visit_count
                        && (child.q > b.q || (child.q == b.q && child.token < b.token)))
            }
        };
        if better {
            best = Some(child_id);
        }
    }
    Ok(tree.nodes[best.expect("children is non-empty")]
        .token
        .expect("non-root nodes carry a token"))
}

/// Emits tokens by repeated tree search until eos or the length cap, keeping
/// the committed subtree between steps when configured. Also returns one
/// trace record per emitted token when `traced` is set.
pub fn decode_coop_mcts_traced<P: Policy + ?Sized, V: ValueScorer + ?Sized>(
    condition: &Condition,
    policy: &P,
    scorer: &V,
    config: &MctsConfig,
    traced: bool,
) -> Result<(Decoded, Vec<StepTrace>), MctsError> {
    config.validate()?;
    let eos = policy.eos_id();
    let mut state = PrefixState::root(condition.clone());
    let mut tree = SearchTree::new(0);
    let mut content: Vec<TokenId> = Vec::new();
    let mut steps = Vec::new();
    let mut finished = false;
    while content.len() + 1 < config.max_length {
        let mut sims = Vec::new();
        let committed = mcts_step(
            &mut tree,
            &state,
            policy,
            scorer,
            config,
            traced.then_some(&mut sims),
        )?;
        if traced {
            steps.push(StepTrace { step: content.len(), committed, simulations: sims });
        }
        state = state.child(committed);
        if committed == eos {
            finished = true;
            break;
        }
        content.push(committed);
        if config.reuse_subtree {
            let child = tree
                .child_with_token(tree.root, committed)
                .expect("committed token is one of the root children");
            tree.re_root(child);
        } else {
            tree = SearchTree::new(content.len());
        }
    }
    let sequence = Sequence::from_raw_parts(
        {
            let mut ids = content.clone();
            ids.push(eos);
            ids
        },
        policy.pad_id(),
        eos,
        policy.vocab_size(),
        config.max_length,
    )?;
    let complete_state = if finished { state.clone() } else { state.child(eos) };
    let disc_score = scorer.score(&complete_state);
    let gen_log_prob = policy_log_prob(policy, condition, &sequence)?;
    Ok((
        Decoded {
            sequence,
            gen_log_prob,
            disc_score: Some(disc_score),
            forced_eos: !finished,
        },
        steps,
    ))
}

/// [`decode_coop_mcts_traced`] without the per-simulation records.
pub fn decode_coop_mcts<P: Policy + ?Sized, V: ValueScorer + ?Sized>(
    condition: &Condition,
    policy: &P,
    scorer: &V,
    config: &MctsConfig,
) -> Result<Decoded, MctsError> {
    Ok(decode_coop_mcts_traced(condition, policy, scorer, config, false)?.0)
}
