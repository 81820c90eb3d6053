use std::collections::HashMap;

use crate::environments::{SimState, Simulator};
use crate::error::{Error, Result};
use crate::interfaces::argmax;
use crate::neural::softmax;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MctsConfig {
    pub num_simulations: usize,
    pub max_depth: usize,
    /// UCT exploration constant.
    pub uct_beta: f64,
    pub gamma: f64,
    /// Temperature of the softmax over root child values.
    pub temperature: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self { num_simulations: 64, max_depth: 20, uct_beta: 1.0, gamma: 1.0, temperature: 1.0 }
    }
}

#[derive(Clone, Debug)]
struct Edge {
    next: SimState,
    reward: f64,
    terminal: bool,
}

#[derive(Clone, Debug)]
struct Node {
    prior: Vec<f64>,
    visits: Vec<u64>,
    value_sum: Vec<f64>,
    /// `1 + sum_a visits[a]`.
    total: u64,
    edges: Vec<Option<Edge>>,
}

impl Node {
    fn new(prior: Vec<f64>) -> Self {
        let n = prior.len();
        Self { prior, visits: vec![0; n], value_sum: vec![0.0; n], total: 1, edges: vec![None; n] }
    }

    /// Mean backed-up value; unvisited actions count as 0.
    fn q(&self, a: usize) -> f64 {
        if self.visits[a] == 0 {
            0.0
        } else {
            self.value_sum[a] / self.visits[a] as f64
        }
    }

    fn select(&self, beta: f64) -> usize {
        let sqrt_total = (self.total as f64).sqrt();
        let scores: Vec<f64> = (0..self.prior.len())
            .map(|a| self.q(a) + beta * sqrt_total / (self.visits[a] as f64 + 1.0) * self.prior[a])
            .collect();
        argmax(&scores)
    }
}

/// Search statistics keyed by simulator state.
#[derive(Clone, Debug, Default)]
pub struct SearchTree {
    nodes: HashMap<SimState, Node>,
}

impl SearchTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn visit_counts(&self, state: &SimState) -> Option<&[u64]> {
        self.nodes.get(state).map(|n| n.visits.as_slice())
    }

    pub fn total_visits(&self, state: &SimState) -> Option<u64> {
        self.nodes.get(state).map(|n| n.total)
    }

    pub fn q_values(&self, state: &SimState) -> Option<Vec<f64>> {
        self.nodes.get(state).map(|n| (0..n.prior.len()).map(|a| n.q(a)).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub visit_counts: Vec<u64>,
    pub q_values: Vec<f64>,
    /// Softmax of root child values at the configured temperature.
    pub policy: Vec<f64>,
    pub tree_size: usize,
}

/// Runs `config.num_simulations` select / expand / evaluate / backup passes
/// from `root_observation`.
///
/// `prior` maps an observation to action probabilities and `value` to a
/// state-value estimate, which is used at newly expanded nodes and at the
/// depth limit. Terminal transitions bootstrap with 0.
pub fn mcts_search(
    root_observation: &[f64],
    simulator: &dyn Simulator,
    prior: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    value: &mut dyn FnMut(&[f64]) -> Result<f64>,
    config: &MctsConfig,
) -> Result<(SearchResult, SearchTree)> {
    if config.num_simulations == 0 {
        return Err(Error::InvalidArgument("search needs at least one simulation".into()));
    }
    if config.max_depth == 0 || !(config.temperature > 0.0) {
        return Err(Error::InvalidArgument("max_depth and temperature must be positive".into()));
    }
    let num_actions = simulator.num_actions();
    let mut expand = |observation: &[f64]| -> Result<Node> {
        let p = prior(observation)?;
        if p.len() != num_actions {
            return Err(Error::Shape(format!("prior has {} entries for {num_actions} actions", p.len())));
        }
        Ok(Node::new(p))
    };
    let root = simulator.state_from_observation(root_observation)?;
    let mut tree = SearchTree::default();
    tree.nodes.insert(root.clone(), expand(root_observation)?);
    let mut path: Vec<(SimState, usize, f64)> = Vec::with_capacity(config.max_depth);
    for _ in 0..config.num_simulations {
        path.clear();
        let mut state = root.clone();
        let mut depth = 0;
        let leaf_value = loop {
            let node = tree.nodes.get_mut(&state).expect("node on path exists");
            let a = node.select(config.uct_beta);
            let edge = match &node.edges[a] {
                Some(edge) => edge.clone(),
                None => {
                    let (next, reward, terminal) = simulator.step(&state, a)?;
                    let edge = Edge { next, reward, terminal };
                    node.edges[a] = Some(edge.clone());
                    edge
                }
            };
            path.push((state.clone(), a, edge.reward));
            depth += 1;
            if edge.terminal {
                break 0.0;
            }
            let observation = simulator.observation(&edge.next);
            if depth >= config.max_depth {
                break value(&observation)?;
            }
            if !tree.nodes.contains_key(&edge.next) {
                let node = expand(&observation)?;
                tree.nodes.insert(edge.next.clone(), node);
                break value(&observation)?;
            }
            state = edge.next;
        };
        let mut g = leaf_value;
        for (s, a, r) in path.iter().rev() {
            g = r + config.gamma * g;
            let node = tree.nodes.get_mut(s).expect("node on path exists");
            node.visits[*a] += 1;
            node.value_sum[*a] += g;
            node.total += 1;
        }
    }
    let root_node = &tree.nodes[&root];
    let q_values: Vec<f64> = (0..num_actions).map(|a| root_node.q(a)).collect();
    let policy = softmax(&q_values.iter().map(|q| q / config.temperature).collect::<Vec<_>>());
    let result = SearchResult { visit_counts: root_node.visits.clone(), q_values, policy, tree_size: tree.len() };
    Ok((result, tree))
}
