//! Graph networks and Graph Net Search.
//!
//! A node counts as *achieved* when it follows from true leaves through
//! action-free arcs, or, for the root, once an arc into it has fired in
//! this graph. Candidates are unachieved nodes reachable by an action arc
//! whose children are all achieved.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::andor_graph::{arc_cost, build_graph, AndOrGraph, AugmentedGraph, GraphError, HyperArc, NodeId, NodeKind};
use crate::domain::{ActionCall, Fact, SymbolicState};
use crate::dsl::{ArcDecl, GraphTemplate, NodeDecl, Scenario, StageTemplate};
use crate::world::World;

pub const DEFAULT_DEPTH_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum TransitionReason {
    MotionFailure,
    NoFeasibleState,
    StageComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub from_graph: usize,
    pub to_graph: usize,
    pub reason: TransitionReason,
    pub carried_knowledge: Vec<Fact>,
    /// Simulated seconds.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub node: NodeId,
    pub arc: HyperArc,
    pub actions: Vec<ActionCall>,
    pub agents: Vec<String>,
    pub est_cost: f64,
    /// Lies on the extracted minimal-cost solution of the active graph.
    pub on_solution: bool,
}

impl Candidate {
    pub fn key(&self) -> String {
        let a: Vec<String> = self.actions.iter().map(|c| c.to_string()).collect();
        a.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("network depth cap {0} exceeded")]
    DepthLimitExceeded(usize),
    #[error("motion-failure expansion without knowledge")]
    MissingKnowledge,
    #[error("no stage template applies to {0:?}")]
    NoApplicableStage(Vec<String>),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphNetwork {
    pub graphs: Vec<AugmentedGraph>,
    pub transitions: Vec<Transition>,
    pub active: usize,
    /// Template each graph was instantiated from.
    pub origins: Vec<String>,
    pub depth_cap: usize,
    root_fired: Vec<bool>,
    suppressed: BTreeSet<(String, String)>,
}

pub const MAIN_TEMPLATE: &str = "main";

impl GraphNetwork {
    /// Bootstraps a network with its first graph.
    pub fn new(first: AndOrGraph, origin: &str, depth_cap: usize) -> GraphNetwork {
        GraphNetwork {
            graphs: vec![first.augment()],
            transitions: Vec::new(),
            active: 0,
            origins: vec![origin.to_string()],
            depth_cap,
            root_fired: vec![false],
            suppressed: BTreeSet::new(),
        }
    }

    pub fn from_scenario(s: &Scenario, depth_cap: usize) -> Result<GraphNetwork, SearchError> {
        Ok(GraphNetwork::new(build_graph(&s.graph)?, MAIN_TEMPLATE, depth_cap))
    }

    pub fn active_graph(&self) -> &AndOrGraph {
        &self.graphs[self.active].base
    }

    pub fn depth(&self) -> usize {
        self.graphs.len()
    }

    /// Sets every leaf of the active graph from the facts holding in `state`.
    pub fn sync_leaves(&mut self, state: &SymbolicState) {
        let g = &mut self.graphs[self.active].base;
        let assignment: BTreeMap<NodeId, bool> = g
            .leaves()
            .map(|n| (n.id, n.label.parse::<Fact>().map(|f| state.contains(&f)).unwrap_or(false)))
            .collect();
        g.set_leaf_truth(&assignment).expect("leaf ids come from the graph");
    }

    pub fn mark_fired(&mut self, arc: &HyperArc) {
        if arc.parent == self.active_graph().root() {
            self.root_fired[self.active] = true;
        }
    }

    pub fn achieved(&self) -> BTreeMap<NodeId, bool> {
        let g = self.active_graph();
        let mut out = BTreeMap::new();
        for id in g.topological_order() {
            let n = g.node(*id).unwrap();
            let a = match n.kind {
                NodeKind::Leaf => n.truth,
                NodeKind::Failure | NodeKind::Virtual => false,
                NodeKind::Root if self.root_fired[self.active] => true,
                _ => g.arcs_into(*id).any(|h| h.actions.is_empty() && h.children.iter().all(|c| out[c])),
            };
            out.insert(*id, a);
        }
        out
    }

    pub fn root_achieved(&self) -> bool {
        self.achieved()[&self.active_graph().root()]
    }

    pub fn suppress(&mut self, cand: &Candidate, world_signature: &str) {
        self.suppressed.insert((cand.key(), world_signature.to_string()));
    }

    pub fn is_suppressed(&self, cand_key: &str, world_signature: &str) -> bool {
        self.suppressed.contains(&(cand_key.to_string(), world_signature.to_string()))
    }

    /// Suppression entries recorded for one world signature.
    pub fn suppressed_for(&self, world_signature: &str) -> Vec<String> {
        self.suppressed.iter().filter(|(_, s)| s == world_signature).map(|(k, _)| k.clone()).collect()
    }

    /// Appends a graph instantiated for `reason` and makes it active.
    pub fn expand_network(
        &mut self,
        scenario: &Scenario,
        world: &World,
        reason: TransitionReason,
        knowledge: Vec<Fact>,
    ) -> Result<usize, SearchError> {
        if self.graphs.len() >= self.depth_cap {
            return Err(SearchError::DepthLimitExceeded(self.depth_cap));
        }
        let (graph, origin) = match reason {
            TransitionReason::MotionFailure => {
                if knowledge.is_empty() {
                    return Err(SearchError::MissingKnowledge);
                }
                let (t, name) = instantiate_stages(scenario, &knowledge, &world.symbolic())?;
                (build_graph(&t)?, name)
            }
            _ => (build_graph(&scenario.graph)?, MAIN_TEMPLATE.to_string()),
        };
        Ok(self.push(graph, origin, reason, knowledge, world.clock))
    }

    /// Appends an already built graph; the low-level form of [`expand_network`](Self::expand_network).
    pub fn push(&mut self, graph: AndOrGraph, origin: String, reason: TransitionReason, knowledge: Vec<Fact>, timestamp: f64) -> usize {
        let from = self.active;
        self.graphs.push(graph.augment());
        self.origins.push(origin);
        self.root_fired.push(false);
        self.active = self.graphs.len() - 1;
        self.transitions.push(Transition {
            from_graph: from,
            to_graph: self.active,
            reason,
            carried_knowledge: knowledge,
            timestamp,
        });
        self.active
    }

    /// One JSON object per transition, newline terminated.
    pub fn transition_log(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.transitions.iter().enumerate() {
            out.push_str(&transition_record(i, t).to_string());
            out.push('\n');
        }
        out
    }
}

pub(crate) fn transition_record(index: usize, t: &Transition) -> serde_json::Value {
    serde_json::json!({
        "type": "transition",
        "index": index,
        "from_graph": t.from_graph,
        "to_graph": t.to_graph,
        "reason": t.reason,
        "facts": t.carried_knowledge,
        "timestamp": t.timestamp,
    })
}

pub fn network_depth(net: &GraphNetwork) -> usize {
    net.depth()
}

/// Unachieved nodes with a fireable action arc, in arc id order.
pub fn next_feasible_states(net: &GraphNetwork, world: &World) -> Vec<Candidate> {
    let sig = world.signature();
    let g = net.active_graph();
    let achieved = net.achieved();
    let usable = |a: &HyperArc| a.actions.is_empty() || !net.is_suppressed(&key_of(&a.actions), &sig);
    let costs = g.costs_with(usable);
    let on_solution = extract_solution(g, &costs, &achieved, &usable);
    let root_cost = costs[&g.root()];
    let mut out = Vec::new();
    for a in g.arcs() {
        if a.actions.is_empty() || achieved[&a.parent] || !usable(a) || !a.children.iter().all(|c| achieved[c]) {
            continue;
        }
        let on = on_solution.contains(&(a.parent, a.id));
        let local = arc_cost(a, &costs);
        let est_cost = if on { root_cost } else { root_cost + local };
        out.push(Candidate {
            node: a.parent,
            arc: a.clone(),
            actions: a.actions.clone(),
            agents: Vec::new(),
            est_cost,
            on_solution: on,
        });
    }
    out
}

fn key_of(actions: &[ActionCall]) -> String {
    let a: Vec<String> = actions.iter().map(|c| c.to_string()).collect();
    a.join(" ")
}

/// Tips of the minimal-cost solution extracted top-down from the root.
fn extract_solution(
    g: &AndOrGraph,
    costs: &BTreeMap<NodeId, f64>,
    achieved: &BTreeMap<NodeId, bool>,
    usable: &dyn Fn(&HyperArc) -> bool,
) -> BTreeSet<(NodeId, u32)> {
    let mut tips = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![g.root()];
    while let Some(n) = stack.pop() {
        if achieved[&n] || !seen.insert(n) {
            continue;
        }
        let Some(a) = g.best_arc(n, costs, usable) else { continue };
        if !a.actions.is_empty() && a.children.iter().all(|c| achieved[c]) {
            tips.insert((n, a.id));
        } else {
            stack.extend(a.children.iter().rev().copied());
        }
    }
    tips
}

/// Prefers solution tips, then lower cost, lower arc id, lower parent id.
pub fn next_optimal_state(cands: &[Candidate]) -> Result<Candidate, SearchError> {
    cands
        .iter()
        .min_by(|a, b| {
            (!a.on_solution)
                .cmp(&!b.on_solution)
                .then(a.est_cost.total_cmp(&b.est_cost))
                .then(a.arc.id.cmp(&b.arc.id))
                .then(a.node.cmp(&b.node))
        })
        .cloned()
        .ok_or(SearchError::EmptyCandidateSet)
}

/// Binds a stage template against one knowledge fact.
fn bind_stage(stage: &StageTemplate, k: &Fact, facts: &SymbolicState) -> Option<BTreeMap<String, String>> {
    if stage.params.len() != k.args.len() {
        return None;
    }
    let mut b: BTreeMap<String, String> = stage.params.iter().cloned().zip(k.args.iter().cloned()).collect();
    for pat in &stage.binds {
        let found = facts.facts.iter().find_map(|f| {
            let mut trial = b.clone();
            pat.unify(f, &mut trial).then_some(trial)
        })?;
        b = found;
    }
    Some(b)
}

/// Merges one instantiation per knowledge fact into a single rearrangement
/// graph. Nodes with equal labels are shared, as are root and failure.
pub fn instantiate_stages(
    scenario: &Scenario,
    knowledge: &[Fact],
    facts: &SymbolicState,
) -> Result<(GraphTemplate, String), SearchError> {
    let mut out = GraphTemplate::default();
    let mut ids: BTreeMap<String, u32> = BTreeMap::new();
    let mut root = None;
    let mut failure = None;
    let mut arcs: Vec<(u32, Vec<u32>, f64, Vec<ActionCall>)> = Vec::new();
    let mut used = BTreeSet::new();
    for k in knowledge {
        let Some((stage, b)) = scenario.stages.values().find_map(|s| bind_stage(s, k, facts).map(|b| (s, b))) else {
            continue;
        };
        used.insert(stage.name.clone());
        let mut local: BTreeMap<u32, u32> = BTreeMap::new();
        for n in &stage.graph.nodes {
            let label = substitute_label(&n.label, &b);
            let shared = match n.kind {
                NodeKind::Root => &mut root,
                NodeKind::Failure => &mut failure,
                _ => &mut None,
            };
            let id = match (n.kind, *shared) {
                (NodeKind::Root | NodeKind::Failure, Some(id)) => id,
                _ => {
                    let key = format!("{}:{}", n.kind.keyword(), label);
                    let next = ids.len() as u32;
                    let id = *ids.entry(key).or_insert(next);
                    if id == next {
                        out.nodes.push(NodeDecl { id, kind: n.kind, label });
                    }
                    if matches!(n.kind, NodeKind::Root | NodeKind::Failure) {
                        *shared = Some(id);
                    }
                    id
                }
            };
            local.insert(n.id, id);
        }
        for a in &stage.graph.arcs {
            let actions: Vec<ActionCall> = a.actions.iter().map(|c| c.substitute(&b).expect("stage variables are bound")).collect();
            let arc = (local[&a.parent], a.children.iter().map(|c| local[c]).collect::<Vec<_>>(), a.weight, actions);
            if !arcs.contains(&arc) {
                arcs.push(arc);
            }
        }
    }
    if used.is_empty() {
        return Err(SearchError::NoApplicableStage(knowledge.iter().map(|f| f.to_string()).collect()));
    }
    out.arcs = arcs
        .into_iter()
        .enumerate()
        .map(|(i, (parent, children, weight, actions))| ArcDecl { id: i as u32, parent, children, weight, actions })
        .collect();
    out.normalize();
    let names: Vec<String> = used.into_iter().collect();
    Ok((out, format!("stage:{}", names.join("+"))))
}

fn substitute_label(label: &str, b: &BTreeMap<String, String>) -> String {
    match label.parse::<Fact>() {
        Ok(f) => f.substitute(b).map(|f| f.to_string()).unwrap_or_else(|_| label.to_string()),
        Err(_) => label.to_string(),
    }
}
