//! AND/OR graphs: nodes, hyper-arcs, solved/cost propagation and augmentation.
//!
//! A hyper-arc connects one parent to a conjunctive set of children. Several
//! arcs into the same parent are alternatives. Leaves carry truth values that
//! mirror facts of the current world; everything else is derived.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::domain::ActionCall;
use crate::dsl::GraphTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum NodeKind {
    Leaf,
    Internal,
    Root,
    Failure,
    Virtual,
}

impl NodeKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NodeKind::Leaf => "leaf",
            NodeKind::Internal => "internal",
            NodeKind::Root => "root",
            NodeKind::Failure => "failure",
            NodeKind::Virtual => "virtual",
        }
    }

    pub fn from_keyword(s: &str) -> Option<NodeKind> {
        Some(match s {
            "leaf" => NodeKind::Leaf,
            "internal" => NodeKind::Internal,
            "root" => NodeKind::Root,
            "failure" => NodeKind::Failure,
            "virtual" => NodeKind::Virtual,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
    /// Only meaningful for leaves.
    pub truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperArc {
    pub id: u32,
    pub parent: NodeId,
    pub children: Vec<NodeId>,
    pub actions: Vec<ActionCall>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("duplicate node id {0}")]
    DuplicateNodeId(u32),
    #[error("duplicate arc id {0}")]
    DuplicateArcId(u32),
    #[error("arc {arc} references undefined node {node}")]
    DanglingReference { arc: u32, node: u32 },
    #[error("cycle through node {0}")]
    CycleDetected(u32),
    #[error("graph has no root")]
    MissingRoot,
    #[error("graph has no failure node")]
    MissingFailure,
    #[error("node {node} has the wrong kind: {reason}")]
    BadKind { node: u32, reason: &'static str },
    #[error("arc {arc} is malformed: {reason}")]
    BadArc { arc: u32, reason: &'static str },
    #[error("root is not reachable from any leaf")]
    RootUnreachable,
    #[error("node {0} is not a leaf")]
    NotALeaf(u32),
    #[error("unknown node {0}")]
    UnknownNode(u32),
    #[error("graph is already augmented")]
    AlreadyAugmented,
}

/// Validated AND/OR graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AndOrGraph {
    nodes: BTreeMap<NodeId, Node>,
    arcs: Vec<HyperArc>,
    root: NodeId,
    failure: NodeId,
    #[serde(skip)]
    order: Vec<NodeId>,
    #[serde(skip)]
    incoming: BTreeMap<NodeId, Vec<usize>>,
}

pub fn build_graph(template: &GraphTemplate) -> Result<AndOrGraph, GraphError> {
    let mut nodes = BTreeMap::new();
    for d in &template.nodes {
        let id = NodeId(d.id);
        let node = Node { id, label: d.label.clone(), kind: d.kind, truth: false };
        if nodes.insert(id, node).is_some() {
            return Err(GraphError::DuplicateNodeId(d.id));
        }
    }
    let root = NodeId(template.root.ok_or(GraphError::MissingRoot)?);
    let failure = NodeId(template.failure.ok_or(GraphError::MissingFailure)?);
    for (id, n) in &nodes {
        let reason = match n.kind {
            NodeKind::Virtual => Some("virtual nodes only come from augmentation"),
            NodeKind::Root if *id != root => Some("second root"),
            NodeKind::Failure if *id != failure => Some("second failure node"),
            _ => None,
        };
        if let Some(reason) = reason {
            return Err(GraphError::BadKind { node: id.0, reason });
        }
    }
    match nodes.get(&root) {
        None => return Err(GraphError::MissingRoot),
        Some(n) if n.kind != NodeKind::Root => {
            return Err(GraphError::BadKind { node: root.0, reason: "declared root is not of kind root" })
        }
        _ => {}
    }
    match nodes.get(&failure) {
        None => return Err(GraphError::MissingFailure),
        Some(n) if n.kind != NodeKind::Failure => {
            return Err(GraphError::BadKind { node: failure.0, reason: "declared failure is not of kind failure" })
        }
        _ => {}
    }

    let mut arcs: Vec<HyperArc> = Vec::with_capacity(template.arcs.len());
    let mut arc_ids = BTreeSet::new();
    for a in &template.arcs {
        if !arc_ids.insert(a.id) {
            return Err(GraphError::DuplicateArcId(a.id));
        }
        let bad = |reason| GraphError::BadArc { arc: a.id, reason };
        for n in std::iter::once(&a.parent).chain(&a.children) {
            if !nodes.contains_key(&NodeId(*n)) {
                return Err(GraphError::DanglingReference { arc: a.id, node: *n });
            }
        }
        match nodes[&NodeId(a.parent)].kind {
            NodeKind::Leaf => return Err(bad("parent is a leaf")),
            NodeKind::Failure => return Err(bad("parent is the failure node")),
            _ => {}
        }
        if a.children.is_empty() {
            return Err(bad("no children"));
        }
        if a.children.contains(&a.parent) {
            return Err(bad("self-loop"));
        }
        if a.children.iter().any(|c| matches!(nodes[&NodeId(*c)].kind, NodeKind::Root | NodeKind::Failure)) {
            return Err(bad("root or failure used as a child"));
        }
        if !a.weight.is_finite() || a.weight < 0.0 {
            return Err(bad("weight must be finite and non-negative"));
        }
        let mut children: Vec<NodeId> = a.children.iter().map(|c| NodeId(*c)).collect();
        children.sort();
        children.dedup();
        arcs.push(HyperArc {
            id: a.id,
            parent: NodeId(a.parent),
            children,
            actions: a.actions.clone(),
            weight: a.weight,
        });
    }
    arcs.sort_by_key(|a| a.id);
    AndOrGraph::assemble(nodes, arcs, root, failure)
}

impl AndOrGraph {
    fn assemble(
        nodes: BTreeMap<NodeId, Node>,
        arcs: Vec<HyperArc>,
        root: NodeId,
        failure: NodeId,
    ) -> Result<AndOrGraph, GraphError> {
        let mut incoming: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (i, a) in arcs.iter().enumerate() {
            incoming.entry(a.parent).or_default().push(i);
        }
        // Kahn over child -> parent edges; children come first in `order`.
        let mut pending: BTreeMap<NodeId, usize> = nodes.keys().map(|k| (*k, 0)).collect();
        let mut parents_of: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for a in &arcs {
            for c in &a.children {
                *pending.get_mut(&a.parent).unwrap() += 1;
                parents_of.entry(*c).or_default().push(a.parent);
            }
        }
        let mut queue: VecDeque<NodeId> = pending.iter().filter(|(_, n)| **n == 0).map(|(k, _)| *k).collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(n) = queue.pop_front() {
            order.push(n);
            for p in parents_of.get(&n).into_iter().flatten() {
                let c = pending.get_mut(p).unwrap();
                *c -= 1;
                if *c == 0 {
                    queue.push_back(*p);
                }
            }
        }
        if order.len() != nodes.len() {
            let stuck = pending.iter().find(|(_, n)| **n > 0).map(|(k, _)| k.0).unwrap_or(0);
            return Err(GraphError::CycleDetected(stuck));
        }

        let mut touched: BTreeSet<NodeId> =
            nodes.values().filter(|n| n.kind == NodeKind::Leaf).map(|n| n.id).collect();
        for n in &order {
            if incoming.get(n).into_iter().flatten().any(|i| arcs[*i].children.iter().any(|c| touched.contains(c))) {
                touched.insert(*n);
            }
        }
        if !touched.contains(&root) {
            return Err(GraphError::RootUnreachable);
        }
        Ok(AndOrGraph { nodes, arcs, root, failure, order, incoming })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn failure(&self) -> NodeId {
        self.failure
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Arcs sorted by id.
    pub fn arcs(&self) -> &[HyperArc] {
        &self.arcs
    }

    pub fn arcs_into(&self, id: NodeId) -> impl Iterator<Item = &HyperArc> {
        self.incoming.get(&id).into_iter().flatten().map(move |i| &self.arcs[*i])
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Leaf)
    }

    /// Node ids with every child before its parents.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn set_leaf_truth(&mut self, assignment: &BTreeMap<NodeId, bool>) -> Result<(), GraphError> {
        for id in assignment.keys() {
            match self.nodes.get(id) {
                None => return Err(GraphError::UnknownNode(id.0)),
                Some(n) if n.kind != NodeKind::Leaf => return Err(GraphError::NotALeaf(id.0)),
                _ => {}
            }
        }
        for (id, t) in assignment {
            self.nodes.get_mut(id).unwrap().truth = *t;
        }
        Ok(())
    }

    /// Solved flag of every node.
    pub fn solved_all(&self) -> BTreeMap<NodeId, bool> {
        let mut out = BTreeMap::new();
        for id in &self.order {
            let n = &self.nodes[id];
            let s = match n.kind {
                NodeKind::Leaf => n.truth,
                NodeKind::Failure | NodeKind::Virtual => false,
                _ => self.arcs_into(*id).any(|a| a.children.iter().all(|c| out[c])),
            };
            out.insert(*id, s);
        }
        out
    }

    pub fn solved(&self, id: NodeId) -> Result<bool, GraphError> {
        if !self.nodes.contains_key(&id) {
            return Err(GraphError::UnknownNode(id.0));
        }
        Ok(self.solved_all()[&id])
    }

    /// Cost of every node, counting only arcs accepted by `usable`.
    pub fn costs_with(&self, usable: impl Fn(&HyperArc) -> bool) -> BTreeMap<NodeId, f64> {
        let mut out: BTreeMap<NodeId, f64> = BTreeMap::new();
        for id in &self.order {
            let n = &self.nodes[id];
            let c = match n.kind {
                NodeKind::Leaf => {
                    if n.truth {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                }
                NodeKind::Failure | NodeKind::Virtual => f64::INFINITY,
                _ => self
                    .arcs_into(*id)
                    .filter(|a| usable(a))
                    .map(|a| arc_cost(a, &out))
                    .fold(f64::INFINITY, f64::min),
            };
            out.insert(*id, c);
        }
        out
    }

    pub fn costs(&self) -> BTreeMap<NodeId, f64> {
        self.costs_with(|_| true)
    }

    pub fn node_cost(&self, id: NodeId) -> Result<f64, GraphError> {
        if !self.nodes.contains_key(&id) {
            return Err(GraphError::UnknownNode(id.0));
        }
        Ok(self.costs()[&id])
    }

    /// Cheapest usable arc into `id`; ties go to the lowest arc id.
    pub fn best_arc<'a>(
        &'a self,
        id: NodeId,
        costs: &BTreeMap<NodeId, f64>,
        usable: impl Fn(&HyperArc) -> bool,
    ) -> Option<&'a HyperArc> {
        let mut best: Option<(&HyperArc, f64)> = None;
        for a in self.arcs_into(id).filter(|a| usable(a)) {
            let c = arc_cost(a, costs);
            if c.is_finite() && best.map(|(_, b)| c < b).unwrap_or(true) {
                best = Some((a, c));
            }
        }
        best.map(|(a, _)| a)
    }

    pub fn augment(self) -> AugmentedGraph {
        let virtual_node = NodeId(self.nodes.keys().last().map(|k| k.0 + 1).unwrap_or(0));
        let next_arc = self.arcs.last().map(|a| a.id + 1).unwrap_or(0);
        let virtual_arcs = [self.failure, self.root]
            .iter()
            .enumerate()
            .map(|(i, from)| HyperArc {
                id: next_arc + i as u32,
                parent: virtual_node,
                children: vec![*from],
                actions: Vec::new(),
                weight: 0.0,
            })
            .collect();
        AugmentedGraph { base: self, virtual_node, virtual_arcs }
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        self.write_dot(&mut out, None);
        out
    }

    fn write_dot(&self, out: &mut String, aug: Option<&AugmentedGraph>) {
        writeln!(out, "digraph andor {{").unwrap();
        writeln!(out, "  rankdir=BT;").unwrap();
        for n in self.nodes.values() {
            writeln!(out, "  {} [label=\"{}\", {}];", n.id, escape(&n.label), node_style(n.kind, n.truth)).unwrap();
        }
        if let Some(a) = aug {
            writeln!(out, "  {} [label=\"virtual\", {}];", a.virtual_node, node_style(NodeKind::Virtual, false))
                .unwrap();
        }
        for a in &self.arcs {
            writeln!(out, "  j{} [shape=point, width=0.08];", a.id).unwrap();
            for c in &a.children {
                writeln!(out, "  {} -> j{} [arrowhead=none];", c, a.id).unwrap();
            }
            let actions: Vec<String> = a.actions.iter().map(|c| c.to_string()).collect();
            let label = if actions.is_empty() {
                format!("h{} w={}", a.id, a.weight)
            } else {
                format!("h{} w={} {}", a.id, a.weight, actions.join(" "))
            };
            writeln!(out, "  j{} -> {} [label=\"{}\"];", a.id, a.parent, escape(&label)).unwrap();
        }
        if let Some(a) = aug {
            for v in &a.virtual_arcs {
                for c in &v.children {
                    writeln!(out, "  {} -> {} [style=dashed, label=\"h{}\"];", c, v.parent, v.id).unwrap();
                }
            }
        }
        writeln!(out, "}}").unwrap();
    }
}

pub(crate) fn arc_cost(a: &HyperArc, costs: &BTreeMap<NodeId, f64>) -> f64 {
    a.children.iter().fold(a.weight, |acc, c| acc + costs[c])
}

fn node_style(kind: NodeKind, truth: bool) -> &'static str {
    match kind {
        NodeKind::Root => "shape=doublecircle, style=bold",
        NodeKind::Failure => "shape=octagon, style=filled, fillcolor=lightcoral",
        NodeKind::Virtual => "shape=diamond, style=dashed",
        NodeKind::Leaf if truth => "shape=box, style=filled, fillcolor=palegreen",
        NodeKind::Leaf => "shape=box",
        NodeKind::Internal => "shape=ellipse",
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// A graph extended with a virtual node where a successor graph attaches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedGraph {
    pub base: AndOrGraph,
    pub virtual_node: NodeId,
    pub virtual_arcs: Vec<HyperArc>,
}

impl AugmentedGraph {
    /// Always fails: a graph carries at most one virtual node.
    pub fn augment(&self) -> Result<AugmentedGraph, GraphError> {
        Err(GraphError::AlreadyAugmented)
    }

    pub fn node_count(&self) -> usize {
        self.base.node_count() + 1
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        self.base.write_dot(&mut out, Some(self));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{ArcDecl, NodeDecl};

    fn node(id: u32, kind: NodeKind, label: &str) -> NodeDecl {
        NodeDecl { id, kind, label: label.into() }
    }

    fn arc(id: u32, parent: u32, children: &[u32], weight: f64) -> ArcDecl {
        ArcDecl { id, parent, children: children.to_vec(), weight, actions: vec![] }
    }

    fn minimal() -> GraphTemplate {
        GraphTemplate {
            nodes: vec![
                node(0, NodeKind::Root, "goal"),
                node(1, NodeKind::Failure, "failed"),
                node(2, NodeKind::Leaf, "a()"),
                node(3, NodeKind::Leaf, "b()"),
            ],
            arcs: vec![arc(1, 0, &[2, 3], 1.0)],
            root: Some(0),
            failure: Some(1),
        }
    }

    fn truths(g: &mut AndOrGraph, t: &[(u32, bool)]) {
        g.set_leaf_truth(&t.iter().map(|(k, v)| (NodeId(*k), *v)).collect()).unwrap();
    }

    #[test]
    fn minimal_graph_builds() {
        let g = build_graph(&minimal()).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.arcs().len(), 1);
        assert!(!g.solved(g.root()).unwrap());
        assert_eq!(g.node_cost(g.root()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn validation_names_the_offender() {
        let mut t = minimal();
        t.arcs[0].children.push(9);
        assert_eq!(build_graph(&t), Err(GraphError::DanglingReference { arc: 1, node: 9 }));
        let mut t = minimal();
        t.nodes.push(node(2, NodeKind::Leaf, "dup()"));
        assert_eq!(build_graph(&t), Err(GraphError::DuplicateNodeId(2)));
        let mut t = minimal();
        t.root = None;
        assert_eq!(build_graph(&t), Err(GraphError::MissingRoot));
        let mut t = minimal();
        t.failure = None;
        assert_eq!(build_graph(&t), Err(GraphError::MissingFailure));
        let mut t = minimal();
        t.nodes.push(node(4, NodeKind::Internal, "x"));
        t.nodes.push(node(5, NodeKind::Internal, "y"));
        t.arcs.push(arc(2, 4, &[5], 1.0));
        t.arcs.push(arc(3, 5, &[4], 1.0));
        assert!(matches!(build_graph(&t), Err(GraphError::CycleDetected(_))));
        let mut t = minimal();
        t.arcs.push(arc(2, 2, &[3], 1.0));
        assert!(matches!(build_graph(&t), Err(GraphError::BadArc { arc: 2, .. })));
    }

    #[test]
    fn and_semantics() {
        let mut g = build_graph(&minimal()).unwrap();
        truths(&mut g, &[(2, true), (3, false)]);
        assert!(!g.solved(g.root()).unwrap());
        truths(&mut g, &[(3, true)]);
        assert!(g.solved(g.root()).unwrap());
        assert_eq!(g.node_cost(g.root()).unwrap(), 1.0);
        assert!(!g.solved(g.failure()).unwrap());
        assert_eq!(g.node_cost(g.failure()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn leaf_truth_only_on_leaves() {
        let mut g = build_graph(&minimal()).unwrap();
        let err = g.set_leaf_truth(&[(NodeId(0), true)].into_iter().collect()).unwrap_err();
        assert_eq!(err, GraphError::NotALeaf(0));
        assert_eq!(g.solved(NodeId(42)), Err(GraphError::UnknownNode(42)));
    }

    #[test]
    fn cheapest_alternative_wins() {
        let mut t = minimal();
        t.arcs.push(arc(2, 0, &[3], 3.0));
        let mut g = build_graph(&t).unwrap();
        truths(&mut g, &[(2, true), (3, true)]);
        assert_eq!(g.node_cost(g.root()).unwrap(), 1.0);
        let costs = g.costs();
        assert_eq!(g.best_arc(g.root(), &costs, |_| true).unwrap().id, 1);
        assert_eq!(g.best_arc(g.root(), &costs, |a| a.id != 1).unwrap().id, 2);
    }

    #[test]
    fn chain_costs_add_up() {
        let t = GraphTemplate {
            nodes: vec![
                node(0, NodeKind::Root, "r"),
                node(1, NodeKind::Failure, "f"),
                node(2, NodeKind::Internal, "m"),
                node(3, NodeKind::Leaf, "l()"),
            ],
            arcs: vec![arc(0, 0, &[2], 2.0), arc(1, 2, &[3], 2.0)],
            root: Some(0),
            failure: Some(1),
        };
        let mut g = build_graph(&t).unwrap();
        truths(&mut g, &[(3, true)]);
        assert_eq!(g.node_cost(g.root()).unwrap(), 4.0);
    }

    #[test]
    fn augmentation_adds_one_node_and_two_arcs() {
        let a = build_graph(&minimal()).unwrap().augment();
        assert_eq!(a.node_count(), 5);
        assert_eq!(a.virtual_arcs.len(), 2);
        assert!(a.virtual_arcs.iter().all(|h| h.parent == a.virtual_node));
        let from: Vec<NodeId> = a.virtual_arcs.iter().flat_map(|h| h.children.clone()).collect();
        assert_eq!(from, vec![NodeId(1), NodeId(0)]);
        assert_eq!(a.augment(), Err(GraphError::AlreadyAugmented));
    }

    #[test]
    fn dot_is_deterministic_and_uses_junctions() {
        let g = build_graph(&minimal()).unwrap();
        let dot = g.to_dot();
        assert_eq!(dot, build_graph(&minimal()).unwrap().to_dot());
        let node_lines = dot.lines().filter(|l| l.trim_start().starts_with('n') && l.contains("[label=")).count();
        assert_eq!(node_lines, 4);
        assert_eq!(dot.matches("shape=point").count(), 1);
        let aug = g.augment().to_dot();
        assert!(aug.contains("shape=diamond"));
        assert_eq!(aug.matches("style=dashed, label=").count(), 2);
    }
}
