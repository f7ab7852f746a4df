#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write;

use andor_tmp::andor_graph::{build_graph, AndOrGraph, NodeId, NodeKind};
use andor_tmp::domain::MotionClass;
use andor_tmp::dsl::{ArcDecl, GraphTemplate, NodeDecl};
use andor_tmp::world::{
    Agent, AgentKind, Footprint, GoalRegion, MotionQuery, Object, ObjectKind, Point, Pose, World, DEFAULT_BUDGET,
    HOME_OFFSET,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Random acyclic graph with at most `max_nodes` nodes and `max_arcs` arcs.
///
/// Nodes are ranked root, internals, leaves; arcs only point from lower to
/// higher rank. Every arc carries an action so nothing counts as achieved
/// except true leaves. Weights are quarter steps so sums stay exact.
pub fn random_graph(r: &mut ChaCha8Rng, max_nodes: usize, max_arcs: usize) -> (AndOrGraph, BTreeMap<NodeId, bool>) {
    loop {
        let n = r.gen_range(4..=max_nodes);
        let internals = r.gen_range(0..=(n - 3).min(4));
        let leaves = n - 2 - internals;
        let mut t = GraphTemplate::default();
        t.nodes.push(NodeDecl { id: 0, kind: NodeKind::Root, label: "goal".into() });
        t.nodes.push(NodeDecl { id: 1, kind: NodeKind::Failure, label: "failed".into() });
        let ranked: Vec<u32> = std::iter::once(0).chain(2..2 + (internals + leaves) as u32).collect();
        for k in 0..internals {
            t.nodes.push(NodeDecl { id: 2 + k as u32, kind: NodeKind::Internal, label: format!("mid{k}") });
        }
        for k in 0..leaves {
            let id = 2 + (internals + k) as u32;
            t.nodes.push(NodeDecl { id, kind: NodeKind::Leaf, label: format!("p{id}(a)") });
        }
        let arcs = r.gen_range(1..=max_arcs);
        for id in 0..arcs as u32 {
            let pi = r.gen_range(0..=internals);
            let parent = ranked[pi];
            let below = &ranked[pi + 1..];
            let k = r.gen_range(1..=below.len().min(3));
            let mut kids: Vec<u32> = Vec::new();
            while kids.len() < k {
                let c = below[r.gen_range(0..below.len())];
                if !kids.contains(&c) {
                    kids.push(c);
                }
            }
            let weight = r.gen_range(0..=40) as f64 / 4.0;
            let actions = vec![format!("act{id}(a)").parse().unwrap()];
            t.arcs.push(ArcDecl { id, parent, children: kids, weight, actions });
        }
        t.normalize();
        let Ok(g) = build_graph(&t) else { continue };
        let truths: BTreeMap<NodeId, bool> = g.leaves().map(|l| (l.id, r.gen_bool(0.6))).collect();
        let mut g = g;
        g.set_leaf_truth(&truths).unwrap();
        return (g, truths);
    }
}

/// Every solution tree below `node`, as (cost, arcs used).
///
/// A leaf is solved when true; a non-leaf is solved through any arc whose
/// children are all solved. Shared subtrees are counted once per use.
pub fn solution_trees(g: &AndOrGraph, node: NodeId) -> Vec<(f64, BTreeSet<u32>)> {
    let n = g.node(node).unwrap();
    if n.kind == NodeKind::Leaf {
        return if n.truth { vec![(0.0, BTreeSet::new())] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for arc in g.arcs().iter().filter(|a| a.parent == node) {
        let mut partial = vec![(arc.weight, BTreeSet::from([arc.id]))];
        for c in &arc.children {
            let sub = solution_trees(g, *c);
            let mut next = Vec::new();
            for (pc, ps) in &partial {
                for (sc, ss) in &sub {
                    next.push((pc + sc, ps.union(ss).copied().collect()));
                }
            }
            partial = next;
        }
        out.extend(partial);
    }
    out
}

pub fn oracle_cost(g: &AndOrGraph, node: NodeId) -> f64 {
    solution_trees(g, node).iter().map(|s| s.0).fold(f64::INFINITY, f64::min)
}

/// Moves needed from `start` to put every disk on peg 2, by plain BFS over
/// (disk -> peg) assignments.
pub fn hanoi_bfs(n: usize, start: &[u8]) -> usize {
    let goal = vec![2u8; n];
    let mut seen: HashMap<Vec<u8>, usize> = HashMap::from([(start.to_vec(), 0)]);
    let mut q = VecDeque::from([start.to_vec()]);
    while let Some(s) = q.pop_front() {
        if s == goal {
            return seen[&s];
        }
        for from in 0..3u8 {
            for to in 0..3u8 {
                let top_from = (0..n).find(|&d| s[d] == from);
                let top_to = (0..n).find(|&d| s[d] == to);
                if let Some(d) = top_from {
                    if from != to && top_to.map_or(true, |t| d < t) {
                        let mut t = s.clone();
                        t[d] = to;
                        if !seen.contains_key(&t) {
                            seen.insert(t.clone(), seen[&s] + 1);
                            q.push_back(t);
                        }
                    }
                }
            }
        }
    }
    unreachable!("every tower state reaches the goal")
}

fn float(r: &mut ChaCha8Rng) -> f64 {
    match r.gen_range(0..4) {
        0 => r.gen_range(-3.0..3.0),
        1 => r.gen_range(-300..300) as f64 / 100.0,
        2 => 0.0,
        _ => r.gen_range(0.0..1.0) * 1e-3,
    }
}

fn nonneg(r: &mut ChaCha8Rng) -> f64 {
    float(r).abs()
}

/// A valid scenario text built from random declarations.
pub fn fuzz_scenario(r: &mut ChaCha8Rng) -> String {
    let mut t = String::from("OBJECTS\n");
    let n_obj = r.gen_range(1..6);
    let kinds = ["item", "fixture", "surface", "slot"];
    let mut objects = Vec::new();
    for i in 0..n_obj {
        let id = format!("o{i}");
        let kind = kinds[r.gen_range(0..4)];
        write!(t, "{id} {kind} {} {} {} ", float(r), float(r), float(r)).unwrap();
        if r.gen_bool(0.5) {
            write!(t, "circle {}", nonneg(r)).unwrap();
        } else {
            write!(t, "box {} {}", nonneg(r), nonneg(r)).unwrap();
        }
        if i > 0 && kind == "item" && r.gen_bool(0.3) {
            write!(t, " on o{}", r.gen_range(0..i)).unwrap();
        }
        t.push('\n');
        objects.push(id);
    }
    t.push_str("AGENTS\n");
    let mut entities = objects.clone();
    let with_base = r.gen_bool(0.5);
    if with_base {
        writeln!(t, "rover base {} {} radius {}", float(r), float(r), nonneg(r)).unwrap();
        entities.push("rover".into());
    }
    for i in 0..r.gen_range(1..3) {
        write!(t, "arm{i} arm {} {} reach {}", float(r), float(r), nonneg(r)).unwrap();
        if with_base && r.gen_bool(0.5) {
            t.push_str(" mount rover");
        }
        t.push('\n');
        entities.push(format!("arm{i}"));
    }
    t.push_str("PREDICATES\n");
    let preds: Vec<(String, usize)> = (0..r.gen_range(1..4)).map(|i| (format!("q{i}"), r.gen_range(0..3))).collect();
    for (p, n) in &preds {
        writeln!(t, "{p} {n}").unwrap();
    }
    let pick = |r: &mut ChaCha8Rng, pool: &[String]| pool[r.gen_range(0..pool.len())].clone();
    let fact = |r: &mut ChaCha8Rng, pool: &[String]| {
        let (p, n) = &preds[r.gen_range(0..preds.len())];
        let args: Vec<String> = (0..*n).map(|_| pick(r, pool)).collect();
        format!("{p}({})", args.join(","))
    };
    t.push_str("ACTIONS\n");
    let mut actions = Vec::new();
    for i in 0..r.gen_range(1..3) {
        let params: Vec<String> = (0..r.gen_range(1..3)).map(|k| format!("?v{k}")).collect();
        let mut pool = params.clone();
        pool.extend(entities.iter().cloned());
        writeln!(t, "action a{i} {}", params.join(" ")).unwrap();
        let pre: Vec<String> = (0..r.gen_range(0..3)).map(|_| fact(r, &pool)).collect();
        let add: Vec<String> = (0..r.gen_range(0..2)).map(|_| fact(r, &pool)).collect();
        let del: Vec<String> = (0..r.gen_range(0..2)).map(|_| fact(r, &pool)).filter(|f| !add.contains(f)).collect();
        for (kw, fs) in [("pre", &pre), ("add", &add), ("del", &del)] {
            let line = std::iter::once(kw.to_string()).chain(fs.iter().cloned()).collect::<Vec<_>>().join(" ");
            writeln!(t, "{line}").unwrap();
        }
        let motion = match r.gen_range(0..5) {
            0 => format!("transit {}", pick(r, &pool)),
            1 => format!("transfer {} {}", pick(r, &pool), if r.gen_bool(0.5) { "-".into() } else { pick(r, &pool) }),
            2 => format!("handover {} {}", pick(r, &pool), pick(r, &pool)),
            3 => "symbolic".into(),
            _ => format!("wait {}", nonneg(r)),
        };
        writeln!(t, "motion {motion}\nend").unwrap();
        actions.push((format!("a{i}"), params.len()));
    }
    t.push_str("INIT\n");
    for _ in 0..r.gen_range(0..4) {
        writeln!(t, "{}", fact(r, &entities)).unwrap();
    }
    t.push_str("GOAL\n");
    for _ in 0..r.gen_range(1..3) {
        writeln!(t, "{}", fact(r, &entities)).unwrap();
    }
    t.push_str("GRAPH\nnode 0 root done\nnode 1 failure failed\n");
    let leaves = r.gen_range(1..4);
    for k in 0..leaves {
        writeln!(t, "node {} leaf {}", 2 + k, fact(r, &entities)).unwrap();
    }
    let mid = 2 + leaves;
    writeln!(t, "node {mid} internal step").unwrap();
    let call = |r: &mut ChaCha8Rng| {
        let (a, n) = &actions[r.gen_range(0..actions.len())];
        let args: Vec<String> = (0..*n).map(|_| pick(r, &entities)).collect();
        format!("{a}({})", args.join(","))
    };
    let kids: Vec<String> = (2..mid).map(|k| k.to_string()).collect();
    writeln!(t, "arc 0 {mid} {} {} {}", kids.join(","), nonneg(r), call(r)).unwrap();
    writeln!(t, "arc 1 0 {mid} {}", nonneg(r)).unwrap();
    if r.gen_bool(0.5) {
        writeln!(t, "arc 2 0 2 {} {} {}", nonneg(r), call(r), call(r)).unwrap();
    }
    if r.gen_bool(0.5) {
        t.push_str("STAGES\nstage fix ?x\n");
        let (p, n) = preds.iter().find(|(_, n)| *n > 0).cloned().unwrap_or(("q0".into(), 0));
        if n > 0 {
            let args: Vec<String> = (0..n).map(|k| if k == 0 { "?x".into() } else { format!("?y{k}") }).collect();
            writeln!(t, "bind {p}({})", args.join(",")).unwrap();
        }
        t.push_str("node 0 root fixed\nnode 1 failure failed\nnode 2 leaf ");
        t.push_str(&fact(r, &entities));
        t.push_str("\narc 0 0 2 1.0\nend\n");
    }
    t
}

pub const REACH: f64 = 0.8;

fn item(id: &str, p: Point, r: f64) -> Object {
    Object {
        id: id.into(),
        kind: ObjectKind::Item,
        pose: Pose { x: p.x, y: p.y, yaw: 0.0 },
        footprint: Footprint::Circle { r },
        stack_on: None,
    }
}

fn polar(d: f64, a: f64) -> Point {
    Point::new(d * a.cos(), d * a.sin())
}

/// One arm at the origin, a target, a goal slot and clutter, much of it
/// dropped along the straight line to the target.
pub fn random_world(r: &mut ChaCha8Rng) -> (World, MotionQuery) {
    loop {
        let target = polar(r.gen_range(0.25..0.95), r.gen_range(0.3..2.8));
        let slot = polar(r.gen_range(0.3..0.7), r.gen_range(0.3..2.8));
        let mut objects = vec![item("target", target, 0.03)];
        objects.push(Object {
            id: "goal".into(),
            kind: ObjectKind::Slot,
            pose: Pose { x: slot.x, y: slot.y, yaw: 0.0 },
            footprint: Footprint::Circle { r: 0.0 },
            stack_on: None,
        });
        for k in 0..r.gen_range(2..9) {
            let p = if k % 2 == 0 {
                let to = if r.gen_bool(0.5) { target } else { slot };
                to.scale(r.gen_range(0.35..0.85)).add(Point::new(r.gen_range(-0.03..0.03), r.gen_range(-0.03..0.03)))
            } else {
                polar(r.gen_range(0.2..0.9), r.gen_range(0.0..3.14))
            };
            objects.push(item(&format!("c{k}"), p, r.gen_range(0.02..0.06)));
        }
        if r.gen_bool(0.2) {
            let mut lid = item("lid", target, 0.02);
            lid.stack_on = Some("target".into());
            objects.push(lid);
        }
        let clear_of_start = objects.iter().all(|o| o.pose.point().norm() > 0.15);
        let spaced = objects.iter().enumerate().all(|(i, a)| {
            objects[i + 1..].iter().all(|b| {
                a.stack_on.is_some() || b.stack_on.is_some() || a.pose.point().dist(b.pose.point()) > 0.13
            })
        });
        if !clear_of_start || !spaced {
            continue;
        }
        let arm = Agent {
            id: "arm".into(),
            kind: AgentKind::Arm,
            anchor: Point::new(0.0, 0.0),
            reach: REACH,
            radius: 0.0,
            mount: None,
            holding: None,
            config: HOME_OFFSET,
        };
        let world = World::new(objects, vec![arm], []);
        if world.validate().is_err() {
            continue;
        }
        let q = MotionQuery {
            agent: "arm".into(),
            class: MotionClass::Transfer,
            start: HOME_OFFSET,
            goal_region: GoalRegion { center: slot, half: 0.0 },
            offset: Point::default(),
            manipulated: Some("target".into()),
            goal_entity: Some("goal".into()),
            max_expansions: DEFAULT_BUDGET,
        };
        return (world, q);
    }
}
