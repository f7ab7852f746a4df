//! The top-level planning loop, its trace and its metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::domain::{apply_action, is_goal, Action, Fact, MotionClass};
use crate::dsl::Scenario;
use crate::interface::{dispatch, ground, OutcomeStatus, Part, PlanningBudget, TaskOutcome, BLOCKED};
use crate::search::{
    next_feasible_states, next_optimal_state, transition_record, Candidate, GraphNetwork, SearchError, Transition,
    TransitionReason, DEFAULT_DEPTH_CAP,
};
use crate::world::{plan_motion_calls, AgentKind, ObjectKind, WorldState, DEFAULT_BUDGET, GRID_RESOLUTION};

pub const OBSTRUCTS: &str = "obstructs";
pub const DEFAULT_MAX_STEPS: usize = 4096;

pub const TABLE2_ROWS: [&str; 5] = [
    "AND/OR Graph expansion",
    "Graph Net Search",
    "Motion Planner (right arm)",
    "Motion Planner (left arm)",
    "Motion Planner (base)",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub depth_cap: usize,
    pub retries: u32,
    pub grid_resolution: f64,
    pub max_expansions: u64,
    /// Loop iterations before the run is abandoned as a livelock.
    pub max_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            depth_cap: DEFAULT_DEPTH_CAP,
            retries: crate::interface::DEFAULT_RETRIES,
            grid_resolution: GRID_RESOLUTION,
            max_expansions: DEFAULT_BUDGET,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: &str| Err(PlannerError::ConfigInvalid(m.to_string()));
        if self.depth_cap == 0 {
            return bad("depth cap must be positive");
        }
        if !(self.grid_resolution.is_finite() && self.grid_resolution > 0.0) {
            return bad("grid resolution must be positive");
        }
        if self.max_expansions == 0 || self.max_steps == 0 {
            return bad("budgets must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FinalStatus {
    GoalAchieved,
    DepthLimit,
    Unsolvable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Decision {
    ExpandWithKnowledge(Vec<Fact>),
    TryNextCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub graph: usize,
    pub candidate: Candidate,
    pub outcomes: Vec<TaskOutcome>,
    /// Signature of the world the candidate was chosen in.
    pub world_signature: String,
    /// Simulated clock after the step.
    pub clock: f64,
    /// Derived facts after execution equal the symbolic prediction.
    pub chain_ok: bool,
    pub decision: Option<Decision>,
}

impl Step {
    pub fn executed(&self) -> bool {
        !self.outcomes.is_empty() && self.outcomes.iter().all(|o| o.status == OutcomeStatus::Executed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub expansion_wall_s: Vec<f64>,
    pub search_wall_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanTrace {
    pub steps: Vec<Step>,
    pub transitions: Vec<Transition>,
    pub final_status: FinalStatus,
    pub metrics: MetricsReport,
    pub network: GraphNetwork,
    pub initial_world: WorldState,
    pub final_world: WorldState,
    pub plan_motion_calls: u64,
    pub timings: Timings,
    pub agent_kinds: BTreeMap<String, AgentKind>,
    /// Movable objects in the scenario.
    pub objects: usize,
    /// Line-delimited record stream, in the order things happened.
    pub records: Vec<Value>,
}

impl PlanTrace {
    pub fn depth(&self) -> usize {
        self.network.depth()
    }

    /// Executed actions, one per committed move (handover legs count once).
    pub fn executed_actions(&self) -> Vec<&TaskOutcome> {
        self.steps
            .iter()
            .filter(|s| s.executed())
            .flat_map(|s| s.outcomes.iter())
            .filter(|o| !matches!(o.part, Part::HandoverPlace { .. }))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AgentMetrics {
    pub motion_wall_s: f64,
    pub attempts: u64,
    pub executed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub depth: usize,
    pub objects: usize,
    pub executed_actions: usize,
    pub handovers: usize,
    pub motion_failures: usize,
    pub task_planning_wall_s: f64,
    pub per_agent: BTreeMap<String, AgentMetrics>,
    /// (row name, mean, population standard deviation), in [`TABLE2_ROWS`] order.
    pub modules: Vec<(String, f64, f64)>,
    pub sim_clock: f64,
    pub final_status: FinalStatus,
}

/// Which table column an agent's numbers land in.
pub fn agent_side(id: &str, kind: AgentKind) -> &'static str {
    match kind {
        AgentKind::Base => "base",
        AgentKind::Arm if id.contains("left") => "left",
        AgentKind::Arm => "right",
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

pub fn metrics(trace: &PlanTrace) -> MetricsReport {
    let kinds: BTreeMap<&str, AgentKind> = trace.agent_kinds.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut per_agent: BTreeMap<String, AgentMetrics> =
        kinds.keys().map(|k| (k.to_string(), AgentMetrics::default())).collect();
    let mut side_samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for o in trace.steps.iter().flat_map(|s| s.outcomes.iter()) {
        let Some(a) = &o.agent else { continue };
        let m = per_agent.entry(a.clone()).or_default();
        m.motion_wall_s += o.motion_wall_s;
        m.attempts += o.attempts as u64;
        if o.status == OutcomeStatus::Executed {
            m.executed += 1;
        }
        if o.attempts > 0 {
            let side = agent_side(a, kinds.get(a.as_str()).copied().unwrap_or(AgentKind::Arm));
            side_samples.entry(side).or_default().push(o.motion_wall_s);
        }
    }
    let rows = [
        mean_std(&trace.timings.expansion_wall_s),
        mean_std(&trace.timings.search_wall_s),
        mean_std(side_samples.get("right").map(Vec::as_slice).unwrap_or(&[])),
        mean_std(side_samples.get("left").map(Vec::as_slice).unwrap_or(&[])),
        mean_std(side_samples.get("base").map(Vec::as_slice).unwrap_or(&[])),
    ];
    let executed = trace.executed_actions();
    MetricsReport {
        depth: trace.depth(),
        objects: trace.objects,
        executed_actions: executed.len(),
        handovers: executed.iter().filter(|o| matches!(o.part, Part::HandoverPick { .. })).count(),
        motion_failures: trace.transitions.iter().filter(|t| t.reason == TransitionReason::MotionFailure).count(),
        task_planning_wall_s: trace.timings.expansion_wall_s.iter().sum::<f64>() + trace.timings.search_wall_s.iter().sum::<f64>(),
        per_agent,
        modules: TABLE2_ROWS.iter().zip(rows).map(|(n, (m, s))| (n.to_string(), m, s)).collect(),
        sim_clock: trace.final_world.clock,
        final_status: trace.final_status,
    }
}

impl MetricsReport {
    fn side_sum(&self, side: &str, kinds: &BTreeMap<String, AgentKind>) -> (f64, u64) {
        self.per_agent
            .iter()
            .filter(|(id, _)| agent_side(id, kinds.get(*id).copied().unwrap_or(AgentKind::Arm)) == side)
            .fold((0.0, 0), |(t, a), (_, m)| (t + m.motion_wall_s, a + m.attempts))
    }

    pub fn total_attempts(&self) -> u64 {
        self.per_agent.values().map(|m| m.attempts).sum()
    }

    /// The metrics document; field names follow the report tables.
    pub fn to_json(&self, kinds: &BTreeMap<String, AgentKind>) -> Value {
        let (rt, ra) = self.side_sum("right", kinds);
        let (lt, la) = self.side_sum("left", kinds);
        let agents: serde_json::Map<String, Value> = self
            .per_agent
            .iter()
            .map(|(id, m)| {
                (id.clone(), json!({ "motion_wall_s": m.motion_wall_s, "attempts": m.attempts, "executed": m.executed }))
            })
            .collect();
        json!({
            "final_status": self.final_status,
            "d": self.depth,
            "executed_actions": self.executed_actions,
            "handovers": self.handovers,
            "motion_failure_expansions": self.motion_failures,
            "total_attempts": self.total_attempts(),
            "sim_clock": self.sim_clock,
            "table1": {
                "Objects": self.objects,
                "d": self.depth,
                "TP [s]": self.task_planning_wall_s,
                "Right MP [s]": rt,
                "Right attempts": ra,
                "Left MP [s]": lt,
                "Left attempts": la,
            },
            "table2": self.modules.iter().map(|(n, m, s)| json!({ "module": n, "Avg. time [s]": m, "Std. dev. [s]": s })).collect::<Vec<_>>(),
            "agents": agents,
        })
    }
}

/// Nulls every wall-clock field: keys containing `[s]` or ending in `_wall_s`.
pub fn mask_wall_clock(v: &mut Value) {
    match v {
        Value::Object(m) => {
            for (k, x) in m.iter_mut() {
                if k.contains("[s]") || k.ends_with("_wall_s") {
                    *x = Value::Null;
                } else {
                    mask_wall_clock(x);
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(mask_wall_clock),
        _ => {}
    }
}

/// Masks a JSON document, or each line of a record stream.
pub fn mask_text(text: &str) -> String {
    if let Ok(mut v) = serde_json::from_str::<Value>(text) {
        mask_wall_clock(&mut v);
        return serde_json::to_string_pretty(&v).unwrap();
    }
    text.lines()
        .map(|l| match serde_json::from_str::<Value>(l) {
            Ok(mut v) => {
                mask_wall_clock(&mut v);
                v.to_string()
            }
            Err(_) => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Chooses how to continue after a failed outcome.
pub fn handle_failure(outcome: &TaskOutcome) -> Decision {
    match (outcome.status, &outcome.blocked_target) {
        (OutcomeStatus::MotionInfeasible, Some(t)) if !outcome.obstructors.is_empty() => {
            Decision::ExpandWithKnowledge(outcome.obstructors.iter().map(|o| Fact::new(OBSTRUCTS, &[o, t])).collect())
        }
        _ => Decision::TryNextCandidate,
    }
}

fn is_knowledge(f: &Fact) -> bool {
    f.predicate == OBSTRUCTS || f.predicate == BLOCKED
}

struct Loop<'a> {
    scenario: &'a Scenario,
    config: &'a RunConfig,
    net: GraphNetwork,
    world: crate::world::World,
    steps: Vec<Step>,
    timings: Timings,
    records: Vec<Value>,
    seen: BTreeSet<String>,
}

impl Loop<'_> {
    fn graph_record(&mut self) {
        let i = self.net.active;
        let g = &self.net.graphs[i];
        self.records.push(json!({
            "type": "graph",
            "index": i,
            "origin": self.net.origins[i],
            "nodes": g.node_count(),
            "arcs": g.base.arcs().len(),
        }));
    }

    /// Expands unless the same expansion was already made from this exact situation.
    fn expand(&mut self, reason: TransitionReason, knowledge: Vec<Fact>) -> Result<bool, SearchError> {
        let sig = self.world.signature();
        let origin = if reason == TransitionReason::MotionFailure { "stage" } else { "main" };
        let k: Vec<String> = knowledge.iter().map(|f| f.to_string()).collect();
        let key = format!("{origin}|{}|{sig}|{}", k.join(","), self.net.suppressed_for(&sig).join(";"));
        if reason != TransitionReason::StageComplete && !self.seen.insert(key) {
            return Ok(false);
        }
        let t0 = Instant::now();
        let mut world = self.world.clone();
        world.facts.extend(knowledge.iter().cloned());
        self.net.expand_network(self.scenario, &world, reason, knowledge)?;
        self.timings.expansion_wall_s.push(t0.elapsed().as_secs_f64());
        self.world = world;
        let t = self.net.transitions.last().unwrap();
        self.records.push(transition_record(self.net.transitions.len() - 1, t));
        self.graph_record();
        Ok(true)
    }

    fn run(&mut self) -> FinalStatus {
        let known = |id: &String| self.scenario.is_entity(id);
        if !self.scenario.goal.required.iter().all(|f| f.args.iter().all(known)) {
            return FinalStatus::Unsolvable;
        }
        let budget = PlanningBudget { retries: self.config.retries, max_expansions: self.config.max_expansions };
        for _ in 0..self.config.max_steps {
            let t0 = Instant::now();
            let state = self.world.symbolic();
            self.net.sync_leaves(&state);
            if is_goal(&state, &self.scenario.goal) {
                self.timings.search_wall_s.push(t0.elapsed().as_secs_f64());
                return FinalStatus::GoalAchieved;
            }
            if self.net.root_achieved() {
                self.timings.search_wall_s.push(t0.elapsed().as_secs_f64());
                match self.expand(TransitionReason::StageComplete, Vec::new()) {
                    Ok(_) => continue,
                    Err(_) => return FinalStatus::DepthLimit,
                }
            }
            let cands = next_feasible_states(&self.net, &self.world);
            let best = next_optimal_state(&cands);
            self.timings.search_wall_s.push(t0.elapsed().as_secs_f64());
            let Ok(mut best) = best else {
                match self.expand(TransitionReason::NoFeasibleState, Vec::new()) {
                    Ok(true) => continue,
                    Ok(false) => return FinalStatus::Unsolvable,
                    Err(_) => return FinalStatus::DepthLimit,
                }
            };
            let sig = self.world.signature();
            let before = self.world.clone();
            let actions: Option<Vec<Action>> = best.actions.iter().map(|c| self.scenario.action(c)).collect();
            let grounded = actions.as_ref().map(|a| ground(a, &[], &self.world));
            let (outcomes, next) = match (&actions, grounded) {
                (Some(_), Some(Ok(g))) => {
                    best.agents = g.queries.iter().map(|q| q.agent.clone()).collect::<BTreeSet<_>>().into_iter().collect();
                    dispatch(&g, &self.world, &budget).expect("grounded against the current world")
                }
                (_, res) => {
                    let mut o = failed_grounding(&best);
                    if let Some(Err(e)) = res {
                        o.detail = Some(e.to_string());
                    }
                    (vec![o], self.world.clone())
                }
            };
            let ok = !outcomes.is_empty() && outcomes.iter().all(|o| o.status == OutcomeStatus::Executed);
            let mut step = Step {
                graph: self.net.active,
                candidate: best.clone(),
                outcomes,
                world_signature: sig.clone(),
                clock: next.clock,
                chain_ok: false,
                decision: None,
            };
            self.world = next;
            if ok {
                let predicted = actions
                    .unwrap()
                    .iter()
                    .try_fold(before.symbolic(), |s, a| apply_action(&s, a));
                step.chain_ok = predicted.map(|p| p == self.world.symbolic()).unwrap_or(false);
                if step.outcomes.iter().any(|o| o.class != MotionClass::Symbolic && o.class != MotionClass::Wait) {
                    self.world.facts.retain(|f| !is_knowledge(f));
                }
                self.net.mark_fired(&best.arc);
                self.world.clock += 0.1;
                self.push_step(step);
                continue;
            }
            let failed = step.outcomes.iter().rev().find(|o| o.status != OutcomeStatus::Executed && o.status != OutcomeStatus::Aborted);
            let decision = failed.map(handle_failure).unwrap_or(Decision::TryNextCandidate);
            step.decision = Some(decision.clone());
            self.world.clock += 0.1;
            step.clock = self.world.clock;
            self.push_step(step);
            let expanded = match decision {
                Decision::ExpandWithKnowledge(k) => match self.expand(TransitionReason::MotionFailure, k) {
                    Ok(done) => done,
                    Err(SearchError::DepthLimitExceeded(_)) => return FinalStatus::DepthLimit,
                    Err(_) => false,
                },
                Decision::TryNextCandidate => false,
            };
            if !expanded {
                self.net.suppress(&best, &sig);
                if let Some(s) = self.steps.last_mut() {
                    s.decision = Some(Decision::TryNextCandidate);
                }
            }
        }
        FinalStatus::DepthLimit
    }

    fn push_step(&mut self, step: Step) {
        self.records.push(json!({
            "type": "step",
            "index": self.steps.len(),
            "graph": step.graph,
            "arc": step.candidate.arc.id,
            "node": step.candidate.node,
            "actions": step.candidate.actions,
            "agents": step.candidate.agents,
            "est_cost": step.candidate.est_cost,
            "on_solution": step.candidate.on_solution,
            "outcomes": step.outcomes,
            "world": step.world_signature,
            "clock": step.clock,
            "chain_ok": step.chain_ok,
            "decision": step.decision,
        }));
        self.steps.push(step);
    }
}

fn failed_grounding(c: &Candidate) -> TaskOutcome {
    TaskOutcome {
        action: c.actions.first().cloned().unwrap_or_else(|| crate::domain::ActionCall::new("noop", &[])),
        agent: None,
        class: MotionClass::Symbolic,
        part: Part::Single,
        status: OutcomeStatus::GroundingFailed,
        obstructors: Vec::new(),
        blocked_target: None,
        failed_leg: None,
        attempts: 0,
        task_wall_s: 0.0,
        motion_wall_s: 0.0,
        duration: 0.0,
        path_len: 0,
        detail: None,
    }
}

/// Runs the planner to completion on `scenario`.
pub fn run(scenario: &Scenario, config: &RunConfig) -> Result<PlanTrace, PlannerError> {
    config.validate()?;
    let calls0 = plan_motion_calls();
    let t0 = Instant::now();
    let net = GraphNetwork::from_scenario(scenario, config.depth_cap)?;
    let mut world = scenario.world();
    world.rng_seed = config.seed;
    world.params.resolution = config.grid_resolution;
    let initial_world = world.snapshot();
    let mut lp = Loop {
        scenario,
        config,
        net,
        world,
        steps: Vec::new(),
        timings: Timings { expansion_wall_s: vec![t0.elapsed().as_secs_f64()], search_wall_s: Vec::new() },
        records: Vec::new(),
        seen: BTreeSet::new(),
    };
    lp.graph_record();
    let final_status = lp.run();
    let final_world = lp.world.snapshot();
    let plan_calls = plan_motion_calls() - calls0;
    let mut records = lp.records;
    records.push(json!({ "type": "world", "snapshot": final_world }));
    records.push(json!({
        "type": "final",
        "status": final_status,
        "depth": lp.net.depth(),
        "steps": lp.steps.len(),
        "plan_motion_calls": plan_calls,
    }));
    let mut trace = PlanTrace {
        steps: lp.steps,
        transitions: lp.net.transitions.clone(),
        final_status,
        metrics: empty_metrics(final_status),
        network: lp.net,
        initial_world,
        final_world,
        plan_motion_calls: plan_calls,
        timings: lp.timings,
        agent_kinds: agent_kinds(scenario),
        objects: scenario.objects.values().filter(|o| o.kind == ObjectKind::Item).count(),
        records,
    };
    trace.metrics = metrics(&trace);
    Ok(trace)
}

fn empty_metrics(final_status: FinalStatus) -> MetricsReport {
    MetricsReport {
        depth: 1,
        objects: 0,
        executed_actions: 0,
        handovers: 0,
        motion_failures: 0,
        task_planning_wall_s: 0.0,
        per_agent: BTreeMap::new(),
        modules: Vec::new(),
        sim_clock: 0.0,
        final_status,
    }
}

/// Agent kinds by id, for the metrics document.
pub fn agent_kinds(scenario: &Scenario) -> BTreeMap<String, AgentKind> {
    scenario.agents.iter().map(|(k, a)| (k.clone(), a.kind)).collect()
}

pub fn metrics_document(trace: &PlanTrace) -> Value {
    trace.metrics.to_json(&trace.agent_kinds)
}
