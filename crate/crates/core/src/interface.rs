//! Grounding symbolic actions into motion queries and dispatching them.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::domain::{action_motion_class, apply_action, Action, ActionCall, Fact, MotionClass};
use crate::world::{Agent, AgentKind, GoalRegion, Leg, MotionQuery, ObjectKind, Point, World, DEFAULT_BUDGET};

pub const DEFAULT_RETRIES: u32 = 5;
/// Simulated seconds charged for a symbolic action.
pub const SYMBOLIC_DURATION: f64 = 1.0;
pub const HANDOVER_SPOT: &str = "handover_spot";
pub const BLOCKED: &str = "blocked";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanningBudget {
    pub retries: u32,
    pub max_expansions: u64,
}

impl Default for PlanningBudget {
    fn default() -> Self {
        PlanningBudget { retries: DEFAULT_RETRIES, max_expansions: DEFAULT_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Part {
    Single,
    /// First half of a handover: the giver places the object on `spot`.
    HandoverPlace { spot: String },
    /// Second half: the taker carries it from `spot` to the goal.
    HandoverPick { spot: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundedQuery {
    pub action: Action,
    pub agent: String,
    pub query: MotionQuery,
    pub part: Part,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingResult {
    pub queries: Vec<GroundedQuery>,
    pub skipped_symbolic: Vec<Action>,
    /// World signature the grounding was computed against.
    pub signature: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterfaceError {
    #[error("cannot ground `{action}`: {reason}")]
    GroundingFailed { action: ActionCall, reason: String },
    #[error("world changed since grounding")]
    StaleWorld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OutcomeStatus {
    Executed,
    MotionInfeasible,
    GroundingFailed,
    /// Planned, but not committed because a later leg of the same move failed.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskOutcome {
    pub action: ActionCall,
    pub agent: Option<String>,
    pub class: MotionClass,
    pub part: Part,
    pub status: OutcomeStatus,
    pub obstructors: Vec<String>,
    pub blocked_target: Option<String>,
    pub failed_leg: Option<Leg>,
    pub attempts: u32,
    pub task_wall_s: f64,
    pub motion_wall_s: f64,
    /// Simulated seconds spent executing.
    pub duration: f64,
    pub path_len: usize,
    /// Why grounding failed, when it did.
    pub detail: Option<String>,
}

impl TaskOutcome {
    fn new(action: &Action, agent: Option<&str>, class: MotionClass, part: Part) -> TaskOutcome {
        TaskOutcome {
            action: action.call(),
            agent: agent.map(str::to_string),
            class,
            part,
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
}

fn fail(action: &Action, reason: impl Into<String>) -> InterfaceError {
    InterfaceError::GroundingFailed { action: action.call(), reason: reason.into() }
}

fn allowed<'a>(world: &'a World, agents: &'a [String], kind: AgentKind) -> impl Iterator<Item = &'a Agent> {
    world.agents.values().filter(move |a| a.kind == kind && (agents.is_empty() || agents.contains(&a.id)))
}

/// Nearest agent (by anchor) among those satisfying `ok`; ties by id.
fn nearest<'a>(world: &World, pool: impl Iterator<Item = &'a Agent>, target: Point, ok: impl Fn(&Agent) -> bool) -> Option<&'a Agent> {
    pool.filter(|a| ok(a)).min_by(|a, b| {
        world.anchor_of(a).dist(target).total_cmp(&world.anchor_of(b).dist(target)).then(a.id.cmp(&b.id))
    })
}

fn spot_free(world: &World, spot: &str) -> bool {
    let p = world.objects[spot].pose.point();
    !world.objects.values().any(|o| o.kind == ObjectKind::Item && o.pose.point().dist(p) < 1e-6)
}

/// Goal box of a transfer: half of the manipulated object's inner radius.
fn region(world: &World, object: &str, goal: Point) -> GoalRegion {
    let half = world.objects.get(object).map(|o| 0.5 * o.footprint.inner_radius()).unwrap_or(0.0);
    GoalRegion { center: goal, half }
}

fn transfer_query(world: &World, agent: &Agent, object: &str, goal: Option<&str>, max: u64) -> MotionQuery {
    let center = match goal {
        Some(g) => world.objects[g].pose.point(),
        None => world.objects[object].pose.point(),
    };
    MotionQuery {
        agent: agent.id.clone(),
        class: MotionClass::Transfer,
        start: agent.config,
        goal_region: region(world, object, center),
        offset: Point::default(),
        manipulated: Some(object.to_string()),
        goal_entity: goal.map(str::to_string),
        max_expansions: max,
    }
}

/// Binds each geometric action to an agent and a motion query.
///
/// `agents` restricts the pool; empty means every agent. A transfer no
/// single arm can complete becomes a handover through a free, unblocked
/// `handover_spot` both arms reach.
pub fn ground(actions: &[Action], agents: &[String], world: &World) -> Result<GroundingResult, InterfaceError> {
    let mut out = GroundingResult { queries: Vec::new(), skipped_symbolic: Vec::new(), signature: world.signature() };
    let facts = world.symbolic();
    for action in actions {
        let b = action_motion_class(action);
        match b.class {
            MotionClass::Symbolic | MotionClass::Wait => out.skipped_symbolic.push(action.clone()),
            MotionClass::Transit => {
                let goal = b.goal.as_deref().unwrap();
                let target = world.object(goal).map_err(|e| fail(action, e.to_string()))?.pose.point();
                let base = nearest(world, allowed(world, agents, AgentKind::Base), target, |_| true)
                    .ok_or_else(|| fail(action, "no base agent"))?;
                let query = MotionQuery {
                    agent: base.id.clone(),
                    class: MotionClass::Transit,
                    start: base.config,
                    goal_region: GoalRegion { center: target, half: 0.0 },
                    offset: Point::default(),
                    manipulated: None,
                    goal_entity: Some(goal.to_string()),
                    max_expansions: DEFAULT_BUDGET,
                };
                out.queries.push(GroundedQuery { action: action.clone(), agent: base.id.clone(), query, part: Part::Single });
            }
            MotionClass::Transfer | MotionClass::Handover => {
                let object = b.object.as_deref().unwrap();
                let obj = world.object(object).map_err(|e| fail(action, e.to_string()))?.pose.point();
                let goal = match b.goal.as_deref() {
                    Some(g) => Some((g, world.object(g).map_err(|e| fail(action, e.to_string()))?.pose.point())),
                    None => None,
                };
                let holder = world.held_by(object).map(|a| a.id.clone());
                let can_grasp = |a: &Agent| match &holder {
                    Some(h) => *h == a.id,
                    None => a.holding.is_none() && world.reaches(a, obj),
                };
                let arms = || allowed(world, agents, AgentKind::Arm);
                if b.class == MotionClass::Transfer {
                    let direct = nearest(world, arms(), obj, |a| can_grasp(a) && goal.map(|(_, p)| world.reaches(a, p)).unwrap_or(true));
                    if let Some(a) = direct {
                        let query = transfer_query(world, a, object, goal.map(|g| g.0), DEFAULT_BUDGET);
                        out.queries.push(GroundedQuery { action: action.clone(), agent: a.id.clone(), query, part: Part::Single });
                        continue;
                    }
                }
                let Some((goal_id, goal_p)) = goal else {
                    return Err(fail(action, "no arm reaches the object"));
                };
                let giver = nearest(world, arms(), obj, can_grasp).ok_or_else(|| fail(action, "no arm reaches the object"))?;
                let taker = nearest(world, arms(), goal_p, |a| a.id != giver.id && a.holding.is_none() && world.reaches(a, goal_p))
                    .ok_or_else(|| fail(action, "no second arm reaches the goal"))?;
                let spot = facts
                    .facts
                    .iter()
                    .filter(|f| f.predicate == HANDOVER_SPOT && f.args.len() == 1)
                    .map(|f| f.args[0].as_str())
                    .filter(|h| world.objects.contains_key(*h))
                    .filter(|h| !facts.contains(&Fact::new(BLOCKED, &[h])))
                    .filter(|h| spot_free(world, h))
                    .find(|h| {
                        let p = world.objects[*h].pose.point();
                        world.reaches(giver, p) && world.reaches(taker, p)
                    })
                    .ok_or_else(|| fail(action, "no usable handover spot"))?;
                let place = transfer_query(world, giver, object, Some(spot), DEFAULT_BUDGET);
                let mut pick = transfer_query(world, taker, object, Some(goal_id), DEFAULT_BUDGET);
                pick.goal_region = region(world, object, goal_p);
                out.queries.push(GroundedQuery {
                    action: action.clone(),
                    agent: giver.id.clone(),
                    query: place,
                    part: Part::HandoverPlace { spot: spot.to_string() },
                });
                out.queries.push(GroundedQuery {
                    action: action.clone(),
                    agent: taker.id.clone(),
                    query: pick,
                    part: Part::HandoverPick { spot: spot.to_string() },
                });
            }
        }
    }
    Ok(out)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Offset for attempt `k` (0 is the region center), from a Halton
/// sequence shifted by the world seed.
pub fn sample_offset(region: &GoalRegion, seed: u64, k: u32) -> Point {
    if k == 0 || region.half == 0.0 {
        return Point::default();
    }
    let i = seed % 9973 + k as u64;
    let u = radical_inverse(i, 2);
    let v = radical_inverse(i, 3);
    Point::new((2.0 * u - 1.0) * region.half, (2.0 * v - 1.0) * region.half)
}

/// Plans and executes one grounded query on `world`, with retries.
fn run_query(world: &World, gq: &GroundedQuery, budget: &PlanningBudget) -> (TaskOutcome, Option<World>) {
    let t0 = Instant::now();
    let mut out = TaskOutcome::new(&gq.action, Some(&gq.agent), gq.query.class, gq.part.clone());
    let mut q = gq.query.clone();
    q.max_expansions = budget.max_expansions;
    q.start = match world.agents.get(&gq.agent) {
        Some(a) => a.config,
        None => {
            out.task_wall_s = t0.elapsed().as_secs_f64();
            return (out, None);
        }
    };
    if let Some(g) = &q.goal_entity {
        if let Some(o) = world.objects.get(g) {
            q.goal_region.center = o.pose.point();
        }
    }
    let tries = if q.goal_region.half > 0.0 { budget.retries + 1 } else { 1 };
    let mut first_failure = None;
    for k in 0..tries {
        q.offset = sample_offset(&q.goal_region, world.rng_seed, k);
        out.attempts += 1;
        let r = match world.plan_motion(&q) {
            Ok(r) => r,
            Err(_) => {
                out.status = OutcomeStatus::GroundingFailed;
                break;
            }
        };
        out.motion_wall_s += r.elapsed_wall_s;
        if r.feasible {
            let last = !matches!(gq.part, Part::HandoverPlace { .. });
            let next = match world.execute_motion(&gq.agent, &r) {
                Ok(w) => w,
                Err(_) => break,
            };
            let next = if last { next.apply_effects(&gq.action, 0.0) } else { next };
            out.status = OutcomeStatus::Executed;
            out.duration = next.clock - world.clock;
            out.path_len = r.path.len();
            out.task_wall_s = t0.elapsed().as_secs_f64();
            return (out, Some(next));
        }
        out.status = OutcomeStatus::MotionInfeasible;
        if first_failure.is_none() && !r.obstructors.is_empty() {
            first_failure = Some((r.obstructors.clone(), r.blocked_target.clone(), r.failed_leg));
        }
        if first_failure.is_none() && k + 1 == tries {
            first_failure = Some((Vec::new(), r.blocked_target.clone(), r.failed_leg));
        }
    }
    if let Some((obs, target, leg)) = first_failure {
        out.obstructors = obs;
        out.blocked_target = match (&gq.part, leg) {
            (Part::HandoverPick { spot }, Some(Leg::Approach)) => Some(spot.clone()),
            _ => target,
        };
        out.failed_leg = leg;
    }
    out.task_wall_s = t0.elapsed().as_secs_f64();
    (out, None)
}

/// Executes a grounding in order, stopping at the first failure.
///
/// Both legs of a handover are simulated before either is committed.
/// Symbolic actions run after the geometric ones.
pub fn dispatch(g: &GroundingResult, world: &World, budget: &PlanningBudget) -> Result<(Vec<TaskOutcome>, World), InterfaceError> {
    if g.signature != world.signature() {
        return Err(InterfaceError::StaleWorld);
    }
    let mut outcomes = Vec::new();
    let mut cur = world.clone();
    let mut pending: Option<(TaskOutcome, World)> = None;
    for gq in &g.queries {
        if !matches!(gq.part, Part::HandoverPick { .. }) {
            if let Err(e) = apply_action(&cur.symbolic(), &gq.action) {
                let mut o = TaskOutcome::new(&gq.action, Some(&gq.agent), gq.query.class, gq.part.clone());
                o.detail = Some(e.to_string());
                outcomes.push(o);
                return Ok((outcomes, cur));
            }
        }
        let base = pending.as_ref().map(|(_, w)| w).unwrap_or(&cur);
        let (o, next) = run_query(base, gq, budget);
        match (next, &gq.part) {
            (Some(w), Part::HandoverPlace { .. }) => pending = Some((o, w)),
            (Some(w), _) => {
                if let Some((p, _)) = pending.take() {
                    outcomes.push(p);
                }
                outcomes.push(o);
                cur = w;
            }
            (None, _) => {
                if let Some((mut p, _)) = pending.take() {
                    p.status = OutcomeStatus::Aborted;
                    outcomes.push(p);
                }
                outcomes.push(o);
                return Ok((outcomes, cur));
            }
        }
    }
    for action in &g.skipped_symbolic {
        let t0 = Instant::now();
        let b = action_motion_class(action);
        let mut o = TaskOutcome::new(action, None, b.class, Part::Single);
        if let Err(e) = apply_action(&cur.symbolic(), action) {
            o.detail = Some(e.to_string());
            outcomes.push(o);
            return Ok((outcomes, cur));
        }
        let d = if b.class == MotionClass::Wait { b.duration } else { SYMBOLIC_DURATION };
        cur = cur.apply_effects(action, d);
        o.status = OutcomeStatus::Executed;
        o.duration = d;
        o.task_wall_s = t0.elapsed().as_secs_f64();
        outcomes.push(o);
    }
    Ok((outcomes, cur))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_offsets_stay_inside_the_region() {
        let r = GoalRegion { center: Point::new(1.0, 1.0), half: 0.02 };
        assert_eq!(sample_offset(&r, 7, 0), Point::default());
        let mut seen = Vec::new();
        for k in 1..=20 {
            let o = sample_offset(&r, 7, k);
            assert!(r.contains(r.center.add(o)));
            assert!(!seen.contains(&o));
            seen.push(o);
        }
    }

    #[test]
    fn radical_inverse_matches_known_values() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(2, 3) - 2.0 / 3.0).abs() < 1e-12);
    }
}
