//! Planar top-down world: objects, agents, the grid motion planner and
//! obstructor diagnosis.
//!
//! An arm is modelled as the segment from its anchor to its end effector; a
//! configuration is free when that segment keeps `clearance` from every
//! obstacle footprint. A base is a disc moving over the floor.

use std::cell::Cell;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{Action, Fact, MotionClass, SymbolicState, POSE_TOLERANCE};

pub const GRID_RESOLUTION: f64 = 0.02;
pub const CLEARANCE: f64 = 0.01;
pub const DEFAULT_BUDGET: u64 = 50_000;
/// End-effector rest position relative to the arm anchor.
pub const HOME_OFFSET: Point = Point { x: 0.0, y: 0.05 };
pub const ARM_SPEED: f64 = 0.25;
pub const BASE_SPEED: f64 = 0.5;
/// Predicates the perception stub derives from geometry.
pub const PERCEIVED: [&str; 5] = ["on", "clear", "at", "holding", "held"];

thread_local! {
    static PLAN_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of `plan_motion` calls made on this thread so far.
pub fn plan_motion_calls() -> u64 {
    PLAN_CALLS.with(|c| c.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }
    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Footprint {
    Circle { r: f64 },
    /// Axis-aligned box with half extents.
    Box { hx: f64, hy: f64 },
}

impl Footprint {
    /// Radius of the largest disc inscribed in the footprint.
    pub fn inner_radius(&self) -> f64 {
        match *self {
            Footprint::Circle { r } => r,
            Footprint::Box { hx, hy } => hx.min(hy),
        }
    }

    fn point_distance(&self, center: Point, p: Point) -> f64 {
        match *self {
            Footprint::Circle { r } => center.dist(p) - r,
            Footprint::Box { hx, hy } => {
                let dx = (p.x - center.x).abs() - hx;
                let dy = (p.y - center.y).abs() - hy;
                let outside = Point::new(dx.max(0.0), dy.max(0.0)).norm();
                outside + dx.max(dy).min(0.0)
            }
        }
    }

    fn segment_distance(&self, center: Point, a: Point, b: Point) -> f64 {
        match *self {
            Footprint::Circle { r } => point_segment_distance(center, a, b) - r,
            Footprint::Box { hx, hy } => {
                if segment_hits_box(center, hx, hy, a, b) {
                    return 0.0;
                }
                let corners = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
                    .map(|(dx, dy)| Point::new(center.x + dx, center.y + dy));
                let mut d = self.point_distance(center, a).min(self.point_distance(center, b));
                for c in corners {
                    d = d.min(point_segment_distance(c, a, b));
                }
                d
            }
        }
    }
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a.add(ab.scale(t)))
}

/// Liang-Barsky clip of segment `ab` against the box.
fn segment_hits_box(c: Point, hx: f64, hy: f64, a: Point, b: Point) -> bool {
    let d = b.sub(a);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-d.x, a.x - (c.x - hx)),
        (d.x, (c.x + hx) - a.x),
        (-d.y, a.y - (c.y - hy)),
        (d.y, (c.y + hy) - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ObjectKind {
    /// Movable, graspable object.
    Item,
    /// Immovable tabletop obstacle.
    Fixture,
    /// Floor furniture: blocks the base, supports items, invisible to arms.
    Surface,
    /// Named placement pose with no physical extent.
    Slot,
}

impl ObjectKind {
    /// Whether another object can be stacked on this one.
    pub fn supports(self) -> bool {
        self != ObjectKind::Slot
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ObjectKind::Item => "item",
            ObjectKind::Fixture => "fixture",
            ObjectKind::Surface => "surface",
            ObjectKind::Slot => "slot",
        }
    }

    pub fn from_keyword(s: &str) -> Option<ObjectKind> {
        Some(match s {
            "item" => ObjectKind::Item,
            "fixture" => ObjectKind::Fixture,
            "surface" => ObjectKind::Surface,
            "slot" => ObjectKind::Slot,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Object {
    pub id: String,
    pub kind: ObjectKind,
    pub pose: Pose,
    pub footprint: Footprint,
    pub stack_on: Option<String>,
}

impl Object {
    pub fn movable(&self) -> bool {
        self.kind == ObjectKind::Item
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum AgentKind {
    Arm,
    Base,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agent {
    pub id: String,
    pub kind: AgentKind,
    /// Shoulder position for arms (an offset from the base when mounted),
    /// current pose for a base.
    pub anchor: Point,
    /// Arm reach; zero for a base.
    pub reach: f64,
    /// Base footprint radius; zero for an arm.
    pub radius: f64,
    pub mount: Option<String>,
    pub holding: Option<String>,
    pub config: Point,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("world changed since planning")]
    StaleResult,
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("invalid world: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryParams {
    pub resolution: f64,
    pub clearance: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams { resolution: GRID_RESOLUTION, clearance: CLEARANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct World {
    pub objects: BTreeMap<String, Object>,
    pub agents: BTreeMap<String, Agent>,
    /// Facts not derived from geometry.
    pub facts: BTreeSet<Fact>,
    /// Declared predicates that the perception stub derives.
    pub perceived: BTreeSet<String>,
    pub clock: f64,
    pub rng_seed: u64,
    pub params: GeometryParams,
}

/// Axis-aligned goal box for an end effector or base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoalRegion {
    pub center: Point,
    pub half: f64,
}

impl GoalRegion {
    pub fn contains(&self, p: Point) -> bool {
        (p.x - self.center.x).abs() <= self.half + 1e-12 && (p.y - self.center.y).abs() <= self.half + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionQuery {
    pub agent: String,
    pub class: MotionClass,
    pub start: Point,
    pub goal_region: GoalRegion,
    /// Sampled end-effector offset; the goal configuration is the region
    /// center plus this offset, and grasps use the same offset.
    pub offset: Point,
    pub manipulated: Option<String>,
    /// Entity whose pose the manipulated object is placed on.
    pub goal_entity: Option<String>,
    pub max_expansions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Leg {
    Approach,
    Carry,
    Return,
    Travel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionResult {
    pub feasible: bool,
    pub path: Vec<Point>,
    pub expansions_used: u64,
    pub obstructors: Vec<String>,
    pub failed_leg: Option<Leg>,
    /// Entity the failed leg was heading for.
    pub blocked_target: Option<String>,
    pub elapsed_wall_s: f64,
    pub query: MotionQuery,
    pub signature: String,
}

impl MotionResult {
    pub fn length(&self) -> f64 {
        self.path.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectState {
    pub id: String,
    pub pose: Pose,
    pub stack_on: Option<String>,
    pub held_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentState {
    pub id: String,
    pub config: Point,
    pub holding: Option<String>,
}

/// Perception output: ground-truth geometry plus derived and stored facts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldState {
    pub objects: Vec<ObjectState>,
    pub agents: Vec<AgentState>,
    pub clock: f64,
    pub facts: SymbolicState,
    pub signature: String,
}

struct Obstacle<'a> {
    id: &'a str,
    center: Point,
    footprint: Footprint,
    movable: bool,
}

struct Plan {
    path: Vec<Point>,
    expansions: u64,
    failed: Option<Leg>,
}

impl World {
    pub fn new(objects: Vec<Object>, agents: Vec<Agent>, facts: impl IntoIterator<Item = Fact>) -> World {
        let mut w = World {
            objects: objects.into_iter().map(|o| (o.id.clone(), o)).collect(),
            agents: agents.into_iter().map(|a| (a.id.clone(), a)).collect(),
            facts: facts.into_iter().collect(),
            perceived: PERCEIVED.iter().map(|s| s.to_string()).collect(),
            clock: 0.0,
            rng_seed: 0,
            params: GeometryParams::default(),
        };
        w.facts.retain(|f| !w.perceived.contains(&f.predicate));
        w
    }

    pub fn object(&self, id: &str) -> Result<&Object, WorldError> {
        self.objects.get(id).ok_or_else(|| WorldError::UnknownEntity(id.to_string()))
    }

    pub fn agent(&self, id: &str) -> Result<&Agent, WorldError> {
        self.agents.get(id).ok_or_else(|| WorldError::UnknownEntity(id.to_string()))
    }

    /// Absolute shoulder position of an arm, or the pose of a base.
    pub fn anchor_of(&self, agent: &Agent) -> Point {
        match agent.kind {
            AgentKind::Base => agent.config,
            AgentKind::Arm => match agent.mount.as_ref().and_then(|m| self.agents.get(m)) {
                Some(base) => base.config.add(agent.anchor),
                None => agent.anchor,
            },
        }
    }

    pub fn home_of(&self, agent: &Agent) -> Point {
        match agent.kind {
            AgentKind::Arm => self.anchor_of(agent).add(HOME_OFFSET),
            AgentKind::Base => agent.config,
        }
    }

    /// Whether `p` lies in an arm's reach disc.
    pub fn reaches(&self, agent: &Agent, p: Point) -> bool {
        agent.kind == AgentKind::Arm && self.anchor_of(agent).dist(p) <= agent.reach + 1e-12
    }

    /// The object and everything it rests on.
    pub fn tower(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = Some(id.to_string());
        while let Some(c) = cur {
            if out.contains(&c) {
                break;
            }
            cur = self.objects.get(&c).and_then(|o| o.stack_on.clone());
            out.push(c);
        }
        out
    }

    pub fn stacked_on(&self, id: &str) -> Vec<String> {
        self.objects.values().filter(|o| o.stack_on.as_deref() == Some(id)).map(|o| o.id.clone()).collect()
    }

    pub fn held_by(&self, object: &str) -> Option<&Agent> {
        self.agents.values().find(|a| a.holding.as_deref() == Some(object))
    }

    /// Checks stacking acyclicity, holding uniqueness and footprint overlap.
    pub fn validate(&self) -> Result<(), WorldError> {
        for o in self.objects.values() {
            if let Some(s) = &o.stack_on {
                self.object(s)?;
            }
            let t = self.tower(&o.id);
            if let Some(last) = t.last() {
                if self.objects.get(last).and_then(|x| x.stack_on.as_ref()).is_some() {
                    return Err(WorldError::Invalid(format!("stacking cycle through `{}`", o.id)));
                }
            }
        }
        let mut held = BTreeSet::new();
        for a in self.agents.values() {
            if let Some(h) = &a.holding {
                self.object(h)?;
                if !held.insert(h.clone()) {
                    return Err(WorldError::Invalid(format!("`{h}` held twice")));
                }
            }
            if let Some(m) = &a.mount {
                if self.agent(m)?.kind != AgentKind::Base {
                    return Err(WorldError::Invalid(format!("`{}` mounted on a non-base", a.id)));
                }
            }
        }
        let solid: Vec<&Object> = self
            .objects
            .values()
            .filter(|o| matches!(o.kind, ObjectKind::Item | ObjectKind::Fixture) && !held.contains(&o.id))
            .collect();
        for (i, a) in solid.iter().enumerate() {
            for b in &solid[i + 1..] {
                let ta = self.tower(&a.id);
                let tb = self.tower(&b.id);
                if ta.last() == tb.last() {
                    continue;
                }
                if overlap(a, b) < -1e-9 {
                    return Err(WorldError::Invalid(format!("`{}` overlaps `{}`", a.id, b.id)));
                }
            }
        }
        Ok(())
    }

    fn obstacles(&self, agent: &Agent, q: &MotionQuery) -> Vec<Obstacle<'_>> {
        let mut skip: BTreeSet<String> = BTreeSet::new();
        if let Some(m) = &q.manipulated {
            skip.extend(self.tower(m));
        }
        if let Some(g) = &q.goal_entity {
            skip.extend(self.tower(g));
        }
        skip.extend(self.agents.values().filter_map(|a| a.holding.clone()));
        self.objects
            .values()
            .filter(|o| !skip.contains(&o.id))
            .filter(|o| match agent.kind {
                AgentKind::Arm => matches!(o.kind, ObjectKind::Item | ObjectKind::Fixture),
                AgentKind::Base => matches!(o.kind, ObjectKind::Surface | ObjectKind::Fixture),
            })
            .map(|o| Obstacle { id: &o.id, center: o.pose.point(), footprint: o.footprint, movable: o.movable() })
            .collect()
    }

    fn hits<'a>(&self, agent: &Agent, anchor: Point, p: Point, obs: &'a [Obstacle<'a>]) -> impl Iterator<Item = &'a Obstacle<'a>> {
        let clearance = self.params.clearance;
        let kind = agent.kind;
        let radius = agent.radius;
        obs.iter().filter(move |o| match kind {
            AgentKind::Arm => o.footprint.segment_distance(o.center, anchor, p) <= clearance,
            AgentKind::Base => o.footprint.point_distance(o.center, p) <= radius + clearance,
        })
    }

    fn config_free(&self, agent: &Agent, anchor: Point, p: Point, obs: &[Obstacle<'_>]) -> bool {
        if agent.kind == AgentKind::Arm && anchor.dist(p) > agent.reach + 1e-12 {
            return false;
        }
        self.hits(agent, anchor, p, obs).next().is_none()
    }

    /// Collision indicator for an agent configuration against every obstacle
    /// the agent can touch (held objects excluded).
    pub fn in_collision(&self, agent_id: &str, p: Point) -> Result<bool, WorldError> {
        let agent = self.agent(agent_id)?;
        let q = MotionQuery {
            agent: agent_id.to_string(),
            class: MotionClass::Transit,
            start: p,
            goal_region: GoalRegion { center: p, half: 0.0 },
            offset: Point::default(),
            manipulated: None,
            goal_entity: None,
            max_expansions: 0,
        };
        let obs = self.obstacles(agent, &q);
        Ok(!self.config_free(agent, self.anchor_of(agent), p, &obs))
    }

    /// Collision indicator against the obstacles a given query considers.
    pub fn query_free(&self, q: &MotionQuery, p: Point) -> Result<bool, WorldError> {
        let agent = self.agent(&q.agent)?;
        let obs = self.obstacles(agent, q);
        Ok(self.config_free(agent, self.anchor_of(agent), p, &obs))
    }

    fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let pts = self.objects.values().map(|o| o.pose.point()).chain(self.agents.values().map(|a| a.config));
        for p in pts {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo.sub(Point::new(1.0, 1.0)), hi.add(Point::new(1.0, 1.0)))
    }

    /// Waypoints a query must visit after its start, with the leg reaching each.
    fn legs(&self, agent: &Agent, q: &MotionQuery) -> Result<Vec<(Point, Leg)>, Infeasible> {
        let home = self.home_of(agent);
        match q.class {
            MotionClass::Transit => Ok(vec![(q.goal_region.center.add(q.offset), Leg::Travel)]),
            _ => {
                let m = q.manipulated.as_deref().ok_or(Infeasible::Reach)?;
                let obj = self.objects.get(m).ok_or(Infeasible::Reach)?;
                let mut out = Vec::new();
                let grasping = agent.holding.as_deref() != Some(m);
                if grasping {
                    let grasp = obj.pose.point().add(q.offset);
                    if !self.reaches(agent, grasp) {
                        return Err(Infeasible::Reach);
                    }
                    out.push((grasp, Leg::Approach));
                }
                if q.goal_entity.is_some() {
                    let goal = q.goal_region.center.add(q.offset);
                    if !self.reaches(agent, goal) {
                        return Err(Infeasible::Reach);
                    }
                    out.push((goal, Leg::Carry));
                }
                let above = self.stacked_on(m);
                if grasping && !above.is_empty() {
                    return Err(Infeasible::Covered(above));
                }
                out.push((home, Leg::Return));
                Ok(out)
            }
        }
    }

    fn search(&self, agent: &Agent, q: &MotionQuery, ghost: bool, legs: &[(Point, Leg)]) -> Plan {
        let anchor = self.anchor_of(agent);
        let all = self.obstacles(agent, q);
        let obs: Vec<Obstacle<'_>> = all.into_iter().filter(|o| !(ghost && o.movable)).collect();
        let bounds = self.bounds();
        let free = |p: Point| {
            p.x >= bounds.0.x
                && p.y >= bounds.0.y
                && p.x <= bounds.1.x
                && p.y <= bounds.1.y
                && self.config_free(agent, anchor, p, &obs)
        };
        let mut path = vec![q.start];
        let mut used = 0u64;
        let mut from = q.start;
        for (target, leg) in legs {
            if !self.config_free(agent, anchor, *target, &obs) {
                return Plan { path: Vec::new(), expansions: used, failed: Some(*leg) };
            }
            let budget = q.max_expansions.saturating_sub(used);
            let (found, n) = grid_search(from, *target, self.params.resolution, &free, budget);
            used += n;
            match found {
                Some(p) => path.extend(p.into_iter().skip(1)),
                None => return Plan { path: Vec::new(), expansions: used, failed: Some(*leg) },
            }
            from = *target;
        }
        Plan { path, expansions: used, failed: None }
    }

    fn check_query<'a>(&'a self, q: &MotionQuery) -> Result<&'a Agent, WorldError> {
        let agent = self.agents.get(&q.agent).ok_or_else(|| WorldError::InvalidQuery(format!("unknown agent `{}`", q.agent)))?;
        match (q.class, agent.kind) {
            (MotionClass::Transit, AgentKind::Base) => {}
            (MotionClass::Transfer | MotionClass::Handover, AgentKind::Arm) => {}
            (c, k) => return Err(WorldError::InvalidQuery(format!("{c:?} query for {k:?} agent `{}`", agent.id))),
        }
        if !q.goal_region.contains(q.goal_region.center.add(q.offset)) {
            return Err(WorldError::InvalidQuery("goal sample outside its region".into()));
        }
        if let Some(m) = &q.manipulated {
            self.object(m).map_err(|_| WorldError::InvalidQuery(format!("unknown object `{m}`")))?;
            if let Some(h) = self.held_by(m) {
                if h.id != agent.id {
                    return Err(WorldError::InvalidQuery(format!("`{m}` is held by `{}`", h.id)));
                }
            }
        }
        if let Some(g) = &q.goal_entity {
            self.object(g).map_err(|_| WorldError::InvalidQuery(format!("unknown object `{g}`")))?;
        }
        let obs = self.obstacles(agent, q);
        if self.hits(agent, self.anchor_of(agent), q.start, &obs).next().is_some() {
            return Err(WorldError::InvalidQuery("start in collision".into()));
        }
        Ok(agent)
    }

    pub fn plan_motion(&self, q: &MotionQuery) -> Result<MotionResult, WorldError> {
        PLAN_CALLS.with(|c| c.set(c.get() + 1));
        let t0 = Instant::now();
        let agent = self.check_query(q)?;
        let signature = self.signature();
        let fail = |expansions, failed_leg, obstructors, blocked_target| MotionResult {
            feasible: false,
            path: Vec::new(),
            expansions_used: expansions,
            obstructors,
            failed_leg,
            blocked_target,
            elapsed_wall_s: t0.elapsed().as_secs_f64(),
            query: q.clone(),
            signature: signature.clone(),
        };
        let legs = match self.legs(agent, q) {
            Ok(l) => l,
            Err(Infeasible::Reach) => return Ok(fail(0, None, Vec::new(), None)),
            Err(Infeasible::Covered(above)) => {
                let mut rest = above.clone();
                let mut bare = self.clone();
                for o in &above {
                    bare.objects.remove(o);
                }
                if let Ok(legs) = bare.legs(agent, q) {
                    if bare.search(agent, q, false, &legs).failed.is_some() {
                        rest.extend(bare.diagnose(agent, q, &legs).into_iter().filter(|o| !above.contains(o)));
                    }
                }
                return Ok(fail(0, Some(Leg::Approach), rest, q.manipulated.clone()));
            }
        };
        let plan = self.search(agent, q, false, &legs);
        if let Some(leg) = plan.failed {
            let target = match leg {
                Leg::Approach => q.manipulated.clone(),
                Leg::Carry | Leg::Travel => q.goal_entity.clone(),
                Leg::Return => q.goal_entity.clone().or_else(|| q.manipulated.clone()),
            };
            let obstructors = self.diagnose(agent, q, &legs);
            return Ok(fail(plan.expansions, Some(leg), obstructors, target));
        }
        Ok(MotionResult {
            feasible: true,
            path: plan.path,
            expansions_used: plan.expansions,
            obstructors: Vec::new(),
            failed_leg: None,
            blocked_target: None,
            elapsed_wall_s: t0.elapsed().as_secs_f64(),
            query: q.clone(),
            signature,
        })
    }

    /// Movable objects lying on the path found when movables are ignored.
    pub fn obstructors(&self, q: &MotionQuery) -> Vec<String> {
        let Ok(agent) = self.check_query(q) else { return Vec::new() };
        match self.legs(agent, q) {
            Ok(legs) => self.diagnose(agent, q, &legs),
            Err(Infeasible::Covered(above)) => above,
            Err(Infeasible::Reach) => Vec::new(),
        }
    }

    fn diagnose(&self, agent: &Agent, q: &MotionQuery, legs: &[(Point, Leg)]) -> Vec<String> {
        let ghost = self.search(agent, q, true, legs);
        if ghost.failed.is_some() {
            return Vec::new();
        }
        let anchor = self.anchor_of(agent);
        let movable: Vec<Obstacle<'_>> = self.obstacles(agent, q).into_iter().filter(|o| o.movable).collect();
        let mut out: Vec<String> = Vec::new();
        for p in &ghost.path {
            for o in self.hits(agent, anchor, *p, &movable) {
                if !out.iter().any(|x| x == o.id) {
                    out.push(o.id.to_string());
                }
            }
        }
        out
    }

    /// Applies the geometric part of a planned motion.
    pub fn execute_motion(&self, agent_id: &str, result: &MotionResult) -> Result<World, WorldError> {
        if !result.feasible || result.signature != self.signature() || result.query.agent != agent_id {
            return Err(WorldError::StaleResult);
        }
        let mut w = self.clone();
        let end = *result.path.last().ok_or(WorldError::StaleResult)?;
        let q = &result.query;
        let agent = w.agent(agent_id)?.clone();
        match agent.kind {
            AgentKind::Base => {
                let delta = end.sub(agent.config);
                for a in w.agents.values_mut() {
                    if a.mount.as_deref() == Some(agent_id) {
                        a.config = a.config.add(delta);
                    }
                }
                let base = w.agents.get_mut(agent_id).unwrap();
                base.config = end;
                base.anchor = end;
                w.clock += result.length() / BASE_SPEED;
            }
            AgentKind::Arm => {
                let m = q.manipulated.clone().ok_or(WorldError::StaleResult)?;
                if agent.holding.as_deref() != Some(m.as_str()) {
                    w.objects.get_mut(&m).unwrap().stack_on = None;
                    w.agents.get_mut(agent_id).unwrap().holding = Some(m.clone());
                }
                if let Some(g) = &q.goal_entity {
                    let goal = w.object(g)?.clone();
                    let obj = w.objects.get_mut(&m).unwrap();
                    obj.pose.x = goal.pose.x;
                    obj.pose.y = goal.pose.y;
                    obj.stack_on = goal.kind.supports().then(|| g.clone());
                    w.agents.get_mut(agent_id).unwrap().holding = None;
                }
                w.agents.get_mut(agent_id).unwrap().config = end;
                w.clock += result.length() / ARM_SPEED;
            }
        }
        Ok(w)
    }

    /// Applies the stored-fact effects and duration of an action.
    pub fn apply_effects(&self, action: &Action, duration: f64) -> World {
        let mut w = self.clone();
        for f in &action.del {
            if !w.perceived.contains(&f.predicate) {
                w.facts.remove(f);
            }
        }
        for f in &action.add {
            if !w.perceived.contains(&f.predicate) {
                w.facts.insert(f.clone());
            }
        }
        w.clock += duration;
        w
    }

    pub fn execute(&self, agent: &str, result: &MotionResult, action: &Action) -> Result<World, WorldError> {
        Ok(self.execute_motion(agent, result)?.apply_effects(action, 0.0))
    }

    fn derived_facts(&self) -> BTreeSet<Fact> {
        let mut out = BTreeSet::new();
        let want = |p: &str| self.perceived.contains(p);
        let held: BTreeMap<&str, &str> =
            self.agents.values().filter_map(|a| a.holding.as_deref().map(|h| (h, a.id.as_str()))).collect();
        let slots: Vec<&Object> = self.objects.values().filter(|o| o.kind == ObjectKind::Slot).collect();
        let slot_at = |p: Point| slots.iter().find(|s| s.pose.point().dist(p) <= POSE_TOLERANCE);
        for o in self.objects.values() {
            if let Some(s) = &o.stack_on {
                if want("on") {
                    out.insert(Fact::new("on", &[&o.id, s]));
                }
            }
            if want("clear") && o.kind.supports() && !held.contains_key(o.id.as_str()) && self.stacked_on(&o.id).is_empty() {
                out.insert(Fact::new("clear", &[&o.id]));
            }
            if want("at") && o.kind == ObjectKind::Item && o.stack_on.is_none() && !held.contains_key(o.id.as_str()) {
                if let Some(s) = slot_at(o.pose.point()) {
                    out.insert(Fact::new("at", &[&o.id, &s.id]));
                }
            }
        }
        for (o, a) in &held {
            if want("holding") {
                out.insert(Fact::new("holding", &[a, o]));
            }
            if want("held") {
                out.insert(Fact::new("held", &[o]));
            }
        }
        if want("at") {
            for a in self.agents.values().filter(|a| a.kind == AgentKind::Base) {
                if let Some(s) = slot_at(a.config) {
                    out.insert(Fact::new("at", &[&a.id, &s.id]));
                }
            }
        }
        out
    }

    pub fn symbolic(&self) -> SymbolicState {
        let mut facts = self.derived_facts();
        facts.extend(self.facts.iter().cloned());
        SymbolicState { facts }
    }

    /// Hash of poses (1e-9 m resolution), stacks, holdings, configurations and facts.
    pub fn signature(&self) -> String {
        let r = |v: f64| format!("{:.9}", v + 0.0);
        let mut text = String::new();
        for o in self.objects.values() {
            text.push_str(&format!(
                "o {} {} {} {} {:?}\n",
                o.id,
                r(o.pose.x),
                r(o.pose.y),
                r(o.pose.yaw),
                o.stack_on
            ));
        }
        for a in self.agents.values() {
            text.push_str(&format!("a {} {} {} {:?}\n", a.id, r(a.config.x), r(a.config.y), a.holding));
        }
        for f in &self.facts {
            text.push_str(&format!("f {f}\n"));
        }
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn snapshot(&self) -> WorldState {
        WorldState {
            objects: self
                .objects
                .values()
                .map(|o| ObjectState {
                    id: o.id.clone(),
                    pose: o.pose,
                    stack_on: o.stack_on.clone(),
                    held_by: self.held_by(&o.id).map(|a| a.id.clone()),
                })
                .collect(),
            agents: self
                .agents
                .values()
                .map(|a| AgentState { id: a.id.clone(), config: a.config, holding: a.holding.clone() })
                .collect(),
            clock: self.clock,
            facts: self.symbolic(),
            signature: self.signature(),
        }
    }
}

enum Infeasible {
    Reach,
    Covered(Vec<String>),
}

fn overlap(a: &Object, b: &Object) -> f64 {
    match (a.footprint, b.footprint) {
        (Footprint::Circle { r }, f) => f.point_distance(b.pose.point(), a.pose.point()) - r,
        (f, Footprint::Circle { r }) => f.point_distance(a.pose.point(), b.pose.point()) - r,
        (Footprint::Box { hx, hy }, Footprint::Box { hx: bx, hy: by }) => {
            let dx = (a.pose.x - b.pose.x).abs() - hx - bx;
            let dy = (a.pose.y - b.pose.y).abs() - hy - by;
            dx.max(dy)
        }
    }
}

/// 8-connected A* on a grid anchored at `start`. Returns the path (exact
/// start and goal at the ends) and the number of expanded cells.
pub fn grid_search(
    start: Point,
    goal: Point,
    res: f64,
    free: &dyn Fn(Point) -> bool,
    budget: u64,
) -> (Option<Vec<Point>>, u64) {
    let cell_of = |p: Point| (((p.x - start.x) / res).round() as i64, ((p.y - start.y) / res).round() as i64);
    let center = |c: (i64, i64)| Point::new(start.x + c.0 as f64 * res, start.y + c.1 as f64 * res);
    let g_cell = cell_of(goal);
    let h = |c: (i64, i64)| {
        let dx = (c.0 - g_cell.0).unsigned_abs();
        let dy = (c.1 - g_cell.1).unsigned_abs();
        10 * dx.max(dy) + 4 * dx.min(dy)
    };
    let mut open = BinaryHeap::new();
    let mut best: HashMap<(i64, i64), u64> = HashMap::new();
    let mut parent: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
    let mut valid: HashMap<(i64, i64), bool> = HashMap::new();
    let mut counter = 0u64;
    let s = (0i64, 0i64);
    best.insert(s, 0);
    open.push(Reverse((h(s), h(s), counter, s)));
    let mut expanded = 0u64;
    while let Some(Reverse((_, _, _, c))) = open.pop() {
        let g = best[&c];
        if c == g_cell {
            let mut cells = vec![c];
            let mut cur = c;
            while let Some(p) = parent.get(&cur) {
                cells.push(*p);
                cur = *p;
            }
            cells.reverse();
            let mut path = vec![start];
            if cells.len() > 2 {
                path.extend(cells[1..cells.len() - 1].iter().map(|c| center(*c)));
            }
            if goal != start || cells.len() > 1 {
                path.push(goal);
            }
            return (Some(path), expanded);
        }
        if expanded >= budget {
            return (None, expanded);
        }
        expanded += 1;
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let n = (c.0 + dx, c.1 + dy);
            let step = if dx != 0 && dy != 0 { 14 } else { 10 };
            let ok = n == g_cell || *valid.entry(n).or_insert_with(|| free(center(n)));
            if !ok {
                continue;
            }
            let ng = g + step;
            if best.get(&n).is_some_and(|b| *b <= ng) {
                continue;
            }
            best.insert(n, ng);
            parent.insert(n, c);
            counter += 1;
            open.push(Reverse((ng + h(n), h(n), counter, n)));
        }
    }
    (None, expanded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(id: &str, x: f64, y: f64, reach: f64) -> Agent {
        let anchor = Point::new(x, y);
        Agent {
            id: id.into(),
            kind: AgentKind::Arm,
            anchor,
            reach,
            radius: 0.0,
            mount: None,
            holding: None,
            config: anchor.add(HOME_OFFSET),
        }
    }

    fn item(id: &str, x: f64, y: f64, footprint: Footprint) -> Object {
        Object { id: id.into(), kind: ObjectKind::Item, pose: Pose { x, y, yaw: 0.0 }, footprint, stack_on: None }
    }

    fn slot(id: &str, x: f64, y: f64) -> Object {
        Object {
            id: id.into(),
            kind: ObjectKind::Slot,
            pose: Pose { x, y, yaw: 0.0 },
            footprint: Footprint::Circle { r: 0.0 },
            stack_on: None,
        }
    }

    fn transfer(w: &World, object: &str, goal: &str) -> MotionQuery {
        let a = &w.agents["arm"];
        MotionQuery {
            agent: "arm".into(),
            class: MotionClass::Transfer,
            start: a.config,
            goal_region: GoalRegion { center: w.objects[goal].pose.point(), half: 0.0 },
            offset: Point::default(),
            manipulated: Some(object.into()),
            goal_entity: Some(goal.into()),
            max_expansions: DEFAULT_BUDGET,
        }
    }

    fn scene(extra: Vec<Object>) -> World {
        let mut objects = vec![item("cup", 0.0, 0.5, Footprint::Circle { r: 0.03 }), slot("dest", 0.3, 0.4)];
        objects.extend(extra);
        World::new(objects, vec![arm("arm", 0.0, 0.0, 0.8)], [])
    }

    #[test]
    fn free_transfer_is_feasible_and_valid() {
        let w = scene(vec![]);
        let q = transfer(&w, "cup", "dest");
        let r = w.plan_motion(&q).unwrap();
        assert!(r.feasible);
        assert_eq!(r.path.first(), Some(&w.agents["arm"].config));
        assert_eq!(r.path.last(), Some(&w.agents["arm"].config));
        for p in &r.path {
            assert!(w.query_free(&q, *p).unwrap());
        }
        for pair in r.path.windows(2) {
            assert!(pair[0].dist(pair[1]) <= GRID_RESOLUTION * 2f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn out_of_reach_goal_has_no_obstructors() {
        let w = scene(vec![slot("far", 2.0, 0.0)]);
        let r = w.plan_motion(&transfer(&w, "cup", "far")).unwrap();
        assert!(!r.feasible);
        assert!(r.obstructors.is_empty());
    }

    #[test]
    fn occluding_box_is_reported_and_its_removal_helps() {
        let w = scene(vec![item("crate", 0.0, 0.3, Footprint::Box { hx: 0.08, hy: 0.04 })]);
        let q = transfer(&w, "cup", "dest");
        let r = w.plan_motion(&q).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.obstructors, vec!["crate".to_string()]);
        assert_eq!(r.failed_leg, Some(Leg::Approach));
        assert_eq!(r.blocked_target.as_deref(), Some("cup"));
        let mut cleared = w.clone();
        cleared.objects.remove("crate");
        assert!(cleared.plan_motion(&q).unwrap().feasible);
    }

    #[test]
    fn execute_places_and_detects_stale_results() {
        let w = scene(vec![]);
        let r = w.plan_motion(&transfer(&w, "cup", "dest")).unwrap();
        let after = w.execute_motion("arm", &r).unwrap();
        assert_eq!(after.objects["cup"].pose.point(), Point::new(0.3, 0.4));
        assert_eq!(after.agents["arm"].holding, None);
        assert!(after.clock > 0.0);
        assert_eq!(after.objects.len(), w.objects.len());
        let mut moved = w.clone();
        moved.objects.get_mut("cup").unwrap().pose.x += 0.01;
        assert_eq!(moved.execute_motion("arm", &r), Err(WorldError::StaleResult));
    }

    #[test]
    fn start_in_collision_is_invalid() {
        let w = scene(vec![item("wall", 0.0, 0.06, Footprint::Box { hx: 0.2, hy: 0.01 })]);
        assert!(matches!(w.plan_motion(&transfer(&w, "cup", "dest")), Err(WorldError::InvalidQuery(_))));
    }

    #[test]
    fn covered_objects_cannot_be_picked() {
        let mut top = item("lid", 0.0, 0.5, Footprint::Circle { r: 0.02 });
        top.stack_on = Some("cup".into());
        let w = scene(vec![top]);
        let r = w.plan_motion(&transfer(&w, "cup", "dest")).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.obstructors, vec!["lid".to_string()]);
    }

    #[test]
    fn grid_search_follows_straight_line_in_free_space() {
        let (path, _) = grid_search(Point::new(0.0, 0.0), Point::new(0.2, 0.0), 0.02, &|_| true, 1000);
        let path = path.unwrap();
        assert_eq!(path.len(), 11);
        assert!(path.iter().all(|p| p.y.abs() < 1e-12));
    }

    #[test]
    fn segment_box_distance() {
        let f = Footprint::Box { hx: 0.1, hy: 0.1 };
        let c = Point::new(0.0, 0.0);
        assert_eq!(f.segment_distance(c, Point::new(-1.0, 0.0), Point::new(1.0, 0.0)), 0.0);
        let d = f.segment_distance(c, Point::new(-1.0, 0.3), Point::new(1.0, 0.3));
        assert!((d - 0.2).abs() < 1e-12);
    }
}
