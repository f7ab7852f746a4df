//! Symbolic task domain: facts, action templates and the transition function.
//!
//! Facts are untyped predicates over entity ids. Arguments starting with `?`
//! are variables and only appear in templates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Scenario;
use crate::world::ObjectKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(Fact),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("`{0}` is not anchored to a fixed support")]
    Unanchored(String),
    #[error("inconsistent facts about `{0}`")]
    Inconsistent(String),
    #[error("action `{name}` expects {expected} arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("goal must not be empty")]
    EmptyGoal,
    #[error("action `{0}` adds and deletes `{1}`")]
    FrameConflict(String, Fact),
}

pub fn is_variable(term: &str) -> bool {
    term.starts_with('?')
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let body = s.strip_prefix('?').unwrap_or(s);
    !body.is_empty()
        && body
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// Splits `name(a,b)` into its head and argument list.
pub(crate) fn split_call(text: &str) -> Result<(String, Vec<String>), String> {
    let open = text.find('(').ok_or_else(|| format!("missing `(` in `{text}`"))?;
    if !text.ends_with(')') {
        return Err(format!("missing `)` in `{text}`"));
    }
    let head = &text[..open];
    if !is_identifier(head) || is_variable(head) {
        return Err(format!("bad name `{head}`"));
    }
    let inner = &text[open + 1..text.len() - 1];
    let args: Vec<String> = if inner.is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::to_string).collect()
    };
    if let Some(bad) = args.iter().find(|a| !is_identifier(a)) {
        return Err(format!("bad argument `{bad}`"));
    }
    Ok((head.to_string(), args))
}

fn write_call(f: &mut fmt::Formatter<'_>, head: &str, args: &[String]) -> fmt::Result {
    write!(f, "{head}(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        f.write_str(a)?;
    }
    f.write_str(")")
}

fn subst(term: &str, b: &BTreeMap<String, String>) -> Result<String, DomainError> {
    if is_variable(term) {
        b.get(term).cloned().ok_or_else(|| DomainError::Unbound(term.to_string()))
    } else {
        Ok(term.to_string())
    }
}

/// A ground predicate such as `on(d1,pegA)`, or a pattern when args hold variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Fact {
    pub fn new(predicate: &str, args: &[&str]) -> Fact {
        Fact { predicate: predicate.to_string(), args: args.iter().map(|a| a.to_string()).collect() }
    }

    pub fn is_ground(&self) -> bool {
        !self.args.iter().any(|a| is_variable(a))
    }

    pub fn substitute(&self, b: &BTreeMap<String, String>) -> Result<Fact, DomainError> {
        let args = self.args.iter().map(|a| subst(a, b)).collect::<Result<_, _>>()?;
        Ok(Fact { predicate: self.predicate.clone(), args })
    }

    /// Unifies this pattern with a ground fact, extending `b`.
    pub fn unify(&self, ground: &Fact, b: &mut BTreeMap<String, String>) -> bool {
        if self.predicate != ground.predicate || self.args.len() != ground.args.len() {
            return false;
        }
        let mut local = b.clone();
        for (p, g) in self.args.iter().zip(&ground.args) {
            if is_variable(p) {
                match local.get(p) {
                    Some(v) if v != g => return false,
                    Some(_) => {}
                    None => {
                        local.insert(p.clone(), g.clone());
                    }
                }
            } else if p != g {
                return false;
            }
        }
        *b = local;
        true
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.predicate, &self.args)
    }
}

impl FromStr for Fact {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (predicate, args) = split_call(s)?;
        Ok(Fact { predicate, args })
    }
}

impl Serialize for Fact {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fact {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A reference to an action, e.g. `move(d1,pegA,pegB)`, as carried by hyper-arcs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionCall {
    pub name: String,
    pub args: Vec<String>,
}

impl ActionCall {
    pub fn new(name: &str, args: &[&str]) -> ActionCall {
        ActionCall { name: name.to_string(), args: args.iter().map(|a| a.to_string()).collect() }
    }

    pub fn substitute(&self, b: &BTreeMap<String, String>) -> Result<ActionCall, DomainError> {
        let args = self.args.iter().map(|a| subst(a, b)).collect::<Result<_, _>>()?;
        Ok(ActionCall { name: self.name.clone(), args })
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.name, &self.args)
    }
}

impl FromStr for ActionCall {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, args) = split_call(s)?;
        Ok(ActionCall { name, args })
    }
}

impl Serialize for ActionCall {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One element of the symbolic state space.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SymbolicState {
    pub facts: BTreeSet<Fact>,
}

impl SymbolicState {
    pub fn new(facts: impl IntoIterator<Item = Fact>) -> SymbolicState {
        SymbolicState { facts: facts.into_iter().collect() }
    }

    pub fn contains(&self, f: &Fact) -> bool {
        self.facts.contains(f)
    }

    /// Rejects states placing one object in two places or holding it twice.
    pub fn validate(&self) -> Result<(), DomainError> {
        let mut placed: BTreeMap<&str, usize> = BTreeMap::new();
        let mut held: BTreeMap<&str, usize> = BTreeMap::new();
        for f in &self.facts {
            if !f.is_ground() {
                return Err(DomainError::Unbound(f.to_string()));
            }
            match (f.predicate.as_str(), f.args.as_slice()) {
                ("on" | "at", [x, _]) => *placed.entry(x).or_default() += 1,
                ("holding", [_, o]) => *held.entry(o).or_default() += 1,
                _ => {}
            }
        }
        for (x, n) in placed.iter().chain(held.iter()) {
            if *n > 1 || (placed.contains_key(x) && held.contains_key(x)) {
                return Err(DomainError::Inconsistent(x.to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoalSpec {
    pub required: BTreeSet<Fact>,
}

impl GoalSpec {
    pub fn new(facts: impl IntoIterator<Item = Fact>) -> Result<GoalSpec, DomainError> {
        let required: BTreeSet<Fact> = facts.into_iter().collect();
        if required.is_empty() {
            return Err(DomainError::EmptyGoal);
        }
        Ok(GoalSpec { required })
    }
}

/// Motion binding of an action template; terms may be variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MotionSpec {
    /// Base move to the pose of `goal`.
    Transit { goal: String },
    /// Arm pick (and place when `goal` is set) of `object`.
    Transfer { object: String, goal: Option<String> },
    /// Transfer that must pass through a handover spot.
    Handover { object: String, goal: String },
    Symbolic,
    Wait(f64),
}

impl MotionSpec {
    fn terms(&self) -> Vec<&String> {
        match self {
            MotionSpec::Transit { goal } => vec![goal],
            MotionSpec::Transfer { object, goal } => std::iter::once(object).chain(goal.iter()).collect(),
            MotionSpec::Handover { object, goal } => vec![object, goal],
            MotionSpec::Symbolic | MotionSpec::Wait(_) => Vec::new(),
        }
    }

    fn substitute(&self, b: &BTreeMap<String, String>) -> Result<MotionSpec, DomainError> {
        Ok(match self {
            MotionSpec::Transit { goal } => MotionSpec::Transit { goal: subst(goal, b)? },
            MotionSpec::Transfer { object, goal } => MotionSpec::Transfer {
                object: subst(object, b)?,
                goal: goal.as_ref().map(|g| subst(g, b)).transpose()?,
            },
            MotionSpec::Handover { object, goal } => {
                MotionSpec::Handover { object: subst(object, b)?, goal: subst(goal, b)? }
            }
            MotionSpec::Symbolic => MotionSpec::Symbolic,
            MotionSpec::Wait(d) => MotionSpec::Wait(*d),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionTemplate {
    pub name: String,
    pub params: Vec<String>,
    pub pre: Vec<Fact>,
    pub add: Vec<Fact>,
    pub del: Vec<Fact>,
    pub motion: MotionSpec,
}

impl ActionTemplate {
    pub fn validate(&self) -> Result<(), DomainError> {
        for f in &self.add {
            if self.del.contains(f) {
                return Err(DomainError::FrameConflict(self.name.clone(), f.clone()));
            }
        }
        let known: BTreeSet<&String> = self.params.iter().collect();
        let facts = self.pre.iter().chain(&self.add).chain(&self.del);
        for term in facts.flat_map(|f| f.args.iter()).chain(self.motion.terms()) {
            if is_variable(term) && !known.contains(term) {
                return Err(DomainError::Unbound(term.clone()));
            }
        }
        Ok(())
    }

    pub fn ground(&self, args: &[String]) -> Result<Action, DomainError> {
        if args.len() != self.params.len() {
            return Err(DomainError::Arity {
                name: self.name.clone(),
                expected: self.params.len(),
                got: args.len(),
            });
        }
        let b: BTreeMap<String, String> = self.params.iter().cloned().zip(args.iter().cloned()).collect();
        let all = |v: &[Fact]| v.iter().map(|f| f.substitute(&b)).collect::<Result<Vec<_>, _>>();
        let action = Action {
            name: self.name.clone(),
            args: args.to_vec(),
            pre: all(&self.pre)?,
            add: all(&self.add)?,
            del: all(&self.del)?,
            motion: self.motion.substitute(&b)?,
        };
        for f in &action.add {
            if action.del.contains(f) {
                return Err(DomainError::FrameConflict(action.call().to_string(), f.clone()));
            }
        }
        Ok(action)
    }
}

/// A ground action template.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Action {
    pub name: String,
    pub args: Vec<String>,
    pub pre: Vec<Fact>,
    pub add: Vec<Fact>,
    pub del: Vec<Fact>,
    pub motion: MotionSpec,
}

impl Action {
    pub fn call(&self) -> ActionCall {
        ActionCall { name: self.name.clone(), args: self.args.clone() }
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self.motion, MotionSpec::Transit { .. } | MotionSpec::Transfer { .. } | MotionSpec::Handover { .. })
    }
}

pub fn apply_action(state: &SymbolicState, action: &Action) -> Result<SymbolicState, DomainError> {
    if let Some(f) = action.pre.iter().find(|f| !state.contains(f)) {
        return Err(DomainError::PreconditionViolated(f.clone()));
    }
    let mut next = state.clone();
    for f in &action.del {
        next.facts.remove(f);
    }
    next.facts.extend(action.add.iter().cloned());
    Ok(next)
}

pub fn is_goal(state: &SymbolicState, goal: &GoalSpec) -> bool {
    goal.required.is_subset(&state.facts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MotionClass {
    Transit,
    Transfer,
    Handover,
    Symbolic,
    Wait,
}

/// The entity slots an action leaves for geometric grounding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionBinding {
    pub class: MotionClass,
    pub object: Option<String>,
    pub goal: Option<String>,
    /// Filled by grounding.
    pub agent: Option<String>,
    pub duration: f64,
}

pub fn action_motion_class(action: &Action) -> MotionBinding {
    let (class, object, goal, duration) = match &action.motion {
        MotionSpec::Transit { goal } => (MotionClass::Transit, None, Some(goal.clone()), 0.0),
        MotionSpec::Transfer { object, goal } => (MotionClass::Transfer, Some(object.clone()), goal.clone(), 0.0),
        MotionSpec::Handover { object, goal } => {
            (MotionClass::Handover, Some(object.clone()), Some(goal.clone()), 0.0)
        }
        MotionSpec::Symbolic => (MotionClass::Symbolic, None, None, 0.0),
        MotionSpec::Wait(d) => (MotionClass::Wait, None, None, *d),
    };
    MotionBinding { class, object, goal, agent: None, duration }
}

/// Placement tolerance of a pose box.
pub const POSE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Region {
    /// Pose box around `center`; `level` counts the objects stacked below.
    Box { center: (f64, f64), half: f64, level: usize },
    /// Rigidly attached to an agent's end effector.
    Attached { agent: String },
}

/// Geometric constraints implied by a symbolic state, keyed by entity id.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConfigRegion {
    pub constraints: BTreeMap<String, Region>,
}

impl ConfigRegion {
    pub fn is_unconstrained(&self) -> bool {
        self.constraints.is_empty()
    }
}

pub fn state_region(state: &SymbolicState, scenario: &Scenario) -> Result<ConfigRegion, DomainError> {
    let known = |id: &str| scenario.objects.contains_key(id) || scenario.agents.contains_key(id);
    let mut support: BTreeMap<&str, &str> = BTreeMap::new();
    let mut region = ConfigRegion::default();
    for f in &state.facts {
        for a in &f.args {
            if !known(a) {
                return Err(DomainError::UnknownEntity(a.clone()));
            }
        }
        match (f.predicate.as_str(), f.args.as_slice()) {
            ("on" | "at", [x, y]) => {
                support.insert(x, y);
            }
            ("holding", [agent, o]) => {
                region.constraints.insert(o.clone(), Region::Attached { agent: agent.clone() });
            }
            _ => {}
        }
    }
    for &x in support.keys() {
        let mut level = 0;
        let mut cur = x;
        loop {
            let Some(&below) = support.get(cur) else { break };
            if level > support.len() {
                return Err(DomainError::Inconsistent(x.to_string()));
            }
            cur = below;
            let fixed = scenario.objects.get(cur).map(|o| o.kind != ObjectKind::Item).unwrap_or(false);
            if fixed {
                break;
            }
            level += 1;
        }
        let center = match scenario.objects.get(cur) {
            Some(o) if o.kind != ObjectKind::Item => (o.pose.x, o.pose.y),
            _ => return Err(DomainError::Unanchored(x.to_string())),
        };
        region.constraints.insert(x.to_string(), Region::Box { center, half: POSE_TOLERANCE, level });
    }
    Ok(region)
}
