//! The `.scn` scenario format.
//!
//! Line based, `#` starts a comment, tokens are separated by whitespace.
//! Sections appear in this order: `OBJECTS`, `AGENTS`, `PREDICATES`,
//! `ACTIONS`, `INIT`, `GOAL`, `GRAPH`, and optionally `STAGES`.
//!
//! ```text
//! OBJECTS
//! <id> item|fixture|surface|slot <x> <y> <yaw> circle <r> [on <support>]
//! <id> item|fixture|surface|slot <x> <y> <yaw> box <hx> <hy> [on <support>]
//! AGENTS
//! <id> arm <x> <y> reach <r> [mount <base>] [holds <object>]
//! <id> base <x> <y> radius <r>
//! PREDICATES
//! <name> <arity>
//! ACTIONS
//! action <name> ?p ...
//! pre <fact> ...
//! add <fact> ...
//! del <fact> ...
//! motion transit ?g | transfer ?o ?g | transfer ?o - | handover ?o ?g | symbolic | wait <secs>
//! end
//! INIT
//! <fact>
//! GOAL
//! <fact>
//! GRAPH
//! node <id> root|failure|internal|leaf <label>
//! arc <id> <parent> <child,child,...> <weight> [<action call> ...]
//! STAGES
//! stage <name> ?p ...
//! bind <fact pattern>
//! node ... / arc ...
//! end
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::andor_graph::{build_graph, GraphError, NodeKind};
use crate::domain::{is_identifier, is_variable, ActionCall, ActionTemplate, Fact, GoalSpec, MotionSpec};
use crate::world::{Agent, AgentKind, Footprint, Object, ObjectKind, Point, Pose, World, HOME_OFFSET, PERCEIVED};

pub const SECTIONS: [&str; 8] = ["OBJECTS", "AGENTS", "PREDICATES", "ACTIONS", "INIT", "GOAL", "GRAPH", "STAGES"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDecl {
    pub id: u32,
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcDecl {
    pub id: u32,
    pub parent: u32,
    pub children: Vec<u32>,
    pub weight: f64,
    pub actions: Vec<ActionCall>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GraphTemplate {
    pub nodes: Vec<NodeDecl>,
    pub arcs: Vec<ArcDecl>,
    pub root: Option<u32>,
    pub failure: Option<u32>,
}

impl GraphTemplate {
    /// Sorts declarations by id and derives root and failure from node kinds.
    pub fn normalize(&mut self) {
        self.nodes.sort_by_key(|n| n.id);
        self.arcs.sort_by_key(|a| a.id);
        self.root = self.nodes.iter().find(|n| n.kind == NodeKind::Root).map(|n| n.id);
        self.failure = self.nodes.iter().find(|n| n.kind == NodeKind::Failure).map(|n| n.id);
    }
}

/// Rearrangement subgraph instantiated from carried knowledge.
///
/// Parameters bind positionally to the arguments of a knowledge fact; each
/// `bind` pattern then binds further variables against the current facts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTemplate {
    pub name: String,
    pub params: Vec<String>,
    pub binds: Vec<Fact>,
    pub graph: GraphTemplate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub objects: BTreeMap<String, Object>,
    pub agents: BTreeMap<String, Agent>,
    pub predicates: BTreeMap<String, usize>,
    pub actions: BTreeMap<String, ActionTemplate>,
    pub init: BTreeSet<Fact>,
    pub goal: GoalSpec,
    pub graph: GraphTemplate,
    pub stages: BTreeMap<String, StageTemplate>,
}

impl Scenario {
    pub fn is_entity(&self, id: &str) -> bool {
        self.objects.contains_key(id) || self.agents.contains_key(id)
    }

    /// The geometric world realizing the initial state.
    pub fn world(&self) -> World {
        let mut w = World::new(self.objects.values().cloned().collect(), self.agents.values().cloned().collect(), self.init.iter().cloned());
        w.perceived = PERCEIVED.iter().filter(|p| self.predicates.contains_key(**p)).map(|p| p.to_string()).collect();
        w.facts = self.init.iter().filter(|f| !w.perceived.contains(&f.predicate)).cloned().collect();
        w
    }

    /// Ground action for a call, checked against the declared templates.
    pub fn action(&self, call: &ActionCall) -> Option<crate::domain::Action> {
        self.actions.get(&call.name)?.ground(&call.args).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DslErrorKind {
    Lex,
    Parse,
    Resolve,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub struct DslError {
    pub kind: DslErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DslErrorKind::Lex => "lex error",
            DslErrorKind::Parse => "parse error",
            DslErrorKind::Resolve => "resolve error",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.column, kind, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(" | "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    line: usize,
    col: usize,
    text: &'a str,
}

struct Line<'a> {
    no: usize,
    toks: Vec<Tok<'a>>,
}

fn err(kind: DslErrorKind, line: usize, column: usize, message: impl Into<String>, expected: &[&str]) -> DslError {
    DslError {
        kind,
        line,
        column,
        message: message.into(),
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

fn parse_err(t: &Tok<'_>, message: impl Into<String>, expected: &[&str]) -> DslError {
    err(DslErrorKind::Parse, t.line, t.col, message, expected)
}

fn resolve_err(t: &Tok<'_>, message: impl Into<String>) -> DslError {
    err(DslErrorKind::Resolve, t.line, t.col, message, &[])
}

fn lex(text: &str) -> Result<Vec<Line<'_>>, DslError> {
    let mut lines = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let no = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some((col, c)) = raw.char_indices().find(|(_, c)| !(c.is_ascii_graphic() || *c == ' ' || *c == '\t')) {
            return Err(err(DslErrorKind::Lex, no, col + 1, format!("unexpected character {c:?}"), &["printable ASCII"]));
        }
        let body = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let mut toks = Vec::new();
        let mut start = None;
        for (j, c) in body.char_indices().chain(std::iter::once((body.len(), ' '))) {
            match (c == ' ' || c == '\t', start) {
                (true, Some(s)) => {
                    toks.push(Tok { line: no, col: s + 1, text: &body[s..j] });
                    start = None;
                }
                (false, None) => start = Some(j),
                _ => {}
            }
        }
        if !toks.is_empty() {
            lines.push(Line { no, toks });
        }
    }
    Ok(lines)
}

struct Cursor<'a> {
    toks: &'a [Tok<'a>],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn new(l: &'a Line<'a>) -> Cursor<'a> {
        let end_col = l.toks.last().map(|t| t.col + t.text.len()).unwrap_or(1);
        Cursor { toks: &l.toks, pos: 0, line: l.no, end_col }
    }

    fn next(&mut self, expected: &[&str]) -> Result<Tok<'a>, DslError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(*t)
            }
            None => Err(err(DslErrorKind::Parse, self.line, self.end_col, "unexpected end of line", expected)),
        }
    }

    fn peek(&self) -> Option<Tok<'a>> {
        self.toks.get(self.pos).copied()
    }

    fn rest(&mut self) -> Vec<Tok<'a>> {
        let r = self.toks[self.pos..].to_vec();
        self.pos = self.toks.len();
        r
    }

    fn done(&self) -> Result<(), DslError> {
        match self.peek() {
            Some(t) => Err(parse_err(&t, format!("unexpected token `{}`", t.text), &["end of line"])),
            None => Ok(()),
        }
    }

    fn ident(&mut self, what: &str) -> Result<Tok<'a>, DslError> {
        let t = self.next(&[what])?;
        if !is_identifier(t.text) || is_variable(t.text) {
            return Err(parse_err(&t, format!("bad identifier `{}`", t.text), &[what]));
        }
        Ok(t)
    }

    fn variable(&mut self) -> Result<Tok<'a>, DslError> {
        let t = self.next(&["?variable"])?;
        if !is_variable(t.text) || !is_identifier(t.text) {
            return Err(parse_err(&t, format!("bad variable `{}`", t.text), &["?variable"]));
        }
        Ok(t)
    }

    fn number(&mut self, what: &str) -> Result<f64, DslError> {
        let t = self.next(&[what])?;
        number(&t, what)
    }

    fn keyword(&mut self, options: &[&str]) -> Result<Tok<'a>, DslError> {
        let t = self.next(options)?;
        if !options.contains(&t.text) {
            return Err(parse_err(&t, format!("unexpected `{}`", t.text), options));
        }
        Ok(t)
    }
}

fn number(t: &Tok<'_>, what: &str) -> Result<f64, DslError> {
    match t.text.parse::<f64>() {
        Ok(v) if v.is_finite() && !t.text.contains(['e', 'E', 'i', 'n', 'N', 'I']) => Ok(v),
        _ => Err(parse_err(t, format!("`{}` is not a decimal number", t.text), &[what])),
    }
}

fn fact_tok(t: &Tok<'_>) -> Result<Fact, DslError> {
    t.text.parse::<Fact>().map_err(|m| parse_err(t, m, &["fact like pred(a,b)"]))
}

fn call_tok(t: &Tok<'_>) -> Result<ActionCall, DslError> {
    t.text.parse::<ActionCall>().map_err(|m| parse_err(t, m, &["action call like name(a,b)"]))
}

/// Where each declaration came from, for located resolve errors.
#[derive(Default)]
struct GraphLines {
    header: usize,
    nodes: BTreeMap<u32, (usize, usize)>,
    arcs: BTreeMap<u32, (usize, usize)>,
}

struct GraphBuilder<'a> {
    template: GraphTemplate,
    lines: GraphLines,
    node_toks: Vec<(u32, Tok<'a>)>,
    arc_toks: Vec<(u32, Vec<Tok<'a>>)>,
}

impl<'a> GraphBuilder<'a> {
    fn new(header: usize) -> GraphBuilder<'a> {
        GraphBuilder {
            template: GraphTemplate::default(),
            lines: GraphLines { header, ..Default::default() },
            node_toks: Vec::new(),
            arc_toks: Vec::new(),
        }
    }

    /// Parses a `node` or `arc` line; returns false for anything else.
    fn line(&mut self, l: &'a Line<'a>) -> Result<bool, DslError> {
        let mut c = Cursor::new(l);
        let head = l.toks[0];
        match head.text {
            "node" => {
                c.next(&[])?;
                let id_tok = c.next(&["node id"])?;
                let id = int(&id_tok, "node id")?;
                let kind_tok = c.keyword(&["root", "failure", "internal", "leaf"])?;
                let label = c.next(&["label"])?;
                c.done()?;
                if self.lines.nodes.insert(id, (id_tok.line, id_tok.col)).is_some() {
                    return Err(resolve_err(&id_tok, format!("duplicate node id {id}")));
                }
                let kind = NodeKind::from_keyword(kind_tok.text).unwrap();
                if kind == NodeKind::Leaf {
                    fact_tok(&label)?;
                }
                self.template.nodes.push(NodeDecl { id, kind, label: label.text.to_string() });
                self.node_toks.push((id, label));
                Ok(true)
            }
            "arc" => {
                c.next(&[])?;
                let id_tok = c.next(&["arc id"])?;
                let id = int(&id_tok, "arc id")?;
                let parent = c.next(&["parent node id"])?;
                let parent_id = int(&parent, "parent node id")?;
                let kids = c.next(&["comma-separated child ids"])?;
                let mut children = Vec::new();
                for part in kids.text.split(',') {
                    let t = Tok { text: part, ..kids };
                    children.push(int(&t, "child node id")?);
                }
                let weight = c.number("weight")?;
                if weight < 0.0 {
                    return Err(resolve_err(&id_tok, format!("arc {id} has a negative weight")));
                }
                let mut actions = Vec::new();
                let mut toks = Vec::new();
                for t in c.rest() {
                    actions.push(call_tok(&t)?);
                    toks.push(t);
                }
                if self.lines.arcs.insert(id, (id_tok.line, id_tok.col)).is_some() {
                    return Err(resolve_err(&id_tok, format!("duplicate arc id {id}")));
                }
                self.template.arcs.push(ArcDecl { id, parent: parent_id, children, weight, actions });
                self.arc_toks.push((id, toks));
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn finish(mut self) -> Result<(GraphTemplate, Vec<(u32, Tok<'a>)>, Vec<(u32, Vec<Tok<'a>>)>), DslError> {
        self.template.normalize();
        if let Err(e) = build_graph(&self.template) {
            let at = |m: &BTreeMap<u32, (usize, usize)>, k: u32| m.get(&k).copied().unwrap_or((self.lines.header, 1));
            let (line, col) = match &e {
                GraphError::DuplicateNodeId(n) | GraphError::CycleDetected(n) => at(&self.lines.nodes, *n),
                GraphError::BadKind { node, .. } => at(&self.lines.nodes, *node),
                GraphError::DuplicateArcId(a) | GraphError::DanglingReference { arc: a, .. } => at(&self.lines.arcs, *a),
                GraphError::BadArc { arc, .. } => at(&self.lines.arcs, *arc),
                _ => (self.lines.header, 1),
            };
            return Err(err(DslErrorKind::Resolve, line, col, e.to_string(), &[]));
        }
        Ok((self.template, self.node_toks, self.arc_toks))
    }
}

fn int(t: &Tok<'_>, what: &str) -> Result<u32, DslError> {
    if t.text.is_empty() || !t.text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_err(t, format!("`{}` is not a non-negative integer", t.text), &[what]));
    }
    t.text.parse().map_err(|_| parse_err(t, "integer too large", &[what]))
}

struct Resolver<'s> {
    objects: &'s BTreeMap<String, Object>,
    agents: &'s BTreeMap<String, Agent>,
    predicates: &'s BTreeMap<String, usize>,
}

impl Resolver<'_> {
    fn fact(&self, t: &Tok<'_>, f: &Fact, vars: Option<&BTreeSet<String>>) -> Result<(), DslError> {
        match self.predicates.get(&f.predicate) {
            None => return Err(resolve_err(t, format!("undeclared predicate `{}`", f.predicate))),
            Some(n) if *n != f.args.len() => {
                return Err(resolve_err(t, format!("`{}` takes {} arguments, got {}", f.predicate, n, f.args.len())))
            }
            _ => {}
        }
        for a in &f.args {
            self.term(t, a, vars)?;
        }
        Ok(())
    }

    fn term(&self, t: &Tok<'_>, a: &str, vars: Option<&BTreeSet<String>>) -> Result<(), DslError> {
        if is_variable(a) {
            match vars {
                Some(v) if v.contains(a) => Ok(()),
                _ => Err(resolve_err(t, format!("unbound variable `{a}`"))),
            }
        } else if self.objects.contains_key(a) || self.agents.contains_key(a) {
            Ok(())
        } else {
            Err(resolve_err(t, format!("unknown entity `{a}`")))
        }
    }
}

struct Parser<'a> {
    lines: &'a [Line<'a>],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn section_lines(&mut self) -> &'a [Line<'a>] {
        let start = self.pos;
        while self.pos < self.lines.len() && !SECTIONS.contains(&self.lines[self.pos].toks[0].text) {
            self.pos += 1;
        }
        &self.lines[start..self.pos]
    }

    fn header(&mut self, name: &str, optional: bool) -> Result<Option<usize>, DslError> {
        let Some(l) = self.lines.get(self.pos) else {
            if optional {
                return Ok(None);
            }
            let last = self.lines.last().map(|l| l.no + 1).unwrap_or(1);
            return Err(err(DslErrorKind::Parse, last, 1, "unexpected end of input", &[name]));
        };
        let t = l.toks[0];
        if t.text != name {
            let msg = if SECTIONS.contains(&t.text) { "section out of order" } else { "unexpected token" };
            return Err(parse_err(&t, format!("{msg} `{}`", t.text), &[name]));
        }
        if let Some(extra) = l.toks.get(1) {
            return Err(parse_err(extra, format!("unexpected token `{}`", extra.text), &["end of line"]));
        }
        self.pos += 1;
        Ok(Some(l.no))
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, DslError> {
    let lines = lex(text)?;
    let mut p = Parser { lines: &lines, pos: 0 };

    p.header("OBJECTS", false)?;
    let mut objects = BTreeMap::new();
    let mut supports = Vec::new();
    for l in p.section_lines() {
        let mut c = Cursor::new(l);
        let id = c.ident("object id")?;
        let kind = c.keyword(&["item", "fixture", "surface", "slot"])?;
        let x = c.number("x")?;
        let y = c.number("y")?;
        let yaw = c.number("yaw")?;
        let shape = c.keyword(&["circle", "box"])?;
        let footprint = if shape.text == "circle" {
            Footprint::Circle { r: c.number("radius")? }
        } else {
            Footprint::Box { hx: c.number("half width")?, hy: c.number("half height")? }
        };
        let neg = match footprint {
            Footprint::Circle { r } => r < 0.0,
            Footprint::Box { hx, hy } => hx < 0.0 || hy < 0.0,
        };
        if neg {
            return Err(resolve_err(&shape, "negative footprint extent"));
        }
        let mut stack_on = None;
        if c.peek().is_some() {
            c.keyword(&["on"])?;
            let s = c.ident("support id")?;
            supports.push(s);
            stack_on = Some(s.text.to_string());
        }
        c.done()?;
        let o = Object {
            id: id.text.to_string(),
            kind: ObjectKind::from_keyword(kind.text).unwrap(),
            pose: Pose { x, y, yaw },
            footprint,
            stack_on,
        };
        if objects.insert(o.id.clone(), o).is_some() {
            return Err(resolve_err(&id, format!("duplicate object `{}`", id.text)));
        }
    }
    for s in &supports {
        if !objects.contains_key(s.text) {
            return Err(resolve_err(s, format!("unknown support `{}`", s.text)));
        }
    }

    p.header("AGENTS", false)?;
    let mut agents: BTreeMap<String, Agent> = BTreeMap::new();
    let mut mounts = Vec::new();
    let mut holds = Vec::new();
    for l in p.section_lines() {
        let mut c = Cursor::new(l);
        let id = c.ident("agent id")?;
        let kind = c.keyword(&["arm", "base"])?;
        let anchor = Point::new(c.number("x")?, c.number("y")?);
        let mut agent = Agent {
            id: id.text.to_string(),
            kind: AgentKind::Arm,
            anchor,
            reach: 0.0,
            radius: 0.0,
            mount: None,
            holding: None,
            config: anchor,
        };
        if kind.text == "arm" {
            c.keyword(&["reach"])?;
            agent.reach = c.number("reach radius")?;
            while let Some(t) = c.peek() {
                match t.text {
                    "mount" if agent.mount.is_none() => {
                        c.next(&[])?;
                        let m = c.ident("base id")?;
                        mounts.push((id.text, m));
                        agent.mount = Some(m.text.to_string());
                    }
                    "holds" if agent.holding.is_none() => {
                        c.next(&[])?;
                        let h = c.ident("object id")?;
                        holds.push(h);
                        agent.holding = Some(h.text.to_string());
                    }
                    _ => return Err(parse_err(&t, format!("unexpected `{}`", t.text), &["mount", "holds", "end of line"])),
                }
            }
        } else {
            agent.kind = AgentKind::Base;
            c.keyword(&["radius"])?;
            agent.radius = c.number("base radius")?;
            c.done()?;
        }
        if agent.reach < 0.0 || agent.radius < 0.0 {
            return Err(resolve_err(&kind, "negative extent"));
        }
        if objects.contains_key(id.text) || agents.insert(agent.id.clone(), agent).is_some() {
            return Err(resolve_err(&id, format!("duplicate entity `{}`", id.text)));
        }
    }
    for (arm, m) in &mounts {
        match agents.get(m.text) {
            Some(a) if a.kind == AgentKind::Base => {}
            _ => return Err(resolve_err(m, format!("`{arm}` mounted on unknown base `{}`", m.text))),
        }
    }
    let mut held = BTreeSet::new();
    for h in &holds {
        if !objects.contains_key(h.text) || !held.insert(h.text) {
            return Err(resolve_err(h, format!("cannot hold `{}`", h.text)));
        }
    }
    let bases: BTreeMap<String, Point> =
        agents.values().filter(|a| a.kind == AgentKind::Base).map(|a| (a.id.clone(), a.anchor)).collect();
    for a in agents.values_mut().filter(|a| a.kind == AgentKind::Arm) {
        let base = a.mount.as_ref().map(|m| bases[m]).unwrap_or_default();
        a.config = base.add(a.anchor).add(HOME_OFFSET);
    }

    p.header("PREDICATES", false)?;
    let mut predicates = BTreeMap::new();
    for l in p.section_lines() {
        let mut c = Cursor::new(l);
        let name = c.ident("predicate name")?;
        let t = c.next(&["arity"])?;
        let arity = int(&t, "arity")? as usize;
        c.done()?;
        if predicates.insert(name.text.to_string(), arity).is_some() {
            return Err(resolve_err(&name, format!("duplicate predicate `{}`", name.text)));
        }
    }
    let r = Resolver { objects: &objects, agents: &agents, predicates: &predicates };

    p.header("ACTIONS", false)?;
    let mut actions = BTreeMap::new();
    let body = p.section_lines();
    let mut i = 0;
    while i < body.len() {
        let mut c = Cursor::new(&body[i]);
        c.keyword(&["action"])?;
        let name = c.ident("action name")?;
        let mut params = Vec::new();
        let mut vars = BTreeSet::new();
        while c.peek().is_some() {
            let v = c.variable()?;
            if !vars.insert(v.text.to_string()) {
                return Err(resolve_err(&v, format!("duplicate parameter `{}`", v.text)));
            }
            params.push(v.text.to_string());
        }
        let mut lists: [Vec<Fact>; 3] = Default::default();
        for (k, kw) in ["pre", "add", "del"].iter().enumerate() {
            i += 1;
            let l = body.get(i).ok_or_else(|| err(DslErrorKind::Parse, body[i - 1].no + 1, 1, "unexpected end of action", &[kw]))?;
            let mut c = Cursor::new(l);
            c.keyword(&[kw])?;
            for t in c.rest() {
                let f = fact_tok(&t)?;
                r.fact(&t, &f, Some(&vars))?;
                lists[k].push(f);
            }
        }
        i += 1;
        let l = body.get(i).ok_or_else(|| err(DslErrorKind::Parse, body[i - 1].no + 1, 1, "unexpected end of action", &["motion"]))?;
        let mut c = Cursor::new(l);
        c.keyword(&["motion"])?;
        let class = c.keyword(&["transit", "transfer", "handover", "symbolic", "wait"])?;
        let term = |c: &mut Cursor<'_>| -> Result<String, DslError> {
            let t = c.next(&["?variable or entity"])?;
            r.term(&t, t.text, Some(&vars))?;
            Ok(t.text.to_string())
        };
        let motion = match class.text {
            "transit" => MotionSpec::Transit { goal: term(&mut c)? },
            "transfer" => {
                let object = term(&mut c)?;
                let goal = match c.peek() {
                    Some(t) if t.text == "-" => {
                        c.next(&[])?;
                        None
                    }
                    _ => Some(term(&mut c)?),
                };
                MotionSpec::Transfer { object, goal }
            }
            "handover" => MotionSpec::Handover { object: term(&mut c)?, goal: term(&mut c)? },
            "symbolic" => MotionSpec::Symbolic,
            _ => {
                let d = c.number("duration in seconds")?;
                if d < 0.0 {
                    return Err(resolve_err(&class, "negative duration"));
                }
                MotionSpec::Wait(d)
            }
        };
        c.done()?;
        i += 1;
        let l = body.get(i).ok_or_else(|| err(DslErrorKind::Parse, body[i - 1].no + 1, 1, "unexpected end of action", &["end"]))?;
        let mut c = Cursor::new(l);
        c.keyword(&["end"])?;
        c.done()?;
        i += 1;
        let [pre, add, del] = lists;
        let t = ActionTemplate { name: name.text.to_string(), params, pre, add, del, motion };
        t.validate().map_err(|e| resolve_err(&name, e.to_string()))?;
        if actions.insert(t.name.clone(), t).is_some() {
            return Err(resolve_err(&name, format!("duplicate action `{}`", name.text)));
        }
    }

    p.header("INIT", false)?;
    let mut init = BTreeSet::new();
    for l in p.section_lines() {
        let mut c = Cursor::new(l);
        let t = c.next(&["fact"])?;
        c.done()?;
        let f = fact_tok(&t)?;
        r.fact(&t, &f, None)?;
        init.insert(f);
    }

    let goal_line = p.header("GOAL", false)?.unwrap_or(1);
    let mut goal = BTreeSet::new();
    for l in p.section_lines() {
        let mut c = Cursor::new(l);
        let t = c.next(&["fact"])?;
        c.done()?;
        let f = fact_tok(&t)?;
        r.fact(&t, &f, None)?;
        goal.insert(f);
    }
    let goal = GoalSpec::new(goal).map_err(|e| err(DslErrorKind::Resolve, goal_line, 1, e.to_string(), &["fact"]))?;

    let check_calls = |arcs: &[(u32, Vec<Tok<'_>>)], vars: Option<&BTreeSet<String>>| -> Result<(), DslError> {
        for (_, toks) in arcs {
            for t in toks {
                let call = call_tok(t)?;
                let Some(a) = actions.get(&call.name) else {
                    return Err(resolve_err(t, format!("unknown action `{}`", call.name)));
                };
                if a.params.len() != call.args.len() {
                    return Err(resolve_err(t, format!("`{}` takes {} arguments", call.name, a.params.len())));
                }
                for arg in &call.args {
                    r.term(t, arg, vars)?;
                }
            }
        }
        Ok(())
    };

    let header = p.header("GRAPH", false)?.unwrap_or(1);
    let mut g = GraphBuilder::new(header);
    for l in p.section_lines() {
        if !g.line(l)? {
            return Err(parse_err(&l.toks[0], format!("unexpected `{}`", l.toks[0].text), &["node", "arc"]));
        }
    }
    let (graph, node_toks, arc_toks) = g.finish()?;
    for (id, t) in &node_toks {
        if graph.nodes.iter().any(|n| n.id == *id && n.kind == NodeKind::Leaf) {
            r.fact(t, &fact_tok(t)?, None)?;
        }
    }
    check_calls(&arc_toks, None)?;

    let mut stages = BTreeMap::new();
    if p.header("STAGES", true)?.is_some() {
        let body = p.section_lines();
        let mut i = 0;
        while i < body.len() {
            let mut c = Cursor::new(&body[i]);
            c.keyword(&["stage"])?;
            let name = c.ident("stage name")?;
            let mut params = Vec::new();
            let mut vars = BTreeSet::new();
            while c.peek().is_some() {
                let v = c.variable()?;
                if !vars.insert(v.text.to_string()) {
                    return Err(resolve_err(&v, format!("duplicate parameter `{}`", v.text)));
                }
                params.push(v.text.to_string());
            }
            let mut binds = Vec::new();
            let mut g = GraphBuilder::new(body[i].no);
            i += 1;
            loop {
                let Some(l) = body.get(i) else {
                    let at = body.last().map(|l| l.no + 1).unwrap_or(1);
                    return Err(err(DslErrorKind::Parse, at, 1, "unterminated stage", &["end"]));
                };
                i += 1;
                let head = l.toks[0];
                if head.text == "end" {
                    Cursor { pos: 1, ..Cursor::new(l) }.done()?;
                    break;
                }
                if head.text == "bind" {
                    let mut c = Cursor::new(l);
                    c.next(&[])?;
                    let t = c.next(&["fact pattern"])?;
                    c.done()?;
                    let f = fact_tok(&t)?;
                    vars.extend(f.args.iter().filter(|a| is_variable(a)).cloned());
                    r.fact(&t, &f, Some(&vars))?;
                    binds.push(f);
                    continue;
                }
                if !g.line(l)? {
                    return Err(parse_err(&head, format!("unexpected `{}`", head.text), &["bind", "node", "arc", "end"]));
                }
            }
            let (graph, node_toks, arc_toks) = g.finish()?;
            for (id, t) in &node_toks {
                if graph.nodes.iter().any(|n| n.id == *id && n.kind == NodeKind::Leaf) {
                    r.fact(t, &fact_tok(t)?, Some(&vars))?;
                }
            }
            check_calls(&arc_toks, Some(&vars))?;
            let s = StageTemplate { name: name.text.to_string(), params, binds, graph };
            if stages.insert(s.name.clone(), s).is_some() {
                return Err(resolve_err(&name, format!("duplicate stage `{}`", name.text)));
            }
        }
    }
    if let Some(l) = lines.get(p.pos) {
        let t = l.toks[0];
        return Err(parse_err(&t, format!("unexpected `{}` after the last section", t.text), &["end of input"]));
    }
    Ok(Scenario { objects, agents, predicates, actions, init, goal, graph, stages })
}

fn num(v: f64) -> String {
    let s = format!("{}", v + 0.0);
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

fn write_facts(out: &mut String, kw: &str, facts: &[Fact]) {
    out.push_str(kw);
    for f in facts {
        write!(out, " {f}").unwrap();
    }
    out.push('\n');
}

pub fn serialize_graph(g: &GraphTemplate) -> String {
    let mut out = String::new();
    let mut nodes: Vec<&NodeDecl> = g.nodes.iter().collect();
    nodes.sort_by_key(|n| n.id);
    for n in nodes {
        writeln!(out, "node {} {} {}", n.id, n.kind.keyword(), n.label).unwrap();
    }
    let mut arcs: Vec<&ArcDecl> = g.arcs.iter().collect();
    arcs.sort_by_key(|a| a.id);
    for a in arcs {
        let kids: Vec<String> = a.children.iter().map(|c| c.to_string()).collect();
        write!(out, "arc {} {} {} {}", a.id, a.parent, kids.join(","), num(a.weight)).unwrap();
        for c in &a.actions {
            write!(out, " {c}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn serialize(s: &Scenario) -> String {
    let mut out = String::new();
    out.push_str("OBJECTS\n");
    for o in s.objects.values() {
        write!(out, "{} {} {} {} {} ", o.id, o.kind.keyword(), num(o.pose.x), num(o.pose.y), num(o.pose.yaw)).unwrap();
        match o.footprint {
            Footprint::Circle { r } => write!(out, "circle {}", num(r)).unwrap(),
            Footprint::Box { hx, hy } => write!(out, "box {} {}", num(hx), num(hy)).unwrap(),
        }
        if let Some(on) = &o.stack_on {
            write!(out, " on {on}").unwrap();
        }
        out.push('\n');
    }
    out.push_str("AGENTS\n");
    for a in s.agents.values() {
        match a.kind {
            AgentKind::Arm => {
                write!(out, "{} arm {} {} reach {}", a.id, num(a.anchor.x), num(a.anchor.y), num(a.reach)).unwrap();
                if let Some(m) = &a.mount {
                    write!(out, " mount {m}").unwrap();
                }
                if let Some(h) = &a.holding {
                    write!(out, " holds {h}").unwrap();
                }
            }
            AgentKind::Base => {
                write!(out, "{} base {} {} radius {}", a.id, num(a.anchor.x), num(a.anchor.y), num(a.radius)).unwrap()
            }
        }
        out.push('\n');
    }
    out.push_str("PREDICATES\n");
    for (p, n) in &s.predicates {
        writeln!(out, "{p} {n}").unwrap();
    }
    out.push_str("ACTIONS\n");
    for a in s.actions.values() {
        write!(out, "action {}", a.name).unwrap();
        for p in &a.params {
            write!(out, " {p}").unwrap();
        }
        out.push('\n');
        write_facts(&mut out, "pre", &a.pre);
        write_facts(&mut out, "add", &a.add);
        write_facts(&mut out, "del", &a.del);
        match &a.motion {
            MotionSpec::Transit { goal } => writeln!(out, "motion transit {goal}"),
            MotionSpec::Transfer { object, goal } => {
                writeln!(out, "motion transfer {object} {}", goal.as_deref().unwrap_or("-"))
            }
            MotionSpec::Handover { object, goal } => writeln!(out, "motion handover {object} {goal}"),
            MotionSpec::Symbolic => writeln!(out, "motion symbolic"),
            MotionSpec::Wait(d) => writeln!(out, "motion wait {}", num(*d)),
        }
        .unwrap();
        out.push_str("end\n");
    }
    out.push_str("INIT\n");
    for f in &s.init {
        writeln!(out, "{f}").unwrap();
    }
    out.push_str("GOAL\n");
    for f in &s.goal.required {
        writeln!(out, "{f}").unwrap();
    }
    out.push_str("GRAPH\n");
    out.push_str(&serialize_graph(&s.graph));
    if !s.stages.is_empty() {
        out.push_str("STAGES\n");
        for st in s.stages.values() {
            write!(out, "stage {}", st.name).unwrap();
            for p in &st.params {
                write!(out, " {p}").unwrap();
            }
            out.push('\n');
            for b in &st.binds {
                writeln!(out, "bind {b}").unwrap();
            }
            out.push_str(&serialize_graph(&st.graph));
            out.push_str("end\n");
        }
    }
    out
}
