//! Scenario generators for the two benchmark families.
//!
//! Both generators emit scenario text and parse it back, so whatever they
//! produce is exactly what a hand-written file would give.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write;

use thiserror::Error;

use crate::dsl::{parse_scenario, DslError, Scenario};
use crate::world::Point;

pub use crate::planner::RunConfig;

pub const MIN_DISKS: usize = 3;
pub const MAX_DISKS: usize = 8;
pub const PEG_NAMES: [&str; 3] = ["pegA", "pegB", "pegC"];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("disk count {0} outside {MIN_DISKS}..={MAX_DISKS}")]
    BadDiskCount(usize),
    #[error("layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSpec {
    pub id: String,
    pub anchor: Point,
    pub reach: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HanoiLayout {
    pub pegs: [Point; 3],
    pub arms: Vec<ArmSpec>,
    pub handover_spots: Vec<(String, Point)>,
    pub omnipotent: bool,
}

fn p(x: f64, y: f64) -> Point {
    Point { x, y }
}

fn arm(id: &str, x: f64, y: f64, reach: f64) -> ArmSpec {
    ArmSpec { id: id.into(), anchor: p(x, y), reach }
}

impl HanoiLayout {
    /// Three pegs on an equilateral triangle between two fixed arms.
    /// The left arm cannot reach pegC and the right arm cannot reach pegA.
    pub fn dual_arm() -> Self {
        HanoiLayout {
            pegs: [p(-0.173205, 0.73), p(-0.173205, 0.13), p(0.34641, 0.43)],
            arms: vec![arm("arm_left", -0.3, 0.0, 0.75), arm("arm_right", 0.3, 0.0, 0.75)],
            handover_spots: vec![("h1".into(), p(0.014527, 0.321903)), ("h2".into(), p(-0.196, 0.489))],
            omnipotent: false,
        }
    }

    /// Same pegs, one arm that reaches all of them.
    pub fn omnipotent() -> Self {
        HanoiLayout {
            arms: vec![arm("arm_omni", 1.5, 0.43, 3.0)],
            handover_spots: Vec::new(),
            omnipotent: true,
            ..Self::dual_arm()
        }
    }
}

impl Default for HanoiLayout {
    fn default() -> Self {
        Self::dual_arm()
    }
}

pub fn disk_radius(i: usize, n: usize) -> f64 {
    round6(0.03 + 0.045 * (i - 1) as f64 / (n - 1) as f64)
}

fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn num(v: f64) -> String {
    let s = round6(v).to_string();
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

/// State of an n-disk tower: peg index of each disk, smallest disk first.
pub type HanoiState = Vec<u8>;

/// Legal moves from a state as (disk index, from peg, to peg).
pub fn hanoi_moves(s: &[u8]) -> Vec<(usize, u8, u8)> {
    let top = |peg: u8| s.iter().position(|&q| q == peg);
    let mut out = Vec::new();
    for from in 0..3u8 {
        let Some(d) = top(from) else { continue };
        for to in 0..3u8 {
            if to != from && top(to).map_or(true, |t| t > d) {
                out.push((d, from, to));
            }
        }
    }
    out
}

fn all_states(n: usize) -> Vec<HanoiState> {
    (0..3usize.pow(n as u32))
        .map(|mut k| {
            (0..n)
                .map(|_| {
                    let v = (k % 3) as u8;
                    k /= 3;
                    v
                })
                .collect()
        })
        .collect()
}

/// Move distance from every state to the all-on-pegC state.
pub fn hanoi_distances(n: usize) -> BTreeMap<HanoiState, usize> {
    let goal = vec![2u8; n];
    let mut dist = BTreeMap::from([(goal.clone(), 0)]);
    let mut queue = VecDeque::from([goal]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        for (disk, _, to) in hanoi_moves(&s) {
            let mut t = s.clone();
            t[disk] = to;
            if !dist.contains_key(&t) {
                dist.insert(t.clone(), d + 1);
                queue.push_back(t);
            }
        }
    }
    dist
}

/// What a disk rests on: the next larger disk on its peg, or the peg.
fn support(s: &[u8], d: usize) -> String {
    match (d + 1..s.len()).find(|&e| s[e] == s[d]) {
        Some(e) => format!("d{}", e + 1),
        None => PEG_NAMES[s[d] as usize].to_string(),
    }
}

fn state_label(s: &[u8]) -> String {
    let cs: Vec<String> = s.iter().map(|&q| ((b'A' + q) as char).to_string()).collect();
    format!("state({})", cs.join(","))
}

const HANOI_ACTIONS: &str = "\
action move ?d ?from ?to
pre on(?d,?from) clear(?d) clear(?to) smaller(?d,?to)
add on(?d,?to) clear(?from)
del on(?d,?from) clear(?to)
motion transfer ?d ?to
end
action avoid ?t
pre
add blocked(?t)
del
motion symbolic
end
";

const BYPASS_STAGE: &str = "\
stage bypass ?o ?t
node 0 root cleared(?t)
node 1 failure failed
node 2 leaf obstructs(?o,?t)
node 3 leaf blocked(?t)
node 4 internal avoided(?t)
arc 0 0 4 0.0
arc 1 4 3 0.0
arc 2 4 2 1.0 avoid(?t)
end
";

pub fn gen_hanoi(n: usize, layout: &HanoiLayout) -> Result<Scenario, BenchError> {
    if !(MIN_DISKS..=MAX_DISKS).contains(&n) {
        return Err(BenchError::BadDiskCount(n));
    }
    if layout.arms.is_empty() {
        return Err(BenchError::Layout("no arms".into()));
    }
    let disks: Vec<String> = (1..=n).map(|i| format!("d{i}")).collect();
    let start = vec![0u8; n];
    let mut t = String::new();

    t.push_str("OBJECTS\n");
    let a = layout.pegs[0];
    for (i, d) in disks.iter().enumerate() {
        let r = disk_radius(i + 1, n);
        writeln!(t, "{d} item {} {} 0.0 circle {} on {}", num(a.x), num(a.y), num(r), support(&start, i)).unwrap();
    }
    for (name, q) in PEG_NAMES.iter().zip(&layout.pegs) {
        writeln!(t, "{name} surface {} {} 0.0 circle 0.01", num(q.x), num(q.y)).unwrap();
    }
    for (h, q) in &layout.handover_spots {
        writeln!(t, "{h} slot {} {} 0.0 circle 0.0", num(q.x), num(q.y)).unwrap();
    }
    t.push_str("AGENTS\n");
    for arm in &layout.arms {
        writeln!(t, "{} arm {} {} reach {}", arm.id, num(arm.anchor.x), num(arm.anchor.y), num(arm.reach)).unwrap();
    }
    t.push_str("PREDICATES\non 2\nclear 1\nsmaller 2\nhandover_spot 1\nblocked 1\nobstructs 2\n");
    t.push_str("ACTIONS\n");
    t.push_str(HANOI_ACTIONS);

    t.push_str("INIT\n");
    for i in 0..n {
        writeln!(t, "on({},{})", disks[i], support(&start, i)).unwrap();
    }
    writeln!(t, "clear(d1)\nclear(pegB)\nclear(pegC)").unwrap();
    for i in 0..n {
        for j in i + 1..n {
            writeln!(t, "smaller({},{})", disks[i], disks[j]).unwrap();
        }
        for peg in PEG_NAMES {
            writeln!(t, "smaller({},{peg})", disks[i]).unwrap();
        }
    }
    for (h, _) in &layout.handover_spots {
        writeln!(t, "handover_spot({h})").unwrap();
    }
    t.push_str("GOAL\n");
    let goal = vec![2u8; n];
    for i in 0..n {
        writeln!(t, "on({},{})", disks[i], support(&goal, i)).unwrap();
    }

    t.push_str("GRAPH\nnode 0 root moved\nnode 1 failure failed\n");
    let mut leaf_ids = BTreeMap::new();
    let mut next = 2;
    for i in 0..n {
        let below = disks[i + 1..].iter().map(String::as_str).chain(PEG_NAMES);
        for x in below {
            let label = format!("on({},{x})", disks[i]);
            writeln!(t, "node {next} leaf {label}").unwrap();
            leaf_ids.insert(label, next);
            next += 1;
        }
    }
    let states = all_states(n);
    let first_state = next;
    for s in &states {
        writeln!(t, "node {next} internal {}", state_label(s)).unwrap();
        next += 1;
    }
    let dist = hanoi_distances(n);
    let mut arc = 0;
    for (k, s) in states.iter().enumerate() {
        let kids: Vec<String> =
            (0..n).map(|i| leaf_ids[&format!("on({},{})", disks[i], support(s, i))].to_string()).collect();
        writeln!(t, "arc {arc} {} {} 0.0", first_state + k, kids.join(",")).unwrap();
        arc += 1;
    }
    for (k, s) in states.iter().enumerate() {
        if s == &goal {
            continue;
        }
        for (d, _, to) in hanoi_moves(s) {
            let mut after = s.clone();
            after[d] = to;
            let dest = support(&after, d);
            let w = 1 + dist[&after];
            writeln!(t, "arc {arc} 0 {} {w}.0 move({},{},{dest})", first_state + k, disks[d], support(s, d)).unwrap();
            arc += 1;
        }
    }
    t.push_str("STAGES\n");
    t.push_str(BYPASS_STAGE);
    Ok(parse_scenario(&t)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HabitatConfig {
    /// Containers start in front of the samples and must be set aside.
    pub containers_block: bool,
}

impl Default for HabitatConfig {
    fn default() -> Self {
        HabitatConfig { containers_block: true }
    }
}

const HABITAT_ACTIONS: &str = "\
action navigate ?from ?to
pre at(base,?from)
add at(base,?to)
del at(base,?from)
motion transit ?to
end
action switch_on ?d
pre device(?d)
add ready(?d)
del
motion symbolic
end
action pick ?x ?slot ?st
pre at(?x,?slot) near(?slot,?st) at(base,?st)
add held(?x) picked(?x)
del at(?x,?slot)
motion transfer ?x -
end
action place ?x ?slot ?st
pre held(?x) near(?slot,?st) at(base,?st)
add at(?x,?slot)
del held(?x)
motion transfer ?x ?slot
end
action sterilise ?x ?slot
pre at(?x,?slot) ster_slot(?slot) ready(steriliser)
add sterilised(?x)
del
motion wait 120.0
end
action clean ?g ?slot
pre at(?g,?slot) ster_slot(?slot) ready(steriliser)
add cleaned(?g)
del
motion wait 60.0
end
action incubate ?x ?slot
pre at(?x,?slot) heat_slot(?slot) sterilised(?x) ready(heater)
add incubated(?x)
del
motion wait 300.0
end
action set_aside ?o ?slot ?park ?st
pre at(?o,?slot) near(?slot,?st) at(base,?st) park_of(?o,?park)
add aside(?o) at(?o,?park)
del at(?o,?slot)
motion transfer ?o ?park
end
action restore ?o ?park ?slot ?st
pre aside(?o) at(?o,?park) near(?park,?st) at(base,?st)
add at(?o,?slot)
del aside(?o) at(?o,?park)
motion transfer ?o ?slot
end
";

const RELOCATE_STAGE: &str = "\
stage relocate ?o ?t
bind at(?o,?s)
bind park_of(?o,?k)
bind near(?s,?st)
node 0 root cleared(?t)
node 1 failure failed
node 2 leaf aside(?o)
node 3 leaf obstructs(?o,?t)
node 4 leaf at(?o,?s)
node 5 leaf at(base,?st)
node 6 internal relocated(?o)
arc 0 0 6 0.0
arc 1 6 2 0.0
arc 2 6 3,4,5 1.0 set_aside(?o,?s,?k,?st)
end
";

const STATIONS: [(&str, f64, f64); 5] =
    [("st_home", 0.0, 0.0), ("st_bench", 0.0, 1.2), ("st_ster", -1.8, 0.0), ("st_side", 1.8, 0.0), ("st_heat", -1.8, 1.8)];

/// Builds the graph text node by node; labels double as lookup keys.
#[derive(Default)]
struct GraphText {
    nodes: Vec<(String, String)>,
    arcs: Vec<(String, Vec<String>, f64, String)>,
}

impl GraphText {
    fn node(&mut self, kind: &str, label: &str) {
        if !self.nodes.iter().any(|(_, l)| l == label) {
            self.nodes.push((kind.into(), label.into()));
        }
    }

    fn leaf(&mut self, label: &str) -> String {
        self.node("leaf", label);
        label.into()
    }

    /// An internal node recognised directly from its own fact.
    fn fact(&mut self, fact: &str) -> String {
        let label = format!("want_{fact}");
        self.node("internal", &label);
        let leaf = self.leaf(fact);
        self.arcs.push((label.clone(), vec![leaf], 0.0, String::new()));
        label
    }

    fn via(&mut self, parent: &str, kids: &[String], action: &str) {
        self.arcs.push((parent.into(), kids.to_vec(), 1.0, action.into()));
    }

    fn render(&self, out: &mut String) {
        let id = |l: &str| self.nodes.iter().position(|(_, x)| x == l).unwrap();
        for (i, (k, l)) in self.nodes.iter().enumerate() {
            writeln!(out, "node {i} {k} {l}").unwrap();
        }
        let mut ordered: Vec<_> = self.arcs.iter().filter(|a| a.3.is_empty()).collect();
        ordered.extend(self.arcs.iter().filter(|a| !a.3.is_empty()));
        for (i, (parent, kids, w, act)) in ordered.into_iter().enumerate() {
            let ks: Vec<String> = kids.iter().map(|k| id(k).to_string()).collect();
            write!(out, "arc {i} {} {} {}", id(parent), ks.join(","), num(*w)).unwrap();
            if !act.is_empty() {
                write!(out, " {act}").unwrap();
            }
            out.push('\n');
        }
    }
}

pub fn gen_habitat(config: &HabitatConfig) -> Result<Scenario, BenchError> {
    let mut t = String::from("OBJECTS\n");
    let mut obj = |id: &str, kind: &str, x: f64, y: f64, shape: &str| {
        writeln!(t, "{id} {kind} {} {} 0.0 {shape}", num(x), num(y)).unwrap();
    };
    obj("workbench", "surface", 0.0, 2.0, "box 0.8 0.3");
    obj("side_table", "surface", 1.8, 0.8, "box 0.4 0.25");
    obj("steriliser", "surface", -1.8, 0.8, "box 0.4 0.25");
    obj("heater", "surface", -1.8, 2.6, "box 0.4 0.25");
    for (id, x, y) in STATIONS {
        obj(id, "slot", x, y, "circle 0.0");
    }
    let (cx, cy) = if config.containers_block { (0.28, 1.95) } else { (0.55, 2.0) };
    let slots = [
        ("sslot_1", -0.3, 2.15),
        ("sslot_2", 0.3, 2.15),
        ("pslot_1", -cx, cy),
        ("pslot_2", cx, cy),
        ("park_1", -0.65, 1.85),
        ("park_2", 0.65, 1.85),
        ("bslot_1", -0.08, 2.15),
        ("bslot_2", 0.08, 2.15),
        ("gslot_1", 1.65, 0.85),
        ("gslot_2", 1.95, 0.85),
        ("ster_1", -2.1, 0.7),
        ("ster_2", -1.9, 0.7),
        ("ster_3", -1.7, 0.7),
        ("ster_4", -1.5, 0.7),
        ("heat_1", -1.95, 2.5),
        ("heat_2", -1.65, 2.5),
    ];
    for (id, x, y) in slots {
        obj(id, "slot", x, y, "circle 0.0");
    }
    let pos = |id: &str| slots.iter().find(|s| s.0 == id).map(|s| (s.1, s.2)).unwrap();
    let items = [
        ("s1", "sslot_1", "circle 0.03"),
        ("s2", "sslot_2", "circle 0.03"),
        ("g1", "gslot_1", "circle 0.03"),
        ("g2", "gslot_2", "circle 0.03"),
        ("p1", "pslot_1", "box 0.12 0.04"),
        ("p2", "pslot_2", "box 0.12 0.04"),
    ];
    for (id, slot, shape) in items {
        let (x, y) = pos(slot);
        obj(id, "item", x, y, shape);
    }
    t.push_str("AGENTS\nbase base 0.0 0.0 radius 0.3\n");
    t.push_str("arm_left arm -0.2 0.15 reach 0.95 mount base\n");
    t.push_str("arm_right arm 0.2 0.15 reach 0.95 mount base\n");
    t.push_str("PREDICATES\n");
    for (pred, n) in [
        ("at", 2),
        ("held", 1),
        ("picked", 1),
        ("near", 2),
        ("park_of", 2),
        ("ster_slot", 1),
        ("heat_slot", 1),
        ("device", 1),
        ("ready", 1),
        ("sterilised", 1),
        ("cleaned", 1),
        ("incubated", 1),
        ("aside", 1),
        ("obstructs", 2),
    ] {
        writeln!(t, "{pred} {n}").unwrap();
    }
    t.push_str("ACTIONS\n");
    t.push_str(HABITAT_ACTIONS);

    t.push_str("INIT\nat(base,st_home)\ndevice(steriliser)\ndevice(heater)\n");
    for (id, slot, _) in items {
        writeln!(t, "at({id},{slot})").unwrap();
    }
    let groups: [(&str, &[&str]); 4] = [
        ("st_bench", &["sslot_1", "sslot_2", "pslot_1", "pslot_2", "park_1", "park_2", "bslot_1", "bslot_2"]),
        ("st_side", &["gslot_1", "gslot_2"]),
        ("st_ster", &["ster_1", "ster_2", "ster_3", "ster_4"]),
        ("st_heat", &["heat_1", "heat_2"]),
    ];
    for (st, members) in groups {
        for s in members {
            writeln!(t, "near({s},{st})").unwrap();
        }
    }
    t.push_str("park_of(p1,park_1)\npark_of(p2,park_2)\n");
    for k in 1..=4 {
        writeln!(t, "ster_slot(ster_{k})").unwrap();
    }
    t.push_str("heat_slot(heat_1)\nheat_slot(heat_2)\n");

    let samples = [("s1", "sslot_1", "ster_1", "heat_1"), ("s2", "sslot_2", "ster_2", "heat_2")];
    let glass = [("g1", "gslot_1", "ster_3", "bslot_1"), ("g2", "gslot_2", "ster_4", "bslot_2")];
    let containers = [("p1", "pslot_1", "park_1"), ("p2", "pslot_2", "park_2")];
    let mut goal = Vec::new();
    for (s, ..) in samples {
        goal.push(format!("sterilised({s})"));
        goal.push(format!("incubated({s})"));
    }
    for (g, .., b) in glass {
        goal.push(format!("cleaned({g})"));
        goal.push(format!("at({g},{b})"));
    }
    for (c, slot, _) in containers {
        goal.push(format!("at({c},{slot})"));
    }
    t.push_str("GOAL\n");
    for f in &goal {
        writeln!(t, "{f}").unwrap();
    }

    let mut g = GraphText::default();
    g.node("root", "lab_done");
    g.node("failure", "failed");
    let roots: Vec<String> = goal.iter().map(|f| g.fact(f)).collect();
    g.arcs.push(("lab_done".into(), roots, 0.0, String::new()));

    // One node per trip; its navigate arcs wait on whatever the trip is for.
    let trip = |g: &mut GraphText, name: &str, st: &str, after: &[String]| {
        let label = format!("trip_{name}");
        g.node("internal", &label);
        let here = g.leaf(&format!("at(base,{st})"));
        g.arcs.push((label.clone(), vec![here], 0.0, String::new()));
        for (from, ..) in STATIONS {
            if from != st {
                let mut kids = vec![g.leaf(&format!("at(base,{from})"))];
                kids.extend_from_slice(after);
                g.via(&label, &kids, &format!("navigate({from},{st})"));
            }
        }
        label
    };
    let leaf = |g: &mut GraphText, f: String| g.leaf(&f);

    for dev in ["steriliser", "heater"] {
        let r = g.fact(&format!("ready({dev})"));
        let d = leaf(&mut g, format!("device({dev})"));
        g.via(&r, &[d], &format!("switch_on({dev})"));
    }
    let bench = trip(&mut g, "fetch", "st_bench", &[]);
    for (s, slot, ..) in samples {
        let n = format!("fetched({s})");
        g.node("internal", &n);
        let h = leaf(&mut g, format!("held({s})"));
        g.arcs.push((n.clone(), vec![h], 0.0, String::new()));
        let at = leaf(&mut g, format!("at({s},{slot})"));
        g.via(&n, &[bench.clone(), at], &format!("pick({s},{slot},st_bench)"));
    }
    let ster = trip(&mut g, "load", "st_ster", &["fetched(s1)".into(), "fetched(s2)".into()]);
    let ready = "want_ready(steriliser)".to_string();
    for (s, _, ss, _) in samples {
        let loaded = g.fact(&format!("at({s},{ss})"));
        g.via(&loaded, &[format!("fetched({s})"), ster.clone()], &format!("place({s},{ss},st_ster)"));
    }
    for (s, _, ss, _) in samples {
        let done = g.fact(&format!("sterilised({s})"));
        g.via(&done, &[format!("want_at({s},{ss})"), ready.clone()], &format!("sterilise({s},{ss})"));
    }
    let side = trip(&mut g, "collect", "st_side", &["want_sterilised(s1)".into(), "want_sterilised(s2)".into()]);
    for (gl, slot, ..) in glass {
        let n = format!("collected({gl})");
        g.node("internal", &n);
        let h = leaf(&mut g, format!("held({gl})"));
        g.arcs.push((n.clone(), vec![h], 0.0, String::new()));
        let at = leaf(&mut g, format!("at({gl},{slot})"));
        g.via(&n, &[side.clone(), at], &format!("pick({gl},{slot},st_side)"));
    }
    let wash = trip(&mut g, "wash", "st_ster", &["collected(g1)".into(), "collected(g2)".into()]);
    for (gl, _, ss, _) in glass {
        let loaded = g.fact(&format!("at({gl},{ss})"));
        g.via(&loaded, &[format!("collected({gl})"), wash.clone()], &format!("place({gl},{ss},st_ster)"));
    }
    for (gl, _, ss, _) in glass {
        let done = g.fact(&format!("cleaned({gl})"));
        g.via(&done, &[format!("want_at({gl},{ss})"), ready.clone()], &format!("clean({gl},{ss})"));
    }
    for (s, _, ss, _) in samples {
        let n = format!("unloaded({s})");
        g.node("internal", &n);
        let h = leaf(&mut g, format!("held({s})"));
        g.arcs.push((n.clone(), vec![h], 0.0, String::new()));
        let kids = [wash.clone(), format!("want_at({s},{ss})"), format!("want_sterilised({s})")];
        g.via(&n, &kids, &format!("pick({s},{ss},st_ster)"));
    }
    let heat = trip(&mut g, "incubate", "st_heat", &["unloaded(s1)".into(), "unloaded(s2)".into()]);
    for (s, .., hs) in samples {
        let placed = g.fact(&format!("at({s},{hs})"));
        let kids = [format!("unloaded({s})"), heat.clone(), format!("want_sterilised({s})")];
        g.via(&placed, &kids, &format!("place({s},{hs},st_heat)"));
    }
    for (s, .., hs) in samples {
        let done = g.fact(&format!("incubated({s})"));
        let kids = [format!("want_at({s},{hs})"), "want_ready(heater)".into(), format!("want_sterilised({s})")];
        g.via(&done, &kids, &format!("incubate({s},{hs})"));
    }
    let after: Vec<String> = samples.iter().map(|(s, .., hs)| format!("want_at({s},{hs})")).collect();
    let unload = trip(&mut g, "unload", "st_ster", &after);
    for (gl, _, ss, _) in glass {
        let n = format!("unloaded({gl})");
        g.node("internal", &n);
        let h = leaf(&mut g, format!("held({gl})"));
        g.arcs.push((n.clone(), vec![h], 0.0, String::new()));
        let kids = [unload.clone(), format!("want_at({gl},{ss})"), format!("want_cleaned({gl})")];
        g.via(&n, &kids, &format!("pick({gl},{ss},st_ster)"));
    }
    let ret = trip(&mut g, "return", "st_bench", &["unloaded(g1)".into(), "unloaded(g2)".into()]);
    for (gl, .., b) in glass {
        let kids = [format!("unloaded({gl})"), ret.clone(), format!("want_cleaned({gl})")];
        g.via(&format!("want_at({gl},{b})"), &kids, &format!("place({gl},{b},st_bench)"));
    }
    for (c, slot, park) in containers {
        let kids = [
            leaf(&mut g, format!("aside({c})")),
            leaf(&mut g, format!("at({c},{park})")),
            ret.clone(),
            "want_sterilised(s1)".into(),
            "want_sterilised(s2)".into(),
        ];
        g.via(&format!("want_at({c},{slot})"), &kids, &format!("restore({c},{park},{slot},st_bench)"));
    }
    t.push_str("GRAPH\n");
    g.render(&mut t);
    t.push_str("STAGES\n");
    t.push_str(RELOCATE_STAGE);
    Ok(parse_scenario(&t)?)
}
