mod common;

use andor_tmp::bench::{gen_habitat, gen_hanoi, hanoi_distances, BenchError, HabitatConfig, HanoiLayout, RunConfig};
use andor_tmp::dsl::{parse_scenario, Scenario};
use andor_tmp::interface::OutcomeStatus;
use andor_tmp::planner::{run, FinalStatus, PlanTrace, PlannerError};
use andor_tmp::search::TransitionReason;
use andor_tmp::world::Point;
use common::{hanoi_bfs, rng};
use rand::Rng;

fn solve(s: &Scenario) -> PlanTrace {
    run(s, &RunConfig::default()).unwrap()
}

fn moves(trace: &PlanTrace) -> Vec<(String, String, String)> {
    trace
        .executed_actions()
        .into_iter()
        .filter(|o| o.action.name == "move")
        .map(|o| (o.action.args[0].clone(), o.action.args[1].clone(), o.action.args[2].clone()))
        .collect()
}

#[test]
fn tower_distances_agree_with_plain_bfs() {
    let mut r = rng(5);
    for n in 3..=5 {
        let dist = hanoi_distances(n);
        assert_eq!(dist.len(), 3usize.pow(n as u32));
        assert_eq!(dist[&vec![0u8; n]], (1 << n) - 1);
        for _ in 0..20 {
            let s: Vec<u8> = (0..n).map(|_| r.gen_range(0..3)).collect();
            assert_eq!(dist[&s], hanoi_bfs(n, &s), "{s:?}");
        }
    }
}

#[test]
fn three_disks_need_seven_moves() {
    assert_eq!(hanoi_bfs(3, &[0, 0, 0]), 7);
}

#[test]
fn disk_count_is_bounded() {
    for n in [0, 2, 9] {
        assert!(matches!(gen_hanoi(n, &HanoiLayout::default()), Err(BenchError::BadDiskCount(m)) if m == n));
    }
    assert!(gen_hanoi(8, &HanoiLayout::omnipotent()).is_ok());
}

#[test]
fn declared_initial_facts_are_what_the_world_shows() {
    let scenarios = [
        gen_hanoi(3, &HanoiLayout::dual_arm()).unwrap(),
        gen_hanoi(5, &HanoiLayout::omnipotent()).unwrap(),
        gen_habitat(&HabitatConfig::default()).unwrap(),
        gen_habitat(&HabitatConfig { containers_block: false }).unwrap(),
    ];
    for s in &scenarios {
        let w = s.world();
        w.validate().unwrap();
        assert_eq!(w.symbolic().facts, s.init);
    }
}

#[test]
fn each_arm_misses_one_peg() {
    let s = gen_hanoi(3, &HanoiLayout::dual_arm()).unwrap();
    let w = s.world();
    let peg = |id: &str| w.objects[id].pose.point();
    let reach = |arm: &str, p: Point| w.reaches(&w.agents[arm], p);
    assert!(reach("arm_left", peg("pegA")) && !reach("arm_left", peg("pegC")));
    assert!(reach("arm_right", peg("pegC")) && !reach("arm_right", peg("pegA")));
    assert!(reach("arm_left", peg("pegB")) && reach("arm_right", peg("pegB")));
    for h in ["h1", "h2"] {
        assert!(reach("arm_left", peg(h)) && reach("arm_right", peg(h)));
    }
}

/// Replays moves on bare peg stacks and checks the tower rule.
fn replay(n: usize, moves: &[(String, String, String)]) -> [Vec<usize>; 3] {
    let mut pegs: [Vec<usize>; 3] = [(1..=n).rev().collect(), vec![], vec![]];
    let find = |pegs: &[Vec<usize>; 3], x: &str| -> usize {
        match x {
            "pegA" => 0,
            "pegB" => 1,
            "pegC" => 2,
            d => {
                let k: usize = d[1..].parse().unwrap();
                pegs.iter().position(|p| p.contains(&k)).unwrap()
            }
        }
    };
    for (d, from, to) in moves {
        let k: usize = d[1..].parse().unwrap();
        let (f, t) = (find(&pegs, from), find(&pegs, to));
        assert_eq!(pegs[f].last(), Some(&k), "{d} is not on top");
        assert!(pegs[t].last().map_or(true, |&top| top > k), "{d} onto a smaller disk");
        pegs[f].pop();
        pegs[t].push(k);
    }
    pegs
}

#[test]
fn single_arm_moves_are_a_legal_optimal_solution() {
    for n in 3..=5 {
        let trace = solve(&gen_hanoi(n, &HanoiLayout::omnipotent()).unwrap());
        assert_eq!(trace.final_status, FinalStatus::GoalAchieved);
        let m = moves(&trace);
        assert_eq!(m.len(), (1 << n) - 1);
        let pegs = replay(n, &m);
        assert_eq!(pegs[2], (1..=n).rev().collect::<Vec<_>>());
    }
}

#[test]
fn two_arms_hand_disks_over_and_stay_consistent() {
    let trace = solve(&gen_hanoi(3, &HanoiLayout::dual_arm()).unwrap());
    assert_eq!(trace.final_status, FinalStatus::GoalAchieved);
    assert!(trace.depth() > 7);
    assert!(trace.metrics.handovers >= 1);
    assert!(trace.steps.iter().filter(|s| s.executed()).all(|s| s.chain_ok));
    let pegs = replay(3, &moves(&trace));
    assert_eq!(pegs[2], vec![3, 2, 1]);
    let knowledge: Vec<String> =
        trace.transitions.iter().flat_map(|t| t.carried_knowledge.iter().map(|f| f.predicate.clone())).collect();
    assert!(knowledge.iter().all(|p| p == "obstructs"));
}

#[test]
fn unblocked_lab_needs_no_expansion() {
    let trace = solve(&gen_habitat(&HabitatConfig { containers_block: false }).unwrap());
    assert_eq!(trace.final_status, FinalStatus::GoalAchieved);
    assert_eq!(trace.depth(), 1);
    assert!(trace.executed_actions().iter().all(|o| o.action.name != "set_aside"));
}

#[test]
fn lab_glassware_is_cleaned_before_it_returns() {
    let trace = solve(&gen_habitat(&HabitatConfig::default()).unwrap());
    assert_eq!(trace.final_status, FinalStatus::GoalAchieved);
    let done: Vec<String> = trace.executed_actions().iter().map(|o| o.action.to_string()).collect();
    let at = |a: &str| done.iter().position(|x| x.starts_with(a)).unwrap_or_else(|| panic!("{a} never ran"));
    for g in ["g1", "g2"] {
        assert!(at(&format!("clean({g}")) < at(&format!("place({g},bslot")));
    }
    assert!(trace.steps.iter().filter(|s| s.executed()).all(|s| s.chain_ok));
    assert_eq!(trace.metrics.handovers, 0);
}

fn shelf(without_park: bool) -> Scenario {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/shelf.scn");
    let mut text = std::fs::read_to_string(path).unwrap();
    if without_park {
        text = text.replace("park_of(jar,park)\n", "");
    }
    parse_scenario(&text).unwrap()
}

#[test]
fn hand_written_scenario_parks_the_jar() {
    let trace = solve(&shelf(false));
    assert_eq!(trace.final_status, FinalStatus::GoalAchieved);
    assert_eq!(trace.depth(), 3);
    let reasons: Vec<TransitionReason> = trace.transitions.iter().map(|t| t.reason).collect();
    assert_eq!(reasons, [TransitionReason::MotionFailure, TransitionReason::StageComplete]);
}

#[test]
fn nowhere_to_park_is_unsolvable() {
    let trace = solve(&shelf(true));
    assert_eq!(trace.final_status, FinalStatus::Unsolvable);
    assert!(trace.steps.iter().any(|s| s.outcomes.iter().any(|o| o.status == OutcomeStatus::MotionInfeasible)));
}

#[test]
fn small_depth_cap_stops_the_run() {
    let s = gen_hanoi(3, &HanoiLayout::dual_arm()).unwrap();
    let trace = run(&s, &RunConfig { depth_cap: 2, ..RunConfig::default() }).unwrap();
    assert_eq!(trace.final_status, FinalStatus::DepthLimit);
    assert!(trace.depth() <= 2);
}

#[test]
fn bad_config_is_rejected() {
    let s = shelf(false);
    for c in [
        RunConfig { depth_cap: 0, ..RunConfig::default() },
        RunConfig { grid_resolution: -1.0, ..RunConfig::default() },
        RunConfig { max_steps: 0, ..RunConfig::default() },
    ] {
        assert!(matches!(run(&s, &c), Err(PlannerError::ConfigInvalid(_))));
    }
}
