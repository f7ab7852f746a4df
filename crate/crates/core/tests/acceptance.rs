mod common;

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use andor_tmp::bench::{gen_habitat, gen_hanoi, HabitatConfig, HanoiLayout, RunConfig};
use andor_tmp::dsl::{parse_scenario, serialize, DslErrorKind};
use andor_tmp::planner::{mask_text, run, FinalStatus, PlanTrace, TABLE2_ROWS};
use andor_tmp::search::{next_feasible_states, next_optimal_state, GraphNetwork, TransitionReason, MAIN_TEMPLATE};
use andor_tmp::world::World;
use common::{fuzz_scenario, oracle_cost, random_graph, random_world, rng, solution_trees, REACH};

type Verdict = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn solve(s: &andor_tmp::dsl::Scenario) -> Result<(PlanTrace, Duration), String> {
    let t = Instant::now();
    let trace = run(s, &RunConfig::default()).map_err(|e| e.to_string())?;
    Ok((trace, t.elapsed()))
}

fn move_count(trace: &PlanTrace) -> usize {
    trace.executed_actions().iter().filter(|o| o.action.name == "move").count()
}

fn criterion_1() -> Verdict {
    let mut out = vec![];
    for n in 3..=5 {
        let s = gen_hanoi(n, &HanoiLayout::omnipotent()).map_err(|e| e.to_string())?;
        let (trace, took) = solve(&s)?;
        let opt = (1 << n) - 1;
        check(trace.final_status == FinalStatus::GoalAchieved, format!("n={n}: {:?}", trace.final_status))?;
        check(move_count(&trace) == opt, format!("n={n}: {} moves, want {opt}", move_count(&trace)))?;
        check(trace.depth() == opt, format!("n={n}: d={}, want {opt}", trace.depth()))?;
        check(took < Duration::from_secs(10), format!("n={n}: took {took:?}"))?;
        out.push(format!("n={n} d={}", trace.depth()));
    }
    Ok(out.join(", "))
}

fn criterion_2() -> Verdict {
    let mut last = 0;
    let mut out = vec![];
    for n in 3..=5 {
        let s = gen_hanoi(n, &HanoiLayout::dual_arm()).map_err(|e| e.to_string())?;
        let (trace, _) = solve(&s)?;
        let d = trace.depth();
        check(trace.final_status == FinalStatus::GoalAchieved, format!("n={n}: {:?}", trace.final_status))?;
        check(d > (1 << n) - 1, format!("n={n}: d={d} is not above the single-arm optimum"))?;
        check(trace.metrics.handovers >= 1, format!("n={n}: no handover"))?;
        check(d >= last, format!("n={n}: d={d} fell below {last}"))?;
        last = d;
        out.push(format!("n={n} d={d} handovers={}", trace.metrics.handovers));
    }
    Ok(out.join(", "))
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let mut r = rng(31);
    let empty = World::new(vec![], vec![], []);
    let mut solvable = 0;
    for i in 0..200 {
        let (g, _) = random_graph(&mut r, 12, 8);
        for n in g.nodes() {
            let want = oracle_cost(&g, n.id);
            let got = g.node_cost(n.id).map_err(|e| e.to_string())?;
            check(got == want, format!("graph {i} node {}: cost {got}, oracle {want}", n.id.0))?;
            check(g.solved(n.id).unwrap() == want.is_finite(), format!("graph {i} node {}: solved flag", n.id.0))?;
        }
        let best = oracle_cost(&g, g.root());
        if !best.is_finite() {
            continue;
        }
        solvable += 1;
        let net = GraphNetwork::new(g.clone(), MAIN_TEMPLATE, 16);
        let pick = next_optimal_state(&next_feasible_states(&net, &empty)).map_err(|e| format!("graph {i}: {e}"))?;
        let trees = solution_trees(&g, g.root());
        check(
            trees.iter().any(|(c, arcs)| *c == best && arcs.contains(&pick.arc.id)),
            format!("graph {i}: arc {} is on no cheapest solution", pick.arc.id),
        )?;
    }
    let took = t.elapsed();
    check(took < Duration::from_secs(5), format!("took {took:?}"))?;
    Ok(format!("200 graphs, {solvable} solvable, {took:.2?}"))
}

fn criterion_4() -> Verdict {
    let mut r = rng(4);
    let (mut blocked, mut empty) = (0, 0);
    while blocked < 100 {
        let (world, q) = random_world(&mut r);
        let res = world.plan_motion(&q).map_err(|e| e.to_string())?;
        if res.feasible {
            continue;
        }
        blocked += 1;
        if res.obstructors.is_empty() {
            empty += 1;
            let far = world.objects["target"].pose.point().norm() > REACH || q.goal_region.center.norm() > REACH;
            check(far, format!("world {blocked}: empty obstructors for an in-reach goal"))?;
            continue;
        }
        let mut cleared = world.clone();
        for o in &res.obstructors {
            cleared.objects.remove(o);
        }
        let again = cleared.plan_motion(&q).map_err(|e| e.to_string())?;
        check(again.feasible, format!("world {blocked}: still blocked without {:?}", res.obstructors))?;
    }
    Ok(format!("100 blocked worlds, {empty} out of reach"))
}

fn criterion_5() -> Verdict {
    let s = gen_habitat(&HabitatConfig::default()).map_err(|e| e.to_string())?;
    let (trace, took) = solve(&s)?;
    check(trace.final_status == FinalStatus::GoalAchieved, format!("{:?}", trace.final_status))?;
    let carried = trace.transitions.iter().any(|t| {
        t.reason == TransitionReason::MotionFailure
            && t.carried_knowledge.iter().any(|f| f.predicate == "obstructs" && ["p1", "p2"].contains(&f.args[0].as_str()))
    });
    check(carried, "no expansion carried a container obstruction")?;
    for p in ["p1", "p2"] {
        let pose = |w: &andor_tmp::world::WorldState| w.objects.iter().find(|o| o.id == p).map(|o| o.pose);
        let (a, b) = (pose(&trace.initial_world).ok_or(p)?, pose(&trace.final_world).ok_or(p)?);
        let drift = (a.x - b.x).abs().max((a.y - b.y).abs()).max((a.yaw - b.yaw).abs());
        check(drift <= 1e-6, format!("{p} ended {drift} away from where it started"))?;
    }
    let done: Vec<String> = trace.executed_actions().iter().map(|o| o.action.to_string()).collect();
    let at = |a: String| done.iter().position(|x| x.starts_with(&a));
    for x in ["s1", "s2"] {
        match (at(format!("sterilise({x}")), at(format!("incubate({x}"))) {
            (Some(a), Some(b)) => check(a < b, format!("{x} incubated before sterilising"))?,
            _ => return Err(format!("{x} was not both sterilised and incubated")),
        }
    }
    let rows: Vec<&str> = trace.metrics.modules.iter().map(|(n, _, _)| n.as_str()).collect();
    check(rows == TABLE2_ROWS, format!("module rows {rows:?}"))?;
    check(took < Duration::from_secs(60), format!("took {took:?}"))?;
    Ok(format!("d={} actions={} in {took:.2?}", trace.depth(), done.len()))
}

fn cli_run(scenario: &str, extra: &[&str], dir: &std::path::Path, tag: &str) -> Result<(String, String), String> {
    let (m, t) = (dir.join(format!("{tag}.json")), dir.join(format!("{tag}.jsonl")));
    let mut args = vec!["run", "--scenario", scenario, "--seed", "17"];
    args.extend_from_slice(extra);
    args.extend(["--out", m.to_str().unwrap(), "--trace", t.to_str().unwrap()]);
    let o = Command::new(env!("CARGO_BIN_EXE_andor-tmp")).args(&args).output().map_err(|e| e.to_string())?;
    check(o.status.code() == Some(0), format!("{scenario}: exit {:?}", o.status.code()))?;
    let read = |p: &PathBuf| std::fs::read_to_string(p).map_err(|e| e.to_string());
    Ok((mask_text(&read(&m)?), mask_text(&read(&t)?)))
}

fn criterion_6() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (name, extra) in [("hanoi", &["--disks", "3"][..]), ("habitat", &[])] {
        let a = cli_run(name, extra, dir.path(), "a")?;
        let b = cli_run(name, extra, dir.path(), "b")?;
        check(a.0 == b.0, format!("{name}: metrics differ"))?;
        check(a.1 == b.1, format!("{name}: traces differ"))?;
    }
    Ok("hanoi and habitat, seed 17".into())
}

fn criterion_7() -> Verdict {
    let runs = [
        gen_hanoi(3, &HanoiLayout::dual_arm()),
        gen_hanoi(4, &HanoiLayout::omnipotent()),
        gen_habitat(&HabitatConfig::default()),
    ];
    let mut out = vec![];
    for s in runs {
        let (trace, _) = solve(&s.map_err(|e| e.to_string())?)?;
        let sum = trace.metrics.total_attempts();
        check(sum == trace.plan_motion_calls, format!("{sum} attempts vs {} calls", trace.plan_motion_calls))?;
        out.push(sum.to_string());
    }
    Ok(format!("attempts {}", out.join("/")))
}

fn criterion_8() -> Verdict {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let fixpoint = |text: &str| -> Result<(), String> {
        let s = parse_scenario(text).map_err(|e| e.to_string())?;
        let out = serialize(&s);
        let again = parse_scenario(&out).map_err(|e| e.to_string())?;
        check(again == s && serialize(&again) == out, "not a fixpoint")
    };
    let mut shipped = 0;
    for e in std::fs::read_dir(&fixtures).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        if p.extension().is_some_and(|x| x == "scn") {
            fixpoint(&std::fs::read_to_string(&p).unwrap()).map_err(|e| format!("{}: {e}", p.display()))?;
            shipped += 1;
        }
    }
    let mut r = rng(808);
    for i in 0..100 {
        fixpoint(&fuzz_scenario(&mut r)).map_err(|e| format!("fuzz case {i}: {e}"))?;
    }
    let dir = fixtures.join("malformed");
    let expected = std::fs::read_to_string(dir.join("expected.txt")).map_err(|e| e.to_string())?;
    let mut bad = 0;
    for line in expected.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let text = std::fs::read_to_string(dir.join(f[0])).map_err(|e| e.to_string())?;
        let e = match parse_scenario(&text) {
            Ok(_) => return Err(format!("{} parsed", f[0])),
            Err(e) => e,
        };
        let kind = match f[1] {
            "lex" => DslErrorKind::Lex,
            "parse" => DslErrorKind::Parse,
            _ => DslErrorKind::Resolve,
        };
        let want = (kind, f[2].parse::<usize>().unwrap(), f[3].parse::<usize>().unwrap());
        check((e.kind, e.line, e.column) == want, format!("{}: got {e}", f[0]))?;
        bad += 1;
    }
    Ok(format!("{shipped} fixtures, 100 fuzz cases, {bad} malformed"))
}

fn main() {
    let criteria: [(u8, fn() -> Verdict); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = vec![];
    for (n, f) in criteria {
        match f() {
            Ok(detail) => println!("criterion {n}: PASS {detail}"),
            Err(why) => {
                println!("criterion {n}: FAIL {why}");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
