use std::collections::BTreeSet;

use proptest::prelude::*;
use sous_core::eval::{run_scenario, PersonaScript, ScenarioConfig, Transcript};
use sous_core::llm::CompliantBackend;
use sous_core::planner::{Agent, CapabilityTable, PlannerKind, PlannerState};
use sous_core::recipe::{parse_nested_list, render_nested_list, RecipeBook, RecipeDag, Subtask};
use sous_core::runtime::{check_log, FaultCategory, FaultConfig, Runtime, WorldConfig};
use sous_core::skills::{parse_skill_program, SkillCall, SkillProgram};
use std::sync::Arc;

/// Node count plus edges `(a, b)` with `a < b`, so the graph is acyclic.
fn dag_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<bool>)> {
    (1usize..=12).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        (
            Just(n),
            proptest::sample::subsequence(pairs.clone(), 0..=pairs.len()),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

fn build(n: usize, edges: &[(usize, usize)], done: &[bool]) -> RecipeDag {
    // Reverse the ids so document order differs from the edge direction.
    let id = |i: usize| format!("n{}", n - i);
    let nodes = (0..n)
        .map(|i| Subtask {
            done: done[i],
            ..Subtask::new(id(i), id(i))
        })
        .collect();
    RecipeDag::new("r", nodes, edges.iter().map(|&(a, b)| (id(a), id(b)))).unwrap()
}

/// Depth sequences for nested lists: starts at 0, never jumps more than one level.
fn depths() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..4, 1..20).prop_map(|raw| {
        let mut out: Vec<usize> = Vec::with_capacity(raw.len());
        for r in raw {
            let max = out.last().map_or(0, |d| d + 1);
            out.push(r.min(max));
        }
        out
    })
}

fn nested_text(depths: &[usize]) -> String {
    let mut s = String::from("recipe: Generated\n\n");
    for (i, d) in depths.iter().enumerate() {
        s.push_str(&format!("{}- step {i}\n", "    ".repeat(*d)));
    }
    s
}

/// Parents of item `i`: the run of adjacent items one level up that
/// most recently precedes it.
fn nested_parents(depths: &[usize], i: usize) -> BTreeSet<usize> {
    let k = depths[i];
    if k == 0 {
        return BTreeSet::new();
    }
    let mut j = i - 1;
    while depths[j] != k - 1 {
        j -= 1;
    }
    let mut run = BTreeSet::from([j]);
    while j > 0 && depths[j - 1] == k - 1 {
        j -= 1;
        run.insert(j);
    }
    run
}

const SKILLS: [(&str, usize); 6] = [
    ("pick_up_item", 1),
    ("place_item_at", 1),
    ("go_to", 1),
    ("stir", 0),
    ("get_obj_from_user", 1),
    ("spread", 1),
];

fn program_strategy() -> impl Strategy<Value = SkillProgram> {
    let call = (0..SKILLS.len(), proptest::collection::vec("[A-Z]{1,6}(_[A-Z]{1,6}){0,2}", 1))
        .prop_map(|(i, args)| {
            let (name, arity) = SKILLS[i];
            SkillCall {
                skill: name.to_string(),
                args: args.into_iter().take(arity).collect(),
            }
        });
    proptest::collection::vec(call, 1..10).prop_map(|calls| SkillProgram { calls, skipped: vec![] })
}

proptest! {
    #[test]
    fn frontier_is_exactly_the_unblocked_nodes((n, edges, done) in dag_strategy()) {
        let dag = build(n, &edges, &done);
        let want: BTreeSet<String> = (0..n)
            .filter(|&i| !done[i] && edges.iter().filter(|e| e.1 == i).all(|e| done[e.0]))
            .map(|i| format!("n{}", n - i))
            .collect();
        let got: BTreeSet<String> = dag.available_subtasks().into_iter().map(str::to_string).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn topological_order_respects_every_edge((n, edges, _done) in dag_strategy()) {
        let dag = build(n, &edges, &vec![false; n]);
        let order = dag.topological_order();
        prop_assert_eq!(order.len(), n);
        let pos = |id: &str| order.iter().position(|x| *x == id).unwrap();
        for (a, b) in dag.edges() {
            prop_assert!(pos(a) < pos(b));
        }
    }

    #[test]
    fn marking_frontier_nodes_finishes_every_dag((n, edges, _done) in dag_strategy(), picks in proptest::collection::vec(any::<usize>(), 12)) {
        let mut dag = build(n, &edges, &vec![false; n]);
        for p in picks.iter().cycle().take(n) {
            let frontier: Vec<String> = dag.available_subtasks().into_iter().map(str::to_string).collect();
            prop_assert!(!frontier.is_empty());
            dag.set_done(&frontier[p % frontier.len()]).unwrap();
        }
        prop_assert!(dag.is_finished());
    }

    #[test]
    fn nested_lists_parse_to_their_enclosing_runs(depths in depths()) {
        let dag = parse_nested_list(&nested_text(&depths)).unwrap();
        prop_assert_eq!(dag.len(), depths.len());
        for i in 0..depths.len() {
            let got: BTreeSet<usize> = dag
                .parents(&format!("step {i}"))
                .unwrap()
                .into_iter()
                .map(|p| p.trim_start_matches("step ").parse().unwrap())
                .collect();
            prop_assert_eq!(got, nested_parents(&depths, i), "item {}", i);
        }
        let rendered = render_nested_list(&dag).unwrap();
        let again = parse_nested_list(&rendered).unwrap();
        prop_assert_eq!(again.edges().collect::<Vec<_>>(), dag.edges().collect::<Vec<_>>());
    }

    #[test]
    fn skill_parser_never_panics(text in any::<String>()) {
        if let Ok(p) = parse_skill_program(&text) {
            prop_assert!(!p.calls.is_empty());
        }
    }

    #[test]
    fn skill_programs_round_trip(program in program_strategy()) {
        let back = parse_skill_program(&program.serialize()).unwrap();
        prop_assert_eq!(back, program);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn runtime_logs_stay_legal_under_faults(
        seed in any::<u64>(),
        work in proptest::collection::vec((any::<bool>(), 0usize..4), 1..6),
        cancel_at in proptest::collection::vec(0usize..200, 0..4),
        p in 0.0f64..0.5,
    ) {
        let book = Arc::new(RecipeBook::builtin());
        let backend = CompliantBackend::new(book, CapabilityTable::default());
        let mut faults = FaultConfig::none();
        for c in FaultCategory::ALL {
            faults = faults.with(c, p / 3.0);
        }
        let mut rt = Runtime::new(WorldConfig::default(), faults, seed, 0);
        let mut state = PlannerState::new();
        let r2 = ["get salt", "get pepper", "get bread and turkey", "get lettuce"];
        let r1 = ["hand over spoon", "stir pot", "hand over spoon", "stir pot"];
        for (on_r2, i) in work {
            let (agent, label) = if on_r2 { (Agent::R2, r2[i]) } else { (Agent::R1, r1[i]) };
            state.robot_mut(agent).unwrap().subtask_queue.push(label.to_string());
        }
        for step in 0..200 {
            if cancel_at.contains(&step) {
                rt.cancel(if step % 2 == 0 { Agent::R1 } else { Agent::R2 }, &mut state);
            }
            rt.step(&mut state, &backend);
        }
        prop_assert_eq!(check_log(rt.log()), vec![]);
        prop_assert!(rt.conservation_breaches().is_empty());
        prop_assert!(rt.world().check_conservation().is_ok());
    }

    #[test]
    fn transcripts_survive_jsonl(seed in 0u64..1000, faulty in any::<bool>()) {
        let book = Arc::new(RecipeBook::builtin());
        let backend = CompliantBackend::new(book.clone(), CapabilityTable::default());
        let dag = book.get("Sundae").unwrap();
        let mut cfg = ScenarioConfig::new(PlannerKind::Tree, seed);
        if faulty {
            cfg.faults = FaultConfig::none().with(FaultCategory::A, 0.3);
        }
        let t = run_scenario(&PersonaScript::for_difficulty(sous_core::eval::Difficulty::Hard, dag, seed), &cfg, book.clone(), &backend);
        let text = t.to_jsonl();
        let back = Transcript::from_jsonl(&text).unwrap();
        prop_assert_eq!(back.to_jsonl(), text.clone());
        let again = run_scenario(&PersonaScript::for_difficulty(sous_core::eval::Difficulty::Hard, dag, seed), &cfg, book, &backend);
        prop_assert_eq!(again.to_jsonl(), text);
    }
}
