use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sous_service::{ConfigError, Session, SessionConfig, SessionError, SessionStore};

fn kinds(events: &[sous_service::Event]) -> Vec<String> {
    events.iter().map(|e| e.kind.clone()).collect()
}

#[test]
fn proposing_a_recipe_sets_it_and_replies() {
    let store = SessionStore::in_memory();
    let id = store.create(SessionConfig::default()).unwrap().session_id;
    let events = store.post_chat(&id, "Let's make tossed salad!").unwrap();
    let k = kinds(&events);
    assert!(k.iter().any(|k| k == "set_recipe"), "{k:?}");
    assert!(k.iter().any(|k| k == "say"), "{k:?}");
    assert_eq!(store.snapshot(&id).unwrap().recipe_name, "Tossed Salad");
}

#[test]
fn empty_chat_is_rejected_without_a_tick() {
    let store = SessionStore::in_memory();
    let id = store.create(SessionConfig::default()).unwrap().session_id;
    let before = store.snapshot(&id).unwrap();
    for text in ["", "   \n"] {
        assert!(matches!(store.post_chat(&id, text), Err(SessionError::EmptyChat)));
    }
    let after = store.snapshot(&id).unwrap();
    assert_eq!(before, after);
    assert_eq!(after.tick_counter, 0);
}

#[test]
fn sessions_get_distinct_ids_and_isolated_state() {
    let store = SessionStore::in_memory();
    let a = store.create(SessionConfig::default()).unwrap().session_id;
    let b = store.create(SessionConfig::default()).unwrap().session_id;
    assert_ne!(a, b);
    store.post_chat(&a, "Let's make Sundae!").unwrap();
    let sb = store.snapshot(&b).unwrap();
    assert_eq!(sb.recipe_name, "");
    assert_eq!(sb.tick_counter, 0);
    assert_eq!(store.snapshot(&a).unwrap().recipe_name, "Sundae");
}

#[test]
fn missing_world_file_is_asset_not_found() {
    let store = SessionStore::in_memory();
    let cfg = SessionConfig {
        world: Some("/nonexistent/world.toml".into()),
        ..SessionConfig::default()
    };
    match store.create(cfg) {
        Err(SessionError::Config(ConfigError::AssetNotFound(p))) => assert!(p.ends_with("world.toml")),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("created a session with a missing world"),
    }
    assert!(store.ids().is_empty());
}

#[test]
fn zero_step_period_is_invalid() {
    let cfg = SessionConfig {
        step_ms: Some(0),
        ..SessionConfig::default()
    };
    assert!(matches!(
        SessionStore::in_memory().create(cfg),
        Err(SessionError::Config(ConfigError::InvalidConfig(_)))
    ));
}

#[test]
fn unknown_session_is_reported() {
    let store = SessionStore::in_memory();
    assert!(matches!(store.snapshot("nope"), Err(SessionError::UnknownSession(_))));
    assert!(matches!(store.post_chat("nope", "hi"), Err(SessionError::UnknownSession(_))));
    assert!(matches!(store.subscribe("nope", 0), Err(SessionError::UnknownSession(_))));
}

#[test]
fn rapid_posts_are_processed_in_arrival_order() {
    let store = SessionStore::in_memory();
    let id = store.create(SessionConfig::default()).unwrap().session_id;
    store.post_chat(&id, "Let's make Sundae!").unwrap();
    store.post_chat(&id, "Let's make Bibimbap!").unwrap();
    let turns: Vec<String> = store
        .events_after(&id, 0)
        .unwrap()
        .iter()
        .filter(|e| e.kind == "user_turn")
        .map(|e| e.payload["text"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(turns, ["Let's make Sundae!", "Let's make Bibimbap!"]);
    assert_eq!(store.snapshot(&id).unwrap().recipe_name, "Bibimbap");
}

#[test]
fn events_are_numbered_densely_and_resume_after_k() {
    let store = SessionStore::in_memory();
    let id = store.create(SessionConfig::default()).unwrap().session_id;
    store.post_chat(&id, "Let's make Caesar Salad!").unwrap();
    store.advance(&id, 5).unwrap();
    let all = store.events_after(&id, 0).unwrap();
    for (i, e) in all.iter().enumerate() {
        assert_eq!(e.seq, i as u64 + 1);
    }
    for k in [0, 1, 3, all.len() as u64 - 1, all.len() as u64] {
        let (backlog, _) = store.subscribe(&id, k).unwrap();
        assert_eq!(backlog.first().map(|e| e.seq), if k < all.len() as u64 { Some(k + 1) } else { None });
        assert_eq!(backlog.len() as u64, all.len() as u64 - k);
    }
}

#[test]
fn subscribers_see_each_later_event_once_in_order() {
    let store = SessionStore::in_memory();
    let id = store.create(SessionConfig::default()).unwrap().session_id;
    let (backlog, mut rx) = store.subscribe(&id, 0).unwrap();
    assert_eq!(backlog.len(), 1);
    let posted = store.post_chat(&id, "Let's make Sundae!").unwrap();
    let advanced = store.advance(&id, 3).unwrap();
    let mut got = Vec::new();
    while let Ok(e) = rx.try_recv() {
        got.push(e);
    }
    let want: Vec<_> = posted.into_iter().chain(advanced).collect();
    assert_eq!(got, want);
}

const PHRASES: &[&str] = &[
    "Let's make Tossed Salad!",
    "Let's make Caesar Salad!",
    "Let's make Sundae!",
    "Let's make Turkey Sandwich!",
    "Yes, please go ahead.",
    "No, not now.",
    "Thanks!",
    "R1, stop!",
    "R2, stop!",
    "I will handle Get pepper.",
    "I finished Prepare lettuce.",
    "Can we make pizza?",
];

fn random_session(dir: &std::path::Path, seed: u64) -> Session {
    let mut rng = StdRng::seed_from_u64(seed);
    let cfg = SessionConfig {
        seed,
        ..SessionConfig::default()
    };
    let mut s = Session::create(&format!("s{seed:04}"), cfg, Some(dir)).unwrap();
    let ops = rng.random_range(3..15);
    for _ in 0..ops {
        if rng.random_bool(0.5) {
            s.post_chat(PHRASES[rng.random_range(0..PHRASES.len())]).unwrap();
        } else {
            s.advance(rng.random_range(1..8)).unwrap();
        }
    }
    s
}

#[test]
fn snapshot_equals_the_fold_of_the_log() {
    let tmp = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let s = random_session(&tmp.path().join(seed.to_string()), seed);
        assert_eq!(s.snapshot(), s.folded_snapshot().unwrap(), "seed {seed}");
    }
}

#[test]
fn restart_and_replay_reproduce_the_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    for seed in 100..120 {
        let dir = tmp.path().join(seed.to_string());
        let live = random_session(&dir, seed);
        let snap = live.snapshot();
        let events = live.events().to_vec();
        drop(live);
        let recovered = Session::recover(&dir).unwrap();
        assert_eq!(recovered.snapshot(), snap, "seed {seed}");
        assert_eq!(recovered.events(), &events[..]);
        let on_disk: sous_service::SessionSnapshot =
            serde_json::from_str(&std::fs::read_to_string(dir.join("snapshot.json")).unwrap()).unwrap();
        assert_eq!(on_disk, snap);
    }
}

/// Plays a cooperative user: approves proposals and finishes its own
/// subtasks at once.
fn drive_to_finish(s: &mut Session) {
    for _ in 0..200 {
        let snap = s.snapshot();
        if snap.finished {
            return;
        }
        let obs = &snap.observation;
        if let Some(label) = obs.user_subtask_queue.first() {
            s.post_chat(&format!("I finished {label}.")).unwrap();
        } else if obs.chat_history.last().is_some_and(|m| m.text.contains("for you?")) {
            s.post_chat("Yes, please go ahead.").unwrap();
        } else {
            s.advance(5).unwrap();
        }
    }
}

#[test]
fn recovered_sessions_keep_going() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s0001");
    let mut s = Session::create("s0001", SessionConfig::default(), Some(&dir)).unwrap();
    s.post_chat("Let's make Caesar Salad!").unwrap();
    s.post_chat("Yes, please go ahead.").unwrap();
    s.advance(4).unwrap();
    drop(s);
    let mut s = Session::recover(&dir).unwrap();
    drive_to_finish(&mut s);
    assert!(s.snapshot().finished);
    assert_eq!(s.snapshot(), s.folded_snapshot().unwrap());
    drop(s);
    let s = Session::recover(&dir).unwrap();
    assert!(s.snapshot().finished);
}

#[test]
fn store_reopens_sessions_and_continues_numbering() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, snap) = {
        let store = SessionStore::open(tmp.path()).unwrap();
        let a = store.create(SessionConfig::default()).unwrap().session_id;
        store.post_chat(&a, "Let's make Sundae!").unwrap();
        (a.clone(), store.snapshot(&a).unwrap())
    };
    let store = SessionStore::open(tmp.path()).unwrap();
    assert_eq!(store.ids(), vec![a.clone()]);
    assert_eq!(store.snapshot(&a).unwrap(), snap);
    let b = store.create(SessionConfig::default()).unwrap().session_id;
    assert_ne!(a, b);
}

#[test]
fn same_seed_gives_identical_logs() {
    let t1 = tempfile::tempdir().unwrap();
    let t2 = tempfile::tempdir().unwrap();
    random_session(t1.path(), 7);
    random_session(t2.path(), 7);
    let a = std::fs::read(t1.path().join("events.jsonl")).unwrap();
    let b = std::fs::read(t2.path().join("events.jsonl")).unwrap();
    assert_eq!(a, b);
}
