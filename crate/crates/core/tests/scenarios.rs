use evac_core::harness::imo::{
    imo_corner_test, imo_exit_alloc_test, imo_walk_test, imo_walk_test_at_speed, WALK_WINDOW,
};
use evac_core::harness::showcase::{load_fixture, run_formation, LetterGroup, ShowcaseFixture};
use evac_core::sim::{run_room, SimConfig, Vec2};
use evac_core::RoomSpec;

#[test]
fn walk_lands_in_window() {
    let r = imo_walk_test(&SimConfig::default()).unwrap();
    let t = r.exit_time.expect("walker reaches the end");
    assert!(t >= WALK_WINDOW.0 && t <= WALK_WINDOW.1, "walk took {t}");
    assert!(r.passed);
}

#[test]
fn walk_scales_with_speed() {
    let cfg = SimConfig::default();
    let slow = imo_walk_test_at_speed(&cfg, 0.6).unwrap().exit_time.unwrap();
    let fast = imo_walk_test_at_speed(&cfg, 1.2).unwrap().exit_time.unwrap();
    assert!((slow / fast - 2.0).abs() < 0.05, "slow {slow} fast {fast}");
}

#[test]
fn corner_keeps_crowd_inside() {
    let r = imo_corner_test(&SimConfig::default(), Some(40), true).unwrap();
    assert_eq!(r.agents, 40);
    assert_eq!(r.containment_violations, 0);
    assert_eq!(r.hard_overlaps, 0);
    assert!(r.finish_time.is_some());
    assert!(r.passed);
}

#[test]
fn exits_follow_plan() {
    for mirrored in [false, true] {
        let r = imo_exit_alloc_test(&SimConfig::default(), mirrored).unwrap();
        assert!(r.mismatches.is_empty(), "mirrored={mirrored}: {:?}", r.mismatches);
        assert!(r.passed);
    }
}

fn swap_fixture() -> ShowcaseFixture {
    let room = load_fixture().unwrap().room;
    let (a, b) = (Vec2::new(2.0, 10.0), Vec2::new(12.0, 10.0));
    ShowcaseFixture {
        room,
        groups: vec![
            LetterGroup { label: "A".into(), starts: vec![a], targets: vec![b] },
            LetterGroup { label: "B".into(), starts: vec![b], targets: vec![a] },
        ],
    }
}

#[test]
fn two_agents_swap_places() {
    let r = run_formation(&swap_fixture(), &SimConfig::default()).unwrap();
    assert_eq!(r.agents, 2);
    assert!(r.converged_at.is_some());
    assert_eq!(r.hard_overlaps, 0);
    assert!(r.passed, "{r:?}");
}

#[test]
fn formation_is_repeatable() {
    let cfg = SimConfig::default();
    let a = run_formation(&swap_fixture(), &cfg).unwrap();
    let b = run_formation(&swap_fixture(), &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn room_runs_repeat_with_seed() {
    let spec = RoomSpec::new(8.0, 8.0, 1.5, 1.0, 5.0, 20);
    let cfg = SimConfig { rng_seed: 7, ..SimConfig::default() };
    let a = run_room(&spec, &cfg).unwrap();
    let b = run_room(&spec, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(!a.censored);
    assert!(a.tt > 0.0 && a.avg_exit_time <= a.tt);
}
