//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evac_core::envgraph::{EnvironmentGraph, FlowEdge, RoomNode};
use evac_core::estimator::{estimate_environment, EstimatorConfig, DEGENERATE_WINDOW};
use evac_core::mlp::{Activation, MlpModel};
use evac_core::sim::lp::{solve_velocity, HalfPlaneConstraint};
use evac_core::sim::vec2::Vec2;
use evac_core::RoomSpec;

// ---------------------------------------------------------------- LP

const FEASIBILITY_SLACK: f64 = 1e-12;

fn feasible(cs: &[HalfPlaneConstraint], v: Vec2, max_speed: f64) -> bool {
    v.length() <= max_speed + FEASIBILITY_SLACK && cs.iter().all(|c| c.violation(v) <= FEASIBILITY_SLACK)
}

/// Coarse-to-fine search over the integer lattice `(i, j) -> point(i * h, j * h)`.
/// Each level keeps following the best point while it sits on the window
/// edge, then divides the step by ten.
fn lattice_search(
    point: &dyn Fn(f64, f64) -> Option<Vec2>,
    reach: f64,
    cs: &[HalfPlaneConstraint],
    pref: Vec2,
    max_speed: f64,
) -> Option<(f64, Vec2)> {
    let mut step = 0.05;
    let mut half = (reach / step).ceil() as i64 + 1;
    let mut center = (0i64, 0i64);
    let mut best: Option<(f64, Vec2, (i64, i64))> = None;
    for _level in 0..4 {
        loop {
            let mut moved = false;
            for i in center.0 - half..=center.0 + half {
                for j in center.1 - half..=center.1 + half {
                    let Some(v) = point(i as f64 * step, j as f64 * step) else { continue };
                    if !feasible(cs, v, max_speed) {
                        continue;
                    }
                    let d = v.distance(pref);
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, v, (i, j)));
                        moved = true;
                    }
                }
            }
            let (_, _, ij) = best?;
            let on_edge = (ij.0 - center.0).abs() == half || (ij.1 - center.1).abs() == half;
            center = ij;
            if !(moved && on_edge) {
                break;
            }
        }
        center = (center.0 * 10, center.1 * 10);
        step /= 10.0;
        half = 15;
    }
    best.map(|(d, v, _)| (d, v))
}

/// Brute-force minimizer of `|v - pref|` over the feasible set. The same
/// lattice search runs in a frame aligned with each constraint line (a
/// lattice row lies exactly on the line) and in polar coordinates with a
/// ring exactly on the speed bound, so an optimum on any boundary piece is
/// hit by some lattice; the best result over all frames wins.
pub fn grid_lp_oracle(cs: &[HalfPlaneConstraint], pref: Vec2, max_speed: f64) -> Option<Vec2> {
    let mut best: Option<(f64, Vec2)> = None;
    let mut keep = |r: Option<(f64, Vec2)>| {
        if let Some((d, v)) = r {
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, v));
            }
        }
    };
    let axis = |a: f64, b: f64| Some(Vec2::new(a, b));
    keep(lattice_search(&axis, max_speed, cs, pref, max_speed));
    for c in cs {
        let n = c.normal.normalize_or_zero();
        let u = n.perp();
        let o = c.point;
        let framed = move |a: f64, b: f64| Some(o + u * a + n * b);
        keep(lattice_search(&framed, o.length() + max_speed, cs, pref, max_speed));
    }
    let polar =
        |a: f64, b: f64| (a >= 0.0).then(|| Vec2::new((b / max_speed).cos(), (b / max_speed).sin()) * (max_speed - a));
    keep(lattice_search(&polar, std::f64::consts::PI * max_speed, cs, pref, max_speed));
    best.map(|b| b.1)
}

/// Random constraint set around an interior point, so the feasible region
/// always contains a disc of radius 0.05 and is never a sliver.
pub fn random_feasible_lp(rng: &mut ChaCha8Rng) -> (Vec<HalfPlaneConstraint>, Vec2, f64) {
    let max_speed = rng.gen_range(0.8..2.0);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let inner = Vec2::new(angle.cos(), angle.sin()) * rng.gen_range(0.0..0.7 * max_speed);
    let count = rng.gen_range(1..=6);
    let cs = (0..count)
        .map(|_| {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let normal = Vec2::new(a.cos(), a.sin());
            // The boundary passes behind `inner` at a distance of at least 0.05.
            let point = inner - normal * rng.gen_range(0.05..0.8);
            HalfPlaneConstraint { point, normal }
        })
        .collect();
    let pa = rng.gen_range(0.0..std::f64::consts::TAU);
    let pref = Vec2::new(pa.cos(), pa.sin()) * rng.gen_range(0.0..1.5 * max_speed);
    (cs, pref, max_speed)
}

/// Largest distance between solver and oracle over `cases` random sets.
pub fn lp_oracle_check(cases: usize, seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (cs, pref, max_speed) = random_feasible_lp(&mut rng);
        let got = solve_velocity(&cs, pref, max_speed);
        let want = grid_lp_oracle(&cs, pref, max_speed).expect("constructed sets are feasible");
        worst = worst.max(got.distance(want));
    }
    (cases, worst)
}

// ---------------------------------------------------------------- gradient

/// Squared-error loss of `model` on one sample.
fn loss(model: &MlpModel, x: &[f64], y: f64) -> f64 {
    let p = model.forward(x).unwrap();
    (p - y) * (p - y)
}

/// Compares analytic gradients with central differences on random small
/// models and samples. Returns the number of checked parameters and the
/// worst relative error.
pub fn gradient_check(pairs: usize, params_per_pair: usize, seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..pairs {
        let activation = [Activation::Sigmoid, Activation::Tanh, Activation::Identity][k % 3];
        let hidden = rng.gen_range(2..12);
        let mut model = MlpModel::new(&[hidden], activation, k % 2 == 0, rng.gen());
        if k % 4 < 2 {
            model = model.with_norm(evac_core::mlp::table_norm());
            model.output_scale = rng.gen_range(1.0..50.0);
        }
        if model.use_bias {
            for l in &mut model.layers {
                l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
        }
        let x: Vec<f64> = evac_core::bounds::ALL.iter().map(|b| rng.gen_range(b.min..=b.max)).collect();
        let x: Vec<f64> = if model.norm.is_some() { x } else { x.iter().map(|v| v / 20.0).collect() };
        let y = rng.gen_range(0.0..100.0);
        let grad = model.backward(&x, y).unwrap();
        for _ in 0..params_per_pair {
            let li = rng.gen_range(0..model.layers.len());
            let use_bias = model.use_bias && rng.gen_bool(0.3);
            let h = 1e-5;
            let (analytic, numeric) = if use_bias {
                let i = rng.gen_range(0..model.layers[li].bias.len());
                let orig = model.layers[li].bias[i];
                model.layers[li].bias[i] = orig + h;
                let up = loss(&model, &x, y);
                model.layers[li].bias[i] = orig - h;
                let down = loss(&model, &x, y);
                model.layers[li].bias[i] = orig;
                (grad.layers[li].bias[i], (up - down) / (2.0 * h))
            } else {
                let i = rng.gen_range(0..model.layers[li].weights.len());
                let orig = model.layers[li].weights[i];
                model.layers[li].weights[i] = orig + h;
                let up = loss(&model, &x, y);
                model.layers[li].weights[i] = orig - h;
                let down = loss(&model, &x, y);
                model.layers[li].weights[i] = orig;
                (grad.layers[li].weights[i], (up - down) / (2.0 * h))
            };
            let scale = analytic.abs().max(numeric.abs());
            // Gradients this small are below the difference quotient's noise.
            if scale < 1e-6 {
                continue;
            }
            worst = worst.max((analytic - numeric).abs() / scale);
            checked += 1;
        }
    }
    (checked, worst)
}

// ---------------------------------------------------------------- heuristics

/// Smooth stand-in for a trained model, sensitive to every input.
pub fn stub_model(s: &RoomSpec) -> f64 {
    4.0 + 0.3 * s.width + 0.6 * s.length - 1.5 * s.exit_size
        + 0.4 * s.input_flow * s.flow_duration.min(30.0) / s.exit_size
        + 0.2 * s.flow_duration
        + 0.35 * s.initial_population as f64
}

/// Random DAG over at most `max_rooms` rooms; edges only go from lower to
/// higher index, outgoing fractions sum to one.
pub fn random_dag(rng: &mut ChaCha8Rng, max_rooms: usize) -> EnvironmentGraph {
    let n = rng.gen_range(1..=max_rooms);
    let rooms: Vec<RoomNode> = (0..n)
        .map(|i| {
            let width = rng.gen_range(2.0..20.0);
            let pop = if rng.gen_bool(0.3) { 0 } else { rng.gen_range(1..=99) };
            RoomNode::new(format!("n{i}"), width, rng.gen_range(2.0..20.0), rng.gen_range(0.9..5.0f64).min(width), pop)
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        let later: Vec<usize> = (i + 1..n).collect();
        if later.is_empty() || rng.gen_bool(0.25) {
            continue;
        }
        let k = rng.gen_range(1..=later.len().min(3));
        let mut targets: Vec<usize> = Vec::new();
        while targets.len() < k {
            let t = later[rng.gen_range(0..later.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        let weights: Vec<f64> = targets.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut assigned = 0.0;
        for (j, (&t, w)) in targets.iter().zip(&weights).enumerate() {
            let fraction = if j + 1 == targets.len() { 1.0 - assigned } else { w / total };
            assigned += fraction;
            edges.push(FlowEdge { from: format!("n{i}"), to: format!("n{t}"), fraction });
        }
    }
    EnvironmentGraph::new(rooms, edges)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleRoom {
    pub git: f64,
    pub ift: f64,
    pub window: f64,
    pub flow: f64,
    pub pop: f64,
    pub fet: f64,
    pub gfet: f64,
    pub tt: f64,
}

/// Straight recursive evaluation of the heuristics, room by room, without
/// a topological order.
pub fn oracle_room(g: &EnvironmentGraph, id: &str, model: &dyn Fn(&RoomSpec) -> f64, max_speed: f64) -> OracleRoom {
    let node = g.rooms.iter().find(|r| r.id == id).unwrap();
    let fet_of = |pop: f64| if pop > 0.0 { node.length / 2.0 / max_speed } else { 0.0 };
    let feeders: Vec<(OracleRoom, f64)> = g
        .edges
        .iter()
        .filter(|e| e.to == id)
        .map(|e| (oracle_room(g, &e.from, model, max_speed), e.fraction))
        .collect();
    if feeders.is_empty() {
        let pop = node.initial_population as f64;
        let fet = fet_of(pop);
        let tt = model(&RoomSpec::closed(node.width, node.length, node.exit_size, node.initial_population));
        return OracleRoom { git: 0.0, ift: 0.0, window: 0.0, flow: 0.0, pop, fet, gfet: fet, tt };
    }
    let git = feeders.iter().map(|(d, _)| d.gfet).fold(f64::INFINITY, f64::min);
    let ift = feeders.iter().map(|(d, _)| d.gfet - d.fet + d.tt).fold(f64::NEG_INFINITY, f64::max);
    let arrivals: f64 = feeders.iter().map(|(d, frac)| d.pop * frac).sum();
    let (window, flow) = if arrivals > 0.0 {
        let w = if ift - git > 0.0 { ift - git } else { DEGENERATE_WINDOW };
        (w, arrivals / w)
    } else {
        ((ift - git).max(0.0), 0.0)
    };
    let pop = node.initial_population as f64 + arrivals;
    let fet = fet_of(pop);
    let spec = if flow > 0.0 {
        RoomSpec::new(node.width, node.length, node.exit_size, flow, window, node.initial_population)
    } else {
        RoomSpec::closed(node.width, node.length, node.exit_size, node.initial_population)
    };
    OracleRoom { git, ift, window, flow, pop, fet, gfet: fet + git, tt: model(&spec) }
}

/// Exit rooms' `git + tt`, maximized.
pub fn oracle_tt_e(g: &EnvironmentGraph, model: &dyn Fn(&RoomSpec) -> f64, max_speed: f64) -> f64 {
    g.rooms
        .iter()
        .filter(|r| !g.edges.iter().any(|e| e.from == r.id))
        .map(|r| {
            let o = oracle_room(g, &r.id, model, max_speed);
            o.git + o.tt
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Runs the estimator and the oracle on `cases` random DAGs and returns
/// the largest absolute difference over all compared quantities.
pub fn heuristic_oracle_check(cases: usize, max_rooms: usize, seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EstimatorConfig { clamp_inputs: false, ..EstimatorConfig::default() };
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let g = random_dag(&mut rng, max_rooms);
        let est = estimate_environment(&g, &stub_model, None, &cfg).unwrap();
        let mut diffs: BTreeMap<&str, f64> = BTreeMap::new();
        for r in &g.rooms {
            let o = oracle_room(&g, &r.id, &stub_model, cfg.max_speed);
            let e = &est.per_room[&r.id];
            for (name, a, b) in [
                ("git", e.git, o.git),
                ("ift", e.ift, o.ift),
                ("F", e.flow_duration, o.window),
                ("f", e.input_flow, o.flow),
                ("pop", e.pop, o.pop),
                ("fet", e.fet, o.fet),
                ("gfet", e.gfet, o.gfet),
                ("tt", e.tt, o.tt),
            ] {
                let d = (a - b).abs();
                let slot = diffs.entry(name).or_insert(0.0);
                *slot = slot.max(d);
            }
        }
        let d_tt = (est.tt_e - oracle_tt_e(&g, &stub_model, cfg.max_speed)).abs();
        worst = diffs.values().copied().fold(worst.max(d_tt), f64::max);
    }
    (cases, worst)
}

/// Two 12 m x 12 m rooms in a row, 24 agents upstream, every room taking
/// 10 s. Worked by hand: downstream git 5, ift 10, F 5, f 4.8, pop 24,
/// fet 5, gfet 10, and tt_e 15.
pub fn two_room_chain_matches() -> bool {
    let g = EnvironmentGraph::new(
        vec![RoomNode::new("up", 12.0, 12.0, 2.0, 24), RoomNode::new("down", 12.0, 12.0, 2.0, 0)],
        vec![FlowEdge { from: "up".into(), to: "down".into(), fraction: 1.0 }],
    );
    let e = estimate_environment(&g, &|_: &RoomSpec| 10.0, None, &EstimatorConfig::default()).unwrap();
    let d = &e.per_room["down"];
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    close(d.git, 5.0)
        && close(d.ift, 10.0)
        && close(d.flow_duration, 5.0)
        && close(d.input_flow, 4.8)
        && close(d.pop, 24.0)
        && close(d.fet, 5.0)
        && close(d.gfet, 10.0)
        && close(e.tt_e, 15.0)
}
