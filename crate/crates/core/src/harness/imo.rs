//! Component and qualitative evacuation checks: walking speed, rounding
//! corners, counter flow and exit route allocation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::fixtures;
use crate::sim::{EnvironmentScenario, Goal, SimConfig, Simulation};

/// Acceptable exit time for the 10 m walk at 1 m/s.
pub const WALK_WINDOW: (f64, f64) = (9.5, 10.5);
/// Two agent centers closer than this count as a hard overlap.
pub const HARD_OVERLAP_SLACK: f64 = 0.05;
/// Counter-flow sizes exercised by default.
pub const COUNTER_FLUXES: [usize; 4] = [0, 10, 50, 100];
/// Reference completion time without counter flow and the accepted band.
pub const COUNTERFLOW_REFERENCE: f64 = 21.0;
pub const COUNTERFLOW_BAND: f64 = 0.4;
/// Cabins expected to use the main exit.
pub const MAIN_EXIT_CABINS: [u32; 8] = [1, 2, 3, 4, 7, 8, 9, 10];

pub(crate) fn scenario(name: &str) -> Result<EnvironmentScenario, SimError> {
    let path = format!("scenarios/{name}.json");
    let text = fixtures::load(&path).ok_or_else(|| SimError::Scenario(format!("missing fixture {path}")))?;
    EnvironmentScenario::from_json(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkReport {
    pub max_speed: f64,
    pub exit_time: Option<f64>,
    pub passed: bool,
}

/// One agent walks 10 m down an empty corridor at its set speed; passes
/// when it arrives within [`WALK_WINDOW`] (the window assumes 1 m/s).
pub fn imo_walk_test(cfg: &SimConfig) -> Result<WalkReport, SimError> {
    imo_walk_test_at_speed(cfg, 1.0)
}

pub fn imo_walk_test_at_speed(cfg: &SimConfig, max_speed: f64) -> Result<WalkReport, SimError> {
    let mut s = scenario("walk")?;
    for g in &mut s.groups {
        g.max_speed = Some(max_speed);
    }
    let mut sim = s.build(cfg)?;
    let censored = sim.run();
    let exit_time = if censored { None } else { sim.finished.first().map(|f| f.exited_at) };
    let passed = exit_time.is_some_and(|t| t >= WALK_WINDOW.0 && t <= WALK_WINDOW.1);
    Ok(WalkReport { max_speed, exit_time, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerReport {
    pub agents: usize,
    pub walls_enabled: bool,
    /// Agent-ticks with a center outside the walkable area.
    pub containment_violations: usize,
    /// Pair-ticks with centers closer than `2r - 0.05`.
    pub hard_overlaps: usize,
    pub min_pair_distance: f64,
    pub finish_time: Option<f64>,
    pub lp_fallbacks: u64,
    pub passed: bool,
}

/// Agents walk through a 2 m wide corridor with a right-angle turn.
/// Passes with zero containment violations, zero hard overlaps, and
/// everybody through.
pub fn imo_corner_test(cfg: &SimConfig, agents: Option<usize>, walls_enabled: bool) -> Result<CornerReport, SimError> {
    let mut s = scenario("corner")?;
    if let Some(n) = agents {
        for g in &mut s.groups {
            g.count = n;
        }
    }
    let mut sim = s.build(cfg)?;
    sim.walls_enabled = walls_enabled;
    let agents = sim.agents.len();
    let mut containment_violations = 0;
    let mut hard_overlaps = 0;
    let mut min_pair_distance = f64::INFINITY;
    let check = |sim: &Simulation, cv: &mut usize, ho: &mut usize, mind: &mut f64| {
        for (i, a) in sim.agents.iter().enumerate() {
            if !sim.layout.is_walkable(a.position, a.radius, 1e-6) {
                *cv += 1;
            }
            for b in &sim.agents[i + 1..] {
                let d = a.position.distance(b.position);
                *mind = mind.min(d);
                if d < a.radius + b.radius - HARD_OVERLAP_SLACK {
                    *ho += 1;
                }
            }
        }
    };
    check(&sim, &mut containment_violations, &mut hard_overlaps, &mut min_pair_distance);
    let censored =
        sim.run_with(|sim| check(sim, &mut containment_violations, &mut hard_overlaps, &mut min_pair_distance));
    let finish_time = if censored { None } else { Some(sim.time()) };
    let passed = containment_violations == 0 && hard_overlaps == 0 && finish_time.is_some();
    Ok(CornerReport {
        agents,
        walls_enabled,
        containment_violations,
        hard_overlaps,
        min_pair_distance,
        finish_time,
        lp_fallbacks: sim.stats.lp_fallbacks,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterflowRun {
    pub counter_flux: usize,
    /// Time at which the last forward agent entered the second room.
    pub completion_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterflowReport {
    pub runs: Vec<CounterflowRun>,
    pub strictly_increasing: bool,
    pub zero_flux_in_band: Option<bool>,
    pub passed: bool,
}

/// Time for the last of 100 agents to pass from the first room into the
/// second through the corridor, while `counter_flux` agents travel the
/// other way.
pub fn counterflow_time(cfg: &SimConfig, counter_flux: usize) -> Result<Option<f64>, SimError> {
    let mut s = scenario("counterflow")?;
    s.groups[1].count = counter_flux;
    let mut sim = s.build(cfg)?;
    let target = sim
        .layout
        .portal_index("corridor_room2")
        .ok_or_else(|| SimError::Scenario("counterflow fixture lacks portal corridor_room2".into()))?;
    let forward = sim.agents.iter().filter(|a| a.group == 0).count();
    let mut arrived = 0;
    let mut last = None;
    let mut seen = 0;
    while arrived < forward && sim.time() < sim.cfg.max_sim_time - 1e-9 && sim.has_pending_work() {
        sim.step();
        for e in &sim.events[seen..] {
            if e.group == 0 && e.portal == target {
                arrived += 1;
                last = Some(e.time);
            }
        }
        seen = sim.events.len();
    }
    Ok(if arrived == forward { last } else { None })
}

/// Runs every counter-flux size; passes when completion times strictly
/// increase and the no-counter-flow time lies within the reference band.
pub fn imo_counterflow_test(cfg: &SimConfig, fluxes: &[usize]) -> Result<CounterflowReport, SimError> {
    let mut runs = Vec::with_capacity(fluxes.len());
    for &c in fluxes {
        runs.push(CounterflowRun { counter_flux: c, completion_time: counterflow_time(cfg, c)? });
    }
    let times: Vec<Option<f64>> = runs.iter().map(|r| r.completion_time).collect();
    let strictly_increasing =
        times.iter().all(|t| t.is_some()) && times.windows(2).all(|w| w[1].unwrap() > w[0].unwrap());
    let zero_flux_in_band = runs.iter().find(|r| r.counter_flux == 0).map(|r| {
        r.completion_time.is_some_and(|t| (t - COUNTERFLOW_REFERENCE).abs() <= COUNTERFLOW_BAND * COUNTERFLOW_REFERENCE)
    });
    let passed = strictly_increasing && zero_flux_in_band.unwrap_or(true);
    Ok(CounterflowReport { runs, strictly_increasing, zero_flux_in_band, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitAllocReport {
    /// Cabin label to the exit its occupants were routed to.
    pub planned: BTreeMap<String, String>,
    /// Cabin label to the exits its occupants actually left through.
    pub observed: BTreeMap<String, Vec<String>>,
    pub mismatches: Vec<String>,
    pub passed: bool,
}

fn cabin_number(label: &str) -> Option<u32> {
    label.strip_prefix("cabin")?.parse().ok()
}

/// Agents in twelve cabins pick the nearest exit by walking distance.
/// Passes when cabins 1-4 and 7-10 use the main exit, the rest the
/// secondary, both as planned and as simulated. `mirrored` reflects the
/// whole deck, which must not change the assignment.
pub fn imo_exit_alloc_test(cfg: &SimConfig, mirrored: bool) -> Result<ExitAllocReport, SimError> {
    let mut s = scenario("exit_alloc")?;
    if mirrored {
        s = s.mirrored_x(0.0)?;
    }
    let labels = s.group_labels();
    let mut sim = s.build(cfg)?;
    let exit_name = |sim: &Simulation, p: usize| sim.layout.portals[p].id.clone();

    let mut planned = BTreeMap::new();
    for a in &sim.agents {
        let last = a.route.back().copied().or(match a.goal {
            Goal::Portal(p) => Some(p),
            Goal::Point(_) => None,
        });
        if let Some(p) = last {
            planned.insert(labels[a.group].clone(), exit_name(&sim, p));
        }
    }
    sim.run();
    let mut observed: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in &sim.events {
        if sim.layout.portals[e.portal].to.is_none() {
            let exits = observed.entry(labels[e.group].clone()).or_default();
            let name = exit_name(&sim, e.portal);
            if !exits.contains(&name) {
                exits.push(name);
            }
        }
    }

    let mut mismatches = Vec::new();
    for label in &labels {
        let Some(n) = cabin_number(label) else { continue };
        let expected = if MAIN_EXIT_CABINS.contains(&n) { "main" } else { "secondary" };
        if planned.get(label).map(String::as_str) != Some(expected) {
            mismatches.push(format!("{label}: planned {:?}, expected {expected}", planned.get(label)));
        }
        if observed.get(label).map(|v| v.as_slice()) != Some(&[expected.to_string()][..]) {
            mismatches.push(format!("{label}: left through {:?}, expected {expected}", observed.get(label)));
        }
    }
    let passed = mismatches.is_empty();
    Ok(ExitAllocReport { planned, observed, mismatches, passed })
}
