//! Fixed-timestep multi-agent simulation.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lp::{solve_velocity_detailed, HalfPlaneConstraint};
use super::orca::{agent_constraint, wall_constraint, Body};
use super::placement::flow_spawn_count;
use super::vec2::{closest_point_on_segment, Vec2};
use super::world::{clamp_to_walls, Layout, Segment};
use crate::error::SimError;

pub const DEFAULT_RADIUS: f64 = 0.3;
pub const DEFAULT_MAX_SPEED: f64 = 1.2;

/// Tolerance used when testing whether a disc touches a goal segment.
const TOUCH_EPS: f64 = 1e-6;
/// Spawn positions are re-drawn this many times when they overlap.
const SPAWN_RETRIES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    /// Agent-agent avoidance horizon (s).
    pub tau: f64,
    /// Agent-wall avoidance horizon (s).
    pub tau_obst: f64,
    pub neighbor_radius: f64,
    /// At most this many nearest neighbors produce constraints.
    pub max_neighbors: usize,
    pub max_sim_time: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1.0 / 24.0,
            tau: 3.0,
            tau_obst: 1.0,
            neighbor_radius: 5.0,
            max_neighbors: 10,
            max_sim_time: 1000.0,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.tau >= self.dt) {
            return bad(format!("tau ({}) must be at least dt ({})", self.tau, self.dt));
        }
        if !(self.tau_obst > 0.0) {
            return bad(format!("tau_obst must be positive, got {}", self.tau_obst));
        }
        if !(self.neighbor_radius >= 0.0) {
            return bad(format!("neighbor_radius must be non-negative, got {}", self.neighbor_radius));
        }
        if !(self.max_sim_time > 0.0) {
            return bad(format!("max_sim_time must be positive, got {}", self.max_sim_time));
        }
        Ok(())
    }
}

/// Where an agent is heading right now.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Goal {
    /// An opening (index into the layout portals).
    Portal(usize),
    /// A fixed point; the agent stays active once it arrives.
    Point(Vec2),
}

/// How an agent picks openings after its explicit route runs out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Routing {
    /// Follow the explicit route only; finishing it ends the agent's run.
    Fixed,
    /// Draw the next opening from the room's weighted choices on entry.
    Table,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub id: usize,
    pub group: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub max_speed: f64,
    pub room: usize,
    pub goal: Goal,
    pub route: VecDeque<usize>,
    pub routing: Routing,
    pub spawned_at: f64,
    pub exited_at: Option<f64>,
}

/// Template for agents created during the run.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentTemplate {
    pub group: usize,
    pub radius: f64,
    pub max_speed: f64,
    pub route: Vec<usize>,
    pub routing: Routing,
}

impl Default for AgentTemplate {
    fn default() -> Self {
        AgentTemplate {
            group: 0,
            radius: DEFAULT_RADIUS,
            max_speed: DEFAULT_MAX_SPEED,
            route: Vec::new(),
            routing: Routing::Table,
        }
    }
}

/// Constant inflow of agents on a spawn band.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSource {
    pub room: usize,
    pub band: Segment,
    pub flow: f64,
    pub duration: f64,
    pub template: AgentTemplate,
    accumulator: f64,
}

impl FlowSource {
    pub fn new(room: usize, band: Segment, flow: f64, duration: f64, template: AgentTemplate) -> Self {
        FlowSource { room, band, flow, duration, template, accumulator: 0.0 }
    }

    fn exhausted(&self, t: f64) -> bool {
        self.flow <= 0.0 || t >= self.duration
    }
}

/// An agent passing through an opening.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortalEvent {
    pub agent: usize,
    pub group: usize,
    /// Room the agent left.
    pub room: usize,
    pub portal: usize,
    pub time: f64,
}

/// An agent that left the simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finished {
    pub agent: usize,
    pub group: usize,
    pub room: usize,
    pub spawned_at: f64,
    pub exited_at: f64,
}

/// Per-room running sums for time-averaged metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoomAccumulator {
    pub agent_ticks: u64,
    pub speed_sum: f64,
    pub occupied_ticks: u64,
    pub density_sum: f64,
}

/// Counters exposed for diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub ticks: u64,
    pub lp_fallbacks: u64,
    pub wall_clamps: u64,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub layout: Layout,
    pub cfg: SimConfig,
    pub agents: Vec<Agent>,
    pub sources: Vec<FlowSource>,
    /// Weighted next-opening choices per room for [`Routing::Table`] agents.
    pub routing_table: Vec<Vec<(usize, f64)>>,
    pub finished: Vec<Finished>,
    pub events: Vec<PortalEvent>,
    pub rooms: Vec<RoomAccumulator>,
    pub stats: StepStats,
    /// Disabling walls removes wall constraints and clamping (used as a
    /// negative control by the validation scenarios).
    pub walls_enabled: bool,
    time: f64,
    tick: u64,
    next_id: usize,
    rng: ChaCha8Rng,
    grid: AgentGrid,
    scratch: Scratch,
}

#[derive(Clone, Debug, Default)]
struct Scratch {
    constraints: Vec<HalfPlaneConstraint>,
    neighbors: Vec<(f64, usize)>,
    velocities: Vec<Vec2>,
}

impl Simulation {
    pub fn new(layout: Layout, cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let rooms = vec![RoomAccumulator::default(); layout.rooms.len()];
        let routing_table = vec![Vec::new(); layout.rooms.len()];
        let grid = AgentGrid::new(layout.bounds_min, layout.bounds_max, 1.0);
        Ok(Simulation {
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            layout,
            cfg,
            agents: Vec::new(),
            sources: Vec::new(),
            routing_table,
            finished: Vec::new(),
            events: Vec::new(),
            rooms,
            stats: StepStats::default(),
            walls_enabled: true,
            time: 0.0,
            tick: 0,
            next_id: 0,
            grid,
            scratch: Scratch::default(),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Adds an agent at `position` in `room`; returns its id.
    pub fn add_agent(&mut self, room: usize, position: Vec2, template: &AgentTemplate) -> Result<usize, SimError> {
        if room >= self.layout.rooms.len() {
            return Err(SimError::InvalidInput(format!("room index {room} out of range")));
        }
        if !(template.radius > 0.0 && template.max_speed > 0.0) {
            return Err(SimError::InvalidInput("agent radius and max speed must be positive".into()));
        }
        if !position.is_finite() {
            return Err(SimError::InvalidInput("agent position must be finite".into()));
        }
        let mut route: VecDeque<usize> = template.route.iter().copied().collect();
        for &p in &route {
            if p >= self.layout.portals.len() {
                return Err(SimError::InvalidInput(format!("route references unknown portal {p}")));
            }
        }
        let goal = match route.pop_front() {
            Some(p) => Some(Goal::Portal(p)),
            None if template.routing == Routing::Table => self.choose_portal(room).map(Goal::Portal),
            None => None,
        };
        let goal = goal.ok_or_else(|| {
            SimError::InvalidInput(format!("agent in room '{}' has nowhere to go", self.layout.rooms[room].id))
        })?;
        Ok(self.push_agent(room, position, goal, route, template))
    }

    /// Adds an agent that walks to a fixed point and stays there.
    pub fn add_point_agent(&mut self, room: usize, position: Vec2, target: Vec2, template: &AgentTemplate) -> usize {
        self.push_agent(room, position, Goal::Point(target), VecDeque::new(), template)
    }

    fn push_agent(
        &mut self,
        room: usize,
        position: Vec2,
        goal: Goal,
        route: VecDeque<usize>,
        t: &AgentTemplate,
    ) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.agents.push(Agent {
            id,
            group: t.group,
            position,
            velocity: Vec2::ZERO,
            radius: t.radius,
            max_speed: t.max_speed,
            room,
            goal,
            route,
            routing: t.routing,
            spawned_at: self.time,
            exited_at: None,
        });
        id
    }

    fn choose_portal(&mut self, room: usize) -> Option<usize> {
        let choices = &self.routing_table[room];
        let total: f64 = choices.iter().map(|c| c.1).sum();
        if choices.is_empty() || !(total > 0.0) {
            return None;
        }
        if choices.len() == 1 {
            return Some(choices[0].0);
        }
        let mut draw = self.rng.gen::<f64>() * total;
        for &(portal, w) in choices {
            if draw < w {
                return Some(portal);
            }
            draw -= w;
        }
        choices.last().map(|c| c.0)
    }

    /// True when no agent is active and no source can spawn any more.
    pub fn is_idle(&self) -> bool {
        self.agents.is_empty() && self.sources.iter().all(|s| s.exhausted(self.time))
    }

    /// Active agents that are heading for openings (point-goal agents never
    /// leave, so they do not keep a run alive).
    pub fn has_pending_work(&self) -> bool {
        self.agents.iter().any(|a| matches!(a.goal, Goal::Portal(_)))
            || self.sources.iter().any(|s| !s.exhausted(self.time))
    }

    /// Runs until nothing is left to do or `max_sim_time` is reached.
    /// Returns true when the run was cut off by the time limit.
    pub fn run(&mut self) -> bool {
        self.run_with(|_| {})
    }

    /// Like [`Simulation::run`], calling `observe` after every tick.
    pub fn run_with(&mut self, mut observe: impl FnMut(&Simulation)) -> bool {
        while self.has_pending_work() {
            if self.time >= self.cfg.max_sim_time - 1e-9 {
                return true;
            }
            self.step();
            observe(self);
        }
        false
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self) {
        self.spawn_from_sources();
        self.compute_velocities();
        self.integrate();
        self.tick += 1;
        self.time = self.tick as f64 * self.cfg.dt;
        self.resolve_goals();
        self.accumulate_metrics();
        self.stats.ticks += 1;
    }

    fn spawn_from_sources(&mut self) {
        for s in 0..self.sources.len() {
            let (count, acc) = {
                let src = &self.sources[s];
                flow_spawn_count(src.flow, src.duration, self.time, self.cfg.dt, src.accumulator)
            };
            self.sources[s].accumulator = acc;
            for _ in 0..count {
                let src = self.sources[s].clone();
                let pos = self.draw_on_band(&src.band, src.template.radius);
                // A source without a valid route is a construction error
                // caught when the scenario is built; skip silently here.
                let _ = self.add_agent(src.room, pos, &src.template);
            }
        }
    }

    /// Uniform position along `band` inset by `radius`, re-drawn a few
    /// times to avoid overlapping active agents.
    fn draw_on_band(&mut self, band: &Segment, radius: f64) -> Vec2 {
        let len = band.length();
        let dir = (band.b - band.a).normalize_or_zero();
        let (lo, hi) = if len > 2.0 * radius { (radius, len - radius) } else { (len / 2.0, len / 2.0) };
        let mut pos = band.a;
        for _ in 0..SPAWN_RETRIES {
            let s = if hi > lo { self.rng.gen_range(lo..=hi) } else { lo };
            pos = band.a + dir * s;
            let clear = self
                .agents
                .iter()
                .all(|a| a.position.distance_squared(pos) >= (a.radius + radius) * (a.radius + radius));
            if clear {
                break;
            }
        }
        pos
    }

    fn preferred_velocity(&self, agent: &Agent) -> Vec2 {
        match agent.goal {
            Goal::Portal(p) => {
                let seg = self.layout.portals[p].segment;
                preferred_velocity_to_segment(agent.position, seg, agent.radius, agent.max_speed)
            }
            Goal::Point(target) => {
                let d = target - agent.position;
                let dist = d.length();
                if dist < 1e-9 {
                    Vec2::ZERO
                } else {
                    d / dist * agent.max_speed.min(dist / self.cfg.dt)
                }
            }
        }
    }

    /// Closed openings block everybody except agents heading for an
    /// opening with the same segment.
    fn blocks(&self, agent: &Agent, obstacle: usize) -> bool {
        match (self.layout.obstacles[obstacle].portal, agent.goal) {
            (None, _) => true,
            (Some(q), Goal::Portal(p)) => q != p && self.layout.portals[q].segment != self.layout.portals[p].segment,
            (Some(_), Goal::Point(_)) => true,
        }
    }

    fn compute_velocities(&mut self) {
        let n = self.agents.len();
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.velocities.clear();
        self.grid.rebuild(&self.agents);
        let k = self.cfg.max_neighbors;
        let range = self.cfg.neighbor_radius;

        for i in 0..n {
            let agent = &self.agents[i];
            let me = Body { id: agent.id, position: agent.position, velocity: agent.velocity, radius: agent.radius };
            scratch.constraints.clear();

            if self.walls_enabled {
                let reach = (self.cfg.tau_obst * agent.max_speed + agent.radius).min(self.layout.obstacle_reach());
                for &o in self.layout.obstacles_near(agent.position) {
                    if !self.blocks(agent, o) {
                        continue;
                    }
                    let seg = self.layout.obstacles[o].segment;
                    if seg.distance_to(agent.position) <= reach {
                        scratch.constraints.push(wall_constraint(&me, seg.a, seg.b, self.cfg.tau_obst));
                    }
                }
            }
            let hard = scratch.constraints.len();

            if k > 0 && range > 0.0 {
                self.grid.nearest(&self.agents, i, k, range, &mut scratch.neighbors);
                for &(_, j) in &scratch.neighbors {
                    let other = &self.agents[j];
                    let body =
                        Body { id: other.id, position: other.position, velocity: other.velocity, radius: other.radius };
                    scratch.constraints.push(agent_constraint(&me, &body, self.cfg.tau, self.cfg.dt));
                }
            }

            let pref = self.preferred_velocity(agent);
            let out = solve_velocity_detailed(&scratch.constraints, hard, pref, agent.max_speed);
            if out.fallback {
                self.stats.lp_fallbacks += 1;
            }
            let v = if out.velocity.is_finite() { out.velocity } else { Vec2::ZERO };
            scratch.velocities.push(v);
        }

        for (agent, v) in self.agents.iter_mut().zip(&scratch.velocities) {
            agent.velocity = *v;
        }
        self.scratch = scratch;
    }

    fn integrate(&mut self) {
        let dt = self.cfg.dt;
        for i in 0..self.agents.len() {
            let prev = self.agents[i].position;
            let mut next = prev + self.agents[i].velocity * dt;
            if self.walls_enabled {
                let agent = &self.agents[i];
                let near: Vec<Segment> = self
                    .layout
                    .obstacles_near(next)
                    .iter()
                    .chain(self.layout.obstacles_near(prev))
                    .filter(|&&o| self.blocks(agent, o))
                    .map(|&o| self.layout.obstacles[o].segment)
                    .collect();
                let clamped = clamp_to_walls(next, prev, agent.radius, near.iter());
                if clamped != next {
                    self.stats.wall_clamps += 1;
                    next = clamped;
                }
            }
            self.agents[i].position = next;
        }
    }

    fn resolve_goals(&mut self) {
        let mut i = 0;
        while i < self.agents.len() {
            let Goal::Portal(p) = self.agents[i].goal else {
                i += 1;
                continue;
            };
            let portal = &self.layout.portals[p];
            let agent = &self.agents[i];
            if portal.segment.distance_to(agent.position) > agent.radius + TOUCH_EPS {
                i += 1;
                continue;
            }
            self.events.push(PortalEvent {
                agent: agent.id,
                group: agent.group,
                room: agent.room,
                portal: p,
                time: self.time,
            });
            let target_room =
                if agent.room == portal.from { portal.to } else { portal.other_side(agent.room).or(portal.to) };
            let entry = portal.entry;
            match target_room {
                Some(room) => {
                    if let Some(band) = entry {
                        let r = self.agents[i].radius;
                        let pos = self.draw_on_band(&band, r);
                        self.agents[i].position = pos;
                        self.agents[i].velocity = Vec2::ZERO;
                    }
                    self.agents[i].room = room;
                    let next = match self.agents[i].route.pop_front() {
                        Some(p) => Some(p),
                        None if self.agents[i].routing == Routing::Table => self.choose_portal(room),
                        None => None,
                    };
                    match next {
                        Some(p) => {
                            self.agents[i].goal = Goal::Portal(p);
                            i += 1;
                        }
                        None => self.finish(i),
                    }
                }
                None => self.finish(i),
            }
        }
    }

    fn finish(&mut self, i: usize) {
        let mut agent = self.agents.remove(i);
        agent.exited_at = Some(self.time);
        self.finished.push(Finished {
            agent: agent.id,
            group: agent.group,
            room: agent.room,
            spawned_at: agent.spawned_at,
            exited_at: self.time,
        });
    }

    fn accumulate_metrics(&mut self) {
        let mut counts = vec![0u64; self.rooms.len()];
        for agent in &self.agents {
            let acc = &mut self.rooms[agent.room];
            acc.agent_ticks += 1;
            acc.speed_sum += agent.velocity.length();
            counts[agent.room] += 1;
        }
        for (r, &count) in counts.iter().enumerate() {
            if count > 0 {
                let acc = &mut self.rooms[r];
                acc.occupied_ticks += 1;
                acc.density_sum += count as f64 / self.layout.rooms[r].area();
            }
        }
    }
}

/// Full-speed velocity toward the nearest point of `seg` shrunk by `radius`
/// at both ends; zero once the disc overlaps the segment.
pub fn preferred_velocity_to_segment(position: Vec2, seg: Segment, radius: f64, max_speed: f64) -> Vec2 {
    if seg.distance_to(position) <= radius {
        return Vec2::ZERO;
    }
    let len = seg.length();
    let (a, b) = if len > 2.0 * radius {
        let dir = (seg.b - seg.a) / len;
        (seg.a + dir * radius, seg.b - dir * radius)
    } else {
        let m = seg.midpoint();
        (m, m)
    };
    let (target, _) = closest_point_on_segment(position, a, b);
    (target - position).normalize_or_zero() * max_speed
}

/// Uniform grid over agent positions for k-nearest-neighbor queries.
#[derive(Clone, Debug)]
struct AgentGrid {
    origin: Vec2,
    cell: f64,
    cols: usize,
    rows: usize,
    starts: Vec<usize>,
    order: Vec<usize>,
    cell_of: Vec<usize>,
}

impl AgentGrid {
    fn new(min: Vec2, max: Vec2, cell: f64) -> Self {
        let pad = 1.0;
        let origin = min - Vec2::new(pad, pad);
        let cols = ((max.x - min.x + 2.0 * pad) / cell).ceil().max(1.0) as usize;
        let rows = ((max.y - min.y + 2.0 * pad) / cell).ceil().max(1.0) as usize;
        AgentGrid { origin, cell, cols, rows, starts: Vec::new(), order: Vec::new(), cell_of: Vec::new() }
    }

    fn coords(&self, p: Vec2) -> (usize, usize) {
        let c = ((p.x - self.origin.x) / self.cell).floor().clamp(0.0, (self.cols - 1) as f64) as usize;
        let r = ((p.y - self.origin.y) / self.cell).floor().clamp(0.0, (self.rows - 1) as f64) as usize;
        (c, r)
    }

    fn rebuild(&mut self, agents: &[Agent]) {
        let cells = self.cols * self.rows;
        self.starts.clear();
        self.starts.resize(cells + 1, 0);
        self.cell_of.clear();
        for a in agents {
            let (c, r) = self.coords(a.position);
            let idx = r * self.cols + c;
            self.cell_of.push(idx);
            self.starts[idx + 1] += 1;
        }
        for i in 0..cells {
            self.starts[i + 1] += self.starts[i];
        }
        self.order.clear();
        self.order.resize(agents.len(), 0);
        let mut fill = self.starts.clone();
        for (i, &idx) in self.cell_of.iter().enumerate() {
            self.order[fill[idx]] = i;
            fill[idx] += 1;
        }
    }

    /// Up to `k` nearest agents to agent `me` within `range`, sorted by
    /// (distance, id).
    fn nearest(&self, agents: &[Agent], me: usize, k: usize, range: f64, out: &mut Vec<(f64, usize)>) {
        out.clear();
        let p = agents[me].position;
        let (c0, r0) = self.coords(p);
        let range_sq = range * range;
        let max_ring = (range / self.cell).ceil() as usize + 1;
        for ring in 0..=max_ring {
            if ring >= 2 {
                let min_dist = (ring - 1) as f64 * self.cell;
                if min_dist * min_dist > range_sq {
                    break;
                }
                if out.len() == k && min_dist * min_dist > out[k - 1].0 {
                    break;
                }
            }
            let (rlo, rhi) = (r0 as i64 - ring as i64, r0 as i64 + ring as i64);
            let (clo, chi) = (c0 as i64 - ring as i64, c0 as i64 + ring as i64);
            for r in rlo..=rhi {
                if r < 0 || r >= self.rows as i64 {
                    continue;
                }
                let edge_row = r == rlo || r == rhi;
                let mut c = clo;
                while c <= chi {
                    if c >= 0 && c < self.cols as i64 {
                        let idx = r as usize * self.cols + c as usize;
                        for &j in &self.order[self.starts[idx]..self.starts[idx + 1]] {
                            if j == me {
                                continue;
                            }
                            let d = agents[j].position.distance_squared(p);
                            if d > range_sq {
                                continue;
                            }
                            insert_bounded(out, k, (d, j), agents);
                        }
                    }
                    c = if edge_row || c == chi { c + 1 } else { chi };
                }
            }
        }
    }
}

fn insert_bounded(out: &mut Vec<(f64, usize)>, k: usize, item: (f64, usize), agents: &[Agent]) {
    let key = |e: &(f64, usize)| (e.0, agents[e.1].id);
    let pos = out.partition_point(|e| {
        let (d, id) = key(e);
        let (d2, id2) = key(&item);
        d < d2 || (d == d2 && id < id2)
    });
    if pos < k {
        out.insert(pos, item);
        out.truncate(k);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::{Portal, RoomRect};

    fn empty_room() -> Layout {
        let room = RoomRect::new("r", Vec2::new(0.0, 0.0), Vec2::new(20.0, 20.0));
        let exit = Portal {
            id: "exit".into(),
            from: 0,
            to: None,
            segment: Segment::new(Vec2::new(9.0, 20.0), Vec2::new(11.0, 20.0)),
            entry: None,
        };
        Layout::new(vec![room], vec![exit], vec![]).unwrap()
    }

    #[test]
    fn preferred_velocity_examples() {
        let seg = Segment::new(Vec2::new(-1.0, 12.0), Vec2::new(1.0, 12.0));
        let v = preferred_velocity_to_segment(Vec2::new(0.0, 0.0), seg, 0.3, 1.2);
        assert!((v - Vec2::new(0.0, 1.2)).length() < 1e-12);
        let v = preferred_velocity_to_segment(Vec2::new(5.0, 0.0), seg, 0.3, 1.2);
        let expected = (Vec2::new(0.7, 12.0) - Vec2::new(5.0, 0.0)).normalize_or_zero() * 1.2;
        assert!((v - expected).length() < 1e-12);
        assert_eq!(preferred_velocity_to_segment(Vec2::new(0.0, 12.0), seg, 0.3, 1.2), Vec2::ZERO);
    }

    #[test]
    fn nearest_neighbors_match_brute_force() {
        let mut sim = Simulation::new(empty_room(), SimConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = AgentTemplate { route: vec![0], routing: Routing::Fixed, ..Default::default() };
        for _ in 0..200 {
            let p = Vec2::new(rng.gen_range(0.5..19.5), rng.gen_range(0.5..19.5));
            sim.add_agent(0, p, &t).unwrap();
        }
        sim.grid.rebuild(&sim.agents);
        let mut out = Vec::new();
        for i in 0..sim.agents.len() {
            sim.grid.nearest(&sim.agents, i, 10, 5.0, &mut out);
            let mut brute: Vec<(f64, usize)> = (0..sim.agents.len())
                .filter(|&j| j != i)
                .map(|j| (sim.agents[j].position.distance_squared(sim.agents[i].position), j))
                .filter(|e| e.0 <= 25.0)
                .collect();
            brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            brute.truncate(10);
            assert_eq!(out, brute);
        }
    }

    #[test]
    fn idle_simulation_has_no_work() {
        let sim = Simulation::new(empty_room(), SimConfig::default()).unwrap();
        assert!(sim.is_idle());
        assert!(!sim.has_pending_work());
    }
}
