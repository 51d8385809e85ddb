//! Multi-room scenarios: a serializable description, its construction into a
//! [`Simulation`], and environment-level metrics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::engine::{
    AgentTemplate, FlowSource, Routing, SimConfig, Simulation, StepStats, DEFAULT_MAX_SPEED, DEFAULT_RADIUS,
};
use super::placement::spiral_positions;
use super::room::SPIRAL_SPACING;
use super::vec2::Vec2;
use super::world::{Layout, Portal, RoomRect, Segment};
use crate::error::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomDef {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortalDef {
    pub id: String,
    pub from: String,
    /// Destination room; absent for exits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    pub a: Vec2,
    pub b: Vec2,
    /// Arrival segment inside `to` for rooms that are not adjacent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<Segment>,
}

/// Share of a room's occupants using a given opening.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteWeight {
    pub room: String,
    pub portal: String,
    pub fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    /// Diamond spiral around the room center.
    #[default]
    Spiral,
    /// Row-major grid starting at `origin`, `cols` agents per row.
    Grid { origin: Vec2, cols: usize, spacing: f64 },
    /// Explicit positions (the group's count must match).
    Points { points: Vec<Vec2> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDef {
    #[serde(default)]
    pub label: String,
    pub room: String,
    pub count: usize,
    #[serde(default)]
    pub placement: Placement,
    /// Explicit sequence of openings; otherwise the scenario policy applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_speed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowDef {
    #[serde(default)]
    pub label: String,
    pub room: String,
    pub flow: f64,
    pub duration: f64,
    /// Spawn segment; defaults to the bottom wall of the room.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Segment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_speed: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePolicy {
    /// Openings drawn per room from the `choices` weights (all outgoing
    /// openings equally when a room has none listed).
    #[default]
    Weighted,
    /// Shortest route to any exit, ties broken by exit id.
    NearestExit,
}

/// A complete multi-room scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentScenario {
    #[serde(default)]
    pub name: String,
    pub rooms: Vec<RoomDef>,
    pub portals: Vec<PortalDef>,
    #[serde(default)]
    pub walls: Vec<Segment>,
    #[serde(default)]
    pub choices: Vec<RouteWeight>,
    #[serde(default)]
    pub groups: Vec<GroupDef>,
    #[serde(default)]
    pub flows: Vec<FlowDef>,
    #[serde(default)]
    pub routing: RoutePolicy,
}

impl EnvironmentScenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text)
            .map_err(|e| SimError::Scenario(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn layout(&self) -> Result<Layout, SimError> {
        let rooms: Vec<RoomRect> = self
            .rooms
            .iter()
            .map(|r| RoomRect::new(r.id.clone(), Vec2::new(r.x, r.y), Vec2::new(r.x + r.width, r.y + r.length)))
            .collect();
        let mut seen = std::collections::HashSet::new();
        for r in &rooms {
            if !seen.insert(r.id.as_str()) {
                return Err(SimError::Scenario(format!("duplicate room id '{}'", r.id)));
            }
        }
        let find = |id: &str| {
            rooms.iter().position(|r| r.id == id).ok_or_else(|| SimError::Scenario(format!("unknown room '{id}'")))
        };
        let mut portals = Vec::with_capacity(self.portals.len());
        for p in &self.portals {
            portals.push(Portal {
                id: p.id.clone(),
                from: find(&p.from)?,
                to: p.to.as_deref().map(find).transpose()?,
                segment: Segment::new(p.a, p.b),
                entry: p.entry,
            });
        }
        Layout::new(rooms, portals, self.walls.clone())
    }

    /// Initial positions of a group's agents.
    pub fn group_positions(&self, group: &GroupDef) -> Result<Vec<Vec2>, SimError> {
        let room = self
            .rooms
            .iter()
            .find(|r| r.id == group.room)
            .ok_or_else(|| SimError::Scenario(format!("unknown room '{}'", group.room)))?;
        match &group.placement {
            Placement::Spiral => Ok(spiral_positions(group.count, room.width, room.length, SPIRAL_SPACING)?
                .into_iter()
                .map(|p| p + Vec2::new(room.x, room.y))
                .collect()),
            Placement::Grid { origin, cols, spacing } => {
                let cols = (*cols).max(1);
                Ok((0..group.count)
                    .map(|i| *origin + Vec2::new((i % cols) as f64 * spacing, (i / cols) as f64 * spacing))
                    .collect())
            }
            Placement::Points { points } => {
                if points.len() != group.count {
                    return Err(SimError::Scenario(format!(
                        "group '{}' lists {} points for {} agents",
                        group.label,
                        points.len(),
                        group.count
                    )));
                }
                Ok(points.clone())
            }
        }
    }

    fn portal_ids(&self, layout: &Layout, ids: &[String]) -> Result<Vec<usize>, SimError> {
        ids.iter()
            .map(|id| layout.portal_index(id).ok_or_else(|| SimError::Scenario(format!("unknown portal '{id}'"))))
            .collect()
    }

    /// Number of agent groups (initial groups followed by flows).
    pub fn group_labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).chain(self.flows.iter().map(|f| f.label.clone())).collect()
    }

    /// Builds a ready-to-run simulation.
    pub fn build(&self, cfg: &SimConfig) -> Result<Simulation, SimError> {
        let layout = self.layout()?;
        let mut table: Vec<Vec<(usize, f64)>> = vec![Vec::new(); layout.rooms.len()];
        for w in &self.choices {
            let room =
                layout.room_index(&w.room).ok_or_else(|| SimError::Scenario(format!("unknown room '{}'", w.room)))?;
            let portal = layout
                .portal_index(&w.portal)
                .ok_or_else(|| SimError::Scenario(format!("unknown portal '{}'", w.portal)))?;
            if !(w.fraction >= 0.0) {
                return Err(SimError::Scenario(format!("negative fraction for portal '{}'", w.portal)));
            }
            table[room].push((portal, w.fraction));
        }
        for (room, choices) in table.iter_mut().enumerate() {
            if choices.is_empty() {
                choices
                    .extend(layout.portals.iter().enumerate().filter(|(_, p)| p.from == room).map(|(i, _)| (i, 1.0)));
            }
        }

        let mut sim = Simulation::new(layout, cfg.clone())?;
        sim.routing_table = table;

        for (g, group) in self.groups.iter().enumerate() {
            let room = sim
                .layout
                .room_index(&group.room)
                .ok_or_else(|| SimError::Scenario(format!("unknown room '{}'", group.room)))?;
            let positions = self.group_positions(group)?;
            let explicit = group.route.as_ref().map(|r| self.portal_ids(&sim.layout, r)).transpose()?;
            for pos in positions {
                let template = self.template(&sim.layout, g, room, pos, explicit.clone(), group.max_speed)?;
                sim.add_agent(room, pos, &template)?;
            }
        }

        for (f, flow) in self.flows.iter().enumerate() {
            let room = sim
                .layout
                .room_index(&flow.room)
                .ok_or_else(|| SimError::Scenario(format!("unknown room '{}'", flow.room)))?;
            if !(flow.flow >= 0.0 && flow.duration >= 0.0) {
                return Err(SimError::Scenario(format!("flow '{}' must be non-negative", flow.label)));
            }
            let rect = &sim.layout.rooms[room];
            let band = flow.band.unwrap_or_else(|| bottom_band(rect, DEFAULT_RADIUS));
            let explicit = flow.route.as_ref().map(|r| self.portal_ids(&sim.layout, r)).transpose()?;
            let template =
                self.template(&sim.layout, self.groups.len() + f, room, band.midpoint(), explicit, flow.max_speed)?;
            sim.sources.push(FlowSource::new(room, band, flow.flow, flow.duration, template));
        }
        Ok(sim)
    }

    fn template(
        &self,
        layout: &Layout,
        group: usize,
        room: usize,
        position: Vec2,
        explicit: Option<Vec<usize>>,
        max_speed: Option<f64>,
    ) -> Result<AgentTemplate, SimError> {
        let (route, routing) = match (explicit, self.routing) {
            (Some(route), _) => (route, Routing::Fixed),
            (None, RoutePolicy::NearestExit) => {
                let (route, _) = nearest_exit_route(layout, room, position).ok_or_else(|| {
                    SimError::Scenario(format!("no exit reachable from room '{}'", layout.rooms[room].id))
                })?;
                (route, Routing::Fixed)
            }
            (None, RoutePolicy::Weighted) => (Vec::new(), Routing::Table),
        };
        Ok(AgentTemplate {
            group,
            radius: DEFAULT_RADIUS,
            max_speed: max_speed.unwrap_or(DEFAULT_MAX_SPEED),
            route,
            routing,
        })
    }
}

impl EnvironmentScenario {
    /// Mirror image across the vertical line `x = axis`. Spiral and grid
    /// placements are converted to explicit mirrored points.
    pub fn mirrored_x(&self, axis: f64) -> Result<EnvironmentScenario, SimError> {
        let m = |p: Vec2| Vec2::new(2.0 * axis - p.x, p.y);
        let seg = |s: Segment| Segment::new(m(s.b), m(s.a));
        let mut out = self.clone();
        for r in &mut out.rooms {
            r.x = 2.0 * axis - (r.x + r.width);
        }
        for p in &mut out.portals {
            let (a, b) = (m(p.b), m(p.a));
            p.a = a;
            p.b = b;
            p.entry = p.entry.map(seg);
        }
        out.walls = out.walls.iter().copied().map(seg).collect();
        for (group, original) in out.groups.iter_mut().zip(&self.groups) {
            let points = self.group_positions(original)?;
            group.placement = Placement::Points { points: points.into_iter().map(m).collect() };
        }
        for f in &mut out.flows {
            f.band = f.band.map(seg);
        }
        Ok(out)
    }
}

/// Spawn band along the bottom wall, one radius inside the room.
pub fn bottom_band(rect: &RoomRect, radius: f64) -> Segment {
    Segment::new(Vec2::new(rect.min.x, rect.min.y + radius), Vec2::new(rect.max.x, rect.min.y + radius))
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

/// Shortest route (as portal indices) from `position` in `room` to any
/// exit, measured along straight hops between opening midpoints. Exits at
/// equal distance (within 1e-9 m) are ranked by id.
pub fn nearest_exit_route(layout: &Layout, room: usize, position: Vec2) -> Option<(Vec<usize>, f64)> {
    let n = layout.portals.len();
    // Room an agent is in after crossing portal i, and where it stands.
    let arrival = |i: usize, from_room: usize| -> Option<(usize, Vec2)> {
        let p = &layout.portals[i];
        let room = p.other_side(from_room)?;
        let point = p.entry.map(|e| e.midpoint()).unwrap_or_else(|| p.segment.midpoint());
        Some((room, point))
    };
    let touches = |i: usize, r: usize| {
        let p = &layout.portals[i];
        p.from == r || (p.to == Some(r) && p.entry.is_none())
    };

    // Node state: crossing portal i having come from room `came_from`.
    let mut dist = vec![f64::INFINITY; n];
    let mut came_from = vec![usize::MAX; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for i in 0..n {
        if touches(i, room) {
            let d = position.distance(layout.portals[i].segment.midpoint());
            if d < dist[i] {
                dist[i] = d;
                came_from[i] = room;
                heap.push(HeapEntry { cost: d, node: i });
            }
        }
    }
    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        let Some((next_room, point)) = arrival(node, came_from[node]) else {
            continue;
        };
        for j in 0..n {
            if j == node || !touches(j, next_room) {
                continue;
            }
            let d = cost + point.distance(layout.portals[j].segment.midpoint());
            if d < dist[j] - 1e-12 {
                dist[j] = d;
                came_from[j] = next_room;
                prev[j] = node;
                heap.push(HeapEntry { cost: d, node: j });
            }
        }
    }

    let mut best: Option<usize> = None;
    for i in 0..n {
        if layout.portals[i].to.is_some() || !dist[i].is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let closer = dist[i] < dist[b] - 1e-9;
                let tie = (dist[i] - dist[b]).abs() <= 1e-9;
                if closer || (tie && layout.portals[i].id < layout.portals[b].id) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let exit = best?;
    let mut route = vec![exit];
    let mut cur = exit;
    while prev[cur] != usize::MAX {
        cur = prev[cur];
        route.push(cur);
    }
    route.reverse();
    Some((route, dist[exit]))
}

/// Activity of one room during an environment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomActivity {
    pub id: String,
    pub avg_speed: f64,
    pub avg_density: f64,
    /// Times at which agents left the room, ascending.
    pub departures: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub label: String,
    pub agents: usize,
    pub finished: usize,
    pub last_exit: Option<f64>,
}

/// Environment-level results of a full simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMetrics {
    /// Time of the last exit from the environment.
    pub tt: f64,
    pub avg_exit_time: f64,
    pub avg_speed: f64,
    pub censored: bool,
    pub agents_total: usize,
    pub agents_exited: usize,
    pub rooms: Vec<RoomActivity>,
    pub groups: Vec<GroupOutcome>,
    pub stats: StepStats,
}

impl EnvironmentMetrics {
    pub fn from_simulation(sim: &Simulation, censored: bool, labels: &[String]) -> Self {
        let exits: Vec<f64> = sim.finished.iter().map(|f| f.exited_at).collect();
        let tt = if censored { sim.time() } else { exits.iter().copied().fold(0.0, f64::max) };
        let avg_exit_time = if exits.is_empty() { 0.0 } else { exits.iter().sum::<f64>() / exits.len() as f64 };
        let (ticks, speed): (u64, f64) =
            sim.rooms.iter().fold((0, 0.0), |(t, s), r| (t + r.agent_ticks, s + r.speed_sum));
        let mut departures: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for e in &sim.events {
            departures.entry(e.room).or_default().push(e.time);
        }
        let rooms = sim
            .layout
            .rooms
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let acc = &sim.rooms[i];
                RoomActivity {
                    id: r.id.clone(),
                    avg_speed: if acc.agent_ticks > 0 { acc.speed_sum / acc.agent_ticks as f64 } else { 0.0 },
                    avg_density: if acc.occupied_ticks > 0 { acc.density_sum / acc.occupied_ticks as f64 } else { 0.0 },
                    departures: departures.remove(&i).unwrap_or_default(),
                }
            })
            .collect();
        let groups = labels
            .iter()
            .enumerate()
            .map(|(g, label)| {
                let done: Vec<f64> = sim.finished.iter().filter(|f| f.group == g).map(|f| f.exited_at).collect();
                let active = sim.agents.iter().filter(|a| a.group == g).count();
                GroupOutcome {
                    label: label.clone(),
                    agents: done.len() + active,
                    finished: done.len(),
                    last_exit: done.iter().copied().reduce(f64::max),
                }
            })
            .collect();
        EnvironmentMetrics {
            tt,
            avg_exit_time,
            avg_speed: if ticks > 0 { speed / ticks as f64 } else { 0.0 },
            censored,
            agents_total: sim.finished.len() + sim.agents.len(),
            agents_exited: sim.finished.len(),
            rooms,
            groups,
            stats: sim.stats.clone(),
        }
    }
}

/// Simulates the scenario until every agent has left or the time limit.
pub fn run_environment(scenario: &EnvironmentScenario, cfg: &SimConfig) -> Result<EnvironmentMetrics, SimError> {
    let mut sim = scenario.build(cfg)?;
    let censored = sim.run();
    Ok(EnvironmentMetrics::from_simulation(&sim, censored, &scenario.group_labels()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_exit_corridor() -> EnvironmentScenario {
        EnvironmentScenario::from_json(
            r#"{
              "rooms": [{"id": "hall", "x": 0, "y": 0, "width": 20, "length": 2}],
              "portals": [
                {"id": "west", "from": "hall", "a": {"x": 0, "y": 0}, "b": {"x": 0, "y": 2}},
                {"id": "east", "from": "hall", "a": {"x": 20, "y": 0}, "b": {"x": 20, "y": 2}}
              ],
              "routing": "nearest_exit"
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn nearest_exit_picks_closer_side_and_breaks_ties_by_id() {
        let layout = two_exit_corridor().layout().unwrap();
        let (route, _) = nearest_exit_route(&layout, 0, Vec2::new(3.0, 1.0)).unwrap();
        assert_eq!(layout.portals[route[0]].id, "west");
        let (route, _) = nearest_exit_route(&layout, 0, Vec2::new(17.0, 1.0)).unwrap();
        assert_eq!(layout.portals[route[0]].id, "east");
        let (route, _) = nearest_exit_route(&layout, 0, Vec2::new(10.0, 1.0)).unwrap();
        assert_eq!(layout.portals[route[0]].id, "east");
    }

    #[test]
    fn unknown_room_is_reported() {
        let mut s = two_exit_corridor();
        s.groups.push(GroupDef {
            label: "g".into(),
            room: "nowhere".into(),
            count: 1,
            placement: Placement::Spiral,
            route: None,
            max_speed: None,
        });
        let err = s.build(&SimConfig::default()).unwrap_err();
        assert!(err.to_string().contains("nowhere"));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = EnvironmentScenario::from_json("{\"rooms\": [}").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
