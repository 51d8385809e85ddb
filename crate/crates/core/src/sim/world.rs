//! Static geometry: rectangular rooms, portals between them, and the wall
//! segments derived from room boundaries.

use serde::{Deserialize, Serialize};

use super::vec2::{closest_point_on_segment, distance_to_segment, Vec2};
use crate::error::SimError;

const GEOM_EPS: f64 = 1e-9;

/// A straight segment with distinct endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn midpoint(&self) -> Vec2 {
        self.a.lerp(self.b, 0.5)
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        distance_to_segment(p, self.a, self.b)
    }
}

pub type WallSegment = Segment;
pub type GoalSegment = Segment;

/// Axis-aligned rectangular room.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomRect {
    pub id: String,
    pub min: Vec2,
    pub max: Vec2,
}

impl RoomRect {
    pub fn new(id: impl Into<String>, min: Vec2, max: Vec2) -> Self {
        RoomRect { id: id.into(), min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn length(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.length()
    }

    pub fn center(&self) -> Vec2 {
        self.min.lerp(self.max, 0.5)
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        p.x >= self.min.x - tol && p.x <= self.max.x + tol && p.y >= self.min.y - tol && p.y <= self.max.y + tol
    }

    /// The four sides in counter-clockwise order: bottom, right, top, left.
    pub fn sides(&self) -> [Segment; 4] {
        let (lo, hi) = (self.min, self.max);
        [
            Segment::new(lo, Vec2::new(hi.x, lo.y)),
            Segment::new(Vec2::new(hi.x, lo.y), hi),
            Segment::new(hi, Vec2::new(lo.x, hi.y)),
            Segment::new(Vec2::new(lo.x, hi.y), lo),
        ]
    }
}

/// An opening in a room boundary. `to = None` is an exit out of the
/// environment. With `entry` set, agents passing the opening reappear at a
/// random point of the entry segment inside `to` (used for rooms that are
/// not geometrically adjacent); otherwise the rooms share the opening and
/// agents walk through it in either direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Portal {
    pub id: String,
    pub from: usize,
    pub to: Option<usize>,
    pub segment: Segment,
    pub entry: Option<Segment>,
}

impl Portal {
    /// Openings that lead out of the walkable area block agents that are not
    /// heading for them.
    pub fn is_closed_to_passers(&self) -> bool {
        self.to.is_none() || self.entry.is_some()
    }

    /// Room reached by crossing the portal from `room`.
    pub fn other_side(&self, room: usize) -> Option<usize> {
        if room == self.from {
            self.to
        } else if Some(room) == self.to && self.entry.is_none() {
            Some(self.from)
        } else {
            None
        }
    }
}

/// Static obstacle: a wall, or a closed portal that blocks agents not
/// targeting it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub segment: Segment,
    pub portal: Option<usize>,
}

/// Rooms, portals and the derived obstacle set, with a spatial index for
/// obstacle queries.
#[derive(Clone, Debug)]
pub struct Layout {
    pub rooms: Vec<RoomRect>,
    pub portals: Vec<Portal>,
    pub obstacles: Vec<Obstacle>,
    pub bounds_min: Vec2,
    pub bounds_max: Vec2,
    index: ObstacleIndex,
}

impl Layout {
    /// Builds the layout and derives walls: every room side minus the
    /// openings lying on it. `extra_walls` are appended verbatim.
    pub fn new(rooms: Vec<RoomRect>, portals: Vec<Portal>, extra_walls: Vec<Segment>) -> Result<Self, SimError> {
        if rooms.is_empty() {
            return Err(SimError::Layout("layout has no rooms".into()));
        }
        for room in &rooms {
            if !(room.width() > 0.0 && room.length() > 0.0) || !room.min.is_finite() || !room.max.is_finite() {
                return Err(SimError::Layout(format!("room '{}' has non-positive size", room.id)));
            }
        }
        for portal in &portals {
            if portal.from >= rooms.len() || portal.to.is_some_and(|t| t >= rooms.len()) {
                return Err(SimError::Layout(format!("portal '{}' references an unknown room", portal.id)));
            }
            if portal.segment.length() <= GEOM_EPS {
                return Err(SimError::Layout(format!("portal '{}' has zero length", portal.id)));
            }
            if !on_room_boundary(&rooms[portal.from], &portal.segment) {
                return Err(SimError::Layout(format!(
                    "portal '{}' does not lie on the boundary of room '{}'",
                    portal.id, rooms[portal.from].id
                )));
            }
            if let Some(entry) = &portal.entry {
                let to = portal.to.ok_or_else(|| {
                    SimError::Layout(format!("portal '{}' has an entry segment but no destination", portal.id))
                })?;
                if !rooms[to].contains(entry.a, GEOM_EPS) || !rooms[to].contains(entry.b, GEOM_EPS) {
                    return Err(SimError::Layout(format!("entry of portal '{}' lies outside its room", portal.id)));
                }
            }
        }

        let mut obstacles = Vec::new();
        for room in &rooms {
            for side in room.sides() {
                for wall in subtract_openings(side, portals.iter().map(|p| p.segment)) {
                    obstacles.push(Obstacle { segment: wall, portal: None });
                }
            }
        }
        for wall in extra_walls {
            if wall.length() <= GEOM_EPS {
                return Err(SimError::Layout("extra wall has zero length".into()));
            }
            obstacles.push(Obstacle { segment: wall, portal: None });
        }
        for (i, portal) in portals.iter().enumerate() {
            if portal.is_closed_to_passers() {
                obstacles.push(Obstacle { segment: portal.segment, portal: Some(i) });
            }
        }

        let mut bounds_min = rooms[0].min;
        let mut bounds_max = rooms[0].max;
        for room in &rooms {
            bounds_min = Vec2::new(bounds_min.x.min(room.min.x), bounds_min.y.min(room.min.y));
            bounds_max = Vec2::new(bounds_max.x.max(room.max.x), bounds_max.y.max(room.max.y));
        }
        let index = ObstacleIndex::new(&obstacles, bounds_min, bounds_max, 1.0, 2.5);
        Ok(Layout { rooms, portals, obstacles, bounds_min, bounds_max, index })
    }

    pub fn room_index(&self, id: &str) -> Option<usize> {
        self.rooms.iter().position(|r| r.id == id)
    }

    pub fn portal_index(&self, id: &str) -> Option<usize> {
        self.portals.iter().position(|p| p.id == id)
    }

    /// Obstacles within `range` of `p` (plus possibly a few slightly
    /// farther). `range` must not exceed the index reach set at build time
    /// for the result to be complete.
    pub fn obstacles_near(&self, p: Vec2) -> &[usize] {
        self.index.query(p)
    }

    pub fn obstacle_reach(&self) -> f64 {
        self.index.reach
    }

    /// True when `p` is inside some room and at least `radius - tol` away
    /// from every wall.
    pub fn is_walkable(&self, p: Vec2, radius: f64, tol: f64) -> bool {
        if !self.rooms.iter().any(|r| r.contains(p, tol)) {
            return false;
        }
        self.obstacles.iter().filter(|o| o.portal.is_none()).all(|o| o.segment.distance_to(p) >= radius - tol)
    }

    /// Index of the room containing `p`, preferring `hint` when it matches.
    pub fn locate(&self, p: Vec2, hint: usize) -> Option<usize> {
        if self.rooms.get(hint).is_some_and(|r| r.contains(p, GEOM_EPS)) {
            return Some(hint);
        }
        self.rooms.iter().position(|r| r.contains(p, GEOM_EPS))
    }
}

fn on_room_boundary(room: &RoomRect, seg: &Segment) -> bool {
    room.sides().iter().any(|side| collinear_within(side, seg))
}

fn collinear_within(side: &Segment, seg: &Segment) -> bool {
    side.distance_to(seg.a) <= 1e-6 && side.distance_to(seg.b) <= 1e-6
}

/// Parts of `side` not covered by any collinear opening.
fn subtract_openings(side: Segment, openings: impl Iterator<Item = Segment>) -> Vec<Segment> {
    let len = side.length();
    let dir = (side.b - side.a) / len;
    let mut cuts: Vec<(f64, f64)> = Vec::new();
    for op in openings {
        if !collinear_within(&side, &op) {
            continue;
        }
        let t0 = (op.a - side.a).dot(dir);
        let t1 = (op.b - side.a).dot(dir);
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        cuts.push((lo.max(0.0), hi.min(len)));
    }
    cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut pieces = Vec::new();
    let mut cursor = 0.0;
    for (lo, hi) in cuts {
        if lo > cursor + GEOM_EPS {
            pieces.push(Segment::new(side.a + dir * cursor, side.a + dir * lo));
        }
        cursor = f64::max(cursor, hi);
    }
    if len > cursor + GEOM_EPS {
        pieces.push(Segment::new(side.a + dir * cursor, side.b));
    }
    pieces
}

/// Uniform grid mapping each cell to the obstacles within `reach` of any
/// point of the cell.
#[derive(Clone, Debug)]
struct ObstacleIndex {
    origin: Vec2,
    cell: f64,
    cols: usize,
    rows: usize,
    reach: f64,
    cells: Vec<Vec<usize>>,
}

impl ObstacleIndex {
    fn new(obstacles: &[Obstacle], min: Vec2, max: Vec2, cell: f64, reach: f64) -> Self {
        let origin = min - Vec2::new(reach, reach);
        let cols = (((max.x - min.x) + 2.0 * reach) / cell).ceil().max(1.0) as usize;
        let rows = (((max.y - min.y) + 2.0 * reach) / cell).ceil().max(1.0) as usize;
        let mut cells = vec![Vec::new(); cols * rows];
        let half_diag = cell * std::f64::consts::FRAC_1_SQRT_2;
        for (i, o) in obstacles.iter().enumerate() {
            let lo =
                Vec2::new(o.segment.a.x.min(o.segment.b.x), o.segment.a.y.min(o.segment.b.y)) - Vec2::new(reach, reach);
            let hi =
                Vec2::new(o.segment.a.x.max(o.segment.b.x), o.segment.a.y.max(o.segment.b.y)) + Vec2::new(reach, reach);
            let c0 = (((lo.x - origin.x) / cell).floor().max(0.0) as usize).min(cols - 1);
            let c1 = (((hi.x - origin.x) / cell).floor().max(0.0) as usize).min(cols - 1);
            let r0 = (((lo.y - origin.y) / cell).floor().max(0.0) as usize).min(rows - 1);
            let r1 = (((hi.y - origin.y) / cell).floor().max(0.0) as usize).min(rows - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let center = origin + Vec2::new((c as f64 + 0.5) * cell, (r as f64 + 0.5) * cell);
                    if o.segment.distance_to(center) <= reach + half_diag {
                        cells[r * cols + c].push(i);
                    }
                }
            }
        }
        ObstacleIndex { origin, cell, cols, rows, reach, cells }
    }

    fn query(&self, p: Vec2) -> &[usize] {
        let c = ((p.x - self.origin.x) / self.cell).floor();
        let r = ((p.y - self.origin.y) / self.cell).floor();
        if c < 0.0 || r < 0.0 || c as usize >= self.cols || r as usize >= self.rows {
            return &[];
        }
        &self.cells[r as usize * self.cols + c as usize]
    }
}

/// Pushes `p` out of every wall it overlaps so its distance to each is at
/// least `radius`. The side of each wall is taken from `prev` so an agent
/// never ends up on the far side of a wall it grazed.
pub fn clamp_to_walls<'a>(p: Vec2, prev: Vec2, radius: f64, walls: impl Iterator<Item = &'a Segment> + Clone) -> Vec2 {
    let mut p = p;
    for _ in 0..3 {
        let mut moved = false;
        for wall in walls.clone() {
            let (c, _) = closest_point_on_segment(p, wall.a, wall.b);
            let offset = p - c;
            let d = offset.length();
            let crossed = segments_cross(prev, p, wall.a, wall.b);
            if d >= radius && !crossed {
                continue;
            }
            let mut n = if d > 1e-12 { offset / d } else { side_normal(wall, prev) };
            if crossed {
                n = -n;
            }
            p = c + n * radius;
            moved = true;
        }
        if !moved {
            break;
        }
    }
    p
}

/// Unit normal of `wall` pointing toward the side `reference` is on.
fn side_normal(wall: &Segment, reference: Vec2) -> Vec2 {
    let dir = (wall.b - wall.a).normalize_or_zero();
    let n = dir.perp();
    if n.dot(reference - wall.a) >= 0.0 {
        n
    } else {
        -n
    }
}

/// Proper crossing of segment p0-p1 with segment a-b.
fn segments_cross(p0: Vec2, p1: Vec2, a: Vec2, b: Vec2) -> bool {
    let d1 = (b - a).det(p0 - a);
    let d2 = (b - a).det(p1 - a);
    let d3 = (p1 - p0).det(a - p0);
    let d4 = (p1 - p0).det(b - p0);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn single_room_with_exit_has_five_walls() {
        let room = RoomRect::new("r", v(0.0, 0.0), v(10.0, 10.0));
        let exit = Portal {
            id: "e".into(),
            from: 0,
            to: None,
            segment: Segment::new(v(4.0, 10.0), v(6.0, 10.0)),
            entry: None,
        };
        let layout = Layout::new(vec![room], vec![exit], vec![]).unwrap();
        let walls: Vec<_> = layout.obstacles.iter().filter(|o| o.portal.is_none()).collect();
        assert_eq!(walls.len(), 5);
        let total: f64 = walls.iter().map(|w| w.segment.length()).sum();
        assert!((total - 38.0).abs() < 1e-9);
    }

    #[test]
    fn shared_opening_removes_both_sides() {
        let a = RoomRect::new("a", v(0.0, 0.0), v(2.0, 12.0));
        let b = RoomRect::new("b", v(2.0, 10.0), v(12.0, 12.0));
        let door = Portal {
            id: "d".into(),
            from: 0,
            to: Some(1),
            segment: Segment::new(v(2.0, 10.0), v(2.0, 12.0)),
            entry: None,
        };
        let layout = Layout::new(vec![a, b], vec![door], vec![]).unwrap();
        // Point in the doorway is walkable.
        assert!(layout.is_walkable(v(2.0, 11.0), 0.3, 1e-9));
        // Corner outside the L is not.
        assert!(!layout.is_walkable(v(5.0, 5.0), 0.3, 1e-9));
        assert!(!layout.is_walkable(v(1.9, 5.0), 0.3, 1e-9));
    }

    #[test]
    fn portal_off_boundary_is_rejected() {
        let room = RoomRect::new("r", v(0.0, 0.0), v(10.0, 10.0));
        let exit =
            Portal { id: "e".into(), from: 0, to: None, segment: Segment::new(v(4.0, 5.0), v(6.0, 5.0)), entry: None };
        assert!(Layout::new(vec![room], vec![exit], vec![]).is_err());
    }

    #[test]
    fn clamp_pushes_out_and_keeps_side() {
        let wall = Segment::new(v(-5.0, 1.0), v(5.0, 1.0));
        let p = clamp_to_walls(v(0.0, 0.9), v(0.0, 0.6), 0.3, [wall].iter());
        assert!((p.y - 0.7).abs() < 1e-12);
        // Tunnelled through the wall: returned to the original side.
        let p = clamp_to_walls(v(0.0, 1.1), v(0.0, 0.8), 0.3, [wall].iter());
        assert!((p.y - 0.7).abs() < 1e-12);
    }

    #[test]
    fn obstacle_index_finds_near_walls() {
        let room = RoomRect::new("r", v(0.0, 0.0), v(10.0, 10.0));
        let layout = Layout::new(vec![room], vec![], vec![]).unwrap();
        let near = layout.obstacles_near(v(0.5, 5.0));
        assert!(near.iter().any(|&i| layout.obstacles[i].segment.a.x == 0.0 && layout.obstacles[i].segment.b.x == 0.0));
        assert!(layout.obstacles_near(v(5.0, 5.0)).is_empty());
    }
}
