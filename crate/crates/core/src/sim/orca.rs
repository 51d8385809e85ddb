//! Optimal reciprocal collision avoidance: half-plane construction.
//!
//! Agent-agent constraints follow the reciprocal scheme (each party takes half
//! of the smallest change `u` that leaves the truncated velocity obstacle).
//! Wall segments produce full-responsibility constraints with their own time
//! horizon.

use super::lp::HalfPlaneConstraint;
use super::vec2::Vec2;

/// Kinematic state needed to build constraints against another body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Body {
    /// Only used to break symmetry between coincident bodies.
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// Reciprocity share: each agent resolves half of the conflict.
const RESPONSIBILITY: f64 = 0.5;

/// Picks a deterministic unit vector when a direction is undefined
/// (coincident agents with identical velocities). The two parties get
/// opposite directions.
fn fallback_direction(me: &Body, other: &Body) -> Vec2 {
    let d = me.position - other.position;
    if d.length_squared() > 0.0 {
        d.normalize_or_zero()
    } else if me.id < other.id {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(-1.0, 0.0)
    }
}

/// Constraint induced on `me` by the neighbor `other`.
///
/// `time_horizon` applies to separated agents; when the discs already
/// overlap the horizon collapses to `time_step` so the constraint pushes the
/// pair apart within one step.
pub fn agent_constraint(me: &Body, other: &Body, time_horizon: f64, time_step: f64) -> HalfPlaneConstraint {
    let relative_position = other.position - me.position;
    let relative_velocity = me.velocity - other.velocity;
    let dist_sq = relative_position.length_squared();
    let combined_radius = me.radius + other.radius;
    let combined_radius_sq = combined_radius * combined_radius;

    let direction;
    let u;

    if dist_sq > combined_radius_sq {
        let inv_horizon = 1.0 / time_horizon;
        // Vector from the cutoff circle center to the relative velocity.
        let w = relative_velocity - relative_position * inv_horizon;
        let w_length_sq = w.length_squared();
        let dot1 = w.dot(relative_position);

        if dot1 < 0.0 && dot1 * dot1 > combined_radius_sq * w_length_sq {
            // Closest boundary point lies on the cutoff circle.
            let w_length = w_length_sq.sqrt();
            let unit_w = if w_length > 0.0 { w / w_length } else { fallback_direction(me, other) };
            direction = Vec2::new(unit_w.y, -unit_w.x);
            u = unit_w * (combined_radius * inv_horizon - w_length);
        } else {
            // Closest boundary point lies on one of the cone legs.
            let leg = (dist_sq - combined_radius_sq).sqrt();
            direction = if relative_position.det(w) > 0.0 {
                Vec2::new(
                    relative_position.x * leg - relative_position.y * combined_radius,
                    relative_position.x * combined_radius + relative_position.y * leg,
                ) / dist_sq
            } else {
                -Vec2::new(
                    relative_position.x * leg + relative_position.y * combined_radius,
                    -relative_position.x * combined_radius + relative_position.y * leg,
                ) / dist_sq
            };
            let dot2 = relative_velocity.dot(direction);
            u = direction * dot2 - relative_velocity;
        }
    } else {
        // Already overlapping: escape within one step.
        let inv_step = 1.0 / time_step;
        let w = relative_velocity - relative_position * inv_step;
        let w_length = w.length();
        let unit_w = if w_length > 0.0 { w / w_length } else { fallback_direction(me, other) };
        direction = Vec2::new(unit_w.y, -unit_w.x);
        u = unit_w * (combined_radius * inv_step - w_length);
    }

    HalfPlaneConstraint::from_direction(me.velocity + u * RESPONSIBILITY, direction)
}

/// Constraint induced on `me` by a static wall segment `a`-`b`.
///
/// Each segment is treated as an isolated two-sided obstacle: it is oriented
/// so the agent lies on its right-hand side and both endpoints act as
/// convex vertices.
pub fn wall_constraint(me: &Body, a: Vec2, b: Vec2, time_horizon: f64) -> HalfPlaneConstraint {
    // Orientation: agent on the right of a->b, i.e. det(a - p, b - a) < 0.
    let side = (a - me.position).det(b - a);
    let (p1, p2) = if side > 0.0 { (b, a) } else { (a, b) };

    let position = me.position;
    let velocity = me.velocity;
    let radius = me.radius;
    let radius_sq = radius * radius;
    let inv_horizon = 1.0 / time_horizon;
    let unit_dir = (p2 - p1).normalize_or_zero();

    let rel1 = p1 - position;
    let rel2 = p2 - position;
    let dist_sq1 = rel1.length_squared();
    let dist_sq2 = rel2.length_squared();
    let obstacle_vector = p2 - p1;
    let s = (-rel1).dot(obstacle_vector) / obstacle_vector.length_squared();
    let dist_sq_line = (-rel1 - obstacle_vector * s).length_squared();

    // Collisions with the wall: push straight out.
    if s < 0.0 && dist_sq1 <= radius_sq {
        let dir = Vec2::new(-rel1.y, rel1.x).normalize_or_zero();
        return HalfPlaneConstraint::from_direction(Vec2::ZERO, dir);
    }
    if s > 1.0 && dist_sq2 <= radius_sq {
        let dir = Vec2::new(-rel2.y, rel2.x).normalize_or_zero();
        return HalfPlaneConstraint::from_direction(Vec2::ZERO, dir);
    }
    if (0.0..=1.0).contains(&s) && dist_sq_line <= radius_sq {
        return HalfPlaneConstraint::from_direction(Vec2::ZERO, -unit_dir);
    }

    // No collision: build the truncated obstacle cone.
    let single_vertex;
    let (left_leg, right_leg, left_vertex, right_vertex);
    if s < 0.0 && dist_sq_line <= radius_sq {
        // Seen obliquely: the left vertex alone defines the obstacle.
        single_vertex = true;
        left_vertex = p1;
        right_vertex = p1;
        let leg1 = (dist_sq1 - radius_sq).sqrt();
        left_leg = Vec2::new(rel1.x * leg1 - rel1.y * radius, rel1.x * radius + rel1.y * leg1) / dist_sq1;
        right_leg = Vec2::new(rel1.x * leg1 + rel1.y * radius, -rel1.x * radius + rel1.y * leg1) / dist_sq1;
    } else if s > 1.0 && dist_sq_line <= radius_sq {
        single_vertex = true;
        left_vertex = p2;
        right_vertex = p2;
        let leg2 = (dist_sq2 - radius_sq).sqrt();
        left_leg = Vec2::new(rel2.x * leg2 - rel2.y * radius, rel2.x * radius + rel2.y * leg2) / dist_sq2;
        right_leg = Vec2::new(rel2.x * leg2 + rel2.y * radius, -rel2.x * radius + rel2.y * leg2) / dist_sq2;
    } else {
        single_vertex = false;
        left_vertex = p1;
        right_vertex = p2;
        let leg1 = (dist_sq1 - radius_sq).sqrt();
        left_leg = Vec2::new(rel1.x * leg1 - rel1.y * radius, rel1.x * radius + rel1.y * leg1) / dist_sq1;
        let leg2 = (dist_sq2 - radius_sq).sqrt();
        right_leg = Vec2::new(rel2.x * leg2 + rel2.y * radius, -rel2.x * radius + rel2.y * leg2) / dist_sq2;
    }

    let left_cutoff = (left_vertex - position) * inv_horizon;
    let right_cutoff = (right_vertex - position) * inv_horizon;
    let cutoff_vec = right_cutoff - left_cutoff;

    let t = if single_vertex { 0.5 } else { (velocity - left_cutoff).dot(cutoff_vec) / cutoff_vec.length_squared() };
    let t_left = (velocity - left_cutoff).dot(left_leg);
    let t_right = (velocity - right_cutoff).dot(right_leg);

    let cutoff_radius = radius * inv_horizon;

    if (t < 0.0 && t_left < 0.0) || (single_vertex && t_left < 0.0 && t_right < 0.0) {
        // Project on the left cutoff circle.
        let unit_w = (velocity - left_cutoff).normalize_or_zero();
        let dir = Vec2::new(unit_w.y, -unit_w.x);
        return HalfPlaneConstraint::from_direction(left_cutoff + unit_w * cutoff_radius, dir);
    }
    if t > 1.0 && t_right < 0.0 {
        let unit_w = (velocity - right_cutoff).normalize_or_zero();
        let dir = Vec2::new(unit_w.y, -unit_w.x);
        return HalfPlaneConstraint::from_direction(right_cutoff + unit_w * cutoff_radius, dir);
    }

    let dist_sq_cutoff = if !(0.0..=1.0).contains(&t) || single_vertex {
        f64::INFINITY
    } else {
        (velocity - (left_cutoff + cutoff_vec * t)).length_squared()
    };
    let dist_sq_left =
        if t_left < 0.0 { f64::INFINITY } else { (velocity - (left_cutoff + left_leg * t_left)).length_squared() };
    let dist_sq_right =
        if t_right < 0.0 { f64::INFINITY } else { (velocity - (right_cutoff + right_leg * t_right)).length_squared() };

    let (anchor, dir) = if dist_sq_cutoff <= dist_sq_left && dist_sq_cutoff <= dist_sq_right {
        (left_cutoff, -unit_dir)
    } else if dist_sq_left <= dist_sq_right {
        (left_cutoff, left_leg)
    } else {
        (right_cutoff, -right_leg)
    };
    let point = anchor + Vec2::new(-dir.y, dir.x) * cutoff_radius;
    HalfPlaneConstraint::from_direction(point, dir)
}
