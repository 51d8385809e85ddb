//! Incremental 2D linear programming over half-plane velocity constraints.
//!
//! The solver follows the randomized-incremental scheme used by reciprocal
//! collision avoidance: a circular speed bound plus a list of half-planes,
//! minimizing the distance to a preferred velocity. When the half-planes have
//! no common point inside the disc, a second program finds the velocity that
//! minimizes the largest violation over the soft constraints while keeping the
//! hard ones (walls) satisfied.

use serde::{Deserialize, Serialize};

use super::vec2::Vec2;

const EPSILON: f64 = 1e-9;

/// A half-plane in velocity space. Velocities `v` with
/// `normal . (v - point) >= 0` are permitted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneConstraint {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlaneConstraint {
    /// Builds a constraint from a boundary point and a boundary direction,
    /// with the permitted side on the left of `direction`.
    pub fn from_direction(point: Vec2, direction: Vec2) -> Self {
        HalfPlaneConstraint { point, normal: direction.perp() }
    }

    /// Boundary direction; the permitted side lies to its left.
    pub fn direction(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }

    /// Signed violation: positive when `v` lies outside the half-plane.
    pub fn violation(&self, v: Vec2) -> f64 {
        -self.normal.dot(v - self.point)
    }

    pub fn permits(&self, v: Vec2, tolerance: f64) -> bool {
        self.violation(v) <= tolerance
    }
}

/// Result of a velocity solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpOutcome {
    pub velocity: Vec2,
    /// True when the constraints were infeasible and the back-off program
    /// produced the result.
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug)]
struct Line {
    point: Vec2,
    direction: Vec2,
}

impl From<&HalfPlaneConstraint> for Line {
    fn from(c: &HalfPlaneConstraint) -> Self {
        Line { point: c.point, direction: c.direction() }
    }
}

/// Returns the velocity inside the `max_speed` disc that satisfies every
/// constraint and is closest to `pref`. See [`solve_velocity_detailed`].
pub fn solve_velocity(constraints: &[HalfPlaneConstraint], pref: Vec2, max_speed: f64) -> Vec2 {
    solve_velocity_detailed(constraints, 0, pref, max_speed).velocity
}

/// Solves the velocity program. The first `hard_count` constraints are never
/// relaxed by the infeasibility fallback (used for static obstacles).
pub fn solve_velocity_detailed(
    constraints: &[HalfPlaneConstraint],
    hard_count: usize,
    pref: Vec2,
    max_speed: f64,
) -> LpOutcome {
    assert!(max_speed > 0.0, "max_speed must be positive, was {max_speed}");
    let lines: Vec<Line> = constraints.iter().map(Line::from).collect();
    let mut result = Vec2::ZERO;
    let failed_at = linear_program2(&lines, max_speed, pref, false, &mut result);
    let fallback = failed_at < lines.len();
    if fallback {
        linear_program3(&lines, hard_count.min(lines.len()), failed_at, max_speed, &mut result);
    }
    LpOutcome { velocity: result.clamp_length(max_speed), fallback }
}

/// Optimizes along line `line_no` subject to the lines before it and the disc.
fn linear_program1(
    lines: &[Line],
    line_no: usize,
    radius: f64,
    opt_velocity: Vec2,
    direction_opt: bool,
    result: &mut Vec2,
) -> bool {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let discriminant = dot * dot + radius * radius - line.point.length_squared();
    if discriminant < 0.0 {
        // The line misses the speed disc entirely.
        return false;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for other in &lines[..line_no] {
        let denominator = line.direction.det(other.direction);
        let numerator = other.direction.det(line.point - other.point);
        if denominator.abs() <= EPSILON {
            // Parallel lines.
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }

    if direction_opt {
        if opt_velocity.dot(line.direction) > 0.0 {
            *result = line.point + line.direction * t_right;
        } else {
            *result = line.point + line.direction * t_left;
        }
    } else {
        let t = line.direction.dot(opt_velocity - line.point).clamp(t_left, t_right);
        *result = line.point + line.direction * t;
    }
    true
}

/// Returns the index of the first line that could not be satisfied, or
/// `lines.len()` on success.
fn linear_program2(lines: &[Line], radius: f64, opt_velocity: Vec2, direction_opt: bool, result: &mut Vec2) -> usize {
    *result = if direction_opt {
        opt_velocity * radius
    } else if opt_velocity.length_squared() > radius * radius {
        opt_velocity.normalize_or_zero() * radius
    } else {
        opt_velocity
    };

    for i in 0..lines.len() {
        if lines[i].direction.det(lines[i].point - *result) > 0.0 {
            let previous = *result;
            if !linear_program1(lines, i, radius, opt_velocity, direction_opt, result) {
                *result = previous;
                return i;
            }
        }
    }
    lines.len()
}

fn linear_program3(lines: &[Line], hard_count: usize, begin_line: usize, radius: f64, result: &mut Vec2) {
    let mut distance = 0.0;
    let mut projected: Vec<Line> = Vec::with_capacity(lines.len());

    for i in begin_line..lines.len() {
        if lines[i].direction.det(lines[i].point - *result) <= distance {
            continue;
        }
        projected.clear();
        projected.extend_from_slice(&lines[..hard_count]);
        for j in hard_count..i {
            let determinant = lines[i].direction.det(lines[j].direction);
            let point = if determinant.abs() <= EPSILON {
                if lines[i].direction.dot(lines[j].direction) > 0.0 {
                    // Same direction: line j is implied by line i.
                    continue;
                }
                (lines[i].point + lines[j].point) * 0.5
            } else {
                lines[i].point
                    + lines[i].direction * (lines[j].direction.det(lines[i].point - lines[j].point) / determinant)
            };
            let direction = (lines[j].direction - lines[i].direction).normalize_or_zero();
            projected.push(Line { point, direction });
        }

        let previous = *result;
        let opt = Vec2::new(-lines[i].direction.y, lines[i].direction.x);
        if linear_program2(&projected, radius, opt, true, result) < projected.len() {
            // Can only fail through rounding; keep the previous answer.
            *result = previous;
        }
        distance = lines[i].direction.det(lines[i].point - *result);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_returns_pref() {
        let pref = Vec2::new(1.0, 0.2);
        assert_eq!(solve_velocity(&[], pref, 1.2), pref);
    }

    #[test]
    fn unconstrained_fast_pref_is_clamped_to_disc() {
        let v = solve_velocity(&[], Vec2::new(3.0, 4.0), 1.2);
        assert!((v.length() - 1.2).abs() < 1e-12);
        assert!((v.x / v.y - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_constraint_projects_pref_onto_boundary() {
        // Permitted: x <= 0.5 (normal points to -x through (0.5, 0)).
        let c = HalfPlaneConstraint { point: Vec2::new(0.5, 0.0), normal: Vec2::new(-1.0, 0.0) };
        let pref = Vec2::new(1.0, 0.3);
        let v = solve_velocity(&[c], pref, 1.2);
        // Orthogonal projection of pref onto the line x = 0.5.
        assert!((v.x - 0.5).abs() < 1e-12);
        assert!((v.y - 0.3).abs() < 1e-12);
    }

    #[test]
    fn projection_is_clipped_to_disc() {
        // x <= 0.5 with pref far outside the disc: the optimum is where the
        // boundary line meets the speed circle.
        let c = HalfPlaneConstraint { point: Vec2::new(0.5, 0.0), normal: Vec2::new(-1.0, 0.0) };
        let v = solve_velocity(&[c], Vec2::new(2.0, 2.0), 1.2);
        assert!((v.length() - 1.2).abs() < 1e-9);
        assert!((v.x - 0.5).abs() < 1e-9);
        assert!((v.y - (1.44f64 - 0.25).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn infeasible_constraints_fall_back_inside_disc() {
        // x >= 0.5 and x <= -0.5 cannot both hold.
        let a = HalfPlaneConstraint { point: Vec2::new(0.5, 0.0), normal: Vec2::new(1.0, 0.0) };
        let b = HalfPlaneConstraint { point: Vec2::new(-0.5, 0.0), normal: Vec2::new(-1.0, 0.0) };
        let out = solve_velocity_detailed(&[a, b], 0, Vec2::new(0.0, 1.0), 1.0);
        assert!(out.fallback);
        assert!(out.velocity.length() <= 1.0 + 1e-12);
        // Minimizing the larger violation puts x at the midpoint.
        assert!(out.velocity.x.abs() < 1e-9);
    }

    #[test]
    fn hard_constraints_survive_fallback() {
        let wall = HalfPlaneConstraint { point: Vec2::new(0.2, 0.0), normal: Vec2::new(-1.0, 0.0) };
        let a = HalfPlaneConstraint { point: Vec2::new(0.5, 0.0), normal: Vec2::new(1.0, 0.0) };
        let b = HalfPlaneConstraint { point: Vec2::new(-0.5, 0.0), normal: Vec2::new(-1.0, 0.0) };
        let out = solve_velocity_detailed(&[wall, a, b], 1, Vec2::new(0.0, 1.0), 1.0);
        assert!(out.fallback);
        assert!(wall.permits(out.velocity, 1e-9));
    }
}
