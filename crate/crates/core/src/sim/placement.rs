//! Initial agent placement and flow spawning.

use super::vec2::Vec2;
use crate::error::SimError;

/// Lattice offsets of ring `k` around the center, `|i| + |j| = k`, wound
/// counter-clockwise starting at the east vertex.
fn ring(k: i64) -> Vec<(i64, i64)> {
    if k == 0 {
        return vec![(0, 0)];
    }
    let mut out = Vec::with_capacity(4 * k as usize);
    for s in 0..k {
        out.push((k - s, s));
    }
    for s in 0..k {
        out.push((-s, k - s));
    }
    for s in 0..k {
        out.push((-k + s, -s));
    }
    for s in 0..k {
        out.push((s, -k + s));
    }
    out
}

/// Positions for `n` agents in a `room_width` x `room_length` room whose
/// lower-left corner is the origin.
///
/// Points are taken from a square lattice of pitch `spacing` centered on the
/// room, ring by ring outward so the crowd forms a diamond. Lattice points
/// closer than `spacing / 2` to a wall are skipped. When the room cannot
/// hold `n` lattice points, the remaining agents are placed at half-pitch
/// offsets from the lattice points (clamped inside), so they overlap.
pub fn spiral_positions(n: usize, room_width: f64, room_length: f64, spacing: f64) -> Result<Vec<Vec2>, SimError> {
    if !(room_width > 0.0 && room_length > 0.0) {
        return Err(SimError::InvalidInput(format!(
            "room dimensions must be positive, got {room_width} x {room_length}"
        )));
    }
    if !(spacing > 0.0) {
        return Err(SimError::InvalidInput(format!("spacing must be positive, got {spacing}")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let inset = (spacing / 2.0).min(room_width / 2.0).min(room_length / 2.0);
    let center = Vec2::new(room_width / 2.0, room_length / 2.0);
    let lo = Vec2::new(inset, inset);
    let hi = Vec2::new(room_width - inset, room_length - inset);
    let inside = |p: Vec2| p.x >= lo.x - 1e-9 && p.x <= hi.x + 1e-9 && p.y >= lo.y - 1e-9 && p.y <= hi.y + 1e-9;

    let max_ring = ((room_width + room_length) / spacing).ceil() as i64 + 1;
    let mut lattice = Vec::with_capacity(n);
    'rings: for k in 0..=max_ring {
        for (i, j) in ring(k) {
            let p = center + Vec2::new(i as f64 * spacing, j as f64 * spacing);
            if inside(p) {
                lattice.push(p);
                if lattice.len() == n {
                    break 'rings;
                }
            }
        }
    }
    if lattice.is_empty() {
        // Room smaller than one pitch: everybody at the center.
        lattice.push(center);
    }

    let capacity = lattice.len();
    let mut out = lattice.clone();
    let mut extra = 0usize;
    while out.len() < n {
        let base = lattice[extra % capacity];
        let round = extra / capacity;
        let angle = std::f64::consts::FRAC_PI_4 + round as f64 * 0.5;
        let offset = Vec2::new(angle.cos(), angle.sin()) * (spacing / 2.0);
        let p = base + offset;
        out.push(Vec2::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y)));
        extra += 1;
    }
    Ok(out)
}

/// Fractional-accumulation flow spawning for one tick starting at time `t`.
///
/// While `t < flow_duration`, the accumulator grows by the flow over the
/// part of the tick inside the window; its integer part is spawned. Over a
/// whole run the total is `floor(f * F)` (up to rounding).
pub fn flow_spawn_count(flow: f64, flow_duration: f64, t: f64, dt: f64, accumulator: f64) -> (usize, f64) {
    if flow <= 0.0 || t >= flow_duration {
        return (0, accumulator);
    }
    let acc = accumulator + flow * dt.min(flow_duration - t);
    let whole = (acc + 1e-9).floor();
    if whole >= 1.0 {
        (whole as usize, acc - whole)
    } else {
        (0, acc)
    }
}
