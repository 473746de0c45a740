//! Small planar geometry helpers shared by all modules.

pub type Vec2 = nalgebra::Vector2<f64>;

/// Counterclockwise rotation by a quarter turn; maps the unit tangent to the
/// unit normal.
#[inline]
pub fn rot_ccw(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Clockwise rotation by `pi/3`, used by the Fermat-point construction.
#[inline]
pub fn rot_cw_third(v: Vec2) -> Vec2 {
    // [[1, sqrt3], [-sqrt3, 1]] / 2
    let s = 3.0_f64.sqrt();
    Vec2::new(0.5 * (v.x + s * v.y), 0.5 * (-s * v.x + v.y))
}

/// Signed area of a closed polyline (shoelace). The last point may or may not
/// repeat the first.
pub fn shoelace_area(points: &[Vec2]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    0.5 * acc
}
