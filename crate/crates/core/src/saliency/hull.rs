//! Integer convex hulls and point-in-convex-polygon tests. Everything here
//! is exact: particle coordinates are pixels, so i64 cross products decide
//! membership without epsilons.

pub type Pt = (i64, i64);

fn cross(o: Pt, a: Pt, b: Pt) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain convex hull, counter-clockwise, strict turns only (no
/// collinear vertices). Degenerate inputs (fewer than 3 distinct points, or
/// all collinear) come back with fewer than 3 vertices.
pub fn convex_hull(points: &[Pt]) -> Vec<Pt> {
    let mut pts: Vec<Pt> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let mut lower: Vec<Pt> = Vec::with_capacity(n);
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Pt> = Vec::with_capacity(n);
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        // all collinear; keep the two extremes
        let mut ends = vec![pts[0], pts[n - 1]];
        ends.dedup();
        return ends;
    }
    lower
}

/// True when `p` is inside or on a counter-clockwise convex polygon.
pub fn point_in_hull(hull: &[Pt], p: Pt) -> bool {
    if hull.len() < 3 {
        return false;
    }
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        if cross(a, b, p) < 0 {
            return false;
        }
    }
    true
}

/// 2-pixel octagonal offsets used to dilate degenerate hulls.
const OCTAGON: [Pt; 8] = [
    (2, 1),
    (1, 2),
    (-1, 2),
    (-2, 1),
    (-2, -1),
    (-1, -2),
    (1, -2),
    (2, -1),
];

/// Minkowski-dilates a degenerate point set by the 2-px octagon, clamps to
/// the frame, and hulls the result so every cluster is maskable.
pub fn dilate_degenerate(points: &[Pt], width: usize, height: usize) -> Vec<Pt> {
    let mut fat = Vec::with_capacity(points.len() * OCTAGON.len());
    for &(px, py) in points {
        for &(ox, oy) in &OCTAGON {
            let x = (px + ox).clamp(0, width as i64 - 1);
            let y = (py + oy).clamp(0, height as i64 - 1);
            fat.push((x, y));
        }
    }
    convex_hull(&fat)
}

/// Hull of a frame's points, dilating when degenerate. Always returns a
/// polygon with at least 3 vertices inside the frame.
pub fn frame_hull(points: &[Pt], width: usize, height: usize) -> Vec<Pt> {
    let hull = convex_hull(points);
    if hull.len() >= 3 {
        hull
    } else {
        dilate_degenerate(&hull, width, height)
    }
}
