//! Triangle-level geometric primitives shared by the distance, ray, and
//! carving code.

use nalgebra::Vector3;

/// Relative tolerance below which a ray is considered parallel to a triangle
/// plane (scaled by the triangle's double-area).
const PARALLEL_EPS: f64 = 1e-12;

pub fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    (b - a).cross(&(c - a)).norm() * 0.5
}

/// Unit normal implied by counter-clockwise winding; zero when degenerate.
pub fn triangle_normal(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        Vector3::zeros()
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, *Real-Time Collision
/// Detection*, §5.1.5). Handles all vertex/edge/face Voronoi regions and
/// degenerates gracefully to a segment or point for zero-area triangles.
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        let v = if denom > 0.0 { d1 / denom } else { 0.0 };
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        let w = if denom > 0.0 { d2 / denom } else { 0.0 };
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        let w = if denom > 0.0 { (d4 - d3) / denom } else { 0.0 };
        return b + (c - b) * w;
    }

    let denom = va + vb + vc;
    if denom <= 0.0 {
        // Degenerate triangle: fall back to the nearest of the three edges.
        let mut best = *a;
        let mut best_d = (p - a).norm_squared();
        for (s, e) in [(a, b), (a, c), (b, c)] {
            let q = closest_point_on_segment(p, s, e);
            let d = (p - q).norm_squared();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        return best;
    }
    let v = vb / denom;
    let w = vc / denom;
    a + ab * v + ac * w
}

fn closest_point_on_segment(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// A ray-triangle intersection: parameter along the ray plus barycentric
/// coordinates (`u` weights the second corner, `v` the third).
#[derive(Clone, Copy, Debug)]
pub struct RayHit {
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

impl RayHit {
    /// True when the hit lies within `eps` of a triangle edge or vertex in
    /// barycentric coordinates — the ambiguous case for crossing counts.
    pub fn near_boundary(&self, eps: f64) -> bool {
        let w = 1.0 - self.u - self.v;
        self.u < eps || self.v < eps || w < eps
    }
}

/// Möller–Trumbore ray/triangle intersection without backface culling.
/// Returns hits at any `t` (the caller filters); `None` when the ray is
/// parallel to the triangle plane or the hit lies outside the triangle.
pub fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<RayHit> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let scale = e1.cross(&e2).norm();
    if det.abs() <= PARALLEL_EPS * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    Some(RayHit { t, u, v })
}
