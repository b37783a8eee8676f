//! Deterministic direction sets on the unit sphere.

use nalgebra::{Rotation3, Unit, Vector3};

/// `n` near-uniform unit directions from the Fibonacci (golden-angle) spiral,
/// tilted by a fixed rotation so that no direction coincides with a
/// coordinate axis. Axis-aligned rays would otherwise hit the edges of
/// axis-aligned test geometry with probability one.
pub fn fibonacci_directions(n: usize) -> Vec<Vector3<f64>> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let tilt = detilt_rotation();
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            tilt * Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Fixed, irrational-looking tilt shared by all direction sets.
pub fn detilt_rotation() -> Rotation3<f64> {
    Rotation3::from_axis_angle(
        &Unit::new_normalize(Vector3::new(0.274_301, 0.713_762, 0.644_289)),
        0.537_812,
    )
}

/// Rotates `dir` by `angle` radians around an axis perpendicular to it.
/// `which` selects between the two canonical perpendicular axes (and their
/// mix), so repeated retries probe genuinely different perturbations.
pub fn perturb_direction(dir: &Vector3<f64>, angle: f64, which: usize) -> Vector3<f64> {
    // Any vector not parallel to dir yields a perpendicular via cross product.
    let helper = if dir.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = dir.cross(&helper).normalize();
    let v = dir.cross(&u);
    let axis = match which % 3 {
        0 => u,
        1 => v,
        _ => (u + v).normalize(),
    };
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle) * dir
}
