//! Procedural meshes with exactly known geometry, used as fixtures and for
//! quick pipeline demos. All shapes wind counter-clockwise seen from outside
//! so winding-derived normals point outward.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::TriangleMesh;

/// Axis-aligned cube of edge length 1 centered at the origin (12 triangles).
pub fn unit_cube() -> TriangleMesh {
    cuboid(Vector3::repeat(-0.5), Vector3::repeat(0.5))
}

/// Axis-aligned box between `lo` and `hi` (12 triangles, outward winding).
pub fn cuboid(lo: Vector3<f64>, hi: Vector3<f64>) -> TriangleMesh {
    let v = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
    let corners = [
        v(lo.x, lo.y, lo.z), // 0
        v(hi.x, lo.y, lo.z), // 1
        v(hi.x, hi.y, lo.z), // 2
        v(lo.x, hi.y, lo.z), // 3
        v(lo.x, lo.y, hi.z), // 4
        v(hi.x, lo.y, hi.z), // 5
        v(hi.x, hi.y, hi.z), // 6
        v(lo.x, hi.y, hi.z), // 7
    ];
    // Each face as two CCW triangles viewed from outside the box.
    let quads: [[u32; 4]; 6] = [
        [0, 3, 2, 1], // z = lo
        [4, 5, 6, 7], // z = hi
        [0, 1, 5, 4], // y = lo
        [3, 7, 6, 2], // y = hi
        [0, 4, 7, 3], // x = lo
        [1, 2, 6, 5], // x = hi
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    TriangleMesh::new(corners.to_vec(), triangles).expect("cuboid construction is valid")
}

/// Geodesic sphere: an icosahedron subdivided `subdivisions` times, vertices
/// projected to `radius`. Triangle count is `20 * 4^subdivisions`.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    assert!(radius > 0.0 && radius.is_finite());
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize() * radius)
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
    for _ in 0..subdivisions {
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(&mut vertices, &mut midpoints, a, b, radius);
            let bc = midpoint(&mut vertices, &mut midpoints, b, c, radius);
            let ca = midpoint(&mut vertices, &mut midpoints, c, a, radius);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    TriangleMesh::new(vertices, triangles).expect("icosphere construction is valid")
}

fn midpoint(
    vertices: &mut Vec<Vector3<f64>>,
    cache: &mut HashMap<(u32, u32), u32>,
    a: u32,
    b: u32,
    radius: f64,
) -> u32 {
    let key = (a.min(b), a.max(b));
    if let Some(&idx) = cache.get(&key) {
        return idx;
    }
    let m = ((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize() * radius;
    vertices.push(m);
    let idx = (vertices.len() - 1) as u32;
    cache.insert(key, idx);
    idx
}

/// Single square in the `z = 0` plane spanning `[-half, half]^2`, wound so
/// its normal points toward `+z`. Two triangles; an open surface.
pub fn single_quad(half: f64) -> TriangleMesh {
    let vertices = vec![
        Vector3::new(-half, -half, 0.0),
        Vector3::new(half, -half, 0.0),
        Vector3::new(half, half, 0.0),
        Vector3::new(-half, half, 0.0),
    ];
    TriangleMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]]).expect("quad construction is valid")
}
