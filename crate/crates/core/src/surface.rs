//! Isosurface extraction: masked marching cubes at arbitrary isovalues.
//!
//! Cells whose eight corner voxels are all valid are triangulated with the
//! classic 256-case table; cells touching any invalid voxel are skipped, so
//! unobserved regions of a fused volume produce no fabricated geometry.
//! Vertices are deduplicated across cells by canonical edge identity, which
//! makes closed level sets come out watertight.

mod mc_tables;

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::grid::{MaskGrid, VoxelGrid};
use crate::mesh::TriangleMesh;
use crate::{Error, Result};

use mc_tables::TRI_TABLE;

/// Lattice offsets of a cell's eight corners. Corner order follows the
/// classic table: 0-3 ring the z-low face counter-clockwise, 4-7 the z-high
/// face.
const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner pairs of the twelve cell edges, in table order.
const EDGE_CORNERS: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// A lattice edge named by its lower corner and axis: the canonical identity
/// under which adjacent cells share interpolated vertices.
type EdgeKey = (usize, usize, usize, u8);

fn canonical_edge(cell: [usize; 3], edge: usize) -> EdgeKey {
    let (a, b) = EDGE_CORNERS[edge];
    let pa = CORNER_OFFSETS[a];
    let pb = CORNER_OFFSETS[b];
    let lo = [
        cell[0] + pa[0].min(pb[0]),
        cell[1] + pa[1].min(pb[1]),
        cell[2] + pa[2].min(pb[2]),
    ];
    let axis = (0..3).find(|&d| pa[d] != pb[d]).expect("edge spans an axis") as u8;
    (lo[0], lo[1], lo[2], axis)
}

struct CellOutput {
    /// Interpolated vertex per active edge, keyed canonically.
    vertices: Vec<(EdgeKey, Vector3<f64>)>,
    /// Triangles as canonical edge keys, already wound so normals point
    /// toward increasing field values.
    triangles: Vec<[EdgeKey; 3]>,
}

/// Extracts the level set `{f = isovalue}` as a triangle mesh.
///
/// Interpolation happens on the differences `f - isovalue`, so shifting the
/// grid and the isovalue by the same exactly-representable constant yields
/// a bit-identical mesh. Triangles are wound with normals pointing toward
/// increasing values (outward, for a negative-inside SDF). A level set that
/// does not intersect the valid region yields an empty mesh, not an error.
///
/// `mask` (when given) marks valid voxels; any cell touching an invalid
/// corner is skipped. The mask layout must match the grid.
pub fn marching_cubes(
    grid: &VoxelGrid,
    mask: Option<&MaskGrid>,
    isovalue: f64,
) -> Result<TriangleMesh> {
    let spec = grid.spec;
    if spec.dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidInput(format!(
            "marching cubes needs at least 2 voxels per axis, got {:?}",
            spec.dims
        )));
    }
    if !isovalue.is_finite() {
        return Err(Error::InvalidInput(format!(
            "isovalue must be finite, got {isovalue}"
        )));
    }
    if !grid.is_finite() {
        return Err(Error::InvalidInput(
            "grid contains non-finite values".into(),
        ));
    }
    if let Some(m) = mask {
        if !m.spec.approx_eq(&spec, 1e-9) {
            return Err(Error::SpecMismatch(
                "mask layout differs from the value grid".into(),
            ));
        }
    }

    let cells = [spec.dims[0] - 1, spec.dims[1] - 1, spec.dims[2] - 1];
    let n_cells = cells[0] * cells[1] * cells[2];
    let cell_coords = |idx: usize| -> [usize; 3] {
        let k = idx % cells[2];
        let j = (idx / cells[2]) % cells[1];
        let i = idx / (cells[2] * cells[1]);
        [i, j, k]
    };

    // Phase 1 (parallel): triangulate each cell independently. `collect`
    // keeps cell-index order, so the merge below is deterministic.
    let per_cell: Vec<CellOutput> = (0..n_cells)
        .into_par_iter()
        .filter_map(|idx| {
            let cell = cell_coords(idx);
            let mut diffs = [0.0; 8];
            let mut config = 0usize;
            for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                let (i, j, k) = (cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]);
                if let Some(m) = mask {
                    if !m.get(i, j, k) {
                        return None;
                    }
                }
                let d = grid.get(i, j, k) - isovalue;
                diffs[c] = d;
                if d < 0.0 {
                    config |= 1 << c;
                }
            }
            let table = TRI_TABLE[config];
            if table.is_empty() {
                return None;
            }
            let mut vertices = Vec::new();
            let mut seen = [false; 12];
            for &e in table {
                let e = e as usize;
                if seen[e] {
                    continue;
                }
                seen[e] = true;
                let (a, b) = EDGE_CORNERS[e];
                let (da, db) = (diffs[a], diffs[b]);
                let t = if da == db {
                    0.5 // degenerate edge: deterministic midpoint
                } else {
                    da / (da - db)
                };
                let pa = CORNER_OFFSETS[a];
                let pb = CORNER_OFFSETS[b];
                let ca = spec.center(cell[0] + pa[0], cell[1] + pa[1], cell[2] + pa[2]);
                let cb = spec.center(cell[0] + pb[0], cell[1] + pb[1], cell[2] + pb[2]);
                vertices.push((canonical_edge(cell, e), ca + (cb - ca) * t));
            }
            let triangles = table
                .chunks_exact(3)
                .map(|tri| {
                    // The table winds toward the inside; swap to face outward.
                    [
                        canonical_edge(cell, tri[0] as usize),
                        canonical_edge(cell, tri[2] as usize),
                        canonical_edge(cell, tri[1] as usize),
                    ]
                })
                .collect();
            Some(CellOutput {
                vertices,
                triangles,
            })
        })
        .collect();

    // Phase 2 (sequential): assign vertex indices in first-use order and
    // resolve triangles. Shared edges interpolate identically in every
    // adjacent cell, so keeping the first occurrence is lossless.
    let mut index_of: HashMap<EdgeKey, u32> = HashMap::new();
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for cell in &per_cell {
        for (key, pos) in &cell.vertices {
            index_of.entry(*key).or_insert_with(|| {
                vertices.push(*pos);
                (vertices.len() - 1) as u32
            });
        }
        for tri in &cell.triangles {
            triangles.push([index_of[&tri[0]], index_of[&tri[1]], index_of[&tri[2]]]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}
