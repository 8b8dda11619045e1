//! Marching squares / marching cubes on a node field.
//!
//! Cube cases are not looked up in a fixed table; the contour of each cube
//! is assembled from its six faces. On every face the crossing edges are
//! joined around runs of positive corners (so diagonal positive corners
//! stay separate), segments are oriented with the positive side on their
//! left as seen from outside the cube, and the segments are chained into
//! loops and fan-triangulated. Neighbouring cubes see each shared face
//! with the opposite orientation, so the surface is watertight.

use std::collections::HashMap;

use crate::grid::UniformGrid;
use crate::mesh::{Polyline, TriangleMesh};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub enum LevelSet {
    Curves(Vec<Polyline>),
    Surface(TriangleMesh),
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        match self {
            LevelSet::Curves(c) => c.is_empty(),
            LevelSet::Surface(m) => m.is_empty(),
        }
    }
}

/// Crossing vertices shared between cells through their global edge key.
struct EdgeVertices<'a> {
    grid: &'a UniformGrid,
    values: &'a [f64],
    iso: f64,
    index: HashMap<(usize, usize), usize>,
    points: Vec<Vec3>,
}

impl<'a> EdgeVertices<'a> {
    fn vertex(&mut self, a: usize, b: usize) -> usize {
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(&v) = self.index.get(&key) {
            return v;
        }
        let (va, vb) = (self.values[key.0], self.values[key.1]);
        let t = ((self.iso - va) / (vb - va)).clamp(0.0, 1.0);
        let pa = self.grid.node_position(key.0);
        let pb = self.grid.node_position(key.1);
        let id = self.points.len();
        self.points.push(pa + (pb - pa) * t);
        self.index.insert(key, id);
        id
    }
}

/// Directed segments of one square with corners in counter-clockwise
/// order (as seen from the side the result should be oriented for).
/// Each segment is `(edge, edge)` with an edge given as a pair of corner
/// positions in the cycle, and has the positive corners on its left.
fn square_segments(positive: [bool; 4]) -> Vec<((usize, usize), (usize, usize))> {
    let mut out = Vec::new();
    if positive.iter().all(|p| *p) || positive.iter().all(|p| !*p) {
        return out;
    }
    for start in 0..4 {
        let prev = (start + 3) % 4;
        if !positive[start] || positive[prev] {
            continue;
        }
        let mut end = start;
        while positive[(end + 1) % 4] {
            end = (end + 1) % 4;
        }
        let next = (end + 1) % 4;
        out.push(((end, next), (prev, start)));
    }
    out
}

/// Extracts the `iso` level set of a node field: polylines on planar grids,
/// a triangle mesh otherwise. Nodes with `value > iso` are on the positive
/// side; triangle normals point towards it.
pub fn extract_levelset(grid: &UniformGrid, values: &[f64], iso: f64) -> LevelSet {
    assert_eq!(values.len(), grid.node_count());
    let mut verts = EdgeVertices {
        grid,
        values,
        iso,
        index: HashMap::new(),
        points: Vec::new(),
    };
    if grid.is_planar() {
        LevelSet::Curves(marching_squares(grid, &mut verts))
    } else {
        LevelSet::Surface(marching_cubes(grid, &mut verts))
    }
}

fn marching_squares(grid: &UniformGrid, verts: &mut EdgeVertices) -> Vec<Polyline> {
    let [nx, ny, _] = grid.dims();
    let mut next: HashMap<usize, usize> = HashMap::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [grid.index(i, j, 0), grid.index(i + 1, j, 0), grid.index(i + 1, j + 1, 0), grid.index(i, j + 1, 0)];
            let positive = corners.map(|c| verts.values[c] > verts.iso);
            for (from, to) in square_segments(positive) {
                let a = verts.vertex(corners[from.0], corners[from.1]);
                let b = verts.vertex(corners[to.0], corners[to.1]);
                if a != b {
                    next.insert(a, b);
                }
            }
        }
    }
    let has_incoming: std::collections::HashSet<usize> = next.values().copied().collect();
    let mut starts: Vec<usize> = next.keys().copied().filter(|v| !has_incoming.contains(v)).collect();
    starts.sort_unstable();
    let mut remaining: Vec<usize> = next.keys().copied().collect();
    remaining.sort_unstable();
    let mut used = std::collections::HashSet::new();
    let mut lines = Vec::new();
    for s in starts.into_iter().chain(remaining) {
        if used.contains(&s) {
            continue;
        }
        let mut chain = vec![s];
        used.insert(s);
        let mut cur = s;
        let mut closed = false;
        while let Some(&n) = next.get(&cur) {
            if n == s {
                closed = true;
                break;
            }
            if !used.insert(n) {
                break;
            }
            chain.push(n);
            cur = n;
        }
        lines.push(Polyline {
            points: chain.iter().map(|&v| verts.points[v]).collect(),
            closed,
        });
    }
    lines
}

/// Corner `c` of a cube has offsets `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
fn cube_faces() -> [[usize; 4]; 6] {
    let offset = |c: usize| Vec3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64);
    // cyclic corner order per face, then fixed up to be counter-clockwise
    // seen from outside
    let mut faces = [
        ([0, 2, 6, 4], -Vec3::x()),
        ([1, 3, 7, 5], Vec3::x()),
        ([0, 1, 5, 4], -Vec3::y()),
        ([2, 3, 7, 6], Vec3::y()),
        ([0, 1, 3, 2], -Vec3::z()),
        ([4, 5, 7, 6], Vec3::z()),
    ];
    for (f, outward) in faces.iter_mut() {
        let n = (offset(f[1]) - offset(f[0])).cross(&(offset(f[2]) - offset(f[1])));
        if n.dot(outward) < 0.0 {
            f.reverse();
        }
    }
    faces.map(|f| f.0)
}

fn marching_cubes(grid: &UniformGrid, verts: &mut EdgeVertices) -> TriangleMesh {
    let [nx, ny, nz] = grid.dims();
    let faces = cube_faces();
    let mut triangles = Vec::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corners: [usize; 8] = std::array::from_fn(|c| grid.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)));
                let positive = corners.map(|c| verts.values[c] > verts.iso);
                if positive.iter().all(|p| *p) || positive.iter().all(|p| !*p) {
                    continue;
                }
                // directed segments keyed by local edge
                let mut next: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
                for face in &faces {
                    let pf = face.map(|c| positive[c]);
                    for (from, to) in square_segments(pf) {
                        let key = |e: (usize, usize)| {
                            let (a, b) = (face[e.0], face[e.1]);
                            if a < b {
                                (a, b)
                            } else {
                                (b, a)
                            }
                        };
                        next.insert(key(from), key(to));
                    }
                }
                let saddle = faces.iter().any(|f| square_segments(f.map(|c| positive[c])).len() == 2);
                let mut keys: Vec<(usize, usize)> = next.keys().copied().collect();
                keys.sort_unstable();
                let mut seen = std::collections::HashSet::new();
                for start in keys {
                    if seen.contains(&start) {
                        continue;
                    }
                    let mut ring = Vec::new();
                    let mut cur = start;
                    while seen.insert(cur) {
                        ring.push(verts.vertex(corners[cur.0], corners[cur.1]));
                        cur = next[&cur];
                    }
                    if ring.len() > 3 && saddle {
                        // two vertices of the loop may share a saddle face without
                        // being joined on it; a fan from one of them could then
                        // duplicate a diagonal of the neighbouring cube
                        let centre = ring.iter().map(|&v| verts.points[v]).sum::<Vec3>() / ring.len() as f64;
                        let c = verts.points.len();
                        verts.points.push(centre);
                        for t in 0..ring.len() {
                            triangles.push([c, ring[t], ring[(t + 1) % ring.len()]]);
                        }
                    } else {
                        for t in 1..ring.len() - 1 {
                            triangles.push([ring[0], ring[t], ring[t + 1]]);
                        }
                    }
                }
            }
        }
    }
    TriangleMesh {
        vertices: std::mem::take(&mut verts.points),
        triangles,
    }
}
