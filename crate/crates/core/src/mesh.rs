//! Triangle meshes, polylines and ASCII OBJ input/output.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polyline {
    pub points: Vec<Vec3>,
    pub closed: bool,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Unnormalized face normal (twice the area).
    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| 0.5 * self.face_normal(t).norm()).sum()
    }

    /// Every undirected edge is used by exactly two triangles, in opposite
    /// directions.
    pub fn is_closed_manifold(&self) -> bool {
        let mut directed = std::collections::HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *directed.entry((t[e], t[(e + 1) % 3])).or_insert(0usize) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Reads `v` and `f` records; polygonal faces are fan-triangulated,
    /// `f` indices may carry `/vt/vn` suffixes and may be negative.
    pub fn read_obj<R: BufRead>(reader: R) -> Result<Self> {
        let mut mesh = TriangleMesh::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
                    if c.len() != 3 {
                        return Err(Error::Parse { line: lineno, message: "vertex needs three coordinates".into() });
                    }
                    mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in it {
                        let first = tok.split('/').next().unwrap_or("");
                        let v: i64 = first
                            .parse()
                            .map_err(|_| Error::Parse { line: lineno, message: format!("bad face index '{tok}'") })?;
                        let n = mesh.vertices.len() as i64;
                        let resolved = if v < 0 { n + v } else { v - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(Error::Parse { line: lineno, message: format!("face index {v} out of range") });
                        }
                        idx.push(resolved as usize);
                    }
                    if idx.len() < 3 {
                        return Err(Error::Parse { line: lineno, message: "face needs at least three vertices".into() });
                    }
                    for k in 1..idx.len() - 1 {
                        mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Ok(mesh)
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    /// Icosphere-style UV sphere, mostly for tests and examples.
    pub fn uv_sphere(center: Vec3, radius: f64, stacks: usize, slices: usize) -> Self {
        let mut mesh = TriangleMesh::default();
        mesh.vertices.push(center + Vec3::new(0.0, 0.0, radius));
        for i in 1..stacks {
            let theta = std::f64::consts::PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let phi = std::f64::consts::TAU * j as f64 / slices as f64;
                mesh.vertices
                    .push(center + radius * Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
            }
        }
        mesh.vertices.push(center - Vec3::new(0.0, 0.0, radius));
        let south = mesh.vertices.len() - 1;
        let ring = |i: usize, j: usize| 1 + (i - 1) * slices + j % slices;
        for j in 0..slices {
            mesh.triangles.push([0, ring(1, j), ring(1, j + 1)]);
            mesh.triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                mesh.triangles.push([a, c, d]);
                mesh.triangles.push([a, d, b]);
            }
        }
        mesh
    }
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let open: f64 = self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        match (self.closed, self.points.first(), self.points.last()) {
            (true, Some(a), Some(b)) => open + (a - b).norm(),
            _ => open,
        }
    }
}

/// Writes polylines as OBJ `v` and `l` records.
pub fn write_polylines_obj<W: Write>(lines: &[Polyline], mut w: W) -> Result<()> {
    let mut base = 1;
    for line in lines {
        for p in &line.points {
            writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
        }
        let mut idx: Vec<String> = (0..line.points.len()).map(|i| (base + i).to_string()).collect();
        if line.closed && !line.points.is_empty() {
            idx.push(base.to_string());
        }
        if idx.len() >= 2 {
            writeln!(w, "l {}", idx.join(" "))?;
        }
        base += line.points.len();
    }
    Ok(())
}

/// Reads OBJ `l` records into polylines; a line whose last index repeats
/// the first is closed.
pub fn read_polylines_obj<R: BufRead>(reader: R) -> Result<Vec<Polyline>> {
    let mut vertices = Vec::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut it = line.split_whitespace();
        let bad = |m: String| Error::Parse { line: lineno, message: m };
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.take(3).map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(e.to_string()))?;
                if c.len() < 2 {
                    return Err(bad("vertex needs coordinates".into()));
                }
                vertices.push(Vec3::new(c[0], c[1], c.get(2).copied().unwrap_or(0.0)));
            }
            Some("l") => {
                let idx: Vec<usize> = it
                    .map(|t| t.parse::<usize>().ok().filter(|v| *v >= 1 && *v <= vertices.len()).map(|v| v - 1))
                    .collect::<Option<_>>()
                    .ok_or_else(|| bad("bad line index".into()))?;
                let closed = idx.len() > 2 && idx.first() == idx.last();
                let n = if closed { idx.len() - 1 } else { idx.len() };
                out.push(Polyline { points: idx[..n].iter().map(|&v| vertices[v]).collect(), closed });
            }
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_round_trip() {
        let m = TriangleMesh::uv_sphere(Vec3::new(0.1, 0.2, 0.3), 0.5, 8, 12);
        assert!(m.is_closed_manifold());
        let mut buf = Vec::new();
        m.write_obj(&mut buf).unwrap();
        let back = TriangleMesh::read_obj(buf.as_slice()).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert_eq!(a, b);
        }
        // outward orientation
        let n0 = m.face_normal(0);
        let c = (m.vertices[m.triangles[0][0]] + m.vertices[m.triangles[0][1]] + m.vertices[m.triangles[0][2]]) / 3.0;
        assert!(n0.dot(&(c - Vec3::new(0.1, 0.2, 0.3))) > 0.0);
    }

    #[test]
    fn obj_parse_errors_and_quads() {
        let src = "# comment\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n";
        let m = TriangleMesh::read_obj(src.as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert!((m.area() - 1.0).abs() < 1e-15);
        let err = TriangleMesh::read_obj("v 0 0 0\nf 1 2 3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn polyline_round_trip() {
        let sq = Polyline {
            points: vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y()],
            closed: true,
        };
        assert_eq!(sq.length(), 4.0);
        let mut buf = Vec::new();
        write_polylines_obj(std::slice::from_ref(&sq), &mut buf).unwrap();
        assert_eq!(read_polylines_obj(buf.as_slice()).unwrap(), vec![sq]);
    }
}
