//! Point cloud, point list and grid file formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so text
//! files reload bitwise.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use spsr::{OrientedPointCloud, UniformGrid, Vec3};

use crate::error::{CliError, CliResult};

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}:{line}: {msg}", path.display()))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// An input cloud and whether it is planar (`x y nx ny` records).
#[derive(Debug, Clone)]
pub struct LoadedCloud {
    pub cloud: OrientedPointCloud,
    pub planar: bool,
}

/// Reads `.xyzn` or ASCII `.ply`, by extension.
pub fn read_cloud(path: &Path) -> CliResult<LoadedCloud> {
    let is_ply = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    let (positions, normals, planar) = if is_ply { read_ply(path)? } else { read_xyzn(path)? };
    if positions.is_empty() {
        return Err(CliError::Input(format!("{}: no samples", path.display())));
    }
    let cloud = OrientedPointCloud::new(positions, normals, 0.0).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(LoadedCloud { cloud, planar })
}

fn parse_floats(path: &Path, lineno: usize, line: &str) -> CliResult<Vec<f64>> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(path, lineno, format!("'{t}' is not a number"))))
        .collect()
}

/// One sample per line, `x y z nx ny nz` or (planar) `x y nx ny`; `#` starts
/// a comment. All records must have the same width.
pub fn read_xyzn(path: &Path) -> CliResult<(Vec<Vec3>, Vec<Vec3>, bool)> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let v = parse_floats(path, i + 1, content)?;
        if v.len() != 4 && v.len() != 6 {
            return Err(parse_err(path, i + 1, format!("expected 4 or 6 values, found {}", v.len())));
        }
        if *width.get_or_insert(v.len()) != v.len() {
            return Err(parse_err(path, i + 1, "mixed planar and 3D records"));
        }
        if v.len() == 4 {
            positions.push(Vec3::new(v[0], v[1], 0.0));
            normals.push(Vec3::new(v[2], v[3], 0.0));
        } else {
            positions.push(Vec3::new(v[0], v[1], v[2]));
            normals.push(Vec3::new(v[3], v[4], v[5]));
        }
    }
    Ok((positions, normals, width == Some(4)))
}

/// ASCII PLY with `x y z nx ny nz` vertex properties (other properties and
/// elements are skipped).
pub fn read_ply(path: &Path) -> CliResult<(Vec<Vec3>, Vec<Vec3>, bool)> {
    let mut lines = open(path)?.lines().enumerate();
    let mut next = |what: &str| -> CliResult<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(parse_err(path, i + 1, e)),
            None => Err(CliError::Input(format!("{}: unexpected end of file in {what}", path.display()))),
        }
    };
    let (n, magic) = next("header")?;
    if magic.trim() != "ply" {
        return Err(parse_err(path, n, "missing 'ply' magic"));
    }
    // (name, count, properties)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    loop {
        let (n, line) = next("header")?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", ..] => {}
            ["format", other, ..] => return Err(parse_err(path, n, format!("only ASCII PLY is supported, found '{other}'"))),
            ["element", name, count] => {
                let count = count.parse().map_err(|_| parse_err(path, n, "bad element count"))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "list", ..] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, n, "property before element"))?;
                el.2.push("<list>".into());
            }
            ["property", _, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, n, "property before element"))?;
                el.2.push(name.to_string());
            }
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(parse_err(path, n, format!("unrecognized header line '{line}'"))),
        }
    }
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    for (name, count, props) in &elements {
        if name != "vertex" {
            for _ in 0..*count {
                next(name)?;
            }
            continue;
        }
        let col = |p: &str| props.iter().position(|q| q == p);
        let cols: Vec<usize> = ["x", "y", "z", "nx", "ny", "nz"]
            .iter()
            .map(|p| col(p).ok_or_else(|| CliError::Input(format!("{}: vertex property '{p}' missing", path.display()))))
            .collect::<CliResult<_>>()?;
        if props.iter().any(|p| p == "<list>") {
            return Err(CliError::Input(format!("{}: list properties on vertices are not supported", path.display())));
        }
        for _ in 0..*count {
            let (n, line) = next("vertex data")?;
            let v = parse_floats(path, n, &line)?;
            if v.len() < props.len() {
                return Err(parse_err(path, n, format!("expected {} values", props.len())));
            }
            positions.push(Vec3::new(v[cols[0]], v[cols[1]], v[cols[2]]));
            normals.push(Vec3::new(v[cols[3]], v[cols[4]], v[cols[5]]));
        }
    }
    Ok((positions, normals, false))
}

pub fn write_xyzn(path: &Path, cloud: &OrientedPointCloud, planar: bool) -> CliResult<()> {
    let mut w = create(path)?;
    for (p, n) in cloud.positions().iter().zip(cloud.normals()) {
        if planar {
            writeln!(w, "{} {} {} {}", p.x, p.y, n.x, n.y)?;
        } else {
            writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Query points, one per line as `x,y[,z]` (commas or whitespace). `#`
/// comments and a leading non-numeric header line are skipped.
pub fn read_points(path: &Path) -> CliResult<Vec<Vec3>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let v = match parse_floats(path, i + 1, content) {
            Ok(v) => v,
            Err(_) if out.is_empty() && content.chars().any(|c| c.is_ascii_alphabetic()) => continue,
            Err(e) => return Err(e),
        };
        match v.len() {
            2 => out.push(Vec3::new(v[0], v[1], 0.0)),
            3 => out.push(Vec3::new(v[0], v[1], v[2])),
            n => return Err(parse_err(path, i + 1, format!("expected 2 or 3 coordinates, found {n}"))),
        }
    }
    Ok(out)
}

/// Header of a grid file.
pub fn grid_header(grid: &UniformGrid) -> String {
    let [nx, ny, nz] = grid.dims();
    let o = grid.origin();
    format!(
        "dims {nx} {ny} {nz}\norigin {} {} {}\nspacing {}\norder x-fastest\n\n",
        o.x,
        o.y,
        o.z,
        grid.spacing()
    )
}

/// Writes node values; binary payload (little-endian f64) when `binary`.
pub fn write_grid(path: &Path, grid: &UniformGrid, values: &[f64], binary: bool) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(grid_header(grid).as_bytes())?;
    if binary {
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    } else {
        for v in values {
            writeln!(w, "{v}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a grid file written by [`write_grid`].
pub fn read_grid(path: &Path, binary: bool) -> CliResult<(UniformGrid, Vec<f64>)> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut header = Vec::new();
    // header lines up to the blank separator
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .map(|e| pos + e)
            .ok_or_else(|| CliError::Input(format!("{}: truncated header", path.display())))?;
        let line = std::str::from_utf8(&bytes[pos..end]).map_err(|_| parse_err(path, header.len() + 1, "header is not text"))?;
        pos = end + 1;
        if line.trim().is_empty() {
            break;
        }
        header.push(line.to_string());
    }
    let field = |key: &str| -> CliResult<(usize, Vec<String>)> {
        header
            .iter()
            .enumerate()
            .find_map(|(i, l)| {
                let mut t = l.split_whitespace();
                (t.next() == Some(key)).then(|| (i + 1, t.map(str::to_string).collect()))
            })
            .ok_or_else(|| CliError::Input(format!("{}: header lacks '{key}'", path.display())))
    };
    let (ln, dims) = field("dims")?;
    let dims: Vec<usize> = dims.iter().map(|t| t.parse().map_err(|_| parse_err(path, ln, "bad dims"))).collect::<CliResult<_>>()?;
    let (ln, origin) = field("origin")?;
    let origin: Vec<f64> = origin.iter().map(|t| t.parse().map_err(|_| parse_err(path, ln, "bad origin"))).collect::<CliResult<_>>()?;
    let (ln, spacing) = field("spacing")?;
    let spacing: f64 = spacing.first().and_then(|t| t.parse().ok()).ok_or_else(|| parse_err(path, ln, "bad spacing"))?;
    let (ln, order) = field("order")?;
    if order.first().map(String::as_str) != Some("x-fastest") {
        return Err(parse_err(path, ln, "only x-fastest order is supported"));
    }
    if dims.len() != 3 || origin.len() != 3 {
        return Err(CliError::Input(format!("{}: dims and origin need three entries", path.display())));
    }
    let grid = UniformGrid::new([dims[0], dims[1], dims[2]], Vec3::new(origin[0], origin[1], origin[2]), spacing)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let n = grid.node_count();
    let values: Vec<f64> = if binary {
        let payload = &bytes[pos..];
        if payload.len() != 8 * n {
            return Err(CliError::Input(format!("{}: expected {} bytes of data, found {}", path.display(), 8 * n, payload.len())));
        }
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| CliError::Input(format!("{}: data is not text", path.display())))?;
        let first_line = header.len() + 2;
        let vals: Vec<f64> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| l.trim().parse().map_err(|_| parse_err(path, first_line + i, format!("'{}' is not a number", l.trim()))))
            .collect::<CliResult<_>>()?;
        if vals.len() != n {
            return Err(CliError::Input(format!("{}: expected {n} values, found {}", path.display(), vals.len())));
        }
        vals
    };
    Ok((grid, values))
}
