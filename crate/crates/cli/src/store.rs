//! On-disk layout of a reconstructed field under a common prefix:
//! `.mean.grid`, `.var.grid`, `.pin.grid` (each `.grid.bin` when binary),
//! `.field.meta` and `.C.bin`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use spsr::{EigenBasis, PriorSpec, ReconstructionConfig, StochasticField, Vec3};

use crate::error::{CliError, CliResult};
use crate::formats::{read_grid, write_grid};

/// Settings and scalars stored next to the field arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMeta {
    pub sigma_g: f64,
    pub kernel_width: Option<f64>,
    pub sigma_n: f64,
    pub eigen_k: usize,
    pub prior: PriorSpec,
    pub flip_sign: bool,
    pub variance_shift: f64,
    pub mean_shift: f64,
    pub samples: usize,
    pub joint_cap: usize,
    pub binary_grids: bool,
}

impl FieldMeta {
    pub fn config(&self) -> ReconstructionConfig {
        ReconstructionConfig {
            sigma_g: self.sigma_g,
            kernel_width: self.kernel_width,
            eigen_k: self.eigen_k,
            prior: self.prior,
            flip_sign: self.flip_sign,
            joint_cap: self.joint_cap,
            ..Default::default()
        }
    }

    fn to_text(&self) -> String {
        let (prior, alpha, center) = match &self.prior {
            PriorSpec::Zero => ("zero", None, None),
            PriorSpec::Sphere { center, alpha } => ("sphere", Some(*alpha), *center),
            PriorSpec::Ellipsoid { center, alpha } => ("ellipsoid", Some(*alpha), *center),
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
        kv("format", "spsr-field 1".into());
        kv("laplacian", "negative-semidefinite, zero-neumann".into());
        kv("inside", if self.flip_sign { "f>0" } else { "f<=0" }.into());
        kv("flip_sign", self.flip_sign.to_string());
        kv("sigma_g", self.sigma_g.to_string());
        kv("kernel_width", self.kernel_width.map_or("grid".into(), |w| w.to_string()));
        kv("sigma_n", self.sigma_n.to_string());
        kv("eigen_k", self.eigen_k.to_string());
        kv("prior", prior.into());
        if let Some(a) = alpha {
            kv("alpha", a.to_string());
        }
        kv("prior_center", center.map_or("centroid".into(), |c| format!("{},{},{}", c.x, c.y, c.z)));
        kv("variance_shift", self.variance_shift.to_string());
        kv("mean_shift", self.mean_shift.to_string());
        kv("samples", self.samples.to_string());
        kv("joint_cap", self.joint_cap.to_string());
        kv("grid_encoding", if self.binary_grids { "binary" } else { "text" }.into());
        s
    }

    fn parse(path: &Path, text: &str) -> CliResult<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> CliResult<&String> {
            map.get(k).ok_or_else(|| CliError::Input(format!("{}: missing key '{k}'", path.display())))
        };
        fn num<T: std::str::FromStr>(path: &Path, k: &str, v: &str) -> CliResult<T> {
            v.parse().map_err(|_| CliError::Input(format!("{}: bad value '{v}' for '{k}'", path.display())))
        }
        let center = match get("prior_center")?.as_str() {
            "centroid" => None,
            s => Some(parse_vec3(s).map_err(|m| CliError::Input(format!("{}: prior_center: {m}", path.display())))?),
        };
        let prior = match get("prior")?.as_str() {
            "zero" => PriorSpec::Zero,
            "sphere" => PriorSpec::Sphere {
                center,
                alpha: num(path, "alpha", get("alpha")?)?,
            },
            "ellipsoid" => PriorSpec::Ellipsoid {
                center,
                alpha: num(path, "alpha", get("alpha")?)?,
            },
            other => return Err(CliError::Input(format!("{}: unknown prior '{other}'", path.display()))),
        };
        Ok(FieldMeta {
            sigma_g: num(path, "sigma_g", get("sigma_g")?)?,
            kernel_width: match get("kernel_width")?.as_str() {
                "grid" => None,
                s => Some(num(path, "kernel_width", s)?),
            },
            sigma_n: num(path, "sigma_n", get("sigma_n")?)?,
            eigen_k: num(path, "eigen_k", get("eigen_k")?)?,
            prior,
            flip_sign: num(path, "flip_sign", get("flip_sign")?)?,
            variance_shift: num(path, "variance_shift", get("variance_shift")?)?,
            mean_shift: num(path, "mean_shift", get("mean_shift")?)?,
            samples: num(path, "samples", get("samples")?)?,
            joint_cap: num(path, "joint_cap", get("joint_cap")?)?,
            binary_grids: get("grid_encoding")? == "binary",
        })
    }
}

/// `x,y,z` or `x,y`.
pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<_, _>>()?;
    match v.len() {
        2 => Ok(Vec3::new(v[0], v[1], 0.0)),
        3 => Ok(Vec3::new(v[0], v[1], v[2])),
        n => Err(format!("expected 2 or 3 comma-separated values, found {n}")),
    }
}

pub fn path_with(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `<prefix>.<name>.grid`, or `.grid.bin` for a binary payload.
pub fn grid_path(prefix: &Path, name: &str, binary: bool) -> PathBuf {
    path_with(prefix, &format!(".{name}.grid{}", if binary { ".bin" } else { "" }))
}

/// Writes `k`, the row-major factor and the mode triples.
pub fn write_reduced(path: &Path, c: &DMatrix<f64>, basis: &EigenBasis) -> CliResult<()> {
    let k = basis.len();
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?);
    writeln!(w, "k {k}")?;
    for i in 0..k {
        for j in 0..k {
            w.write_all(&c[(i, j)].to_le_bytes())?;
        }
    }
    for m in basis.modes() {
        writeln!(w, "{} {} {}", m[0], m[1], m[2])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reduced(path: &Path) -> CliResult<(DMatrix<f64>, Vec<[usize; 3]>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    let bad = |m: &str| CliError::Input(format!("{}: {m}", path.display()));
    let nl = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| bad("missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not text"))?;
    let k: usize = header
        .strip_prefix("k ")
        .and_then(|t| t.trim().parse().ok())
        .ok_or_else(|| bad("header must be 'k <int>'"))?;
    let start = nl + 1;
    let end = start + 8 * k * k;
    if bytes.len() < end {
        return Err(bad("truncated factor"));
    }
    let vals: Vec<f64> = bytes[start..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let c = DMatrix::from_row_slice(k, k, &vals);
    let tail = std::str::from_utf8(&bytes[end..]).map_err(|_| bad("mode list is not text"))?;
    let modes: Vec<[usize; 3]> = tail
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<usize> = l.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            if v.len() == 3 {
                Ok([v[0], v[1], v[2]])
            } else {
                Err(bad(&format!("bad mode line '{l}'")))
            }
        })
        .collect::<CliResult<_>>()?;
    if modes.len() != k {
        return Err(bad(&format!("expected {k} mode lines, found {}", modes.len())));
    }
    Ok((c, modes))
}

/// Writes every file of a field under `prefix`; returns the paths written.
pub fn save_field(prefix: &Path, field: &StochasticField, meta: &FieldMeta) -> CliResult<Vec<PathBuf>> {
    let grid = field.grid();
    let b = meta.binary_grids;
    let files = [
        grid_path(prefix, "mean", b),
        grid_path(prefix, "var", b),
        grid_path(prefix, "pin", b),
        path_with(prefix, ".field.meta"),
        path_with(prefix, ".C.bin"),
    ];
    write_grid(&files[0], grid, field.mean(), b)?;
    write_grid(&files[1], grid, field.variance(), b)?;
    write_grid(&files[2], grid, &field.p_inside_nodes(), b)?;
    std::fs::write(&files[3], meta.to_text()).map_err(|e| CliError::Input(format!("{}: {e}", files[3].display())))?;
    write_reduced(&files[4], field.reduced(), field.basis())?;
    Ok(files.to_vec())
}

/// Reloads a field saved with [`save_field`]. The basis is rebuilt and
/// checked against the stored mode list.
pub fn load_field(prefix: &Path) -> CliResult<(StochasticField, FieldMeta)> {
    let meta_path = path_with(prefix, ".field.meta");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| CliError::Input(format!("{}: {e}", meta_path.display())))?;
    let meta = FieldMeta::parse(&meta_path, &text)?;
    let (grid, mean) = read_grid(&grid_path(prefix, "mean", meta.binary_grids), meta.binary_grids)?;
    let (vgrid, variance) = read_grid(&grid_path(prefix, "var", meta.binary_grids), meta.binary_grids)?;
    if vgrid != grid {
        return Err(CliError::Input("mean and variance grids differ".into()));
    }
    let c_path = path_with(prefix, ".C.bin");
    let (c, modes) = read_reduced(&c_path)?;
    let basis = EigenBasis::build(&grid, modes.len())?;
    if basis.modes() != modes.as_slice() {
        return Err(CliError::Input(format!("{}: stored modes do not match the grid's basis", c_path.display())));
    }
    let field = StochasticField::from_parts(grid, mean, variance, meta.variance_shift, c, Arc::new(basis))?
        .with_joint_cap(meta.joint_cap);
    Ok((field, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_round_trips() {
        let meta = FieldMeta {
            sigma_g: 0.02,
            kernel_width: Some(0.013),
            sigma_n: 0.1,
            eigen_k: 63,
            prior: PriorSpec::Ellipsoid {
                center: Some(Vec3::new(0.1, -0.2, 0.3)),
                alpha: 0.05,
            },
            flip_sign: true,
            variance_shift: 1.5e-7,
            mean_shift: -0.25,
            samples: 12,
            joint_cap: 4096,
            binary_grids: true,
        };
        let text = meta.to_text();
        assert_eq!(FieldMeta::parse(Path::new("m"), &text).unwrap(), meta);
        assert!(text.contains("inside=f>0"));

        let zero = FieldMeta { prior: PriorSpec::Zero, kernel_width: None, ..meta };
        assert_eq!(FieldMeta::parse(Path::new("m"), &zero.to_text()).unwrap(), zero);
    }

    #[test]
    fn meta_errors_name_the_key() {
        let err = FieldMeta::parse(Path::new("m"), "format=spsr-field 1\n").unwrap_err();
        assert!(err.to_string().contains("missing key"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn reduced_factor_round_trips() {
        let grid = spsr::UniformGrid::planar(4, 3, [0.0, 0.0], 0.5).unwrap();
        let basis = EigenBasis::build(&grid, 5).unwrap();
        let c = DMatrix::from_fn(5, 5, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.C.bin");
        write_reduced(&path, &c, &basis).unwrap();
        let (back, modes) = read_reduced(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(modes, basis.modes());
    }
}
