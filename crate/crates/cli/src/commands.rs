//! The subcommands. Each reads its inputs, calls into the library and
//! reports `key=value` lines on `out`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use spsr::apps::camera::mean_normal;
use spsr::apps::{camera_score, mh_repair, simulate_scan, simulate_scan_2d, Camera};
use spsr::mesh::{read_polylines_obj, write_polylines_obj};
use spsr::queries::{extract_levelset, region_collision_probability, ConfidenceLevel, LevelSet, RegionSamples};
use spsr::{OrientedPointCloud, PriorSpec, ReconstructionConfig, Reconstructor, StochasticField, TriangleMesh, UniformGrid, Vec3};

use crate::error::{CliError, CliResult};
use crate::formats::{read_cloud, read_points, write_xyzn};
use crate::store::{load_field, parse_vec3, save_field, FieldMeta};
use crate::{
    CameraArgs, CollideArgs, LevelsetArgs, LevelsetSource, NextViewArgs, PriorKind, QueryArgs, QueryKind,
    ReconstructArgs, RepairArgs, ScanArgs,
};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn usage_vec(flag: &str, s: &str) -> CliResult<Vec3> {
    parse_vec3(s).map_err(|m| CliError::Usage(format!("--{flag}: {m}")))
}

fn prior_spec(a: &ReconstructArgs) -> CliResult<PriorSpec> {
    let center = a.prior_center.as_deref().map(|s| usage_vec("prior-center", s)).transpose()?;
    Ok(match a.prior {
        PriorKind::Zero => {
            if center.is_some() {
                log::warn!("--prior-center ignored with the zero prior");
            }
            PriorSpec::Zero
        }
        PriorKind::Sphere => PriorSpec::Sphere { center, alpha: a.alpha },
        PriorKind::Ellipsoid => PriorSpec::Ellipsoid { center, alpha: a.alpha },
    })
}

pub fn reconstruct(a: &ReconstructArgs, out: &mut dyn Write) -> CliResult<()> {
    let loaded = read_cloud(&a.input)?;
    let cloud = loaded.cloud.with_noise_sigma(a.sigma_n);
    let grid = UniformGrid::fit_to_points(cloud.positions(), a.resolution, a.padding, loaded.planar)?;
    let config = ReconstructionConfig {
        sigma_g: a.sigma_g,
        kernel_width: a.kernel_width,
        eigen_k: a.eigen_k,
        prior: prior_spec(a)?,
        flip_sign: a.flip_sign,
        ..Default::default()
    };
    let reconstructor = Reconstructor::new(grid, config)?;
    let r = reconstructor.reconstruct(&cloud)?;
    let cfg = reconstructor.config();
    let meta = FieldMeta {
        sigma_g: cfg.sigma_g,
        kernel_width: cfg.kernel_width,
        sigma_n: a.sigma_n,
        eigen_k: cfg.eigen_k,
        prior: cfg.prior,
        flip_sign: cfg.flip_sign,
        variance_shift: r.field.variance_shift(),
        mean_shift: r.mean_shift,
        samples: cloud.len(),
        joint_cap: r.field.joint_cap(),
        binary_grids: a.binary_grids,
    };
    let files = save_field(&a.output, &r.field, &meta)?;
    for f in &files {
        log::info!("wrote {}", f.display());
    }
    writeln!(out, "total_uncertainty={}", r.field.total_uncertainty_grid())?;
    writeln!(out, "eigen_k={}", cfg.eigen_k)?;
    writeln!(out, "cg_iterations={}", r.solve.iterations)?;
    writeln!(out, "variance_shift={}", r.field.variance_shift())?;
    Ok(())
}

/// Values of one query at one point: `value` or `value,lo,hi`. Points
/// outside the grid give NaN.
pub fn query_row(field: &StochasticField, p: &Vec3, what: QueryKind) -> Vec<f64> {
    let level = match what {
        QueryKind::Inside => return vec![field.p_inside(p).unwrap_or(f64::NAN)],
        QueryKind::Surface => return vec![field.surface_density(p).unwrap_or(f64::NAN)],
        QueryKind::Ci68 => ConfidenceLevel::P68,
        QueryKind::Ci95 => ConfidenceLevel::P95,
        QueryKind::Ci997 => ConfidenceLevel::P997,
    };
    match (field.mean_at(p), field.confidence_interval(p, level)) {
        (Ok(mu), Ok(ci)) => vec![mu, ci.lo, ci.hi],
        _ => vec![f64::NAN; 3],
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

pub fn query(a: &QueryArgs, out: &mut dyn Write) -> CliResult<()> {
    let (field, _) = load_field(&a.field)?;
    let points = read_points(&a.points)?;
    let mut outside = 0;
    let mut csv = String::new();
    for p in &points {
        if !field.grid().contains(p) {
            outside += 1;
        }
        let vals: Vec<String> = query_row(&field, p, a.what).iter().map(|v| fmt_value(*v)).collect();
        csv.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.z, vals.join(",")));
    }
    if outside > 0 {
        log::warn!("{outside} of {} points lie outside the grid", points.len());
    }
    let summary = format!("points={}\noutside={outside}\n", points.len());
    match &a.output {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(csv.as_bytes())?;
            w.flush()?;
            out.write_all(summary.as_bytes())?;
        }
        None => {
            out.write_all(csv.as_bytes())?;
            eprint!("{summary}");
        }
    }
    Ok(())
}

pub fn collide(a: &CollideArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let (field, _) = load_field(&a.field)?;
    let points = read_points(&a.region)?;
    let region = RegionSamples::new(field.grid(), points).map_err(|e| CliError::from(e).in_file(&a.region))?;
    let est = region_collision_probability(&field, &region, a.samples, seed)?;
    writeln!(out, "p_collision={} stderr={}", est.probability, est.std_error)?;
    Ok(())
}

pub fn repair(a: &RepairArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let (field, meta) = load_field(&a.field)?;
    let loaded = read_cloud(&a.cloud)?;
    let n = a.points.unwrap_or(loaded.cloud.len());
    let sigma = a.sigma_prop.unwrap_or(field.grid().spacing());
    let samples = mh_repair(&field, &loaded.cloud, n, a.steps, sigma, seed)?;
    let (mut positions, mut normals) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for p in samples {
        if let Some(nrm) = mean_normal(&field, &p, meta.flip_sign) {
            positions.push(p);
            normals.push(nrm);
        }
    }
    let dropped = n - positions.len();
    if dropped > 0 {
        log::warn!("{dropped} samples dropped: zero mean gradient");
    }
    let cloud = OrientedPointCloud::new(positions, normals, 0.0)?;
    write_xyzn(&a.output, &cloud, field.grid().is_planar())?;
    writeln!(out, "points={}", cloud.len())?;
    writeln!(out, "dropped={dropped}")?;
    Ok(())
}

fn camera(c: &CameraArgs) -> CliResult<Camera> {
    let position = usage_vec("position", &c.position)?;
    let direction = usage_vec("direction", &c.direction)?;
    Ok(Camera::new(position, direction, c.half_angle, c.sigma_p, c.sigma_n)?)
}

pub fn scan(a: &ScanArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let cam = camera(&a.camera)?;
    let text = std::fs::read_to_string(&a.mesh).map_err(|e| CliError::Input(format!("{}: {e}", a.mesh.display())))?;
    let planar = text.lines().any(|l| l.trim_start().starts_with("l "));
    let cloud = if planar {
        let curves = read_polylines_obj(text.as_bytes()).map_err(|e| CliError::from(e).in_file(&a.mesh))?;
        simulate_scan_2d(&curves, &cam, a.rays, seed)?
    } else {
        let mesh = TriangleMesh::read_obj(text.as_bytes()).map_err(|e| CliError::from(e).in_file(&a.mesh))?;
        simulate_scan(&mesh, &cam, a.rays, seed)?
    };
    write_xyzn(&a.output, &cloud, planar)?;
    writeln!(out, "points={}", cloud.len())?;
    Ok(())
}

/// Candidate cameras, one per line: `px,py,pz,dx,dy,dz,half_angle` (or
/// `px,py,dx,dy,half_angle` in the plane).
pub fn read_cameras(path: &Path) -> CliResult<Vec<Camera>> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut cams = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |m: String| CliError::Input(format!("{}:{}: {m}", path.display(), i + 1));
        let v: Result<Vec<f64>, _> = content.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let v = match v {
            Ok(v) => v,
            Err(_) if cams.is_empty() && content.chars().any(|c| c.is_ascii_alphabetic()) => continue,
            Err(e) => return Err(bad(e.to_string())),
        };
        let (p, d, half) = match v.len() {
            7 => (Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]), v[6]),
            5 => (Vec3::new(v[0], v[1], 0.0), Vec3::new(v[2], v[3], 0.0), v[4]),
            n => return Err(bad(format!("expected 5 or 7 values, found {n}"))),
        };
        cams.push(Camera::ideal(p, d, half).map_err(|e| bad(e.to_string()))?);
    }
    Ok(cams)
}

pub fn next_view(a: &NextViewArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let (field, meta) = load_field(&a.field)?;
    let cloud = read_cloud(&a.cloud)?.cloud.with_noise_sigma(meta.sigma_n);
    let cameras = read_cameras(&a.cameras)?;
    let reconstructor = Reconstructor::new(field.grid().clone(), meta.config())?;
    let mut csv = String::from("camera_id,score\n");
    for (i, cam) in cameras.iter().enumerate() {
        let s = camera_score(&reconstructor, &cloud, &field, cam, a.repeats, seed)?;
        csv.push_str(&format!("{i},{}\n", s.score));
    }
    match &a.output {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(csv.as_bytes())?;
            w.flush()?;
            writeln!(out, "cameras={}", cameras.len())?;
        }
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(())
}

pub fn levelset(a: &LevelsetArgs, out: &mut dyn Write) -> CliResult<()> {
    let (field, _) = load_field(&a.field)?;
    let (values, iso) = match a.of {
        LevelsetSource::Mean => (field.mean().to_vec(), a.iso.unwrap_or(0.0)),
        LevelsetSource::Pin => (field.p_inside_nodes(), a.iso.unwrap_or(0.5)),
    };
    let set = extract_levelset(field.grid(), &values, iso);
    let mut w = create(&a.output)?;
    match &set {
        LevelSet::Curves(c) => {
            write_polylines_obj(c, &mut w)?;
            writeln!(out, "curves={}", c.len())?;
        }
        LevelSet::Surface(m) => {
            m.write_obj(&mut w)?;
            writeln!(out, "vertices={}", m.vertices.len())?;
            writeln!(out, "triangles={}", m.triangles.len())?;
        }
    }
    w.flush()?;
    Ok(())
}
