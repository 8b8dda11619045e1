//! Simulated scans of meshes and planar curves from a cone camera.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::mesh::{Polyline, TriangleMesh};
use crate::Vec3;

/// A point camera shooting rays into a cone, with Gaussian noise on the
/// returned positions (`sigma_p`) and normals (`sigma_n`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    position: Vec3,
    direction: Vec3,
    half_angle: f64,
    sigma_p: f64,
    sigma_n: f64,
}

impl Camera {
    pub fn new(position: Vec3, direction: Vec3, half_angle: f64, sigma_p: f64, sigma_n: f64) -> Result<Self> {
        let len = direction.norm();
        if !(len > 0.0 && len.is_finite()) || !position.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("camera needs a finite position and a nonzero direction".into()));
        }
        if !(half_angle > 0.0 && half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!("cone half-angle {half_angle} must be in (0, pi/2)")));
        }
        if !(sigma_p >= 0.0 && sigma_n >= 0.0) {
            return Err(Error::InvalidArgument("noise levels must be nonnegative".into()));
        }
        Ok(Camera {
            position,
            direction: direction / len,
            half_angle,
            sigma_p,
            sigma_n,
        })
    }

    /// Noise-free camera.
    pub fn ideal(position: Vec3, direction: Vec3, half_angle: f64) -> Result<Self> {
        Self::new(position, direction, half_angle, 0.0, 0.0)
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    /// Direction uniform on the spherical cap of the cone.
    pub fn sample_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let d = self.direction;
        let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = d.cross(&helper).normalize();
        let v = d.cross(&u);
        let cos_t = 1.0 - rng.random::<f64>() * (1.0 - self.half_angle.cos());
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        (d * cos_t + (u * phi.cos() + v * phi.sin()) * sin_t).normalize()
    }

    /// Direction uniform in angle within the in-plane (`z = 0`) fan.
    pub fn sample_direction_planar<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let base = self.direction.y.atan2(self.direction.x);
        let a = base + (2.0 * rng.random::<f64>() - 1.0) * self.half_angle;
        Vec3::new(a.cos(), a.sin(), 0.0)
    }
}

/// Möller-Trumbore; distance along the (unit) ray, if any.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-12).then_some(t)
}

/// Ray against a planar segment; distance along the (unit) ray, if any.
pub fn ray_segment(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3) -> Option<f64> {
    let e = b - a;
    let det = dir.x * (-e.y) - dir.y * (-e.x);
    if det.abs() < 1e-14 * e.norm() {
        return None;
    }
    let r = a - origin;
    let t = (r.x * (-e.y) - r.y * (-e.x)) / det;
    let s = (dir.x * r.y - dir.y * r.x) / det;
    ((0.0..=1.0).contains(&s) && t > 1e-12).then_some(t)
}

fn noisy_sample(camera: &Camera, dir: &Vec3, hit: Vec3, normal: Vec3, planar: bool, rng: &mut ChaCha8Rng) -> (Vec3, Vec3) {
    let mut n = normal.normalize();
    if n.dot(dir) > 0.0 {
        n = -n;
    }
    let axes = if planar { 2 } else { 3 };
    let mut p = hit;
    if camera.sigma_p > 0.0 {
        let g = Normal::new(0.0, camera.sigma_p).expect("validated");
        for a in 0..axes {
            p[a] += g.sample(rng);
        }
    }
    if camera.sigma_n > 0.0 {
        let g = Normal::new(0.0, camera.sigma_n).expect("validated");
        for _ in 0..8 {
            let mut m = n;
            for a in 0..axes {
                m[a] += g.sample(rng);
            }
            if m.norm() > 1e-12 {
                n = m.normalize();
                break;
            }
        }
    }
    (p, n)
}

fn collect(camera: &Camera, samples: Vec<Option<(Vec3, Vec3)>>) -> Result<OrientedPointCloud> {
    let (positions, normals): (Vec<Vec3>, Vec<Vec3>) = samples.into_iter().flatten().unzip();
    if positions.is_empty() {
        log::warn!("simulated scan produced no hits");
    }
    OrientedPointCloud::new(positions, normals, camera.sigma_n)
}

/// Casts `n` rays from `camera` into `mesh` and returns the noisy hits with
/// normals facing the camera. Ray `i` draws from its own stream of `seed`.
pub fn simulate_scan(mesh: &TriangleMesh, camera: &Camera, n: usize, seed: u64) -> Result<OrientedPointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one ray".into()));
    }
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let dir = camera.sample_direction(&mut rng);
            let o = camera.position;
            let nearest = mesh
                .triangles
                .iter()
                .enumerate()
                .filter_map(|(t, &[a, b, c])| {
                    ray_triangle(&o, &dir, &mesh.vertices[a], &mesh.vertices[b], &mesh.vertices[c]).map(|d| (d, t))
                })
                .min_by(|x, y| x.0.total_cmp(&y.0));
            nearest.map(|(d, t)| noisy_sample(camera, &dir, o + dir * d, mesh.face_normal(t), false, &mut rng))
        })
        .collect();
    collect(camera, samples)
}

/// Planar counterpart of [`simulate_scan`] for curves in the `z = 0` plane.
pub fn simulate_scan_2d(curves: &[Polyline], camera: &Camera, n: usize, seed: u64) -> Result<OrientedPointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one ray".into()));
    }
    let segments: Vec<(Vec3, Vec3)> = curves
        .iter()
        .flat_map(|c| {
            let m = c.points.len();
            let count = if c.closed && m > 2 { m } else { m.saturating_sub(1) };
            (0..count).map(move |i| (c.points[i], c.points[(i + 1) % m]))
        })
        .collect();
    let mut o = camera.position;
    o.z = 0.0;
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let dir = camera.sample_direction_planar(&mut rng);
            let nearest = segments
                .iter()
                .filter_map(|(a, b)| ray_segment(&o, &dir, a, b).map(|d| (d, b - a)))
                .min_by(|x, y| x.0.total_cmp(&y.0));
            nearest.map(|(d, e)| noisy_sample(camera, &dir, o + dir * d, Vec3::new(e.y, -e.x, 0.0), true, &mut rng))
        })
        .collect();
    collect(camera, samples)
}

/// Closed polygon approximating a circle, for examples and tests.
pub fn circle_polyline(center: Vec3, radius: f64, segments: usize) -> Polyline {
    Polyline {
        points: (0..segments)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / segments as f64;
                center + Vec3::new(radius * t.cos(), radius * t.sin(), 0.0)
            })
            .collect(),
        closed: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_validation() {
        assert!(Camera::ideal(Vec3::zeros(), Vec3::zeros(), 0.3).is_err());
        assert!(Camera::ideal(Vec3::zeros(), Vec3::x(), 0.0).is_err());
        assert!(Camera::ideal(Vec3::zeros(), Vec3::x(), 1.6).is_err());
        assert!(Camera::new(Vec3::zeros(), Vec3::x(), 0.3, -1.0, 0.0).is_err());
        let c = Camera::ideal(Vec3::zeros(), Vec3::new(0.0, 3.0, 4.0), 0.3).unwrap();
        assert!((c.direction().norm() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let d = c.sample_direction(&mut rng);
            assert!(d.dot(&c.direction()) >= 0.3f64.cos() - 1e-12);
        }
    }

    #[test]
    fn triangle_intersection() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        let t = ray_triangle(&Vec3::new(0.2, 0.2, 1.0), &-Vec3::z(), &a, &b, &c).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        assert!(ray_triangle(&Vec3::new(0.8, 0.8, 1.0), &-Vec3::z(), &a, &b, &c).is_none());
        assert!(ray_triangle(&Vec3::new(0.2, 0.2, 1.0), &Vec3::z(), &a, &b, &c).is_none());
    }

    #[test]
    fn sphere_scan_matches_analytic_sphere() {
        let mesh = TriangleMesh::uv_sphere(Vec3::zeros(), 1.0, 64, 128);
        let cam = Camera::ideal(Vec3::new(0.0, 0.0, 4.0), -Vec3::z(), 0.2).unwrap();
        let cloud = simulate_scan(&mesh, &cam, 500, 9).unwrap();
        assert_eq!(cloud.len(), 500);
        // a facet spans at most `step` radians, which bounds how far its
        // plane and normal can stray from the analytic sphere
        let step = std::f64::consts::PI / 64.0;
        for (p, n) in cloud.positions().iter().zip(cloud.normals()) {
            assert!(p.norm() <= 1.0 + 1e-12 && p.norm() > step.cos());
            assert!(p.z > 0.0);
            assert!(n.angle(&p.normalize()) < step);
        }
        let again = simulate_scan(&mesh, &cam, 500, 9).unwrap();
        assert_eq!(cloud, again);
    }

    #[test]
    fn inside_box_sees_facing_wall_only() {
        // unit cube, faces wound either way; normals are flipped to the camera anyway
        let v: Vec<Vec3> = (0..8).map(|c| Vec3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64)).collect();
        let quads = [[0, 2, 6, 4], [1, 3, 7, 5], [0, 1, 5, 4], [2, 3, 7, 6], [0, 1, 3, 2], [4, 5, 7, 6]];
        let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        let mesh = TriangleMesh { vertices: v, triangles };
        let cam = Camera::ideal(Vec3::repeat(0.5), Vec3::x(), 0.5).unwrap();
        let cloud = simulate_scan(&mesh, &cam, 300, 1).unwrap();
        assert_eq!(cloud.len(), 300);
        for (p, n) in cloud.positions().iter().zip(cloud.normals()) {
            assert!((p.x - 1.0).abs() < 1e-12);
            assert!((n + Vec3::x()).norm() < 1e-12);
        }
    }

    #[test]
    fn planar_scan_of_circle() {
        let circle = circle_polyline(Vec3::new(0.5, 0.5, 0.0), 0.3, 720);
        let cam = Camera::ideal(Vec3::new(1.5, 0.5, 0.0), -Vec3::x(), 0.2).unwrap();
        let cloud = simulate_scan_2d(&[circle], &cam, 200, 4).unwrap();
        assert_eq!(cloud.len(), 200);
        for (p, n) in cloud.positions().iter().zip(cloud.normals()) {
            let r = p - Vec3::new(0.5, 0.5, 0.0);
            assert!((r.norm() - 0.3).abs() < 1e-4);
            assert!(p.x > 0.5 && p.z == 0.0);
            assert!((n - r.normalize()).norm() < 0.01);
        }
        let away = Camera::ideal(Vec3::new(1.5, 0.5, 0.0), Vec3::x(), 0.2).unwrap();
        assert!(simulate_scan_2d(&[circle_polyline(Vec3::new(0.5, 0.5, 0.0), 0.3, 64)], &away, 10, 0).unwrap().is_empty());
    }

    #[test]
    fn noise_is_applied_and_normals_stay_unit() {
        let circle = circle_polyline(Vec3::new(0.5, 0.5, 0.0), 0.3, 360);
        let cam = Camera::new(Vec3::new(1.5, 0.5, 0.0), -Vec3::x(), 0.2, 0.01, 0.1).unwrap();
        let cloud = simulate_scan_2d(&[circle], &cam, 2000, 4).unwrap();
        let spread = cloud.positions().iter().map(|p| ((p - Vec3::new(0.5, 0.5, 0.0)).norm() - 0.3).powi(2)).sum::<f64>() / cloud.len() as f64;
        assert!(spread.sqrt() > 0.005 && spread.sqrt() < 0.02);
        assert!(cloud.normals().iter().all(|n| (n.norm() - 1.0).abs() < 1e-12 && n.z == 0.0));
        assert_eq!(cloud.noise_sigma(), 0.1);
    }
}
