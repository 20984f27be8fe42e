//! Ray-cast depth and grayscale rendering of posed chains.
//!
//! Links are capsules (segments swept by a sphere), which admit exact ray
//! intersections. One primary ray passes through each pixel center.

use std::io::Write;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use nalgebra::{Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainConfig, LinkColor, LinkPoses};
use crate::error::{invalid, Result};

pub const DEFAULT_CAPSULE_RADIUS: f64 = 0.05;

/// Pinhole camera. `fov_y` is the full vertical field of view in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Point3<f64>,
    pub look_at: Point3<f64>,
    pub up: Vector3<f64>,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

/// Orthonormal camera frame: `right × up = -forward`.
#[derive(Clone, Copy, Debug)]
struct Basis {
    forward: Vector3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    tan_x: f64,
    tan_y: f64,
}

/// A point projected into continuous pixel coordinates.
///
/// Pixel `(r, c)` covers `[r, r + 1) × [c, c + 1)`; the principal point is
/// `(height / 2, width / 2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImagePoint {
    pub row: f64,
    pub col: f64,
    /// Euclidean distance from the camera center.
    pub depth: f64,
}

impl ImagePoint {
    pub fn inside(&self, cam: &Camera) -> bool {
        self.row >= 0.0
            && self.row <= cam.height as f64
            && self.col >= 0.0
            && self.col <= cam.width as f64
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir.into_inner() * t
    }
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0) || !(self.far > self.near) {
            return Err(invalid(format!(
                "camera clip range [{}, {}] is invalid",
                self.near, self.far
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("camera resolution must be at least 1x1"));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(invalid(format!("fov_y {} outside (0, pi)", self.fov_y)));
        }
        let forward = self.look_at - self.position;
        if forward.norm() == 0.0 || forward.cross(&self.up).norm() < 1e-12 {
            return Err(invalid("camera look direction is degenerate"));
        }
        Ok(())
    }

    fn basis(&self) -> Basis {
        let forward = (self.look_at - self.position).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        let tan_y = (self.fov_y / 2.0).tan();
        let tan_x = tan_y * self.width as f64 / self.height as f64;
        Basis {
            forward,
            right,
            up,
            tan_x,
            tan_y,
        }
    }

    /// Ray through the center of pixel `(row, col)`.
    pub fn pixel_ray(&self, row: usize, col: usize) -> Ray {
        self.basis().pixel_ray(self, row, col)
    }

    /// Projects a world point; `None` when it is not in front of the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<ImagePoint> {
        let b = self.basis();
        let v = p - self.position;
        let z = v.dot(&b.forward);
        if z <= 0.0 {
            return None;
        }
        let u = v.dot(&b.right) / z;
        let w = v.dot(&b.up) / z;
        Some(ImagePoint {
            row: (1.0 - w / b.tan_y) * self.height as f64 / 2.0,
            col: (u / b.tan_x + 1.0) * self.width as f64 / 2.0,
            depth: v.norm(),
        })
    }
}

impl Basis {
    fn pixel_ray(&self, cam: &Camera, row: usize, col: usize) -> Ray {
        let u = ((col as f64 + 0.5) / cam.width as f64 * 2.0 - 1.0) * self.tan_x;
        let v = (1.0 - (row as f64 + 0.5) / cam.height as f64 * 2.0) * self.tan_y;
        Ray {
            origin: cam.position,
            dir: Unit::new_normalize(self.forward + self.right * u + self.up * v),
        }
    }
}

/// Ring of cameras around the chain root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigParams {
    pub count: usize,
    /// Ring radius in meters.
    pub radius: f64,
    /// Camera height above the articulation plane in meters.
    pub height: f64,
    pub target: [f64; 3],
    pub fov_y: f64,
    pub width: usize,
    pub height_px: usize,
    pub near: f64,
    pub far: f64,
}

/// Vertical field of view of the default rig (radians). Wide enough that any
/// normalized chain stays in frame for every camera.
pub const DEFAULT_FOV_Y: f64 = 66.0 * std::f64::consts::PI / 180.0;

impl Default for RigParams {
    fn default() -> Self {
        RigParams {
            count: 8,
            radius: 4.0,
            height: 1.5,
            target: [0.75, 0.0, 0.0],
            fov_y: DEFAULT_FOV_Y,
            width: 128,
            height_px: 96,
            near: 0.1,
            far: 10.0,
        }
    }
}

impl RigParams {
    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height_px = height;
        self
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let mut cams = default_rig(self.count, self.radius, self.height, self.width, self.height_px)?;
        let target = Point3::from(self.target);
        for cam in &mut cams {
            cam.look_at = target;
            cam.fov_y = self.fov_y;
            cam.near = self.near;
            cam.far = self.far;
            cam.validate()?;
        }
        Ok(cams)
    }
}

/// `count` cameras evenly spaced in azimuth on a circle of `radius` at `height`
/// above the root, the first on the +x axis, all aimed at the default target.
pub fn default_rig(
    count: usize,
    radius: f64,
    height: f64,
    img_w: usize,
    img_h: usize,
) -> Result<Vec<Camera>> {
    if count == 0 {
        return Err(invalid("a rig needs at least one camera"));
    }
    if !(radius > 0.0) {
        return Err(invalid(format!("rig radius {radius} must be positive")));
    }
    let defaults = RigParams::default();
    let target = Point3::from(defaults.target);
    (0..count)
        .map(|k| {
            let azimuth = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let cam = Camera {
                position: Point3::new(radius * azimuth.cos(), radius * azimuth.sin(), height),
                look_at: target,
                up: Vector3::z(),
                fov_y: defaults.fov_y,
                width: img_w,
                height: img_h,
                near: defaults.near,
                far: defaults.far,
            };
            cam.validate()?;
            Ok(cam)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Capsule {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
    pub color: LinkColor,
}

/// Horizontal plane `z = height`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub height: f64,
    pub luma: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scene {
    pub capsules: Vec<Capsule>,
    pub ground: Option<GroundPlane>,
}

impl Scene {
    /// One capsule per link of a posed chain.
    pub fn from_poses(
        poses: &LinkPoses,
        config: &ChainConfig,
        radius: f64,
        ground: Option<GroundPlane>,
    ) -> Scene {
        let capsules = poses
            .segments()
            .zip(config.colors())
            .map(|((a, b), &color)| Capsule {
                a,
                b,
                radius,
                color,
            })
            .collect();
        Scene { capsules, ground }
    }
}

/// What a ray hit first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surface {
    Capsule(usize),
    Ground,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    /// Outward unit normal at the hit point.
    pub normal: Vector3<f64>,
    pub surface: Surface,
}

/// Nearest entry of `ray` into the capsule with `t` in `[t_min, t_max)`.
pub fn ray_capsule(ray: &Ray, cap: &Capsule, t_min: f64, t_max: f64) -> Option<(f64, Vector3<f64>)> {
    let d = ray.dir.into_inner();
    let ba = cap.b - cap.a;
    let baba = ba.dot(&ba);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    let mut consider = |t: f64, normal: Vector3<f64>| {
        if t >= t_min && t < t_max && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, normal));
        }
    };

    if baba > 1e-24 {
        // lateral surface of the finite cylinder
        let oa = ray.origin - cap.a;
        let bard = ba.dot(&d);
        let baoa = ba.dot(&oa);
        let qa = baba - bard * bard;
        if qa > 1e-12 * baba {
            let qb = baba * d.dot(&oa) - baoa * bard;
            let qc = baba * oa.dot(&oa) - baoa * baoa - cap.radius * cap.radius * baba;
            let h = qb * qb - qa * qc;
            if h >= 0.0 {
                let t = (-qb - h.sqrt()) / qa;
                let y = baoa + t * bard;
                if y > 0.0 && y < baba {
                    let p = ray.at(t);
                    let axis_point = cap.a + ba * (y / baba);
                    consider(t, (p - axis_point) / cap.radius);
                }
            }
        }
    }
    for center in [cap.a, cap.b] {
        if let Some(t) = ray_sphere(ray, &center, cap.radius) {
            consider(t, (ray.at(t) - center) / cap.radius);
        }
        if baba <= 1e-24 {
            break;
        }
    }
    best
}

fn ray_sphere(ray: &Ray, center: &Point3<f64>, radius: f64) -> Option<f64> {
    let oc = ray.origin - center;
    let b = oc.dot(&ray.dir);
    let c = oc.dot(&oc) - radius * radius;
    let h = b * b - c;
    (h >= 0.0).then(|| -b - h.sqrt())
}

fn ray_ground(ray: &Ray, ground: &GroundPlane, t_min: f64, t_max: f64) -> Option<f64> {
    let dz = ray.dir.z;
    if dz >= 0.0 {
        return None;
    }
    let t = (ground.height - ray.origin.z) / dz;
    (t >= t_min && t < t_max).then_some(t)
}

/// First hit along `ray` within the camera clip range, checking every primitive.
pub fn trace(scene: &Scene, ray: &Ray, near: f64, far: f64) -> Option<Hit> {
    let mut best = scene.ground.as_ref().and_then(|g| {
        ray_ground(ray, g, near, far).map(|t| Hit {
            t,
            normal: Vector3::z(),
            surface: Surface::Ground,
        })
    });
    for (i, cap) in scene.capsules.iter().enumerate() {
        let limit = best.map_or(far, |h| h.t);
        if let Some((t, normal)) = ray_capsule(ray, cap, near, limit) {
            best = Some(Hit {
                t,
                normal,
                surface: Surface::Capsule(i),
            });
        }
    }
    best
}

/// Row-major single-channel `f32` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: f32) -> Image {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Binary PGM (P5, maxval 255) with `[lo, hi]` mapped linearly onto `[0, 255]`.
    pub fn to_pgm(&self, lo: f32, hi: f32) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        let span = if hi > lo { hi - lo } else { 1.0 };
        out.extend(self.data.iter().map(|&v| {
            let x = ((v - lo) / span).clamp(0.0, 1.0) * 255.0;
            x.round() as u8
        }));
        out
    }

    pub fn write_pgm(&self, path: &Path, lo: f32, hi: f32) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm(lo, hi))?;
        Ok(())
    }
}

/// Distance along each pixel ray to the first surface; misses hold `far`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage(pub Image);

/// Shaded luma in `[0, 1]`; background is white.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage(pub Image);

impl Deref for DepthImage {
    type Target = Image;
    fn deref(&self) -> &Image {
        &self.0
    }
}

impl DerefMut for DepthImage {
    fn deref_mut(&mut self) -> &mut Image {
        &mut self.0
    }
}

impl Deref for GrayImage {
    type Target = Image;
    fn deref(&self) -> &Image {
        &self.0
    }
}

impl DerefMut for GrayImage {
    fn deref_mut(&mut self) -> &mut Image {
        &mut self.0
    }
}

/// Grayscale shading parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lighting {
    /// Unit direction pointing towards the light.
    pub direction: [f64; 3],
    pub ambient: f64,
}

impl Default for Lighting {
    fn default() -> Self {
        let d = Vector3::new(0.3, -0.2, 1.0).normalize();
        Lighting {
            direction: [d.x, d.y, d.z],
            ambient: 0.15,
        }
    }
}

/// Inclusive pixel rectangle `(row0, row1, col0, col1)`.
type PixelRect = (usize, usize, usize, usize);

/// Conservative screen-space bounds of a capsule, or the whole image when the
/// capsule reaches behind the camera.
fn capsule_rect(cam: &Camera, basis: &Basis, cap: &Capsule) -> PixelRect {
    let full = (0, cam.height - 1, 0, cam.width - 1);
    let r = cap.radius;
    let mut corners = Vec::with_capacity(16);
    for p in [cap.a, cap.b] {
        let v = p - cam.position;
        let (x, y, z) = (v.dot(&basis.right), v.dot(&basis.up), v.dot(&basis.forward));
        if z - r <= 1e-6 {
            return full;
        }
        for sx in [-r, r] {
            for sy in [-r, r] {
                for sz in [-r, r] {
                    corners.push(((x + sx) / (z + sz), (y + sy) / (z + sz)));
                }
            }
        }
    }
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (u, v) in corners {
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let (w, h) = (cam.width as f64, cam.height as f64);
    // pixel center u(col) = ((col + 0.5) / w * 2 - 1) tan_x, v(row) = (1 - (row + 0.5) / h * 2) tan_y
    let col_lo = ((umin / basis.tan_x + 1.0) * w / 2.0 - 0.5).floor() - 1.0;
    let col_hi = ((umax / basis.tan_x + 1.0) * w / 2.0 - 0.5).ceil() + 1.0;
    let row_lo = ((1.0 - vmax / basis.tan_y) * h / 2.0 - 0.5).floor() - 1.0;
    let row_hi = ((1.0 - vmin / basis.tan_y) * h / 2.0 - 0.5).ceil() + 1.0;
    if col_hi < 0.0 || row_hi < 0.0 || col_lo > w - 1.0 || row_lo > h - 1.0 {
        return (1, 0, 1, 0);
    }
    let clamp = |x: f64, hi: f64| x.clamp(0.0, hi) as usize;
    (
        clamp(row_lo, h - 1.0),
        clamp(row_hi, h - 1.0),
        clamp(col_lo, w - 1.0),
        clamp(col_hi, w - 1.0),
    )
}

/// First hit for every pixel, row-major.
///
/// Capsules are only tested against pixels inside their conservative screen
/// bounds; per pixel the primitives are visited in the same order as
/// [`trace`], so the result is identical to tracing every pixel against
/// every primitive.
pub fn trace_image(scene: &Scene, cam: &Camera) -> Vec<Option<Hit>> {
    let basis = cam.basis();
    let (w, h) = (cam.width, cam.height);
    let mut hits: Vec<Option<Hit>> = vec![None; w * h];
    if let Some(ground) = &scene.ground {
        for row in 0..h {
            for col in 0..w {
                let ray = basis.pixel_ray(cam, row, col);
                hits[row * w + col] = ray_ground(&ray, ground, cam.near, cam.far).map(|t| Hit {
                    t,
                    normal: Vector3::z(),
                    surface: Surface::Ground,
                });
            }
        }
    }
    for (i, cap) in scene.capsules.iter().enumerate() {
        let (r0, r1, c0, c1) = capsule_rect(cam, &basis, cap);
        if r0 > r1 || c0 > c1 {
            continue;
        }
        for row in r0..=r1 {
            for col in c0..=c1 {
                let slot = &mut hits[row * w + col];
                let limit = slot.map_or(cam.far, |hit| hit.t);
                let ray = basis.pixel_ray(cam, row, col);
                if let Some((t, normal)) = ray_capsule(&ray, cap, cam.near, limit) {
                    *slot = Some(Hit {
                        t,
                        normal,
                        surface: Surface::Capsule(i),
                    });
                }
            }
        }
    }
    hits
}

fn depth_from_hits(cam: &Camera, hits: &[Option<Hit>]) -> DepthImage {
    DepthImage(Image {
        width: cam.width,
        height: cam.height,
        data: hits
            .iter()
            .map(|h| h.map_or(cam.far, |h| h.t) as f32)
            .collect(),
    })
}

fn gray_from_hits(scene: &Scene, cam: &Camera, hits: &[Option<Hit>], light: &Lighting) -> GrayImage {
    let l = Vector3::from(light.direction);
    GrayImage(Image {
        width: cam.width,
        height: cam.height,
        data: hits
            .iter()
            .map(|h| match h {
                None => 1.0,
                Some(hit) => {
                    let luma = match hit.surface {
                        Surface::Capsule(i) => scene.capsules[i].color.luma(),
                        Surface::Ground => scene.ground.map_or(0.0, |g| g.luma),
                    };
                    (luma * hit.normal.dot(&l).max(0.0) + light.ambient).clamp(0.0, 1.0) as f32
                }
            })
            .collect(),
    })
}

pub fn render_depth(scene: &Scene, cam: &Camera) -> DepthImage {
    depth_from_hits(cam, &trace_image(scene, cam))
}

pub fn render_gray(scene: &Scene, cam: &Camera, light: &Lighting) -> GrayImage {
    gray_from_hits(scene, cam, &trace_image(scene, cam), light)
}

/// Depth and grayscale from a single tracing pass.
pub fn render_views(scene: &Scene, cam: &Camera, light: &Lighting) -> (DepthImage, GrayImage) {
    let hits = trace_image(scene, cam);
    (depth_from_hits(cam, &hits), gray_from_hits(scene, cam, &hits, light))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{forward_kinematics, sample_config, JointState};
    use crate::seeded_rng;
    use rand::Rng;

    fn axis_camera(width: usize, height: usize) -> Camera {
        Camera {
            position: Point3::new(0.0, 0.0, 0.0),
            look_at: Point3::new(5.0, 0.0, 0.0),
            up: Vector3::z(),
            fov_y: 1.0,
            width,
            height,
            near: 0.1,
            far: 10.0,
        }
    }

    fn sphere(center: Point3<f64>, radius: f64, color: LinkColor) -> Capsule {
        Capsule {
            a: center,
            b: center,
            radius,
            color,
        }
    }

    fn random_chain_scene(seed: u64) -> Scene {
        let mut rng = seeded_rng(seed);
        let n = rng.gen_range(1..=6);
        let cfg = sample_config(&mut rng, n).unwrap();
        let angles = (0..n).map(|_| rng.gen_range(-2.5..2.5)).collect();
        let poses = forward_kinematics(&cfg, &JointState::new(angles)).unwrap();
        Scene::from_poses(&poses, &cfg, DEFAULT_CAPSULE_RADIUS, None)
    }

    #[test]
    fn rig_spacing_and_target() {
        let rig = default_rig(8, 4.0, 1.5, 128, 96).unwrap();
        assert_eq!(rig.len(), 8);
        for k in 0..8 {
            let a = rig[k].position.y.atan2(rig[k].position.x);
            let b = rig[(k + 1) % 8].position.y.atan2(rig[(k + 1) % 8].position.x);
            let diff = (b - a).rem_euclid(2.0 * std::f64::consts::PI);
            assert!((diff - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
            assert_eq!(rig[k].look_at, rig[0].look_at);
        }
        let single = default_rig(1, 4.0, 1.5, 128, 96).unwrap();
        assert!((single[0].position.x - 4.0).abs() < 1e-12 && single[0].position.y.abs() < 1e-12);
        assert!(default_rig(8, 0.0, 1.5, 128, 96).is_err());
        assert!(default_rig(0, 4.0, 1.5, 128, 96).is_err());
    }

    #[test]
    fn projection_geometry() {
        let cam = axis_camera(64, 48);
        let on_axis = cam.project(&Point3::new(3.0, 0.0, 0.0)).unwrap();
        assert!((on_axis.row - 24.0).abs() < 1e-12 && (on_axis.col - 32.0).abs() < 1e-12);
        assert!((on_axis.depth - 3.0).abs() < 1e-12);
        assert!(cam.project(&Point3::new(-1.0, 0.2, 0.0)).is_none());
        let half = cam.fov_y / 2.0;
        let top = cam
            .project(&Point3::new(2.0 * half.cos(), 0.0, 2.0 * half.sin()))
            .unwrap();
        assert!(top.row.abs() < 1e-9, "row {}", top.row);
        assert!((top.depth - 2.0).abs() < 1e-12);
    }

    #[test]
    fn camera_validation() {
        let mut cam = axis_camera(4, 4);
        cam.near = 0.0;
        assert!(cam.validate().is_err());
        let mut cam = axis_camera(4, 4);
        cam.fov_y = std::f64::consts::PI;
        assert!(cam.validate().is_err());
        let mut cam = axis_camera(4, 4);
        cam.up = Vector3::x();
        assert!(cam.validate().is_err());
    }

    #[test]
    fn empty_scene_misses_everywhere() {
        let cam = axis_camera(16, 12);
        let depth = render_depth(&Scene::default(), &cam);
        assert!(depth.data.iter().all(|&d| d == cam.far as f32));
        let gray = render_gray(&Scene::default(), &cam, &Lighting::default());
        assert!(gray.data.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn sphere_on_axis() {
        let cam = axis_camera(65, 49);
        let scene = Scene {
            capsules: vec![sphere(Point3::new(4.0, 0.0, 0.0), 0.3, LinkColor::Red)],
            ground: None,
        };
        let depth = render_depth(&scene, &cam);
        assert!((f64::from(depth.at(24, 32)) - 3.7).abs() < 1e-6);
    }

    #[test]
    fn black_links_render_black() {
        let cam = axis_camera(33, 25);
        let scene = Scene {
            capsules: vec![sphere(Point3::new(4.0, 0.0, 0.0), 0.5, LinkColor::Black)],
            ground: None,
        };
        let light = Lighting {
            ambient: 0.0,
            ..Lighting::default()
        };
        let (depth, gray) = render_views(&scene, &cam, &light);
        let mut hits = 0;
        for (d, g) in depth.data.iter().zip(&gray.data) {
            if *d < cam.far as f32 {
                assert_eq!(*g, 0.0);
                hits += 1;
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn gray_and_depth_masks_agree() {
        let rig = RigParams::default().with_resolution(64, 48).cameras().unwrap();
        let light = Lighting::default();
        for seed in 0..20 {
            let mut scene = random_chain_scene(seed);
            // luma + ambient < 1 for every link, so hits never reach white
            for cap in &mut scene.capsules {
                cap.color = LinkColor::Blue;
            }
            for cam in &rig {
                let depth = render_depth(&scene, cam);
                let gray = render_gray(&scene, cam, &light);
                let (d2, g2) = render_views(&scene, cam, &light);
                assert_eq!(depth, d2);
                assert_eq!(gray, g2);
                for (d, g) in depth.data.iter().zip(&gray.data) {
                    let hit = *d < cam.far as f32;
                    assert_eq!(hit, *g < 1.0);
                    assert!((0.0..=1.0).contains(g));
                }
            }
        }
    }

    #[test]
    fn culling_matches_brute_force() {
        let rig = RigParams::default().with_resolution(64, 48).cameras().unwrap();
        for seed in 0..30 {
            let mut scene = random_chain_scene(seed);
            if seed % 3 == 0 {
                scene.ground = Some(GroundPlane {
                    height: -0.05,
                    luma: 0.5,
                });
            }
            for cam in &rig {
                let fast = trace_image(&scene, cam);
                for row in 0..cam.height {
                    for col in 0..cam.width {
                        let slow = trace(&scene, &cam.pixel_ray(row, col), cam.near, cam.far);
                        assert_eq!(fast[row * cam.width + col], slow, "pixel ({row}, {col})");
                    }
                }
            }
        }
    }

    #[test]
    fn adding_primitives_never_increases_depth() {
        let rig = RigParams::default().with_resolution(64, 48).cameras().unwrap();
        let mut rng = seeded_rng(4);
        for seed in 0..10 {
            let mut scene = random_chain_scene(seed);
            let before: Vec<DepthImage> = rig.iter().map(|c| render_depth(&scene, c)).collect();
            scene.capsules.push(Capsule {
                a: Point3::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..1.0), 0.0),
                b: Point3::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..1.0), 0.3),
                radius: 0.1,
                color: LinkColor::Blue,
            });
            for (cam, old) in rig.iter().zip(&before) {
                let new = render_depth(&scene, cam);
                assert!(new.data.iter().zip(&old.data).all(|(n, o)| n <= o));
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let rig = RigParams::default().with_resolution(64, 48).cameras().unwrap();
        let scene = random_chain_scene(12);
        let a = render_views(&scene, &rig[3], &Lighting::default());
        let b = render_views(&scene, &rig[3], &Lighting::default());
        assert_eq!(a, b);
    }

    #[test]
    fn double_resolution_min_pools_to_single() {
        let lo_rig = RigParams::default().with_resolution(64, 48).cameras().unwrap();
        let hi_rig = RigParams::default().with_resolution(128, 96).cameras().unwrap();
        let (mut differing, mut total) = (0usize, 0usize);
        for seed in 0..10 {
            let scene = random_chain_scene(100 + seed);
            for (lo, hi) in lo_rig.iter().zip(&hi_rig) {
                let coarse = render_depth(&scene, lo);
                let fine = render_depth(&scene, hi);
                for r in 0..lo.height {
                    for c in 0..lo.width {
                        let pooled = [(0, 0), (0, 1), (1, 0), (1, 1)]
                            .iter()
                            .map(|(dr, dc)| fine.at(2 * r + dr, 2 * c + dc))
                            .fold(f32::MAX, f32::min);
                        if (pooled - coarse.at(r, c)).abs() > 0.05 {
                            differing += 1;
                        }
                        total += 1;
                    }
                }
            }
        }
        assert!(differing as f64 <= 0.02 * total as f64, "{differing} of {total}");
    }

    #[test]
    fn pgm_layout() {
        let img = Image {
            width: 3,
            height: 2,
            data: vec![0.1, 10.0, 5.05, 0.1, 0.1, 20.0],
        };
        let pgm = img.to_pgm(0.1, 10.0);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[0, 255, 128, 0, 0, 255]);
    }
}
