//! Deterministic ray caster.

use rayon::prelude::*;

use super::geometry::{Placed, Ray, Vec3};
use super::{CameraConfig, Light, Material, SceneSpec};
use crate::error::{Error, Result};
use crate::image::{clamp_unit, RgbImage};

const MAX_DISTORTION: f64 = 0.5;
const EPS: f64 = 1e-6;

/// Sample positions in normalized image coordinates: the frame centre is the
/// origin and the frame corners sit at radius 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RayGrid {
    pub points: Vec<[f64; 2]>,
}

impl RayGrid {
    /// One point per pixel centre, row-major.
    pub fn pixel_centers(width: usize, height: usize) -> Self {
        let mut points = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                points.push(normalize(width, height, x as f64 + 0.5, y as f64 + 0.5));
            }
        }
        Self { points }
    }

    pub fn max_radius(&self) -> f64 {
        self.points.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
    }
}

fn normalize(width: usize, height: usize, px: f64, py: f64) -> [f64; 2] {
    let (hw, hh) = (width as f64 / 2.0, height as f64 / 2.0);
    let diag = hw.hypot(hh);
    [(px - hw) / diag, (hh - py) / diag]
}

/// Rejects coefficients outside ±0.5 or whose radial map folds over
/// somewhere in `r ∈ [0, 1]`.
pub(crate) fn check_distortion(k1: f64, k2: f64) -> Result<()> {
    if !(k1.abs() <= MAX_DISTORTION && k2.abs() <= MAX_DISTORTION) {
        return Err(Error::config(format!("distortion ({k1}, {k2}) exceeds ±{MAX_DISTORTION}")));
    }
    // d r'/d r = 1 + 3 k1 u + 5 k2 u², u = r² ∈ [0, 1]
    let slope = |u: f64| 1.0 + 3.0 * k1 * u + 5.0 * k2 * u * u;
    let mut min = slope(0.0).min(slope(1.0));
    if k2 > 0.0 {
        let u = -3.0 * k1 / (10.0 * k2);
        if (0.0..=1.0).contains(&u) {
            min = min.min(slope(u));
        }
    }
    if min <= 0.0 {
        return Err(Error::NonMonotoneDistortion { k1, k2 });
    }
    Ok(())
}

#[inline]
fn distort_point(p: [f64; 2], k1: f64, k2: f64) -> [f64; 2] {
    let r2 = p[0] * p[0] + p[1] * p[1];
    let f = 1.0 + k1 * r2 + k2 * r2 * r2;
    [p[0] * f, p[1] * f]
}

/// Radial warp `r' = r(1 + k1 r² + k2 r⁴)`.
pub fn apply_distortion(grid: &RayGrid, k1: f64, k2: f64) -> Result<RayGrid> {
    check_distortion(k1, k2)?;
    if grid.max_radius() > 1.0 + 1e-12 {
        return Err(Error::config("ray grid extends past the frame corners"));
    }
    Ok(RayGrid {
        points: grid.points.iter().map(|&p| distort_point(p, k1, k2)).collect(),
    })
}

/// Fixed subpixel pattern from the R2 low-discrepancy sequence.
fn subpixel_offsets(n: u32) -> Vec<[f64; 2]> {
    const A1: f64 = 0.754_877_666_246_692_7;
    const A2: f64 = 0.569_840_290_998_053_2;
    (0..n)
        .map(|i| {
            let i = f64::from(i);
            [(0.5 + A1 * i).fract(), (0.5 + A2 * i).fract()]
        })
        .collect()
}

struct Camera {
    origin: Vec3,
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    /// Image-plane half extent along the diagonal at unit depth.
    diag_scale: f64,
    width: usize,
    height: usize,
    distortion: Option<(f64, f64)>,
}

impl Camera {
    fn new(c: &CameraConfig) -> Self {
        let (sy, cy) = c.yaw_deg.to_radians().sin_cos();
        let (sp, cp) = c.pitch_deg.to_radians().sin_cos();
        let forward = Vec3::new(-sy * cp, sp, -cy * cp);
        let right = Vec3::new(cy, 0.0, -sy);
        let up = right.cross(forward);
        let tan = (c.fov_deg.to_radians() / 2.0).tan();
        let (hw, hh) = (c.width as f64 / 2.0, c.height as f64 / 2.0);
        Self {
            origin: Vec3(c.position),
            right,
            up,
            forward,
            diag_scale: tan * hw.hypot(hh) / hw,
            width: c.width,
            height: c.height,
            distortion: c.distortion,
        }
    }

    fn ray(&self, px: f64, py: f64) -> Ray {
        let mut p = normalize(self.width, self.height, px, py);
        if let Some((k1, k2)) = self.distortion {
            p = distort_point(p, k1, k2);
        }
        let dir = self.forward + self.right * (p[0] * self.diag_scale) + self.up * (p[1] * self.diag_scale);
        Ray {
            origin: self.origin,
            dir: dir.normalized(),
        }
    }
}

struct Plane {
    normal: Vec3,
    offset: f64,
    tangent: Vec3,
    bitangent: Vec3,
}

impl Plane {
    fn new(normal: [f64; 3], offset: f64) -> Self {
        let n = Vec3(normal);
        let len = n.length();
        let n = n * (1.0 / len);
        let helper = if n.y().abs() < 0.9 { Vec3::new(0.0, 1.0, 0.0) } else { Vec3::new(1.0, 0.0, 0.0) };
        let tangent = helper.cross(n).normalized();
        Self {
            normal: n,
            offset: offset / len,
            tangent,
            bitangent: n.cross(tangent),
        }
    }

    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        let denom = self.normal.dot(ray.dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.offset - self.normal.dot(ray.origin)) / denom;
        (t > t_min && t < t_max).then_some(t)
    }
}

enum Surface {
    Object(usize),
    Background(usize),
}

struct Hit {
    point: Vec3,
    normal: Vec3,
    uv: (f64, f64),
    surface: Surface,
}

struct World<'a> {
    spec: &'a SceneSpec,
    objects: Vec<Placed>,
    planes: Vec<Plane>,
    ambient: Vec3,
    points: Vec<(Vec3, Vec3)>,
    exposure: f64,
}

/// Box-projected surface coordinates, in world units.
fn object_uv(p: &Placed, local_point: Vec3, local_normal: Vec3) -> (f64, f64) {
    let w = local_point.mul_elem(p.scale);
    let n = local_normal.0.map(f64::abs);
    if n[0] >= n[1] && n[0] >= n[2] {
        (w.z(), w.y())
    } else if n[1] >= n[2] {
        (w.x(), w.z())
    } else {
        (w.x(), w.y())
    }
}

impl<'a> World<'a> {
    fn new(spec: &'a SceneSpec) -> Self {
        let mut ambient = Vec3::new(0.0, 0.0, 0.0);
        let mut points = Vec::new();
        let mut total = 0.0;
        for l in &spec.lights {
            match *l {
                Light::Ambient { intensity, color } => {
                    ambient = ambient + Vec3(color) * intensity;
                    total += intensity;
                }
                Light::Point { position, intensity, color } => {
                    points.push((Vec3(position), Vec3(color) * intensity));
                    total += 0.2 * intensity;
                }
            }
        }
        Self {
            spec,
            objects: spec.objects.iter().map(|o| Placed::new(o.shape, &o.transform)).collect(),
            planes: spec.background.iter().map(|b| Plane::new(b.normal, b.offset)).collect(),
            ambient,
            points,
            exposure: 1.0 / total.max(0.5),
        }
    }

    fn trace(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut t_max = f64::INFINITY;
        for (i, p) in self.objects.iter().enumerate() {
            if let Some(h) = p.intersect(ray, EPS, t_max) {
                t_max = h.t;
                best = Some(Hit {
                    point: ray.at(h.t),
                    normal: h.normal,
                    uv: object_uv(p, h.local_point, h.local_normal),
                    surface: Surface::Object(i),
                });
            }
        }
        for (i, pl) in self.planes.iter().enumerate() {
            if let Some(t) = pl.intersect(ray, EPS, t_max) {
                t_max = t;
                let point = ray.at(t);
                best = Some(Hit {
                    point,
                    normal: pl.normal,
                    uv: (point.dot(pl.tangent), point.dot(pl.bitangent)),
                    surface: Surface::Background(i),
                });
            }
        }
        best
    }

    fn occluded(&self, from: Vec3, to: Vec3) -> bool {
        let d = to - from;
        let dist = d.length();
        let ray = Ray {
            origin: from,
            dir: d * (1.0 / dist),
        };
        let t_max = dist - 1e-4;
        self.objects.iter().any(|p| p.intersect(&ray, 1e-4, t_max).is_some())
            || self.planes.iter().any(|p| p.intersect(&ray, 1e-4, t_max).is_some())
    }

    fn material(&self, s: &Surface) -> &Material {
        match *s {
            Surface::Object(i) => &self.spec.objects[i].material,
            Surface::Background(i) => &self.spec.background[i].material,
        }
    }

    fn shade(&self, ray: &Ray) -> Vec3 {
        let Some(hit) = self.trace(ray) else {
            return Vec3::new(0.0, 0.0, 0.0);
        };
        let mat = self.material(&hit.surface);
        let albedo = Vec3(mat.albedo(hit.uv.0, hit.uv.1));
        let view = -ray.dir;
        let n = if hit.normal.dot(view) < 0.0 { -hit.normal } else { hit.normal };
        let mut c = albedo.mul_elem(self.ambient);
        let gloss = 1.0 - mat.roughness;
        let shininess = 4.0 + 60.0 * gloss * gloss;
        let origin = hit.point + n * 1e-5;
        for &(pos, light) in &self.points {
            let l = (pos - hit.point).normalized();
            let ndl = n.dot(l);
            if ndl <= 0.0 || self.occluded(origin, pos) {
                continue;
            }
            let h = (l + view).normalized();
            let spec = gloss * n.dot(h).max(0.0).powf(shininess);
            // specular is tinted by albedo so black surfaces stay black
            c = c + albedo.mul_elem(light) * ((0.5 + 0.5 * mat.roughness) * ndl + spec);
        }
        c * self.exposure
    }
}

/// Renders the scene to a clamped linear RGB frame.
pub fn render(spec: &SceneSpec) -> RgbImage {
    let world = World::new(spec);
    let cam = Camera::new(&spec.camera);
    let offsets = subpixel_offsets(spec.camera.samples_per_pixel);
    let (w, h) = (spec.camera.width, spec.camera.height);
    let inv = 1.0 / offsets.len() as f64;
    let mut data = vec![0f32; w * h * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let mut acc = Vec3::new(0.0, 0.0, 0.0);
            for o in &offsets {
                let ray = cam.ray(x as f64 + o[0], y as f64 + o[1]);
                acc = acc + world.shade(&ray);
            }
            for c in 0..3 {
                row[x * 3 + c] = clamp_unit((acc.0[c] * inv) as f32);
            }
        }
    });
    RgbImage::new(w, h, data).expect("buffer sized from camera")
}
