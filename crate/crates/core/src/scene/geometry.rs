//! Analytic primitives in their local frames.
//!
//! Every shape is intersected in object space with an unnormalized ray
//! direction, so the ray parameter `t` is shared with world space.

use std::ops::{Add, Mul, Neg, Sub};

use super::{Shape, Transform};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }
    #[inline]
    pub fn x(self) -> f64 {
        self.0[0]
    }
    #[inline]
    pub fn y(self) -> f64 {
        self.0[1]
    }
    #[inline]
    pub fn z(self) -> f64 {
        self.0[2]
    }
    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }
    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y() * o.z() - self.z() * o.y(),
            self.z() * o.x() - self.x() * o.z(),
            self.x() * o.y() - self.y() * o.x(),
        )
    }
    #[inline]
    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }
    #[inline]
    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.length())
    }
    #[inline]
    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x() * o.x(), self.y() * o.y(), self.z() * o.z())
    }
    #[inline]
    pub fn div_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x() / o.x(), self.y() / o.y(), self.z() / o.z())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x() + o.x(), self.y() + o.y(), self.z() + o.z())
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x() - o.x(), self.y() - o.y(), self.z() - o.z())
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x() * s, self.y() * s, self.z() * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

/// Row-major rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    /// `Rz · Ry · Rx` for angles in degrees.
    pub fn from_euler_deg(x: f64, y: f64, z: f64) -> Mat3 {
        let (sx, cx) = x.to_radians().sin_cos();
        let (sy, cy) = y.to_radians().sin_cos();
        let (sz, cz) = z.to_radians().sin_cos();
        Mat3([
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ])
    }

    #[inline]
    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x() + m[0][1] * v.y() + m[0][2] * v.z(),
            m[1][0] * v.x() + m[1][1] * v.y() + m[1][2] * v.z(),
            m[2][0] * v.x() + m[2][1] * v.y() + m[2][2] * v.z(),
        )
    }

    #[inline]
    pub fn apply_transposed(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x() + m[1][0] * v.y() + m[2][0] * v.z(),
            m[0][1] * v.x() + m[1][1] * v.y() + m[2][1] * v.z(),
            m[0][2] * v.x() + m[1][2] * v.y() + m[2][2] * v.z(),
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LocalHit {
    pub t: f64,
    pub normal: Vec3,
    pub point: Vec3,
}

pub const TORUS_MAJOR: f64 = 0.75;
pub const TORUS_MINOR: f64 = 0.25;

impl Shape {
    /// Radius of a sphere around the local origin enclosing the shape.
    pub fn bound_radius(self) -> f64 {
        match self {
            Shape::Sphere => 1.0,
            Shape::Box => 3f64.sqrt(),
            Shape::Cylinder | Shape::PlanePatch => 2f64.sqrt(),
            Shape::Torus => TORUS_MAJOR + TORUS_MINOR,
        }
    }

    pub fn intersect_local(self, ray: &Ray, t_min: f64, t_max: f64) -> Option<LocalHit> {
        match self {
            Shape::Sphere => sphere(ray, t_min, t_max),
            Shape::Box => cube(ray, t_min, t_max),
            Shape::Cylinder => cylinder(ray, t_min, t_max),
            Shape::PlanePatch => patch(ray, t_min, t_max),
            Shape::Torus => torus(ray, t_min, t_max),
        }
    }
}

fn hit(ray: &Ray, t: f64, normal: Vec3) -> LocalHit {
    LocalHit {
        t,
        normal,
        point: ray.at(t),
    }
}

/// Roots of `a t² + 2 b t + c` in ascending order.
fn quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

fn sphere(ray: &Ray, t_min: f64, t_max: f64) -> Option<LocalHit> {
    let (o, d) = (ray.origin, ray.dir);
    let (t0, t1) = quadratic(d.dot(d), o.dot(d), o.dot(o) - 1.0)?;
    [t0, t1]
        .into_iter()
        .find(|&t| t > t_min && t < t_max)
        .map(|t| hit(ray, t, ray.at(t)))
}

fn cube(ray: &Ray, t_min: f64, t_max: f64) -> Option<LocalHit> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut ax0, mut ax1) = (0, 0);
    for ax in 0..3 {
        let (o, d) = (ray.origin.0[ax], ray.dir.0[ax]);
        if d.abs() < 1e-15 {
            if o.abs() > 1.0 {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((-1.0 - o) / d, (1.0 - o) / d);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        if a > t0 {
            t0 = a;
            ax0 = ax;
        }
        if b < t1 {
            t1 = b;
            ax1 = ax;
        }
        if t0 > t1 {
            return None;
        }
    }
    let (t, ax) = if t0 > t_min { (t0, ax0) } else { (t1, ax1) };
    if t <= t_min || t >= t_max {
        return None;
    }
    let p = ray.at(t);
    let mut n = [0.0; 3];
    n[ax] = p.0[ax].signum();
    Some(LocalHit {
        t,
        normal: Vec3(n),
        point: p,
    })
}

fn cylinder(ray: &Ray, t_min: f64, t_max: f64) -> Option<LocalHit> {
    let (o, d) = (ray.origin, ray.dir);
    let mut best: Option<LocalHit> = None;
    let mut consider = |h: LocalHit| {
        if h.t > t_min && h.t < t_max && best.map_or(true, |b| h.t < b.t) {
            best = Some(h);
        }
    };
    if let Some((t0, t1)) = quadratic(
        d.x() * d.x() + d.z() * d.z(),
        o.x() * d.x() + o.z() * d.z(),
        o.x() * o.x() + o.z() * o.z() - 1.0,
    ) {
        for t in [t0, t1] {
            let p = ray.at(t);
            if p.y().abs() <= 1.0 {
                consider(hit(ray, t, Vec3::new(p.x(), 0.0, p.z())));
            }
        }
    }
    if d.y().abs() > 1e-15 {
        for cap in [-1.0, 1.0] {
            let t = (cap - o.y()) / d.y();
            let p = ray.at(t);
            if p.x() * p.x() + p.z() * p.z() <= 1.0 {
                consider(hit(ray, t, Vec3::new(0.0, cap, 0.0)));
            }
        }
    }
    best
}

fn patch(ray: &Ray, t_min: f64, t_max: f64) -> Option<LocalHit> {
    if ray.dir.y().abs() < 1e-15 {
        return None;
    }
    let t = -ray.origin.y() / ray.dir.y();
    if t <= t_min || t >= t_max {
        return None;
    }
    let p = ray.at(t);
    (p.x().abs() <= 1.0 && p.z().abs() <= 1.0).then(|| hit(ray, t, Vec3::new(0.0, 1.0, 0.0)))
}

fn torus_sdf(p: Vec3) -> f64 {
    let q = (p.x() * p.x() + p.z() * p.z()).sqrt() - TORUS_MAJOR;
    (q * q + p.y() * p.y()).sqrt() - TORUS_MINOR
}

/// Sphere tracing against the torus SDF (torus in the local xz plane).
fn torus(ray: &Ray, t_min: f64, t_max: f64) -> Option<LocalHit> {
    let scale = ray.dir.length();
    let dir = ray.dir * (1.0 / scale);
    let unit = Ray {
        origin: ray.origin,
        dir,
    };
    let bound = TORUS_MAJOR + TORUS_MINOR;
    let (enter, exit) = quadratic(1.0, unit.origin.dot(dir), unit.origin.dot(unit.origin) - bound * bound)?;
    let mut s = enter.max(t_min * scale);
    let end = exit.min(t_max * scale);
    for _ in 0..160 {
        if s > end {
            return None;
        }
        let p = unit.at(s);
        let dist = torus_sdf(p);
        if dist < 1e-6 {
            if s <= t_min * scale {
                return None;
            }
            let radial = (p.x() * p.x() + p.z() * p.z()).sqrt().max(1e-12);
            let ring = Vec3::new(p.x() / radial * TORUS_MAJOR, 0.0, p.z() / radial * TORUS_MAJOR);
            return Some(LocalHit {
                t: s / scale,
                normal: p - ring,
                point: p,
            });
        }
        s += dist;
    }
    None
}

/// World-space hit against a transformed shape.
#[derive(Clone, Copy, Debug)]
pub struct WorldHit {
    pub t: f64,
    pub normal: Vec3,
    pub local_point: Vec3,
    pub local_normal: Vec3,
}

#[derive(Clone, Debug)]
pub struct Placed {
    pub shape: Shape,
    pub rotation: Mat3,
    pub scale: Vec3,
    pub translation: Vec3,
    pub bound: f64,
}

impl Placed {
    pub fn new(shape: Shape, tf: &Transform) -> Self {
        let [ax, ay, az] = tf.rotation_degrees();
        let scale = Vec3(tf.scale);
        let max_scale = tf.scale.iter().fold(0.0f64, |a, &b| a.max(b));
        Self {
            shape,
            rotation: Mat3::from_euler_deg(ax, ay, az),
            scale,
            translation: Vec3(tf.translation),
            bound: shape.bound_radius() * max_scale,
        }
    }

    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<WorldHit> {
        let oc = ray.origin - self.translation;
        let dd = ray.dir.dot(ray.dir);
        let b = oc.dot(ray.dir);
        let c = oc.dot(oc) - self.bound * self.bound;
        if b * b - dd * c < 0.0 {
            return None;
        }
        let local = Ray {
            origin: self.rotation.apply_transposed(oc).div_elem(self.scale),
            dir: self.rotation.apply_transposed(ray.dir).div_elem(self.scale),
        };
        let h = self.shape.intersect_local(&local, t_min, t_max)?;
        let normal = self.rotation.apply(h.normal.div_elem(self.scale)).normalized();
        Some(WorldHit {
            t: h.t,
            normal,
            local_point: h.point,
            local_normal: h.normal,
        })
    }
}
