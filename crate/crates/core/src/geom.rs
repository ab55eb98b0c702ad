use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in the absolute hull frame: +x is the advancing
/// direction, +z points up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Axis-aligned box, `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoundingBox {
    /// Smallest box containing every point; `None` for an empty iterator.
    pub fn from_points<I: IntoIterator<Item = Vec3>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.min(p), hi.max(p)));
        Some(BoundingBox { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn translate(&self, t: Vec3) -> Self {
        BoundingBox { min: self.min + t, max: self.max + t }
    }

    pub fn contains_strictly(&self, other: &BoundingBox) -> bool {
        (0..3).all(|i| self.min.axis(i) < other.min.axis(i) && self.max.axis(i) > other.max.axis(i))
    }
}

/// Rigid hull attitude: a rotation about the transverse (y) axis through the
/// centre of gravity followed by a vertical translation.
///
/// Positive trim raises the bow (+x end) and lowers the stern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attitude {
    pub sink: f64,
    pub trim_deg: f64,
    pub cog: Vec3,
}

impl Attitude {
    pub fn new(sink: f64, trim_deg: f64, cog: Vec3) -> Self {
        Self { sink, trim_deg, cog }
    }

    pub fn level(cog: Vec3) -> Self {
        Self::new(0.0, 0.0, cog)
    }

    pub fn transformer(&self) -> RigidTransform {
        let theta = deg_to_rad(self.trim_deg);
        RigidTransform {
            cos: libm::cos(theta),
            sin: libm::sin(theta),
            pivot: self.cog,
            sink: self.sink,
        }
    }

    /// Where the centre of gravity ends up after the transform.
    pub fn moved_cog(&self) -> Vec3 {
        self.cog + Vec3::new(0.0, 0.0, self.sink)
    }
}

/// Precomputed form of an [`Attitude`].
#[derive(Debug, Clone, Copy)]
pub struct RigidTransform {
    cos: f64,
    sin: f64,
    pivot: Vec3,
    sink: f64,
}

impl RigidTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = p - self.pivot;
        Vec3::new(
            self.pivot.x + r.x * self.cos - r.z * self.sin,
            p.y,
            self.pivot.z + r.x * self.sin + r.z * self.cos + self.sink,
        )
    }
}

pub(crate) fn deg_to_rad(d: f64) -> f64 {
    d * core::f64::consts::PI / 180.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_trim_raises_bow() {
        let t = Attitude::new(0.0, 10.0, Vec3::ZERO).transformer();
        let bow = t.apply(Vec3::new(1.0, 0.0, 0.0));
        assert!(bow.z > 0.0);
        let stern = t.apply(Vec3::new(-1.0, 0.0, 0.0));
        assert!(stern.z < 0.0);
    }

    #[test]
    fn sink_is_applied_after_rotation() {
        let t = Attitude::new(0.25, 90.0, Vec3::new(1.0, 0.0, 0.0)).transformer();
        let p = t.apply(Vec3::new(2.0, 3.0, 0.0));
        assert!((p.x - 1.0).abs() < 1e-12);
        assert!((p.z - 1.25).abs() < 1e-12);
        assert_eq!(p.y, 3.0);
    }

    #[test]
    fn bbox_from_points() {
        let b = BoundingBox::from_points([Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0)]).unwrap();
        assert_eq!(b.min, Vec3::ZERO);
        assert_eq!(b.max, Vec3::new(2.0, 3.0, 0.0));
        assert!(BoundingBox::from_points(core::iter::empty()).is_none());
    }
}
