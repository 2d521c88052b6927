//! Small 3D vector and angle helpers shared by the geometry-facing modules.

use serde::{Deserialize, Serialize};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Cartesian point or direction, serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3 { x: a[0], y: a[1], z: a[2] }
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Vec3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
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
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self.scale(1.0 / n)
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }
}

/// Unit vector for a steering or arrival direction. Azimuth is measured in
/// the horizontal plane from +x toward +y, elevation from the horizontal
/// plane toward +z.
pub fn unit_from_az_el_deg(az_deg: f64, el_deg: f64) -> Vec3 {
    let az = az_deg.to_radians();
    let el = el_deg.to_radians();
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Inverse of [`unit_from_az_el_deg`]; azimuth is reported in [0, 360).
pub fn az_el_deg_from_unit(v: Vec3) -> (f64, f64) {
    let v = v.normalized();
    let el = v.z.clamp(-1.0, 1.0).asin().to_degrees();
    let mut az = v.y.atan2(v.x).to_degrees();
    if az < 0.0 {
        az += 360.0;
    }
    (az, el)
}

/// Angle between two directions in degrees, in [0, 180].
pub fn angle_between_deg(a: Vec3, b: Vec3) -> f64 {
    let d = (a.normalized().dot(b.normalized())).clamp(-1.0, 1.0);
    d.acos().to_degrees()
}

/// Mirror `p` across the plane through `plane_point` with unit `normal`.
pub fn reflect_across_plane(p: Vec3, plane_point: Vec3, normal: Vec3) -> Vec3 {
    let d = normal.dot(p - plane_point);
    p - normal.scale(2.0 * d)
}
