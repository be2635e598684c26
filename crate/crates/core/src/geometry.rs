//! Coordinate frames, rigid transforms, cuboid primitives, pinhole
//! projection, and segment-cuboid blockage tests.
//!
//! Three right-handed frames share the same convention: X across the street,
//! Y along it, Z up. The RSU coordinate system (RCS) is anchored at the
//! road-side unit, the mobile-station system (MCS) at the ground point under
//! the MS, and each camera system (CCS) at its mount. Azimuths are measured
//! from a frame's +Y axis, positive clockwise, and wrapped to `(-pi, pi]`.
//!
//! All functions here are pure; they are called concurrently from the
//! per-snapshot workers without synchronization.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// 3-vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn xy(self) -> Vec2 {
        Vec2 { x: self.x, y: self.y }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
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

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// 2-vector in meters (plane coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

/// Axis-aligned rectangle in the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        assert!(min.x <= max.x && min.y <= max.y);
        Rect { min, max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Strict-area overlap; touching edges do not count.
    pub fn intersects(&self, o: &Rect) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }
}

/// Rotate `p` from a child frame whose azimuth is `azimuth` into the parent
/// frame. The rotation matrix is
/// `[cos a, sin a, 0; -sin a, cos a, 0; 0, 0, 1]`, consistent with azimuths
/// being clockwise from +Y. The inverse is `rotate_azimuth(p, -azimuth)`.
pub fn rotate_azimuth(p: Vec3, azimuth: f64) -> Vec3 {
    let (s, c) = azimuth.sin_cos();
    Vec3::new(c * p.x + s * p.y, -s * p.x + c * p.y, p.z)
}

/// Planar pose: position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Heading from the frame's +Y axis, positive clockwise, in `(-pi, pi]`.
    pub azimuth: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, azimuth: f64) -> Self {
        Pose2D { x, y, azimuth: wrap_angle(azimuth) }
    }

    /// Ground point under the pose.
    pub fn origin3(&self) -> Vec3 {
        Vec3::new(self.x, self.y, 0.0)
    }

    /// Map a point from this pose's local frame into the parent frame.
    pub fn to_world(&self, local: Vec3) -> Vec3 {
        rotate_azimuth(local, self.azimuth) + self.origin3()
    }

    /// Map a parent-frame point into this pose's local frame.
    pub fn to_local(&self, world: Vec3) -> Vec3 {
        rotate_azimuth(world - self.origin3(), -self.azimuth)
    }
}

/// Axis-aligned-in-local-frame box: length runs along the local +Y axis
/// (direction of travel for vehicles), width along X, height along Z. The
/// center sits at mid-height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub center: Vec3,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub azimuth: f64,
}

impl Cuboid {
    pub fn new(center: Vec3, length: f64, width: f64, height: f64, azimuth: f64) -> Self {
        assert!(length > 0.0 && width > 0.0 && height > 0.0, "cuboid dims must be positive");
        Cuboid { center, length, width, height, azimuth: wrap_angle(azimuth) }
    }

    fn half(&self) -> Vec3 {
        Vec3::new(self.width / 2.0, self.length / 2.0, self.height / 2.0)
    }

    pub fn to_local(&self, p: Vec3) -> Vec3 {
        rotate_azimuth(p - self.center, -self.azimuth)
    }

    /// The eight corners in the parent frame.
    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half();
        let mut out = [Vec3::default(); 8];
        let mut i = 0;
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let local = Vec3::new(sx * h.x, sy * h.y, sz * h.z);
                    out[i] = rotate_azimuth(local, self.azimuth) + self.center;
                    i += 1;
                }
            }
        }
        out
    }

    /// Strict interior test.
    pub fn contains_interior(&self, p: Vec3) -> bool {
        let l = self.to_local(p);
        let h = self.half();
        l.x.abs() < h.x && l.y.abs() < h.y && l.z.abs() < h.z
    }

    /// The six faces with outward normals, in the parent frame.
    pub fn faces(&self) -> [CuboidFace; 6] {
        let h = self.half();
        let ax = rotate_azimuth(Vec3::new(1.0, 0.0, 0.0), self.azimuth);
        let ay = rotate_azimuth(Vec3::new(0.0, 1.0, 0.0), self.azimuth);
        let az = Vec3::new(0.0, 0.0, 1.0);
        let face = |normal: Vec3, off: f64, u: Vec3, hu: f64, v: Vec3, hv: f64| CuboidFace {
            center: self.center + normal * off,
            normal,
            u_axis: u,
            v_axis: v,
            half_u: hu,
            half_v: hv,
        };
        [
            face(ax, h.x, ay, h.y, az, h.z),
            face(-ax, h.x, ay, h.y, az, h.z),
            face(ay, h.y, ax, h.x, az, h.z),
            face(-ay, h.y, ax, h.x, az, h.z),
            face(az, h.z, ax, h.x, ay, h.y),
            face(-az, h.z, ax, h.x, ay, h.y),
        ]
    }

    /// True if the open segment `(a, b)` passes through the interior.
    /// A segment that only grazes a face, edge, or corner does not count.
    pub fn segment_enters(&self, a: Vec3, b: Vec3) -> bool {
        let la = self.to_local(a);
        let lb = self.to_local(b);
        let d = lb - la;
        let h = self.half();
        let mut tmin = f64::NEG_INFINITY;
        let mut tmax = f64::INFINITY;
        for (o, dd, half) in [(la.x, d.x, h.x), (la.y, d.y, h.y), (la.z, d.z, h.z)] {
            if dd == 0.0 {
                if o.abs() >= half {
                    return false;
                }
            } else {
                let t1 = (-half - o) / dd;
                let t2 = (half - o) / dd;
                let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                tmin = tmin.max(lo);
                tmax = tmax.min(hi);
            }
        }
        tmin.max(0.0) < tmax.min(1.0)
    }

    /// First intersection of the ray `origin + t*dir` (t > 0) with the box,
    /// returning `(t, face_axis, face_sign)` for the entering face, where
    /// `face_axis` is 0/1/2 for local X/Y/Z.
    pub fn ray_hit(&self, origin: Vec3, dir: Vec3) -> Option<(f64, usize, f64)> {
        let o = self.to_local(origin);
        let d = rotate_azimuth(dir, -self.azimuth);
        let h = self.half();
        let mut tmin = 0.0f64;
        let mut tmax = f64::INFINITY;
        let mut axis = 0usize;
        let mut sign = 0.0f64;
        for (i, (oc, dc, half)) in [(o.x, d.x, h.x), (o.y, d.y, h.y), (o.z, d.z, h.z)]
            .into_iter()
            .enumerate()
        {
            if dc == 0.0 {
                if oc.abs() >= half {
                    return None;
                }
            } else {
                let t1 = (-half - oc) / dc;
                let t2 = (half - oc) / dc;
                let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                if lo > tmin {
                    tmin = lo;
                    axis = i;
                    sign = if dc > 0.0 { -1.0 } else { 1.0 };
                }
                tmax = tmax.min(hi);
            }
        }
        if tmin < tmax && tmin > 0.0 {
            Some((tmin, axis, sign))
        } else {
            None
        }
    }
}

/// One rectangular face of a cuboid, parameterized by its in-plane axes.
#[derive(Debug, Clone, Copy)]
pub struct CuboidFace {
    pub center: Vec3,
    pub normal: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub half_u: f64,
    pub half_v: f64,
}

impl CuboidFace {
    /// True if `p` (assumed on the face plane) lies within the rectangle.
    pub fn contains(&self, p: Vec3) -> bool {
        let d = p - self.center;
        d.dot(self.u_axis).abs() <= self.half_u && d.dot(self.v_axis).abs() <= self.half_v
    }
}

/// True iff the open segment `(a, b)` intersects the interior of any
/// obstacle. Paths that exactly graze a face are treated as unblocked; the
/// tie is measure-zero.
pub fn segment_blocked(a: Vec3, b: Vec3, obstacles: &[Cuboid]) -> bool {
    assert!(a != b, "degenerate segment");
    obstacles.iter().any(|c| c.segment_enters(a, b))
}

/// Strict-overlap test of two cuboid ground footprints (separating axes of
/// both rectangles). Touching edges do not count as overlap.
pub fn footprints_overlap(a: &Cuboid, b: &Cuboid) -> bool {
    let corners2 = |c: &Cuboid| -> [Vec2; 4] {
        let h = c.half();
        let mut out = [Vec2::default(); 4];
        for (i, (sx, sy)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .into_iter()
            .enumerate()
        {
            let p = rotate_azimuth(Vec3::new(sx * h.x, sy * h.y, 0.0), c.azimuth) + c.center;
            out[i] = p.xy();
        }
        out
    };
    let ca = corners2(a);
    let cb = corners2(b);
    let axes = |c: &[Vec2; 4]| {
        [
            Vec2::new(c[1].x - c[0].x, c[1].y - c[0].y),
            Vec2::new(c[3].x - c[0].x, c[3].y - c[0].y),
        ]
    };
    for axis in axes(&ca).into_iter().chain(axes(&cb)) {
        let proj = |pts: &[Vec2; 4]| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in pts {
                let v = p.x * axis.x + p.y * axis.y;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        };
        let (alo, ahi) = proj(&ca);
        let (blo, bhi) = proj(&cb);
        if ahi <= blo || bhi <= alo {
            return false;
        }
    }
    true
}

/// A camera rigidly mounted on the MS. `offset_in_mcs` is measured from the
/// ground point under the MS center; `azimuth_in_mcs` from the MS heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    pub offset_in_mcs: Vec3,
    pub azimuth_in_mcs: f64,
    /// Horizontal field of view, radians, in (0, pi).
    pub hfov: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraMount {
    pub fn new(
        offset_in_mcs: Vec3,
        azimuth_in_mcs: f64,
        hfov: f64,
        image_width: u32,
        image_height: u32,
    ) -> Self {
        assert!(hfov > 0.0 && hfov < PI, "hfov must be in (0, pi)");
        CameraMount {
            offset_in_mcs,
            azimuth_in_mcs: wrap_angle(azimuth_in_mcs),
            hfov,
            image_width,
            image_height,
        }
    }

    /// Focal length in pixels for square pixels and the principal point at
    /// the image center.
    pub fn focal_px(&self) -> f64 {
        (self.image_width as f64 / 2.0) / (self.hfov / 2.0).tan()
    }
}

/// Check that a set of mounts tiles the full horizontal view without
/// overlap: equal sectors, matching hfov, evenly spaced azimuths.
pub fn mounts_tile_horizon(mounts: &[CameraMount]) -> bool {
    if mounts.is_empty() {
        return false;
    }
    let sector = 2.0 * PI / mounts.len() as f64;
    if mounts.iter().any(|m| (m.hfov - sector).abs() > 1e-9) {
        return false;
    }
    let mut azimuths: Vec<f64> = mounts.iter().map(|m| m.azimuth_in_mcs).collect();
    azimuths.sort_by(f64::total_cmp);
    for w in azimuths.windows(2) {
        if (w[1] - w[0] - sector).abs() > 1e-9 {
            return false;
        }
    }
    true
}

/// Transform a point and azimuth from camera coordinates into MS
/// coordinates: rotate by the mount azimuth, then translate by the offset.
pub fn ccs_to_mcs(p: Vec3, azimuth_ccs: f64, mount: &CameraMount) -> (Vec3, f64) {
    (
        rotate_azimuth(p, mount.azimuth_in_mcs) + mount.offset_in_mcs,
        wrap_angle(mount.azimuth_in_mcs + azimuth_ccs),
    )
}

/// Analytic inverse of [`ccs_to_mcs`].
pub fn mcs_to_ccs(p: Vec3, azimuth_mcs: f64, mount: &CameraMount) -> (Vec3, f64) {
    (
        rotate_azimuth(p - mount.offset_in_mcs, -mount.azimuth_in_mcs),
        wrap_angle(azimuth_mcs - mount.azimuth_in_mcs),
    )
}

/// MS coordinates to RSU coordinates. The two frames have parallel axes, so
/// this is a pure translation; azimuths pass through unchanged.
pub fn mcs_to_rcs(p: Vec3, ms_in_rcs: Vec3) -> Vec3 {
    p + ms_in_rcs
}

/// Inverse of [`mcs_to_rcs`].
pub fn rcs_to_mcs(p: Vec3, ms_in_rcs: Vec3) -> Vec3 {
    p - ms_in_rcs
}

/// Project a cuboid through a pinhole camera mounted on the MS.
///
/// Returns the convex hull of the image points of corners with positive
/// camera-frame depth, clipped to the image rectangle
/// `[0, image_width] x [0, image_height]`, or an empty polygon when no
/// corner is in front of the camera or the hull misses the image.
pub fn project_cuboid(cam: &CameraMount, ms_pose_rcs: &Pose2D, c: &Cuboid) -> Vec<Vec2> {
    let cam_pos = ms_pose_rcs.to_world(cam.offset_in_mcs);
    let cam_azimuth = wrap_angle(ms_pose_rcs.azimuth + cam.azimuth_in_mcs);
    let f = cam.focal_px();
    let (w, h) = (cam.image_width as f64, cam.image_height as f64);

    let mut pts = Vec::with_capacity(8);
    for corner in c.corners() {
        let local = rotate_azimuth(corner - cam_pos, -cam_azimuth);
        if local.y > 0.0 {
            let u = w / 2.0 + f * local.x / local.y;
            let v = h / 2.0 - f * local.z / local.y;
            pts.push(Vec2::new(u, v));
        }
    }
    if pts.len() < 3 {
        return Vec::new();
    }
    let hull = convex_hull(pts);
    if hull.len() < 3 {
        return Vec::new();
    }
    let clipped = clip_polygon_to_rect(&hull, w, h);
    if clipped.len() < 3 {
        Vec::new()
    } else {
        clipped
    }
}

/// Convex hull via Andrew's monotone chain, counter-clockwise in image
/// coordinates (y down).
pub fn convex_hull(mut pts: Vec<Vec2>) -> Vec<Vec2> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let chain = |iter: &mut dyn Iterator<Item = Vec2>| {
        let mut out: Vec<Vec2> = Vec::with_capacity(n);
        for p in iter {
            while out.len() >= 2 && cross(out[out.len() - 2], out[out.len() - 1], p) <= 0.0 {
                out.pop();
            }
            out.push(p);
        }
        out.pop();
        out
    };
    let mut hull = chain(&mut pts.iter().copied());
    hull.extend(chain(&mut pts.iter().rev().copied()));
    hull
}

/// Sutherland-Hodgman clipping of a convex polygon against the rectangle
/// `[0, w] x [0, h]`.
pub fn clip_polygon_to_rect(poly: &[Vec2], w: f64, h: f64) -> Vec<Vec2> {
    // inside(p) predicates and line parameters for the four rectangle edges
    let edges: [(f64, f64, f64); 4] = [
        (1.0, 0.0, 0.0),  // x >= 0
        (-1.0, 0.0, -w),  // x <= w
        (0.0, 1.0, 0.0),  // y >= 0
        (0.0, -1.0, -h),  // y <= h
    ];
    let mut current = poly.to_vec();
    for (a, b, c) in edges {
        if current.is_empty() {
            break;
        }
        let side = |p: Vec2| a * p.x + b * p.y - c;
        let mut next = Vec::with_capacity(current.len() + 4);
        for i in 0..current.len() {
            let p = current[i];
            let q = current[(i + 1) % current.len()];
            let sp = side(p);
            let sq = side(q);
            if sp >= 0.0 {
                next.push(p);
            }
            if (sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0) {
                let t = sp / (sp - sq);
                next.push(Vec2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)));
            }
        }
        current = next;
    }
    current
}

/// Point-in-convex-polygon test; the polygon must be consistently wound.
/// Boundary points count as inside.
pub fn point_in_convex_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_vec3_eq(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() < tol, "{a:?} != {b:?}");
    }

    #[test]
    fn wrap_angle_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ccs_to_mcs_identity_rotation() {
        let mount = CameraMount::new(Vec3::default(), 0.0, PI / 2.0, 320, 120);
        let (p, az) = ccs_to_mcs(Vec3::new(1.0, 2.0, 0.0), 0.3, &mount);
        assert_vec3_eq(p, Vec3::new(1.0, 2.0, 0.0), 1e-15);
        assert!((az - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ccs_to_mcs_quarter_turn() {
        // 90 degrees clockwise maps camera-forward (+Y) to +X.
        let mount = CameraMount::new(Vec3::default(), PI / 2.0, PI / 2.0, 320, 120);
        let (p, az) = ccs_to_mcs(Vec3::new(0.0, 1.0, 0.0), 0.1, &mount);
        assert_vec3_eq(p, Vec3::new(1.0, 0.0, 0.0), 1e-12);
        assert!((az - (0.1 + PI / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn ccs_to_mcs_half_turn_with_offset() {
        let mount =
            CameraMount::new(Vec3::new(0.5, 0.0, 0.5), PI, PI / 2.0, 320, 120);
        let (p, az) = ccs_to_mcs(Vec3::new(0.0, 1.0, 0.0), 0.2, &mount);
        assert_vec3_eq(p, Vec3::new(0.5, -1.0, 0.5), 1e-12);
        assert!((az - wrap_angle(0.2 + PI)).abs() < 1e-12);
    }

    #[test]
    fn mcs_rcs_translation() {
        assert_eq!(
            mcs_to_rcs(Vec3::default(), Vec3::new(5.0, 3.0, 0.0)),
            Vec3::new(5.0, 3.0, 0.0)
        );
        assert_eq!(
            mcs_to_rcs(Vec3::new(1.0, -2.0, 0.0), Vec3::default()),
            Vec3::new(1.0, -2.0, 0.0)
        );
        assert_eq!(
            mcs_to_rcs(Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 3.0, 4.0)),
            Vec3::new(3.0, 4.0, 5.0)
        );
    }

    #[test]
    fn unit_cube_corners() {
        let c = Cuboid::new(Vec3::default(), 1.0, 1.0, 1.0, 0.0);
        let mut corners: Vec<_> =
            c.corners().iter().map(|p| (p.x, p.y, p.z)).collect();
        corners.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect = vec![];
        for sx in [-0.5, 0.5] {
            for sy in [-0.5, 0.5] {
                for sz in [-0.5, 0.5] {
                    expect.push((sx, sy, sz));
                }
            }
        }
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, e) in corners.iter().zip(&expect) {
            assert!((a.0 - e.0).abs() < 1e-12);
            assert!((a.1 - e.1).abs() < 1e-12);
            assert!((a.2 - e.2).abs() < 1e-12);
        }
    }

    #[test]
    fn half_turn_same_corner_set() {
        let a = Cuboid::new(Vec3::new(1.0, 2.0, 0.5), 4.0, 2.0, 1.5, 0.0);
        let b = Cuboid::new(Vec3::new(1.0, 2.0, 0.5), 4.0, 2.0, 1.5, PI);
        let key = |p: &Vec3| {
            (
                (p.x * 1e9).round() as i64,
                (p.y * 1e9).round() as i64,
                (p.z * 1e9).round() as i64,
            )
        };
        let mut ka: Vec<_> = a.corners().iter().map(key).collect();
        let mut kb: Vec<_> = b.corners().iter().map(key).collect();
        ka.sort();
        kb.sort();
        assert_eq!(ka, kb);
    }

    #[test]
    fn quarter_turn_swaps_extents() {
        let c = Cuboid::new(Vec3::default(), 2.0, 1.0, 1.0, PI / 2.0);
        let xs: Vec<f64> = c.corners().iter().map(|p| p.x).collect();
        let ys: Vec<f64> = c.corners().iter().map(|p| p.y).collect();
        let span = |v: &[f64]| {
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - v.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        // length 2 originally along Y now spans X; width 1 now spans Y
        assert!((span(&xs) - 2.0).abs() < 1e-12);
        assert!((span(&ys) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_above_boxes_unblocked() {
        let boxes = vec![
            Cuboid::new(Vec3::new(0.0, 0.0, 1.0), 4.0, 2.0, 2.0, 0.3),
            Cuboid::new(Vec3::new(5.0, 5.0, 1.5), 10.0, 3.0, 3.0, -0.7),
        ];
        let a = Vec3::new(-10.0, -10.0, 13.0);
        let b = Vec3::new(15.0, 15.0, 13.5);
        assert!(!segment_blocked(a, b, &boxes));
    }

    #[test]
    fn segment_through_center_blocked() {
        let boxes = vec![Cuboid::new(Vec3::new(0.0, 0.0, 1.0), 4.0, 2.0, 2.0, 0.0)];
        assert!(segment_blocked(
            Vec3::new(-5.0, 0.0, 1.0),
            Vec3::new(5.0, 0.0, 1.0),
            &boxes
        ));
    }

    /// Dense sampling oracle: walk the open segment in ~1 mm steps and probe
    /// the box interior.
    fn blocked_oracle(a: Vec3, b: Vec3, c: &Cuboid) -> bool {
        let len = (b - a).norm();
        let steps = (len / 0.001).ceil() as usize + 1;
        for i in 1..steps {
            let t = i as f64 / steps as f64;
            if c.contains_interior(a + (b - a) * t) {
                return true;
            }
        }
        false
    }

    #[test]
    fn blockage_matches_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b10c);
        let mut disagreements = 0;
        for _ in 0..300 {
            let c = Cuboid::new(
                Vec3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(0.5..3.0),
                ),
                rng.random_range(0.5..8.0),
                rng.random_range(0.5..4.0),
                rng.random_range(0.5..4.0),
                rng.random_range(-PI..PI),
            );
            let a = Vec3::new(
                rng.random_range(-12.0..12.0),
                rng.random_range(-12.0..12.0),
                rng.random_range(0.0..6.0),
            );
            let b = Vec3::new(
                rng.random_range(-12.0..12.0),
                rng.random_range(-12.0..12.0),
                rng.random_range(0.0..6.0),
            );
            if a == b {
                continue;
            }
            if c.segment_enters(a, b) != blocked_oracle(a, b, &c) {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0);
    }

    #[test]
    fn projection_centered_box() {
        let mount = CameraMount::new(Vec3::new(0.0, 0.0, 2.0), 0.0, PI / 2.0, 320, 120);
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        // box straight ahead on the optical axis, at camera height
        let c = Cuboid::new(Vec3::new(0.0, 10.0, 2.0), 1.0, 1.0, 1.0, 0.0);
        let poly = project_cuboid(&mount, &pose, &c);
        assert!(poly.len() >= 3);
        let cx = poly.iter().map(|p| p.x).sum::<f64>() / poly.len() as f64;
        let cy = poly.iter().map(|p| p.y).sum::<f64>() / poly.len() as f64;
        assert!((cx - 160.0).abs() < 1e-9);
        assert!((cy - 60.0).abs() < 1e-9);
    }

    #[test]
    fn projection_behind_camera_empty() {
        let mount = CameraMount::new(Vec3::new(0.0, 0.0, 2.0), 0.0, PI / 2.0, 320, 120);
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let c = Cuboid::new(Vec3::new(0.0, -10.0, 2.0), 1.0, 1.0, 1.0, 0.0);
        assert!(project_cuboid(&mount, &pose, &c).is_empty());
    }

    #[test]
    fn projection_matches_hand_pinhole() {
        // hfov 90 deg, width 320 -> f = 160 px
        let mount = CameraMount::new(Vec3::new(0.0, 0.0, 2.0), 0.0, PI / 2.0, 320, 120);
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        // unit cube centered 2 m right, 8 m ahead, at camera height:
        // front face at depth 7.5, x in [1.5, 2.5], z-offsets +-0.5
        let c = Cuboid::new(Vec3::new(2.0, 8.0, 2.0), 1.0, 1.0, 1.0, 0.0);
        let poly = project_cuboid(&mount, &pose, &c);
        assert!(!poly.is_empty());
        let f = 160.0;
        // hand-computed pinhole images of the eight corners
        let mut expected: Vec<Vec2> = Vec::new();
        for (x, y, z) in [
            (1.5, 7.5, 0.5),
            (1.5, 7.5, -0.5),
            (2.5, 7.5, 0.5),
            (2.5, 7.5, -0.5),
            (1.5, 8.5, 0.5),
            (1.5, 8.5, -0.5),
            (2.5, 8.5, 0.5),
            (2.5, 8.5, -0.5),
        ] {
            expected.push(Vec2::new(160.0 + f * x / y, 60.0 - f * z / y));
        }
        // every hull vertex must be one of the hand-computed corner images
        for v in &poly {
            assert!(
                expected.iter().any(|e| (e.x - v.x).abs() < 1e-9 && (e.y - v.y).abs() < 1e-9),
                "unexpected hull vertex {v:?}"
            );
        }
        // the left-front-top corner is extremal, so it must appear
        let lft = Vec2::new(160.0 + f * 1.5 / 7.5, 60.0 - f * 0.5 / 7.5);
        assert!(poly.iter().any(|v| (v.x - lft.x).abs() < 1e-9 && (v.y - lft.y).abs() < 1e-9));
    }

    #[test]
    fn projection_stays_in_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mount = CameraMount::new(Vec3::new(0.2, 0.1, 2.05), 0.4, PI / 2.0, 320, 120);
        for _ in 0..500 {
            let pose = Pose2D::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-PI..PI),
            );
            let c = Cuboid::new(
                Vec3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(0.5..2.0),
                ),
                rng.random_range(1.0..12.0),
                rng.random_range(1.0..4.0),
                rng.random_range(1.0..4.0),
                rng.random_range(-PI..PI),
            );
            for v in project_cuboid(&mount, &pose, &c) {
                assert!(v.x >= -1e-9 && v.x <= 320.0 + 1e-9);
                assert!(v.y >= -1e-9 && v.y <= 120.0 + 1e-9);
            }
        }
    }

    #[test]
    fn projection_invariant_under_joint_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mount = CameraMount::new(Vec3::new(0.0, 0.0, 2.05), 0.3, PI / 2.0, 320, 120);
        for _ in 0..100 {
            let delta = rng.random_range(-PI..PI);
            let pose = Pose2D::new(1.0, -2.0, 0.2);
            let c = Cuboid::new(
                Vec3::new(rng.random_range(2.0..15.0), rng.random_range(2.0..15.0), 1.0),
                4.0,
                2.0,
                2.0,
                rng.random_range(-PI..PI),
            );
            let base = project_cuboid(&mount, &pose, &c);

            // rotate the scene about the MS ground point and the MS heading
            // by the same clockwise angle
            let rot_pose = Pose2D::new(pose.x, pose.y, pose.azimuth + delta);
            let rel = c.center - pose.origin3();
            let rot_center = rotate_azimuth(rel, delta) + pose.origin3();
            let rot_c =
                Cuboid::new(rot_center, c.length, c.width, c.height, c.azimuth + delta);
            let rotated = project_cuboid(&mount, &rot_pose, &rot_c);

            assert_eq!(base.len(), rotated.len());
            for (a, b) in base.iter().zip(&rotated) {
                assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn transform_round_trip(
            x in -50.0..50.0f64, y in -50.0..50.0f64, z in -5.0..5.0f64,
            az in -3.0..3.0f64, mx in -2.0..2.0f64, my in -2.0..2.0f64,
            mz in 0.0..3.0f64, maz in -3.0..3.0f64,
        ) {
            let mount = CameraMount::new(Vec3::new(mx, my, mz), maz, 1.5, 320, 120);
            let p = Vec3::new(x, y, z);
            let (pm, am) = ccs_to_mcs(p, az, &mount);
            let (back, aback) = mcs_to_ccs(pm, am, &mount);
            prop_assert!((back - p).norm() < 1e-12);
            prop_assert!(wrap_angle(aback - wrap_angle(az)).abs() < 1e-12);
        }

        #[test]
        fn blockage_symmetric(
            ax in -10.0..10.0f64, ay in -10.0..10.0f64, az in 0.0..5.0f64,
            bx in -10.0..10.0f64, by in -10.0..10.0f64, bz in 0.0..5.0f64,
            caz in -3.0..3.0f64,
        ) {
            let a = Vec3::new(ax, ay, az);
            let b = Vec3::new(bx, by, bz);
            prop_assume!(a != b);
            let obstacles = vec![
                Cuboid::new(Vec3::new(0.0, 0.0, 1.0), 5.0, 2.0, 2.0, caz),
                Cuboid::new(Vec3::new(3.0, -2.0, 1.5), 8.0, 3.0, 3.0, -caz),
            ];
            prop_assert_eq!(
                segment_blocked(a, b, &obstacles),
                segment_blocked(b, a, &obstacles)
            );
        }
    }
}
