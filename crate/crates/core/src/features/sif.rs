//! Scene image features: flat-shaded background renders with vehicle masks
//! whose color channels carry negated, scaled vehicle dimensions.
//!
//! Each camera image is ray-cast against the static buildings and the ground
//! for a nonnegative grayscale background, then every detected vehicle's 3D
//! box is projected to a convex 2D mask and filled, far to near, with the
//! triple `(-255 l/L_max, -255 w/W_max, -255 h/H_max)`. The sign separates
//! vehicle pixels from background. The C camera images are concatenated
//! channel-wise, camera `i` occupying channels `3i .. 3i+3`.

use super::{Detection, SizeMaxima};
use crate::geometry::{
    ccs_to_mcs, point_in_convex_polygon, project_cuboid, rotate_azimuth, wrap_angle, CameraMount,
    Cuboid, Pose2D, Vec2, Vec3,
};
use crate::{Error, Result};

const SKY_GRAY: f32 = 225.0;
const ROAD_GRAY: f32 = 95.0;
// building faces by local axis: side walls darker than the roof
const FACE_GRAY: [f32; 3] = [170.0, 150.0, 200.0];

/// A stack of C camera images with 3 channels each, layout H x W x 3C,
/// single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImageFeature {
    pub time: f64,
    pub height: usize,
    pub width: usize,
    pub cameras: usize,
    pub data: Vec<f32>,
}

impl SceneImageFeature {
    pub fn channels(&self) -> usize {
        3 * self.cameras
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    #[inline]
    fn put(&mut self, y: usize, x: usize, c: usize, v: f32) {
        let ch = self.channels();
        self.data[(y * self.width + x) * ch + c] = v;
    }
}

/// Render the SIF for one snapshot from its detections.
pub fn build_sif(
    time: f64,
    buildings: &[Cuboid],
    ms_pose: &Pose2D,
    mounts: &[CameraMount],
    detections: &[Detection],
    maxima: &SizeMaxima,
) -> SceneImageFeature {
    let cameras = mounts.len();
    let (w, h) = (mounts[0].image_width as usize, mounts[0].image_height as usize);
    let mut sif = SceneImageFeature {
        time,
        height: h,
        width: w,
        cameras,
        data: vec![0.0; h * w * 3 * cameras],
    };

    for (ci, mount) in mounts.iter().enumerate() {
        render_background(&mut sif, ci, buildings, ms_pose, mount);

        // painter's order: fill far vehicles first so near ones win overlaps
        let mut cam_dets: Vec<&Detection> =
            detections.iter().filter(|d| d.camera_index == ci).collect();
        cam_dets.sort_by(|a, b| b.center_ccs.y.total_cmp(&a.center_ccs.y));
        for det in cam_dets {
            fill_vehicle_mask(&mut sif, ci, det, ms_pose, mount, maxima);
        }
    }
    sif
}

fn render_background(
    sif: &mut SceneImageFeature,
    camera: usize,
    buildings: &[Cuboid],
    ms_pose: &Pose2D,
    mount: &CameraMount,
) {
    let cam_pos = ms_pose.to_world(mount.offset_in_mcs);
    let cam_azimuth = wrap_angle(ms_pose.azimuth + mount.azimuth_in_mcs);
    let f = mount.focal_px();
    let (w, h) = (sif.width, sif.height);
    for py in 0..h {
        for px in 0..w {
            let dir_ccs = Vec3::new(
                (px as f64 + 0.5 - w as f64 / 2.0) / f,
                1.0,
                (h as f64 / 2.0 - (py as f64 + 0.5)) / f,
            );
            let dir = rotate_azimuth(dir_ccs, cam_azimuth);
            let mut best: Option<(f64, usize)> = None;
            for b in buildings {
                if let Some((t, axis, _)) = b.ray_hit(cam_pos, dir) {
                    if best.map_or(true, |(bt, _)| t < bt) {
                        best = Some((t, axis));
                    }
                }
            }
            let gray = match best {
                Some((_, axis)) => FACE_GRAY[axis],
                None if dir.z < 0.0 => ROAD_GRAY,
                None => SKY_GRAY,
            };
            for c in 0..3 {
                sif.put(py, px, 3 * camera + c, gray);
            }
        }
    }
}

fn fill_vehicle_mask(
    sif: &mut SceneImageFeature,
    camera: usize,
    det: &Detection,
    ms_pose: &Pose2D,
    mount: &CameraMount,
    maxima: &SizeMaxima,
) {
    let (center_mcs, az_mcs) = ccs_to_mcs(det.center_ccs, det.azimuth_ccs, mount);
    let center_rcs = center_mcs + ms_pose.origin3();
    let shape = Cuboid::new(center_rcs, det.length, det.width, det.height, az_mcs + ms_pose.azimuth);
    let poly = project_cuboid(mount, ms_pose, &shape);
    if poly.is_empty() {
        return;
    }
    let triple = [
        (-255.0 * det.length / maxima.length) as f32,
        (-255.0 * det.width / maxima.width) as f32,
        (-255.0 * det.height / maxima.height) as f32,
    ];
    let min_x = poly.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let max_x = (poly.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil() as usize)
        .min(sif.width);
    let min_y = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let max_y = (poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil() as usize)
        .min(sif.height);
    for py in min_y..max_y {
        for px in min_x..max_x {
            let center = Vec2::new(px as f64 + 0.5, py as f64 + 0.5);
            if point_in_convex_polygon(center, &poly) {
                for c in 0..3 {
                    sif.put(py, px, 3 * camera + c, triple[c]);
                }
            }
        }
    }
}

/// S stacked consecutive SIFs, layout S x H x W x 3C.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqFeature {
    pub steps: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl SeqFeature {
    /// Slice of one time step.
    pub fn step(&self, s: usize) -> &[f32] {
        let stride = self.height * self.width * self.channels;
        &self.data[s * stride..(s + 1) * stride]
    }
}

/// Stack time-ordered SIFs along a leading time axis. The newest frame is
/// the last step. Timestamps must strictly ascend and shapes must match.
pub fn build_seq(sifs: &[&SceneImageFeature]) -> Result<SeqFeature> {
    if sifs.is_empty() {
        return Err(Error::invalid("sequence feature needs at least one frame"));
    }
    let first = sifs[0];
    for pair in sifs.windows(2) {
        if pair[1].time <= pair[0].time {
            return Err(Error::invalid("sequence frames must be in strictly ascending time order"));
        }
    }
    if sifs
        .iter()
        .any(|s| s.height != first.height || s.width != first.width || s.cameras != first.cameras)
    {
        return Err(Error::invalid("sequence frames must share one shape"));
    }
    let mut data = Vec::with_capacity(sifs.len() * first.data.len());
    for s in sifs {
        data.extend_from_slice(&s.data);
    }
    Ok(SeqFeature {
        steps: sifs.len(),
        height: first.height,
        width: first.width,
        channels: first.channels(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mount() -> CameraMount {
        CameraMount::new(Vec3::new(0.0, 0.0, 2.05), 0.0, PI / 2.0, 64, 24)
    }

    fn car_detection(y: f64) -> Detection {
        Detection {
            camera_index: 0,
            object_index: 0,
            length: 3.71,
            width: 1.79,
            height: 1.55,
            center_ccs: Vec3::new(0.0, y, 0.775 - 2.05),
            azimuth_ccs: 0.0,
        }
    }

    #[test]
    fn empty_scene_has_no_negative_pixels() {
        let sif = build_sif(
            0.0,
            &[],
            &Pose2D::new(0.0, 0.0, 0.0),
            &[mount()],
            &[],
            &SizeMaxima::default(),
        );
        assert!(sif.data.iter().all(|&v| v >= 0.0));
        // upper rows see sky, bottom rows the road
        assert_eq!(sif.at(0, 32, 0), SKY_GRAY);
        assert_eq!(sif.at(23, 32, 0), ROAD_GRAY);
    }

    #[test]
    fn car_mask_carries_size_triple() {
        let maxima = SizeMaxima::default();
        let det = car_detection(8.0);
        let sif = build_sif(
            0.0,
            &[],
            &Pose2D::new(0.0, 0.0, 0.0),
            &[mount()],
            &[det],
            &maxima,
        );
        let expect = [
            (-255.0 * 3.71 / 11.08) as f32,
            (-255.0 * 1.79 / 3.25) as f32,
            (-255.0 * 1.55 / 3.33) as f32,
        ];
        let mut negatives = 0;
        for y in 0..sif.height {
            for x in 0..sif.width {
                let px = [sif.at(y, x, 0), sif.at(y, x, 1), sif.at(y, x, 2)];
                if px[0] < 0.0 {
                    negatives += 1;
                    assert_eq!(px, expect);
                }
            }
        }
        assert!(negatives > 0, "mask did not rasterize");
    }

    #[test]
    fn buildings_shade_background() {
        let building = Cuboid::new(Vec3::new(0.0, 10.0, 5.0), 8.0, 4.0, 10.0, 0.0);
        let sif = build_sif(
            0.0,
            &[building],
            &Pose2D::new(0.0, 0.0, 0.0),
            &[mount()],
            &[],
            &SizeMaxima::default(),
        );
        // the wall fills the image center with the front-face gray
        assert_eq!(sif.at(12, 32, 0), FACE_GRAY[1]);
        assert!(sif.data.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn near_vehicle_wins_overlap() {
        let maxima = SizeMaxima::default();
        let far_car = car_detection(12.0);
        let near_van = Detection {
            camera_index: 0,
            object_index: 1,
            length: 5.20,
            width: 2.61,
            height: 2.47,
            center_ccs: Vec3::new(0.0, 6.0, 1.235 - 2.05),
            azimuth_ccs: 0.0,
        };
        let sif = build_sif(
            0.0,
            &[],
            &Pose2D::new(0.0, 0.0, 0.0),
            &[mount()],
            &[far_car, near_van],
            &maxima,
        );
        let van_triple = (-255.0 * 5.20 / 11.08) as f32;
        // image center is covered by both; the nearer van must win
        assert_eq!(sif.at(12, 32, 0), van_triple);
        // every negative pixel matches one of the two detection triples
        let car_triple = (-255.0 * 3.71 / 11.08) as f32;
        for y in 0..sif.height {
            for x in 0..sif.width {
                let v = sif.at(y, x, 0);
                if v < 0.0 {
                    assert!(v == van_triple || v == car_triple);
                }
            }
        }
    }

    #[test]
    fn seq_stacking_and_validation() {
        let maxima = SizeMaxima::default();
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let mounts = [mount()];
        let a = build_sif(0.0, &[], &pose, &mounts, &[], &maxima);
        let b = build_sif(0.05, &[], &pose, &mounts, &[car_detection(8.0)], &maxima);
        let c = build_sif(0.10, &[], &pose, &mounts, &[], &maxima);

        let single = build_seq(&[&a]).unwrap();
        assert_eq!(single.steps, 1);
        assert_eq!(single.data, a.data);

        let seq = build_seq(&[&a, &b, &c]).unwrap();
        assert_eq!(seq.steps, 3);
        // the last step is the newest frame
        assert_eq!(seq.step(2), c.data.as_slice());
        assert_eq!(seq.step(1), b.data.as_slice());

        assert!(build_seq(&[&c, &b, &a]).is_err());
        assert!(build_seq(&[]).is_err());
    }
}
