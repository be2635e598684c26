//! Learning inputs derived from snapshots: simulated 3D detections, the
//! grid-quantized vehicle distribution feature (VDF), the rendered scene
//! image feature (SIF, in [`sif`]), and beam-coherence-time labels
//! (in [`bct`]).
//!
//! The detector stand-in returns ground-truth boxes expressed in each
//! camera's frame with injectable Gaussian noise, which isolates the
//! communication-side pipeline from vision-model quality and doubles as a
//! detector-robustness knob.

pub mod bct;
pub mod sif;

use crate::geometry::{ccs_to_mcs, wrap_angle, CameraMount, Rect, Vec2, Vec3};
use crate::scenario::{LaneSpec, Snapshot};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One detected vehicle, expressed in the frame of the camera that saw it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub camera_index: usize,
    pub object_index: usize,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub center_ccs: Vec3,
    pub azimuth_ccs: f64,
}

/// Standard deviations of the additive detector noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionNoise {
    pub center_std: f64,
    pub size_std: f64,
    pub azimuth_std: f64,
}

impl Default for DetectionNoise {
    fn default() -> Self {
        DetectionNoise { center_std: 0.1, size_std: 0.05, azimuth_std: 0.0175 }
    }
}

impl DetectionNoise {
    pub const NONE: DetectionNoise =
        DetectionNoise { center_std: 0.0, size_std: 0.0, azimuth_std: 0.0 };

    pub fn validate(&self) -> crate::Result<()> {
        if self.center_std < 0.0 || self.size_std < 0.0 || self.azimuth_std < 0.0 {
            return Err(crate::Error::config(
                "features.detection_noise",
                "standard deviations must be nonnegative",
            ));
        }
        Ok(())
    }
}

/// Normalization maxima for vehicle dimensions (defaults: the bus).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeMaxima {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for SizeMaxima {
    fn default() -> Self {
        SizeMaxima { length: 11.08, width: 3.25, height: 3.33 }
    }
}

fn sample_noise<R: Rng>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// Heading of the point `(x, y)` seen from the origin, clockwise from +Y.
fn bearing(x: f64, y: f64) -> f64 {
    x.atan2(y)
}

/// Ground-truth 3D boxes of every vehicle except the MS, assigned to the
/// camera whose half-open view sector `[-hfov/2, hfov/2)` contains the
/// vehicle center, expressed in that camera's frame, with zero-mean Gaussian
/// noise added per the noise config. Noisy sizes are clamped positive; the
/// rare detection whose noisy center falls behind its camera is dropped.
pub fn detect_vehicles<R: Rng>(
    snapshot: &Snapshot,
    mounts: &[CameraMount],
    noise: &DetectionNoise,
    rng: &mut R,
) -> Vec<Detection> {
    let ms = snapshot.ms_pose.origin3();
    let mut detections = Vec::new();
    let mut per_camera_count = vec![0usize; mounts.len()];
    for (vi, v) in snapshot.vehicles.iter().enumerate() {
        if vi == snapshot.ms_index {
            continue;
        }
        let (l, w, h) = v.kind.dims();
        let center_rcs = Vec3::new(v.pose.x, v.pose.y, h / 2.0);
        let center_mcs = center_rcs - ms;
        let angle = bearing(center_mcs.x, center_mcs.y);
        for (ci, mount) in mounts.iter().enumerate() {
            let diff = wrap_angle(angle - mount.azimuth_in_mcs);
            if diff < -mount.hfov / 2.0 || diff >= mount.hfov / 2.0 {
                continue;
            }
            let local =
                crate::geometry::rotate_azimuth(center_mcs - mount.offset_in_mcs, -mount.azimuth_in_mcs);
            let azimuth_ccs = wrap_angle(v.pose.azimuth - mount.azimuth_in_mcs);
            let center = Vec3::new(
                local.x + sample_noise(rng, noise.center_std),
                local.y + sample_noise(rng, noise.center_std),
                local.z + sample_noise(rng, noise.center_std),
            );
            if center.y <= 0.0 {
                break;
            }
            detections.push(Detection {
                camera_index: ci,
                object_index: per_camera_count[ci],
                length: (l + sample_noise(rng, noise.size_std)).max(0.05),
                width: (w + sample_noise(rng, noise.size_std)).max(0.05),
                height: (h + sample_noise(rng, noise.size_std)).max(0.05),
                center_ccs: center,
                azimuth_ccs: wrap_angle(azimuth_ccs + sample_noise(rng, noise.azimuth_std)),
            });
            per_camera_count[ci] += 1;
            break;
        }
    }
    detections
}

/// Grid sizing and the region the grid may cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    pub cell_length: f64,
    pub cell_width: f64,
    pub region: Rect,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            cell_length: 11.7,
            cell_width: 2.0,
            region: Rect::new(Vec2::new(0.0, -20.0), Vec2::new(15.0, 20.0)),
        }
    }
}

/// The resolved grid: integer cell anchors `(i_y, i_x)` of exactly the cells
/// that intersect a traffic lane within the region, ordered row-major
/// ascending by `i_y` then `i_x`. Cell `g` covers the half-open box
/// `[i_x L, (i_x+1) L) x [i_y W, (i_y+1) W)` anchored at the RCS origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub cell_length: f64,
    pub cell_width: f64,
    pub cells: Vec<(i64, i64)>,
}

impl GridConfig {
    pub fn from_lanes(params: &GridParams, lanes: &[LaneSpec]) -> Self {
        let (l, w) = (params.cell_length, params.cell_width);
        assert!(l > 0.0 && w > 0.0);
        let mut cells: Vec<(i64, i64)> = Vec::new();
        for lane in lanes {
            let b = lane.bounds();
            let clipped = Rect {
                min: Vec2::new(b.min.x.max(params.region.min.x), b.min.y.max(params.region.min.y)),
                max: Vec2::new(b.max.x.min(params.region.max.x), b.max.y.min(params.region.max.y)),
            };
            if clipped.min.x >= clipped.max.x || clipped.min.y >= clipped.max.y {
                continue;
            }
            let ix0 = (clipped.min.x / l).floor() as i64;
            let ix1 = (clipped.max.x / l).ceil() as i64;
            let iy0 = (clipped.min.y / w).floor() as i64;
            let iy1 = (clipped.max.y / w).ceil() as i64;
            for iy in iy0..iy1 {
                for ix in ix0..ix1 {
                    let cell = Rect::new(
                        Vec2::new(ix as f64 * l, iy as f64 * w),
                        Vec2::new((ix + 1) as f64 * l, (iy + 1) as f64 * w),
                    );
                    if cell.intersects(&clipped) {
                        cells.push((iy, ix));
                    }
                }
            }
        }
        cells.sort_unstable();
        cells.dedup();
        GridConfig { cell_length: l, cell_width: w, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell index for a ground-plane point, if it falls in a grid cell.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        let ix = (x / self.cell_length).floor() as i64;
        let iy = (y / self.cell_width).floor() as i64;
        self.cells.binary_search(&(iy, ix)).ok()
    }
}

/// The G x 4 vehicle distribution feature: per-cell normalized maxima of
/// detected vehicle length/width/height plus the arithmetic mean azimuth in
/// the RSU frame. Empty cells are zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Vdf {
    pub rows: usize,
    /// Row-major G x 4.
    pub data: Vec<f64>,
}

impl Vdf {
    pub fn zeros(rows: usize) -> Self {
        Vdf { rows, data: vec![0.0; rows * 4] }
    }

    pub fn row(&self, g: usize) -> &[f64] {
        &self.data[g * 4..(g + 1) * 4]
    }
}

/// Build the VDF from per-camera detections and the MS plane location.
/// Detections transform CCS -> MCS -> RCS; each lands in the half-open grid
/// cell containing its ground-plane center, or is ignored if it falls
/// outside every cell. Normalized size columns are clamped to [0, 1] (noisy
/// sizes can exceed the class maxima); the azimuth column stays in raw
/// radians.
pub fn build_vdf(
    detections: &[Detection],
    mounts: &[CameraMount],
    ms_location: Vec2,
    grid: &GridConfig,
    maxima: &SizeMaxima,
) -> Vdf {
    let g = grid.len();
    let mut max_dims = vec![[0.0f64; 3]; g];
    let mut az_sum = vec![0.0f64; g];
    let mut count = vec![0usize; g];
    let ms3 = Vec3::new(ms_location.x, ms_location.y, 0.0);
    for det in detections {
        let mount = &mounts[det.camera_index];
        let (center_mcs, az_mcs) = ccs_to_mcs(det.center_ccs, det.azimuth_ccs, mount);
        let center_rcs = center_mcs + ms3;
        let Some(cell) = grid.cell_of(center_rcs.x, center_rcs.y) else {
            continue;
        };
        max_dims[cell][0] = max_dims[cell][0].max(det.length);
        max_dims[cell][1] = max_dims[cell][1].max(det.width);
        max_dims[cell][2] = max_dims[cell][2].max(det.height);
        az_sum[cell] += az_mcs;
        count[cell] += 1;
    }
    let mut vdf = Vdf::zeros(g);
    for cell in 0..g {
        if count[cell] == 0 {
            continue;
        }
        let row = &mut vdf.data[cell * 4..cell * 4 + 4];
        row[0] = (max_dims[cell][0] / maxima.length).clamp(0.0, 1.0);
        row[1] = (max_dims[cell][1] / maxima.width).clamp(0.0, 1.0);
        row[2] = (max_dims[cell][2] / maxima.height).clamp(0.0, 1.0);
        row[3] = az_sum[cell] / count[cell] as f64;
    }
    vdf
}

/// Feature-building knobs carried by the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub image_width: u32,
    pub image_height: u32,
    /// Number of consecutive snapshots stacked into the BCT input feature.
    pub seq_len: usize,
    pub detection_noise: DetectionNoise,
    /// Whether generated datasets carry the rendered SIF per record.
    pub store_sif: bool,
    pub maxima: SizeMaxima,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            image_width: 320,
            image_height: 120,
            seq_len: 3,
            detection_noise: DetectionNoise::default(),
            store_sif: true,
            maxima: SizeMaxima::default(),
        }
    }
}
