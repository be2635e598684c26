//! Seeded traffic-scene generation and time evolution.
//!
//! A scenario holds straight lanes, randomly placed vehicles with a
//! car-following speed clamp, one MS vehicle carrying the camera rig and the
//! receive array, the RSU, and a row of static buildings that act as
//! reflectors and image background. The MS crosses the RSU coverage
//! rectangle while snapshots are taken every `snapshot_interval` seconds.
//!
//! All randomness flows from the scenario seed; spawning and stepping are
//! deterministic, so distinct scenarios can be generated in parallel.

use crate::channel::{Material, Obstacle};
use crate::geometry::{CameraMount, Cuboid, Pose2D, Rect, Vec2, Vec3};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The three vehicle classes and their body dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleKind {
    Car,
    Van,
    Bus,
}

impl VehicleKind {
    pub const ALL: [VehicleKind; 3] = [VehicleKind::Car, VehicleKind::Van, VehicleKind::Bus];

    /// (length, width, height)
    pub fn dims(self) -> (f64, f64, f64) {
        match self {
            VehicleKind::Car => (3.71, 1.79, 1.55),
            VehicleKind::Van => (5.20, 2.61, 2.47),
            VehicleKind::Bus => (11.08, 3.25, 3.33),
        }
    }

    pub fn length(self) -> f64 {
        self.dims().0
    }

    pub fn height(self) -> f64 {
        self.dims().2
    }
}

/// A straight lane segment; traffic flows from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    pub id: u32,
    pub start: Vec2,
    pub end: Vec2,
    pub width: f64,
}

impl LaneSpec {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Unit travel direction.
    pub fn direction(&self) -> Vec2 {
        let d = self.end - self.start;
        let n = d.norm();
        Vec2::new(d.x / n, d.y / n)
    }

    /// Heading of the travel direction (clockwise from +Y).
    pub fn azimuth(&self) -> f64 {
        let d = self.direction();
        d.x.atan2(d.y)
    }

    /// Point at arclength `s` from the start.
    pub fn point(&self, s: f64) -> Vec2 {
        let d = self.direction();
        Vec2::new(self.start.x + d.x * s, self.start.y + d.y * s)
    }

    /// The lane footprint polygon as a rectangle (lanes are axis-parallel in
    /// the default layouts; general lanes get their bounding box).
    pub fn bounds(&self) -> Rect {
        let half = self.width / 2.0;
        let (lo_x, hi_x) = if self.start.x <= self.end.x {
            (self.start.x, self.end.x)
        } else {
            (self.end.x, self.start.x)
        };
        let (lo_y, hi_y) = if self.start.y <= self.end.y {
            (self.start.y, self.end.y)
        } else {
            (self.end.y, self.start.y)
        };
        Rect::new(Vec2::new(lo_x - half, lo_y - half), Vec2::new(hi_x + half, hi_y + half))
    }
}

/// A row of identical building cuboids along the Y axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingRow {
    pub x_center: f64,
    pub y_start: f64,
    pub count: usize,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub gap: f64,
}

impl BuildingRow {
    pub fn cuboids(&self) -> Vec<Cuboid> {
        (0..self.count)
            .map(|i| {
                let y = self.y_start + i as f64 * (self.length + self.gap) + self.length / 2.0;
                Cuboid::new(
                    Vec3::new(self.x_center, y, self.height / 2.0),
                    self.length,
                    self.width,
                    self.height,
                    0.0,
                )
            })
            .collect()
    }
}

/// Vehicles to spawn on a set of lanes (one entry per driving-direction
/// group in the default layout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnGroup {
    pub lanes: Vec<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub lanes: Vec<LaneSpec>,
    pub spawn_groups: Vec<SpawnGroup>,
    /// Lane index the MS drives on; must run in the +Y direction so the MS
    /// frame stays axis-parallel to the RSU frame.
    pub ms_lane: usize,
    pub speed_range: (f64, f64),
    pub gap_min: f64,
    pub coverage_length: f64,
    pub coverage_width: f64,
    pub rsu_height: f64,
    pub camera_count: usize,
    pub camera_height_above_roof: f64,
    pub antenna_height_above_roof: f64,
    /// Camera shooting interval T_d, seconds.
    pub snapshot_interval: f64,
    /// Simulation horizon for one trajectory, seconds.
    pub horizon: f64,
    /// How far before the coverage entry edge the MS starts, meters.
    pub ms_start_offset: f64,
    pub buildings: Vec<BuildingRow>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let lane = |id: u32, x: f64, dir_up: bool| {
            let (y0, y1) = if dir_up { (-60.0, 60.0) } else { (60.0, -60.0) };
            LaneSpec { id, start: Vec2::new(x, y0), end: Vec2::new(x, y1), width: 3.5 }
        };
        ScenarioConfig {
            lanes: vec![
                lane(0, 2.0, false),
                lane(1, 5.5, true),
                lane(2, 9.5, false),
                lane(3, 13.0, true),
            ],
            spawn_groups: vec![
                SpawnGroup { lanes: vec![0, 2], count: 15 },
                SpawnGroup { lanes: vec![1, 3], count: 15 },
            ],
            ms_lane: 1,
            speed_range: (8.0, 15.0),
            gap_min: 2.0,
            coverage_length: 30.0,
            coverage_width: 15.0,
            rsu_height: 3.0,
            camera_count: 4,
            camera_height_above_roof: 0.5,
            antenna_height_above_roof: 0.05,
            snapshot_interval: 0.05,
            horizon: 30.0,
            ms_start_offset: 8.0,
            buildings: vec![
                BuildingRow {
                    x_center: -4.0,
                    y_start: -40.0,
                    count: 7,
                    length: 8.0,
                    width: 4.0,
                    height: 10.0,
                    gap: 4.0,
                },
                BuildingRow {
                    x_center: 19.0,
                    y_start: -40.0,
                    count: 7,
                    length: 8.0,
                    width: 4.0,
                    height: 10.0,
                    gap: 4.0,
                },
            ],
        }
    }
}

impl ScenarioConfig {
    /// Coverage rectangle: the RSU sits at the midpoint of its long edge,
    /// which lies on the x = 0 line of the RSU frame.
    pub fn coverage(&self) -> Rect {
        Rect::new(
            Vec2::new(0.0, -self.coverage_length / 2.0),
            Vec2::new(self.coverage_width, self.coverage_length / 2.0),
        )
    }
}

/// One vehicle: kind, lane, arclength position along the lane, and speeds.
/// `speed` is the clamped speed actually driven last step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    pub kind: VehicleKind,
    pub lane: usize,
    pub s: f64,
    pub desired_speed: f64,
    pub speed: f64,
}

/// A generated traffic scene at some simulation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub config: ScenarioConfig,
    pub rsu_pose: Vec3,
    pub static_buildings: Vec<Cuboid>,
    pub vehicles: Vec<Vehicle>,
    pub ms_index: usize,
    pub coverage: Rect,
    pub camera_mounts: Vec<CameraMount>,
    pub time: f64,
}

/// Pose snapshot of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehiclePose {
    pub kind: VehicleKind,
    pub pose: Pose2D,
    pub speed: f64,
}

/// The per-interval sampling product: everything downstream stages need,
/// detached from the evolving scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub vehicles: Vec<VehiclePose>,
    pub ms_index: usize,
    pub ms_pose: Pose2D,
    pub ms_true_location: Vec2,
}

/// Body cuboid of a vehicle at a pose.
pub fn vehicle_cuboid(kind: VehicleKind, pose: &Pose2D) -> Cuboid {
    let (l, w, h) = kind.dims();
    Cuboid::new(Vec3::new(pose.x, pose.y, h / 2.0), l, w, h, pose.azimuth)
}

impl Snapshot {
    pub fn ms_kind(&self) -> VehicleKind {
        self.vehicles[self.ms_index].kind
    }

    /// Blockers/reflectors for channel tracing: every vehicle body except
    /// the MS's own (its array sits above the roof), plus the buildings.
    pub fn obstacles(&self, buildings: &[Cuboid]) -> Vec<Obstacle> {
        let mut out: Vec<Obstacle> = self
            .vehicles
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.ms_index)
            .map(|(_, v)| Obstacle {
                shape: vehicle_cuboid(v.kind, &v.pose),
                material: Material::Metal,
            })
            .collect();
        out.extend(buildings.iter().map(|b| Obstacle { shape: *b, material: Material::Concrete }));
        out
    }

    /// MS receive-array position.
    pub fn ms_antenna(&self, antenna_height_above_roof: f64) -> Vec3 {
        let roof = self.ms_kind().height();
        Vec3::new(self.ms_pose.x, self.ms_pose.y, roof + antenna_height_above_roof)
    }
}

fn build_mounts(cfg: &ScenarioConfig, resolution: (u32, u32)) -> Vec<CameraMount> {
    let roof = VehicleKind::Car.height();
    let sector = 2.0 * PI / cfg.camera_count as f64;
    (0..cfg.camera_count)
        .map(|i| {
            CameraMount::new(
                Vec3::new(0.0, 0.0, roof + cfg.camera_height_above_roof),
                sector * i as f64,
                sector,
                resolution.0,
                resolution.1,
            )
        })
        .collect()
}

/// Cyclic front gap from `rear` to `lead` along a lane of length `len`,
/// measured bumper to bumper.
fn front_gap(rear: &Vehicle, lead: &Vehicle, len: f64) -> f64 {
    let mut ds = lead.s - rear.s;
    if ds <= 0.0 {
        ds += len;
    }
    ds - lead.kind.length() / 2.0 - rear.kind.length() / 2.0
}

impl Scenario {
    pub fn vehicle_pose(&self, v: &Vehicle) -> Pose2D {
        let lane = &self.config.lanes[v.lane];
        let p = lane.point(v.s);
        Pose2D::new(p.x, p.y, lane.azimuth())
    }

    pub fn ms_pose(&self) -> Pose2D {
        self.vehicle_pose(&self.vehicles[self.ms_index])
    }

    pub fn snapshot(&self) -> Snapshot {
        let vehicles: Vec<VehiclePose> = self
            .vehicles
            .iter()
            .map(|v| VehiclePose { kind: v.kind, pose: self.vehicle_pose(v), speed: v.speed })
            .collect();
        let ms_pose = vehicles[self.ms_index].pose;
        Snapshot {
            time: self.time,
            vehicles,
            ms_index: self.ms_index,
            ms_pose,
            ms_true_location: Vec2::new(ms_pose.x, ms_pose.y),
        }
    }

    /// Advance every vehicle by `dt` at constant desired speed, clamped so
    /// the front gap to the (cyclic) leader stays at or above `gap_min`.
    pub fn step(&mut self, dt: f64) {
        assert!(dt > 0.0);
        let n_lanes = self.config.lanes.len();
        let gap_min = self.config.gap_min;
        let mut new_speed: Vec<f64> = self.vehicles.iter().map(|v| v.desired_speed).collect();
        for lane in 0..n_lanes {
            let len = self.config.lanes[lane].length();
            let mut idx: Vec<usize> = (0..self.vehicles.len())
                .filter(|&i| self.vehicles[i].lane == lane)
                .collect();
            if idx.len() < 2 {
                continue;
            }
            idx.sort_by(|&a, &b| self.vehicles[a].s.total_cmp(&self.vehicles[b].s));
            let m = idx.len();
            // update front-to-back so each follower sees its leader's speed
            // for this step; the frontmost uses its leader's previous speed
            for pos in (0..m).rev() {
                let me = idx[pos];
                let lead = idx[(pos + 1) % m];
                let lead_speed =
                    if pos == m - 1 { self.vehicles[lead].speed } else { new_speed[lead] };
                let gap = front_gap(&self.vehicles[me], &self.vehicles[lead], len);
                let allowed = lead_speed + (gap - gap_min).max(0.0) / dt;
                new_speed[me] = self.vehicles[me].desired_speed.min(allowed).max(0.0);
            }
        }
        for (v, speed) in self.vehicles.iter_mut().zip(new_speed) {
            v.speed = speed;
            let len = self.config.lanes[v.lane].length();
            v.s = (v.s + speed * dt).rem_euclid(len);
        }
        self.time += dt;
    }
}

/// Generate a scenario from a seed. Vehicle kinds are uniform, longitudinal
/// placement is rejection-sampled with the minimum gap, and the MS is a car
/// placed `ms_start_offset` before the coverage entry edge of its lane.
pub fn spawn_scenario(seed: u64, config: &ScenarioConfig, resolution: (u32, u32)) -> Result<Scenario> {
    if config.lanes.is_empty() {
        return Err(Error::config("scenario.lanes", "at least one lane required"));
    }
    if config.ms_lane >= config.lanes.len() {
        return Err(Error::config("scenario.ms_lane", "lane index out of range"));
    }
    let ms_lane = &config.lanes[config.ms_lane];
    if ms_lane.azimuth().abs() > 1e-9 {
        return Err(Error::config(
            "scenario.ms_lane",
            "the MS lane must run in the +Y direction",
        ));
    }
    for g in &config.spawn_groups {
        if let Some(&l) = g.lanes.iter().find(|&&l| l >= config.lanes.len()) {
            return Err(Error::config("scenario.spawn_groups", format!("lane {l} out of range")));
        }
    }
    if config.speed_range.0 > config.speed_range.1 || config.speed_range.0 < 0.0 {
        return Err(Error::config("scenario.speed_range", "need 0 <= lo <= hi"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coverage = config.coverage();
    let mut vehicles: Vec<Vehicle> = Vec::new();

    // the MS first: a car, placed before the coverage entry edge
    let entry_y = coverage.min.y;
    let ms_s = (entry_y - config.ms_start_offset) - ms_lane.start.y;
    if ms_s < 0.0 || ms_s > ms_lane.length() {
        return Err(Error::config("scenario.ms_start_offset", "MS start falls outside its lane"));
    }
    let ms_speed = rng.random_range(config.speed_range.0..=config.speed_range.1);
    vehicles.push(Vehicle {
        kind: VehicleKind::Car,
        lane: config.ms_lane,
        s: ms_s,
        desired_speed: ms_speed,
        speed: ms_speed,
    });
    let ms_index = 0;

    for (gi, group) in config.spawn_groups.iter().enumerate() {
        for _ in 0..group.count {
            let kind = VehicleKind::ALL[rng.random_range(0..3)];
            let speed = rng.random_range(config.speed_range.0..=config.speed_range.1);
            let mut placed = false;
            for _attempt in 0..400 {
                let lane_idx = group.lanes[rng.random_range(0..group.lanes.len())];
                let lane = &config.lanes[lane_idx];
                let s = rng.random_range(0.0..lane.length());
                let candidate =
                    Vehicle { kind, lane: lane_idx, s, desired_speed: speed, speed };
                let len = lane.length();
                let ok = vehicles.iter().filter(|v| v.lane == lane_idx).all(|v| {
                    front_gap(v, &candidate, len) >= config.gap_min
                        && front_gap(&candidate, v, len) >= config.gap_min
                });
                if ok {
                    vehicles.push(candidate);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::config(
                    format!("scenario.spawn_groups[{gi}]"),
                    "lanes cannot fit the requested vehicle count with the minimum gap",
                ));
            }
        }
    }

    Ok(Scenario {
        seed,
        config: config.clone(),
        rsu_pose: Vec3::new(0.0, 0.0, config.rsu_height),
        static_buildings: config.buildings.iter().flat_map(BuildingRow::cuboids).collect(),
        vehicles,
        ms_index,
        coverage,
        camera_mounts: build_mounts(config, resolution),
        time: 0.0,
    })
}

/// Step the scenario at the camera interval and collect one snapshot per
/// step during which the MS is inside the coverage rectangle. Fails if the
/// MS never enters coverage within the horizon.
pub fn sample_trajectory(scenario: &Scenario) -> Result<Vec<Snapshot>> {
    let td = scenario.config.snapshot_interval;
    assert!(td > 0.0);
    let mut sim = scenario.clone();
    let steps = (scenario.config.horizon / td).ceil() as usize;
    let mut snapshots = Vec::new();
    let mut entered = false;
    for i in 0..=steps {
        sim.time = i as f64 * td; // exact multiples of T_d
        let snap = sim.snapshot();
        let inside = sim.coverage.contains(snap.ms_true_location);
        if inside {
            entered = true;
            snapshots.push(snap);
        } else if entered {
            break;
        }
        sim.step(td);
        sim.time = (i + 1) as f64 * td;
    }
    if !entered {
        return Err(Error::invalid(format!(
            "MS never entered coverage within the {}s horizon",
            scenario.config.horizon
        )));
    }
    Ok(snapshots)
}
