//! Shoebox scene description and sampling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rir::{calibrate_absorption, RirOptions};
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
const SABINE: f64 = 0.161;
const PLACEMENT_ATTEMPTS: usize = 1000;
const ROOM_RETRIES: usize = 10;

pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    /// Lx, Ly, Lz in metres; Lz is the height.
    pub dims: Point,
    pub t60: f64,
    pub absorption: f64,
    pub sound_speed: f64,
}

impl RoomSpec {
    pub fn new(dims: Point, t60: f64) -> Result<Self> {
        if dims.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("room dimensions must be positive, got {dims:?}")));
        }
        Ok(Self {
            dims,
            t60,
            absorption: absorption_from_t60(dims, t60)?,
            sound_speed: SPEED_OF_SOUND,
        })
    }

    pub fn floor_area(&self) -> f64 {
        self.dims[0] * self.dims[1]
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Smallest distance from `p` to any wall, negative when outside.
    pub fn wall_margin(&self, p: &Point) -> f64 {
        (0..3)
            .map(|i| p[i].min(self.dims[i] - p[i]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.wall_margin(p) > 0.0
    }
}

/// Inverse Sabine absorption, falling back to inverse Eyring when Sabine would reach 1.
pub fn absorption_from_t60(dims: Point, t60: f64) -> Result<f64> {
    if !(t60 > 0.0) {
        return Err(Error::InvalidArgument(format!("T60 must be positive, got {t60}")));
    }
    let volume: f64 = dims.iter().product();
    let [x, y, z] = dims;
    let surface = 2.0 * (x * y + x * z + y * z);
    let ratio = SABINE * volume / (surface * t60);
    Ok(if ratio < 1.0 { ratio } else { 1.0 - (-ratio).exp() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub center: Point,
    pub radius: f64,
    pub yaw: f64,
    pub mics: Vec<Point>,
}

impl ArrayGeometry {
    /// Horizontal uniform circular array; mic `i` sits at angle `yaw + 2πi/count`.
    pub fn circular(center: Point, radius: f64, count: usize, yaw: f64) -> Self {
        let mics = (0..count)
            .map(|i| {
                let a = yaw + 2.0 * PI * i as f64 / count as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin(), center[2]]
            })
            .collect();
        Self {
            center,
            radius,
            yaw,
            mics,
        }
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn mic_distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.mics[i], &self.mics[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub array: ArrayGeometry,
    pub target_pos: Point,
    pub noise_positions: Vec<Point>,
    pub snr_point: Vec<f64>,
    pub snr_diffuse: f64,
    pub rng_seed: u64,
}

/// How the wall absorption is derived from the sampled T60.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorptionModel {
    /// [`absorption_from_t60`] only.
    Sabine,
    /// Tune the absorption so the rendered target-to-array-center response decays in T60.
    #[default]
    IsmCalibrated,
}

/// Sampling distributions for [`sample_scene`]. Ranges are closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConstraints {
    pub area: (f64, f64),
    pub aspect: (f64, f64),
    pub height: (f64, f64),
    pub t60: (f64, f64),
    pub snr_point: (f64, f64),
    pub snr_diffuse: (f64, f64),
    pub noise_count: (usize, usize),
    pub min_separation: f64,
    pub wall_margin: f64,
    pub array_radius: f64,
    pub mic_count: usize,
    pub absorption: AbsorptionModel,
    /// Sample rate used for absorption calibration.
    pub sample_rate: u32,
}

impl Default for SceneConstraints {
    fn default() -> Self {
        Self {
            area: (10.0, 100.0),
            aspect: (0.5, 2.0),
            height: (2.5, 4.0),
            t60: (0.2, 0.6),
            snr_point: (0.0, 15.0),
            snr_diffuse: (12.0, 35.0),
            noise_count: (1, 4),
            min_separation: 0.5,
            wall_margin: 0.5,
            array_radius: 0.05,
            mic_count: 4,
            absorption: AbsorptionModel::default(),
            sample_rate: 16000,
        }
    }
}

impl SceneConstraints {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("area", self.area),
            ("aspect", self.aspect),
            ("height", self.height),
            ("t60", self.t60),
            ("snr_point", self.snr_point),
            ("snr_diffuse", self.snr_diffuse),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("spatializer.{name}: invalid range [{lo}, {hi}]")));
            }
        }
        for (name, (lo, _)) in [("area", self.area), ("aspect", self.aspect), ("height", self.height), ("t60", self.t60)] {
            if lo <= 0.0 {
                return Err(Error::Config(format!("spatializer.{name} must be positive")));
            }
        }
        if self.noise_count.0 < 1 || self.noise_count.0 > self.noise_count.1 {
            return Err(Error::Config(format!(
                "spatializer.noise_count: invalid range {:?}",
                self.noise_count
            )));
        }
        if self.mic_count < 2 || self.array_radius <= 0.0 || self.sample_rate == 0 {
            return Err(Error::Config("spatializer array needs ≥2 mics and a positive radius".into()));
        }
        if self.min_separation < 0.0 || self.wall_margin < 0.0 {
            return Err(Error::Config("spatializer separations must be non-negative".into()));
        }
        Ok(())
    }

    /// Checks a scene against every range; returns the names of violated fields.
    pub fn violations(&self, scene: &SceneSpec) -> Vec<String> {
        let tol = 1e-9;
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo - tol && v <= hi + tol;
        let mut bad = Vec::new();
        let room = &scene.room;
        if !within(room.floor_area(), self.area) {
            bad.push("room.area".to_string());
        }
        if !within(room.dims[0] / room.dims[1], self.aspect) {
            bad.push("room.aspect".to_string());
        }
        if !within(room.dims[2], self.height) {
            bad.push("room.height".to_string());
        }
        if !within(room.t60, self.t60) {
            bad.push("room.t60".to_string());
        }
        if !(room.absorption > 0.0 && room.absorption < 1.0) {
            bad.push("room.absorption".to_string());
        }
        let n = scene.noise_positions.len();
        if n < self.noise_count.0 || n > self.noise_count.1 || scene.snr_point.len() != n {
            bad.push("noise_count".to_string());
        }
        if scene.snr_point.iter().any(|&s| !within(s, self.snr_point)) {
            bad.push("snr_point".to_string());
        }
        if !within(scene.snr_diffuse, self.snr_diffuse) {
            bad.push("snr_diffuse".to_string());
        }
        if scene.array.mics.iter().any(|m| room.wall_margin(m) < self.wall_margin - tol) {
            bad.push("array.wall_margin".to_string());
        }
        let mut points = vec![scene.array.center, scene.target_pos];
        points.extend(scene.noise_positions.iter().copied());
        for (i, p) in points.iter().enumerate() {
            if room.wall_margin(p) < self.wall_margin - tol {
                bad.push(format!("position[{i}].wall_margin"));
            }
            for q in &points[i + 1..] {
                if distance(p, q) < self.min_separation - tol {
                    bad.push(format!("position[{i}].separation"));
                }
            }
        }
        bad
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn sample_position(rng: &mut ChaCha8Rng, room: &RoomSpec, margin: f64, z_range: (f64, f64)) -> Option<Point> {
    let lo = [margin, margin, z_range.0];
    let hi = [room.dims[0] - margin, room.dims[1] - margin, z_range.1];
    if (0..3).any(|i| lo[i] > hi[i]) {
        return None;
    }
    Some([uniform(rng, (lo[0], hi[0])), uniform(rng, (lo[1], hi[1])), uniform(rng, (lo[2], hi[2]))])
}

fn try_place(rng: &mut ChaCha8Rng, c: &SceneConstraints, room: &RoomSpec) -> Option<(ArrayGeometry, Vec<Point>)> {
    let margin = c.wall_margin;
    let z = (margin, room.dims[2] - margin);
    let center = sample_position(rng, room, margin + c.array_radius, z)?;
    let array = ArrayGeometry::circular(center, c.array_radius, c.mic_count, uniform(rng, (0.0, 2.0 * PI)));
    let count = rng.random_range(c.noise_count.0..=c.noise_count.1);
    let mut sources: Vec<Point> = Vec::with_capacity(count + 1);
    for _ in 0..=count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p = sample_position(rng, room, margin, z)?;
            // Clearing the array center by the radius keeps every mic at least the
            // separation away as well.
            let clear_array = distance(&p, &center) >= c.min_separation + c.array_radius;
            if clear_array && sources.iter().all(|q| distance(&p, q) >= c.min_separation) {
                sources.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some((array, sources))
}

/// Draws one scene. The same `seed` always yields the same scene.
pub fn sample_scene(seed: u64, constraints: &SceneConstraints) -> Result<SceneSpec> {
    constraints.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ROOM_RETRIES {
        let area = uniform(&mut rng, constraints.area);
        let aspect = uniform(&mut rng, constraints.aspect);
        let dims = [(area * aspect).sqrt(), (area / aspect).sqrt(), uniform(&mut rng, constraints.height)];
        let t60 = uniform(&mut rng, constraints.t60);
        let mut room = RoomSpec::new(dims, t60)?;
        let Some((array, mut sources)) = try_place(&mut rng, constraints, &room) else {
            continue;
        };
        let target_pos = sources.remove(0);
        if constraints.absorption == AbsorptionModel::IsmCalibrated {
            room.absorption =
                calibrate_absorption(&room, &target_pos, &array.center, constraints.sample_rate, RirOptions::default())?;
        }
        let snr_point = sources.iter().map(|_| uniform(&mut rng, constraints.snr_point)).collect();
        let snr_diffuse = uniform(&mut rng, constraints.snr_diffuse);
        return Ok(SceneSpec {
            room,
            array,
            target_pos,
            noise_positions: sources,
            snr_point,
            snr_diffuse,
            rng_seed: seed,
        });
    }
    Err(Error::BudgetExceeded(format!(
        "no valid placement after {ROOM_RETRIES} rooms of {PLACEMENT_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorption_matches_sabine_arithmetic() {
        let a = absorption_from_t60([5.0, 4.0, 3.0], 0.5).unwrap();
        assert!((a - 0.161 * 60.0 / (94.0 * 0.5)).abs() < 1e-12);
        assert!((a - 0.2055).abs() < 1e-4);
        assert!(absorption_from_t60([5.0, 4.0, 3.0], 1e9).unwrap() < 1e-8);
        let tiny = absorption_from_t60([1.0, 1.0, 1.0], 0.01).unwrap();
        assert!(tiny > 0.0 && tiny < 1.0);
        assert!(absorption_from_t60([1.0, 1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn circular_array_distances() {
        let arr = ArrayGeometry::circular([2.0, 2.0, 1.0], 0.05, 4, 0.3);
        let r = 0.05;
        for i in 0..4 {
            for j in i + 1..4 {
                let d = arr.mic_distance(i, j);
                let expect = if (j - i) % 2 == 0 { 2.0 * r } else { r * 2f64.sqrt() };
                assert!((d - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_scenes_respect_every_range() {
        let c = SceneConstraints::default();
        for seed in 0..50 {
            let scene = sample_scene(seed, &c).unwrap();
            assert!(c.violations(&scene).is_empty(), "seed {seed}: {:?}", c.violations(&scene));
            assert_eq!(scene.array.num_mics(), 4);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = SceneConstraints::default();
        let a = serde_json::to_string(&sample_scene(42, &c).unwrap()).unwrap();
        let b = serde_json::to_string(&sample_scene(42, &c).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, serde_json::to_string(&sample_scene(43, &c).unwrap()).unwrap());
    }

    #[test]
    fn impossible_constraints_exhaust_the_budget() {
        let c = SceneConstraints {
            area: (1.2, 1.2),
            aspect: (1.0, 1.0),
            height: (2.5, 2.5),
            noise_count: (4, 4),
            ..Default::default()
        };
        assert!(matches!(sample_scene(1, &c), Err(Error::BudgetExceeded(_))));
    }
}
