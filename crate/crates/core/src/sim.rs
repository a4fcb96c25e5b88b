//! Synthetic 2D radar world.
//!
//! Point scatterers are scattered uniformly over a square; a vehicle drives a
//! closed circuit through them and a simulated scanning radar renders one
//! [`PolarScan`] per pose. Repeat and reverse revisits of the circuit give
//! ground-truth loop closures of both kinds.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scan::{load_scan, save_scan, PolarScan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub x: f64,
    pub y: f64,
    pub reflectivity: f64,
}

/// Axis-aligned bounding box in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Extent {
    pub fn square(side: f64) -> Self {
        let h = side / 2.0;
        Self {
            min_x: -h,
            max_x: h,
            min_y: -h,
            max_y: h,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.min_x..=self.max_x).contains(&x) && (self.min_y..=self.max_y).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub scatterers: Vec<Scatterer>,
    pub extent: Extent,
    pub seed: u64,
}

/// Scatter `n_scatterers` reflectors uniformly over a square of side `extent`
/// centred on the origin. Reflectivity is uniform in (0.2, 1].
pub fn generate_world(seed: u64, n_scatterers: usize, extent: f64) -> Result<WorldMap> {
    if n_scatterers == 0 {
        return Err(Error::InvalidConfig(
            "world needs at least one scatterer".into(),
        ));
    }
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "world extent must be positive, got {extent}"
        )));
    }
    let bounds = Extent::square(extent);
    let mut rng = rng::stream(seed, "world", 0);
    let scatterers = (0..n_scatterers)
        .map(|_| {
            let x = bounds.min_x + rng.random::<f64>() * extent;
            let y = bounds.min_y + rng.random::<f64>() * extent;
            let reflectivity = 1.0 - 0.8 * rng.random::<f64>();
            Scatterer { x, y, reflectivity }
        })
        .collect();
    Ok(WorldMap {
        scatterers,
        extent: bounds,
        seed,
    })
}

/// Builds the world described by `spec`. With `clusters == 0` this is exactly
/// [`generate_world`]; otherwise a `cluster_fraction` share of the reflectors
/// is gathered into blobs of random size, so different places have different
/// density profiles.
pub fn generate_world_from(seed: u64, spec: &WorldSpec) -> Result<WorldMap> {
    let mut map = generate_world(seed, spec.n_scatterers, spec.extent_m)?;
    if spec.clusters == 0 {
        return Ok(map);
    }
    let bounds = map.extent;
    let mut rng = rng::stream(seed, "world", 1);
    let centres: Vec<(f64, f64, f64)> = (0..spec.clusters)
        .map(|_| {
            let x = bounds.min_x + rng.random::<f64>() * spec.extent_m;
            let y = bounds.min_y + rng.random::<f64>() * spec.extent_m;
            let radius = spec.cluster_radius_m * (0.25 + 1.5 * rng.random::<f64>());
            (x, y, radius)
        })
        .collect();
    let moved = (spec.n_scatterers as f64 * spec.cluster_fraction).round() as usize;
    for s in map.scatterers.iter_mut().take(moved) {
        let (cx, cy, radius) = centres[rng.random_range(0..centres.len())];
        // redraw until the point falls inside the world
        loop {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let (x, y) = (cx + radius * dx, cy + radius * dy);
            if bounds.contains(x, y) {
                s.x = x;
                s.y = y;
                break;
            }
        }
    }
    Ok(map)
}

/// Planar ground-truth pose. Heading is kept in [-π, π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Absolute heading difference folded into [0, π].
    pub fn heading_difference(&self, other: &Pose) -> f64 {
        normalize_angle(self.heading - other.heading).abs()
    }
}

/// Wrap an angle into [-π, π).
pub fn normalize_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(TAU) - PI;
    if t >= PI {
        t - TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    LoopRepeat,
    LoopReverse,
    FigureEight,
}

impl RouteKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RouteKind::LoopRepeat => "loop_repeat",
            RouteKind::LoopReverse => "loop_reverse",
            RouteKind::FigureEight => "figure_eight",
        }
    }
}

impl fmt::Display for RouteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RouteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loop_repeat" => Ok(RouteKind::LoopRepeat),
            "loop_reverse" => Ok(RouteKind::LoopReverse),
            "figure_eight" => Ok(RouteKind::FigureEight),
            other => Err(Error::InvalidConfig(format!(
                "unknown route kind `{other}`"
            ))),
        }
    }
}

/// Everything needed to lay out a drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouteSpec {
    pub kind: RouteKind,
    /// Total driven path length in metres; both laps together.
    pub length_m: f64,
    pub speed_mps: f64,
    pub frame_period_s: f64,
    /// Lateral offset of the reverse lap (driving on the other side of the road).
    pub lane_offset_m: f64,
    /// Peak lateral wander of the second lap of repeat routes.
    pub jitter_m: f64,
}

impl Default for RouteSpec {
    fn default() -> Self {
        Self {
            kind: RouteKind::LoopReverse,
            length_m: 1500.0 * 1.25,
            speed_mps: 5.0,
            frame_period_s: 0.25,
            lane_offset_m: 4.0,
            jitter_m: 0.8,
        }
    }
}

impl RouteSpec {
    pub fn spacing(&self) -> f64 {
        self.speed_mps * self.frame_period_s
    }

    /// Number of poses the route produces.
    pub fn frames(&self) -> usize {
        (self.length_m / self.spacing()).round() as usize
    }

    /// Set the path length so that the route yields exactly `frames` poses.
    pub fn with_frames(mut self, frames: usize) -> Self {
        self.length_m = frames as f64 * self.spacing();
        self
    }

    /// Perimeter of the underlying closed circuit (two laps per route).
    pub fn circuit_length(&self) -> f64 {
        self.frames() as f64 * self.spacing() / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "speed must be positive, got {}",
                self.speed_mps
            )));
        }
        if !(self.frame_period_s > 0.0 && self.frame_period_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "frame period must be positive, got {}",
                self.frame_period_s
            )));
        }
        if !(self.jitter_m.abs() <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lateral jitter must be at most 1 m, got {}",
                self.jitter_m
            )));
        }
        if self.frames() < 2 {
            return Err(Error::InvalidConfig(format!(
                "route of {} m at {} m spacing yields fewer than two poses",
                self.length_m,
                self.spacing()
            )));
        }
        Ok(())
    }
}

/// Closed curve sampled densely and parametrised by arc length.
struct Circuit {
    points: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl Circuit {
    fn from_fn(samples: usize, f: impl Fn(f64) -> (f64, f64)) -> Self {
        let mut points: Vec<(f64, f64)> = (0..=samples)
            .map(|i| f(i as f64 / samples as f64))
            .collect();
        // close exactly
        points[samples] = points[0];
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            acc += (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            cumulative.push(acc);
        }
        Self { points, cumulative }
    }

    fn perimeter(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn scaled(mut self, perimeter: f64) -> Self {
        let k = perimeter / self.perimeter();
        for p in &mut self.points {
            p.0 *= k;
            p.1 *= k;
        }
        for c in &mut self.cumulative {
            *c *= k;
        }
        self
    }

    /// Position and direction of travel at arc length `s` (wrapped).
    fn at(&self, s: f64) -> (f64, f64, f64) {
        let s = s.rem_euclid(self.perimeter());
        let i = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let (x0, y0) = self.points[i];
        let (x1, y1) = self.points[i + 1];
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = if seg > 0.0 {
            (s - self.cumulative[i]) / seg
        } else {
            0.0
        };
        (
            x0 + t * (x1 - x0),
            y0 + t * (y1 - y0),
            (y1 - y0).atan2(x1 - x0),
        )
    }
}

fn rounded_rectangle(perimeter: f64) -> Circuit {
    // straights 2h x h, corner radius h/2
    let h = 1.0;
    let (lx, ly, rc) = (2.0 * h, h, h / 2.0);
    let unit = 2.0 * lx + 2.0 * ly + TAU * rc;
    let seg = [
        lx,
        PI / 2.0 * rc,
        ly,
        PI / 2.0 * rc,
        lx,
        PI / 2.0 * rc,
        ly,
        PI / 2.0 * rc,
    ];
    let f = move |t: f64| {
        let mut s = t * unit;
        let corners = [
            (lx / 2.0, -ly / 2.0),
            (lx / 2.0, ly / 2.0),
            (-lx / 2.0, ly / 2.0),
            (-lx / 2.0, -ly / 2.0),
        ];
        let starts = [
            (-lx / 2.0, -ly / 2.0 - rc),
            (lx / 2.0 + rc, -ly / 2.0),
            (lx / 2.0, ly / 2.0 + rc),
            (-lx / 2.0 - rc, ly / 2.0),
        ];
        for (k, len) in seg.iter().enumerate() {
            if s <= *len || k == seg.len() - 1 {
                let side = k / 2;
                let dir = side as f64 * PI / 2.0;
                if k % 2 == 0 {
                    let (x0, y0) = starts[side];
                    return (x0 + s * dir.cos(), y0 + s * dir.sin());
                }
                let (cx, cy) = corners[side];
                let phi = dir - PI / 2.0 + s / rc;
                return (cx + rc * phi.cos(), cy + rc * phi.sin());
            }
            s -= len;
        }
        unreachable!()
    };
    let samples = (perimeter / 0.05).ceil().max(1024.0) as usize;
    Circuit::from_fn(samples, f).scaled(perimeter)
}

fn figure_eight(perimeter: f64) -> Circuit {
    // lemniscate of Gerono, twice as wide as tall
    let f = |t: f64| {
        let u = TAU * t;
        (2.0 * u.sin(), u.sin() * u.cos() * 2.0)
    };
    let samples = (perimeter / 0.05).ceil().max(4096.0) as usize;
    Circuit::from_fn(samples, f).scaled(perimeter)
}

/// Smooth lateral wander that vanishes at the lap boundary.
fn lateral_jitter(amplitude: f64, u: f64, lap: f64) -> f64 {
    let w1 = TAU * 3.0 / lap;
    let w2 = TAU * 7.0 / lap;
    amplitude * (0.6 * (w1 * u).sin() + 0.4 * (w2 * u).sin())
}

impl Circuit {
    /// The same circuit displaced to the left of travel by `lateral(s)`.
    fn offset(&self, lateral: impl Fn(f64) -> f64) -> Self {
        let lap = self.perimeter();
        let samples = self.points.len() - 1;
        Self::from_fn(samples, |t| {
            let s = t * lap;
            let (x, y, h) = self.at(s);
            let l = lateral(s);
            (x - l * h.sin(), y + l * h.cos())
        })
    }
}

/// Lay out the poses of a two-lap drive, one per frame.
///
/// `loop_repeat` and `figure_eight` drive the circuit twice in the same
/// direction, the second lap wandering laterally by up to `jitter_m`.
/// `loop_reverse` drives it once forward and then once backwards, offset by
/// `lane_offset_m`. Each lap is stepped along its own arc length.
pub fn plan_route(spec: &RouteSpec) -> Result<Vec<Pose>> {
    spec.validate()?;
    let n = spec.frames();
    let spacing = spec.spacing();
    let lap = spec.circuit_length();
    let first = match spec.kind {
        RouteKind::LoopRepeat | RouteKind::LoopReverse => rounded_rectangle(lap),
        RouteKind::FigureEight => figure_eight(lap),
    };
    let reverse = spec.kind == RouteKind::LoopReverse;
    let second = if reverse {
        let lane = spec.lane_offset_m;
        first.offset(|_| lane)
    } else {
        let jitter = spec.jitter_m;
        first.offset(|s| lateral_jitter(jitter, s, lap))
    };
    let poses = (0..n)
        .map(|i| {
            let s = i as f64 * spacing;
            if s < lap - 1e-9 {
                let (x, y, h) = first.at(s);
                return Pose::new(x, y, h);
            }
            let u = s - lap;
            if reverse {
                let (x, y, h) = second.at(second.perimeter() - u);
                Pose::new(x, y, h + PI)
            } else {
                let (x, y, h) = second.at(u);
                Pose::new(x, y, h)
            }
        })
        .collect();
    Ok(poses)
}

/// Radar sampling geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanGeometry {
    pub azimuths: usize,
    pub bins: usize,
    pub bin_size_m: f64,
}

impl Default for ScanGeometry {
    fn default() -> Self {
        Self {
            azimuths: 64,
            bins: 256,
            bin_size_m: 0.5,
        }
    }
}

impl ScanGeometry {
    pub fn max_range(&self) -> f64 {
        self.bins as f64 * self.bin_size_m
    }
}

/// Measurement noise: multiplicative exponential speckle mixed in with
/// weight `speckle`, plus an additive uniform floor of height `floor`.
///
/// `fluctuation` mixes in a per-target exponential amplitude drawn afresh
/// every frame (scan-to-scan fading of each scatterer as a whole). Off by
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub speckle: f64,
    pub floor: f64,
    pub fluctuation: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        speckle: 0.0,
        floor: 0.0,
        fluctuation: 0.0,
    };

    pub fn is_none(&self) -> bool {
        self.speckle == 0.0 && self.floor == 0.0 && self.fluctuation == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            speckle: 0.5,
            floor: 0.05,
            fluctuation: 0.0,
        }
    }
}

const SIGMA_RANGE_BINS: f64 = 2.0;
const SIGMA_AZIMUTH_STEPS: f64 = 1.5;

/// Render the radar returns seen from `pose`.
pub fn render_scan<R: Rng + ?Sized>(
    map: &WorldMap,
    pose: &Pose,
    geometry: &ScanGeometry,
    noise: &NoiseSpec,
    timestamp: f64,
    rng: &mut R,
) -> Result<PolarScan> {
    let a_count = geometry.azimuths;
    let b_count = geometry.bins;
    if a_count == 0 || b_count == 0 || !(geometry.bin_size_m > 0.0) {
        return Err(Error::InvalidGeometry(format!("{geometry:?}")));
    }
    let a_f = a_count as f64;
    let mut clean = vec![0.0f64; a_count * b_count];
    let max_range = geometry.max_range();
    let (sin_h, cos_h) = pose.heading.sin_cos();
    let r_half = (3.0 * SIGMA_RANGE_BINS).ceil() as isize;
    let a_half = ((3.0 * SIGMA_AZIMUTH_STEPS).ceil() as isize).min(a_count as isize / 2);
    let mut az_weights = Vec::with_capacity(2 * a_half as usize + 1);
    let mut rg_weights = Vec::with_capacity(2 * r_half as usize + 1);
    // drawn for every scatterer, in range or not, so the stream position
    // depends only on the map
    let fading: Vec<f64> = if noise.fluctuation > 0.0 {
        let w = noise.fluctuation;
        (0..map.scatterers.len())
            .map(|_| (1.0 - w) + w * Distribution::<f64>::sample(&Exp1, rng))
            .collect()
    } else {
        Vec::new()
    };
    for (idx, s) in map.scatterers.iter().enumerate() {
        let dx = s.x - pose.x;
        let dy = s.y - pose.y;
        let fwd = dx * cos_h + dy * sin_h;
        let left = -dx * sin_h + dy * cos_h;
        let range = fwd.hypot(left);
        if range > max_range {
            continue;
        }
        let mut amp = s.reflectivity / (1.0 + range / 100.0);
        if let Some(f) = fading.get(idx) {
            amp *= f;
        }
        let alpha = (left.atan2(fwd) / TAU * a_f).rem_euclid(a_f);
        let rho = range / geometry.bin_size_m;

        let a_centre = alpha.round() as isize;
        az_weights.clear();
        for da in -a_half..=a_half {
            let a = (a_centre + da).rem_euclid(a_count as isize) as usize;
            let mut d = a as f64 - alpha;
            d -= a_f * (d / a_f).round();
            az_weights.push((a, (-0.5 * (d / SIGMA_AZIMUTH_STEPS).powi(2)).exp()));
        }
        let b_centre = rho.round() as isize;
        rg_weights.clear();
        for db in -r_half..=r_half {
            let b = b_centre + db;
            if b < 0 || b >= b_count as isize {
                continue;
            }
            let d = b as f64 - rho;
            rg_weights.push((
                b as usize,
                amp * (-0.5 * (d / SIGMA_RANGE_BINS).powi(2)).exp(),
            ));
        }
        for &(a, wa) in &az_weights {
            let row = &mut clean[a * b_count..(a + 1) * b_count];
            for &(b, wb) in &rg_weights {
                row[b] += wa * wb;
            }
        }
    }
    let power = if noise.is_none() {
        clean.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect()
    } else {
        let w = noise.speckle;
        clean
            .iter()
            .map(|&v| {
                let e: f64 = Exp1.sample(rng);
                let u: f64 = rng.random();
                (v * ((1.0 - w) + w * e) + noise.floor * u).clamp(0.0, 1.0) as f32
            })
            .collect()
    };
    PolarScan::new(a_count, b_count, geometry.bin_size_m, power, timestamp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub n_scatterers: usize,
    pub extent_m: f64,
    /// Number of dense blobs; 0 keeps the layout uniform.
    pub clusters: usize,
    pub cluster_radius_m: f64,
    pub cluster_fraction: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            n_scatterers: 1800,
            extent_m: 600.0,
            clusters: 0,
            cluster_radius_m: 10.0,
            cluster_fraction: 0.0,
        }
    }
}

/// One simulated drive through a (seeded) world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// World layout seed; every run with the same seed sees the same world.
    pub seed: u64,
    /// Selects the measurement-noise stream, so several drives through one
    /// world get independent speckle.
    pub run: u64,
    pub world: WorldSpec,
    pub route: RouteSpec,
    pub geometry: ScanGeometry,
    pub noise: NoiseSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            run: 0,
            world: WorldSpec::default(),
            route: RouteSpec::default(),
            geometry: ScanGeometry::default(),
            noise: NoiseSpec::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.route.validate()?;
        if self.geometry.azimuths == 0
            || self.geometry.bins == 0
            || !(self.geometry.bin_size_m > 0.0)
        {
            return Err(Error::InvalidGeometry(format!(
                "bad scan geometry {:?}",
                self.geometry
            )));
        }
        if !(self.world.extent_m > 0.0) {
            return Err(Error::InvalidConfig("world extent must be positive".into()));
        }
        let w = &self.world;
        if w.clusters > 0
            && !((0.0..=1.0).contains(&w.cluster_fraction) && w.cluster_radius_m > 0.0)
        {
            return Err(Error::InvalidConfig(format!("bad world spec {w:?}")));
        }
        let n = &self.noise;
        if !((0.0..=1.0).contains(&n.speckle)
            && (0.0..=1.0).contains(&n.fluctuation)
            && n.floor >= 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "bad noise spec {:?}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Time-ordered scans with their ground-truth poses.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    scans: Vec<PolarScan>,
    poses: Vec<Pose>,
    frame_period: f64,
}

impl Trajectory {
    pub fn new(scans: Vec<PolarScan>, poses: Vec<Pose>, frame_period: f64) -> Result<Self> {
        if scans.len() != poses.len() {
            return Err(Error::Misaligned(format!(
                "{} scans but {} poses",
                scans.len(),
                poses.len()
            )));
        }
        if scans.len() < 2 {
            return Err(Error::InvalidConfig(
                "trajectory needs at least two scans".into(),
            ));
        }
        if !(frame_period > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "frame period must be positive, got {frame_period}"
            )));
        }
        for w in scans.windows(2) {
            let dt = w[1].timestamp() - w[0].timestamp();
            if !(dt > 0.0) {
                return Err(Error::InvalidConfig(
                    "timestamps must be strictly increasing".into(),
                ));
            }
            if (dt - frame_period).abs() > 1e-9 * (1.0 + w[1].timestamp().abs()) {
                return Err(Error::InvalidConfig(format!(
                    "timestamp step {dt} differs from frame period {frame_period}"
                )));
            }
        }
        Ok(Self {
            scans,
            poses,
            frame_period,
        })
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    pub fn scans(&self) -> &[PolarScan] {
        &self.scans
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn geometry(&self) -> ScanGeometry {
        let s = &self.scans[0];
        ScanGeometry {
            azimuths: s.azimuths(),
            bins: s.bins(),
            bin_size_m: s.bin_size(),
        }
    }

    /// Sub-trajectory of frames `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Trajectory> {
        Trajectory::new(
            self.scans[start..end].to_vec(),
            self.poses[start..end].to_vec(),
            self.frame_period,
        )
    }
}

fn frame_timestamp(index: usize, period_us: u64) -> f64 {
    (index as u64 * period_us) as f64 / 1e6
}

/// Render a full drive. Bit-deterministic for a fixed config; frames are
/// quantised to 8 bits exactly as they are stored on disk.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let map = generate_world_from(cfg.seed, &cfg.world)?;
    let poses = plan_route(&cfg.route)?;
    let period_us = (cfg.route.frame_period_s * 1e6).round() as u64;
    if period_us == 0 {
        return Err(Error::InvalidConfig(
            "frame period below one microsecond".into(),
        ));
    }
    let stream_name = format!("noise.{}", cfg.run);
    let scans = poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let mut rng = rng::stream(cfg.seed, &stream_name, i as u64);
            render_scan(
                &map,
                pose,
                &cfg.geometry,
                &cfg.noise,
                frame_timestamp(i, period_us),
                &mut rng,
            )
            .map(|s| s.quantized())
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(scans, poses, period_us as f64 / 1e6)
}

pub const POSES_HEADER: [&str; 5] = ["index", "timestamp_s", "x_m", "y_m", "heading_rad"];

#[derive(Debug, Serialize, Deserialize)]
struct PoseRecord {
    index: usize,
    timestamp_s: f64,
    x_m: f64,
    y_m: f64,
    heading_rad: f64,
}

pub fn write_poses(path: impl AsRef<Path>, timestamps: &[f64], poses: &[Pose]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, (t, p)) in timestamps.iter().zip(poses).enumerate() {
        w.serialize(PoseRecord {
            index: i,
            timestamp_s: *t,
            x_m: p.x,
            y_m: p.y,
            heading_rad: p.heading,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Read a pose file; returns (timestamps, poses) ordered by index.
pub fn read_poses(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<Pose>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != POSES_HEADER {
        return Err(Error::Format(format!("unexpected pose header {headers:?}")));
    }
    let mut times = Vec::new();
    let mut poses = Vec::new();
    for (expected, rec) in r.deserialize::<PoseRecord>().enumerate() {
        let rec = rec?;
        if rec.index != expected {
            return Err(Error::Format(format!(
                "pose index {} out of order",
                rec.index
            )));
        }
        times.push(rec.timestamp_s);
        poses.push(Pose {
            x: rec.x_m,
            y: rec.y_m,
            heading: rec.heading_rad,
        });
    }
    Ok((times, poses))
}

/// Contents of a trajectory directory's `meta.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub toolkit_version: String,
    pub frames: usize,
    pub frame_period_s: f64,
    pub sim: SimConfig,
}

pub fn scan_file_name(index: usize) -> String {
    format!("{index:06}.rprs")
}

/// Write `scans/NNNNNN.rprs`, `poses.csv` and `meta.toml` under `dir`.
pub fn save_trajectory(dir: impl AsRef<Path>, traj: &Trajectory, sim: &SimConfig) -> Result<()> {
    let dir = dir.as_ref();
    let scans_dir = dir.join("scans");
    fs::create_dir_all(&scans_dir)?;
    for (i, scan) in traj.scans.iter().enumerate() {
        save_scan(scans_dir.join(scan_file_name(i)), scan)?;
    }
    let times: Vec<f64> = traj.scans.iter().map(|s| s.timestamp()).collect();
    write_poses(dir.join("poses.csv"), &times, &traj.poses)?;
    let meta = TrajectoryMeta {
        toolkit_version: crate::VERSION.to_string(),
        frames: traj.len(),
        frame_period_s: traj.frame_period,
        sim: sim.clone(),
    };
    let mut w = BufWriter::new(File::create(dir.join("meta.toml"))?);
    w.write_all(
        toml::to_string(&meta)
            .map_err(|e| Error::Format(e.to_string()))?
            .as_bytes(),
    )?;
    w.flush()?;
    Ok(())
}

pub fn load_meta(dir: impl AsRef<Path>) -> Result<TrajectoryMeta> {
    let text = fs::read_to_string(dir.as_ref().join("meta.toml"))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("meta.toml: {e}")))
}

pub fn load_trajectory(dir: impl AsRef<Path>) -> Result<Trajectory> {
    let dir = dir.as_ref();
    let meta = load_meta(dir)?;
    let (times, poses) = read_poses(dir.join("poses.csv"))?;
    if times.len() != meta.frames {
        return Err(Error::Misaligned(format!(
            "meta lists {} frames, poses.csv has {}",
            meta.frames,
            times.len()
        )));
    }
    let scans = (0..poses.len())
        .into_par_iter()
        .map(|i| load_scan(dir.join("scans").join(scan_file_name(i))))
        .collect::<Result<Vec<_>>>()?;
    for (scan, t) in scans.iter().zip(&times) {
        if (scan.timestamp() - t).abs() > 1e-6 {
            return Err(Error::Misaligned(format!(
                "scan timestamp {} does not match pose timestamp {t}",
                scan.timestamp()
            )));
        }
    }
    Trajectory::new(scans, poses, meta.frame_period_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::rotate_azimuth;

    fn route(kind: RouteKind, frames: usize) -> RouteSpec {
        RouteSpec {
            kind,
            ..RouteSpec::default()
        }
        .with_frames(frames)
    }

    #[test]
    fn world_is_deterministic_and_bounded() {
        let a = generate_world(3, 500, 200.0).unwrap();
        let b = generate_world(3, 500, 200.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scatterers.len(), 500);
        for s in &a.scatterers {
            assert!(a.extent.contains(s.x, s.y));
            assert!(s.reflectivity > 0.2 && s.reflectivity <= 1.0);
        }
        let c = generate_world(4, 500, 200.0).unwrap();
        assert_ne!(a.scatterers[0], c.scatterers[0]);
        assert!(generate_world(1, 0, 10.0).is_err());
    }

    #[test]
    fn angles_normalise_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), -PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        for k in -20..20 {
            let t = normalize_angle(k as f64 * 0.7);
            assert!((-PI..PI).contains(&t));
        }
    }

    #[test]
    fn unknown_route_kind_rejected() {
        assert!("spiral".parse::<RouteKind>().is_err());
        assert_eq!(
            "figure_eight".parse::<RouteKind>().unwrap(),
            RouteKind::FigureEight
        );
    }

    #[test]
    fn repeat_laps_revisit_within_lane() {
        let poses = plan_route(&route(RouteKind::LoopRepeat, 800)).unwrap();
        assert_eq!(poses.len(), 800);
        for i in 0..400 {
            let (a, b) = (poses[i], poses[i + 400]);
            assert!(a.distance(&b) <= 1.0, "frame {i}: {}", a.distance(&b));
            assert!(a.heading_difference(&b) <= 10f64.to_radians());
        }
    }

    #[test]
    fn reverse_lap_revisits_backwards() {
        let spec = route(RouteKind::LoopReverse, 800);
        let poses = plan_route(&spec).unwrap();
        for a in &poses[..400] {
            let b = poses[400..]
                .iter()
                .min_by(|p, q| a.distance(p).total_cmp(&a.distance(q)))
                .unwrap();
            assert!(a.distance(b) <= spec.lane_offset_m + spec.spacing());
            let d = a.heading_difference(b).to_degrees();
            assert!((d - 180.0).abs() <= 10.0, "{d}");
        }
    }

    #[test]
    fn pose_spacing_follows_speed() {
        for kind in [RouteKind::LoopRepeat, RouteKind::FigureEight] {
            let poses = plan_route(&route(kind, 600)).unwrap();
            for w in poses.windows(2) {
                let d = w[0].distance(&w[1]);
                assert!((d - 1.25).abs() <= 0.0125, "{kind}: spacing {d}");
            }
        }
        let bad = RouteSpec {
            speed_mps: 0.0,
            ..RouteSpec::default()
        };
        assert!(plan_route(&bad).is_err());
    }

    #[test]
    fn empty_world_renders_nothing() {
        let map = WorldMap {
            scatterers: vec![],
            extent: Extent::square(10.0),
            seed: 0,
        };
        let mut rng = rng::stream(0, "t", 0);
        let s = render_scan(
            &map,
            &Pose::new(0.0, 0.0, 0.0),
            &ScanGeometry::default(),
            &NoiseSpec::NONE,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert!(s.power().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn scatterer_ahead_peaks_at_forward_azimuth() {
        let geometry = ScanGeometry::default();
        for range in [7.3, 40.0, 101.7] {
            let map = WorldMap {
                scatterers: vec![Scatterer {
                    x: 10.0 + range * 0.6,
                    y: -5.0 + range * 0.8,
                    reflectivity: 0.9,
                }],
                extent: Extent::square(1000.0),
                seed: 0,
            };
            let pose = Pose::new(10.0, -5.0, 0.8f64.atan2(0.6));
            let mut rng = rng::stream(0, "t", 0);
            let s = render_scan(&map, &pose, &geometry, &NoiseSpec::NONE, 0.0, &mut rng).unwrap();
            let (argmax, _) = s
                .power()
                .iter()
                .enumerate()
                .fold(
                    (0, f32::MIN),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                );
            assert_eq!(argmax / geometry.bins, 0);
            assert_eq!(
                argmax % geometry.bins,
                (range / geometry.bin_size_m).round() as usize
            );
        }
    }

    #[test]
    fn rendering_is_rotation_equivariant() {
        let map = generate_world(11, 300, 300.0).unwrap();
        let geometry = ScanGeometry::default();
        let pose = Pose::new(3.0, -7.0, 0.4);
        let mut rng = rng::stream(0, "t", 0);
        let base = render_scan(&map, &pose, &geometry, &NoiseSpec::NONE, 0.0, &mut rng).unwrap();
        for k in [1usize, 5, 16, 32, 63] {
            let delta = TAU * k as f64 / geometry.azimuths as f64;
            let turned = Pose::new(pose.x, pose.y, pose.heading + delta);
            let s = render_scan(&map, &turned, &geometry, &NoiseSpec::NONE, 0.0, &mut rng).unwrap();
            // the world appears to turn the other way: row a now sees old row a + k
            let expected = rotate_azimuth(&base, k);
            let max_err = s
                .power()
                .iter()
                .zip(expected.power())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(max_err < 1e-6, "k={k}: {max_err}");
        }
    }

    #[test]
    fn speckle_breaks_repeatability_only_when_enabled() {
        let map = generate_world(2, 200, 300.0).unwrap();
        let pose = Pose::new(0.0, 0.0, 0.0);
        let g = ScanGeometry::default();
        let render = |noise: NoiseSpec, stream: u64| {
            let mut rng = rng::stream(1, "noise", stream);
            render_scan(&map, &pose, &g, &noise, 0.0, &mut rng).unwrap()
        };
        assert_eq!(render(NoiseSpec::NONE, 0), render(NoiseSpec::NONE, 1));
        assert_ne!(
            render(NoiseSpec::default(), 0),
            render(NoiseSpec::default(), 1)
        );
        assert_eq!(
            render(NoiseSpec::default(), 3),
            render(NoiseSpec::default(), 3)
        );
    }

    #[test]
    fn small_simulation_respects_invariants() {
        let cfg = SimConfig {
            route: route(RouteKind::LoopRepeat, 40),
            world: WorldSpec {
                n_scatterers: 100,
                extent_m: 200.0,
                ..WorldSpec::default()
            },
            ..SimConfig::default()
        };
        let t = simulate(&cfg).unwrap();
        assert_eq!(t.len(), 40);
        for w in t.scans().windows(2) {
            assert!(w[1].timestamp() > w[0].timestamp());
        }
        assert_eq!(simulate(&cfg).unwrap(), t);
    }
}
