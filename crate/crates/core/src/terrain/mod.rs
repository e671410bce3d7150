//! Procedural 1D terrains and the difficulty curriculum.
//!
//! A [`HeightField`] is a strip of ground 6 m long sampled every 5 cm. Step and
//! stair terrains additionally keep their exact edge positions so lookups and
//! contact geometry see true vertical risers instead of interpolated ramps.

mod curriculum;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::rng_for;

pub use curriculum::{curriculum_update, CurriculumGrid, TerrainFamily, STANDARD_COLUMNS};

pub const NUM_LEVELS: usize = 12;
pub const MAX_LEVEL: usize = NUM_LEVELS - 1;
pub const TERRAIN_LENGTH: f64 = 6.0;
pub const SAMPLE_SPACING: f64 = 0.05;
/// x of the first riser on step and stair terrains.
pub const FIRST_EDGE_X: f64 = 2.0;
pub const TREAD_DEPTH: f64 = 0.30;
pub const STAIR_STEPS: usize = 5;
pub const MAX_INCLINE_DEG: f64 = 8.5;
pub const MAX_OBSTACLE_HEIGHT: f64 = 0.10;
pub const MAX_ROUGHNESS: f64 = 0.05;
/// Half-width of the flat platform on pyramid terrains.
pub const PYRAMID_PLATFORM_HALF_WIDTH: f64 = 0.5;
pub const HEIGHT_GRID_POINTS: usize = 17;
pub const HEIGHT_GRID_HALF_SPAN: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum TerrainError {
    #[error("terrain level {0} outside 0..={MAX_LEVEL}")]
    InvalidLevel(usize),
    #[error("x = {x} outside terrain extent [0, {extent}]")]
    OutOfBounds { x: f64, extent: f64 },
    #[error("friction {0} outside [0.1, 2.0]")]
    InvalidFriction(f64),
    #[error("invalid step height {0}")]
    InvalidStepHeight(f64),
    #[error("cannot parse terrain spec '{0}'")]
    BadSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Step,
    Stairs,
    SmoothSlope,
    DiscreteObstacles,
    SmoothPyramid,
    RoughPyramid,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 6] = [
        TerrainKind::Step,
        TerrainKind::Stairs,
        TerrainKind::SmoothSlope,
        TerrainKind::DiscreteObstacles,
        TerrainKind::SmoothPyramid,
        TerrainKind::RoughPyramid,
    ];

    pub fn is_step_family(self) -> bool {
        matches!(self, TerrainKind::Step | TerrainKind::Stairs)
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainKind::Step => "step",
            TerrainKind::Stairs => "stairs",
            TerrainKind::SmoothSlope => "slope",
            TerrainKind::DiscreteObstacles => "obstacles",
            TerrainKind::SmoothPyramid => "pyramid",
            TerrainKind::RoughPyramid => "rough",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for TerrainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Height of each riser for a step-family terrain at `level`: 5 cm rising in
/// 5 cm increments, the ladder restarting for the five-step flights at level 6.
pub fn step_height_for_level(level: usize) -> f64 {
    0.05 + 0.05 * (level % 6) as f64
}

pub fn incline_for_level(level: usize) -> f64 {
    (level as f64 / MAX_LEVEL as f64 * MAX_INCLINE_DEG).to_radians()
}

#[derive(Clone, Debug)]
pub struct HeightField {
    spacing: f64,
    samples: Arc<[f64]>,
    friction: f64,
    kind: TerrainKind,
    level: usize,
    step_edges: Arc<[f64]>,
    /// Terrain height just after each entry of `step_edges`.
    step_tops: Arc<[f64]>,
    /// Ground surface polyline ordered by x; risers appear as two vertices with equal x.
    profile: Arc<[[f64; 2]]>,
}

impl PartialEq for HeightField {
    fn eq(&self, other: &Self) -> bool {
        self.spacing == other.spacing
            && self.friction == other.friction
            && self.kind == other.kind
            && self.level == other.level
            && self.samples[..] == other.samples[..]
            && self.step_edges[..] == other.step_edges[..]
            && self.profile[..] == other.profile[..]
    }
}

impl HeightField {
    fn from_samples(kind: TerrainKind, level: usize, samples: Vec<f64>) -> Self {
        let profile = simplify_polyline(
            samples
                .iter()
                .enumerate()
                .map(|(i, &h)| [i as f64 * SAMPLE_SPACING, h])
                .collect(),
        );
        Self {
            spacing: SAMPLE_SPACING,
            samples: samples.into(),
            friction: 1.0,
            kind,
            level,
            step_edges: Arc::from(Vec::new()),
            step_tops: Arc::from(Vec::new()),
            profile: profile.into(),
        }
    }

    fn from_steps(kind: TerrainKind, level: usize, edges: Vec<f64>, tops: Vec<f64>) -> Self {
        let n = sample_count();
        let mut field = Self {
            spacing: SAMPLE_SPACING,
            samples: Arc::from(vec![0.0; n]),
            friction: 1.0,
            kind,
            level,
            step_edges: edges.clone().into(),
            step_tops: tops.clone().into(),
            profile: Arc::from(Vec::new()),
        };
        field.samples = (0..n)
            .map(|i| field.step_lookup(i as f64 * SAMPLE_SPACING))
            .collect::<Vec<_>>()
            .into();
        let mut profile = vec![[0.0, 0.0]];
        let mut h = 0.0;
        for (&e, &top) in edges.iter().zip(&tops) {
            profile.push([e, h]);
            profile.push([e, top]);
            h = top;
        }
        profile.push([TERRAIN_LENGTH, h]);
        field.profile = simplify_polyline(profile).into();
        field
    }

    /// Flat ground at zero height.
    pub fn flat() -> Self {
        Self::from_samples(TerrainKind::SmoothSlope, 0, vec![0.0; sample_count()])
    }

    /// A single riser of `height` at [`FIRST_EDGE_X`], flat before and after.
    pub fn single_step(height: f64) -> Result<Self, TerrainError> {
        if !(height.is_finite() && (0.0..=1.0).contains(&height)) {
            return Err(TerrainError::InvalidStepHeight(height));
        }
        let level = ((height - 0.05) / 0.05).round().clamp(0.0, 5.0) as usize;
        Ok(Self::from_steps(
            TerrainKind::Step,
            level,
            vec![FIRST_EDGE_X],
            vec![height],
        ))
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn friction(&self) -> f64 {
        self.friction
    }

    pub fn kind(&self) -> TerrainKind {
        self.kind
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn step_edges(&self) -> &[f64] {
        &self.step_edges
    }

    pub fn profile(&self) -> &[[f64; 2]] {
        &self.profile
    }

    pub fn extent(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.spacing
    }

    /// Cheap copy sharing the geometry but with another friction coefficient.
    pub fn with_friction(&self, friction: f64) -> Result<Self, TerrainError> {
        if !(0.1..=2.0).contains(&friction) {
            return Err(TerrainError::InvalidFriction(friction));
        }
        let mut f = self.clone();
        f.friction = friction;
        Ok(f)
    }

    /// Height of the highest tread (0 for terrains without steps).
    pub fn top_height(&self) -> f64 {
        self.step_tops.last().copied().unwrap_or(0.0)
    }

    fn step_lookup(&self, x: f64) -> f64 {
        let idx = self.step_edges.partition_point(|&e| e <= x);
        if idx == 0 {
            0.0
        } else {
            self.step_tops[idx - 1]
        }
    }

    pub fn height_at(&self, x: f64) -> Result<f64, TerrainError> {
        let extent = self.extent();
        if !(0.0..=extent).contains(&x) {
            return Err(TerrainError::OutOfBounds { x, extent });
        }
        Ok(self.height_at_clamped(x))
    }

    /// Like [`height_at`](Self::height_at) but pads with the edge value outside the extent.
    pub fn height_at_clamped(&self, x: f64) -> f64 {
        let x = if x.is_nan() {
            0.0
        } else {
            x.clamp(0.0, self.extent())
        };
        if self.kind.is_step_family() && !self.step_edges.is_empty() {
            return self.step_lookup(x);
        }
        let u = x / self.spacing;
        let i = (u.floor() as usize).min(self.samples.len() - 2);
        let frac = u - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    /// Writes the surface polyline as a two-column table with a header row.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x\theight")?;
        for [x, h] in self.profile.iter() {
            writeln!(out, "{x:.6}\t{h:.6}")?;
        }
        Ok(())
    }
}

fn sample_count() -> usize {
    (TERRAIN_LENGTH / SAMPLE_SPACING).round() as usize + 1
}

/// Drops interior vertices lying on a straight line through their neighbours.
fn simplify_polyline(points: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    if points.len() < 3 {
        return points;
    }
    let mut out = vec![points[0]];
    for i in 1..points.len() - 1 {
        let a = *out.last().unwrap();
        let b = points[i];
        let c = points[i + 1];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross.abs() > 1e-12 {
            out.push(b);
        }
    }
    out.push(points[points.len() - 1]);
    out
}

/// Builds the terrain for one curriculum cell. Deterministic in all three arguments.
pub fn generate_terrain(
    kind: TerrainKind,
    level: usize,
    seed: u64,
) -> Result<HeightField, TerrainError> {
    if level > MAX_LEVEL {
        return Err(TerrainError::InvalidLevel(level));
    }
    let mut rng = rng_for(seed, &[kind.tag(), level as u64]);
    let n = sample_count();
    let xs = (0..n).map(|i| i as f64 * SAMPLE_SPACING);
    let field = match kind {
        TerrainKind::Step => {
            let h = step_height_for_level(level);
            HeightField::from_steps(kind, level, vec![FIRST_EDGE_X], vec![h])
        }
        TerrainKind::Stairs => {
            let h = step_height_for_level(level);
            let edges = (0..STAIR_STEPS)
                .map(|k| FIRST_EDGE_X + k as f64 * TREAD_DEPTH)
                .collect();
            let tops = (1..=STAIR_STEPS).map(|k| k as f64 * h).collect();
            HeightField::from_steps(kind, level, edges, tops)
        }
        TerrainKind::SmoothSlope => {
            let slope = incline_for_level(level).tan();
            HeightField::from_samples(kind, level, xs.map(|x| slope * x).collect())
        }
        TerrainKind::DiscreteObstacles => {
            let max_h = MAX_OBSTACLE_HEIGHT * level as f64 / MAX_LEVEL as f64;
            let mut samples = vec![0.0; n];
            let mut start = 0.3 + rng.random_range(0.0..0.7);
            while start < TERRAIN_LENGTH - 0.3 {
                let width = rng.random_range(1.0..2.0);
                let height = max_h * rng.random_range(0.5..1.0);
                let end = (start + width).min(TERRAIN_LENGTH - 0.3);
                for (i, s) in samples.iter_mut().enumerate() {
                    let x = i as f64 * SAMPLE_SPACING;
                    if x >= start && x < end {
                        *s = height;
                    }
                }
                start = end + rng.random_range(0.4..1.0);
            }
            HeightField::from_samples(kind, level, samples)
        }
        TerrainKind::SmoothPyramid | TerrainKind::RoughPyramid => {
            let slope = incline_for_level(level).tan();
            let ramp = TERRAIN_LENGTH / 2.0 - PYRAMID_PLATFORM_HALF_WIDTH;
            let roughness = if kind == TerrainKind::RoughPyramid {
                MAX_ROUGHNESS * level as f64 / MAX_LEVEL as f64
            } else {
                0.0
            };
            let samples = xs
                .map(|x| {
                    let base = slope * x.min(TERRAIN_LENGTH - x).min(ramp);
                    let noise = if roughness > 0.0 {
                        rng.random_range(0.0..roughness)
                    } else {
                        0.0
                    };
                    base + noise
                })
                .collect();
            HeightField::from_samples(kind, level, samples)
        }
    };
    Ok(field)
}

/// Terrain heights at 17 points spanning ±0.8 m around `robot_x`, relative to `base_z`.
/// Points outside the strip take the nearest edge height.
pub fn sample_height_grid(
    field: &HeightField,
    robot_x: f64,
    base_z: f64,
) -> [f64; HEIGHT_GRID_POINTS] {
    let mut out = [0.0; HEIGHT_GRID_POINTS];
    let step = 2.0 * HEIGHT_GRID_HALF_SPAN / (HEIGHT_GRID_POINTS - 1) as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let x = robot_x - HEIGHT_GRID_HALF_SPAN + i as f64 * step;
        *o = field.height_at_clamped(x) - base_z;
    }
    out
}

/// Terrain selector used by evaluation and the CLI:
/// `flat`, `step:<height m>`, or `<kind>:<level>` with kind one of
/// `step`, `stairs`, `slope`, `obstacles`, `pyramid`, `rough`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainSpec {
    Flat,
    StepHeight(f64),
    Cell { kind: TerrainKind, level: usize },
}

impl TerrainSpec {
    pub fn build(&self, seed: u64) -> Result<HeightField, TerrainError> {
        match *self {
            TerrainSpec::Flat => Ok(HeightField::flat()),
            TerrainSpec::StepHeight(h) => HeightField::single_step(h),
            TerrainSpec::Cell { kind, level } => generate_terrain(kind, level, seed),
        }
    }

    pub fn is_step_family(&self) -> bool {
        match self {
            TerrainSpec::Flat => false,
            TerrainSpec::StepHeight(_) => true,
            TerrainSpec::Cell { kind, .. } => kind.is_step_family(),
        }
    }
}

impl fmt::Display for TerrainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerrainSpec::Flat => f.write_str("flat"),
            TerrainSpec::StepHeight(h) => write!(f, "step:{h}"),
            TerrainSpec::Cell { kind, level } => write!(f, "{kind}:{level}"),
        }
    }
}

impl FromStr for TerrainSpec {
    type Err = TerrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TerrainError::BadSpec(s.to_string());
        let s = s.trim();
        if s == "flat" {
            return Ok(TerrainSpec::Flat);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let kind = match kind {
            "step" => TerrainKind::Step,
            "stairs" => TerrainKind::Stairs,
            "slope" => TerrainKind::SmoothSlope,
            "obstacles" => TerrainKind::DiscreteObstacles,
            "pyramid" => TerrainKind::SmoothPyramid,
            "rough" => TerrainKind::RoughPyramid,
            _ => return Err(bad()),
        };
        // `step:0.15` is a height in metres, `step:3` a curriculum level.
        if kind == TerrainKind::Step && arg.contains('.') {
            let h: f64 = arg.parse().map_err(|_| bad())?;
            HeightField::single_step(h)?;
            return Ok(TerrainSpec::StepHeight(h));
        }
        let level: usize = arg.parse().map_err(|_| bad())?;
        if level > MAX_LEVEL {
            return Err(TerrainError::InvalidLevel(level));
        }
        Ok(TerrainSpec::Cell { kind, level })
    }
}
