use std::io::Write;
use std::path::Path;

use super::eval::{load_policy, run_episode, trace_row, BoolMode, Trace};
use super::HarnessError;
use crate::sim::body_frame;
use crate::task::Termination;
use crate::terrain::TerrainSpec;
use crate::util::derive_seed;

pub const PROFILE_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityProfile {
    pub step_height: f64,
    /// Seed of the successful trial.
    pub seed: u64,
    pub rows: Trace,
    /// Time the front wheel first reached the step riser, if it did.
    pub contact_time: Option<f64>,
}

impl VelocityProfile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,forward_velocity,x,z")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r[0], r[1], r[2], r[3])?;
        }
        Ok(())
    }

    /// `(min velocity within ±0.5 s of the first step contact, peak velocity before it)`.
    pub fn deceleration(&self) -> Option<(f64, f64)> {
        let tc = self.contact_time?;
        let peak = self
            .rows
            .iter()
            .filter(|r| r[0] < tc)
            .map(|r| r[1])
            .fold(f64::NEG_INFINITY, f64::max);
        let min = self
            .rows
            .iter()
            .filter(|r| (r[0] - tc).abs() <= 0.5)
            .map(|r| r[1])
            .fold(f64::INFINITY, f64::min);
        (peak.is_finite() && min.is_finite()).then_some((min, peak))
    }
}

/// Records the first successful step-up of `step_height` out of up to 100 seeded attempts.
pub fn record_velocity_profile(
    checkpoint: &Path,
    step_height: f64,
    seed: u64,
    radius: f64,
) -> Result<VelocityProfile, HarnessError> {
    let loaded = load_policy(checkpoint)?;
    let terrain = TerrainSpec::StepHeight(step_height);
    let edge = terrain
        .build(0)?
        .step_edges()
        .first()
        .copied()
        .unwrap_or(f64::INFINITY);
    let mode = if loaded.config.task.use_terrain_bool {
        BoolMode::On
    } else {
        BoolMode::Off
    };
    let wheel_radius = loaded.config.robot.wheel_radius;
    for attempt in 0..PROFILE_ATTEMPTS {
        let s = derive_seed(seed, &[attempt as u64]);
        let mut rows = Vec::new();
        let mut contact_time = None;
        let (term, dist) = run_episode(&loaded.policy, &loaded.config, &terrain, mode, s, |env| {
            rows.push(trace_row(env));
            if contact_time.is_none() {
                let f = body_frame(env.model(), env.state());
                let front = f.wheels[0][0].max(f.wheels[1][0]);
                if front + wheel_radius >= edge - 1e-3 {
                    contact_time = Some(env.episode().t);
                }
            }
        })?;
        if term == Termination::Timeout && dist <= radius {
            return Ok(VelocityProfile {
                step_height,
                seed: s,
                rows,
                contact_time,
            });
        }
    }
    Err(HarnessError::NoSuccessfulTrial(PROFILE_ATTEMPTS))
}
