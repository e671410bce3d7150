use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate_policy, load_policy, BoolMode, EvalSpec};
use super::HarnessError;
use crate::terrain::{TerrainKind, TerrainSpec};

/// Row labels, in table order, and the boolean each row is evaluated with.
pub const VARIANTS: [(&str, BoolMode); 4] = [
    ("Bool on", BoolMode::On),
    ("Bool off", BoolMode::Off),
    ("No bool", BoolMode::Off),
    ("No priv.", BoolMode::On),
];

/// Level used for the non-stairs terrains of the last column.
pub const OTHER_TERRAIN_LEVEL: usize = 5;

pub const DEFAULT_HEIGHTS: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];

pub fn other_terrains() -> Vec<TerrainSpec> {
    [
        TerrainKind::SmoothSlope,
        TerrainKind::DiscreteObstacles,
        TerrainKind::SmoothPyramid,
        TerrainKind::RoughPyramid,
    ]
    .into_iter()
    .map(|kind| TerrainSpec::Cell {
        kind,
        level: OTHER_TERRAIN_LEVEL,
    })
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Percent.
    pub success_rate: f64,
    pub ci95: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub checkpoint: Option<PathBuf>,
    /// One cell per height, then the other-terrains cell. `None` is N/A.
    pub cells: Vec<Option<Cell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub heights: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Tab-separated table with a comment header.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# success rate (%) over {} trials per cell, seed {}; 'other' is the unweighted mean over \
             slope, obstacles, pyramid and rough pyramid at level {OTHER_TERRAIN_LEVEL}",
            self.trials, self.seed
        )?;
        write!(out, "variant")?;
        for h in &self.heights {
            write!(out, "\t{:.0}cm", h * 100.0)?;
        }
        writeln!(out, "\tother")?;
        for row in &self.rows {
            write!(out, "{}", row.variant)?;
            for c in &row.cells {
                match c {
                    Some(c) => write!(out, "\t{:.1}", c.success_rate)?,
                    None => write!(out, "\tN/A")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Evaluates up to four checkpoints (bool on, bool off, no bool, no priv.) over step
/// heights and the other-terrains pool. Variants given as `None` or as a path that
/// does not exist become N/A rows.
pub fn ablation_matrix(
    checkpoints: &[Option<PathBuf>; 4],
    heights: &[f64],
    trials: usize,
    seed: u64,
    radius: f64,
) -> Result<AblationTable, HarnessError> {
    let mut rows = Vec::new();
    for ((name, mode), ckpt) in VARIANTS.iter().zip(checkpoints) {
        let ckpt = ckpt.as_ref().filter(|p| p.exists());
        let cells = match ckpt {
            None => vec![None; heights.len() + 1],
            Some(path) => {
                let loaded = load_policy(path)?;
                let run = |terrain: TerrainSpec| {
                    let spec = EvalSpec {
                        radius,
                        seed,
                        ..EvalSpec::new(path.clone(), terrain, trials, *mode)
                    };
                    evaluate_policy(&loaded.policy, &loaded.config, &spec)
                };
                let mut cells = Vec::new();
                for &h in heights {
                    let r = run(TerrainSpec::StepHeight(h))?;
                    cells.push(Some(Cell {
                        success_rate: r.success_rate,
                        ci95: r.success_ci95,
                    }));
                }
                let others = other_terrains();
                let mut rate = 0.0;
                let (mut lo, mut hi) = (0.0, 0.0);
                for t in &others {
                    let r = run(t.clone())?;
                    rate += r.success_rate;
                    lo += r.success_ci95[0];
                    hi += r.success_ci95[1];
                }
                let k = others.len() as f64;
                cells.push(Some(Cell {
                    success_rate: rate / k,
                    ci95: [lo / k, hi / k],
                }));
                cells
            }
        };
        rows.push(AblationRow {
            variant: name.to_string(),
            checkpoint: ckpt.cloned(),
            cells,
        });
    }
    Ok(AblationTable {
        heights: heights.to_vec(),
        trials,
        seed,
        rows,
    })
}
