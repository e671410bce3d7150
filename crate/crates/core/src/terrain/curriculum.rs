use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generate_terrain, HeightField, TerrainError, TerrainKind, MAX_LEVEL};

/// Promote an environment when it finishes closer than this to its goal (m).
pub const PROMOTE_DISTANCE: f64 = 0.20;
/// Demote an environment when it finishes farther than this from its goal (m).
pub const DEMOTE_DISTANCE: f64 = 0.50;

/// What a curriculum column holds across its rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainFamily {
    /// Single steps on the first six rows, five-step flights above.
    Stairs,
    SmoothSlope,
    DiscreteObstacles,
    SmoothPyramid,
    RoughPyramid,
}

impl TerrainFamily {
    pub fn kind_at(self, row: usize) -> TerrainKind {
        match self {
            TerrainFamily::Stairs if row < 6 => TerrainKind::Step,
            TerrainFamily::Stairs => TerrainKind::Stairs,
            TerrainFamily::SmoothSlope => TerrainKind::SmoothSlope,
            TerrainFamily::DiscreteObstacles => TerrainKind::DiscreteObstacles,
            TerrainFamily::SmoothPyramid => TerrainKind::SmoothPyramid,
            TerrainFamily::RoughPyramid => TerrainKind::RoughPyramid,
        }
    }

    pub fn is_stairs(self) -> bool {
        self == TerrainFamily::Stairs
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainFamily::Stairs => "stairs",
            TerrainFamily::SmoothSlope => "smooth_slope",
            TerrainFamily::DiscreteObstacles => "discrete_obstacles",
            TerrainFamily::SmoothPyramid => "smooth_pyramid",
            TerrainFamily::RoughPyramid => "rough_pyramid",
        }
    }
}

pub const STANDARD_COLUMNS: [TerrainFamily; 6] = [
    TerrainFamily::Stairs,
    TerrainFamily::Stairs,
    TerrainFamily::SmoothSlope,
    TerrainFamily::DiscreteObstacles,
    TerrainFamily::SmoothPyramid,
    TerrainFamily::RoughPyramid,
];

/// Per-environment (row, column) assignment plus the terrain for every cell.
#[derive(Clone, Debug)]
pub struct CurriculumGrid {
    columns: Vec<TerrainFamily>,
    max_row: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// `cells[row][col]`
    cells: Vec<Vec<HeightField>>,
}

impl CurriculumGrid {
    /// Environments spread evenly over the columns, all starting on row 0.
    pub fn new(
        columns: Vec<TerrainFamily>,
        max_row: usize,
        n_envs: usize,
        seed: u64,
    ) -> Result<Self, TerrainError> {
        if max_row > MAX_LEVEL {
            return Err(TerrainError::InvalidLevel(max_row));
        }
        assert!(!columns.is_empty(), "curriculum needs at least one column");
        let cells = (0..=max_row)
            .map(|row| {
                columns
                    .iter()
                    .enumerate()
                    .map(|(c, fam)| {
                        generate_terrain(fam.kind_at(row), row, seed.wrapping_add(c as u64))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cols = (0..n_envs).map(|i| i % columns.len()).collect();
        Ok(Self {
            columns,
            max_row,
            rows: vec![0; n_envs],
            cols,
            cells,
        })
    }

    /// Six columns (two of them stairs) and twelve rows.
    pub fn standard(n_envs: usize, seed: u64) -> Self {
        Self::new(STANDARD_COLUMNS.to_vec(), MAX_LEVEL, n_envs, seed)
            .expect("standard layout is valid")
    }

    /// Single flat column; the curriculum never moves.
    pub fn flat(n_envs: usize, seed: u64) -> Self {
        Self::new(vec![TerrainFamily::SmoothSlope], 0, n_envs, seed).expect("flat layout is valid")
    }

    pub fn n_envs(&self) -> usize {
        self.rows.len()
    }

    pub fn columns(&self) -> &[TerrainFamily] {
        &self.columns
    }

    pub fn max_row(&self) -> usize {
        self.max_row
    }

    pub fn cell(&self, env: usize) -> (usize, usize) {
        (self.rows[env], self.cols[env])
    }

    pub fn family(&self, env: usize) -> TerrainFamily {
        self.columns[self.cols[env]]
    }

    pub fn terrain(&self, row: usize, col: usize) -> &HeightField {
        &self.cells[row][col]
    }

    pub fn env_terrain(&self, env: usize) -> &HeightField {
        let (r, c) = self.cell(env);
        self.terrain(r, c)
    }

    pub fn set_row(&mut self, env: usize, row: usize) {
        self.rows[env] = row.min(self.max_row);
    }

    /// Mean row over environments whose column satisfies `pred`; `None` if none do.
    pub fn mean_row_where(&self, pred: impl Fn(TerrainFamily) -> bool) -> Option<f64> {
        let (sum, n) = self
            .rows
            .iter()
            .zip(&self.cols)
            .filter(|(_, &c)| pred(self.columns[c]))
            .fold((0usize, 0usize), |(s, n), (&r, _)| (s + r, n + 1));
        (n > 0).then(|| sum as f64 / n as f64)
    }

    pub fn mean_row_per_column(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.columns.len()];
        let mut counts = vec![0usize; self.columns.len()];
        for (&r, &c) in self.rows.iter().zip(&self.cols) {
            sums[c] += r as f64;
            counts[c] += 1;
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect()
    }

    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.columns.len()];
        for &c in &self.cols {
            counts[c] += 1;
        }
        counts
    }
}

/// Game-style promotion/demotion after an episode ends. Columns never change.
pub fn curriculum_update<R: Rng + ?Sized>(
    grid: &mut CurriculumGrid,
    env: usize,
    final_distance: f64,
    rng: &mut R,
) -> (usize, usize) {
    let (row, col) = grid.cell(env);
    let new_row = if final_distance < PROMOTE_DISTANCE {
        if row >= grid.max_row {
            rng.random_range(0..=grid.max_row)
        } else {
            row + 1
        }
    } else if final_distance > DEMOTE_DISTANCE {
        row.saturating_sub(1)
    } else {
        row
    };
    grid.rows[env] = new_row;
    (new_row, col)
}
