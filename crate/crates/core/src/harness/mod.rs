//! Evaluation, ablations, velocity profiles and the teleop service.

pub mod ablation;
pub mod eval;
pub mod profile;
pub mod protocol;
pub mod teleop;

use std::path::PathBuf;

pub use ablation::{ablation_matrix, AblationTable};
pub use eval::{evaluate, evaluate_policy, load_policy, BoolMode, EvalReport, EvalSpec};
pub use profile::{record_velocity_profile, VelocityProfile};
pub use teleop::{teleop_service, TeleopHandle, TeleopSim};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot load checkpoint {}: {source}", path.display())]
    Checkpoint {
        path: PathBuf,
        source: crate::net::NetError,
    },
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error(transparent)]
    Terrain(#[from] crate::terrain::TerrainError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no successful trial in {0} attempts")]
    NoSuccessfulTrial(usize),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("{0}")]
    Invalid(String),
}
