//! Checkpoint files: a magic line, one line of JSON metadata, then every
//! parameter as a little-endian f32 (actor weights, actor log-std, critic weights).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::DenseNet;
use super::policy::{ActorCritic, GaussianPolicy};
use super::NetError;

pub const MAGIC: &str = "STAIRCLIMB-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub seed: u64,
    pub iteration: usize,
    /// Training configuration the parameters came from.
    pub config: serde_json::Value,
    pub param_count: usize,
    pub crc32: u32,
}

fn payload(model: &ActorCritic) -> Vec<u8> {
    let values = model
        .actor
        .net
        .params()
        .iter()
        .chain(&model.actor.log_std)
        .chain(model.critic.params());
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Writes `model` with its metadata; the file appears atomically.
pub fn save_params(
    path: &Path,
    model: &ActorCritic,
    seed: u64,
    iteration: usize,
    config: serde_json::Value,
) -> Result<CheckpointMeta, NetError> {
    let bytes = payload(model);
    let meta = CheckpointMeta {
        version: FORMAT_VERSION,
        actor_sizes: model.actor.net.sizes().to_vec(),
        critic_sizes: model.critic.sizes().to_vec(),
        seed,
        iteration,
        config,
        param_count: bytes.len() / 4,
        crc32: crc32fast::hash(&bytes),
    };
    let header = serde_json::to_string(&meta).map_err(|e| NetError::Format(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        writeln!(f, "{MAGIC}")?;
        writeln!(f, "{header}")?;
        f.write_all(&bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(meta)
}

pub fn load_params(path: &Path) -> Result<(ActorCritic, CheckpointMeta), NetError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = String::new();
    r.read_line(&mut magic)?;
    if magic.trim_end() != MAGIC {
        return Err(NetError::Format(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let mut header = String::new();
    r.read_line(&mut header)?;
    let meta: CheckpointMeta =
        serde_json::from_str(header.trim_end()).map_err(|e| NetError::Format(e.to_string()))?;
    if meta.version != FORMAT_VERSION {
        return Err(NetError::VersionMismatch(format!(
            "file format {} but this build reads {}",
            meta.version, FORMAT_VERSION
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != meta.param_count * 4 || crc32fast::hash(&bytes) != meta.crc32 {
        return Err(NetError::ChecksumMismatch);
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let n_actor = DenseNet::<f32>::count_params(&meta.actor_sizes);
    let act_dim = *meta.actor_sizes.last().unwrap_or(&0);
    let n_critic = DenseNet::<f32>::count_params(&meta.critic_sizes);
    if meta.actor_sizes.len() < 2
        || meta.critic_sizes.len() < 2
        || n_actor + act_dim + n_critic != floats.len()
    {
        return Err(NetError::VersionMismatch(
            "layer sizes do not match the stored parameters".into(),
        ));
    }
    let actor = GaussianPolicy {
        net: DenseNet::from_params(&meta.actor_sizes, floats[..n_actor].to_vec())?,
        log_std: floats[n_actor..n_actor + act_dim].to_vec(),
    };
    let critic = DenseNet::from_params(&meta.critic_sizes, floats[n_actor + act_dim..].to_vec())?;
    Ok((ActorCritic { actor, critic }, meta))
}

/// Loads a checkpoint and insists on the given network shapes.
pub fn load_params_expecting(
    path: &Path,
    actor_sizes: &[usize],
    critic_sizes: &[usize],
) -> Result<(ActorCritic, CheckpointMeta), NetError> {
    let (model, meta) = load_params(path)?;
    if meta.actor_sizes != actor_sizes || meta.critic_sizes != critic_sizes {
        return Err(NetError::VersionMismatch(format!(
            "checkpoint has actor {:?} / critic {:?}, expected {:?} / {:?}",
            meta.actor_sizes, meta.critic_sizes, actor_sizes, critic_sizes
        )));
    }
    Ok((model, meta))
}
