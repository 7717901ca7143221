//! Policy checkpoints: a JSON envelope around the binary network format.

use std::fs;
use std::path::Path;

use planshape_core::env::ObsFrame;
use planshape_core::marl::{AgentNets, TrainedPolicy};
use planshape_core::nn::Mlp;
use planshape_core::EnvId;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "planshape-policy/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    format: String,
    algorithm: String,
    env_id: EnvId,
    n_agents: usize,
    n_targets: usize,
    shared: bool,
    /// Hex-encoded network checkpoints.
    nets: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

fn algorithm_name(name: &str) -> Result<&'static str, CheckpointError> {
    match name {
        "mappo" => Ok("mappo"),
        "qmix" => Ok("qmix"),
        other => Err(CheckpointError::Format(format!("unknown algorithm {other:?}"))),
    }
}

pub fn to_json(policy: &TrainedPolicy) -> String {
    let a = &policy.agents;
    let env = Envelope {
        format: FORMAT.into(),
        algorithm: policy.algorithm.into(),
        env_id: a.frame.env_id,
        n_agents: a.frame.n_agents,
        n_targets: a.frame.n_targets,
        shared: a.shared,
        nets: a.nets.iter().map(|n| hex::encode(n.to_bytes())).collect(),
    };
    serde_json::to_string_pretty(&env).expect("envelope serializes")
}

pub fn from_json(text: &str) -> Result<TrainedPolicy, CheckpointError> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    if env.format != FORMAT {
        return Err(CheckpointError::Format(format!("unsupported format {:?}", env.format)));
    }
    let expected = if env.shared { 1 } else { env.n_agents };
    if env.nets.len() != expected {
        return Err(CheckpointError::Format(format!("expected {expected} networks, found {}", env.nets.len())));
    }
    let nets = env
        .nets
        .iter()
        .map(|h| {
            let bytes = hex::decode(h).map_err(|e| CheckpointError::Format(e.to_string()))?;
            Mlp::from_bytes(&bytes).map_err(|e| CheckpointError::Format(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let frame = ObsFrame { env_id: env.env_id, n_agents: env.n_agents, n_targets: env.n_targets };
    if nets.iter().any(|n| n.input_dim() != frame.dim()) {
        return Err(CheckpointError::Format("network input does not match the observation width".into()));
    }
    Ok(TrainedPolicy {
        algorithm: algorithm_name(&env.algorithm)?,
        agents: AgentNets { nets, shared: env.shared, frame },
    })
}

pub fn save(policy: &TrainedPolicy, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, to_json(policy))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedPolicy, CheckpointError> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use planshape_core::env::LbfConfig;
    use planshape_core::marl::mappo::{Mappo, MappoConfig};
    use planshape_core::EnvConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_policy() {
        let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
        let m = Mappo::new(&spec, MappoConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let p = m.policy();
        assert_eq!(from_json(&to_json(&p)).unwrap(), p);
    }

    #[test]
    fn wrong_format_rejected() {
        let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
        let m = Mappo::new(&spec, MappoConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let text = to_json(&m.policy()).replace(FORMAT, "other/9");
        assert!(matches!(from_json(&text), Err(CheckpointError::Format(_))));
    }
}
