use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Optimizers, SacAgent, SacConfig};
use crate::environment::Normalizer;
use crate::error::{Error, Result};
use crate::neural::{DenseNetwork, NetworkRecord};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to run the policy for inference, plus the critics so
/// training can resume from it. Optimizer moments are not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub state_dim: usize,
    pub action_dim: usize,
    pub config: SacConfig,
    pub normalizer: Normalizer,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub policy: NetworkRecord,
    pub q1: NetworkRecord,
    pub q2: NetworkRecord,
    pub q1_target: NetworkRecord,
    pub q2_target: NetworkRecord,
}

impl Checkpoint {
    pub fn from_agent(agent: &SacAgent, normalizer: &Normalizer) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            state_dim: agent.state_dim,
            action_dim: agent.action_dim,
            config: agent.config.clone(),
            normalizer: normalizer.clone(),
            log_alpha: agent.log_alpha,
            target_entropy: agent.target_entropy,
            policy: (&agent.policy).into(),
            q1: (&agent.q1).into(),
            q2: (&agent.q2).into(),
            q1_target: (&agent.q1_target).into(),
            q2_target: (&agent.q2_target).into(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(Error::from_json)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Semantic(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        if ck.normalizer.len() != ck.state_dim {
            return Err(Error::Dimension {
                expected: ck.state_dim,
                got: ck.normalizer.len(),
            });
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Rebuilds an agent with fresh optimizer state and an RNG seeded from the config.
    pub fn to_agent(&self) -> Result<SacAgent> {
        self.config.validate()?;
        let net = |r: &NetworkRecord, input: usize, output: usize| -> Result<DenseNetwork> {
            let n = DenseNetwork::try_from(r)?;
            if n.input_dim() != input || n.output_dim() != output {
                return Err(Error::Dimension {
                    expected: input,
                    got: n.input_dim(),
                });
            }
            Ok(n)
        };
        let (s, a) = (self.state_dim, self.action_dim);
        Ok(SacAgent {
            policy: net(&self.policy, s, 2 * a)?,
            q1: net(&self.q1, s + a, 1)?,
            q2: net(&self.q2, s + a, 1)?,
            q1_target: net(&self.q1_target, s + a, 1)?,
            q2_target: net(&self.q2_target, s + a, 1)?,
            log_alpha: self.log_alpha,
            target_entropy: self.target_entropy,
            optimizers: Optimizers::new(&self.config),
            rng: ChaCha8Rng::seed_from_u64(self.config.random_seed),
            config: self.config.clone(),
            state_dim: s,
            action_dim: a,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_policy() {
        let agent = SacAgent::new(5, 2, SacConfig::default()).unwrap();
        let ck = Checkpoint::from_agent(&agent, &Normalizer::identity(5));
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let restored = back.to_agent().unwrap();
        assert_eq!(restored.policy, agent.policy);
        let s = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(restored.act_deterministic(&s).unwrap(), agent.act_deterministic(&s).unwrap());
    }

    #[test]
    fn rejects_wrong_version_and_shapes() {
        let agent = SacAgent::new(3, 1, SacConfig::default()).unwrap();
        let mut ck = Checkpoint::from_agent(&agent, &Normalizer::identity(3));
        ck.version = 99;
        assert!(Checkpoint::from_json(&ck.to_json()).is_err());
        let mut ck = Checkpoint::from_agent(&agent, &Normalizer::identity(3));
        ck.state_dim = 4;
        ck.normalizer = Normalizer::identity(4);
        assert!(matches!(ck.to_agent(), Err(Error::Dimension { .. })));
    }
}
