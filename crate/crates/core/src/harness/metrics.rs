use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::environment::Normalizer;
use crate::error::{Error, Result};
use crate::sac::{Checkpoint, EpisodeMetrics, SacAgent, TrainObserver};

pub const METRICS_HEADER: &str =
    "episode,steps,reward,p_loss_pre,p_loss_final,delta_loss_frac,done_reason,q1_loss,q2_loss,policy_loss,alpha";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn metrics_row(m: &EpisodeMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        m.episode,
        m.steps,
        m.reward,
        m.p_loss_pre,
        m.p_loss_final,
        m.delta_loss_frac,
        m.done_reason.as_str(),
        opt(m.q1_loss),
        opt(m.q2_loss),
        opt(m.policy_loss),
        m.alpha
    )
}

/// Appends episode rows to a CSV file and writes periodic checkpoints.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
    checkpoint_dir: PathBuf,
    normalizer: Normalizer,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>, checkpoint_dir: impl AsRef<Path>, normalizer: Normalizer) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            out,
            checkpoint_dir: checkpoint_dir.as_ref().to_path_buf(),
            normalizer,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl TrainObserver for MetricsWriter {
    fn on_episode(&mut self, metrics: &EpisodeMetrics) -> Result<()> {
        writeln!(self.out, "{}", metrics_row(metrics)).map_err(|e| Error::io(&self.path, e))
    }

    fn on_checkpoint(&mut self, agent: &SacAgent, episode: usize) -> Result<()> {
        let dir = &self.checkpoint_dir;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Checkpoint::from_agent(agent, &self.normalizer).save(dir.join(format!("episode_{episode:06}.json")))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}
