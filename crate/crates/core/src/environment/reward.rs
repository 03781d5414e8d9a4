use crate::error::{Error, Result};
use crate::power_flow::ViolationReport;

/// Which case of the piecewise reward applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardBranch {
    Violation,
    LossReduced,
    LossIncreasedHeavily,
    Otherwise,
}

/// Classifies a step by its violations and fractional loss change.
pub fn reward_branch(delta_frac: f64, report: &ViolationReport) -> RewardBranch {
    if report.has_violations() {
        RewardBranch::Violation
    } else if delta_frac < 0.0 {
        RewardBranch::LossReduced
    } else if delta_frac >= 0.02 {
        RewardBranch::LossIncreasedHeavily
    } else {
        RewardBranch::Otherwise
    }
}

/// Piecewise reward of one control iteration.
///
/// The loss change is taken relative to the pre-control loss, so the 2%
/// breakpoint and the 1000/50 slopes act on a dimensionless fraction.
pub fn compute_reward(p_loss: f64, p_loss_pre: f64, report: &ViolationReport) -> Result<f64> {
    if !(p_loss_pre > 0.0) {
        return Err(Error::Config(format!(
            "pre-control loss must be positive, got {p_loss_pre}"
        )));
    }
    let delta = (p_loss - p_loss_pre) / p_loss_pre;
    Ok(reward_from_delta(delta, report))
}

pub(crate) fn reward_from_delta(delta: f64, report: &ViolationReport) -> f64 {
    match reward_branch(delta, report) {
        RewardBranch::Violation => -report.delta_p_overflow / 10.0 - report.delta_v_violation / 100.0,
        RewardBranch::LossReduced => 50.0 - delta * 1000.0,
        RewardBranch::LossIncreasedHeavily => -100.0,
        RewardBranch::Otherwise => -1.0 - delta * 50.0,
    }
}
