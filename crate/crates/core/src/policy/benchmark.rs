use crate::freshness::FreshnessModel;
use crate::numeric::grid_polish_max;
use crate::waiting::WaitingPolicy;

use super::{ErrorSlot, PolicyConfig, PolicyFamily, PolicyOutcome, Result};

/// Query again as soon as a reply arrives.
pub fn zero_wait_policy(model: &FreshnessModel, cfg: &PolicyConfig) -> Result<PolicyOutcome> {
    let report = model.zero_wait(cfg.w_max)?;
    Ok(PolicyOutcome::plain(
        PolicyFamily::ZeroWait,
        WaitingPolicy::zero_wait(cfg.w_max),
        report,
    ))
}

/// The best single wait for every state and age.
pub fn constant_wait_policy(model: &FreshnessModel, cfg: &PolicyConfig) -> Result<PolicyOutcome> {
    let errors = ErrorSlot::new();
    let (w, _) = grid_polish_max(
        |w| errors.score(|| model.evaluate(&WaitingPolicy::constant(w, cfg.w_max)).map(|r| r.mbf)),
        cfg.w_max,
        cfg.grid_points,
        cfg.polish_tol,
    );
    errors.finish()?;
    let policy = WaitingPolicy::constant(w, cfg.w_max);
    let report = model.evaluate(&policy)?;
    Ok(PolicyOutcome::plain(PolicyFamily::ConstantWait, policy, report))
}
