//! CFL controller driven by the upstream area deviation `theta`.

use crate::error::{Result, SldgError};

pub const SHRINK_FACTOR: f64 = 2.0 / 3.0;
pub const GROW_FACTOR: f64 = 1.5;
/// Shrinking below this fraction of `cfl_max` aborts the run.
pub const UNDERFLOW_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub cfl_max: f64,
    /// Grow threshold.
    pub delta_m: f64,
    /// Shrink threshold.
    pub delta_big_m: f64,
}

impl AdaptiveConfig {
    pub fn new(cfl_max: f64) -> Result<Self> {
        Self::with_thresholds(cfl_max, 0.003, 0.01)
    }

    pub fn with_thresholds(cfl_max: f64, delta_m: f64, delta_big_m: f64) -> Result<Self> {
        if !(cfl_max > 0.0 && cfl_max.is_finite()) {
            return Err(SldgError::InvalidArgument(format!("cfl_max must be positive, got {cfl_max}")));
        }
        if !(delta_m > 0.0 && delta_m < delta_big_m && delta_big_m.is_finite()) {
            return Err(SldgError::InvalidArgument(format!(
                "need 0 < delta_m < delta_M, got {delta_m} and {delta_big_m}"
            )));
        }
        Ok(AdaptiveConfig { cfl_max, delta_m, delta_big_m })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub cfl: f64,
    pub irefine: bool,
    grows: usize,
}

impl ControllerState {
    pub fn new(cfl: f64, cfg: &AdaptiveConfig) -> Result<Self> {
        if !(cfl > 0.0 && cfl <= cfg.cfl_max) {
            return Err(SldgError::InvalidArgument(format!("initial cfl {cfl} must lie in (0, {}]", cfg.cfl_max)));
        }
        Ok(ControllerState { cfl, irefine: false, grows: 0 })
    }

    /// Clear the per-step flags.
    pub fn begin_step(&mut self) {
        self.irefine = false;
        self.grows = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Shrink(f64),
    Grow(f64),
    Accept,
}

/// Apply the threshold rules to one measured `theta`, updating `state`.
/// A non-finite `theta` (failed geometry) counts as too large.
pub fn decide(theta: f64, state: &mut ControllerState, cfg: &AdaptiveConfig) -> Result<Decision> {
    if !(theta <= cfg.delta_big_m) {
        let cfl = state.cfl * SHRINK_FACTOR;
        let floor = UNDERFLOW_FRACTION * cfg.cfl_max;
        if cfl < floor {
            return Err(SldgError::CflUnderflow { cfl, floor });
        }
        state.cfl = cfl;
        state.irefine = true;
        return Ok(Decision::Shrink(cfl));
    }
    if theta < cfg.delta_m && !state.irefine && state.cfl != cfg.cfl_max && state.grows == 0 {
        state.cfl = (state.cfl * GROW_FACTOR).min(cfg.cfl_max);
        state.grows += 1;
        return Ok(Decision::Grow(state.cfl));
    }
    Ok(Decision::Accept)
}
