use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ModelParams;
use crate::montecarlo::run_paths;
use crate::radial::{local_time_ratio_limit, richardson_sqrt, RadialSimulator, StepConfig};

/// Ratio of one-sided to symmetric local time at 0 of the signed radial process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeReport {
    pub dt: f64,
    pub ratio_coarse: f64,
    /// Ratio with the step halved.
    pub ratio_fine: f64,
    pub extrapolated: f64,
    /// Limit `1 + beta`.
    pub limit: f64,
    pub relative_error: f64,
}

fn ratio(sim: &RadialSimulator, y0: f64, t: f64, n_paths: u64, seed: u64) -> Result<f64> {
    let (l, lhat) = run_paths(
        n_paths,
        seed,
        || (0.0, 0.0),
        |acc, rng, _| {
            let end = sim.run(y0, t, false, rng).end;
            acc.0 += end.l_right;
            acc.1 += end.lhat;
        },
    );
    if lhat <= 0.0 {
        return Err(Error::InsufficientData("no time spent near 0".into()));
    }
    Ok(l / lhat)
}

/// Estimates the local-time ratio at steps `dt` and `dt / 2` and extrapolates to zero step.
pub fn local_time_experiment(
    params: &ModelParams,
    cfg: &StepConfig,
    y0: f64,
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<LocalTimeReport> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::OutOfRange(format!("time must be > 0, got {t}")));
    }
    let coarse_cfg = StepConfig { max_dt: None, ..*cfg };
    let fine_cfg = StepConfig { dt: 0.5 * cfg.dt, ..coarse_cfg };
    let coarse = ratio(&RadialSimulator::new(*params, coarse_cfg)?, y0, t, n_paths, seed)?;
    let fine = ratio(&RadialSimulator::new(*params, fine_cfg)?, y0, t, n_paths, seed)?;
    let extrapolated = richardson_sqrt(coarse, fine);
    let limit = local_time_ratio_limit(params);
    Ok(LocalTimeReport {
        dt: cfg.dt,
        ratio_coarse: coarse,
        ratio_fine: fine,
        extrapolated,
        limit,
        relative_error: (extrapolated - limit).abs() / limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_case_has_ratio_one() {
        // With 2 pi eps = p the process is symmetric at 0 and both local times agree.
        let m = ModelParams::new(1.0 / std::f64::consts::TAU, 1.0).unwrap();
        let r = local_time_experiment(&m, &StepConfig::with_dt(1e-3), 0.0, 0.5, 4000, 2).unwrap();
        assert!((r.limit - 1.0).abs() < 1e-12);
        assert!(r.relative_error < 0.1, "{r:?}");
    }

    #[test]
    fn rejects_bad_time() {
        let m = ModelParams::new(0.25, 1.0).unwrap();
        assert!(local_time_experiment(&m, &StepConfig::default(), 0.0, 0.0, 10, 1).is_err());
    }
}
