use serde::{Deserialize, Serialize};

use crate::analytic::{flux, TestFunction};
use crate::error::{Error, Result};
use crate::geometry::EPoint;
use crate::montecarlo::{run_paths, RunningStat};
use crate::process::Simulator;
use crate::radial::StepConfig;

/// Martingale residual `E u(X_t) - u(x) - E int_0^t Delta u(X_s) / 2 ds` of one test function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResidual {
    pub flux: f64,
    /// Residual at the configured step.
    pub residual: f64,
    pub stderr: f64,
    /// Residual with the step halved.
    pub residual_fine: f64,
    /// Noise plus discretization budget `3 se + |R_dt - R_{dt/2}|`.
    pub budget: f64,
}

impl GeneratorResidual {
    pub fn within_budget(&self) -> bool {
        self.residual.abs() < self.budget
    }

    /// Whether `|R|` is at least `factor` budgets.
    pub fn exceeds(&self, factor: f64) -> bool {
        self.residual.abs() >= factor * self.budget
    }
}

/// Residual means and standard errors for each function, sharing paths.
pub fn generator_residuals(
    sim: &Simulator,
    x0: &EPoint,
    fns: &[TestFunction],
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::OutOfRange(format!("time must be > 0, got {t}")));
    }
    if n_paths < 2 {
        return Err(Error::InsufficientData("need at least two paths".into()));
    }
    let params = *sim.params();
    x0.validate(&params)?;
    for u in fns {
        u.validate()?;
    }
    let k = fns.len();
    let start: Vec<f64> = fns.iter().map(|u| u.value(x0, &params)).collect();
    let stats: Vec<RunningStat> = run_paths(
        n_paths,
        seed,
        || vec![RunningStat::new(); k],
        |acc, rng, _| {
            let mut integral = vec![0.0; k];
            let end = sim.walk(x0, t, rng, |s| {
                let p = s.before.point(&params);
                for (acc_i, u) in integral.iter_mut().zip(fns) {
                    *acc_i += u.half_laplacian(&p, &params) * s.dt();
                }
            });
            let end = end.point(&params);
            for (i, (st, u)) in acc.iter_mut().zip(fns).enumerate() {
                st.push(u.value(&end, &params) - start[i] - integral[i]);
            }
        },
    );
    Ok(stats.iter().map(|s| (s.mean(), s.stderr())).collect())
}

/// Residuals at the configured step and at half of it, with flux values and budgets.
pub fn generator_check(
    sim: &Simulator,
    x0: &EPoint,
    fns: &[TestFunction],
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<GeneratorResidual>> {
    let cfg = *sim.config();
    let fine_cfg = StepConfig { dt: 0.5 * cfg.dt, max_dt: cfg.max_dt.map(|m| 0.5 * m), ..cfg };
    let fine = sim.with_config(fine_cfg)?;
    let coarse = generator_residuals(sim, x0, fns, t, n_paths, seed)?;
    let finer = generator_residuals(&fine, x0, fns, t, n_paths, seed)?;
    fns.iter()
        .zip(coarse.iter().zip(&finer))
        .map(|(u, (&(r, se), &(rf, _)))| {
            Ok(GeneratorResidual {
                flux: flux(u, sim.params())?.value,
                residual: r,
                stderr: se,
                residual_fine: rf,
                budget: 3.0 * se + (r - rf).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ModelParams;
    use std::f64::consts::TAU;

    #[test]
    fn far_from_the_hole_any_smooth_function_is_a_martingale_part() {
        // Away from a* the process is planar Brownian motion, so the flux is irrelevant.
        let m = ModelParams::new(0.25, 1.0).unwrap();
        let sim = Simulator::new(m, StepConfig::adaptive(1e-3, 0.01)).unwrap();
        let u = TestFunction::linear(1.0, 5.0);
        let r = generator_check(&sim, &EPoint::Plane { r: 4.0, theta: 0.0 }, &[u], 0.05, 20_000, 3).unwrap();
        assert!(r[0].within_budget(), "{:?}", r[0]);
    }

    #[test]
    fn star_start_separates_zero_and_nonzero_flux() {
        let m = ModelParams::new(0.25, 1.0).unwrap();
        let sim = Simulator::new(m, StepConfig::adaptive(1e-4, 0.01)).unwrap();
        let c = TAU * m.epsilon() / m.p();
        let fns = [TestFunction::linear(1.0, -c), TestFunction::linear(1.0, c)];
        let r = generator_check(&sim, &EPoint::Star, &fns, 0.2, 20_000, 8).unwrap();
        assert!(r[0].flux.abs() < 1e-12 && r[1].flux.abs() > 1.0);
        assert!(r[0].within_budget(), "{:?}", r[0]);
        assert!(r[1].exceeds(5.0), "{:?}", r[1]);
    }
}
