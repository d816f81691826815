use serde::{Deserialize, Serialize};

use crate::analytic::green_shape;
use crate::error::{Error, Result};
use crate::geometry::{mp_ball_volume, rho, EPoint, ModelParams};
use crate::montecarlo::{derive_seed, run_paths, RunningStat};
use crate::process::{DomainSpec, Simulator};

use super::envelope::{fit_band, BandFit, FitOptions};
use super::grid::GridBin;

/// Region whose occupation time is recorded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GreenTarget {
    /// Geodesic ball `B(center, radius)`.
    Ball { center: EPoint, radius: f64 },
    /// Cell of a density grid.
    Bin { bin: GridBin },
}

impl GreenTarget {
    pub fn measure(&self, params: &ModelParams) -> f64 {
        match self {
            GreenTarget::Ball { center, radius } => mp_ball_volume(center, *radius, params),
            GreenTarget::Bin { bin } => bin.measure(params),
        }
    }

    pub fn contains(&self, x: &EPoint, params: &ModelParams) -> bool {
        match self {
            GreenTarget::Ball { center, radius } => rho(x, center, params) < *radius,
            GreenTarget::Bin { bin } => bin.contains(x, params),
        }
    }

    /// Representative point.
    pub fn center(&self, params: &ModelParams) -> EPoint {
        match self {
            GreenTarget::Ball { center, .. } => *center,
            GreenTarget::Bin { bin } => bin.center(params),
        }
    }
}

/// Occupation-time estimate of `G_D(x0, target) / m_p(target)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenEstimate {
    pub source: EPoint,
    pub target: GreenTarget,
    /// Mean time spent in the target before exit.
    pub occupation: f64,
    pub measure: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Green-function estimates from one source with exit bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenRun {
    pub n_paths: u64,
    /// Paths still inside the domain when the step budget ran out.
    pub unexited: u64,
    pub mean_exit_time: f64,
    pub estimates: Vec<GreenEstimate>,
}

/// Estimates `G_D(x0, .)` on the targets by occupation times of killed paths.
pub fn estimate_green(
    sim: &Simulator,
    x0: &EPoint,
    domain: &DomainSpec,
    targets: &[GreenTarget],
    n_paths: u64,
    max_steps: usize,
    seed: u64,
) -> Result<GreenRun> {
    if n_paths == 0 {
        return Err(Error::InsufficientData("need at least one path".into()));
    }
    if matches!(domain, DomainSpec::Ball { radius } if !radius.is_finite()) {
        return Err(Error::InvalidDomain("domain must be bounded".into()));
    }
    let params = *sim.params();
    domain.validate(&params)?;
    if !domain.contains(x0, &params) {
        return Err(Error::InvalidPoint(format!("start point {x0} is outside the domain")));
    }
    for t in targets {
        if !(t.measure(&params) > 0.0) {
            return Err(Error::InvalidParams("green targets must have positive measure".into()));
        }
    }
    let k = targets.len();
    let init = || (vec![RunningStat::new(); k], 0u64, RunningStat::new());
    let (stats, unexited, exit) = run_paths(n_paths, seed, init, |acc, rng, _| {
        let mut occ = vec![0.0; k];
        let out = sim.simulate_killed(x0, domain, max_steps, rng, |s| {
            let p = s.after.point(&params);
            for (o, t) in occ.iter_mut().zip(targets) {
                if t.contains(&p, &params) {
                    *o += s.dt();
                }
            }
        });
        match out {
            Ok(o) => {
                for (st, v) in acc.0.iter_mut().zip(occ) {
                    st.push(v);
                }
                match o.exit_time {
                    Some(e) => acc.2.push(e),
                    None => acc.1 += 1,
                }
            }
            Err(_) => acc.1 += 1,
        }
    });
    if unexited == n_paths {
        return Err(Error::InsufficientData("no path left the domain within the step budget".into()));
    }
    let estimates = targets
        .iter()
        .zip(&stats)
        .map(|(t, s)| {
            let m = t.measure(&params);
            GreenEstimate {
                source: *x0,
                target: *t,
                occupation: s.mean(),
                measure: m,
                value: s.mean() / m,
                stderr: s.stderr() / m,
            }
        })
        .collect();
    Ok(GreenRun { n_paths, unexited, mean_exit_time: exit.mean(), estimates })
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InsufficientData("need at least three matching points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

/// Green function from `a*` to pole balls, regressed on the distance to the pole end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleLinearity {
    /// Distance `b - x` from each pole point to the end of the pole inside the domain.
    pub distances: Vec<f64>,
    pub estimates: Vec<GreenEstimate>,
    pub fit: LinearFit,
}

/// Estimates `G_D(x, a*)` at the pole `heights` and fits a line in `b - x`.
///
/// Uses the symmetry `G_D(x, a*) = G_D(a*, x)`: paths start at `a*` and the
/// occupation of a ball of radius `radius` around each pole point is recorded.
pub fn pole_linearity(
    sim: &Simulator,
    domain: &DomainSpec,
    heights: &[f64],
    radius: f64,
    n_paths: u64,
    max_steps: usize,
    seed: u64,
) -> Result<PoleLinearity> {
    if !domain.contains_star() {
        return Err(Error::InvalidDomain("domain must contain a*".into()));
    }
    let b = domain.pole_end();
    if heights.iter().any(|&x| !(x > radius && x + radius < b)) {
        return Err(Error::InvalidPoint(format!("pole balls of radius {radius} must lie inside (0, {b})")));
    }
    let targets: Vec<GreenTarget> =
        heights.iter().map(|&x| GreenTarget::Ball { center: EPoint::Pole(x), radius }).collect();
    let run = estimate_green(sim, &EPoint::Star, domain, &targets, n_paths, max_steps, seed)?;
    let distances: Vec<f64> = heights.iter().map(|x| b - x).collect();
    let values: Vec<f64> = run.estimates.iter().map(|e| e.value).collect();
    let fit = linear_fit(&distances, &values)?;
    Ok(PoleLinearity { distances, estimates: run.estimates, fit })
}

/// Green-function estimates and the constant band fitted to the Green shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenShapeFit {
    pub estimates: Vec<GreenEstimate>,
    /// Shape at the source and the target centre of each estimate.
    pub shapes: Vec<f64>,
    pub fit: BandFit,
}

/// Estimates `G_D` from each source to its targets and fits `C_low g <= G <= C_up g`.
#[allow(clippy::too_many_arguments)]
pub fn green_shape_fit(
    sim: &Simulator,
    domain: &DomainSpec,
    jobs: &[(EPoint, Vec<GreenTarget>)],
    n_paths: u64,
    max_steps: usize,
    opts: &FitOptions,
    seed: u64,
) -> Result<GreenShapeFit> {
    let params = *sim.params();
    let mut estimates = Vec::new();
    let mut shapes = Vec::new();
    for (i, (x, targets)) in jobs.iter().enumerate() {
        let run = estimate_green(sim, x, domain, targets, n_paths, max_steps, derive_seed(seed, i as u64))?;
        for e in run.estimates {
            shapes.push(green_shape(domain, x, &e.target.center(&params), &params)?);
            estimates.push(e);
        }
    }
    let values: Vec<(f64, f64)> = estimates.iter().map(|e| (e.value, e.stderr)).collect();
    let fit = fit_band(&values, |i, _| shapes[i], false, opts)?;
    Ok(GreenShapeFit { estimates, shapes, fit })
}
