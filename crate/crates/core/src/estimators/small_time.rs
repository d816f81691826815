use serde::{Deserialize, Serialize};

use crate::analytic::{on_diagonal_envelope, small_time_envelope, PairGeometry};
use crate::error::{Error, Result};
use crate::geometry::{classify_regime, EPoint, ModelParams, RegimeLabel};
use crate::montecarlo::derive_seed;
use crate::process::Simulator;
use crate::radial::StepConfig;

use super::envelope::{verify_envelope, EnvelopeCell, EnvelopeReport, FitOptions};
use super::grid::GridBin;
use super::point::{sample_endpoints, PointDensity};

/// Angular sectors used for ring targets.
const RING_SECTORS: usize = 8;

/// Ball radius and ring half-width in units of `sqrt(t)`.
const BANDWIDTH: f64 = 0.15;

/// Target of one envelope cell.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Target {
    Point(EPoint),
    /// Planar ring sector at geodesic distance `rho` from `a*`.
    Ring {
        rho: f64,
        sector: usize,
    },
}

fn sector_angle(sector: usize) -> f64 {
    (sector as f64 + 0.5) * std::f64::consts::TAU / RING_SECTORS as f64
}

/// Sources and targets covering one small-time regime at time `t`.
///
/// Lengths scale with `sqrt(t)` so the same pairs are compared across the time grid.
fn design(params: &ModelParams, regime: RegimeLabel, t: f64) -> Result<Vec<(EPoint, Vec<Target>)>> {
    let eps = params.epsilon();
    let st = t.sqrt();
    let steps = |n: usize, start: f64| (0..n).map(move |k| start + 0.5 * k as f64 * st);
    let rings = |n: usize, sector: usize| steps(n, 0.5 * st).map(move |rho| Target::Ring { rho, sector });
    Ok(match regime {
        RegimeLabel::SmallPoleAny => {
            let far = steps(5, 0.5).map(|s| Target::Point(EPoint::Pole(s))).collect();
            let mut near: Vec<Target> = rings(3, 0).collect();
            near.push(Target::Point(EPoint::Star));
            near.push(Target::Point(EPoint::Pole(1.5 * st)));
            vec![(EPoint::Pole(0.5), far), (EPoint::Pole(0.5 * st), near)]
        }
        RegimeLabel::SmallPlaneNearStar => {
            let th = sector_angle(0);
            let x = EPoint::Plane { r: eps + 0.5 * st, theta: th };
            let mut ys: Vec<Target> =
                steps(4, eps + 0.5 * st).map(|r| Target::Point(EPoint::Plane { r, theta: th })).collect();
            ys.extend(rings(3, RING_SECTORS / 2));
            ys.push(Target::Point(EPoint::Star));
            let diagonal = vec![Target::Point(EPoint::Star), Target::Ring { rho: 0.5 * st, sector: 2 }];
            vec![(x, ys), (EPoint::Star, diagonal)]
        }
        RegimeLabel::SmallPlaneFar => {
            let r = eps + 1.0;
            let ys = steps(5, 0.0).map(|d| Target::Point(EPoint::Plane { r: r.hypot(d), theta: d.atan2(r) })).collect();
            vec![(EPoint::Plane { r, theta: 0.0 }, ys)]
        }
        other => return Err(Error::OutOfRange(format!("{other} is a large-time regime"))),
    })
}

/// Estimated densities on the built-in pair design of a small-time regime.
///
/// Each time uses adaptive steps between `t / 200` and `t / 20`, keeping the other fields of `base`.
pub fn small_time_cells(
    params: &ModelParams,
    regime: RegimeLabel,
    times: &[f64],
    time_threshold: f64,
    base: &StepConfig,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<EnvelopeCell>> {
    if times.is_empty() {
        return Err(Error::InvalidParams("empty time grid".into()));
    }
    let mut cells = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        if !(t.is_finite() && t > 0.0 && t <= time_threshold) {
            return Err(Error::OutOfRange(format!("time {t} is not in (0, {time_threshold}]")));
        }
        let st = t.sqrt();
        let cfg = StepConfig { dt: t / 200.0, max_dt: Some(t / 20.0), ..*base };
        let sim = Simulator::new(*params, cfg)?;
        for (j, (x, targets)) in design(params, regime, t)?.iter().enumerate() {
            let sample = sample_endpoints(&sim, x, &[t], n_paths, derive_seed(seed, (i * 16 + j) as u64))?;
            for target in targets {
                let (y, d): (EPoint, PointDensity) = match *target {
                    Target::Point(y) => (y, sample.density_at(0, &y, BANDWIDTH * st, params)?),
                    Target::Ring { rho, sector } => {
                        let bin = GridBin::Plane {
                            lo: rho - BANDWIDTH * st,
                            hi: rho + BANDWIDTH * st,
                            sector,
                            sectors: RING_SECTORS,
                        };
                        (bin.center(params), sample.bin_density(0, &bin, params)?)
                    }
                };
                let label = classify_regime(x, &y, t, time_threshold, params)?;
                if label != regime {
                    return Err(Error::OutOfRange(format!("pair ({x}, {y}) at t = {t} falls in {label}")));
                }
                if d.value > 0.0 {
                    cells.push(EnvelopeCell {
                        t,
                        geometry: PairGeometry::new(x, &y, params),
                        value: d.value,
                        stderr: d.stderr,
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// Envelope fit of a small-time regime together with its negative control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallTimeReport {
    pub regime: RegimeLabel,
    pub cells: usize,
    pub fit: EnvelopeReport,
    /// Fit with the powers `t^{-1/2}` and `t^{-1}` swapped.
    pub control: EnvelopeReport,
}

impl SmallTimeReport {
    /// Feasible fit and infeasible control.
    pub fn passed(&self) -> bool {
        self.fit.feasible && !self.control.feasible
    }
}

/// Fits the small-time envelope of `regime` and its negative control on the built-in design.
#[allow(clippy::too_many_arguments)]
pub fn verify_small_time(
    params: &ModelParams,
    regime: RegimeLabel,
    times: &[f64],
    time_threshold: f64,
    base: &StepConfig,
    n_paths: u64,
    opts: &FitOptions,
    seed: u64,
) -> Result<(SmallTimeReport, Vec<EnvelopeCell>)> {
    let cells = small_time_cells(params, regime, times, time_threshold, base, n_paths, seed)?;
    let env = small_time_envelope(regime, params, time_threshold)?;
    let fit = verify_envelope(&cells, &env, opts)?;
    let control = verify_envelope(&cells, &env.negative_control(), opts)?;
    Ok((SmallTimeReport { regime, cells: cells.len(), fit, control }, cells))
}

/// On-diagonal density `p(t, a*, a*)` at one time, scaled by `sqrt(t) v t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalPoint {
    pub t: f64,
    pub density: PointDensity,
    pub scaled: f64,
}

/// Estimates `p(t, a*, a*)` on `times` with bandwidth `bandwidth * sqrt(t)`.
///
/// Steps are adaptive between `t / 1000` and `t / 20`, keeping the other fields of `base`.
pub fn on_diagonal_scan(
    params: &ModelParams,
    times: &[f64],
    base: &StepConfig,
    bandwidth: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<DiagonalPoint>> {
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::OutOfRange(format!("time must be > 0, got {t}")));
            }
            let cfg = StepConfig { dt: t / 1000.0, max_dt: Some(t / 20.0), ..*base };
            let sim = Simulator::new(*params, cfg)?;
            let sample = sample_endpoints(&sim, &EPoint::Star, &[t], n_paths, derive_seed(seed, i as u64))?;
            let density = sample.density_at(0, &EPoint::Star, bandwidth * t.sqrt(), params)?;
            Ok(DiagonalPoint { t, density, scaled: density.value * t.sqrt().max(t) })
        })
        .collect()
}

/// Largest over smallest scaled on-diagonal value.
pub fn diagonal_spread(points: &[DiagonalPoint]) -> f64 {
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.scaled), hi.max(p.scaled)));
    hi / lo
}

/// On-diagonal envelope fit over the scanned times.
pub fn verify_on_diagonal(params: &ModelParams, points: &[DiagonalPoint], opts: &FitOptions) -> Result<EnvelopeReport> {
    let g = PairGeometry::new(&EPoint::Star, &EPoint::Star, params);
    let cells: Vec<EnvelopeCell> = points
        .iter()
        .filter(|p| p.density.value > 0.0)
        .map(|p| EnvelopeCell { t: p.t, geometry: g, value: p.density.value, stderr: p.density.stderr })
        .collect();
    verify_envelope(&cells, &on_diagonal_envelope(), opts)
}
