use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rho, EPoint, ModelParams};
use crate::process::Simulator;
use crate::radial::StepConfig;

use super::point::sample_endpoints;

/// Settings of the cylinder ratio experiment. Lengths are in units of `sqrt(s)`, steps in units of `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackOptions {
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_max_dt")]
    pub max_dt: f64,
    /// Confidence width in standard errors for the separation check.
    #[serde(default = "default_z")]
    pub z: f64,
}

fn default_paths() -> u64 {
    200_000
}
fn default_bandwidth() -> f64 {
    0.1
}
fn default_dt() -> f64 {
    2.5e-3
}
fn default_max_dt() -> f64 {
    0.05
}
fn default_z() -> f64 {
    2.0
}

impl Default for HarnackOptions {
    fn default() -> Self {
        HarnackOptions {
            n_paths: default_paths(),
            bandwidth: default_bandwidth(),
            dt: default_dt(),
            max_dt: default_max_dt(),
            z: default_z(),
        }
    }
}

/// Extreme of `u(t, x) = p(t, x, y)` over the candidate points of one cylinder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderExtreme {
    pub value: f64,
    pub stderr: f64,
    pub t: f64,
    pub point: EPoint,
}

/// One row of the ratio table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackRow {
    pub s: f64,
    pub y: EPoint,
    /// Supremum over the later cylinder `(3s/2, 2s) x B(y, 2 sqrt s)`.
    pub sup: CylinderExtreme,
    /// Infimum over the earlier cylinder `(s/2, s) x B(y, 2 sqrt s)`.
    pub inf: CylinderExtreme,
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// Whether the confidence intervals of the two extremes are disjoint.
    pub separated: bool,
}

/// Reference point `y` at distance `sqrt(s)` from `a*` on the plane, and probe points in `B(y, 2 sqrt s)`.
///
/// The probes cover `y`, `a*`, the pole, the far side of the hole and the outer rim of the ball.
pub fn star_probes(params: &ModelParams, s: f64) -> (EPoint, Vec<EPoint>) {
    let eps = params.epsilon();
    let r = s.sqrt();
    let y = EPoint::Plane { r: eps + r, theta: 0.0 };
    let probes = vec![
        y,
        EPoint::Star,
        EPoint::Pole(0.5 * r),
        EPoint::Pole(0.95 * r),
        EPoint::Plane { r: eps + 0.5 * r, theta: std::f64::consts::PI },
        EPoint::Plane { r: eps + 2.9 * r, theta: 0.0 },
    ];
    (y, probes)
}

/// Reference point at distance `norm` from `a*` with probes displaced by `1.8 sqrt(s)` inside the plane.
pub fn planar_probes(params: &ModelParams, s: f64, norm: f64) -> (EPoint, Vec<EPoint>) {
    let eps = params.epsilon();
    let r = eps + norm;
    let d = 1.8 * s.sqrt();
    let y = EPoint::Plane { r, theta: 0.0 };
    let tangential = |sign: f64| {
        let (px, py) = (r, sign * d);
        EPoint::Plane { r: px.hypot(py), theta: py.atan2(px).rem_euclid(std::f64::consts::TAU) }
    };
    let mut probes = vec![y, EPoint::Plane { r: r + d, theta: 0.0 }, tangential(1.0), tangential(-1.0)];
    if norm > d {
        probes.push(EPoint::Plane { r: r - d, theta: 0.0 });
    }
    (y, probes)
}

/// Estimates the cylinder extremes of `p(., ., y)` over the probes.
///
/// Paths start at `y` and use the symmetry `p(t, x, y) = p(t, y, x)`.
pub fn harnack_row(
    sim: &Simulator,
    y: &EPoint,
    s: f64,
    probes: &[EPoint],
    opts: &HarnackOptions,
    seed: u64,
) -> Result<HarnackRow> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::OutOfRange(format!("s must lie in (0, 1], got {s}")));
    }
    if probes.is_empty() {
        return Err(Error::InvalidParams("no probe points".into()));
    }
    let params = *sim.params();
    let radius = 2.0 * s.sqrt();
    for x in probes {
        x.validate(&params)?;
        if rho(x, y, &params) >= radius {
            return Err(Error::InvalidPoint(format!("probe {x} lies outside B(y, 2 sqrt s)")));
        }
    }
    let cfg = StepConfig { dt: opts.dt * s, max_dt: Some(opts.max_dt * s), ..*sim.config() };
    let local = sim.with_config(cfg)?;
    let times = [0.5 * s, s, 1.5 * s, 2.0 * s];
    let sample = sample_endpoints(&local, y, &times, opts.n_paths, seed)?;
    let h = opts.bandwidth * s.sqrt();
    let mut sup: Option<CylinderExtreme> = None;
    let mut inf: Option<CylinderExtreme> = None;
    for (k, &t) in times.iter().enumerate() {
        for x in probes {
            let d = sample.density_at(k, x, h, &params)?;
            let e = CylinderExtreme { value: d.value, stderr: d.stderr, t, point: *x };
            if k >= 2 {
                if sup.is_none_or(|b| e.value > b.value) {
                    sup = Some(e);
                }
            } else if inf.is_none_or(|b| e.value < b.value) {
                inf = Some(e);
            }
        }
    }
    let (sup, inf) = (sup.unwrap(), inf.unwrap());
    if !(inf.value > 0.0) {
        return Err(Error::InsufficientData(format!("no paths near {} at t = {}", inf.point, inf.t)));
    }
    let ratio = sup.value / inf.value;
    let ratio_stderr = ratio * ((sup.stderr / sup.value).powi(2) + (inf.stderr / inf.value).powi(2)).sqrt();
    let separated = sup.value - opts.z * sup.stderr > inf.value + opts.z * inf.stderr;
    Ok(HarnackRow { s, y: *y, sup, inf, ratio, ratio_stderr, separated })
}

/// Ratio table over `s_grid` with `y` at distance `sqrt(s)` from `a*`, or at fixed distance `control`.
pub fn harnack_failure_demo(
    sim: &Simulator,
    s_grid: &[f64],
    control: Option<f64>,
    opts: &HarnackOptions,
    seed: u64,
) -> Result<Vec<HarnackRow>> {
    s_grid
        .iter()
        .map(|&s| {
            let (y, probes) = match control {
                None => star_probes(sim.params(), s),
                Some(norm) => planar_probes(sim.params(), s, norm),
            };
            harnack_row(sim, &y, s, &probes, opts, seed)
        })
        .collect()
}
