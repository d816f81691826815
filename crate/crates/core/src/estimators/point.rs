use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mp_ball_volume, rho, EPoint, ModelParams};
use crate::montecarlo::{run_paths, RunningStat, Samples};
use crate::process::Simulator;

use super::grid::GridBin;

/// Count below which a point estimate is flagged.
pub const MIN_HITS: u64 = 100;

/// Kernel estimate of `p(t, x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDensity {
    pub value: f64,
    pub stderr: f64,
    /// Paths that ended in the smallest ball used.
    pub hits: u64,
    /// Fewer than [`MIN_HITS`] hits.
    pub insufficient: bool,
}

/// Endpoints of `N` paths observed at several times.
#[derive(Clone, Debug, PartialEq)]
pub struct EndpointSample {
    pub source: EPoint,
    pub times: Vec<f64>,
    /// `points[k]` holds the states at `times[k]`.
    pub points: Vec<Vec<EPoint>>,
}

/// Simulates `n_paths` paths from `x0` and records them at the ascending `times`.
pub fn sample_endpoints(
    sim: &Simulator,
    x0: &EPoint,
    times: &[f64],
    n_paths: u64,
    seed: u64,
) -> Result<EndpointSample> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
        return Err(Error::InvalidParams("observation times must be positive and increasing".into()));
    }
    let params = *sim.params();
    x0.validate(&params)?;
    let k = times.len();
    // Radial coordinate and angle per observation, flattened path by path.
    let flat: (Samples, Samples) = run_paths(
        n_paths,
        seed,
        || (Samples::default(), Samples::default()),
        |acc, rng, _| {
            sim.observe_at(x0, times, rng, |_, st| {
                acc.0 .0.push(st.y());
                acc.1 .0.push(st.theta);
            });
        },
    );
    let mut points = vec![Vec::with_capacity(n_paths as usize); k];
    for (i, (y, th)) in flat.0 .0.iter().zip(&flat.1 .0).enumerate() {
        points[i % k].push(EPoint::from_signed_radial(*y, *th, &params));
    }
    Ok(EndpointSample { source: *x0, times: times.to_vec(), points })
}

impl EndpointSample {
    pub fn n_paths(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Ball-average density around `y` at observation `k` with radius `h`.
    ///
    /// At `y = a*` two radii `h` and `h / 2` are combined by linear Richardson extrapolation.
    pub fn density_at(&self, k: usize, y: &EPoint, h: f64, params: &ModelParams) -> Result<PointDensity> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParams(format!("bandwidth must be > 0, got {h}")));
        }
        let pts = self.points.get(k).ok_or_else(|| Error::InvalidParams(format!("no observation {k}")))?;
        if pts.is_empty() {
            return Err(Error::InsufficientData("no paths".into()));
        }
        y.validate(params)?;
        let stat = if matches!(y, EPoint::Star) {
            let big = mp_ball_volume(y, h, params);
            let small = mp_ball_volume(y, 0.5 * h, params);
            let mut hits = 0;
            let stat: RunningStat = pts
                .iter()
                .map(|x| {
                    let d = x.rho_norm(params);
                    if d < 0.5 * h {
                        hits += 1;
                    }
                    2.0 * f64::from(u8::from(d < 0.5 * h)) / small - f64::from(u8::from(d < h)) / big
                })
                .collect();
            (stat, hits)
        } else {
            let vol = mp_ball_volume(y, h, params);
            let mut hits = 0;
            let stat: RunningStat = pts
                .iter()
                .map(|x| {
                    let inside = rho(x, y, params) < h;
                    hits += u64::from(inside);
                    f64::from(u8::from(inside)) / vol
                })
                .collect();
            (stat, hits)
        };
        let (stat, hits) = stat;
        Ok(PointDensity { value: stat.mean(), stderr: stat.stderr(), hits, insufficient: hits < MIN_HITS })
    }

    /// Average density over a grid bin at observation `k`.
    pub fn bin_density(&self, k: usize, bin: &GridBin, params: &ModelParams) -> Result<PointDensity> {
        let pts = self.points.get(k).ok_or_else(|| Error::InvalidParams(format!("no observation {k}")))?;
        if pts.is_empty() {
            return Err(Error::InsufficientData("no paths".into()));
        }
        let vol = bin.measure(params);
        let hits = pts.iter().filter(|x| bin.contains(x, params)).count() as u64;
        let n = pts.len() as f64;
        let f = hits as f64 / n;
        Ok(PointDensity {
            value: f / vol,
            stderr: (f * (1.0 - f) / (n - 1.0).max(1.0)).sqrt() / vol,
            hits,
            insufficient: hits < MIN_HITS,
        })
    }
}

/// Estimate of `p(t, x, y)` from `n_paths` paths started at `x`.
pub fn estimate_point_density(
    sim: &Simulator,
    x: &EPoint,
    y: &EPoint,
    t: f64,
    n_paths: u64,
    bandwidth: f64,
    seed: u64,
) -> Result<PointDensity> {
    let sample = sample_endpoints(sim, x, &[t], n_paths, seed)?;
    sample.density_at(0, y, bandwidth, sim.params())
}
