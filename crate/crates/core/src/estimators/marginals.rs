use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::analytic::radial_identity;
use crate::error::{Error, Result};
use crate::geometry::EPoint;
use crate::montecarlo::{run_paths, Samples};
use crate::process::Simulator;
use crate::radial::RadialSimulator;

/// Planar radial marginal of the full process against the radial simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialComparison {
    pub t: f64,
    /// Bin edges in `|y|_rho`; the last bin also collects everything beyond it.
    pub edges: Vec<f64>,
    /// Radial mass per bin from the planar density of the full process.
    pub full: Vec<f64>,
    /// Mass per bin of the positive part of the radial simulator.
    pub radial: Vec<f64>,
    /// Total variation distance between the two histograms.
    pub tv: f64,
}

fn bin_of(y: f64, y_max: f64, bins: usize) -> Option<usize> {
    (y > 0.0).then(|| ((y / y_max * bins as f64) as usize).min(bins - 1))
}

/// Compares the planar part of the law of `X_t` from `a*` with the radial simulator.
///
/// The full process gives an annulus density on the plane that is converted to a
/// radial mass through `2 pi (r + eps)`. Both runs share the step configuration.
pub fn radial_comparison(
    sim: &Simulator,
    t: f64,
    bins: usize,
    y_max: f64,
    n_paths: u64,
    seed: u64,
) -> Result<RadialComparison> {
    if bins == 0 || !(y_max > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidParams("need bins >= 1, y_max > 0 and t > 0".into()));
    }
    let params = *sim.params();
    let width = y_max / bins as f64;
    let counts: Vec<u64> = run_paths(
        n_paths,
        seed,
        || vec![0u64; bins],
        |acc, rng, _| {
            let y = sim.endpoint(&EPoint::Star, t, rng).y();
            if let Some(k) = bin_of(y, y_max, bins) {
                acc[k] += 1;
            }
        },
    );
    let radial_sim = RadialSimulator::new(params, *sim.config())?;
    let radial_counts: Vec<u64> = run_paths(
        n_paths,
        seed ^ 0x5eed,
        || vec![0u64; bins],
        |acc, rng, _| {
            let y = radial_sim.run(0.0, t, false, rng).end.y;
            if let Some(k) = bin_of(y, y_max, bins) {
                acc[k] += 1;
            }
        },
    );
    let eps = params.epsilon();
    let n = n_paths as f64;
    let full = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
            let area = std::f64::consts::PI * ((eps + b).powi(2) - (eps + a).powi(2));
            let planar = c as f64 / n / area;
            // The annulus density is converted back at the bin midpoint, where the identity is exact.
            let mid = 0.5 * (a + b);
            Ok(planar / radial_identity(1.0, mid, &params)? * width)
        })
        .collect::<Result<Vec<f64>>>()?;
    let radial: Vec<f64> = radial_counts.iter().map(|&c| c as f64 / n).collect();
    let tv = 0.5 * full.iter().zip(&radial).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let edges = (0..=bins).map(|k| k as f64 * width).collect();
    Ok(RadialComparison { t, edges, full, radial, tv })
}

/// Chi-square test of the planar endpoint angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleUniformity {
    pub counts: Vec<u64>,
    pub statistic: f64,
    pub p_value: f64,
}

/// Tests uniformity of the angle of the planar endpoints of paths from `x0`.
pub fn angle_uniformity(
    sim: &Simulator,
    x0: &EPoint,
    t: f64,
    sectors: usize,
    n_paths: u64,
    seed: u64,
) -> Result<AngleUniformity> {
    if sectors < 2 {
        return Err(Error::InvalidParams("need at least two sectors".into()));
    }
    let counts: Vec<u64> = run_paths(
        n_paths,
        seed,
        || vec![0u64; sectors],
        |acc, rng, _| {
            let st = sim.endpoint(x0, t, rng);
            if st.y() > 0.0 {
                let k = (st.theta / std::f64::consts::TAU * sectors as f64) as usize;
                acc[k.min(sectors - 1)] += 1;
            }
        },
    );
    let total: u64 = counts.iter().sum();
    if total < 5 * sectors as u64 {
        return Err(Error::InsufficientData(format!("only {total} planar endpoints")));
    }
    let expected = total as f64 / sectors as f64;
    let statistic = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum::<f64>();
    let chi = ChiSquared::new((sectors - 1) as f64).map_err(|e| Error::InvalidParams(e.to_string()))?;
    Ok(AngleUniformity { counts, statistic, p_value: 1.0 - chi.cdf(statistic) })
}

/// Chi-square test of independence between the radius and the angle of planar endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleRadiusIndependence {
    /// Radius bin edges in `|y|_rho`, chosen as empirical quantiles.
    pub radius_edges: Vec<f64>,
    /// Counts indexed by `[radius bin][angle sector]`.
    pub table: Vec<Vec<u64>>,
    pub statistic: f64,
    pub p_value: f64,
}

/// Tests independence of radius and angle of the planar endpoints of paths from `x0`.
///
/// Radius bins are equal-count bins of the sample; angle bins are equal sectors.
pub fn angle_radius_independence(
    sim: &Simulator,
    x0: &EPoint,
    t: f64,
    radius_bins: usize,
    sectors: usize,
    n_paths: u64,
    seed: u64,
) -> Result<AngleRadiusIndependence> {
    if radius_bins < 2 || sectors < 2 {
        return Err(Error::InvalidParams("need at least two radius bins and two sectors".into()));
    }
    let (radii, angles): (Samples, Samples) = run_paths(
        n_paths,
        seed,
        || (Samples::default(), Samples::default()),
        |acc, rng, _| {
            let st = sim.endpoint(x0, t, rng);
            if st.y() > 0.0 {
                acc.0 .0.push(st.y());
                acc.1 .0.push(st.theta);
            }
        },
    );
    let n = radii.0.len();
    if n < 5 * radius_bins * sectors {
        return Err(Error::InsufficientData(format!("only {n} planar endpoints")));
    }
    let mut sorted = radii.0.clone();
    sorted.sort_by(f64::total_cmp);
    let mut radius_edges = vec![0.0];
    radius_edges.extend((1..radius_bins).map(|k| sorted[k * n / radius_bins]));
    radius_edges.push(f64::INFINITY);
    let mut table = vec![vec![0u64; sectors]; radius_bins];
    for (&y, &theta) in radii.0.iter().zip(&angles.0) {
        let i = radius_edges[1..radius_bins].partition_point(|&e| e <= y);
        let j = ((theta / std::f64::consts::TAU * sectors as f64) as usize).min(sectors - 1);
        table[i][j] += 1;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..sectors).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let statistic = table
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &c)| (i, j, c)))
        .map(|(i, j, c)| {
            let e = rows[i] * cols[j] / n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum::<f64>();
    let dof = ((radius_bins - 1) * (sectors - 1)) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidParams(e.to_string()))?;
    Ok(AngleRadiusIndependence { radius_edges, table, statistic, p_value: 1.0 - chi.cdf(statistic) })
}
