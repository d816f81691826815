use serde::{Deserialize, Serialize};

use crate::analytic::{BoundEnvelope, EnvelopeConstants, PairGeometry, ShapeKind};
use crate::error::{Error, Result};

/// One estimated kernel value with its pair geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCell {
    pub t: f64,
    pub geometry: PairGeometry,
    pub value: f64,
    pub stderr: f64,
}

/// Settings of the constant fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Fraction of cells that must lie inside the band.
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    /// Width of the confidence interval in standard errors.
    #[serde(default = "default_z")]
    pub z: f64,
    /// Largest admissible `C_up / C_low`.
    #[serde(default = "default_max_tightness")]
    pub max_tightness: f64,
    #[serde(default = "default_rate_min")]
    pub rate_min: f64,
    #[serde(default = "default_rate_max")]
    pub rate_max: f64,
    #[serde(default = "default_rate_points")]
    pub rate_points: usize,
}

fn default_coverage() -> f64 {
    0.99
}
fn default_z() -> f64 {
    2.0
}
fn default_max_tightness() -> f64 {
    1e3
}
fn default_rate_min() -> f64 {
    1e-3
}
fn default_rate_max() -> f64 {
    1e2
}
fn default_rate_points() -> usize {
    151
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            coverage: default_coverage(),
            z: default_z(),
            max_tightness: default_max_tightness(),
            rate_min: default_rate_min(),
            rate_max: default_rate_max(),
            rate_points: default_rate_points(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::InvalidParams("coverage must lie in (0, 1]".into()));
        }
        if !(self.z >= 0.0 && self.max_tightness >= 1.0) {
            return Err(Error::InvalidParams("need z >= 0 and max_tightness >= 1".into()));
        }
        if !(self.rate_min > 0.0 && self.rate_max > self.rate_min && self.rate_points >= 2) {
            return Err(Error::InvalidParams("rate grid must be positive and non-degenerate".into()));
        }
        Ok(())
    }

    fn rates(&self) -> Vec<f64> {
        let n = self.rate_points;
        let (a, b) = (self.rate_min.ln(), self.rate_max.ln());
        (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
    }
}

/// Outcome of fitting free constants to estimated values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub regime: String,
    pub shape: ShapeKind,
    pub negative_control: bool,
    pub constants: EnvelopeConstants,
    pub cells: usize,
    /// Fraction of cells whose confidence interval meets `[lower, upper]`.
    pub fraction_inside: f64,
    /// Largest of `lower / (value + z se)` and `(value - z se) / upper`; above 1 is a violation.
    pub worst_violation: f64,
    pub worst_cell: usize,
    /// `C_up / C_low`.
    pub tightness: f64,
    /// `c_low / c_up`.
    pub rate_ratio: f64,
    pub feasible: bool,
}

/// Band of scale constants fitted to `values / shapes`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub constants: EnvelopeConstants,
    pub tightness: f64,
    pub fraction_inside: f64,
    pub worst_violation: f64,
    pub worst_cell: usize,
    pub feasible: bool,
}

/// Order-statistic scale: the `k`-th smallest and `k`-th largest ratio.
fn quantile_pair(ratios: &mut [f64], coverage: f64) -> (f64, f64) {
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    let drop = ((1.0 - coverage) * n as f64).floor() as usize;
    let drop = drop.min((n - 1) / 2);
    (ratios[drop], ratios[n - 1 - drop])
}

/// Fits `C_low s_low <= value <= C_up s_up` with rates searched on a grid.
///
/// `shape(i, rate)` is the unit-constant shape at cell `i`; rate-free shapes
/// ignore the rate. The pair minimizing `C_up / C_low` subject to
/// `c_low >= c_up` and `C_low <= C_up` is chosen.
pub fn fit_band<S: Fn(usize, f64) -> f64>(
    values: &[(f64, f64)],
    shape: S,
    has_rate: bool,
    opts: &FitOptions,
) -> Result<BandFit> {
    opts.validate()?;
    let n = values.len();
    if n == 0 {
        return Err(Error::InsufficientData("no cells to fit".into()));
    }
    if values.iter().any(|(v, s)| !(v.is_finite() && *v > 0.0 && s.is_finite() && *s >= 0.0)) {
        return Err(Error::InsufficientData("cell values must be positive and finite".into()));
    }
    let rates = if has_rate { opts.rates() } else { vec![1.0] };
    let mut lows = Vec::with_capacity(rates.len());
    let mut ups = Vec::with_capacity(rates.len());
    let mut ratios = vec![0.0; n];
    for &c in &rates {
        let mut ok = true;
        for (i, r) in ratios.iter_mut().enumerate() {
            let s = shape(i, c);
            if !(s.is_finite() && s > 0.0) {
                ok = false;
                break;
            }
            *r = values[i].0 / s;
        }
        if ok {
            let (lo, hi) = quantile_pair(&mut ratios, opts.coverage);
            lows.push(Some(lo));
            ups.push(Some(hi));
        } else {
            lows.push(None);
            ups.push(None);
        }
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for (iu, up) in ups.iter().enumerate() {
        let Some(cu) = *up else { continue };
        for (il, low) in lows.iter().enumerate().skip(iu) {
            let Some(cl) = *low else { continue };
            if cl > cu {
                continue;
            }
            let tight = cu / cl;
            if best.is_none_or(|(b, _, _)| tight < b) {
                best = Some((tight, iu, il));
            }
        }
    }
    let (tightness, iu, il) =
        best.ok_or_else(|| Error::InsufficientData("no admissible constants on the rate grid".into()))?;
    let constants = EnvelopeConstants {
        scale_low: lows[il].unwrap(),
        rate_low: rates[il],
        scale_up: ups[iu].unwrap(),
        rate_up: rates[iu],
    };
    let mut inside = 0usize;
    let mut worst = 0.0f64;
    let mut worst_cell = 0;
    for (i, &(v, se)) in values.iter().enumerate() {
        let lower = constants.scale_low * shape(i, constants.rate_low);
        let upper = constants.scale_up * shape(i, constants.rate_up);
        let hi = v + opts.z * se;
        let lo = v - opts.z * se;
        if lower <= hi && lo <= upper {
            inside += 1;
        }
        let viol = (lower / hi).max(lo / upper);
        if viol > worst {
            worst = viol;
            worst_cell = i;
        }
    }
    let fraction_inside = inside as f64 / n as f64;
    let feasible = fraction_inside >= opts.coverage && tightness <= opts.max_tightness;
    Ok(BandFit { constants, tightness, fraction_inside, worst_violation: worst, worst_cell, feasible })
}

/// Fits the free constants of `env` to the cells and reports feasibility.
pub fn verify_envelope(cells: &[EnvelopeCell], env: &BoundEnvelope, opts: &FitOptions) -> Result<EnvelopeReport> {
    let values: Vec<(f64, f64)> = cells.iter().map(|c| (c.value, c.stderr)).collect();
    let fit = fit_band(&values, |i, c| env.shape(cells[i].t, &cells[i].geometry, c), env.kind.has_rate(), opts)?;
    Ok(EnvelopeReport {
        regime: env.regime.label(),
        shape: env.kind,
        negative_control: env.swapped,
        constants: fit.constants,
        cells: cells.len(),
        fraction_inside: fit.fraction_inside,
        worst_violation: fit.worst_violation,
        worst_cell: fit.worst_cell,
        tightness: fit.tightness,
        rate_ratio: fit.constants.rate_low / fit.constants.rate_up,
        feasible: fit.feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::small_time_envelope;
    use crate::geometry::{ModelParams, RegimeLabel};

    fn synthetic(env: &BoundEnvelope, k: &EnvelopeConstants) -> Vec<EnvelopeCell> {
        let mut out = vec![];
        for i in 0..8 {
            let t = 2.0 * 10f64.powi(-i);
            for j in 0..6 {
                let d = 0.4 * j as f64 * t.sqrt();
                let g = PairGeometry { rho: d, euclid: d, x_norm: 1.0, y_norm: 1.0 };
                let mid = (env.lower(t, &g, k) * env.upper(t, &g, k)).sqrt();
                out.push(EnvelopeCell { t, geometry: g, value: mid, stderr: 0.0 });
            }
        }
        out
    }

    #[test]
    fn midpoint_data_is_feasible_and_tight() {
        let m = ModelParams::new(0.25, 1.0).unwrap();
        let env = small_time_envelope(RegimeLabel::SmallPoleAny, &m, 2.0).unwrap();
        let k = EnvelopeConstants { scale_low: 0.5, rate_low: 0.8, scale_up: 2.0, rate_up: 0.4 };
        let cells = synthetic(&env, &k);
        let r = verify_envelope(&cells, &env, &FitOptions::default()).unwrap();
        assert!(r.feasible);
        assert!(r.tightness <= 4.0, "{}", r.tightness);
        assert_eq!(r.regime, "small_pole_any");
    }

    #[test]
    fn swapped_powers_are_infeasible() {
        let m = ModelParams::new(0.25, 1.0).unwrap();
        let env = small_time_envelope(RegimeLabel::SmallPoleAny, &m, 2.0).unwrap();
        let k = EnvelopeConstants { scale_low: 1.0, rate_low: 0.5, scale_up: 1.0, rate_up: 0.5 };
        let cells = synthetic(&env, &k);
        let r = verify_envelope(&cells, &env.negative_control(), &FitOptions::default()).unwrap();
        assert!(!r.feasible);
        assert!(r.tightness > 1e3);
        assert!(r.negative_control);
    }

    #[test]
    fn band_fit_without_rate() {
        let values: Vec<(f64, f64)> = (1..=10).map(|i| (3.0 * i as f64, 0.0)).collect();
        let fit = fit_band(&values, |i, _| (i + 1) as f64, false, &FitOptions::default()).unwrap();
        assert!((fit.tightness - 1.0).abs() < 1e-12);
        assert!((fit.constants.scale_up - 3.0).abs() < 1e-12);
        assert!(fit.feasible);
        assert!(fit_band(&[], |_, _| 1.0, false, &FitOptions::default()).is_err());
    }
}
