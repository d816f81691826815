use serde::{Deserialize, Serialize};

use crate::analytic::{disk_hitting_prob, first_passage_cdf_pole, uchiyama_density, HittingConstants, HittingRegime};
use crate::error::{Error, Result};
use crate::geometry::EPoint;
use crate::montecarlo::{run_paths, Samples};
use crate::process::variant::{VPoint, VariantSimulator};
use crate::radial::RadialSimulator;

/// Minimum number of paths for a hitting-time histogram.
pub const MIN_HITTING_PATHS: u64 = 10_000;

/// Sorted hitting times observed before `t_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingSample {
    pub n_paths: u64,
    pub t_max: f64,
    pub times: Vec<f64>,
}

impl HittingSample {
    fn from_raw(n_paths: u64, t_max: f64, raw: Vec<f64>) -> Self {
        let mut times: Vec<f64> = raw.into_iter().filter(|&t| t <= t_max).collect();
        times.sort_by(f64::total_cmp);
        HittingSample { n_paths, t_max, times }
    }

    /// Paths that had not hit by `t_max`.
    pub fn censored(&self) -> u64 {
        self.n_paths - self.times.len() as u64
    }

    /// Empirical `P(sigma <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.times.partition_point(|&s| s <= t) as f64 / self.n_paths as f64
    }

    /// Sup distance to `cdf` over `[0, t_max]`, counting censored paths as `> t_max`.
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.n_paths as f64;
        let mut d = 0.0f64;
        for (i, &t) in self.times.iter().enumerate() {
            let f = cdf(t);
            d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
        }
        let k = self.times.len() as f64 / n;
        d.max((cdf(self.t_max) - k).abs())
    }

    /// Histogram density on `[a, b)`.
    pub fn density(&self, a: f64, b: f64) -> (f64, f64) {
        let n = self.n_paths as f64;
        let c = (self.cdf_open(b) - self.cdf_open(a)) * n;
        let f = c / n;
        (f / (b - a), (f * (1.0 - f) / n).sqrt() / (b - a))
    }

    fn cdf_open(&self, t: f64) -> f64 {
        self.times.partition_point(|&s| s < t) as f64 / self.n_paths as f64
    }

    /// `bins` equal-width histogram rows `(left, right, density, stderr)` on `[0, t_max]`.
    pub fn histogram(&self, bins: usize) -> Vec<(f64, f64, f64, f64)> {
        let w = self.t_max / bins as f64;
        (0..bins)
            .map(|k| {
                let (a, b) = (k as f64 * w, (k + 1) as f64 * w);
                let (d, se) = self.density(a, b);
                (a, b, d, se)
            })
            .collect()
    }
}

/// First visits to `a*` of the signed radial process from `x0`.
pub fn hitting_times_star(
    sim: &RadialSimulator,
    x0: &EPoint,
    t_max: f64,
    n_paths: u64,
    seed: u64,
) -> Result<HittingSample> {
    if n_paths < MIN_HITTING_PATHS {
        return Err(Error::InsufficientData(format!("need at least {MIN_HITTING_PATHS} paths, got {n_paths}")));
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::OutOfRange(format!("t_max must be > 0, got {t_max}")));
    }
    x0.validate(sim.params())?;
    let y0 = x0.signed_radial(sim.params());
    let raw: Samples = run_paths(n_paths, seed, Samples::default, |acc, rng, _| {
        if let Some(h) = sim.run(y0, t_max, true, rng).first_hit {
            acc.0.push(h);
        }
    });
    Ok(HittingSample::from_raw(n_paths, t_max, raw.0))
}

/// First visits to junction `target` in a variant space.
pub fn hitting_times_junction(
    sim: &VariantSimulator,
    x0: &VPoint,
    target: usize,
    t_max: f64,
    n_paths: u64,
    seed: u64,
) -> Result<HittingSample> {
    if n_paths < MIN_HITTING_PATHS {
        return Err(Error::InsufficientData(format!("need at least {MIN_HITTING_PATHS} paths, got {n_paths}")));
    }
    if target >= sim.space().junctions().len() {
        return Err(Error::InvalidParams(format!("no junction {target}")));
    }
    sim.space().validate(x0)?;
    let raw: Samples = run_paths(n_paths, seed, Samples::default, |acc, rng, _| {
        if *x0 == VPoint::Junction(target) {
            acc.0.push(0.0);
            return;
        }
        let mut first = None;
        let mut prev = 0.0;
        sim.walk(x0, t_max, rng, |t, _, hit| {
            if first.is_none() && hit == Some(target) {
                first = Some(0.5 * (prev + t));
            }
            prev = t;
        });
        if let Some(h) = first {
            acc.0.push(h);
        }
    });
    Ok(HittingSample::from_raw(n_paths, t_max, raw.0))
}

/// KS distance of a pole-start sample to the closed-form first-passage law.
pub fn pole_first_passage_ks(sample: &HittingSample, x: f64) -> f64 {
    sample.ks_distance(|t| first_passage_cdf_pole(x, t))
}

/// Smallest bracket constants `c < C` containing every `(|x|, t, P)` observation.
///
/// `small` is scanned on a geometric grid and `large` is the least value
/// making the bracket valid; the pair with the smallest ratio is returned.
pub fn fit_hitting_constants(obs: &[(f64, f64, f64)], eps: f64) -> Result<HittingConstants> {
    if obs.is_empty() {
        return Err(Error::InsufficientData("no hitting observations".into()));
    }
    let mut best: Option<HittingConstants> = None;
    for i in 0..400 {
        let small = 10f64.powf(-4.0 + 4.0 * i as f64 / 399.0);
        let mut large = small * (1.0 + 1e-9);
        let mut ok = true;
        for &(x, t, p) in obs {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InsufficientData(format!("hit fraction {p} must lie in (0, 1]")));
            }
            let probe = HittingConstants { small, large: small * 2.0 };
            match disk_hitting_prob(x, t, eps, &probe)?.regime {
                HittingRegime::ShortTime => {
                    let l = x.ln();
                    let q = x * x / t;
                    large = large.max((small / (l * p)).ln() / q).max(p * l * (small * q).exp());
                }
                HittingRegime::LongTime => {
                    let s = crate::analytic::disk_hitting_shape(x, t);
                    if small * s > p {
                        ok = false;
                        break;
                    }
                    large = large.max(p / s);
                }
            }
        }
        if ok && best.is_none_or(|b| large / small < b.large / b.small) {
            best = Some(HittingConstants { small, large });
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no bracket constants found".into()))
}

/// Fits the free constant of the large-time expansion to an observed density.
pub fn fit_uchiyama_c0(x_norm: f64, t: f64, r0: f64, density: f64) -> Result<f64> {
    if !(density > 0.0) {
        return Err(Error::InsufficientData("density must be > 0".into()));
    }
    let lt = t.ln();
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..4000 {
        let c0 = -lt + 0.01 + 30.0 * i as f64 / 3999.0;
        let lead = uchiyama_density(x_norm, t, r0, c0)?.leading;
        if lead > 0.0 {
            let err = (lead / density).ln().abs();
            if err < best.0 {
                best = (err, c0);
            }
        }
    }
    if best.0.is_finite() {
        Ok(best.1)
    } else {
        Err(Error::InsufficientData("no admissible c0".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ModelParams;
    use crate::radial::StepConfig;

    #[test]
    fn pole_start_matches_first_passage_law() {
        let sim = RadialSimulator::new(ModelParams::new(0.25, 1.0).unwrap(), StepConfig::adaptive(1e-4, 0.5)).unwrap();
        let s = hitting_times_star(&sim, &EPoint::Pole(1.0), 20.0, 40_000, 7).unwrap();
        let ks = pole_first_passage_ks(&s, 1.0);
        assert!(ks < 1.63 / 200.0 + 0.003, "ks = {ks}");
        assert!(s.censored() > 0);
    }

    #[test]
    fn star_start_hits_immediately() {
        let sim = RadialSimulator::new(ModelParams::new(0.25, 1.0).unwrap(), StepConfig::default()).unwrap();
        let s = hitting_times_star(&sim, &EPoint::Star, 1.0, 10_000, 1).unwrap();
        assert_eq!(s.times.len(), 10_000);
        assert!(s.times.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let times: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let s = HittingSample { n_paths: n, t_max: 1.0, times };
        assert!(s.ks_distance(|t| t.clamp(0.0, 1.0)) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn bracket_fit_contains_observations() {
        let obs = [(3.0, 100.0, 0.4), (3.0, 10.0, 0.05), (2.0, 50.0, 0.5)];
        let k = fit_hitting_constants(&obs, 0.25).unwrap();
        for (x, t, p) in obs {
            let b = disk_hitting_prob(x, t, 0.25, &k).unwrap();
            assert!(b.lower <= p * (1.0 + 1e-9) && p <= b.upper * (1.0 + 1e-9), "{b:?} {p}");
        }
    }

    #[test]
    fn c0_fit_recovers_value() {
        let lead = uchiyama_density(2.0, 50.0, 0.25, 2.0).unwrap().leading;
        let c0 = fit_uchiyama_c0(2.0, 50.0, 0.25, lead).unwrap();
        let back = uchiyama_density(2.0, 50.0, 0.25, c0).unwrap().leading;
        assert!((back / lead - 1.0).abs() < 0.01);
    }
}
