use serde::{Deserialize, Serialize};

use crate::analytic::{classify_variant, variant_envelope, PairGeometry, VariantRegime};
use crate::error::{Error, Result};
use crate::montecarlo::{run_paths, RunningStat};
use crate::process::variant::{VPoint, VariantSimulator};
use crate::radial::SkewParams;

use super::envelope::{verify_envelope, EnvelopeCell, EnvelopeReport, FitOptions};

/// Fraction of paths from a junction that sit on its line at a short time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryProbability {
    pub junction: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// `p_j / (2 pi eps_j + p_j)`.
    pub expected: f64,
}

impl EntryProbability {
    /// Distance to the expected value in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.expected).abs() / self.stderr.max(f64::MIN_POSITIVE)
    }
}

/// Entry probability onto the line at each junction, from paths of length `delta`.
pub fn entry_probabilities(
    sim: &VariantSimulator,
    delta: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<EntryProbability>> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::OutOfRange(format!("delta must be > 0, got {delta}")));
    }
    if n_paths < 2 {
        return Err(Error::InsufficientData("need at least two paths".into()));
    }
    let space = sim.space();
    (0..space.junctions().len())
        .map(|j| {
            let x0 = VPoint::Junction(j);
            let stat: RunningStat = run_paths(n_paths, seed.wrapping_add(j as u64), RunningStat::new, |acc, rng, _| {
                let st = sim.walk(&x0, delta, rng, |_, _, _| {});
                acc.push(f64::from(u8::from(st.chart == j && st.radial.y < 0.0)));
            });
            let skew = SkewParams::from_params(&space.junctions()[j].params);
            Ok(EntryProbability {
                junction: j,
                estimate: stat.mean(),
                stderr: stat.stderr(),
                expected: skew.pole_entry_probability(),
            })
        })
        .collect()
}

/// Ball-average density `p(t, x, y)` with respect to the line measure, for `y` on a pole or the arch.
pub fn line_density(
    sim: &VariantSimulator,
    x: &VPoint,
    y: &VPoint,
    t: f64,
    bandwidth: f64,
    n_paths: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let space = sim.space();
    space.validate(x)?;
    space.validate(y)?;
    let weight = space.line_weight(y).ok_or_else(|| Error::InvalidPoint(format!("target {y} is not on a line")))?;
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParams(format!("bandwidth must be > 0, got {bandwidth}")));
    }
    let stat: RunningStat = run_paths(n_paths, seed, RunningStat::new, |acc, rng, _| {
        let end = sim.endpoint(x, t, rng);
        let inside = match (end, *y) {
            (VPoint::Pole { index: i, s }, VPoint::Pole { index: j, s: h }) => i == j && (s - h).abs() < bandwidth,
            (VPoint::Arch { u }, VPoint::Arch { u: v }) => (u - v).abs() < bandwidth,
            _ => false,
        };
        acc.push(f64::from(u8::from(inside)));
    });
    let m = weight * 2.0 * bandwidth;
    Ok((stat.mean() / m, stat.stderr() / m))
}

/// Estimates `p(t, x, y)` on every pair and time and fits the envelope of `regime`.
#[allow(clippy::too_many_arguments)]
pub fn verify_variant_envelope(
    sim: &VariantSimulator,
    pairs: &[(VPoint, VPoint)],
    times: &[f64],
    time_threshold: f64,
    bandwidth: f64,
    n_paths: u64,
    opts: &FitOptions,
    seed: u64,
) -> Result<(EnvelopeReport, Vec<EnvelopeCell>)> {
    let space = sim.space();
    let mut regime: Option<VariantRegime> = None;
    let mut cells = Vec::new();
    for (i, (x, y)) in pairs.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            let r = classify_variant(x, y, t, time_threshold, space)?;
            match regime {
                None => regime = Some(r),
                Some(prev) if prev != r => {
                    return Err(Error::InvalidParams(format!("pairs span regimes {prev:?} and {r:?}")));
                }
                _ => {}
            }
            let (value, stderr) =
                line_density(sim, x, y, t, bandwidth, n_paths, seed.wrapping_add((i * 1000 + k) as u64))?;
            if value > 0.0 {
                cells.push(EnvelopeCell { t, geometry: PairGeometry::variant(x, y, space, &r), value, stderr });
            }
        }
    }
    let regime = regime.ok_or_else(|| Error::InsufficientData("no pairs".into()))?;
    let env = variant_envelope(space, regime)?;
    Ok((verify_envelope(&cells, &env, opts)?, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::variant::{PoleSpec, VariantSpace, VariantSpec};
    use crate::radial::StepConfig;

    fn two_poles(dt: f64) -> VariantSimulator {
        let spec = VariantSpec::MultiPole {
            poles: vec![
                PoleSpec { center: [0.0, 0.0], epsilon: 0.25, p: 1.0 },
                PoleSpec { center: [4.0, 0.0], epsilon: 0.1, p: 2.0 },
            ],
        };
        VariantSimulator::new(VariantSpace::new(&spec).unwrap(), StepConfig::with_dt(dt)).unwrap()
    }

    #[test]
    fn entry_probabilities_match_skewness() {
        // The plane-side drift shifts the split by O(sqrt(delta)); keep delta tiny.
        let sim = two_poles(1e-7);
        for e in entry_probabilities(&sim, 1e-6, 40_000, 3).unwrap() {
            assert!(e.z_score() < 3.5, "{e:?}");
        }
    }

    #[test]
    fn line_density_rejects_planar_targets() {
        let sim = two_poles(1e-4);
        let x = VPoint::Pole { index: 0, s: 0.2 };
        assert!(line_density(&sim, &x, &VPoint::Plane { x: 3.0, y: 0.0 }, 0.5, 0.05, 100, 1).is_err());
        let (v, _) = line_density(&sim, &x, &VPoint::Pole { index: 0, s: 0.2 }, 0.01, 0.02, 4000, 1).unwrap();
        let want = 1.0 / (2.0 * std::f64::consts::PI * 0.01f64).sqrt();
        assert!((v - want).abs() < 0.15 * want, "{v} vs {want}");
    }
}
