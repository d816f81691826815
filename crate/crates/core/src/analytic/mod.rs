//! Closed-form densities and the two-sided bound shapes with explicit free constants.

pub mod bounds;
pub mod envelope;
pub mod flux;
pub mod green;

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::ModelParams;

pub use bounds::{evaluate_bounds, evaluate_variant_bounds, BoundsReport, Theorem};
pub use envelope::{
    classify_variant, large_time_envelope, on_diagonal_envelope, small_time_envelope, variant_envelope, BoundEnvelope,
    EnvelopeConstants, EnvelopeRegime, PairGeometry, ShapeKind, VariantRegime,
};
pub use flux::{flux, flux_with_nodes, AngularTerm, FluxValue, Monomial, TestFunction, FLUX_NODES};
pub use green::green_shape;

/// Euler's constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Distribution function at `y` of skew Brownian motion with parameter `beta`, started at `x`, at time `t`.
pub fn skew_bm_cdf(x: f64, y: f64, t: f64, beta: f64) -> f64 {
    let st = t.sqrt();
    let n = |z: f64| normal_cdf(z / st);
    if x >= 0.0 {
        if y <= 0.0 {
            (1.0 - beta) * n(y - x)
        } else {
            (1.0 - beta) * n(-x) + n(y - x) - n(-x) + beta * (n(y + x) - n(x))
        }
    } else {
        let at_zero = n(-x) - beta * n(x);
        if y <= 0.0 {
            n(y - x) - beta * n(y + x)
        } else {
            at_zero + (1.0 + beta) * (n(y - x) - n(-x))
        }
    }
}

/// Density of the first passage time to 0 of Brownian motion started at `x > 0`.
pub fn first_passage_density_pole(x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    x * (-x * x / (2.0 * t)).exp() / (2.0 * PI * t * t * t).sqrt()
}

/// Distribution function of the first passage time to 0 from `x > 0`.
pub fn first_passage_cdf_pole(x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    erfc(x / (2.0 * t).sqrt())
}

/// Bracket `(e^{-x^2/2} / (1 + x), e pi e^{-x^2/2} / (1 + x))` for the Gaussian tail integral.
pub fn gaussian_tail_bracket(x: f64) -> (f64, f64) {
    let lower = (-0.5 * x * x).exp() / (1.0 + x);
    (lower, E * PI * lower)
}

/// Regime of the disk-hitting estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HittingRegime {
    /// `t < 2 |x|^2`.
    ShortTime,
    /// `t >= 2 |x|^2`.
    LongTime,
}

/// Constants `C > c > 0` of the disk-hitting bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingConstants {
    pub small: f64,
    pub large: f64,
}

/// Two-sided bracket on `P_x(sigma_K <= t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingBracket {
    pub regime: HittingRegime,
    pub lower: f64,
    pub upper: f64,
}

pub fn hitting_regime(x_norm: f64, t: f64) -> HittingRegime {
    if t < 2.0 * x_norm * x_norm {
        HittingRegime::ShortTime
    } else {
        HittingRegime::LongTime
    }
}

fn check_hitting_args(x_norm: f64, t: f64, eps: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::OutOfRange(format!("time must be > 0, got {t}")));
    }
    if !(x_norm.is_finite() && x_norm >= 1.0 + eps) {
        return Err(Error::OutOfRange(format!("|x| must be at least 1 + epsilon = {}, got {x_norm}", 1.0 + eps)));
    }
    Ok(())
}

/// Long-time shape `(log sqrt(t) - log |x|) / log sqrt(t)`.
pub fn disk_hitting_shape(x_norm: f64, t: f64) -> f64 {
    let ls = 0.5 * t.ln();
    (ls - x_norm.ln()) / ls
}

/// Shape `log |x| / (t (log t)^2)` of the hitting-time density for `t >= 2 |x|^2`.
pub fn disk_hitting_rate_shape(x_norm: f64, t: f64) -> f64 {
    let lt = t.ln();
    x_norm.ln() / (t * lt * lt)
}

/// Bracket on the probability that planar Brownian motion from `|x|` hits the disk of radius `eps` by `t`.
pub fn disk_hitting_prob(x_norm: f64, t: f64, eps: f64, k: &HittingConstants) -> Result<HittingBracket> {
    check_hitting_args(x_norm, t, eps)?;
    if !(k.small > 0.0 && k.large > k.small) {
        return Err(Error::InvalidParams("hitting constants need C > c > 0".into()));
    }
    let regime = hitting_regime(x_norm, t);
    let (lower, upper) = match regime {
        HittingRegime::ShortTime => {
            let l = x_norm.ln();
            let q = x_norm * x_norm / t;
            (k.small / l * (-k.large * q).exp(), k.large / l * (-k.small * q).exp())
        }
        HittingRegime::LongTime => {
            let s = disk_hitting_shape(x_norm, t);
            (k.small * s, k.large * s)
        }
    };
    Ok(HittingBracket { regime, lower, upper: upper.min(1.0) })
}

/// Leading term and error magnitudes of the large-time hitting density of a disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UchiyamaTerms {
    pub leading: f64,
    /// Explicit correction `2 gamma log(t / |x|^2) / (t (log t)^3)`, present when `|x|^2 < t`.
    pub correction: f64,
    /// Order of the remaining error term.
    pub error_scale: f64,
}

impl UchiyamaTerms {
    pub fn value(&self) -> f64 {
        self.leading + self.correction
    }
}

/// Large-time expansion of the density of the hitting time of the disk of radius `r0`.
pub fn uchiyama_density(x_norm: f64, t: f64, r0: f64, c0: f64) -> Result<UchiyamaTerms> {
    if !(t.is_finite() && t >= 8.0) {
        return Err(Error::OutOfRange(format!("expansion needs t >= 8, got {t}")));
    }
    if !(r0 > 0.0 && x_norm.is_finite() && x_norm >= r0) {
        return Err(Error::OutOfRange(format!("need |x| >= r0 = {r0}, got {x_norm}")));
    }
    let x2 = x_norm * x_norm;
    let lt = t.ln();
    let denom = lt + c0;
    let leading = (0.5 * c0.exp() * x2).ln() / (t * denom * denom) * (-x2 / (2.0 * t)).exp();
    let (correction, error_scale) = if x2 >= t {
        let l = (x2 / t).ln();
        (0.0, (1.0 + l * l) / (x2 * lt.powi(3)))
    } else {
        (2.0 * EULER_GAMMA * (t / x2).ln() / (t * lt.powi(3)), 1.0 / (t * lt.powi(3)))
    };
    Ok(UchiyamaTerms { leading, correction, error_scale })
}

/// Converts a signed-radial density at `|y|_rho > 0` into the density on the plane.
pub fn radial_identity(p_radial: f64, y_rho: f64, params: &ModelParams) -> Result<f64> {
    if !(y_rho.is_finite() && y_rho > 0.0) {
        return Err(Error::OutOfRange(format!("|y|_rho must be > 0, got {y_rho}")));
    }
    Ok(p_radial / (2.0 * PI * (y_rho + params.epsilon())))
}

/// Same conversion for the density of the process killed on hitting `a*`.
pub fn killed_radial_identity(p_radial_killed: f64, y_rho: f64, params: &ModelParams) -> Result<f64> {
    radial_identity(p_radial_killed, y_rho, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skew_cdf_matches_quadrature_of_the_reflection_density() {
        let phi = |z: f64, t: f64| (-z * z / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
        let density = |x: f64, y: f64, t: f64, b: f64| match (x >= 0.0, y > 0.0) {
            (true, true) => phi(y - x, t) + b * phi(y + x, t),
            (true, false) => (1.0 - b) * phi(y - x, t),
            (false, false) => phi(y - x, t) - b * phi(x + y, t),
            (false, true) => (1.0 + b) * phi(y - x, t),
        };
        for (x, b) in [(0.4, 0.3), (-0.6, -0.5), (0.0, 0.7)] {
            for y in [-1.5f64, -0.2, 0.0, 0.3, 1.1] {
                let h = 1e-4;
                let lo = -12.0;
                let m = ((y - lo) / h).round() as usize;
                let want: f64 = (0..m).map(|i| density(x, lo + (i as f64 + 0.5) * h, 0.7, b) * h).sum();
                assert!((skew_bm_cdf(x, y, 0.7, b) - want).abs() < 1e-6, "x={x} y={y}");
            }
            assert!((skew_bm_cdf(x, 40.0, 0.7, b) - 1.0).abs() < 1e-12);
        }
    }

    /// Composite Simpson rule on `[a, b]` with `n` (even) panels.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn first_passage_values() {
        let want = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((first_passage_density_pole(1.0, 1.0) - want).abs() < 1e-15);
        assert!((want - 0.2420).abs() < 1e-4);
        // Substituting t = 1 / u^2 makes the integral over (0, inf) proper.
        let n = 200_000;
        let h = 20.0 / n as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                2.0 * first_passage_density_pole(0.7, 1.0 / (u * u)) / u.powi(3) * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-8);
        let cdf = simpson(|s| first_passage_density_pole(0.7, s), 0.0, 2.0, 20_000);
        assert!((cdf - first_passage_cdf_pole(0.7, 2.0)).abs() < 1e-9);
    }

    #[test]
    fn tail_bracket_contains_quadrature() {
        for (x, lo, hi) in [(1.0, 0.30327, 2.5894), (3.0, 0.002777, 0.023731)] {
            let truth = simpson(|y| (-0.5 * y * y).exp(), x, x + 40.0, 200_000);
            let (l, u) = gaussian_tail_bracket(x);
            assert!(l < truth && truth < u);
            assert!((l - lo).abs() < 1e-4 && (u - hi).abs() < 2e-3 * hi);
        }
        assert!((simpson(|y| (-0.5 * y * y).exp(), 1.0, 41.0, 200_000) - 0.39769).abs() < 1e-5);
        assert!((simpson(|y| (-0.5 * y * y).exp(), 3.0, 43.0, 200_000) - 0.0033837).abs() < 1e-6);
        for x in [0.1, 0.5, 2.0, 5.0, 8.0] {
            let truth = simpson(|y| (-0.5 * y * y).exp(), x, x + 40.0, 200_000);
            let (l, u) = gaussian_tail_bracket(x);
            assert!(l < truth && truth < u, "x = {x}");
            assert!((u / l - E * PI).abs() < 1e-12);
        }
    }

    #[test]
    fn hitting_shapes() {
        let x = E;
        let t = 2.0 * E.powi(4);
        let ls = 0.5 * t.ln();
        assert!((disk_hitting_shape(x, t) - (ls - 1.0) / ls).abs() < 1e-15);
        assert!(disk_hitting_shape(10.0, 100.0).abs() < 1e-15);
        let k = HittingConstants { small: 0.5, large: 2.0 };
        assert_eq!(disk_hitting_prob(3.0, 100.0, 0.25, &k).unwrap().regime, HittingRegime::LongTime);
        assert_eq!(disk_hitting_prob(3.0, 10.0, 0.25, &k).unwrap().regime, HittingRegime::ShortTime);
        assert!(disk_hitting_prob(1.1, 10.0, 0.25, &k).is_err());
        let b = disk_hitting_prob(3.0, 10.0, 0.25, &k).unwrap();
        assert!(b.lower < b.upper);
    }

    #[test]
    fn uchiyama_branches_agree_at_boundary() {
        let t: f64 = 50.0;
        let x = t.sqrt();
        let below = uchiyama_density(x * (1.0 - 1e-9), t, 0.25, 1.0).unwrap();
        let above = uchiyama_density(x, t, 0.25, 1.0).unwrap();
        let lt = t.ln();
        // Both error orders reduce to 1 / (t (log t)^3) at |x|^2 = t.
        assert!((above.error_scale * t * lt.powi(3) - 1.0).abs() < 1e-9);
        assert!((below.error_scale * t * lt.powi(3) - 1.0).abs() < 1e-9);
        assert!(below.correction.abs() < 1e-12);
        assert!(uchiyama_density(2.0, 7.0, 0.25, 1.0).is_err());
        assert!(uchiyama_density(0.1, 70.0, 0.25, 1.0).is_err());
    }

    #[test]
    fn uchiyama_matches_rate_shape_for_large_t() {
        // For fixed |x| the leading term behaves like 2 log|x| / (t (log t)^2) up to constants.
        let x = 2.0;
        let ratio = |t: f64| uchiyama_density(x, t, 0.25, 1.0).unwrap().leading / disk_hitting_rate_shape(x, t);
        let r1 = ratio(1e6);
        let r2 = ratio(1e12);
        assert!(r1 > 0.0 && r2 > 0.0);
        assert!((r2 / r1 - 1.0).abs() < 0.3);
    }

    #[test]
    fn radial_identity_values() {
        let m = ModelParams::new(0.5, 1.0).unwrap();
        assert!((radial_identity(1.0, 1.0, &m).unwrap() - 1.0 / (3.0 * PI)).abs() < 1e-15);
        assert!(radial_identity(1.0, 0.0, &m).is_err());
        // Mass consistency: integrate a radial density against 2 pi (r + eps).
        let py = |y: f64| (-(y - 1.0) * (y - 1.0) / 0.5).exp() / (0.5 * PI).sqrt();
        let radial_mass = simpson(py, 1e-12, 12.0, 100_000);
        let plane_mass =
            simpson(|y| radial_identity(py(y), y, &m).unwrap() * 2.0 * PI * (y + 0.5), 1e-12, 12.0, 100_000);
        assert!((radial_mass - plane_mass).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((2.0 * normal_cdf(-3.0) - 0.0026997960632601866).abs() < 1e-12);
    }
}
