use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_regime, EPoint, ModelParams};
use crate::process::domain::DomainSpec;
use crate::process::variant::{VPoint, VariantSpace};

use super::envelope::{
    classify_variant, large_time_envelope, on_diagonal_envelope, small_time_envelope, variant_envelope, BoundEnvelope,
    EnvelopeConstants, PairGeometry, ShapeKind,
};
use super::green::green_shape;

/// Which family of bounds to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "theorem", rename_all = "snake_case", deny_unknown_fields)]
pub enum Theorem {
    /// Picked from the points and `t`.
    #[default]
    Auto,
    SmallTime,
    LargeTime,
    OnDiagonal,
    /// Green function of the geodesic ball `B(a*, radius)`.
    Green {
        radius: f64,
    },
}

impl ShapeKind {
    /// Human-readable form with unit prefactor and rate `c`.
    pub fn formula(&self) -> &'static str {
        match self {
            ShapeKind::OneDim => "t^(-1/2) exp(-c rho^2/t)",
            ShapeKind::TwoDim => "t^(-1) exp(-c rho^2/t)",
            ShapeKind::Mixed => "t^(-1/2) exp(-c rho^2/t) + t^(-1) (1 ^ |x|/sqrt t)(1 ^ |y|/sqrt t) exp(-c |x-y|^2/t)",
            ShapeKind::PolePlaneNear => "t^(-1) (1 + |x| log t / sqrt t) exp(-c rho^2/t)",
            ShapeKind::PolePlaneFar => "t^(-1) (1 + |x|/sqrt t log(1 + sqrt t/|y|)) exp(-c rho^2/t)",
            ShapeKind::PolePole => {
                "t^(-1/2) (1 ^ |x|/sqrt t)(1 ^ |y|/sqrt t) exp(-c |x-y|^2/t) + t^(-1) (1 + (|x|+|y|) log t / sqrt t) exp(-c (|x|^2+|y|^2)/t)"
            }
            ShapeKind::OnDiagonal => "t^(-1/2) ^ t^(-1)",
        }
    }
}

/// Bound shapes at one `(t, x, y)` with unit constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub regime: String,
    pub formula: String,
    pub t: f64,
    pub geometry: PairGeometry,
    pub lower: f64,
    pub upper: f64,
}

fn report(env: &BoundEnvelope, t: f64, geometry: PairGeometry) -> BoundsReport {
    let k = EnvelopeConstants::UNIT;
    BoundsReport {
        regime: env.regime.label(),
        formula: env.kind.formula().to_string(),
        t,
        geometry,
        lower: env.lower(t, &geometry, &k),
        upper: env.upper(t, &geometry, &k),
    }
}

/// Evaluates the bounds of `theorem` for a single-pole pair.
pub fn evaluate_bounds(
    t: f64,
    x: &EPoint,
    y: &EPoint,
    params: &ModelParams,
    theorem: Theorem,
    time_threshold: f64,
) -> Result<BoundsReport> {
    let geometry = PairGeometry::new(x, y, params);
    let both_star = *x == EPoint::Star && *y == EPoint::Star;
    match theorem {
        Theorem::Green { radius } => {
            let domain = DomainSpec::Ball { radius };
            let g = green_shape(&domain, x, y, params)?;
            Ok(BoundsReport {
                regime: "green_ball".into(),
                formula: "d(x) ^ d(y) on the pole, d(x) d(y) + ln(1 + d2(x) d2(y)/|x-y|^2) on the plane".into(),
                t,
                geometry,
                lower: g,
                upper: g,
            })
        }
        Theorem::OnDiagonal if !both_star => Err(Error::InvalidParams("on-diagonal bounds need x = y = star".into())),
        Theorem::OnDiagonal => {
            check_time(t)?;
            Ok(report(&on_diagonal_envelope(), t, geometry))
        }
        Theorem::Auto if both_star => {
            check_time(t)?;
            Ok(report(&on_diagonal_envelope(), t, geometry))
        }
        _ => {
            let label = classify_regime(x, y, t, time_threshold, params)?;
            match theorem {
                Theorem::SmallTime if !label.is_small_time() => {
                    return Err(Error::OutOfRange(format!("small-time bounds need t <= {time_threshold}, got {t}")));
                }
                Theorem::LargeTime if label.is_small_time() => {
                    return Err(Error::OutOfRange(format!("large-time bounds need t > {time_threshold}, got {t}")));
                }
                _ => {}
            }
            let env = if label.is_small_time() {
                small_time_envelope(label, params, time_threshold)?
            } else {
                large_time_envelope(label, params, time_threshold)?
            };
            Ok(report(&env, t, geometry))
        }
    }
}

/// Evaluates the small-time bounds of a variant pair.
pub fn evaluate_variant_bounds(
    t: f64,
    x: &VPoint,
    y: &VPoint,
    space: &VariantSpace,
    time_threshold: f64,
) -> Result<BoundsReport> {
    let regime = classify_variant(x, y, t, time_threshold, space)?;
    let env = variant_envelope(space, regime)?;
    Ok(report(&env, t, PairGeometry::variant(x, y, space, &regime)))
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("time must be > 0, got {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(0.25, 1.0).unwrap()
    }

    #[test]
    fn pole_to_star_at_small_time() {
        let r = evaluate_bounds(0.5, &EPoint::Pole(1.0), &EPoint::Star, &params(), Theorem::Auto, 2.0).unwrap();
        assert_eq!(r.regime, "small_pole_any");
        assert!((r.geometry.rho - 1.0).abs() < 1e-15);
        let want = 0.5f64.powf(-0.5) * (-1.0f64 / 0.5).exp();
        assert!((r.upper - want).abs() < 1e-12 && (r.lower - want).abs() < 1e-12);
    }

    #[test]
    fn star_star_at_large_time_is_on_diagonal() {
        let r = evaluate_bounds(100.0, &EPoint::Star, &EPoint::Star, &params(), Theorem::Auto, 2.0).unwrap();
        assert_eq!(r.regime, "on_diagonal");
        assert!((r.upper - 0.01).abs() < 1e-15);
    }

    #[test]
    fn theorem_and_time_must_agree() {
        let m = params();
        let x = EPoint::Pole(1.0);
        assert!(evaluate_bounds(0.5, &x, &EPoint::Star, &m, Theorem::LargeTime, 2.0).is_err());
        assert!(evaluate_bounds(5.0, &x, &EPoint::Star, &m, Theorem::SmallTime, 2.0).is_err());
        assert!(evaluate_bounds(5.0, &x, &EPoint::Star, &m, Theorem::OnDiagonal, 2.0).is_err());
        let g = evaluate_bounds(0.0, &x, &EPoint::Pole(0.5), &m, Theorem::Green { radius: 2.0 }, 2.0).unwrap();
        assert!((g.upper - 1.0).abs() < 1e-15);
    }
}
