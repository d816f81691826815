use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{planar_distance, rho, EPoint, ModelParams, RegimeLabel};
use crate::process::variant::{VPoint, VariantSpace};

/// Functional forms of the two-sided heat kernel bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    /// `t^{-1/2} e^{-c rho^2 / t}`.
    OneDim,
    /// `t^{-1} e^{-c rho^2 / t}`.
    TwoDim,
    /// `t^{-1/2} e^{-c rho^2/t} + t^{-1} (1 ^ |x|/sqrt t)(1 ^ |y|/sqrt t) e^{-c |x-y|^2/t}`.
    Mixed,
    /// `t^{-1} (1 + |x| log t / sqrt t) e^{-c rho^2 / t}`, `x` on the pole.
    PolePlaneNear,
    /// `t^{-1} (1 + |x|/sqrt t log(1 + sqrt t / |y|)) e^{-c rho^2 / t}`, `x` on the pole.
    PolePlaneFar,
    /// `t^{-1/2} (1 ^ x/sqrt t)(1 ^ y/sqrt t) e^{-c |x-y|^2/t} + t^{-1} (1 + (x+y) log t / sqrt t) e^{-c (x^2+y^2)/t}`.
    PolePole,
    /// `t^{-1/2} ^ t^{-1}`, no rate constant.
    OnDiagonal,
}

/// Distances entering a bound shape.
///
/// `x_norm` and `y_norm` are distances to the relevant junction; for
/// pole-plane pairs `x` is the pole point. `euclid` is the planar distance
/// where the shape needs it, otherwise equal to `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub rho: f64,
    pub euclid: f64,
    pub x_norm: f64,
    pub y_norm: f64,
}

impl PairGeometry {
    /// Geometry of a single-pole pair, with the pole point first.
    pub fn new(x: &EPoint, y: &EPoint, params: &ModelParams) -> Self {
        let (a, b) = if !x.is_pole() && y.is_pole() { (y, x) } else { (x, y) };
        let d = rho(a, b, params);
        let euclid = match (*a, *b) {
            (EPoint::Plane { r: r1, theta: t1 }, EPoint::Plane { r: r2, theta: t2 }) => planar_distance(r1, t1, r2, t2),
            _ => d,
        };
        PairGeometry { rho: d, euclid, x_norm: a.rho_norm(params), y_norm: b.rho_norm(params) }
    }

    /// Geometry of a variant pair relative to the junction named by `regime`.
    pub fn variant(x: &VPoint, y: &VPoint, space: &VariantSpace, regime: &VariantRegime) -> Self {
        let d = space.rho(x, y);
        let euclid = match (*x, *y) {
            (VPoint::Plane { x: a, y: b }, VPoint::Plane { x: c, y: e }) => (a - c).hypot(b - e),
            _ => d,
        };
        let (xn, yn) = match regime.junction() {
            Some(i) => (space.distance_to_junction(x, i), space.distance_to_junction(y, i)),
            None => (0.0, 0.0),
        };
        PairGeometry { rho: d, euclid, x_norm: xn, y_norm: yn }
    }

    /// Geometry with every length multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        PairGeometry { rho: self.rho * s, euclid: self.euclid * s, x_norm: self.x_norm * s, y_norm: self.y_norm * s }
    }
}

fn dirichlet(d: f64, st: f64) -> f64 {
    (d / st).min(1.0)
}

impl ShapeKind {
    pub fn has_rate(&self) -> bool {
        !matches!(self, ShapeKind::OnDiagonal)
    }

    /// Shape value with unit prefactor and rate `c`.
    ///
    /// With `swapped` the one- and two-dimensional time powers are exchanged;
    /// this is the negative control of the envelope verifier.
    pub fn value(&self, t: f64, g: &PairGeometry, c: f64, swapped: bool) -> f64 {
        let st = t.sqrt();
        let (one, two) = if swapped { (1.0 / t, 1.0 / st) } else { (1.0 / st, 1.0 / t) };
        let gauss = |d2: f64| (-c * d2 / t).exp();
        match self {
            ShapeKind::OneDim => one * gauss(g.rho * g.rho),
            ShapeKind::TwoDim => two * gauss(g.rho * g.rho),
            ShapeKind::Mixed => {
                one * gauss(g.rho * g.rho)
                    + two * dirichlet(g.x_norm, st) * dirichlet(g.y_norm, st) * gauss(g.euclid * g.euclid)
            }
            ShapeKind::PolePlaneNear => two * (1.0 + g.x_norm * t.ln() / st) * gauss(g.rho * g.rho),
            ShapeKind::PolePlaneFar => {
                let log = if g.y_norm > 0.0 { (1.0 + st / g.y_norm).ln() } else { f64::INFINITY };
                two * (1.0 + g.x_norm / st * log) * gauss(g.rho * g.rho)
            }
            ShapeKind::PolePole => {
                one * dirichlet(g.x_norm, st) * dirichlet(g.y_norm, st) * gauss(g.rho * g.rho)
                    + two
                        * (1.0 + (g.x_norm + g.y_norm) * t.ln() / st)
                        * gauss(g.x_norm * g.x_norm + g.y_norm * g.y_norm)
            }
            ShapeKind::OnDiagonal => one.min(two),
        }
    }
}

/// Regimes of the several-pole and arch spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "case", content = "junction", rename_all = "snake_case")]
pub enum VariantRegime {
    /// Both points planar (or the junction) within distance 1 of junction `i`.
    NearJunction(usize),
    /// One point on pole `i`, the other on the same pole or within distance 1 of its base.
    PoleLocal(usize),
    /// One point in the arch interior.
    ArchLine,
    /// Everything else.
    Planar,
}

impl VariantRegime {
    pub fn junction(&self) -> Option<usize> {
        match *self {
            VariantRegime::NearJunction(i) | VariantRegime::PoleLocal(i) => Some(i),
            _ => None,
        }
    }

    pub fn shape(&self) -> ShapeKind {
        match self {
            VariantRegime::NearJunction(_) => ShapeKind::Mixed,
            VariantRegime::PoleLocal(_) | VariantRegime::ArchLine => ShapeKind::OneDim,
            VariantRegime::Planar => ShapeKind::TwoDim,
        }
    }
}

/// Classifies a variant pair for times `t <= time_threshold`.
pub fn classify_variant(
    x: &VPoint,
    y: &VPoint,
    t: f64,
    time_threshold: f64,
    space: &VariantSpace,
) -> Result<VariantRegime> {
    if !(t > 0.0 && t <= time_threshold) {
        return Err(Error::OutOfRange(format!(
            "variant bounds are small-time only: need 0 < t <= {time_threshold}, got {t}"
        )));
    }
    space.validate(x)?;
    space.validate(y)?;
    let planar_or_junction = |p: &VPoint| matches!(p, VPoint::Plane { .. } | VPoint::Junction(_));
    if space.is_arch() {
        if matches!(x, VPoint::Arch { .. }) || matches!(y, VPoint::Arch { .. }) {
            return Ok(VariantRegime::ArchLine);
        }
        for i in 0..2 {
            if space.distance_to_junction(x, i) + space.distance_to_junction(y, i) < 1.0 {
                return Ok(VariantRegime::NearJunction(i));
            }
        }
        return Ok(VariantRegime::Planar);
    }
    for (a, b) in [(x, y), (y, x)] {
        if let VPoint::Pole { index, .. } = *a {
            let same_pole = matches!(*b, VPoint::Pole { index: j, .. } if j == index);
            if same_pole || (planar_or_junction(b) && space.distance_to_junction(b, index) < 1.0) {
                return Ok(VariantRegime::PoleLocal(index));
            }
        }
    }
    if planar_or_junction(x) && planar_or_junction(y) {
        for i in 0..space.junctions().len() {
            if space.distance_to_junction(x, i) < 1.0 && space.distance_to_junction(y, i) < 1.0 {
                return Ok(VariantRegime::NearJunction(i));
            }
        }
    }
    Ok(VariantRegime::Planar)
}

/// Which statement an envelope comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", content = "regime", rename_all = "snake_case")]
pub enum EnvelopeRegime {
    Single(RegimeLabel),
    OnDiagonal,
    Variant(VariantRegime),
}

impl EnvelopeRegime {
    pub fn label(&self) -> String {
        match *self {
            EnvelopeRegime::Single(l) => l.as_str().to_string(),
            EnvelopeRegime::OnDiagonal => "on_diagonal".into(),
            EnvelopeRegime::Variant(VariantRegime::NearJunction(i)) => format!("near_junction_{i}"),
            EnvelopeRegime::Variant(VariantRegime::PoleLocal(i)) => format!("pole_local_{i}"),
            EnvelopeRegime::Variant(VariantRegime::ArchLine) => "arch_line".into(),
            EnvelopeRegime::Variant(VariantRegime::Planar) => "planar".into(),
        }
    }
}

/// Free constants `(C_low, c_low, C_up, c_up)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    pub scale_low: f64,
    pub rate_low: f64,
    pub scale_up: f64,
    pub rate_up: f64,
}

impl EnvelopeConstants {
    pub const UNIT: EnvelopeConstants =
        EnvelopeConstants { scale_low: 1.0, rate_low: 1.0, scale_up: 1.0, rate_up: 1.0 };

    pub fn validate(&self) -> Result<()> {
        let all = [self.scale_low, self.rate_low, self.scale_up, self.rate_up];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParams("envelope constants must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Two-sided bound family with free constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEnvelope {
    pub kind: ShapeKind,
    pub regime: EnvelopeRegime,
    /// Negative control: time powers exchanged.
    #[serde(default)]
    pub swapped: bool,
}

impl BoundEnvelope {
    pub fn new(kind: ShapeKind, regime: EnvelopeRegime) -> Self {
        BoundEnvelope { kind, regime, swapped: false }
    }

    /// The same envelope with `t^{-1/2}` and `t^{-1}` exchanged.
    pub fn negative_control(&self) -> Self {
        BoundEnvelope { swapped: !self.swapped, ..*self }
    }

    pub fn shape(&self, t: f64, g: &PairGeometry, rate: f64) -> f64 {
        self.kind.value(t, g, rate, self.swapped)
    }

    pub fn lower(&self, t: f64, g: &PairGeometry, k: &EnvelopeConstants) -> f64 {
        k.scale_low * self.shape(t, g, k.rate_low)
    }

    pub fn upper(&self, t: f64, g: &PairGeometry, k: &EnvelopeConstants) -> f64 {
        k.scale_up * self.shape(t, g, k.rate_up)
    }
}

fn check_threshold(time_threshold: f64) -> Result<()> {
    if time_threshold.is_finite() && time_threshold > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("time threshold must be > 0, got {time_threshold}")))
    }
}

/// Small-time envelope (`t <= T`) for a single-pole regime.
pub fn small_time_envelope(regime: RegimeLabel, _params: &ModelParams, time_threshold: f64) -> Result<BoundEnvelope> {
    check_threshold(time_threshold)?;
    let kind = match regime {
        RegimeLabel::SmallPoleAny => ShapeKind::OneDim,
        RegimeLabel::SmallPlaneNearStar => ShapeKind::Mixed,
        RegimeLabel::SmallPlaneFar => ShapeKind::TwoDim,
        other => {
            return Err(Error::OutOfRange(format!("{other} is a large-time regime")));
        }
    };
    Ok(BoundEnvelope::new(kind, EnvelopeRegime::Single(regime)))
}

/// Large-time envelope (`t >= T`) for a single-pole regime; needs `epsilon <= 1/4`.
pub fn large_time_envelope(regime: RegimeLabel, params: &ModelParams, time_threshold: f64) -> Result<BoundEnvelope> {
    check_threshold(time_threshold)?;
    params.require_small_hole()?;
    let kind = match regime {
        RegimeLabel::LargePlanePlane => ShapeKind::TwoDim,
        RegimeLabel::LargePolePlaneNear => ShapeKind::PolePlaneNear,
        RegimeLabel::LargePolePlaneFar => ShapeKind::PolePlaneFar,
        RegimeLabel::LargePolePole => ShapeKind::PolePole,
        other => {
            return Err(Error::OutOfRange(format!("{other} is a small-time regime")));
        }
    };
    Ok(BoundEnvelope::new(kind, EnvelopeRegime::Single(regime)))
}

/// Envelope of `p(t, a*, a*)` for all `t > 0`.
pub fn on_diagonal_envelope() -> BoundEnvelope {
    BoundEnvelope::new(ShapeKind::OnDiagonal, EnvelopeRegime::OnDiagonal)
}

/// Small-time envelope for a variant regime.
pub fn variant_envelope(space: &VariantSpace, regime: VariantRegime) -> Result<BoundEnvelope> {
    match regime {
        VariantRegime::ArchLine if !space.is_arch() => Err(Error::InvalidParams("space has no arch".into())),
        VariantRegime::PoleLocal(_) if space.is_arch() => Err(Error::InvalidParams("arch space has no poles".into())),
        VariantRegime::NearJunction(i) | VariantRegime::PoleLocal(i) if i >= space.junctions().len() => {
            Err(Error::InvalidParams(format!("no junction {i}")))
        }
        _ => Ok(BoundEnvelope::new(regime.shape(), EnvelopeRegime::Variant(regime))),
    }
}
