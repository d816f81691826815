use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hole radius `epsilon` and pole weight `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    epsilon: f64,
    p: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    epsilon: f64,
    p: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.epsilon, raw.p)
    }
}

impl From<ModelParams> for RawParams {
    fn from(m: ModelParams) -> Self {
        RawParams { epsilon: m.epsilon, p: m.p }
    }
}

impl ModelParams {
    pub fn new(epsilon: f64, p: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParams("epsilon must be > 0".into()));
        }
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidParams("p must be > 0".into()));
        }
        Ok(ModelParams { epsilon, p })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Whether the large-time bounds apply (`epsilon <= 1/4`).
    pub fn small_hole(&self) -> bool {
        self.epsilon <= 0.25
    }

    pub fn require_small_hole(&self) -> Result<()> {
        if self.small_hole() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("large-time bounds need epsilon <= 1/4, got {}", self.epsilon)))
        }
    }
}

/// A point of the state space.
///
/// `Pole(s)` sits at height `s > 0` on the pole, `Plane { r, theta }` at
/// Euclidean radius `r > epsilon` and angle `theta` in `[0, 2 pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EPoint {
    Pole(f64),
    Star,
    Plane { r: f64, theta: f64 },
}

impl EPoint {
    pub fn pole(s: f64) -> Result<Self> {
        if s.is_finite() && s > 0.0 {
            Ok(EPoint::Pole(s))
        } else {
            Err(Error::InvalidPoint(format!("pole height must be finite and > 0, got {s}")))
        }
    }

    pub fn plane(r: f64, theta: f64, params: &ModelParams) -> Result<Self> {
        let pt = EPoint::plane_unchecked(r, theta)?;
        pt.validate(params)?;
        Ok(pt)
    }

    /// Planar point from Cartesian coordinates.
    pub fn from_cartesian(x: f64, y: f64, params: &ModelParams) -> Result<Self> {
        EPoint::plane(x.hypot(y), y.atan2(x), params)
    }

    fn plane_unchecked(r: f64, theta: f64) -> Result<Self> {
        if !(r.is_finite() && theta.is_finite()) {
            return Err(Error::InvalidPoint("plane coordinates must be finite".into()));
        }
        Ok(EPoint::Plane { r, theta: theta.rem_euclid(TAU) })
    }

    /// Checks the point against the hole radius.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        match *self {
            EPoint::Star => Ok(()),
            EPoint::Pole(s) if s.is_finite() && s > 0.0 => Ok(()),
            EPoint::Pole(s) => Err(Error::InvalidPoint(format!("pole height must be > 0, got {s}"))),
            EPoint::Plane { r, theta } => {
                if !(r.is_finite() && theta.is_finite()) {
                    Err(Error::InvalidPoint("plane coordinates must be finite".into()))
                } else if r <= params.epsilon {
                    Err(Error::InvalidPoint(format!("plane radius {r} must exceed epsilon = {}", params.epsilon)))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Parses a point and validates it against `params`.
    pub fn parse(s: &str, params: &ModelParams) -> Result<Self> {
        let pt: EPoint = s.parse()?;
        pt.validate(params)?;
        Ok(pt)
    }

    /// Distance to `a*`.
    pub fn rho_norm(&self, params: &ModelParams) -> f64 {
        match *self {
            EPoint::Star => 0.0,
            EPoint::Pole(s) => s,
            EPoint::Plane { r, .. } => r - params.epsilon,
        }
    }

    /// Signed radial coordinate: `-s` on the pole, `|x|_rho` on the plane.
    pub fn signed_radial(&self, params: &ModelParams) -> f64 {
        match *self {
            EPoint::Star => 0.0,
            EPoint::Pole(s) => -s,
            EPoint::Plane { r, .. } => r - params.epsilon,
        }
    }

    /// Inverse of [`EPoint::signed_radial`] given an angle for planar points.
    pub fn from_signed_radial(y: f64, theta: f64, params: &ModelParams) -> Self {
        if y > 0.0 {
            EPoint::Plane { r: y + params.epsilon, theta: theta.rem_euclid(TAU) }
        } else if y < 0.0 {
            EPoint::Pole(-y)
        } else {
            EPoint::Star
        }
    }

    pub fn is_pole(&self) -> bool {
        matches!(self, EPoint::Pole(_))
    }

    pub fn is_plane(&self) -> bool {
        matches!(self, EPoint::Plane { .. })
    }

    /// Embedding in R^3: the plane at height 0, the pole vertical over the origin.
    pub fn to_cartesian(&self) -> [f64; 3] {
        match *self {
            EPoint::Star => [0.0, 0.0, 0.0],
            EPoint::Pole(s) => [0.0, 0.0, s],
            EPoint::Plane { r, theta } => [r * theta.cos(), r * theta.sin(), 0.0],
        }
    }
}

impl FromStr for EPoint {
    type Err = Error;

    /// Accepts `star`, `pole:<s>` and `plane:<r>:<theta>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let nums: Vec<&str> = parts.collect();
        let num = |t: &str| -> Result<f64> {
            let v: f64 = t.trim().parse().map_err(|_| Error::Parse(format!("bad number `{t}` in point `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!("non-finite number in point `{s}`")))
            }
        };
        match (head, nums.len()) {
            ("star", 0) => Ok(EPoint::Star),
            ("pole", 1) => EPoint::pole(num(nums[0])?),
            ("plane", 2) => {
                let r = num(nums[0])?;
                if r <= 0.0 {
                    return Err(Error::InvalidPoint(format!("plane radius must be > 0, got {r}")));
                }
                EPoint::plane_unchecked(r, num(nums[1])?)
            }
            _ => Err(Error::Parse(format!("expected `star`, `pole:<s>` or `plane:<r>:<theta>`, got `{s}`"))),
        }
    }
}

impl fmt::Display for EPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EPoint::Star => write!(f, "star"),
            EPoint::Pole(s) => write!(f, "pole:{s}"),
            EPoint::Plane { r, theta } => write!(f, "plane:{r}:{theta}"),
        }
    }
}

impl Serialize for EPoint {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EPoint {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Euclidean distance between two planar points given in polar form.
pub fn planar_distance(r1: f64, t1: f64, r2: f64, t2: f64) -> f64 {
    let half = 0.5 * (t1 - t2);
    let s = half.sin();
    ((r1 - r2) * (r1 - r2) + 4.0 * r1 * r2 * s * s).sqrt()
}

/// Geodesic distance.
pub fn rho(x: &EPoint, y: &EPoint, params: &ModelParams) -> f64 {
    match (*x, *y) {
        (EPoint::Star, o) | (o, EPoint::Star) => o.rho_norm(params),
        (EPoint::Pole(a), EPoint::Pole(b)) => (a - b).abs(),
        (EPoint::Pole(s), EPoint::Plane { r, .. }) | (EPoint::Plane { r, .. }, EPoint::Pole(s)) => {
            s + (r - params.epsilon)
        }
        (EPoint::Plane { r: r1, theta: t1 }, EPoint::Plane { r: r2, theta: t2 }) => {
            let through_star = (r1 + r2) - 2.0 * params.epsilon;
            planar_distance(r1, t1, r2, t2).min(through_star)
        }
    }
}

/// Area of the intersection of two disks with radii `a`, `b` and centres `c` apart.
pub fn lens_area(a: f64, b: f64, c: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 || c >= a + b {
        return 0.0;
    }
    if c <= (a - b).abs() {
        let m = a.min(b);
        return PI * m * m;
    }
    let ca = ((c * c + a * a - b * b) / (2.0 * c * a)).clamp(-1.0, 1.0);
    let cb = ((c * c + b * b - a * a) / (2.0 * c * b)).clamp(-1.0, 1.0);
    let k = (-c + a + b) * (c + a - b) * (c - a + b) * (c + a + b);
    a * a * ca.acos() + b * b * cb.acos() - 0.5 * k.max(0.0).sqrt()
}

/// Area of `{epsilon < |z| < epsilon + w}`.
fn annulus(w: f64, eps: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        PI * w * (w + 2.0 * eps)
    }
}

/// Measure of the open geodesic ball `B_rho(center, radius)`.
///
/// Planar area counts with weight 1 and pole length with weight `p`.
pub fn mp_ball_volume(center: &EPoint, radius: f64, params: &ModelParams) -> f64 {
    if radius <= 0.0 {
        return 0.0;
    }
    let eps = params.epsilon;
    let p = params.p;
    match *center {
        EPoint::Star => annulus(radius, eps) + p * radius,
        EPoint::Pole(s) => {
            if radius <= s {
                2.0 * p * radius
            } else {
                p * (s + radius) + annulus(radius - s, eps)
            }
        }
        EPoint::Plane { r, .. } => {
            let d = r - eps;
            if radius <= d {
                return PI * radius * radius;
            }
            let w = radius - d;
            let big = eps + w;
            let planar = PI * radius * radius + PI * big * big - PI * eps * eps - lens_area(radius, big, r);
            planar + p * w
        }
    }
}

/// Labels of the distance regimes of the two-sided bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    SmallPoleAny,
    SmallPlaneNearStar,
    SmallPlaneFar,
    LargePlanePlane,
    LargePolePlaneNear,
    LargePolePlaneFar,
    LargePolePole,
}

impl RegimeLabel {
    pub const ALL: [RegimeLabel; 7] = [
        RegimeLabel::SmallPoleAny,
        RegimeLabel::SmallPlaneNearStar,
        RegimeLabel::SmallPlaneFar,
        RegimeLabel::LargePlanePlane,
        RegimeLabel::LargePolePlaneNear,
        RegimeLabel::LargePolePlaneFar,
        RegimeLabel::LargePolePole,
    ];

    pub fn is_small_time(&self) -> bool {
        matches!(self, RegimeLabel::SmallPoleAny | RegimeLabel::SmallPlaneNearStar | RegimeLabel::SmallPlaneFar)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::SmallPoleAny => "small_pole_any",
            RegimeLabel::SmallPlaneNearStar => "small_plane_near_star",
            RegimeLabel::SmallPlaneFar => "small_plane_far",
            RegimeLabel::LargePlanePlane => "large_plane_plane",
            RegimeLabel::LargePolePlaneNear => "large_pole_plane_near",
            RegimeLabel::LargePolePlaneFar => "large_pole_plane_far",
            RegimeLabel::LargePolePole => "large_pole_pole",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegimeLabel::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown regime `{s}`")))
    }
}

/// Classifies a pair of points and a time.
///
/// Times `t <= time_threshold` use the small-time regimes.
pub fn classify_regime(
    x: &EPoint,
    y: &EPoint,
    t: f64,
    time_threshold: f64,
    params: &ModelParams,
) -> Result<RegimeLabel> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::OutOfRange(format!("time must be > 0, got {t}")));
    }
    if !(time_threshold.is_finite() && time_threshold > 0.0) {
        return Err(Error::OutOfRange(format!("time threshold must be > 0, got {time_threshold}")));
    }
    x.validate(params)?;
    y.validate(params)?;
    let on_pole = x.is_pole() || y.is_pole();
    if t <= time_threshold {
        if on_pole {
            Ok(RegimeLabel::SmallPoleAny)
        } else if x.rho_norm(params) + y.rho_norm(params) < 1.0 {
            Ok(RegimeLabel::SmallPlaneNearStar)
        } else {
            Ok(RegimeLabel::SmallPlaneFar)
        }
    } else {
        match (x, y) {
            (EPoint::Pole(_), EPoint::Pole(_)) => Ok(RegimeLabel::LargePolePole),
            (EPoint::Pole(_), other) | (other, EPoint::Pole(_)) => {
                if other.rho_norm(params) <= 1.0 {
                    Ok(RegimeLabel::LargePolePlaneNear)
                } else {
                    Ok(RegimeLabel::LargePolePlaneFar)
                }
            }
            _ => Ok(RegimeLabel::LargePlanePlane),
        }
    }
}
