//! Planes with several poles, and the plane with an arch joining two holes.
//!
//! Each hole `j` has its own radius, weight and skewness. Planar motion is
//! written in polar coordinates around the nearest hole; the chart switches
//! when another hole becomes nearest. On the arch the chart switches at the
//! midpoint.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ModelParams;
use crate::montecarlo::RngStream;
use crate::radial::{radial_step, step_plan, RadialState, SkewParams, StepConfig};

/// One pole attached to a hole.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleSpec {
    pub center: [f64; 2],
    pub epsilon: f64,
    pub p: f64,
}

/// Arch of length `2 half_length` and weight `p` joining two holes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub centers: [[f64; 2]; 2],
    pub epsilons: [f64; 2],
    pub half_length: f64,
    pub p: f64,
}

/// Variant geometry description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantSpec {
    MultiPole { poles: Vec<PoleSpec> },
    Arch { arch: ArchSpec },
}

/// A hole shorted to a point, with its local model parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Junction {
    pub center: [f64; 2],
    pub params: ModelParams,
    pub skew: SkewParams,
}

/// A point of a variant space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VPoint {
    /// Planar point in Cartesian coordinates.
    Plane { x: f64, y: f64 },
    /// The shorted point `a_j`.
    Junction(usize),
    /// Height `s` on pole `index`.
    Pole { index: usize, s: f64 },
    /// Arch coordinate `u` in `(-b, b)`; `-b` is `a_0` and `b` is `a_1`.
    Arch { u: f64 },
}

impl FromStr for VPoint {
    type Err = Error;

    /// Accepts `cart:<x>:<y>`, `star:<j>`, `pole:<j>:<s>` and `arch:<u>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("bad number `{t}` in point `{s}`")))
        };
        let idx = |t: &str| -> Result<usize> {
            t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad index `{t}` in point `{s}`")))
        };
        match parts.as_slice() {
            ["cart", x, y] => Ok(VPoint::Plane { x: num(x)?, y: num(y)? }),
            ["star", j] => Ok(VPoint::Junction(idx(j)?)),
            ["pole", j, h] => Ok(VPoint::Pole { index: idx(j)?, s: num(h)? }),
            ["arch", u] => Ok(VPoint::Arch { u: num(u)? }),
            _ => Err(Error::Parse(format!(
                "expected `cart:<x>:<y>`, `star:<j>`, `pole:<j>:<s>` or `arch:<u>`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for VPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VPoint::Plane { x, y } => write!(f, "cart:{x}:{y}"),
            VPoint::Junction(j) => write!(f, "star:{j}"),
            VPoint::Pole { index, s } => write!(f, "pole:{index}:{s}"),
            VPoint::Arch { u } => write!(f, "arch:{u}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    MultiPole,
    Arch { half_length: f64 },
}

/// Validated variant space with junction-to-junction distances.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantSpace {
    kind: Kind,
    junctions: Vec<Junction>,
    /// Shortest geodesic distances between junctions.
    jdist: Vec<Vec<f64>>,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl VariantSpace {
    pub fn new(spec: &VariantSpec) -> Result<Self> {
        let (kind, holes): (Kind, Vec<([f64; 2], f64, f64)>) = match spec {
            VariantSpec::MultiPole { poles } => {
                if poles.is_empty() {
                    return Err(Error::InvalidParams("at least one pole is required".into()));
                }
                (Kind::MultiPole, poles.iter().map(|p| (p.center, p.epsilon, p.p)).collect())
            }
            VariantSpec::Arch { arch } => {
                let b = arch.half_length;
                if !(b.is_finite() && b >= 4.0) {
                    return Err(Error::InvalidParams(format!("arch half length must be >= 4, got {b}")));
                }
                (Kind::Arch { half_length: b }, (0..2).map(|i| (arch.centers[i], arch.epsilons[i], arch.p)).collect())
            }
        };
        let mut junctions = Vec::with_capacity(holes.len());
        for &(center, eps, p) in &holes {
            if !(center[0].is_finite() && center[1].is_finite()) {
                return Err(Error::InvalidParams("hole centres must be finite".into()));
            }
            let params = ModelParams::new(eps, p)?;
            if eps >= 0.5 {
                return Err(Error::InvalidParams(format!("hole radius must be < 1/2, got {eps}")));
            }
            junctions.push(Junction { center, params, skew: SkewParams::from_params(&params) });
        }
        let k = junctions.len();
        let min_sep = if matches!(kind, Kind::Arch { .. }) { 6.0 } else { 4.0 };
        for i in 0..k {
            for j in 0..i {
                let d = dist2(junctions[i].center, junctions[j].center);
                if d < min_sep {
                    return Err(Error::InvalidParams(format!(
                        "hole centres {j} and {i} are {d} apart, need at least {min_sep}"
                    )));
                }
            }
        }
        let mut jdist = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let a = &junctions[i];
                    let b = &junctions[j];
                    jdist[i][j] = dist2(a.center, b.center) - a.params.epsilon() - b.params.epsilon();
                }
            }
        }
        if let Kind::Arch { half_length } = kind {
            jdist[0][1] = jdist[0][1].min(2.0 * half_length);
            jdist[1][0] = jdist[0][1];
        }
        for m in 0..k {
            for i in 0..k {
                for j in 0..k {
                    let via = jdist[i][m] + jdist[m][j];
                    if via < jdist[i][j] {
                        jdist[i][j] = via;
                    }
                }
            }
        }
        Ok(VariantSpace { kind, junctions, jdist })
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn is_arch(&self) -> bool {
        matches!(self.kind, Kind::Arch { .. })
    }

    pub fn half_length(&self) -> Option<f64> {
        match self.kind {
            Kind::Arch { half_length } => Some(half_length),
            Kind::MultiPole => None,
        }
    }

    /// Weight of the one-dimensional part containing `x`, if any.
    pub fn line_weight(&self, x: &VPoint) -> Option<f64> {
        match *x {
            VPoint::Pole { index, .. } => Some(self.junctions[index].params.p()),
            VPoint::Arch { .. } => Some(self.junctions[0].params.p()),
            _ => None,
        }
    }

    pub fn validate(&self, x: &VPoint) -> Result<()> {
        match *x {
            VPoint::Plane { x: px, y: py } => {
                for (j, jn) in self.junctions.iter().enumerate() {
                    if dist2([px, py], jn.center) <= jn.params.epsilon() {
                        return Err(Error::InvalidPoint(format!("planar point lies in hole {j}")));
                    }
                }
                Ok(())
            }
            VPoint::Junction(j) if j < self.junctions.len() => Ok(()),
            VPoint::Pole { index, s } if !self.is_arch() && index < self.junctions.len() => {
                if s.is_finite() && s > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(format!("pole height must be > 0, got {s}")))
                }
            }
            VPoint::Arch { u } => match self.kind {
                Kind::Arch { half_length } if u.is_finite() && u.abs() < half_length => Ok(()),
                Kind::Arch { .. } => Err(Error::InvalidPoint(format!("arch coordinate {u} out of range"))),
                Kind::MultiPole => Err(Error::InvalidPoint("space has no arch".into())),
            },
            _ => Err(Error::InvalidPoint(format!("point {x} does not exist in this space"))),
        }
    }

    pub fn parse_point(&self, s: &str) -> Result<VPoint> {
        let x: VPoint = s.parse()?;
        self.validate(&x)?;
        Ok(x)
    }

    /// Distance from `x` to junction `i` without passing another junction.
    fn direct_to_junction(&self, x: &VPoint, i: usize) -> f64 {
        let jn = &self.junctions[i];
        match *x {
            VPoint::Plane { x: px, y: py } => dist2([px, py], jn.center) - jn.params.epsilon(),
            VPoint::Junction(j) => {
                if i == j {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            VPoint::Pole { index, s } => {
                if index == i {
                    s
                } else {
                    f64::INFINITY
                }
            }
            VPoint::Arch { u } => {
                let b = self.half_length().unwrap_or(0.0);
                if i == 0 {
                    u + b
                } else {
                    b - u
                }
            }
        }
    }

    /// Geodesic distance from `x` to junction `i`.
    pub fn distance_to_junction(&self, x: &VPoint, i: usize) -> f64 {
        (0..self.junctions.len())
            .map(|j| self.direct_to_junction(x, j) + self.jdist[j][i])
            .fold(f64::INFINITY, f64::min)
    }

    fn direct(&self, x: &VPoint, y: &VPoint) -> f64 {
        match (*x, *y) {
            (VPoint::Plane { x: a, y: b }, VPoint::Plane { x: c, y: d }) => (a - c).hypot(b - d),
            (VPoint::Pole { index: i, s }, VPoint::Pole { index: j, s: t }) if i == j => (s - t).abs(),
            (VPoint::Arch { u }, VPoint::Arch { u: v }) => (u - v).abs(),
            (VPoint::Junction(i), VPoint::Junction(j)) if i == j => 0.0,
            _ => f64::INFINITY,
        }
    }

    /// Geodesic distance.
    pub fn rho(&self, x: &VPoint, y: &VPoint) -> f64 {
        (0..self.junctions.len())
            .map(|i| self.distance_to_junction(x, i) + self.distance_to_junction(y, i))
            .fold(self.direct(x, y), f64::min)
    }

    /// Index of the hole nearest to a planar point.
    pub fn nearest(&self, p: [f64; 2]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, jn) in self.junctions.iter().enumerate() {
            let d = dist2(p, jn.center) - jn.params.epsilon();
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

/// Chart index plus signed radial coordinate and angle in that chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VState {
    pub chart: usize,
    pub radial: RadialState,
    pub theta: f64,
}

/// Simulator for variant spaces.
#[derive(Clone, Debug)]
pub struct VariantSimulator {
    space: VariantSpace,
    cfg: StepConfig,
}

impl VariantSimulator {
    pub fn new(space: VariantSpace, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(VariantSimulator { space, cfg })
    }

    pub fn space(&self) -> &VariantSpace {
        &self.space
    }

    pub fn state_of(&self, x: &VPoint) -> VState {
        match *x {
            VPoint::Plane { x: px, y: py } => {
                let (j, d) = self.space.nearest([px, py]);
                let c = self.space.junctions[j].center;
                VState { chart: j, radial: RadialState::new(d), theta: (py - c[1]).atan2(px - c[0]).rem_euclid(TAU) }
            }
            VPoint::Junction(j) => VState { chart: j, radial: RadialState::new(0.0), theta: 0.0 },
            VPoint::Pole { index, s } => VState { chart: index, radial: RadialState::new(-s), theta: 0.0 },
            VPoint::Arch { u } => {
                let b = self.space.half_length().unwrap_or(0.0);
                if u <= 0.0 {
                    VState { chart: 0, radial: RadialState::new(-(u + b)), theta: 0.0 }
                } else {
                    VState { chart: 1, radial: RadialState::new(-(b - u)), theta: 0.0 }
                }
            }
        }
    }

    pub fn point_of(&self, st: &VState) -> VPoint {
        let y = st.radial.y;
        let jn = &self.space.junctions[st.chart];
        if y > 0.0 {
            let r = y + jn.params.epsilon();
            VPoint::Plane { x: jn.center[0] + r * st.theta.cos(), y: jn.center[1] + r * st.theta.sin() }
        } else if y == 0.0 {
            VPoint::Junction(st.chart)
        } else {
            match self.space.kind {
                Kind::MultiPole => VPoint::Pole { index: st.chart, s: -y },
                Kind::Arch { half_length } => {
                    if st.chart == 0 {
                        VPoint::Arch { u: -half_length - y }
                    } else {
                        VPoint::Arch { u: half_length + y }
                    }
                }
            }
        }
    }

    /// Advances by `dt`; returns the junction visited during the step, if any.
    pub fn step(&self, st: &mut VState, dt: f64, rng: &mut RngStream) -> Option<usize> {
        let jn = self.space.junctions[st.chart];
        let y0 = st.radial.y;
        let out = radial_step(st.radial, dt, &self.cfg, &jn.params, &jn.skew, rng);
        let y1 = out.state.y;
        st.radial = out.state;
        if out.hit_zero {
            if y1 > 0.0 {
                st.theta = TAU * rng.uniform();
            }
        } else if y0 > 0.0 && y1 > 0.0 {
            let eps = jn.params.epsilon();
            let sd = (dt / ((y0 + eps) * (y1 + eps))).sqrt();
            st.theta = (st.theta + sd * rng.normal()).rem_euclid(TAU);
        }
        let hit = out.hit_zero.then_some(st.chart);
        if y1 > 0.0 {
            if let VPoint::Plane { x, y } = self.point_of(st) {
                let (k, d) = self.space.nearest([x, y]);
                if k != st.chart {
                    let c = self.space.junctions[k].center;
                    st.chart = k;
                    st.radial.y = d.max(0.0);
                    st.theta = (y - c[1]).atan2(x - c[0]).rem_euclid(TAU);
                }
            }
        } else if let Kind::Arch { half_length } = self.space.kind {
            if -y1 > half_length {
                st.chart = 1 - st.chart;
                st.radial.y = (-(2.0 * half_length + y1)).min(0.0);
            }
        }
        hit
    }

    /// Runs for time `t`, calling `visit(time, state, hit)` after every step.
    pub fn walk<F: FnMut(f64, &VState, Option<usize>)>(
        &self,
        x0: &VPoint,
        t: f64,
        rng: &mut RngStream,
        mut visit: F,
    ) -> VState {
        let mut st = self.state_of(x0);
        if self.cfg.max_dt.is_none() {
            let (n, h) = step_plan(t, self.cfg.dt);
            for k in 0..n {
                let hit = self.step(&mut st, h, rng);
                visit((k + 1) as f64 * h, &st, hit);
            }
            return st;
        }
        let tol = 1e-12 * t.max(1.0);
        let mut now = 0.0;
        while t - now > tol {
            let eps = self.space.junctions[st.chart].params.epsilon();
            let y = match self.space.kind {
                Kind::Arch { half_length } if st.radial.y < 0.0 => {
                    st.radial.y.abs().min(2.0 * half_length + st.radial.y)
                }
                _ => st.radial.y,
            };
            let mut h = self.cfg.step_size(y, eps);
            if now + h >= t - tol {
                h = t - now;
            }
            let hit = self.step(&mut st, h, rng);
            now += h;
            visit(now, &st, hit);
        }
        st
    }

    pub fn endpoint(&self, x0: &VPoint, t: f64, rng: &mut RngStream) -> VPoint {
        let st = self.walk(x0, t, rng, |_, _, _| {});
        self.point_of(&st)
    }
}

/// Skewness at a junction given its radius and the weight of the attached line.
pub fn junction_skew(epsilon: f64, p: f64) -> f64 {
    (2.0 * PI * epsilon - p) / (2.0 * PI * epsilon + p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::run_paths;

    fn two_poles() -> VariantSpace {
        VariantSpace::new(&VariantSpec::MultiPole {
            poles: vec![
                PoleSpec { center: [0.0, 0.0], epsilon: 0.3, p: 1.0 },
                PoleSpec { center: [5.0, 0.0], epsilon: 0.2, p: 3.0 },
            ],
        })
        .unwrap()
    }

    fn arch() -> VariantSpace {
        VariantSpace::new(&VariantSpec::Arch {
            arch: ArchSpec { centers: [[0.0, 0.0], [7.0, 0.0]], epsilons: [0.3, 0.4], half_length: 4.0, p: 2.0 },
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_layouts() {
        let close = VariantSpec::MultiPole {
            poles: vec![
                PoleSpec { center: [0.0, 0.0], epsilon: 0.3, p: 1.0 },
                PoleSpec { center: [3.0, 0.0], epsilon: 0.3, p: 1.0 },
            ],
        };
        assert!(VariantSpace::new(&close).is_err());
        let short = VariantSpec::Arch {
            arch: ArchSpec { centers: [[0.0, 0.0], [7.0, 0.0]], epsilons: [0.3, 0.3], half_length: 3.0, p: 1.0 },
        };
        assert!(VariantSpace::new(&short).is_err());
        let fat = VariantSpec::MultiPole { poles: vec![PoleSpec { center: [0.0, 0.0], epsilon: 0.6, p: 1.0 }] };
        assert!(VariantSpace::new(&fat).is_err());
    }

    #[test]
    fn distances() {
        let s = two_poles();
        let a = VPoint::Pole { index: 0, s: 1.0 };
        let b = VPoint::Pole { index: 1, s: 2.0 };
        assert!((s.rho(&a, &b) - (1.0 + 4.5 + 2.0)).abs() < 1e-12);
        let x = VPoint::Plane { x: 2.5, y: 0.0 };
        assert!((s.rho(&a, &x) - 3.2).abs() < 1e-12);
        let arch = arch();
        // Through the arch: 4 + 4 = 8 is longer than the plane route 7 - 0.7.
        assert!((arch.rho(&VPoint::Junction(0), &VPoint::Junction(1)) - 6.3).abs() < 1e-12);
        assert!((arch.rho(&VPoint::Arch { u: 0.0 }, &VPoint::Junction(0)) - 4.0).abs() < 1e-12);
        assert!((arch.rho(&VPoint::Arch { u: 1.0 }, &VPoint::Arch { u: -1.0 }) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn point_parsing() {
        let s = two_poles();
        assert_eq!(s.parse_point("pole:1:0.5").unwrap(), VPoint::Pole { index: 1, s: 0.5 });
        assert!(s.parse_point("pole:2:0.5").is_err());
        assert!(s.parse_point("cart:0.1:0").is_err());
        assert!(s.parse_point("arch:0").is_err());
        assert!(arch().parse_point("arch:0.5").is_ok());
        assert!(arch().parse_point("arch:4.5").is_err());
    }

    #[test]
    fn state_round_trip() {
        let sim = VariantSimulator::new(arch(), StepConfig::with_dt(1e-3)).unwrap();
        for x in
            [VPoint::Arch { u: -1.5 }, VPoint::Arch { u: 2.0 }, VPoint::Plane { x: 6.0, y: 1.0 }, VPoint::Junction(1)]
        {
            let back = sim.point_of(&sim.state_of(&x));
            assert!(sim.space().rho(&x, &back) < 1e-12, "{x} -> {back}");
        }
    }

    #[test]
    fn each_junction_uses_its_own_skew() {
        let sim = VariantSimulator::new(two_poles(), StepConfig::with_dt(1e-4)).unwrap();
        for j in 0..2 {
            let want = sim.space().junctions()[j].skew.pole_entry_probability();
            let n = 40_000u64;
            let count = run_paths(
                n,
                10 + j as u64,
                || 0u64,
                |acc, rng, _| {
                    if matches!(sim.endpoint(&VPoint::Junction(j), 1e-4, rng), VPoint::Pole { .. }) {
                        *acc += 1;
                    }
                },
            );
            let freq = count as f64 / n as f64;
            let se = (want * (1.0 - want) / n as f64).sqrt();
            assert!((freq - want).abs() < 4.0 * se, "junction {j}: {freq} vs {want}");
        }
    }

    #[test]
    fn pole_to_pole_paths_cross_the_plane() {
        let sim = VariantSimulator::new(two_poles(), StepConfig::with_dt(2e-3)).unwrap();
        let x0 = VPoint::Pole { index: 0, s: 0.5 };
        let mut checked = 0;
        for i in 0..400 {
            let mut rng = RngStream::new(3, i);
            let mut visited = [false; 2];
            let end = sim.walk(&x0, 20.0, &mut rng, |_, _, hit| {
                if let Some(j) = hit {
                    visited[j] = true;
                }
            });
            if let VPoint::Pole { index: 1, .. } = sim.point_of(&end) {
                assert!(visited[0] && visited[1]);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }
}
