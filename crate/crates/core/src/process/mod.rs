//! Exact-in-law simulation of the process on the plane with a flag-pole.
//!
//! The signed radial coordinate is stepped with [`crate::radial`]. While on
//! the plane the angle diffuses with variance `dt / (r_k r_{k+1})`; after a
//! visit to `a*` that lands on the plane the angle is redrawn uniformly.

pub mod domain;
pub mod variant;

use std::f64::consts::TAU;

pub use domain::DomainSpec;

use crate::error::{Error, Result};
use crate::geometry::{EPoint, ModelParams};
use crate::montecarlo::RngStream;
use crate::radial::{radial_step, step_plan, RadialState, SkewParams, StepConfig};

/// Signed radial state plus angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BmvdState {
    pub radial: RadialState,
    pub theta: f64,
}

impl BmvdState {
    pub fn from_point(x: &EPoint, params: &ModelParams) -> Self {
        let theta = match *x {
            EPoint::Plane { theta, .. } => theta,
            _ => 0.0,
        };
        BmvdState { radial: RadialState::new(x.signed_radial(params)), theta }
    }

    pub fn point(&self, params: &ModelParams) -> EPoint {
        EPoint::from_signed_radial(self.radial.y, self.theta, params)
    }

    pub fn y(&self) -> f64 {
        self.radial.y
    }
}

/// Data passed to step observers.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub t0: f64,
    pub t1: f64,
    pub before: BmvdState,
    pub after: BmvdState,
    pub hit_zero: bool,
}

impl StepInfo {
    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Recorded path.
#[derive(Clone, Debug, PartialEq)]
pub struct BmvdPath {
    pub times: Vec<f64>,
    pub points: Vec<EPoint>,
    pub end: BmvdState,
    /// Midpoint of the first step that visited `a*`.
    pub first_hit: Option<f64>,
}

/// How a killed simulation ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KilledOutcome {
    /// Exit time, `None` if the step budget ran out first.
    pub exit_time: Option<f64>,
    pub exit_point: Option<EPoint>,
    /// Whether the exit was flagged by the Brownian-bridge test.
    pub bridge_exit: bool,
    /// Midpoint of the first step that visited `a*`.
    pub first_hit: Option<f64>,
    pub steps: usize,
}

impl KilledOutcome {
    /// Whether `a*` was visited no later than the exit step.
    pub fn hit_before_exit(&self) -> bool {
        match (self.first_hit, self.exit_time) {
            (Some(h), Some(e)) => h <= e,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

/// Single-pole simulator.
#[derive(Clone, Copy, Debug)]
pub struct Simulator {
    params: ModelParams,
    skew: SkewParams,
    cfg: StepConfig,
}

impl Simulator {
    pub fn new(params: ModelParams, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Simulator { params, skew: SkewParams::from_params(&params), cfg })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn skew(&self) -> &SkewParams {
        &self.skew
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    /// Same model with another step configuration.
    pub fn with_config(&self, cfg: StepConfig) -> Result<Self> {
        Simulator::new(self.params, cfg)
    }

    /// Advances `state` by `dt`; returns whether `a*` was visited.
    #[inline]
    pub fn step(&self, state: &mut BmvdState, dt: f64, rng: &mut RngStream) -> bool {
        let y0 = state.radial.y;
        let out = radial_step(state.radial, dt, &self.cfg, &self.params, &self.skew, rng);
        let y1 = out.state.y;
        state.radial = out.state;
        if out.hit_zero {
            if y1 > 0.0 {
                state.theta = TAU * rng.uniform();
            }
        } else if y0 > 0.0 && y1 > 0.0 {
            let eps = self.params.epsilon();
            let sd = (dt / ((y0 + eps) * (y1 + eps))).sqrt();
            state.theta = (state.theta + sd * rng.normal()).rem_euclid(TAU);
        }
        out.hit_zero
    }

    /// Advances `state` from time `from` to `to`, calling `visit` after every step.
    fn advance<F: FnMut(&StepInfo)>(
        &self,
        state: &mut BmvdState,
        from: f64,
        to: f64,
        rng: &mut RngStream,
        visit: &mut F,
    ) {
        if self.cfg.max_dt.is_none() {
            let (n, h) = step_plan(to - from, self.cfg.dt);
            for k in 0..n {
                let before = *state;
                let hit = self.step(state, h, rng);
                let t0 = from + k as f64 * h;
                visit(&StepInfo { t0, t1: t0 + h, before, after: *state, hit_zero: hit });
            }
            return;
        }
        let eps = self.params.epsilon();
        let tol = 1e-12 * to.abs().max(1.0);
        let mut now = from;
        while to - now > tol {
            let mut h = self.cfg.step_size(state.radial.y, eps);
            if now + h >= to - tol {
                h = to - now;
            }
            let before = *state;
            let hit = self.step(state, h, rng);
            visit(&StepInfo { t0: now, t1: now + h, before, after: *state, hit_zero: hit });
            now += h;
        }
    }

    /// Runs for time `t`, calling `visit` after every step.
    pub fn walk<F: FnMut(&StepInfo)>(&self, x0: &EPoint, t: f64, rng: &mut RngStream, mut visit: F) -> BmvdState {
        let mut state = BmvdState::from_point(x0, &self.params);
        self.advance(&mut state, 0.0, t, rng, &mut visit);
        state
    }

    /// Runs through the ascending `times`, calling `visit(k, state)` at `times[k]`.
    pub fn observe_at<F: FnMut(usize, &BmvdState)>(
        &self,
        x0: &EPoint,
        times: &[f64],
        rng: &mut RngStream,
        mut visit: F,
    ) {
        let mut state = BmvdState::from_point(x0, &self.params);
        let mut now = 0.0;
        for (k, &t) in times.iter().enumerate() {
            self.advance(&mut state, now, t, rng, &mut |_| {});
            now = t;
            visit(k, &state);
        }
    }

    /// Runs through the ascending `times`, calling `step` after every step and `visit` at each time.
    pub fn observe_with_steps<F: FnMut(&StepInfo), G: FnMut(usize, &BmvdState)>(
        &self,
        x0: &EPoint,
        times: &[f64],
        rng: &mut RngStream,
        mut step: F,
        mut visit: G,
    ) {
        let mut state = BmvdState::from_point(x0, &self.params);
        let mut now = 0.0;
        for (k, &t) in times.iter().enumerate() {
            self.advance(&mut state, now, t, rng, &mut step);
            now = t;
            visit(k, &state);
        }
    }

    /// State at time `t`.
    pub fn endpoint(&self, x0: &EPoint, t: f64, rng: &mut RngStream) -> BmvdState {
        self.walk(x0, t, rng, |_| {})
    }

    /// Full path on the step grid.
    pub fn simulate(&self, x0: &EPoint, t: f64, rng: &mut RngStream) -> BmvdPath {
        let mut times = vec![0.0];
        let mut points = vec![*x0];
        let mut first_hit = if matches!(x0, EPoint::Star) { Some(0.0) } else { None };
        let end = self.walk(x0, t, rng, |s| {
            times.push(s.t1);
            points.push(s.after.point(&self.params));
            if s.hit_zero && first_hit.is_none() {
                first_hit = Some(0.5 * (s.t0 + s.t1));
            }
        });
        BmvdPath { times, points, end, first_hit }
    }

    /// Runs until the path leaves `domain` or `max_steps` steps elapse.
    ///
    /// `visit` sees every step taken strictly inside the domain.
    pub fn simulate_killed<F: FnMut(&StepInfo)>(
        &self,
        x0: &EPoint,
        domain: &DomainSpec,
        max_steps: usize,
        rng: &mut RngStream,
        mut visit: F,
    ) -> Result<KilledOutcome> {
        domain.validate(&self.params)?;
        if !domain.contains(x0, &self.params) {
            return Err(Error::InvalidPoint(format!("start point {x0} is outside the domain")));
        }
        let eps = self.params.epsilon();
        let mut state = BmvdState::from_point(x0, &self.params);
        let mut first_hit = if matches!(x0, EPoint::Star) { Some(0.0) } else { None };
        let mut now = 0.0;
        for k in 0..max_steps {
            let before = state;
            let h = match self.cfg.max_dt {
                None => self.cfg.dt,
                Some(_) => {
                    let d = domain.outer_distance(&before.point(&self.params), &self.params);
                    self.cfg.step_size(state.radial.y, eps).min((self.cfg.adapt * d * d).max(self.cfg.dt))
                }
            };
            let hit = self.step(&mut state, h, rng);
            let t0 = now;
            let t1 = t0 + h;
            now = t1;
            if hit && first_hit.is_none() {
                first_hit = Some(t0 + 0.5 * h);
            }
            let after = state.point(&self.params);
            let left = !domain.contains(&after, &self.params) || (hit && !domain.contains_star());
            let bridged = !left && self.cfg.bridge_exit && {
                let d0 = domain.outer_distance(&before.point(&self.params), &self.params);
                let d1 = domain.outer_distance(&after, &self.params);
                rng.uniform() < (-2.0 * d0 * d1 / h).exp()
            };
            if left || bridged {
                return Ok(KilledOutcome {
                    exit_time: Some(t1),
                    exit_point: Some(after),
                    bridge_exit: bridged,
                    first_hit,
                    steps: k + 1,
                });
            }
            visit(&StepInfo { t0, t1, before, after: state, hit_zero: hit });
        }
        Ok(KilledOutcome { exit_time: None, exit_point: None, bridge_exit: false, first_hit, steps: max_steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rho;
    use crate::montecarlo::{run_paths, RunningStat};

    fn sim(eps: f64, p: f64, dt: f64) -> Simulator {
        Simulator::new(ModelParams::new(eps, p).unwrap(), StepConfig::with_dt(dt)).unwrap()
    }

    #[test]
    fn far_from_hole_is_planar_brownian_motion() {
        // Displacement over a short time matches a 2D Gaussian when the hole is far.
        let s = sim(0.1, 1.0, 1e-3);
        let x0 = EPoint::Plane { r: 10.0, theta: 0.3 };
        let t = 0.25;
        let (dx, dy) = run_paths(
            20_000,
            3,
            || (RunningStat::new(), RunningStat::new()),
            |acc, rng, _| {
                let end = s.endpoint(&x0, t, rng).point(s.params()).to_cartesian();
                let start = x0.to_cartesian();
                acc.0.push((end[0] - start[0]).powi(2));
                acc.1.push((end[0] - start[0]) * (end[1] - start[1]));
            },
        );
        assert!((dx.mean() - t).abs() < 4.0 * dx.stderr(), "var {}", dx.mean());
        assert!(dy.mean().abs() < 4.0 * dy.stderr());
    }

    #[test]
    fn star_start_enters_pole_with_skew_probability() {
        let s = sim(0.5, 2.0, 1e-4);
        let want = s.skew().pole_entry_probability();
        let count = run_paths(
            50_000,
            4,
            || 0u64,
            |acc, rng, _| {
                if s.endpoint(&EPoint::Star, 1e-4, rng).y() < 0.0 {
                    *acc += 1;
                }
            },
        );
        let freq = count as f64 / 50_000.0;
        let se = (want * (1.0 - want) / 50_000.0).sqrt();
        assert!((freq - want).abs() < 4.0 * se);
    }

    #[test]
    fn angle_is_uniform_after_visiting_star() {
        let s = sim(0.5, 0.1, 1e-3);
        let stat = run_paths(
            20_000,
            5,
            || (RunningStat::new(), RunningStat::new()),
            |acc, rng, _| {
                let st = s.endpoint(&EPoint::Star, 0.05, rng);
                if st.y() > 0.0 {
                    acc.0.push(st.theta.cos());
                    acc.1.push(st.theta.sin());
                }
            },
        );
        assert!(stat.0.mean().abs() < 4.0 * stat.0.stderr());
        assert!(stat.1.mean().abs() < 4.0 * stat.1.stderr());
    }

    #[test]
    fn path_is_reproducible() {
        let s = sim(0.5, 1.0, 0.01);
        let x0 = EPoint::Pole(0.3);
        let a = s.simulate(&x0, 1.0, &mut RngStream::new(9, 2));
        let b = s.simulate(&x0, 1.0, &mut RngStream::new(9, 2));
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 101);
        let jumps = a.points.windows(2).map(|w| rho(&w[0], &w[1], s.params())).fold(0.0, f64::max);
        assert!(jumps < 1.0);
    }

    #[test]
    fn observe_at_hits_requested_times() {
        let s = sim(0.5, 1.0, 0.01);
        let mut seen = vec![];
        s.observe_at(&EPoint::Star, &[0.05, 0.5, 1.25], &mut RngStream::new(1, 1), |k, _| seen.push(k));
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn pole_ruin_probability() {
        // On the pole segment (0, b) the walk is a plain Brownian motion.
        let s = sim(0.5, 1.0, 1e-4);
        let domain = DomainSpec::PoleSegment { length: 1.0 };
        let x0 = EPoint::Pole(0.3);
        let n = 20_000u64;
        let hits = run_paths(
            n,
            8,
            || 0u64,
            |acc, rng, _| {
                let out = s.simulate_killed(&x0, &domain, 10_000_000, rng, |_| {}).unwrap();
                if out.hit_before_exit() {
                    *acc += 1;
                }
            },
        );
        let freq = hits as f64 / n as f64;
        let se = (0.7 * 0.3 / n as f64).sqrt();
        assert!((freq - 0.7).abs() < 4.0 * se + 0.01, "{freq}");
    }

    #[test]
    fn killed_rejects_outside_start() {
        let s = sim(0.5, 1.0, 1e-3);
        let d = DomainSpec::Ball { radius: 1.0 };
        let mut rng = RngStream::new(1, 1);
        assert!(s.simulate_killed(&EPoint::Pole(2.0), &d, 10, &mut rng, |_| {}).is_err());
    }

    #[test]
    fn mean_exit_time_from_pole_segment() {
        // E_x tau = x (b - x) for Brownian motion on (0, b).
        let s = sim(0.5, 1.0, 1e-4);
        let domain = DomainSpec::PoleSegment { length: 1.0 };
        let stat = run_paths(10_000, 2, RunningStat::new, |acc, rng, _| {
            let out = s.simulate_killed(&EPoint::Pole(0.5), &domain, 10_000_000, rng, |_| {}).unwrap();
            acc.push(out.exit_time.unwrap());
        });
        assert!((stat.mean() - 0.25).abs() < 4.0 * stat.stderr() + 0.01, "{}", stat.mean());
    }
}
