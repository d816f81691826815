use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ModelParams;
use crate::montecarlo::RngStream;

/// Skewness of the signed radial process at 0.
///
/// `beta = (2 pi eps - p) / (2 pi eps + p)`; the process enters the plane side
/// with probability `(1 + beta) / 2` and the pole side with `(1 - beta) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewParams {
    beta: f64,
}

impl SkewParams {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta.abs() < 1.0 {
            Ok(SkewParams { beta })
        } else {
            Err(Error::InvalidParams(format!("skewness must lie in (-1, 1), got {beta}")))
        }
    }

    pub fn from_params(params: &ModelParams) -> Self {
        let a = 2.0 * PI * params.epsilon();
        SkewParams { beta: (a - params.p()) / (a + params.p()) }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn plane_entry_probability(&self) -> f64 {
        0.5 * (1.0 + self.beta)
    }

    pub fn pole_entry_probability(&self) -> f64 {
        0.5 * (1.0 - self.beta)
    }
}

/// Result of an exact skew Brownian step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkewOutcome {
    pub y: f64,
    pub hit_zero: bool,
}

/// Exact transition of skew Brownian motion over time `dt`.
///
/// The endpoint modulus is drawn from reflected Brownian motion; given the
/// modulus `m`, the path avoided 0 with probability `tanh(|y| m / dt)`.
/// Otherwise the sign is chosen with the skew probabilities.
pub fn skew_step_exact(y: f64, dt: f64, skew: &SkewParams, rng: &mut RngStream) -> SkewOutcome {
    let a = y.abs();
    let m = (a + dt.sqrt() * rng.normal()).abs();
    let z = a * m / dt;
    let kept = if z > 20.0 {
        true
    } else if z > 0.0 {
        rng.uniform() < z.tanh()
    } else {
        false
    };
    if kept {
        SkewOutcome { y: m.copysign(y), hit_zero: false }
    } else {
        let plane = rng.uniform() < skew.plane_entry_probability();
        SkewOutcome { y: if plane { m } else { -m }, hit_zero: true }
    }
}

/// Radial drift `1 / (2 (y + eps))` on the plane side, 0 on the pole.
pub fn radial_drift(y: f64, params: &ModelParams) -> f64 {
    if y > 0.0 {
        0.5 / (y + params.epsilon())
    } else {
        0.0
    }
}

/// Exact flow of `dy = 1 / (2 (y + eps)) dt` over time `h`, identity for `y <= 0`.
pub fn drift_flow(y: f64, h: f64, params: &ModelParams) -> f64 {
    if y <= 0.0 {
        return y;
    }
    let eps = params.epsilon();
    let r = y + eps;
    (2.0 * eps * y + y * y + h) / ((r * r + h).sqrt() + eps)
}

/// Time-stepping scheme for the signed radial process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Half drift flow, exact skew step, half drift flow.
    #[default]
    StrangExactSkew,
    /// Euler step with a skew-biased sign choice on zero crossings.
    EulerFlip,
}

/// Step size, local-time window and scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Brownian-bridge exit test for killed simulations.
    #[serde(default)]
    pub bridge_exit: bool,
    /// Largest adaptive step; fixed steps of `dt` when absent.
    #[serde(default)]
    pub max_dt: Option<f64>,
    /// Adaptive step `adapt * (|y| + eps)^2`, clamped to `[dt, max_dt]`.
    #[serde(default = "default_adapt")]
    pub adapt: f64,
    /// Radial drift on the plane side; disabling it leaves a pure skew Brownian motion.
    #[serde(default = "default_drift")]
    pub drift: bool,
}

fn default_kappa() -> f64 {
    1.0
}

fn default_adapt() -> f64 {
    0.05
}

fn default_drift() -> bool {
    true
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 1e-3,
            kappa: 1.0,
            scheme: Scheme::default(),
            bridge_exit: false,
            max_dt: None,
            adapt: default_adapt(),
            drift: true,
        }
    }
}

impl StepConfig {
    pub fn with_dt(dt: f64) -> Self {
        StepConfig { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidParams(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if let Some(m) = self.max_dt {
            if !(m.is_finite() && m >= self.dt) {
                return Err(Error::InvalidParams(format!("max_dt must be >= dt, got {m}")));
            }
        }
        if !(self.adapt.is_finite() && self.adapt > 0.0) {
            return Err(Error::InvalidParams(format!("adapt must be > 0, got {}", self.adapt)));
        }
        Ok(())
    }

    /// Adaptive stepping between `dt` and `max_dt`.
    pub fn adaptive(dt: f64, max_dt: f64) -> Self {
        StepConfig { dt, max_dt: Some(max_dt), ..Self::default() }
    }

    /// Step size at signed radial position `y`.
    #[inline]
    pub fn step_size(&self, y: f64, epsilon: f64) -> f64 {
        match self.max_dt {
            None => self.dt,
            Some(m) => {
                let r = y.abs() + epsilon;
                (self.adapt * r * r).clamp(self.dt, m)
            }
        }
    }

    /// Local-time window `delta = kappa * sqrt(dt)`.
    pub fn window(&self, dt: f64) -> f64 {
        self.kappa * dt.sqrt()
    }
}

/// Number of steps and the step size that exactly covers `horizon`.
pub fn step_plan(horizon: f64, dt: f64) -> (usize, f64) {
    if horizon <= 0.0 {
        return (0, dt);
    }
    let n = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, horizon / n as f64)
}

/// Signed radial state with its two local-time estimators at 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RadialState {
    pub y: f64,
    /// Symmetric estimator of the semimartingale local time `\hat L^0`.
    pub lhat: f64,
    /// One-sided estimator of the right local time `L^0`.
    pub l_right: f64,
}

impl RadialState {
    pub fn new(y: f64) -> Self {
        RadialState { y, lhat: 0.0, l_right: 0.0 }
    }
}

/// Outcome of one radial step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: RadialState,
    /// Whether the step visited 0.
    pub hit_zero: bool,
}

/// One step of the signed radial process over `dt`.
pub fn radial_step(
    state: RadialState,
    dt: f64,
    cfg: &StepConfig,
    params: &ModelParams,
    skew: &SkewParams,
    rng: &mut RngStream,
) -> StepOutcome {
    let y = state.y;
    let delta = cfg.window(dt);
    let mut next = state;
    if y.abs() < delta {
        next.lhat += dt / (2.0 * delta);
        if y >= 0.0 {
            next.l_right += dt / delta;
        }
    }
    let (y_new, hit_zero) = match cfg.scheme {
        Scheme::StrangExactSkew if !cfg.drift => {
            let out = skew_step_exact(y, dt, skew, rng);
            (out.y, out.hit_zero)
        }
        Scheme::StrangExactSkew => {
            let y1 = drift_flow(y, 0.5 * dt, params);
            let out = skew_step_exact(y1, dt, skew, rng);
            (drift_flow(out.y, 0.5 * dt, params), out.hit_zero)
        }
        Scheme::EulerFlip => {
            let b = if cfg.drift { radial_drift(y, params) } else { 0.0 };
            let proposal = y + b * dt + dt.sqrt() * rng.normal();
            let crossed = y == 0.0 || (y > 0.0) != (proposal > 0.0);
            if crossed {
                let m = proposal.abs();
                let plane = rng.uniform() < skew.plane_entry_probability();
                (if plane { m } else { -m }, true)
            } else {
                (proposal, false)
            }
        }
    };
    next.y = y_new;
    StepOutcome { state: next, hit_zero }
}

/// Signed radial process simulator.
#[derive(Clone, Copy, Debug)]
pub struct RadialSimulator {
    params: ModelParams,
    skew: SkewParams,
    cfg: StepConfig,
}

/// Endpoint and first visit to 0 of a radial path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialPath {
    pub end: RadialState,
    /// Midpoint of the first step that visited 0.
    pub first_hit: Option<f64>,
}

impl RadialSimulator {
    pub fn new(params: ModelParams, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(RadialSimulator { params, skew: SkewParams::from_params(&params), cfg })
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

    /// Runs from `y0` for time `t`, stopping at the first visit to 0 if `stop_at_zero`.
    pub fn run(&self, y0: f64, t: f64, stop_at_zero: bool, rng: &mut RngStream) -> RadialPath {
        let mut state = RadialState::new(y0);
        let mut first_hit = if y0 == 0.0 { Some(0.0) } else { None };
        if first_hit.is_some() && stop_at_zero {
            return RadialPath { end: state, first_hit };
        }
        if self.cfg.max_dt.is_none() {
            let (n, h) = step_plan(t, self.cfg.dt);
            for k in 0..n {
                let out = radial_step(state, h, &self.cfg, &self.params, &self.skew, rng);
                state = out.state;
                if out.hit_zero && first_hit.is_none() {
                    first_hit = Some((k as f64 + 0.5) * h);
                    if stop_at_zero {
                        break;
                    }
                }
            }
            return RadialPath { end: state, first_hit };
        }
        let eps = self.params.epsilon();
        let tol = 1e-12 * t.max(1.0);
        let mut now = 0.0;
        while t - now > tol {
            let mut h = self.cfg.step_size(state.y, eps);
            if now + h >= t - tol {
                h = t - now;
            }
            let out = radial_step(state, h, &self.cfg, &self.params, &self.skew, rng);
            state = out.state;
            if out.hit_zero && first_hit.is_none() {
                first_hit = Some(now + 0.5 * h);
                if stop_at_zero {
                    break;
                }
            }
            now += h;
        }
        RadialPath { end: state, first_hit }
    }
}

/// Ratio of summed one-sided to summed symmetric local times.
pub fn local_time_ratio(states: &[RadialState]) -> Result<f64> {
    let l: f64 = states.iter().map(|s| s.l_right).sum();
    let lhat: f64 = states.iter().map(|s| s.lhat).sum();
    if lhat <= 0.0 {
        return Err(Error::InsufficientData("no time spent near 0".into()));
    }
    Ok(l / lhat)
}

/// Richardson extrapolation for an error of order `sqrt(dt)`.
///
/// `coarse` is the estimate at step `h`, `fine` at `h / 2`.
pub fn richardson_sqrt(coarse: f64, fine: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    (s * fine - coarse) / (s - 1.0)
}

/// Limit of the local-time ratio: `1 + beta`.
pub fn local_time_ratio_limit(params: &ModelParams) -> f64 {
    1.0 + SkewParams::from_params(params).beta()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{run_paths, RunningStat};

    fn phi(x: f64, t: f64) -> f64 {
        (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
    }

    /// Transition density of skew Brownian motion with parameter `beta`.
    fn skew_density(x: f64, y: f64, t: f64, beta: f64) -> f64 {
        match (x >= 0.0, y > 0.0) {
            (true, true) => phi(y - x, t) + beta * phi(y + x, t),
            (true, false) => (1.0 - beta) * phi(y - x, t),
            (false, false) => phi(y - x, t) - beta * phi(x.abs() + y.abs(), t),
            (false, true) => (1.0 + beta) * phi(y - x, t),
        }
    }

    /// Exact distribution of a lattice walk with a biased move at the origin.
    fn lattice_law(x0: i64, steps: usize, beta: f64) -> (i64, Vec<f64>) {
        let width = steps as i64 + x0.abs() + 2;
        let size = (2 * width + 1) as usize;
        let mut p = vec![0.0; size];
        p[(x0 + width) as usize] = 1.0;
        let up = 0.5 * (1.0 + beta);
        for _ in 0..steps {
            let mut q = vec![0.0; size];
            for (i, &mass) in p.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let (r, l) = if i as i64 == width { (up, 1.0 - up) } else { (0.5, 0.5) };
                q[i + 1] += r * mass;
                q[i - 1] += l * mass;
            }
            p = q;
        }
        (width, p)
    }

    #[test]
    fn closed_form_density_matches_lattice_walk() {
        let beta = 0.4;
        let n = 10_000usize;
        let x0 = 20i64;
        let scale = (n as f64).sqrt();
        let (width, p) = lattice_law(x0, n, beta);
        let x = x0 as f64 / scale;
        for target in [-1.2, -0.3, 0.25, 0.8, 1.7] {
            let k = (target * scale).round() as i64;
            let k = if (k + x0 + n as i64) % 2 == 0 { k } else { k + 1 };
            let mass = p[(k + width) as usize];
            let walk = mass * scale / 2.0;
            let exact = skew_density(x, k as f64 / scale, 1.0, beta);
            assert!((walk - exact).abs() < 0.03 * exact.max(0.05), "y={target}: {walk} vs {exact}");
        }
    }

    #[test]
    fn skew_density_integrates_to_one() {
        for x in [-0.7, 0.0, 0.4] {
            let h = 1e-3;
            let total: f64 = (-8000..8000).map(|i| skew_density(x, (i as f64 + 0.5) * h, 1.0, -0.3) * h).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exact_step_matches_closed_form_cdf() {
        let beta = -0.35;
        let skew = SkewParams::new(beta).unwrap();
        let x0 = 0.3;
        let t = 0.5;
        let edges = [-2.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0];
        let n = 400_000u64;
        let counts = run_paths(
            n,
            5,
            || vec![0u64; edges.len()],
            |acc, rng, _| {
                let y = skew_step_exact(x0, t, &skew, rng).y;
                for (c, e) in acc.iter_mut().zip(edges) {
                    if y <= e {
                        *c += 1;
                    }
                }
            },
        );
        for (c, e) in counts.iter().zip(edges) {
            let h = 1e-3;
            let lo = -10.0;
            let m = ((e - lo) / h) as usize;
            let cdf: f64 = (0..m).map(|i| skew_density(x0, lo + (i as f64 + 0.5) * h, t, beta) * h).sum();
            let emp = *c as f64 / n as f64;
            let se = (cdf * (1.0 - cdf) / n as f64).sqrt();
            assert!((emp - cdf).abs() < 4.0 * se + 1e-4, "edge {e}: {emp} vs {cdf}");
        }
    }

    #[test]
    fn flip_from_three_root_dt() {
        let dt: f64 = 1e-4;
        let skew = SkewParams::new(0.3).unwrap();
        let mut rng = RngStream::new(3, 0);
        let n = 1_000_000;
        let (mut hits, mut negative) = (0u32, 0u32);
        for _ in 0..n {
            let out = skew_step_exact(3.0 * dt.sqrt(), dt, &skew, &mut rng);
            hits += out.hit_zero as u32;
            negative += (out.y < 0.0) as u32;
        }
        let hit = statrs::function::erf::erfc(3.0 / 2f64.sqrt());
        let neg = 0.35 * hit;
        let se = |q: f64| (q * (1.0 - q) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - hit).abs() < 4.0 * se(hit), "{hits}");
        assert!((negative as f64 / n as f64 - neg).abs() < 4.0 * se(neg), "{negative}");
    }

    #[test]
    fn entry_probabilities() {
        let m = ModelParams::new(0.5, 1.0).unwrap();
        let s = SkewParams::from_params(&m);
        let a = 2.0 * PI * 0.5;
        assert!((s.pole_entry_probability() - 1.0 / (a + 1.0)).abs() < 1e-15);
        assert!((s.plane_entry_probability() - a / (a + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn drift_flow_solves_ode() {
        let m = ModelParams::new(0.3, 1.0).unwrap();
        let y0 = 0.7;
        let h: f64 = 0.2;
        let exact = ((y0 + 0.3) * (y0 + 0.3) + h).sqrt() - 0.3;
        assert!((drift_flow(y0, h, &m) - exact).abs() < 1e-14);
        let mut y = y0;
        let k = 200_000;
        for _ in 0..k {
            y += radial_drift(y, &m) * h / k as f64;
        }
        assert!((y - exact).abs() < 1e-6);
        assert_eq!(drift_flow(-0.4, h, &m), -0.4);
        assert!(drift_flow(1e-12, 1e-12, &m) > 0.0);
    }

    #[test]
    fn reflected_modulus_without_drift() {
        // Zero skew and no drift: |Y| is reflected Brownian motion.
        let skew = SkewParams::new(0.0).unwrap();
        let stat = run_paths(100_000, 9, RunningStat::new, |acc, rng, _| {
            acc.push(skew_step_exact(0.0, 1.0, &skew, rng).y.abs());
        });
        let want = (2.0 / PI).sqrt();
        assert!((stat.mean() - want).abs() < 4.0 * stat.stderr());
    }

    #[test]
    fn step_plan_covers_horizon() {
        let (n, h) = step_plan(1.0, 0.3);
        assert_eq!(n, 4);
        assert!((h * n as f64 - 1.0).abs() < 1e-15);
        assert_eq!(step_plan(1.0, 0.25).0, 4);
    }

    #[test]
    fn richardson_removes_sqrt_bias() {
        let f = |h: f64| 2.0 + 0.7 * h.sqrt();
        assert!((richardson_sqrt(f(0.01), f(0.005)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn first_hit_from_zero_is_immediate() {
        let m = ModelParams::new(0.5, 1.0).unwrap();
        let sim = RadialSimulator::new(m, StepConfig::with_dt(0.01)).unwrap();
        let mut rng = RngStream::new(1, 1);
        assert_eq!(sim.run(0.0, 1.0, true, &mut rng).first_hit, Some(0.0));
    }
}
