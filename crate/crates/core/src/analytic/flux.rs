use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EPoint, ModelParams};

/// Number of trapezoid nodes on the hole boundary.
pub const FLUX_NODES: usize = 128;

/// Term `coeff * d^power`, with `d` the distance to the hole boundary or the pole height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub power: f64,
}

/// Term `coeff * (|x| - epsilon)^power * cos(k theta)` on the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngularTerm {
    pub coeff: f64,
    pub power: f64,
    pub k: u32,
}

/// Test function on the plane-with-pole, continuous at `a*`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    /// Value at `a*`.
    #[serde(default)]
    pub constant: f64,
    /// Radial terms in `|x| - epsilon`.
    #[serde(default)]
    pub plane: Vec<Monomial>,
    #[serde(default)]
    pub angular: Vec<AngularTerm>,
    /// Terms in the pole height.
    #[serde(default)]
    pub pole: Vec<Monomial>,
}

/// Value of the flux functional at `a*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxValue {
    pub value: f64,
}

fn check_power(q: f64, what: &str) -> Result<()> {
    if !q.is_finite() || q < 1.0 || (q > 1.0 && q < 2.0) {
        return Err(Error::NonDifferentiable(format!("{what} power must be 1 or >= 2, got {q}")));
    }
    Ok(())
}

/// `(value, first, second)` derivatives of `d^q` at `d >= 0`.
fn power_derivs(d: f64, q: f64) -> (f64, f64, f64) {
    if q == 1.0 {
        return (d, 1.0, 0.0);
    }
    if q == 2.0 {
        return (d * d, 2.0 * d, 2.0);
    }
    (d.powf(q), q * d.powf(q - 1.0), q * (q - 1.0) * d.powf(q - 2.0))
}

impl TestFunction {
    /// `u = c * (|x| - epsilon)` on the plane and `u = slope * s` on the pole.
    pub fn linear(plane_slope: f64, pole_slope: f64) -> Self {
        TestFunction {
            constant: 0.0,
            plane: vec![Monomial { coeff: plane_slope, power: 1.0 }],
            angular: Vec::new(),
            pole: vec![Monomial { coeff: pole_slope, power: 1.0 }],
        }
    }

    /// Multiplies every coefficient by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        TestFunction {
            constant: lambda * self.constant,
            plane: self.plane.iter().map(|m| Monomial { coeff: lambda * m.coeff, ..*m }).collect(),
            angular: self.angular.iter().map(|a| AngularTerm { coeff: lambda * a.coeff, ..*a }).collect(),
            pole: self.pole.iter().map(|m| Monomial { coeff: lambda * m.coeff, ..*m }).collect(),
        }
    }

    /// Rejects germs that are not twice differentiable up to `a*` on each sheet.
    pub fn validate(&self) -> Result<()> {
        let coeffs = self
            .plane
            .iter()
            .chain(&self.pole)
            .map(|m| m.coeff)
            .chain(self.angular.iter().map(|a| a.coeff))
            .chain(std::iter::once(self.constant));
        if coeffs.into_iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("test function coefficients must be finite".into()));
        }
        for m in &self.plane {
            check_power(m.power, "plane")?;
        }
        for m in &self.pole {
            check_power(m.power, "pole")?;
        }
        for a in &self.angular {
            check_power(a.power, "angular")?;
        }
        Ok(())
    }

    /// Planar value and its radial derivative at Euclidean radius `r`, angle `theta`.
    fn plane_parts(&self, r: f64, theta: f64, epsilon: f64) -> (f64, f64, f64) {
        let d = (r - epsilon).max(0.0);
        let mut u = self.constant;
        let mut ur = 0.0;
        let mut lap = 0.0;
        for m in &self.plane {
            let (f, f1, f2) = power_derivs(d, m.power);
            u += m.coeff * f;
            ur += m.coeff * f1;
            lap += m.coeff * (f2 + f1 / r);
        }
        for a in &self.angular {
            let (f, f1, f2) = power_derivs(d, a.power);
            let k = a.k as f64;
            let c = (k * theta).cos();
            u += a.coeff * f * c;
            ur += a.coeff * f1 * c;
            lap += a.coeff * c * (f2 + f1 / r - k * k * f / (r * r));
        }
        (u, ur, lap)
    }

    fn pole_parts(&self, s: f64) -> (f64, f64, f64) {
        let mut u = self.constant;
        let mut u1 = 0.0;
        let mut u2 = 0.0;
        for m in &self.pole {
            let (f, f1, f2) = power_derivs(s, m.power);
            u += m.coeff * f;
            u1 += m.coeff * f1;
            u2 += m.coeff * f2;
        }
        (u, u1, u2)
    }

    pub fn value(&self, x: &EPoint, params: &ModelParams) -> f64 {
        match *x {
            EPoint::Star => self.constant,
            EPoint::Pole(s) => self.pole_parts(s).0,
            EPoint::Plane { r, theta } => self.plane_parts(r, theta, params.epsilon()).0,
        }
    }

    /// `Delta u / 2` away from `a*`; at `a*` the pole-side limit.
    pub fn half_laplacian(&self, x: &EPoint, params: &ModelParams) -> f64 {
        match *x {
            EPoint::Star => 0.5 * self.pole_parts(0.0).2,
            EPoint::Pole(s) => 0.5 * self.pole_parts(s).2,
            EPoint::Plane { r, theta } => 0.5 * self.plane_parts(r, theta, params.epsilon()).2,
        }
    }
}

/// Flux at `a*` with the default number of nodes.
pub fn flux(u: &TestFunction, params: &ModelParams) -> Result<FluxValue> {
    flux_with_nodes(u, params, FLUX_NODES)
}

/// Trapezoid evaluation of the boundary normal-derivative integral minus `p u'(a*)`.
///
/// The normal points into the hole, so it is `-d/dr` in the plane.
pub fn flux_with_nodes(u: &TestFunction, params: &ModelParams, nodes: usize) -> Result<FluxValue> {
    u.validate()?;
    if nodes == 0 {
        return Err(Error::InvalidParams("flux quadrature needs at least one node".into()));
    }
    let eps = params.epsilon();
    let h = TAU / nodes as f64;
    let boundary: f64 = (0..nodes).map(|j| -u.plane_parts(eps, j as f64 * h, eps).1).sum::<f64>() * h * eps;
    let pole_slope = u.pole_parts(0.0).1;
    Ok(FluxValue { value: boundary - params.p() * pole_slope })
}
