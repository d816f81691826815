use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EPoint, ModelParams};

/// Bounded domains for killed simulations and Green functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// Geodesic ball of the given radius around `a*`.
    Ball { radius: f64 },
    /// Pole segment `[0, pole_length)` glued to a Euclidean disk containing the hole.
    Flagged { pole_length: f64, disk_center: [f64; 2], disk_radius: f64 },
    /// Open pole segment `(0, length)`; `a*` is part of the boundary.
    PoleSegment { length: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDomain(format!("{name} must be > 0, got {v}")))
    }
}

impl DomainSpec {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        match *self {
            DomainSpec::Ball { radius } => positive("radius", radius),
            DomainSpec::PoleSegment { length } => positive("length", length),
            DomainSpec::Flagged { pole_length, disk_center, disk_radius } => {
                positive("pole_length", pole_length)?;
                positive("disk_radius", disk_radius)?;
                let c = disk_center[0].hypot(disk_center[1]);
                if !c.is_finite() || c + params.epsilon() >= disk_radius {
                    return Err(Error::InvalidDomain("disk must strictly contain the closed hole".into()));
                }
                Ok(())
            }
        }
    }

    pub fn contains_star(&self) -> bool {
        !matches!(self, DomainSpec::PoleSegment { .. })
    }

    pub fn contains(&self, x: &EPoint, params: &ModelParams) -> bool {
        match (*self, *x) {
            (DomainSpec::Ball { radius }, _) => x.rho_norm(params) < radius,
            (DomainSpec::PoleSegment { length }, EPoint::Pole(s)) => s < length,
            (DomainSpec::PoleSegment { .. }, _) => false,
            (DomainSpec::Flagged { .. }, EPoint::Star) => true,
            (DomainSpec::Flagged { pole_length, .. }, EPoint::Pole(s)) => s < pole_length,
            (DomainSpec::Flagged { disk_center, disk_radius, .. }, EPoint::Plane { .. }) => {
                let [px, py, _] = x.to_cartesian();
                (px - disk_center[0]).hypot(py - disk_center[1]) < disk_radius
            }
        }
    }

    /// Geodesic distance from `a*` to the boundary.
    fn star_distance(&self, params: &ModelParams) -> f64 {
        match *self {
            DomainSpec::Ball { radius } => radius,
            DomainSpec::PoleSegment { .. } => 0.0,
            DomainSpec::Flagged { pole_length, disk_center, disk_radius } => {
                pole_length.min(disk_radius - disk_center[0].hypot(disk_center[1]) - params.epsilon())
            }
        }
    }

    /// Geodesic distance to the boundary, 0 outside the domain.
    pub fn boundary_distance(&self, x: &EPoint, params: &ModelParams) -> f64 {
        if !self.contains(x, params) {
            return 0.0;
        }
        match (*self, *x) {
            (DomainSpec::Ball { radius }, _) => radius - x.rho_norm(params),
            (DomainSpec::PoleSegment { length }, EPoint::Pole(s)) => s.min(length - s),
            (DomainSpec::PoleSegment { .. }, _) => 0.0,
            (DomainSpec::Flagged { .. }, EPoint::Star) => self.star_distance(params),
            (DomainSpec::Flagged { pole_length, .. }, EPoint::Pole(s)) => {
                (pole_length - s).min(s + self.star_distance(params))
            }
            (DomainSpec::Flagged { disk_center, disk_radius, .. }, EPoint::Plane { .. }) => {
                let [px, py, _] = x.to_cartesian();
                let direct = disk_radius - (px - disk_center[0]).hypot(py - disk_center[1]);
                direct.min(x.rho_norm(params) + self.star_distance(params))
            }
        }
    }

    /// Distance to the part of the boundary away from `a*`, used by the bridge test.
    pub fn outer_distance(&self, x: &EPoint, params: &ModelParams) -> f64 {
        match (*self, *x) {
            (DomainSpec::PoleSegment { length }, EPoint::Pole(s)) => (length - s).max(0.0),
            _ => self.boundary_distance(x, params),
        }
    }

    /// Distance to the boundary for planar points, capped by the distance to `a*`.
    pub fn planar_boundary_distance(&self, x: &EPoint, params: &ModelParams) -> f64 {
        self.boundary_distance(x, params).min(x.rho_norm(params))
    }

    /// Upper end of the pole inside the domain.
    pub fn pole_end(&self) -> f64 {
        match *self {
            DomainSpec::Ball { radius } => radius,
            DomainSpec::PoleSegment { length } => length,
            DomainSpec::Flagged { pole_length, .. } => pole_length,
        }
    }
}
