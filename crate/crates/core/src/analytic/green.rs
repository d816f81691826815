use crate::error::{Error, Result};
use crate::geometry::{planar_distance, EPoint, ModelParams};
use crate::process::domain::DomainSpec;

/// Green function shape of the process killed on leaving `domain`, unit constants.
///
/// Pole side (including `a*`) against pole side gives `d(x) ^ d(y)`, two planar
/// points give `d(x) d(y) + ln(1 + d2(x) d2(y) / |x-y|^2)`, and mixed pairs give
/// `d(x) d(y)`, where `d` is the distance to the boundary and `d2` the distance to
/// the boundary of the planar part.
pub fn green_shape(domain: &DomainSpec, x: &EPoint, y: &EPoint, params: &ModelParams) -> Result<f64> {
    domain.validate(params)?;
    if !domain.contains_star() {
        return Err(Error::InvalidDomain("Green shape needs a domain containing a*".into()));
    }
    for p in [x, y] {
        p.validate(params)?;
        if !domain.contains(p, params) {
            return Err(Error::InvalidPoint(format!("{p} is outside the domain")));
        }
    }
    if x == y {
        return Err(Error::InvalidPoint("Green shape is singular on the diagonal".into()));
    }
    let dx = domain.boundary_distance(x, params);
    let dy = domain.boundary_distance(y, params);
    Ok(match (*x, *y) {
        (EPoint::Plane { r: r1, theta: t1 }, EPoint::Plane { r: r2, theta: t2 }) => {
            let e = planar_distance(r1, t1, r2, t2);
            let d2x = domain.planar_boundary_distance(x, params);
            let d2y = domain.planar_boundary_distance(y, params);
            dx * dy + (d2x * d2y / (e * e)).ln_1p()
        }
        (EPoint::Plane { .. }, _) | (_, EPoint::Plane { .. }) => dx * dy,
        _ => dx.min(dy),
    })
}
