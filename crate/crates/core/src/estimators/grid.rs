use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EPoint, ModelParams};
use crate::montecarlo::run_paths;
use crate::process::Simulator;

/// Minimum number of paths for a density estimate.
pub const MIN_PATHS: u64 = 1000;

/// Bin layout: a star cell, geometric pole bins, and geometric annuli split into sectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Radius of the star cell `B(a*, star_radius)`.
    pub star_radius: f64,
    pub pole_max: f64,
    /// Largest `|x|_rho` covered on the plane.
    pub plane_max: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_sectors")]
    pub sectors: usize,
}

fn default_ratio() -> f64 {
    1.15
}

fn default_sectors() -> usize {
    12
}

impl GridSpec {
    pub fn new(star_radius: f64, pole_max: f64, plane_max: f64) -> Self {
        GridSpec { star_radius, pole_max, plane_max, ratio: default_ratio(), sectors: default_sectors() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: String| Err(Error::InvalidConfig { key: k.into(), message: m });
        if !(self.star_radius.is_finite() && self.star_radius > 0.0) {
            return bad("star_radius", "must be > 0".into());
        }
        if !(self.pole_max > self.star_radius) {
            return bad("pole_max", "must exceed star_radius".into());
        }
        if !(self.plane_max > self.star_radius) {
            return bad("plane_max", "must exceed star_radius".into());
        }
        if !(self.ratio.is_finite() && self.ratio > 1.0) {
            return bad("ratio", "must be > 1".into());
        }
        if self.sectors == 0 {
            return bad("sectors", "must be >= 1".into());
        }
        Ok(())
    }

    fn edges(&self, max: f64) -> Vec<f64> {
        let mut e = vec![self.star_radius];
        while *e.last().unwrap() * self.ratio < max * (1.0 - 1e-12) {
            let next = e.last().unwrap() * self.ratio;
            e.push(next);
        }
        e.push(max);
        e
    }

    /// Bins in a fixed order: star, pole bins outward, annuli outward with sectors inner.
    pub fn bins(&self) -> Vec<GridBin> {
        let mut out = vec![GridBin::Star { radius: self.star_radius }];
        for w in self.edges(self.pole_max).windows(2) {
            out.push(GridBin::Pole { lo: w[0], hi: w[1] });
        }
        for w in self.edges(self.plane_max).windows(2) {
            for sector in 0..self.sectors {
                out.push(GridBin::Plane { lo: w[0], hi: w[1], sector, sectors: self.sectors });
            }
        }
        out
    }
}

/// One cell of a density grid. Planar bounds are in `|x|_rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridBin {
    Star { radius: f64 },
    Pole { lo: f64, hi: f64 },
    Plane { lo: f64, hi: f64, sector: usize, sectors: usize },
}

impl GridBin {
    /// `m_p` measure of the bin.
    pub fn measure(&self, params: &ModelParams) -> f64 {
        let eps = params.epsilon();
        match *self {
            GridBin::Star { radius } => params.p() * radius + PI * ((eps + radius).powi(2) - eps * eps),
            GridBin::Pole { lo, hi } => params.p() * (hi - lo),
            GridBin::Plane { lo, hi, sectors, .. } => PI * ((eps + hi).powi(2) - (eps + lo).powi(2)) / sectors as f64,
        }
    }

    /// Representative point: the bin midpoint.
    pub fn center(&self, params: &ModelParams) -> EPoint {
        match *self {
            GridBin::Star { .. } => EPoint::Star,
            GridBin::Pole { lo, hi } => EPoint::Pole(0.5 * (lo + hi)),
            GridBin::Plane { lo, hi, sector, sectors } => EPoint::Plane {
                r: params.epsilon() + 0.5 * (lo + hi),
                theta: (sector as f64 + 0.5) * TAU / sectors as f64,
            },
        }
    }

    /// Whether `x` lies in the bin.
    pub fn contains(&self, x: &EPoint, params: &ModelParams) -> bool {
        let d = x.rho_norm(params);
        match (*self, *x) {
            (GridBin::Star { radius }, _) => d < radius,
            (GridBin::Pole { lo, hi }, EPoint::Pole(s)) => lo <= s && s < hi,
            (GridBin::Plane { lo, hi, sector, sectors }, EPoint::Plane { theta, .. }) => {
                let s = ((theta.rem_euclid(TAU) / TAU * sectors as f64) as usize).min(sectors - 1);
                lo <= d && d < hi && s == sector
            }
            _ => false,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            GridBin::Star { .. } => "star",
            GridBin::Pole { .. } => "pole",
            GridBin::Plane { .. } => "plane",
        }
    }
}

/// Index lookup for the bins of a [`GridSpec`].
#[derive(Clone, Debug)]
pub struct GridIndex {
    spec: GridSpec,
    pole_edges: Vec<f64>,
    plane_edges: Vec<f64>,
}

impl GridIndex {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        Ok(GridIndex { spec: *spec, pole_edges: spec.edges(spec.pole_max), plane_edges: spec.edges(spec.plane_max) })
    }

    pub fn len(&self) -> usize {
        1 + (self.pole_edges.len() - 1) + (self.plane_edges.len() - 1) * self.spec.sectors
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn shell(edges: &[f64], d: f64) -> Option<usize> {
        if d >= *edges.last().unwrap() {
            return None;
        }
        Some(edges.partition_point(|&e| e <= d) - 1)
    }

    /// Bin containing `x`, or `None` in the tail.
    pub fn locate(&self, x: &EPoint, params: &ModelParams) -> Option<usize> {
        let d = x.rho_norm(params);
        if d < self.spec.star_radius {
            return Some(0);
        }
        match *x {
            EPoint::Star => Some(0),
            EPoint::Pole(_) => Self::shell(&self.pole_edges, d).map(|k| 1 + k),
            EPoint::Plane { theta, .. } => {
                let k = Self::shell(&self.plane_edges, d)?;
                let n = self.spec.sectors;
                let s = ((theta.rem_euclid(TAU) / TAU * n as f64) as usize).min(n - 1);
                Some(1 + (self.pole_edges.len() - 1) + k * n + s)
            }
        }
    }
}

/// Estimated density on one bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub bin: GridBin,
    pub measure: f64,
    pub count: u64,
    pub density: f64,
    pub stderr: f64,
    /// No path ended in this bin.
    pub empty: bool,
}

/// Endpoint histogram normalized by `m_p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub source: EPoint,
    pub t: f64,
    pub n_paths: u64,
    pub cells: Vec<GridCell>,
    /// Paths ending outside every bin.
    pub tail: u64,
}

/// CSV header of [`DensityGrid::to_csv`].
pub const DENSITY_CSV_HEADER: &str = "kind,lo,hi,sector,x,y,z,mp_weight,count,density,stderr,empty";

impl DensityGrid {
    /// Builds a grid from raw counts (bins in [`GridSpec::bins`] order).
    pub fn from_counts(
        spec: &GridSpec,
        params: &ModelParams,
        source: EPoint,
        t: f64,
        n_paths: u64,
        counts: &[u64],
        tail: u64,
    ) -> Result<Self> {
        let bins = spec.bins();
        if bins.len() != counts.len() {
            return Err(Error::InvalidParams("count vector does not match the grid".into()));
        }
        let n = n_paths as f64;
        let cells = bins
            .into_iter()
            .zip(counts)
            .map(|(bin, &count)| {
                let measure = bin.measure(params);
                let f = count as f64 / n;
                GridCell {
                    bin,
                    measure,
                    count,
                    density: f / measure,
                    stderr: (f * (1.0 - f) / n).sqrt() / measure,
                    empty: count == 0,
                }
            })
            .collect();
        Ok(DensityGrid { source, t, n_paths, cells, tail })
    }

    /// Total estimated probability inside the grid.
    pub fn mass(&self) -> f64 {
        self.cells.iter().map(|c| c.count).sum::<u64>() as f64 / self.n_paths as f64
    }

    pub fn tail_fraction(&self) -> f64 {
        self.tail as f64 / self.n_paths as f64
    }

    pub fn empty_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.empty).count()
    }

    /// One row per bin: kind, bounds, sector, representative point, weight, count, density, stderr, empty flag.
    pub fn to_csv(&self, params: &ModelParams) -> String {
        let mut s = String::from(DENSITY_CSV_HEADER);
        s.push('\n');
        for c in &self.cells {
            let (lo, hi, sector) = match c.bin {
                GridBin::Star { radius } => (0.0, radius, 0),
                GridBin::Pole { lo, hi } => (lo, hi, 0),
                GridBin::Plane { lo, hi, sector, .. } => (lo, hi, sector),
            };
            let [x, y, z] = c.bin.center(params).to_cartesian();
            let _ = writeln!(
                s,
                "{},{lo:.9e},{hi:.9e},{sector},{x:.9e},{y:.9e},{z:.9e},{:.9e},{},{:.9e},{:.9e},{}",
                c.bin.label(),
                c.measure,
                c.count,
                c.density,
                c.stderr,
                u8::from(c.empty)
            );
        }
        s
    }
}

/// Endpoint density of `N` paths from `x0` at time `t`.
pub fn estimate_density(
    sim: &Simulator,
    x0: &EPoint,
    t: f64,
    spec: &GridSpec,
    n_paths: u64,
    seed: u64,
) -> Result<DensityGrid> {
    if n_paths < MIN_PATHS {
        return Err(Error::InsufficientData(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::OutOfRange(format!("time must be > 0, got {t}")));
    }
    let params = *sim.params();
    x0.validate(&params)?;
    let index = GridIndex::new(spec)?;
    let len = index.len();
    let counts: Vec<u64> = run_paths(
        n_paths,
        seed,
        || vec![0u64; len + 1],
        |acc, rng, _| {
            let end = sim.endpoint(x0, t, rng).point(&params);
            match index.locate(&end, &params) {
                Some(k) => acc[k] += 1,
                None => acc[len] += 1,
            }
        },
    );
    DensityGrid::from_counts(spec, &params, *x0, t, n_paths, &counts[..len], counts[len])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::StepConfig;

    fn params() -> ModelParams {
        ModelParams::new(0.25, 1.0).unwrap()
    }

    #[test]
    fn bins_partition_the_window() {
        let m = params();
        let spec = GridSpec::new(0.05, 2.0, 3.0);
        let bins = spec.bins();
        let index = GridIndex::new(&spec).unwrap();
        assert_eq!(index.len(), bins.len());
        let pole: f64 = bins.iter().filter(|b| matches!(b, GridBin::Pole { .. })).map(|b| b.measure(&m)).sum();
        assert!((pole - m.p() * (2.0 - 0.05)).abs() < 1e-12);
        let plane: f64 = bins.iter().filter(|b| matches!(b, GridBin::Plane { .. })).map(|b| b.measure(&m)).sum();
        assert!((plane - PI * (3.25f64.powi(2) - 0.3f64.powi(2))).abs() < 1e-10);
        for (k, b) in bins.iter().enumerate() {
            assert_eq!(index.locate(&b.center(&m), &m), Some(k));
        }
        assert_eq!(index.locate(&EPoint::Pole(2.5), &m), None);
        assert_eq!(index.locate(&EPoint::Plane { r: 0.26, theta: 1.0 }, &m), Some(0));
    }

    #[test]
    fn far_source_matches_planar_heat_kernel() {
        let m = ModelParams::new(0.1, 1.0).unwrap();
        let sim = Simulator::new(m, StepConfig::adaptive(1e-3, 0.05)).unwrap();
        // Far from the hole at small t the kernel is the planar Gaussian.
        let x0 = EPoint::Plane { r: 3.0, theta: 0.0 };
        let t = 0.1;
        let spec = GridSpec { star_radius: 0.05, pole_max: 1.0, plane_max: 5.0, ratio: 1.05, sectors: 90 };
        let grid = estimate_density(&sim, &x0, t, &spec, 100_000, 11).unwrap();
        let mut checked = 0;
        for c in &grid.cells {
            if let GridBin::Plane { lo, hi, sector, sectors } = c.bin {
                // Average the Gaussian over the bin with a fine midpoint rule.
                let n = 24;
                let eps = m.epsilon();
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let r = eps + lo + (i as f64 + 0.5) / n as f64 * (hi - lo);
                        let th = (sector as f64 + (j as f64 + 0.5) / n as f64) * TAU / sectors as f64;
                        let d2 = (r * th.cos() - 3.0).powi(2) + (r * th.sin()).powi(2);
                        acc += r * (-d2 / (2.0 * t)).exp() / (2.0 * PI * t);
                    }
                }
                let r_mean = eps + 0.5 * (lo + hi);
                let want = acc / (n * n) as f64 / r_mean;
                if want > 0.01 && c.count > 400 {
                    let rel = (c.density - want).abs() / want;
                    assert!(rel < 0.05 + 3.0 * c.stderr / want, "{:?}: {} vs {want}", c.bin, c.density);
                    checked += 1;
                }
            }
        }
        assert!(checked >= 10, "{checked}");
    }

    #[test]
    fn star_source_conserves_mass() {
        let m = params();
        let sim = Simulator::new(m, StepConfig::adaptive(1e-3, 0.05)).unwrap();
        let spec = GridSpec::new(0.05, 6.0, 6.0);
        let g = estimate_density(&sim, &EPoint::Star, 1.0, &spec, 20_000, 3).unwrap();
        assert!((g.mass() + g.tail_fraction() - 1.0).abs() < 1e-12);
        assert!(g.tail_fraction() < 0.01);
        assert!(g.cells.iter().all(|c| c.density >= 0.0));
    }

    #[test]
    fn identical_seed_gives_identical_grid() {
        let m = params();
        let sim = Simulator::new(m, StepConfig::adaptive(1e-3, 0.05)).unwrap();
        let spec = GridSpec::new(0.05, 2.0, 2.0);
        let a = estimate_density(&sim, &EPoint::Pole(0.5), 0.3, &spec, 2000, 5).unwrap();
        let b = estimate_density(&sim, &EPoint::Pole(0.5), 0.3, &spec, 2000, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(&m), b.to_csv(&m));
        assert!(estimate_density(&sim, &EPoint::Pole(0.5), 0.3, &spec, 10, 5).is_err());
    }
}
