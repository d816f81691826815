//! Monte Carlo estimators of densities, Green functions and hitting times.

pub mod envelope;
pub mod generator;
pub mod green;
pub mod grid;
pub mod harnack;
pub mod hitting;
pub mod local_time;
pub mod marginals;
pub mod point;
pub mod small_time;
pub mod variant;

pub use envelope::{fit_band, verify_envelope, BandFit, EnvelopeCell, EnvelopeReport, FitOptions};
pub use generator::{generator_check, generator_residuals, GeneratorResidual};
pub use green::{
    estimate_green, green_shape_fit, linear_fit, pole_linearity, GreenEstimate, GreenRun, GreenShapeFit, GreenTarget,
    LinearFit, PoleLinearity,
};
pub use grid::{estimate_density, DensityGrid, GridBin, GridCell, GridIndex, GridSpec, DENSITY_CSV_HEADER, MIN_PATHS};
pub use harnack::{
    harnack_failure_demo, harnack_row, planar_probes, star_probes, CylinderExtreme, HarnackOptions, HarnackRow,
};
pub use hitting::{
    fit_hitting_constants, fit_uchiyama_c0, hitting_times_junction, hitting_times_star, pole_first_passage_ks,
    HittingSample, MIN_HITTING_PATHS,
};
pub use local_time::{local_time_experiment, LocalTimeReport};
pub use marginals::{
    angle_radius_independence, angle_uniformity, radial_comparison, AngleRadiusIndependence, AngleUniformity,
    RadialComparison,
};
pub use point::{estimate_point_density, sample_endpoints, EndpointSample, PointDensity, MIN_HITS};
pub use small_time::{
    diagonal_spread, on_diagonal_scan, small_time_cells, verify_on_diagonal, verify_small_time, DiagonalPoint,
    SmallTimeReport,
};
pub use variant::{entry_probabilities, line_density, verify_variant_envelope, EntryProbability};
