//! The `bounds` subcommand.

use bmvd_core::analytic::{evaluate_bounds, evaluate_variant_bounds, BoundsReport, Theorem};
use bmvd_core::config::Geometry;
use bmvd_core::{EPoint, ModelParams};
use clap::{Args, ValueEnum};
use serde_json::json;

use crate::artifacts::SCHEMA_VERSION;
use crate::run::load_config;
use crate::{Failure, GlobalArgs};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TheoremArg {
    Auto,
    SmallTime,
    LargeTime,
    OnDiagonal,
    Green,
}

/// Arguments of `bounds`.
#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Time.
    #[arg(long)]
    t: f64,
    /// First point: `star`, `pole:<s>` or `plane:<r>:<theta>` (variant geometries: `cart:<x>:<y>`, `star:<j>`, `pole:<j>:<s>`, `arch:<u>`).
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Second point, same encoding as `--x`.
    #[arg(long, allow_hyphen_values = true)]
    y: String,
    /// Hole radius; ignored with `--config`.
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    /// Pole weight; ignored with `--config`.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Family of bounds.
    #[arg(long, value_enum, default_value_t = TheoremArg::Auto)]
    theorem: TheoremArg,
    /// Radius of the ball for `--theorem green`.
    #[arg(long)]
    radius: Option<f64>,
    /// Small/large time threshold; defaults to the configuration value or 2.
    #[arg(long)]
    time_threshold: Option<f64>,
}

fn render(r: &BoundsReport) -> String {
    format!(
        "regime: {}\nshape: {}\nt: {}\nrho: {}\neuclid: {}\n|x|: {}\n|y|: {}\nlower: {:.9e}\nupper: {:.9e}\n",
        r.regime,
        r.formula,
        r.t,
        r.geometry.rho,
        r.geometry.euclid,
        r.geometry.x_norm,
        r.geometry.y_norm,
        r.lower,
        r.upper
    )
}

pub fn run(args: &BoundsArgs, global: &GlobalArgs) -> Result<(), Failure> {
    let theorem = match args.theorem {
        TheoremArg::Auto => Theorem::Auto,
        TheoremArg::SmallTime => Theorem::SmallTime,
        TheoremArg::LargeTime => Theorem::LargeTime,
        TheoremArg::OnDiagonal => Theorem::OnDiagonal,
        TheoremArg::Green => Theorem::Green {
            radius: args.radius.ok_or_else(|| Failure::Usage("--theorem green needs --radius".into()))?,
        },
    };
    let config = global.config.as_deref().map(load_config).transpose()?;
    let threshold = args.time_threshold.or(config.as_ref().map(|c| c.time_threshold)).unwrap_or(2.0);
    let geometry = match &config {
        Some(c) => c.geometry()?,
        None => Geometry::Single(ModelParams::new(args.epsilon, args.p)?),
    };
    let report = match &geometry {
        Geometry::Single(m) => {
            let x = EPoint::parse(&args.x, m)?;
            let y = EPoint::parse(&args.y, m)?;
            evaluate_bounds(args.t, &x, &y, m, theorem, threshold)?
        }
        Geometry::Variant(space) => {
            if !matches!(theorem, Theorem::Auto | Theorem::SmallTime) {
                return Err(Failure::Usage("variant geometries only have small-time bounds".into()));
            }
            let x = space.parse_point(&args.x)?;
            let y = space.parse_point(&args.y)?;
            evaluate_variant_bounds(args.t, &x, &y, space, threshold)?
        }
    };
    if global.json {
        let v = json!({ "schema_version": SCHEMA_VERSION, "bounds": report });
        println!("{}", serde_json::to_string_pretty(&v).map_err(|e| Failure::Usage(e.to_string()))?);
    } else {
        print!("{}", render(&report));
    }
    Ok(())
}
