//! Configured experiments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bmvd_core::analytic::PairGeometry;
use bmvd_core::analytic::{
    classify_variant, green_shape, large_time_envelope, on_diagonal_envelope, small_time_envelope, variant_envelope,
};
use bmvd_core::config::{
    DensityConfig, EnvelopeDesign, EnvelopeVerifyConfig, Experiment, ExperimentConfig, GeneratorConfig, Geometry,
    GreenConfig, HarnackConfig, HittingConfig, Point, SimulateConfig,
};
use bmvd_core::estimators::{
    diagonal_spread, estimate_density, estimate_green, estimate_point_density, generator_check, harnack_failure_demo,
    hitting_times_junction, hitting_times_star, on_diagonal_scan, pole_first_passage_ks, verify_envelope,
    verify_small_time, verify_variant_envelope, EnvelopeCell, EnvelopeReport, GreenTarget, DENSITY_CSV_HEADER,
};
use bmvd_core::geometry::classify_regime;
use bmvd_core::montecarlo::{derive_seed, RngStream};
use bmvd_core::process::variant::VariantSimulator;
use bmvd_core::process::Simulator;
use bmvd_core::radial::RadialSimulator;
use bmvd_core::{EPoint, Error, ModelParams};
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{OutDir, REPORT, SCHEMA_VERSION};
use crate::{Failure, GlobalArgs};

/// Result of one experiment before it is written out.
struct Outcome {
    passed: bool,
    csv: String,
    report: Value,
    summary: String,
}

/// Reads a TOML configuration or the `config` field of a run manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let mut v: Value =
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let cfg = v
            .get_mut("config")
            .map(Value::take)
            .ok_or_else(|| Failure::Usage(format!("{}: manifest has no `config` field", path.display())))?;
        Ok(ExperimentConfig::from_deserializer(cfg)?)
    } else {
        Ok(ExperimentConfig::from_toml_str(&text)?)
    }
}

/// Runs the configured experiment for subcommand `command` and writes its artifacts.
pub fn run(command: &str, args: &GlobalArgs) -> Result<(), Failure> {
    let path = args.config.as_ref().ok_or_else(|| Failure::Usage(format!("{command} needs --config")))?;
    let mut cfg = load_config(path)?;
    if cfg.experiment.name() != command {
        return Err(Failure::Usage(format!(
            "configuration describes a {} experiment, not {command}",
            cfg.experiment.name()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    let started = Instant::now();
    let geometry = cfg.geometry()?;
    let outcome = match &cfg.experiment {
        Experiment::Simulate(c) => simulate(&cfg, &geometry, c)?,
        Experiment::Density(c) => density(&cfg, single(&geometry)?, c)?,
        Experiment::Hitting(c) => hitting(&cfg, &geometry, c)?,
        Experiment::Green(c) => green(&cfg, single(&geometry)?, c)?,
        Experiment::EnvelopeVerify(c) => envelope_verify(&cfg, &geometry, c)?,
        Experiment::HarnackDemo(c) => harnack(&cfg, single(&geometry)?, c)?,
        Experiment::GeneratorCheck(c) => generator(&cfg, single(&geometry)?, c)?,
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "passed": outcome.passed,
        "result": outcome.report,
    });
    let mut out = OutDir::create(&PathBuf::from(&cfg.output.dir))?;
    out.write(&format!("{}.csv", command.replace('-', "_")), &outcome.csv)?;
    out.write_json(REPORT, &report)?;
    out.finish(&cfg, command, started.elapsed(), outcome.passed)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Usage(e.to_string()))?);
    } else {
        print!("{}", outcome.summary);
        println!("{}: {} (artifacts in {})", command, if outcome.passed { "PASS" } else { "FAIL" }, cfg.output.dir);
    }
    if outcome.passed {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn single(g: &Geometry) -> Result<&ModelParams, Failure> {
    g.single().ok_or_else(|| Failure::Usage("experiment needs a single-pole geometry".into()))
}

fn epoint(g: &Geometry, key: &str, s: &str) -> Result<EPoint, Failure> {
    match g.point(key, s)? {
        Point::Single(x) => Ok(x),
        Point::Variant(_) => Err(Failure::Usage(format!("`{key}` must be a single-pole point"))),
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::Usage(e.to_string()))
}

fn simulate(cfg: &ExperimentConfig, g: &Geometry, c: &SimulateConfig) -> Result<Outcome, Failure> {
    let mut csv = String::from("path,time,point\n");
    let mut ends = Vec::new();
    match g {
        Geometry::Single(m) => {
            let sim = Simulator::new(*m, cfg.step)?;
            let x = epoint(g, "experiment.source", &c.source)?;
            for i in 0..c.n_paths {
                let mut rng = RngStream::new(cfg.seed, i);
                let path = sim.simulate(&x, c.t, &mut rng);
                let last = path.times.len().saturating_sub(1);
                for (k, (t, p)) in path.times.iter().zip(&path.points).enumerate() {
                    if k % c.record_every == 0 || k == last {
                        let _ = writeln!(csv, "{i},{t:.9e},{p}");
                    }
                }
                ends.push(path.end.point(m).to_string());
            }
        }
        Geometry::Variant(space) => {
            let sim = VariantSimulator::new(space.clone(), cfg.step)?;
            let Point::Variant(x) = g.point("experiment.source", &c.source)? else { unreachable!() };
            for i in 0..c.n_paths {
                let mut rng = RngStream::new(cfg.seed, i);
                let _ = writeln!(csv, "{i},{:.9e},{x}", 0.0);
                let mut k = 0usize;
                let end = sim.walk(&x, c.t, &mut rng, |t, st, _| {
                    k += 1;
                    if k.is_multiple_of(c.record_every) {
                        let _ = writeln!(csv, "{i},{t:.9e},{}", sim.point_of(st));
                    }
                });
                if !k.is_multiple_of(c.record_every) {
                    let _ = writeln!(csv, "{i},{:.9e},{}", c.t, sim.point_of(&end));
                }
                ends.push(sim.point_of(&end).to_string());
            }
        }
    }
    let summary = format!("simulated {} paths to t = {}\n", c.n_paths, c.t);
    Ok(Outcome { passed: true, csv, report: json!({ "n_paths": c.n_paths, "t": c.t, "endpoints": ends }), summary })
}

fn density(cfg: &ExperimentConfig, m: &ModelParams, c: &DensityConfig) -> Result<Outcome, Failure> {
    let sim = Simulator::new(*m, cfg.step)?;
    let x = EPoint::parse(&c.source, m)?;
    let mut csv = format!("t,{DENSITY_CSV_HEADER}\n");
    let mut rows = Vec::new();
    let mut summary = String::new();
    for (i, &t) in c.times.iter().enumerate() {
        let grid = estimate_density(&sim, &x, t, &c.grid, c.n_paths, derive_seed(cfg.seed, i as u64))?;
        for line in grid.to_csv(m).lines().skip(1) {
            let _ = writeln!(csv, "{t:.9e},{line}");
        }
        let _ = writeln!(
            summary,
            "t = {t}: mass in grid {:.4}, tail {:.4}, empty cells {}/{}",
            grid.mass(),
            grid.tail_fraction(),
            grid.empty_cells(),
            grid.cells.len()
        );
        rows.push(json!({
            "t": t,
            "cells": grid.cells.len(),
            "mass": grid.mass(),
            "tail_fraction": grid.tail_fraction(),
            "empty_cells": grid.empty_cells(),
        }));
    }
    let report = json!({ "source": c.source, "n_paths": c.n_paths, "times": rows });
    Ok(Outcome { passed: true, csv, report, summary })
}

fn hitting(cfg: &ExperimentConfig, g: &Geometry, c: &HittingConfig) -> Result<Outcome, Failure> {
    let (sample, ks) = match g {
        Geometry::Single(m) => {
            let x = EPoint::parse(&c.source, m)?;
            let sim = RadialSimulator::new(*m, cfg.step)?;
            let sample = hitting_times_star(&sim, &x, c.t_max, c.n_paths, cfg.seed)?;
            let ks = match x {
                EPoint::Pole(s) => Some(pole_first_passage_ks(&sample, s)),
                _ => None,
            };
            (sample, ks)
        }
        Geometry::Variant(space) => {
            let x = space.parse_point(&c.source)?;
            let sim = VariantSimulator::new(space.clone(), cfg.step)?;
            (hitting_times_junction(&sim, &x, c.target, c.t_max, c.n_paths, cfg.seed)?, None)
        }
    };
    let mut csv = String::from("lo,hi,density,stderr,cdf\n");
    for (a, b, d, se) in sample.histogram(c.bins) {
        let _ = writeln!(csv, "{a:.9e},{b:.9e},{d:.9e},{se:.9e},{:.9e}", sample.cdf(b));
    }
    let passed = match (c.ks_tolerance, ks) {
        (Some(tol), Some(d)) => d <= tol,
        _ => true,
    };
    let mut summary = format!("{} of {} paths hit by t = {}\n", sample.times.len(), c.n_paths, c.t_max);
    if let Some(d) = ks {
        let _ = writeln!(summary, "KS distance to the closed-form law: {d:.5}");
    }
    let report = json!({
        "n_paths": c.n_paths,
        "t_max": c.t_max,
        "censored": sample.censored(),
        "ks_distance": ks,
        "ks_tolerance": c.ks_tolerance,
    });
    Ok(Outcome { passed, csv, report, summary })
}

fn green(cfg: &ExperimentConfig, m: &ModelParams, c: &GreenConfig) -> Result<Outcome, Failure> {
    let sim = Simulator::new(*m, cfg.step)?;
    let x = EPoint::parse(&c.source, m)?;
    let run = estimate_green(&sim, &x, &c.domain, &c.targets, c.n_paths, c.max_steps, cfg.seed)?;
    let mut csv = String::from("target,center,measure,occupation,value,stderr,shape\n");
    for e in &run.estimates {
        let (kind, center) = match e.target {
            GreenTarget::Ball { center, .. } => ("ball", center),
            GreenTarget::Bin { bin } => ("bin", bin.center(m)),
        };
        let shape = green_shape(&c.domain, &x, &center, m).map_or(String::new(), |v| format!("{v:.9e}"));
        let _ = writeln!(
            csv,
            "{kind},{center},{:.9e},{:.9e},{:.9e},{:.9e},{shape}",
            e.measure, e.occupation, e.value, e.stderr
        );
    }
    let passed = run.unexited == 0;
    let summary = format!(
        "{} paths, mean exit time {:.4}, {} did not exit within {} steps\n",
        run.n_paths, run.mean_exit_time, run.unexited, c.max_steps
    );
    Ok(Outcome { passed, csv, report: to_value(&run)?, summary })
}

fn cells_csv(cells: &[EnvelopeCell]) -> String {
    let mut csv = String::from("t,rho,euclid,x_norm,y_norm,value,stderr\n");
    for c in cells {
        let g = &c.geometry;
        let _ = writeln!(
            csv,
            "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            c.t, g.rho, g.euclid, g.x_norm, g.y_norm, c.value, c.stderr
        );
    }
    csv
}

fn envelope_verify(cfg: &ExperimentConfig, g: &Geometry, c: &EnvelopeVerifyConfig) -> Result<Outcome, Failure> {
    let opts = &c.fit;
    let mut spread = None;
    let (fit, control, cells): (EnvelopeReport, EnvelopeReport, Vec<EnvelopeCell>) = match (&c.design, g) {
        (EnvelopeDesign::SmallTime { regime, times }, Geometry::Single(m)) => {
            let (r, cells) =
                verify_small_time(m, *regime, times, cfg.time_threshold, &cfg.step, c.n_paths, opts, cfg.seed)?;
            (r.fit, r.control, cells)
        }
        (EnvelopeDesign::OnDiagonal { times, bandwidth, max_spread }, Geometry::Single(m)) => {
            let points = on_diagonal_scan(m, times, &cfg.step, *bandwidth, c.n_paths, cfg.seed)?;
            spread = Some((diagonal_spread(&points), *max_spread));
            let geometry = PairGeometry::new(&EPoint::Star, &EPoint::Star, m);
            let cells: Vec<EnvelopeCell> = points
                .iter()
                .filter(|p| p.density.value > 0.0)
                .map(|p| EnvelopeCell { t: p.t, geometry, value: p.density.value, stderr: p.density.stderr })
                .collect();
            let env = on_diagonal_envelope();
            (verify_envelope(&cells, &env, opts)?, verify_envelope(&cells, &env.negative_control(), opts)?, cells)
        }
        (EnvelopeDesign::Pairs { pairs, times, bandwidth }, Geometry::Single(m)) => {
            let sim = Simulator::new(*m, cfg.step)?;
            let mut cells = Vec::new();
            let mut regime = None;
            for (i, &t) in times.iter().enumerate() {
                for (j, [xs, ys]) in pairs.iter().enumerate() {
                    let (x, y) = (EPoint::parse(xs, m)?, EPoint::parse(ys, m)?);
                    let label = classify_regime(&x, &y, t, cfg.time_threshold, m)?;
                    if *regime.get_or_insert(label) != label {
                        return Err(Failure::Usage(format!(
                            "invalid configuration `experiment.design.pairs`: ({x}, {y}) at t = {t} is in {label}, not {}",
                            regime.unwrap()
                        )));
                    }
                    let seed = derive_seed(cfg.seed, (i * pairs.len() + j) as u64);
                    let d = estimate_point_density(&sim, &x, &y, t, c.n_paths, *bandwidth, seed)?;
                    if d.value > 0.0 {
                        cells.push(EnvelopeCell {
                            t,
                            geometry: PairGeometry::new(&x, &y, m),
                            value: d.value,
                            stderr: d.stderr,
                        });
                    }
                }
            }
            let regime = regime.expect("validated non-empty design");
            let env = if regime.is_small_time() {
                small_time_envelope(regime, m, cfg.time_threshold)?
            } else {
                large_time_envelope(regime, m, cfg.time_threshold)?
            };
            (verify_envelope(&cells, &env, opts)?, verify_envelope(&cells, &env.negative_control(), opts)?, cells)
        }
        (EnvelopeDesign::Pairs { pairs, times, bandwidth }, Geometry::Variant(space)) => {
            let sim = VariantSimulator::new(space.clone(), cfg.step)?;
            let pairs = pairs
                .iter()
                .map(|[x, y]| Ok((space.parse_point(x)?, space.parse_point(y)?)))
                .collect::<Result<Vec<_>, Error>>()?;
            let (fit, cells) = verify_variant_envelope(
                &sim,
                &pairs,
                times,
                cfg.time_threshold,
                *bandwidth,
                c.n_paths,
                opts,
                cfg.seed,
            )?;
            let (x, y) = pairs[0];
            let regime = classify_variant(&x, &y, times[0], cfg.time_threshold, space)?;
            let env = variant_envelope(space, regime)?;
            (fit, verify_envelope(&cells, &env.negative_control(), opts)?, cells)
        }
        (_, Geometry::Variant(_)) => {
            return Err(Failure::Usage("this envelope design needs a single-pole geometry".into()));
        }
    };
    let passed = fit.feasible
        && match spread {
            Some((s, max)) => s <= max,
            None => !c.check_control || !control.feasible,
        };
    let mut summary = format!(
        "{}: {} cells, feasible {} (tightness {:.3}, inside {:.3}); negative control feasible {} (tightness {:.3e})\n",
        fit.regime, fit.cells, fit.feasible, fit.tightness, fit.fraction_inside, control.feasible, control.tightness
    );
    if let Some((s, max)) = spread {
        let _ = writeln!(summary, "scaled on-diagonal spread {s:.3} (max {max})");
    }
    let report = json!({
        "feasible": fit.feasible,
        "fit": to_value(&fit)?,
        "control": to_value(&control)?,
        "spread": spread.map(|(s, _)| s),
    });
    Ok(Outcome { passed, csv: cells_csv(&cells), report, summary })
}

fn harnack(cfg: &ExperimentConfig, m: &ModelParams, c: &HarnackConfig) -> Result<Outcome, Failure> {
    let sim = Simulator::new(*m, cfg.step)?;
    let rows = harnack_failure_demo(&sim, &c.s_grid, c.control, &c.options, cfg.seed)?;
    let mut csv = String::from(
        "s,y,sup,sup_stderr,sup_t,sup_point,inf,inf_stderr,inf_t,inf_point,ratio,ratio_stderr,separated\n",
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{:.9e},{},{:.9e},{:.9e},{:.9e},{},{:.9e},{:.9e},{:.9e},{},{:.9e},{:.9e},{}",
            r.s,
            r.y,
            r.sup.value,
            r.sup.stderr,
            r.sup.t,
            r.sup.point,
            r.inf.value,
            r.inf.stderr,
            r.inf.t,
            r.inf.point,
            r.ratio,
            r.ratio_stderr,
            u8::from(r.separated)
        );
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let factors: Vec<f64> = ratios.windows(2).map(|w| w[1] / w[0]).collect();
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let passed = match c.control {
        None => factors.iter().all(|&f| f >= c.min_factor),
        Some(_) => spread <= c.max_spread,
    };
    let summary = format!("ratios {ratios:.3?}, step factors {factors:.3?}, spread {spread:.3}\n");
    let report = json!({ "rows": to_value(&rows)?, "factors": factors, "spread": spread, "control": c.control });
    Ok(Outcome { passed, csv, report, summary })
}

fn generator(cfg: &ExperimentConfig, m: &ModelParams, c: &GeneratorConfig) -> Result<Outcome, Failure> {
    let sim = Simulator::new(*m, cfg.step)?;
    let x = EPoint::parse(&c.source, m)?;
    let residuals = generator_check(&sim, &x, &c.functions, c.t, c.n_paths, cfg.seed)?;
    let mut csv = String::from("function,flux,residual,stderr,residual_fine,budget,within_budget\n");
    let mut passed = true;
    let mut summary = String::new();
    for (i, r) in residuals.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{}",
            r.flux,
            r.residual,
            r.stderr,
            r.residual_fine,
            r.budget,
            u8::from(r.within_budget())
        );
        let ok = if r.flux.abs() <= 1e-12 { r.within_budget() } else { r.exceeds(c.factor) };
        passed &= ok;
        let _ = writeln!(
            summary,
            "function {i}: flux {:.4}, |R| = {:.2} budgets ({})",
            r.flux,
            r.residual.abs() / r.budget,
            if ok { "as expected" } else { "unexpected" }
        );
    }
    Ok(Outcome { passed, csv, report: json!({ "residuals": to_value(&residuals)?, "factor": c.factor }), summary })
}
