//! CSV and JSON writers. Floats use `{:.16e}` so files round-trip exactly.

use std::fs::File;
use std::path::Path;

use leadfollow::harness::ConvergenceReport;
use leadfollow::macro_solver::{Diagnostics, GridFrame};
use leadfollow::measures::GridMeasure;
use leadfollow::micro_sim::MicroSeries;
use leadfollow::rates::Population;

use crate::CliError;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(dir.join(name)).map_err(CliError::from)
}

/// One density snapshot: the time plus both populations on a common grid.
pub struct Snapshot<'a> {
    pub t: f64,
    pub mu_f: &'a GridMeasure,
    pub mu_l: &'a GridMeasure,
}

impl<'a> From<&'a GridFrame> for Snapshot<'a> {
    fn from(f: &'a GridFrame) -> Self {
        Snapshot {
            t: f.t,
            mu_f: &f.mu_f,
            mu_l: &f.mu_l,
        }
    }
}

pub fn densities<'a>(
    dir: &Path,
    frames: impl IntoIterator<Item = Snapshot<'a>>,
) -> Result<(), CliError> {
    let mut w = writer(dir, "densities.csv")?;
    w.write_record(["t", "cell", "x", "muF", "muL", "nu"])?;
    for s in frames {
        for (i, (&f, &l)) in s.mu_f.cell_avg().iter().zip(s.mu_l.cell_avg()).enumerate() {
            w.write_record([
                num(s.t),
                i.to_string(),
                num(s.mu_f.center(i)),
                num(f),
                num(l),
                num(f + l),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn diagnostics<'a>(
    dir: &Path,
    rows: impl IntoIterator<Item = &'a Diagnostics>,
) -> Result<(), CliError> {
    let mut w = writer(dir, "diagnostics.csv")?;
    w.write_record([
        "t",
        "massF",
        "massL",
        "varianceF",
        "varianceL",
        "target_variance",
        "alphaF",
        "alphaL",
        "cluster_count",
    ])?;
    for d in rows {
        w.write_record([
            num(d.t),
            num(d.mass_f),
            num(d.mass_l),
            num(d.variance_f),
            num(d.variance_l),
            num(d.target_variance),
            num(d.alpha_f),
            num(d.alpha_l),
            d.cluster_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(t, seed, N, sigmaF, W1_to_macro)` per recorded particle frame.
pub fn micro(dir: &Path, rows: &[(f64, u64, usize, f64, f64)]) -> Result<(), CliError> {
    let mut w = writer(dir, "micro.csv")?;
    w.write_record(["t", "seed", "N", "sigmaF", "W1_to_macro"])?;
    for &(t, seed, n, sigma_f, gap) in rows {
        w.write_record([
            num(t),
            seed.to_string(),
            n.to_string(),
            num(sigma_f),
            num(gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One `particles_seed<seed>.csv` per run.
pub fn particles(dir: &Path, runs: &[MicroSeries]) -> Result<(), CliError> {
    for run in runs {
        let mut w = writer(dir, &format!("particles_seed{}.csv", run.seed))?;
        w.write_record(["t", "i", "x", "label"])?;
        for frame in &run.frames {
            for (i, (&x, label)) in frame.positions.iter().zip(&frame.labels).enumerate() {
                let label = match label {
                    Population::F => "F",
                    Population::L => "L",
                };
                w.write_record([num(frame.t), i.to_string(), num(x), label.to_string()])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

pub fn convergence(dir: &Path, report: &ConvergenceReport) -> Result<(), CliError> {
    let mut w = writer(dir, "convergence_raw.csv")?;
    w.write_record(["N", "seed", "t", "w1_space", "w1_label"])?;
    for r in &report.records {
        w.write_record([
            r.n.to_string(),
            r.seed.to_string(),
            num(r.t),
            num(r.w1_space),
            num(r.w1_label),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "convergence_aggregate.csv")?;
    w.write_record(["N", "mean", "stderr", "theta_ref"])?;
    for a in &report.aggregates {
        w.write_record([
            a.n.to_string(),
            num(a.mean),
            num(a.stderr),
            num(a.theta_ref),
        ])?;
    }
    w.flush()?;

    let summary = serde_json::json!({
        "slope": report.slope,
        "slope_ci": [report.slope_ci.0, report.slope_ci.1],
        "monotone": report.monotone,
        "checkpoints": report.checkpoints,
        "reference_cells": report.reference_cells,
        "reference_dt": report.reference_dt,
        "k1": report.k1,
        "k2": report.k2,
        "aggregates": report.aggregates,
    });
    json(dir, "summary.json", &summary)
}

pub fn json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(dir.join(name), text + "\n")?;
    Ok(())
}
