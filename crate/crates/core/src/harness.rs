//! Mean-field convergence studies: distance between the particle system and
//! an over-resolved macroscopic reference, as a function of `N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macro_solver::{nu_sigma_solve_with, MacroConfig, MacroSeries, Schedule};
use crate::measures::{grid_to_discrete, label_w1, w1_distance_1d, Measure};
use crate::micro_sim::{simulate_with, MicroConfig, MicroSeries, Sampling};

/// `K1 (N^-1/2 + N^-2/3) + K2^(1/(2d)) (N^-1/(4d) + N^-1/(3d))`.
pub fn theta_bound(n: usize, k1: f64, k2: f64, d: usize) -> f64 {
    let n = n as f64;
    let d = d as f64;
    k1 * (n.powf(-0.5) + n.powf(-2.0 / 3.0))
        + k2.powf(1.0 / (2.0 * d)) * (n.powf(-1.0 / (4.0 * d)) + n.powf(-1.0 / (3.0 * d)))
}

fn default_ns() -> Vec<usize> {
    vec![50, 200, 800, 3200]
}

fn default_seed_count() -> usize {
    20
}

fn default_checkpoints() -> Vec<f64> {
    vec![5.0]
}

fn default_factor() -> usize {
    4
}

fn one() -> f64 {
    1.0
}

fn quota() -> Sampling {
    Sampling::Quota
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSettings {
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    /// Seeds `0..seeds` are used.
    #[serde(default = "default_seed_count")]
    pub seeds: usize,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    #[serde(default = "quota")]
    pub sampling: Sampling,
    /// Reference grid is this many times finer in space and time.
    #[serde(default = "default_factor")]
    pub reference_factor: usize,
    /// Reference-only constants of the bound; not calibrated.
    #[serde(default = "one")]
    pub k1: f64,
    #[serde(default = "one")]
    pub k2: f64,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            ns: default_ns(),
            seeds: default_seed_count(),
            checkpoints: default_checkpoints(),
            sampling: quota(),
            reference_factor: default_factor(),
            k1: 1.0,
            k2: 1.0,
        }
    }
}

impl ConvergenceSettings {
    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(Error::config(
                "convergence.ns",
                "need positive particle counts",
            ));
        }
        if self.seeds == 0 {
            return Err(Error::config("convergence.seeds", "need at least one seed"));
        }
        if self.checkpoints.is_empty()
            || self.checkpoints.iter().any(|t| !t.is_finite() || *t < 0.0)
        {
            return Err(Error::config(
                "convergence.checkpoints",
                "need nonnegative checkpoint times",
            ));
        }
        if self.reference_factor == 0 {
            return Err(Error::config(
                "convergence.reference_factor",
                "must be at least 1",
            ));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::config(
                "convergence.k1",
                "constants must be positive",
            ));
        }
        Ok(())
    }
}

/// Distances between particle and mean-field laws at time `t`: `W1` of the
/// spatial laws (the macro density normalized to unit mass) and `W1` of the
/// label laws. Both frames must lie within `tol` of `t`.
pub fn micro_macro_gap(
    micro: &MicroSeries,
    macro_series: &MacroSeries,
    t: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mf = micro.frame_near(t, tol).ok_or(Error::FrameMissing { t })?;
    let gf = macro_series
        .frame_near(t, tol)
        .ok_or(Error::FrameMissing { t })?;
    let nu_n = mf.empirical_nu();
    let reference = grid_to_discrete(&gf.nu);
    let reference = reference.scaled(nu_n.mass() / reference.mass())?;
    let space = w1_distance_1d(&nu_n, &reference)?;
    Ok((space, label_w1(&mf.sigma, &gf.sigma)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub seed: u64,
    pub t: f64,
    pub w1_space: f64,
    pub w1_label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceAggregate {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub theta_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub records: Vec<ConvergenceRecord>,
    pub aggregates: Vec<ConvergenceAggregate>,
    pub slope: f64,
    /// Jackknife 95% interval over seeds.
    pub slope_ci: (f64, f64),
    /// Each mean is at most the previous one plus two combined standard
    /// errors.
    pub monotone: bool,
    pub checkpoints: Vec<f64>,
    pub reference_cells: usize,
    pub reference_dt: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_consistent(macro_cfg: &MacroConfig, micro: &MicroConfig) -> Result<()> {
    if macro_cfg.kernels != micro.kernels {
        return Err(Error::ConfigMismatch("kernels".into()));
    }
    if macro_cfg.rates != micro.rates {
        return Err(Error::ConfigMismatch("rates".into()));
    }
    if macro_cfg.initial != micro.initial || macro_cfg.domain != micro.domain {
        return Err(Error::ConfigMismatch("initial law".into()));
    }
    Ok(())
}

/// Runs every `(N, seed)` pair against a `nu`-`sigma` reference computed on
/// a grid `reference_factor` times finer, and fits the decay of the mean
/// error `W1(nu^N, nu) + W1(sigma^N, sigma)` (averaged over checkpoints).
pub fn convergence_study(
    macro_cfg: &MacroConfig,
    micro_template: &MicroConfig,
    settings: &ConvergenceSettings,
) -> Result<ConvergenceReport> {
    settings.validate()?;
    check_consistent(macro_cfg, micro_template)?;
    let dt = micro_template.dt;
    let horizon = micro_template.t_final.min(macro_cfg.t_final);
    if settings.checkpoints.iter().any(|&t| t > horizon) {
        return Err(Error::config(
            "convergence.checkpoints",
            format!("checkpoints must not exceed t_final = {horizon}"),
        ));
    }
    // Checkpoints on the particle time grid, so that the reference (whose
    // step divides the particle step) hits them exactly.
    let checkpoints: Vec<f64> = settings
        .checkpoints
        .iter()
        .map(|t| ((t / dt).round() * dt).min(horizon))
        .collect();
    let t_end = checkpoints.iter().copied().fold(0.0, f64::max).max(dt);

    let mut reference_cfg = macro_cfg.clone();
    reference_cfg.dt = dt;
    reference_cfg.t_final = t_end;
    let reference_cfg = reference_cfg.refined(settings.reference_factor);
    let reference = nu_sigma_solve_with(&reference_cfg, &Schedule::Times(checkpoints.clone()))?;

    let pairs: Vec<(usize, u64)> = settings
        .ns
        .iter()
        .flat_map(|&n| (0..settings.seeds as u64).map(move |s| (n, s)))
        .collect();
    let schedule = Schedule::Times(checkpoints.clone());
    let run = |&(n, seed): &(usize, u64)| -> Result<Vec<ConvergenceRecord>> {
        let mut cfg = micro_template.clone();
        cfg.n_particles = n;
        cfg.seed = seed;
        cfg.sampling = settings.sampling;
        cfg.t_final = t_end;
        let series = simulate_with(&cfg, &schedule)?;
        checkpoints
            .iter()
            .map(|&t| {
                let (w1_space, w1_label) = micro_macro_gap(&series, &reference, t, dt / 2.0)?;
                Ok(ConvergenceRecord {
                    n,
                    seed,
                    t,
                    w1_space,
                    w1_label,
                })
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<ConvergenceRecord>>> = {
        use rayon::prelude::*;
        pairs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<ConvergenceRecord>>> = pairs.iter().map(run).collect();

    let mut records = Vec::with_capacity(pairs.len() * checkpoints.len());
    for r in results {
        records.extend(r?);
    }

    // per (N, seed): error averaged over checkpoints
    let per_run = |n: usize, seed: u64| -> f64 {
        let rs: Vec<&ConvergenceRecord> = records
            .iter()
            .filter(|r| r.n == n && r.seed == seed)
            .collect();
        rs.iter().map(|r| r.w1_space + r.w1_label).sum::<f64>() / rs.len() as f64
    };
    let errors: Vec<Vec<f64>> = settings
        .ns
        .iter()
        .map(|&n| (0..settings.seeds as u64).map(|s| per_run(n, s)).collect())
        .collect();

    let aggregates: Vec<ConvergenceAggregate> = settings
        .ns
        .iter()
        .zip(&errors)
        .map(|(&n, e)| {
            let (mean, stderr) = mean_stderr(e);
            ConvergenceAggregate {
                n,
                mean,
                stderr,
                theta_ref: theta_bound(n, settings.k1, settings.k2, 1),
            }
        })
        .collect();

    let xs: Vec<f64> = settings.ns.iter().map(|&n| n as f64).collect();
    let means: Vec<f64> = aggregates.iter().map(|a| a.mean).collect();
    let slope = loglog_slope(&xs, &means);

    let m = settings.seeds;
    let slope_ci = if m > 1 {
        let leave_one_out: Vec<f64> = (0..m)
            .map(|skip| {
                let ys: Vec<f64> = errors
                    .iter()
                    .map(|e| {
                        e.iter()
                            .enumerate()
                            .filter(|(i, _)| *i != skip)
                            .map(|(_, v)| v)
                            .sum::<f64>()
                            / (m - 1) as f64
                    })
                    .collect();
                loglog_slope(&xs, &ys)
            })
            .collect();
        let avg = leave_one_out.iter().sum::<f64>() / m as f64;
        let var = (m - 1) as f64 / m as f64
            * leave_one_out.iter().map(|s| (s - avg).powi(2)).sum::<f64>();
        let half = 1.96 * var.sqrt();
        (slope - half, slope + half)
    } else {
        (slope, slope)
    };

    let monotone = aggregates
        .windows(2)
        .all(|w| w[1].mean <= w[0].mean + 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt());

    Ok(ConvergenceReport {
        records,
        aggregates,
        slope,
        slope_ci,
        monotone,
        checkpoints,
        reference_cells: reference_cfg.domain.n_cells,
        reference_dt: reference_cfg.dt,
        k1: settings.k1,
        k2: settings.k2,
    })
}
