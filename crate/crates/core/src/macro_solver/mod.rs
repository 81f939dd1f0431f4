//! Deterministic solvers for the macroscopic leader-follower system.
//!
//! Three discretizations share one configuration type:
//!
//! * [`fv_solve`]: first-order upwind finite volumes for the coupled
//!   `(mu_F, mu_L)` system, transport and reaction split within each step;
//! * [`euler_pushforward_solve`]: atomic measures pushed forward by the frozen
//!   velocity field after an explicit reaction step;
//! * [`nu_sigma_solve`]: the total density `nu` transported by the
//!   label-weighted field, with the label distribution `sigma` advanced by
//!   the birth-death matrix.

mod euler;
mod fv;
mod nu_sigma;

pub use euler::{
    atoms_to_grid, euler_pushforward_solve, euler_pushforward_step, AtomFrame, AtomSeries,
    AtomState,
};
pub use fv::{fv_solve, fv_solve_with, fv_step, GridState};
pub use nu_sigma::{
    equivalence_check, nu_sigma_solve, nu_sigma_solve_with, nu_sigma_step, reconstruct_populations,
    NuSigmaState,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::measures::{GridMeasure, LabelDist, Measure};
use crate::rates::{target_variance, variance, RateSpec};

/// Frames per run when no cadence is given.
pub const MAX_DEFAULT_FRAMES: usize = 500;

/// Cells below this value count as a loss of positivity.
pub const POSITIVITY_TOLERANCE: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations<T> {
    pub follower: T,
    pub leader: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Domain {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub weight: f64,
    pub center: f64,
    /// The `varsigma^2` parameter of `exp(-x^2 / varsigma^2) / sqrt(2 pi varsigma^2)`.
    pub variance: f64,
}

/// Spatial profile of an initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Profile {
    /// Constant density of unit mass on the whole domain.
    Uniform,
    /// `1/(outer - inner)` on `[-outer/2, -inner/2] U [inner/2, outer/2]`.
    Plateau { inner: f64, outer: f64 },
    /// Sum of `weight * exp(-(x - center)^2 / variance) / sqrt(2 pi variance)`.
    Gaussian { bumps: Vec<GaussianBump> },
}

impl Profile {
    /// Cell averages on `domain`: exact for the piecewise-constant shapes,
    /// 16-point midpoint quadrature per cell for Gaussians.
    pub fn cell_averages(&self, domain: &Domain) -> Vec<f64> {
        let dx = domain.dx();
        let edge = |i: usize| domain.x_min + i as f64 * dx;
        (0..domain.n_cells)
            .map(|i| {
                let (a, b) = (edge(i), edge(i + 1));
                match self {
                    Profile::Uniform => 1.0 / (domain.x_max - domain.x_min),
                    Profile::Plateau { inner, outer } => {
                        let overlap = |lo: f64, hi: f64| (b.min(hi) - a.max(lo)).max(0.0);
                        let covered =
                            overlap(-outer / 2.0, -inner / 2.0) + overlap(inner / 2.0, outer / 2.0);
                        covered / dx / (outer - inner)
                    }
                    Profile::Gaussian { bumps } => {
                        const SUB: usize = 16;
                        let h = dx / SUB as f64;
                        let sum: f64 = (0..SUB)
                            .map(|k| {
                                let x = a + (k as f64 + 0.5) * h;
                                bumps
                                    .iter()
                                    .map(|g| {
                                        g.weight * (-(x - g.center).powi(2) / g.variance).exp()
                                            / (2.0 * std::f64::consts::PI * g.variance).sqrt()
                                    })
                                    .sum::<f64>()
                            })
                            .sum();
                        sum / SUB as f64
                    }
                }
            })
            .collect()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Profile::Uniform => Ok(()),
            Profile::Plateau { inner, outer } => {
                if *inner >= 0.0 && outer > inner {
                    Ok(())
                } else {
                    Err(format!("need 0 <= inner < outer, got {inner}, {outer}"))
                }
            }
            Profile::Gaussian { bumps } => {
                for b in bumps {
                    if !(b.weight >= 0.0 && b.variance > 0.0 && b.center.is_finite()) {
                        return Err(format!("bad gaussian bump {b:?}"));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Initial data of the two populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `mu_F = sigma_f * profile`, `mu_L = (1 - sigma_f) * profile`.
    Proportional { profile: Profile, sigma_f: f64 },
    /// Independent profiles; their weights carry the population masses.
    Separate { follower: Profile, leader: Profile },
}

impl InitialCondition {
    pub fn grids(&self, domain: &Domain) -> Result<(GridMeasure, GridMeasure)> {
        let (f, l) = match self {
            InitialCondition::Proportional { profile, sigma_f } => {
                let base = profile.cell_averages(domain);
                (
                    base.iter().map(|v| sigma_f * v).collect(),
                    base.iter().map(|v| (1.0 - sigma_f) * v).collect(),
                )
            }
            InitialCondition::Separate { follower, leader } => {
                (follower.cell_averages(domain), leader.cell_averages(domain))
            }
        };
        Ok((
            GridMeasure::new(domain.x_min, domain.x_max, f)?,
            GridMeasure::new(domain.x_min, domain.x_max, l)?,
        ))
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            InitialCondition::Proportional { profile, sigma_f } => {
                if !(0.0..=1.0).contains(sigma_f) {
                    return Err(format!("sigma_f must lie in [0, 1], got {sigma_f}"));
                }
                profile.validate()
            }
            InitialCondition::Separate { follower, leader } => {
                follower.validate()?;
                leader.validate()
            }
        }
    }
}

fn default_cfl() -> f64 {
    0.9
}

fn default_cfl_floor() -> f64 {
    1e-9
}

fn default_cluster_threshold() -> f64 {
    0.1
}

fn default_dt() -> f64 {
    0.0127
}

fn default_t_final() -> f64 {
    25.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroConfig {
    pub domain: Domain,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    pub kernels: Populations<KernelSpec>,
    pub rates: Populations<RateSpec>,
    pub initial: InitialCondition,
    #[serde(default = "default_cfl")]
    pub cfl_limit: f64,
    /// Interfaces fed by cells below this fraction of the peak density are
    /// left out of the CFL check; 0 checks every interface carrying mass.
    #[serde(default = "default_cfl_floor")]
    pub cfl_density_floor: f64,
    /// Record every n-th step; `None` picks a cadence giving at most
    /// [`MAX_DEFAULT_FRAMES`] frames.
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default = "default_cluster_threshold")]
    pub cluster_threshold: f64,
}

impl MacroConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.x_min.is_finite() && d.x_max.is_finite() && d.x_max > d.x_min) {
            return Err(Error::config("domain", "x_max must exceed x_min"));
        }
        if d.n_cells < 2 {
            return Err(Error::config("domain.n_cells", "need at least two cells"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "time step must be positive"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "final time must be positive"));
        }
        if !(self.cfl_limit > 0.0 && self.cfl_limit <= 1.0) {
            return Err(Error::config("cfl_limit", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.cfl_density_floor) {
            return Err(Error::config("cfl_density_floor", "must lie in [0, 1)"));
        }
        if !(self.cluster_threshold > 0.0 && self.cluster_threshold < 1.0) {
            return Err(Error::config("cluster_threshold", "must lie in (0, 1)"));
        }
        if self.record_every == Some(0) {
            return Err(Error::config("record_every", "must be at least 1"));
        }
        self.kernels
            .follower
            .validate()
            .map_err(|r| Error::config("kernels.follower", r))?;
        self.kernels
            .leader
            .validate()
            .map_err(|r| Error::config("kernels.leader", r))?;
        self.rates
            .follower
            .validate()
            .map_err(|r| Error::config("rates.follower", r))?;
        self.rates
            .leader
            .validate()
            .map_err(|r| Error::config("rates.leader", r))?;
        self.initial
            .validate()
            .map_err(|r| Error::config("initial", r))?;
        let m_alpha = self.max_rate();
        if self.dt * m_alpha >= 1.0 {
            return Err(Error::config(
                "dt",
                format!("dt * M_alpha = {} must stay below 1", self.dt * m_alpha),
            ));
        }
        Ok(())
    }

    /// `M_alpha`: the larger of the two rate bounds.
    pub fn max_rate(&self) -> f64 {
        self.rates
            .follower
            .max_rate()
            .max(self.rates.leader.max_rate())
    }

    pub fn n_steps(&self) -> usize {
        steps_for(self.t_final, self.dt)
    }

    pub fn initial_grids(&self) -> Result<(GridMeasure, GridMeasure)> {
        self.initial.grids(&self.domain)
    }

    /// Target position used by the `target_variance` diagnostic, taken from
    /// the rates or, failing that, from a steering kernel.
    pub fn diagnostic_target(&self) -> Option<f64> {
        for r in [&self.rates.follower, &self.rates.leader] {
            if let RateSpec::TargetVarianceSigmoid { target, .. } = r {
                return Some(*target);
            }
        }
        for k in [&self.kernels.follower, &self.kernels.leader] {
            if let KernelKind::SteeringDrift { target } = k.kind {
                return Some(target);
            }
        }
        None
    }

    /// Same experiment on a grid `factor` times finer with a time step
    /// `factor` times smaller.
    pub fn refined(&self, factor: usize) -> Self {
        let mut cfg = self.clone();
        cfg.domain.n_cells *= factor;
        cfg.dt /= factor as f64;
        cfg.record_every = self.record_every.map(|r| r * factor);
        cfg
    }

    /// Frames kept by the solvers: every `record_every` steps, or at most
    /// 500 evenly spaced frames.
    pub fn schedule(&self) -> Schedule {
        let n = self.n_steps();
        Schedule::Every(
            self.record_every
                .unwrap_or_else(|| n.div_ceil(MAX_DEFAULT_FRAMES).max(1)),
        )
    }
}

/// Number of steps of size at most `dt` covering `[0, t_final]`; the last
/// step is shortened to land on `t_final`.
pub(crate) fn steps_for(t_final: f64, dt: f64) -> usize {
    ((t_final / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Which steps of a run are kept as frames.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// Step 0, every n-th step, and the final step.
    Every(usize),
    /// The step nearest to each of the given times.
    Times(Vec<f64>),
}

impl Schedule {
    pub(crate) fn steps(&self, dt: f64, n_steps: usize) -> Vec<usize> {
        let mut steps: Vec<usize> = match self {
            Schedule::Every(every) => (0..=n_steps)
                .filter(|s| s % every == 0 || *s == n_steps)
                .collect(),
            Schedule::Times(times) => times
                .iter()
                .map(|t| ((t / dt).round().max(0.0) as usize).min(n_steps))
                .collect(),
        };
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

/// Time after `step` steps of size `dt`, clamped to the final time.
pub(crate) fn time_at(step: usize, dt: f64, t_final: f64) -> f64 {
    (step as f64 * dt).min(t_final)
}

/// Runs `n_steps` steps, shortening the last one to land on `t_final`, and
/// keeps a frame at every scheduled step.
pub(crate) fn drive<S, F>(
    dt: f64,
    t_final: f64,
    schedule: &Schedule,
    init: S,
    mut advance: impl FnMut(&S, f64, usize) -> Result<S>,
    mut frame: impl FnMut(&S, usize, f64) -> F,
) -> Result<Vec<F>> {
    let n_steps = steps_for(t_final, dt);
    let wanted = schedule.steps(dt, n_steps);
    let mut next = wanted.iter().peekable();
    let mut frames = Vec::with_capacity(wanted.len());
    let mut state = init;
    for step in 0..=n_steps {
        let t = time_at(step, dt, t_final);
        if next.peek() == Some(&&step) {
            frames.push(frame(&state, step, t));
            next.next();
        }
        if step == n_steps {
            break;
        }
        let h = time_at(step + 1, dt, t_final) - t;
        state = advance(&state, h, step + 1)?;
    }
    Ok(frames)
}

/// Scalar summaries recorded with each frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass_f: f64,
    pub mass_l: f64,
    pub variance_f: f64,
    pub variance_l: f64,
    /// NaN when the configuration has no target position.
    pub target_variance: f64,
    pub alpha_f: f64,
    pub alpha_l: f64,
    pub cluster_count: usize,
}

impl Diagnostics {
    pub fn compute<M: Measure>(
        cfg: &MacroConfig,
        t: f64,
        mu_f: &M,
        mu_l: &M,
        nu_grid: &GridMeasure,
    ) -> Self {
        let alpha_f = cfg.rates.follower.eval(mu_f, mu_l);
        let alpha_l = cfg.rates.leader.eval(mu_f, mu_l);
        Self {
            t,
            mass_f: mu_f.mass(),
            mass_l: mu_l.mass(),
            variance_f: variance(mu_f),
            variance_l: variance(mu_l),
            target_variance: cfg
                .diagnostic_target()
                .map_or(f64::NAN, |x| target_variance(mu_f, x)),
            alpha_f,
            alpha_l,
            cluster_count: cluster_count(nu_grid, cfg.cluster_threshold),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_f + self.mass_l
    }

    pub fn sigma(&self) -> LabelDist {
        LabelDist::from_masses(self.mass_f, self.mass_l).unwrap_or(LabelDist {
            p_f: f64::NAN,
            p_l: f64::NAN,
        })
    }
}

/// One recorded state of a grid-based solver.
///
/// For the coupled solver `nu = mu_f + mu_l`; for the `nu`-`sigma` solver the
/// populations are reconstructed from `nu` and `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFrame {
    pub t: f64,
    pub step: usize,
    pub mu_f: GridMeasure,
    pub mu_l: GridMeasure,
    pub nu: GridMeasure,
    pub sigma: LabelDist,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MacroSeries {
    pub frames: Vec<GridFrame>,
}

impl MacroSeries {
    pub fn last(&self) -> Option<&GridFrame> {
        self.frames.last()
    }

    /// Frame nearest to `t`, if one lies within `tol`.
    pub fn frame_near(&self, t: f64, tol: f64) -> Option<&GridFrame> {
        self.frames
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|f| (f.t - t).abs() <= tol)
    }
}

/// Number of separated peaks of `g`: strict local maxima of the cell
/// averages above `rel_threshold * max`, a plateau of equal values counting
/// once. Domain ends count as lower neighbours.
pub fn cluster_count(g: &GridMeasure, rel_threshold: f64) -> usize {
    let values = g.cell_avg();
    let max = values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    let floor = rel_threshold * max;
    // run-length compress equal neighbours
    let mut runs: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if runs.last() != Some(&v) {
            runs.push(v);
        }
    }
    (0..runs.len())
        .filter(|&i| {
            let v = runs[i];
            let left_lower = i == 0 || runs[i - 1] < v;
            let right_lower = i + 1 == runs.len() || runs[i + 1] < v;
            v > floor && left_lower && right_lower
        })
        .count()
}

/// Location of the largest cell average (cell center).
pub fn peak_location(g: &GridMeasure) -> f64 {
    let (idx, _) = g
        .cell_avg()
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    g.center(idx)
}

/// First-order upwind transport of one density on a zero-flux grid.
///
/// `velocity[i]` is the field at the interface between cells `i - 1` and `i`
/// (`n + 1` entries; both boundary entries are ignored).
pub(crate) fn upwind_transport(values: &[f64], velocity: &[f64], lambda: f64) -> Vec<f64> {
    let n = values.len();
    let mut flux = vec![0.0; n + 1];
    for i in 1..n {
        let v = velocity[i];
        flux[i] = if v < 0.0 {
            v * values[i]
        } else {
            v * values[i - 1]
        };
    }
    (0..n)
        .map(|l| values[l] - lambda * (flux[l + 1] - flux[l]))
        .collect()
}

/// Largest `dt * |v| / dx` over interior interfaces whose upwind cell holds
/// a density above `floor * max(density)`.
///
/// Upwind transport keeps a cell nonnegative as long as its own outflow
/// Courant number is at most one, so interfaces fed by (numerically) empty
/// cells cannot cause a loss of positivity and are left out.
pub(crate) fn courant_number(velocity: &[f64], density: &[f64], lambda: f64, floor: f64) -> f64 {
    let n = density.len();
    let cutoff = floor * density.iter().copied().fold(0.0, f64::max);
    (1..n)
        .filter(|&i| {
            let upwind = if velocity[i] < 0.0 { i } else { i - 1 };
            density[upwind] > cutoff
        })
        .fold(0.0_f64, |m, i| m.max(velocity[i].abs()))
        * lambda
}

pub(crate) fn check_positivity(g: &[f64], step: usize, t: f64) -> Result<()> {
    for (cell, &value) in g.iter().enumerate() {
        if value < POSITIVITY_TOLERANCE || !value.is_finite() {
            return Err(Error::PositivityLoss {
                step,
                t,
                cell,
                value,
            });
        }
    }
    Ok(())
}
