//! The N-particle system: positions follow the label-weighted interaction
//! field, labels jump between F and L at the global rates.
//!
//! Randomness is drawn from one ChaCha8 stream per particle, keyed by
//! `(seed, particle index)`, so trajectories do not depend on iteration order
//! or thread count.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{coupled_velocity, CoupledLineField, KernelSpec};
use crate::macro_solver::{drive, Domain, InitialCondition, MacroConfig, Populations, Schedule};
use crate::measures::{DiscreteMeasure, GridMeasure, LabelDist, Measure};
use crate::rates::{Population, RateSpec};

/// How initial labels and positions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Independent draws: label from `sigma_0`, then a position from that
    /// population's normalized density.
    #[default]
    Iid,
    /// Exactly `round(N sigma_0(F))` followers; positions of each population
    /// drawn one per quantile stratum.
    Quota,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub t_final: f64,
    pub kernels: Populations<KernelSpec>,
    pub rates: Populations<RateSpec>,
    pub initial: InitialCondition,
    /// Grid on which the initial densities are tabulated for sampling.
    pub domain: Domain,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_every: Option<usize>,
}

impl MicroConfig {
    /// Particle counterpart of a macroscopic experiment.
    pub fn from_macro(cfg: &MacroConfig, n_particles: usize, seed: u64) -> Self {
        Self {
            n_particles,
            dt: cfg.dt,
            t_final: cfg.t_final,
            kernels: cfg.kernels,
            rates: cfg.rates,
            initial: cfg.initial.clone(),
            domain: cfg.domain,
            sampling: Sampling::default(),
            seed,
            record_every: None,
        }
    }

    pub fn max_rate(&self) -> f64 {
        self.rates
            .follower
            .max_rate()
            .max(self.rates.leader.max_rate())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::config("n_particles", "need at least one particle"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "time step must be positive"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "final time must be positive"));
        }
        if self.record_every == Some(0) {
            return Err(Error::config("record_every", "must be at least 1"));
        }
        for (key, k) in [
            ("kernels.follower", &self.kernels.follower),
            ("kernels.leader", &self.kernels.leader),
        ] {
            k.validate().map_err(|r| Error::config(key, r))?;
        }
        for (key, r) in [
            ("rates.follower", &self.rates.follower),
            ("rates.leader", &self.rates.leader),
        ] {
            r.validate().map_err(|e| Error::config(key, e))?;
        }
        self.initial
            .validate()
            .map_err(|r| Error::config("initial", r))?;
        if self.dt * self.max_rate() >= 1.0 {
            return Err(Error::config(
                "dt",
                format!(
                    "dt * M_alpha = {} must stay below 1",
                    self.dt * self.max_rate()
                ),
            ));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        crate::macro_solver::steps_for(self.t_final, self.dt)
    }

    pub fn schedule(&self) -> Schedule {
        let n = self.n_steps();
        Schedule::Every(
            self.record_every
                .unwrap_or_else(|| n.div_ceil(crate::macro_solver::MAX_DEFAULT_FRAMES).max(1)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub t: f64,
    pub dim: usize,
    /// Row-major `N x dim`.
    pub positions: Vec<f64>,
    pub labels: Vec<Population>,
}

impl ParticleState {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn followers(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Population::F).count()
    }
}

/// `(nu^N, sigma^N)`: equal weights `1/N` and the label frequencies.
pub fn empirical(state: &ParticleState) -> (DiscreteMeasure, LabelDist) {
    let n = state.len();
    let w = 1.0 / n as f64;
    let nu = DiscreteMeasure::new(state.dim, state.positions.clone(), vec![w; n])
        .expect("finite particle positions");
    let p_f = state.followers() as f64 / n as f64;
    let sigma = LabelDist {
        p_f,
        p_l: (n - state.followers()) as f64 / n as f64,
    };
    (nu, sigma)
}

fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Position with `CDF(x) = u` for a piecewise-constant density.
fn inverse_cdf(g: &GridMeasure, cumulative: &[f64], u: f64) -> f64 {
    let total = *cumulative.last().unwrap();
    let target = (u * total).clamp(0.0, total);
    // first cell whose cumulative mass reaches the target
    let cell = cumulative
        .partition_point(|&c| c < target)
        .min(g.n_cells() - 1);
    let cell = (cell..g.n_cells())
        .find(|&i| g.cell_avg()[i] > 0.0)
        .or_else(|| (0..cell).rev().find(|&i| g.cell_avg()[i] > 0.0))
        .unwrap_or(cell);
    let before = if cell == 0 { 0.0 } else { cumulative[cell - 1] };
    let in_cell = g.cell_avg()[cell] * g.dx();
    let frac = if in_cell > 0.0 {
        ((target - before) / in_cell).clamp(0.0, 1.0)
    } else {
        0.5
    };
    g.interface(cell) + frac * g.dx()
}

fn cumulative(g: &GridMeasure) -> Vec<f64> {
    let dx = g.dx();
    g.cell_avg()
        .iter()
        .scan(0.0, |acc, &v| {
            *acc += v.max(0.0) * dx;
            Some(*acc)
        })
        .collect()
}

/// Initial particles and their random streams.
pub fn sample_initial(cfg: &MicroConfig) -> Result<(ParticleState, Vec<ChaCha8Rng>)> {
    let (mu_f, mu_l) = cfg.initial.grids(&cfg.domain)?;
    let sigma0 = LabelDist::from_masses(mu_f.mass(), mu_l.mass())?;
    let cdf_f = cumulative(&mu_f);
    let cdf_l = cumulative(&mu_l);
    let n = cfg.n_particles;
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| particle_rng(cfg.seed, i)).collect();
    let mut positions = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    match cfg.sampling {
        Sampling::Iid => {
            for rng in rngs.iter_mut() {
                let label = if rng.random::<f64>() < sigma0.p_f {
                    Population::F
                } else {
                    Population::L
                };
                let u: f64 = rng.random();
                positions.push(match label {
                    Population::F => inverse_cdf(&mu_f, &cdf_f, u),
                    Population::L => inverse_cdf(&mu_l, &cdf_l, u),
                });
                labels.push(label);
            }
        }
        Sampling::Quota => {
            let n_f = (n as f64 * sigma0.p_f).round() as usize;
            for (i, rng) in rngs.iter_mut().enumerate() {
                let (label, stratum, count) = if i < n_f {
                    (Population::F, i, n_f)
                } else {
                    (Population::L, i - n_f, n - n_f)
                };
                let u = (stratum as f64 + rng.random::<f64>()) / count as f64;
                positions.push(match label {
                    Population::F => inverse_cdf(&mu_f, &cdf_f, u),
                    Population::L => inverse_cdf(&mu_l, &cdf_l, u),
                });
                labels.push(label);
            }
        }
    }
    Ok((
        ParticleState {
            t: 0.0,
            dim: 1,
            positions,
            labels,
        },
        rngs,
    ))
}

fn velocities(
    kernels: &Populations<KernelSpec>,
    nu: &DiscreteMeasure,
    sigma: &LabelDist,
    state: &ParticleState,
) -> Vec<f64> {
    if state.dim == 1 {
        let field = CoupledLineField::new(&kernels.follower, &kernels.leader, nu, *sigma);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            state.positions.par_iter().map(|&x| field.eval(x)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            state.positions.iter().map(|&x| field.eval(x)).collect()
        }
    } else {
        state
            .positions
            .chunks_exact(state.dim)
            .flat_map(|x| {
                coupled_velocity(&kernels.follower, &kernels.leader, nu, sigma, x)
                    .expect("dimensions agree")
            })
            .collect()
    }
}

/// Rates `(alpha_F, alpha_L)` at `(sigma(F) nu, sigma(L) nu)`.
pub fn particle_rates(
    rates: &Populations<RateSpec>,
    nu: &DiscreteMeasure,
    sigma: &LabelDist,
) -> (f64, f64) {
    let mu_f = nu.scaled(sigma.p_f).expect("nonnegative scale");
    let mu_l = nu.scaled(sigma.p_l).expect("nonnegative scale");
    (
        rates.follower.eval(&mu_f, &mu_l),
        rates.leader.eval(&mu_f, &mu_l),
    )
}

/// One synchronous step: velocities and rates from the pre-step empirical
/// state, explicit Euler for positions, Bernoulli label flips with
/// probability `1 - exp(-alpha dt)`.
pub fn particle_step(
    state: &ParticleState,
    dt: f64,
    kernels: &Populations<KernelSpec>,
    rates: &Populations<RateSpec>,
    rngs: &mut [ChaCha8Rng],
) -> ParticleState {
    let (nu, sigma) = empirical(state);
    let (alpha_f, alpha_l) = particle_rates(rates, &nu, &sigma);
    let vel = velocities(kernels, &nu, &sigma, state);
    let positions = state
        .positions
        .iter()
        .zip(&vel)
        .map(|(x, v)| x + dt * v)
        .collect();
    let p_f = 1.0 - (-alpha_f * dt).exp();
    let p_l = 1.0 - (-alpha_l * dt).exp();
    let labels = state
        .labels
        .iter()
        .zip(rngs.iter_mut())
        .map(|(&label, rng)| {
            let u: f64 = rng.random();
            match label {
                Population::F if u < p_f => Population::L,
                Population::L if u < p_l => Population::F,
                other => other,
            }
        })
        .collect();
    ParticleState {
        t: state.t + dt,
        dim: state.dim,
        positions,
        labels,
    }
}

/// Stepping interface over one realization.
#[derive(Debug, Clone)]
pub struct MicroSim {
    cfg: MicroConfig,
    state: ParticleState,
    rngs: Vec<ChaCha8Rng>,
    step: usize,
}

impl MicroSim {
    pub fn new(cfg: MicroConfig) -> Result<Self> {
        cfg.validate()?;
        let (state, rngs) = sample_initial(&cfg)?;
        Ok(Self {
            cfg,
            state,
            rngs,
            step: 0,
        })
    }

    pub fn state(&self) -> &ParticleState {
        &self.state
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.cfg.n_steps()
    }

    /// Advances one step (the last one shortened to hit `t_final`).
    /// Returns false once the final time has been reached.
    pub fn advance(&mut self) -> bool {
        if self.is_finished() {
            return false;
        }
        let (dt, t_final) = (self.cfg.dt, self.cfg.t_final);
        let t0 = crate::macro_solver::time_at(self.step, dt, t_final);
        let t1 = crate::macro_solver::time_at(self.step + 1, dt, t_final);
        let mut next = particle_step(
            &self.state,
            t1 - t0,
            &self.cfg.kernels,
            &self.cfg.rates,
            &mut self.rngs,
        );
        next.t = t1;
        self.state = next;
        self.step += 1;
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroFrame {
    pub t: f64,
    pub step: usize,
    pub sigma: LabelDist,
    pub positions: Vec<f64>,
    pub labels: Vec<Population>,
}

impl MicroFrame {
    pub fn empirical_nu(&self) -> DiscreteMeasure {
        let n = self.labels.len();
        let dim = self.positions.len() / n.max(1);
        DiscreteMeasure::new(dim.max(1), self.positions.clone(), vec![1.0 / n as f64; n])
            .expect("finite particle positions")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroSeries {
    pub seed: u64,
    pub n_particles: usize,
    pub frames: Vec<MicroFrame>,
}

impl MicroSeries {
    pub fn frame_near(&self, t: f64, tol: f64) -> Option<&MicroFrame> {
        self.frames
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|f| (f.t - t).abs() <= tol)
    }
}

pub fn simulate(cfg: &MicroConfig) -> Result<MicroSeries> {
    simulate_with(cfg, &cfg.schedule())
}

/// Runs one realization, keeping frames at the scheduled steps.
pub fn simulate_with(cfg: &MicroConfig, schedule: &Schedule) -> Result<MicroSeries> {
    cfg.validate()?;
    let (state, mut rngs) = sample_initial(cfg)?;
    let frames = drive(
        cfg.dt,
        cfg.t_final,
        schedule,
        state,
        |s, h, _| Ok(particle_step(s, h, &cfg.kernels, &cfg.rates, &mut rngs)),
        |s, step, t| MicroFrame {
            t,
            step,
            sigma: empirical(s).1,
            positions: s.positions.clone(),
            labels: s.labels.clone(),
        },
    )?;
    Ok(MicroSeries {
        seed: cfg.seed,
        n_particles: cfg.n_particles,
        frames,
    })
}

/// Independent realizations, one per seed, returned in seed order.
pub fn ensemble_run(
    cfg: &MicroConfig,
    seeds: &[u64],
    schedule: Option<&Schedule>,
) -> Vec<Result<MicroSeries>> {
    let run = |&seed: &u64| {
        let mut c = cfg.clone();
        c.seed = seed;
        match schedule {
            Some(s) => simulate_with(&c, s),
            None => simulate(&c),
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.iter().map(run).collect()
    }
}
