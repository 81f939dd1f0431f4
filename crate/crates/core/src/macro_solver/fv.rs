use super::{
    check_positivity, courant_number, drive, upwind_transport, Diagnostics, GridFrame, MacroConfig,
    MacroSeries, Schedule,
};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, LineField};
use crate::measures::{GridMeasure, LabelDist};

/// Grid state of the coupled `(mu_F, mu_L)` system.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub t: f64,
    pub step: usize,
    pub mu_f: GridMeasure,
    pub mu_l: GridMeasure,
}

impl GridState {
    pub fn initial(cfg: &MacroConfig) -> Result<Self> {
        let (mu_f, mu_l) = cfg.initial_grids()?;
        Ok(Self {
            t: 0.0,
            step: 0,
            mu_f,
            mu_l,
        })
    }

    pub fn nu(&self) -> GridMeasure {
        let sum = self
            .mu_f
            .cell_avg()
            .iter()
            .zip(self.mu_l.cell_avg())
            .map(|(f, l)| f + l)
            .collect();
        self.mu_f.with_values(sum)
    }

    pub fn total_mass(&self) -> f64 {
        let dx = self.mu_f.dx();
        self.mu_f
            .cell_avg()
            .iter()
            .chain(self.mu_l.cell_avg())
            .sum::<f64>()
            * dx
    }
}

/// Interface velocities `K^F * mu_F + K^L * mu_L` by midpoint quadrature over
/// cell centers; `n + 1` entries with zero at both walls.
pub(crate) fn interface_velocity(
    kf: &KernelSpec,
    kl: &KernelSpec,
    mu_f: &GridMeasure,
    mu_l: &GridMeasure,
) -> Vec<f64> {
    let ff = LineField::new(kf, mu_f);
    let fl = LineField::new(kl, mu_l);
    let n = mu_f.n_cells();
    (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                0.0
            } else {
                let x = mu_f.interface(i);
                ff.eval(x) + fl.eval(x)
            }
        })
        .collect()
}

/// One step of size `cfg.dt`: upwind transport of both populations, then the
/// reaction step with rates evaluated at the transported state.
pub fn fv_step(state: &GridState, cfg: &MacroConfig) -> Result<GridState> {
    advance(state, cfg, cfg.dt, state.step + 1)
}

fn advance(state: &GridState, cfg: &MacroConfig, h: f64, step: usize) -> Result<GridState> {
    let grid = &state.mu_f;
    let lambda = h / grid.dx();
    let vel = interface_velocity(
        &cfg.kernels.follower,
        &cfg.kernels.leader,
        &state.mu_f,
        &state.mu_l,
    );
    let total: Vec<f64> = state
        .mu_f
        .cell_avg()
        .iter()
        .zip(state.mu_l.cell_avg())
        .map(|(f, l)| f + l)
        .collect();
    let courant = courant_number(&vel, &total, lambda, cfg.cfl_density_floor);
    if courant > cfg.cfl_limit {
        return Err(Error::CflViolation {
            step,
            t: state.t,
            courant,
            limit: cfg.cfl_limit,
        });
    }
    let star_f = grid.with_values(upwind_transport(state.mu_f.cell_avg(), &vel, lambda));
    let star_l = grid.with_values(upwind_transport(state.mu_l.cell_avg(), &vel, lambda));

    let alpha_f = cfg.rates.follower.eval(&star_f, &star_l);
    let alpha_l = cfg.rates.leader.eval(&star_f, &star_l);
    let mut new_f = Vec::with_capacity(grid.n_cells());
    let mut new_l = Vec::with_capacity(grid.n_cells());
    for (&f, &l) in star_f.cell_avg().iter().zip(star_l.cell_avg()) {
        let exchange = h * (alpha_f * f - alpha_l * l);
        new_f.push(f - exchange);
        new_l.push(l + exchange);
    }
    let t = state.t + h;
    check_positivity(&new_f, step, t)?;
    check_positivity(&new_l, step, t)?;
    Ok(GridState {
        t,
        step,
        mu_f: grid.with_values(new_f),
        mu_l: grid.with_values(new_l),
    })
}

pub(crate) fn grid_frame(cfg: &MacroConfig, state: &GridState, step: usize, t: f64) -> GridFrame {
    let nu = state.nu();
    let diagnostics = Diagnostics::compute(cfg, t, &state.mu_f, &state.mu_l, &nu);
    GridFrame {
        t,
        step,
        mu_f: state.mu_f.clone(),
        mu_l: state.mu_l.clone(),
        sigma: LabelDist::from_masses(diagnostics.mass_f, diagnostics.mass_l).unwrap_or(
            LabelDist {
                p_f: f64::NAN,
                p_l: f64::NAN,
            },
        ),
        nu,
        diagnostics,
    }
}

/// Finite-volume solution recorded at the configured cadence.
pub fn fv_solve(cfg: &MacroConfig) -> Result<MacroSeries> {
    fv_solve_with(cfg, &cfg.schedule())
}

pub fn fv_solve_with(cfg: &MacroConfig, schedule: &Schedule) -> Result<MacroSeries> {
    cfg.validate()?;
    let init = GridState::initial(cfg)?;
    let frames = drive(
        cfg.dt,
        cfg.t_final,
        schedule,
        init,
        |s, h, step| {
            let mut next = advance(s, cfg, h, step)?;
            next.t = super::time_at(step, cfg.dt, cfg.t_final);
            Ok(next)
        },
        |s, step, t| grid_frame(cfg, s, step, t),
    )?;
    Ok(MacroSeries { frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::macro_solver::{Domain, InitialCondition, Populations, Profile};
    use crate::rates::RateSpec;
    use approx::assert_abs_diff_eq;

    fn reaction_only() -> MacroConfig {
        MacroConfig {
            domain: Domain {
                x_min: -1.0,
                x_max: 1.0,
                n_cells: 40,
            },
            dt: 0.01,
            t_final: 1.0,
            kernels: Populations {
                follower: KernelSpec::zero(),
                leader: KernelSpec::zero(),
            },
            rates: Populations {
                follower: RateSpec::constant(0.1),
                leader: RateSpec::constant(0.95),
            },
            initial: InitialCondition::Proportional {
                profile: Profile::Uniform,
                sigma_f: 0.75,
            },
            cfl_limit: 0.9,
            cfl_density_floor: 1e-9,
            record_every: None,
            cluster_threshold: 0.1,
        }
    }

    #[test]
    fn one_step_is_euler_step_of_mass_ode() {
        let cfg = reaction_only();
        let s0 = GridState::initial(&cfg).unwrap();
        let s1 = fv_step(&s0, &cfg).unwrap();
        let mf: f64 = s1.mu_f.cell_avg().iter().sum::<f64>() * s1.mu_f.dx();
        let expected = 0.75 + 0.01 * (-0.1 * 0.75 + 0.95 * 0.25);
        assert_abs_diff_eq!(mf, expected, epsilon = 1e-14);
    }

    #[test]
    fn zero_density_stays_zero() {
        let mut cfg = reaction_only();
        cfg.kernels.follower = KernelSpec::hegselmann_krause(0.3);
        let mut s = GridState::initial(&cfg).unwrap();
        s.mu_f = s.mu_f.scaled(0.0);
        s.mu_l = s.mu_l.scaled(0.0);
        let s1 = fv_step(&s, &cfg).unwrap();
        assert!(s1.mu_f.cell_avg().iter().all(|&v| v == 0.0));
        assert!(s1.mu_l.cell_avg().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_conserves_total_mass() {
        let mut cfg = reaction_only();
        cfg.kernels.follower = KernelSpec::hegselmann_krause(0.2);
        cfg.kernels.leader = KernelSpec::hegselmann_krause(0.6);
        let s0 = GridState::initial(&cfg).unwrap();
        let s1 = fv_step(&s0, &cfg).unwrap();
        assert!((s1.total_mass() - s0.total_mass()).abs() / s0.total_mass() < 1e-14);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let mut cfg = reaction_only();
        cfg.kernels.leader =
            KernelSpec::new(crate::kernels::KernelKind::SteeringDrift { target: 50.0 });
        cfg.dt = 0.04;
        let s0 = GridState::initial(&cfg).unwrap();
        assert!(matches!(
            fv_step(&s0, &cfg),
            Err(Error::CflViolation { step: 1, .. })
        ));
    }

    #[test]
    fn final_frame_lands_on_final_time() {
        let mut cfg = reaction_only();
        cfg.t_final = 0.105;
        let series = fv_solve(&cfg).unwrap();
        let last = series.last().unwrap();
        assert_eq!(last.step, 11);
        assert_abs_diff_eq!(last.t, 0.105, epsilon = 1e-15);
    }
}
