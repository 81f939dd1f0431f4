use super::{
    check_positivity, courant_number, drive, fv_solve_with, time_at, upwind_transport, Diagnostics,
    GridFrame, MacroConfig, MacroSeries, Schedule,
};
use crate::error::{Error, Result};
use crate::kernels::CoupledLineField;
use crate::measures::{flat_distance, grid_to_discrete, GridMeasure, LabelDist, Measure};

/// Relative defect above which initial data count as non-proportional.
pub const H1_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NuSigmaState {
    pub t: f64,
    pub step: usize,
    pub nu: GridMeasure,
    pub sigma: LabelDist,
}

impl NuSigmaState {
    pub fn initial(cfg: &MacroConfig) -> Result<Self> {
        let (mu_f, mu_l) = cfg.initial_grids()?;
        let sigma = LabelDist::from_masses(mu_f.mass(), mu_l.mass())?;
        let nu = mu_f.with_values(
            mu_f.cell_avg()
                .iter()
                .zip(mu_l.cell_avg())
                .map(|(f, l)| f + l)
                .collect(),
        );
        Ok(Self {
            t: 0.0,
            step: 0,
            nu,
            sigma,
        })
    }
}

/// `mu_F = sigma(F) nu`, `mu_L = nu - mu_F`.
pub fn reconstruct_populations(nu: &GridMeasure, sigma: &LabelDist) -> (GridMeasure, GridMeasure) {
    let mu_f = nu.scaled(sigma.p_f);
    let mu_l = nu.with_values(
        nu.cell_avg()
            .iter()
            .zip(mu_f.cell_avg())
            .map(|(n, f)| n - f)
            .collect(),
    );
    (mu_f, mu_l)
}

/// One forward-Euler step of the `nu`-`sigma` system: `nu` is transported by
/// the label-weighted field and `sigma` advanced by the transition matrix,
/// both with coefficients frozen at the pre-step state.
pub fn nu_sigma_step(state: &NuSigmaState, cfg: &MacroConfig) -> Result<NuSigmaState> {
    advance(state, cfg, cfg.dt, state.step + 1)
}

fn advance(state: &NuSigmaState, cfg: &MacroConfig, h: f64, step: usize) -> Result<NuSigmaState> {
    let nu = &state.nu;
    let sigma = state.sigma;
    let lambda = h / nu.dx();
    let field = CoupledLineField::new(&cfg.kernels.follower, &cfg.kernels.leader, nu, sigma);
    let n = nu.n_cells();
    let vel: Vec<f64> = (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                0.0
            } else {
                field.eval(nu.interface(i))
            }
        })
        .collect();
    let courant = courant_number(&vel, nu.cell_avg(), lambda, cfg.cfl_density_floor);
    if courant > cfg.cfl_limit {
        return Err(Error::CflViolation {
            step,
            t: state.t,
            courant,
            limit: cfg.cfl_limit,
        });
    }

    let (mu_f, mu_l) = reconstruct_populations(nu, &sigma);
    let alpha_f = cfg.rates.follower.eval(&mu_f, &mu_l);
    let alpha_l = cfg.rates.leader.eval(&mu_f, &mu_l);
    let p_f = sigma.p_f + h * (-alpha_f * sigma.p_f + alpha_l * sigma.p_l);
    let sigma = LabelDist::new(p_f.clamp(0.0, 1.0))?;

    let new_nu = upwind_transport(nu.cell_avg(), &vel, lambda);
    let t = state.t + h;
    check_positivity(&new_nu, step, t)?;
    Ok(NuSigmaState {
        t,
        step,
        nu: nu.with_values(new_nu),
        sigma,
    })
}

fn frame(cfg: &MacroConfig, state: &NuSigmaState, step: usize, t: f64) -> GridFrame {
    let (mu_f, mu_l) = reconstruct_populations(&state.nu, &state.sigma);
    let diagnostics = Diagnostics::compute(cfg, t, &mu_f, &mu_l, &state.nu);
    GridFrame {
        t,
        step,
        mu_f,
        mu_l,
        nu: state.nu.clone(),
        sigma: state.sigma,
        diagnostics,
    }
}

pub fn nu_sigma_solve(cfg: &MacroConfig) -> Result<MacroSeries> {
    nu_sigma_solve_with(cfg, &cfg.schedule())
}

pub fn nu_sigma_solve_with(cfg: &MacroConfig, schedule: &Schedule) -> Result<MacroSeries> {
    cfg.validate()?;
    let init = NuSigmaState::initial(cfg)?;
    let frames = drive(
        cfg.dt,
        cfg.t_final,
        schedule,
        init,
        |s, h, step| {
            let mut next = advance(s, cfg, h, step)?;
            next.t = time_at(step, cfg.dt, cfg.t_final);
            Ok(next)
        },
        |s, step, t| frame(cfg, s, step, t),
    )?;
    Ok(MacroSeries { frames })
}

/// Largest cellwise `|mu_F - sigma(F) nu|`, relative to the peak of `nu`.
pub fn proportionality_defect(mu_f: &GridMeasure, mu_l: &GridMeasure) -> f64 {
    let (mf, ml) = (mu_f.mass(), mu_l.mass());
    let total = mf + ml;
    if total <= 0.0 {
        return 0.0;
    }
    let p = mf / total;
    let mut peak = 0.0_f64;
    let mut defect = 0.0_f64;
    for (&f, &l) in mu_f.cell_avg().iter().zip(mu_l.cell_avg()) {
        peak = peak.max(f + l);
        defect = defect.max((f - p * (f + l)).abs());
    }
    if peak > 0.0 {
        defect / peak
    } else {
        0.0
    }
}

/// Runs the coupled and the `nu`-`sigma` solvers from the same proportional
/// data and returns the largest
/// `flat(mu_F, sigma(F) nu) + flat(mu_L, sigma(L) nu)` over recorded frames.
pub fn equivalence_check(cfg: &MacroConfig) -> Result<f64> {
    cfg.validate()?;
    let (mu_f, mu_l) = cfg.initial_grids()?;
    let defect = proportionality_defect(&mu_f, &mu_l);
    if defect > H1_TOLERANCE {
        return Err(Error::H1Violation { defect });
    }
    let schedule = cfg.schedule();
    let coupled = fv_solve_with(cfg, &schedule)?;
    let reduced = nu_sigma_solve_with(cfg, &schedule)?;
    let mut gap = 0.0_f64;
    for (a, b) in coupled.frames.iter().zip(&reduced.frames) {
        debug_assert_eq!(a.step, b.step);
        let g = flat_distance(&grid_to_discrete(&a.mu_f), &grid_to_discrete(&b.mu_f))?
            + flat_distance(&grid_to_discrete(&a.mu_l), &grid_to_discrete(&b.mu_l))?;
        gap = gap.max(g);
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::macro_solver::{Domain, InitialCondition, Populations, Profile};
    use crate::rates::RateSpec;
    use approx::assert_abs_diff_eq;

    fn cfg(rates: (f64, f64)) -> MacroConfig {
        MacroConfig {
            domain: Domain {
                x_min: -1.0,
                x_max: 1.0,
                n_cells: 40,
            },
            dt: 0.01,
            t_final: 2.0,
            kernels: Populations {
                follower: KernelSpec::hegselmann_krause(0.2),
                leader: KernelSpec::hegselmann_krause(0.6),
            },
            rates: Populations {
                follower: RateSpec::constant(rates.0),
                leader: RateSpec::constant(rates.1),
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
    fn reconstruction_examples() {
        let nu = GridMeasure::new(-1.0, 1.0, vec![0.5; 4]).unwrap();
        let (f, l) = reconstruct_populations(&nu, &LabelDist::new(1.0).unwrap());
        assert_eq!(f, nu);
        assert_eq!(l.mass(), 0.0);
        let (f, l) = reconstruct_populations(&nu, &LabelDist::new(0.75).unwrap());
        assert_abs_diff_eq!(f.mass(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(l.mass(), 0.25, epsilon = 1e-15);
        for ((a, b), c) in f.cell_avg().iter().zip(l.cell_avg()).zip(nu.cell_avg()) {
            assert_eq!(a + b, *c);
        }
    }

    #[test]
    fn zero_rates_keep_sigma_and_mass() {
        let series = nu_sigma_solve(&cfg((0.0, 0.0))).unwrap();
        for f in &series.frames {
            assert_eq!(f.sigma.p_f, 0.75);
            assert_abs_diff_eq!(f.nu.mass(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sigma_stays_normalized() {
        let series = nu_sigma_solve(&cfg((0.1, 0.95))).unwrap();
        for f in &series.frames {
            assert_eq!(f.sigma.p_f + f.sigma.p_l, 1.0);
        }
    }

    #[test]
    fn equivalence_gap_vanishes_at_start_and_stays_small() {
        let gap = equivalence_check(&cfg((0.1, 0.95))).unwrap();
        assert!(gap < 1e-10, "gap {gap}");
    }

    #[test]
    fn non_proportional_data_are_refused() {
        let mut c = cfg((0.1, 0.95));
        c.initial = InitialCondition::Separate {
            follower: Profile::Uniform,
            leader: Profile::Plateau {
                inner: 0.3,
                outer: 1.3,
            },
        };
        assert!(matches!(
            equivalence_check(&c),
            Err(Error::H1Violation { .. })
        ));
    }
}
