use super::{drive, Diagnostics, Domain, MacroConfig, Schedule, MAX_DEFAULT_FRAMES};
use crate::error::{Error, Result};
use crate::kernels::LineField;
use crate::measures::{DiscreteMeasure, GridMeasure};

/// Atoms closer than this are merged after each step.
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// Atomic state on the line: both populations share one set of positions,
/// each with its own weights (zero allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct AtomState {
    pub t: f64,
    pub step: usize,
    pub positions: Vec<f64>,
    pub w_f: Vec<f64>,
    pub w_l: Vec<f64>,
}

impl AtomState {
    /// One atom per cell center where either initial density is positive.
    pub fn from_grids(mu_f: &GridMeasure, mu_l: &GridMeasure) -> Self {
        let dx = mu_f.dx();
        let mut s = AtomState {
            t: 0.0,
            step: 0,
            positions: Vec::new(),
            w_f: Vec::new(),
            w_l: Vec::new(),
        };
        for (i, (&f, &l)) in mu_f.cell_avg().iter().zip(mu_l.cell_avg()).enumerate() {
            if f > 0.0 || l > 0.0 {
                s.positions.push(mu_f.center(i));
                s.w_f.push(dx * f.max(0.0));
                s.w_l.push(dx * l.max(0.0));
            }
        }
        s
    }

    pub fn mu_f(&self) -> DiscreteMeasure {
        DiscreteMeasure::from_1d(&self.positions, &self.w_f).expect("valid atoms")
    }

    pub fn mu_l(&self) -> DiscreteMeasure {
        DiscreteMeasure::from_1d(&self.positions, &self.w_l).expect("valid atoms")
    }

    pub fn total_mass(&self) -> f64 {
        self.w_f.iter().chain(&self.w_l).sum()
    }

    fn atoms(&self, w: &[f64]) -> Vec<(f64, f64)> {
        self.positions
            .iter()
            .copied()
            .zip(w.iter().copied())
            .collect()
    }

    /// Largest `|x|` over atoms carrying mass.
    pub fn support_radius(&self) -> f64 {
        self.positions
            .iter()
            .zip(self.w_f.iter().zip(&self.w_l))
            .filter(|(_, (f, l))| **f > 0.0 || **l > 0.0)
            .fold(0.0, |r, (x, _)| r.max(x.abs()))
    }

    fn merge(&mut self) {
        let mut order: Vec<usize> = (0..self.positions.len()).collect();
        order.sort_by(|&a, &b| self.positions[a].total_cmp(&self.positions[b]));
        let (mut xs, mut fs, mut ls) = (Vec::new(), Vec::new(), Vec::<f64>::new());
        for i in order {
            let x = self.positions[i];
            match xs.last() {
                Some(&last) if x - last <= MERGE_TOLERANCE => {
                    *fs.last_mut().unwrap() += self.w_f[i];
                    *ls.last_mut().unwrap() += self.w_l[i];
                }
                _ => {
                    xs.push(x);
                    fs.push(self.w_f[i]);
                    ls.push(self.w_l[i]);
                }
            }
        }
        self.positions = xs;
        self.w_f = fs;
        self.w_l = ls;
    }
}

/// Reaction then push-forward, coefficients frozen at the pre-step state.
pub fn euler_pushforward_step(
    state: &AtomState,
    dt_sub: f64,
    cfg: &MacroConfig,
) -> Result<AtomState> {
    let mu_f = state.mu_f();
    let mu_l = state.mu_l();
    let alpha_f = cfg.rates.follower.eval(&mu_f, &mu_l);
    let alpha_l = cfg.rates.leader.eval(&mu_f, &mu_l);
    let field_f = LineField::from_atoms(&cfg.kernels.follower, state.atoms(&state.w_f));
    let field_l = LineField::from_atoms(&cfg.kernels.leader, state.atoms(&state.w_l));

    let step = state.step + 1;
    let mut next = AtomState {
        t: state.t + dt_sub,
        step,
        positions: Vec::with_capacity(state.positions.len()),
        w_f: Vec::with_capacity(state.positions.len()),
        w_l: Vec::with_capacity(state.positions.len()),
    };
    for ((&x, &f), &l) in state.positions.iter().zip(&state.w_f).zip(&state.w_l) {
        let wf = (1.0 - dt_sub * alpha_f) * f + dt_sub * alpha_l * l;
        let wl = (1.0 - dt_sub * alpha_l) * l + dt_sub * alpha_f * f;
        for weight in [wf, wl] {
            if weight < 0.0 {
                return Err(Error::NegativeWeight { step, weight });
            }
        }
        next.positions
            .push(x + dt_sub * (field_f.eval(x) + field_l.eval(x)));
        next.w_f.push(wf);
        next.w_l.push(wl);
    }
    next.merge();
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomFrame {
    pub t: f64,
    pub step: usize,
    pub mu_f: DiscreteMeasure,
    pub mu_l: DiscreteMeasure,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomSeries {
    pub frames: Vec<AtomFrame>,
}

impl AtomSeries {
    pub fn last(&self) -> Option<&AtomFrame> {
        self.frames.last()
    }
}

/// Histogram density of 1D atoms on `domain`; atoms outside are clamped to
/// the end cells.
pub fn atoms_to_grid(domain: &Domain, m: &DiscreteMeasure) -> GridMeasure {
    let dx = domain.dx();
    let mut values = vec![0.0; domain.n_cells];
    for (x, w) in m.iter() {
        let cell = ((x[0] - domain.x_min) / dx)
            .floor()
            .clamp(0.0, (domain.n_cells - 1) as f64) as usize;
        values[cell] += w / dx;
    }
    GridMeasure::new(domain.x_min, domain.x_max, values).expect("valid domain")
}

impl AtomFrame {
    /// Both populations binned onto `domain`.
    pub fn to_grids(&self, domain: &Domain) -> (GridMeasure, GridMeasure) {
        (
            atoms_to_grid(domain, &self.mu_f),
            atoms_to_grid(domain, &self.mu_l),
        )
    }
}

/// Euler push-forward scheme with `dt = t_final / 2^k`.
pub fn euler_pushforward_solve(cfg: &MacroConfig, k: u32) -> Result<AtomSeries> {
    cfg.validate()?;
    let n_steps = 1usize << k;
    let dt = cfg.t_final / n_steps as f64;
    if dt * cfg.max_rate() >= 1.0 {
        return Err(Error::config(
            "k",
            format!("dt * M_alpha = {} must stay below 1", dt * cfg.max_rate()),
        ));
    }
    let (mu_f, mu_l) = cfg.initial_grids()?;
    let init = AtomState::from_grids(&mu_f, &mu_l);
    let schedule = Schedule::Every(n_steps.div_ceil(MAX_DEFAULT_FRAMES).max(1));
    let frames = drive(
        dt,
        cfg.t_final,
        &schedule,
        init,
        |s, h, _| euler_pushforward_step(s, h, cfg),
        |s, step, t| {
            let (mu_f, mu_l) = (s.mu_f(), s.mu_l());
            let nu = atoms_to_grid(&cfg.domain, &mu_f.plus(&mu_l).expect("same dimension"));
            let diagnostics = Diagnostics::compute(cfg, t, &mu_f, &mu_l, &nu);
            AtomFrame {
                t,
                step,
                mu_f,
                mu_l,
                diagnostics,
            }
        },
    )?;
    Ok(AtomSeries { frames })
}
