use leadfollow::harness::micro_macro_gap;
use leadfollow::macro_solver::{fv_solve_with, nu_sigma_solve_with, MacroConfig, Schedule};
use leadfollow::measures::{flat_distance, w1_distance_1d, DiscreteMeasure, Measure};
use leadfollow::micro_sim::{simulate_with, MicroConfig};
use leadfollow::presets;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct PresetRun {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub nu: Vec<Vec<f64>>,
    pub mu_f: Vec<Vec<f64>>,
    pub mass_f: Vec<f64>,
    pub mass_l: Vec<f64>,
    pub clusters: Vec<usize>,
}

fn load(name: &str, t_final: f64) -> Result<MacroConfig, String> {
    let mut cfg = presets::preset(name).map_err(|e| e.to_string())?;
    if t_final > 0.0 {
        cfg.t_final = t_final;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn every(cfg: &MacroConfig, max_frames: usize) -> Schedule {
    Schedule::Every(cfg.n_steps().div_ceil(max_frames.max(1)).max(1))
}

pub fn run_preset(name: &str, t_final: f64, max_frames: usize) -> Result<PresetRun, String> {
    let cfg = load(name, t_final)?;
    let series = fv_solve_with(&cfg, &every(&cfg, max_frames)).map_err(|e| e.to_string())?;
    let first = series.frames.first().ok_or("no frames")?;
    let x = (0..first.nu.n_cells())
        .map(|i| first.nu.center(i))
        .collect();
    let mut run = PresetRun {
        x,
        t: Vec::new(),
        nu: Vec::new(),
        mu_f: Vec::new(),
        mass_f: Vec::new(),
        mass_l: Vec::new(),
        clusters: Vec::new(),
    };
    for f in &series.frames {
        run.t.push(f.t);
        run.nu.push(f.nu.cell_avg().to_vec());
        run.mu_f.push(f.mu_f.cell_avg().to_vec());
        run.mass_f.push(f.diagnostics.mass_f);
        run.mass_l.push(f.diagnostics.mass_l);
        run.clusters.push(f.diagnostics.cluster_count);
    }
    Ok(run)
}

#[derive(Debug, Serialize)]
pub struct Distances {
    pub flat: f64,
    /// `None` when the masses differ.
    pub w1: Option<f64>,
    pub mass_a: f64,
    pub mass_b: f64,
}

pub fn distances(
    xs_a: &[f64],
    ws_a: &[f64],
    xs_b: &[f64],
    ws_b: &[f64],
) -> Result<Distances, String> {
    let a = DiscreteMeasure::from_1d(xs_a, ws_a).map_err(|e| e.to_string())?;
    let b = DiscreteMeasure::from_1d(xs_b, ws_b).map_err(|e| e.to_string())?;
    Ok(Distances {
        flat: flat_distance(&a, &b).map_err(|e| e.to_string())?,
        w1: w1_distance_1d(&a, &b).ok(),
        mass_a: a.mass(),
        mass_b: b.mass(),
    })
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub t: Vec<f64>,
    pub sigma_f_micro: Vec<f64>,
    pub sigma_f_macro: Vec<f64>,
    pub w1_space: Vec<f64>,
    /// Final particle positions, split by label.
    pub followers: Vec<f64>,
    pub leaders: Vec<f64>,
    pub x: Vec<f64>,
    /// Final mean-field density, normalized to unit mass.
    pub nu: Vec<f64>,
}

pub fn micro_vs_macro(name: &str, n: usize, seed: u64, t_final: f64) -> Result<Comparison, String> {
    let cfg = load(name, t_final)?;
    let micro = MicroConfig::from_macro(&cfg, n, seed);
    let schedule = every(&cfg, 100);
    let particles = simulate_with(&micro, &schedule).map_err(|e| e.to_string())?;
    let reference = nu_sigma_solve_with(&cfg, &schedule).map_err(|e| e.to_string())?;

    let mut out = Comparison {
        t: Vec::new(),
        sigma_f_micro: Vec::new(),
        sigma_f_macro: Vec::new(),
        w1_space: Vec::new(),
        followers: Vec::new(),
        leaders: Vec::new(),
        x: Vec::new(),
        nu: Vec::new(),
    };
    for (pf, gf) in particles.frames.iter().zip(&reference.frames) {
        let (w1, _) = micro_macro_gap(&particles, &reference, pf.t, cfg.dt / 2.0)
            .map_err(|e| e.to_string())?;
        out.t.push(pf.t);
        out.sigma_f_micro.push(pf.sigma.p_f);
        out.sigma_f_macro.push(gf.sigma.p_f);
        out.w1_space.push(w1);
    }
    if let (Some(pf), Some(gf)) = (particles.frames.last(), reference.frames.last()) {
        for (&x, label) in pf.positions.iter().zip(&pf.labels) {
            match label {
                leadfollow::rates::Population::F => out.followers.push(x),
                leadfollow::rates::Population::L => out.leaders.push(x),
            }
        }
        let mass: f64 = gf.nu.cell_avg().iter().sum::<f64>() * gf.nu.dx();
        out.x = (0..gf.nu.n_cells()).map(|i| gf.nu.center(i)).collect();
        out.nu = gf.nu.cell_avg().iter().map(|v| v / mass).collect();
    }
    Ok(out)
}
