//! The five experiments of the reference study, parameter for parameter.
//!
//! All run on `[-1, 1]` with 80 cells, zero-flux walls and
//! `sigma_0 = (0.75, 0.25)`.

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::macro_solver::{
    Domain, GaussianBump, InitialCondition, MacroConfig, Populations, Profile,
};
use crate::rates::{Population, RateSpec, DEFAULT_MASS_GUARD};

pub const PRESET_NAMES: [&str; 5] = ["test-ia", "test-ib", "test-iia", "test-iib", "test-iii"];

const STEEPNESS: f64 = 1000.0;
const SIGMA_F0: f64 = 0.75;

/// Test Ib thresholds as printed in the parameter table; the prose gives
/// `(0.15, 0.25)` instead.
pub const TEST_IB_TABLE_DELTAS: (f64, f64) = (0.35, 0.2);
pub const TEST_IB_TEXT_DELTAS: (f64, f64) = (0.15, 0.25);

fn base(
    dt: f64,
    t_final: f64,
    kernels: Populations<KernelSpec>,
    rates: Populations<RateSpec>,
    initial: InitialCondition,
) -> MacroConfig {
    MacroConfig {
        domain: Domain {
            x_min: -1.0,
            x_max: 1.0,
            n_cells: 80,
        },
        dt,
        t_final,
        kernels,
        rates,
        initial,
        cfl_limit: 0.9,
        cfl_density_floor: 1e-9,
        record_every: None,
        cluster_threshold: 0.1,
    }
}

fn uniform() -> InitialCondition {
    InitialCondition::Proportional {
        profile: Profile::Uniform,
        sigma_f: SIGMA_F0,
    }
}

fn hk_kernels() -> Populations<KernelSpec> {
    Populations {
        follower: KernelSpec::hegselmann_krause(0.2),
        leader: KernelSpec::hegselmann_krause(0.6),
    }
}

pub fn test_ia() -> MacroConfig {
    base(
        0.0127,
        25.0,
        hk_kernels(),
        Populations {
            follower: RateSpec::constant(0.1),
            leader: RateSpec::constant(0.95),
        },
        uniform(),
    )
}

/// Test Ib with thresholds `(delta_F, delta_L)`.
pub fn test_ib_with(deltas: (f64, f64)) -> MacroConfig {
    base(
        0.0127,
        25.0,
        hk_kernels(),
        Populations {
            follower: RateSpec::VarianceSigmoid {
                on: Population::L,
                delta: deltas.0,
                steepness: STEEPNESS,
                mass_guard: DEFAULT_MASS_GUARD,
            },
            leader: RateSpec::MassSigmoid {
                on: Population::L,
                delta: deltas.1,
                steepness: STEEPNESS,
            },
        },
        uniform(),
    )
}

pub fn test_ib() -> MacroConfig {
    test_ib_with(TEST_IB_TABLE_DELTAS)
}

fn aggregation(attract: f64, repel: f64, delta_f: f64, initial: InitialCondition) -> MacroConfig {
    let eps = 0.001;
    base(
        0.0063,
        25.0,
        Populations {
            follower: KernelSpec::new(KernelKind::PowerLawRepel {
                strength: 0.1,
                exponent: repel,
                eps,
            }),
            leader: KernelSpec::new(KernelKind::PowerLawAttract {
                exponent: attract,
                eps,
            }),
        },
        Populations {
            follower: RateSpec::VarianceSigmoid {
                on: Population::F,
                delta: delta_f,
                steepness: STEEPNESS,
                mass_guard: DEFAULT_MASS_GUARD,
            },
            leader: RateSpec::constant(0.25),
        },
        initial,
    )
}

pub fn test_iia() -> MacroConfig {
    aggregation(
        3.0,
        0.75,
        0.15,
        InitialCondition::Proportional {
            profile: Profile::Plateau {
                inner: 0.3,
                outer: 1.3,
            },
            sigma_f: SIGMA_F0,
        },
    )
}

pub fn test_iib() -> MacroConfig {
    let bump = |weight, center, variance| GaussianBump {
        weight,
        center,
        variance,
    };
    aggregation(
        2.0,
        0.5,
        0.2,
        InitialCondition::Separate {
            follower: Profile::Gaussian {
                bumps: vec![bump(SIGMA_F0, 0.0, 1.0 / 30.0)],
            },
            leader: Profile::Gaussian {
                bumps: vec![
                    bump((1.0 - SIGMA_F0) / 2.0, 0.6, 1.0 / 90.0),
                    bump((1.0 - SIGMA_F0) / 2.0, -0.6, 1.0 / 90.0),
                ],
            },
        },
    )
}

pub const TEST_III_TARGET: f64 = 0.5;

/// Steering test. The initial data are not printed; uniform proportional
/// data as in the other tests are used.
pub fn test_iii() -> MacroConfig {
    base(
        0.0127,
        15.0,
        Populations {
            follower: KernelSpec::new(KernelKind::CombinedPowerLaw {
                attract_exponent: 2.0,
                repel_strength: 0.05,
                repel_exponent: 1.0,
                eps: 1e-4,
            }),
            leader: KernelSpec::new(KernelKind::SteeringDrift {
                target: TEST_III_TARGET,
            }),
        },
        Populations {
            follower: RateSpec::TargetVarianceSigmoid {
                target: TEST_III_TARGET,
                delta: 0.15,
                steepness: STEEPNESS,
                mass_guard: DEFAULT_MASS_GUARD,
            },
            leader: RateSpec::constant(0.25),
        },
        uniform(),
    )
}

pub fn preset(name: &str) -> Result<MacroConfig> {
    match name {
        "test-ia" => Ok(test_ia()),
        "test-ib" => Ok(test_ib()),
        "test-iia" => Ok(test_iia()),
        "test-iib" => Ok(test_iib()),
        "test-iii" => Ok(test_iii()),
        other => Err(Error::config(
            "preset",
            format!(
                "unknown preset `{other}`; valid names: {}",
                PRESET_NAMES.join(", ")
            ),
        )),
    }
}
