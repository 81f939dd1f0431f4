//! Transition-rate functionals `alpha_F` (follower -> leader) and `alpha_L`
//! (leader -> follower).
//!
//! Rates are scalars depending on the global state `(mu_F, mu_L)` only, never
//! on position.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{flat_distance, DiscreteMeasure, Measure};

/// Below this mass, variance denominators are clamped.
pub const DEFAULT_MASS_GUARD: f64 = 1e-6;

/// Sigmoid exponents are clamped to `+-EXP_CLAMP` before `exp`.
pub const EXP_CLAMP: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Population {
    F,
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateSpec {
    Constant {
        value: f64,
    },
    /// `sigmoid(delta, steepness, V(mu_on))`
    VarianceSigmoid {
        on: Population,
        delta: f64,
        steepness: f64,
        #[serde(default = "default_guard")]
        mass_guard: f64,
    },
    /// `sigmoid(delta, steepness, |mu_on|)`
    MassSigmoid {
        on: Population,
        delta: f64,
        steepness: f64,
    },
    /// `sigmoid(delta, steepness, D(mu_F))` with `D` the mean squared distance
    /// of the followers to `target`.
    TargetVarianceSigmoid {
        target: f64,
        delta: f64,
        steepness: f64,
        #[serde(default = "default_guard")]
        mass_guard: f64,
    },
    /// Mollified step of `|mu_on|`: 1 below `threshold`, `low` above it, with a
    /// linear ramp of total `width`.
    MollifiedMassThreshold {
        on: Population,
        threshold: f64,
        low: f64,
        width: f64,
    },
}

fn default_guard() -> f64 {
    DEFAULT_MASS_GUARD
}

impl RateSpec {
    pub fn constant(value: f64) -> Self {
        RateSpec::Constant { value }
    }

    /// Upper bound `M_alpha` of the rate over all states.
    pub fn max_rate(&self) -> f64 {
        match *self {
            RateSpec::Constant { value } => value,
            RateSpec::MollifiedMassThreshold { low, .. } => low.max(1.0),
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        };
        match *self {
            RateSpec::Constant { value } => {
                if value >= 0.0 && value.is_finite() {
                    Ok(())
                } else {
                    Err(format!("value must be a nonnegative rate, got {value}"))
                }
            }
            RateSpec::VarianceSigmoid {
                delta,
                steepness,
                mass_guard,
                ..
            } => {
                positive("delta", delta)?;
                positive("steepness", steepness)?;
                positive("mass_guard", mass_guard)
            }
            RateSpec::MassSigmoid {
                delta, steepness, ..
            } => {
                positive("delta", delta)?;
                positive("steepness", steepness)
            }
            RateSpec::TargetVarianceSigmoid {
                target,
                delta,
                steepness,
                mass_guard,
            } => {
                if !target.is_finite() {
                    return Err(format!("target must be finite, got {target}"));
                }
                positive("delta", delta)?;
                positive("steepness", steepness)?;
                positive("mass_guard", mass_guard)
            }
            RateSpec::MollifiedMassThreshold {
                threshold,
                low,
                width,
                ..
            } => {
                positive("threshold", threshold)?;
                positive("width", width)?;
                if (0.0..1.0).contains(&low) {
                    Ok(())
                } else {
                    Err(format!("low must lie in [0, 1), got {low}"))
                }
            }
        }
    }

    /// Rate at the state `(mu_f, mu_l)`.
    pub fn eval<A: Measure, B: Measure>(&self, mu_f: &A, mu_l: &B) -> f64 {
        let pick_mass = |on: Population| match on {
            Population::F => mu_f.mass(),
            Population::L => mu_l.mass(),
        };
        match *self {
            RateSpec::Constant { value } => value,
            RateSpec::VarianceSigmoid {
                on,
                delta,
                steepness,
                mass_guard,
            } => {
                let v = match on {
                    Population::F => variance_guarded(mu_f, mass_guard),
                    Population::L => variance_guarded(mu_l, mass_guard),
                };
                sigmoid_switch(delta, steepness, v)
            }
            RateSpec::MassSigmoid {
                on,
                delta,
                steepness,
            } => sigmoid_switch(delta, steepness, pick_mass(on)),
            RateSpec::TargetVarianceSigmoid {
                target,
                delta,
                steepness,
                mass_guard,
            } => sigmoid_switch(
                delta,
                steepness,
                target_variance_guarded(mu_f, target, mass_guard),
            ),
            RateSpec::MollifiedMassThreshold {
                on,
                threshold,
                low,
                width,
            } => {
                let m = pick_mass(on);
                let ramp = ((threshold + 0.5 * width - m) / width).clamp(0.0, 1.0);
                low + (1.0 - low) * ramp
            }
        }
    }
}

/// `1 / (1 + exp(c (delta - v)))`, with the exponent clamped to avoid overflow.
pub fn sigmoid_switch(delta: f64, c: f64, v: f64) -> f64 {
    let e = (c * (delta - v)).clamp(-EXP_CLAMP, EXP_CLAMP);
    1.0 / (1.0 + e.exp())
}

/// Normalized spread `(1/|mu|^2) * iint |x - y|^2 dmu dmu` with the default
/// mass guard.
pub fn variance<M: Measure>(m: &M) -> f64 {
    variance_guarded(m, DEFAULT_MASS_GUARD)
}

/// Spread with denominator `max(|mu|, guard)^2`.
///
/// Uses `iint |x - y|^2 dmu dmu = 2 |mu| int |x - mean|^2 dmu`, evaluated in
/// two passes.
pub fn variance_guarded<M: Measure>(m: &M, guard: f64) -> f64 {
    let dim = m.dim();
    let mut mass = 0.0;
    let mut first = vec![0.0; dim];
    m.for_each_atom(|x, w| {
        mass += w;
        for (f, xi) in first.iter_mut().zip(x) {
            *f += w * xi;
        }
    });
    if mass <= 0.0 {
        return 0.0;
    }
    let mean: Vec<f64> = first.iter().map(|f| f / mass).collect();
    let mut second = 0.0;
    m.for_each_atom(|x, w| {
        let d2: f64 = x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        second += w * d2;
    });
    let denom = mass.max(guard);
    (2.0 * mass * second / (denom * denom)).max(0.0)
}

/// Mean squared distance to `target` with the default mass guard.
pub fn target_variance<M: Measure>(m: &M, target: f64) -> f64 {
    target_variance_guarded(m, target, DEFAULT_MASS_GUARD)
}

/// `(1/max(|mu|, guard)) * int |target - x|^2 dmu`; the target applies to
/// every coordinate.
pub fn target_variance_guarded<M: Measure>(m: &M, target: f64, guard: f64) -> f64 {
    let mut mass = 0.0;
    let mut acc = 0.0;
    m.for_each_atom(|x, w| {
        mass += w;
        acc += w * x
            .iter()
            .map(|xi| (target - xi) * (target - xi))
            .sum::<f64>();
    });
    if mass <= 0.0 {
        return 0.0;
    }
    acc / mass.max(guard)
}

/// `(alpha_F, alpha_L)` at the state `(mu_f, mu_l)`.
pub fn eval_rates<A: Measure, B: Measure>(
    spec_f: &RateSpec,
    spec_l: &RateSpec,
    mu_f: &A,
    mu_l: &B,
) -> (f64, f64) {
    (spec_f.eval(mu_f, mu_l), spec_l.eval(mu_f, mu_l))
}

/// Birth-death matrix acting on `(sigma(F), sigma(L))^T`.
pub fn transition_matrix(alpha_f: f64, alpha_l: f64) -> [[f64; 2]; 2] {
    [[-alpha_f, alpha_l], [alpha_f, -alpha_l]]
}

/// A pair of population states `((mu_F, mu_L), (nu_F, nu_L))`.
pub type StatePair = (
    (DiscreteMeasure, DiscreteMeasure),
    (DiscreteMeasure, DiscreteMeasure),
);

/// Empirical Lipschitz ratio of the rates with respect to the flat distance:
/// `max |alpha(mu) - alpha(nu)| / (W(mu_F, nu_F) + W(mu_L, nu_L))` over the
/// pairs, taken over both rates.
///
/// Pairs at zero distance with equal rates are skipped.
pub fn lipschitz_probe(spec_f: &RateSpec, spec_l: &RateSpec, pairs: &[StatePair]) -> Result<f64> {
    let mut ratio: f64 = 0.0;
    for ((mu_f, mu_l), (nu_f, nu_l)) in pairs {
        let (af, al) = eval_rates(spec_f, spec_l, mu_f, mu_l);
        let (bf, bl) = eval_rates(spec_f, spec_l, nu_f, nu_l);
        let delta = (af - bf).abs().max((al - bl).abs());
        let dist = flat_distance(mu_f, nu_f)? + flat_distance(mu_l, nu_l)?;
        if dist <= 1e-15 {
            if delta > 1e-9 {
                return Err(Error::DegeneratePair { delta });
            }
            continue;
        }
        ratio = ratio.max(delta / dist);
    }
    Ok(ratio)
}

/// Random states of total mass 1 supported in `[-1, 1]`, each paired with a
/// perturbation of size `magnitude`: every atom moves by at most `magnitude`
/// (staying in `[-1, 1]`) and up to `magnitude` mass passes between the
/// populations.
///
/// The same `seed` gives the same base states and directions for every
/// magnitude, so probes at different magnitudes are comparable.
pub fn perturbation_pairs(count: usize, atoms: usize, magnitude: f64, seed: u64) -> Vec<StatePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, mass: f64| {
        let x: Vec<f64> = (0..atoms)
            .map(|_| 2.0 * rng.random::<f64>() - 1.0)
            .collect();
        let w: Vec<f64> = (0..atoms).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v * mass / total).collect();
        (x, w)
    };
    (0..count)
        .map(|_| {
            let m_f = 0.05 + 0.9 * rng.random::<f64>();
            let (xf, wf) = draw(&mut rng, m_f);
            let (xl, wl) = draw(&mut rng, 1.0 - m_f);
            let shift = |x: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
                x.iter()
                    .map(|xi| (xi + magnitude * (2.0 * rng.random::<f64>() - 1.0)).clamp(-1.0, 1.0))
                    .collect()
            };
            let yf = shift(&xf, &mut rng);
            let yl = shift(&xl, &mut rng);
            let transfer = magnitude * (2.0 * rng.random::<f64>() - 1.0);
            let n_f = (m_f + transfer).clamp(0.01, 0.99);
            let vf: Vec<f64> = wf.iter().map(|w| w * n_f / m_f).collect();
            let vl: Vec<f64> = wl.iter().map(|w| w * (1.0 - n_f) / (1.0 - m_f)).collect();
            let dm = |x: &[f64], w: &[f64]| DiscreteMeasure::from_1d(x, w).expect("finite atoms");
            ((dm(&xf, &wf), dm(&xl, &wl)), (dm(&yf, &vf), dm(&yl, &vl)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{DiscreteMeasure, GridMeasure};
    use approx::assert_abs_diff_eq;

    fn dm(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_1d(xs, ws).unwrap()
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance(&dm(&[0.3], &[2.0])), 0.0);
        // direct double sum: 2 * (0.5 * 0.5 * 1) / 1
        assert_abs_diff_eq!(
            variance(&dm(&[0.0, 1.0], &[0.5, 0.5])),
            0.5,
            epsilon = 1e-15
        );
        let m = dm(&[-0.4, 0.1, 0.7], &[0.2, 0.5, 0.3]);
        assert_abs_diff_eq!(
            variance(&m),
            variance(&m.scaled(3.7).unwrap()),
            epsilon = 1e-14
        );
    }

    #[test]
    fn variance_matches_double_sum() {
        let m = dm(&[-0.9, -0.2, 0.15, 0.8], &[0.1, 0.3, 0.25, 0.05]);
        let mass: f64 = m.weights().iter().sum();
        let mut direct = 0.0;
        for (x, w) in m.iter() {
            for (y, v) in m.iter() {
                direct += w * v * (x[0] - y[0]).powi(2);
            }
        }
        assert_abs_diff_eq!(variance(&m), direct / (mass * mass), epsilon = 1e-14);
    }

    #[test]
    fn variance_guard_clamps_denominator() {
        let m = dm(&[0.0, 1.0], &[1e-8, 1e-8]);
        let raw = 2.0 * 2e-8 * (2.0 * 1e-8 * 0.25);
        assert_abs_diff_eq!(variance(&m), raw / 1e-12, epsilon = 1e-18);
    }

    #[test]
    fn grid_variance_of_uniform_density() {
        // Uniform on [-1, 1]: iint |x-y|^2 = 2 Var = 2/3, minus midpoint error.
        let g = GridMeasure::new(-1.0, 1.0, vec![0.5; 400]).unwrap();
        assert_abs_diff_eq!(variance(&g), 2.0 / 3.0, epsilon = 1e-4);
    }

    #[test]
    fn target_variance_examples() {
        assert_eq!(target_variance(&dm(&[0.5], &[1.0]), 0.5), 0.0);
        assert_abs_diff_eq!(target_variance(&dm(&[0.0], &[1.0]), 0.5), 0.25);
        assert_abs_diff_eq!(
            target_variance(&dm(&[0.0, 1.0], &[0.5, 0.5]), 0.5),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_switch(0.3, 1000.0, 0.3), 0.5);
        assert!((sigmoid_switch(0.3, 1000.0, 0.4) - 1.0).abs() < 1e-10);
        assert!(sigmoid_switch(0.3, 1000.0, 0.2) < 1e-10);
        // no overflow far from the threshold
        assert_eq!(sigmoid_switch(0.0, 1e6, -10.0), 1.0 / (1.0 + 500f64.exp()));
    }

    #[test]
    fn eval_rates_examples() {
        let m = dm(&[0.0], &[1.0]);
        assert_eq!(
            eval_rates(&RateSpec::constant(0.1), &RateSpec::constant(0.95), &m, &m),
            (0.1, 0.95)
        );
        let mass_switch = RateSpec::MassSigmoid {
            on: Population::L,
            delta: 0.2,
            steepness: 1000.0,
        };
        let mu_l = dm(&[0.0], &[0.2]);
        assert_eq!(mass_switch.eval(&m, &mu_l), 0.5);
        let var_switch = RateSpec::VarianceSigmoid {
            on: Population::L,
            delta: 0.35,
            steepness: 1000.0,
            mass_guard: DEFAULT_MASS_GUARD,
        };
        assert!(var_switch.eval(&m, &dm(&[0.0], &[0.25])) < 1e-100);
    }

    #[test]
    fn transition_matrix_examples() {
        assert_eq!(transition_matrix(0.1, 0.95), [[-0.1, 0.95], [0.1, -0.95]]);
        assert_eq!(transition_matrix(0.0, 0.0), [[-0.0, 0.0], [0.0, -0.0]]);
    }

    #[test]
    fn mollified_threshold_ramps_between_levels() {
        let spec = RateSpec::MollifiedMassThreshold {
            on: Population::L,
            threshold: 0.1,
            low: 0.2,
            width: 0.02,
        };
        let f = dm(&[0.0], &[0.5]);
        assert_eq!(spec.eval(&f, &dm(&[0.0], &[0.05])), 1.0);
        assert_eq!(spec.eval(&f, &dm(&[0.0], &[0.5])), 0.2);
        assert_abs_diff_eq!(spec.eval(&f, &dm(&[0.0], &[0.1])), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn probe_of_constant_rates_is_zero() {
        let a = dm(&[0.0], &[0.5]);
        let b = dm(&[0.1], &[0.5]);
        let pairs = vec![
            ((a.clone(), a.clone()), (b.clone(), b.clone())),
            ((a.clone(), a.clone()), (a.clone(), a)),
        ];
        let r =
            lipschitz_probe(&RateSpec::constant(0.1), &RateSpec::constant(0.95), &pairs).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn perturbations_keep_unit_mass_and_support() {
        let pairs = perturbation_pairs(50, 4, 0.1, 3);
        for ((mf, ml), (nf, nl)) in &pairs {
            assert_abs_diff_eq!(mf.mass() + ml.mass(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(nf.mass() + nl.mass(), 1.0, epsilon = 1e-12);
            assert!(nf.positions().iter().all(|x| x.abs() <= 1.0));
            for (a, b) in mf.positions().iter().zip(nf.positions()) {
                assert!((a - b).abs() <= 0.1 + 1e-15);
            }
        }
        assert_eq!(pairs, perturbation_pairs(50, 4, 0.1, 3));
    }

    #[test]
    fn probe_flags_jump_at_zero_distance() {
        // Masses one ulp apart: the flat distance is below the zero cutoff
        // while an absurdly steep switch still moves the rate.
        let lo = 0.5_f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let f = dm(&[0.0], &[0.5]);
        let pairs = vec![((f.clone(), dm(&[0.0], &[lo])), (f, dm(&[0.0], &[hi])))];
        let spec = RateSpec::MassSigmoid {
            on: Population::L,
            delta: 0.5,
            steepness: 1e16,
        };
        assert!(matches!(
            lipschitz_probe(&spec, &RateSpec::constant(0.0), &pairs),
            Err(Error::DegeneratePair { .. })
        ));
    }
}
