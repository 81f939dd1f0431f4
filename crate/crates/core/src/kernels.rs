//! Interaction kernels `K(z) = a(|z|) z` and their convolutions with measures.
//!
//! The default [`Orientation::Attractive`] evaluates the field generated by an
//! atom at `y` on a point `x` as `a(|x - y|) (y - x)`, so a positive profile
//! pulls `x` toward `y`. [`Orientation::Literal`] evaluates `K(x - y)` as
//! written, which pushes `x` away for a positive profile.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::measures::{check_dims, LabelDist, Measure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    Attractive,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    Zero,
    /// Bounded-confidence indicator `a(r) = 1{r <= radius}`.
    HegselmannKrause {
        radius: f64,
    },
    /// Indicator with a linear ramp of total `width` centered at `radius`.
    MollifiedHegselmannKrause {
        radius: f64,
        width: f64,
    },
    /// `a(r) = (eps + r)^exponent`
    PowerLawAttract {
        exponent: f64,
        eps: f64,
    },
    /// `a(r) = -strength / (eps + r)^exponent`
    PowerLawRepel {
        strength: f64,
        exponent: f64,
        eps: f64,
    },
    /// `a(r) = (eps + r)^attract_exponent - repel_strength / (eps + r)^repel_exponent`
    CombinedPowerLaw {
        attract_exponent: f64,
        repel_strength: f64,
        repel_exponent: f64,
        eps: f64,
    },
    /// Drift `target - x` toward a fixed position, weighted by the mass of the
    /// population instead of being convolved. The target applies to every
    /// coordinate.
    SteeringDrift {
        target: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    #[serde(default)]
    pub orientation: Orientation,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            orientation: Orientation::Attractive,
        }
    }

    pub fn zero() -> Self {
        Self::new(KernelKind::Zero)
    }

    pub fn hegselmann_krause(radius: f64) -> Self {
        Self::new(KernelKind::HegselmannKrause { radius })
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, KernelKind::Zero)
    }

    /// Checks the parameter ranges; returns a description of the first
    /// offending field.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be nonnegative, got {v}"))
            }
        };
        match self.kind {
            KernelKind::Zero => Ok(()),
            KernelKind::HegselmannKrause { radius } => positive("radius", radius),
            KernelKind::MollifiedHegselmannKrause { radius, width } => {
                positive("radius", radius)?;
                positive("width", width)
            }
            KernelKind::PowerLawAttract { exponent, eps } => {
                nonneg("exponent", exponent)?;
                positive("eps", eps)
            }
            KernelKind::PowerLawRepel {
                strength,
                exponent,
                eps,
            } => {
                positive("strength", strength)?;
                nonneg("exponent", exponent)?;
                positive("eps", eps)
            }
            KernelKind::CombinedPowerLaw {
                attract_exponent,
                repel_strength,
                repel_exponent,
                eps,
            } => {
                nonneg("attract_exponent", attract_exponent)?;
                positive("repel_strength", repel_strength)?;
                nonneg("repel_exponent", repel_exponent)?;
                positive("eps", eps)
            }
            KernelKind::SteeringDrift { target } => {
                if target.is_finite() {
                    Ok(())
                } else {
                    Err(format!("target must be finite, got {target}"))
                }
            }
        }
    }

    /// Scalar profile `a(r)` at distance `r >= 0`. Zero for steering drifts.
    pub fn profile(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Zero | KernelKind::SteeringDrift { .. } => 0.0,
            KernelKind::HegselmannKrause { radius } => {
                if r <= radius {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::MollifiedHegselmannKrause { radius, width } => {
                ((radius + 0.5 * width - r) / width).clamp(0.0, 1.0)
            }
            KernelKind::PowerLawAttract { exponent, eps } => (eps + r).powf(exponent),
            KernelKind::PowerLawRepel {
                strength,
                exponent,
                eps,
            } => -strength / (eps + r).powf(exponent),
            KernelKind::CombinedPowerLaw {
                attract_exponent,
                repel_strength,
                repel_exponent,
                eps,
            } => (eps + r).powf(attract_exponent) - repel_strength / (eps + r).powf(repel_exponent),
        }
    }

    fn sign(&self) -> f64 {
        match self.orientation {
            Orientation::Attractive => -1.0,
            Orientation::Literal => 1.0,
        }
    }

    fn steering_target(&self) -> Option<f64> {
        match self.kind {
            KernelKind::SteeringDrift { target } => Some(target),
            _ => None,
        }
    }
}

/// `K(z) = a(|z|) z` as written, independent of orientation. For a steering
/// drift `z` is read as a position and the value is `target - z`.
pub fn eval_kernel(spec: &KernelSpec, z: &[f64]) -> Vec<f64> {
    if let Some(target) = spec.steering_target() {
        return z.iter().map(|zi| target - zi).collect();
    }
    let r = norm(z);
    let a = spec.profile(r);
    z.iter().map(|zi| a * zi).collect()
}

/// Field generated at `x` by the measure `m` through kernel `spec`.
///
/// Atomic and grid measures are both summed atom by atom; for a grid this is
/// midpoint quadrature over cell centers.
pub fn convolve<M: Measure>(spec: &KernelSpec, m: &M, x: &[f64]) -> Result<Vec<f64>> {
    check_dims(m.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    if let Some(target) = spec.steering_target() {
        let mass = m.mass();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = mass * (target - xi);
        }
        return Ok(out);
    }
    if spec.is_zero() {
        return Ok(out);
    }
    let sign = spec.sign();
    let mut z = vec![0.0; x.len()];
    m.for_each_atom(|y, w| {
        for ((zi, xi), yi) in z.iter_mut().zip(x).zip(y) {
            *zi = xi - yi;
        }
        let a = spec.profile(norm(&z));
        if a != 0.0 {
            for (o, zi) in out.iter_mut().zip(&z) {
                *o += sign * w * a * zi;
            }
        }
    });
    Ok(out)
}

/// Velocity of the total-population transport equation:
/// `sigma(F) K^F * nu + sigma(L) K^L * nu`.
///
/// A steering kernel contributes `sigma(i) (target - x)` without convolution.
pub fn coupled_velocity<M: Measure>(
    kf: &KernelSpec,
    kl: &KernelSpec,
    nu: &M,
    sigma: &LabelDist,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_dims(nu.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    for (spec, weight) in [(kf, sigma.p_f), (kl, sigma.p_l)] {
        let part = match spec.steering_target() {
            Some(target) => x.iter().map(|xi| target - xi).collect(),
            None => convolve(spec, nu, x)?,
        };
        for (o, p) in out.iter_mut().zip(part) {
            *o += weight * p;
        }
    }
    Ok(out)
}

fn norm(z: &[f64]) -> f64 {
    if z.len() == 1 {
        z[0].abs()
    } else {
        z.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A 1D measure prepared for repeated field evaluations through one kernel.
///
/// Sharp bounded-confidence kernels use sorted positions with prefix sums of
/// `w` and `w x`, so each evaluation costs a binary search; all other kernels
/// fall back to the direct sum.
#[derive(Debug, Clone)]
pub struct LineField {
    spec: KernelSpec,
    xs: Vec<f64>,
    ws: Vec<f64>,
    mass: f64,
    prefix_w: Vec<f64>,
    prefix_wx: Vec<f64>,
}

impl LineField {
    pub fn new<M: Measure>(spec: &KernelSpec, m: &M) -> Self {
        debug_assert_eq!(m.dim(), 1);
        let mut atoms = Vec::new();
        m.for_each_atom(|x, w| atoms.push((x[0], w)));
        Self::from_atoms(spec, atoms)
    }

    pub fn from_atoms(spec: &KernelSpec, mut atoms: Vec<(f64, f64)>) -> Self {
        let mass = atoms.iter().map(|a| a.1).sum();
        let mut prefix_w = Vec::new();
        let mut prefix_wx = Vec::new();
        if matches!(spec.kind, KernelKind::HegselmannKrause { .. }) {
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            prefix_w.reserve(atoms.len() + 1);
            prefix_wx.reserve(atoms.len() + 1);
            let (mut sw, mut swx) = (0.0, 0.0);
            prefix_w.push(0.0);
            prefix_wx.push(0.0);
            for &(x, w) in &atoms {
                sw += w;
                swx += w * x;
                prefix_w.push(sw);
                prefix_wx.push(swx);
            }
        }
        let (xs, ws) = atoms.into_iter().unzip();
        Self {
            spec: *spec,
            xs,
            ws,
            mass,
            prefix_w,
            prefix_wx,
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.spec.kind {
            KernelKind::Zero => 0.0,
            KernelKind::SteeringDrift { target } => self.mass * (target - x),
            KernelKind::HegselmannKrause { radius } => {
                let lo = self.xs.partition_point(|&y| y < x && x - y > radius);
                let hi = self.xs.partition_point(|&y| y <= x || y - x <= radius);
                let sw = self.prefix_w[hi] - self.prefix_w[lo];
                let swx = self.prefix_wx[hi] - self.prefix_wx[lo];
                // sum_j w_j (x - y_j) over the window
                self.spec.sign() * (x * sw - swx)
            }
            _ => {
                let sign = self.spec.sign();
                let mut v = 0.0;
                for (&y, &w) in self.xs.iter().zip(&self.ws) {
                    let z = x - y;
                    v += w * self.spec.profile(z.abs()) * z;
                }
                sign * v
            }
        }
    }
}

/// `sigma(F) K^F * nu + sigma(L) K^L * nu` on the line, with the steering
/// convention of [`coupled_velocity`].
#[derive(Debug, Clone)]
pub struct CoupledLineField {
    follower: LineField,
    leader: LineField,
    sigma: LabelDist,
}

impl CoupledLineField {
    pub fn new<M: Measure>(kf: &KernelSpec, kl: &KernelSpec, nu: &M, sigma: LabelDist) -> Self {
        Self {
            follower: LineField::new(kf, nu),
            leader: LineField::new(kl, nu),
            sigma,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let part = |f: &LineField| match f.spec.kind {
            KernelKind::SteeringDrift { target } => target - x,
            _ => f.eval(x),
        };
        self.sigma.p_f * part(&self.follower) + self.sigma.p_l * part(&self.leader)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{DiscreteMeasure, GridMeasure};
    use approx::assert_abs_diff_eq;

    #[test]
    fn hk_kernel_values() {
        let hk = KernelSpec::hegselmann_krause(0.2);
        assert_eq!(eval_kernel(&hk, &[0.1]), vec![0.1]);
        assert_eq!(eval_kernel(&hk, &[0.5]), vec![0.0]);
    }

    #[test]
    fn kernels_vanish_at_origin() {
        let specs = [
            KernelSpec::hegselmann_krause(0.2),
            KernelSpec::new(KernelKind::PowerLawAttract {
                exponent: 2.0,
                eps: 1e-3,
            }),
            KernelSpec::new(KernelKind::PowerLawRepel {
                strength: 0.1,
                exponent: 0.75,
                eps: 1e-3,
            }),
            KernelSpec::new(KernelKind::CombinedPowerLaw {
                attract_exponent: 2.0,
                repel_strength: 0.05,
                repel_exponent: 1.0,
                eps: 1e-4,
            }),
        ];
        for s in specs {
            assert_eq!(eval_kernel(&s, &[0.0]), vec![0.0], "{s:?}");
        }
    }

    #[test]
    fn convolve_single_atom_attracts() {
        let hk = KernelSpec::hegselmann_krause(0.2);
        let d0 = DiscreteMeasure::dirac(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(convolve(&hk, &d0, &[0.1]).unwrap()[0], -0.1);
        let literal = hk.with_orientation(Orientation::Literal);
        assert_abs_diff_eq!(convolve(&literal, &d0, &[0.1]).unwrap()[0], 0.1);
        let empty = DiscreteMeasure::empty(1);
        assert_eq!(convolve(&hk, &empty, &[0.1]).unwrap(), vec![0.0]);
    }

    #[test]
    fn convolve_dimension_error() {
        let hk = KernelSpec::hegselmann_krause(0.2);
        let d0 = DiscreteMeasure::dirac(0.0, 1.0).unwrap();
        assert!(convolve(&hk, &d0, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn steering_drift_velocity() {
        let steer = KernelSpec::new(KernelKind::SteeringDrift { target: 0.5 });
        let nu = DiscreteMeasure::dirac(0.0, 1.0).unwrap();
        let sigma = LabelDist::new(0.0).unwrap();
        let v = coupled_velocity(&KernelSpec::zero(), &steer, &nu, &sigma, &[0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.5);
    }

    #[test]
    fn coupled_velocity_reduces_to_single_population() {
        let kf = KernelSpec::hegselmann_krause(0.2);
        let kl = KernelSpec::hegselmann_krause(0.6);
        let nu = DiscreteMeasure::from_1d(&[-0.3, 0.0, 0.25, 0.4], &[0.1, 0.4, 0.3, 0.2]).unwrap();
        for x in [-0.5, -0.1, 0.05, 0.3] {
            let f_only =
                coupled_velocity(&kf, &kl, &nu, &LabelDist::new(1.0).unwrap(), &[x]).unwrap();
            assert_eq!(f_only, convolve(&kf, &nu, &[x]).unwrap());
            let l_only =
                coupled_velocity(&kf, &kl, &nu, &LabelDist::new(0.0).unwrap(), &[x]).unwrap();
            assert_eq!(l_only, convolve(&kl, &nu, &[x]).unwrap());
        }
        let empty = DiscreteMeasure::empty(1);
        let v = coupled_velocity(&kf, &kl, &empty, &LabelDist::new(0.5).unwrap(), &[0.1]).unwrap();
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn line_field_matches_direct_sum() {
        let g = GridMeasure::new(
            -1.0,
            1.0,
            (0..40)
                .map(|i| 0.5 + 0.3 * ((i as f64) * 0.7).sin())
                .collect(),
        )
        .unwrap();
        let specs = [
            KernelSpec::hegselmann_krause(0.2),
            KernelSpec::hegselmann_krause(0.6).with_orientation(Orientation::Literal),
            KernelSpec::new(KernelKind::PowerLawRepel {
                strength: 0.1,
                exponent: 0.5,
                eps: 1e-3,
            }),
            KernelSpec::new(KernelKind::SteeringDrift { target: 0.5 }),
        ];
        for spec in specs {
            let field = LineField::new(&spec, &g);
            for k in 0..=40 {
                let x = -1.0 + 0.05 * k as f64 + 0.003;
                let direct = convolve(&spec, &g, &[x]).unwrap()[0];
                assert_abs_diff_eq!(field.eval(x), direct, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn mollified_profile_is_a_ramp() {
        let k = KernelSpec::new(KernelKind::MollifiedHegselmannKrause {
            radius: 0.2,
            width: 0.1,
        });
        assert_eq!(k.profile(0.1), 1.0);
        assert_abs_diff_eq!(k.profile(0.2), 0.5);
        assert_eq!(k.profile(0.3), 0.0);
    }
}
