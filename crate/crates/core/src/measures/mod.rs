//! Positive measures on the line (or on R^d) and the distances between them.
//!
//! Two representations are used throughout the crate: [`DiscreteMeasure`], a
//! finite sum of weighted Dirac masses, and [`GridMeasure`], piecewise-constant
//! cell averages on a uniform 1D grid. Both implement [`Measure`], which is
//! what the kernels and rate functionals consume.

mod flat;
mod flow;
mod oracle;

pub use flat::{flat_distance, flat_distance_bipartite};
pub use oracle::{flat_distance_oracle, ORACLE_MAX_ATOMS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the mass difference accepted by [`w1_distance_1d`].
pub const W1_MASS_TOLERANCE: f64 = 1e-12;

/// Read access to the atoms of a measure.
///
/// Grid measures present themselves as one atom per cell, located at the cell
/// center with weight `dx * cell_avg` (midpoint quadrature).
pub trait Measure {
    fn dim(&self) -> usize;

    fn mass(&self) -> f64;

    fn for_each_atom<F: FnMut(&[f64], f64)>(&self, f: F);
}

/// Total mass of a measure.
pub fn mass<M: Measure>(m: &M) -> f64 {
    m.mass()
}

/// Finite positive combination of Dirac masses.
///
/// Positions are stored row-major (`len * dim` values). Zero weights are
/// dropped on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        if positions.len() != weights.len() * dim {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates for {} atoms in dimension {dim}",
                positions.len(),
                weights.len()
            )));
        }
        if let Some(x) = positions.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite position {x}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("invalid weight {w}")));
        }
        if weights.iter().all(|&w| w > 0.0) {
            return Ok(Self {
                dim,
                positions,
                weights,
            });
        }
        let mut kept_pos = Vec::with_capacity(positions.len());
        let mut kept_w = Vec::with_capacity(weights.len());
        for (w, x) in weights.iter().zip(positions.chunks_exact(dim)) {
            if *w > 0.0 {
                kept_w.push(*w);
                kept_pos.extend_from_slice(x);
            }
        }
        Ok(Self {
            dim,
            positions: kept_pos,
            weights: kept_w,
        })
    }

    pub fn empty(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            positions: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn from_1d(positions: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(1, positions.to_vec(), weights.to_vec())
    }

    /// `weight * delta_x` on the line.
    pub fn dirac(x: f64, weight: f64) -> Result<Self> {
        Self::new(1, vec![x], vec![weight])
    }

    /// Empirical measure `(1/N) sum_i delta_{x_i}` of 1D points.
    pub fn empirical_1d(points: &[f64]) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        Self::new(1, points.to_vec(), vec![w; points.len()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.positions
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// `c * self`; `c` must be nonnegative.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.dim,
            self.positions.clone(),
            self.weights.iter().map(|w| w * c).collect(),
        )
    }

    /// Sum of two measures (atoms concatenated, nothing merged).
    pub fn plus(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self::new(self.dim, positions, weights)
    }
}

impl Measure for DiscreteMeasure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn for_each_atom<F: FnMut(&[f64], f64)>(&self, mut f: F) {
        for (x, w) in self.iter() {
            f(x, w);
        }
    }
}

/// Cell averages of a density on a uniform grid of `[x_min, x_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    x_min: f64,
    x_max: f64,
    cell_avg: Vec<f64>,
}

impl GridMeasure {
    pub fn new(x_min: f64, x_max: f64, cell_avg: Vec<f64>) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::InvalidMeasure(format!(
                "bad grid domain [{x_min}, {x_max}]"
            )));
        }
        if cell_avg.is_empty() {
            return Err(Error::InvalidMeasure("grid needs at least one cell".into()));
        }
        if let Some(v) = cell_avg.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "non-finite cell average {v}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            cell_avg,
        })
    }

    pub fn zeros(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        Self::new(x_min, x_max, vec![0.0; n_cells])
    }

    /// Grid with the same geometry as `self` and new cell values.
    pub fn with_values(&self, cell_avg: Vec<f64>) -> Self {
        assert_eq!(cell_avg.len(), self.cell_avg.len(), "cell count changed");
        Self {
            x_min: self.x_min,
            x_max: self.x_max,
            cell_avg,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.cell_avg.len()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.cell_avg.len() as f64
    }

    pub fn center(&self, cell: usize) -> f64 {
        self.x_min + (cell as f64 + 0.5) * self.dx()
    }

    /// Position of the interface between `cell - 1` and `cell`.
    pub fn interface(&self, cell: usize) -> f64 {
        self.x_min + cell as f64 * self.dx()
    }

    pub fn cell_avg(&self) -> &[f64] {
        &self.cell_avg
    }

    pub fn cell_avg_mut(&mut self) -> &mut [f64] {
        &mut self.cell_avg
    }

    pub fn into_values(self) -> Vec<f64> {
        self.cell_avg
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.x_min == other.x_min
            && self.x_max == other.x_max
            && self.cell_avg.len() == other.cell_avg.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_values(self.cell_avg.iter().map(|v| v * c).collect())
    }

    pub fn min_value(&self) -> f64 {
        self.cell_avg.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Measure for GridMeasure {
    fn dim(&self) -> usize {
        1
    }

    fn mass(&self) -> f64 {
        self.dx() * self.cell_avg.iter().sum::<f64>()
    }

    fn for_each_atom<F: FnMut(&[f64], f64)>(&self, mut f: F) {
        let dx = self.dx();
        for (i, v) in self.cell_avg.iter().enumerate() {
            let x = [self.x_min + (i as f64 + 0.5) * dx];
            f(&x, dx * v);
        }
    }
}

/// Probability vector on the two-point label space `{F, L}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelDist {
    pub p_f: f64,
    pub p_l: f64,
}

impl LabelDist {
    /// Normalized distribution with `P(F) = p_f`.
    pub fn new(p_f: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_f) {
            return Err(Error::InvalidMeasure(format!(
                "label probability {p_f} outside [0, 1]"
            )));
        }
        Ok(Self {
            p_f,
            p_l: 1.0 - p_f,
        })
    }

    /// Normalizes a pair of population masses.
    pub fn from_masses(mass_f: f64, mass_l: f64) -> Result<Self> {
        let total = mass_f + mass_l;
        if !(mass_f >= 0.0 && mass_l >= 0.0 && total > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "cannot normalize masses ({mass_f}, {mass_l})"
            )));
        }
        Self::new(mass_f / total)
    }

    pub fn is_normalized(&self) -> bool {
        (self.p_f + self.p_l - 1.0).abs() <= 1e-12 && self.p_f >= 0.0 && self.p_l >= 0.0
    }
}

/// Wasserstein distance between the laws on `{F, L}` under the discrete
/// metric: `|P(F) - P'(F)|`.
pub fn label_w1(s1: &LabelDist, s2: &LabelDist) -> f64 {
    (s1.p_f - s2.p_f).abs()
}

/// W1 between two 1D measures of equal mass, from the integrated absolute
/// difference of their cumulative distribution functions.
pub fn w1_distance_1d(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    for m in [a, b] {
        if m.dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                found: m.dim(),
            });
        }
    }
    let (ma, mb) = (a.mass(), b.mass());
    if (ma - mb).abs() > W1_MASS_TOLERANCE {
        return Err(Error::MassMismatch {
            left: ma,
            right: mb,
        });
    }
    let mut events: Vec<(f64, f64)> = a
        .positions()
        .iter()
        .zip(a.weights())
        .map(|(&x, &w)| (x, w))
        .chain(
            b.positions()
                .iter()
                .zip(b.weights())
                .map(|(&x, &w)| (x, -w)),
        )
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        cdf_gap += pair[0].1;
        total += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(total)
}

/// One atom per cell center carrying the cell mass; empty cells are dropped.
///
/// Cells with a (round-off) negative average are dropped as well.
pub fn grid_to_discrete(g: &GridMeasure) -> DiscreteMeasure {
    let dx = g.dx();
    let mut positions = Vec::with_capacity(g.n_cells());
    let mut weights = Vec::with_capacity(g.n_cells());
    for (i, &v) in g.cell_avg().iter().enumerate() {
        if v > 0.0 {
            positions.push(g.center(i));
            weights.push(dx * v);
        }
    }
    DiscreteMeasure {
        dim: 1,
        positions,
        weights,
    }
}

/// Push-forward `f # m`: atoms are moved, weights kept.
pub fn pushforward<F>(m: &DiscreteMeasure, map: F) -> Result<DiscreteMeasure>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut positions = Vec::with_capacity(m.positions.len());
    for x in m.positions.chunks_exact(m.dim) {
        let y = map(x);
        check_dims(m.dim, y.len())?;
        positions.extend(y);
    }
    DiscreteMeasure::new(m.dim, positions, m.weights.clone())
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

pub(crate) fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    if x.len() == 1 {
        return (x[0] - y[0]).abs();
    }
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
