//! Flat distance (generalized Wasserstein distance with a = b = p = 1).
//!
//! Mass may be transported at unit cost per unit distance, or destroyed and
//! created at unit cost per unit mass. Transport over a distance of 2 or more
//! is never cheaper than destroying and re-creating, so every network below
//! routes unmatched mass through a single "ground" node reached at cost 1.

use super::flow::FlowNetwork;
use super::{check_dims, euclidean, DiscreteMeasure, Measure};
use crate::error::Result;

/// Flat distance between two atomic measures of the same dimension.
///
/// On the line the network is the path through the merged, sorted support
/// plus the ground node (O(n) arcs); in higher dimension it is the bipartite
/// graph of [`flat_distance_bipartite`].
pub fn flat_distance(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    if a.dim() == 1 {
        Ok(flat_on_line(a, b))
    } else {
        flat_distance_bipartite(a, b)
    }
}

/// Flat distance as a transportation problem between the atoms of `a` and the
/// atoms of `b`, arc cost `min(|x - y|, 2)`, plus destruction and creation
/// arcs of cost 1. Works in any dimension.
pub fn flat_distance_bipartite(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Ok(a.mass() + b.mass());
    }
    let ground = n + m;
    let mut net = FlowNetwork::new(n + m + 1);
    for (i, (x, _)) in a.iter().enumerate() {
        for (j, (y, _)) in b.iter().enumerate() {
            let d = euclidean(x, y);
            if d < 2.0 {
                net.add_arc(i, n + j, d);
            }
        }
        net.add_arc(i, ground, 1.0);
    }
    for j in 0..m {
        net.add_arc(ground, n + j, 1.0);
    }
    let mut supply = Vec::with_capacity(n + m + 1);
    supply.extend_from_slice(a.weights());
    supply.extend(b.weights().iter().map(|w| -w));
    supply.push(b.mass() - a.mass());
    Ok(net.min_cost(supply))
}

fn flat_on_line(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
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
    if events.is_empty() {
        return 0.0;
    }
    events.sort_by(|p, q| p.0.total_cmp(&q.0));

    // Coincident atoms cancel exactly; only net mass per point is routed.
    let mut points: Vec<f64> = Vec::with_capacity(events.len());
    let mut net_mass: Vec<f64> = Vec::with_capacity(events.len());
    for (x, w) in events {
        if points.last() == Some(&x) {
            *net_mass.last_mut().unwrap() += w;
        } else {
            points.push(x);
            net_mass.push(w);
        }
    }
    if points.len() == 1 {
        return net_mass[0].abs();
    }

    let n = points.len();
    let ground = n;
    let mut net = FlowNetwork::new(n + 1);
    for i in 0..n {
        if i + 1 < n {
            let gap = points[i + 1] - points[i];
            net.add_arc(i, i + 1, gap);
            net.add_arc(i + 1, i, gap);
        }
        net.add_arc(i, ground, 1.0);
        net.add_arc(ground, i, 1.0);
    }
    let imbalance: f64 = net_mass.iter().sum();
    let mut supply = net_mass;
    supply.push(-imbalance);
    net.min_cost(supply)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dirac(x: f64, w: f64) -> DiscreteMeasure {
        DiscreteMeasure::dirac(x, w).unwrap()
    }

    #[test]
    fn scalar_difference_at_a_point() {
        assert_abs_diff_eq!(
            flat_distance(&dirac(0.0, 0.3), &dirac(0.0, 1.1)).unwrap(),
            0.8,
            epsilon = 1e-15
        );
    }

    #[test]
    fn far_atoms_are_destroyed_and_created() {
        assert_abs_diff_eq!(
            flat_distance(&dirac(0.0, 1.0), &dirac(3.0, 1.0)).unwrap(),
            2.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            flat_distance(&dirac(0.0, 1.0), &dirac(0.5, 1.0)).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn empty_against_measure_is_its_mass() {
        let e = DiscreteMeasure::empty(1);
        let m = DiscreteMeasure::from_1d(&[0.0, 1.0], &[0.25, 0.5]).unwrap();
        assert_abs_diff_eq!(flat_distance(&e, &m).unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(flat_distance(&e, &e).unwrap(), 0.0);
    }

    #[test]
    fn two_dimensional_distance() {
        let a = DiscreteMeasure::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
        let b = DiscreteMeasure::new(2, vec![0.3, 0.4], vec![1.0]).unwrap();
        assert_abs_diff_eq!(flat_distance(&a, &b).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let a = DiscreteMeasure::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
        assert!(flat_distance(&a, &dirac(0.0, 1.0)).is_err());
    }

    #[test]
    fn line_and_bipartite_routes_agree() {
        let a = DiscreteMeasure::from_1d(&[-0.9, -0.2, 0.4, 1.5], &[0.3, 0.2, 0.4, 0.1]).unwrap();
        let b = DiscreteMeasure::from_1d(&[-0.5, 0.1, 0.45, 3.0], &[0.5, 0.1, 0.2, 0.6]).unwrap();
        let line = flat_distance(&a, &b).unwrap();
        let bip = flat_distance_bipartite(&a, &b).unwrap();
        assert_abs_diff_eq!(line, bip, epsilon = 1e-12);
    }
}
