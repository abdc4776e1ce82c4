//! Sampled invariant checks for coordinate maps and smooth maps.

use crate::dual::{max_abs_diff, norm};
use crate::error::Result;
use crate::report::Measurement;
use crate::sample::{cube, uniform, Rng};

use super::chart::TangentVec;
use super::coord_map::{CoordMap, FiniteDifference};
use super::smooth_map::SmoothMap;

/// `jet1(x, a v + b w) − a jet1(x, v) − b jet1(x, w)` over random samples
/// drawn by `point` (which returns a base point in the map's domain).
pub fn jet1_linearity(
    map: &dyn CoordMap,
    rng: &mut Rng,
    n: usize,
    mut point: impl FnMut(&mut Rng) -> Vec<f64>,
) -> Measurement {
    let mut m = Measurement::default();
    for _ in 0..n {
        let x = point(rng);
        let v = cube(rng, map.dim_in(), 1.0);
        let w = cube(rng, map.dim_in(), 1.0);
        let (a, b) = (uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0));
        let comb: Vec<f64> = v.iter().zip(&w).map(|(p, q)| a * p + b * q).collect();
        let lhs = map.jet1(&x, &comb);
        let jv = map.jet1(&x, &v);
        let jw = map.jet1(&x, &w);
        let rhs: Vec<f64> = jv.iter().zip(&jw).map(|(p, q)| a * p + b * q).collect();
        m.record(max_abs_diff(&lhs, &rhs));
    }
    m
}

pub fn jet2_symmetry(
    map: &dyn CoordMap,
    rng: &mut Rng,
    n: usize,
    mut point: impl FnMut(&mut Rng) -> Vec<f64>,
) -> Measurement {
    let mut m = Measurement::default();
    for _ in 0..n {
        let x = point(rng);
        let v = cube(rng, map.dim_in(), 1.0);
        let w = cube(rng, map.dim_in(), 1.0);
        m.record(max_abs_diff(&map.jet2(&x, &v, &w), &map.jet2(&x, &w, &v)));
    }
    m
}

/// Ratio `err(h) / err(h/2)` of central-difference jet1 errors against the
/// exact jet; ≈ 4 for a second-order scheme.
pub fn fd_convergence_ratio(map: std::sync::Arc<dyn CoordMap>, x: &[f64], v: &[f64], h_rel: f64) -> f64 {
    let exact = map.jet1(x, v);
    let err = |h: f64| {
        let fd = FiniteDifference { inner: map.clone(), h_rel: h };
        max_abs_diff(&fd.jet1(x, v), &exact)
    };
    err(h_rel) / err(h_rel / 2.0)
}

/// Chart independence of `Tf`: evaluates `Tf(v)` from every source chart
/// containing the base point into every target chart containing the image
/// and compares after transitioning to a common target chart.
pub fn differential_chart_independence(f: &SmoothMap, vs: &[TangentVec]) -> Result<Measurement> {
    let mut m = Measurement::default();
    for v in vs {
        let reference = f.differential(v)?;
        for src in 0..f.source.n_charts() {
            let Ok(vs) = f.source.transition_tangent(v, src) else { continue };
            for tgt in 0..f.target.n_charts() {
                let Ok(w) = f.differential_in(&vs, tgt) else { continue };
                let Ok(w) = f.target.transition_tangent(&w, reference.chart()) else { continue };
                m.record(max_abs_diff(&w.to_total().coords, &reference.to_total().coords));
            }
        }
    }
    Ok(m)
}

/// Outcome of [`fibre_product_tangent_check`].
#[derive(Clone, Debug)]
pub struct FibreProductReport {
    /// `‖Tp₁(a) − Tp₂(b)‖` per pair, in a common chart of the target.
    pub residuals: Vec<f64>,
    /// Whether each pair was accepted as tangent to `M₁ ×_N M₂`.
    pub accepted: Vec<bool>,
    pub max_residual_accepted: f64,
}

/// Tests membership of `(a, b)` in `T(M₁ ×_N M₂)` via `Tp₁(a) = Tp₂(b)`.
pub fn fibre_product_tangent_check(
    p1: &SmoothMap,
    p2: &SmoothMap,
    pairs: &[(TangentVec, TangentVec)],
    tol: f64,
) -> Result<FibreProductReport> {
    let mut residuals = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let ta = p1.differential(a)?;
        let tb = p2.differential(b)?;
        let tb = p2.target.transition_tangent(&tb, ta.chart())?;
        let d: Vec<f64> = ta.to_total().coords.iter().zip(&tb.to_total().coords).map(|(x, y)| x - y).collect();
        residuals.push(norm(&d));
    }
    let accepted: Vec<bool> = residuals.iter().map(|r| *r < tol).collect();
    let max_residual_accepted = residuals
        .iter()
        .zip(&accepted)
        .filter(|(_, a)| **a)
        .map(|(r, _)| *r)
        .fold(0.0, f64::max);
    Ok(FibreProductReport { residuals, accepted, max_residual_accepted })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::builtins::euclidean;
    use crate::geometry::chart::Point;
    use crate::geometry::coord_map::{smooth, Inversion, Select};
    use crate::sample::rng;

    #[test]
    fn inversion_jets_are_linear_and_symmetric() {
        let map = Inversion(3);
        let mut r = rng(1);
        let pt = |r: &mut Rng| {
            let mut x = cube(r, 3, 2.0);
            x[0] += 3.0;
            x
        };
        assert!(jet1_linearity(&map, &mut r, 100, pt).max_residual < 1e-9);
        assert!(jet2_symmetry(&map, &mut r, 100, pt).max_residual < 1e-9);
    }

    #[test]
    fn central_differences_are_second_order() {
        let ratio = fd_convergence_ratio(Arc::new(Inversion(2)), &[0.7, -0.4], &[1.0, 0.3], 1e-2);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn projection_fibre_product_membership() {
        let r2 = Arc::new(euclidean(2));
        let r1 = Arc::new(euclidean(1));
        let p = SmoothMap::from_fn("p", r2, r1, |_, _| Some(smooth(Select { dim_in: 2, start: 0, len: 1 }))).unwrap();
        let at = |x: f64, y: f64, a: f64, b: f64| TangentVec::new(Point::new(0, vec![x, y]), vec![a, b]);
        let pairs = vec![
            (at(0.5, 1.0, 0.3, 2.0), at(0.5, -4.0, 0.3, -1.0)),
            (at(0.5, 1.0, 0.3, 2.0), at(0.5, -4.0, 0.4, 2.0)),
        ];
        let rep = fibre_product_tangent_check(&p, &p, &pairs, 1e-7).unwrap();
        assert_eq!(rep.accepted, vec![true, false]);
        assert_eq!(rep.max_residual_accepted, 0.0);
    }
}
