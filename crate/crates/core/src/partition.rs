//! Smooth partitions of unity built from compactly supported bumps.

use std::sync::Arc;

use crate::dual::{reals, Level, Scalar};
use crate::error::{Error, Result};
use crate::geometry::{ChartId, ChartedManifold, Point};

/// `exp(−1/(1−s))` evaluated at `s = t²`; zero for `s ≥ 1`.
pub fn bump<S: Scalar>(s: S) -> S {
    let r = s.re();
    if !r.is_finite() || r >= 1.0 {
        return S::zero();
    }
    (-(S::one() - s).recip()).exp()
}

/// Raw bump `b(|x − center| / radius)` in the coordinates of `chart`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub chart: ChartId,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Bump {
    fn raw<S: Scalar>(&self, y: &[S]) -> S {
        let s = y.iter().zip(&self.center).fold(S::zero(), |a, (&v, &c)| a + (v - c) * (v - c));
        bump(s / (self.radius * self.radius))
    }
}

/// Normalized family `h_α = b_α / Σ_β b_β`. For the weights to be smooth,
/// a bump whose support meets other charts must have its closed support
/// inside its own chart's domain; this is the caller's responsibility.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    pub manifold: Arc<ChartedManifold>,
    pub bumps: Vec<Bump>,
}

impl PartitionOfUnity {
    pub fn new(manifold: Arc<ChartedManifold>, bumps: Vec<Bump>) -> Result<Self> {
        for b in &bumps {
            if !(b.radius > 0.0) || !manifold.chart(b.chart).contains(&b.center) {
                return Err(Error::ConfigParse(format!("bump {b:?} is not centred inside chart {}", b.chart)));
            }
        }
        Ok(Self { manifold, bumps })
    }

    /// One bump per chart, centred at the origin with the given radius.
    pub fn per_chart(manifold: Arc<ChartedManifold>, radius: f64) -> Result<Self> {
        let n = manifold.dim();
        let bumps = (0..manifold.n_charts()).map(|c| Bump { chart: c, center: vec![0.0; n], radius }).collect();
        Self::new(manifold, bumps)
    }

    /// The constant partition `h ≡ 1` on a single-chart manifold.
    pub fn trivial(manifold: Arc<ChartedManifold>) -> Self {
        let n = manifold.dim();
        Self { manifold, bumps: vec![Bump { chart: 0, center: vec![0.0; n], radius: f64::INFINITY }] }
    }

    pub fn len(&self) -> usize {
        self.bumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bumps.is_empty()
    }

    /// Un-normalized bump values at a point given in `chart` coordinates.
    pub fn raw<S: Level>(&self, chart: ChartId, x: &[S]) -> Vec<S> {
        let p = Point::new(chart, reals(x));
        self.bumps
            .iter()
            .map(|b| {
                if b.radius.is_infinite() {
                    return S::one();
                }
                if chart == b.chart {
                    return b.raw(x);
                }
                // outside the overlap the bump's support is not reached
                match (self.manifold.transition(&p, b.chart), self.manifold.transition_map(chart, b.chart)) {
                    (Ok(_), Some(t)) => b.raw(&S::eval_map(&**t, x)),
                    _ => S::zero(),
                }
            })
            .collect()
    }

    /// Normalized weights `h_α` at a point given in `chart` coordinates.
    pub fn weights<S: Level>(&self, chart: ChartId, x: &[S]) -> Result<Vec<S>> {
        let raw = self.raw(chart, x);
        let total = raw.iter().fold(S::zero(), |a, &b| a + b);
        let w = total.re();
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::CoverageGap { weight: w });
        }
        Ok(raw.into_iter().map(|r| r / total).collect())
    }

    pub fn weights_at(&self, p: &Point) -> Result<Vec<f64>> {
        self.weights(p.chart, &p.coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::D1;
    use crate::geometry::{euclidean, stereographic_pair};

    #[test]
    fn weights_sum_to_one_on_sphere() {
        let s2 = Arc::new(stereographic_pair(2, 3.0));
        let pu = PartitionOfUnity::per_chart(s2, 2.5).unwrap();
        for r in [0.0, 0.5, 1.0, 1.9, 2.4] {
            let w = pu.weights_at(&Point::new(0, vec![r, 0.3])).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        // the north bump does not reach chart-0 radius 2.5
        let w = pu.weights_at(&Point::new(0, vec![2.6, 0.0])).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);
    }

    #[test]
    fn bump_derivative_vanishes_outside_support() {
        let d = bump(D1::new(1.2, 1.0));
        assert_eq!((d.re, d.eps), (0.0, 0.0));
        let inside = bump(D1::new(0.5, 1.0));
        // d/ds exp(-1/(1-s)) = -exp(-1/(1-s)) / (1-s)²
        assert!((inside.eps + (-2.0f64).exp() / 0.25).abs() < 1e-15);
    }

    #[test]
    fn coverage_gap_outside_all_supports() {
        let r1 = Arc::new(euclidean(1));
        let pu = PartitionOfUnity::new(r1, vec![Bump { chart: 0, center: vec![0.0], radius: 1.0 }]).unwrap();
        assert!(matches!(pu.weights_at(&Point::new(0, vec![2.0])), Err(Error::CoverageGap { .. })));
    }
}
