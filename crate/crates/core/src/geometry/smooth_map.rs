use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::chart::{ChartId, Point, TangentVec};
use super::coord_map::CoordMap;
use super::manifold::ChartedManifold;

/// A smooth map given by local representatives `reps[a][b]` from source
/// chart `a` to target chart `b`, where such a representative exists.
#[derive(Clone)]
pub struct SmoothMap {
    pub name: String,
    pub source: Arc<ChartedManifold>,
    pub target: Arc<ChartedManifold>,
    reps: Vec<Vec<Option<Arc<dyn CoordMap>>>>,
}

impl SmoothMap {
    pub fn new(
        name: impl Into<String>,
        source: Arc<ChartedManifold>,
        target: Arc<ChartedManifold>,
        reps: Vec<Vec<Option<Arc<dyn CoordMap>>>>,
    ) -> Result<Self> {
        if reps.len() != source.n_charts() {
            return Err(Error::DimensionMismatch { expected: source.n_charts(), got: reps.len() });
        }
        for row in &reps {
            if row.len() != target.n_charts() {
                return Err(Error::DimensionMismatch { expected: target.n_charts(), got: row.len() });
            }
            for r in row.iter().flatten() {
                if r.dim_in() != source.dim() || r.dim_out() != target.dim() {
                    return Err(Error::DimensionMismatch { expected: source.dim(), got: r.dim_in() });
                }
            }
        }
        Ok(Self { name: name.into(), source, target, reps })
    }

    pub fn from_fn(
        name: impl Into<String>,
        source: Arc<ChartedManifold>,
        target: Arc<ChartedManifold>,
        mut rep: impl FnMut(ChartId, ChartId) -> Option<Arc<dyn CoordMap>>,
    ) -> Result<Self> {
        let reps = (0..source.n_charts()).map(|a| (0..target.n_charts()).map(|b| rep(a, b)).collect()).collect();
        Self::new(name, source, target, reps)
    }

    pub fn identity(m: Arc<ChartedManifold>) -> Self {
        let n = m.n_charts();
        let reps = (0..n)
            .map(|a| (0..n).map(|b| m.transition_map(a, b).cloned()).collect())
            .collect();
        Self { name: "id".into(), source: m.clone(), target: m, reps }
    }

    pub fn rep(&self, a: ChartId, b: ChartId) -> Option<&Arc<dyn CoordMap>> {
        self.reps.get(a)?.get(b)?.as_ref()
    }

    /// Image of `x` in target chart `b`, if the representative is defined
    /// there and lands inside the chart.
    pub fn apply_in(&self, x: &Point, b: ChartId) -> Result<Point> {
        let no_rep = || Error::NoLocalRep { map: self.name.clone(), chart: x.chart };
        if !self.source.contains(x) {
            return Err(no_rep());
        }
        let r = self.rep(x.chart, b).ok_or_else(no_rep)?;
        let y = Point::new(b, r.eval(&x.coords));
        if self.target.contains(&y) {
            Ok(y)
        } else {
            Err(no_rep())
        }
    }

    /// Image of `x` in the target chart with the largest margin.
    pub fn apply(&self, x: &Point) -> Result<Point> {
        let mut best: Option<(f64, Point)> = None;
        for b in 0..self.target.n_charts() {
            if let Ok(y) = self.apply_in(x, b) {
                let m = self.target.margin(&y);
                if best.as_ref().is_none_or(|(bm, _)| m > *bm) {
                    best = Some((m, y));
                }
            }
        }
        best.map(|(_, y)| y).ok_or_else(|| Error::NoLocalRep { map: self.name.clone(), chart: x.chart })
    }

    pub fn differential_in(&self, v: &TangentVec, b: ChartId) -> Result<TangentVec> {
        let y = self.apply_in(&v.base, b)?;
        let r = self.rep(v.base.chart, b).expect("checked by apply_in");
        Ok(TangentVec::new(y, r.jet1(&v.base.coords, &v.components)))
    }

    /// `Tf(v)`, expressed in the best target chart of `f(base)`.
    pub fn differential(&self, v: &TangentVec) -> Result<TangentVec> {
        let y = self.apply(&v.base)?;
        self.differential_in(v, y.chart)
    }

    pub fn jacobian_in(&self, x: &Point, b: ChartId) -> Result<DMatrix<f64>> {
        self.apply_in(x, b)?;
        Ok(self.rep(x.chart, b).expect("checked by apply_in").jacobian(&x.coords))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builtins::{euclidean, stereographic_pair};
    use crate::geometry::coord_map::{smooth, Select};

    #[test]
    fn linear_projection_differential() {
        let r2 = Arc::new(euclidean(2));
        let r1 = Arc::new(euclidean(1));
        let p = SmoothMap::from_fn("p", r2, r1, |_, _| Some(smooth(Select { dim_in: 2, start: 0, len: 1 }))).unwrap();
        let v = TangentVec::new(Point::new(0, vec![0.4, -2.0]), vec![1.0, 2.0]);
        let w = p.differential(&v).unwrap();
        assert_eq!(w.base.coords, vec![0.4]);
        assert_eq!(w.components, vec![1.0]);
    }

    #[test]
    fn identity_differential_is_chart_independent() {
        let s2 = Arc::new(stereographic_pair(2, 3.0));
        let id = SmoothMap::identity(s2.clone());
        let v = TangentVec::new(Point::new(0, vec![0.8, 0.9]), vec![0.3, -0.4]);
        let a = id.differential_in(&v, 1).unwrap();
        let b = s2.transition_tangent(&v, 1).unwrap();
        assert_eq!(a, b);
    }
}
