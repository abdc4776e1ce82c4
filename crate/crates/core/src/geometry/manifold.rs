use std::sync::Arc;

use crate::dual::norm;
use crate::error::{Error, Result};

use super::chart::{Chart, ChartId, Domain, Point, TangentVec};
use super::coord_map::{smooth, AppendIdentity, CoordMap, TangentLift};

pub type TransitionTable = Vec<Vec<Option<Arc<dyn CoordMap>>>>;

/// A finite atlas: charts plus transition maps `t_ij = ψ_j ∘ ψ_i⁻¹` for
/// every ordered pair that overlaps. Diagonal entries must be present.
#[derive(Clone)]
pub struct ChartedManifold {
    pub name: String,
    dim: usize,
    charts: Vec<Chart>,
    transitions: TransitionTable,
}

impl std::fmt::Debug for ChartedManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartedManifold")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("charts", &self.charts)
            .finish()
    }
}

impl ChartedManifold {
    pub fn new(name: impl Into<String>, charts: Vec<Chart>, transitions: TransitionTable) -> Result<Self> {
        let name = name.into();
        let dim = charts.first().map(|c| c.dim).ok_or_else(|| Error::ConfigParse(format!("{name}: no charts")))?;
        if dim == 0 {
            return Err(Error::ConfigParse(format!("{name}: zero-dimensional chart")));
        }
        if transitions.len() != charts.len() {
            return Err(Error::DimensionMismatch { expected: charts.len(), got: transitions.len() });
        }
        for (i, c) in charts.iter().enumerate() {
            if c.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.dim });
            }
            if c.id != i {
                return Err(Error::ConfigParse(format!("{name}: chart {} stored at index {i}", c.id)));
            }
            if transitions[i].len() != charts.len() || transitions[i][i].is_none() {
                return Err(Error::ConfigParse(format!("{name}: transition row {i} incomplete")));
            }
            for t in transitions[i].iter().flatten() {
                if t.dim_in() != dim || t.dim_out() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: t.dim_in() });
                }
            }
        }
        Ok(Self { name, dim, charts, transitions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn chart(&self, id: ChartId) -> &Chart {
        &self.charts[id]
    }

    pub fn n_charts(&self) -> usize {
        self.charts.len()
    }

    pub fn transition_map(&self, from: ChartId, to: ChartId) -> Option<&Arc<dyn CoordMap>> {
        self.transitions.get(from)?.get(to)?.as_ref()
    }

    pub fn margin(&self, x: &Point) -> f64 {
        self.charts.get(x.chart).map_or(f64::NEG_INFINITY, |c| c.margin(&x.coords))
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.charts.get(x.chart).is_some_and(|c| c.contains(&x.coords))
    }

    /// Re-express `x` in chart `to`.
    pub fn transition(&self, x: &Point, to: ChartId) -> Result<Point> {
        let outside = || Error::OutsideOverlap { from: x.chart, to, coords: x.coords.clone() };
        if !self.contains(x) || to >= self.charts.len() {
            return Err(outside());
        }
        if x.chart == to {
            return Ok(x.clone());
        }
        let t = self.transition_map(x.chart, to).ok_or_else(outside)?;
        let y = t.eval(&x.coords);
        if !self.charts[to].contains(&y) {
            return Err(outside());
        }
        Ok(Point::new(to, y))
    }

    pub fn transition_tangent(&self, v: &TangentVec, to: ChartId) -> Result<TangentVec> {
        let base = self.transition(&v.base, to)?;
        if v.base.chart == to {
            return Ok(v.clone());
        }
        let t = self.transition_map(v.base.chart, to).expect("transition checked above");
        Ok(TangentVec::new(base, t.jet1(&v.base.coords, &v.components)))
    }

    /// All representations of `x` in charts that contain it.
    pub fn representations(&self, x: &Point) -> Vec<Point> {
        (0..self.charts.len()).filter_map(|c| self.transition(x, c).ok()).collect()
    }

    /// The representation with maximal margin; ties go to the lowest id.
    pub fn best_chart(&self, x: &Point) -> Result<Point> {
        let mut best: Option<(f64, Point)> = None;
        for y in self.representations(x) {
            let m = self.margin(&y);
            if best.as_ref().is_none_or(|(bm, _)| m > *bm) {
                best = Some((m, y));
            }
        }
        best.map(|(_, p)| p).ok_or_else(|| Error::NotInChart(self.name.clone()))
    }

    pub fn best_chart_tangent(&self, v: &TangentVec) -> Result<TangentVec> {
        let b = self.best_chart(&v.base)?;
        self.transition_tangent(v, b.chart)
    }

    /// Chart-coordinate distance in the common chart where both points
    /// have the largest minimum margin; infinite if no chart holds both.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        let mut best: Option<(f64, f64)> = None;
        for c in 0..self.charts.len() {
            if let (Ok(pa), Ok(pb)) = (self.transition(a, c), self.transition(b, c)) {
                let m = self.margin(&pa).min(self.margin(&pb));
                let d = norm(&pa.coords.iter().zip(&pb.coords).map(|(x, y)| x - y).collect::<Vec<_>>());
                if best.is_none_or(|(bm, _)| m > bm) {
                    best = Some((m, d));
                }
            }
        }
        best.map_or(f64::INFINITY, |(_, d)| d)
    }

    /// Max cocycle residual `|t_jk(t_ij(x)) − t_ik(x)|` over triple-overlap
    /// representations of the given points (includes `k = i`, i.e. inverse
    /// pairs).
    pub fn cocycle_residual(&self, points: &[Point]) -> f64 {
        let mut worst = 0.0_f64;
        for x in points {
            for y in self.representations(x) {
                for z in self.representations(&y) {
                    for w in self.representations(&z) {
                        let Ok(direct) = self.transition(&y, w.chart) else { continue };
                        let r = norm(&direct.coords.iter().zip(&w.coords).map(|(a, b)| a - b).collect::<Vec<_>>());
                        worst = worst.max(r);
                    }
                }
            }
        }
        worst
    }
}

/// `M × ℝ^extra` with the same charts; the extra coordinates are carried
/// unchanged by every transition and ignored by the domain tests.
pub fn with_passive_coords(m: &ChartedManifold, extra: usize) -> ChartedManifold {
    let n = m.dim;
    let charts = m
        .charts
        .iter()
        .map(|c| {
            let base = c.domain.clone();
            let margin = Arc::new(move |z: &[f64]| base.margin(&z[..n]));
            Chart::new(c.id, c.label.clone(), n + extra, Domain::Custom(margin))
        })
        .collect();
    let transitions = m
        .transitions
        .iter()
        .map(|row| row.iter().map(|t| t.as_ref().map(|t| smooth(AppendIdentity { inner: t.clone(), extra }))).collect())
        .collect();
    ChartedManifold::new(format!("{}xR{}", m.name, extra), charts, transitions).expect("product atlas inherits validity")
}

/// `TM` with charts `U × ℝ^n` and transitions `(t(x), Dt(x)·v)`.
pub fn tangent_manifold(m: &ChartedManifold) -> ChartedManifold {
    let n = m.dim;
    let charts = m
        .charts
        .iter()
        .map(|c| {
            let base = c.domain.clone();
            let margin = Arc::new(move |z: &[f64]| {
                if z[n..].iter().any(|v| !v.is_finite()) {
                    f64::NEG_INFINITY
                } else {
                    base.margin(&z[..n])
                }
            });
            let domain = match &c.domain {
                Domain::Whole => Domain::Whole,
                _ => Domain::Custom(margin),
            };
            Chart::new(c.id, format!("T{}", c.label), 2 * n, domain)
        })
        .collect();
    let transitions = m
        .transitions
        .iter()
        .map(|row| row.iter().map(|t| t.as_ref().map(|t| smooth(TangentLift(t.clone())))).collect())
        .collect();
    ChartedManifold::new(format!("T{}", m.name), charts, transitions).expect("tangent atlas inherits validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builtins::stereographic_pair;

    #[test]
    fn best_chart_prefers_larger_margin() {
        let s2 = stereographic_pair(2, 3.0);
        let p = Point::new(0, vec![2.5, 0.0]);
        let best = s2.best_chart(&p).unwrap();
        assert_eq!(best.chart, 1);
        assert!((best.coords[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn transition_rejects_points_outside_target() {
        let s2 = stereographic_pair(2, 3.0);
        let p = Point::new(0, vec![0.1, 0.0]);
        assert!(matches!(s2.transition(&p, 1), Err(Error::OutsideOverlap { .. })));
    }

    #[test]
    fn tangent_of_tangent_is_a_valid_atlas() {
        let s2 = stereographic_pair(2, 3.0);
        let tts2 = tangent_manifold(&tangent_manifold(&s2));
        assert_eq!(tts2.dim(), 8);
        let p = Point::new(0, vec![0.6, -0.8, 0.3, 0.2, -0.1, 0.5, 0.0, 0.4]);
        assert!(tts2.cocycle_residual(&[p]) < 1e-12);
    }
}
