//! Builtin atlases and the JSON description used to select them.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dual::{Level, Scalar};
use crate::error::{Error, Result};

use super::chart::{Chart, Domain};
use super::coord_map::{smooth, CoordMap, Identity, Inversion, SmoothFn};
use super::manifold::{ChartedManifold, TransitionTable};

pub const BUILTINS: [&str; 3] = ["stereographic_pair", "euclidean", "torus_angles"];

/// `ℝ^n` with one global chart.
pub fn euclidean(n: usize) -> ChartedManifold {
    single_chart(format!("R{n}"), n, Domain::Whole)
}

/// Open box `(-h, h)^n` with one chart.
pub fn euclidean_box(n: usize, half: f64) -> ChartedManifold {
    single_chart(
        format!("box{n}"),
        n,
        Domain::Box { center: vec![0.0; n], half_widths: vec![half; n] },
    )
}

fn single_chart(name: String, n: usize, domain: Domain) -> ChartedManifold {
    let id: Arc<dyn CoordMap> = smooth(Identity(n));
    ChartedManifold::new(name, vec![Chart::new(0, "global", n, domain)], vec![vec![Some(id)]])
        .expect("single chart atlas")
}

/// `S^n` with stereographic charts from the north pole (chart 0) and the
/// south pole (chart 1), each restricted to the ball of the given radius.
pub fn stereographic_pair(n: usize, radius: f64) -> ChartedManifold {
    let ball = || Domain::Ball { center: vec![0.0; n], radius };
    let id: Arc<dyn CoordMap> = smooth(Identity(n));
    let inv: Arc<dyn CoordMap> = Arc::new(Inversion(n));
    let charts = vec![Chart::new(0, "north", n, ball()), Chart::new(1, "south", n, ball())];
    let transitions: TransitionTable = vec![vec![Some(id.clone()), Some(inv.clone())], vec![Some(inv), Some(id)]];
    ChartedManifold::new(format!("S{n}"), charts, transitions).expect("stereographic atlas")
}

/// Unit-sphere embedding `ℝ^n → S^n ⊂ ℝ^{n+1}` of a stereographic chart.
pub fn sphere_embed<S: Scalar>(chart: usize, x: &[S]) -> Vec<S> {
    let r2 = x.iter().fold(S::zero(), |a, &v| a + v * v);
    let den = r2 + 1.0;
    let mut q: Vec<S> = x.iter().map(|&v| v * 2.0 / den).collect();
    let last = (r2 - 1.0) / den;
    q.push(if chart == 0 { last } else { -last });
    q
}

/// Inverse of [`sphere_embed`]; for points on the unit sphere.
pub fn sphere_chart<S: Scalar>(chart: usize, q: &[S]) -> Vec<S> {
    let n = q.len() - 1;
    let den = if chart == 0 { -q[n] + 1.0 } else { q[n] + 1.0 };
    q[..n].iter().map(|&v| v / den).collect()
}

/// The embedding as a coordinate map (`n → n+1`).
pub struct SphereEmbed {
    pub n: usize,
    pub chart: usize,
}

impl SmoothFn for SphereEmbed {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.n + 1
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        sphere_embed(self.chart, x)
    }
}

/// `T^n = (ℝ/2πℤ)^n` with `2^n` angle charts; chart `m` is centred at
/// `π·bit_k(m)` in each coordinate with half-width `π`.
pub fn torus_angles(n: usize) -> ChartedManifold {
    let count = 1usize << n;
    let center = |m: usize| (0..n).map(|k| if m >> k & 1 == 1 { PI } else { 0.0 }).collect::<Vec<_>>();
    let charts = (0..count)
        .map(|m| Chart::new(m, format!("angles{m}"), n, Domain::Box { center: center(m), half_widths: vec![PI; n] }))
        .collect();
    let transitions = (0..count)
        .map(|_| (0..count).map(|to| Some(smooth(AngleWrap { center: center(to) }))).collect())
        .collect();
    ChartedManifold::new(format!("T{n}"), charts, transitions).expect("torus atlas")
}

/// Shift each angle by the multiple of 2π that lands it within π of `center`.
struct AngleWrap {
    center: Vec<f64>,
}

impl SmoothFn for AngleWrap {
    fn dim_in(&self) -> usize {
        self.center.len()
    }
    fn dim_out(&self) -> usize {
        self.center.len()
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        x.iter()
            .zip(&self.center)
            .map(|(&v, &c)| {
                let shift = 2.0 * PI * ((c - v.re()) / (2.0 * PI)).round();
                v + shift
            })
            .collect()
    }
}

/// Declarative manifold description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldDescriptor {
    pub builtin: String,
    pub dim: usize,
    #[serde(default)]
    pub charts: Option<usize>,
    /// Chart-domain radius for `stereographic_pair`.
    #[serde(default)]
    pub radius: Option<f64>,
}

impl ManifoldDescriptor {
    pub fn build(&self) -> Result<ChartedManifold> {
        if self.dim == 0 {
            return Err(Error::ConfigParse("manifold dim must be positive".into()));
        }
        let m = match self.builtin.as_str() {
            "stereographic_pair" => {
                let r = self.radius.unwrap_or(3.0);
                if r <= 1.0 {
                    return Err(Error::ConfigParse(format!("stereographic radius {r} leaves no overlap")));
                }
                stereographic_pair(self.dim, r)
            }
            "euclidean" => euclidean(self.dim),
            "torus_angles" => torus_angles(self.dim),
            other => return Err(Error::ConfigParse(format!("unknown builtin manifold `{other}`"))),
        };
        if let Some(c) = self.charts {
            if c != m.n_charts() {
                return Err(Error::ConfigParse(format!(
                    "builtin `{}` has {} charts, config says {c}",
                    self.builtin,
                    m.n_charts()
                )));
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::max_abs_diff;
    use crate::geometry::chart::Point;

    #[test]
    fn stereographic_transition_is_inversion() {
        let s2 = stereographic_pair(2, 3.0);
        let y = s2.transition(&Point::new(0, vec![0.5, 0.0]), 1).unwrap();
        // 0.5 / 0.25 = 2
        assert_eq!(y.coords, vec![2.0, 0.0]);
    }

    #[test]
    fn embedding_agrees_across_charts() {
        let x = [0.3, -0.7, 1.1];
        let q0 = sphere_embed(0, &x);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let y: Vec<f64> = x.iter().map(|v| v / r2).collect();
        let q1 = sphere_embed(1, &y);
        assert!(max_abs_diff(&q0, &q1) < 1e-15);
        assert!((q0.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(max_abs_diff(&sphere_chart(0, &q0), &x) < 1e-15);
    }

    #[test]
    fn torus_transitions_wrap_angles() {
        let t2 = torus_angles(2);
        assert_eq!(t2.n_charts(), 4);
        let p = Point::new(0, vec![3.0, -3.0]);
        let q = t2.transition(&p, 3).unwrap();
        assert!(max_abs_diff(&q.coords, &[3.0, 2.0 * PI - 3.0]) < 1e-15);
        let pts: Vec<Point> = (0..20).map(|i| Point::new(0, vec![0.3 * i as f64 - 3.0, 1.0 - 0.1 * i as f64])).collect();
        assert!(t2.cocycle_residual(&pts) < 1e-14);
    }

    #[test]
    fn descriptor_rejects_chart_count_mismatch() {
        let desc = ManifoldDescriptor { builtin: "torus_angles".into(), dim: 2, charts: Some(3), radius: None };
        assert!(desc.build().is_err());
        let ok: ManifoldDescriptor = serde_json::from_str(r#"{"builtin":"stereographic_pair","dim":3,"charts":2}"#).unwrap();
        assert_eq!(ok.build().unwrap().dim(), 3);
    }
}
