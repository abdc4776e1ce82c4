//! Shipped submersion scenarios: `flat_projection`, `twisted_flat`, `hopf`.

mod flat;
mod hopf;

use std::sync::Arc;

use serde::Serialize;

use crate::connection::{Curve, LinearConnection};
use crate::error::{Error, Result};
use crate::geometry::{ChartedManifold, Point, TangentVec};
use crate::ode::IntegratorConfig;
use crate::partition::PartitionOfUnity;
use crate::sample::{self, Rng};
use crate::spray::{glue_sprays, quadratic_local_spray, BilinearFn, Spray};
use crate::submersion::{lifted_spray, CompositeAddition, LiftedSpray, SprayAddition, SubmersionGeometry};

pub use hopf::{hopf_section, HopfR4};

pub const SCENARIOS: [&str; 3] = ["flat_projection", "twisted_flat", "hopf"];

/// Summary of a scenario for report headers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub name: String,
    pub dim_m: usize,
    pub dim_n: usize,
    pub charts_m: usize,
    pub charts_n: usize,
    pub submersion_charts: usize,
    pub vertical_connection: String,
    pub vertical_spray: String,
    pub base_spray: String,
}

/// A loop `f: S¹ → M`, parametrized by `t ∈ [0, 2π)`.
pub type LoopFn = Arc<dyn Fn(f64) -> Point + Send + Sync>;

pub struct Scenario {
    pub name: &'static str,
    pub geom: Arc<SubmersionGeometry>,
    pub s_n: Arc<dyn Spray>,
    pub s_h: Arc<LiftedSpray>,
    pub s_v: Arc<dyn Spray>,
    pub conn: Arc<LinearConnection>,
    pub sigma_m: Arc<CompositeAddition>,
    /// Base point used by pointwise checks.
    pub base_point: Point,
    pub loop_fn: LoopFn,
    /// Constant used for the mismatched TM spray `B(u, v) = β (u·v) 𝟙`.
    pub mismatch_beta: f64,
    pub manifest: Manifest,
}

struct Parts {
    geom: SubmersionGeometry,
    s_n: Arc<dyn Spray>,
    s_v: Arc<dyn Spray>,
    conn: LinearConnection,
    base_point: Point,
    loop_fn: LoopFn,
    connection_label: &'static str,
    vertical_label: &'static str,
    base_label: &'static str,
}

pub fn build(name: &str, cfg: &IntegratorConfig) -> Result<Scenario> {
    let (static_name, parts) = match name {
        "flat_projection" => ("flat_projection", flat::flat_projection()?),
        "twisted_flat" => ("twisted_flat", flat::twisted_flat()?),
        "hopf" => ("hopf", hopf::hopf()?),
        _ => return Err(Error::UnknownScenario(name.to_string())),
    };
    let geom = Arc::new(parts.geom);
    let s_h = Arc::new(lifted_spray(geom.clone(), parts.s_n.clone())?);
    let conn = Arc::new(parts.conn);
    let sigma_m = Arc::new(CompositeAddition::new(s_h.clone(), parts.s_v.clone(), conn.clone(), *cfg)?);
    let manifest = Manifest {
        name: static_name.to_string(),
        dim_m: geom.m().dim(),
        dim_n: geom.n().dim(),
        charts_m: geom.m().n_charts(),
        charts_n: geom.n().n_charts(),
        submersion_charts: geom.charts.len(),
        vertical_connection: parts.connection_label.to_string(),
        vertical_spray: parts.vertical_label.to_string(),
        base_spray: parts.base_label.to_string(),
    };
    Ok(Scenario {
        name: static_name,
        geom,
        s_n: parts.s_n,
        s_h,
        s_v: parts.s_v,
        conn,
        sigma_m,
        base_point: parts.base_point,
        loop_fn: parts.loop_fn,
        mismatch_beta: 2.0,
        manifest,
    })
}

pub struct LoopCurve {
    f: LoopFn,
    m: Arc<ChartedManifold>,
}

impl Curve for LoopCurve {
    fn at(&self, t: f64) -> Result<TangentVec> {
        let h = 1e-3;
        let x = (self.f)(t);
        let at = |s: f64| self.m.transition(&(self.f)(t + s * h), x.chart);
        let (p1, m1, p2, m2) = (at(1.0)?, at(-1.0)?, at(2.0)?, at(-2.0)?);
        let v = (0..x.coords.len())
            .map(|i| (8.0 * (p1.coords[i] - m1.coords[i]) - (p2.coords[i] - m2.coords[i])) / (12.0 * h))
            .collect();
        Ok(TangentVec::new(x, v))
    }
}

impl Scenario {
    /// Random points of `M` near the chart origins (coordinate radius 1.2).
    pub fn base_points(&self, r: &mut Rng, n: usize) -> Vec<Point> {
        let m = self.geom.m();
        (0..n)
            .map(|_| {
                let c = (sample::uniform(r, 0.0, m.n_charts() as f64) as usize).min(m.n_charts() - 1);
                Point::new(c, sample::ball(r, m.dim(), 1.2))
            })
            .collect()
    }

    /// Pairs `(v, h)` of a vertical and a horizontal vector over the same
    /// random base point, fibre coordinates in the ball of `radius`.
    pub fn split_samples(&self, r: &mut Rng, n: usize, radius: f64) -> Result<Vec<(Point, Point)>> {
        let g = &self.geom;
        self.base_points(r, n)
            .into_iter()
            .map(|m| {
                let y = g.p.apply(&m)?;
                let w = TangentVec::new(y, sample::ball(r, g.n().dim(), radius));
                let h = g.horizontal_point(&m, &w)?;
                let (c, x) = g.vertical.chart_at(&m)?;
                Ok((g.vertical.point(c, &x, &sample::ball(r, g.vertical.fibre_dim, radius)), h))
            })
            .collect()
    }

    /// The scenario loop as a curve, with velocity by a fourth-order
    /// central difference.
    pub fn loop_curve(&self) -> LoopCurve {
        LoopCurve { f: self.loop_fn.clone(), m: self.geom.m().clone() }
    }

    /// A spray exponential on `TM` that ignores the vertical/horizontal
    /// structure: constant quadratic terms, glued over the charts of `M`.
    pub fn mismatched_addition(&self, cfg: &IntegratorConfig) -> Result<SprayAddition> {
        let tm = self.geom.tm.clone();
        let n = tm.base_dim();
        let beta = self.mismatch_beta;
        let b: BilinearFn = Arc::new(move |_, u, v| {
            let uv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            vec![beta * uv; n]
        });
        let m = tm.base.clone();
        let pu = Arc::new(partition_for(&m)?);
        let locals = (0..tm.charts.len())
            .map(|c| Ok(Arc::new(quadratic_local_spray(tm.clone(), c, Some(b.clone()))?) as Arc<dyn Spray>))
            .collect::<Result<Vec<_>>>()?;
        SprayAddition::new(Arc::new(glue_sprays(tm, locals, pu)?), *cfg)
    }
}

/// Trivial partition on single-chart manifolds, per-chart bumps of radius
/// 2.5 on the stereographic pairs.
pub(crate) fn partition_for(m: &Arc<ChartedManifold>) -> Result<PartitionOfUnity> {
    if m.n_charts() == 1 {
        Ok(PartitionOfUnity::trivial(m.clone()))
    } else {
        PartitionOfUnity::per_chart(m.clone(), 2.5)
    }
}
