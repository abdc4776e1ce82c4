//! Anchored vector bundles `(π, E, ρ)` over charted manifolds.

use std::sync::Arc;

use crate::dual::{mat_vec, max_abs_diff, Level};
use crate::error::{Error, Result};
use crate::geometry::{
    smooth, BundleTransition, Chart, ChartId, ChartedManifold, Constant, CoordMap, Domain, JacobianField, Point,
    SmoothFn, SmoothMap, TangentVec,
};

/// A local trivialization `E|_U ≅ U × ℝ^k` over (a subset of) a base chart.
#[derive(Clone, Debug)]
pub struct BundleChart {
    pub base_chart: ChartId,
    pub label: String,
    /// Where in the base chart this trivialization is valid.
    pub domain: Domain,
}

/// A vector bundle over `base` with fibre `ℝ^k`, given by local
/// trivializations, their fibre transition matrices `g_cd(x)` (written in
/// the base coordinates of chart `c`) and the anchor `ρ_c(x)`, an `n × k`
/// matrix field per trivialization.
///
/// The total space is an ordinary [`ChartedManifold`] with coordinates
/// `(x, ξ)` and one chart per trivialization.
#[derive(Clone)]
pub struct AnchoredBundle {
    pub name: String,
    pub base: Arc<ChartedManifold>,
    pub fibre_dim: usize,
    pub charts: Vec<BundleChart>,
    pub total: Arc<ChartedManifold>,
    anchors: Vec<Arc<dyn CoordMap>>,
    fibre_transitions: Vec<Vec<Option<Arc<dyn CoordMap>>>>,
}

impl std::fmt::Debug for AnchoredBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnchoredBundle")
            .field("name", &self.name)
            .field("base", &self.base.name)
            .field("fibre_dim", &self.fibre_dim)
            .field("charts", &self.charts)
            .finish()
    }
}

impl AnchoredBundle {
    pub fn new(
        name: impl Into<String>,
        base: Arc<ChartedManifold>,
        fibre_dim: usize,
        charts: Vec<BundleChart>,
        anchors: Vec<Arc<dyn CoordMap>>,
        fibre_transitions: Vec<Vec<Option<Arc<dyn CoordMap>>>>,
    ) -> Result<Self> {
        let name = name.into();
        let n = base.dim();
        let k = fibre_dim;
        if anchors.len() != charts.len() || fibre_transitions.len() != charts.len() {
            return Err(Error::DimensionMismatch { expected: charts.len(), got: anchors.len() });
        }
        for a in &anchors {
            if a.dim_in() != n || a.dim_out() != n * k {
                return Err(Error::DimensionMismatch { expected: n * k, got: a.dim_out() });
            }
        }
        let mut total_charts = Vec::with_capacity(charts.len());
        let mut table = Vec::with_capacity(charts.len());
        for (c, bc) in charts.iter().enumerate() {
            let base_domain = base.chart(bc.base_chart).domain.clone();
            let own = bc.domain.clone();
            let margin = Arc::new(move |z: &[f64]| {
                if z[n..].iter().any(|v| !v.is_finite()) {
                    return f64::NEG_INFINITY;
                }
                base_domain.margin(&z[..n]).min(own.margin(&z[..n]))
            });
            total_charts.push(Chart::new(c, format!("{}[{}]", name, bc.label), n + k, Domain::Custom(margin)));
            let mut row = Vec::with_capacity(charts.len());
            for (d, bd) in charts.iter().enumerate() {
                let entry = match (&fibre_transitions[c][d], base.transition_map(bc.base_chart, bd.base_chart)) {
                    (Some(g), Some(t)) => {
                        if g.dim_in() != n || g.dim_out() != k * k {
                            return Err(Error::DimensionMismatch { expected: k * k, got: g.dim_out() });
                        }
                        Some(smooth(BundleTransition { base: t.clone(), fibre: g.clone(), fibre_dim: k }))
                    }
                    _ => None,
                };
                row.push(entry);
            }
            if row[c].is_none() {
                return Err(Error::ConfigParse(format!("{name}: missing identity transition for chart {c}")));
            }
            table.push(row);
        }
        let total = Arc::new(ChartedManifold::new(format!("E({name})"), total_charts, table)?);
        Ok(Self { name, base, fibre_dim, charts, total, anchors, fibre_transitions })
    }

    /// `TM` with the identity anchor.
    pub fn tangent(base: Arc<ChartedManifold>) -> Self {
        let n = base.dim();
        let m = base.n_charts();
        let charts = (0..m).map(|c| BundleChart { base_chart: c, label: base.chart(c).label.clone(), domain: Domain::Whole }).collect();
        let anchors = (0..m).map(|_| smooth(Constant { dim_in: n, value: identity(n) })).collect();
        let g = (0..m)
            .map(|c| (0..m).map(|d| base.transition_map(c, d).map(|t| smooth(JacobianField(t.clone())))).collect())
            .collect();
        Self::new(format!("T{}", base.name), base, n, charts, anchors, g).expect("tangent bundle is well formed")
    }

    /// Trivial bundle `M × ℝ^k` whose anchor is given per base chart by a
    /// frame field `x ↦ (n × k matrix)`; fibre coordinates are global.
    pub fn with_global_frame(
        name: impl Into<String>,
        base: Arc<ChartedManifold>,
        fibre_dim: usize,
        frames: Vec<Arc<dyn CoordMap>>,
    ) -> Result<Self> {
        let n = base.dim();
        let m = base.n_charts();
        let charts = (0..m).map(|c| BundleChart { base_chart: c, label: base.chart(c).label.clone(), domain: Domain::Whole }).collect();
        let id_k: Arc<dyn CoordMap> = smooth(Constant { dim_in: n, value: identity(fibre_dim) });
        let g = (0..m).map(|c| (0..m).map(|d| base.transition_map(c, d).map(|_| id_k.clone())).collect()).collect();
        Self::new(name, base, fibre_dim, charts, frames, g)
    }

    /// `E₁ ⊕ E₂` over trivializations of both sitting on the same base
    /// chart; the anchor is `(ξ₁, ξ₂) ↦ ρ₁ξ₁ + ρ₂ξ₂`.
    pub fn whitney_sum(a: &AnchoredBundle, b: &AnchoredBundle) -> Result<Self> {
        let n = a.base.dim();
        let (ka, kb) = (a.fibre_dim, b.fibre_dim);
        let pairs = whitney_pairs(a, b);
        let charts = pairs
            .iter()
            .map(|&(ia, ib)| {
                let (ca, cb) = (&a.charts[ia], &b.charts[ib]);
                let (da, db) = (ca.domain.clone(), cb.domain.clone());
                BundleChart {
                    base_chart: ca.base_chart,
                    label: format!("{}+{}", ca.label, cb.label),
                    domain: Domain::Custom(Arc::new(move |x: &[f64]| da.margin(x).min(db.margin(x)))),
                }
            })
            .collect();
        let anchors = pairs
            .iter()
            .map(|&(ia, ib)| {
                smooth(HStack { left: a.anchors[ia].clone(), right: b.anchors[ib].clone(), rows: n, lc: ka, rc: kb })
            })
            .collect();
        let g = pairs
            .iter()
            .map(|&(ia, ib)| {
                pairs
                    .iter()
                    .map(|&(ja, jb)| match (&a.fibre_transitions[ia][ja], &b.fibre_transitions[ib][jb]) {
                        (Some(ga), Some(gb)) => {
                            Some(smooth(BlockDiag { a: ga.clone(), b: gb.clone(), ka, kb }))
                        }
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        Self::new(format!("{}+{}", a.name, b.name), a.base.clone(), ka + kb, charts, anchors, g)
    }

    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn anchor_map(&self, c: ChartId) -> &Arc<dyn CoordMap> {
        &self.anchors[c]
    }

    pub fn fibre_transition(&self, c: ChartId, d: ChartId) -> Option<&Arc<dyn CoordMap>> {
        self.fibre_transitions[c][d].as_ref()
    }

    /// Split total-space coordinates into `(x, ξ)`.
    pub fn split<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        z.split_at(self.base.dim())
    }

    pub fn point(&self, c: ChartId, x: &[f64], xi: &[f64]) -> Point {
        let mut z = x.to_vec();
        z.extend_from_slice(xi);
        Point::new(c, z)
    }

    pub fn projection(&self, v: &Point) -> Point {
        Point::new(self.charts[v.chart].base_chart, v.coords[..self.base.dim()].to_vec())
    }

    /// `ρ(x) ξ` in the base chart underlying `c`.
    pub fn anchor_apply<S: Level>(&self, c: ChartId, x: &[S], xi: &[S]) -> Vec<S> {
        let rho = S::eval_map(&*self.anchors[c], x);
        mat_vec(&rho, self.base.dim(), self.fibre_dim, xi)
    }

    pub fn anchor(&self, v: &Point) -> TangentVec {
        let (x, xi) = self.split(&v.coords);
        TangentVec::new(self.projection(v), self.anchor_apply(v.chart, x, xi))
    }

    /// The trivialization over `m` with the largest margin, and `m`'s base
    /// coordinates in it.
    pub fn chart_at(&self, m: &Point) -> Result<(ChartId, Vec<f64>)> {
        let mut best: Option<(f64, ChartId, Vec<f64>)> = None;
        for c in 0..self.charts.len() {
            let Ok(y) = self.base.transition(m, self.charts[c].base_chart) else { continue };
            let z = self.point(c, &y.coords, &vec![0.0; self.fibre_dim]);
            let margin = self.total.margin(&z);
            if margin > 0.0 && best.as_ref().is_none_or(|b| margin > b.0) {
                best = Some((margin, c, y.coords));
            }
        }
        best.map(|(_, c, x)| (c, x)).ok_or_else(|| Error::NotInChart(self.name.clone()))
    }

    pub fn zero(&self, m: &Point) -> Result<Point> {
        let (c, x) = self.chart_at(m)?;
        Ok(self.point(c, &x, &vec![0.0; self.fibre_dim]))
    }

    /// Fibre scaling `h_λ`.
    pub fn scale(&self, v: &Point, lambda: f64) -> Point {
        let n = self.base.dim();
        let mut z = v.coords.clone();
        z[n..].iter_mut().for_each(|a| *a *= lambda);
        Point::new(v.chart, z)
    }

    /// `π` as a smooth map `E → M`.
    pub fn projection_map(&self) -> SmoothMap {
        let n = self.base.dim();
        let k = self.fibre_dim;
        let charts = self.charts.clone();
        let base = self.base.clone();
        SmoothMap::from_fn(format!("pi_{}", self.name), self.total.clone(), self.base.clone(), |c, b| {
            base.transition_map(charts[c].base_chart, b).map(|t| {
                smooth(crate::geometry::Compose {
                    inner: smooth(crate::geometry::Select { dim_in: n + k, start: 0, len: n }),
                    outer: t.clone(),
                })
            })
        })
        .expect("projection reps have matching dimensions")
    }

    /// Max deviation from fibre-wise linearity of the anchor over samples
    /// `(v, w, a, b)`; `v`, `w` must share a chart and base point.
    pub fn anchor_linearity(&self, samples: &[(Point, Vec<f64>, f64, f64)]) -> f64 {
        let mut worst = 0.0_f64;
        for (v, w, a, b) in samples {
            let (x, xi) = self.split(&v.coords);
            let comb: Vec<f64> = xi.iter().zip(w).map(|(p, q)| a * p + b * q).collect();
            let lhs = self.anchor_apply(v.chart, x, &comb);
            let rv = self.anchor_apply(v.chart, x, xi);
            let rw = self.anchor_apply(v.chart, x, w);
            let rhs: Vec<f64> = rv.iter().zip(&rw).map(|(p, q)| a * p + b * q).collect();
            worst = worst.max(max_abs_diff(&lhs, &rhs));
        }
        worst
    }
}

/// Chart `i` of `a ⊕ b` is the pair `whitney_pairs(a, b)[i]` of
/// trivializations of `a` and `b` over the same base chart.
pub fn whitney_pairs(a: &AnchoredBundle, b: &AnchoredBundle) -> Vec<(ChartId, ChartId)> {
    let mut pairs = Vec::new();
    for (ia, ca) in a.charts.iter().enumerate() {
        for (ib, cb) in b.charts.iter().enumerate() {
            if ca.base_chart == cb.base_chart {
                pairs.push((ia, ib));
            }
        }
    }
    pairs
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// `x ↦ [L(x) | R(x)]` for row-major matrix fields with equal row count.
struct HStack {
    left: Arc<dyn CoordMap>,
    right: Arc<dyn CoordMap>,
    rows: usize,
    lc: usize,
    rc: usize,
}

impl SmoothFn for HStack {
    fn dim_in(&self) -> usize {
        self.left.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.rows * (self.lc + self.rc)
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let l = S::eval_map(&*self.left, x);
        let r = S::eval_map(&*self.right, x);
        let mut out = Vec::with_capacity(self.dim_out());
        for i in 0..self.rows {
            out.extend_from_slice(&l[i * self.lc..(i + 1) * self.lc]);
            out.extend_from_slice(&r[i * self.rc..(i + 1) * self.rc]);
        }
        out
    }
}

struct BlockDiag {
    a: Arc<dyn CoordMap>,
    b: Arc<dyn CoordMap>,
    ka: usize,
    kb: usize,
}

impl SmoothFn for BlockDiag {
    fn dim_in(&self) -> usize {
        self.a.dim_in()
    }
    fn dim_out(&self) -> usize {
        (self.ka + self.kb).pow(2)
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let (ka, kb) = (self.ka, self.kb);
        let k = ka + kb;
        let ga = S::eval_map(&*self.a, x);
        let gb = S::eval_map(&*self.b, x);
        let mut out = vec![S::zero(); k * k];
        for i in 0..ka {
            for j in 0..ka {
                out[i * k + j] = ga[i * ka + j];
            }
        }
        for i in 0..kb {
            for j in 0..kb {
                out[(ka + i) * k + ka + j] = gb[i * kb + j];
            }
        }
        out
    }
}
