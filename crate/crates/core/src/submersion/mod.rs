//! Submersions with submersion charts, the vertical/horizontal splitting
//! of `TM`, and the sprays and local additions built on top of it.

pub mod addition;
pub mod sprays;

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::bundle::{AnchoredBundle, BundleChart};
use crate::dual::{jacobian_at, max_abs_diff, solve, Level};
use crate::error::{Error, Result};
use crate::geometry::{
    compose, smooth, ChartId, ChartedManifold, CoordMap, Domain, JacobianField, Point, SmoothFn, SmoothMap, TangentVec,
};
use crate::partition::PartitionOfUnity;
use crate::report::Measurement;

pub use addition::{
    diagram_commutativity_check, injectivity_probe, sigma_m_derivative_check, CompositeAddition, InjectivityOptions,
    InjectivityReport, LocalAddition, Omega, SprayAddition,
};
pub use sprays::{
    fibre_preservation_check, intertwining_check, lifted_spray, local_addition_on_p_check, relatedness_check,
    vertical_spray, LiftedSpray,
};

/// A chart pair in which `p` is the projection onto the first block:
/// `ψ(x) = (coordinates of p(x) in n_chart, fibre coordinates)`.
#[derive(Clone)]
pub struct SubmersionChart {
    pub label: String,
    pub n_chart: ChartId,
    /// `ψ` written in the coordinates of each chart of `M` (`None` where
    /// it is not provided).
    pub psi: Vec<Option<Arc<dyn CoordMap>>>,
}

/// A submersion `p: M → N` with
/// - submersion charts,
/// - a partition of unity on `N` (bump `i` belongs to chart `i`), used
///   pulled back along `p` to glue the local horizontal lifts,
/// - a vertical bundle `V ⊆ TM` given by frames, anchored by inclusion,
/// - the horizontal bundle `H ≅ p*TN` anchored by `σ_H`.
///
/// `H` has one trivialization per pair (chart `a` of `M`, chart `b` of
/// `N`); its fibre coordinates are the components of `Tp(h)` in chart `b`.
pub struct SubmersionGeometry {
    pub name: String,
    pub p: Arc<SmoothMap>,
    pub charts: Vec<SubmersionChart>,
    pub pu: Arc<PartitionOfUnity>,
    pub vertical: Arc<AnchoredBundle>,
    pub horizontal: Arc<AnchoredBundle>,
    pub tm: Arc<AnchoredBundle>,
    pub tn: Arc<AnchoredBundle>,
    /// `(a, b)` for each trivialization of `H`.
    pub pairs: Vec<(ChartId, ChartId)>,
}

impl SubmersionGeometry {
    pub fn new(
        name: impl Into<String>,
        p: Arc<SmoothMap>,
        charts: Vec<SubmersionChart>,
        pu: Arc<PartitionOfUnity>,
        vertical: Arc<AnchoredBundle>,
    ) -> Result<Self> {
        let name = name.into();
        let (m, n) = (p.source.clone(), p.target.clone());
        if pu.len() != charts.len() || !Arc::ptr_eq(&pu.manifold, &n) && pu.manifold.name != n.name {
            return Err(Error::ConfigParse(format!("{name}: partition of unity must have one bump per submersion chart")));
        }
        if vertical.fibre_dim + n.dim() != m.dim() {
            return Err(Error::DimensionMismatch { expected: m.dim() - n.dim(), got: vertical.fibre_dim });
        }
        for c in &charts {
            if c.psi.len() != m.n_charts() {
                return Err(Error::DimensionMismatch { expected: m.n_charts(), got: c.psi.len() });
            }
        }
        let (horizontal, pairs) = build_ehresmann(&p, &charts, &pu)?;
        Ok(Self {
            name,
            tm: Arc::new(AnchoredBundle::tangent(m)),
            tn: Arc::new(AnchoredBundle::tangent(n)),
            p,
            charts,
            pu,
            vertical,
            horizontal: Arc::new(horizontal),
            pairs,
        })
    }

    pub fn m(&self) -> &Arc<ChartedManifold> {
        &self.p.source
    }

    pub fn n(&self) -> &Arc<ChartedManifold> {
        &self.p.target
    }

    /// `ψ_α(x) − (φ_α(p(x)), ·)` on the first block, at points of `M`.
    pub fn chart_residual(&self, points: &[Point]) -> Measurement {
        let nd = self.n().dim();
        let mut meas = Measurement::default();
        for x in points {
            for sc in &self.charts {
                let Some(psi) = &sc.psi[x.chart] else { continue };
                let Ok(y) = self.p.apply_in(x, sc.n_chart) else { continue };
                meas.record(max_abs_diff(&psi.eval(&x.coords)[..nd], &y.coords));
            }
        }
        meas
    }

    /// Point of `H` over `m` whose image under `Tp` is `w`; the
    /// trivialization with the largest margin is used.
    pub fn horizontal_point(&self, m: &Point, w: &TangentVec) -> Result<Point> {
        let h = &*self.horizontal;
        let mut best: Option<(f64, Point)> = None;
        for (c, &(a, b)) in self.pairs.iter().enumerate() {
            let (Ok(x), Ok(wb)) = (self.m().transition(m, a), self.n().transition_tangent(w, b)) else { continue };
            let z = h.point(c, &x.coords, &wb.components);
            let margin = h.total.margin(&z);
            if margin > 0.0 && best.as_ref().is_none_or(|(bm, _)| margin > *bm) {
                best = Some((margin, z));
            }
        }
        best.map(|b| b.1).ok_or_else(|| Error::NotInChart(h.name.clone()))
    }

    /// `σ_H(m, w)` as a tangent vector of `M`.
    pub fn sigma_h(&self, m: &Point, w: &TangentVec) -> Result<TangentVec> {
        Ok(self.horizontal.anchor(&self.horizontal_point(m, w)?))
    }

    /// `Tp|_H`: the point of `TN` with the fibre coordinates of `h`.
    pub fn tp_h(&self, h: &Point) -> Result<Point> {
        let (a, b) = self.pairs[h.chart];
        let nd = self.m().dim();
        let y = self.p.apply_in(&Point::new(a, h.coords[..nd].to_vec()), b)?;
        Ok(self.tn.point(b, &y.coords, &h.coords[nd..]))
    }

    /// `proj_H(v) = σ_H(π v, Tp v)` as a point of `H`.
    pub fn proj_h(&self, v: &TangentVec) -> Result<Point> {
        self.horizontal_point(&v.base, &self.p.differential(v)?)
    }

    /// `proj_V(v) = v − proj_H(v)`, as a point of `V` (fibre coordinates
    /// by least squares against the vertical frame).
    pub fn proj_v(&self, v: &TangentVec) -> Result<Point> {
        let hv = self.horizontal.anchor(&self.proj_h(v)?);
        let (c, x) = self.vertical.chart_at(&v.base)?;
        let bc = self.vertical.charts[c].base_chart;
        let v = self.m().transition_tangent(v, bc)?;
        let hv = self.m().transition_tangent(&hv, bc)?;
        let rest: Vec<f64> = v.components.iter().zip(&hv.components).map(|(a, b)| a - b).collect();
        Ok(self.vertical.point(c, &x, &self.vertical_coords(c, &x, &rest)?))
    }

    /// Fibre coordinates `ζ` with `frame_c(x) ζ = u` (least squares).
    pub fn vertical_coords(&self, c: ChartId, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let (n, k) = (self.m().dim(), self.vertical.fibre_dim);
        let frame = DMatrix::from_row_slice(n, k, &self.vertical.anchor_map(c).eval(x));
        let sol = frame
            .svd(true, true)
            .solve(&nalgebra::DVector::from_column_slice(u), 1e-14)
            .map_err(|e| Error::InsufficientData(e.to_string()))?;
        Ok(sol.iter().copied().collect())
    }

    /// `v ↦ (proj_V v, proj_H v)`.
    pub fn split(&self, v: &TangentVec) -> Result<(Point, Point)> {
        Ok((self.proj_v(v)?, self.proj_h(v)?))
    }

    /// Basis of `V_m` in the best chart at `m`: the vertical frame,
    /// Gram–Schmidt orthonormalized in chart coordinates.
    pub fn vertical_basis(&self, m: &Point) -> Result<Vec<TangentVec>> {
        let (c, x) = self.vertical.chart_at(m)?;
        let (n, k) = (self.m().dim(), self.vertical.fibre_dim);
        let frame = self.vertical.anchor_map(c).eval(&x);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        for j in 0..k {
            let mut col: Vec<f64> = (0..n).map(|i| frame[i * k + j]).collect();
            for b in &basis {
                let d: f64 = col.iter().zip(b).map(|(p, q)| p * q).sum();
                col.iter_mut().zip(b).for_each(|(p, q)| *p -= d * q);
            }
            let len = crate::dual::norm(&col);
            if len < 1e-12 {
                return Err(Error::InsufficientData(format!("vertical frame degenerate at {m:?}")));
            }
            basis.push(col.into_iter().map(|a| a / len).collect());
        }
        let base = Point::new(self.vertical.charts[c].base_chart, x);
        Ok(basis.into_iter().map(|b| TangentVec::new(base.clone(), b)).collect())
    }

    /// `[basis of V_m | σ_H(e_1) … σ_H(e_d)]`, a square matrix in the
    /// coordinates of the chart of `m`'s vertical basis.
    pub fn splitting_matrix(&self, m: &Point) -> Result<DMatrix<f64>> {
        let vb = self.vertical_basis(m)?;
        let base = vb[0].base.clone();
        let nd = self.m().dim();
        let y = self.p.apply(&base)?;
        let mut cols: Vec<Vec<f64>> = vb.into_iter().map(|v| v.components).collect();
        for j in 0..self.n().dim() {
            let mut e = vec![0.0; self.n().dim()];
            e[j] = 1.0;
            let h = self.sigma_h(&base, &TangentVec::new(y.clone(), e))?;
            cols.push(self.m().transition_tangent(&h, base.chart)?.components);
        }
        Ok(DMatrix::from_fn(nd, nd, |r, c| cols[c][r]))
    }

    /// Smallest singular value of [`Self::splitting_matrix`] at each point.
    pub fn spanning_check(&self, points: &[Point]) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for m in points {
            let s = self.splitting_matrix(m)?.singular_values();
            worst = worst.min(s.min());
        }
        Ok(worst)
    }

    /// `‖Tp(σ_H(m, w)) − w‖` over samples `(m, w)`.
    pub fn section_check(&self, samples: &[(Point, TangentVec)]) -> Result<Measurement> {
        let mut meas = Measurement::default();
        for (m, w) in samples {
            let h = self.sigma_h(m, w)?;
            let tp = self.p.differential_in(&h, w.chart())?;
            meas.record(max_abs_diff(&tp.components, &w.components));
        }
        Ok(meas)
    }

    /// `‖Tp(b)‖` over the vertical basis at each point.
    pub fn vertical_check(&self, points: &[Point]) -> Result<Measurement> {
        let mut meas = Measurement::default();
        for m in points {
            for b in self.vertical_basis(m)? {
                let tp = self.p.differential(&b)?;
                meas.record(crate::dual::norm(&tp.components));
            }
        }
        Ok(meas)
    }

    /// For tangent vectors `v`: `proj_V v + proj_H v = v`, `Tp(proj_V v) = 0`.
    pub fn splitting_check(&self, vs: &[TangentVec]) -> Result<Measurement> {
        let mut meas = Measurement::default();
        for v in vs {
            let (pv, ph) = self.split(v)?;
            let av = self.m().transition_tangent(&self.vertical.anchor(&pv), v.chart())?;
            let ah = self.m().transition_tangent(&self.horizontal.anchor(&ph), v.chart())?;
            let sum: Vec<f64> = av.components.iter().zip(&ah.components).map(|(a, b)| a + b).collect();
            meas.record(max_abs_diff(&sum, &v.components));
            meas.record(crate::dual::norm(&self.p.differential(&av)?.components));
        }
        Ok(meas)
    }
}

/// `σ_ab(x) = Σ_α h_α(p(x)) (Dψ_α(x))⁻¹ (D(φ_α ∘ φ_b⁻¹)(p(x)), 0)`, the
/// glued horizontal lift from the `N`-chart `b` into the `M`-chart `a`.
struct HorizontalAnchor {
    n: usize,
    nd: usize,
    b: ChartId,
    p_ab: Arc<dyn CoordMap>,
    charts: Vec<(ChartId, Arc<dyn CoordMap>, Arc<dyn CoordMap>)>,
    pu: Arc<PartitionOfUnity>,
}

impl SmoothFn for HorizontalAnchor {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.n * self.nd
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let (n, nd) = (self.n, self.nd);
        let nan = || vec![S::cst(f64::NAN); n * nd];
        let y = S::eval_map(&*self.p_ab, x);
        let Ok(w) = self.pu.weights(self.b, &y) else { return nan() };
        let mut out = vec![S::zero(); n * nd];
        for ((_, psi, t_b), &h) in self.charts.iter().zip(&w) {
            if h.re() <= 0.0 {
                continue;
            }
            let jpsi = jacobian_at(&**psi, x);
            let jt = jacobian_at(&**t_b, &y);
            let mut rhs = vec![S::zero(); n * nd];
            rhs[..nd * nd].copy_from_slice(&jt);
            let Some(sig) = solve(&jpsi, &rhs, n, nd) else { return nan() };
            for (o, s) in out.iter_mut().zip(sig) {
                *o += h * s;
            }
        }
        out
    }
}

/// The horizontal bundle `H` of the glued Ehresmann connection, with
/// anchor `σ_H`; see [`SubmersionGeometry`].
pub fn build_ehresmann(
    p: &SmoothMap,
    charts: &[SubmersionChart],
    pu: &Arc<PartitionOfUnity>,
) -> Result<(AnchoredBundle, Vec<(ChartId, ChartId)>)> {
    let (m, n) = (p.source.clone(), p.target.clone());
    let (md, nd) = (m.dim(), n.dim());
    let mut pairs = Vec::new();
    for a in 0..m.n_charts() {
        for b in 0..n.n_charts() {
            if p.rep(a, b).is_some() {
                pairs.push((a, b));
            }
        }
    }
    let mut bcharts = Vec::new();
    let mut anchors: Vec<Arc<dyn CoordMap>> = Vec::new();
    for &(a, b) in &pairs {
        let p_ab = p.rep(a, b).expect("pair has a representative").clone();
        let nb = n.chart(b).domain.clone();
        let pm = p_ab.clone();
        bcharts.push(BundleChart {
            base_chart: a,
            label: format!("{}>{}", m.chart(a).label, n.chart(b).label),
            domain: Domain::Custom(Arc::new(move |x: &[f64]| {
                let y = pm.eval(x);
                if y.iter().any(|v| !v.is_finite()) {
                    f64::NEG_INFINITY
                } else {
                    nb.margin(&y)
                }
            })),
        });
        let mut local = Vec::new();
        for sc in charts {
            let (Some(psi), Some(t)) = (&sc.psi[a], n.transition_map(b, sc.n_chart)) else {
                return Err(Error::NoLocalRep { map: format!("submersion chart {}", sc.label), chart: a });
            };
            local.push((sc.n_chart, psi.clone(), t.clone()));
        }
        anchors.push(smooth(HorizontalAnchor { n: md, nd, b, p_ab, charts: local, pu: pu.clone() }));
    }
    // fibre coordinates are TN components, so they change by Dt_N(p(x))
    let g = pairs
        .iter()
        .map(|&(a, b)| {
            pairs
                .iter()
                .map(|&(a2, b2)| match (m.transition_map(a, a2), n.transition_map(b, b2)) {
                    (Some(_), Some(tn)) => {
                        Some(compose(p.rep(a, b).expect("pair").clone(), smooth(JacobianField(tn.clone()))))
                    }
                    _ => None,
                })
                .collect()
        })
        .collect();
    let bundle = AnchoredBundle::new(format!("H({})", p.name), m, nd, bcharts, anchors, g)?;
    Ok((bundle, pairs))
}

#[cfg(test)]
mod tests;
