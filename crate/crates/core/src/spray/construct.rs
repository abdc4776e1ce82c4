//! Building sprays: quadratic local sprays, convex gluing with a partition
//! of unity, and conjugation by vertical bundle isomorphisms.

use std::sync::Arc;

use crate::bundle::AnchoredBundle;
use crate::dual::{mat_mul, mat_vec, max_abs_diff, solve};
use crate::error::{Error, Result};
use crate::dual::Level;
use crate::geometry::{smooth, ChartId, CoordMap, SmoothFn};
use crate::partition::PartitionOfUnity;
use crate::sample::{self, ball};

use super::Spray;

/// `(x, u, v) ↦ B(x)(u, v)`, bilinear in `(u, v)`.
pub type BilinearFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

pub fn zero_bilinear(k: usize) -> BilinearFn {
    Arc::new(move |_, _, _| vec![0.0; k])
}

/// Geodesic acceleration of the round unit sphere in stereographic
/// coordinates (either pole), polarized:
/// `B(x)(u, v) = (2(x·u)v + 2(x·v)u − 2(u·v)x) / (1 + |x|²)`.
pub fn round_sphere_christoffel() -> BilinearFn {
    Arc::new(|x, u, v| {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let (xu, xv, uv) = (dot(x, u), dot(x, v), dot(u, v));
        let den = 1.0 + dot(x, x);
        (0..x.len()).map(|i| (2.0 * xu * v[i] + 2.0 * xv * u[i] - 2.0 * uv * x[i]) / den).collect()
    })
}

/// `F(x, ξ) = B(x)(ξ, ξ)` in one trivialization.
pub struct QuadraticSpray {
    pub bundle: Arc<AnchoredBundle>,
    pub chart: ChartId,
    pub b: BilinearFn,
}

/// Checks symmetry of `B` at sampled points of the chart before accepting it.
pub fn quadratic_local_spray(
    bundle: Arc<AnchoredBundle>,
    chart: ChartId,
    b: Option<BilinearFn>,
) -> Result<QuadraticSpray> {
    let k = bundle.fibre_dim;
    let n = bundle.base_dim();
    let b = b.unwrap_or_else(|| zero_bilinear(k));
    let mut rng = sample::rng(0x5eed);
    let dom = bundle.total.chart(chart).domain.clone();
    let mut worst = 0.0_f64;
    for _ in 0..16 {
        let Some(z) = sample::in_domain(&mut rng, &dom, n + k, 0.0, 3.0) else { break };
        let x = &z[..n];
        let u = ball(&mut rng, k, 1.0);
        let v = ball(&mut rng, k, 1.0);
        let buv = b(x, &u, &v);
        let scale = 1.0 + buv.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        worst = worst.max(max_abs_diff(&buv, &b(x, &v, &u)) / scale);
    }
    if worst > 1e-12 {
        return Err(Error::AsymmetricB { residual: worst });
    }
    Ok(QuadraticSpray { bundle, chart, b })
}

impl Spray for QuadraticSpray {
    fn bundle(&self) -> &AnchoredBundle {
        &self.bundle
    }
    fn label(&self) -> String {
        format!("quadratic[{}:{}]", self.bundle.name, self.chart)
    }
    fn supports(&self, chart: ChartId) -> bool {
        chart == self.chart
    }
    fn accel_local(&self, _: ChartId, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        Ok((self.b)(x, xi, xi))
    }
}

/// `S = Σ_α h_α S_α`; local spray `α` must be defined on the support of
/// bump `α`.
pub struct GluedSpray {
    pub bundle: Arc<AnchoredBundle>,
    pub locals: Vec<Arc<dyn Spray>>,
    pub pu: Arc<PartitionOfUnity>,
}

pub fn glue_sprays(
    bundle: Arc<AnchoredBundle>,
    locals: Vec<Arc<dyn Spray>>,
    pu: Arc<PartitionOfUnity>,
) -> Result<GluedSpray> {
    if locals.len() != pu.len() {
        return Err(Error::DimensionMismatch { expected: pu.len(), got: locals.len() });
    }
    if pu.manifold.name != bundle.base.name || pu.manifold.n_charts() != bundle.base.n_charts() {
        return Err(Error::ConfigParse("partition of unity lives on a different manifold".into()));
    }
    Ok(GluedSpray { bundle, locals, pu })
}

impl Spray for GluedSpray {
    fn bundle(&self) -> &AnchoredBundle {
        &self.bundle
    }
    fn label(&self) -> String {
        format!("glued[{}]", self.bundle.name)
    }
    fn supports(&self, _: ChartId) -> bool {
        true
    }
    fn accel_local(&self, chart: ChartId, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let w = self.pu.weights(self.bundle.charts[chart].base_chart, x)?;
        let mut out = vec![0.0; self.bundle.fibre_dim];
        for (h, s) in w.iter().zip(&self.locals) {
            if *h > 0.0 {
                for (o, a) in out.iter_mut().zip(s.accel(chart, x, xi)?) {
                    *o += h * a;
                }
            }
        }
        Ok(out)
    }
}

/// `Tφ ∘ S ∘ φ⁻¹` for a vertical isomorphism `φ: E₁ → E₂` given per
/// trivialization by an invertible matrix field `A_c(x)` (`k × k`,
/// row-major) from the fibre coordinates of `E₁` to those of `E₂`.
pub struct ConjugateSpray {
    pub source: Arc<dyn Spray>,
    pub target: Arc<AnchoredBundle>,
    pub phi: Vec<Arc<dyn CoordMap>>,
}

pub fn conjugate_spray(
    source: Arc<dyn Spray>,
    target: Arc<AnchoredBundle>,
    phi: Vec<Arc<dyn CoordMap>>,
) -> Result<ConjugateSpray> {
    let e1 = source.bundle();
    let (n, k) = (e1.base_dim(), e1.fibre_dim);
    if target.fibre_dim != k || target.charts.len() != e1.charts.len() || phi.len() != e1.charts.len() {
        return Err(Error::DimensionMismatch { expected: k, got: target.fibre_dim });
    }
    // ρ₁ = ρ₂ ∘ φ on sampled points of every trivialization
    let mut rng = sample::rng(0xa11c);
    let mut worst = 0.0_f64;
    for c in 0..e1.charts.len() {
        let dom = e1.total.chart(c).domain.clone();
        for _ in 0..16 {
            let Some(z) = sample::in_domain(&mut rng, &dom, n + k, 0.0, 3.0) else { break };
            let x = &z[..n];
            let r1 = e1.anchor_map(c).eval(x);
            let r2 = target.anchor_map(c).eval(x);
            let a = phi[c].eval(x);
            worst = worst.max(max_abs_diff(&r1, &mat_mul(&r2, &a, n, k, k)));
        }
    }
    if worst > 1e-9 {
        return Err(Error::AnchorMismatch { residual: worst });
    }
    Ok(ConjugateSpray { source, target, phi })
}

impl Spray for ConjugateSpray {
    fn bundle(&self) -> &AnchoredBundle {
        &self.target
    }
    fn label(&self) -> String {
        format!("conjugate[{}]", self.source.label())
    }
    fn supports(&self, _: ChartId) -> bool {
        true
    }
    fn accel_local(&self, chart: ChartId, x: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        let k = self.target.fibre_dim;
        let a = self.phi[chart].eval(x);
        let xi = solve(&a, eta, k, 1).ok_or(Error::AnchorMismatch { residual: f64::INFINITY })?;
        let f1 = self.source.accel(chart, x, &xi)?;
        let xdot = self.source.bundle().anchor_apply(chart, x, &xi);
        let da = self.phi[chart].jet1(x, &xdot);
        let mut out = mat_vec(&da, k, k, &xi);
        for (o, v) in out.iter_mut().zip(mat_vec(&a, k, k, &f1)) {
            *o += v;
        }
        Ok(out)
    }
}

fn weight<S: Level>(kappa: f64, x: &[S]) -> S {
    x.iter().fold(S::cst(1.0), |a, &v| a + v * v * kappa)
}

/// `ρ(x) / w(x)`.
struct ScaledAnchor {
    inner: Arc<dyn CoordMap>,
    kappa: f64,
}

impl SmoothFn for ScaledAnchor {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let w = weight(self.kappa, x);
        S::eval_map(&*self.inner, x).into_iter().map(|a| a / w).collect()
    }
}

/// `g(x) · w(t(x)) / w(x)`.
struct ScaledTransition {
    g: Arc<dyn CoordMap>,
    t: Arc<dyn CoordMap>,
    kappa: f64,
}

impl SmoothFn for ScaledTransition {
    fn dim_in(&self) -> usize {
        self.g.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.g.dim_out()
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let r = weight(self.kappa, &S::eval_map(&*self.t, x)) / weight(self.kappa, x);
        S::eval_map(&*self.g, x).into_iter().map(|a| a * r).collect()
    }
}

/// `w(x) · I_k`.
struct WeightMatrix {
    n: usize,
    k: usize,
    kappa: f64,
}

impl SmoothFn for WeightMatrix {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.k * self.k
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let w = weight(self.kappa, x);
        (0..self.k * self.k).map(|i| if i % (self.k + 1) == 0 { w } else { S::zero() }).collect()
    }
}

/// The spray of `source` carried to a copy of its bundle whose fibre
/// coordinates are rescaled by `w_c(x) = 1 + κ|x|²` in each
/// trivialization (anchor divided by `w`, transitions adjusted to match).
/// A conjugation with a non-constant bundle map, so the derivative term
/// of the conjugated spray is exercised.
pub fn rescaled_conjugate(source: Arc<dyn Spray>, kappa: f64) -> Result<ConjugateSpray> {
    let e = source.bundle();
    let (n, k) = (e.base_dim(), e.fibre_dim);
    let anchors = (0..e.charts.len())
        .map(|c| smooth(ScaledAnchor { inner: e.anchor_map(c).clone(), kappa }))
        .collect();
    let transitions = (0..e.charts.len())
        .map(|c| {
            (0..e.charts.len())
                .map(|d| {
                    let g = e.fibre_transition(c, d)?;
                    let t = e.base.transition_map(e.charts[c].base_chart, e.charts[d].base_chart)?;
                    Some(smooth(ScaledTransition { g: g.clone(), t: t.clone(), kappa }))
                })
                .collect()
        })
        .collect();
    let target =
        AnchoredBundle::new(format!("{}~", e.name), e.base.clone(), k, e.charts.clone(), anchors, transitions)?;
    let phi = (0..e.charts.len()).map(|_| smooth(WeightMatrix { n, k, kappa })).collect();
    conjugate_spray(source, Arc::new(target), phi)
}

/// Round-metric geodesic spray on `TS^n`, glued from the two
/// stereographic quadratic sprays with bumps of the given radius.
pub fn round_sphere_spray(tangent: Arc<AnchoredBundle>, bump_radius: f64) -> Result<GluedSpray> {
    let pu = Arc::new(PartitionOfUnity::per_chart(tangent.base.clone(), bump_radius)?);
    let locals = (0..tangent.charts.len())
        .map(|c| {
            quadratic_local_spray(tangent.clone(), c, Some(round_sphere_christoffel())).map(|s| Arc::new(s) as Arc<dyn Spray>)
        })
        .collect::<Result<Vec<_>>>()?;
    glue_sprays(tangent, locals, pu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euclidean, smooth, stereographic_pair, Constant, Point};

    #[test]
    fn flat_quadratic_spray_is_geodesic_spray_of_r_n() {
        let tb = Arc::new(AnchoredBundle::tangent(Arc::new(euclidean(2))));
        let s = quadratic_local_spray(tb, 0, None).unwrap();
        assert_eq!(s.value(&Point::new(0, vec![1.0, 2.0, 3.0, 4.0])).unwrap(), vec![3.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn quadratic_last_slot_is_b_of_v_v() {
        let tb = Arc::new(AnchoredBundle::tangent(Arc::new(euclidean(2))));
        let c = 1.5;
        let b: BilinearFn = Arc::new(move |_, u, v| vec![c * (u[0] * v[0] + u[1] * v[1]), 0.0]);
        let s = quadratic_local_spray(tb, 0, Some(b)).unwrap();
        let f = s.accel(0, &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(f, vec![c * 5.0, 0.0]);
    }

    #[test]
    fn asymmetric_b_is_rejected() {
        let tb = Arc::new(AnchoredBundle::tangent(Arc::new(euclidean(2))));
        let b: BilinearFn = Arc::new(|_, u, v| vec![u[0] * v[1], 0.0]);
        assert!(matches!(quadratic_local_spray(tb, 0, Some(b)), Err(Error::AsymmetricB { .. })));
    }

    #[test]
    fn anchor_mismatch_is_rejected() {
        let r2 = Arc::new(euclidean(2));
        let tb = Arc::new(AnchoredBundle::tangent(r2.clone()));
        let s: Arc<dyn Spray> = Arc::new(quadratic_local_spray(tb.clone(), 0, None).unwrap());
        let twice = smooth(Constant { dim_in: 2, value: vec![2.0, 0.0, 0.0, 2.0] });
        // identity anchor on both sides, but φ = 2·I does not intertwine them
        assert!(matches!(conjugate_spray(s, tb, vec![twice]), Err(Error::AnchorMismatch { .. })));
    }

    #[test]
    fn round_spray_agrees_in_both_charts() {
        let tb = Arc::new(AnchoredBundle::tangent(Arc::new(stereographic_pair(2, 3.0))));
        let s = round_sphere_spray(tb.clone(), 2.5).unwrap();
        let v = tb.point(0, &[0.8, -0.6], &[0.3, 0.9]);
        let a = s.value(&v).unwrap();
        let expected = (round_sphere_christoffel())(&[0.8, -0.6], &[0.3, 0.9], &[0.3, 0.9]);
        assert!(max_abs_diff(&a[2..], &expected) < 1e-14);
    }

    #[test]
    fn rescaled_conjugate_maps_geodesics_to_geodesics() {
        // the conjugate flow is the source flow with fibre coordinates scaled by w
        let tb = Arc::new(AnchoredBundle::tangent(Arc::new(stereographic_pair(2, 3.0))));
        let s: Arc<dyn Spray> = Arc::new(round_sphere_spray(tb.clone(), 2.5).unwrap());
        let c = rescaled_conjugate(s.clone(), 0.3).unwrap();
        let cfg = crate::ode::IntegratorConfig::default();
        let (x, xi) = ([0.4, -0.2], [0.5, 0.7]);
        let w = 1.0 + 0.3 * (x[0] * x[0] + x[1] * x[1]);
        let eta: Vec<f64> = xi.iter().map(|a| a * w).collect();
        let a = crate::spray::spray_flow(&*s, &tb.point(0, &x, &xi), 0.8, &cfg).unwrap().end;
        let b = crate::spray::spray_flow(&c, &c.target.point(0, &x, &eta), 0.8, &cfg).unwrap().end;
        let b = c.target.total.transition(&b, a.chart).unwrap();
        let wa = 1.0 + 0.3 * (a.coords[0].powi(2) + a.coords[1].powi(2));
        assert!(max_abs_diff(&a.coords[..2], &b.coords[..2]) < 1e-9);
        assert!(max_abs_diff(&a.coords[2..].iter().map(|v| v * wa).collect::<Vec<_>>(), &b.coords[2..]) < 1e-9);
    }
}
