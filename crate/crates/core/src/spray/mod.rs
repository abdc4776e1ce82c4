//! Sprays on anchored bundles and their exponentials.
//!
//! A spray is a vector field on the total space `E` whose value at
//! `(x, ξ)` is `(ρ(x)ξ, F(x, ξ))` in bundle coordinates. Only the fibre
//! acceleration `F` is stored; the `ẋ` slot is filled from the anchor, so
//! sections and anchor lifts hold by construction and the axiom checks
//! test what survives chart changes.

pub mod checks;
pub mod construct;
pub mod probe;

use std::sync::Arc;

use crate::bundle::AnchoredBundle;
use crate::error::{Error, Result};
use crate::geometry::{ChartId, ChartedManifold, Point};
use crate::ode::{flow, FlowResult, IntegratorConfig, VectorField};

pub use checks::{
    anchored_path_defect, axiom_residuals, fibre_derivative_check, flow_homogeneity_check, sample_fibre_points,
    AxiomResiduals,
};
pub use construct::{
    conjugate_spray, glue_sprays, quadratic_local_spray, rescaled_conjugate, round_sphere_christoffel, round_sphere_spray, zero_bilinear,
    BilinearFn, ConjugateSpray, GluedSpray, QuadraticSpray,
};
pub use probe::{domain_probe, ProbeOptions, ProbeResult};

pub trait Spray: Send + Sync {
    fn bundle(&self) -> &AnchoredBundle;

    fn label(&self) -> String;

    /// Whether [`Spray::accel_local`] may be called in this bundle chart.
    fn supports(&self, chart: ChartId) -> bool;

    /// The fibre acceleration `F(x, ξ)` in a supported chart.
    fn accel_local(&self, chart: ChartId, x: &[f64], xi: &[f64]) -> Result<Vec<f64>>;

    /// `F(x, ξ)` in any chart: unsupported charts are served by evaluating
    /// in the supported chart of largest margin and pushing the full
    /// tangent vector through the total-space transition.
    fn accel(&self, chart: ChartId, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        if self.supports(chart) {
            return self.accel_local(chart, x, xi);
        }
        let b = self.bundle();
        let v = b.point(chart, x, xi);
        let mut best: Option<(f64, Point)> = None;
        for d in (0..b.charts.len()).filter(|&d| self.supports(d)) {
            if let Ok(vd) = b.total.transition(&v, d) {
                let m = b.total.margin(&vd);
                if best.as_ref().is_none_or(|(bm, _)| m > *bm) {
                    best = Some((m, vd));
                }
            }
        }
        let (_, vd) = best.ok_or_else(|| Error::NoLocalRep { map: self.label(), chart })?;
        let n = b.base_dim();
        let w = self.value(&vd)?;
        let t = b.total.transition_map(vd.chart, chart).ok_or_else(|| Error::NoLocalRep { map: self.label(), chart })?;
        Ok(t.jet1(&vd.coords, &w)[n..].to_vec())
    }

    /// Full tangent components `(ρ(x)ξ, F(x, ξ))` at `v`, in `v`'s chart.
    fn value(&self, v: &Point) -> Result<Vec<f64>> {
        let b = self.bundle();
        let (x, xi) = b.split(&v.coords);
        let mut out = b.anchor_apply(v.chart, x, xi);
        out.extend(self.accel(v.chart, x, xi)?);
        Ok(out)
    }
}

/// A spray viewed as a vector field on its total space.
pub struct SprayField<'a>(pub &'a dyn Spray);

impl VectorField for SprayField<'_> {
    fn manifold(&self) -> &ChartedManifold {
        &self.0.bundle().total
    }
    fn eval(&self, chart: ChartId, z: &[f64]) -> Result<Vec<f64>> {
        self.0.value(&Point::new(chart, z.to_vec()))
    }
}

pub fn spray_flow(spray: &dyn Spray, v: &Point, t: f64, cfg: &IntegratorConfig) -> Result<FlowResult> {
    flow(&SprayField(spray), v, t, cfg)
}

/// `exp_S(v) = π(Fl_1(v))`.
pub fn spray_exponential(spray: &dyn Spray, v: &Point, cfg: &IntegratorConfig) -> Result<Point> {
    let end = spray_flow(spray, v, 1.0, cfg)?.into_result()?;
    Ok(spray.bundle().projection(&end))
}

pub type SprayRef = Arc<dyn Spray>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::AnchoredBundle;
    use crate::dual::max_abs_diff;
    use crate::geometry::builtins::sphere_embed;
    use crate::geometry::{euclidean, stereographic_pair};
    use crate::sample::rng;

    fn sphere() -> (Arc<AnchoredBundle>, GluedSpray) {
        let tb = Arc::new(AnchoredBundle::tangent(Arc::new(stereographic_pair(2, 3.0))));
        let s = round_sphere_spray(tb.clone(), 2.5).unwrap();
        (tb, s)
    }

    /// Great-circle oracle `cos|v| p + sin|v| v/|v|` for a coordinate
    /// vector `v` at the chart origin, where the embedding has derivative 2.
    fn great_circle(chart: usize, v: &[f64]) -> Vec<f64> {
        let p = sphere_embed(chart, &[0.0, 0.0]);
        let len = 2.0 * v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let dir = [v[0] / len * 2.0, v[1] / len * 2.0, 0.0];
        (0..3).map(|i| len.cos() * p[i] + len.sin() * dir[i]).collect()
    }

    #[test]
    fn sphere_exponential_reaches_the_equator() {
        let (tb, s) = sphere();
        let v = [std::f64::consts::FRAC_PI_4, 0.0];
        let end = spray_exponential(&s, &tb.point(0, &[0.0, 0.0], &v), &IntegratorConfig::default()).unwrap();
        let q = sphere_embed(end.chart, &end.coords);
        assert!(max_abs_diff(&q, &great_circle(0, &v)) < 1e-6);
        assert!(q[2].abs() < 1e-6);
    }

    #[test]
    fn sphere_geodesic_crosses_charts() {
        let (tb, s) = sphere();
        let v = [1.2, -0.9];
        let end = spray_exponential(&s, &tb.point(0, &[0.0, 0.0], &v), &IntegratorConfig::default()).unwrap();
        assert_eq!(end.chart, 1);
        assert!(max_abs_diff(&sphere_embed(end.chart, &end.coords), &great_circle(0, &v)) < 1e-6);
    }

    #[test]
    fn flat_exponential_is_translation() {
        let tb = Arc::new(AnchoredBundle::tangent(Arc::new(euclidean(3))));
        let s = quadratic_local_spray(tb.clone(), 0, None).unwrap();
        let end = spray_exponential(&s, &tb.point(0, &[1.0, 2.0, 3.0], &[0.5, -1.0, 4.0]), &IntegratorConfig::default())
            .unwrap();
        assert!(max_abs_diff(&end.coords, &[1.5, 1.0, 7.0]) < 1e-12);
    }

    #[test]
    fn glued_sphere_spray_satisfies_axioms() {
        let (tb, s) = sphere();
        let pts = sample_fibre_points(&tb, &mut rng(11), 50, 1.0, 0.05);
        let r = axiom_residuals(&s, &pts).unwrap();
        assert!(r.max() < 1e-9, "{r:?}");
        assert!(r.n_samples() >= 50);
    }

    #[test]
    fn zero_vector_is_fixed() {
        let (tb, s) = sphere();
        let m = Point::new(1, vec![0.3, -1.2]);
        let z = tb.zero(&m).unwrap();
        let e = spray_exponential(&s, &z, &IntegratorConfig::default()).unwrap();
        assert_eq!(e, tb.projection(&z));
        assert!(tb.base.distance(&e, &m) < 1e-15);
    }

    struct Blowup(Arc<AnchoredBundle>);
    impl Spray for Blowup {
        fn bundle(&self) -> &AnchoredBundle {
            &self.0
        }
        fn label(&self) -> String {
            "blowup".into()
        }
        fn supports(&self, _: ChartId) -> bool {
            true
        }
        fn accel_local(&self, _: ChartId, _: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
            let n2: f64 = xi.iter().map(|a| a * a).sum();
            Ok(xi.iter().map(|a| 10.0 * a * n2).collect())
        }
    }

    #[test]
    fn probe_radii() {
        let cfg = IntegratorConfig::default();
        let opts = ProbeOptions::default();
        let flat_tb = Arc::new(AnchoredBundle::tangent(Arc::new(euclidean(2))));
        let flat = quadratic_local_spray(flat_tb.clone(), 0, None).unwrap();
        let m = Point::new(0, vec![0.0, 0.0]);
        assert_eq!(domain_probe(&flat, &m, &cfg, &opts).unwrap().radius, opts.r_max);

        let (_, s) = sphere();
        // coordinate radius r at the chart origin has metric length 2r
        let r = 2.0 * domain_probe(&s, &m, &cfg, &opts).unwrap().radius;
        assert!(r < std::f64::consts::PI && r > 3.0, "sphere radius {r}");

        // |ξ|² = r²/(1 − 20 r² t) blows up before t = 1 once r > 1/√20
        let b = domain_probe(&Blowup(flat_tb), &m, &cfg, &opts).unwrap().radius;
        assert!((b - 20f64.sqrt().recip()).abs() < 5e-3, "blow-up radius {b}");
    }
}
