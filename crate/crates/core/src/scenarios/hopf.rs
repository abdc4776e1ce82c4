//! The Hopf fibration `S³ → S²` in stereographic charts.

use std::sync::Arc;

use crate::bundle::AnchoredBundle;
use crate::connection::LinearConnection;
use crate::dual::{Dual, Level, Scalar, D1, D2, D3, D4};
use crate::error::Result;
use crate::geometry::builtins::{sphere_chart, sphere_embed};
use crate::geometry::{smooth, stereographic_pair, CoordMap, DerivativeMode, Point, SmoothFn, SmoothMap};
use crate::partition::PartitionOfUnity;
use crate::spray::{round_sphere_spray, BilinearFn, Spray};
use crate::submersion::{vertical_spray, SubmersionChart, SubmersionGeometry};

use super::Parts;

/// Symmetric bilinear form with `P(q, q) = hopf(q)` on `ℝ⁴ = ℂ²`.
fn polar<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    vec![
        a[0] * b[2] + a[2] * b[0] + a[1] * b[3] + a[3] * b[1],
        a[1] * b[2] + a[2] * b[1] - a[0] * b[3] - a[3] * b[0],
        a[0] * b[0] + a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
    ]
}

/// `q ↦ (2 Re z₁z̄₂, 2 Im z₁z̄₂, |z₁|² − |z₂|²)` on `ℝ⁴`, with closed-form jets.
pub struct HopfR4;

impl CoordMap for HopfR4 {
    fn dim_in(&self) -> usize {
        4
    }
    fn dim_out(&self) -> usize {
        3
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        polar(x, x)
    }
    fn eval_d1(&self, x: &[D1]) -> Vec<D1> {
        polar(x, x)
    }
    fn eval_d2(&self, x: &[D2]) -> Vec<D2> {
        polar(x, x)
    }
    fn eval_d3(&self, x: &[D3]) -> Vec<D3> {
        polar(x, x)
    }
    fn eval_d4(&self, x: &[D4]) -> Vec<D4> {
        polar(x, x)
    }
    fn mode(&self) -> DerivativeMode {
        DerivativeMode::ClosedForm
    }
    fn jet1(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        polar(x, v).into_iter().map(|a| 2.0 * a).collect()
    }
    fn jet2(&self, _: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        polar(v, w).into_iter().map(|a| 2.0 * a).collect()
    }
}

/// Local representative of the Hopf map from chart `a` of `S³` to chart `b` of `S²`.
struct HopfRep {
    a: usize,
    b: usize,
}

impl SmoothFn for HopfRep {
    fn dim_in(&self) -> usize {
        3
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let q = sphere_embed(self.a, x);
        sphere_chart(self.b, &S::eval_map(&HopfR4, &q))
    }
}

/// Section of the Hopf map over chart `c` of `S²`: over the north chart
/// `z₂` is real positive, over the south chart `z₁` is.
pub fn hopf_section<S: Scalar>(c: usize, u: &[S]) -> Vec<S> {
    let r = (u[0] * u[0] + u[1] * u[1] + 1.0).sqrt().recip();
    if c == 0 {
        vec![u[0] * r, u[1] * r, r, S::zero()]
    } else {
        vec![r, S::zero(), u[0] * r, -u[1] * r]
    }
}

/// `ψ(x) = (φ_γ(p(q)), arg⟨q, s_γ(p(q))⟩)` in chart `a` of `S³`.
struct HopfChart {
    gamma: usize,
    a: usize,
}

impl SmoothFn for HopfChart {
    fn dim_in(&self) -> usize {
        3
    }
    fn dim_out(&self) -> usize {
        3
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let q = sphere_embed(self.a, x);
        let u = sphere_chart(self.gamma, &S::eval_map(&HopfR4, &q));
        let s = hopf_section(self.gamma, &u);
        let re = q[0] * s[0] + q[1] * s[1] + q[2] * s[2] + q[3] * s[3];
        let im = q[1] * s[0] - q[0] * s[1] + q[3] * s[2] - q[2] * s[3];
        vec![u[0], u[1], im.atan2(re)]
    }
}

/// Directional derivative of `sphere_chart(c, ·)` at `q` along `w`.
fn push_to_chart<S: Scalar>(c: usize, q: &[S], w: &[S]) -> Vec<S> {
    let arg: Vec<Dual<S>> = q.iter().zip(w).map(|(&a, &b)| Dual::new(a, b)).collect();
    sphere_chart(c, &arg).into_iter().map(|d| d.eps).collect()
}

/// The fibre direction `i·q`, in the coordinates of chart `a` of `S³`.
struct FibreFrame {
    a: usize,
}

impl SmoothFn for FibreFrame {
    fn dim_in(&self) -> usize {
        3
    }
    fn dim_out(&self) -> usize {
        3
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let q = sphere_embed(self.a, x);
        let iq = [-q[1], q[0], -q[3], q[2]];
        push_to_chart(self.a, &q, &iq)
    }
}

pub(super) fn hopf() -> Result<Parts> {
    let m = Arc::new(stereographic_pair(3, 3.0));
    let n = Arc::new(stereographic_pair(2, 3.0));
    let p = Arc::new(SmoothMap::from_fn("hopf", m.clone(), n.clone(), |a, b| Some(smooth(HopfRep { a, b })))?);
    let charts = (0..2)
        .map(|gamma| SubmersionChart {
            label: format!("section-{}", n.chart(gamma).label),
            n_chart: gamma,
            psi: (0..2).map(|a| Some(smooth(HopfChart { gamma, a }))).collect(),
        })
        .collect();
    let pu_n = Arc::new(PartitionOfUnity::per_chart(n.clone(), 2.5)?);
    let frames = (0..2).map(|a| smooth(FibreFrame { a })).collect();
    let vertical = Arc::new(AnchoredBundle::with_global_frame("V(hopf)", m.clone(), 1, frames)?);
    let geom = SubmersionGeometry::new("hopf", p, charts, pu_n, vertical.clone())?;

    let s_n: Arc<dyn Spray> = Arc::new(round_sphere_spray(geom.tn.clone(), 2.5)?);
    let kappa0: BilinearFn = Arc::new(|_, u, v| vec![0.25 * u[0] * v[0]]);
    let pu_m = Arc::new(PartitionOfUnity::per_chart(m.clone(), 2.5)?);
    let s_v: Arc<dyn Spray> = Arc::new(vertical_spray(vertical.clone(), vec![Some(kappa0), None], pu_m)?);

    // B(x)(X, ξ) = κ q₁ (dq₂·X) ξ with κ = 0.5, in either chart
    let forms = (0..2)
        .map(|a| -> BilinearFn {
            Arc::new(move |x: &[f64], v: &[f64], xi: &[f64]| {
                let arg: Vec<D1> = x.iter().zip(v).map(|(&p, &q)| D1::new(p, q)).collect();
                let q = sphere_embed(a, &arg);
                vec![0.5 * q[0].re * q[1].eps * xi[0]]
            })
        })
        .collect();
    Ok(Parts {
        geom,
        s_n,
        s_v,
        conn: LinearConnection::new(vertical, forms)?,
        base_point: Point::new(0, vec![0.3, -0.2, 0.4]),
        loop_fn: Arc::new(|t: f64| {
            Point::new(0, vec![0.4 + 0.5 * t.cos(), 0.5 * t.sin(), 0.2 * (2.0 * t).sin()])
        }),
        connection_label: "B(x)(X, xi) = 0.5 q1 dq2(X) xi",
        vertical_label: "glued: 0.25 zeta^2 (north), 0 (south)",
        base_label: "round S2 geodesic spray",
    })
}
