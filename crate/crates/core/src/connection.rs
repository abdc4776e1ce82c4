//! Linear connections given by local bilinear forms, and parallel
//! transport `η̇ + B(γ)(γ̇, η) = 0` along curves and along spray geodesics.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::bundle::{whitney_pairs, AnchoredBundle};
use crate::dual::max_abs_diff;
use crate::error::{Error, Result};
use crate::geometry::{with_passive_coords, ChartId, ChartedManifold, Point, TangentVec};
use crate::ode::{flow, flow_traced, integral_curve, FlowStatus, IntegratorConfig, VectorField};
use crate::report::Measurement;
use crate::sample::{self, Rng};
use crate::spray::{round_sphere_christoffel, BilinearFn, Spray};

/// Connection on a vector bundle: per trivialization `c`, the form
/// `(x, X, ξ) ↦ B_c(x)(X, ξ)` with `X` in the base coordinates of `c`.
/// The anchor of the bundle plays no role here.
#[derive(Clone)]
pub struct LinearConnection {
    pub bundle: Arc<AnchoredBundle>,
    pub local_b: Vec<BilinearFn>,
}

impl LinearConnection {
    pub fn new(bundle: Arc<AnchoredBundle>, local_b: Vec<BilinearFn>) -> Result<Self> {
        if local_b.len() != bundle.charts.len() {
            return Err(Error::DimensionMismatch { expected: bundle.charts.len(), got: local_b.len() });
        }
        Ok(Self { bundle, local_b })
    }

    /// `B ≡ 0` in every trivialization.
    pub fn flat(bundle: Arc<AnchoredBundle>) -> Self {
        let k = bundle.fibre_dim;
        let local_b = (0..bundle.charts.len()).map(|_| crate::spray::zero_bilinear(k)).collect();
        Self { bundle, local_b }
    }

    pub fn form(&self, c: ChartId, x: &[f64], v: &[f64], xi: &[f64]) -> Vec<f64> {
        (self.local_b[c])(x, v, xi)
    }

    /// Largest deviation of `B_c(x)` from bilinearity over random
    /// `(c, x, X, Y, ξ, ζ, a, b)`.
    pub fn bilinearity(&self, rng: &mut Rng, n: usize) -> Measurement {
        let b = &*self.bundle;
        let (nb, k) = (b.base_dim(), b.fibre_dim);
        let mut m = Measurement::default();
        for _ in 0..n {
            let c = (sample::uniform(rng, 0.0, b.charts.len() as f64) as usize).min(b.charts.len() - 1);
            let Some(z) = sample::in_domain(rng, &b.total.chart(c).domain, nb + k, 0.05, 3.0) else { continue };
            let x = &z[..nb];
            let (u, w) = (sample::ball(rng, nb, 1.0), sample::ball(rng, nb, 1.0));
            let (xi, zeta) = (sample::ball(rng, k, 1.0), sample::ball(rng, k, 1.0));
            let (p, q) = (sample::uniform(rng, -2.0, 2.0), sample::uniform(rng, -2.0, 2.0));
            let comb = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(s, t)| p * s + q * t).collect() };
            let lhs1 = self.form(c, x, &comb(&u, &w), &xi);
            let rhs1 = comb(&self.form(c, x, &u, &xi), &self.form(c, x, &w, &xi));
            let lhs2 = self.form(c, x, &u, &comb(&xi, &zeta));
            let rhs2 = comb(&self.form(c, x, &u, &xi), &self.form(c, x, &u, &zeta));
            m.record(max_abs_diff(&lhs1, &rhs1).max(max_abs_diff(&lhs2, &rhs2)));
        }
        m
    }
}

/// A base curve with derivative access.
pub trait Curve: Send + Sync {
    /// `γ(t)` and `γ̇(t)`, in a chart of the curve's choosing.
    fn at(&self, t: f64) -> Result<TangentVec>;
}

/// Curve given in closed form in one chart: `t ↦ (x(t), ẋ(t))`.
pub struct ChartCurve<F> {
    pub chart: ChartId,
    pub f: F,
}

impl<F> Curve for ChartCurve<F>
where
    F: Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync,
{
    fn at(&self, t: f64) -> Result<TangentVec> {
        let (x, v) = (self.f)(t);
        Ok(TangentVec::new(Point::new(self.chart, x), v))
    }
}

/// The constant curve.
pub struct ConstantCurve(pub Point);

impl Curve for ConstantCurve {
    fn at(&self, _: f64) -> Result<TangentVec> {
        let n = self.0.coords.len();
        Ok(TangentVec::new(self.0.clone(), vec![0.0; n]))
    }
}

/// Transport ODE on `E × ℝ_τ`: `ẋ = γ̇(τ)`, `η̇ = −B(x)(ẋ, η)`, `τ̇ = 1`.
struct TransportField<'a> {
    conn: &'a LinearConnection,
    curve: &'a dyn Curve,
    ext: ChartedManifold,
}

impl VectorField for TransportField<'_> {
    fn manifold(&self) -> &ChartedManifold {
        &self.ext
    }
    fn eval(&self, c: ChartId, z: &[f64]) -> Result<Vec<f64>> {
        let b = &*self.conn.bundle;
        let n = b.base_dim();
        let k = b.fibre_dim;
        let tau = z[n + k];
        let v = b.base.transition_tangent(&self.curve.at(tau)?, b.charts[c].base_chart)?;
        let (x, eta) = (&z[..n], &z[n..n + k]);
        let mut out = v.components.clone();
        out.extend(self.conn.form(c, x, &v.components, eta).into_iter().map(|a| -a));
        out.push(1.0);
        Ok(out)
    }
}

fn transport_field<'a>(conn: &'a LinearConnection, curve: &'a dyn Curve) -> TransportField<'a> {
    TransportField { conn, curve, ext: with_passive_coords(&conn.bundle.total, 1) }
}

fn exit_error(status: FlowStatus, s: f64, steps: usize) -> Error {
    match status {
        FlowStatus::LeftDomain { t_exit } => Error::CurveLeavesAtlas(s + t_exit),
        _ => Error::MaxSteps(steps),
    }
}

/// `P^γ_{s,t}(v)`: `v` is a point of `E` over `γ(s)`; the result is the
/// transported vector over `γ(t)`, in whichever trivialization the
/// integrator ended in. The base path is integrated jointly with the
/// fibre, so chart changes happen wherever the integrator switches.
pub fn parallel_transport(
    conn: &LinearConnection,
    curve: &dyn Curve,
    v: &Point,
    s: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Point> {
    Ok(parallel_transport_traced(conn, curve, v, s, t, cfg, false)?.0)
}

/// As [`parallel_transport`], optionally returning the trace `(τ, point of E)`.
pub fn parallel_transport_traced(
    conn: &LinearConnection,
    curve: &dyn Curve,
    v: &Point,
    s: f64,
    t: f64,
    cfg: &IntegratorConfig,
    keep_trace: bool,
) -> Result<(Point, Vec<(f64, Point)>)> {
    let field = transport_field(conn, curve);
    let mut z = v.coords.clone();
    z.push(s);
    let res = flow_traced(&field, &Point::new(v.chart, z), t - s, cfg, keep_trace)?;
    if !res.is_complete() {
        return Err(exit_error(res.status, s, res.steps));
    }
    let strip = |p: &Point| {
        let mut c = p.coords.clone();
        let tau = c.pop().expect("extended state carries τ");
        (tau, Point::new(p.chart, c))
    };
    let trace = res.trace.as_deref().unwrap_or(&[]).iter().map(|(_, p)| strip(p)).collect();
    Ok((strip(&res.end).1, trace))
}

/// A curve sampled at uniform times together with its exact velocities.
#[derive(Clone, Debug)]
pub struct SampledCurve {
    pub samples: Vec<(f64, TangentVec)>,
}

impl SampledCurve {
    /// Integral curve of `field` from `start` at `n + 1` uniform times on
    /// `[0, t]`; velocities are the field's own values at the samples.
    pub fn from_field(
        field: &dyn VectorField,
        start: &Point,
        t: f64,
        n: usize,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        let times: Vec<f64> = (0..=n).map(|i| t * i as f64 / n as f64).collect();
        let (pts, res) = integral_curve(field, start, &times, cfg)?;
        if !res.is_complete() {
            return Err(exit_error(res.status, 0.0, res.steps));
        }
        let samples = times
            .iter()
            .zip(pts)
            .map(|(&s, p)| Ok((s, TangentVec::new(p.clone(), field.eval(p.chart, &p.coords)?))))
            .collect::<Result<_>>()?;
        Ok(Self { samples })
    }
}

/// Transport along a pre-sampled curve by classical RK4 with step twice
/// the sample spacing, so that every stage lands on a sample. Needs an
/// odd number of samples; `v` must sit over the first one.
pub fn parallel_transport_sampled(conn: &LinearConnection, curve: &SampledCurve, v: &Point) -> Result<Point> {
    let s = &curve.samples;
    if s.len() < 3 || s.len().is_multiple_of(2) {
        return Err(Error::InsufficientData(format!("{} curve samples, need an odd number ≥ 3", s.len())));
    }
    let b = &*conn.bundle;
    let n = b.base_dim();
    let mut cur = v.clone();
    for i in (0..s.len() - 1).step_by(2) {
        let h = s[i + 2].0 - s[i].0;
        let (c, _) = b.chart_at(&s[i].1.base)?;
        let bc = b.charts[c].base_chart;
        let g: Vec<TangentVec> =
            (i..i + 3).map(|j| b.base.transition_tangent(&s[j].1, bc)).collect::<Result<_>>()?;
        cur = b.total.transition(&cur, c)?;
        let eta = cur.coords[n..].to_vec();
        let f = |gv: &TangentVec, e: &[f64]| -> Vec<f64> {
            conn.form(c, &gv.base.coords, &gv.components, e).into_iter().map(|a| -a).collect()
        };
        let step = |e: &[f64], k: &[f64], a: f64| -> Vec<f64> { e.iter().zip(k).map(|(p, q)| p + a * q).collect() };
        let k1 = f(&g[0], &eta);
        let k2 = f(&g[1], &step(&eta, &k1, h / 2.0));
        let k3 = f(&g[1], &step(&eta, &k2, h / 2.0));
        let k4 = f(&g[2], &step(&eta, &k3, h));
        let next: Vec<f64> =
            (0..eta.len()).map(|j| eta[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])).collect();
        cur = b.point(c, &g[2].base.coords, &next);
    }
    Ok(cur)
}

/// Max fibre discrepancy between two points of `E`, compared in `a`'s
/// trivialization; infinite if `b` cannot be moved there.
pub fn fibre_discrepancy(bundle: &AnchoredBundle, a: &Point, b: &Point) -> f64 {
    match bundle.total.transition(b, a.chart) {
        Ok(bb) => max_abs_diff(&a.coords, &bb.coords),
        Err(_) => f64::INFINITY,
    }
}

/// `‖P_{t,s} P_{s,t} v − v‖` over samples `(s, t, v)`.
pub fn transport_inverse_check(
    conn: &LinearConnection,
    curve: &dyn Curve,
    samples: &[(f64, f64, Point)],
    cfg: &IntegratorConfig,
) -> Result<Measurement> {
    let mut m = Measurement::default();
    for (s, t, v) in samples {
        let fwd = parallel_transport(conn, curve, v, *s, *t, cfg)?;
        let back = parallel_transport(conn, curve, &fwd, *t, *s, cfg)?;
        m.record(fibre_discrepancy(&conn.bundle, v, &back));
    }
    Ok(m)
}

/// `P(a v + b w)` against `a P(v) + b P(w)` over samples `(s, t, v, w, a, b)`
/// where `v`, `w` are fibre components at `γ(s)` in a common trivialization.
pub fn transport_linearity_check(
    conn: &LinearConnection,
    curve: &dyn Curve,
    samples: &[(f64, f64, Point, Vec<f64>, f64, f64)],
    cfg: &IntegratorConfig,
) -> Result<Measurement> {
    let bundle = &*conn.bundle;
    let n = bundle.base_dim();
    let mut m = Measurement::default();
    for (s, t, v, w, a, b) in samples {
        let x = &v.coords[..n];
        let comb: Vec<f64> = v.coords[n..].iter().zip(w).map(|(p, q)| a * p + b * q).collect();
        let lhs = parallel_transport(conn, curve, &bundle.point(v.chart, x, &comb), *s, *t, cfg)?;
        let pv = bundle.total.transition(&parallel_transport(conn, curve, v, *s, *t, cfg)?, lhs.chart)?;
        let pw = parallel_transport(conn, curve, &bundle.point(v.chart, x, w), *s, *t, cfg)?;
        let pw = bundle.total.transition(&pw, lhs.chart)?;
        let rhs: Vec<f64> = pv.coords[n..].iter().zip(&pw.coords[n..]).map(|(p, q)| a * p + b * q).collect();
        m.record(max_abs_diff(&lhs.coords[n..], &rhs));
    }
    Ok(m)
}

/// Levi-Civita connection of the round unit sphere on `TS^n`, in either
/// stereographic chart. Its form is the negated geodesic acceleration.
pub fn round_sphere_connection(tangent: Arc<AnchoredBundle>) -> Result<LinearConnection> {
    let g = round_sphere_christoffel();
    let b: BilinearFn = Arc::new(move |x, u, e| g(x, u, e).into_iter().map(|a| -a).collect());
    let forms = vec![b; tangent.charts.len()];
    LinearConnection::new(tangent, forms)
}

/// The circle `|x| = r` in chart 0, counterclockwise.
pub fn latitude(r: f64) -> ChartCurve<impl Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync> {
    ChartCurve { chart: 0, f: move |t: f64| (vec![r * t.cos(), r * t.sin()], vec![-r * t.sin(), r * t.cos()]) }
}

/// Holonomy of `conn` once around [`latitude`]`(r)` on `S²`: the signed
/// rotation angle of a transported vector in chart 0, and its
/// closed-form value `2π cos θ` for the polar angle `θ` of the circle
/// (chart 0 projects from the north pole, so `cos θ = (r² − 1)/(r² + 1)`).
pub fn latitude_holonomy(conn: &LinearConnection, r: f64, cfg: &IntegratorConfig) -> Result<(f64, f64)> {
    let v = conn.bundle.point(0, &[r, 0.0], &[0.0, 1.0]);
    let out = parallel_transport(conn, &latitude(r), &v, 0.0, 2.0 * PI, cfg)?;
    let out = conn.bundle.total.transition(&out, 0)?;
    let (a, b) = (&v.coords[2..], &out.coords[2..]);
    let angle = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
    Ok((angle, 2.0 * PI * (r * r - 1.0) / (r * r + 1.0)))
}

/// Difference of two angles, wrapped to `(−π, π]`.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(2.0 * PI) - PI
}

/// Transport of a fibre `V` along the base paths of a spray on `H`, both
/// bundles over the same base: the flow of
/// `ẋ = σ(x)w, ẇ = F_H(x, w), η̇ = −B_V(x)(ẋ, η)` on `H ⊕ V`.
pub struct SprayTransport {
    pub conn: Arc<LinearConnection>,
    pub spray: Arc<dyn Spray>,
    sum: AnchoredBundle,
    pairs: Vec<(ChartId, ChartId)>,
}

impl SprayTransport {
    pub fn new(conn: Arc<LinearConnection>, spray: Arc<dyn Spray>) -> Result<Self> {
        let h = spray.bundle();
        let sum = AnchoredBundle::whitney_sum(h, &conn.bundle)?;
        let pairs = whitney_pairs(h, &conn.bundle);
        Ok(Self { conn, spray, sum, pairs })
    }

    /// Joint state `(h, v)` in a common base chart.
    fn start(&self, v: &Point, h: &Point) -> Result<Point> {
        let (hb, vb) = (self.spray.bundle(), &*self.conn.bundle);
        let mut best: Option<(f64, Point)> = None;
        for (c, &(ih, iv)) in self.pairs.iter().enumerate() {
            let (Ok(hh), Ok(vv)) = (hb.total.transition(h, ih), vb.total.transition(v, iv)) else { continue };
            let n = hb.base_dim();
            let mut z = hh.coords.clone();
            z.extend_from_slice(&vv.coords[n..]);
            let p = Point::new(c, z);
            let m = self.sum.total.margin(&p);
            if m > 0.0 && best.as_ref().is_none_or(|b| m > b.0) {
                best = Some((m, p));
            }
        }
        best.map(|b| b.1).ok_or_else(|| Error::NotInChart(self.sum.name.clone()))
    }

    /// `(P^{c_h}_{0,1}(v), Fl^{S_H}_1(h))`, where `c_h(t) = exp_{S_H}(t h)`.
    pub fn transport_with_endpoint(&self, v: &Point, h: &Point, cfg: &IntegratorConfig) -> Result<(Point, Point)> {
        let start = self.start(v, h)?;
        let end = flow(self, &start, 1.0, cfg)?.into_result()?;
        let (ih, iv) = self.pairs[end.chart];
        let hb = self.spray.bundle();
        let (n, kh) = (hb.base_dim(), hb.fibre_dim);
        let x = &end.coords[..n];
        let hv = hb.point(ih, x, &end.coords[n..n + kh]);
        let vv = self.conn.bundle.point(iv, x, &end.coords[n + kh..]);
        Ok((vv, hv))
    }

    pub fn transport(&self, v: &Point, h: &Point, cfg: &IntegratorConfig) -> Result<Point> {
        Ok(self.transport_with_endpoint(v, h, cfg)?.0)
    }
}

impl VectorField for SprayTransport {
    fn manifold(&self) -> &ChartedManifold {
        &self.sum.total
    }
    fn eval(&self, c: ChartId, z: &[f64]) -> Result<Vec<f64>> {
        let (ih, iv) = self.pairs[c];
        let hb = self.spray.bundle();
        let (n, kh) = (hb.base_dim(), hb.fibre_dim);
        let (x, w, eta) = (&z[..n], &z[n..n + kh], &z[n + kh..]);
        let xdot = hb.anchor_apply(ih, x, w);
        let mut out = xdot.clone();
        out.extend(self.spray.accel(ih, x, w)?);
        out.extend(self.conn.form(iv, x, &xdot, eta).into_iter().map(|a| -a));
        Ok(out)
    }
}

/// `ρ(v, h)`: transport of `v` along `t ↦ exp_{S_H}(t h)` to its endpoint.
pub fn transport_along_spray(
    conn: &Arc<LinearConnection>,
    spray: &Arc<dyn Spray>,
    v: &Point,
    h: &Point,
    cfg: &IntegratorConfig,
) -> Result<Point> {
    SprayTransport::new(conn.clone(), spray.clone())?.transport(v, h, cfg)
}
