//! Explicit Runge–Kutta integration of vector fields on charted manifolds,
//! switching charts when the state approaches a chart boundary.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dual::norm;
use crate::error::{Error, Result};
use crate::geometry::{ChartId, ChartedManifold, Point};

/// A section of the tangent bundle, evaluated chart-wise: `eval(c, x)`
/// returns the components of the vector at `x` in chart `c`.
pub trait VectorField: Send + Sync {
    fn manifold(&self) -> &ChartedManifold;
    fn eval(&self, chart: ChartId, x: &[f64]) -> Result<Vec<f64>>;
}

/// Closure-backed field, mostly for tests and one-off scenarios.
pub struct FnField<F> {
    pub manifold: Arc<ChartedManifold>,
    pub f: F,
}

impl<F> VectorField for FnField<F>
where
    F: Fn(ChartId, &[f64]) -> Vec<f64> + Send + Sync,
{
    fn manifold(&self) -> &ChartedManifold {
        &self.manifold
    }
    fn eval(&self, chart: ChartId, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(chart, x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed { h: f64 },
    Rk45Adaptive { atol: f64, rtol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_steps: usize,
    /// Switch to the best chart once the current margin drops below this.
    pub chart_switch_margin: f64,
    /// States with a larger coordinate norm count as blown up.
    pub blowup_norm: f64,
    /// Smallest adaptive step before the flow is declared to have left
    /// its domain.
    pub h_min: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive { atol: 1e-10, rtol: 1e-10 },
            max_steps: 1_000_000,
            chart_switch_margin: 0.1,
            blowup_norm: 1e8,
            h_min: 1e-12,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(h: f64) -> Self {
        Self { method: Method::Rk4Fixed { h }, ..Self::default() }
    }

    pub fn rk45(atol: f64, rtol: f64) -> Self {
        Self { method: Method::Rk45Adaptive { atol, rtol }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4Fixed { h } => h > 0.0,
            Method::Rk45Adaptive { atol, rtol } => atol > 0.0 && rtol > 0.0,
        };
        if !ok || self.max_steps == 0 {
            return Err(Error::ConfigParse(format!("invalid integrator config {self:?}")));
        }
        Ok(())
    }

    /// Nominal accuracy `atol + rtol` (or `h⁴` for fixed steps).
    pub fn tolerance(&self) -> f64 {
        match self.method {
            Method::Rk4Fixed { h } => h.powi(4),
            Method::Rk45Adaptive { atol, rtol } => atol + rtol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlowStatus {
    Complete,
    LeftDomain { t_exit: f64 },
    MaxSteps,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub end: Point,
    /// Time actually reached (equals the requested time when complete).
    pub t_reached: f64,
    pub status: FlowStatus,
    pub steps: usize,
    pub trace: Option<Vec<(f64, Point)>>,
}

impl FlowResult {
    pub fn is_complete(&self) -> bool {
        self.status == FlowStatus::Complete
    }

    pub fn into_result(self) -> Result<Point> {
        match self.status {
            FlowStatus::Complete => Ok(self.end),
            FlowStatus::LeftDomain { t_exit } => Err(Error::LeftDomain { t_exit }),
            FlowStatus::MaxSteps => Err(Error::MaxSteps(self.steps)),
        }
    }
}

// Dormand–Prince 5(4) tableau.
const DP_A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const RK4_A: [&[f64]; 4] = [&[], &[0.5], &[0.0, 0.5], &[0.0, 0.0, 1.0]];
const RK4_B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];

struct Stepper<'a> {
    field: &'a dyn VectorField,
    m: &'a ChartedManifold,
    cfg: IntegratorConfig,
}

enum StepOutcome {
    Ok { y: Vec<f64>, err: Option<f64> },
    /// A stage left the chart or produced non-finite values.
    Failed,
}

impl Stepper<'_> {
    fn stage_ok(&self, chart: ChartId, y: &[f64]) -> bool {
        self.m.chart(chart).contains(y) && norm(y) < self.cfg.blowup_norm
    }

    fn rk(&self, chart: ChartId, y: &[f64], h: f64, a: &[&[f64]], b: &[f64], b_err: Option<&[f64]>) -> StepOutcome {
        let mut ks: Vec<Vec<f64>> = Vec::with_capacity(a.len());
        for row in a {
            let mut yi = y.to_vec();
            for (j, &aij) in row.iter().enumerate() {
                if aij != 0.0 {
                    for (v, k) in yi.iter_mut().zip(&ks[j]) {
                        *v += h * aij * k;
                    }
                }
            }
            if !self.stage_ok(chart, &yi) {
                return StepOutcome::Failed;
            }
            match self.field.eval(chart, &yi) {
                Ok(k) if k.iter().all(|v| v.is_finite()) => ks.push(k),
                _ => return StepOutcome::Failed,
            }
        }
        let combine = |w: &[f64]| {
            let mut out = y.to_vec();
            for (k, &wi) in ks.iter().zip(w) {
                if wi != 0.0 {
                    for (v, kv) in out.iter_mut().zip(k) {
                        *v += h * wi * kv;
                    }
                }
            }
            out
        };
        let y_new = combine(b);
        if !self.stage_ok(chart, &y_new) {
            return StepOutcome::Failed;
        }
        let err = b_err.map(|be| {
            let y_low = combine(be);
            let Method::Rk45Adaptive { atol, rtol } = self.cfg.method else { unreachable!() };
            let s: f64 = (0..y.len())
                .map(|i| {
                    let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
                    ((y_new[i] - y_low[i]) / sc).powi(2)
                })
                .sum();
            (s / y.len() as f64).sqrt()
        });
        StepOutcome::Ok { y: y_new, err }
    }

    fn initial_step(&self, chart: ChartId, y: &[f64], span: f64) -> f64 {
        let Method::Rk45Adaptive { atol, rtol } = self.cfg.method else { unreachable!() };
        let f = match self.field.eval(chart, y) {
            Ok(f) => f,
            Err(_) => return span.abs() * 1e-3,
        };
        let rms = |v: &[f64]| {
            let s: f64 = v.iter().zip(y).map(|(a, yi)| (a / (atol + rtol * yi.abs())).powi(2)).sum();
            (s / y.len() as f64).sqrt()
        };
        let (d0, d1) = (rms(y), rms(&f));
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span.abs()).max(self.cfg.h_min)
    }
}

/// Integrates from `start` through each of `times` (monotone, starting at
/// 0, either direction) and returns the state at each time. Integration
/// stops at the first failure; the returned result carries the status.
pub fn integral_curve(
    field: &dyn VectorField,
    start: &Point,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<Point>, FlowResult)> {
    cfg.validate()?;
    if times.first() != Some(&0.0) {
        return Err(Error::InsufficientData("sample times must start at 0".into()));
    }
    let dir = times.iter().find(|t| **t != 0.0).map_or(1.0, |t| t.signum());
    if times.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0) {
        return Err(Error::InsufficientData("sample times must be monotone".into()));
    }
    let m = field.manifold();
    if !m.contains(start) {
        return Err(Error::NotInChart(m.name.clone()));
    }
    let st = Stepper { field, m, cfg: *cfg };
    let mut chart = start.chart;
    let mut y = start.coords.clone();
    let mut t = 0.0_f64;
    let mut steps = 0usize;
    let mut out = vec![start.clone()];
    let mut trace = vec![(0.0, start.clone())];
    let mut h_adapt: Option<f64> = None;

    let finish = |y: Vec<f64>, chart: ChartId, t: f64, status, steps, trace, out| {
        let res = FlowResult { end: Point::new(chart, y), t_reached: t, status, steps, trace: Some(trace) };
        Ok((out, res))
    };

    for &t_target in &times[1..] {
        while (t_target - t) * dir > 0.0 {
            if steps >= cfg.max_steps {
                return finish(y, chart, t, FlowStatus::MaxSteps, steps, trace, out);
            }
            if m.chart(chart).margin(&y) < cfg.chart_switch_margin {
                if let Ok(p) = m.best_chart(&Point::new(chart, y.clone())) {
                    chart = p.chart;
                    y = p.coords;
                }
            }
            let remaining = (t_target - t).abs();
            let accepted = match cfg.method {
                Method::Rk4Fixed { h } => {
                    // absorb round-off so the last step does not degenerate
                    let hh = if remaining <= h * (1.0 + 1e-9) { remaining } else { h };
                    match st.rk(chart, &y, dir * hh, &RK4_A, &RK4_B, None) {
                        StepOutcome::Ok { y: yn, .. } => {
                            y = yn;
                            t = if hh == remaining { t_target } else { t + dir * hh };
                            true
                        }
                        StepOutcome::Failed => {
                            return finish(y, chart, t, FlowStatus::LeftDomain { t_exit: t }, steps, trace, out)
                        }
                    }
                }
                Method::Rk45Adaptive { .. } => {
                    let h0 = *h_adapt.get_or_insert_with(|| st.initial_step(chart, &y, t_target - t));
                    let hh = h0.min(remaining);
                    let ok = match st.rk(chart, &y, dir * hh, &DP_A, &DP_B5, Some(&DP_B4)) {
                        StepOutcome::Ok { y: yn, err: Some(e) } if e <= 1.0 => {
                            y = yn;
                            t = if hh == remaining { t_target } else { t + dir * hh };
                            let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                            // a step clipped to hit an output time says nothing about the natural size
                            h_adapt = Some(if hh < h0 { h0 } else { hh * fac });
                            true
                        }
                        StepOutcome::Ok { err, .. } => {
                            let e = err.unwrap_or(f64::INFINITY);
                            let fac = (0.9 * e.powf(-0.2)).clamp(0.1, 0.5);
                            h_adapt = Some(hh * fac);
                            false
                        }
                        StepOutcome::Failed => {
                            h_adapt = Some(hh * 0.25);
                            false
                        }
                    };
                    if !ok && h_adapt.unwrap() < cfg.h_min {
                        return finish(y, chart, t, FlowStatus::LeftDomain { t_exit: t }, steps, trace, out);
                    }
                    ok
                }
            };
            steps += 1;
            if accepted {
                trace.push((t, Point::new(chart, y.clone())));
            }
        }
        out.push(Point::new(chart, y.clone()));
    }
    finish(y, chart, t, FlowStatus::Complete, steps, trace, out)
}

/// `Fl_t(start)`. `Fl_0` returns `start` unchanged.
pub fn flow(field: &dyn VectorField, start: &Point, t: f64, cfg: &IntegratorConfig) -> Result<FlowResult> {
    flow_traced(field, start, t, cfg, false)
}

pub fn flow_traced(
    field: &dyn VectorField,
    start: &Point,
    t: f64,
    cfg: &IntegratorConfig,
    keep_trace: bool,
) -> Result<FlowResult> {
    let (_, mut res) = integral_curve(field, start, &[0.0, t], cfg)?;
    if !keep_trace {
        res.trace = None;
    }
    Ok(res)
}

/// Writes `t, chart_id, x0, x1, …` rows.
pub fn write_trace_csv<W: Write>(trace: &[(f64, Point)], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let dim = trace.first().map_or(0, |(_, p)| p.coords.len());
    let mut header = vec!["t".to_string(), "chart_id".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    wr.write_record(&header)?;
    for (t, p) in trace {
        let mut row = vec![format!("{t:.17e}"), p.chart.to_string()];
        row.extend(p.coords.iter().map(|c| format!("{c:.17e}")));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderEstimate {
    /// Least-squares slope of `log err` against `log h`; NaN when exact.
    pub order: f64,
    /// All errors at round-off level.
    pub exact: bool,
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Empirical convergence order of fixed-step RK4 at time `t`. Without a
/// `reference`, the solution at the finest step divided by 10 is used.
pub fn convergence_order(
    field: &dyn VectorField,
    start: &Point,
    t: f64,
    steps: &[f64],
    reference: Option<&Point>,
) -> Result<OrderEstimate> {
    if steps.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 step sizes, got {}", steps.len())));
    }
    let run = |h: f64| flow(field, start, t, &IntegratorConfig::rk4(h)).and_then(|r| r.into_result());
    let reference = match reference {
        Some(p) => p.clone(),
        None => {
            let finest = steps.iter().copied().fold(f64::INFINITY, f64::min);
            run(finest / 10.0)?
        }
    };
    let m = field.manifold();
    let errors = steps.iter().map(|&h| run(h).map(|p| m.distance(&p, &reference))).collect::<Result<Vec<_>>>()?;
    let scale = 1.0 + norm(&reference.coords);
    if errors.iter().all(|e| *e <= 1e-13 * scale) {
        return Ok(OrderEstimate { order: f64::NAN, exact: true, steps: steps.to_vec(), errors });
    }
    let pts: Vec<(f64, f64)> = steps.iter().zip(&errors).filter(|(_, e)| **e > 0.0).map(|(h, e)| (h.ln(), e.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 nonzero errors".into()));
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(OrderEstimate { order: sxy / sxx, exact: false, steps: steps.to_vec(), errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::max_abs_diff;
    use crate::geometry::{euclidean, Domain};

    fn constant_field() -> FnField<impl Fn(ChartId, &[f64]) -> Vec<f64>> {
        FnField { manifold: Arc::new(euclidean(2)), f: |_: ChartId, _: &[f64]| vec![1.0, 0.0] }
    }

    #[test]
    fn constant_field_translates() {
        let f = constant_field();
        let p = Point::new(0, vec![0.0, 0.0]);
        let r = flow(&f, &p, 1.0, &IntegratorConfig::default()).unwrap();
        assert!(r.is_complete());
        assert!(max_abs_diff(&r.end.coords, &[1.0, 0.0]) < 1e-14);
        let (pts, _) = integral_curve(&f, &p, &[0.0, 0.5, 1.0], &IntegratorConfig::default()).unwrap();
        assert!(max_abs_diff(&pts[1].coords, &[0.5, 0.0]) < 1e-14);
    }

    #[test]
    fn zero_time_is_exact_identity() {
        let f = constant_field();
        let p = Point::new(0, vec![0.3, std::f64::consts::PI]);
        assert_eq!(flow(&f, &p, 0.0, &IntegratorConfig::default()).unwrap().end, p);
    }

    #[test]
    fn flat_line_geodesic() {
        let f = FnField { manifold: Arc::new(euclidean(2)), f: |_: ChartId, z: &[f64]| vec![z[1], 0.0] };
        let r = flow(&f, &Point::new(0, vec![0.0, 2.0]), 0.5, &IntegratorConfig::rk4(0.1)).unwrap();
        assert!(max_abs_diff(&r.end.coords, &[1.0, 2.0]) < 1e-14);
    }

    #[test]
    fn exponential_growth_backwards() {
        let f = FnField { manifold: Arc::new(euclidean(1)), f: |_: ChartId, z: &[f64]| vec![z[0]] };
        let r = flow(&f, &Point::new(0, vec![1.0]), -1.5, &IntegratorConfig::default()).unwrap();
        assert!((r.end.coords[0] - (-1.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn leaving_a_bounded_chart_reports_exit_time() {
        let m = crate::geometry::euclidean_box(1, 1.0);
        assert!(matches!(m.chart(0).domain, Domain::Box { .. }));
        let f = FnField { manifold: Arc::new(m), f: |_: ChartId, _: &[f64]| vec![1.0] };
        let r = flow(&f, &Point::new(0, vec![0.0]), 3.0, &IntegratorConfig::default()).unwrap();
        match r.status {
            FlowStatus::LeftDomain { t_exit } => assert!(t_exit > 0.9 && t_exit < 1.0),
            s => panic!("unexpected {s:?}"),
        }
    }

    #[test]
    fn blow_up_is_detected() {
        let f = FnField { manifold: Arc::new(euclidean(1)), f: |_: ChartId, z: &[f64]| vec![z[0] * z[0]] };
        // exact solution 1/(1-t) blows up at t = 1
        let r = flow(&f, &Point::new(0, vec![1.0]), 2.0, &IntegratorConfig::default()).unwrap();
        assert!(matches!(r.status, FlowStatus::LeftDomain { t_exit } if t_exit < 1.0));
    }

    #[test]
    fn rk4_is_fourth_order_on_exponential() {
        let f = FnField { manifold: Arc::new(euclidean(1)), f: |_: ChartId, z: &[f64]| vec![z[0]] };
        let exact = Point::new(0, vec![1f64.exp()]);
        let est = convergence_order(&f, &Point::new(0, vec![1.0]), 1.0, &[0.1, 0.05, 0.025, 0.0125], Some(&exact))
            .unwrap();
        assert!((est.order - 4.0).abs() < 0.3, "{est:?}");
        assert!(matches!(
            convergence_order(&f, &Point::new(0, vec![1.0]), 1.0, &[0.1, 0.05], None),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn constant_field_order_is_exact() {
        let f = constant_field();
        let est = convergence_order(&f, &Point::new(0, vec![0.0, 0.0]), 1.0, &[0.5, 0.25, 0.125], None).unwrap();
        assert!(est.exact && est.order.is_nan());
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let f = constant_field();
        let r = flow_traced(&f, &Point::new(0, vec![0.0, 0.0]), 1.0, &IntegratorConfig::rk4(0.25), true).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(r.trace.as_ref().unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,chart_id,x0,x1\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
