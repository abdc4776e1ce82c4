//! Sampled checks of the spray axioms and of the properties of spray
//! exponentials.

use crate::bundle::AnchoredBundle;
use crate::dual::max_abs_diff;
use crate::error::{Error, Result};
use crate::geometry::{smooth, Point, TangentLift};
use crate::ode::IntegratorConfig;
use crate::report::Measurement;
use crate::sample::{self, ball, Rng};

use super::{spray_exponential, spray_flow, Spray};

pub const LAMBDAS: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];

/// Random points of `E`: a random trivialization, a base point with the
/// given margin, and a fibre vector in the ball of radius `fibre_radius`.
pub fn sample_fibre_points(
    bundle: &AnchoredBundle,
    rng: &mut Rng,
    n: usize,
    fibre_radius: f64,
    min_margin: f64,
) -> Vec<Point> {
    let (nb, k) = (bundle.base_dim(), bundle.fibre_dim);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 100 * n {
        attempts += 1;
        let c = (sample::uniform(rng, 0.0, bundle.charts.len() as f64) as usize).min(bundle.charts.len() - 1);
        let dom = bundle.total.chart(c).domain.clone();
        let Some(z) = sample::in_domain(rng, &dom, nb + k, min_margin, 3.0) else { continue };
        out.push(bundle.point(c, &z[..nb], &ball(rng, k, fibre_radius)));
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AxiomResiduals {
    /// `π_E ∘ S = id_E`
    pub s1: Measurement,
    /// `Tπ ∘ S = ρ`
    pub s2: Measurement,
    /// `S ∘ h_λ = Th_λ(λ S)`
    pub s3: Measurement,
}

impl AxiomResiduals {
    pub fn max(&self) -> f64 {
        self.s1.max_residual.max(self.s2.max_residual).max(self.s3.max_residual)
    }

    pub fn n_samples(&self) -> usize {
        self.s1.n_samples.min(self.s2.n_samples).min(self.s3.n_samples)
    }
}

/// Evaluates the axioms at each sample. The value of `S` is computed in
/// every chart containing the sample and carried back to the sample's
/// chart with the tangent lift of the total-space transition, so the
/// comparisons cross chart boundaries instead of re-reading the stored
/// components.
pub fn axiom_residuals(spray: &dyn Spray, samples: &[Point]) -> Result<AxiomResiduals> {
    let b = spray.bundle();
    let n = b.base_dim();
    let mut res = AxiomResiduals::default();
    for v in samples {
        let (x, xi) = b.split(&v.coords);
        let rho = b.anchor_apply(v.chart, x, xi);
        for vd in b.total.representations(v) {
            let wd = spray.value(&vd)?;
            let back = if vd.chart == v.chart {
                let mut z = vd.coords.clone();
                z.extend(wd);
                z
            } else {
                let t = b.total.transition_map(vd.chart, v.chart).expect("representation implies overlap");
                let mut z = vd.coords.clone();
                z.extend(wd);
                smooth(TangentLift(t.clone())).eval(&z)
            };
            let dim = v.coords.len();
            let (base, w) = back.split_at(dim);
            res.s1.record(max_abs_diff(base, &v.coords));
            res.s2.record(max_abs_diff(&w[..n], &rho));
            for lambda in LAMBDAS {
                let lhs = spray.value(&b.scale(v, lambda))?;
                let rhs: Vec<f64> = w[..n].iter().map(|a| lambda * a).chain(w[n..].iter().map(|a| lambda * lambda * a)).collect();
                res.s3.record(max_abs_diff(&lhs, &rhs));
            }
        }
    }
    Ok(res)
}

/// `π Fl_s(t v)` against `π Fl_{st}(v)`; samples whose flows do not both
/// complete are skipped and not counted.
pub fn flow_homogeneity_check(
    spray: &dyn Spray,
    samples: &[(f64, f64, Point)],
    cfg: &IntegratorConfig,
) -> Result<Measurement> {
    let b = spray.bundle();
    let mut m = Measurement::default();
    for (s, t, v) in samples {
        let lhs = spray_flow(spray, &b.scale(v, *t), *s, cfg)?;
        let rhs = spray_flow(spray, v, s * t, cfg)?;
        if !(lhs.is_complete() && rhs.is_complete()) {
            continue;
        }
        let (pl, pr) = (b.projection(&lhs.end), b.projection(&rhs.end));
        m.record(b.base.distance(&pl, &pr));
    }
    Ok(m)
}

/// For a curve in `E` sampled at uniform times, the largest deviation of
/// `ρ(c(t))` from the velocity of `π ∘ c` (fourth-order central
/// differences, neighbours moved into the centre sample's chart).
pub fn anchored_path_defect(bundle: &AnchoredBundle, curve: &[(f64, Point)]) -> Result<Measurement> {
    if curve.len() < 20 {
        return Err(Error::InsufficientData(format!("{} curve samples, need at least 20", curve.len())));
    }
    let dt = curve[1].0 - curve[0].0;
    if curve.windows(2).any(|w| ((w[1].0 - w[0].0) - dt).abs() > 1e-9 * dt.abs().max(1.0)) {
        return Err(Error::InsufficientData("curve samples must be uniformly spaced".into()));
    }
    let mut m = Measurement::default();
    for i in 2..curve.len() - 2 {
        let centre = bundle.projection(&curve[i].1);
        let mut xs = Vec::with_capacity(5);
        for j in [i - 2, i - 1, i + 1, i + 2] {
            let p = bundle.projection(&curve[j].1);
            xs.push(bundle.base.transition(&p, centre.chart)?.coords);
        }
        let vel: Vec<f64> = (0..centre.coords.len())
            .map(|d| (xs[0][d] - 8.0 * xs[1][d] + 8.0 * xs[2][d] - xs[3][d]) / (12.0 * dt))
            .collect();
        let rho = bundle.anchor(&curve[i].1);
        m.record(max_abs_diff(&vel, &rho.components));
    }
    Ok(m)
}

/// Central difference `(exp(hξ) − exp(−hξ)) / 2h` at the zero vector over
/// `m` against `ρ(ξ)`, for each fibre direction.
pub fn fibre_derivative_check(
    spray: &dyn Spray,
    m: &Point,
    directions: &[Vec<f64>],
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<Measurement> {
    let b = spray.bundle();
    let (c, x) = b.chart_at(m)?;
    let base_chart = b.charts[c].base_chart;
    let mut meas = Measurement::default();
    for xi in directions {
        let plus: Vec<f64> = xi.iter().map(|a| h * a).collect();
        let minus: Vec<f64> = xi.iter().map(|a| -h * a).collect();
        let ep = b.base.transition(&spray_exponential(spray, &b.point(c, &x, &plus), cfg)?, base_chart)?;
        let em = b.base.transition(&spray_exponential(spray, &b.point(c, &x, &minus), cfg)?, base_chart)?;
        let fd: Vec<f64> = ep.coords.iter().zip(&em.coords).map(|(p, q)| (p - q) / (2.0 * h)).collect();
        let rho = b.anchor_apply(c, &x, xi);
        meas.record(max_abs_diff(&fd, &rho));
    }
    Ok(meas)
}
