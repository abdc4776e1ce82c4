//! Local additions: spray exponentials on `TM`, and the composite
//! `Σ_M(v, h) = exp_{S_V}(P^{c_h}_{0,1}(v))` adapted to a submersion.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::connection::{LinearConnection, SprayTransport};
use crate::dual::max_abs_diff;
use crate::error::{Error, Result};
use crate::geometry::{ChartedManifold, Point, TangentVec};
use crate::ode::IntegratorConfig;
use crate::report::Measurement;
use crate::sample::{self, ball};
use crate::spray::{domain_probe, spray_exponential, ProbeOptions, Spray};

use super::{LiftedSpray, SubmersionGeometry};

/// A map `Σ` from a neighbourhood of the zero section of `TM` to `M`.
pub trait LocalAddition: Send + Sync {
    fn manifold(&self) -> &Arc<ChartedManifold>;
    fn apply(&self, v: &TangentVec) -> Result<Point>;
}

/// `Σ = exp_S` for a spray `S` on the tangent bundle.
pub struct SprayAddition {
    pub spray: Arc<dyn Spray>,
    pub cfg: IntegratorConfig,
}

impl SprayAddition {
    pub fn new(spray: Arc<dyn Spray>, cfg: IntegratorConfig) -> Result<Self> {
        let b = spray.bundle();
        let tangent_like = b.fibre_dim == b.base_dim()
            && b.charts.len() == b.base.n_charts()
            && b.charts.iter().enumerate().all(|(c, bc)| bc.base_chart == c);
        if !tangent_like {
            return Err(Error::ConfigParse(format!("{} is not a spray on a tangent bundle", spray.label())));
        }
        Ok(Self { spray, cfg })
    }
}

impl LocalAddition for SprayAddition {
    fn manifold(&self) -> &Arc<ChartedManifold> {
        &self.spray.bundle().base
    }
    fn apply(&self, v: &TangentVec) -> Result<Point> {
        spray_exponential(&*self.spray, &v.to_total(), &self.cfg)
    }
}

/// Probed domain of `Σ_M` at a point: fibre-coordinate radii for the
/// horizontal and vertical parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Omega {
    pub h_radius: f64,
    pub v_radius: f64,
}

/// `Σ_M` assembled from the horizontal lift `S_H` of `S_N`, a spray `S_V` on
/// the vertical bundle and a connection on `V`.
pub struct CompositeAddition {
    pub geom: Arc<SubmersionGeometry>,
    pub s_h: Arc<LiftedSpray>,
    pub s_v: Arc<dyn Spray>,
    pub conn: Arc<LinearConnection>,
    pub cfg: IntegratorConfig,
    transport: SprayTransport,
}

impl CompositeAddition {
    pub fn new(
        s_h: Arc<LiftedSpray>,
        s_v: Arc<dyn Spray>,
        conn: Arc<LinearConnection>,
        cfg: IntegratorConfig,
    ) -> Result<Self> {
        let geom = s_h.geom.clone();
        let vname = &geom.vertical.name;
        if &s_v.bundle().name != vname || &conn.bundle.name != vname {
            return Err(Error::ConfigParse(format!("S_V and the connection must both live on {vname}")));
        }
        let transport = SprayTransport::new(conn.clone(), s_h.clone())?;
        Ok(Self { geom, s_h, s_v, conn, cfg, transport })
    }

    /// `Σ_M(v, h)` for `v ∈ V_m`, `h ∈ H_m`.
    pub fn apply_split(&self, v: &Point, h: &Point) -> Result<Point> {
        let moved = self.transport.transport(v, h, &self.cfg)?;
        spray_exponential(&*self.s_v, &moved, &self.cfg)
    }

    /// The vertical vector after transport along `c_h`, before `exp_{S_V}`.
    pub fn transported(&self, v: &Point, h: &Point) -> Result<Point> {
        self.transport.transport(v, h, &self.cfg)
    }

    /// `Σ_N = exp_{S_N}` on `TN`.
    pub fn sigma_n(&self, w: &Point) -> Result<Point> {
        spray_exponential(&*self.s_h.base, w, &self.cfg)
    }

    /// Radii of the probed domains of `S_H` and `S_V` over `m`, shrunk by 0.8.
    pub fn omega(&self, m: &Point, opts: &ProbeOptions) -> Result<Omega> {
        let h = domain_probe(&*self.s_h, m, &self.cfg, opts)?.radius;
        let v = domain_probe(&*self.s_v, m, &self.cfg, opts)?.radius;
        Ok(Omega { h_radius: 0.8 * h, v_radius: 0.8 * v })
    }
}

impl LocalAddition for CompositeAddition {
    fn manifold(&self) -> &Arc<ChartedManifold> {
        self.geom.m()
    }
    fn apply(&self, v: &TangentVec) -> Result<Point> {
        let (pv, ph) = self.geom.split(v)?;
        self.apply_split(&pv, &ph)
    }
}

/// `dist_N(p(Σ_M(v, h)), Σ_N(Tp h))` over samples `(v, h)`.
pub fn diagram_commutativity_check(add: &CompositeAddition, samples: &[(Point, Point)]) -> Result<Measurement> {
    let geom = &*add.geom;
    let mut meas = Measurement::default();
    for (v, h) in samples {
        let lhs = geom.p.apply(&add.apply_split(v, h)?)?;
        let rhs = add.sigma_n(&geom.tp_h(h)?)?;
        meas.record(geom.n().distance(&lhs, &rhs));
    }
    Ok(meas)
}

/// Central-difference derivative of `w ↦ Σ(w)` at `0_m` along each
/// direction `d` (components in `m`'s chart), compared with `d` itself.
pub fn sigma_m_derivative_check(
    add: &dyn LocalAddition,
    m: &Point,
    directions: &[Vec<f64>],
    h: f64,
) -> Result<Measurement> {
    let mfd = add.manifold();
    let mut meas = Measurement::default();
    for d in directions {
        let plus = TangentVec::new(m.clone(), d.iter().map(|a| h * a).collect());
        let minus = TangentVec::new(m.clone(), d.iter().map(|a| -h * a).collect());
        let ep = mfd.transition(&add.apply(&plus)?, m.chart)?;
        let em = mfd.transition(&add.apply(&minus)?, m.chart)?;
        let fd: Vec<f64> = ep.coords.iter().zip(&em.coords).map(|(p, q)| (p - q) / (2.0 * h)).collect();
        meas.record(max_abs_diff(&fd, d));
    }
    Ok(meas)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InjectivityOptions {
    /// Coordinate radius of the sampled fibre ball at each base point.
    pub radius: f64,
    pub samples_per_point: usize,
    pub collision_ratio: f64,
    pub min_separation: f64,
    pub fd_step: f64,
    pub min_singular_value: f64,
    pub seed: u64,
}

impl Default for InjectivityOptions {
    fn default() -> Self {
        Self {
            radius: 0.5,
            samples_per_point: 60,
            collision_ratio: 1e-2,
            min_separation: 1e-4,
            fd_step: 1e-6,
            min_singular_value: 1e-6,
            seed: 0x1f1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InjectivityReport {
    pub n_pairs: usize,
    /// Smallest `dist(Σv, Σw) / |v − w|` over sampled pairs with a common base.
    pub min_ratio: f64,
    pub n_jacobians: usize,
    pub min_singular_value: f64,
    /// Samples where `det DΣ` has the opposite sign to `det DΣ(0_m)`.
    pub orientation_flips: usize,
    /// Samples at which `Σ` could not be evaluated.
    pub undefined: usize,
    pub pass: bool,
}

/// Samples the fibre ball of the given coordinate radius over each base
/// point and looks for evidence that `θ = (π, Σ)` fails to be an
/// embedding there: near-collisions of sampled pairs, a nearly singular
/// fibre Jacobian, or a Jacobian whose orientation differs from the one at
/// the zero vector (a fold).
pub fn injectivity_probe(
    add: &dyn LocalAddition,
    base_points: &[Point],
    opts: &InjectivityOptions,
) -> Result<InjectivityReport> {
    let mfd = add.manifold();
    let n = mfd.dim();
    let mut rng = sample::rng(opts.seed);
    let mut rep = InjectivityReport {
        n_pairs: 0,
        min_ratio: f64::INFINITY,
        n_jacobians: 0,
        min_singular_value: f64::INFINITY,
        orientation_flips: 0,
        undefined: 0,
        pass: false,
    };
    let jacobian = |m: &Point, v: &[f64]| -> Result<(Point, DMatrix<f64>)> {
        let centre = add.apply(&TangentVec::new(m.clone(), v.to_vec()))?;
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut p = v.to_vec();
            let mut q = v.to_vec();
            p[j] += opts.fd_step;
            q[j] -= opts.fd_step;
            let ep = mfd.transition(&add.apply(&TangentVec::new(m.clone(), p))?, centre.chart)?;
            let eq = mfd.transition(&add.apply(&TangentVec::new(m.clone(), q))?, centre.chart)?;
            for i in 0..n {
                jac[(i, j)] = (ep.coords[i] - eq.coords[i]) / (2.0 * opts.fd_step);
            }
        }
        Ok((centre, jac))
    };
    for m in base_points {
        let m = mfd.best_chart(m)?;
        let det0 = jacobian(&m, &vec![0.0; n])?.1.determinant();
        let mut pts: Vec<(Vec<f64>, Point)> = Vec::new();
        for _ in 0..opts.samples_per_point {
            let v = ball(&mut rng, n, opts.radius);
            match jacobian(&m, &v) {
                Ok((out, jac)) => {
                    rep.n_jacobians += 1;
                    rep.min_singular_value = rep.min_singular_value.min(jac.clone().singular_values().min());
                    if jac.determinant() * det0 <= 0.0 {
                        rep.orientation_flips += 1;
                    }
                    pts.push((v, out));
                }
                Err(_) => rep.undefined += 1,
            }
        }
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let sep = crate::dual::norm(&pts[i].0.iter().zip(&pts[j].0).map(|(a, b)| a - b).collect::<Vec<_>>());
                if sep <= opts.min_separation {
                    continue;
                }
                rep.n_pairs += 1;
                rep.min_ratio = rep.min_ratio.min(mfd.distance(&pts[i].1, &pts[j].1) / sep);
            }
        }
    }
    rep.pass = rep.undefined == 0
        && rep.n_jacobians > 0
        && rep.orientation_flips == 0
        && rep.min_singular_value > opts.min_singular_value
        && rep.min_ratio > opts.collision_ratio;
    Ok(rep)
}
