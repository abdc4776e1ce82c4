//! Sprays adapted to a submersion: the lift of a spray on `TN` to the
//! horizontal bundle, and sprays on the vertical bundle.

use std::sync::Arc;

use crate::bundle::AnchoredBundle;
use crate::dual::max_abs_diff;
use crate::error::{Error, Result};
use crate::geometry::{ChartId, Point};
use crate::ode::IntegratorConfig;
use crate::partition::PartitionOfUnity;
use crate::report::Measurement;
use crate::spray::{glue_sprays, quadratic_local_spray, spray_exponential, spray_flow, BilinearFn, GluedSpray, Spray};

use super::SubmersionGeometry;

/// The spray on `H` that is `Tp|_H`-related to `S_N`: in a trivialization
/// `(a, b)` of `H`, `ẋ = σ_ab(x) w` and `ẇ = F_N(p(x), w)`.
pub struct LiftedSpray {
    pub geom: Arc<SubmersionGeometry>,
    pub base: Arc<dyn Spray>,
}

/// Requires `S_N` to live on the tangent bundle of `N` with the charts of `N`.
pub fn lifted_spray(geom: Arc<SubmersionGeometry>, s_n: Arc<dyn Spray>) -> Result<LiftedSpray> {
    let b = s_n.bundle();
    if b.base.name != geom.n().name || b.charts.len() != geom.n().n_charts() || b.fibre_dim != geom.n().dim() {
        return Err(Error::ConfigParse(format!("{} is not a spray on T{}", s_n.label(), geom.n().name)));
    }
    Ok(LiftedSpray { geom, base: s_n })
}

impl Spray for LiftedSpray {
    fn bundle(&self) -> &AnchoredBundle {
        &self.geom.horizontal
    }
    fn label(&self) -> String {
        format!("lift[{}]", self.base.label())
    }
    fn supports(&self, _: ChartId) -> bool {
        true
    }
    fn accel_local(&self, chart: ChartId, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let (a, b) = self.geom.pairs[chart];
        let y = self.geom.p.rep(a, b).expect("pair has a representative").eval(x);
        self.base.accel(b, &y, w)
    }
}

/// Spray on `V` glued from quadratic sprays `F(x, ζ) = B_i(x)(ζ, ζ)`, one per
/// bump of `pu` (a partition of unity on `M`), each written in the
/// trivialization of `V` over the bump's chart. `None` means `B_i = 0`.
pub fn vertical_spray(
    vertical: Arc<AnchoredBundle>,
    forms: Vec<Option<BilinearFn>>,
    pu: Arc<PartitionOfUnity>,
) -> Result<GluedSpray> {
    if forms.len() != pu.len() {
        return Err(Error::DimensionMismatch { expected: pu.len(), got: forms.len() });
    }
    let locals = pu
        .bumps
        .iter()
        .zip(forms)
        .map(|(bump, b)| {
            let c = vertical
                .charts
                .iter()
                .position(|bc| bc.base_chart == bump.chart)
                .ok_or_else(|| Error::NoLocalRep { map: vertical.name.clone(), chart: bump.chart })?;
            Ok(Arc::new(quadratic_local_spray(vertical.clone(), c, b)?) as Arc<dyn Spray>)
        })
        .collect::<Result<Vec<_>>>()?;
    glue_sprays(vertical, locals, pu)
}

/// `T(Tp|_H)(S_H(h))` against `S_N(Tp(h))`, with `S_H` evaluated in every
/// trivialization of `H` containing `h`.
pub fn relatedness_check(s_h: &LiftedSpray, samples: &[Point]) -> Result<Measurement> {
    let geom = &*s_h.geom;
    let hb = &*geom.horizontal;
    let md = geom.m().dim();
    let mut meas = Measurement::default();
    for h in samples {
        for hc in hb.total.representations(h) {
            let (a, b) = geom.pairs[hc.chart];
            let val = s_h.value(&hc)?;
            let p_ab = geom.p.rep(a, b).expect("pair has a representative");
            let mut lhs = p_ab.jet1(&hc.coords[..md], &val[..md]);
            lhs.extend_from_slice(&val[md..]);
            let rhs = s_h.base.value(&geom.tp_h(&hc)?)?;
            meas.record(max_abs_diff(&lhs, &rhs));
        }
    }
    Ok(meas)
}

/// `p(exp_{S_H}(h))` against `exp_{S_N}(Tp h)`, distance in `N`.
pub fn intertwining_check(s_h: &LiftedSpray, samples: &[Point], cfg: &IntegratorConfig) -> Result<Measurement> {
    let geom = &*s_h.geom;
    let mut meas = Measurement::default();
    for h in samples {
        let lhs = geom.p.apply(&spray_exponential(s_h, h, cfg)?)?;
        let rhs = spray_exponential(&*s_h.base, &geom.tp_h(h)?, cfg)?;
        meas.record(geom.n().distance(&lhs, &rhs));
    }
    Ok(meas)
}

/// Largest drift of `p(π(Fl_t(v)))` from `p(π(v))` along the traced
/// integral curve of a spray on `V`, for `t ∈ [0, 1]`.
pub fn fibre_preservation_check(
    geom: &SubmersionGeometry,
    s_v: &dyn Spray,
    samples: &[Point],
    cfg: &IntegratorConfig,
) -> Result<Measurement> {
    let vb = s_v.bundle();
    let mut meas = Measurement::default();
    for v in samples {
        let y0 = geom.p.apply(&vb.projection(v))?;
        let res = crate::ode::flow_traced(&crate::spray::SprayField(s_v), v, 1.0, cfg, true)?;
        let trace = res.trace.clone().unwrap_or_default();
        res.into_result()?;
        for (_, z) in &trace {
            meas.record(geom.n().distance(&geom.p.apply(&vb.projection(z))?, &y0));
        }
    }
    Ok(meas)
}

/// The local addition on `p`, `Ψ = (π_V, exp_{S_V})`: checks that `Ψ`
/// sends zero vectors to the diagonal and lands in `M ×_p M`.
pub fn local_addition_on_p_check(
    geom: &SubmersionGeometry,
    s_v: &dyn Spray,
    samples: &[Point],
    cfg: &IntegratorConfig,
) -> Result<Measurement> {
    let vb = s_v.bundle();
    let mut meas = Measurement::default();
    for v in samples {
        let m = vb.projection(v);
        let zero = spray_exponential(s_v, &vb.scale(v, 0.0), cfg)?;
        meas.record(geom.m().distance(&zero, &m));
        let end = spray_flow(s_v, v, 1.0, cfg)?.into_result()?;
        let (pe, pm) = (geom.p.apply(&vb.projection(&end))?, geom.p.apply(&m)?);
        meas.record(geom.n().distance(&pe, &pm));
    }
    Ok(meas)
}
