//! Check registry and runner: resolves requested checks with their
//! dependencies, runs them in registry order against one shared scenario,
//! and assembles a versioned report plus CSV plot data.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bundle::AnchoredBundle;
use crate::connection::{angle_gap, latitude_holonomy, round_sphere_connection, transport_inverse_check, transport_linearity_check, Curve};
use crate::dual::{Dual, D1};
use crate::error::{Error, Result};
use crate::geometry::builtins::{sphere_chart, sphere_embed};
use crate::geometry::{euclidean, stereographic_pair, ChartId, Point, TangentVec};
use crate::mapping::{
    chart_round_trip, join_section, pushforward, random_section, split_section, submersion_chart_check,
    ChartRepresentation, DiscretizedMap, NewtonOptions, PushforwardOptions, SourceGrid,
};
use crate::ode::{convergence_order, flow_traced, integral_curve, write_trace_csv, FnField, IntegratorConfig, OrderEstimate};
use crate::report::{Bound, Entry, Measurement, Report};
use crate::sample::{self, Rng};
use crate::scenarios::{self, Manifest, Scenario, SCENARIOS};
use crate::spray::{
    anchored_path_defect, axiom_residuals, domain_probe, fibre_derivative_check, flow_homogeneity_check,
    rescaled_conjugate, round_sphere_spray, sample_fibre_points, ProbeOptions, ProbeResult, Spray, SprayField,
};
use crate::submersion::{
    diagram_commutativity_check, fibre_preservation_check, injectivity_probe, intertwining_check,
    local_addition_on_p_check, relatedness_check, sigma_m_derivative_check, InjectivityOptions, LocalAddition, Omega,
    SprayAddition,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    /// Check names, or `"all"`.
    pub checks: Vec<String>,
    /// Tolerance overrides by entry name.
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    /// Nodes of the loop grid for the mapping-space checks.
    pub grid_n: usize,
    /// Where files go; not part of the report.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub emit_traces: bool,
    pub integrator: IntegratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "flat_projection".into(),
            checks: vec!["all".into()],
            tolerances: BTreeMap::new(),
            seed: 0,
            grid_n: 64,
            output_dir: None,
            emit_traces: false,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub scenario: Manifest,
    pub config: RunConfig,
    /// Checks actually run, dependencies included, in order.
    pub checks_run: Vec<String>,
}

pub type RunReport = Report<Header>;

/// One entry a check emits, with its default tolerance.
pub struct EntryDef {
    pub name: &'static str,
    pub anchor: &'static str,
    pub tolerance: f64,
    pub bound: Bound,
    pub expected_fail: bool,
}

const fn below(name: &'static str, anchor: &'static str, tolerance: f64) -> EntryDef {
    EntryDef { name, anchor, tolerance, bound: Bound::Below, expected_fail: false }
}

const fn above(name: &'static str, anchor: &'static str, tolerance: f64) -> EntryDef {
    EntryDef { name, anchor, tolerance, bound: Bound::Above, expected_fail: false }
}

pub struct CheckDef {
    pub name: &'static str,
    pub summary: &'static str,
    pub deps: &'static [&'static str],
    pub entries: &'static [EntryDef],
    run: fn(&mut Ctx) -> Result<()>,
}

/// State shared by the checks of one run.
pub struct Ctx {
    pub sc: Scenario,
    pub cfg: RunConfig,
    check: &'static CheckDef,
    rng: Rng,
    entries: Vec<Entry>,
    files: BTreeMap<String, String>,
    loop_map: OnceCell<DiscretizedMap>,
    representation: OnceCell<ChartRepresentation>,
}

impl Ctx {
    fn integ(&self) -> IntegratorConfig {
        self.cfg.integrator
    }

    fn entry_def(&self, name: &str) -> &'static EntryDef {
        self.check.entries.iter().find(|e| e.name == name).expect("entry declared by its check")
    }

    fn record(&mut self, name: &str, m: Measurement) {
        let def = self.entry_def(name);
        let tol = self.cfg.tolerances.get(name).copied().unwrap_or(def.tolerance);
        let mut e = Entry::new(self.check.name, name, def.anchor, m, tol, def.bound);
        if def.expected_fail {
            e = e.expect_fail();
        }
        self.entries.push(e);
    }

    fn file(&mut self, path: &str, contents: String) {
        self.files.insert(path.to_string(), contents);
    }

    fn loop_map(&self) -> Result<&DiscretizedMap> {
        if let Some(f) = self.loop_map.get() {
            return Ok(f);
        }
        let f = self.sc.loop_fn.clone();
        let map = DiscretizedMap::sample(SourceGrid::circle(self.cfg.grid_n)?, move |t| f(t));
        Ok(self.loop_map.get_or_init(|| map))
    }

    fn sigma_n(&self) -> Result<Arc<dyn LocalAddition>> {
        Ok(Arc::new(SprayAddition::new(self.sc.s_n.clone(), self.integ())?))
    }

    fn representation(&self) -> Result<&ChartRepresentation> {
        if let Some(r) = self.representation.get() {
            return Ok(r);
        }
        let rep = ChartRepresentation::new(
            self.sc.geom.p.clone(),
            self.loop_map()?.clone(),
            self.sc.sigma_m.clone(),
            self.sigma_n()?,
            NewtonOptions::default(),
        )?;
        Ok(self.representation.get_or_init(|| rep))
    }

    fn sprays(&self) -> [(&'static str, Arc<dyn Spray>); 3] {
        [("base", self.sc.s_n.clone()), ("horizontal", self.sc.s_h.clone()), ("vertical", self.sc.s_v.clone())]
    }
}

pub static CHECKS: &[CheckDef] = &[
    CheckDef {
        name: "atlas",
        summary: "transition cocycles of M and N; submersion charts have the form (φ∘p, ·)",
        deps: &[],
        entries: &[
            below("atlas_cocycle", "t_jk ∘ t_ij = t_ik on triple overlaps of M and N", 1e-10),
            below("submersion_chart_form", "first block of ψ equals φ ∘ p", 1e-10),
        ],
        run: check_atlas,
    },
    CheckDef {
        name: "integrator_order",
        summary: "fixed-step RK4 convergence order on closed-form references",
        deps: &[],
        entries: &[
            below("rk4_order_exponential", "|order − 4| for x' = x", 0.3),
            below("rk4_order_sphere_geodesic", "|order − 4| for a great circle on S²", 0.3),
        ],
        run: check_integrator_order,
    },
    CheckDef {
        name: "spray_axioms",
        summary: "π∘S = id, Tπ∘S = ρ, S∘h_λ = Th_λ(λS) for every constructed spray",
        deps: &["atlas"],
        entries: &[
            below("spray_axioms_base", "spray axioms for S_N on TN", 1e-9),
            below("spray_axioms_horizontal", "spray axioms for the lift S_H on H", 1e-9),
            below("spray_axioms_vertical", "spray axioms for S_V on V", 1e-9),
            below("spray_axioms_conjugated", "spray axioms for S_V conjugated by a fibre rescaling", 1e-9),
            below("spray_axioms_generic", "spray axioms for a glued quadratic spray on TM", 1e-9),
        ],
        run: check_spray_axioms,
    },
    CheckDef {
        name: "flow_homogeneity",
        summary: "π Fl_s(t v) = π Fl_{st}(v)",
        deps: &["spray_axioms"],
        entries: &[
            below("flow_homogeneity_base", "π Fl_s(t v) = π Fl_{st}(v) for S_N", 1e-8),
            below("flow_homogeneity_horizontal", "π Fl_s(t v) = π Fl_{st}(v) for S_H", 1e-8),
            below("flow_homogeneity_vertical", "π Fl_s(t v) = π Fl_{st}(v) for S_V", 1e-8),
        ],
        run: check_flow_homogeneity,
    },
    CheckDef {
        name: "anchored_path",
        summary: "integral curves of sprays are anchored paths; d/dt exp(tξ) at 0 is ρ(ξ)",
        deps: &["spray_axioms"],
        entries: &[
            below("anchored_path", "ρ(c(t)) = (π∘c)'(t) along integral curves of S_N, S_H, S_V", 1e-6),
            below("fibre_derivative", "d/dt|₀ exp(tξ) = ρ(ξ) for S_N, S_H, S_V", 1e-5),
        ],
        run: check_anchored_path,
    },
    CheckDef {
        name: "transport",
        summary: "parallel transport is linear and invertible; sphere holonomy is 2π cos θ",
        deps: &["atlas"],
        entries: &[
            below("connection_bilinearity", "B(x)(X, ξ) is bilinear", 1e-12),
            below("transport_linearity", "P(a v + b w) = a P v + b P w along the scenario loop", 1e-8),
            below("transport_inverse", "P_{t,s} P_{s,t} v = v along the scenario loop", 1e-8),
            below("sphere_holonomy", "latitude holonomy of the round S² equals rotation by 2π cos θ", 1e-6),
        ],
        run: check_transport,
    },
    CheckDef {
        name: "ehresmann",
        summary: "σ_H is a section of Tp, V = ker Tp, TM = V ⊕ H",
        deps: &["atlas"],
        entries: &[
            below("ehresmann_section", "Tp ∘ σ_H = id", 1e-9),
            above("vh_spanning", "min singular value of [V | σ_H] (TM = V ⊕ H)", 1e-6),
            below("vertical_kernel", "Tp(V) = 0", 1e-9),
            below("splitting", "proj_V + proj_H = id and Tp ∘ proj_V = 0", 1e-9),
        ],
        run: check_ehresmann,
    },
    CheckDef {
        name: "lifted_spray",
        summary: "S_H is Tp-related to S_N and its exponential covers exp_{S_N}",
        deps: &["ehresmann", "spray_axioms"],
        entries: &[
            below("lift_relatedness", "T(Tp|_H) ∘ S_H = S_N ∘ Tp|_H", 1e-8),
            below("lift_intertwining", "p ∘ exp_{S_H} = exp_{S_N} ∘ Tp|_H", 1e-7),
        ],
        run: check_lifted_spray,
    },
    CheckDef {
        name: "vertical_spray",
        summary: "S_V preserves the fibres of p and gives a local addition on p",
        deps: &["ehresmann", "spray_axioms"],
        entries: &[
            below("fibre_preservation", "p ∘ π is constant along integral curves of S_V", 1e-7),
            below("local_addition_on_p", "(π, exp_{S_V}) maps 0 to the diagonal and V into M ×_p M", 1e-7),
        ],
        run: check_vertical_spray,
    },
    CheckDef {
        name: "diagram",
        summary: "p ∘ Σ_M = Σ_N ∘ (0 ⊕ Tp|_H) and the fibre derivative of Σ_M at 0 is the identity",
        deps: &["lifted_spray", "vertical_spray", "transport"],
        entries: &[
            below("diagram", "p(Σ_M(v ⊕ h)) = Σ_N(Tp h)", 1e-6),
            below("sigma_m_derivative", "d/dt|₀ Σ_M(t w) = w", 1e-4),
        ],
        run: check_diagram,
    },
    CheckDef {
        name: "injectivity",
        summary: "(π, Σ_M) is injective with invertible fibre Jacobian near the zero section; Ω_M radii",
        deps: &["diagram"],
        entries: &[
            below("sigma_m_orientation", "fold or undefined samples of Σ_M in the fibre ball of radius 0.3", 0.5),
            above("sigma_m_min_singular_value", "min singular value of the fibre Jacobian of Σ_M", 1e-6),
            above("sigma_m_collision_ratio", "min dist(Σ_M v, Σ_M w) / |v − w| over sampled pairs", 1e-2),
            above("omega_radius", "probed fibre radius of Ω_M at the base point (min over H and V)", 0.0),
        ],
        run: check_injectivity,
    },
    CheckDef {
        name: "chart_roundtrip",
        summary: "canonical charts of the loop space invert their inverses",
        deps: &["diagram"],
        entries: &[
            below("chart_roundtrip_m", "φ_f⁻¹ ∘ φ_f = id and φ_f ∘ φ_f⁻¹ = id with Σ_M", 1e-8),
            below("chart_roundtrip_n", "φ_{p∘f}⁻¹ ∘ φ_{p∘f} = id and back with Σ_N", 1e-8),
        ],
        run: check_chart_roundtrip,
    },
    CheckDef {
        name: "pushforward",
        summary: "in the charts from Σ_M and Σ_N, p_* is the linear map (π_M, dp)_* with right inverse I_f",
        deps: &["chart_roundtrip"],
        entries: &[
            below("split_reconstruction", "τ_V + τ_H = τ for sections along the loop", 1e-9),
            below("pushforward_chart", "φ⁻¹_{p∘f} ∘ p_* ∘ φ_f = (π_M, dp)_* node-wise", 1e-5),
            below("pushforward_linearity", "the chart representation of p_* is linear", 1e-5),
            below("pushforward_right_inverse", "φ⁻¹_{p∘f} ∘ p_* ∘ φ_f ∘ (I_f)_* = id", 1e-5),
        ],
        run: check_pushforward,
    },
    CheckDef {
        name: "mismatched_sigma",
        summary: "negative control: with a generic spray exponential on TM the chart representation is nonlinear",
        deps: &["chart_roundtrip"],
        entries: &[EntryDef {
            name: "pushforward_linearity",
            anchor: "linearity of p_* in charts built from a generic spray exponential (must fail)",
            tolerance: 1e-2,
            bound: Bound::Below,
            expected_fail: true,
        }],
        run: check_mismatched,
    },
];

pub fn check(name: &str) -> Result<&'static CheckDef> {
    CHECKS.iter().find(|c| c.name == name).ok_or_else(|| Error::UnknownCheck(name.to_string()))
}

/// Requested checks plus their dependencies, in registry order.
pub fn resolve(requested: &[String]) -> Result<Vec<&'static CheckDef>> {
    let mut want: BTreeSet<&'static str> = BTreeSet::new();
    let mut stack: Vec<&'static CheckDef> = Vec::new();
    for r in requested {
        if r == "all" {
            stack.extend(CHECKS.iter());
        } else {
            stack.push(check(r)?);
        }
    }
    while let Some(c) = stack.pop() {
        if want.insert(c.name) {
            for d in c.deps {
                stack.push(check(d)?);
            }
        }
    }
    Ok(CHECKS.iter().filter(|c| want.contains(c.name)).collect())
}

fn validate(cfg: &RunConfig) -> Result<()> {
    if !SCENARIOS.contains(&cfg.scenario.as_str()) {
        return Err(Error::UnknownScenario(cfg.scenario.clone()));
    }
    if cfg.checks.is_empty() {
        return Err(Error::ConfigParse("no checks requested".into()));
    }
    for key in cfg.tolerances.keys() {
        if !CHECKS.iter().flat_map(|c| c.entries).any(|e| e.name == key) {
            return Err(Error::ConfigParse(format!("unknown tolerance key `{key}`")));
        }
    }
    SourceGrid::circle(cfg.grid_n)?;
    cfg.integrator.validate()
}

pub struct RunOutput {
    pub report: RunReport,
    /// Plot data and traces by relative path.
    pub files: BTreeMap<String, String>,
}

impl RunOutput {
    pub fn report_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.report)? + "\n")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report_json()?)?;
        for (rel, text) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text)?;
        }
        Ok(())
    }
}

/// Runs the configured checks. Failures of individual checks become
/// failing entries; only configuration problems are returned as errors.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    validate(cfg)?;
    let order = resolve(&cfg.checks)?;
    let sc = scenarios::build(&cfg.scenario, &cfg.integrator)?;
    let mut ctx = Ctx {
        sc,
        cfg: cfg.clone(),
        check: &CHECKS[0],
        rng: sample::rng(cfg.seed),
        entries: Vec::new(),
        files: BTreeMap::new(),
        loop_map: OnceCell::new(),
        representation: OnceCell::new(),
    };
    for def in &order {
        // each check draws from its own stream, so results do not depend
        // on which other checks ran
        let idx = CHECKS.iter().position(|c| c.name == def.name).expect("registered") as u64;
        ctx.check = def;
        ctx.rng = sample::rng(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(idx));
        let before = ctx.entries.len();
        if let Err(e) = (def.run)(&mut ctx) {
            let done: BTreeSet<String> = ctx.entries[before..].iter().map(|e| e.check.clone()).collect();
            for es in def.entries.iter().filter(|es| !done.contains(es.name)) {
                let mut entry = Entry::failed(def.name, es.name, es.anchor, &e);
                entry.expected_fail = es.expected_fail;
                ctx.entries.push(entry);
            }
        }
    }
    if cfg.emit_traces {
        // a failure here only loses the trace files
        let _ = emit_traces(&mut ctx);
    }
    let header = Header {
        tool: "srlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: ctx.sc.manifest.clone(),
        config: cfg.clone(),
        checks_run: order.iter().map(|c| c.name.to_string()).collect(),
    };
    Ok(RunOutput { report: Report::new(header, ctx.entries), files: ctx.files })
}

fn fibre_basis(k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn check_atlas(ctx: &mut Ctx) -> Result<()> {
    let g = ctx.sc.geom.clone();
    let pts = ctx.sc.base_points(&mut ctx.rng, 50);
    let ys = pts.iter().map(|m| g.p.apply(m)).collect::<Result<Vec<_>>>()?;
    let worst = g.m().cocycle_residual(&pts).max(g.n().cocycle_residual(&ys));
    ctx.record("atlas_cocycle", Measurement { n_samples: pts.len() + ys.len(), max_residual: worst });
    ctx.record("submersion_chart_form", g.chart_residual(&pts));
    Ok(())
}

/// Order of RK4 on `x' = x` from 1 to time 1.
pub fn exponential_order() -> Result<OrderEstimate> {
    let f = FnField { manifold: Arc::new(euclidean(1)), f: |_: ChartId, z: &[f64]| vec![z[0]] };
    let exact = Point::new(0, vec![1f64.exp()]);
    convergence_order(&f, &Point::new(0, vec![1.0]), 1.0, &[0.1, 0.05, 0.025, 0.0125], Some(&exact))
}

/// Order of RK4 on the round-sphere geodesic spray, against the great
/// circle `cos(Lt) q + sin(Lt) u/L` in `ℝ³` read back in chart 0.
pub fn sphere_geodesic_order() -> Result<OrderEstimate> {
    let tb = Arc::new(AnchoredBundle::tangent(Arc::new(stereographic_pair(2, 3.0))));
    let spray = round_sphere_spray(tb.clone(), 2.5)?;
    let (x, v) = ([0.3, -0.2], [0.4, 0.5]);
    let arg: Vec<D1> = x.iter().zip(&v).map(|(&a, &b)| Dual::new(a, b)).collect();
    let e = sphere_embed(0, &arg);
    let len = e.iter().map(|d| d.eps * d.eps).sum::<f64>().sqrt();
    let t = 1.0;
    let (c, s) = ((len * t).cos(), (len * t).sin());
    let moved: Vec<D1> = e.iter().map(|d| Dual::new(c * d.re + s * d.eps / len, -len * s * d.re + c * d.eps)).collect();
    let chart = sphere_chart(0, &moved);
    let exact: Vec<f64> = chart.iter().map(|d| d.re).chain(chart.iter().map(|d| d.eps)).collect();
    convergence_order(&SprayField(&spray), &tb.point(0, &x, &v), t, &[0.2, 0.1, 0.05, 0.025], Some(&Point::new(0, exact)))
}

fn check_integrator_order(ctx: &mut Ctx) -> Result<()> {
    let mut csv = String::from("reference,h,error\n");
    for (name, est) in [("rk4_order_exponential", exponential_order()?), ("rk4_order_sphere_geodesic", sphere_geodesic_order()?)] {
        for (h, e) in est.steps.iter().zip(&est.errors) {
            let _ = writeln!(csv, "{},{h:e},{e:e}", name.trim_start_matches("rk4_order_"));
        }
        ctx.record(name, Measurement { n_samples: est.steps.len(), max_residual: (est.order - 4.0).abs() });
    }
    ctx.file("plot/convergence.csv", csv);
    Ok(())
}

fn check_spray_axioms(ctx: &mut Ctx) -> Result<()> {
    let conj: Arc<dyn Spray> = Arc::new(rescaled_conjugate(ctx.sc.s_v.clone(), 0.3)?);
    let generic = ctx.sc.mismatched_addition(&ctx.integ())?.spray;
    let mut list: Vec<(String, Arc<dyn Spray>)> = vec![
        ("base".into(), ctx.sc.s_n.clone()),
        ("horizontal".into(), ctx.sc.s_h.clone()),
        ("vertical".into(), ctx.sc.s_v.clone()),
    ];
    list.push(("conjugated".into(), conj));
    list.push(("generic".into(), generic));
    for (label, s) in list {
        let pts = sample_fibre_points(s.bundle(), &mut ctx.rng, 200, 1.0, 0.05);
        let res = axiom_residuals(&*s, &pts)?;
        let m = Measurement { n_samples: res.n_samples(), max_residual: res.max() };
        ctx.record(&format!("spray_axioms_{label}"), m);
    }
    Ok(())
}

fn check_flow_homogeneity(ctx: &mut Ctx) -> Result<()> {
    let integ = ctx.integ();
    for (label, s) in ctx.sprays() {
        let rng = &mut ctx.rng;
        let pts = sample_fibre_points(s.bundle(), rng, 100, 0.5, 0.3);
        let samples: Vec<(f64, f64, Point)> =
            pts.into_iter().map(|v| (sample::uniform(rng, 0.0, 1.0), sample::uniform(rng, 0.0, 1.5), v)).collect();
        let m = flow_homogeneity_check(&*s, &samples, &integ)?;
        let name = format!("flow_homogeneity_{label}");
        ctx.record(&name, m);
    }
    Ok(())
}

fn check_anchored_path(ctx: &mut Ctx) -> Result<()> {
    let integ = ctx.integ();
    let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.005).collect();
    let (mut path, mut deriv) = (Measurement::default(), Measurement::default());
    let bases = ctx.sc.base_points(&mut ctx.rng, 3);
    for (_, s) in ctx.sprays() {
        let b = s.bundle();
        for v in sample_fibre_points(b, &mut ctx.rng, 3, 0.5, 0.3) {
            let (pts, _) = integral_curve(&SprayField(&*s), &v, &times, &integ)?;
            let curve: Vec<(f64, Point)> = times.iter().copied().zip(pts).collect();
            path.merge(anchored_path_defect(b, &curve)?);
        }
        for m in &bases {
            let m = if b.base.dim() == ctx.sc.geom.m().dim() { m.clone() } else { ctx.sc.geom.p.apply(m)? };
            deriv.merge(fibre_derivative_check(&*s, &m, &fibre_basis(b.fibre_dim), 1e-4, &integ)?);
        }
    }
    ctx.record("anchored_path", path);
    ctx.record("fibre_derivative", deriv);
    Ok(())
}

fn check_transport(ctx: &mut Ctx) -> Result<()> {
    let integ = ctx.integ();
    let conn = ctx.sc.conn.clone();
    let bilinear = conn.bilinearity(&mut ctx.rng, 100);
    ctx.record("connection_bilinearity", bilinear);
    let curve = ctx.sc.loop_curve();
    let k = conn.bundle.fibre_dim;
    let (mut inv, mut lin) = (Vec::new(), Vec::new());
    let tau = 2.0 * std::f64::consts::PI;
    for _ in 0..20 {
        let s = sample::uniform(&mut ctx.rng, 0.0, tau);
        let t = sample::uniform(&mut ctx.rng, 0.0, tau);
        let x = curve.at(s)?.base;
        let (c, xc) = conn.bundle.chart_at(&x)?;
        let v = conn.bundle.point(c, &xc, &sample::ball(&mut ctx.rng, k, 1.0));
        inv.push((s, t, v.clone()));
        let w = sample::ball(&mut ctx.rng, k, 1.0);
        lin.push((s, t, v, w, sample::uniform(&mut ctx.rng, -2.0, 2.0), sample::uniform(&mut ctx.rng, -2.0, 2.0)));
    }
    let m = transport_linearity_check(&conn, &curve, &lin, &integ)?;
    ctx.record("transport_linearity", m);
    let m = transport_inverse_check(&conn, &curve, &inv, &integ)?;
    ctx.record("transport_inverse", m);
    let sphere = round_sphere_connection(Arc::new(AnchoredBundle::tangent(Arc::new(stereographic_pair(2, 3.0)))))?;
    let mut hol = Measurement::default();
    for r in [0.5, 0.8, 1.3, 2.0] {
        let (angle, expected) = latitude_holonomy(&sphere, r, &integ)?;
        hol.record(angle_gap(angle, expected).abs());
    }
    ctx.record("sphere_holonomy", hol);
    Ok(())
}

fn check_ehresmann(ctx: &mut Ctx) -> Result<()> {
    let g = ctx.sc.geom.clone();
    let pts = ctx.sc.base_points(&mut ctx.rng, 100);
    let samples = pts
        .iter()
        .map(|m| Ok((m.clone(), TangentVec::new(g.p.apply(m)?, sample::ball(&mut ctx.rng, g.n().dim(), 2.0)))))
        .collect::<Result<Vec<_>>>()?;
    ctx.record("ehresmann_section", g.section_check(&samples)?);
    let sv = g.spanning_check(&pts)?;
    ctx.record("vh_spanning", Measurement { n_samples: pts.len(), max_residual: sv });
    ctx.record("vertical_kernel", g.vertical_check(&pts)?);
    let vs: Vec<TangentVec> =
        pts.iter().map(|m| TangentVec::new(m.clone(), sample::ball(&mut ctx.rng, g.m().dim(), 2.0))).collect();
    ctx.record("splitting", g.splitting_check(&vs)?);
    Ok(())
}

fn check_lifted_spray(ctx: &mut Ctx) -> Result<()> {
    let hs: Vec<Point> = ctx.sc.split_samples(&mut ctx.rng, 100, 0.6)?.into_iter().map(|(_, h)| h).collect();
    let rel = relatedness_check(&ctx.sc.s_h, &hs)?;
    ctx.record("lift_relatedness", rel);
    let int = intertwining_check(&ctx.sc.s_h, &hs, &ctx.integ())?;
    ctx.record("lift_intertwining", int);
    Ok(())
}

fn check_vertical_spray(ctx: &mut Ctx) -> Result<()> {
    let vs: Vec<Point> = ctx.sc.split_samples(&mut ctx.rng, 30, 1.0)?.into_iter().map(|(v, _)| v).collect();
    let fp = fibre_preservation_check(&ctx.sc.geom, &*ctx.sc.s_v, &vs, &ctx.integ())?;
    ctx.record("fibre_preservation", fp);
    let psi = local_addition_on_p_check(&ctx.sc.geom, &*ctx.sc.s_v, &vs, &ctx.integ())?;
    ctx.record("local_addition_on_p", psi);
    Ok(())
}

fn check_diagram(ctx: &mut Ctx) -> Result<()> {
    let samples = ctx.sc.split_samples(&mut ctx.rng, 200, 0.3)?;
    let g = ctx.sc.geom.clone();
    let mut total = Measurement::default();
    let mut csv = String::from("sample,v_norm,h_norm,residual\n");
    let md = g.m().dim();
    for (i, s) in samples.iter().enumerate() {
        let m = diagram_commutativity_check(&ctx.sc.sigma_m, std::slice::from_ref(s))?;
        let vn = crate::dual::norm(&s.0.coords[md..]);
        let hn = crate::dual::norm(&s.1.coords[md..]);
        let _ = writeln!(csv, "{i},{vn:e},{hn:e},{:e}", m.max_residual);
        total.merge(m);
    }
    ctx.record("diagram", total);
    ctx.file("plot/diagram_residuals.csv", csv);
    let mut deriv = Measurement::default();
    let mut bases = vec![ctx.sc.base_point.clone()];
    bases.extend(ctx.sc.base_points(&mut ctx.rng, 4));
    for m in &bases {
        deriv.merge(sigma_m_derivative_check(&*ctx.sc.sigma_m, m, &fibre_basis(md), 1e-5)?);
    }
    ctx.record("sigma_m_derivative", deriv);
    Ok(())
}

fn check_injectivity(ctx: &mut Ctx) -> Result<()> {
    let mut bases = vec![ctx.sc.base_point.clone()];
    bases.extend(ctx.sc.base_points(&mut ctx.rng, 2));
    let opts = InjectivityOptions { radius: 0.3, samples_per_point: 24, seed: ctx.rng.next_u64(), ..Default::default() };
    let rep = injectivity_probe(&*ctx.sc.sigma_m, &bases, &opts)?;
    let bad = (rep.orientation_flips + rep.undefined) as f64;
    ctx.record("sigma_m_orientation", Measurement { n_samples: rep.n_jacobians + rep.undefined, max_residual: bad });
    ctx.record("sigma_m_min_singular_value", Measurement { n_samples: rep.n_jacobians, max_residual: rep.min_singular_value });
    ctx.record("sigma_m_collision_ratio", Measurement { n_samples: rep.n_pairs, max_residual: rep.min_ratio });
    let om = ctx.sc.sigma_m.omega(&ctx.sc.base_point, &probe_options())?;
    ctx.record("omega_radius", Measurement { n_samples: 2, max_residual: om.h_radius.min(om.v_radius) });
    Ok(())
}

fn probe_options() -> ProbeOptions {
    ProbeOptions { iterations: 8, ..Default::default() }
}

fn check_chart_roundtrip(ctx: &mut Ctx) -> Result<()> {
    let rep = ctx.representation()?;
    let (f, pf) = (rep.center().clone(), rep.pushed_center().clone());
    let (chart_m, chart_n) = (rep.chart_m.clone(), rep.chart_n.clone());
    let mut rng = ctx.rng.clone();
    for (name, chart, center) in [("chart_roundtrip_m", chart_m, f), ("chart_roundtrip_n", chart_n, pf)] {
        let sections: Vec<_> = (0..3).map(|_| random_section(&mut rng, &center, 3, 0.2)).collect();
        let (mut a, b) = chart_round_trip(&chart, &sections)?;
        a.merge(b);
        ctx.record(name, a);
    }
    Ok(())
}

fn check_pushforward(ctx: &mut Ctx) -> Result<()> {
    let g = ctx.sc.geom.clone();
    let f = ctx.loop_map()?.clone();
    let mut rng = ctx.rng.clone();
    let mut recon = Measurement::default();
    for _ in 0..5 {
        let tau = random_section(&mut rng, &f, 3, 0.2);
        recon.record(join_section(&g, &split_section(&g, &tau)?, &f)?.distance(g.m(), &tau));
    }
    ctx.record("split_reconstruction", recon);
    let r = submersion_chart_check(&g, ctx.representation()?, &PushforwardOptions::default(), &mut rng)?;
    ctx.record("pushforward_chart", r.identity);
    ctx.record("pushforward_linearity", r.linearity);
    ctx.record("pushforward_right_inverse", r.right_inverse);
    Ok(())
}

fn check_mismatched(ctx: &mut Ctx) -> Result<()> {
    let bad: Arc<dyn LocalAddition> = Arc::new(ctx.sc.mismatched_addition(&ctx.integ())?);
    let rep = ChartRepresentation::new(ctx.sc.geom.p.clone(), ctx.loop_map()?.clone(), bad, ctx.sigma_n()?, NewtonOptions::default())?;
    let opts = PushforwardOptions { n_sections: 4, n_linearity: 10, n_right_inverse: 0, ..Default::default() };
    let r = submersion_chart_check(&ctx.sc.geom, &rep, &opts, &mut ctx.rng)?;
    ctx.record("pushforward_linearity", r.linearity);
    Ok(())
}

fn trace_csv(trace: &[(f64, Point)]) -> Result<String> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn emit_traces(ctx: &mut Ctx) -> Result<()> {
    let integ = ctx.integ();
    let mut rng = sample::rng(ctx.cfg.seed);
    let (v, h) = ctx.sc.split_samples(&mut rng, 1, 0.3)?.remove(0);
    let fields: [(&str, &dyn Spray, &Point); 2] = [("horizontal", &*ctx.sc.s_h, &h), ("vertical", &*ctx.sc.s_v, &v)];
    let mut out = Vec::new();
    for (label, s, start) in fields {
        let res = flow_traced(&SprayField(s), start, 1.0, &integ, true)?;
        out.push((format!("traces/{label}_geodesic.csv"), trace_csv(res.trace.as_deref().unwrap_or_default())?));
    }
    let f = ctx.loop_map()?.clone();
    let pf = pushforward(&ctx.sc.geom.p, &f)?;
    for (name, map) in [("traces/loop.csv", &f), ("traces/pushed_loop.csv", &pf)] {
        let mut buf = Vec::new();
        crate::mapping::write_map_csv(map, &mut buf)?;
        out.push((name.to_string(), String::from_utf8(buf).expect("csv is utf-8")));
    }
    for (k, t) in out {
        ctx.file(&k, t);
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeSummary {
    pub scenario: String,
    pub base_chart: ChartId,
    pub base_point: Vec<f64>,
    pub horizontal: ProbeResult,
    pub vertical: ProbeResult,
    pub omega: Omega,
}

/// Domain probes of `S_H` and `S_V` at the scenario base point.
pub fn probe(scenario: &str, integ: &IntegratorConfig) -> Result<ProbeSummary> {
    let sc = scenarios::build(scenario, integ)?;
    let opts = probe_options();
    let horizontal = domain_probe(&*sc.s_h, &sc.base_point, integ, &opts)?;
    let vertical = domain_probe(&*sc.s_v, &sc.base_point, integ, &opts)?;
    let omega = Omega { h_radius: 0.8 * horizontal.radius, v_radius: 0.8 * vertical.radius };
    Ok(ProbeSummary {
        scenario: sc.name.into(),
        base_chart: sc.base_point.chart,
        base_point: sc.base_point.coords.clone(),
        horizontal,
        vertical,
        omega,
    })
}

/// One line per scenario and per check, with the entries of each check.
pub fn listing() -> String {
    let mut s = String::from("scenarios:\n");
    for name in SCENARIOS {
        let _ = writeln!(s, "  {name}");
    }
    s.push_str("checks:\n");
    for c in CHECKS {
        let deps = if c.deps.is_empty() { String::new() } else { format!(" (after {})", c.deps.join(", ")) };
        let _ = writeln!(s, "  {}: {}{deps}", c.name, c.summary);
        for e in c.entries {
            let tol = match e.bound {
                Bound::Below => format!("< {:e}", e.tolerance),
                Bound::Above => format!("> {:e}", e.tolerance),
            };
            let fail = if e.expected_fail { ", expected to fail" } else { "" };
            let _ = writeln!(s, "    {} [{tol}{fail}]: {}", e.name, e.anchor);
        }
    }
    s
}

#[cfg(test)]
mod tests;
