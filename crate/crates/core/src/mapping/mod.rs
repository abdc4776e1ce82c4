//! Maps from a sampled circle or interval into a charted manifold, the
//! canonical charts `τ ↦ Σ ∘ τ` built from a local addition `Σ`, and the
//! pushforward `f ↦ p ∘ f` by a submersion.
//!
//! Everything acts node by node: a map is its values at the grid nodes and
//! a section is one tangent vector per node, so no interpolation enters
//! any residual.

mod io;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::{max_abs_diff, norm};
use crate::error::{Error, Result};
use crate::geometry::{ChartedManifold, Point, SmoothMap, TangentVec};
use crate::report::Measurement;
use crate::sample::{self, Rng};
use crate::submersion::{LocalAddition, SubmersionGeometry};

pub use io::{read_map_csv, read_section_csv, write_map_csv, write_section_csv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// `t_k = 2πk/n`; node `n` would coincide with node 0.
    Circle,
    /// `t_k = k/(n − 1)`.
    Interval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceGrid {
    pub topology: Topology,
    pub nodes: Vec<f64>,
}

impl SourceGrid {
    pub const MIN_NODES: usize = 8;

    pub fn new(topology: Topology, n: usize) -> Result<Self> {
        if n < Self::MIN_NODES {
            return Err(Error::ConfigParse(format!("grid needs at least {} nodes, got {n}", Self::MIN_NODES)));
        }
        let nodes = match topology {
            Topology::Circle => (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect(),
            Topology::Interval => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
        };
        Ok(Self { topology, nodes })
    }

    pub fn circle(n: usize) -> Result<Self> {
        Self::new(Topology::Circle, n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index pairs of adjacent nodes, including the wrap-around on a circle.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut e: Vec<(usize, usize)> = (0..n - 1).map(|k| (k, k + 1)).collect();
        if self.topology == Topology::Circle {
            e.push((n - 1, 0));
        }
        e
    }
}

/// Values of a map at the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedMap {
    pub grid: SourceGrid,
    pub values: Vec<Point>,
}

impl DiscretizedMap {
    pub fn new(grid: SourceGrid, values: Vec<Point>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: SourceGrid, f: impl Fn(f64) -> Point) -> Self {
        let values = grid.nodes.iter().map(|&t| f(t)).collect();
        Self { grid, values }
    }

    /// Nodes whose successor does not lie in the node's chart: the grid is
    /// too coarse for the map there.
    pub fn coarse_edges(&self, m: &ChartedManifold) -> Vec<usize> {
        self.grid
            .edges()
            .into_iter()
            .filter(|&(a, b)| m.transition(&self.values[b], self.values[a].chart).is_err())
            .map(|(a, _)| a)
            .collect()
    }

    /// Largest chart distance between corresponding nodes.
    pub fn distance(&self, m: &ChartedManifold, other: &DiscretizedMap) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| m.distance(a, b)).fold(0.0, f64::max)
    }
}

/// A tangent vector at every node of a map: a section of `f*TM`.
#[derive(Clone, Debug, PartialEq)]
pub struct PullbackSection {
    pub grid: SourceGrid,
    pub vectors: Vec<TangentVec>,
}

impl PullbackSection {
    pub fn new(grid: SourceGrid, vectors: Vec<TangentVec>) -> Result<Self> {
        if vectors.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: vectors.len() });
        }
        Ok(Self { grid, vectors })
    }

    pub fn zero(f: &DiscretizedMap) -> Self {
        let vectors = f.values.iter().map(|x| TangentVec::new(x.clone(), vec![0.0; x.coords.len()])).collect();
        Self { grid: f.grid.clone(), vectors }
    }

    /// Section of `f*TM` with the given components in the charts of `f`.
    pub fn from_components(f: &DiscretizedMap, components: Vec<Vec<f64>>) -> Result<Self> {
        let vectors = f.values.iter().zip(components).map(|(x, c)| TangentVec::new(x.clone(), c)).collect();
        Self::new(f.grid.clone(), vectors)
    }

    pub fn base(&self) -> DiscretizedMap {
        DiscretizedMap { grid: self.grid.clone(), values: self.vectors.iter().map(|v| v.base.clone()).collect() }
    }

    /// Largest component norm over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.vectors.iter().map(|v| norm(&v.components)).fold(0.0, f64::max)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let vectors = self
            .vectors
            .iter()
            .map(|v| TangentVec::new(v.base.clone(), v.components.iter().map(|c| a * c).collect()))
            .collect();
        Self { grid: self.grid.clone(), vectors }
    }

    /// `a·self + b·other`, in the charts of `self`.
    pub fn combine(&self, m: &ChartedManifold, a: f64, other: &PullbackSection, b: f64) -> Result<Self> {
        let vectors = self
            .vectors
            .iter()
            .zip(&other.vectors)
            .enumerate()
            .map(|(k, (u, w))| {
                let w = m.transition_tangent(w, u.chart()).map_err(|e| e.at_node(k))?;
                let c = u.components.iter().zip(&w.components).map(|(p, q)| a * p + b * q).collect();
                Ok(TangentVec::new(u.base.clone(), c))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: self.grid.clone(), vectors })
    }

    /// Largest node-wise component difference, with `other` moved into the
    /// charts of `self`; infinite where that is impossible.
    pub fn distance(&self, m: &ChartedManifold, other: &PullbackSection) -> f64 {
        self.vectors
            .iter()
            .zip(&other.vectors)
            .map(|(u, w)| match m.transition_tangent(w, u.chart()) {
                Ok(w) => max_abs_diff(&u.components, &w.components),
                Err(_) => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

/// A random smooth section over `f`: each component a trigonometric
/// polynomial of degree `modes` in the node parameter, the whole scaled
/// so the largest node norm is `radius`.
pub fn random_section(rng: &mut Rng, f: &DiscretizedMap, modes: usize, radius: f64) -> PullbackSection {
    let dim = f.values[0].coords.len();
    let freq = match f.grid.topology {
        Topology::Circle => 1.0,
        Topology::Interval => PI,
    };
    let coeffs: Vec<Vec<(f64, f64)>> = (0..dim)
        .map(|_| (0..=modes).map(|_| (sample::uniform(rng, -1.0, 1.0), sample::uniform(rng, -1.0, 1.0))).collect())
        .collect();
    let components: Vec<Vec<f64>> = f
        .grid
        .nodes
        .iter()
        .map(|&t| {
            coeffs
                .iter()
                .map(|cs| cs.iter().enumerate().map(|(j, (a, b))| a * (j as f64 * freq * t).cos() + b * (j as f64 * freq * t).sin()).sum())
                .collect()
        })
        .collect();
    let s = PullbackSection::from_components(f, components).expect("one vector per node");
    let sup = s.sup_norm();
    if sup == 0.0 {
        s
    } else {
        s.scaled(radius / sup)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    /// Converged once the max-norm residual in the target chart is below this.
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    /// Iterates with a larger component norm count as outside the domain.
    pub max_norm: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, fd_step: 1e-6, max_norm: 5.0 }
    }
}

/// Solves `Σ(v) = target` for `v ∈ T_{base}M` (components in `base`'s chart)
/// by damped Newton from `v = 0` with a central-difference Jacobian.
/// Returns the solution and its final residual.
pub fn invert_addition(
    add: &dyn LocalAddition,
    base: &Point,
    target: &Point,
    opts: &NewtonOptions,
    node: usize,
) -> Result<(Vec<f64>, f64)> {
    let mfd = add.manifold();
    let n = base.coords.len();
    let resid = |v: &[f64]| -> Result<Vec<f64>> {
        let out = add.apply(&TangentVec::new(base.clone(), v.to_vec()))?;
        let out = mfd.transition(&out, target.chart)?;
        Ok(out.coords.iter().zip(&target.coords).map(|(a, b)| a - b).collect())
    };
    let sup = |r: &[f64]| r.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let mut v = vec![0.0; n];
    let mut r = resid(&v).map_err(|_| Error::OutsideImage { node })?;
    let mut res = sup(&r);
    for _ in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok((v, res));
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let (mut p, mut q) = (v.clone(), v.clone());
            p[j] += opts.fd_step;
            q[j] -= opts.fd_step;
            let (rp, rq) = match (resid(&p), resid(&q)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return Err(Error::OutsideImage { node }),
            };
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rq[i]) / (2.0 * opts.fd_step);
            }
        }
        let Some(step) = jac.lu().solve(&DVector::from_iterator(n, r.iter().map(|a| -a))) else {
            return Err(Error::NewtonDiverged { node, residual: res });
        };
        let mut lambda = 1.0;
        let mut evaluable = false;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            if norm(&trial) <= opts.max_norm {
                if let Ok(rt) = resid(&trial) {
                    evaluable = true;
                    let rs = sup(&rt);
                    if rs < res {
                        (v, r, res) = (trial, rt, rs);
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !evaluable {
            return Err(Error::OutsideImage { node });
        }
        if !accepted {
            break;
        }
    }
    if res <= opts.tol {
        Ok((v, res))
    } else {
        Err(Error::NewtonDiverged { node, residual: res })
    }
}

/// The chart `τ ↦ Σ ∘ τ` of the mapping space centred at `f`.
#[derive(Clone)]
pub struct CanonicalChart {
    pub center: DiscretizedMap,
    pub addition: Arc<dyn LocalAddition>,
    pub newton: NewtonOptions,
}

impl CanonicalChart {
    pub fn new(center: DiscretizedMap, addition: Arc<dyn LocalAddition>, newton: NewtonOptions) -> Self {
        Self { center, addition, newton }
    }

    fn check_base(&self, s: &PullbackSection) -> Result<()> {
        if s.vectors.len() != self.center.values.len() {
            return Err(Error::DimensionMismatch { expected: self.center.values.len(), got: s.vectors.len() });
        }
        let m = self.addition.manifold();
        for (k, (v, f)) in s.vectors.iter().zip(&self.center.values).enumerate() {
            if m.distance(&v.base, f) > 1e-9 {
                return Err(Error::BaseMismatch { node: k });
            }
        }
        Ok(())
    }

    /// `g(t_k) = Σ(τ(t_k))`.
    pub fn forward(&self, tau: &PullbackSection) -> Result<DiscretizedMap> {
        self.check_base(tau)?;
        let values = tau
            .vectors
            .iter()
            .enumerate()
            .map(|(k, v)| self.addition.apply(v).map_err(|e| e.at_node(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscretizedMap { grid: tau.grid.clone(), values })
    }

    /// The section `τ` over the centre with `Σ ∘ τ = g`, node by node.
    pub fn inverse(&self, g: &DiscretizedMap) -> Result<PullbackSection> {
        if g.values.len() != self.center.values.len() {
            return Err(Error::DimensionMismatch { expected: self.center.values.len(), got: g.values.len() });
        }
        let vectors = self
            .center
            .values
            .iter()
            .zip(&g.values)
            .enumerate()
            .map(|(k, (f, gk))| {
                let (v, _) = invert_addition(&*self.addition, f, gk, &self.newton, k)?;
                Ok(TangentVec::new(f.clone(), v))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PullbackSection { grid: g.grid.clone(), vectors })
    }
}

/// `p ∘ f`, node by node.
pub fn pushforward(p: &SmoothMap, f: &DiscretizedMap) -> Result<DiscretizedMap> {
    let values =
        f.values.iter().enumerate().map(|(k, x)| p.apply(x).map_err(|e| e.at_node(k))).collect::<Result<Vec<_>>>()?;
    Ok(DiscretizedMap { grid: f.grid.clone(), values })
}

/// `Tp ∘ τ`, expressed in the charts of `along` (a discretization of `p ∘ f`).
pub fn differential_along(p: &SmoothMap, tau: &PullbackSection, along: &DiscretizedMap) -> Result<PullbackSection> {
    let vectors = tau
        .vectors
        .iter()
        .zip(&along.values)
        .enumerate()
        .map(|(k, (v, y))| p.differential_in(v, y.chart).map_err(|e| e.at_node(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PullbackSection { grid: tau.grid.clone(), vectors })
}

/// A section split into its vertical and horizontal parts, as points of
/// `V` and `H` at each node.
#[derive(Clone, Debug)]
pub struct SplitSection {
    pub grid: SourceGrid,
    pub vertical: Vec<Point>,
    pub horizontal: Vec<Point>,
}

pub fn split_section(geom: &SubmersionGeometry, tau: &PullbackSection) -> Result<SplitSection> {
    let (mut vertical, mut horizontal) = (Vec::new(), Vec::new());
    for (k, v) in tau.vectors.iter().enumerate() {
        let (pv, ph) = geom.split(v).map_err(|e| e.at_node(k))?;
        vertical.push(pv);
        horizontal.push(ph);
    }
    Ok(SplitSection { grid: tau.grid.clone(), vertical, horizontal })
}

/// `τ_V + τ_H` as a section over `f`, in the charts of `f`.
pub fn join_section(geom: &SubmersionGeometry, split: &SplitSection, f: &DiscretizedMap) -> Result<PullbackSection> {
    let m = geom.m();
    let vectors = split
        .vertical
        .iter()
        .zip(&split.horizontal)
        .zip(&f.values)
        .enumerate()
        .map(|(k, ((pv, ph), x))| {
            let at = |t: TangentVec| m.transition_tangent(&t, x.chart).map_err(|e| e.at_node(k));
            let av = at(geom.vertical.anchor(pv))?;
            let ah = at(geom.horizontal.anchor(ph))?;
            Ok(TangentVec::new(av.base, av.components.iter().zip(&ah.components).map(|(a, b)| a + b).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PullbackSection { grid: split.grid.clone(), vectors })
}

/// The right inverse `I_f`: `η ↦ σ_H(f(t_k), η_k)` node by node, in the
/// charts of `f`.
pub fn right_inverse(geom: &SubmersionGeometry, f: &DiscretizedMap, eta: &PullbackSection) -> Result<PullbackSection> {
    let vectors = f
        .values
        .iter()
        .zip(&eta.vectors)
        .enumerate()
        .map(|(k, (x, w))| {
            let h = geom.sigma_h(x, w).map_err(|e| e.at_node(k))?;
            geom.m().transition_tangent(&h, x.chart).map_err(|e| e.at_node(k))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PullbackSection { grid: f.grid.clone(), vectors })
}

/// `p_*` read in the charts centred at `f` (local addition on `M`) and at
/// `p ∘ f` (local addition on `N`).
pub struct ChartRepresentation {
    pub p: Arc<SmoothMap>,
    pub chart_m: CanonicalChart,
    pub chart_n: CanonicalChart,
}

impl ChartRepresentation {
    pub fn new(
        p: Arc<SmoothMap>,
        f: DiscretizedMap,
        sigma_m: Arc<dyn LocalAddition>,
        sigma_n: Arc<dyn LocalAddition>,
        newton: NewtonOptions,
    ) -> Result<Self> {
        let pf = pushforward(&p, &f)?;
        Ok(Self { p, chart_m: CanonicalChart::new(f, sigma_m, newton), chart_n: CanonicalChart::new(pf, sigma_n, newton) })
    }

    pub fn center(&self) -> &DiscretizedMap {
        &self.chart_m.center
    }

    pub fn pushed_center(&self) -> &DiscretizedMap {
        &self.chart_n.center
    }

    /// `φ⁻¹_{p∘f} ∘ p_* ∘ φ_f (τ)`.
    pub fn apply(&self, tau: &PullbackSection) -> Result<PullbackSection> {
        self.chart_n.inverse(&pushforward(&self.p, &self.chart_m.forward(tau)?)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushforwardOptions {
    pub n_sections: usize,
    /// Largest node norm of the random sections.
    pub radius: f64,
    pub modes: usize,
    /// Pairs `(τ, τ′)` for the linearity test; coefficients lie in
    /// `[−1/2, 1/2]` so combinations stay within `radius`.
    pub n_linearity: usize,
    pub n_right_inverse: usize,
    pub newton: NewtonOptions,
}

impl Default for PushforwardOptions {
    fn default() -> Self {
        Self { n_sections: 20, radius: 0.2, modes: 3, n_linearity: 10, n_right_inverse: 10, newton: NewtonOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PushforwardReport {
    /// Chart representation against node-wise `Tp`.
    pub identity: Measurement,
    /// `L(aτ + bτ′)` against `a L(τ) + b L(τ′)`.
    pub linearity: Measurement,
    /// `L(I_f η)` against `η`.
    pub right_inverse: Measurement,
}

/// Node-wise comparison of the chart representation of `p_*` with `Tp`,
/// its linearity, and the right inverse `I_f`. With a local addition on
/// `M` that is not adapted to the submersion only the linearity part is
/// meaningful; `geom` then still supplies `σ_H` for `I_f`.
pub fn submersion_chart_check(
    geom: &SubmersionGeometry,
    rep: &ChartRepresentation,
    opts: &PushforwardOptions,
    rng: &mut Rng,
) -> Result<PushforwardReport> {
    let (m, n) = (geom.m(), geom.n());
    let f = rep.center();
    let pf = rep.pushed_center();
    let mut out = PushforwardReport::default();
    let mut lhs_cache = Vec::new();
    for _ in 0..opts.n_sections {
        let tau = random_section(rng, f, opts.modes, opts.radius);
        let lhs = rep.apply(&tau)?;
        let rhs = differential_along(&rep.p, &tau, pf)?;
        out.identity.record(lhs.distance(n, &rhs));
        lhs_cache.push((tau, lhs));
    }
    for i in 0..opts.n_linearity {
        if lhs_cache.len() < 2 {
            break;
        }
        let (tau, l1) = &lhs_cache[i % lhs_cache.len()];
        let (tau2, l2) = &lhs_cache[(i + 1) % lhs_cache.len()];
        let (a, b) = (sample::uniform(rng, -0.5, 0.5), sample::uniform(rng, -0.5, 0.5));
        let lhs = rep.apply(&tau.combine(m, a, tau2, b)?)?;
        out.linearity.record(lhs.distance(n, &l1.combine(n, a, l2, b)?));
    }
    for _ in 0..opts.n_right_inverse {
        let eta = random_section(rng, pf, opts.modes, opts.radius);
        let lifted = right_inverse(geom, f, &eta)?;
        out.right_inverse.record(rep.apply(&lifted)?.distance(n, &eta));
    }
    Ok(out)
}

/// `φ⁻¹(φ(τ))` against `τ` and `φ(φ⁻¹(g))` against `g` for random sections.
pub fn chart_round_trip(chart: &CanonicalChart, sections: &[PullbackSection]) -> Result<(Measurement, Measurement)> {
    let m = chart.addition.manifold();
    let (mut sec, mut map) = (Measurement::default(), Measurement::default());
    for tau in sections {
        let g = chart.forward(tau)?;
        let back = chart.inverse(&g)?;
        sec.record(tau.distance(m, &back));
        map.record(g.distance(m, &chart.forward(&back)?));
    }
    Ok((sec, map))
}

#[cfg(test)]
mod tests;
