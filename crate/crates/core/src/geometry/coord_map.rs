use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dual::{jacobian_at, mat_vec, Dual, Level, Scalar, D1, D2, D3, D4};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    ClosedForm,
    DualNumber,
    FiniteDifference { h: f64 },
}

/// A smooth map between coordinate spaces `ℝ^m → ℝ^n` with jet access.
///
/// The `eval_d*` entry points evaluate at nested dual levels; `jet1`/`jet2`
/// default to reading derivatives off them.
pub trait CoordMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    fn eval_d1(&self, x: &[D1]) -> Vec<D1>;
    fn eval_d2(&self, x: &[D2]) -> Vec<D2>;
    fn eval_d3(&self, x: &[D3]) -> Vec<D3>;
    fn eval_d4(&self, x: &[D4]) -> Vec<D4>;

    fn mode(&self) -> DerivativeMode {
        DerivativeMode::DualNumber
    }

    /// Directional derivative `df(x; v)`.
    fn jet1(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let arg: Vec<D1> = x.iter().zip(v).map(|(&a, &b)| D1::new(a, b)).collect();
        self.eval_d1(&arg).into_iter().map(|d| d.eps).collect()
    }

    /// Second directional derivative `d²f(x; v, w)`.
    fn jet2(&self, x: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let arg: Vec<D2> = (0..x.len())
            .map(|i| Dual::new(D1::new(x[i], v[i]), D1::new(w[i], 0.0)))
            .collect();
        self.eval_d2(&arg).into_iter().map(|d| d.eps.eps).collect()
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim_in();
        let mut jac = DMatrix::zeros(self.dim_out(), n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.jet1(x, &e);
            for (i, c) in col.into_iter().enumerate() {
                jac[(i, j)] = c;
            }
            e[j] = 0.0;
        }
        jac
    }
}

/// A map written once against [`Level`]; wrapping it in [`Smooth`] gives a
/// [`CoordMap`] whose jets are exact dual-number derivatives.
pub trait SmoothFn: Send + Sync + 'static {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn call<S: Level>(&self, x: &[S]) -> Vec<S>;
}

pub struct Smooth<F>(pub F);

impl<F: SmoothFn> CoordMap for Smooth<F> {
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.0.call(x)
    }
    fn eval_d1(&self, x: &[D1]) -> Vec<D1> {
        self.0.call(x)
    }
    fn eval_d2(&self, x: &[D2]) -> Vec<D2> {
        self.0.call(x)
    }
    fn eval_d3(&self, x: &[D3]) -> Vec<D3> {
        self.0.call(x)
    }
    fn eval_d4(&self, x: &[D4]) -> Vec<D4> {
        self.0.call(x)
    }
}

pub fn smooth<F: SmoothFn>(f: F) -> Arc<dyn CoordMap> {
    Arc::new(Smooth(f))
}

pub struct Identity(pub usize);

impl SmoothFn for Identity {
    fn dim_in(&self) -> usize {
        self.0
    }
    fn dim_out(&self) -> usize {
        self.0
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        x.to_vec()
    }
}

/// Selects `len` consecutive coordinates starting at `start`.
pub struct Select {
    pub dim_in: usize,
    pub start: usize,
    pub len: usize,
}

impl SmoothFn for Select {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.len
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        x[self.start..self.start + self.len].to_vec()
    }
}

/// Constant map; used for anchors and frames that do not vary.
pub struct Constant {
    pub dim_in: usize,
    pub value: Vec<f64>,
}

impl SmoothFn for Constant {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.value.len()
    }
    fn call<S: Level>(&self, _: &[S]) -> Vec<S> {
        self.value.iter().map(|&v| S::cst(v)).collect()
    }
}

/// `outer ∘ inner`.
pub struct Compose {
    pub inner: Arc<dyn CoordMap>,
    pub outer: Arc<dyn CoordMap>,
}

impl SmoothFn for Compose {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.outer.dim_out()
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        let y = S::eval_map(&*self.inner, x);
        S::eval_map(&*self.outer, &y)
    }
}

pub fn compose(inner: Arc<dyn CoordMap>, outer: Arc<dyn CoordMap>) -> Arc<dyn CoordMap> {
    smooth(Compose { inner, outer })
}

/// Tangent lift `(x, v) ↦ (f(x), Df(x)·v)`.
pub struct TangentLift(pub Arc<dyn CoordMap>);

impl SmoothFn for TangentLift {
    fn dim_in(&self) -> usize {
        2 * self.0.dim_in()
    }
    fn dim_out(&self) -> usize {
        2 * self.0.dim_out()
    }
    fn call<S: Level>(&self, z: &[S]) -> Vec<S> {
        let n = self.0.dim_in();
        let (y, dy) = S::eval_map_tangent(&*self.0, &z[..n], &z[n..]);
        let mut out = y;
        out.extend(dy);
        out
    }
}

/// `x ↦ Df(x)` flattened row-major.
pub struct JacobianField(pub Arc<dyn CoordMap>);

impl SmoothFn for JacobianField {
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.0.dim_in() * self.0.dim_out()
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        jacobian_at(&*self.0, x)
    }
}

/// Vector-bundle chart change `(x, ξ) ↦ (t(x), g(x)·ξ)` with `g` given as a
/// flattened `k × k` matrix field over the base chart.
pub struct BundleTransition {
    pub base: Arc<dyn CoordMap>,
    pub fibre: Arc<dyn CoordMap>,
    pub fibre_dim: usize,
}

impl SmoothFn for BundleTransition {
    fn dim_in(&self) -> usize {
        self.base.dim_in() + self.fibre_dim
    }
    fn dim_out(&self) -> usize {
        self.base.dim_out() + self.fibre_dim
    }
    fn call<S: Level>(&self, z: &[S]) -> Vec<S> {
        let n = self.base.dim_in();
        let k = self.fibre_dim;
        let mut out = S::eval_map(&*self.base, &z[..n]);
        let g = S::eval_map(&*self.fibre, &z[..n]);
        out.extend(mat_vec(&g, k, k, &z[n..]));
        out
    }
}

/// `(z, t) ↦ (inner(z), t)`: carries extra passive coordinates (a time
/// variable, say) through a transition map.
pub struct AppendIdentity {
    pub inner: Arc<dyn CoordMap>,
    pub extra: usize,
}

impl SmoothFn for AppendIdentity {
    fn dim_in(&self) -> usize {
        self.inner.dim_in() + self.extra
    }
    fn dim_out(&self) -> usize {
        self.inner.dim_out() + self.extra
    }
    fn call<S: Level>(&self, z: &[S]) -> Vec<S> {
        let n = self.inner.dim_in();
        let mut out = S::eval_map(&*self.inner, &z[..n]);
        out.extend_from_slice(&z[n..]);
        out
    }
}

/// Finite-difference cross-check wrapper: evaluation (and dual levels) are
/// delegated, jets are replaced by central differences with step
/// `h_rel · (1 + |x|_∞)`.
pub struct FiniteDifference {
    pub inner: Arc<dyn CoordMap>,
    pub h_rel: f64,
}

impl FiniteDifference {
    pub fn new(inner: Arc<dyn CoordMap>) -> Self {
        Self { inner, h_rel: 1e-5 }
    }

    fn step(&self, x: &[f64]) -> f64 {
        self.h_rel * (1.0 + x.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect()
}

impl CoordMap for FiniteDifference {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.inner.eval(x)
    }
    fn eval_d1(&self, x: &[D1]) -> Vec<D1> {
        self.inner.eval_d1(x)
    }
    fn eval_d2(&self, x: &[D2]) -> Vec<D2> {
        self.inner.eval_d2(x)
    }
    fn eval_d3(&self, x: &[D3]) -> Vec<D3> {
        self.inner.eval_d3(x)
    }
    fn eval_d4(&self, x: &[D4]) -> Vec<D4> {
        self.inner.eval_d4(x)
    }
    fn mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDifference { h: self.h_rel }
    }
    fn jet1(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let h = self.step(x);
        let p = self.inner.eval(&axpy(x, h, v));
        let m = self.inner.eval(&axpy(x, -h, v));
        p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }
    fn jet2(&self, x: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let h = self.step(x).sqrt() * 1e-1;
        let f = |a: f64, b: f64| {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, xi)| xi + a * v[i] + b * w[i]).collect();
            self.inner.eval(&y)
        };
        let (pp, pm, mp, mm) = (f(h, h), f(h, -h), f(-h, h), f(-h, -h));
        (0..pp.len()).map(|i| (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h)).collect()
    }
}

/// `x ↦ x / |x|²`, the transition between the two stereographic charts of a
/// round sphere, with hand-derived jets.
pub struct Inversion(pub usize);

impl Inversion {
    fn call<S: Scalar>(x: &[S]) -> Vec<S> {
        let r2 = x.iter().fold(S::zero(), |a, &v| a + v * v);
        x.iter().map(|&v| v / r2).collect()
    }
}

impl CoordMap for Inversion {
    fn dim_in(&self) -> usize {
        self.0
    }
    fn dim_out(&self) -> usize {
        self.0
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        Self::call(x)
    }
    fn eval_d1(&self, x: &[D1]) -> Vec<D1> {
        Self::call(x)
    }
    fn eval_d2(&self, x: &[D2]) -> Vec<D2> {
        Self::call(x)
    }
    fn eval_d3(&self, x: &[D3]) -> Vec<D3> {
        Self::call(x)
    }
    fn eval_d4(&self, x: &[D4]) -> Vec<D4> {
        Self::call(x)
    }
    fn mode(&self) -> DerivativeMode {
        DerivativeMode::ClosedForm
    }
    fn jet1(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let r2: f64 = x.iter().map(|a| a * a).sum();
        let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
        (0..x.len()).map(|i| v[i] / r2 - 2.0 * xv * x[i] / (r2 * r2)).collect()
    }
    fn jet2(&self, x: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let r2: f64 = x.iter().map(|a| a * a).sum();
        let r4 = r2 * r2;
        let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
        let xw: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        let vw: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        (0..x.len())
            .map(|i| {
                -2.0 * (xw * v[i] + xv * w[i] + vw * x[i]) / r4 + 8.0 * xv * xw * x[i] / (r4 * r2)
            })
            .collect()
    }
}

/// Linear map given by a row-major matrix; jets are exact by inspection.
pub struct Linear {
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<f64>,
}

impl Linear {
    fn call<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        (0..self.rows)
            .map(|i| (0..self.cols).fold(S::zero(), |acc, j| acc + x[j] * self.matrix[i * self.cols + j]))
            .collect()
    }
}

impl CoordMap for Linear {
    fn dim_in(&self) -> usize {
        self.cols
    }
    fn dim_out(&self) -> usize {
        self.rows
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.call(x)
    }
    fn eval_d1(&self, x: &[D1]) -> Vec<D1> {
        self.call(x)
    }
    fn eval_d2(&self, x: &[D2]) -> Vec<D2> {
        self.call(x)
    }
    fn eval_d3(&self, x: &[D3]) -> Vec<D3> {
        self.call(x)
    }
    fn eval_d4(&self, x: &[D4]) -> Vec<D4> {
        self.call(x)
    }
    fn mode(&self) -> DerivativeMode {
        DerivativeMode::ClosedForm
    }
    fn jet1(&self, _: &[f64], v: &[f64]) -> Vec<f64> {
        self.call(v)
    }
    fn jet2(&self, _: &[f64], _: &[f64], _: &[f64]) -> Vec<f64> {
        vec![0.0; self.rows]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::max_abs_diff;

    struct Poly;
    impl SmoothFn for Poly {
        fn dim_in(&self) -> usize {
            2
        }
        fn dim_out(&self) -> usize {
            2
        }
        fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
            vec![x[0] * x[0] * x[1], x[0].sin() + x[1] * x[1] * x[1]]
        }
    }

    #[test]
    fn inversion_closed_form_matches_dual() {
        let m = Inversion(3);
        let x = [0.4, -1.2, 0.7];
        let v = [0.3, 0.1, -0.5];
        let w = [-0.2, 0.6, 0.9];
        let dual_j1 = <f64 as Level>::eval_map_tangent(&m, &x, &v).1;
        assert!(max_abs_diff(&m.jet1(&x, &v), &dual_j1) < 1e-13);
        let arg: Vec<D2> = (0..3).map(|i| Dual::new(D1::new(x[i], v[i]), D1::new(w[i], 0.0))).collect();
        let dual_j2: Vec<f64> = m.eval_d2(&arg).into_iter().map(|d| d.eps.eps).collect();
        assert!(max_abs_diff(&m.jet2(&x, &v, &w), &dual_j2) < 1e-12);
    }

    #[test]
    fn tangent_lift_of_tangent_lift_is_consistent() {
        let f = smooth(Poly);
        let tf = smooth(TangentLift(f.clone()));
        let ttf = smooth(TangentLift(tf.clone()));
        let z = [0.3, 0.8, 1.0, -0.5, 0.2, 0.1, -0.3, 0.4];
        let out = ttf.eval(&z);
        // second-level base part equals the first-level lift
        assert!(max_abs_diff(&out[..4], &tf.eval(&z[..4])) < 1e-15);
        assert!(max_abs_diff(&out[4..], &tf.jet1(&z[..4], &z[4..])) < 1e-14);
        // jet2 of T²f needs fourth-order duals and must still be symmetric
        let v: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let w: Vec<f64> = (0..8).map(|i| 0.05 * (i * i) as f64 - 0.2).collect();
        assert!(max_abs_diff(&ttf.jet2(&z, &v, &w), &ttf.jet2(&z, &w, &v)) < 1e-12);
    }

    #[test]
    fn finite_difference_wrapper_tracks_dual_jets() {
        let f = smooth(Poly);
        let fd = FiniteDifference::new(f.clone());
        let x = [0.7, -0.4];
        let v = [1.0, 0.5];
        assert!(max_abs_diff(&fd.jet1(&x, &v), &f.jet1(&x, &v)) < 1e-8);
        assert!(max_abs_diff(&fd.jet2(&x, &v, &v), &f.jet2(&x, &v, &v)) < 1e-4);
    }
}
