//! Forward-mode automatic differentiation with nestable dual numbers.
//!
//! `Dual<S>` carries a value and one infinitesimal direction. Nesting
//! (`Dual<Dual<f64>>`, ...) yields mixed higher directional derivatives,
//! which is how second jets of transition maps and the tangent lifts of
//! tangent maps are evaluated exactly.
//!
//! Code that is written once against [`Scalar`] can be evaluated at `f64`
//! or at any dual level. Code that has to call *opaque* maps (trait objects)
//! is written against [`Level`], which dispatches to the matching evaluation
//! entry point of [`CoordMap`](crate::geometry::CoordMap).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::geometry::CoordMap;

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    /// The underlying real value (all infinitesimal parts dropped).
    fn re(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn atan2(self, x: Self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn recip(self) -> Self {
        Self::one() / self
    }
    fn powi(self, n: i32) -> Self {
        let mut acc = Self::one();
        let base = if n < 0 { self.recip() } else { self };
        for _ in 0..n.unsigned_abs() {
            acc *= base;
        }
        acc
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Self { re, eps }
    }

    pub fn constant(re: S) -> Self {
        Self { re, eps: S::zero() }
    }

    // chain rule: f(re + eps ε) = f(re) + f'(re) eps ε
    fn chain(self, f: S, df: S) -> Self {
        Self { re: f, eps: df * self.eps }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self { re: self.re * o.re, eps: self.re * o.eps + self.eps * o.re }
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = o.re.recip();
        let re = self.re * inv;
        Self { re, eps: (self.eps - re * o.eps) * inv }
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { re: -self.re, eps: -self.eps }
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> SubAssign for Dual<S> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar> MulAssign for Dual<S> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar> Add<f64> for Dual<S> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Self { re: self.re + o, eps: self.eps }
    }
}

impl<S: Scalar> Sub<f64> for Dual<S> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Self { re: self.re - o, eps: self.eps }
    }
}

impl<S: Scalar> Mul<f64> for Dual<S> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Self { re: self.re * o, eps: self.eps * o }
    }
}

impl<S: Scalar> Div<f64> for Dual<S> {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        Self { re: self.re / o, eps: self.eps / o }
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn cst(v: f64) -> Self {
        Self::constant(S::cst(v))
    }
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, (r * 2.0).recip())
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    fn atan2(self, x: Self) -> Self {
        // d atan2(y, x) = (x dy - y dx) / (x² + y²)
        let r2 = x.re * x.re + self.re * self.re;
        Self {
            re: self.re.atan2(x.re),
            eps: (x.re * self.eps - self.re * x.eps) / r2,
        }
    }
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;
pub type D4 = Dual<D3>;

/// A scalar type at which opaque [`CoordMap`]s can be evaluated.
///
/// `f64` and the four nested dual levels implement this; one more level of
/// differentiation than the current one is needed for tangent evaluation,
/// so `D4` cannot lift further.
pub trait Level: Scalar {
    fn eval_map(map: &dyn CoordMap, x: &[Self]) -> Vec<Self>;

    /// Returns `(f(x), Df(x)·v)` evaluated at this level.
    fn eval_map_tangent(map: &dyn CoordMap, x: &[Self], v: &[Self]) -> (Vec<Self>, Vec<Self>);
}

fn lift<S: Scalar>(x: &[S], v: &[S]) -> Vec<Dual<S>> {
    x.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect()
}

fn split<S: Scalar>(y: Vec<Dual<S>>) -> (Vec<S>, Vec<S>) {
    y.into_iter().map(|d| (d.re, d.eps)).unzip()
}

impl Level for f64 {
    fn eval_map(map: &dyn CoordMap, x: &[Self]) -> Vec<Self> {
        map.eval(x)
    }
    fn eval_map_tangent(map: &dyn CoordMap, x: &[Self], v: &[Self]) -> (Vec<Self>, Vec<Self>) {
        split(map.eval_d1(&lift(x, v)))
    }
}

impl Level for D1 {
    fn eval_map(map: &dyn CoordMap, x: &[Self]) -> Vec<Self> {
        map.eval_d1(x)
    }
    fn eval_map_tangent(map: &dyn CoordMap, x: &[Self], v: &[Self]) -> (Vec<Self>, Vec<Self>) {
        split(map.eval_d2(&lift(x, v)))
    }
}

impl Level for D2 {
    fn eval_map(map: &dyn CoordMap, x: &[Self]) -> Vec<Self> {
        map.eval_d2(x)
    }
    fn eval_map_tangent(map: &dyn CoordMap, x: &[Self], v: &[Self]) -> (Vec<Self>, Vec<Self>) {
        split(map.eval_d3(&lift(x, v)))
    }
}

impl Level for D3 {
    fn eval_map(map: &dyn CoordMap, x: &[Self]) -> Vec<Self> {
        map.eval_d3(x)
    }
    fn eval_map_tangent(map: &dyn CoordMap, x: &[Self], v: &[Self]) -> (Vec<Self>, Vec<Self>) {
        split(map.eval_d4(&lift(x, v)))
    }
}

impl Level for D4 {
    fn eval_map(map: &dyn CoordMap, x: &[Self]) -> Vec<Self> {
        map.eval_d4(x)
    }
    fn eval_map_tangent(_: &dyn CoordMap, _: &[Self], _: &[Self]) -> (Vec<Self>, Vec<Self>) {
        panic!("jet order exceeded: maps are differentiable through four nested dual levels")
    }
}

/// Lift a real vector to a constant at any scalar level.
pub fn consts<S: Scalar>(x: &[f64]) -> Vec<S> {
    x.iter().map(|&v| S::cst(v)).collect()
}

pub fn reals<S: Scalar>(x: &[S]) -> Vec<f64> {
    x.iter().map(Scalar::re).collect()
}

/// Jacobian (row-major, `m × n`) of an opaque map at any level.
pub fn jacobian_at<S: Level>(map: &dyn CoordMap, x: &[S]) -> Vec<S> {
    let n = x.len();
    let m = map.dim_out();
    let mut jac = vec![S::zero(); m * n];
    let mut e = vec![S::zero(); n];
    for j in 0..n {
        e[j] = S::one();
        let (_, col) = S::eval_map_tangent(map, x, &e);
        for i in 0..m {
            jac[i * n + j] = col[i];
        }
        e[j] = S::zero();
    }
    jac
}

/// Row-major `m × n` matrix times vector.
pub fn mat_vec<S: Scalar>(a: &[S], rows: usize, cols: usize, v: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), rows * cols);
    (0..rows)
        .map(|i| {
            let mut acc = S::zero();
            for j in 0..cols {
                acc += a[i * cols + j] * v[j];
            }
            acc
        })
        .collect()
}

/// Row-major product `(r × k)·(k × c)`.
pub fn mat_mul<S: Scalar>(a: &[S], b: &[S], r: usize, k: usize, c: usize) -> Vec<S> {
    let mut out = vec![S::zero(); r * c];
    for i in 0..r {
        for l in 0..k {
            let ail = a[i * k + l];
            for j in 0..c {
                out[i * c + j] += ail * b[l * c + j];
            }
        }
    }
    out
}

/// Solve `A X = B` for square `A` (`n × n`) and `B` (`n × m`), Gaussian
/// elimination with partial pivoting on the real parts. Returns `None` for
/// a numerically singular system.
pub fn solve<S: Scalar>(a: &[S], b: &[S], n: usize, m: usize) -> Option<Vec<S>> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let scale = a.iter().map(|v| v.re().abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].re().abs().total_cmp(&a[j * n + col].re().abs()))?;
        if a[piv * n + col].re().abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            for j in 0..m {
                b.swap(col * m + j, piv * m + j);
            }
        }
        let inv = a[col * n + col].recip();
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            for j in col..n {
                let t = a[col * n + j];
                a[row * n + j] -= f * t;
            }
            for j in 0..m {
                let t = b[col * m + j];
                b[row * m + j] -= f * t;
            }
        }
    }
    let mut x = vec![S::zero(); n * m];
    for row in (0..n).rev() {
        let inv = a[row * n + row].recip();
        for j in 0..m {
            let mut acc = b[row * m + j];
            for l in row + 1..n {
                acc -= a[row * n + l] * x[l * m + j];
            }
            x[row * m + j] = acc * inv;
        }
    }
    Some(x)
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dimension mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<S: Scalar>(x: S, y: S) -> S {
        (x * y).sin() + x.exp() * y.powi(2) - y.atan2(x) + (x * x + 1.0).sqrt().ln()
    }

    #[test]
    fn first_derivative_matches_hand_formula() {
        let (x, y) = (0.3, -0.7);
        let d = f(D1::new(x, 1.0), D1::constant(y));
        let fx = y * (x * y).cos() + x.exp() * y * y + y / (x * x + y * y) + x / (x * x + 1.0);
        assert!((d.eps - fx).abs() < 1e-14);
    }

    #[test]
    fn nested_duals_give_mixed_second_derivative() {
        // d²/dxdy of x²y³ = 6 x y²
        let g = |x: D2, y: D2| x * x * y * y * y;
        let (x0, y0) = (1.3, 0.4);
        let x = Dual::new(D1::new(x0, 1.0), D1::constant(0.0));
        let y = Dual::new(D1::constant(y0), D1::constant(1.0));
        let out = g(x, y);
        assert!((out.eps.eps - 6.0 * x0 * y0 * y0).abs() < 1e-13);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let x = [1.0, -2.0, 0.5];
        let b = mat_vec(&a, 3, 3, &x);
        let got = solve(&a, &b, 3, 1).unwrap();
        assert!(max_abs_diff(&got, &x) < 1e-14);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 2.0], 2, 1).is_none());
    }
}
