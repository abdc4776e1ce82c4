use std::fmt;
use std::sync::Arc;

pub type ChartId = usize;

/// Signed distance-like margin function for custom chart domains.
pub type MarginFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Open subset of `ℝ^n` on which a chart is defined. `margin` is positive
/// inside and measures (at least roughly) distance to the boundary.
#[derive(Clone)]
pub enum Domain {
    Whole,
    Ball { center: Vec<f64>, radius: f64 },
    Box { center: Vec<f64>, half_widths: Vec<f64> },
    Custom(MarginFn),
}

impl Domain {
    pub fn margin(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        match self {
            Domain::Whole => f64::INFINITY,
            Domain::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                radius - d2.sqrt()
            }
            Domain::Box { center, half_widths } => x
                .iter()
                .zip(center)
                .zip(half_widths)
                .map(|((a, c), h)| h - (a - c).abs())
                .fold(f64::INFINITY, f64::min),
            Domain::Custom(f) => f(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.margin(x) > 0.0
    }
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Whole => write!(f, "Whole"),
            Domain::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            Domain::Box { center, half_widths } => write!(f, "Box({center:?}, {half_widths:?})"),
            Domain::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub id: ChartId,
    pub label: String,
    pub dim: usize,
    pub domain: Domain,
}

impl Chart {
    pub fn new(id: ChartId, label: impl Into<String>, dim: usize, domain: Domain) -> Self {
        Self { id, label: label.into(), dim, domain }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.domain.margin(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.domain.contains(x)
    }
}

/// A point recorded in exactly one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub chart: ChartId,
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(chart: ChartId, coords: Vec<f64>) -> Self {
        Self { chart, coords }
    }
}

/// A tangent vector, stored with its base point in the base point's chart.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVec {
    pub base: Point,
    pub components: Vec<f64>,
}

impl TangentVec {
    pub fn new(base: Point, components: Vec<f64>) -> Self {
        Self { base, components }
    }

    pub fn chart(&self) -> ChartId {
        self.base.chart
    }

    /// Concatenated `(x, v)` coordinates in the tangent-manifold chart.
    pub fn to_total(&self) -> Point {
        let mut c = self.base.coords.clone();
        c.extend_from_slice(&self.components);
        Point::new(self.base.chart, c)
    }

    pub fn from_total(p: &Point) -> Self {
        let n = p.coords.len() / 2;
        Self::new(Point::new(p.chart, p.coords[..n].to_vec()), p.coords[n..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margins_of_standard_domains() {
        let ball = Domain::Ball { center: vec![0.0, 0.0], radius: 2.0 };
        assert_eq!(ball.margin(&[0.0, 1.5]), 0.5);
        assert!(!ball.contains(&[2.0, 0.0]));
        let bx = Domain::Box { center: vec![1.0, 0.0], half_widths: vec![1.0, 3.0] };
        assert_eq!(bx.margin(&[1.5, 2.0]), 0.5);
        assert!(!Domain::Whole.contains(&[f64::NAN]));
    }
}
