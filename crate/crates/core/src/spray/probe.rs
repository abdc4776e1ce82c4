//! Empirical radius of the fibre ball over a point on which the spray
//! exponential is defined and `(π, exp)` is injective.

use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::dual::norm;
use crate::error::Result;
use crate::geometry::Point;
use crate::ode::IntegratorConfig;
use crate::sample::{self, direction};

use super::{spray_flow, Spray};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    /// Top of the tested range.
    pub r_max: f64,
    pub iterations: usize,
    /// Random directions in addition to the `±e_i` axes.
    pub random_directions: usize,
    /// Radial grid points per direction.
    pub radial_points: usize,
    /// Outputs closer than `collision_ratio · |v − w|` count as a collision.
    pub collision_ratio: f64,
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            r_max: 8.0,
            iterations: 12,
            random_directions: 6,
            radial_points: 6,
            collision_ratio: 1e-2,
            min_separation: 1e-4,
            seed: 0x9e37,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeResult {
    pub radius: f64,
    /// Radii tested, with their outcome, in test order.
    pub tested: Vec<(f64, bool)>,
}

/// Largest radius `r` in `[0, r_max]` (bisection) for which every sampled
/// fibre vector of length `≤ r` over `m` flows to time 1 and no two
/// sampled vectors nearly collide under the exponential. When the fibre
/// and base dimensions agree, the determinant of the fibre Jacobian of
/// `exp` must also keep its sign along each ray: a sign change marks a
/// conjugate point, beyond which `exp` folds over even if no sampled pair
/// happens to collide.
pub fn domain_probe(spray: &dyn Spray, m: &Point, cfg: &IntegratorConfig, opts: &ProbeOptions) -> Result<ProbeResult> {
    let b = spray.bundle();
    let (c, x) = b.chart_at(m)?;
    let k = b.fibre_dim;
    let mut rng = sample::rng(opts.seed);
    let mut dirs = Vec::new();
    for i in 0..k {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; k];
            e[i] = s;
            dirs.push(e);
        }
    }
    dirs.extend((0..opts.random_directions).map(|_| direction(&mut rng, k)));

    let base_chart = b.charts[c].base_chart;
    let exp_at = |xi: &[f64]| -> Result<Option<Point>> {
        let res = spray_flow(spray, &b.point(c, &x, xi), 1.0, cfg)?;
        Ok(res.is_complete().then(|| b.projection(&res.end)))
    };
    // exp at s·d ± h e_i, for a central-difference fibre Jacobian
    let perturbed = |xi: &[f64]| -> Result<Option<(f64, Vec<(Point, Point)>)>> {
        let h = 1e-6 * (1.0 + norm(xi));
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let mut p = xi.to_vec();
            let mut q = xi.to_vec();
            p[i] += h;
            q[i] -= h;
            let (Some(ep), Some(eq)) = (exp_at(&p)?, exp_at(&q)?) else { return Ok(None) };
            out.push((ep, eq));
        }
        Ok(Some((h, out)))
    };
    let det_in = |h: f64, pts: &[(Point, Point)], chart: usize| -> Option<f64> {
        let mut cols = Vec::with_capacity(k);
        for (ep, eq) in pts {
            let (ep, eq) = (b.base.transition(ep, chart).ok()?, b.base.transition(eq, chart).ok()?);
            cols.push(ep.coords.iter().zip(&eq.coords).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
        }
        Some(DMatrix::from_fn(k, k, |r, col| cols[col][r]).determinant())
    };
    let square = k == b.base_dim();
    let det0 = if square { DMatrix::from_row_slice(k, k, &b.anchor_map(c).eval(&x)).determinant() } else { 1.0 };

    let passes = |r: f64| -> Result<bool> {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for d in &dirs {
            // previous sample on the ray; the origin is represented by the anchor
            let mut prev: Option<(f64, Vec<(Point, Point)>)> = None;
            for j in 1..=opts.radial_points {
                let s = r * j as f64 / opts.radial_points as f64;
                let xi: Vec<f64> = d.iter().map(|a| a * s).collect();
                let Some(y) = exp_at(&xi)? else { return Ok(false) };
                if square {
                    // det D(exp) changing sign between neighbours (compared in a
                    // chart holding both) means a conjugate point was crossed
                    let Some((h, pts)) = perturbed(&xi)? else { return Ok(false) };
                    let same_sign = match &prev {
                        None => det_in(h, &pts, base_chart).map(|det| det * det0 > 0.0),
                        Some((hp, pp)) => (0..b.base.n_charts()).find_map(|ch| {
                            Some(det_in(h, &pts, ch)? * det_in(*hp, pp, ch)? > 0.0)
                        }),
                    };
                    if same_sign != Some(true) {
                        return Ok(false);
                    }
                    prev = Some((h, pts));
                }
                inputs.push(xi);
                outputs.push(y);
            }
        }
        for i in 0..inputs.len() {
            for j in i + 1..inputs.len() {
                let sep = norm(&inputs[i].iter().zip(&inputs[j]).map(|(p, q)| p - q).collect::<Vec<_>>());
                if sep > opts.min_separation && b.base.distance(&outputs[i], &outputs[j]) < opts.collision_ratio * sep {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    };

    let mut tested = Vec::new();
    let top = passes(opts.r_max)?;
    tested.push((opts.r_max, top));
    if top {
        return Ok(ProbeResult { radius: opts.r_max, tested });
    }
    let (mut lo, mut hi) = (0.0, opts.r_max);
    for _ in 0..opts.iterations {
        let mid = 0.5 * (lo + hi);
        let ok = passes(mid)?;
        tested.push((mid, ok));
        if ok {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ProbeResult { radius: lo, tested })
}
