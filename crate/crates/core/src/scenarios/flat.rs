//! `ℝ² → ℝ`, `(x, y) ↦ x`: once with everything flat, once with tilted
//! submersion charts and a curved vertical connection.

use std::sync::Arc;

use crate::bundle::AnchoredBundle;
use crate::connection::LinearConnection;
use crate::dual::Level;
use crate::error::Result;
use crate::geometry::{
    euclidean, euclidean_box, smooth, Chart, ChartedManifold, Constant, CoordMap, Domain, Identity, Linear, Point,
    Select, SmoothFn, SmoothMap,
};
use crate::partition::{Bump, PartitionOfUnity};
use crate::spray::{quadratic_local_spray, BilinearFn, Spray};
use crate::submersion::{vertical_spray, SubmersionChart, SubmersionGeometry};

use super::Parts;

fn projection(m: Arc<ChartedManifold>, n: Arc<ChartedManifold>) -> Result<Arc<SmoothMap>> {
    Ok(Arc::new(SmoothMap::from_fn("proj", m, n, |_, _| Some(smooth(Select { dim_in: 2, start: 0, len: 1 })))?))
}

fn vertical_e2(m: Arc<ChartedManifold>) -> Result<Arc<AnchoredBundle>> {
    let frame: Arc<dyn CoordMap> = smooth(Constant { dim_in: 2, value: vec![0.0, 1.0] });
    Ok(Arc::new(AnchoredBundle::with_global_frame("V", m, 1, vec![frame])?))
}

pub(super) fn flat_projection() -> Result<Parts> {
    let m = Arc::new(euclidean(2));
    let n = Arc::new(euclidean(1));
    let p = projection(m.clone(), n.clone())?;
    let chart = SubmersionChart { label: "id".into(), n_chart: 0, psi: vec![Some(smooth(Identity(2)))] };
    let vertical = vertical_e2(m.clone())?;
    let pu_n = Arc::new(PartitionOfUnity::trivial(n.clone()));
    let geom = SubmersionGeometry::new("flat_projection", p, vec![chart], pu_n, vertical.clone())?;
    let s_n: Arc<dyn Spray> = Arc::new(quadratic_local_spray(geom.tn.clone(), 0, None)?);
    let s_v: Arc<dyn Spray> = Arc::new(vertical_spray(vertical.clone(), vec![None], Arc::new(PartitionOfUnity::trivial(m)))?);
    Ok(Parts {
        geom,
        s_n,
        s_v,
        conn: LinearConnection::flat(vertical),
        base_point: Point::new(0, vec![0.3, -0.7]),
        loop_fn: Arc::new(|t: f64| Point::new(0, vec![t.cos(), t.sin()])),
        connection_label: "flat",
        vertical_label: "flat",
        base_label: "flat",
    })
}

/// `(x, y) ↦ (x, y + 0.3 x²)`.
struct Parabolic;

impl SmoothFn for Parabolic {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn call<S: Level>(&self, x: &[S]) -> Vec<S> {
        vec![x[0], x[1] + x[0] * x[0] * 0.3]
    }
}

pub(super) fn twisted_flat() -> Result<Parts> {
    let half = 3.4;
    let strip = Domain::Box { center: vec![0.0, 0.0], half_widths: vec![half, f64::INFINITY] };
    let id: Arc<dyn CoordMap> = smooth(Identity(2));
    let m = Arc::new(ChartedManifold::new("strip", vec![Chart::new(0, "global", 2, strip)], vec![vec![Some(id)]])?);
    let n = Arc::new(euclidean_box(1, half));
    let p = projection(m.clone(), n.clone())?;
    // the two charts disagree on what "horizontal" means
    let shear: Arc<dyn CoordMap> = Arc::new(Linear { rows: 2, cols: 2, matrix: vec![1.0, 0.0, -0.5, 1.0] });
    let charts = vec![
        SubmersionChart { label: "shear".into(), n_chart: 0, psi: vec![Some(shear)] },
        SubmersionChart { label: "parabolic".into(), n_chart: 0, psi: vec![Some(smooth(Parabolic))] },
    ];
    let pu_n = Arc::new(PartitionOfUnity::new(
        n.clone(),
        vec![Bump { chart: 0, center: vec![-1.0], radius: 2.5 }, Bump { chart: 0, center: vec![1.0], radius: 2.5 }],
    )?);
    let vertical = vertical_e2(m.clone())?;
    let geom = SubmersionGeometry::new("twisted_flat", p, charts, pu_n, vertical.clone())?;
    let s_n: Arc<dyn Spray> = Arc::new(quadratic_local_spray(geom.tn.clone(), 0, None)?);
    let s_v: Arc<dyn Spray> = Arc::new(vertical_spray(vertical.clone(), vec![None], Arc::new(PartitionOfUnity::trivial(m)))?);
    let b: BilinearFn = Arc::new(|x, v, xi| vec![x[0] * v[0] * xi[0]]);
    Ok(Parts {
        geom,
        s_n,
        s_v,
        conn: LinearConnection::new(vertical, vec![b])?,
        base_point: Point::new(0, vec![0.4, 0.3]),
        loop_fn: Arc::new(|t: f64| Point::new(0, vec![1.2 * t.cos(), t.sin() + 0.3 * (2.0 * t).sin()])),
        connection_label: "B(x)(X, xi) = x1 X1 xi",
        vertical_label: "flat",
        base_label: "flat",
    })
}
