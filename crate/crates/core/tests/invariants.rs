//! Property-based invariants over the public API.

use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use srlab_core::connection::{parallel_transport, ChartCurve};
use srlab_core::dual::{Dual, Scalar, D1, D2};
use srlab_core::geometry::builtins::euclidean;
use srlab_core::mapping::{
    read_map_csv, read_section_csv, write_map_csv, write_section_csv, DiscretizedMap, PullbackSection, SourceGrid,
    Topology,
};
use srlab_core::ode::IntegratorConfig;
use srlab_core::report::{Bound, Entry, Measurement, Report};
use srlab_core::scenarios::build;
use srlab_core::Point;

fn finite() -> impl Strategy<Value = f64> {
    -3.0..3.0f64
}

// f(x) = sin(x) exp(x) / (1 + x²), f' written out by hand
fn f<S: Scalar>(x: S) -> S {
    x.sin() * x.exp() / (x * x + 1.0)
}

fn df(x: f64) -> f64 {
    let q = 1.0 + x * x;
    x.exp() * ((x.cos() + x.sin()) * q - 2.0 * x * x.sin()) / (q * q)
}

fn circle_map(n: usize, a: f64, b: f64) -> DiscretizedMap {
    let grid = SourceGrid::circle(n).unwrap();
    DiscretizedMap::sample(grid, |t| Point::new(0, vec![a * t.cos(), b * t.sin() + 0.1 * t.cos()]))
}

proptest! {
    #[test]
    fn dual_numbers_differentiate_exactly(x in finite()) {
        let d = f(D1::new(x, 1.0));
        assert_relative_eq!(d.re, f(x), max_relative = 1e-14);
        assert_relative_eq!(d.eps, df(x), epsilon = 1e-12, max_relative = 1e-12);
        // nested duals: the mixed parts agree with the first derivative
        let dd = f(D2::new(Dual::new(x, 1.0), Dual::new(1.0, 0.0)));
        assert_relative_eq!(dd.re.eps, df(x), epsilon = 1e-12, max_relative = 1e-12);
        assert_relative_eq!(dd.eps.re, df(x), epsilon = 1e-12, max_relative = 1e-12);
    }

    #[test]
    fn overall_is_the_conjunction_of_ok_entries(
        rows in prop::collection::vec((0.0..2.0f64, any::<bool>(), any::<bool>()), 1..12)
    ) {
        let entries: Vec<Entry> = rows
            .iter()
            .enumerate()
            .map(|(i, &(r, above, xfail))| {
                let bound = if above { Bound::Above } else { Bound::Below };
                let e = Entry::new("g", &format!("e{i}"), "a", Measurement { n_samples: 1, max_residual: r }, 1.0, bound);
                if xfail { e.expect_fail() } else { e }
            })
            .collect();
        for (e, &(r, above, xfail)) in entries.iter().zip(&rows) {
            prop_assert_eq!(e.pass, if above { r > 1.0 } else { r < 1.0 });
            prop_assert_eq!(e.ok(), e.pass != xfail);
        }
        let expect = entries.iter().all(Entry::ok);
        prop_assert_eq!(Report::new((), entries).overall, expect);
    }

    #[test]
    fn flat_section_combination_is_componentwise(
        a in finite(), b in finite(),
        u in prop::collection::vec(finite(), 16), w in prop::collection::vec(finite(), 16)
    ) {
        let m = euclidean(2);
        let f = circle_map(8, 1.0, 0.5);
        let pairs = |v: &[f64]| v.chunks(2).map(|c| c.to_vec()).collect::<Vec<_>>();
        let tau = PullbackSection::from_components(&f, pairs(&u)).unwrap();
        let sigma = PullbackSection::from_components(&f, pairs(&w)).unwrap();
        let c = tau.combine(&m, a, &sigma, b).unwrap();
        for (i, v) in c.vectors.iter().enumerate() {
            for d in 0..2 {
                prop_assert!((v.components[d] - (a * u[2 * i + d] + b * w[2 * i + d])).abs() < 1e-12);
            }
        }
        prop_assert!(c.distance(&m, &tau.scaled(a).combine(&m, 1.0, &sigma.scaled(b), 1.0).unwrap()) < 1e-12);
    }

    #[test]
    fn csv_round_trips_are_exact(
        n in 8usize..20, a in 0.1..3.0f64, b in 0.1..3.0f64,
        comps in prop::collection::vec(finite(), 40)
    ) {
        let f = circle_map(n, a, b);
        let mut buf = Vec::new();
        write_map_csv(&f, &mut buf).unwrap();
        let g = read_map_csv(buf.as_slice(), Topology::Circle).unwrap();
        for (p, q) in f.values.iter().zip(&g.values) {
            prop_assert_eq!(p.chart, q.chart);
            prop_assert_eq!(&p.coords, &q.coords);
        }
        let tau = PullbackSection::from_components(&f, comps.chunks(2).take(n).map(|c| c.to_vec()).collect()).unwrap();
        let mut buf = Vec::new();
        write_section_csv(&tau, &mut buf).unwrap();
        let back = read_section_csv(buf.as_slice(), Topology::Circle).unwrap();
        for (v, w) in tau.vectors.iter().zip(&back.vectors) {
            prop_assert_eq!(&v.components, &w.components);
            prop_assert_eq!(&v.base.coords, &w.base.coords);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parallel_transport_is_linear(
        a in -2.0..2.0f64, b in -2.0..2.0f64, t in 0.1..3.0f64,
        v in prop::collection::vec(-1.0..1.0f64, 1), w in prop::collection::vec(-1.0..1.0f64, 1)
    ) {
        let cfg = IntegratorConfig::default();
        let sc = build("twisted_flat", &cfg).unwrap();
        let conn = Arc::clone(&sc.conn);
        let curve = ChartCurve { chart: 0, f: |s: f64| (vec![s.cos(), 0.5 * s.sin()], vec![-s.sin(), 0.5 * s.cos()]) };
        let x = [1.0, 0.0];
        let k = conn.bundle.fibre_dim;
        let pad = |u: &[f64]| { let mut u = u.to_vec(); u.resize(k, 0.3); u };
        let (v, w) = (pad(&v), pad(&w));
        let mix: Vec<f64> = v.iter().zip(&w).map(|(p, q)| a * p + b * q).collect();
        let go = |xi: &[f64]| parallel_transport(&conn, &curve, &conn.bundle.point(0, &x, xi), 0.0, t, &cfg).unwrap();
        let (pv, pw, pm) = (go(&v), go(&w), go(&mix));
        prop_assert_eq!(pv.chart, pm.chart);
        let n = conn.bundle.base_dim();
        for i in 0..k {
            let lin = a * pv.coords[n + i] + b * pw.coords[n + i];
            prop_assert!((pm.coords[n + i] - lin).abs() < 1e-9, "{} vs {}", pm.coords[n + i], lin);
        }
    }
}
