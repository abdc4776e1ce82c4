use super::*;
use crate::bundle::AnchoredBundle;
use crate::dual::{Dual, D1};
use crate::geometry::builtins::sphere_embed;
use crate::geometry::{euclidean, stereographic_pair};
use crate::ode::IntegratorConfig;
use crate::sample::rng;
use crate::scenarios::{self, Scenario};
use crate::spray::{quadratic_local_spray, round_sphere_spray, Spray};
use crate::submersion::SprayAddition;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn flat_addition(n: usize) -> Arc<dyn LocalAddition> {
    let tb = Arc::new(AnchoredBundle::tangent(Arc::new(euclidean(n))));
    let s: Arc<dyn Spray> = Arc::new(quadratic_local_spray(tb, 0, None).unwrap());
    Arc::new(SprayAddition::new(s, cfg()).unwrap())
}

fn sphere_addition() -> Arc<dyn LocalAddition> {
    let tb = Arc::new(AnchoredBundle::tangent(Arc::new(stereographic_pair(2, 3.0))));
    let s: Arc<dyn Spray> = Arc::new(round_sphere_spray(tb, 2.5).unwrap());
    Arc::new(SprayAddition::new(s, cfg()).unwrap())
}

fn sigma_n(sc: &Scenario) -> Arc<dyn LocalAddition> {
    Arc::new(SprayAddition::new(sc.s_n.clone(), cfg()).unwrap())
}

fn scenario_loop(sc: &Scenario, n: usize) -> DiscretizedMap {
    let f = sc.loop_fn.clone();
    DiscretizedMap::sample(SourceGrid::circle(n).unwrap(), move |t| f(t))
}

fn representation(sc: &Scenario, n: usize) -> ChartRepresentation {
    ChartRepresentation::new(
        sc.geom.p.clone(),
        scenario_loop(sc, n),
        sc.sigma_m.clone(),
        sigma_n(sc),
        NewtonOptions::default(),
    )
    .unwrap()
}

/// A tilted circle on `S²`, in chart 0.
fn sphere_loop(n: usize) -> DiscretizedMap {
    DiscretizedMap::sample(SourceGrid::circle(n).unwrap(), |t| Point::new(0, vec![0.6 * t.cos(), 0.4 * t.sin() + 0.2]))
}

#[test]
fn grids() {
    let g = SourceGrid::circle(8).unwrap();
    assert_eq!(g.len(), 8);
    assert!((g.nodes[4] - PI).abs() < 1e-15);
    assert_eq!(g.edges().last(), Some(&(7, 0)));
    let i = SourceGrid::new(Topology::Interval, 9).unwrap();
    assert_eq!((i.nodes[0], i.nodes[8]), (0.0, 1.0));
    assert_eq!(i.edges().len(), 8);
    assert!(matches!(SourceGrid::circle(7), Err(Error::ConfigParse(_))));
}

#[test]
fn coarse_edges_flag_chart_jumps() {
    let s2 = stereographic_pair(2, 3.0);
    assert!(sphere_loop(16).coarse_edges(&s2).is_empty());
    let mut f = sphere_loop(16);
    // a node far out in chart 1 is not in chart 0's ball of radius 3
    f.values[5] = Point::new(1, vec![0.05, 0.0]);
    // the next node is close enough to the south pole region to be in both charts
    assert_eq!(f.coarse_edges(&s2), vec![4]);
}

#[test]
fn zero_section_maps_to_centre_and_back() {
    let chart = CanonicalChart::new(sphere_loop(12), sphere_addition(), NewtonOptions::default());
    let zero = PullbackSection::zero(&chart.center);
    assert_eq!(chart.forward(&zero).unwrap(), chart.center);
    let tau = chart.inverse(&chart.center).unwrap();
    assert_eq!(tau.sup_norm(), 0.0);
}

#[test]
fn flat_chart_is_translation() {
    let f = DiscretizedMap::sample(SourceGrid::circle(10).unwrap(), |t| Point::new(0, vec![t.cos(), t.sin()]));
    let chart = CanonicalChart::new(f.clone(), flat_addition(2), NewtonOptions::default());
    let tau = random_section(&mut rng(1), &f, 3, 0.7);
    let g = chart.forward(&tau).unwrap();
    for (k, v) in tau.vectors.iter().enumerate() {
        let expected: Vec<f64> = v.base.coords.iter().zip(&v.components).map(|(a, b)| a + b).collect();
        assert!(max_abs_diff(&g.values[k].coords, &expected) < 1e-12);
    }
    let back = chart.inverse(&g).unwrap();
    assert!(back.distance(&euclidean(2), &tau) < 1e-10);
}

#[test]
fn sphere_chart_matches_great_circles_and_round_trips() {
    // closed form: exp_q(u) = cos|u| q + sin|u| u/|u| in ℝ³
    let f = sphere_loop(16);
    let chart = CanonicalChart::new(f.clone(), sphere_addition(), NewtonOptions::default());
    let tau = random_section(&mut rng(2), &f, 3, 0.5);
    let g = chart.forward(&tau).unwrap();
    for (v, out) in tau.vectors.iter().zip(&g.values) {
        let arg: Vec<D1> = v.base.coords.iter().zip(&v.components).map(|(&x, &u)| Dual::new(x, u)).collect();
        let e = sphere_embed(0, &arg);
        let len = e.iter().map(|d| d.eps * d.eps).sum::<f64>().sqrt();
        let expected: Vec<f64> = e.iter().map(|d| len.cos() * d.re + len.sin() * d.eps / len).collect();
        assert!(max_abs_diff(&sphere_embed(out.chart, &out.coords), &expected) < 1e-8);
    }
    let s2 = stereographic_pair(2, 3.0);
    let sections: Vec<_> = (0..3).map(|i| random_section(&mut rng(10 + i), &f, 3, 0.8)).collect();
    let (sec, map) = chart_round_trip(&chart, &sections).unwrap();
    assert!(sec.passes(1e-8) && map.passes(1e-8), "{sec:?} {map:?}");
    assert!(g.distance(&s2, &f) > 0.1);
}

#[test]
fn newton_reports_failures() {
    let f = DiscretizedMap::sample(SourceGrid::circle(8).unwrap(), |t| Point::new(0, vec![t.cos(), t.sin()]));
    let add = flat_addition(2);
    let mut far = f.clone();
    far.values[3].coords[0] += 3.0;
    let tight = NewtonOptions { max_norm: 1.0, ..Default::default() };
    let err = CanonicalChart::new(f.clone(), add.clone(), tight).inverse(&far).unwrap_err();
    assert!(matches!(err, Error::OutsideImage { node: 3 }), "{err}");
    let none = NewtonOptions { max_iter: 0, ..Default::default() };
    let err = CanonicalChart::new(f.clone(), add, none).inverse(&far).unwrap_err();
    assert!(matches!(err, Error::NewtonDiverged { node: 3, residual } if (residual - 3.0).abs() < 1e-12));
}

#[test]
fn section_base_must_match_centre() {
    let f = sphere_loop(8);
    let chart = CanonicalChart::new(f.clone(), sphere_addition(), NewtonOptions::default());
    let mut tau = PullbackSection::zero(&f);
    tau.vectors[2].base.coords[0] += 0.1;
    assert!(matches!(chart.forward(&tau), Err(Error::BaseMismatch { node: 2 })));
}

#[test]
fn pushforward_examples() {
    let s2 = Arc::new(stereographic_pair(2, 3.0));
    let f = sphere_loop(9);
    assert_eq!(pushforward(&SmoothMap::identity(s2), &f).unwrap(), f);

    let flat = scenarios::build("flat_projection", &cfg()).unwrap();
    let circle = DiscretizedMap::sample(SourceGrid::circle(12).unwrap(), |t| Point::new(0, vec![t.cos(), t.sin()]));
    let pf = pushforward(&flat.geom.p, &circle).unwrap();
    for (t, y) in circle.grid.nodes.iter().zip(&pf.values) {
        assert!((y.coords[0] - t.cos()).abs() < 1e-15);
    }

    let hopf = scenarios::build("hopf", &cfg()).unwrap();
    let pf = pushforward(&hopf.geom.p, &scenario_loop(&hopf, 64)).unwrap();
    for y in &pf.values {
        let q = sphere_embed(y.chart, &y.coords);
        assert!((q.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pushforward_is_functorial() {
    // (p ∘ id)_* = p_* ∘ id_*
    let sc = scenarios::build("hopf", &cfg()).unwrap();
    let f = scenario_loop(&sc, 16);
    let id = SmoothMap::identity(sc.geom.m().clone());
    let a = pushforward(&sc.geom.p, &pushforward(&id, &f).unwrap()).unwrap();
    assert_eq!(a, pushforward(&sc.geom.p, &f).unwrap());
}

#[test]
fn splitting_sections() {
    let sc = scenarios::build("hopf", &cfg()).unwrap();
    let g = &*sc.geom;
    let f = scenario_loop(&sc, 32);
    let tau = random_section(&mut rng(4), &f, 3, 0.2);
    let split = split_section(g, &tau).unwrap();
    assert!(join_section(g, &split, &f).unwrap().distance(g.m(), &tau) < 1e-9);

    // vertical and horizontal sections split trivially
    let vert = PullbackSection::from_components(
        &f,
        f.values.iter().map(|x| g.vertical_basis(x).unwrap()[0].clone()).map(|b| {
            g.m().transition_tangent(&b, 0).unwrap().components.iter().map(|c| 0.1 * c).collect()
        }).collect(),
    )
    .unwrap();
    let s = split_section(g, &vert).unwrap();
    let vpart = join_section(g, &SplitSection { horizontal: s.horizontal.iter().map(|h| g.horizontal.scale(h, 0.0)).collect(), ..s.clone() }, &f).unwrap();
    assert!(vpart.distance(g.m(), &vert) < 1e-12);
    assert!(s.horizontal.iter().all(|h| h.coords[3..].iter().all(|c| c.abs() < 1e-12)));

    let pf = pushforward(&g.p, &f).unwrap();
    let eta = random_section(&mut rng(5), &pf, 3, 0.2);
    let hor = right_inverse(g, &f, &eta).unwrap();
    let s = split_section(g, &hor).unwrap();
    assert!(s.vertical.iter().all(|v| v.coords[3..].iter().all(|c| c.abs() < 1e-12)));
}

#[test]
fn right_inverse_examples() {
    let flat = scenarios::build("flat_projection", &cfg()).unwrap();
    let f = scenario_loop(&flat, 8);
    let pf = pushforward(&flat.geom.p, &f).unwrap();
    let eta = random_section(&mut rng(6), &pf, 2, 0.5);
    let lift = right_inverse(&flat.geom, &f, &eta).unwrap();
    for (h, e) in lift.vectors.iter().zip(&eta.vectors) {
        assert!(max_abs_diff(&h.components, &[e.components[0], 0.0]) < 1e-15);
    }
    assert_eq!(right_inverse(&flat.geom, &f, &PullbackSection::zero(&pf)).unwrap().sup_norm(), 0.0);

    let hopf = scenarios::build("hopf", &cfg()).unwrap();
    let f = scenario_loop(&hopf, 32);
    let pf = pushforward(&hopf.geom.p, &f).unwrap();
    let eta = random_section(&mut rng(7), &pf, 3, 0.2);
    let lift = right_inverse(&hopf.geom, &f, &eta).unwrap();
    assert!(differential_along(&hopf.geom.p, &lift, &pf).unwrap().distance(hopf.geom.n(), &eta) < 1e-8);
}

#[test]
fn flat_projection_representation_extracts_first_component() {
    let sc = scenarios::build("flat_projection", &cfg()).unwrap();
    let rep = representation(&sc, 16);
    let tau = random_section(&mut rng(8), rep.center(), 3, 0.2);
    let lhs = rep.apply(&tau).unwrap();
    for (l, t) in lhs.vectors.iter().zip(&tau.vectors) {
        assert!((l.components[0] - t.components[0]).abs() < 1e-10);
    }
    let zero = rep.apply(&PullbackSection::zero(rep.center())).unwrap();
    assert_eq!(zero.sup_norm(), 0.0);
}

fn small_opts() -> PushforwardOptions {
    PushforwardOptions { n_sections: 4, n_linearity: 3, n_right_inverse: 3, ..Default::default() }
}

#[test]
fn representations_are_linear_and_equal_tp() {
    for name in ["flat_projection", "twisted_flat", "hopf"] {
        let sc = scenarios::build(name, &cfg()).unwrap();
        let rep = representation(&sc, 16);
        let r = submersion_chart_check(&sc.geom, &rep, &small_opts(), &mut rng(9)).unwrap();
        assert!(r.identity.passes(1e-5), "{name}: {r:?}");
        assert!(r.linearity.passes(1e-5), "{name}: {r:?}");
        assert!(r.right_inverse.passes(1e-5), "{name}: {r:?}");
    }
}

#[test]
fn mismatched_addition_is_nonlinear() {
    let sc = scenarios::build("twisted_flat", &cfg()).unwrap();
    let mismatched = Arc::new(sc.mismatched_addition(&cfg()).unwrap());
    let rep =
        ChartRepresentation::new(sc.geom.p.clone(), scenario_loop(&sc, 16), mismatched, sigma_n(&sc), NewtonOptions::default())
            .unwrap();
    let opts = PushforwardOptions { n_linearity: 10, ..small_opts() };
    let r = submersion_chart_check(&sc.geom, &rep, &opts, &mut rng(9)).unwrap();
    assert!(r.linearity.max_residual > 1e-2, "{r:?}");
}

#[test]
fn residuals_do_not_grow_under_refinement() {
    let sc = scenarios::build("twisted_flat", &cfg()).unwrap();
    let coarse = submersion_chart_check(&sc.geom, &representation(&sc, 16), &small_opts(), &mut rng(11)).unwrap();
    let fine = submersion_chart_check(&sc.geom, &representation(&sc, 32), &small_opts(), &mut rng(11)).unwrap();
    // node-wise construction: residuals sit at solver accuracy on both grids
    let floor = 1e-9;
    assert!(fine.identity.max_residual < 2.0 * coarse.identity.max_residual.max(floor), "{coarse:?} {fine:?}");
}

#[test]
fn csv_round_trip_is_exact() {
    let f = sphere_loop(12);
    let mut buf = Vec::new();
    write_map_csv(&f, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("node,t,chart_id,x0,x1\n"));
    assert_eq!(read_map_csv(&buf[..], Topology::Circle).unwrap(), f);

    let tau = random_section(&mut rng(12), &f, 3, 0.3);
    let mut buf = Vec::new();
    write_section_csv(&tau, &mut buf).unwrap();
    assert_eq!(read_section_csv(&buf[..], Topology::Circle).unwrap(), tau);

    let bad = "node,t,chart_id,x0\n1,0.0,0,1.0\n";
    assert!(matches!(read_map_csv(bad.as_bytes(), Topology::Circle), Err(Error::ConfigParse(_))));
}
