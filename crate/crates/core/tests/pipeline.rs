//! Public-API tests: timeline derived by hand, frozen ensemble values and
//! invariants checked against finite-difference oracles.

use bohm_core::analysis::check_reflection_symmetry;
use bohm_core::grid::{init_from_analytic, l2_error, GridConfig, GridSizing};
use bohm_core::trajectories::{born_sample, integrate_trajectory, run_ensemble};
use bohm_core::{EventKind, Scenario, ScenarioParams, Vec2, WwLabel};
use proptest::prelude::*;
use std::sync::LazyLock;

fn scenario(which_way: bool) -> Scenario {
    let mut p = ScenarioParams::default();
    p.geometry.which_way = which_way;
    Scenario::new(p).unwrap()
}

static SIMPLE: LazyLock<Scenario> = LazyLock::new(|| scenario(false));
static WW: LazyLock<Scenario> = LazyLock::new(|| scenario(true));

#[test]
fn timeline_matches_flight_times() {
    // Speed ħk/m = 10; source 5, arms 20, tags at 0.8 of the arm.
    for s in [&*SIMPLE, &*WW] {
        assert!((s.split_time() - 0.5).abs() < 1e-12);
        assert!((s.overlap_time() - 4.5).abs() < 1e-12);
        assert!((s.final_time() - 6.5).abs() < 1e-12);
        for e in &s.trace.events {
            let expected = match e.kind {
                EventKind::BeamSplit => 0.5,
                EventKind::Mirror => 2.5,
                EventKind::WwTag(_) => 2.1,
            };
            assert!((e.time - expected).abs() < 1e-12, "{:?} at {}", e.kind, e.time);
        }
        let meet = 2.0 * 20.0 * std::f64::consts::FRAC_1_SQRT_2;
        for p in s.trace.arrival_points {
            assert!((p - Vec2::new(meet, 0.0)).norm() < 1e-9);
        }
    }
    assert_eq!(SIMPLE.trace.events.len(), 3);
    assert_eq!(WW.trace.events.len(), 5);
}

#[test]
fn frozen_small_ensembles() {
    let simple = run_ensemble(&SIMPLE, 40, 7).unwrap();
    assert_eq!(simple.result.counts, [[23, 0], [0, 17]]);
    assert_eq!((simple.result.undetected, simple.result.crossings_of_bs_plane, simple.result.projected_pair_crossings), (0, 0, 0));
    let end = simple.trajectories[0].last();
    assert!((end.x - Vec2::new(37.72226441590114, 15.349797558890701)).norm() < 1e-6);
    assert_eq!(end.t, 6.5);

    let ww = run_ensemble(&WW, 40, 7).unwrap();
    assert_eq!(ww.result.counts, [[0, 23], [17, 0]]);
    assert_eq!((ww.result.crossings_of_bs_plane, ww.result.projected_pair_crossings), (40, 1));
    let end = ww.trajectories[0].last();
    assert!((end.x - Vec2::new(37.72226444403115, -12.934474681114738)).norm() < 1e-6);
    // Same Born samples for both scenarios: the tag does not change |Ψ|² at the split.
    assert_eq!(simple.trajectories[0].points[0].x, ww.trajectories[0].points[0].x);
}

#[test]
fn grid_leg_agrees_with_closed_form() {
    let s = &*WW;
    let (a, b) = (s.split_time() + 0.1, s.split_time() + 1.2);
    let field = s.timeline.field_at(a).unwrap();
    let cfg = GridConfig::covering(field, a, b, &GridSizing::default()).unwrap();
    let state = init_from_analytic(field, cfg, a).unwrap().evolve_to(b).unwrap();
    assert_eq!(state.labels(), &[WwLabel::None]);
    assert!(l2_error(&state, s.timeline.field_at(b).unwrap()) < 1e-6);
}

#[test]
fn reflection_symmetry_holds_after_split() {
    for t in [0.6, 1.7, 3.0, 4.5, 6.0] {
        let f = SIMPLE.timeline.field_at(t).unwrap();
        let r = check_reflection_symmetry(f, &SIMPLE.geometry.beam_splitter, t, 64).unwrap();
        assert!(r.max_field_asymmetry.unwrap() < 1e-9, "t = {t}");
    }
}

/// v = (ħ/m) Im(∇Ψ/Ψ), with the gradient taken by central differences.
fn fd_velocity(s: &Scenario, w: WwLabel, x: Vec2, t: f64) -> Vec2 {
    let f = s.timeline.field_at(t).unwrap();
    let h = 1e-5;
    let psi = f.evaluate(w, &x, t);
    let d = |e: Vec2| (f.evaluate(w, &(x + e * h), t) - f.evaluate(w, &(x - e * h), t)) / (2.0 * h);
    let c = f.constants();
    Vec2::new((d(Vec2::x()) / psi).im, (d(Vec2::y()) / psi).im) * c.hbar_over_m()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn velocity_matches_phase_gradient(seed in 0u64..1000, t in 0.6f64..6.4, ww in proptest::bool::ANY) {
        let s = if ww { &*WW } else { &*SIMPLE };
        let f = s.timeline.field_at(t).unwrap();
        let x = born_sample(f, t, 1, seed).unwrap()[0];
        for w in f.labels() {
            if f.density(&x, t) < 1e-3 * f.peak_density(t) || f.evaluate(w, &x, t).norm_sqr() < 1e-6 * f.peak_density(t) {
                continue;
            }
            let v = f.velocity(w, &x, t).unwrap();
            let fd = fd_velocity(s, w, x, t);
            prop_assert!((v - fd).norm() < 1e-5 * (1.0 + v.norm()), "w = {w:?}, v = {v}, fd = {fd}");
        }
    }

    #[test]
    fn simple_trajectories_stay_on_their_side(seed in 0u64..10_000) {
        let s = &*SIMPLE;
        let t0 = s.split_time();
        let x0 = born_sample(s.timeline.field_at(t0).unwrap(), t0, 1, seed).unwrap()[0];
        let tr = integrate_trajectory(s, x0, t0, s.final_time()).unwrap();
        let plane = &s.geometry.beam_splitter;
        let side = plane.signed_distance(&x0).signum();
        prop_assert!(tr.points.iter().all(|p| plane.signed_distance(&p.x) * side >= 0.0));
        prop_assert!(tr.points.windows(2).all(|p| p[1].t > p[0].t));
    }
}
