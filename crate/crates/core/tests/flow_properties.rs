//! Flow invariants: monotonicity of ascent, the unit-rate level identity,
//! uniqueness and Lipschitz behavior of the level transport, and basin
//! boundaries against the scan oracle.

mod common;

use common::*;
use modalflow::density::{find_critical_points, DEFAULT_G_TOL, DEFAULT_MORSE_TOL};
use modalflow::fixtures;
use modalflow::flow::*;
use modalflow::grid::GridSpec;
use modalflow::point;
use modalflow::verify::{FixtureContext, VerifyFixture};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn ascent_never_decreases_f(
        x in -4.0..7.0f64,
        y in -4.0..5.0f64,
    ) {
        let model = fixtures::bimodal_2d();
        let traj = integrate_flow(&model, &point(&[x, y]), FlowKind::PlainAscent,
            &FlowParams::default()).unwrap();
        for w in traj.samples.windows(2) {
            prop_assert!(w[1].f_value >= w[0].f_value - 1e-9);
            prop_assert!(w[1].tau > w[0].tau);
        }
    }
}

#[test]
fn level_identity_holds_pointwise_in_regular_corridor() {
    let ctx = FixtureContext::build(&VerifyFixture::canonical()[1]);
    let (t, s) = ctx.corridors[0];
    for x0 in ctx.sample_on_level(t, 10) {
        let mut params = FlowParams::default();
        params.target_level = Some(s);
        let traj = integrate_flow(&ctx.model, &x0, FlowKind::NormalizedAscent, &params).unwrap();
        assert_eq!(traj.stop_reason, StopReason::ReachedTargetLevel);
        let f0 = traj.samples[0].f_value;
        for sample in &traj.samples {
            assert!(
                (sample.f_value - (f0 + sample.tau)).abs() < 1e-6,
                "identity violated at tau={}",
                sample.tau
            );
        }
        assert!((traj.end().f_value - s).abs() < 1e-7);
    }
}

#[test]
fn psi_round_trip_and_uniqueness_proxy() {
    let ctx = FixtureContext::build(&VerifyFixture::canonical()[1]);
    let (t, s) = ctx.corridors[1];
    let params = FlowParams::default();
    let starts = ctx.sample_on_level(t, 30);
    let mut images = Vec::new();
    for x in &starts {
        let y = flow_map_psi(&ctx.model, &ctx.critical_values, x, s, &params).unwrap();
        assert!((ctx.model.value(&y) - s).abs() < 1e-7);
        let back = flow_map_psi_down(&ctx.model, &ctx.critical_values, &y, t, &params).unwrap();
        assert!(
            (&back - x).norm() < 1e-5,
            "round trip off by {}",
            (&back - x).norm()
        );
        images.push(y);
    }
    // Distinct starts far enough apart never collide under the map.
    for i in 0..starts.len() {
        for j in i + 1..starts.len() {
            if (&starts[i] - &starts[j]).norm() >= 1e-3 {
                assert!((&images[i] - &images[j]).norm() > 0.0);
            }
        }
    }
}

#[test]
fn psi_is_lipschitz_with_field_consistent_constant() {
    let ctx = FixtureContext::build(&VerifyFixture::canonical()[1]);
    let (t, s) = ctx.corridors[1];
    let params = FlowParams::default();
    let starts = ctx.sample_on_level(t, 40);
    let images: Vec<_> = starts
        .iter()
        .map(|x| flow_map_psi(&ctx.model, &ctx.critical_values, x, s, &params).unwrap())
        .collect();
    // Fitted Lipschitz constant over all pairs.
    let mut fitted = 0.0f64;
    for i in 0..starts.len() {
        for j in i + 1..starts.len() {
            let dx = (&starts[i] - &starts[j]).norm();
            if dx > 1e-6 {
                fitted = fitted.max((&images[i] - &images[j]).norm() / dx);
            }
        }
    }
    // Bound shape: exp(L * (s - t)) with L the field's Lipschitz constant
    // over the corridor band, estimated from the analytic Jacobian of
    // grad f / |grad f|^2 along the sampled trajectories.
    let mut field_lipschitz = 0.0f64;
    for x in &starts {
        let mut p = params.clone();
        p.target_level = Some(s);
        let traj = integrate_flow(&ctx.model, x, FlowKind::NormalizedAscent, &p).unwrap();
        for sample in &traj.samples {
            let ev = ctx.model.eval(&sample.x).unwrap();
            let g2 = ev.gradient.norm_squared();
            let jac = &ev.hessian / g2
                - 2.0 * (&ev.gradient * (ev.gradient.transpose() * &ev.hessian)) / (g2 * g2);
            field_lipschitz = field_lipschitz.max(jac.norm());
        }
    }
    let bound = (field_lipschitz * (s - t)).exp();
    assert!(
        fitted <= bound * 1.05,
        "fitted constant {fitted} exceeds exp-bound {bound}"
    );
    assert!(fitted >= 1e-3, "degenerate fit");
}

#[test]
fn basin_boundary_sits_at_the_valley() {
    let model = fixtures::bimodal_1d();
    let seeds = GridSpec::new(&[(-4.0, 7.0)], &[32]).unwrap();
    let crits = find_critical_points(&model, &seeds, DEFAULT_G_TOL, DEFAULT_MORSE_TOL).points;
    let n = 1000;
    let points: Vec<_> = (0..n)
        .map(|k| point(&[-4.0 + 11.0 * (k as f64 + 0.5) / n as f64]))
        .collect();
    let assignment = assign_basins(&model, &crits, &points, &BasinParams::default()).unwrap();
    let mut used: Vec<usize> = assignment
        .labels
        .iter()
        .filter_map(|l| match l {
            BasinLabel::Mode(i) => Some(*i),
            BasinLabel::Noise => None,
        })
        .collect();
    used.sort_unstable();
    used.dedup();
    assert_eq!(used.len(), 2, "exactly two labels used");
    // The left-of-valley points all share one label, the rest the other;
    // the flip happens within 1e-3 of the scan-oracle valley (grid spacing
    // already exceeds 1e-3, so the flip must bracket the valley).
    let mut boundary = None;
    for k in 1..n {
        if assignment.labels[k] != assignment.labels[k - 1] {
            assert!(boundary.is_none(), "single boundary expected");
            boundary = Some(0.5 * (points[k - 1][0] + points[k][0]));
        }
    }
    let boundary = boundary.expect("a boundary");
    let spacing = 11.0 / n as f64;
    assert!(
        (boundary - BIMODAL1D_VALLEY).abs() < spacing / 2.0 + 1e-3,
        "boundary {boundary} vs valley {}",
        BIMODAL1D_VALLEY
    );
}

#[test]
fn psi_down_requires_descending_target() {
    let model = fixtures::bimodal_2d();
    let x = point(&[0.5, -0.2]);
    let t = model.value(&x);
    assert!(matches!(
        flow_map_psi_down(&model, &[], &x, t + 0.01, &FlowParams::default()),
        Err(TransportMapError::InvalidDirection { .. })
    ));
    assert!(matches!(
        flow_map_psi(&model, &[], &x, t - 0.01, &FlowParams::default()),
        Err(TransportMapError::InvalidDirection { .. })
    ));
}

#[test]
fn fukunaga_ascent_reaches_the_mode_from_moderate_tail() {
    let model = fixtures::bimodal_1d();
    let traj = integrate_flow(
        &model,
        &point(&[-2.0]),
        FlowKind::FukunagaAscent,
        &FlowParams::default(),
    )
    .unwrap();
    assert_eq!(traj.stop_reason, StopReason::ConvergedToCritical);
    assert!((traj.end().x[0] - BIMODAL1D_MODE_LEFT).abs() < 1e-5);
    for w in traj.samples.windows(2) {
        assert!(w[1].f_value >= w[0].f_value - 1e-9);
    }
}
