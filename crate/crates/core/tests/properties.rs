use std::f64::consts::PI;
use std::sync::Arc;

use finform::adapt::{monotone_norm_violation, virtual_equivalence_check, Parametrization};
use finform::excitation::{convergence_rate, gram_window, nonlinear_pe_probe, pe_verdict};
use finform::integrate::{signal_norm, Channel, Norm, Trace};
use finform::scenarios::fixtures;
use finform::scenarios::lugre::RoadProfile;
use finform::scenarios::spring::{spring_state_bound, SpringConfig};
use finform::scenarios::wheel::{WheelConfig, WheelLoop, SLIP_RANGE};
use finform::verify::{self, check_monotonicity};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn alpha_trace(h: f64, tf: f64, f: impl Fn(f64) -> Vec<f64>, width: usize) -> Trace {
    let n = (tf / h).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    let data: Vec<f64> = times.iter().flat_map(|&t| f(t)).collect();
    Trace::from_channels(0, times, vec![("alpha".into(), Channel::from_rows(width, data))]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_psd(w1 in 0.1f64..4.0, w2 in 0.1f64..4.0, a in -2.0f64..2.0, ta in 0.0f64..2.0, len in 0.5f64..4.0) {
        let tr = alpha_trace(1e-2, 7.0, |t| vec![(w1 * t).sin(), a * (w2 * t).cos(), 1.0], 3);
        let g = gram_window(&tr, "alpha", (ta, ta + len)).unwrap();
        prop_assert!((&g - g.transpose()).amax() == 0.0);
        prop_assert!(pe_verdict(&g, 0.0).lambda_min >= -1e-10);
    }

    #[test]
    fn pe_verdict_is_monotone_in_delta(w in 0.2f64..3.0, delta in 0.0f64..5.0, shrink in 0.0f64..1.0) {
        let tr = alpha_trace(1e-2, 7.0, |t| vec![(w * t).sin(), (w * t).cos()], 2);
        let g = gram_window(&tr, "alpha", (0.0, 2.0 * PI)).unwrap();
        if pe_verdict(&g, delta).satisfied {
            prop_assert!(pe_verdict(&g, delta * shrink).satisfied);
        }
    }

    #[test]
    fn certified_rate_is_positive(delta in 1e-3f64..10.0, len in 0.1f64..10.0, d1 in 0.01f64..1.0, ratio in 1.0f64..10.0, g in 0.01f64..10.0, a in 0.1f64..3.0) {
        let cert = convergence_rate(delta, len, d1 * ratio, d1, &DMatrix::from_element(1, 1, g), a).unwrap();
        prop_assert!(cert.rho > 0.0);
        prop_assert!(cert.d_gamma >= 1.0);
    }

    #[test]
    fn sup_norm_dominates_every_sample(a in -3.0f64..3.0, w in 0.1f64..5.0, b in -1.0f64..1.0) {
        let tr = alpha_trace(1e-2, 3.0, |t| vec![a * (w * t).sin() + b], 1);
        let sup = signal_norm(&tr, "alpha", Norm::Inf, (0.0, 3.0)).unwrap();
        let ch = tr.channel("alpha").unwrap();
        prop_assert!(sup >= ch.scalar(0).abs() && sup >= ch.scalar(tr.len() - 1).abs());
    }

    #[test]
    fn growth_bounds_are_ordered(k1 in 0.1f64..3.0, k2 in 0.1f64..3.0) {
        // f = αθ + k·tanh-shaped term keeps the slope between two positive constants.
        let (lo, hi) = (k1.min(k2), k1.max(k2));
        let parm = Parametrization::new(
            1,
            1,
            Arc::new(move |x: &DVector<f64>, th: &DVector<f64>, _| {
                let s = x[0] * th[0];
                lo * s + (hi - lo) * s.tanh()
            }),
            Arc::new(|x: &DVector<f64>, _| DVector::from_element(1, x[0])),
            1.0,
            1.0,
        ).unwrap();
        let x_grid = verify::box_grid(&[-2.0], &[2.0], 9);
        let pairs = verify::ordered_pairs(&verify::box_grid(&[-1.0], &[1.0], 9));
        let g = verify::estimate_growth_bounds(&parm, &x_grid, &pairs, 0.0).unwrap();
        prop_assert!(g.lower > 0.0 && g.lower <= g.upper);
        prop_assert!(check_monotonicity(&parm, &x_grid, &pairs, 0.0).passed());
    }

    #[test]
    fn road_profile_is_right_continuous(split in 1.0f64..50.0, a in 0.3f64..1.5, b in 0.3f64..1.5) {
        let road = RoadProfile::new(vec![split], vec![a, b]).unwrap();
        prop_assert_eq!(road.theta(split - 1e-9), a);
        prop_assert_eq!(road.theta(split), a);
        prop_assert_eq!(road.theta(split + 1e-9), b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn spring_estimate_is_monotone(lambda in 0.3f64..3.0, x1 in -2.0f64..2.0, theta in -1.5f64..1.5, theta_hat0 in -1.5f64..1.5, gamma in 0.2f64..3.0) {
        let cfg = SpringConfig { lambda, x1_0: x1, theta, theta_hat0, gamma, tf: 10.0, ..Default::default() };
        let tr = cfg.run().unwrap();
        prop_assert!(monotone_norm_violation(&tr, &DMatrix::from_element(1, 1, gamma)).unwrap() <= 1e-6);
        prop_assert!(spring_state_bound(&tr, lambda).unwrap().holds());
        prop_assert!(virtual_equivalence_check(&tr, &DMatrix::from_element(1, 1, gamma)).unwrap() < 1e-4);
    }

    #[test]
    fn wheel_slip_stays_in_range(speed in 20.0f64..40.0) {
        let tr = WheelLoop::new(WheelConfig { x1_0: speed, ..Default::default() }).unwrap().run().unwrap();
        let x = tr.channel("x").unwrap();
        // x3 starts at zero (free-rolling wheel); once braking engages it must stay
        // inside the slip range the growth constants were estimated on.
        let (lo, hi) = SLIP_RANGE;
        let engaged = (0..tr.len()).find(|&k| x.row(k)[2] >= lo).expect("brake never engages");
        for k in engaged..tr.len() {
            let x3 = x.row(k)[2];
            prop_assert!((lo..=hi).contains(&x3), "x3={x3} at t={}", tr.times()[k]);
        }
    }
}

#[test]
fn rerun_is_bit_identical() {
    let cfg = SpringConfig { tf: 5.0, eps_amplitude: 0.1, ..Default::default() };
    let (a, b) = (cfg.run().unwrap(), cfg.run().unwrap());
    assert_eq!(a.times(), b.times());
    for name in a.channel_names() {
        let (ca, cb) = (a.channel(name).unwrap(), b.channel(name).unwrap());
        assert!(ca.rows().zip(cb.rows()).all(|(r, s)| r.iter().zip(s).all(|(u, v)| u.to_bits() == v.to_bits())), "{name}");
    }
}

#[test]
fn probe_envelope_is_non_decreasing() {
    let tr = {
        let n = 2000;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * 5e-3).collect();
        let data: Vec<f64> = times.iter().flat_map(|&t| [t.sin(), t.cos()]).collect();
        Trace::from_channels(1, times, vec![("x".into(), Channel::from_rows(2, data))]).unwrap()
    };
    let f = |x: &DVector<f64>, th: &DVector<f64>, _t: f64| (x[0] * th[0]).tanh();
    let pairs = verify::ordered_pairs(&verify::box_grid(&[-1.0], &[1.0], 15));
    let bins = nonlinear_pe_probe(f, &tr, &pairs, 2.0 * PI, 6).unwrap();
    assert!(bins.windows(2).all(|w| w[0].envelope <= w[1].envelope));
    assert!(bins.iter().all(|b| b.envelope <= b.raw));
}

#[test]
fn fixtures_hold_on_fine_grids_and_flipped_control_fails() {
    for f in fixtures::all(10).unwrap() {
        let r = f.monotonicity();
        assert!(r.passed(), "{}: {} violations", f.name, r.violation_count);
        let g = f.growth().unwrap();
        assert!(g.lower > 0.0 && g.lower <= g.upper, "{}: {g:?}", f.name);
    }
    assert!(!fixtures::stiction_flipped(10).unwrap().monotonicity().passed());
}

#[test]
fn estimate_settles_on_each_road_segment() {
    let cfg = WheelConfig::default();
    let tr = WheelLoop::new(cfg.clone()).unwrap().run().unwrap();
    let (s, th, theta) = (tr.channel("s").unwrap(), tr.channel("theta_hat").unwrap(), tr.channel("theta").unwrap());
    let mut checked = 0;
    for k in 1..tr.len() {
        let switched = theta.scalar(k) != theta.scalar(k - 1);
        if switched || k == tr.len() - 1 {
            let seg = cfg.road.segment(s.scalar(k - 1));
            let start = if seg == 0 { 0.0 } else { cfg.road.breakpoints()[seg - 1] };
            if s.scalar(k - 1) - start > 5.0 {
                let err = (th.scalar(k - 1) - theta.scalar(k - 1)).abs();
                assert!(err < 0.05, "segment {seg}: |θ̂ − θ| = {err} at s = {}", s.scalar(k - 1));
                checked += 1;
            }
        }
    }
    assert!(checked >= 5, "{checked}");
}
