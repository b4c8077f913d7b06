//! Linear statistics: reduction to the nodal length, moment identities, the
//! W transform and approximation of caps by smooth profiles.

use nodalsphere::kacrice::{kernel_samples, KacRiceConfig};
use nodalsphere::linstat::{
    c_of_phi, even_part, expected_linstat, second_moment_from, variance_linstat_from, w0_model, w_transform, LinstatConfig,
    ZonalProfile,
};
use nodalsphere::{Error, TestFunction};
use std::f64::consts::PI;

const AXIS: [f64; 3] = [0.0, 0.0, 1.0];

#[test]
fn constant_one_reproduces_the_nodal_variance() {
    let ks = kernel_samples(30, &KacRiceConfig::default()).unwrap();
    let v = ks.variance().unwrap().variance;
    let cfg = LinstatConfig::default();
    let one = variance_linstat_from(&ks, &TestFunction::constant(1.0), &cfg).unwrap();
    assert!((one.variance - v).abs() < 1e-10 * v, "{} vs {v}", one.variance);
    let three = variance_linstat_from(&ks, &TestFunction::constant(3.0), &cfg).unwrap();
    assert!((three.variance - 9.0 * v).abs() < 1e-9 * v);
}

#[test]
fn second_moment_is_variance_plus_squared_mean() {
    let n = 20;
    let ks = kernel_samples(n, &KacRiceConfig::default()).unwrap();
    let cfg = LinstatConfig::default();
    for phi in [TestFunction::cap([0.6, 0.0, 0.8], 0.5).unwrap(), TestFunction::constant(1.0)] {
        let m2 = second_moment_from(&ks, &phi, &cfg).unwrap();
        let var = variance_linstat_from(&ks, &phi, &cfg).unwrap().variance;
        let mean = expected_linstat(n, &phi);
        // both sides carry the ψ-quadrature error of the ¼·W term
        assert!((m2 - (var + mean * mean)).abs() < 1e-6 * m2, "{m2} vs {}", var + mean * mean);
    }
}

#[test]
fn hemisphere_variance_is_a_quarter() {
    // the even part of a hemisphere indicator is the constant 1/2
    let ks = kernel_samples(25, &KacRiceConfig::default()).unwrap();
    let v = ks.variance().unwrap().variance;
    let h = TestFunction::hemisphere([0.0, 1.0, 0.0]).unwrap();
    let vh = variance_linstat_from(&ks, &h, &LinstatConfig::default()).unwrap();
    assert!((vh.variance - 0.25 * v).abs() < 1e-10);
    // the literal constant of the log law for a hemisphere
    assert!((c_of_phi(&h).unwrap() - 65.0 / 64.0).abs() < 1e-12);
}

#[test]
fn w_of_constant_one_is_sine() {
    let t = w_transform(&TestFunction::constant(1.0), 128).unwrap();
    for (d, w) in t.angles.iter().zip(&t.w) {
        assert!((w - d.sin()).abs() < 1e-12);
    }
}

#[test]
fn w0_at_zero_is_twice_pi_times_l2_norm() {
    let cfg = LinstatConfig::default();
    let funcs = [
        TestFunction::cap([0.0, 0.0, 1.0], 0.7).unwrap(),
        TestFunction::cap([1.0, 0.0, 0.0], 2.0).unwrap(),
        TestFunction::zonal(AXIS, ZonalProfile::SmoothCap { radius: 0.8, width: 0.3 }).unwrap(),
        TestFunction::zonal(AXIS, ZonalProfile::Polynomial(vec![0.5, 0.0, 1.5])).unwrap(),
    ];
    for phi in &funcs {
        let w0 = w0_model(phi, &cfg).unwrap().w0(0.0);
        let target = 2.0 * PI * phi.l2_norm_sq;
        assert!((w0 - target).abs() < 1e-6 * target, "{w0} vs {target}");
    }
}

#[test]
fn zero_function_has_no_log_constant() {
    // an odd polynomial profile has zero even part
    let odd = TestFunction::zonal(AXIS, ZonalProfile::Polynomial(vec![0.0, 1.0])).unwrap();
    assert!(even_part(&odd).is_zero());
    assert!(matches!(c_of_phi(&TestFunction::constant(0.0)), Err(Error::ZeroFunction)));
    let ks = kernel_samples(12, &KacRiceConfig::default()).unwrap();
    let v = variance_linstat_from(&ks, &odd, &LinstatConfig::default()).unwrap();
    assert_eq!(v.variance, 0.0);
}

#[test]
fn smooth_caps_converge_to_the_cap() {
    let n = 20;
    let ks = kernel_samples(n, &KacRiceConfig::default()).unwrap();
    let cfg = LinstatConfig::default();
    let r = 0.6;
    let cap = variance_linstat_from(&ks, &TestFunction::cap(AXIS, r).unwrap(), &cfg).unwrap().variance;
    // the gap closes roughly linearly in the width (0.016, 0.012, 0.006, 0.0023 at n = 20)
    let mut last = f64::INFINITY;
    let mut first = None;
    for w in [0.2, 0.1, 0.05, 0.025] {
        let phi = TestFunction::zonal(AXIS, ZonalProfile::SmoothCap { radius: r, width: w }).unwrap();
        let v = variance_linstat_from(&ks, &phi, &cfg).unwrap().variance;
        let gap = (v - cap).abs();
        assert!(gap < last, "width {w}: gap {gap} did not shrink from {last}");
        last = gap;
        first.get_or_insert(gap);
    }
    assert!(last < 0.2 * first.unwrap());
    assert!(last < 0.1 * cap, "{last} vs cap variance {cap}");
}

#[test]
fn variance_is_continuous_in_the_radius() {
    let ks = kernel_samples(15, &KacRiceConfig::default()).unwrap();
    let cfg = LinstatConfig::default();
    let v = |r: f64| variance_linstat_from(&ks, &TestFunction::cap(AXIS, r).unwrap(), &cfg).unwrap().variance;
    for r in [0.3, 1.0, 2.0] {
        let (a, b) = (v(r), v(r + 1e-3));
        assert!((a - b).abs() < 1e-2 * a.max(b), "r={r}: {a} vs {b}");
    }
}
