//! Pulse areas checked against direct numerical integration of the Gaussian
//! transit, independent of the `sqrt(pi) w / v` shortcut.

use cavitybus_core::model::REF_VELOCITY;
use cavitybus_core::oracle::TransitHamiltonian;
use cavitybus_core::{coupling_strength, effective_duration, pulse_angle, CavityMode, IonArray};
use proptest::prelude::*;

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Area under `exp(-(v t / w)^2)` over `|v t| <= 8 w`.
fn transit_integral(waist: f64, velocity: f64) -> f64 {
    let half = 8.0 * waist / velocity;
    simpson(|t| (-(velocity * t / waist).powi(2)).exp(), -half, half, 4000)
}

#[test]
fn effective_duration_matches_quadrature() {
    let mode = CavityMode::default();
    let quad = transit_integral(mode.waist, REF_VELOCITY);
    let t_eff = effective_duration(&mode, REF_VELOCITY).unwrap();
    assert!((quad / t_eff - 1.0).abs() < 1e-6, "{quad} vs {t_eff}");
    // 2.21557e-8 s to six significant digits
    assert!((quad - 2.21557e-8).abs() < 0.000005e-8);
}

#[test]
fn envelope_integral_is_the_pulse_angle() {
    let mode = CavityMode::default();
    let array = IonArray::uniform(20e-6, &[0.0, 9.8204e-6, 5.2083e-6], 0.0).unwrap();
    let ham = TransitHamiltonian::new(mode, array.clone(), REF_VELOCITY).unwrap();
    let t_eff = effective_duration(&mode, REF_VELOCITY).unwrap();
    for site in array.sites() {
        let centre = site.x / REF_VELOCITY;
        let half = 8.0 * mode.waist / REF_VELOCITY;
        let area = simpson(
            |t| ham.envelope(site.index, t).unwrap(),
            centre - half,
            centre + half,
            4000,
        );
        let expected = pulse_angle(coupling_strength(&mode, site.y, site.z).unwrap(), t_eff);
        assert!(
            (area / expected - 1.0).abs() < 1e-6,
            "ion {}: {area} vs {expected}",
            site.index
        );
    }
}

proptest! {
    #[test]
    fn pulse_area_equivalence(
        y in 0.0f64..20e-6,
        z in -400e-9f64..400e-9,
        v in 100.0f64..5000.0,
        w in 2e-6f64..50e-6,
    ) {
        let mode = CavityMode { waist: w, ..CavityMode::default() };
        let omega = coupling_strength(&mode, y, z).unwrap();
        let quad = omega * transit_integral(w, v);
        let expected = pulse_angle(omega, effective_duration(&mode, v).unwrap());
        prop_assume!(expected.abs() > 1e-300);
        prop_assert!((quad / expected - 1.0).abs() < 1e-6);
    }
}
