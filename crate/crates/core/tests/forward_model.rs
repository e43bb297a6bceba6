//! Measurement model checks: bucket estimator, phasor structure, noise level.

use std::f64::consts::TAU;

use proptest::prelude::*;
use tofsep::{
    complex_noise_std, four_bucket_estimate, measure, measure_direct, simulate_buckets, Complex64,
    Layer, ModulationPlan, Scene, SPEED_OF_LIGHT,
};

const F0: f64 = 0.7937e6;

fn one_pixel(layers: &[(f64, f64)]) -> Scene {
    Scene::new(1, 1, layers.iter().map(|&(d, a)| Layer::uniform(1, 1, d, a)).collect())
}

#[test]
fn three_layer_pixel_matches_phasor_sum() {
    let plan = ModulationPlan::new(F0, 77);
    let layers = [(0.3, 0.5), (4.2, 0.3), (8.1, 0.15)];
    let cube = measure(&one_pixel(&layers), &plan, 0.0, 0).unwrap();
    for n in 1..=77 {
        let omega = TAU * F0 * n as f64;
        let want: Complex64 = layers
            .iter()
            .map(|&(d, a)| Complex64::from_polar(a, 2.0 * d * omega / SPEED_OF_LIGHT))
            .sum();
        assert!((cube.value(0, 0, n) - want).norm() <= 1e-9, "harmonic {n}");
    }
}

#[test]
fn noise_std_scales_with_sigma() {
    let side = 100;
    let scene = Scene::new(side, side, vec![Layer::uniform(side, side, 2.0, 0.5)]);
    let mut plan = ModulationPlan::new(F0, 1);
    plan.modulation_depth = 0.8;
    let clean = measure_direct(&scene, &plan).unwrap().values[0];
    let mut measured = Vec::new();
    for sigma in [0.005, 0.01, 0.02, 0.04] {
        let cube = measure(&scene, &plan, sigma, 77).unwrap();
        let n = cube.values.len() as f64;
        let (re, im): (Vec<f64>, Vec<f64>) =
            cube.values.iter().map(|z| (z.re - clean.re, z.im - clean.im)).unzip();
        let std = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / n;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let want = complex_noise_std(sigma, plan.modulation_depth);
        assert!((want - std::f64::consts::SQRT_2 * sigma / 0.64).abs() < 1e-15);
        for got in [std(&re), std(&im)] {
            assert!((got / want - 1.0).abs() < 0.1, "sigma {sigma}: {got} vs {want}");
        }
        measured.push(std(&re) / sigma);
    }
    let first = measured[0];
    assert!(measured.iter().all(|m| (m / first - 1.0).abs() < 0.1));
}

#[test]
fn seeds_change_noise_and_repeat_exactly() {
    let scene = Scene::new(4, 3, vec![Layer::uniform(4, 3, 1.0, 0.5)]);
    let plan = ModulationPlan::new(F0, 5);
    let a = measure(&scene, &plan, 0.01, 1).unwrap();
    let b = measure(&scene, &plan, 0.01, 1).unwrap();
    let c = measure(&scene, &plan, 0.01, 2).unwrap();
    assert_eq!(a.values, b.values);
    assert_ne!(a.values, c.values);
}

proptest! {
    #[test]
    fn bucket_round_trip(gamma in 0.001f64..=1.0, phi in 0.0..TAU, s0 in 0.01f64..=1.0) {
        let mut plan = ModulationPlan::new(F0, 1);
        plan.modulation_depth = s0;
        let depth = phi * SPEED_OF_LIGHT / (2.0 * plan.angular_frequency(1));
        let buckets = simulate_buckets(&one_pixel(&[(depth, gamma)]), &plan, 0.0, 0).unwrap();
        let e = four_bucket_estimate(buckets.get(0, 0, 1), s0).unwrap();
        prop_assert!((e.amplitude - gamma).abs() <= 1e-9);
        let d = (e.phase - phi).rem_euclid(TAU);
        prop_assert!(d.min(TAU - d) <= 1e-9);
        prop_assert!((0.0..TAU).contains(&e.phase));
    }

    #[test]
    fn measurement_is_linear_in_layers(
        d1 in 0.0f64..100.0, gap in 0.01f64..50.0,
        a1 in 0.0f64..=0.5, a2 in 0.0f64..=0.5,
        n in 1usize..20,
    ) {
        let plan = ModulationPlan::new(F0, n);
        let both = measure(&one_pixel(&[(d1, a1), (d1 + gap, a2)]), &plan, 0.0, 0).unwrap();
        let first = measure(&one_pixel(&[(d1, a1)]), &plan, 0.0, 0).unwrap();
        let second = measure(&one_pixel(&[(d1 + gap, a2)]), &plan, 0.0, 0).unwrap();
        for h in 0..n {
            prop_assert!((both.values[h] - first.values[h] - second.values[h]).norm() <= 1e-9);
        }
    }

    #[test]
    fn single_layer_harmonics_are_powers(depth in 0.0f64..200.0, a in 0.01f64..=1.0, n in 2usize..40) {
        let plan = ModulationPlan::new(F0, n);
        let cube = measure_direct(&one_pixel(&[(depth, a)]), &plan).unwrap();
        let unit = |z: Complex64| z / z.norm();
        let base = unit(cube.value(0, 0, 1));
        for h in 1..=n {
            prop_assert!((unit(cube.value(0, 0, h)) - base.powu(h as u32)).norm() <= 1e-9);
        }
    }
}
