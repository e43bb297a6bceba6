//! Homodyne sensor model: correlation bucket samples, 4-bucket amplitude and
//! phase estimation, and the single-frequency depth baseline.
//!
//! Noise is added to the bucket samples. Each pixel draws from its own
//! ChaCha8 stream: the generator is seeded with the run seed and the stream
//! id is set to the row-major pixel index, so results do not depend on the
//! order in which pixels are processed.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{validate_scene, DcOffset, MeasurementCube, ModulationPlan, Scene};
use crate::SPEED_OF_LIGHT;

/// Round-trip delay phase `2 d omega / c`, not wrapped.
pub fn phase_of_depth(depth: f64, omega: f64) -> Result<f64> {
    if !(depth.is_finite() && depth >= 0.0) {
        return Err(Error::Domain(format!("depth must be finite and >= 0, got {depth}")));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::Domain(format!("angular frequency must be > 0, got {omega}")));
    }
    Ok(2.0 * depth * omega / SPEED_OF_LIGHT)
}

/// Per-part standard deviation of the noise on `z` produced by bucket noise
/// of standard deviation `sigma`: `z = ((m0 - m2) + j (m3 - m1)) / s0^2`.
pub fn complex_noise_std(sigma: f64, modulation_depth: f64) -> f64 {
    std::f64::consts::SQRT_2 * sigma / (modulation_depth * modulation_depth)
}

/// Correlation samples for every `(pixel, harmonic)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSamples {
    pub width: usize,
    pub height: usize,
    pub harmonic_count: usize,
    /// Indexed `(y * width + x) * N + (n - 1)`.
    pub samples: Vec<[f64; 4]>,
}

impl BucketSamples {
    pub fn get(&self, x: usize, y: usize, harmonic: usize) -> &[f64; 4] {
        &self.samples[(y * self.width + x) * self.harmonic_count + harmonic - 1]
    }
}

fn check_inputs(scene: &Scene, plan: &ModulationPlan, noise_sigma: f64) -> Result<()> {
    plan.validate()?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let report = validate_scene(scene);
    if !report.is_empty() {
        return Err(Error::InvalidScene(report));
    }
    Ok(())
}

fn pixel_buckets(
    components: &[(f64, f64)],
    plan: &ModulationPlan,
    noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>,
) -> Vec<[f64; 4]> {
    let c0 = match plan.dc_offset {
        DcOffset::SumOfAmplitudes => components.iter().map(|&(_, a)| a).sum(),
        DcOffset::Constant(c) => c,
    };
    let half_s2 = 0.5 * plan.modulation_depth * plan.modulation_depth;
    let mut out = Vec::with_capacity(plan.harmonic_count);
    for n in 1..=plan.harmonic_count {
        let omega = plan.angular_frequency(n);
        let mut m = [c0; 4];
        for &(depth, amplitude) in components {
            let phi = 2.0 * depth * omega / SPEED_OF_LIGHT;
            for (q, mq) in m.iter_mut().enumerate() {
                // omega * tau_q = q pi / 2 exactly
                *mq += half_s2 * amplitude * (q as f64 * FRAC_PI_2 + phi).cos();
            }
        }
        out.push(m);
    }
    if let Some((normal, rng)) = noise {
        for m in out.iter_mut() {
            for mq in m.iter_mut() {
                *mq += normal.sample(rng);
            }
        }
    }
    out
}

/// Simulates the four correlation samples of every pixel at every harmonic,
/// plus i.i.d. Gaussian noise of standard deviation `noise_sigma`.
pub fn simulate_buckets(
    scene: &Scene,
    plan: &ModulationPlan,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<BucketSamples> {
    check_inputs(scene, plan, noise_sigma)?;
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let width = scene.width;
    let samples: Vec<[f64; 4]> = (0..scene.pixel_count())
        .into_par_iter()
        .flat_map_iter(|p| {
            let components = scene.components_at(p % width, p / width);
            if noise_sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                rng.set_stream(p as u64);
                pixel_buckets(&components, plan, Some((&normal, &mut rng)))
            } else {
                pixel_buckets(&components, plan, None)
            }
        })
        .collect();
    Ok(BucketSamples {
        width: scene.width,
        height: scene.height,
        harmonic_count: plan.harmonic_count,
        samples,
    })
}

/// Amplitude and phase recovered from four quarter-period samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketEstimate {
    pub amplitude: f64,
    /// In `[0, 2 pi)`.
    pub phase: f64,
    /// All differences were zero; phase is reported as 0.
    pub degenerate: bool,
}

impl BucketEstimate {
    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Wraps an angle into `[0, 2 pi)`.
pub(crate) fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// 4-bucket estimator: amplitude `sqrt((m3-m1)^2 + (m0-m2)^2) / s0^2` and
/// phase `atan2(m3 - m1, m0 - m2)`.
pub fn four_bucket_estimate(samples: &[f64], modulation_depth: f64) -> Result<BucketEstimate> {
    let [m0, m1, m2, m3] = <[f64; 4]>::try_from(samples).map_err(|_| {
        Error::Domain(format!("expected exactly 4 bucket samples, got {}", samples.len()))
    })?;
    if !(modulation_depth > 0.0) {
        return Err(Error::Domain(format!(
            "modulation depth must be > 0, got {modulation_depth}"
        )));
    }
    let sin_part = m3 - m1;
    let cos_part = m0 - m2;
    if sin_part == 0.0 && cos_part == 0.0 {
        return Ok(BucketEstimate {
            amplitude: 0.0,
            phase: 0.0,
            degenerate: true,
        });
    }
    Ok(BucketEstimate {
        amplitude: sin_part.hypot(cos_part) / (modulation_depth * modulation_depth),
        phase: wrap_phase(sin_part.atan2(cos_part)),
        degenerate: false,
    })
}

/// Measures a scene: simulated buckets reduced to one phasor per pixel and harmonic.
pub fn measure(
    scene: &Scene,
    plan: &ModulationPlan,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<MeasurementCube> {
    let buckets = simulate_buckets(scene, plan, noise_sigma, rng_seed)?;
    let values = buckets
        .samples
        .par_iter()
        .map(|m| four_bucket_estimate(m, plan.modulation_depth).map(|e| e.phasor()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementCube {
        width: scene.width,
        height: scene.height,
        plan: *plan,
        noise_sigma,
        values,
    })
}

/// Noiseless cube from the phasor sum `sum_k Gamma_k exp(j phi_k(n omega0))`,
/// bypassing the bucket model.
pub fn measure_direct(scene: &Scene, plan: &ModulationPlan) -> Result<MeasurementCube> {
    check_inputs(scene, plan, 0.0)?;
    let width = scene.width;
    let values = (0..scene.pixel_count())
        .into_par_iter()
        .flat_map_iter(|p| {
            let components = scene.components_at(p % width, p / width);
            (1..=plan.harmonic_count)
                .map(|n| {
                    let omega = plan.angular_frequency(n);
                    components
                        .iter()
                        .map(|&(d, a)| Complex64::from_polar(a, 2.0 * d * omega / SPEED_OF_LIGHT))
                        .sum::<Complex64>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(MeasurementCube {
        width: scene.width,
        height: scene.height,
        plan: *plan,
        noise_sigma: 0.0,
        values,
    })
}

/// Depth read from the phase of a single-frequency phasor, `c arg(z) / (2 omega)`.
/// This is the multipath-corrupted baseline. `None` means no signal (`z = 0`).
pub fn single_frequency_depth(z: Complex64, omega: f64) -> Option<f64> {
    if z.re == 0.0 && z.im == 0.0 {
        return None;
    }
    Some(SPEED_OF_LIGHT * wrap_phase(z.arg()) / (2.0 * omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;
    use std::f64::consts::PI;

    fn one_pixel(layers: &[(f64, f64)]) -> Scene {
        Scene::new(1, 1, layers.iter().map(|&(d, a)| Layer::uniform(1, 1, d, a)).collect())
    }

    #[test]
    fn phase_of_zero_depth_is_zero() {
        assert_eq!(phase_of_depth(0.0, 1e7).unwrap(), 0.0);
    }

    #[test]
    fn phase_of_quarter_range_is_pi() {
        let omega = 2.0 * PI * 5e6;
        let d = PI * SPEED_OF_LIGHT / (2.0 * omega);
        assert!((phase_of_depth(d, omega).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn phase_of_far_wall() {
        // 4 pi f d / c with f = 0.7937 MHz, d = 8.1 m
        let expected = 4.0 * PI * 0.7937e6 * 8.1 / 299_792_458.0;
        let got = phase_of_depth(8.1, 2.0 * PI * 0.7937e6).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.2695).abs() < 5e-5);
    }

    #[test]
    fn negative_depth_is_a_domain_error() {
        assert!(matches!(phase_of_depth(-0.1, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn unit_layer_at_zero_phase_gives_textbook_buckets() {
        let mut plan = ModulationPlan::new(1e6, 1);
        plan.dc_offset = DcOffset::Constant(1.0);
        let b = simulate_buckets(&one_pixel(&[(0.0, 1.0)]), &plan, 0.0, 0).unwrap();
        let m = b.get(0, 0, 1);
        for (got, want) in m.iter().zip([1.5, 1.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-15, "{m:?}");
        }
    }

    #[test]
    fn zero_amplitude_scene_is_flat_dc() {
        let mut plan = ModulationPlan::new(1e6, 3);
        plan.dc_offset = DcOffset::Constant(0.75);
        let b = simulate_buckets(&one_pixel(&[(2.0, 0.0)]), &plan, 0.0, 0).unwrap();
        assert!(b.samples.iter().flatten().all(|&m| m == 0.75));
    }

    #[test]
    fn two_layer_buckets_match_direct_sum() {
        let plan = ModulationPlan::new(10e6, 1);
        let b = simulate_buckets(&one_pixel(&[(1.0, 0.6), (3.0, 0.3)]), &plan, 0.0, 0).unwrap();
        let omega = 2.0 * PI * 10e6;
        for q in 0..4 {
            let tau = PI * q as f64 / (2.0 * omega);
            let mut want = 0.9;
            for (d, g) in [(1.0, 0.6), (3.0, 0.3)] {
                want += 0.5 * g * (omega * tau + 2.0 * d * omega / 299_792_458.0).cos();
            }
            assert!((b.get(0, 0, 1)[q] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_scene_is_rejected_with_report() {
        let plan = ModulationPlan::new(1e6, 1);
        let err = simulate_buckets(&one_pixel(&[(1.0, 1.5)]), &plan, 0.0, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidScene(ref v) if v.len() == 1));
    }

    #[test]
    fn four_bucket_inverts_textbook_samples() {
        let e = four_bucket_estimate(&[1.5, 1.0, 0.5, 1.0], 1.0).unwrap();
        assert!((e.amplitude - 1.0).abs() < 1e-15);
        assert_eq!(e.phase, 0.0);
        assert!(!e.degenerate);
    }

    #[test]
    fn constant_buckets_are_degenerate() {
        let e = four_bucket_estimate(&[0.3; 4], 0.5).unwrap();
        assert_eq!((e.amplitude, e.phase, e.degenerate), (0.0, 0.0, true));
    }

    #[test]
    fn wrong_sample_count_is_rejected() {
        assert!(four_bucket_estimate(&[1.0, 2.0, 3.0], 1.0).is_err());
    }

    #[test]
    fn phase_is_wrapped_nonnegative() {
        // sin part negative => atan2 < 0 before wrapping
        let e = four_bucket_estimate(&[1.0, 1.5, 1.0, 0.5], 1.0).unwrap();
        assert!((e.phase - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn zero_depth_layer_measures_real_amplitude() {
        let plan = ModulationPlan::new(0.7937e6, 5);
        let cube = measure(&one_pixel(&[(0.0, 0.7)]), &plan, 0.0, 0).unwrap();
        for z in cube.pixel(0, 0) {
            assert!((z - Complex64::new(0.7, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn opposite_phasors_cancel() {
        // second layer half a wavelength of harmonic 1 behind the first
        let f0 = 1e6;
        let d = SPEED_OF_LIGHT / (4.0 * f0);
        let plan = ModulationPlan::new(f0, 3);
        let cube = measure(&one_pixel(&[(0.0, 0.4), (d, 0.4)]), &plan, 0.0, 0).unwrap();
        assert!(cube.value(0, 0, 1).norm() < 1e-12);
        assert!(cube.value(0, 0, 3).norm() < 1e-12);
        assert!((cube.value(0, 0, 2) - Complex64::new(0.8, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_frequency_depth_of_far_wall() {
        let omega = 2.0 * PI * 0.7937e6;
        let phi = 4.0 * PI * 0.7937e6 * 8.1 / 299_792_458.0;
        let d = single_frequency_depth(Complex64::from_polar(1.0, phi), omega).unwrap();
        assert!((d - 8.1).abs() < 1e-9);
        // from the rounded phase quoted for this geometry
        let d = single_frequency_depth(Complex64::from_polar(1.0, 0.2695), omega).unwrap();
        assert!((d - 8.1).abs() < 2e-3);
    }

    #[test]
    fn real_positive_phasor_has_zero_depth() {
        assert_eq!(single_frequency_depth(Complex64::new(0.3, 0.0), 1e6), Some(0.0));
        assert_eq!(single_frequency_depth(Complex64::new(0.0, 0.0), 1e6), None);
    }

    #[test]
    fn mixed_pixel_depth_matches_neither_layer() {
        let f0 = 0.7937e6;
        let plan = ModulationPlan::new(f0, 1);
        let cube = measure(&one_pixel(&[(0.3, 0.5), (8.1, 0.5)]), &plan, 0.0, 0).unwrap();
        let omega = plan.angular_frequency(1);
        let d = single_frequency_depth(cube.value(0, 0, 1), omega).unwrap();
        // equal amplitudes: the phasor sum bisects the two phases
        let oracle = SPEED_OF_LIGHT * 0.5 * (phase_of_depth(0.3, omega).unwrap() + phase_of_depth(8.1, omega).unwrap()) / (2.0 * omega);
        assert!((d - oracle).abs() < 1e-9);
        assert!((d - 0.3).abs() > 1.0 && (d - 8.1).abs() > 1.0);
    }

    #[test]
    fn noise_is_seeded_per_pixel() {
        let scene = Scene::new(3, 2, vec![Layer::uniform(3, 2, 1.0, 0.5)]);
        let plan = ModulationPlan::new(1e6, 4);
        let a = simulate_buckets(&scene, &plan, 0.01, 42).unwrap();
        let b = simulate_buckets(&scene, &plan, 0.01, 42).unwrap();
        let c = simulate_buckets(&scene, &plan, 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // identical pixels get different noise
        assert_ne!(a.get(0, 0, 1), a.get(1, 0, 1));
    }
}
