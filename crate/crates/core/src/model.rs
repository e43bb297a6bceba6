//! Domain types shared by the simulator, dictionary, solver and pipeline.
//!
//! Units: depths in meters, frequencies in hertz, amplitudes dimensionless.
//! Phases and delays are always derived from depths on demand.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 2-D grid of per-pixel values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelMap<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> PixelMap<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> PixelMap<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Input(format!(
                "pixel map of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn shape_is(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height && self.data.len() == width * height
    }
}

/// One reflecting surface: per-pixel depth and reflection amplitude.
///
/// Amplitude 0 marks the layer as absent at that pixel; its depth there is
/// ignored by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub depth: PixelMap<f64>,
    pub amplitude: PixelMap<f64>,
}

impl Layer {
    pub fn new(depth: PixelMap<f64>, amplitude: PixelMap<f64>) -> Self {
        Self { depth, amplitude }
    }

    pub fn uniform(width: usize, height: usize, depth: f64, amplitude: f64) -> Self {
        Self {
            depth: PixelMap::filled(width, height, depth),
            amplitude: PixelMap::filled(width, height, amplitude),
        }
    }
}

/// Ordered stack of layers, index 0 nearest to the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<Layer>,
}

impl Scene {
    pub fn new(width: usize, height: usize, layers: Vec<Layer>) -> Self {
        Self {
            width,
            height,
            layers,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Present `(depth, amplitude)` pairs at a pixel, nearest first.
    pub fn components_at(&self, x: usize, y: usize) -> Vec<(f64, f64)> {
        self.layers
            .iter()
            .filter_map(|l| {
                let a = *l.amplitude.get(x, y);
                (a > 0.0).then(|| (*l.depth.get(x, y), a))
            })
            .collect()
    }
}

/// A single problem found by [`validate_scene`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyImage {
        width: usize,
        height: usize,
    },
    ShapeMismatch {
        layer: usize,
        field: &'static str,
        expected: (usize, usize),
        found: (usize, usize, usize),
    },
    AmplitudeOutOfRange {
        layer: usize,
        x: usize,
        y: usize,
        value: f64,
    },
    InvalidDepth {
        layer: usize,
        x: usize,
        y: usize,
        value: f64,
    },
    DepthsNotIncreasing {
        layer: usize,
        x: usize,
        y: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyImage { width, height } => {
                write!(f, "empty image ({width}x{height})")
            }
            Violation::ShapeMismatch {
                layer,
                field,
                expected,
                found,
            } => write!(
                f,
                "shape mismatch: layer {layer} {field} is {}x{} with {} values, scene is {}x{}",
                found.0, found.1, found.2, expected.0, expected.1
            ),
            Violation::AmplitudeOutOfRange { layer, x, y, value } => write!(
                f,
                "amplitude out of range: layer {layer} at ({x}, {y}) is {value}, expected [0, 1]"
            ),
            Violation::InvalidDepth { layer, x, y, value } => write!(
                f,
                "invalid depth: layer {layer} at ({x}, {y}) is {value}, expected finite and >= 0"
            ),
            Violation::DepthsNotIncreasing { layer, x, y } => write!(
                f,
                "depths not increasing: layer {layer} at ({x}, {y}) is not behind the previous present layer"
            ),
        }
    }
}

/// Checks every scene invariant and returns all violations found.
/// An empty report means the scene is valid.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let (w, h) = (scene.width, scene.height);
    let mut report = Vec::new();
    if w == 0 || h == 0 {
        report.push(Violation::EmptyImage {
            width: w,
            height: h,
        });
        return report;
    }

    let mut shapes_ok = true;
    for (i, layer) in scene.layers.iter().enumerate() {
        for (field, map) in [("depth", &layer.depth), ("amplitude", &layer.amplitude)] {
            if !map.shape_is(w, h) {
                shapes_ok = false;
                report.push(Violation::ShapeMismatch {
                    layer: i,
                    field,
                    expected: (w, h),
                    found: (map.width, map.height, map.data.len()),
                });
            }
        }
    }
    if !shapes_ok {
        return report;
    }

    for (i, layer) in scene.layers.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let a = *layer.amplitude.get(x, y);
                if !(0.0..=1.0).contains(&a) {
                    report.push(Violation::AmplitudeOutOfRange {
                        layer: i,
                        x,
                        y,
                        value: a,
                    });
                }
                let d = *layer.depth.get(x, y);
                if !d.is_finite() || d < 0.0 {
                    report.push(Violation::InvalidDepth {
                        layer: i,
                        x,
                        y,
                        value: d,
                    });
                }
            }
        }
    }

    for y in 0..h {
        for x in 0..w {
            let mut previous: Option<f64> = None;
            for (i, layer) in scene.layers.iter().enumerate() {
                if *layer.amplitude.get(x, y) <= 0.0 {
                    continue;
                }
                let d = *layer.depth.get(x, y);
                if let Some(p) = previous {
                    if !(d > p) {
                        report.push(Violation::DepthsNotIncreasing { layer: i, x, y });
                    }
                }
                previous = Some(d);
            }
        }
    }
    report
}

/// How the constant term `C0` of the correlation samples is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DcOffset {
    /// Sum of the present component amplitudes at each pixel.
    SumOfAmplitudes,
    Constant(f64),
}

/// Harmonic modulation schedule: frequencies `n * base_frequency_hz`, `n = 1..=harmonic_count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationPlan {
    pub base_frequency_hz: f64,
    pub harmonic_count: usize,
    pub modulation_depth: f64,
    pub bucket_count: usize,
    pub dc_offset: DcOffset,
}

impl ModulationPlan {
    pub fn new(base_frequency_hz: f64, harmonic_count: usize) -> Self {
        Self {
            base_frequency_hz,
            harmonic_count,
            modulation_depth: 1.0,
            bucket_count: 4,
            dc_offset: DcOffset::SumOfAmplitudes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_frequency_hz.is_finite() && self.base_frequency_hz > 0.0) {
            return Err(Error::Config(format!(
                "base frequency must be positive, got {}",
                self.base_frequency_hz
            )));
        }
        if self.harmonic_count == 0 {
            return Err(Error::Config("harmonic count must be at least 1".into()));
        }
        if !(self.modulation_depth > 0.0 && self.modulation_depth <= 1.0) {
            return Err(Error::Config(format!(
                "modulation depth must lie in (0, 1], got {}",
                self.modulation_depth
            )));
        }
        if self.bucket_count != 4 {
            return Err(Error::Config(format!(
                "only 4-bucket sampling is supported, got {} buckets",
                self.bucket_count
            )));
        }
        if let DcOffset::Constant(c) = self.dc_offset {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Config(format!("dc offset must be >= 0, got {c}")));
            }
        }
        Ok(())
    }

    /// Angular modulation frequency of harmonic `n` (1-based), rad/s.
    pub fn angular_frequency(&self, n: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.base_frequency_hz * n as f64
    }

    /// Bucket sample times `tau_q = pi q / (2 omega)` for harmonic `n`.
    pub fn bucket_times(&self, n: usize) -> Vec<f64> {
        let omega = self.angular_frequency(n);
        (0..self.bucket_count)
            .map(|q| std::f64::consts::PI * q as f64 / (2.0 * omega))
            .collect()
    }

    /// Largest depth before the base-frequency phase wraps, `c / (2 f0)`.
    pub fn unambiguous_range(&self) -> f64 {
        crate::SPEED_OF_LIGHT / (2.0 * self.base_frequency_hz)
    }
}

/// Complex pixel values for every `(pixel, harmonic)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementCube {
    pub width: usize,
    pub height: usize,
    pub plan: ModulationPlan,
    pub noise_sigma: f64,
    /// Indexed `(y * width + x) * N + (n - 1)`.
    pub values: Vec<Complex64>,
}

impl MeasurementCube {
    pub fn harmonic_count(&self) -> usize {
        self.plan.harmonic_count
    }

    /// Measurement vector `[z_1, ..., z_N]` at a pixel.
    pub fn pixel(&self, x: usize, y: usize) -> &[Complex64] {
        let n = self.plan.harmonic_count;
        let start = (y * self.width + x) * n;
        &self.values[start..start + n]
    }

    /// `z` at a 1-based harmonic.
    pub fn value(&self, x: usize, y: usize, harmonic: usize) -> Complex64 {
        self.pixel(x, y)[harmonic - 1]
    }
}

/// A recovered reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub depth: f64,
    pub amplitude: f64,
    pub grid_index: usize,
}

/// Per-pixel decomposition: components sorted by ascending depth.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Decomposition {
    pub components: Vec<Component>,
    pub residual_norm: f64,
}
