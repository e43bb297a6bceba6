//! Simulation and sparse decomposition of multi-frequency AMCW time-of-flight
//! measurements.
//!
//! A [`Scene`] of reflecting layers is measured under a [`ModulationPlan`]
//! at harmonics `n * f0`, `n = 1..=N`, producing one complex phasor per pixel
//! and harmonic ([`MeasurementCube`]). Each pixel's phasor vector is then
//! decomposed over an oversampled DFT [`Dictionary`] with orthogonal matching
//! pursuit, yielding up to `K` (depth, amplitude) reflections per pixel.
//!
//! ```
//! use tofsep::{build_dictionary, measure, omp_decompose, Layer, ModulationPlan, Scene, SolverConfig};
//!
//! let scene = Scene::new(1, 1, vec![
//!     Layer::uniform(1, 1, 0.0, 0.6),
//!     Layer::uniform(1, 1, 0.0, 0.0),
//! ]);
//! let plan = ModulationPlan::new(10e6, 16);
//! let cube = measure(&scene, &plan, 0.0, 7).unwrap();
//! let dict = build_dictionary(16, 64, 10e6).unwrap();
//! let solution = omp_decompose(cube.pixel(0, 0), &dict, &SolverConfig::with_max_components(1)).unwrap();
//! assert_eq!(solution.support, vec![0]);
//! assert!((solution.amplitudes[0] - 0.6).abs() < 1e-9);
//! ```

pub mod dictionary;
pub mod error;
pub mod histogram;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod reproduce;
pub mod scene_file;
pub mod sensor;
pub mod solver;

pub use dictionary::{
    build_dictionary, depth_to_nearest_grid_index, forward_vandermonde, grid_index_to_depth,
    Dictionary,
};
pub use error::{Error, ErrorCategory, Result};
pub use histogram::{circular_std, phase_histogram, HistogramTable};
pub use linalg::{least_squares_on_support, CMatrix, LeastSquares};
pub use model::{
    validate_scene, Component, DcOffset, Decomposition, Layer, MeasurementCube, ModulationPlan,
    PixelMap, Scene, Violation,
};
pub use pipeline::{
    baseline_maps, decompose_cube, load_maps, run_cube, run_pipeline, run_scene, write_outputs,
    DecomposeConfig, MapStack, PixelSolve, RunConfig, RunOutput, RunReport,
};
pub use reproduce::{
    noise_sigma_for_snr, reproduce_paper_experiment, NoiseLevel, ReproduceConfig, Reproduction,
    ReproductionScene, ReproductionSummary,
};
pub use sensor::{
    complex_noise_std, four_bucket_estimate, measure, measure_direct, phase_of_depth,
    simulate_buckets, single_frequency_depth, BucketEstimate, BucketSamples,
};
pub use solver::{
    brute_force_decompose, omp_decompose, LocalSearch, SolverConfig, SparseSolution, StopReason, TraceStep,
};

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
