//! End-to-end runs: simulate a cube, decompose every pixel, assemble
//! depth-ranked component maps, baseline maps and statistics.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{build_dictionary, grid_index_to_depth, Dictionary};
use crate::error::{Error, Result};
use crate::histogram::{phase_histogram, HistogramTable};
use crate::io;
use crate::model::{Component, Decomposition, MeasurementCube, ModulationPlan, PixelMap, Scene};
use crate::scene_file::load_scene;
use crate::sensor::{complex_noise_std, measure, single_frequency_depth};
use crate::solver::{omp_decompose, LocalSearch, SolverConfig, SparseSolution, StopReason};

pub const DEFAULT_BASE_FREQUENCY_HZ: f64 = 0.7937e6;
pub const DEFAULT_HARMONICS: usize = 77;
pub const DEFAULT_GRID_SIZE: usize = 4096;
pub const DEFAULT_SENTINEL_DEPTH: f64 = 10.0;
/// Amplitude floor used for noiseless runs when none is configured.
pub const NOISELESS_MIN_AMPLITUDE: f64 = 1e-9;

/// Settings for decomposing a cube into maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeConfig {
    pub grid_size: usize,
    pub max_components: usize,
    /// Residual tolerance; `None` means `sqrt(2N) * sigma_z`.
    pub epsilon: Option<f64>,
    /// Amplitude floor; `None` means `sigma_z` (or a numerical zero floor
    /// when noiseless).
    pub min_amplitude: Option<f64>,
    pub local_search: LocalSearch,
    pub sentinel_depth: f64,
    pub histogram_bins: usize,
    pub baseline_harmonic: usize,
    pub debug_trace: bool,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            max_components: 3,
            epsilon: None,
            min_amplitude: None,
            local_search: LocalSearch::Auto,
            sentinel_depth: DEFAULT_SENTINEL_DEPTH,
            histogram_bins: 64,
            baseline_harmonic: 3,
            debug_trace: false,
        }
    }
}

impl DecomposeConfig {
    pub fn validate(&self, plan: &ModulationPlan) -> Result<()> {
        let range = plan.unambiguous_range();
        if !(self.sentinel_depth.is_finite() && self.sentinel_depth >= 0.0) {
            return Err(Error::Config(format!(
                "sentinel depth must be finite and >= 0, got {}",
                self.sentinel_depth
            )));
        }
        if self.sentinel_depth >= range {
            return Err(Error::Config(format!(
                "sentinel depth {} m is not below the unambiguous range {range} m",
                self.sentinel_depth
            )));
        }
        if self.histogram_bins < 2 {
            return Err(Error::Config("histogram needs at least 2 bins".into()));
        }
        if self.baseline_harmonic == 0 || self.baseline_harmonic > plan.harmonic_count {
            return Err(Error::Config(format!(
                "baseline harmonic {} outside 1..={}",
                self.baseline_harmonic, plan.harmonic_count
            )));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::Config(format!("epsilon must be >= 0, got {e}")));
            }
        }
        self.solver_config(plan).validate()
    }

    /// Solver settings with defaults resolved from the plan and the cube noise.
    pub fn resolved_solver(&self, plan: &ModulationPlan, noise_sigma: f64) -> SolverConfig {
        let sigma_z = complex_noise_std(noise_sigma, plan.modulation_depth);
        SolverConfig {
            max_components: self.max_components,
            residual_tolerance: self
                .epsilon
                .unwrap_or_else(|| SolverConfig::default_tolerance(plan.harmonic_count, sigma_z)),
            min_amplitude: self.min_amplitude.unwrap_or(if sigma_z > 0.0 {
                sigma_z
            } else {
                NOISELESS_MIN_AMPLITUDE
            }),
            refit: true,
            local_search: self.local_search,
        }
    }

    fn solver_config(&self, plan: &ModulationPlan) -> SolverConfig {
        self.resolved_solver(plan, 0.0)
    }
}

/// A full run from a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scene_path: PathBuf,
    pub plan: ModulationPlan,
    pub noise_sigma: f64,
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    pub decompose: DecomposeConfig,
}

impl RunConfig {
    pub fn new(scene_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            scene_path: scene_path.into(),
            plan: ModulationPlan::new(DEFAULT_BASE_FREQUENCY_HZ, DEFAULT_HARMONICS),
            noise_sigma: 0.0,
            rng_seed: 0,
            output_dir: output_dir.into(),
            decompose: DecomposeConfig::default(),
        }
    }
}

/// Depth-ranked component maps plus the single-frequency baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapStack {
    pub width: usize,
    pub height: usize,
    pub base_frequency_hz: f64,
    pub sentinel_depth: f64,
    /// `depth[k]`: k-th nearest recovered component at each pixel.
    pub depth: Vec<PixelMap<f64>>,
    pub amplitude: Vec<PixelMap<f64>>,
    pub baseline_harmonic: usize,
    pub baseline_depth: PixelMap<f64>,
    pub baseline_amplitude: PixelMap<f64>,
    pub residual: PixelMap<f64>,
}

impl MapStack {
    pub fn components(&self) -> usize {
        self.depth.len()
    }

    /// Depths of component `k` at pixels where it is present.
    pub fn present_depths(&self, k: usize) -> Vec<f64> {
        self.depth[k]
            .data
            .iter()
            .zip(&self.amplitude[k].data)
            .filter(|(_, &a)| a > 0.0)
            .map(|(&d, _)| d)
            .collect()
    }

    pub fn baseline_present_depths(&self) -> Vec<f64> {
        self.baseline_depth
            .data
            .iter()
            .zip(&self.baseline_amplitude.data)
            .filter(|(_, &a)| a > 0.0)
            .map(|(&d, _)| d)
            .collect()
    }

    pub fn unambiguous_range(&self) -> f64 {
        crate::SPEED_OF_LIGHT / (2.0 * self.base_frequency_hz)
    }
}

/// Single-frequency depth and amplitude maps at one harmonic. Pixels with
/// `z = 0` get `None` depth.
pub fn baseline_maps(
    cube: &MeasurementCube,
    harmonic: usize,
) -> Result<(PixelMap<Option<f64>>, PixelMap<f64>)> {
    if harmonic == 0 || harmonic > cube.harmonic_count() {
        return Err(Error::Config(format!(
            "baseline harmonic {harmonic} outside 1..={}",
            cube.harmonic_count()
        )));
    }
    let omega = cube.plan.angular_frequency(harmonic);
    let depth = PixelMap::from_fn(cube.width, cube.height, |x, y| {
        single_frequency_depth(cube.value(x, y, harmonic), omega)
    });
    let amplitude = PixelMap::from_fn(cube.width, cube.height, |x, y| {
        cube.value(x, y, harmonic).norm()
    });
    Ok((depth, amplitude))
}

/// Solver output for one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSolve {
    pub x: usize,
    pub y: usize,
    pub decomposition: Decomposition,
    pub solution: SparseSolution,
}

fn to_decomposition(solution: &SparseSolution, dict: &Dictionary) -> Result<Decomposition> {
    let mut components = solution
        .support
        .iter()
        .zip(&solution.amplitudes)
        .map(|(&l, &amplitude)| {
            Ok(Component {
                depth: grid_index_to_depth(l, dict)?,
                amplitude,
                grid_index: l,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    components.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    Ok(Decomposition {
        components,
        residual_norm: solution.residual_norm,
    })
}

/// Decomposes every pixel of a cube and assembles the map stack.
pub fn decompose_cube(
    cube: &MeasurementCube,
    dict: &Dictionary,
    config: &DecomposeConfig,
) -> Result<(MapStack, Vec<PixelSolve>)> {
    config.validate(&cube.plan)?;
    if dict.harmonic_count != cube.harmonic_count() {
        return Err(Error::Config(format!(
            "dictionary has {} harmonics, cube has {}",
            dict.harmonic_count,
            cube.harmonic_count()
        )));
    }
    let solver = config.resolved_solver(&cube.plan, cube.noise_sigma);
    let width = cube.width;
    let pixels = (0..cube.width * cube.height)
        .into_par_iter()
        .map(|p| {
            let (x, y) = (p % width, p / width);
            let solution =
                omp_decompose(cube.pixel(x, y), dict, &solver).map_err(|e| e.at_pixel(x, y))?;
            let decomposition = to_decomposition(&solution, dict).map_err(|e| e.at_pixel(x, y))?;
            Ok(PixelSolve {
                x,
                y,
                decomposition,
                solution,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let k = config.max_components;
    let (w, h) = (cube.width, cube.height);
    let mut depth = vec![PixelMap::filled(w, h, config.sentinel_depth); k];
    let mut amplitude = vec![PixelMap::filled(w, h, 0.0); k];
    let mut residual = PixelMap::filled(w, h, 0.0);
    for px in &pixels {
        for (slot, c) in px.decomposition.components.iter().enumerate().take(k) {
            depth[slot].set(px.x, px.y, c.depth);
            amplitude[slot].set(px.x, px.y, c.amplitude);
        }
        residual.set(px.x, px.y, px.decomposition.residual_norm);
    }

    let (bd, ba) = baseline_maps(cube, config.baseline_harmonic)?;
    let baseline_depth = PixelMap::from_vec(
        w,
        h,
        bd.data
            .iter()
            .map(|d| d.unwrap_or(config.sentinel_depth))
            .collect(),
    )?;
    let maps = MapStack {
        width: w,
        height: h,
        base_frequency_hz: cube.plan.base_frequency_hz,
        sentinel_depth: config.sentinel_depth,
        depth,
        amplitude,
        baseline_harmonic: config.baseline_harmonic,
        baseline_depth,
        baseline_amplitude: ba,
        residual,
    };
    Ok((maps, pixels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub component: usize,
    pub pixels_present: usize,
    pub depth_mean: Option<f64>,
    pub depth_std: Option<f64>,
    pub amplitude_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StopCounts {
    pub zero_input: usize,
    pub tolerance: usize,
    pub budget: usize,
    pub exhausted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub sigma_z: f64,
    pub solver: SolverConfig,
    pub grid_cell_m: f64,
    pub components: Vec<ComponentStats>,
    pub residual_mean: f64,
    pub residual_max: f64,
    pub stops: StopCounts,
    pub phase_warnings: usize,
    /// No pixel produced any component.
    pub no_signal: bool,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

pub fn build_report(
    cube: &MeasurementCube,
    dict: &Dictionary,
    config: &DecomposeConfig,
    maps: &MapStack,
    pixels: &[PixelSolve],
) -> RunReport {
    let components = (0..maps.components())
        .map(|k| {
            let depths = maps.present_depths(k);
            let amps: Vec<f64> = maps.amplitude[k].data.iter().copied().filter(|&a| a > 0.0).collect();
            let (depth_mean, depth_std) = mean_std(&depths);
            ComponentStats {
                component: k + 1,
                pixels_present: depths.len(),
                depth_mean,
                depth_std,
                amplitude_mean: mean_std(&amps).0,
            }
        })
        .collect();
    let mut stops = StopCounts::default();
    for p in pixels {
        match p.solution.stop {
            StopReason::ZeroInput => stops.zero_input += 1,
            StopReason::Tolerance => stops.tolerance += 1,
            StopReason::Budget => stops.budget += 1,
            StopReason::Exhausted | StopReason::Exhaustive => stops.exhausted += 1,
        }
    }
    let residuals = &maps.residual.data;
    RunReport {
        width: cube.width,
        height: cube.height,
        noise_sigma: cube.noise_sigma,
        sigma_z: complex_noise_std(cube.noise_sigma, cube.plan.modulation_depth),
        solver: config.resolved_solver(&cube.plan, cube.noise_sigma),
        grid_cell_m: dict.grid_cell(),
        components,
        residual_mean: mean_std(residuals).0.unwrap_or(0.0),
        residual_max: residuals.iter().copied().fold(0.0, f64::max),
        stops,
        phase_warnings: pixels.iter().filter(|p| p.solution.phase_warning).count(),
        no_signal: pixels.iter().all(|p| p.decomposition.components.is_empty()),
    }
}

/// Everything produced by a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub cube: MeasurementCube,
    pub maps: MapStack,
    pub pixels: Vec<PixelSolve>,
    pub report: RunReport,
    pub histogram: HistogramTable,
    pub dictionary: Dictionary,
}

/// Decomposes an in-memory cube; nothing is written.
pub fn run_cube(cube: MeasurementCube, config: &DecomposeConfig) -> Result<RunOutput> {
    config.validate(&cube.plan)?;
    let dictionary = build_dictionary(
        cube.harmonic_count(),
        config.grid_size,
        cube.plan.base_frequency_hz,
    )?;
    let (maps, pixels) = decompose_cube(&cube, &dictionary, config)?;
    let report = build_report(&cube, &dictionary, config, &maps, &pixels);
    let histogram = phase_histogram(&maps, config.baseline_harmonic, config.histogram_bins)?;
    Ok(RunOutput {
        cube,
        maps,
        pixels,
        report,
        histogram,
        dictionary,
    })
}

/// Simulates and decomposes an in-memory scene; nothing is written.
pub fn run_scene(
    scene: &Scene,
    plan: &ModulationPlan,
    noise_sigma: f64,
    rng_seed: u64,
    config: &DecomposeConfig,
) -> Result<RunOutput> {
    config.validate(plan)?;
    let cube = measure(scene, plan, noise_sigma, rng_seed)?;
    run_cube(cube, config)
}

/// Loads the scene, runs it and writes every output into `output_dir`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutput> {
    config.decompose.validate(&config.plan)?;
    io::ensure_dir(&config.output_dir)?;
    let scene = load_scene(&config.scene_path)?;
    let out = run_scene(
        &scene,
        &config.plan,
        config.noise_sigma,
        config.rng_seed,
        &config.decompose,
    )?;
    write_outputs(&config.output_dir, &out, config.decompose.debug_trace)?;
    Ok(out)
}

/// Map stack metadata written next to the map files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapsMeta {
    pub width: usize,
    pub height: usize,
    pub components: usize,
    pub base_frequency_hz: f64,
    pub harmonic_count: usize,
    pub grid_size: usize,
    pub grid_cell_m: f64,
    pub unambiguous_range_m: f64,
    pub sentinel_depth_m: f64,
    pub baseline_harmonic: usize,
    /// PGM level = round(clamp(depth / pgm_full_scale_m, 0, 1) * pgm_max_level).
    pub pgm_full_scale_m: f64,
    pub pgm_max_level: u32,
}

pub const MAPS_META: &str = "maps_meta.json";

fn map_name(kind: &str, k: usize) -> String {
    format!("{kind}_k{}", k + 1)
}

/// Writes maps (CSV and PGM), metadata, histogram and report.
pub fn write_outputs(dir: &Path, out: &RunOutput, debug_trace: bool) -> Result<()> {
    io::ensure_dir(dir)?;
    let maps = &out.maps;
    write_maps(dir, maps, &out.dictionary)?;
    io::write_with(&dir.join("histogram.csv"), |w| out.histogram.write_csv(w))?;
    io::write_json(&dir.join("report.json"), &out.report)?;
    if debug_trace {
        write_trace(&dir.join("trace.csv"), &out.pixels)?;
    }
    Ok(())
}

pub fn write_maps(dir: &Path, maps: &MapStack, dict: &Dictionary) -> Result<()> {
    let range = maps.unambiguous_range();
    for k in 0..maps.components() {
        io::write_map_csv(&dir.join(map_name("depth", k) + ".csv"), &maps.depth[k])?;
        io::write_map_csv(&dir.join(map_name("amplitude", k) + ".csv"), &maps.amplitude[k])?;
        io::write_pgm16(&dir.join(map_name("depth", k) + ".pgm"), &maps.depth[k], range)?;
    }
    io::write_map_csv(&dir.join("baseline_depth.csv"), &maps.baseline_depth)?;
    io::write_map_csv(&dir.join("baseline_amplitude.csv"), &maps.baseline_amplitude)?;
    io::write_pgm16(&dir.join("baseline_depth.pgm"), &maps.baseline_depth, range)?;
    io::write_map_csv(&dir.join("residual.csv"), &maps.residual)?;
    io::write_json(
        &dir.join(MAPS_META),
        &MapsMeta {
            width: maps.width,
            height: maps.height,
            components: maps.components(),
            base_frequency_hz: maps.base_frequency_hz,
            harmonic_count: dict.harmonic_count,
            grid_size: dict.grid_size,
            grid_cell_m: dict.grid_cell(),
            unambiguous_range_m: range,
            sentinel_depth_m: maps.sentinel_depth,
            baseline_harmonic: maps.baseline_harmonic,
            pgm_full_scale_m: range,
            pgm_max_level: 65535,
        },
    )
}

/// Reads a map stack written by [`write_maps`].
pub fn load_maps(dir: &Path) -> Result<MapStack> {
    let meta: MapsMeta = io::read_json(&dir.join(MAPS_META), "maps metadata")?;
    let read = |name: String| -> Result<PixelMap<f64>> {
        let path = dir.join(name);
        let map = io::read_map_csv(&path)?;
        if map.width != meta.width || map.height != meta.height {
            return Err(Error::Parse {
                what: "map",
                path,
                message: format!("expected {}x{}", meta.width, meta.height),
            });
        }
        Ok(map)
    };
    let mut depth = Vec::new();
    let mut amplitude = Vec::new();
    for k in 0..meta.components {
        depth.push(read(map_name("depth", k) + ".csv")?);
        amplitude.push(read(map_name("amplitude", k) + ".csv")?);
    }
    Ok(MapStack {
        width: meta.width,
        height: meta.height,
        base_frequency_hz: meta.base_frequency_hz,
        sentinel_depth: meta.sentinel_depth_m,
        depth,
        amplitude,
        baseline_harmonic: meta.baseline_harmonic,
        baseline_depth: read("baseline_depth.csv".into())?,
        baseline_amplitude: read("baseline_amplitude.csv".into())?,
        residual: read("residual.csv".into())?,
    })
}

/// `pixel_x,pixel_y,iteration,selected_index,correlation,residual_norm,skipped`
pub fn write_trace(path: &Path, pixels: &[PixelSolve]) -> Result<()> {
    io::write_with(path, |w| {
        use std::io::Write;
        writeln!(
            w,
            "pixel_x,pixel_y,iteration,selected_index,correlation,residual_norm,skipped"
        )?;
        for p in pixels {
            for s in &p.solution.trace {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    p.x, p.y, s.iteration, s.selected_index, s.correlation, s.residual_norm, s.skipped
                )?;
            }
        }
        Ok(())
    })
}

/// Phase of every present depth of component `k` at a harmonic.
pub fn component_phases(maps: &MapStack, k: usize, harmonic: usize) -> Vec<f64> {
    let omega = TAU * maps.base_frequency_hz * harmonic as f64;
    maps.present_depths(k)
        .into_iter()
        .map(|d| crate::histogram::depth_phase(d, omega))
        .collect()
}
