//! Built-in three-layer experiment.
//!
//! A semi-transparent sheet near the camera covers the whole field of view,
//! a second sheet covers only the left half, and a wall with the text "MIT"
//! printed in darker gray sits behind both. The left half therefore holds
//! three reflections per pixel and the right half two. The scene is measured
//! at 77 harmonics of 0.7937 MHz and decomposed with `K = 3`.

use std::f64::consts::TAU;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dictionary::{build_dictionary, depth_to_nearest_grid_index, grid_index_to_depth, Dictionary};
use crate::error::{Error, Result};
use crate::histogram::{circular_std, depth_phase};
use crate::io;
use crate::model::{Layer, ModulationPlan, PixelMap, Scene};
use crate::pipeline::{self, DecomposeConfig, RunOutput, DEFAULT_SENTINEL_DEPTH};
use crate::scene_file::save_scene;
use crate::sensor::{complex_noise_std, measure_direct};

const GLYPH_ROWS: usize = 5;

// 5-row bitmaps, '#' = ink
const GLYPH_M: [&str; GLYPH_ROWS] = ["#...#", "##.##", "#.#.#", "#...#", "#...#"];
const GLYPH_I: [&str; GLYPH_ROWS] = ["###", ".#.", ".#.", ".#.", "###"];
const GLYPH_T: [&str; GLYPH_ROWS] = ["#####", "..#..", "..#..", "..#..", "..#.."];

fn text_bitmap() -> Vec<Vec<bool>> {
    let glyphs = [GLYPH_M, GLYPH_I, GLYPH_T];
    (0..GLYPH_ROWS)
        .map(|r| {
            let mut row = Vec::new();
            for (i, g) in glyphs.iter().enumerate() {
                if i > 0 {
                    row.push(false);
                }
                row.extend(g[r].chars().map(|c| c == '#'));
            }
            row
        })
        .collect()
}

/// Geometry and reflectances of the three-layer scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionScene {
    pub width: usize,
    pub height: usize,
    pub near_depth_m: f64,
    /// Not given by the original experiment; any value between the other
    /// two layers works.
    pub middle_depth_m: f64,
    pub far_depth_m: f64,
    pub near_amplitude: f64,
    pub middle_amplitude: f64,
    pub wall_amplitude: f64,
    /// Wall reflectance where the text is printed.
    pub text_amplitude: f64,
}

impl Default for ReproductionScene {
    fn default() -> Self {
        Self {
            width: 16,
            height: 12,
            near_depth_m: 0.3,
            middle_depth_m: 4.2,
            far_depth_m: 8.1,
            near_amplitude: 0.5,
            middle_amplitude: 0.3,
            wall_amplitude: 0.15,
            text_amplitude: 0.05,
        }
    }
}

impl ReproductionScene {
    /// Full sensor resolution.
    pub fn full_resolution() -> Self {
        Self {
            width: 160,
            height: 120,
            ..Self::default()
        }
    }

    pub fn is_left(&self, x: usize) -> bool {
        2 * x < self.width
    }

    /// Pixels covered by the printed text, scaled to the image with a margin.
    pub fn text_mask(&self) -> PixelMap<bool> {
        let bitmap = text_bitmap();
        let cols = bitmap[0].len();
        PixelMap::from_fn(self.width, self.height, |x, y| {
            let u = ((x as f64 + 0.5) / self.width as f64 * (cols + 2) as f64).floor() as isize - 1;
            let v = ((y as f64 + 0.5) / self.height as f64 * (GLYPH_ROWS + 4) as f64).floor()
                as isize
                - 2;
            u >= 0
                && v >= 0
                && (u as usize) < cols
                && (v as usize) < GLYPH_ROWS
                && bitmap[v as usize][u as usize]
        })
    }

    /// Layer depths moved to the nearest dictionary grid point, nearest first.
    pub fn grid_depths(&self, dict: &Dictionary) -> Result<[f64; 3]> {
        let snap = |d: f64| grid_index_to_depth(depth_to_nearest_grid_index(d, dict)?, dict);
        let depths = [
            snap(self.near_depth_m)?,
            snap(self.middle_depth_m)?,
            snap(self.far_depth_m)?,
        ];
        if !(depths[0] < depths[1] && depths[1] < depths[2]) {
            return Err(Error::Config(format!(
                "layer depths {depths:?} must be strictly increasing after grid snapping"
            )));
        }
        Ok(depths)
    }

    /// Builds the scene with depths on the dictionary grid.
    pub fn build(&self, dict: &Dictionary) -> Result<Scene> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("reproduction scene needs a nonempty image".into()));
        }
        let [near, middle, far] = self.grid_depths(dict)?;
        let (w, h) = (self.width, self.height);
        let text = self.text_mask();
        let near_layer = Layer::uniform(w, h, near, self.near_amplitude);
        let middle_layer = Layer::new(
            PixelMap::filled(w, h, middle),
            PixelMap::from_fn(w, h, |x, _| if self.is_left(x) { self.middle_amplitude } else { 0.0 }),
        );
        let wall = Layer::new(
            PixelMap::filled(w, h, far),
            PixelMap::from_fn(w, h, |x, y| {
                if *text.get(x, y) {
                    self.text_amplitude
                } else {
                    self.wall_amplitude
                }
            }),
        );
        Ok(Scene::new(w, h, vec![near_layer, middle_layer, wall]))
    }
}

/// Bucket noise standard deviation giving the requested SNR, where SNR is
/// the mean `|z|^2` of the noiseless cube over the complex noise power
/// `2 sigma_z^2`.
pub fn noise_sigma_for_snr(scene: &Scene, plan: &ModulationPlan, snr_db: f64) -> Result<f64> {
    let clean = measure_direct(scene, plan)?;
    let power = clean.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / clean.values.len() as f64;
    let sigma_z = (power / (2.0 * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(sigma_z * plan.modulation_depth * plan.modulation_depth / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    /// Bucket-level standard deviation.
    Sigma(f64),
    SnrDb(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceConfig {
    pub scene: ReproductionScene,
    pub base_frequency_hz: f64,
    pub harmonic_count: usize,
    pub noise: NoiseLevel,
    pub rng_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub decompose: DecomposeConfig,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            scene: ReproductionScene::default(),
            base_frequency_hz: pipeline::DEFAULT_BASE_FREQUENCY_HZ,
            harmonic_count: pipeline::DEFAULT_HARMONICS,
            noise: NoiseLevel::SnrDb(40.0),
            rng_seed: 2014,
            output_dir: None,
            decompose: DecomposeConfig {
                max_components: 3,
                sentinel_depth: DEFAULT_SENTINEL_DEPTH,
                baseline_harmonic: 3,
                ..DecomposeConfig::default()
            },
        }
    }
}

/// Recovered vs. true values for one component in one half of the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: String,
    pub component: usize,
    pub truth_depth_m: Option<f64>,
    pub pixels: usize,
    pub pixels_present: usize,
    pub depth_mean_m: Option<f64>,
    pub depth_max_abs_error_m: Option<f64>,
    pub within_one_cell: usize,
    pub amplitude_mean: f64,
    pub truth_amplitude_mean: f64,
    /// Circular std of the component phase at the baseline harmonic.
    pub phase_std_rad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionSummary {
    pub nominal_depths_m: [f64; 3],
    pub grid_depths_m: [f64; 3],
    pub grid_cell_m: f64,
    pub noise_sigma: f64,
    pub sigma_z: f64,
    pub baseline_harmonic: usize,
    pub baseline_phase_std_rad: f64,
    pub baseline_phase_min_rad: f64,
    pub baseline_phase_max_rad: f64,
    /// Fraction of three-layer pixels whose baseline depth is more than two
    /// grid cells from every layer.
    pub baseline_off_layer_fraction: f64,
    pub regions: Vec<RegionSummary>,
    pub right_third_amplitude_mean: f64,
    pub right_third_amplitude_max: f64,
    /// Pearson correlation of recovered third amplitude with the wall
    /// reflectance over the left half.
    pub left_text_correlation: Option<f64>,
}

pub struct Reproduction {
    pub scene: Scene,
    pub run: RunOutput,
    pub summary: ReproductionSummary,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

fn summarize(
    cfg: &ReproduceConfig,
    scene: &Scene,
    dict: &Dictionary,
    run: &RunOutput,
    noise_sigma: f64,
) -> Result<ReproductionSummary> {
    let geometry = &cfg.scene;
    let grid_depths = geometry.grid_depths(dict)?;
    let cell = dict.grid_cell();
    let maps = &run.maps;
    let harmonic = maps.baseline_harmonic;
    let omega = TAU * maps.base_frequency_hz * harmonic as f64;

    let mut regions = Vec::new();
    for (region, left) in [("left", true), ("right", false)] {
        for k in 0..maps.components() {
            let mut n = 0;
            let mut present = Vec::new();
            let mut errors = Vec::new();
            let mut amps = Vec::new();
            let mut truth_amps = Vec::new();
            let mut truth_depth = None;
            for y in 0..scene.height {
                for x in (0..scene.width).filter(|&x| geometry.is_left(x) == left) {
                    n += 1;
                    let truth = scene.components_at(x, y);
                    let a = *maps.amplitude[k].get(x, y);
                    amps.push(a);
                    truth_amps.push(truth.get(k).map_or(0.0, |t| t.1));
                    if let Some(t) = truth.get(k) {
                        truth_depth = Some(t.0);
                    }
                    if a > 0.0 {
                        let d = *maps.depth[k].get(x, y);
                        present.push(d);
                        if let Some(t) = truth.get(k) {
                            errors.push((d - t.0).abs());
                        }
                    }
                }
            }
            let phases: Vec<f64> = present.iter().map(|&d| depth_phase(d, omega)).collect();
            regions.push(RegionSummary {
                region: region.to_string(),
                component: k + 1,
                truth_depth_m: truth_depth,
                pixels: n,
                pixels_present: present.len(),
                depth_mean_m: (!present.is_empty())
                    .then(|| present.iter().sum::<f64>() / present.len() as f64),
                depth_max_abs_error_m: errors.iter().copied().reduce(f64::max),
                within_one_cell: errors.iter().filter(|&&e| e <= cell * (1.0 + 1e-9)).count(),
                amplitude_mean: amps.iter().sum::<f64>() / n.max(1) as f64,
                truth_amplitude_mean: truth_amps.iter().sum::<f64>() / n.max(1) as f64,
                phase_std_rad: (!phases.is_empty()).then(|| circular_std(&phases)),
            });
        }
    }

    let mut right_third = Vec::new();
    let mut left_third = Vec::new();
    let mut left_wall = Vec::new();
    let mut off_layer = 0usize;
    let mut mixed = 0usize;
    for y in 0..scene.height {
        for x in 0..scene.width {
            let third = if maps.components() >= 3 { *maps.amplitude[2].get(x, y) } else { 0.0 };
            if geometry.is_left(x) {
                left_third.push(third);
                left_wall.push(*scene.layers[2].amplitude.get(x, y));
                if *maps.baseline_amplitude.get(x, y) > 0.0 {
                    mixed += 1;
                    let d = *maps.baseline_depth.get(x, y);
                    if grid_depths.iter().all(|t| (d - t).abs() > 2.0 * cell) {
                        off_layer += 1;
                    }
                }
            } else {
                right_third.push(third);
            }
        }
    }
    let baseline_phases: Vec<f64> = maps
        .baseline_present_depths()
        .into_iter()
        .map(|d| depth_phase(d, omega))
        .collect();

    Ok(ReproductionSummary {
        nominal_depths_m: [geometry.near_depth_m, geometry.middle_depth_m, geometry.far_depth_m],
        grid_depths_m: grid_depths,
        grid_cell_m: cell,
        noise_sigma,
        sigma_z: complex_noise_std(noise_sigma, run.cube.plan.modulation_depth),
        baseline_harmonic: harmonic,
        baseline_phase_std_rad: circular_std(&baseline_phases),
        baseline_phase_min_rad: baseline_phases.iter().copied().fold(f64::INFINITY, f64::min),
        baseline_phase_max_rad: baseline_phases.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        baseline_off_layer_fraction: if mixed > 0 { off_layer as f64 / mixed as f64 } else { 0.0 },
        regions,
        right_third_amplitude_mean: if right_third.is_empty() {
            0.0
        } else {
            right_third.iter().sum::<f64>() / right_third.len() as f64
        },
        right_third_amplitude_max: right_third.iter().copied().fold(0.0, f64::max),
        left_text_correlation: pearson(&left_third, &left_wall),
    })
}

fn write_summary_csv(path: &std::path::Path, summary: &ReproductionSummary) -> Result<()> {
    use std::io::Write;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    io::write_with(path, |w| {
        writeln!(
            w,
            "region,component,truth_depth_m,pixels,pixels_present,depth_mean_m,depth_max_abs_error_m,within_one_cell,amplitude_mean,truth_amplitude_mean,phase_std_rad"
        )?;
        for r in &summary.regions {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.region,
                r.component,
                opt(r.truth_depth_m),
                r.pixels,
                r.pixels_present,
                opt(r.depth_mean_m),
                opt(r.depth_max_abs_error_m),
                r.within_one_cell,
                r.amplitude_mean,
                r.truth_amplitude_mean,
                opt(r.phase_std_rad),
            )?;
        }
        Ok(())
    })
}

/// Builds the three-layer scene, measures and decomposes it, and writes the
/// scene, ground truth, maps, histogram, report and summary when an output
/// directory is configured.
pub fn reproduce_paper_experiment(cfg: &ReproduceConfig) -> Result<Reproduction> {
    let plan = ModulationPlan::new(cfg.base_frequency_hz, cfg.harmonic_count);
    plan.validate()?;
    cfg.decompose.validate(&plan)?;
    if let Some(dir) = &cfg.output_dir {
        io::ensure_dir(dir)?;
    }
    let dict = build_dictionary(cfg.harmonic_count, cfg.decompose.grid_size, cfg.base_frequency_hz)?;
    let scene = cfg.scene.build(&dict)?;
    let noise_sigma = match cfg.noise {
        NoiseLevel::Sigma(s) => s,
        NoiseLevel::SnrDb(db) => noise_sigma_for_snr(&scene, &plan, db)?,
    };
    let run = pipeline::run_scene(&scene, &plan, noise_sigma, cfg.rng_seed, &cfg.decompose)?;
    let summary = summarize(cfg, &scene, &dict, &run, noise_sigma)?;

    if let Some(dir) = &cfg.output_dir {
        save_scene(&dir.join("scene.json"), &scene)?;
        for (i, layer) in scene.layers.iter().enumerate() {
            io::write_map_csv(&dir.join(format!("truth_depth_layer{}.csv", i + 1)), &layer.depth)?;
            io::write_map_csv(
                &dir.join(format!("truth_amplitude_layer{}.csv", i + 1)),
                &layer.amplitude,
            )?;
        }
        io::write_cube(&dir.join("cube.csv"), &run.cube)?;
        pipeline::write_outputs(dir, &run, cfg.decompose.debug_trace)?;
        io::write_json(&dir.join("summary.json"), &summary)?;
        write_summary_csv(&dir.join("summary.csv"), &summary)?;
    }
    Ok(Reproduction { scene, run, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_lands_in_both_halves() {
        let geometry = ReproductionScene::default();
        let mask = geometry.text_mask();
        let left = (0..16).filter(|&x| geometry.is_left(x)).flat_map(|x| (0..12).map(move |y| (x, y)))
            .filter(|&(x, y)| *mask.get(x, y)).count();
        let total = mask.data.iter().filter(|&&b| b).count();
        assert!(left > 0 && left < total, "left {left} total {total}");
    }

    #[test]
    fn depths_snap_to_grid() {
        let dict = build_dictionary(77, 4096, 0.7937e6).unwrap();
        let depths = ReproductionScene::default().grid_depths(&dict).unwrap();
        let cell = dict.grid_cell();
        for (got, nominal) in depths.iter().zip([0.3, 4.2, 8.1]) {
            assert!((got - nominal).abs() <= 0.5 * cell);
        }
        assert_eq!(depth_to_nearest_grid_index(depths[2], &dict).unwrap(), 176);
    }

    #[test]
    fn built_scene_is_valid_with_half_field_middle_layer() {
        let dict = build_dictionary(77, 4096, 0.7937e6).unwrap();
        let geometry = ReproductionScene::default();
        let scene = geometry.build(&dict).unwrap();
        assert!(crate::validate_scene(&scene).is_empty());
        assert_eq!(scene.components_at(0, 0).len(), 3);
        assert_eq!(scene.components_at(15, 0).len(), 2);
    }

    #[test]
    fn snr_sets_noise_level() {
        let scene = Scene::new(1, 1, vec![Layer::uniform(1, 1, 1.0, 0.5)]);
        let plan = ModulationPlan::new(1e6, 4);
        let sigma = noise_sigma_for_snr(&scene, &plan, 20.0).unwrap();
        let sigma_z = complex_noise_std(sigma, 1.0);
        // |z|^2 = 0.25, 20 dB => 2 sigma_z^2 = 0.0025
        assert!((2.0 * sigma_z * sigma_z - 0.0025).abs() < 1e-12);
    }
}
