//! `tofsep`: simulate multi-frequency time-of-flight measurements and
//! decompose them into per-pixel reflections.
//!
//! Exit codes: 0 success, 2 configuration error, 3 input data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tofsep::io::{read_cube, write_cube, write_with};
use tofsep::pipeline::{self, DecomposeConfig, DEFAULT_BASE_FREQUENCY_HZ, DEFAULT_GRID_SIZE, DEFAULT_HARMONICS};
use tofsep::reproduce::{NoiseLevel, ReproduceConfig, ReproductionScene};
use tofsep::{
    build_dictionary, load_maps, measure, phase_histogram, reproduce_paper_experiment, run_cube,
    run_pipeline, scene_file, DcOffset, Error, ErrorCategory, LocalSearch, ModulationPlan, RunConfig,
};

#[derive(Parser)]
#[command(name = "tofsep", version, about = "Multi-frequency ToF multipath separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene into a measurement cube (cube.csv + cube.meta.json).
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decompose a measurement cube into depth and amplitude maps.
    Decompose {
        #[arg(long)]
        cube: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate and decompose a scene.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in three-layer experiment.
    Reproduce {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long, default_value_t = 12)]
        height: usize,
        /// Use the full 160x120 resolution.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 4.2)]
        middle_depth: f64,
        #[arg(long, default_value_t = DEFAULT_BASE_FREQUENCY_HZ)]
        f0_hz: f64,
        #[arg(long, default_value_t = DEFAULT_HARMONICS)]
        harmonics: usize,
        /// Bucket noise standard deviation; overrides --snr-db.
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long, default_value_t = 40.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 2014)]
        seed: u64,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Phase histogram of a map directory written by `run`/`decompose`.
    Histogram {
        #[arg(long)]
        maps: PathBuf,
        /// Harmonic used to convert depth to phase; defaults to the maps' baseline harmonic.
        #[arg(long)]
        harmonic: Option<usize>,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        /// Output CSV; defaults to <maps>/histogram.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the dictionary atoms as CSV (n, l, re, im).
    Dictionary {
        #[arg(long, default_value_t = DEFAULT_HARMONICS)]
        harmonics: usize,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        #[arg(long, default_value_t = DEFAULT_BASE_FREQUENCY_HZ)]
        f0_hz: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, default_value_t = DEFAULT_BASE_FREQUENCY_HZ)]
    f0_hz: f64,
    #[arg(long, default_value_t = DEFAULT_HARMONICS)]
    harmonics: usize,
    #[arg(long, default_value_t = 1.0)]
    modulation_depth: f64,
    /// Constant correlation offset C0; defaults to the per-pixel amplitude sum.
    #[arg(long)]
    dc_offset: Option<f64>,
}

impl PlanArgs {
    fn plan(&self) -> ModulationPlan {
        let mut plan = ModulationPlan::new(self.f0_hz, self.harmonics);
        plan.modulation_depth = self.modulation_depth;
        if let Some(c) = self.dc_offset {
            plan.dc_offset = DcOffset::Constant(c);
        }
        plan
    }
}

#[derive(Args)]
struct NoiseArgs {
    /// Standard deviation of Gaussian noise on each bucket sample.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid_size: usize,
    /// Number of components to recover per pixel.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Residual tolerance; defaults to sqrt(2N) times the z noise std.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Amplitude floor for reported components; defaults to the z noise std.
    #[arg(long)]
    min_amplitude: Option<f64>,
    /// Relocation radius in grid cells for the post-selection local search;
    /// 0 disables it, default is one main-lobe width ceil(L/N).
    #[arg(long)]
    local_search_radius: Option<usize>,
    #[arg(long, default_value_t = 3)]
    baseline_harmonic: usize,
    /// Depth written where a component is absent.
    #[arg(long, default_value_t = pipeline::DEFAULT_SENTINEL_DEPTH)]
    sentinel: f64,
    #[arg(long, default_value_t = 64)]
    bins: usize,
    /// Write per-pixel solver iterations to trace.csv.
    #[arg(long)]
    debug_trace: bool,
}

impl SolveArgs {
    fn config(&self) -> DecomposeConfig {
        DecomposeConfig {
            grid_size: self.grid_size,
            max_components: self.k,
            epsilon: self.epsilon,
            min_amplitude: self.min_amplitude,
            local_search: match self.local_search_radius {
                None => LocalSearch::Auto,
                Some(0) => LocalSearch::Off,
                Some(r) => LocalSearch::Radius(r),
            },
            sentinel_depth: self.sentinel,
            histogram_bins: self.bins,
            baseline_harmonic: self.baseline_harmonic,
            debug_trace: self.debug_trace,
        }
    }
}

fn print_report(report: &pipeline::RunReport) {
    for c in &report.components {
        match (c.depth_mean, c.depth_std) {
            (Some(m), Some(s)) => println!(
                "component {}: {} px, depth {m:.4} m (std {s:.4})",
                c.component, c.pixels_present
            ),
            _ => println!("component {}: absent", c.component),
        }
    }
    println!(
        "residual mean {:.3e}, max {:.3e}",
        report.residual_mean, report.residual_max
    );
    if report.no_signal {
        println!("no signal");
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate {
            scene,
            plan,
            noise,
            out,
        } => {
            let scene = scene_file::load_scene(&scene)?;
            tofsep::io::ensure_dir(&out)?;
            let cube = measure(&scene, &plan.plan(), noise.noise_sigma, noise.seed)?;
            let path = out.join("cube.csv");
            write_cube(&path, &cube)?;
            println!("wrote {}", path.display());
        }
        Command::Decompose { cube, solve, out } => {
            let cube = read_cube(&cube)?;
            let config = solve.config();
            let output = run_cube(cube, &config)?;
            pipeline::write_outputs(&out, &output, config.debug_trace)?;
            print_report(&output.report);
        }
        Command::Run {
            scene,
            plan,
            noise,
            solve,
            out,
        } => {
            let config = RunConfig {
                scene_path: scene,
                plan: plan.plan(),
                noise_sigma: noise.noise_sigma,
                rng_seed: noise.seed,
                output_dir: out,
                decompose: solve.config(),
            };
            let output = run_pipeline(&config)?;
            print_report(&output.report);
        }
        Command::Reproduce {
            out,
            width,
            height,
            full,
            middle_depth,
            f0_hz,
            harmonics,
            noise_sigma,
            snr_db,
            seed,
            solve,
        } => {
            let mut scene = if full {
                ReproductionScene::full_resolution()
            } else {
                ReproductionScene {
                    width,
                    height,
                    ..ReproductionScene::default()
                }
            };
            scene.middle_depth_m = middle_depth;
            let cfg = ReproduceConfig {
                scene,
                base_frequency_hz: f0_hz,
                harmonic_count: harmonics,
                noise: noise_sigma.map_or(NoiseLevel::SnrDb(snr_db), NoiseLevel::Sigma),
                rng_seed: seed,
                output_dir: Some(out),
                decompose: solve.config(),
            };
            let r = reproduce_paper_experiment(&cfg)?;
            print_report(&r.run.report);
            let s = &r.summary;
            println!(
                "right-half third amplitude mean {:.3e} (sigma_z {:.3e})",
                s.right_third_amplitude_mean, s.sigma_z
            );
            if let Some(c) = s.left_text_correlation {
                println!("left-half text correlation {c:.4}");
            }
        }
        Command::Histogram {
            maps,
            harmonic,
            bins,
            out,
        } => {
            let stack = load_maps(&maps)?;
            let table = phase_histogram(&stack, harmonic.unwrap_or(stack.baseline_harmonic), bins)?;
            let path = out.unwrap_or_else(|| maps.join("histogram.csv"));
            write_with(&path, |w| table.write_csv(w))?;
            println!("wrote {}", path.display());
        }
        Command::Dictionary {
            harmonics,
            grid_size,
            f0_hz,
            out,
        } => {
            let dict = build_dictionary(harmonics, grid_size, f0_hz)?;
            write_with(&out, |w| dict.write_csv(w))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.category() {
                ErrorCategory::Config => ExitCode::from(2),
                ErrorCategory::InputData => ExitCode::from(3),
            }
        }
    }
}
