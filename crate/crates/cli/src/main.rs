//! `ctdenoise` command-line front end.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use ctdenoise::bench::{emit_csv, run_bench, BenchEngine, BenchPlan, ImageSource, DEFAULT_PHANTOM_SIZE};
use ctdenoise::error::Error;
use ctdenoise::ga::{crossover_band, GaParams, TraceRecord};
use ctdenoise::ghm::build_ghm_matrix;
use ctdenoise::grid::{build_grid, GridGeometry};
use ctdenoise::image::{add_awgn, format_psnr, psnr, NoiseSpec};
use ctdenoise::pgm::{load_pgm, save_pgm, write_atomic};
use ctdenoise::pipeline::{
    denoise_image_traced, estimate_sigma, DenoiseConfig, Engine, Gate, SigmaMode,
};
use ctdenoise::select::{calibrate_l2t, WindowBank};

const EXIT_IO: u8 = 3;
const EXIT_INVALID: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "ctdenoise", version, about = "GHM multiwavelet window denoising for CT slices")]
struct Cli {
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log more detail to stderr (repeat for more)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Add white Gaussian noise to a PGM image
    Addnoise(AddNoiseArgs),
    /// Denoise a PGM image
    Denoise(DenoiseArgs),
    /// Print the PSNR between two PGM images
    Psnr(PsnrArgs),
    /// Estimate the noise level and the L2 selection threshold of an image
    Calibrate(CalibrateArgs),
    /// Run a noise-level sweep and write a CSV report
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct OutputFormat {
    /// Write plain-text (P2) PGM instead of binary (P5)
    #[arg(long, conflicts_with = "binary")]
    ascii: bool,

    /// Write binary (P5) PGM [default]
    #[arg(long)]
    binary: bool,
}

#[derive(Args, Debug)]
struct AddNoiseArgs {
    input: PathBuf,
    output: PathBuf,

    /// Noise standard deviation in intensity levels
    #[arg(long, allow_hyphen_values = true)]
    sigma: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[command(flatten)]
    format: OutputFormat,
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// Window side m (multiple of 4, at least 8)
    #[arg(long, default_value_t = 16)]
    window: usize,

    /// Step between window origins
    #[arg(long, default_value_t = 8)]
    step: usize,

    /// Number of closer windows n_c
    #[arg(long = "n-c", default_value_t = 16)]
    n_c: usize,

    /// GA population size
    #[arg(long, default_value_t = 10)]
    population: usize,

    /// GA generations per round
    #[arg(long = "g-max", default_value_t = 100)]
    g_max: usize,

    /// First crossover point [default: 5, scaled with --n-c]
    #[arg(long)]
    cp1: Option<usize>,

    /// Second crossover point [default: 12, scaled with --n-c]
    #[arg(long)]
    cp2: Option<usize>,

    /// GA rounds before the archive is filled with the nearest seen windows
    #[arg(long = "max-rounds", default_value_t = 5)]
    max_rounds: usize,

    /// Fixed L2 selection threshold (default: calibrated from the image)
    #[arg(long)]
    l2t: Option<f64>,

    /// Distance quantile used to calibrate the L2 threshold
    #[arg(long, default_value_t = 0.05)]
    quantile: f64,

    /// Window pairs sampled to calibrate the L2 threshold
    #[arg(long, default_value_t = 1000)]
    pairs: usize,

    /// Multiplier of the universal shrinkage threshold
    #[arg(long = "threshold-scale", default_value_t = 0.3)]
    threshold_scale: f64,

    /// Fixed shrinkage threshold, overriding the universal one
    #[arg(long)]
    threshold: Option<f64>,

    /// Leave the reference window out of its own closer set
    #[arg(long = "exclude-self")]
    exclude_self: bool,

    /// Shrink windows without removing their mean level first
    #[arg(long = "no-mean-split")]
    no_mean_split: bool,
}

impl PipelineArgs {
    fn to_config(&self, engine: Engine, sigma_mode: SigmaMode, seed: u64) -> DenoiseConfig {
        let (band1, band2) = crossover_band(self.n_c);
        DenoiseConfig {
            m: self.window,
            s_size: self.step,
            engine,
            n_c: self.n_c,
            include_self: !self.exclude_self,
            gate: match self.l2t {
                Some(t) => Gate::Fixed(t),
                None => Gate::Calibrated {
                    quantile: self.quantile,
                    pairs: self.pairs,
                },
            },
            ga: GaParams {
                n_p: self.population,
                g_max: self.g_max,
                c_p1: self.cp1.unwrap_or(band1),
                c_p2: self.cp2.unwrap_or(band2),
                max_rounds: self.max_rounds,
                ..GaParams::default()
            },
            sigma_mode,
            threshold_scale: self.threshold_scale,
            threshold_override: self.threshold,
            preserve_mean: !self.no_mean_split,
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    input: PathBuf,
    output: PathBuf,

    /// key=value file of flag defaults; flags on the command line win
    #[arg(long)]
    config: Option<PathBuf>,

    /// Closer-window engine
    #[arg(long, default_value = "ga", value_parser = ["ga", "exhaustive"])]
    method: String,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Known noise standard deviation (default: estimated)
    #[arg(long, conflicts_with = "estimate", allow_hyphen_values = true)]
    sigma: Option<f64>,

    /// Estimate the noise level from the image [default]
    #[arg(long)]
    estimate: bool,

    #[command(flatten)]
    pipeline: PipelineArgs,

    /// Print one record per GA generation to stderr
    #[arg(long)]
    trace: bool,

    /// Clean image used to report PSNR before and after
    #[arg(long)]
    reference: Option<PathBuf>,

    /// Write the transform matrix as CSV
    #[arg(long = "dump-matrix")]
    dump_matrix: Option<PathBuf>,

    #[command(flatten)]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct PsnrArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    input: PathBuf,

    /// Window side m
    #[arg(long, default_value_t = 16)]
    window: usize,

    /// Step between window origins
    #[arg(long, default_value_t = 8)]
    step: usize,

    /// Distance quantile of the L2 threshold
    #[arg(long, default_value_t = 0.05)]
    quantile: f64,

    /// Window pairs sampled
    #[arg(long, default_value_t = 1000)]
    pairs: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// PGM images to sweep (default: the bundled phantom)
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,

    /// Side of the bundled phantom
    #[arg(long = "phantom-size", default_value_t = DEFAULT_PHANTOM_SIZE)]
    phantom_size: usize,

    /// Comma-separated noise levels
    #[arg(long, default_value = "10,20,30,40,50", value_delimiter = ',')]
    sigmas: Vec<f64>,

    /// Comma-separated engines out of noisy-only, exhaustive, ga
    #[arg(long, default_value = "noisy-only,exhaustive,ga", value_delimiter = ',')]
    engines: Vec<String>,

    /// Comma-separated seeds; each gives one noise realisation per cell
    #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
    seeds: Vec<u64>,

    /// CSV report path
    #[arg(long, short, default_value = "bench.csv")]
    output: PathBuf,

    /// Record wall-clock milliseconds per row (makes reports non-reproducible)
    #[arg(long)]
    timing: bool,

    /// key=value file of flag defaults; flags on the command line win
    #[arg(long)]
    config: Option<PathBuf>,

    #[command(flatten)]
    pipeline: PipelineArgs,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_io() { EXIT_IO } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let argv = match config::expand_args(&Cli::command(), std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return report(e.into()),
    };
    let cli = Cli::parse_from(argv);

    env_logger::Builder::new()
        .filter_level(match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.threads {
        if n == 0 {
            return report(invalid("--threads must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(invalid(format!("cannot size the worker pool: {e}")));
        }
    }

    let result = match &cli.command {
        Command::Addnoise(a) => cmd_addnoise(a),
        Command::Denoise(a) => cmd_denoise(a),
        Command::Psnr(a) => cmd_psnr(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    eprintln!("ctdenoise: {}", f.message);
    ExitCode::from(f.code)
}

fn binary(format: &OutputFormat) -> bool {
    !format.ascii
}

fn cmd_addnoise(a: &AddNoiseArgs) -> CmdResult {
    let spec = NoiseSpec::new(a.sigma, a.seed)?;
    let img = load_pgm(&a.input)?;
    save_pgm(&add_awgn(&img, spec), &a.output, binary(&a.format))?;
    Ok(())
}

/// Geometry and parameter checks that need no image.
fn precheck(cfg: &DenoiseConfig) -> CmdResult {
    GridGeometry::new(cfg.m, cfg.m, cfg.m, cfg.s_size)?;
    build_ghm_matrix(cfg.m)?;
    cfg.validate()?;
    Ok(())
}

fn cmd_denoise(a: &DenoiseArgs) -> CmdResult {
    let engine: Engine = a.method.parse()?;
    let sigma_mode = match a.sigma {
        Some(s) => SigmaMode::Known(s),
        None => SigmaMode::Estimate,
    };
    let cfg = a.pipeline.to_config(engine, sigma_mode, a.seed);
    precheck(&cfg)?;

    let noisy = load_pgm(&a.input)?;
    let reference = a.reference.as_deref().map(load_pgm).transpose()?;
    if let Some(r) = &reference {
        if (r.width(), r.height()) != (noisy.width(), noisy.height()) {
            return Err(Error::DimensionMismatch(r.width(), r.height(), noisy.width(), noisy.height()).into());
        }
    }
    build_grid(&noisy, cfg.m, cfg.s_size)?;

    let mut print_trace = |r: &TraceRecord| eprintln!("{}", r.to_line());
    let trace: Option<&mut dyn FnMut(&TraceRecord)> = if a.trace { Some(&mut print_trace) } else { None };
    let (out, mut stats) = denoise_image_traced(&noisy, &cfg, trace)?;
    if let Some(r) = &reference {
        stats.psnr_in = Some(psnr(r, &noisy)?);
        stats.psnr_out = Some(psnr(r, &out)?);
    }

    if let Some(path) = &a.dump_matrix {
        write_atomic(path, build_ghm_matrix(cfg.m)?.to_csv().as_bytes())?;
    }
    save_pgm(&out, &a.output, binary(&a.format))?;

    print!("{}", stats.to_key_values());
    println!("l2_t={:.6}", stats.l2_t);
    println!("threshold={:.6}", stats.threshold);
    println!("n_w={}", stats.n_w);
    println!("fallback_members={}", stats.fallback_members);
    Ok(())
}

fn cmd_psnr(a: &PsnrArgs) -> CmdResult {
    let x = load_pgm(&a.a)?;
    let y = load_pgm(&a.b)?;
    println!("{}", format_psnr(psnr(&x, &y)?));
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs) -> CmdResult {
    GridGeometry::new(a.window, a.window, a.window, a.step)?;
    let f = build_ghm_matrix(a.window)?;
    if !(a.quantile > 0.0 && a.quantile <= 1.0) || a.pairs < 100 {
        return Err(invalid(format!(
            "calibration needs --quantile in (0, 1] and --pairs >= 100, got {} and {}",
            a.quantile, a.pairs
        )));
    }
    let img = load_pgm(&a.input)?;
    let geom = build_grid(&img, a.window, a.step)?;
    let bank = WindowBank::build(&img, &geom, &f)?;
    let l2_t = calibrate_l2t(&bank, a.quantile, a.pairs, a.seed)?;
    println!("n_w={}", bank.len());
    println!("sigma_estimate={:.4}", estimate_sigma(&img, &f)?);
    println!("l2_t={l2_t:.6}");
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let engines = a
        .engines
        .iter()
        .map(|e| e.trim().parse::<BenchEngine>())
        .collect::<Result<Vec<_>, _>>()?;
    let inputs = if a.inputs.is_empty() {
        vec![ImageSource::Phantom(a.phantom_size)]
    } else {
        a.inputs.iter().cloned().map(ImageSource::File).collect()
    };
    let denoise = a.pipeline.to_config(Engine::Exhaustive, SigmaMode::Estimate, 0);
    for e in &engines {
        if let BenchEngine::Denoise(engine) = e {
            precheck(&DenoiseConfig { engine: *engine, ..denoise.clone() })?;
        }
    }
    let plan = BenchPlan {
        inputs,
        sigmas: a.sigmas.clone(),
        engines,
        seeds: a.seeds.clone(),
        denoise,
        record_timing: a.timing,
    };
    plan.validate()?;
    check_writable_dir(&a.output)?;

    let report = run_bench(&plan)?;
    emit_csv(&report, &a.output)?;
    print!("{}", report.render_table());
    Ok(())
}

fn check_writable_dir(path: &Path) -> CmdResult {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => return Ok(()),
    };
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_IO,
            message: format!("output directory {} does not exist", dir.display()),
        })
    }
}
