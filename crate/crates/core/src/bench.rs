//! Noise-level sweep comparing the selection engines.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::ga::stream_seed;
use crate::image::{add_awgn, psnr, GrayImage, NoiseSpec};
use crate::pgm::{load_pgm, write_atomic};
use crate::phantom::shepp_logan;
use crate::pipeline::{denoise_image, DenoiseConfig, Engine, SigmaMode};

pub const DEFAULT_SIGMAS: [f64; 5] = [10.0, 20.0, 30.0, 40.0, 50.0];
pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
/// Side of the phantom used when no input image is given.
pub const DEFAULT_PHANTOM_SIZE: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    Phantom(usize),
    File(PathBuf),
}

impl ImageSource {
    pub fn label(&self) -> String {
        match self {
            ImageSource::Phantom(n) => format!("phantom{n}"),
            ImageSource::File(p) => p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }

    pub fn load(&self) -> Result<GrayImage> {
        match self {
            ImageSource::Phantom(n) => Ok(shepp_logan(*n)),
            ImageSource::File(p) => load_pgm(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchEngine {
    NoisyOnly,
    Denoise(Engine),
}

impl BenchEngine {
    pub const ALL: [BenchEngine; 3] = [
        BenchEngine::NoisyOnly,
        BenchEngine::Denoise(Engine::Exhaustive),
        BenchEngine::Denoise(Engine::Ga),
    ];
}

impl fmt::Display for BenchEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchEngine::NoisyOnly => f.write_str("noisy-only"),
            BenchEngine::Denoise(e) => e.fmt(f),
        }
    }
}

impl FromStr for BenchEngine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy-only" | "noisy" => Ok(BenchEngine::NoisyOnly),
            other => other.parse().map(BenchEngine::Denoise),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub inputs: Vec<ImageSource>,
    pub sigmas: Vec<f64>,
    pub engines: Vec<BenchEngine>,
    pub seeds: Vec<u64>,
    /// Template for every denoising run; `sigma_mode`, `engine` and `seed`
    /// are set per cell.
    pub denoise: DenoiseConfig,
    /// Record wall-clock time per row. Off by default so reports are
    /// reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            inputs: vec![ImageSource::Phantom(DEFAULT_PHANTOM_SIZE)],
            sigmas: DEFAULT_SIGMAS.to_vec(),
            engines: BenchEngine::ALL.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            denoise: DenoiseConfig::default(),
            record_timing: false,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::InvalidParams("at least one sigma is required".into()));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParams(format!("sigma must be >= 0, got {s}")));
        }
        if self.inputs.is_empty() || self.engines.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidParams(
                "inputs, engines and seeds must be non-empty".into(),
            ));
        }
        self.denoise.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub image: String,
    pub sigma: f64,
    pub engine: BenchEngine,
    pub seed: u64,
    pub psnr_noisy: f64,
    pub psnr_denoised: Option<f64>,
    pub distance_evals: u64,
    pub wall_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

/// Mean over seeds of one (image, sigma, engine) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMean {
    pub image: String,
    pub sigma: f64,
    pub engine: BenchEngine,
    pub psnr_noisy: f64,
    pub psnr_denoised: Option<f64>,
    pub distance_evals: f64,
    pub runs: usize,
}

/// Seed of the noise realisation for one cell.
pub fn noise_seed(plan_seed: u64, sigma: f64, image_index: usize) -> u64 {
    stream_seed(stream_seed(plan_seed, image_index), sigma.to_bits() as usize)
}

pub fn run_bench(plan: &BenchPlan) -> Result<BenchReport> {
    plan.validate()?;
    let mut rows = Vec::new();
    for (image_index, source) in plan.inputs.iter().enumerate() {
        let clean = source.load()?;
        let label = source.label();
        for &sigma in &plan.sigmas {
            for &engine in &plan.engines {
                for &seed in &plan.seeds {
                    let noisy = add_awgn(
                        &clean,
                        NoiseSpec::new(sigma, noise_seed(seed, sigma, image_index))?,
                    );
                    let psnr_noisy = psnr(&clean, &noisy)?;
                    let start = Instant::now();
                    let (psnr_denoised, distance_evals) = match engine {
                        BenchEngine::NoisyOnly => (None, 0),
                        BenchEngine::Denoise(e) => {
                            let cfg = DenoiseConfig {
                                engine: e,
                                sigma_mode: SigmaMode::Known(sigma),
                                seed,
                                ..plan.denoise.clone()
                            };
                            let (out, stats) = denoise_image(&noisy, &cfg)?;
                            (Some(psnr(&clean, &out)?), stats.distance_evals)
                        }
                    };
                    rows.push(BenchRow {
                        image: label.clone(),
                        sigma,
                        engine,
                        seed,
                        psnr_noisy,
                        psnr_denoised,
                        distance_evals,
                        wall_ms: plan
                            .record_timing
                            .then(|| start.elapsed().as_millis() as u64),
                    });
                }
            }
        }
    }
    Ok(BenchReport { rows })
}

impl BenchReport {
    pub const COLUMNS: [&'static str; 8] = [
        "image",
        "sigma",
        "engine",
        "seed",
        "psnr_noisy",
        "psnr_denoised",
        "distance_evals",
        "wall_ms",
    ];

    /// Per-cell means in first-appearance order.
    pub fn cell_means(&self) -> Vec<CellMean> {
        let mut cells: Vec<CellMean> = Vec::new();
        for row in &self.rows {
            let pos = cells.iter().position(|c| {
                c.image == row.image && c.sigma == row.sigma && c.engine == row.engine
            });
            match pos {
                Some(i) => {
                    let c = &mut cells[i];
                    c.psnr_noisy += row.psnr_noisy;
                    c.psnr_denoised = c.psnr_denoised.zip(row.psnr_denoised).map(|(a, b)| a + b);
                    c.distance_evals += row.distance_evals as f64;
                    c.runs += 1;
                }
                None => cells.push(CellMean {
                    image: row.image.clone(),
                    sigma: row.sigma,
                    engine: row.engine,
                    psnr_noisy: row.psnr_noisy,
                    psnr_denoised: row.psnr_denoised,
                    distance_evals: row.distance_evals as f64,
                    runs: 1,
                }),
            }
        }
        for c in &mut cells {
            let n = c.runs as f64;
            c.psnr_noisy /= n;
            c.psnr_denoised = c.psnr_denoised.map(|v| v / n);
            c.distance_evals /= n;
        }
        cells
    }

    /// Aligned plain-text table of the per-cell means.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>6} {:<11} {:>5} {:>11} {:>14} {:>14}\n",
            "image", "sigma", "engine", "runs", "psnr_noisy", "psnr_denoised", "distance_evals"
        );
        for c in self.cell_means() {
            out += &format!(
                "{:<16} {:>6} {:<11} {:>5} {:>11} {:>14} {:>14.0}\n",
                c.image,
                fmt_float(c.sigma),
                c.engine.to_string(),
                c.runs,
                fmt_db(c.psnr_noisy),
                c.psnr_denoised.map_or_else(|| "-".to_string(), fmt_db),
                c.distance_evals,
            );
        }
        out
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.image.clone(),
                fmt_float(r.sigma),
                r.engine.to_string(),
                r.seed.to_string(),
                fmt_db(r.psnr_noisy),
                r.psnr_denoised.map(fmt_db).unwrap_or_default(),
                r.distance_evals.to_string(),
                r.wall_ms.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.into_inner()
            .map_err(|e| Error::Io {
                path: PathBuf::from("<csv buffer>"),
                source: e.into_error(),
            })
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn fmt_float(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v}")
}

/// Writes the report as CSV, replacing `path` atomically.
pub fn emit_csv(report: &BenchReport, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &report.to_csv_bytes()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_plan() -> BenchPlan {
        BenchPlan {
            inputs: vec![ImageSource::Phantom(32)],
            sigmas: vec![10.0, 30.0],
            engines: BenchEngine::ALL.to_vec(),
            seeds: vec![1, 2],
            denoise: DenoiseConfig {
                m: 8,
                s_size: 8,
                ga: crate::ga::GaParams {
                    g_max: 5,
                    max_rounds: 1,
                    ..Default::default()
                },
                ..Default::default()
            }
            .with_n_c(4),
            record_timing: false,
        }
    }

    #[test]
    fn engine_names_round_trip() {
        for e in BenchEngine::ALL {
            assert_eq!(e.to_string().parse::<BenchEngine>().unwrap(), e);
        }
        assert!("fast".parse::<BenchEngine>().is_err());
    }

    #[test]
    fn empty_report_is_header_only() {
        let bytes = BenchReport::default().to_csv_bytes().unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "image,sigma,engine,seed,psnr_noisy,psnr_denoised,distance_evals,wall_ms\n"
        );
    }

    #[test]
    fn one_row_two_lines() {
        let report = BenchReport {
            rows: vec![BenchRow {
                image: "a,b".into(),
                sigma: 10.0,
                engine: BenchEngine::NoisyOnly,
                seed: 1,
                psnr_noisy: 28.1,
                psnr_denoised: None,
                distance_evals: 0,
                wall_ms: None,
            }],
        };
        let text = String::from_utf8(report.to_csv_bytes().unwrap()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("\"a,b\",10,noisy-only,1,28.1000,,0,"));
    }

    #[test]
    fn row_count_and_determinism() {
        let plan = quick_plan();
        let a = run_bench(&plan).unwrap();
        assert_eq!(a.rows.len(), 2 * 3 * 2);
        let b = run_bench(&plan).unwrap();
        assert_eq!(a.to_csv_bytes().unwrap(), b.to_csv_bytes().unwrap());
        assert!(a.rows.iter().all(|r| r.wall_ms.is_none()));
    }

    #[test]
    fn noisy_psnr_decreases_with_sigma() {
        let plan = BenchPlan {
            sigmas: DEFAULT_SIGMAS.to_vec(),
            engines: vec![BenchEngine::NoisyOnly],
            seeds: vec![4],
            ..quick_plan()
        };
        let report = run_bench(&plan).unwrap();
        for w in report.rows.windows(2) {
            assert!(w[0].psnr_noisy > w[1].psnr_noisy);
        }
    }

    #[test]
    fn cell_means_average_seeds() {
        let report = run_bench(&quick_plan()).unwrap();
        let cells = report.cell_means();
        assert_eq!(cells.len(), 6);
        let first: Vec<&BenchRow> = report
            .rows
            .iter()
            .filter(|r| r.sigma == 10.0 && r.engine == BenchEngine::NoisyOnly)
            .collect();
        let mean = first.iter().map(|r| r.psnr_noisy).sum::<f64>() / 2.0;
        assert!((cells[0].psnr_noisy - mean).abs() < 1e-12);
        assert_eq!(cells[0].runs, 2);
        assert!(report.render_table().lines().count() == 7);
    }

    #[test]
    fn exhaustive_rows_report_full_scan() {
        let plan = BenchPlan {
            engines: vec![BenchEngine::Denoise(Engine::Exhaustive)],
            ..quick_plan()
        };
        let report = run_bench(&plan).unwrap();
        // 32x32 with m = s = 8: 16 windows, every reference scans all 16
        assert!(report.rows.iter().all(|r| r.distance_evals == 16 * 16));
    }

    #[test]
    fn plan_validation() {
        let mut plan = quick_plan();
        plan.sigmas.clear();
        assert!(run_bench(&plan).is_err());
        let mut plan = quick_plan();
        plan.sigmas = vec![-3.0];
        assert!(run_bench(&plan).is_err());
        let mut plan = quick_plan();
        plan.inputs = vec![ImageSource::File("/does/not/exist.pgm".into())];
        assert!(matches!(run_bench(&plan), Err(Error::MissingFile { .. })));
    }
}
