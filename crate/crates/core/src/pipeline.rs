//! Denoising around the selection engines: average each reference window
//! with its closer windows in the transform domain, soft-threshold the
//! detail coefficients, invert, and average overlapping patches.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ga::{ga_select, ga_select_observed, GaParams, TraceRecord};
use crate::ghm::{build_ghm_matrix, TransformMatrix, TransformedWindow};
use crate::grid::{build_grid, GridGeometry, DEFAULT_STEP, DEFAULT_WINDOW};
use crate::image::GrayImage;
use crate::select::{
    calibrate_l2t, exhaustive_select, ClosestSet, SelectionParams, WindowBank, DEFAULT_L2T_PAIRS,
    DEFAULT_L2T_QUANTILE, DEFAULT_N_C,
};

/// Default multiplier on the universal threshold.
pub const DEFAULT_THRESHOLD_SCALE: f64 = 0.3;

/// MAD-to-sigma factor for Gaussian noise.
const MAD_SCALE: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Exhaustive,
    Ga,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Exhaustive => "exhaustive",
            Engine::Ga => "ga",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Engine::Exhaustive),
            "ga" => Ok(Engine::Ga),
            other => Err(Error::InvalidParams(format!(
                "unknown engine {other:?} (expected exhaustive or ga)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    Known(f64),
    Estimate,
}

/// Source of the distance gate `l2_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Calibrated { quantile: f64, pairs: usize },
    Fixed(f64),
}

impl Default for Gate {
    fn default() -> Self {
        Gate::Calibrated {
            quantile: DEFAULT_L2T_QUANTILE,
            pairs: DEFAULT_L2T_PAIRS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    pub m: usize,
    pub s_size: usize,
    pub engine: Engine,
    pub n_c: usize,
    pub include_self: bool,
    pub gate: Gate,
    /// GA settings; `n_c`, `l2_t`, `seed` and `include_self` are taken from
    /// this config at run time.
    pub ga: GaParams,
    pub sigma_mode: SigmaMode,
    pub threshold_scale: f64,
    /// Overrides the universal threshold when set.
    pub threshold_override: Option<f64>,
    /// Shrink the window with its mean level removed.
    pub preserve_mean: bool,
    pub seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            m: DEFAULT_WINDOW,
            s_size: DEFAULT_STEP,
            engine: Engine::Exhaustive,
            n_c: DEFAULT_N_C,
            include_self: true,
            gate: Gate::default(),
            ga: GaParams::default(),
            sigma_mode: SigmaMode::Estimate,
            threshold_scale: DEFAULT_THRESHOLD_SCALE,
            threshold_override: None,
            preserve_mean: true,
            seed: 0,
        }
    }
}

impl DenoiseConfig {
    /// Sets the number of closer windows and rescales the GA crossover band.
    pub fn with_n_c(mut self, n_c: usize) -> Self {
        self.n_c = n_c;
        let (c_p1, c_p2) = crate::ga::crossover_band(n_c);
        self.ga.c_p1 = c_p1;
        self.ga.c_p2 = c_p2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_scale > 0.0 && self.threshold_scale.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "threshold scale must be positive, got {}",
                self.threshold_scale
            )));
        }
        if let Some(t) = self.threshold_override {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidParams(format!("threshold must be >= 0, got {t}")));
            }
        }
        if let SigmaMode::Known(s) = self.sigma_mode {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParams(format!("sigma must be >= 0, got {s}")));
            }
        }
        match self.gate {
            Gate::Fixed(t) if !(t > 0.0) => {
                return Err(Error::InvalidParams(format!("L2 threshold must be positive, got {t}")))
            }
            Gate::Calibrated { quantile, pairs } if !(quantile > 0.0 && quantile <= 1.0) || pairs < 100 => {
                return Err(Error::InvalidParams(format!(
                    "gate calibration needs quantile in (0, 1] and >= 100 pairs, got {quantile} and {pairs}"
                )))
            }
            _ => {}
        }
        if self.n_c == 0 {
            return Err(Error::InvalidParams("n_c must be at least 1".into()));
        }
        if self.engine == Engine::Ga {
            self.ga_params(1.0).validate()?;
        }
        Ok(())
    }

    fn ga_params(&self, l2_t: f64) -> GaParams {
        GaParams {
            n_c: self.n_c,
            l2_t,
            seed: self.seed,
            include_self: self.include_self,
            ..self.ga
        }
    }
}

/// Per-run measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub engine: Engine,
    pub m: usize,
    pub s_size: usize,
    pub n_c: usize,
    /// Noise level used to set the threshold.
    pub sigma: f64,
    pub psnr_in: Option<f64>,
    pub psnr_out: Option<f64>,
    pub distance_evals: u64,
    pub wall_ms: u64,
    pub seed: u64,
    pub l2_t: f64,
    pub threshold: f64,
    pub n_refs: usize,
    pub n_w: usize,
    pub fallback_members: u64,
}

impl RunStats {
    pub const FIELDS: [&'static str; 10] = [
        "engine",
        "m",
        "s_size",
        "n_c",
        "sigma",
        "psnr_in",
        "psnr_out",
        "distance_evals",
        "wall_ms",
        "seed",
    ];

    fn values(&self) -> [String; 10] {
        let opt = |v: Option<f64>| v.map_or_else(String::new, crate::image::format_psnr);
        [
            self.engine.to_string(),
            self.m.to_string(),
            self.s_size.to_string(),
            self.n_c.to_string(),
            format!("{:.4}", self.sigma),
            opt(self.psnr_in),
            opt(self.psnr_out),
            self.distance_evals.to_string(),
            self.wall_ms.to_string(),
            self.seed.to_string(),
        ]
    }

    /// `key=value` lines in fixed field order.
    pub fn to_key_values(&self) -> String {
        Self::FIELDS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn csv_header() -> String {
        Self::FIELDS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.values().join(",")
    }
}

/// Robust noise estimate: median absolute diagonal-detail coefficient over
/// non-overlapping windows, divided by 0.6745. Windows are transformed with
/// their mean removed so flat regions contribute exact zeros.
pub fn estimate_sigma(img: &GrayImage, f: &TransformMatrix) -> Result<f64> {
    let m = f.size();
    let geom = build_grid(img, m, m)?;
    let half = m / 2;
    let mut details = Vec::with_capacity(geom.n_w() * half * half);
    for idx in 0..geom.n_w() {
        let w = crate::grid::window_at(img, &geom, idx)?;
        let mean = w.values.mean().unwrap_or(0.0);
        let t = f.forward(&w.values.mapv(|v| v - mean))?;
        for r in half..m {
            for c in half..m {
                details.push(t.coeffs[[r, c]].abs());
            }
        }
    }
    Ok(median(&mut details) / MAD_SCALE)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Soft shrinkage of every coefficient outside the low-pass quadrant.
pub fn soft_threshold(w: &TransformedWindow, t: f64) -> TransformedWindow {
    let mut out = w.clone();
    let h = w.split();
    for ((r, c), v) in out.coeffs.indexed_iter_mut() {
        if r >= h || c >= h {
            *v = v.signum() * (v.abs() - t).max(0.0);
        }
    }
    out
}

/// Universal threshold `scale * sigma * sqrt(2 ln(m^2))`.
pub fn universal_threshold(sigma: f64, m: usize, scale: f64) -> f64 {
    scale * sigma * (2.0 * ((m * m) as f64).ln()).sqrt()
}

/// Transform-domain filtering of one reference window.
///
/// The reference and its closer windows are averaged coefficient-wise. With
/// `mean_pattern` set (the transform of the all-ones window), the average's
/// mean level is split off before shrinkage and restored afterwards, since
/// the GHM detail bands do not vanish on constants. The result is inverted
/// back to pixels.
pub fn denoise_window(
    reference: &TransformedWindow,
    closers: &[&TransformedWindow],
    t: f64,
    f: &TransformMatrix,
    mean_pattern: Option<&TransformedWindow>,
) -> Result<Array2<f64>> {
    let m = f.size();
    let mut acc = reference.coeffs.clone();
    for w in closers {
        if w.size() != m {
            return Err(Error::SizeMismatch {
                expected: m,
                found: w.size(),
            });
        }
        acc += &w.coeffs;
    }
    acc /= (closers.len() + 1) as f64;
    let mut avg = TransformedWindow { coeffs: acc };

    let level = mean_pattern.map(|k| {
        let mu = (&avg.coeffs * &k.coeffs).sum() / (m * m) as f64;
        Zip::from(&mut avg.coeffs)
            .and(&k.coeffs)
            .for_each(|a, &kv| *a -= mu * kv);
        mu
    });
    let mut shrunk = soft_threshold(&avg, t);
    if let (Some(mu), Some(k)) = (level, mean_pattern) {
        Zip::from(&mut shrunk.coeffs)
            .and(&k.coeffs)
            .for_each(|a, &kv| *a += mu * kv);
    }
    f.inverse(&shrunk)
}

/// Running per-pixel sums and contribution counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    weight: Vec<f64>,
}

impl Accumulator {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            sum: vec![0.0; width * height],
            weight: vec![0.0; width * height],
        }
    }

    pub fn add_patch(&mut self, origin: (usize, usize), patch: &Array2<f64>) {
        let (x0, y0) = origin;
        assert!(
            x0 + patch.ncols() <= self.width && y0 + patch.nrows() <= self.height,
            "patch at {origin:?} exceeds the image"
        );
        for ((r, c), &v) in patch.indexed_iter() {
            let i = (y0 + r) * self.width + x0 + c;
            self.sum[i] += v;
            self.weight[i] += 1.0;
        }
    }

    /// Adds another accumulator's sums and weights.
    pub fn merge(&mut self, other: &Accumulator) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
    }

    /// Per-pixel `round(sum / weight)`, clamped to `[0, 255]`.
    pub fn finish(&self) -> GrayImage {
        let pixels = self
            .sum
            .iter()
            .zip(&self.weight)
            .map(|(&s, &w)| {
                assert!(w > 0.0, "pixel without any contributing window");
                (s / w).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        GrayImage::new(self.width, self.height, pixels).expect("accumulator shape is valid")
    }
}

/// Averages patches placed at the lattice origins, in index order.
pub fn aggregate(patches: &[Array2<f64>], geom: &GridGeometry) -> Result<GrayImage> {
    if patches.len() != geom.n_w() {
        return Err(Error::SizeMismatch {
            expected: geom.n_w(),
            found: patches.len(),
        });
    }
    let (w, h) = geom.image_size();
    let mut acc = Accumulator::new(w, h);
    for (origin, patch) in geom.origins().zip(patches) {
        if patch.dim() != (geom.m(), geom.m()) {
            return Err(Error::SizeMismatch {
                expected: geom.m(),
                found: patch.nrows(),
            });
        }
        acc.add_patch(origin, patch);
    }
    Ok(acc.finish())
}

/// Noise standard deviation left after averaging the reference window with
/// `members`, relative to a single window, assuming independent noise.
/// A window listed twice (the reference among its own members) counts twice.
pub fn averaged_noise_factor(ref_idx: usize, members: &[usize]) -> f64 {
    let total = (members.len() + 1) as f64;
    let self_weight = 1.0 + members.iter().filter(|&&j| j == ref_idx).count() as f64;
    let others = total - self_weight;
    (self_weight * self_weight + others).sqrt() / total
}

/// Closer windows for `ref_idx` and the engine's bookkeeping.
fn select_for(
    ref_idx: usize,
    bank: &WindowBank,
    cfg: &DenoiseConfig,
    l2_t: f64,
    trace: Option<&mut Vec<TraceRecord>>,
) -> Result<(ClosestSet, usize)> {
    match cfg.engine {
        Engine::Exhaustive => {
            let p = SelectionParams::new(cfg.n_c, l2_t, cfg.include_self)?;
            Ok((exhaustive_select(ref_idx, bank, &p)?, 0))
        }
        Engine::Ga => {
            let p = cfg.ga_params(l2_t);
            let out = match trace {
                Some(records) => ga_select_observed(ref_idx, bank, &p, |r| {
                    records.push(TraceRecord::from_report(r))
                })?,
                None => ga_select(ref_idx, bank, &p)?,
            };
            Ok((out.set, out.fallback_members))
        }
    }
}

/// Noise level to use for the threshold.
pub fn resolve_sigma(img: &GrayImage, cfg: &DenoiseConfig, f: &TransformMatrix) -> Result<f64> {
    match cfg.sigma_mode {
        SigmaMode::Known(s) => Ok(s),
        SigmaMode::Estimate => estimate_sigma(img, f),
    }
}

/// Denoises `noisy` with the configured selection engine.
pub fn denoise_image(noisy: &GrayImage, cfg: &DenoiseConfig) -> Result<(GrayImage, RunStats)> {
    denoise_image_traced(noisy, cfg, None)
}

/// Like [`denoise_image`], handing every GA generation record to `trace`
/// in reference-window order once selection is done.
pub fn denoise_image_traced(
    noisy: &GrayImage,
    cfg: &DenoiseConfig,
    mut trace: Option<&mut dyn FnMut(&TraceRecord)>,
) -> Result<(GrayImage, RunStats)> {
    let start = Instant::now();
    cfg.validate()?;
    let geom = build_grid(noisy, cfg.m, cfg.s_size)?;
    let f = build_ghm_matrix(cfg.m)?;
    let bank = WindowBank::build(noisy, &geom, &f)?;

    let sigma = resolve_sigma(noisy, cfg, &f)?;
    let threshold = cfg
        .threshold_override
        .unwrap_or_else(|| universal_threshold(sigma, cfg.m, cfg.threshold_scale));
    let l2_t = match cfg.gate {
        Gate::Fixed(t) => t,
        Gate::Calibrated { quantile, pairs } => calibrate_l2t(&bank, quantile, pairs, cfg.seed)?,
    };
    let mean_pattern = cfg.preserve_mean.then(|| f.constant_response());

    let tracing = trace.is_some();
    let results = (0..bank.len())
        .into_par_iter()
        .map(|i| {
            let mut records = Vec::new();
            let (set, fallback) =
                select_for(i, &bank, cfg, l2_t, tracing.then_some(&mut records))?;
            let members: Vec<usize> = set
                .members
                .iter()
                .filter(|n| !n.fallback)
                .map(|n| n.index)
                .collect();
            let closers: Vec<&TransformedWindow> =
                members.iter().map(|&j| &bank.windows()[j]).collect();
            let t = threshold * averaged_noise_factor(i, &members);
            let patch = denoise_window(&bank.windows()[i], &closers, t, &f, mean_pattern.as_ref())?;
            Ok((patch, set.evaluations, fallback, records))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut distance_evals = 0u64;
    let mut fallback_members = 0u64;
    let mut patches = Vec::with_capacity(results.len());
    for (patch, evals, fallback, records) in results {
        if let Some(cb) = trace.as_mut() {
            records.iter().for_each(|r| cb(r));
        }
        distance_evals += evals as u64;
        fallback_members += fallback as u64;
        patches.push(patch);
    }
    let out = aggregate(&patches, &geom)?;

    let stats = RunStats {
        engine: cfg.engine,
        m: cfg.m,
        s_size: cfg.s_size,
        n_c: cfg.n_c,
        sigma,
        psnr_in: None,
        psnr_out: None,
        distance_evals,
        wall_ms: start.elapsed().as_millis() as u64,
        seed: cfg.seed,
        l2_t,
        threshold,
        n_refs: bank.len(),
        n_w: bank.len(),
        fallback_members,
    };
    Ok((out, stats))
}
