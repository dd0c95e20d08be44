//! Window distances, threshold gating, and the exhaustive closer-window scan.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ghm::{TransformMatrix, TransformedWindow};
use crate::grid::{all_windows, GridGeometry};
use crate::image::GrayImage;

/// Default number of closer windows per reference window.
pub const DEFAULT_N_C: usize = 16;
/// Default quantile of sampled pair distances used as the gate.
pub const DEFAULT_L2T_QUANTILE: f64 = 0.05;
/// Default number of window pairs sampled for gate calibration.
pub const DEFAULT_L2T_PAIRS: usize = 1000;

/// All windows of an image, transformed once.
#[derive(Debug, Clone)]
pub struct WindowBank {
    geometry: GridGeometry,
    windows: Vec<TransformedWindow>,
}

impl WindowBank {
    pub fn build(img: &GrayImage, geometry: &GridGeometry, f: &TransformMatrix) -> Result<Self> {
        if f.size() != geometry.m() {
            return Err(Error::SizeMismatch {
                expected: geometry.m(),
                found: f.size(),
            });
        }
        let windows = all_windows(img, geometry)?
            .iter()
            .map(|w| f.forward(&w.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            geometry: geometry.clone(),
            windows,
        })
    }

    /// Bank from already transformed windows, one per lattice position.
    pub fn from_parts(geometry: GridGeometry, windows: Vec<TransformedWindow>) -> Result<Self> {
        if windows.len() != geometry.n_w() {
            return Err(Error::SizeMismatch {
                expected: geometry.n_w(),
                found: windows.len(),
            });
        }
        if let Some(w) = windows.iter().find(|w| w.size() != geometry.m()) {
            return Err(Error::SizeMismatch {
                expected: geometry.m(),
                found: w.size(),
            });
        }
        Ok(Self { geometry, windows })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn windows(&self) -> &[TransformedWindow] {
        &self.windows
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Result<&TransformedWindow> {
        self.windows.get(idx).ok_or(Error::IndexOutOfRange {
            index: idx,
            n_w: self.windows.len(),
        })
    }
}

/// A candidate window and its distance to the reference window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
    /// Added by the GA's end-of-search fill rather than by passing the gate.
    pub fallback: bool,
}

impl Neighbor {
    pub fn new(index: usize, distance: f64) -> Self {
        Self {
            index,
            distance,
            fallback: false,
        }
    }
}

/// Ascending by distance, ties by smaller index.
pub(crate) fn neighbor_order(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

/// The windows chosen for one reference window, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosestSet {
    pub ref_idx: usize,
    pub members: Vec<Neighbor>,
    /// Distinct distance evaluations spent producing this set.
    pub evaluations: usize,
}

impl ClosestSet {
    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|n| n.index).collect()
    }

    pub fn mean_distance(&self) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        self.members.iter().map(|n| n.distance).sum::<f64>() / self.members.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub n_c: usize,
    pub l2_t: f64,
    pub include_self: bool,
}

impl SelectionParams {
    pub fn new(n_c: usize, l2_t: f64, include_self: bool) -> Result<Self> {
        let p = Self {
            n_c,
            l2_t,
            include_self,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 {
            return Err(Error::InvalidParams("n_c must be at least 1".into()));
        }
        if !(self.l2_t > 0.0) {
            return Err(Error::InvalidParams(format!(
                "L2 threshold must be positive, got {}",
                self.l2_t
            )));
        }
        Ok(())
    }
}

/// Euclidean distance between two coefficient matrices.
pub fn l2_distance(a: &TransformedWindow, b: &TransformedWindow) -> Result<f64> {
    if a.coeffs.dim() != b.coeffs.dim() {
        return Err(Error::SizeMismatch {
            expected: a.size(),
            found: b.size(),
        });
    }
    Ok(l2_unchecked(a, b))
}

#[inline]
pub(crate) fn l2_unchecked(a: &TransformedWindow, b: &TransformedWindow) -> f64 {
    a.coeffs
        .iter()
        .zip(b.coeffs.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Scans every window, keeps those within `l2_t` of the reference, and
/// returns the `n_c` closest.
pub fn exhaustive_select(
    ref_idx: usize,
    bank: &WindowBank,
    p: &SelectionParams,
) -> Result<ClosestSet> {
    p.validate()?;
    let reference = bank.get(ref_idx)?;
    let mut evaluations = 0;
    let mut passing = Vec::new();
    for (j, w) in bank.windows().iter().enumerate() {
        if j == ref_idx && !p.include_self {
            continue;
        }
        let d = l2_unchecked(reference, w);
        evaluations += 1;
        if d <= p.l2_t {
            passing.push(Neighbor::new(j, d));
        }
    }
    if passing.len() > p.n_c {
        passing.select_nth_unstable_by(p.n_c - 1, neighbor_order);
        passing.truncate(p.n_c);
    }
    passing.sort_by(neighbor_order);
    Ok(ClosestSet {
        ref_idx,
        members: passing,
        evaluations,
    })
}

/// Gate value taken as an empirical quantile of distances between randomly
/// sampled window pairs.
///
/// Pairs `(i, j)` with `i != j` are drawn uniformly from a ChaCha8 stream
/// seeded with `seed`. The quantile is the nearest-rank order statistic. An
/// image whose sampled quantile is zero yields `f64::MIN_POSITIVE` and a
/// warning, so the gate still admits exact duplicates.
pub fn calibrate_l2t(
    bank: &WindowBank,
    quantile: f64,
    sample_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "quantile must lie in (0, 1], got {quantile}"
        )));
    }
    if sample_pairs < 100 {
        return Err(Error::InvalidParams(format!(
            "at least 100 sample pairs are required, got {sample_pairs}"
        )));
    }
    let n = bank.len();
    if n < 2 {
        warn!("single-window image: L2 threshold falls back to the smallest positive value");
        return Ok(f64::MIN_POSITIVE);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dists: Vec<f64> = (0..sample_pairs)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            l2_unchecked(&bank.windows()[i], &bank.windows()[j])
        })
        .collect();
    dists.sort_by(f64::total_cmp);
    let rank = ((quantile * sample_pairs as f64).ceil() as usize).clamp(1, sample_pairs);
    let value = dists[rank - 1];
    if value <= 0.0 {
        warn!("sampled window distances are all zero at this quantile; using the smallest positive threshold");
        return Ok(f64::MIN_POSITIVE);
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghm::build_ghm_matrix;
    use crate::image::{add_awgn, NoiseSpec};
    use ndarray::Array2;

    fn noisy_bank(size: usize, m: usize, s: usize, seed: u64) -> WindowBank {
        let img = GrayImage::from_fn(size, size, |x, y| if (x / 9 + y / 13) % 2 == 0 { 80 } else { 160 });
        let noisy = add_awgn(&img, NoiseSpec::new(15.0, seed).unwrap());
        let g = GridGeometry::new(size, size, m, s).unwrap();
        WindowBank::build(&noisy, &g, &build_ghm_matrix(m).unwrap()).unwrap()
    }

    #[test]
    fn distance_basics() {
        let a = TransformedWindow::zeros(8);
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.coeffs[[3, 5]] = -2.5;
        assert_eq!(l2_distance(&a, &b).unwrap(), 2.5);
        assert!(l2_distance(&a, &TransformedWindow::zeros(16)).is_err());
    }

    #[test]
    fn self_comes_first_on_noisy_image() {
        let bank = noisy_bank(48, 8, 4, 2);
        let p = SelectionParams::new(5, 1e12, true).unwrap();
        for r in [0, 17, bank.len() - 1] {
            let set = exhaustive_select(r, &bank, &p).unwrap();
            assert_eq!(set.members[0].index, r);
            assert_eq!(set.members[0].distance, 0.0);
            assert_eq!(set.evaluations, bank.len());
        }
    }

    #[test]
    fn tight_gate_excludes_everything() {
        let bank = noisy_bank(48, 8, 4, 3);
        let r = 7;
        let min_other = (0..bank.len())
            .filter(|&j| j != r)
            .map(|j| l2_distance(bank.get(r).unwrap(), bank.get(j).unwrap()).unwrap())
            .fold(f64::INFINITY, f64::min);
        let p = SelectionParams::new(4, min_other * 0.5, false).unwrap();
        let set = exhaustive_select(r, &bank, &p).unwrap();
        assert!(set.members.is_empty());
        assert_eq!(set.evaluations, bank.len() - 1);
    }

    #[test]
    fn invalid_reference() {
        let bank = noisy_bank(32, 8, 8, 0);
        let p = SelectionParams::new(2, 1.0, true).unwrap();
        assert!(matches!(
            exhaustive_select(bank.len(), &bank, &p),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(SelectionParams::new(0, 1.0, true).is_err());
        assert!(SelectionParams::new(1, 0.0, true).is_err());
        assert!(SelectionParams::new(1, f64::NAN, true).is_err());
    }

    #[test]
    fn enlarging_n_c_keeps_members() {
        let bank = noisy_bank(48, 8, 4, 4);
        let mut prev: Vec<usize> = Vec::new();
        for n_c in 1..20 {
            let p = SelectionParams::new(n_c, 1e12, false).unwrap();
            let cur = exhaustive_select(12, &bank, &p).unwrap().indices();
            assert_eq!(&cur[..prev.len()], &prev[..]);
            prev = cur;
        }
    }

    #[test]
    fn calibrate_constant_image_warns_to_epsilon() {
        let img = GrayImage::filled(32, 32, 90);
        let g = GridGeometry::new(32, 32, 8, 4).unwrap();
        let bank = WindowBank::build(&img, &g, &build_ghm_matrix(8).unwrap()).unwrap();
        let t = calibrate_l2t(&bank, 0.05, 1000, 1).unwrap();
        assert!(t > 0.0 && t <= f64::MIN_POSITIVE);
    }

    #[test]
    fn calibrate_full_quantile_dominates() {
        let bank = noisy_bank(64, 8, 4, 9);
        let t = calibrate_l2t(&bank, 1.0, 500, 3).unwrap();
        // replay the same draws
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = bank.len();
        for _ in 0..500 {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            assert!(l2_distance(&bank.windows()[i], &bank.windows()[j]).unwrap() <= t);
        }
    }

    #[test]
    fn calibrate_quantile_matches_second_implementation() {
        let bank = noisy_bank(64, 8, 4, 21);
        let t = calibrate_l2t(&bank, 0.05, 1000, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = bank.len();
        let mut d: Vec<f64> = (0..1000)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                // pixel-free recomputation of the distance
                let a = &bank.windows()[i].coeffs;
                let b = &bank.windows()[j].coeffs;
                let diff: Array2<f64> = a - b;
                diff.mapv(|v| v * v).sum().sqrt()
            })
            .collect();
        // 5th percentile by nearest rank: the 50th smallest of 1000
        let (_, nth, _) = d.select_nth_unstable_by(49, |a, b| a.partial_cmp(b).unwrap());
        assert!((*nth - t).abs() <= 1e-9 * t);
    }

    #[test]
    fn calibrate_argument_checks() {
        let bank = noisy_bank(32, 8, 4, 1);
        assert!(calibrate_l2t(&bank, 0.0, 1000, 0).is_err());
        assert!(calibrate_l2t(&bank, 1.5, 1000, 0).is_err());
        assert!(calibrate_l2t(&bank, 0.5, 99, 0).is_err());
    }
}
