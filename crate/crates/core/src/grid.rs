//! Overlapping window lattice over an image.
//!
//! Windows are `m x m`, placed every `s_size` pixels starting at the top-left
//! corner. When the last regular step does not land flush with the image
//! border, one extra window clamped to offset `extent - m` is appended in that
//! axis so that every pixel is covered.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Window side used when nothing else is configured.
pub const DEFAULT_WINDOW: usize = 16;
/// Step between window origins used when nothing else is configured.
pub const DEFAULT_STEP: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGeometry {
    m: usize,
    s_size: usize,
    width: usize,
    height: usize,
    xs: Vec<usize>,
    ys: Vec<usize>,
}

/// Offsets along one axis.
fn axis_offsets(extent: usize, m: usize, step: usize) -> Vec<usize> {
    let span = extent - m;
    let mut offsets: Vec<usize> = (0..=span / step).map(|k| k * step).collect();
    if span % step != 0 {
        offsets.push(span);
    }
    offsets
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, m: usize, s_size: usize) -> Result<Self> {
        if m < 4 || m % 4 != 0 {
            return Err(Error::InvalidGeometry(format!(
                "window size must be a positive multiple of 4, got {m}"
            )));
        }
        if s_size == 0 || s_size > m {
            return Err(Error::InvalidGeometry(format!(
                "step must lie in [1, {m}], got {s_size}"
            )));
        }
        if m > width || m > height {
            return Err(Error::InvalidGeometry(format!(
                "window size {m} exceeds image extent {width}x{height}"
            )));
        }
        Ok(Self {
            m,
            s_size,
            width,
            height,
            xs: axis_offsets(width, m, s_size),
            ys: axis_offsets(height, m, s_size),
        })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn s_size(&self) -> usize {
        self.s_size
    }

    /// Windows per row.
    #[inline]
    pub fn cols(&self) -> usize {
        self.xs.len()
    }

    /// Windows per column.
    #[inline]
    pub fn rows(&self) -> usize {
        self.ys.len()
    }

    #[inline]
    pub fn n_w(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Top-left pixel `(x, y)` of window `idx` (row-major lattice order).
    pub fn origin(&self, idx: usize) -> Result<(usize, usize)> {
        if idx >= self.n_w() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                n_w: self.n_w(),
            });
        }
        let cols = self.cols();
        Ok((self.xs[idx % cols], self.ys[idx / cols]))
    }

    /// All origins in index order.
    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ys
            .iter()
            .flat_map(move |&y| self.xs.iter().map(move |&x| (x, y)))
    }

    fn check_image(&self, img: &GrayImage) -> Result<()> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                img.width(),
                img.height(),
            ));
        }
        Ok(())
    }
}

/// A window of pixels lifted to reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub origin_x: usize,
    pub origin_y: usize,
    pub values: Array2<f64>,
}

pub fn build_grid(img: &GrayImage, m: usize, s_size: usize) -> Result<GridGeometry> {
    GridGeometry::new(img.width(), img.height(), m, s_size)
}

fn extract(img: &GrayImage, m: usize, x0: usize, y0: usize) -> Window {
    let values = Array2::from_shape_fn((m, m), |(r, c)| img.get(x0 + c, y0 + r) as f64);
    Window {
        origin_x: x0,
        origin_y: y0,
        values,
    }
}

pub fn window_at(img: &GrayImage, geom: &GridGeometry, idx: usize) -> Result<Window> {
    geom.check_image(img)?;
    let (x0, y0) = geom.origin(idx)?;
    Ok(extract(img, geom.m, x0, y0))
}

/// Every window of the lattice in index order.
pub fn all_windows(img: &GrayImage, geom: &GridGeometry) -> Result<Vec<Window>> {
    geom.check_image(img)?;
    Ok(geom
        .origins()
        .map(|(x, y)| extract(img, geom.m, x, y))
        .collect())
}
