//! Synthetic CT-like test phantom.

use crate::image::GrayImage;

/// Modified Shepp-Logan ellipses: centre, semi-axes, rotation (degrees) and
/// additive density, on the `[-1, 1]^2` square.
const ELLIPSES: [[f64; 6]; 10] = [
    [0.0, 0.0, 0.69, 0.92, 0.0, 1.0],
    [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8],
    [0.22, 0.0, 0.11, 0.31, -18.0, -0.2],
    [-0.22, 0.0, 0.16, 0.41, 18.0, -0.2],
    [0.0, 0.35, 0.21, 0.25, 0.0, 0.1],
    [0.0, 0.1, 0.046, 0.046, 0.0, 0.1],
    [0.0, -0.1, 0.046, 0.046, 0.0, 0.1],
    [-0.08, -0.605, 0.046, 0.023, 0.0, 0.1],
    [0.0, -0.605, 0.023, 0.023, 0.0, 0.1],
    [0.06, -0.605, 0.023, 0.046, 0.0, 0.1],
];

/// Intensity of the air background.
pub const PHANTOM_BACKGROUND: f64 = 50.0;
/// Intensity added per unit of density.
pub const PHANTOM_SCALE: f64 = 160.0;

fn density(u: f64, v: f64) -> f64 {
    ELLIPSES
        .iter()
        .filter(|[cx, cy, a, b, deg, _]| {
            let (s, c) = deg.to_radians().sin_cos();
            let (dx, dy) = (u - cx, v - cy);
            let xr = dx * c + dy * s;
            let yr = -dx * s + dy * c;
            (xr / a).powi(2) + (yr / b).powi(2) <= 1.0
        })
        .map(|e| e[5])
        .sum()
}

/// Piecewise-constant head phantom of `size x size` pixels. Intensities stay
/// inside `[50, 210]`, clear of both clipping rails for moderate noise.
pub fn shepp_logan(size: usize) -> GrayImage {
    assert!(size > 0, "phantom size must be positive");
    let n = size as f64;
    GrayImage::from_fn(size, size, |x, y| {
        let u = (2.0 * x as f64 + 1.0) / n - 1.0;
        let v = 1.0 - (2.0 * y as f64 + 1.0) / n;
        (PHANTOM_BACKGROUND + PHANTOM_SCALE * density(u, v))
            .round()
            .clamp(0.0, 255.0) as u8
    })
}
