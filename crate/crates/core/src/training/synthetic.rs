//! Seeded synthetic images.
//!
//! Image `i` of a family depends only on the seed and on `i`, so asking for
//! more images extends a family without changing the earlier ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::GridSignal;

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Pixel centre coordinates normalised to `[-0.5, 0.5]`.
fn coords(rows: usize, cols: usize) -> impl Iterator<Item = (f64, f64)> {
    let (fr, fc) = (rows as f64, cols as f64);
    (0..rows).flat_map(move |r| (0..cols).map(move |c| ((c as f64 + 0.5) / fc - 0.5, 0.5 - (r as f64 + 0.5) / fr)))
}

/// Parameters of the random Gaussian blob family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobParams {
    pub max_blobs: usize,
    /// Blob standard deviation range, as a fraction of the image side.
    pub width: (f64, f64),
    /// Blob centres stay within this radius of the image centre.
    pub radius: f64,
    pub amplitude: (f64, f64),
}

impl Default for BlobParams {
    fn default() -> Self {
        Self { max_blobs: 3, width: (0.08, 0.2), radius: 0.3, amplitude: (0.3, 1.0) }
    }
}

pub fn blob_image(rows: usize, cols: usize, params: &BlobParams, seed: u64, index: usize) -> GridSignal {
    let mut rng = stream(seed, index);
    let k = rng.random_range(1..=params.max_blobs.max(1));
    let blobs: Vec<(f64, f64, f64, f64)> = (0..k)
        .map(|_| {
            let rad = params.radius * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let w = rng.random_range(params.width.0..=params.width.1);
            let a = rng.random_range(params.amplitude.0..=params.amplitude.1);
            (rad * phi.cos(), rad * phi.sin(), w, a)
        })
        .collect();
    let values = coords(rows, cols)
        .map(|(x, y)| {
            blobs
                .iter()
                .map(|(cx, cy, w, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp())
                .sum()
        })
        .collect();
    GridSignal::from_raw(values, Some((rows, cols)))
}

pub fn blob_images(rows: usize, cols: usize, count: usize, params: &BlobParams, seed: u64) -> Vec<GridSignal> {
    (0..count).map(|i| blob_image(rows, cols, params, seed, i)).collect()
}

/// Random field `Σ c_{jk} cos(jπ(x+½)) cos(kπ(y+½))` with Gaussian
/// coefficients damped by `exp(−(j²+k²)/(2·bandwidth²))`, scaled to peak
/// magnitude one.
pub fn smooth_field(rows: usize, cols: usize, bandwidth: f64, seed: u64, index: usize) -> GridSignal {
    let mut rng = stream(seed, index);
    let kmax = (4.0 * bandwidth).ceil() as usize + 1;
    let coeffs: Vec<f64> = (0..kmax * kmax)
        .map(|m| {
            let (j, k) = ((m / kmax) as f64, (m % kmax) as f64);
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (-(j * j + k * k) / (2.0 * bandwidth * bandwidth)).exp()
        })
        .collect();
    let pi = std::f64::consts::PI;
    let values = coords(rows, cols)
        .map(|(x, y)| {
            let mut s = 0.0;
            for j in 0..kmax {
                let cx = (j as f64 * pi * (x + 0.5)).cos();
                for k in 0..kmax {
                    s += coeffs[j * kmax + k] * cx * (k as f64 * pi * (y + 0.5)).cos();
                }
            }
            s
        })
        .collect::<Vec<f64>>();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let values = if peak > 0.0 { values.iter().map(|v| v / peak).collect() } else { values };
    GridSignal::from_raw(values, Some((rows, cols)))
}

pub fn smooth_fields(rows: usize, cols: usize, count: usize, bandwidth: f64, seed: u64) -> Vec<GridSignal> {
    (0..count).map(|i| smooth_field(rows, cols, bandwidth, seed, i)).collect()
}

/// Piecewise-constant test image made of a few overlapping ellipses.
pub fn ellipse_phantom(rows: usize, cols: usize) -> GridSignal {
    // (centre x, centre y, semi-axis x, semi-axis y, rotation, value)
    let ellipses: [(f64, f64, f64, f64, f64, f64); 5] = [
        (0.0, 0.0, 0.42, 0.46, 0.0, 0.6),
        (0.0, -0.01, 0.38, 0.42, 0.0, -0.2),
        (0.12, 0.05, 0.08, 0.17, -0.3, 0.5),
        (-0.12, 0.06, 0.1, 0.15, 0.3, 0.35),
        (0.0, -0.2, 0.12, 0.06, 0.0, 0.3),
    ];
    let values = coords(rows, cols)
        .map(|(x, y)| {
            ellipses
                .iter()
                .filter(|(cx, cy, a, b, t, _)| {
                    let (s, c) = t.sin_cos();
                    let dx = x - cx;
                    let dy = y - cy;
                    let u = (c * dx + s * dy) / a;
                    let v = (-s * dx + c * dy) / b;
                    u * u + v * v <= 1.0
                })
                .map(|e| e.5)
                .sum()
        })
        .collect();
    GridSignal::from_raw(values, Some((rows, cols)))
}

/// Image with a single pixel set to one.
pub fn pixel_image(rows: usize, cols: usize, index: usize) -> GridSignal {
    let mut v = vec![0.0; rows * cols];
    v[index] = 1.0;
    GridSignal::from_raw(v, Some((rows, cols)))
}
