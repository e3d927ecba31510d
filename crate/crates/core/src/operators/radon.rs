use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::LinearOperator;

/// How a detector bin samples the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RayModel {
    /// Each bin integrates the exact ray-pixel intersection length over its
    /// full width (a strip of parallel rays). Preserves image mass exactly.
    #[default]
    Strip,
    /// A single ray through the bin centre weighted by its exact intersection
    /// length with each pixel. A ray lying on a pixel edge splits its length
    /// equally between the two neighbours.
    Line,
}

/// `⌈√2·max(rows, cols)⌉ + 3`
pub fn default_detector_bins(rows: usize, cols: usize) -> usize {
    (std::f64::consts::SQRT_2 * rows.max(cols) as f64).ceil() as usize + 3
}

/// `k·π/m` for `k = 0..m`.
pub fn uniform_angles(m: usize) -> Vec<f64> {
    (0..m).map(|k| k as f64 * PI / m as f64).collect()
}

/// Discrete parallel-beam Radon transform.
///
/// Pixels are unit squares centred at `x = c − (cols−1)/2`,
/// `y = (rows−1)/2 − r`. The ray at detector offset `s` and angle `θ` is the
/// line `x cos θ + y sin θ = s`; bin `b` is centred at `b − (bins−1)/2` with
/// unit spacing. The sinogram is a `bins × angles` grid stored row-major.
///
/// The weights are held as a sparse matrix; the adjoint is its exact transpose.
#[derive(Debug, Clone)]
pub struct RadonOperator {
    rows: usize,
    cols: usize,
    angles: Vec<f64>,
    bins: usize,
    model: RayModel,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<f64>,
}

/// Cumulative profile of a unit pixel projected onto the detector axis, for a
/// direction with `a = max(|cos|,|sin|)`, `b = min(|cos|,|sin|)`.
#[derive(Debug, Clone, Copy)]
struct Footprint {
    a: f64,
    b: f64,
}

impl Footprint {
    fn new(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let (s, c) = (s.abs(), c.abs());
        let b = s.min(c);
        // snap round-off so axis-aligned angles produce a box profile
        let b = if b < 1e-12 { 0.0 } else { b };
        Self { a: s.max(c), b }
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    /// Area of the pixel on the side `offset < t` of the ray family.
    fn cdf(&self, t: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        let p = 0.5 * (a - b);
        let q = 0.5 * (a + b);
        if t <= -q {
            0.0
        } else if t >= q {
            1.0
        } else if b == 0.0 {
            (t + q) / a
        } else if t < -p {
            (t + q) * (t + q) / (2.0 * a * b)
        } else if t <= p {
            b / (2.0 * a) + (t + p) / a
        } else {
            1.0 - (q - t) * (q - t) / (2.0 * a * b)
        }
    }

    /// Chord length of the ray at offset `t`; at a kink or jump the two
    /// one-sided limits are averaged.
    fn chord(&self, t: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        let p = 0.5 * (a - b);
        let q = 0.5 * (a + b);
        let t = t.abs();
        if b == 0.0 {
            return if t < q {
                1.0 / a
            } else if t == q {
                0.5 / a
            } else {
                0.0
            };
        }
        if t >= q {
            0.0
        } else if t <= p {
            1.0 / a
        } else {
            (q - t) / (a * b)
        }
    }
}

impl RadonOperator {
    pub fn new(rows: usize, cols: usize, angles: Vec<f64>, bins: usize, model: RayModel) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("image grid must be nonempty".into()));
        }
        if angles.is_empty() || bins == 0 {
            return Err(Error::InvalidArgument("need at least one angle and one detector bin".into()));
        }
        if let Some(i) = angles.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let m = angles.len();
        let mut per_row: Vec<Vec<(u32, f64)>> = vec![Vec::new(); bins * m];
        let centre = 0.5 * (bins as f64 - 1.0);

        for (k, &theta) in angles.iter().enumerate() {
            let fp = Footprint::new(theta);
            let (sin, cos) = theta.sin_cos();
            let hw = fp.half_width();
            for r in 0..rows {
                let y = 0.5 * (rows as f64 - 1.0) - r as f64;
                for c in 0..cols {
                    let x = c as f64 - 0.5 * (cols as f64 - 1.0);
                    let tc = x * cos + y * sin;
                    let pixel = (r * cols + c) as u32;
                    // bins whose support can touch [tc − hw, tc + hw]
                    let lo = ((tc - hw + centre - 0.5).floor().max(0.0)) as usize;
                    let hi = ((tc + hw + centre + 0.5).ceil().max(0.0) as usize).min(bins - 1);
                    for bin in lo..=hi {
                        let s = bin as f64 - centre;
                        let w = match model {
                            RayModel::Strip => fp.cdf(s + 0.5 - tc) - fp.cdf(s - 0.5 - tc),
                            RayModel::Line => fp.chord(s - tc),
                        };
                        if w > 0.0 {
                            per_row[bin * m + k].push((pixel, w));
                        }
                    }
                }
            }
        }

        let mut row_ptr = Vec::with_capacity(per_row.len() + 1);
        let mut col_idx = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0);
        for row in per_row {
            for (p, w) in row {
                col_idx.push(p);
                weights.push(w);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { rows, cols, angles, bins, model, row_ptr, col_idx, weights })
    }

    /// Default geometry: `m` uniform angles and the default detector size.
    pub fn with_defaults(rows: usize, cols: usize, m: usize) -> Result<Self> {
        Self::new(rows, cols, uniform_angles(m), default_detector_bins(rows, cols), RayModel::Strip)
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn detector_bins(&self) -> usize {
        self.bins
    }

    pub fn ray_model(&self) -> RayModel {
        self.model
    }

    pub fn nonzeros(&self) -> usize {
        self.weights.len()
    }
}

impl LinearOperator for RadonOperator {
    fn domain_dim(&self) -> usize {
        self.rows * self.cols
    }

    fn range_dim(&self) -> usize {
        self.bins * self.angles.len()
    }

    fn domain_shape(&self) -> Option<(usize, usize)> {
        Some((self.rows, self.cols))
    }

    fn range_shape(&self) -> Option<(usize, usize)> {
        Some((self.bins, self.angles.len()))
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = 0.0;
            for (p, w) in self.col_idx[s..e].iter().zip(&self.weights[s..e]) {
                acc += w * x[*p as usize];
            }
            *o = acc;
        }
    }

    fn adjoint_to(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, zi) in z.iter().enumerate() {
            if *zi == 0.0 {
                continue;
            }
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for (p, w) in self.col_idx[s..e].iter().zip(&self.weights[s..e]) {
                out[*p as usize] += w * zi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::GridSignal;

    /// Brute-force chord length of the line `x cos + y sin = s` through the
    /// unit square centred at the origin, by clipping the parametrised line.
    fn clipped_chord(theta: f64, s: f64) -> f64 {
        let (sin, cos) = theta.sin_cos();
        let (px, py) = (s * cos, s * sin);
        let (dx, dy) = (-sin, cos);
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (p, d) in [(px, dx), (py, dy)] {
            if d.abs() < 1e-15 {
                if p.abs() > 0.5 {
                    return 0.0;
                }
            } else {
                let a = (-0.5 - p) / d;
                let b = (0.5 - p) / d;
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t1 - t0).max(0.0)
    }

    #[test]
    fn footprint_matches_clipping() {
        for theta in [0.1, 0.4, 0.7, 1.2, 2.0, 2.9] {
            let fp = Footprint::new(theta);
            for k in -40..=40 {
                let t = k as f64 * 0.0191;
                assert!((fp.chord(t) - clipped_chord(theta, t)).abs() < 1e-12, "theta {theta} t {t}");
            }
        }
    }

    #[test]
    fn footprint_cdf_integrates_chord() {
        for theta in [0.0, 0.3, PI / 4.0, 1.3] {
            let fp = Footprint::new(theta);
            let h = 1e-4;
            let mut acc = 0.0;
            let mut t = -1.0;
            while t < 1.0 {
                acc += h * fp.chord(t + 0.5 * h);
                t += h;
                if t > -0.2 && t - h <= -0.2 {
                    assert!((acc - fp.cdf(t)).abs() < 1e-6);
                }
            }
            assert!((acc - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sinogram_shape_and_zero() {
        let op = RadonOperator::with_defaults(8, 6, 5).unwrap();
        let out = op.apply(&GridSignal::with_shape(vec![0.0; 48], 8, 6).unwrap()).unwrap();
        assert_eq!(out.len(), default_detector_bins(8, 6) * 5);
        assert_eq!(out.shape(), Some((default_detector_bins(8, 6), 5)));
        assert!(out.values().iter().all(|v| *v == 0.0));
        assert!(op.apply(&GridSignal::with_shape(vec![0.0; 48], 6, 8).unwrap()).is_err());
    }

    #[test]
    fn centre_pixel_on_three_by_three() {
        let mut img = vec![0.0; 9];
        img[4] = 1.0;
        let m = 8;
        for model in [RayModel::Strip, RayModel::Line] {
            let op = RadonOperator::new(3, 3, uniform_angles(m), 7, model).unwrap();
            let sino = op.apply(&GridSignal::with_shape(img.clone(), 3, 3).unwrap()).unwrap();
            let v = sino.values();
            for k in 0..m {
                let col: Vec<f64> = (0..7).map(|b| v[b * m + k]).collect();
                // detector centred on the pixel: the profile is symmetric
                for b in 0..7 {
                    assert!((col[b] - col[6 - b]).abs() < 1e-14);
                }
                let mass: f64 = col.iter().sum();
                let fp = Footprint::new(op.angles()[k]);
                let expect = match model {
                    RayModel::Strip => 1.0,
                    RayModel::Line => (-3..=3).map(|b| fp.chord(b as f64)).sum(),
                };
                assert!((mass - expect).abs() < 1e-14, "{model:?} angle {k}: {mass} vs {expect}");
                // reflected angle π − θ gives the mirrored profile
                if k > 0 {
                    let kr = m - k;
                    for b in 0..7 {
                        assert!((v[b * m + k] - v[(6 - b) * m + kr]).abs() < 1e-12);
                    }
                }
            }
        }
        // axis-aligned line model: only the central bin meets the pixel
        let op = RadonOperator::new(3, 3, vec![0.0], 7, RayModel::Line).unwrap();
        let sino = op.apply(&GridSignal::with_shape(img, 3, 3).unwrap()).unwrap();
        assert_eq!(sino.values()[3], 1.0);
        assert_eq!(sino.values().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn edge_rays_split_between_neighbours() {
        // even-sized detector on odd grid puts rays exactly on pixel edges
        let op = RadonOperator::new(1, 2, vec![0.0], 3, RayModel::Line).unwrap();
        let a = op.to_dense();
        // bin centres at -1, 0, 1; pixel centres at -0.5, 0.5
        assert_eq!(a[(0, 0)], 0.5);
        assert_eq!(a[(1, 0)], 0.5);
        assert_eq!(a[(1, 1)], 0.5);
        assert_eq!(a[(2, 1)], 0.5);
    }

    #[test]
    fn ones_image_preserves_mass_per_angle() {
        let op = RadonOperator::with_defaults(16, 12, 17).unwrap();
        let ones = GridSignal::with_shape(vec![1.0; 192], 16, 12).unwrap();
        let sino = op.apply(&ones).unwrap();
        let m = 17;
        for k in 0..m {
            let s: f64 = (0..op.detector_bins()).map(|b| sino.values()[b * m + k]).sum();
            assert!((s - 192.0).abs() < 1e-8, "angle {k}: {s}");
        }
    }
}
