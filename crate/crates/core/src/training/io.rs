//! Image and matrix files: binary PGM (P5), headerless CSV, and a JSON
//! manifest per dataset directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::GridSignal;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Pgm,
    Csv,
}

impl ImageFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(ImageFormat::Pgm),
            "csv" => Ok(ImageFormat::Csv),
            other => Err(Error::Config(format!("unknown image format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub files: Vec<String>,
    pub shape: [usize; 2],
    pub format: ImageFormat,
    #[serde(default)]
    pub provenance: String,
}

// ---------------------------------------------------------------------------
// PGM

fn pgm_header(bytes: &[u8]) -> Result<([usize; 3], usize)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated PGM header".into())),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *f = text.parse().map_err(|_| Error::Format(format!("bad PGM header field '{text}'")))?;
    }
    // exactly one whitespace byte separates header and raster
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => Ok((fields, pos + 1)),
        _ => Err(Error::Format("truncated PGM header".into())),
    }
}

/// Reads a P5 image and scales it to `[0, 1]` by its maxval.
pub fn read_pgm(path: &Path) -> Result<GridSignal> {
    let bytes = fs::read(path)?;
    let ([cols, rows, maxval], start) = pgm_header(&bytes)?;
    if cols == 0 || rows == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM geometry {cols}x{rows} maxval {maxval}")));
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let raster = &bytes[start..];
    if raster.len() < rows * cols * bps {
        return Err(Error::Format("PGM raster shorter than header declares".into()));
    }
    let m = maxval as f64;
    let values = (0..rows * cols)
        .map(|i| {
            let v = if bps == 1 { raster[i] as f64 } else { u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64 };
            v / m
        })
        .collect();
    GridSignal::with_shape(values, rows, cols)
}

/// Writes an 8-bit P5 image; values are clamped to `[0, 1]` and rounded.
pub fn write_pgm(path: &Path, image: &GridSignal) -> Result<()> {
    let (rows, cols) = image.shape().ok_or_else(|| Error::InvalidArgument("PGM output needs a grid shape".into()))?;
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(image.values().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out)?;
    Ok(())
}

/// Writes an image rescaled linearly from its own `[min, max]` to `[0, 1]`.
pub fn write_pgm_autoscale(path: &Path, image: &GridSignal) -> Result<()> {
    let lo = image.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = image.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scaled: Vec<f64> = image.values().iter().map(|v| (v - lo) / span).collect();
    write_pgm(path, &GridSignal::from_raw(scaled, image.shape()))
}

// ---------------------------------------------------------------------------
// CSV

pub fn parse_csv(text: &str) -> Result<GridSignal> {
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let f = field.trim();
            let v: f64 = f.parse().map_err(|_| Error::Format(format!("line {}: bad number '{f}'", ln + 1)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("line {}: non-finite value", ln + 1)));
            }
            values.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(Error::Format(format!("line {}: expected {c} columns, found {count}", ln + 1)));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty CSV".into()))?;
    GridSignal::with_shape(values, rows, cols)
}

/// Headerless CSV, one grid row per line. Unshaped signals become one column.
/// Values are written in shortest round-trip form, so reading back is exact.
pub fn format_csv(signal: &GridSignal) -> String {
    let (rows, cols) = signal.shape().unwrap_or((signal.len(), 1));
    let mut s = String::with_capacity(signal.len() * 20);
    for r in 0..rows {
        for c in 0..cols {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{}", signal.values()[r * cols + c]);
        }
        s.push('\n');
    }
    s
}

pub fn read_csv(path: &Path) -> Result<GridSignal> {
    parse_csv(&fs::read_to_string(path)?)
}

pub fn write_csv(path: &Path, signal: &GridSignal) -> Result<()> {
    fs::write(path, format_csv(signal))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// datasets

pub fn read_image(path: &Path, format: ImageFormat) -> Result<GridSignal> {
    match format {
        ImageFormat::Pgm => read_pgm(path),
        ImageFormat::Csv => read_csv(path),
    }
}

/// Loads a single file or every image in a directory. A directory with a
/// manifest is read in manifest order; otherwise files with the format's
/// extension are read in name order. All images must share one shape.
pub fn load_dataset(path: &Path, format: ImageFormat) -> Result<Vec<GridSignal>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let manifest = path.join(MANIFEST_NAME);
        if manifest.exists() {
            let m: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest)?)?;
            m.files.iter().map(|f| path.join(f)).collect()
        } else {
            let mut v: Vec<PathBuf> = fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(format.extension())))
                .collect();
            v.sort();
            v
        }
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Format(format!("no .{} files in {}", format.extension(), path.display())));
    }
    let mut out = Vec::with_capacity(files.len());
    for f in &files {
        let img = read_image(f, format)?;
        if let Some(first) = out.first() {
            let first: &GridSignal = first;
            if first.shape() != img.shape() {
                return Err(Error::Format(format!(
                    "inconsistent shapes: {} is {:?}, expected {:?}",
                    f.display(),
                    img.shape(),
                    first.shape()
                )));
            }
        }
        out.push(img);
    }
    Ok(out)
}

/// Writes images as `img_00000.<ext>`, … plus a manifest.
pub fn save_dataset(dir: &Path, images: &[GridSignal], format: ImageFormat, provenance: &str) -> Result<DatasetManifest> {
    let first = images.first().ok_or_else(|| Error::InvalidArgument("no images to save".into()))?;
    let (rows, cols) = first.shape().ok_or_else(|| Error::InvalidArgument("dataset images need a grid shape".into()))?;
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        if img.shape() != Some((rows, cols)) {
            return Err(Error::ShapeMismatch { rows, cols, len: img.len() });
        }
        let name = format!("img_{i:05}.{}", format.extension());
        match format {
            ImageFormat::Pgm => write_pgm(&dir.join(&name), img)?,
            ImageFormat::Csv => write_csv(&dir.join(&name), img)?,
        }
        files.push(name);
    }
    let manifest = DatasetManifest { files, shape: [rows, cols], format, provenance: provenance.to_string() };
    fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
