use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{GridSignal, DEFAULT_DEPTOL};
use crate::operators::{LinearOperator, OperatorConfig, RayModel, SvdOperator};
use crate::training::io::{load_dataset, ImageFormat};
use crate::training::synthetic::{blob_images, smooth_fields, BlobParams};
use crate::training::{NoiseMode, NoiseSpec};
use crate::variational::TvControls;

/// One experiment, read from a TOML file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operator: OperatorConfig,
    pub dataset: DatasetConfig,
    pub validation: DatasetConfig,
    pub training: TrainingConfig,
    pub noise: NoiseConfig,
    pub methods: MethodsConfig,
    pub solver: TvControls,
    pub diagnose: DiagnoseConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            operator: OperatorConfig::Radon { dims: [32, 32], angles: 30, detector_bins: None, ray_model: RayModel::Strip },
            dataset: DatasetConfig::Smooth { count: 300, seed: 1, bandwidth: 4.5 },
            validation: DatasetConfig::Smooth { count: 10, seed: 2, bandwidth: 4.5 },
            training: TrainingConfig::default(),
            noise: NoiseConfig::default(),
            methods: MethodsConfig::default(),
            solver: TvControls { step_ratio: 0.03, max_iterations: 20000, ..TvControls::default() },
            diagnose: DiagnoseConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Where input images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Random Gaussian blobs on the operator's image grid.
    Blobs {
        count: usize,
        seed: u64,
        #[serde(default)]
        params: BlobParams,
    },
    /// Random smooth cosine fields on the operator's image grid.
    Smooth { count: usize, seed: u64, bandwidth: f64 },
    /// Images read from a directory.
    Directory { path: PathBuf, format: ImageFormat },
    /// The first `count` canonical unit vectors.
    Canonical { count: usize },
    /// Right singular vectors of an `svd` operator.
    Singular { count: usize },
    /// The single signal `Σ i^{−exponent} eⁱ`.
    Harmonic { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Scale each pair so that `‖yⁱ‖ = 1`.
    pub normalise: bool,
    pub deptol: f64,
    /// Training sizes at which curves are evaluated.
    pub grid: Vec<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { normalise: true, deptol: DEFAULT_DEPTOL, grid: vec![25, 50, 100, 200, 300] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub levels: Vec<f64>,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { levels: vec![1e-3, 1e-2], mode: NoiseMode::Relative, seed: 7 }
    }
}

impl NoiseConfig {
    pub fn spec(&self, level: f64, offset: u64) -> NoiseSpec {
        NoiseSpec { level, mode: self.mode, seed: self.seed.wrapping_add(offset) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Projection,
    Dual,
    Tikhonov,
    Tv,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Projection => "projection",
            Method::Dual => "dual",
            Method::Tikhonov => "tikhonov",
            Method::Tv => "tv",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "projection" => Ok(Method::Projection),
            "dual" => Ok(Method::Dual),
            "tikhonov" => Ok(Method::Tikhonov),
            "tv" => Ok(Method::Tv),
            _ => Err(Error::Config(format!("unknown method '{s}' (expected projection, dual, tikhonov or tv)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodsConfig {
    pub list: Vec<Method>,
    /// Threshold of the `n` choice rules.
    pub tau: f64,
    /// `c` in `α = c (δ + ρ)`.
    pub alpha_constant: f64,
}

impl Default for MethodsConfig {
    fn default() -> Self {
        Self { list: vec![Method::Projection, Method::Dual, Method::Tikhonov], tau: 1.0, alpha_constant: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Values of `n` for the Seidman coefficient oracle.
    pub gamma_ns: Vec<usize>,
    /// Indices `n+1 ..= n+width` checked for each `n`.
    pub gamma_width: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { gamma_ns: vec![5, 10, 25, 50], gamma_width: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("projreg-out") }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.training.grid.is_empty() || self.training.grid.contains(&0) || self.training.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("training grid must be nonempty and strictly increasing from 1".into()));
        }
        if self.noise.levels.is_empty() || self.noise.levels.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::Config("noise levels must be a nonempty list of non-negative numbers".into()));
        }
        if self.methods.list.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        if !(self.methods.tau > 0.0) || !(self.methods.alpha_constant > 0.0) {
            return Err(Error::Config("tau and alpha_constant must be positive".into()));
        }
        if !(self.training.deptol >= 0.0) {
            return Err(Error::Config("deptol must be non-negative".into()));
        }
        for d in [&self.dataset, &self.validation] {
            match d {
                DatasetConfig::Directory { path, .. } if !path.is_dir() => {
                    return Err(Error::Config(format!("dataset directory {} does not exist", path.display())));
                }
                DatasetConfig::Blobs { count: 0, .. }
                | DatasetConfig::Smooth { count: 0, .. }
                | DatasetConfig::Canonical { count: 0 }
                | DatasetConfig::Singular { count: 0 } => return Err(Error::Config("dataset count must be positive".into())),
                DatasetConfig::Singular { .. } if !matches!(self.operator, OperatorConfig::Svd { .. }) => {
                    return Err(Error::Config("singular-vector datasets need an svd operator".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Short SHA-256 of the canonical JSON form without the output
    /// location, used to tag outputs.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let json = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    pub fn build_operator(&self) -> Result<Box<dyn LinearOperator>> {
        self.operator.build().map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(format!("operator: {m}")),
            other => other,
        })
    }
}

impl DatasetConfig {
    pub fn seed(&self) -> Option<u64> {
        match self {
            DatasetConfig::Blobs { seed, .. } | DatasetConfig::Smooth { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn set_seed(&mut self, new: u64) {
        if let DatasetConfig::Blobs { seed, .. } | DatasetConfig::Smooth { seed, .. } = self {
            *seed = new;
        }
    }

    /// Produces the input signals for `op`'s domain.
    pub fn images(&self, op: &dyn LinearOperator, operator: &OperatorConfig) -> Result<Vec<GridSignal>> {
        let dim = op.domain_dim();
        let grid = || {
            op.domain_shape().ok_or_else(|| Error::Config("image datasets need an operator with a 2-D domain".into()))
        };
        let images = match self {
            DatasetConfig::Blobs { count, seed, params } => {
                let (r, c) = grid()?;
                blob_images(r, c, *count, params, *seed)
            }
            DatasetConfig::Smooth { count, seed, bandwidth } => {
                let (r, c) = grid()?;
                smooth_fields(r, c, *count, *bandwidth, *seed)
            }
            DatasetConfig::Directory { path, format } => load_dataset(path, *format)?,
            DatasetConfig::Canonical { count } => {
                if *count > dim {
                    return Err(Error::Config(format!("{count} canonical vectors requested in dimension {dim}")));
                }
                (0..*count).map(|i| GridSignal::unit(dim, i)).collect()
            }
            DatasetConfig::Singular { count } => {
                let OperatorConfig::Svd { dims, law, seed } = operator else {
                    return Err(Error::Config("singular-vector datasets need an svd operator".into()));
                };
                let svd = SvdOperator::random(dims[0], dims[1], law, *seed)?;
                let k = (*count).min(svd.rank());
                svd.right_vectors()[..k].to_vec()
            }
            DatasetConfig::Harmonic { exponent } => {
                vec![GridSignal::new((1..=dim).map(|i| (i as f64).powf(-exponent)).collect())?]
            }
        };
        if let Some(img) = images.iter().find(|u| u.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: img.len() });
        }
        Ok(images)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        assert_eq!(c.hash(), ExperimentConfig::from_toml(&text).unwrap().hash());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml(
            r#"
            [operator]
            kind = "seidman"
            truncation = 500

            [dataset]
            source = "canonical"
            count = 100

            [noise]
            levels = [0.0, 1e-3]
            "#,
        )
        .unwrap();
        assert_eq!(c.training, TrainingConfig::default());
        assert_eq!(c.noise.levels, vec![0.0, 1e-3]);
        c.validate().unwrap();
        let op = c.build_operator().unwrap();
        assert_eq!(c.dataset.images(op.as_ref(), &c.operator).unwrap().len(), 100);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        assert!(matches!(ExperimentConfig::from_toml("[bogus]\nx=1"), Err(Error::Config(_))));
        let mut c = ExperimentConfig::default();
        c.training.grid = vec![];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::default();
        c.dataset = DatasetConfig::Directory { path: "/definitely/not/here".into(), format: ImageFormat::Csv };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!("bogus".parse::<Method>().is_err());
        assert_eq!("TV".parse::<Method>().unwrap(), Method::Tv);
    }
}
