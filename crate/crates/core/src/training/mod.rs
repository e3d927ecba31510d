//! Training pairs `(uⁱ, yⁱ = Auⁱ)`, adjoint pairs `(vⁱ = A*yⁱ, yⁱ)` and noise.

pub mod io;
pub mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, GridSignal};
use crate::operators::LinearOperator;

const NORM_TOL: f64 = 1e-12;

/// Ordered, nested list of input-output pairs.
///
/// Pairs are only ever appended, so every prefix is itself a valid training
/// set for a smaller `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    inputs: Vec<GridSignal>,
    outputs: Vec<GridSignal>,
    normalised: bool,
    provenance: String,
}

impl TrainingSet {
    pub fn new(normalised: bool, provenance: impl Into<String>) -> Self {
        Self { inputs: Vec::new(), outputs: Vec::new(), normalised, provenance: provenance.into() }
    }

    pub fn from_pairs(inputs: Vec<GridSignal>, outputs: Vec<GridSignal>, normalised: bool, provenance: impl Into<String>) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::DimensionMismatch { expected: inputs.len(), got: outputs.len() });
        }
        let mut set = Self::new(normalised, provenance);
        for (u, y) in inputs.into_iter().zip(outputs) {
            set.push(u, y)?;
        }
        Ok(set)
    }

    /// Appends one pair after checking it against the existing ones.
    pub fn push(&mut self, u: GridSignal, y: GridSignal) -> Result<()> {
        if let (Some(u0), Some(y0)) = (self.inputs.first(), self.outputs.first()) {
            check_len(u0.len(), u.len())?;
            check_len(y0.len(), y.len())?;
        }
        if self.normalised && (u.norm() - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "input {} has norm {} in a normalised set",
                self.inputs.len(),
                u.norm()
            )));
        }
        self.inputs.push(u);
        self.outputs.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[GridSignal] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[GridSignal] {
        &self.outputs
    }

    pub fn normalised(&self) -> bool {
        self.normalised
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.inputs.first().map(|u| u.len())
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.outputs.first().map(|y| y.len())
    }

    /// The first `m` pairs.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m > self.len() {
            return Err(Error::OutOfRange { index: m, size: self.len() });
        }
        Ok(Self {
            inputs: self.inputs[..m].to_vec(),
            outputs: self.outputs[..m].to_vec(),
            normalised: self.normalised,
            provenance: self.provenance.clone(),
        })
    }

    /// Appends pairs synthesised from `inputs` with `op`, normalising the
    /// inputs first when the set is normalised.
    pub fn extend_with(&mut self, op: &dyn LinearOperator, inputs: &[GridSignal]) -> Result<()> {
        let more = make_pairs(op, inputs, self.normalised)?;
        for (u, y) in more.inputs.into_iter().zip(more.outputs) {
            self.push(u, y)?;
        }
        Ok(())
    }
}

/// Builds `yⁱ = A uⁱ`, normalising each input to unit norm first if asked.
/// Items are processed in parallel; order is preserved.
pub fn make_pairs(op: &dyn LinearOperator, inputs: &[GridSignal], normalise: bool) -> Result<TrainingSet> {
    let pairs: Vec<(GridSignal, GridSignal)> = inputs
        .par_iter()
        .map(|u| {
            let u = if normalise { u.normalised()? } else { u.clone() };
            let y = op.apply(&u)?;
            Ok((u, y))
        })
        .collect::<Result<_>>()?;
    let (us, ys): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    TrainingSet::from_pairs(us, ys, normalise, "synthesised")
}

/// Outputs `yⁱ` and adjoint images `vⁱ = A* yⁱ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointTrainingSet {
    outputs: Vec<GridSignal>,
    adjoint_images: Vec<GridSignal>,
}

impl AdjointTrainingSet {
    pub fn new(outputs: Vec<GridSignal>, adjoint_images: Vec<GridSignal>) -> Result<Self> {
        if outputs.len() != adjoint_images.len() {
            return Err(Error::DimensionMismatch { expected: outputs.len(), got: adjoint_images.len() });
        }
        for w in outputs.windows(2) {
            check_len(w[0].len(), w[1].len())?;
        }
        for w in adjoint_images.windows(2) {
            check_len(w[0].len(), w[1].len())?;
        }
        Ok(Self { outputs, adjoint_images })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn outputs(&self) -> &[GridSignal] {
        &self.outputs
    }

    pub fn adjoint_images(&self) -> &[GridSignal] {
        &self.adjoint_images
    }

    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m > self.len() {
            return Err(Error::OutOfRange { index: m, size: self.len() });
        }
        Ok(Self { outputs: self.outputs[..m].to_vec(), adjoint_images: self.adjoint_images[..m].to_vec() })
    }
}

/// `vⁱ = A* yⁱ` for every output, in parallel, order preserved.
pub fn make_adjoint_pairs(op: &dyn LinearOperator, outputs: &[GridSignal]) -> Result<AdjointTrainingSet> {
    let vs: Vec<GridSignal> = outputs.par_iter().map(|y| op.adjoint_apply(y)).collect::<Result<_>>()?;
    AdjointTrainingSet::new(outputs.to_vec(), vs)
}

// ---------------------------------------------------------------------------
// noise

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Absolute,
    #[default]
    Relative,
}

/// Perturbation of norm exactly `level` (absolute) or `level·‖y‖` (relative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    #[serde(default)]
    pub mode: NoiseMode,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn relative(level: f64, seed: u64) -> Self {
        Self { level, mode: NoiseMode::Relative, seed }
    }

    pub fn absolute(level: f64, seed: u64) -> Self {
        Self { level, mode: NoiseMode::Absolute, seed }
    }

    /// Norm of the perturbation this spec produces for `y`.
    pub fn absolute_level(&self, y: &GridSignal) -> f64 {
        match self.mode {
            NoiseMode::Absolute => self.level,
            NoiseMode::Relative => self.level * y.norm(),
        }
    }
}

/// Seeded Gaussian perturbation rescaled to the target norm.
pub fn add_noise(y: &GridSignal, spec: &NoiseSpec) -> Result<GridSignal> {
    if !(spec.level >= 0.0) || !spec.level.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {}", spec.level)));
    }
    let target = spec.absolute_level(y);
    if target == 0.0 || y.is_empty() {
        return Ok(y.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let delta: Vec<f64> = (0..y.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dn = crate::linalg::norm(&delta);
    let mut out = y.values().to_vec();
    crate::linalg::axpy(target / dn, &delta, &mut out);
    GridSignal::new(out)?.with_shape_of(y.shape())
}

/// Seeded random split of `0..count` into training and validation indices;
/// each list is returned in ascending order.
pub fn split_indices(count: usize, validation_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&validation_fraction) {
        return Err(Error::InvalidArgument(format!("validation fraction {validation_fraction} outside [0, 1]")));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let nval = (validation_fraction * count as f64).round() as usize;
    let mut val = idx[..nval].to_vec();
    let mut train = idx[nval..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}
