//! Binary model container with a JSON sidecar.
//!
//! Layout (little-endian): magic `PRJREGM\0`, `u32` version, `u32` kind, then
//! `u64` basis dimension, companion dimension, retained count, pairs seen,
//! basis rows/cols and companion rows/cols (zero when unshaped), `f64`
//! dependence tolerance, followed by the sections
//!
//! * basis vectors, `count × basis_dim` doubles,
//! * companion vectors (`ū`, `v̄` or `ŷ`), `count × companion_dim` doubles,
//! * `rdiag`, `count` doubles,
//! * packed triangular Gram-Schmidt columns, `count (count+1) / 2` doubles,
//! * retained pair indices, `count` `u64`s,
//! * for dual models only, the packed lower triangle of the Gram matrix.
//!
//! The sidecar `<file>.json` repeats the header fields and carries the
//! SHA-256 of the binary file, which loading checks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dual::DualModel;
use crate::error::{Error, Result};
use crate::linalg::{GridSignal, OrthonormalBasis};
use crate::projection::ProjectionModel;
use crate::variational::InputModel;

pub const MAGIC: &[u8; 8] = b"PRJREGM\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Projection,
    Dual,
    Input,
}

impl ModelKind {
    fn code(self) -> u32 {
        match self {
            ModelKind::Projection => 1,
            ModelKind::Dual => 2,
            ModelKind::Input => 3,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            1 => Ok(ModelKind::Projection),
            2 => Ok(ModelKind::Dual),
            3 => Ok(ModelKind::Input),
            _ => Err(Error::Format(format!("unknown model kind {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub kind: ModelKind,
    pub format_version: u32,
    pub input_dim: usize,
    pub output_dim: usize,
    pub input_shape: Option<(usize, usize)>,
    pub output_shape: Option<(usize, usize)>,
    pub retained: usize,
    pub pairs_seen: usize,
    pub deptol: f64,
    pub sha256: String,
    pub crate_version: String,
}

/// A model of any kind, as read back from disk.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Projection(ProjectionModel),
    Dual(DualModel),
    Input(InputModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Projection(_) => ModelKind::Projection,
            AnyModel::Dual(_) => ModelKind::Dual,
            AnyModel::Input(_) => ModelKind::Input,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

struct Sections<'a> {
    kind: ModelKind,
    basis: &'a OrthonormalBasis,
    companion: &'a [GridSignal],
    companion_dim: usize,
    accepted: &'a [usize],
    pairs_seen: usize,
    deptol: f64,
    gram: Option<Vec<f64>>,
}

struct Decoded {
    kind: ModelKind,
    basis: OrthonormalBasis,
    companion: Vec<GridSignal>,
    companion_dim: usize,
    accepted: Vec<usize>,
    pairs_seen: usize,
    deptol: f64,
}

fn shape_words(shape: Option<(usize, usize)>) -> [u64; 2] {
    shape.map_or([0, 0], |(r, c)| [r as u64, c as u64])
}

fn encode(s: &Sections<'_>) -> Vec<u8> {
    let count = s.basis.len();
    let dim = s.basis.dim();
    let mut out = Vec::with_capacity(96 + 8 * count * (dim + s.companion_dim + count + 3));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&s.kind.code().to_le_bytes());
    let bshape = shape_words(s.basis.vectors().first().and_then(|v| v.shape()));
    let cshape = shape_words(s.companion.first().and_then(|v| v.shape()));
    for w in [dim as u64, s.companion_dim as u64, count as u64, s.pairs_seen as u64, bshape[0], bshape[1], cshape[0], cshape[1]] {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
    put(s.deptol);
    s.basis.vectors().iter().flat_map(|v| v.values()).for_each(|x| put(*x));
    s.companion.iter().flat_map(|v| v.values()).for_each(|x| put(*x));
    s.basis.rdiag().iter().for_each(|x| put(*x));
    s.basis.rcols().iter().flatten().for_each(|x| put(*x));
    if let Some(g) = &s.gram {
        g.iter().for_each(|x| put(*x));
    }
    for &i in s.accepted {
        out.extend_from_slice(&(i as u64).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| Error::Format("model file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format("size field overflows".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("section size overflows".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn shaped(values: Vec<f64>, rows: usize, cols: usize) -> Result<GridSignal> {
    if rows == 0 && cols == 0 {
        GridSignal::new(values)
    } else {
        GridSignal::with_shape(values, rows, cols)
    }
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a model file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model format version {version}")));
    }
    let kind = ModelKind::from_code(r.u32()?)?;
    let dim = r.u64()?;
    let cdim = r.u64()?;
    let count = r.u64()?;
    let pairs_seen = r.u64()?;
    let (br, bc, cr, cc) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?);
    let deptol = r.f64s(1)?[0];
    if count > pairs_seen {
        return Err(Error::Format("more retained pairs than pairs seen".into()));
    }
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        vectors.push(shaped(r.f64s(dim)?, br, bc)?);
    }
    let mut companion = Vec::with_capacity(count);
    for _ in 0..count {
        companion.push(shaped(r.f64s(cdim)?, cr, cc)?);
    }
    let rdiag = r.f64s(count)?;
    let mut rcols = Vec::with_capacity(count);
    for j in 0..count {
        rcols.push(r.f64s(j + 1)?);
    }
    if kind == ModelKind::Dual {
        r.f64s(count * (count + 1) / 2)?;
    }
    let mut accepted = Vec::with_capacity(count);
    for _ in 0..count {
        accepted.push(r.u64()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after model sections".into()));
    }
    if accepted.windows(2).any(|w| w[1] <= w[0]) || accepted.last().is_some_and(|&i| i >= pairs_seen) {
        return Err(Error::Format("retained indices are not increasing within the pairs seen".into()));
    }
    Ok(Decoded {
        kind,
        basis: OrthonormalBasis::from_parts(dim, vectors, rdiag, rcols),
        companion,
        companion_dim: cdim,
        accepted,
        pairs_seen,
        deptol,
    })
}

fn write_model(path: &Path, s: &Sections<'_>, input_dim: usize, output_dim: usize) -> Result<ModelMetadata> {
    let bytes = encode(s);
    let (input_shape, output_shape) = {
        let b = s.basis.vectors().first().and_then(|v| v.shape());
        let c = s.companion.first().and_then(|v| v.shape());
        match s.kind {
            ModelKind::Input => (b, c),
            _ => (c, b),
        }
    };
    let meta = ModelMetadata {
        kind: s.kind,
        format_version: FORMAT_VERSION,
        input_dim,
        output_dim,
        input_shape,
        output_shape,
        retained: s.basis.len(),
        pairs_seen: s.pairs_seen,
        deptol: s.deptol,
        sha256: hex::encode(Sha256::digest(&bytes)),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, &bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

pub fn read_metadata(path: &Path) -> Result<ModelMetadata> {
    Ok(serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?)
}

fn read_model(path: &Path) -> Result<Decoded> {
    let bytes = fs::read(path)?;
    let meta = read_metadata(path)?;
    if hex::encode(Sha256::digest(&bytes)) != meta.sha256 {
        return Err(Error::Format(format!("checksum mismatch for {}", path.display())));
    }
    let d = decode(&bytes)?;
    if d.kind != meta.kind || d.basis.len() != meta.retained {
        return Err(Error::Format("sidecar does not describe the model file".into()));
    }
    Ok(d)
}

fn expect(d: &Decoded, kind: ModelKind) -> Result<()> {
    if d.kind != kind {
        return Err(Error::ModelMismatch(format!("expected a {kind:?} model, found {:?}", d.kind)));
    }
    Ok(())
}

pub fn save_projection(model: &ProjectionModel, path: &Path) -> Result<ModelMetadata> {
    let s = Sections {
        kind: ModelKind::Projection,
        basis: model.ybar(),
        companion: model.ubar(),
        companion_dim: model.input_dim(),
        accepted: model.accepted_indices(),
        pairs_seen: model.pairs_seen(),
        deptol: model.deptol(),
        gram: None,
    };
    write_model(path, &s, model.input_dim(), model.output_dim())
}

pub fn save_dual(model: &DualModel, path: &Path) -> Result<ModelMetadata> {
    let g = model.gram();
    let packed = (0..g.nrows()).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|(i, j)| g[(i, j)]).collect();
    let s = Sections {
        kind: ModelKind::Dual,
        basis: model.ybar(),
        companion: model.vbar(),
        companion_dim: model.input_dim(),
        accepted: model.accepted_indices(),
        pairs_seen: model.pairs_seen(),
        deptol: model.deptol(),
        gram: Some(packed),
    };
    write_model(path, &s, model.input_dim(), model.ybar().dim())
}

pub fn save_input(model: &InputModel, path: &Path) -> Result<ModelMetadata> {
    let s = Sections {
        kind: ModelKind::Input,
        basis: model.uhat(),
        companion: model.yhat(),
        companion_dim: model.output_dim(),
        accepted: model.accepted_indices(),
        pairs_seen: model.pairs_seen(),
        deptol: model.deptol(),
        gram: None,
    };
    write_model(path, &s, model.input_dim(), model.output_dim())
}

fn into_model(d: Decoded) -> Result<AnyModel> {
    Ok(match d.kind {
        ModelKind::Projection => AnyModel::Projection(ProjectionModel::from_parts(
            d.basis,
            d.companion,
            d.accepted,
            d.pairs_seen,
            d.companion_dim,
            d.deptol,
        )?),
        ModelKind::Dual => {
            AnyModel::Dual(DualModel::from_parts(d.basis, d.companion, d.accepted, d.pairs_seen, d.companion_dim, d.deptol)?)
        }
        ModelKind::Input => {
            AnyModel::Input(InputModel::from_parts(d.basis, d.companion, d.accepted, d.pairs_seen, d.companion_dim, d.deptol)?)
        }
    })
}

pub fn load_any(path: &Path) -> Result<AnyModel> {
    into_model(read_model(path)?)
}

pub fn load_projection(path: &Path) -> Result<ProjectionModel> {
    let d = read_model(path)?;
    expect(&d, ModelKind::Projection)?;
    match into_model(d)? {
        AnyModel::Projection(m) => Ok(m),
        _ => unreachable!(),
    }
}

pub fn load_dual(path: &Path) -> Result<DualModel> {
    let d = read_model(path)?;
    expect(&d, ModelKind::Dual)?;
    match into_model(d)? {
        AnyModel::Dual(m) => Ok(m),
        _ => unreachable!(),
    }
}

pub fn load_input(path: &Path) -> Result<InputModel> {
    let d = read_model(path)?;
    expect(&d, ModelKind::Input)?;
    match into_model(d)? {
        AnyModel::Input(m) => Ok(m),
        _ => unreachable!(),
    }
}
