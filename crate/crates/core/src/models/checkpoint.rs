//! Binary weight checkpoints.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! b"GRDW" | version: u32 | kind: u32 | count: u32 | (rows: u64, cols: u64) * count
//!        | row-major f64 data of each matrix, in order
//! ```
//!
//! A JSON sidecar next to the binary (same stem, `.json`) carries the kind,
//! propagation depth, feature scaling and training config.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FeatureScaling, GcnVictim, LinearSurrogate, TrainingConfig};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

const MAGIC: &[u8; 4] = b"GRDW";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Gcn,
}

impl ModelKind {
    fn code(self) -> u32 {
        match self {
            ModelKind::Linear => 0,
            ModelKind::Gcn => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub num_layers: usize,
    pub feature_scaling: FeatureScaling,
    pub training_config: TrainingConfig,
}

/// Weights plus the metadata needed to rebuild a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub matrices: Vec<Array2<f64>>,
}

impl Checkpoint {
    pub fn from_linear(model: &LinearSurrogate) -> Self {
        Self {
            meta: CheckpointMeta {
                kind: ModelKind::Linear,
                num_layers: model.num_layers(),
                feature_scaling: model.scaling(),
                training_config: model.config().clone(),
            },
            matrices: vec![model.weight().clone()],
        }
    }

    pub fn from_gcn(model: &GcnVictim) -> Self {
        Self {
            meta: CheckpointMeta {
                kind: ModelKind::Gcn,
                num_layers: 2,
                feature_scaling: model.scaling(),
                training_config: model.config().clone(),
            },
            matrices: vec![model.w0().clone(), model.w1().clone()],
        }
    }

    /// Rebuilds the linear surrogate; `X W` is recomputed on `g`.
    pub fn into_linear(self, g: &SparseGraph) -> Result<LinearSurrogate> {
        match (self.meta.kind, <[Array2<f64>; 1]>::try_from(self.matrices)) {
            (ModelKind::Linear, Ok([weight])) => LinearSurrogate::from_weights(
                weight,
                self.meta.num_layers,
                self.meta.feature_scaling,
                self.meta.training_config,
                g,
            ),
            _ => Err(Error::Checkpoint("not a linear-model checkpoint".into())),
        }
    }

    pub fn into_gcn(self) -> Result<GcnVictim> {
        match (self.meta.kind, <[Array2<f64>; 2]>::try_from(self.matrices)) {
            (ModelKind::Gcn, Ok([w0, w1])) => GcnVictim::from_weights(
                w0,
                w1,
                self.meta.feature_scaling,
                self.meta.training_config,
            ),
            _ => Err(Error::Checkpoint("not a GCN checkpoint".into())),
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the binary checkpoint and its JSON sidecar.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&checkpoint.meta.kind.code().to_le_bytes());
    bytes.extend_from_slice(&(checkpoint.matrices.len() as u32).to_le_bytes());
    for m in &checkpoint.matrices {
        bytes.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        bytes.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    }
    for m in &checkpoint.matrices {
        // iter() walks logical row-major order regardless of memory layout
        for x in m.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_string_pretty(&checkpoint.meta)?;
    let side = sidecar(path);
    fs::write(&side, meta).map_err(|e| Error::io(side, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    let meta_text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&meta_text)?;

    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    if r.u32()? != meta.kind.code() {
        return Err(Error::Checkpoint("sidecar kind does not match binary".into()));
    }
    let count = r.u32()? as usize;
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        dims.push((r.u64()? as usize, r.u64()? as usize));
    }
    let mut matrices = Vec::with_capacity(count);
    for (rows, cols) in dims {
        let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        matrices.push(
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
        );
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { meta, matrices })
}
