use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SwagConfig;
use super::network::SwagModel;
use crate::error::{Result, SwagError};
use crate::numerics::Module;
use crate::priors::TransitionPriorTensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SWAGM1\0\0";

#[derive(Serialize, Deserialize)]
struct Header {
    config: SwagConfig,
    num_phases: usize,
    feature_dim: usize,
    /// Prior tensor in its own JSON encoding.
    priors: Option<String>,
}

/// Magic, length-prefixed JSON header, then every parameter as
/// `rank, dims..., f32 data` in little-endian.
pub fn model_to_bytes(model: &SwagModel) -> Vec<u8> {
    let header = Header {
        config: model.config().clone(),
        num_phases: model.num_phases(),
        feature_dim: model.feature_dim(),
        priors: model.priors().map(TransitionPriorTensor::to_json),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.num_parameters());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    model.visit(&mut |p| {
        let (r, c) = p.value.shape();
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(r as u32).to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    });
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(SwagError::format(self.context, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

pub fn model_from_bytes(bytes: &[u8], context: &str) -> Result<SwagModel> {
    let mut r = Reader { bytes, pos: 0, context };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(SwagError::format(context, "not a model checkpoint"));
    }
    let len = r.u32()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(len)?).map_err(|e| SwagError::format(context, format!("header: {e}")))?;
    let priors = header
        .priors
        .as_deref()
        .map(|p| TransitionPriorTensor::from_json(p, context))
        .transpose()?;
    let mut model = SwagModel::new(header.config, header.num_phases, header.feature_dim, priors)?;
    let mut failure = None;
    model.visit_mut(&mut |p| {
        if failure.is_some() {
            return;
        }
        let result = (|| -> Result<()> {
            let rank = r.u32()?;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            if dims != [p.value.rows(), p.value.cols()] {
                return Err(SwagError::format(
                    context,
                    format!("parameter shape {dims:?}, expected {:?}", p.value.shape()),
                ));
            }
            for v in p.value.data_mut() {
                *v = f32::from_le_bytes(r.take(4)?.try_into().expect("four bytes")) as f64;
            }
            Ok(())
        })();
        if let Err(e) = result {
            failure = Some(e);
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if r.pos != bytes.len() {
        return Err(SwagError::format(context, "trailing bytes after parameters"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &SwagModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| SwagError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SwagModel> {
    let bytes = std::fs::read(path).map_err(|e| SwagError::io(path, e))?;
    model_from_bytes(&bytes, &path.display().to_string())
}
