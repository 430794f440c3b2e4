//! Model checkpoint file.
//!
//! Layout: magic `BNNVI1`, version byte, descriptor length (u32 LE), the
//! UTF-8 JSON descriptor `{layer_dims, head, tau0}`, then every
//! variational parameter as little-endian f64 in declaration order (per
//! layer: weight mean, weight log-variance, unit alpha loc/log-var, unit
//! beta loc/log-var, global alpha loc/log-var, global beta loc/log-var).

use super::layer::{GaussianPosterior, HorseshoeLayer, LogNormalPosterior};
use super::model::{BnnModel, Head};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 6] = b"BNNVI1";
const VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Descriptor {
    layer_dims: Vec<[usize; 2]>,
    head: HeadDescriptor,
    tau0: f64,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HeadDescriptor {
    Bernoulli,
    Categorical { classes: usize },
}

impl From<Head> for HeadDescriptor {
    fn from(h: Head) -> Self {
        match h {
            Head::BernoulliLogit => HeadDescriptor::Bernoulli,
            Head::Categorical { classes } => HeadDescriptor::Categorical { classes },
        }
    }
}

impl From<HeadDescriptor> for Head {
    fn from(h: HeadDescriptor) -> Self {
        match h {
            HeadDescriptor::Bernoulli => Head::BernoulliLogit,
            HeadDescriptor::Categorical { classes } => Head::Categorical { classes },
        }
    }
}

/// Serializes the model to bytes. Byte-identical for equal models.
pub fn to_bytes(model: &BnnModel) -> Result<Vec<u8>> {
    let descriptor = Descriptor {
        layer_dims: model
            .layers
            .iter()
            .map(|l| [l.d_in(), l.k_out()])
            .collect(),
        head: model.head.into(),
        tau0: model.layers[0].tau0,
    };
    let json = serde_json::to_vec(&descriptor)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for params in model.param_layers() {
        for p in params {
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn save(model: &BnnModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn from_bytes(bytes: &[u8]) -> Result<BnnModel> {
    let fail = |offset: usize, msg: &str| Error::Format {
        offset: offset as u64,
        msg: msg.to_string(),
    };
    if bytes.len() < 11 {
        return Err(fail(bytes.len(), "truncated header"));
    }
    if &bytes[0..6] != MAGIC {
        return Err(fail(0, "bad magic"));
    }
    if bytes[6] != VERSION {
        return Err(fail(6, "unsupported version"));
    }
    let json_len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let payload_start = 11 + json_len;
    if bytes.len() < payload_start {
        return Err(fail(bytes.len(), "truncated descriptor"));
    }
    let descriptor: Descriptor = serde_json::from_slice(&bytes[11..payload_start])
        .map_err(|e| fail(11, &format!("descriptor: {e}")))?;

    let mut offset = payload_start;
    let mut read_matrix = |rows: usize, cols: usize| -> Result<Matrix> {
        let n = rows * cols * 8;
        if bytes.len() < offset + n {
            return Err(fail(bytes.len(), "truncated parameter payload"));
        }
        let data: Vec<f64> = bytes[offset..offset + n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += n;
        Ok(Matrix::from_vec(rows, cols, data))
    };

    let mut layers = Vec::with_capacity(descriptor.layer_dims.len());
    for &[d, k] in &descriptor.layer_dims {
        layers.push(HorseshoeLayer {
            weights: GaussianPosterior {
                mean: read_matrix(d, k)?,
                log_var: read_matrix(d, k)?,
            },
            unit_alpha: LogNormalPosterior {
                loc: read_matrix(1, d)?,
                log_var: read_matrix(1, d)?,
            },
            unit_beta: LogNormalPosterior {
                loc: read_matrix(1, d)?,
                log_var: read_matrix(1, d)?,
            },
            global_alpha: LogNormalPosterior {
                loc: read_matrix(1, 1)?,
                log_var: read_matrix(1, 1)?,
            },
            global_beta: LogNormalPosterior {
                loc: read_matrix(1, 1)?,
                log_var: read_matrix(1, 1)?,
            },
            tau0: descriptor.tau0,
        });
    }
    if offset != bytes.len() {
        return Err(fail(offset, "trailing bytes after parameter payload"));
    }
    if layers.is_empty() {
        return Err(fail(11, "checkpoint has no layers"));
    }
    Ok(BnnModel {
        layers,
        head: descriptor.head.into(),
    })
}

pub fn load(path: &Path) -> Result<BnnModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = substream(71, 0);
        let model = BnnModel::init(4, 3, 2, Head::BernoulliLogit, 1e-5, &mut rng);
        let bytes = to_bytes(&model).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(model, back);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn categorical_head_round_trips() {
        let mut rng = substream(72, 0);
        let model = BnnModel::init(4, 3, 2, Head::Categorical { classes: 10 }, 1e-5, &mut rng);
        let back = from_bytes(&to_bytes(&model).unwrap()).unwrap();
        assert_eq!(model.head, back.head);
    }

    #[test]
    fn corruption_is_reported_with_offset() {
        let mut rng = substream(73, 0);
        let model = BnnModel::init(2, 2, 1, Head::BernoulliLogit, 1e-5, &mut rng);
        let bytes = to_bytes(&model).unwrap();

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            from_bytes(truncated),
            Err(Error::Format { .. })
        ));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            from_bytes(&bad_magic),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(Error::Format { .. })));
    }
}
