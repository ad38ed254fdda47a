//! Model persistence: a versioned, self-describing binary container for a
//! trained model together with the pipeline metadata needed to use it
//! (model kind, sector/location label registries). All integers and floats
//! are little-endian; parameters round-trip bit-exactly. The payload ends
//! with an FNV-1a checksum, so truncation and corruption are both caught.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::cvae::{CvaeError, CvaeModel, NormStats};
use crate::features::ModelKind;
use crate::linalg::Mat;
use crate::nn::{Activation, AffineLayer, Mlp};

pub const MAGIC: &[u8; 5] = b"CVAE1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum PersistError {
    Corrupt {
        reason: &'static str,
    },
    UnsupportedVersion {
        found: u32,
        supported: u32,
    },
    /// Stored dimensions do not form a consistent model.
    InvalidModel(CvaeError),
}

impl fmt::Display for PersistError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PersistError::Corrupt { reason } => write!(f, "corrupt model file: {reason}"),
            PersistError::UnsupportedVersion { found, supported } => write!(
                f,
                "unsupported model format version {found} (supported: {supported})"
            ),
            PersistError::InvalidModel(e) => write!(f, "invalid model contents: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PersistError {}

impl From<CvaeError> for PersistError {
    fn from(e: CvaeError) -> Self {
        PersistError::InvalidModel(e)
    }
}

/// FNV-1a 64-bit hash; also used for config fingerprints in output headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A trained model plus the encodings it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: CvaeModel,
    pub kind: ModelKind,
    pub sector_labels: Vec<String>,
    pub location_labels: Vec<String>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_mlp(out: &mut Vec<u8>, mlp: &Mlp) {
    put_u32(out, mlp.layers().len() as u32);
    for layer in mlp.layers() {
        put_u32(out, layer.in_dim() as u32);
        put_u32(out, layer.out_dim() as u32);
        out.push(match layer.activation() {
            Activation::Relu => 0,
            Activation::Softplus => 1,
            Activation::Identity => 2,
        });
        for &w in layer.weights().as_slice() {
            put_f64(out, w);
        }
        for &b in layer.bias() {
            put_f64(out, b);
        }
    }
}

pub fn serialize_model(bundle: &ModelBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    out.push(match bundle.kind {
        ModelKind::Univariate => 0,
        ModelKind::Multivariate => 1,
    });
    let model = &bundle.model;
    put_u32(&mut out, model.feature_dim() as u32);
    put_u32(&mut out, model.output_dim() as u32);
    put_u32(&mut out, model.latent_dim() as u32);
    put_f64(&mut out, model.sigma);
    put_mlp(&mut out, model.encoder());
    put_mlp(&mut out, model.decoder());
    put_u32(&mut out, model.norm_stats.len() as u32);
    for stats in &model.norm_stats {
        put_str(&mut out, &stats.ticker);
        put_f64(&mut out, stats.mean);
        put_f64(&mut out, stats.std);
    }
    put_u32(&mut out, bundle.sector_labels.len() as u32);
    for label in &bundle.sector_labels {
        put_str(&mut out, label);
    }
    put_u32(&mut out, bundle.location_labels.len() as u32);
    for label in &bundle.location_labels {
        put_str(&mut out, label);
    }
    let checksum = fnv1a64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        if self.pos + n > self.bytes.len() {
            return Err(PersistError::Corrupt {
                reason: "unexpected end of file",
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64, PersistError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn string(&mut self) -> Result<String, PersistError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        core::str::from_utf8(bytes)
            .map(String::from)
            .map_err(|_| PersistError::Corrupt {
                reason: "invalid utf-8 string",
            })
    }

    fn mlp(&mut self) -> Result<Mlp, PersistError> {
        let layer_count = self.u32()? as usize;
        if layer_count == 0 || layer_count > 64 {
            return Err(PersistError::Corrupt {
                reason: "implausible layer count",
            });
        }
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let in_dim = self.u32()? as usize;
            let out_dim = self.u32()? as usize;
            if in_dim == 0 || out_dim == 0 || in_dim > 1 << 20 || out_dim > 1 << 20 {
                return Err(PersistError::Corrupt {
                    reason: "implausible layer dimensions",
                });
            }
            let activation = match self.u8()? {
                0 => Activation::Relu,
                1 => Activation::Softplus,
                2 => Activation::Identity,
                _ => {
                    return Err(PersistError::Corrupt {
                        reason: "unknown activation tag",
                    })
                }
            };
            let mut weights = Vec::with_capacity(in_dim * out_dim);
            for _ in 0..in_dim * out_dim {
                weights.push(self.f64()?);
            }
            let mut bias = Vec::with_capacity(out_dim);
            for _ in 0..out_dim {
                bias.push(self.f64()?);
            }
            let mat =
                Mat::from_vec(out_dim, in_dim, weights).map_err(|_| PersistError::Corrupt {
                    reason: "weight matrix shape",
                })?;
            layers.push(AffineLayer::new(mat, bias, activation).map_err(|_| {
                PersistError::Corrupt {
                    reason: "non-finite layer parameters",
                }
            })?);
        }
        Mlp::new(layers).map_err(|_| PersistError::Corrupt {
            reason: "layer dimensions do not chain",
        })
    }
}

pub fn deserialize_model(bytes: &[u8]) -> Result<ModelBundle, PersistError> {
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(PersistError::Corrupt {
            reason: "file too short",
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes([
        tail[0], tail[1], tail[2], tail[3], tail[4], tail[5], tail[6], tail[7],
    ]);
    if fnv1a64(body) != stored {
        return Err(PersistError::Corrupt {
            reason: "checksum mismatch",
        });
    }
    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(PersistError::Corrupt {
            reason: "bad magic",
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(PersistError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let kind = match r.u8()? {
        0 => ModelKind::Univariate,
        1 => ModelKind::Multivariate,
        _ => {
            return Err(PersistError::Corrupt {
                reason: "unknown model kind",
            })
        }
    };
    let feature_dim = r.u32()? as usize;
    let output_dim = r.u32()? as usize;
    let latent_dim = r.u32()? as usize;
    let sigma = r.f64()?;
    let encoder = r.mlp()?;
    let decoder = r.mlp()?;
    let stats_count = r.u32()? as usize;
    let mut norm_stats = Vec::with_capacity(stats_count);
    for _ in 0..stats_count {
        let ticker = r.string()?;
        let mean = r.f64()?;
        let std = r.f64()?;
        norm_stats.push(NormStats { ticker, mean, std });
    }
    let sector_count = r.u32()? as usize;
    let mut sector_labels = Vec::with_capacity(sector_count);
    for _ in 0..sector_count {
        sector_labels.push(r.string()?);
    }
    let location_count = r.u32()? as usize;
    let mut location_labels = Vec::with_capacity(location_count);
    for _ in 0..location_count {
        location_labels.push(r.string()?);
    }
    if r.pos != body.len() {
        return Err(PersistError::Corrupt {
            reason: "trailing bytes",
        });
    }
    let model = CvaeModel::new(
        encoder,
        decoder,
        feature_dim,
        output_dim,
        latent_dim,
        sigma,
        norm_stats,
    )?;
    Ok(ModelBundle {
        model,
        kind,
        sector_labels,
        location_labels,
    })
}
