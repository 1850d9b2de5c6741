//! `SWNN` tensor container.
//!
//! ```text
//! "SWNN" | u32 version | u32 count
//! count × ( u16 name_len | name | u8 kind | u8 ndim | ndim × u32 dim | payload )
//! u32 crc32 of everything before it
//! ```
//!
//! All integers little-endian. Kinds: 0 = f32 tensor, 1 = u8 mask,
//! 2 = UTF-8 JSON blob (ndim 1, dim = byte length).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::nn::{LayerParams, Network, NetworkSpec};
use crate::tensor::{MaskedTensor, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SWNN";
pub const CHECKPOINT_VERSION: u32 = 1;

const META: &str = "meta";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorPayload {
    F32(Tensor),
    Mask { dims: Vec<usize>, data: Vec<u8> },
    Json(String),
}

impl TensorPayload {
    fn kind(&self) -> u8 {
        match self {
            TensorPayload::F32(_) => 0,
            TensorPayload::Mask { .. } => 1,
            TensorPayload::Json(_) => 2,
        }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            TensorPayload::F32(t) => t.dims().to_vec(),
            TensorPayload::Mask { dims, .. } => dims.clone(),
            TensorPayload::Json(s) => vec![s.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub payload: TensorPayload,
}

/// Ordered list of named tensors. Order is preserved on disk so encoding is
/// a pure function of the value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
}

fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

fn mask_name(layer: usize) -> String {
    format!("layer{layer}.mask")
}

fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

fn w_sw_name(layer: usize) -> String {
    format!("layer{layer}.w_sw")
}

impl Checkpoint {
    /// Weights, masks and biases of every trainable layer, preceded by a
    /// `meta` JSON blob `{"network": spec, ...extra}`.
    pub fn from_network(net: &Network, extra: Value) -> Result<Self> {
        let mut meta = match extra {
            Value::Object(map) => map,
            Value::Null => serde_json::Map::new(),
            other => {
                return Err(Error::invalid(format!(
                    "checkpoint meta must be an object, got {other}"
                )))
            }
        };
        meta.insert("network".into(), serde_json::to_value(net.spec())?);
        let mut ck = Checkpoint::default();
        ck.push(
            META,
            TensorPayload::Json(serde_json::to_string(&Value::Object(meta))?),
        );
        for li in net.trainable_layers() {
            let p = net.params(li).expect("trainable");
            ck.push(
                &weight_name(li),
                TensorPayload::F32(p.weights.weights().clone()),
            );
            ck.push(
                &mask_name(li),
                TensorPayload::Mask {
                    dims: p.weights.dims().to_vec(),
                    data: p.weights.mask().to_vec(),
                },
            );
            let bias = Tensor::new(vec![p.bias.len()], p.bias.clone())?;
            ck.push(&bias_name(li), TensorPayload::F32(bias));
        }
        Ok(ck)
    }

    pub fn push(&mut self, name: &str, payload: TensorPayload) {
        self.tensors.push(NamedTensor {
            name: name.to_owned(),
            payload,
        });
    }

    /// Record a layer's structured weights `W_sw` alongside its mask.
    pub fn push_w_sw(&mut self, layer: usize, w_sw: Tensor) {
        self.push(&w_sw_name(layer), TensorPayload::F32(w_sw));
    }

    pub fn get(&self, name: &str) -> Option<&TensorPayload> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.payload)
    }

    pub fn w_sw(&self, layer: usize) -> Option<&Tensor> {
        match self.get(&w_sw_name(layer)) {
            Some(TensorPayload::F32(t)) => Some(t),
            _ => None,
        }
    }

    pub fn meta(&self) -> Result<Value> {
        match self.get(META) {
            Some(TensorPayload::Json(s)) => Ok(serde_json::from_str(s)?),
            _ => Err(Error::Format {
                offset: 0,
                message: "checkpoint has no meta blob".into(),
            }),
        }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let meta = self.meta()?;
        let spec = meta.get("network").ok_or_else(|| Error::Format {
            offset: 0,
            message: "meta blob has no network spec".into(),
        })?;
        Ok(serde_json::from_value(spec.clone())?)
    }

    pub fn to_network(&self) -> Result<Network> {
        let spec = self.network_spec()?;
        let missing = |name: String| Error::Format {
            offset: 0,
            message: format!("missing tensor {name}"),
        };
        let mut params = Vec::with_capacity(spec.layers.len());
        for (li, layer) in spec.layers.iter().enumerate() {
            if !layer.is_trainable() {
                params.push(None);
                continue;
            }
            let Some(TensorPayload::F32(w)) = self.get(&weight_name(li)) else {
                return Err(missing(weight_name(li)));
            };
            let Some(TensorPayload::Mask { data: mask, .. }) = self.get(&mask_name(li)) else {
                return Err(missing(mask_name(li)));
            };
            let Some(TensorPayload::F32(b)) = self.get(&bias_name(li)) else {
                return Err(missing(bias_name(li)));
            };
            params.push(Some(LayerParams {
                weights: MaskedTensor::checked(w.clone(), mask.clone())?,
                bias: b.data().to_vec(),
            }));
        }
        Network::from_params(spec, params)
    }

    /// Every `X.weight` has a same-shape `X.mask` (and vice versa) and the
    /// weight is zero wherever the mask is.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for t in &self.tensors {
            if seen.insert(t.name.as_str(), &t.payload).is_some() {
                return Err(Error::Format {
                    offset: 0,
                    message: format!("duplicate tensor {}", t.name),
                });
            }
        }
        for (name, payload) in &seen {
            if let Some(stem) = name.strip_suffix(".mask") {
                let TensorPayload::Mask { dims, data } = payload else {
                    return Err(Error::Constraint(format!("{name} is not a mask")));
                };
                if data.iter().any(|&m| m > 1) {
                    return Err(Error::Constraint(format!(
                        "{name} holds values other than 0/1"
                    )));
                }
                let Some(TensorPayload::F32(w)) = seen.get(format!("{stem}.weight").as_str())
                else {
                    return Err(Error::Constraint(format!(
                        "{name} has no matching weight tensor"
                    )));
                };
                if w.dims() != dims.as_slice() {
                    return Err(Error::Constraint(format!(
                        "{name} dims {dims:?} differ from weight dims {:?}",
                        w.dims()
                    )));
                }
                if let Some(i) = w
                    .data()
                    .iter()
                    .zip(data)
                    .position(|(&v, &m)| m == 0 && v != 0.0)
                {
                    return Err(Error::Constraint(format!(
                        "{stem}.weight[{i}] is nonzero under a zero mask"
                    )));
                }
            } else if let Some(stem) = name.strip_suffix(".weight") {
                if !seen.contains_key(format!("{stem}.mask").as_str()) {
                    return Err(Error::Constraint(format!("{name} has no mask")));
                }
            }
        }
        Ok(())
    }
}

/// Encode to the on-disk byte layout.
pub fn write_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(
        &u32::try_from(ck.tensors.len())
            .map_err(|_| Error::invalid("too many tensors"))?
            .to_le_bytes(),
    );
    for t in &ck.tensors {
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::invalid(format!("tensor name too long: {}", t.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.payload.kind());
        let dims = t.payload.dims();
        out.push(u8::try_from(dims.len()).map_err(|_| Error::invalid("too many dims"))?);
        for d in dims {
            out.extend_from_slice(
                &u32::try_from(d)
                    .map_err(|_| Error::invalid("dim exceeds u32"))?
                    .to_le_bytes(),
            );
        }
        match &t.payload {
            TensorPayload::F32(x) => {
                for v in x.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            TensorPayload::Mask { data, .. } => out.extend_from_slice(data),
            TensorPayload::Json(s) => out.extend_from_slice(s.as_bytes()),
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Truncated {
                offset: self.bytes.len() as u64,
                needed: (self.pos + n - self.bytes.len()) as u64,
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Decode and validate.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: u32::from_le_bytes(*CHECKPOINT_MAGIC),
            found: u32::from_le_bytes(magic.try_into().expect("4 bytes")),
        });
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(version));
    }
    if bytes.len() < 12 + 4 {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
            needed: (16 - bytes.len()) as u64,
        });
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut cur = Cursor {
        bytes: &bytes[..body_end],
        pos: 8,
    };
    let count = cur.u32()?;
    let mut ck = Checkpoint::default();
    for _ in 0..count {
        let start = cur.pos;
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|e| Error::Format {
                offset: (start + 2) as u64,
                message: format!("tensor name is not UTF-8: {e}"),
            })?
            .to_owned();
        let kind_at = cur.pos;
        let kind = cur.u8()?;
        let ndim = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let payload = match kind {
            0 => {
                let raw = cur.take(len * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                TensorPayload::F32(Tensor::new(dims, data).map_err(|e| Error::Format {
                    offset: kind_at as u64,
                    message: format!("{name}: {e}"),
                })?)
            }
            1 => TensorPayload::Mask {
                data: cur.take(len)?.to_vec(),
                dims,
            },
            2 if ndim == 1 => {
                let raw = cur.take(len)?;
                TensorPayload::Json(
                    std::str::from_utf8(raw)
                        .map_err(|e| Error::Format {
                            offset: kind_at as u64,
                            message: format!("{name}: JSON blob is not UTF-8: {e}"),
                        })?
                        .to_owned(),
                )
            }
            k => {
                return Err(Error::Format {
                    offset: kind_at as u64,
                    message: format!("{name}: unknown tensor kind {k} with {ndim} dims"),
                })
            }
        };
        ck.tensors.push(NamedTensor { name, payload });
    }
    if cur.pos != body_end {
        return Err(Error::Format {
            offset: cur.pos as u64,
            message: format!("{} unexpected bytes before checksum", body_end - cur.pos),
        });
    }
    ck.validate()?;
    Ok(ck)
}

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        use std::io::Write;
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    ck.validate()?;
    write_atomic(path, &write_checkpoint(ck)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Checkpoint {
        let net = Network::init(NetworkSpec::mlp(&[6, 5, 3]), 4).unwrap();
        let mut net = net;
        let p = net.params_mut(0).unwrap();
        let mask: Vec<u8> = (0..30).map(|i| (i % 3 != 0) as u8).collect();
        p.weights.set_mask(mask).unwrap();
        Checkpoint::from_network(&net, json!({"seed": 4})).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample();
        let bytes = write_checkpoint(&ck).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
        let net = back.to_network().unwrap();
        assert!(net.satisfies_constraint());
        assert_eq!(net.params(0).unwrap().weights.mask_nnz(), 20);
        assert_eq!(back.meta().unwrap()["seed"], 4);
    }

    #[test]
    fn header_layout() {
        let bytes = write_checkpoint(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"SWNN");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        // meta + (weight, mask, bias) × 2 layers
        assert_eq!(&bytes[8..12], &[7, 0, 0, 0]);
    }

    #[test]
    fn corrupt_magic() {
        let mut bytes = write_checkpoint(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            read_checkpoint(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = write_checkpoint(&sample()).unwrap();
        let i = bytes.len() - 10;
        bytes[i] ^= 0xff;
        assert!(matches!(
            read_checkpoint(&bytes),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = write_checkpoint(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(read_checkpoint(&bytes), Err(Error::Version(2))));
    }

    #[test]
    fn truncated() {
        let bytes = write_checkpoint(&sample()).unwrap();
        assert!(read_checkpoint(&bytes[..3]).is_err());
        assert!(read_checkpoint(&bytes[..bytes.len() / 2]).is_err());
    }

    #[test]
    fn weight_under_zero_mask_rejected() {
        let mut ck = sample();
        for t in &mut ck.tensors {
            if t.name == "layer0.weight" {
                if let TensorPayload::F32(w) = &mut t.payload {
                    w.data_mut()[0] = 0.5; // mask[0] is 0
                }
            }
        }
        let bytes = write_checkpoint(&ck).unwrap();
        assert!(matches!(read_checkpoint(&bytes), Err(Error::Constraint(_))));
    }

    #[test]
    fn weight_without_mask_rejected() {
        let mut ck = sample();
        ck.tensors.retain(|t| t.name != "layer2.mask");
        assert!(matches!(ck.validate(), Err(Error::Constraint(_))));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.swnn");
        let ck = sample();
        save_checkpoint(&path, &ck).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
