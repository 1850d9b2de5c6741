use std::io::Write;
use std::path::Path;

use crate::data::{write_atomic, Checkpoint};
use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::nn::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub layer: usize,
    pub kind: &'static str,
    pub kept: usize,
    pub total: usize,
}

impl DensityRow {
    pub fn ratio(&self) -> f64 {
        self.kept as f64 / self.total as f64
    }
}

/// Kept/total weights per trainable layer.
pub fn density_report(ck: &Checkpoint) -> Result<Vec<DensityRow>> {
    let net = ck.to_network()?;
    Ok(net
        .trainable_layers()
        .into_iter()
        .map(|li| {
            let w = &net.params(li).expect("trainable").weights;
            DensityRow {
                layer: li,
                kind: net.spec().layers[li].kind(),
                kept: w.mask_nnz(),
                total: w.len(),
            }
        })
        .collect())
}

pub const DENSITY_HEADER: &str = "layer,kind,kept,total,ratio";

/// Per-layer rows followed by an `all` row with network totals.
pub fn write_density_csv<W: Write>(mut out: W, rows: &[DensityRow]) -> std::io::Result<()> {
    writeln!(out, "{DENSITY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.layer,
            r.kind,
            r.kept,
            r.total,
            sig10(r.ratio())
        )?;
    }
    let kept: usize = rows.iter().map(|r| r.kept).sum();
    let total: usize = rows.iter().map(|r| r.total).sum();
    let ratio = if total == 0 {
        0.0
    } else {
        kept as f64 / total as f64
    };
    writeln!(out, "all,network,{kept},{total},{}", sig10(ratio))
}

/// Grey levels for a `rows × cols` masked layer: masked cells 0, kept cells
/// 1..=255 by rank of |w| among kept cells (equal magnitudes share the
/// highest rank of their group, so uniform weights give a flat 255).
fn grey_levels(weights: &[f32], mask: &[u8]) -> Vec<u8> {
    let mut kept: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == 1).collect();
    kept.sort_by(|&a, &b| {
        weights[a]
            .abs()
            .total_cmp(&weights[b].abs())
            .then(a.cmp(&b))
    });
    let mut out = vec![0u8; mask.len()];
    let n = kept.len();
    let mut start = 0;
    while start < n {
        let mag = weights[kept[start]].abs();
        let mut end = start + 1;
        while end < n && weights[kept[end]].abs() == mag {
            end += 1;
        }
        let rank = end - 1;
        let level = if n == 1 {
            255
        } else {
            1 + (254 * rank) / (n - 1)
        };
        for &i in &kept[start..end] {
            out[i] = level as u8;
        }
        start = end;
    }
    out
}

fn layer_matrix(net: &Network, layer: usize) -> Result<(usize, usize, Vec<u8>)> {
    let spec = net
        .spec()
        .layers
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("no layer {layer}")))?;
    let (rows, cols) = spec
        .mask_shape()
        .ok_or_else(|| Error::invalid(format!("layer {layer} ({}) has no weights", spec.kind())))?;
    let w = &net.params(layer).expect("trainable").weights;
    Ok((rows, cols, grey_levels(w.weights().data(), w.mask())))
}

/// Binary PGM (P5) of one layer's masking matrix, width = columns.
pub fn heatmap_pgm(ck: &Checkpoint, layer: usize) -> Result<Vec<u8>> {
    let net = ck.to_network()?;
    let (rows, cols, pixels) = layer_matrix(&net, layer)?;
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(pixels);
    Ok(out)
}

pub fn heatmap_export(ck: &Checkpoint, layer: usize, path: &Path) -> Result<()> {
    write_atomic(path, &heatmap_pgm(ck, layer)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgmHeader {
    pub width: usize,
    pub height: usize,
    pub maxval: usize,
    /// Byte offset of the first pixel.
    pub data_offset: usize,
}

/// Parse a P5 header (whitespace-separated fields, `#` comments).
pub fn parse_pgm_header(bytes: &[u8]) -> Result<PgmHeader> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated {
                offset: pos as u64,
                needed: 1,
            });
        }
        fields.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
    }
    if fields[0].1 != "P5" {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected P5, found {:?}", fields[0].1),
        });
    }
    let num = |(at, s): (usize, &str)| {
        s.parse::<usize>().map_err(|_| Error::Format {
            offset: at as u64,
            message: format!("bad header number {s:?}"),
        })
    };
    let header = PgmHeader {
        width: num(fields[1])?,
        height: num(fields[2])?,
        maxval: num(fields[3])?,
        data_offset: pos + 1,
    };
    let need = header.data_offset + header.width * header.height;
    if bytes.len() < need {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
            needed: (need - bytes.len()) as u64,
        });
    }
    Ok(header)
}
