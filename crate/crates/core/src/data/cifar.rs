use std::path::Path;

use super::mnist::read_maybe_gz;
use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One label byte followed by 3·32·32 pixel bytes in CHW order.
pub const CIFAR_RECORD_BYTES: usize = 3073;

pub fn parse_cifar10(bytes: &[u8]) -> Result<(Vec<f32>, Vec<usize>)> {
    if bytes.is_empty() {
        return Err(Error::Truncated {
            offset: 0,
            needed: CIFAR_RECORD_BYTES as u64,
        });
    }
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        return Err(Error::Format {
            offset: (bytes.len() - bytes.len() % CIFAR_RECORD_BYTES) as u64,
            message: format!(
                "{} bytes is not a multiple of the {CIFAR_RECORD_BYTES}-byte record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut pixels = Vec::with_capacity(n * 3072);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if rec[0] > 9 {
            return Err(Error::Format {
                offset: (i * CIFAR_RECORD_BYTES) as u64,
                message: format!("label byte {} outside 0..10", rec[0]),
            });
        }
        labels.push(rec[0] as usize);
        pixels.extend(rec[1..].iter().map(|&p| p as f32 / 255.0));
    }
    Ok((pixels, labels))
}

/// Concatenate CIFAR-10 binary batch files into `[n, 3, 32, 32]` samples.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset> {
    if paths.is_empty() {
        return Err(Error::invalid("no CIFAR-10 files given"));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let (p, l) = parse_cifar10(&read_maybe_gz(path.as_ref())?)?;
        pixels.extend(p);
        labels.extend(l);
    }
    let samples = Tensor::new(vec![labels.len(), 3, 32, 32], pixels)?;
    LabeledDataset::new(samples, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend(std::iter::repeat_n(fill, 3072));
        r
    }

    #[test]
    fn two_record_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let mut bytes = record(6, 0);
        bytes.extend(record(2, 255));
        bytes[1 + 1024] = 255; // first pixel of the green plane
        std::fs::write(&path, bytes).unwrap();
        let ds = load_cifar10_bin(&[&path]).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sample_dims(), &[3, 32, 32]);
        assert_eq!(ds.labels(), &[6, 2]);
        assert_eq!(ds.samples().row(0)[1024], 1.0);
        assert_eq!(ds.samples().row(0)[0], 0.0);
        assert!(ds.samples().row(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_and_ragged_inputs() {
        assert!(parse_cifar10(&[]).is_err());
        assert!(matches!(
            parse_cifar10(&[0u8; 3074]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            parse_cifar10(&record(10, 0)),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}
