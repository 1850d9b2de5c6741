use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

/// Whole file, transparently gunzipped when the name ends in `.gz`.
pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path)?;
    let mut reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let slice = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| Error::Truncated {
            offset: bytes.len() as u64,
            needed: (offset + 4 - bytes.len()) as u64,
        })?;
    Ok(u32::from_be_bytes(slice.try_into().expect("4 bytes")))
}

/// `n × rows × cols` u8 images; returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
            needed: (need - body.len()) as u64,
        });
    }
    if body.len() > need {
        return Err(Error::Format {
            offset: (16 + need) as u64,
            message: format!("{} trailing bytes after {n} images", body.len() - need),
        });
    }
    Ok((n, rows, cols, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
            needed: (n - body.len()) as u64,
        });
    }
    if body.len() > n {
        return Err(Error::Format {
            offset: (8 + n) as u64,
            message: format!("{} trailing bytes after {n} labels", body.len() - n),
        });
    }
    Ok(body)
}

/// Big-endian IDX images and labels, pixels scaled by 1/255. Samples are
/// flat (`[n, rows·cols]`); reshape for conv inputs.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let img_bytes = read_maybe_gz(images_path)?;
    let lab_bytes = read_maybe_gz(labels_path)?;
    let (n, rows, cols, pixels) = parse_idx_images(&img_bytes)?;
    let labels = parse_idx_labels(&lab_bytes)?;
    if labels.len() != n {
        return Err(Error::Format {
            offset: 4,
            message: format!("{n} images but {} labels", labels.len()),
        });
    }
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Format {
            offset: (8 + pos) as u64,
            message: format!("label {} outside 0..10", labels[pos]),
        });
    }
    if n == 0 {
        return Err(Error::Format {
            offset: 4,
            message: "file declares zero images".into(),
        });
    }
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let samples = Tensor::new(vec![n, rows * cols], data)?;
    LabeledDataset::new(samples, labels.iter().map(|&l| l as usize).collect(), 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: u32, fill: u8) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, 28, 28] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend(std::iter::repeat_n(fill, n as usize * 784));
        b
    }

    fn labels(ls: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(ls.len() as u32).to_be_bytes());
        b.extend_from_slice(ls);
        b
    }

    #[test]
    fn four_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let mut img = images(4, 0);
        img[16] = 255;
        img[16 + 784] = 51;
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, labels(&[3, 1, 4, 1])).unwrap();
        let ds = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.sample_dims(), &[784]);
        assert_eq!(ds.labels(), &[3, 1, 4, 1]);
        assert_eq!(ds.samples().row(0)[0], 1.0);
        assert_eq!(ds.samples().row(1)[0], 0.2);
        assert!(ds.samples().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_file_is_truncated() {
        assert!(matches!(
            parse_idx_images(&[]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn label_magic_as_images_rejected() {
        let b = labels(&[1, 2]);
        assert!(matches!(
            parse_idx_images(&b),
            Err(Error::BadMagic {
                expected: 2051,
                found: 2049
            })
        ));
    }

    #[test]
    fn short_body_reports_offset() {
        let mut b = images(2, 7);
        b.truncate(16 + 784 + 10);
        match parse_idx_images(&b) {
            Err(Error::Truncated { offset, needed }) => {
                assert_eq!(offset, 16 + 784 + 10);
                assert_eq!(needed, 774);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        std::fs::write(&ip, images(2, 0)).unwrap();
        std::fs::write(&lp, labels(&[1, 2, 3])).unwrap();
        assert!(matches!(
            load_mnist_idx(&ip, &lp),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn gzip_input() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img.gz"), dir.path().join("lab.gz"));
        for (path, bytes) in [(&ip, images(1, 255)), (&lp, labels(&[9]))] {
            let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(&bytes).unwrap();
            std::fs::write(path, enc.finish().unwrap()).unwrap();
        }
        let ds = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(ds.labels(), &[9]);
    }
}
