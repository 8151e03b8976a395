//! CIFAR-10 binary batches: per record one label byte followed by the red,
//! green and blue 32×32 planes.

use std::io::Write;
use std::path::Path;

use mimo_jscc_core::image::{ImageDims, ImageSample};

use crate::error::{SimError, SimResult};

pub const SIDE: usize = 32;
pub const PLANE: usize = SIDE * SIDE;
pub const RECORD_LEN: usize = 1 + 3 * PLANE;
pub const DIMS: ImageDims = ImageDims::new(SIDE, SIDE, 3);

/// Parses records from `bytes`; source ids are `id_offset + record index`.
pub fn parse_records(path: &Path, bytes: &[u8], id_offset: u64) -> SimResult<Vec<ImageSample>> {
    let whole = bytes.len() / RECORD_LEN;
    if whole * RECORD_LEN != bytes.len() {
        let offset = (whole * RECORD_LEN) as u64;
        return Err(SimError::Truncated {
            path: path.to_path_buf(),
            offset,
            detail: format!(
                "record {whole} has {} of {RECORD_LEN} bytes",
                bytes.len() - whole * RECORD_LEN
            ),
        });
    }
    bytes
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let planes = &rec[1..];
            let mut pixels = Vec::with_capacity(3 * PLANE);
            for p in 0..PLANE {
                for c in 0..3 {
                    pixels.push(f64::from(planes[c * PLANE + p]) / 255.0);
                }
            }
            Ok(ImageSample::new(id_offset + i as u64, DIMS, pixels)?)
        })
        .collect()
}

pub fn load_cifar_binary(path: &Path, id_offset: u64) -> SimResult<Vec<ImageSample>> {
    let bytes = std::fs::read(path).map_err(|e| SimError::io(path, e))?;
    parse_records(path, &bytes, id_offset)
}

/// Loads and center-crops every image to `height×width`.
pub fn load_cropped(path: &Path, id_offset: u64, height: usize, width: usize) -> SimResult<Vec<ImageSample>> {
    load_cifar_binary(path, id_offset)?
        .iter()
        .map(|s| Ok(s.center_crop(height, width)?))
        .collect()
}

/// Encodes 32×32×3 images (pixels rounded to the nearest 1/255) with label 0.
pub fn encode_records(images: &[ImageSample]) -> SimResult<Vec<u8>> {
    let mut out = Vec::with_capacity(images.len() * RECORD_LEN);
    for s in images {
        if s.dims() != DIMS {
            return Err(SimError::Invariant("CIFAR records must be 32×32×3".into()));
        }
        out.push(0);
        for c in 0..3 {
            for p in 0..PLANE {
                out.push((s.pixels()[p * 3 + c] * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn write_cifar_binary(path: &Path, images: &[ImageSample]) -> SimResult<()> {
    let bytes = encode_records(images)?;
    let mut f = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| SimError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_arithmetic() {
        let p = Path::new("mem");
        let mut rec = vec![0u8; RECORD_LEN];
        rec[0] = 7;
        let one = parse_records(p, &rec, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].dims(), DIMS);
        assert!(one[0].pixels().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn planar_to_interleaved() {
        let mut rec = vec![0u8; RECORD_LEN];
        rec[1] = 255;
        rec[1 + PLANE + 1] = 51;
        let s = &parse_records(Path::new("mem"), &rec, 5).unwrap()[0];
        assert_eq!(s.source_id(), 5);
        assert_eq!(s.pixels()[0], 1.0);
        assert_eq!(s.pixels()[4], 0.2);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = vec![0u8; 2 * RECORD_LEN + 10];
        match parse_records(Path::new("mem"), &bytes, 0) {
            Err(SimError::Truncated { offset, .. }) => assert_eq!(offset, 2 * RECORD_LEN as u64),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn encode_then_parse_is_exact() {
        let mut bytes = Vec::new();
        for i in 0..3u8 {
            bytes.push(i);
            bytes.extend((0..3 * PLANE).map(|k| (k as u8).wrapping_mul(i + 1)));
        }
        let images = parse_records(Path::new("mem"), &bytes, 0).unwrap();
        let again = encode_records(&images).unwrap();
        let reparsed = parse_records(Path::new("mem"), &again, 0).unwrap();
        assert_eq!(images, reparsed);
    }
}
