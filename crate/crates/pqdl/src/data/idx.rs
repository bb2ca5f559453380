//! IDX container parsing (the MNIST family format).
//!
//! Images: magic 0x00000803, big-endian u32 dims `[n, rows, cols]`, u8
//! pixels. Labels: magic 0x00000801, dims `[n]`, u8 labels. Either file may
//! be gzip-compressed; this is detected from the 0x1f 0x8b signature, not
//! the file name. Pixels are scaled to [0,1] as f64.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::InputShape;

use super::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Data(format!("{}: gzip decode failed: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Data(format!("{}: truncated header", path.display())))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = read_maybe_gzip(images_path)?;
    let lbl_bytes = read_maybe_gzip(labels_path)?;

    let magic = be_u32(&img_bytes, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "{}: bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let n = be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = be_u32(&img_bytes, 12, images_path)? as usize;
    let pixel_count = n
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or_else(|| Error::Data("image dimensions overflow".into()))?;
    let img_data = img_bytes
        .get(16..16 + pixel_count)
        .ok_or_else(|| Error::Data(format!("{}: truncated image data", images_path.display())))?;

    let magic = be_u32(&lbl_bytes, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Data(format!(
            "{}: bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let n_labels = be_u32(&lbl_bytes, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(Error::Data(format!(
            "count mismatch: {} images vs {} labels",
            n, n_labels
        )));
    }
    let lbl_data = lbl_bytes
        .get(8..8 + n)
        .ok_or_else(|| Error::Data(format!("{}: truncated label data", labels_path.display())))?;

    let mut examples = Matrix::zeros(n, rows * cols);
    for (i, px) in img_data.iter().enumerate() {
        examples.data_mut()[i] = *px as f64 / 255.0;
    }
    let labels: Vec<u32> = lbl_data.iter().map(|&l| l as u32).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;

    Dataset::new(
        images_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "idx".into()),
        examples,
        labels,
        num_classes.max(2),
        InputShape::Image {
            height: rows,
            width: cols,
            channels: 1,
        },
        format!("idx({})", images_path.display()),
    )
}
