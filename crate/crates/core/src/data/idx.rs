//! MNIST IDX reader.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::scalar::Scalar;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// `(train images, train labels, test images, test labels)` file names.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses an IDX3 image file; returns `(rows, pixels per image, pixel bytes)`.
fn parse_images(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let width = be_u32(bytes, 8, "images")? as usize * be_u32(bytes, 12, "images")? as usize;
    let body = &bytes[16..];
    if body.len() != count * width {
        return Err(Error::Format(format!(
            "image file holds {} bytes, header promises {}",
            body.len(),
            count * width
        )));
    }
    Ok((count, width, body))
}

fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format(format!(
            "label file holds {} labels, header promises {count}",
            body.len()
        )));
    }
    Ok(body)
}

/// Reads an IDX3 image file into a row-per-image matrix scaled to `[0, 1]`.
pub fn read_idx_images<T: Scalar>(path: &Path) -> Result<Array2<T>> {
    let bytes = fs::read(path)?;
    let (count, width, body) = parse_images(&bytes)?;
    let scale = T::from_f64_lossy(255.0);
    let values = body
        .iter()
        .map(|&b| T::from_u8(b).expect("byte fits") / scale)
        .collect();
    Ok(Array2::from_shape_vec((count, width), values).expect("length checked"))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path)?;
    Ok(parse_labels(&bytes)?.iter().map(|&b| b as usize).collect())
}

fn load_pair<T: Scalar>(images: &Path, labels: &Path) -> Result<Dataset<T>> {
    let x = read_idx_images(images)?;
    let y = read_idx_labels(labels)?;
    if x.nrows() != y.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if y.iter().any(|&l| l > 9) {
        return Err(Error::Format("MNIST labels must be 0-9".into()));
    }
    Dataset::new(x, y, 10)
}

/// Loads the train and test splits from the four standard IDX files in `dir`.
pub fn load_mnist<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    let file = |i: usize| dir.join(MNIST_FILES[i]);
    let train = load_pair(&file(0), &file(1))?;
    let test = load_pair(&file(2), &file(3))?;
    Ok((train, test))
}
