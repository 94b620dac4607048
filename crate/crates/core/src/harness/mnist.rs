//! IDX reader and writer for MNIST-style image and label files.
//!
//! Files ending in `.gz` are decompressed transparently.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw 8-bit images with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistSet {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl MnistSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// A pixel is on when it is nonzero and at least `threshold * 255`.
    pub fn binarize(&self, threshold: f64) -> Vec<Vec<bool>> {
        let cut = threshold * 255.0;
        self.images.iter().map(|img| img.iter().map(|&p| p > 0 && f64::from(p) >= cut).collect()).collect()
    }

    pub fn class_counts(&self) -> [usize; 10] {
        let mut c = [0; 10];
        for &l in &self.labels {
            if let Some(x) = c.get_mut(l as usize) {
                *x += 1;
            }
        }
        c
    }

    pub fn truncate(&mut self, n: usize) {
        self.images.truncate(n);
        self.labels.truncate(n);
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let f = File::open(path)?;
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(BufReader::new(f))
            .read_to_end(&mut buf)
            .map_err(|e| Error::Format { offset: 0, msg: format!("{}: bad gzip stream: {e}", path.display()) })?;
    } else {
        BufReader::new(f).read_to_end(&mut buf)?;
    }
    Ok(buf)
}

fn be_u32(buf: &[u8], offset: usize) -> Result<u32> {
    buf.get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format { offset: offset as u64, msg: "truncated header".into() })
}

fn check_magic(buf: &[u8], want: u32) -> Result<()> {
    let m = be_u32(buf, 0)?;
    if m != want {
        return Err(Error::Format { offset: 0, msg: format!("magic {m:#010x}, expected {want:#010x}") });
    }
    Ok(())
}

pub fn read_images(path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let buf = read_all(path)?;
    check_magic(&buf, IMAGE_MAGIC)?;
    let n = be_u32(&buf, 4)? as usize;
    let rows = be_u32(&buf, 8)? as usize;
    let cols = be_u32(&buf, 12)? as usize;
    let size = rows * cols;
    let need = 16 + n * size;
    if buf.len() < need {
        return Err(Error::Format {
            offset: buf.len() as u64,
            msg: format!("{n} images of {rows}x{cols} need {need} bytes, file has {}", buf.len()),
        });
    }
    let images = buf[16..need].chunks_exact(size.max(1)).take(n).map(<[u8]>::to_vec).collect();
    Ok((rows, cols, images))
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let buf = read_all(path)?;
    check_magic(&buf, LABEL_MAGIC)?;
    let n = be_u32(&buf, 4)? as usize;
    let body = buf.get(8..8 + n).ok_or_else(|| Error::Format {
        offset: buf.len() as u64,
        msg: format!("{n} labels need {} bytes, file has {}", 8 + n, buf.len()),
    })?;
    if let Some(k) = body.iter().position(|&l| l > 9) {
        return Err(Error::Format { offset: (8 + k) as u64, msg: format!("label {} out of range", body[k]) });
    }
    Ok(body.to_vec())
}

pub fn load_set(images: &Path, labels: &Path) -> Result<MnistSet> {
    let (rows, cols, images) = read_images(images)?;
    let labels = read_labels(labels)?;
    if images.len() != labels.len() {
        return Err(Error::Data(format!("{} images but {} labels", images.len(), labels.len())));
    }
    Ok(MnistSet { rows, cols, images, labels })
}

/// First existing file among `name` and `name.gz` in `dir`.
pub fn locate(dir: &Path, name: &str) -> Option<std::path::PathBuf> {
    [dir.join(name), dir.join(format!("{name}.gz"))].into_iter().find(|p| p.is_file())
}

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Loads `(train, test)` from a directory with the standard file names.
pub fn load_mnist(dir: &Path) -> Result<(MnistSet, MnistSet)> {
    let find = |name: &str| {
        locate(dir, name).ok_or_else(|| Error::Data(format!("{name} not found in {}", dir.display())))
    };
    let train = load_set(&find(TRAIN_IMAGES)?, &find(TRAIN_LABELS)?)?;
    let test = load_set(&find(TEST_IMAGES)?, &find(TEST_LABELS)?)?;
    Ok((train, test))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(f, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        let mut f = f;
        f.write_all(bytes)?;
    }
    Ok(())
}

pub fn write_set(set: &MnistSet, images: &Path, labels: &Path) -> Result<()> {
    let mut img = Vec::with_capacity(16 + set.len() * set.rows * set.cols);
    for v in [IMAGE_MAGIC, set.len() as u32, set.rows as u32, set.cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for im in &set.images {
        if im.len() != set.rows * set.cols {
            return Err(Error::Shape(format!("image of {} pixels in a {}x{} set", im.len(), set.rows, set.cols)));
        }
        img.extend_from_slice(im);
    }
    let mut lab = Vec::with_capacity(8 + set.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(set.len() as u32).to_be_bytes());
    lab.extend_from_slice(&set.labels);
    write_bytes(images, &img)?;
    write_bytes(labels, &lab)
}
