//! IDX ingestion, threshold spike encoding and seeded train/validation batching.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SnnError};
use crate::signal::{SpikeRaster, TimeGrid};

pub const IMAGE_PIXELS: usize = 784;
pub const NUM_CLASSES: usize = 10;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Pixels strictly above this value produce a spike.
pub const SPIKE_THRESHOLD: u8 = 127;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSample {
    pub pixels: Vec<u8>,
    pub label: u8,
}

impl ImageSample {
    pub fn new(pixels: Vec<u8>, label: u8) -> Result<Self> {
        if pixels.len() != IMAGE_PIXELS {
            return Err(SnnError::Input(format!("image has {} pixels, expected {IMAGE_PIXELS}", pixels.len())));
        }
        if label as usize >= NUM_CLASSES {
            return Err(SnnError::Input(format!("label {label} out of range")));
        }
        Ok(Self { pixels, label })
    }
}

fn ingestion(path: &Path, offset: usize, reason: impl Into<String>) -> SnnError {
    SnnError::Ingestion { path: path.to_path_buf(), offset, reason: reason.into() }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| SnnError::Io { path: path.to_path_buf(), source })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| ingestion(path, offset, format!("file ends inside the header ({} bytes)", bytes.len())))
}

/// Parses a header and returns (dims, payload offset).
fn idx_header(bytes: &[u8], path: &Path, magic: u32, ndims: usize) -> Result<(Vec<usize>, usize)> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(ingestion(path, 0, format!("bad magic 0x{found:08x}, expected 0x{magic:08x}")));
    }
    let dims = (0..ndims)
        .map(|d| be_u32(bytes, 4 + 4 * d, path).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let offset = 4 + 4 * ndims;
    let expected: usize = dims.iter().product();
    let actual = bytes.len() - offset;
    if actual < expected {
        return Err(ingestion(
            path,
            bytes.len(),
            format!("truncated payload: expected {expected} bytes, found {actual}"),
        ));
    }
    Ok((dims, offset))
}

/// Loads an IDX image file (magic 0x803, `n x 28 x 28`) and its label file (magic 0x801).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<ImageSample>> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;

    let (idims, ioff) = idx_header(&images, images_path, IMAGES_MAGIC, 3)?;
    let (ldims, loff) = idx_header(&labels, labels_path, LABELS_MAGIC, 1)?;
    let pixels = idims[1] * idims[2];
    if pixels != IMAGE_PIXELS {
        return Err(ingestion(images_path, 8, format!("images are {}x{}, expected 28x28", idims[1], idims[2])));
    }
    if idims[0] != ldims[0] {
        return Err(ingestion(
            labels_path,
            4,
            format!("{} labels for {} images in {}", ldims[0], idims[0], images_path.display()),
        ));
    }
    let mut samples = Vec::with_capacity(idims[0]);
    for n in 0..idims[0] {
        let label = labels[loff + n];
        if label as usize >= NUM_CLASSES {
            return Err(ingestion(labels_path, loff + n, format!("label {label} out of range")));
        }
        let start = ioff + n * pixels;
        samples.push(ImageSample { pixels: images[start..start + pixels].to_vec(), label });
    }
    Ok(samples)
}

/// Writes samples as an IDX image/label pair.
pub fn write_idx(samples: &[ImageSample], images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let mut images = Vec::with_capacity(16 + samples.len() * IMAGE_PIXELS);
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [samples.len() as u32, 28, 28] {
        images.extend_from_slice(&d.to_be_bytes());
    }
    let mut labels = Vec::with_capacity(8 + samples.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    for s in samples {
        images.extend_from_slice(&s.pixels);
        labels.push(s.label);
    }
    let write = |p: &Path, bytes: &[u8]| fs::write(p, bytes).map_err(|source| SnnError::Io { path: p.to_path_buf(), source });
    write(images_path.as_ref(), &images)?;
    write(labels_path.as_ref(), &labels)
}

/// One spike at step 0 for every pixel above 127, nothing otherwise.
pub fn encode_threshold(sample: &ImageSample, grid: TimeGrid) -> SpikeRaster {
    let mut raster = SpikeRaster::empty(grid, sample.pixels.len());
    for (i, &p) in sample.pixels.iter().enumerate() {
        if p > SPIKE_THRESHOLD {
            raster.set(i, 0);
        }
    }
    raster
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Use only this many (randomly chosen) samples before splitting.
    pub limit: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 0, limit: None }
    }
}

/// Index partition of a dataset into training and validation parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    seed: u64,
}

impl Split {
    pub fn new(len: usize, spec: &SplitSpec) -> Result<Self> {
        if len == 0 {
            return Err(SnnError::Input("cannot split an empty dataset".into()));
        }
        if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
            return Err(SnnError::Config(format!("train fraction {} outside (0, 1]", spec.train_fraction)));
        }
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
        if let Some(limit) = spec.limit {
            idx.truncate(limit.min(len));
        }
        let n_train = ((idx.len() as f64) * spec.train_fraction).round() as usize;
        let val = idx.split_off(n_train);
        Ok(Self { train: idx, val, seed: spec.seed })
    }

    /// Training indices for `epoch`, reshuffled with a stream derived from
    /// the split seed and the epoch number, cut into batches.
    pub fn epoch_batches(&self, epoch: u64, batch_size: usize) -> Result<Vec<Vec<usize>>> {
        if batch_size == 0 {
            return Err(SnnError::Config("batch size must be at least 1".into()));
        }
        let mut order = self.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch + 1);
        order.shuffle(&mut rng);
        Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
    }
}

/// Paths of one IDX image/label pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxPair {
    pub images: PathBuf,
    pub labels: PathBuf,
}

impl IdxPair {
    /// Standard file names under `dir` for the `train` or `t10k` prefix.
    pub fn in_dir(dir: impl AsRef<Path>, prefix: &str) -> Self {
        let dir = dir.as_ref();
        Self {
            images: dir.join(format!("{prefix}-images-idx3-ubyte")),
            labels: dir.join(format!("{prefix}-labels-idx1-ubyte")),
        }
    }

    pub fn exists(&self) -> bool {
        self.images.is_file() && self.labels.is_file()
    }

    pub fn load(&self) -> Result<Vec<ImageSample>> {
        load_idx(&self.images, &self.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(fill: u8, label: u8) -> ImageSample {
        ImageSample::new(vec![fill; IMAGE_PIXELS], label).unwrap()
    }

    #[test]
    fn encode_threshold_boundary() {
        let grid = TimeGrid::default();
        let mut px = vec![0u8; IMAGE_PIXELS];
        px[0] = 128;
        px[1] = 127;
        px[2] = 255;
        let r = encode_threshold(&ImageSample::new(px, 3).unwrap(), grid);
        assert_eq!(r.row(0), &[1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(r.train(1).spike_count(), 0);
        assert_eq!(r.total_spikes(), 2);
        assert_eq!(encode_threshold(&sample(0, 0), grid).total_spikes(), 0);
        assert_eq!(encode_threshold(&sample(0, 0), grid).neurons(), 784);
    }

    #[test]
    fn sample_validation() {
        assert!(ImageSample::new(vec![0; 783], 1).is_err());
        assert!(ImageSample::new(vec![0; 784], 10).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let split = Split::new(60000, &SplitSpec::default()).unwrap();
        assert_eq!((split.train.len(), split.val.len()), (48000, 12000));
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..60000).collect::<Vec<_>>());

        let desk = Split::new(60000, &SplitSpec { limit: Some(10000), ..SplitSpec::default() }).unwrap();
        assert_eq!((desk.train.len(), desk.val.len()), (8000, 2000));
    }

    #[test]
    fn batches() {
        let split = Split::new(125, &SplitSpec::default()).unwrap();
        assert_eq!(split.train.len(), 100);
        let b = split.epoch_batches(0, 32).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![32, 32, 32, 4]);
        assert_eq!(b, split.epoch_batches(0, 32).unwrap());
        assert_ne!(b, split.epoch_batches(1, 32).unwrap());
        assert!(split.epoch_batches(0, 0).is_err());
        assert!(Split::new(0, &SplitSpec::default()).is_err());
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<ImageSample> = (0..5u8)
            .map(|n| ImageSample::new((0..784).map(|i| ((i * 7 + n as usize * 31) % 256) as u8).collect(), n * 2).unwrap())
            .collect();
        let (img, lbl) = (dir.path().join("img"), dir.path().join("lbl"));
        write_idx(&samples, &img, &lbl).unwrap();
        assert_eq!(load_idx(&img, &lbl).unwrap(), samples);

        // labels passed where images are expected and vice versa
        let err = load_idx(&img, &img).unwrap_err();
        assert!(matches!(&err, SnnError::Ingestion { path, offset: 0, .. } if path == &img), "{err}");

        let bytes = fs::read(&img).unwrap();
        let short = dir.path().join("short");
        fs::write(&short, &bytes[..bytes.len() - 10]).unwrap();
        let err = load_idx(&short, &lbl).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 3920 bytes, found 3910"), "{msg}");

        let fewer = dir.path().join("fewer");
        write_idx(&samples[..4], dir.path().join("unused"), &fewer).unwrap();
        assert!(load_idx(&img, &fewer).is_err());

        assert!(matches!(load_idx(dir.path().join("missing"), &lbl), Err(SnnError::Io { .. })));
    }
}
