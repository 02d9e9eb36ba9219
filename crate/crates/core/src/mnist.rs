//! IDX image files and the memorizing max-correlation demonstration: a
//! function that records every training image spikes on almost all test
//! digits and rarely on noise, yet its size rules it out as a regularity.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::distributions::{PointSource, UniformNull};
use crate::error::{Error, Result};
use crate::geometry::DataSpace;
use crate::spiking::CorrelationIndex;
use crate::stats::{self, SpikeCounts};

/// Magic number of an unsigned-byte, three-dimensional IDX file.
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const SIDE: usize = 28;
const HEADER: usize = 16;

/// Images scaled to `[0, 1]`, one flattened row-major image per row.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxDataset {
    pub images: Array2<f64>,
}

impl IdxDataset {
    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.images.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    /// The first `k` images.
    pub fn head(&self, k: usize) -> IdxDataset {
        IdxDataset {
            images: self.images.slice(s![..k.min(self.len()), ..]).to_owned(),
        }
    }
}

/// Parses a 28x28 image IDX file.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxDataset> {
    if bytes.len() < HEADER {
        return Err(Error::IdxTruncated {
            expected: HEADER,
            actual: bytes.len(),
        });
    }
    let mut header = &bytes[..HEADER];
    let mut next = || header.read_u32::<BigEndian>().expect("header length checked");
    let magic = next();
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx {
            offset: 0,
            message: format!("bad magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"),
        });
    }
    let count = next() as usize;
    let (rows, cols) = (next() as usize, next() as usize);
    if rows != SIDE || cols != SIDE {
        return Err(Error::Idx {
            offset: 8,
            message: format!("image shape {rows}x{cols}, expected {SIDE}x{SIDE}"),
        });
    }
    let dim = rows * cols;
    let expected = HEADER + count * dim;
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            expected,
            actual: bytes.len(),
        });
    }
    let pixels = bytes[HEADER..expected].iter().map(|&b| f64::from(b) / 255.0).collect();
    let images = Array2::from_shape_vec((count, dim), pixels).expect("shape matches pixel count");
    Ok(IdxDataset { images })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxDataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_idx(&bytes)
}

/// Writes raw 28x28 byte images, `pixels.len()` being a multiple of 784.
pub fn write_idx(path: impl AsRef<Path>, pixels: &[u8]) -> Result<()> {
    let dim = SIDE * SIDE;
    if pixels.len() % dim != 0 {
        return Err(Error::InvalidConfig(format!(
            "{} pixels is not a whole number of {SIDE}x{SIDE} images",
            pixels.len()
        )));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_u32::<BigEndian>(IMAGE_MAGIC)?;
    out.write_u32::<BigEndian>((pixels.len() / dim) as u32)?;
    out.write_u32::<BigEndian>(SIDE as u32)?;
    out.write_u32::<BigEndian>(SIDE as u32)?;
    out.write_all(pixels)?;
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub threshold: f64,
    pub noise_seed: u64,
    /// Use only the first `k` training images.
    pub subsample: Option<usize>,
    pub tau1: f64,
    pub tau2: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            threshold: 0.15,
            noise_seed: 0,
            subsample: None,
            tau1: 2.0,
            tau2: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    #[serde(rename = "M")]
    pub data_spikes: u64,
    #[serde(rename = "M_prime")]
    pub random_spikes: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub z: f64,
    pub size: u64,
    pub train_used: usize,
    pub verdict: bool,
}

/// Counts spikes of `max corr(X, train) - threshold` on the test images and
/// on as many independent uniform-noise images.
pub fn run_demo(train: &IdxDataset, test: &IdxDataset, cfg: &DemoConfig) -> Result<DemoReport> {
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold {} outside (0, 1)", cfg.threshold)));
    }
    let used = cfg.subsample.map_or(train.head(train.len()), |k| train.head(k));
    if used.is_empty() {
        return Err(Error::EmptyReferences);
    }
    if test.is_empty() {
        return Err(Error::InvalidConfig("test set is empty".into()));
    }
    if used.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: used.dim(),
            got: test.dim(),
        });
    }
    let dim = used.dim();
    let train_used = used.len();
    let index = Arc::new(CorrelationIndex::from_rows(used.images)?);

    let n = test.len();
    let unit = UniformNull::new(DataSpace::new(vec![0.0; dim], vec![1.0; dim])?);
    let noise = unit.sample(n, cfg.noise_seed)?;
    let noise = Array2::from_shape_vec((n, dim), noise.as_slice().to_vec()).expect("n x dim samples");

    let spikes = |q: &Array2<f64>| {
        index
            .max_correlation_batch(q)
            .into_iter()
            .filter(|&c| c - cfg.threshold > 0.0)
            .count() as u64
    };
    let counts = SpikeCounts::new(spikes(&test.images), spikes(&noise), n as u64)?;
    let z = stats::z_score(counts)?;
    let size = (dim * train_used) as u64;
    Ok(DemoReport {
        data_spikes: counts.data,
        random_spikes: counts.random,
        n: counts.n,
        z,
        size,
        train_used,
        verdict: stats::learns_regularities(z, size, cfg.tau1, cfg.tau2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digitish(k: usize, count: usize) -> Vec<u8> {
        // vertical bars at shifting columns
        let mut px = vec![0u8; count * SIDE * SIDE];
        for i in 0..count {
            let c = 4 + (i + k) % 20;
            for r in 4..24 {
                for w in 0..3 {
                    px[i * SIDE * SIDE + r * SIDE + c + w] = 255;
                }
            }
        }
        px
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.idx");
        let px = digitish(0, 3);
        write_idx(&p, &px).unwrap();
        let d = load_idx(&p).unwrap();
        assert_eq!((d.len(), d.dim()), (3, 784));
        assert_eq!(d.images[[0, 4 * SIDE + 4]], 1.0);
        assert_eq!(d.images[[0, 0]], 0.0);

        let bytes = std::fs::read(&p).unwrap();
        match parse_idx(&bytes[..bytes.len() - 10]) {
            Err(Error::IdxTruncated { expected, actual }) => {
                assert_eq!(expected, 16 + 3 * 784);
                assert_eq!(actual, expected - 10);
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut bad = bytes.clone();
        bad[3] = 0x01;
        assert!(matches!(parse_idx(&bad), Err(Error::Idx { offset: 0, .. })));
        assert!(matches!(parse_idx(&bytes[..7]), Err(Error::IdxTruncated { .. })));
    }

    fn dataset(px: &[u8]) -> IdxDataset {
        let n = px.len() / 784;
        IdxDataset {
            images: Array2::from_shape_vec((n, 784), px.iter().map(|&b| f64::from(b) / 255.0).collect()).unwrap(),
        }
    }

    #[test]
    fn self_correlation_spikes() {
        let one = dataset(&digitish(3, 1));
        let r = run_demo(&one, &one, &DemoConfig::default()).unwrap();
        assert_eq!(r.data_spikes, 1);
        assert_eq!(r.size, 784);
    }

    #[test]
    fn memorizer_is_significant_but_not_concise() {
        let train = dataset(&digitish(0, 40));
        let test = dataset(&digitish(7, 200));
        let r = run_demo(&train, &test, &DemoConfig::default()).unwrap();
        assert_eq!(r.data_spikes, 200);
        assert!(r.random_spikes < 20);
        assert!(r.z > 10.0);
        assert_eq!(r.size, 40 * 784);
        // 1/31360 clears 1e-6 but not 1e-4
        assert!(r.verdict);
        let strict = DemoConfig {
            tau2: 1e-4,
            ..Default::default()
        };
        assert!(!run_demo(&train, &test, &strict).unwrap().verdict);
        let empty = DemoConfig {
            subsample: Some(0),
            ..Default::default()
        };
        assert!(matches!(run_demo(&train, &test, &empty), Err(Error::EmptyReferences)));
    }
}
