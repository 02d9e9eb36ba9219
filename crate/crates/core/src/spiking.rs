//! Spiking functions: real-valued maps on the data space that "spike" where
//! they are strictly positive, each carrying a declared parameter count.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DataSpace, Region};

/// Centered, unit-norm copies of a reference set, so Pearson correlation
/// reduces to a dot product.
#[derive(Clone, Debug)]
pub struct CorrelationIndex {
    refs: Array2<f64>,
}

/// Centers `x` and scales it to unit norm. A constant vector maps to zeros,
/// so its correlation with anything is 0.
pub fn standardize(x: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let mut c = x.mapv(|v| v - mean);
    let norm = c.dot(&c).sqrt();
    if norm > 0.0 && norm.is_finite() {
        c /= norm;
    } else {
        c.fill(0.0);
    }
    c
}

/// Pearson correlation with the zero-variance guard.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let a = standardize(ArrayView1::from(a));
    let b = standardize(ArrayView1::from(b));
    a.dot(&b)
}

impl CorrelationIndex {
    pub fn new(references: &[Vec<f64>]) -> Result<Self> {
        let dim = references.first().ok_or(Error::EmptyReferences)?.len();
        let mut refs = Array2::zeros((references.len(), dim));
        for (mut row, r) in refs.axis_iter_mut(Axis(0)).zip(references) {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            row.assign(&standardize(ArrayView1::from(r.as_slice())));
        }
        Ok(CorrelationIndex { refs })
    }

    /// Builds from a row-major matrix, one reference per row.
    pub fn from_rows(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::EmptyReferences);
        }
        let mut refs = rows;
        for mut row in refs.axis_iter_mut(Axis(0)) {
            let s = standardize(row.view());
            row.assign(&s);
        }
        Ok(CorrelationIndex { refs })
    }

    pub fn len(&self) -> usize {
        self.refs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.refs.ncols()
    }

    pub fn max_correlation(&self, x: &[f64]) -> f64 {
        let q = standardize(ArrayView1::from(x));
        self.refs.dot(&q).fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Maximum correlation of each query row against all references,
    /// computed block-wise as a matrix product.
    pub fn max_correlation_batch(&self, queries: &Array2<f64>) -> Vec<f64> {
        use rayon::prelude::*;
        const BLOCK: usize = 256;
        let rows: Vec<usize> = (0..queries.nrows()).step_by(BLOCK).collect();
        rows.par_iter()
            .flat_map_iter(|&start| {
                let end = (start + BLOCK).min(queries.nrows());
                let mut block = queries.slice(ndarray::s![start..end, ..]).to_owned();
                for mut row in block.axis_iter_mut(Axis(0)) {
                    let s = standardize(row.view());
                    row.assign(&s);
                }
                let corr = block.dot(&self.refs.t());
                corr.axis_iter(Axis(0))
                    .map(|r| r.fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FunctionKind {
    /// `inside` on the region, `outside` elsewhere.
    Indicator {
        region: Region,
        inside: f64,
        outside: f64,
    },
    /// Maximum correlation against a reference set, minus `threshold`.
    MaxCorrelation {
        index: Arc<CorrelationIndex>,
        threshold: f64,
    },
    Custom { tag: String, func: CustomFn },
}

impl fmt::Debug for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionKind::Indicator {
                region,
                inside,
                outside,
            } => f
                .debug_struct("Indicator")
                .field("region", region)
                .field("inside", inside)
                .field("outside", outside)
                .finish(),
            FunctionKind::MaxCorrelation { index, threshold } => f
                .debug_struct("MaxCorrelation")
                .field("references", &index.len())
                .field("threshold", threshold)
                .finish(),
            FunctionKind::Custom { tag, .. } => f.debug_struct("Custom").field("tag", tag).finish(),
        }
    }
}

/// A spiking function with its declared size `|f| >= 1`.
#[derive(Clone, Debug)]
pub struct SpikingFunction {
    kind: FunctionKind,
    size: u64,
}

impl SpikingFunction {
    /// 0/1 indicator sized by the region's parameter count.
    pub fn indicator(region: Region) -> Self {
        let size = region.default_size().max(1);
        SpikingFunction {
            kind: FunctionKind::Indicator {
                region,
                inside: 1.0,
                outside: 0.0,
            },
            size,
        }
    }

    pub fn scaled_indicator(region: Region, inside: f64, outside: f64) -> Self {
        let size = region.default_size().max(1);
        SpikingFunction {
            kind: FunctionKind::Indicator {
                region,
                inside,
                outside,
            },
            size,
        }
    }

    /// Size is `dim * |references|`: every reference coordinate is a parameter.
    pub fn max_correlation(index: Arc<CorrelationIndex>, threshold: f64) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::EmptyReferences);
        }
        let size = (index.dim() * index.len()) as u64;
        Ok(SpikingFunction {
            kind: FunctionKind::MaxCorrelation { index, threshold },
            size,
        })
    }

    pub fn custom(tag: impl Into<String>, size: u64, func: CustomFn) -> Result<Self> {
        if size < 1 {
            return Err(Error::InvalidSize(size));
        }
        Ok(SpikingFunction {
            kind: FunctionKind::Custom {
                tag: tag.into(),
                func,
            },
            size,
        })
    }

    /// Overrides the declared size.
    pub fn with_size(mut self, size: u64) -> Result<Self> {
        if size < 1 {
            return Err(Error::InvalidSize(size));
        }
        self.size = size;
        Ok(self)
    }

    pub fn kind(&self) -> &FunctionKind {
        &self.kind
    }

    pub fn declared_size(&self) -> u64 {
        self.size
    }

    /// Conciseness `C_f = 1/|f|`.
    pub fn conciseness(&self) -> f64 {
        1.0 / self.size as f64
    }

    pub fn region(&self) -> Option<&Region> {
        match &self.kind {
            FunctionKind::Indicator { region, .. } => Some(region),
            _ => None,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match &self.kind {
            FunctionKind::Indicator {
                region,
                inside,
                outside,
            } => {
                if region.contains_unchecked(x) {
                    *inside
                } else {
                    *outside
                }
            }
            FunctionKind::MaxCorrelation { index, threshold } => index.max_correlation(x) - threshold,
            FunctionKind::Custom { func, .. } => func(x),
        }
    }

    /// `evaluate` with a dimension check against `space`.
    pub fn evaluate_in(&self, space: &DataSpace, x: &[f64]) -> Result<f64> {
        space.check_point(x)?;
        if let FunctionKind::MaxCorrelation { index, .. } = &self.kind {
            if index.dim() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: index.dim(),
                    got: x.len(),
                });
            }
        }
        Ok(self.evaluate(x))
    }

    /// A spike is `f(x) > 0`.
    pub fn spikes(&self, x: &[f64]) -> bool {
        self.evaluate(x) > 0.0
    }

    pub fn spike_level(&self, x: &[f64], contour: &ContourConfig) -> i32 {
        contour.level(self.evaluate(x))
    }

    /// Regions where the function takes each constant value, for indicators.
    /// Returns `(region, value)` pairs; the outside piece is relative to `space`.
    pub(crate) fn pieces(&self, space: &DataSpace) -> Option<Vec<(Region, f64)>> {
        match &self.kind {
            FunctionKind::Indicator {
                region,
                inside,
                outside,
            } => {
                let all = Region::axis_box(space.lower.clone(), space.upper.clone());
                Some(vec![
                    (region.clone(), *inside),
                    (Region::difference(all, region.clone()), *outside),
                ])
            }
            _ => None,
        }
    }
}

/// Contour grid `kappa > 0` and top level `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourConfig {
    pub grid: f64,
    pub top_level: u32,
}

impl ContourConfig {
    pub fn new(grid: f64, top_level: u32) -> Result<Self> {
        let c = ContourConfig { grid, top_level };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid.is_finite() && self.grid > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "contour grid must be positive, got {}",
                self.grid
            )));
        }
        Ok(())
    }

    /// Level of a function value: -1 for `v <= 0`, `l` for
    /// `l*kappa < v <= (l+1)*kappa`, capped at `L`.
    pub fn level(&self, v: f64) -> i32 {
        if v.is_nan() || v <= 0.0 {
            return -1;
        }
        let l = (v / self.grid).ceil() - 1.0;
        if l >= self.top_level as f64 {
            self.top_level as i32
        } else {
            l.max(0.0) as i32
        }
    }

    /// Number of levels including -1.
    pub fn levels(&self) -> usize {
        self.top_level as usize + 2
    }
}
