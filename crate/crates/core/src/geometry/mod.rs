//! Bounded data spaces, regions and their measure.

mod region;
mod section;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling;

pub use region::{ball_volume, build_region, AxisBox, Ball, Bounds, HalfSpace, Region, RotatedSquare};

/// Axis-aligned bounded data space `S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DataSpace {
    pub fn new(lower: impl Into<Vec<f64>>, upper: impl Into<Vec<f64>>) -> Result<Self> {
        let space = DataSpace {
            lower: lower.into(),
            upper: upper.into(),
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidSpace(format!(
                "corner dimensions {} and {} must match and be positive",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if !self
            .lower
            .iter()
            .zip(&self.upper)
            .all(|(l, u)| l.is_finite() && u.is_finite() && l < u)
        {
            return Err(Error::InvalidSpace("need lower[i] < upper[i], all finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Lebesgue measure `|S|`.
    pub fn measure(&self) -> f64 {
        self.bounds().volume()
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| l <= x && x <= u)
    }

    pub(crate) fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_region(&self, region: &Region) -> Result<()> {
        region.validate("region")?;
        if region.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: region.dim(),
            });
        }
        Ok(())
    }
}

/// Monte Carlo settings for measures with no closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 1_000_000,
            seed: 0,
        }
    }
}

/// How a measure was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurePath {
    /// Closed form.
    Analytic,
    /// Exact planar cross-sections integrated by adaptive Gauss-Kronrod.
    Quadrature,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub value: f64,
    pub path: MeasurePath,
}

impl Measure {
    pub fn is_exact(&self) -> bool {
        !matches!(self.path, MeasurePath::MonteCarlo { .. })
    }
}

const QUADRATURE_TOL: f64 = 1e-11;

/// Lebesgue measure of `region ∩ space`.
///
/// Primitives inside the space, disjoint unions and nested differences of
/// them are measured in closed form. Other planar regions are integrated
/// section by section; anything else needs `mc`.
pub fn measure(region: &Region, space: &DataSpace, mc: Option<&McConfig>) -> Result<Measure> {
    space.check_region(region)?;
    let outer = space.bounds();
    if let Some(value) = analytic(region, &outer) {
        return Ok(Measure {
            value,
            path: MeasurePath::Analytic,
        });
    }
    if space.dim() == 2 {
        let value = section::planar_area(
            region,
            (space.lower[0], space.upper[0]),
            (space.lower[1], space.upper[1]),
            QUADRATURE_TOL * space.measure(),
        );
        return Ok(Measure {
            value: value.clamp(0.0, space.measure()),
            path: MeasurePath::Quadrature,
        });
    }
    match mc {
        Some(cfg) => Ok(Measure {
            value: monte_carlo(region, space, cfg),
            path: MeasurePath::MonteCarlo {
                samples: cfg.samples,
                seed: cfg.seed,
            },
        }),
        None => Err(Error::McRequired),
    }
}

/// Seeded Monte Carlo estimate `|S| * hits / samples`.
pub fn monte_carlo(region: &Region, space: &DataSpace, cfg: &McConfig) -> f64 {
    let bounds = space.bounds();
    let hits: u64 = sampling::map_chunks(cfg.samples as usize, cfg.seed, |rng, _, len| {
        let mut p = vec![0.0; space.dim()];
        let mut hits = 0u64;
        for _ in 0..len {
            sampling::uniform_in(rng, &bounds, &mut p);
            hits += region.contains_unchecked(&p) as u64;
        }
        hits
    })
    .into_iter()
    .sum();
    space.measure() * hits as f64 / cfg.samples.max(1) as f64
}

fn analytic(region: &Region, outer: &Bounds) -> Option<f64> {
    match region {
        Region::Ball(_) | Region::AxisBox(_) | Region::RotatedSquare(_) => {
            let b = region.bounds()?;
            if b.inside(outer) {
                region.primitive_volume()
            } else if b.disjoint(outer) {
                Some(0.0)
            } else {
                None
            }
        }
        Region::HalfSpace(_) => None,
        Region::Union(parts) => {
            if parts.len() == 1 {
                return analytic(&parts[0], outer);
            }
            let bounds: Vec<Bounds> = parts.iter().map(Region::bounds).collect::<Option<_>>()?;
            for i in 0..bounds.len() {
                for j in i + 1..bounds.len() {
                    if !bounds[i].disjoint(&bounds[j]) {
                        return None;
                    }
                }
            }
            parts.iter().map(|p| analytic(p, outer)).sum()
        }
        Region::Intersection(parts) => {
            if parts.len() == 1 {
                return analytic(&parts[0], outer);
            }
            let bounded: Vec<Bounds> = parts.iter().filter_map(Region::bounds).collect();
            let any_disjoint = bounded
                .iter()
                .enumerate()
                .any(|(i, a)| bounded[i + 1..].iter().any(|b| a.disjoint(b)));
            if any_disjoint {
                return Some(0.0);
            }
            // A ∩ B = B when A encloses B
            for (i, inner) in parts.iter().enumerate() {
                if parts
                    .iter()
                    .enumerate()
                    .all(|(j, o)| i == j || o.encloses(inner) || o == inner)
                {
                    return analytic(inner, outer);
                }
            }
            None
        }
        Region::Difference(a, b) => {
            let keep = analytic(a, outer)?;
            match (a.bounds(), b.bounds()) {
                (Some(ab), Some(bb)) if ab.disjoint(&bb) => return Some(keep),
                _ => {}
            }
            if a.encloses(b) || a == b {
                let removed = analytic(b, outer)?;
                return Some((keep - removed).max(0.0));
            }
            None
        }
    }
}
