//! Two-headed functions and the learning objective built on them.
//!
//! The first head is the spiking function being learned and is counted with
//! first-spike masking. The second head is anchored to a frozen set of
//! uniform samples: every fixed sample it spikes on stands for `m` memorized
//! coordinates, which are charged against the first head's size, while its
//! spikes on fresh data or fresh random samples are penalized by `lambda`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DataDistribution, PointSource, Samples, UniformNull};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::sequence::null_seed;
use crate::stats::{self, SpikeCounts};

/// A function `S -> (-1, 1)^2`.
pub trait BiOutput: Send + Sync {
    fn eval(&self, x: &[f64]) -> (f64, f64);
    /// Parameter count `|F_k|` of the whole function.
    fn total_size(&self) -> u64;
}

/// Heads built from region indicators squashed by `tanh(gain * (+-1))`.
/// A missing second-head region never spikes.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricBiOutput {
    pub first: Region,
    pub second: Option<Region>,
    pub gain: f64,
    pub size: u64,
}

impl GeometricBiOutput {
    pub fn new(first: Region, second: Option<Region>, size: Option<u64>) -> Result<Self> {
        let size = size.unwrap_or_else(|| {
            first.default_size() + second.as_ref().map_or(0, Region::default_size)
        });
        if size < 1 {
            return Err(Error::InvalidSize(size));
        }
        Ok(GeometricBiOutput {
            first,
            second,
            gain: 2.0,
            size,
        })
    }
}

impl BiOutput for GeometricBiOutput {
    fn eval(&self, x: &[f64]) -> (f64, f64) {
        let head = |r: Option<&Region>| {
            let s = if r.is_some_and(|r| r.contains_unchecked(x)) { 1.0 } else { -1.0 };
            (self.gain * s).tanh()
        };
        (head(Some(&self.first)), head(self.second.as_ref()))
    }

    fn total_size(&self) -> u64 {
        self.size
    }
}

/// Uniform samples drawn once and frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedRandomSet {
    samples: Samples,
    seed: u64,
}

impl FixedRandomSet {
    pub const DEFAULT_LEN: usize = 10_000;

    pub fn draw(null: &UniformNull, len: usize, seed: u64) -> Result<Self> {
        Ok(FixedRandomSet {
            samples: null.sample(len, seed)?,
            seed,
        })
    }

    pub fn from_samples(samples: Samples, seed: u64) -> Self {
        FixedRandomSet { samples, seed }
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadCounts {
    /// `M_{k,1}`: data samples where the first head spikes and no earlier first head does.
    pub first_data: u64,
    /// `M'_{k,1}`: the same on random samples.
    pub first_random: u64,
    /// `M_{k,2}`: unmasked second-head spikes on data.
    pub second_data: u64,
    /// `M'_{k,2}`: unmasked second-head spikes on random samples.
    pub second_random: u64,
    /// `L'_k`: second-head spikes on the fixed set.
    pub second_fixed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiOutputCounts {
    pub per_function: Vec<HeadCounts>,
    pub n: u64,
    pub fixed_len: u64,
}

impl BiOutputCounts {
    /// Sequence-level first-head counts `(M_f, M'_f)`.
    pub fn first_head_total(&self) -> SpikeCounts {
        SpikeCounts {
            data: self.per_function.iter().map(|c| c.first_data).sum(),
            random: self.per_function.iter().map(|c| c.first_random).sum(),
            n: self.n,
        }
    }
}

fn check_dim(fixed: &Samples, data: &Samples, random: &Samples) -> Result<()> {
    for s in [data, random] {
        if s.dim() != fixed.dim() {
            return Err(Error::DimensionMismatch {
                expected: fixed.dim(),
                got: s.dim(),
            });
        }
    }
    Ok(())
}

/// First-head tallies with masking and second-head tallies without.
fn tally(fns: &[&dyn BiOutput], samples: &Samples, masked_first: bool) -> Vec<[u64; 2]> {
    let k = fns.len();
    samples
        .as_slice()
        .par_chunks(4096 * samples.dim())
        .map(|block| {
            let mut c = vec![[0u64; 2]; k];
            for x in block.chunks_exact(samples.dim()) {
                let mut claimed = false;
                for (j, f) in fns.iter().enumerate() {
                    let (y1, y2) = f.eval(x);
                    if masked_first && !claimed && y1 > 0.0 {
                        c[j][0] += 1;
                        claimed = true;
                    }
                    if y2 > 0.0 {
                        c[j][1] += 1;
                    }
                }
            }
            c
        })
        .reduce(
            || vec![[0u64; 2]; k],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x[0] += y[0];
                    x[1] += y[1];
                }
                a
            },
        )
}

/// Counts both heads of an ordered list of bi-output functions.
pub fn count_bioutput(
    fns: &[&dyn BiOutput],
    data: &Samples,
    random: &Samples,
    fixed: &FixedRandomSet,
) -> Result<BiOutputCounts> {
    check_dim(fixed.samples(), data, random)?;
    if data.len() != random.len() {
        return Err(Error::InvalidCounts("data and random streams differ in size".into()));
    }
    let d = tally(fns, data, true);
    let r = tally(fns, random, true);
    let f = tally(fns, fixed.samples(), false);
    let per_function = (0..fns.len())
        .map(|k| HeadCounts {
            first_data: d[k][0],
            first_random: r[k][0],
            second_data: d[k][1],
            second_random: r[k][1],
            second_fixed: f[k][1],
        })
        .collect();
    Ok(BiOutputCounts {
        per_function,
        n: data.len() as u64,
        fixed_len: fixed.len() as u64,
    })
}

/// Effective size of the first head,
/// `|F_k| - m (L'_k - lambda (M_{k,2} + M'_{k,2}))`, floored at 1.
pub fn estimate_first_head_size(
    total_size: u64,
    dim: usize,
    fixed_hits: u64,
    second_data: u64,
    second_random: u64,
    lambda: f64,
) -> f64 {
    let recorded = fixed_hits as f64 - lambda * (second_data + second_random) as f64;
    (total_size as f64 - dim as f64 * recorded).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Penalty on second-head spikes outside the fixed set; well above 1.
    pub lambda: f64,
    pub alpha: f64,
    /// Dimension `m` of the data space.
    pub dim: usize,
    /// When false, first-head sizes are the full `|F_k|`.
    #[serde(default = "default_true")]
    pub estimate_sizes: bool,
}

fn default_true() -> bool {
    true
}

impl ObjectiveConfig {
    pub fn new(dim: usize) -> Self {
        ObjectiveConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda: 50.0,
            alpha: stats::DEFAULT_ALPHA,
            dim,
            estimate_sizes: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 1.0) || self.lambda1 < 0.0 || self.lambda2 < 0.0 || !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig(
                "need lambda > 1, lambda1, lambda2 >= 0 and alpha > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Objective `lambda1 SE(M_f, M'_f, N) + lambda2 sum_k SE(M_{k,1}, M'_{k,1}, N) / size_k`.
pub fn objective(counts: &BiOutputCounts, sizes: &[u64], cfg: &ObjectiveConfig) -> Result<f64> {
    if sizes.len() != counts.per_function.len() {
        return Err(Error::InvalidConfig(format!(
            "{} sizes for {} functions",
            sizes.len(),
            counts.per_function.len()
        )));
    }
    let whole = stats::observed_se(counts.first_head_total(), cfg.alpha);
    let mut per = 0.0;
    for (c, &size) in counts.per_function.iter().zip(sizes) {
        let se = stats::observed_se(
            SpikeCounts {
                data: c.first_data,
                random: c.first_random,
                n: counts.n,
            },
            cfg.alpha,
        );
        let eff = if cfg.estimate_sizes {
            estimate_first_head_size(size, cfg.dim, c.second_fixed, c.second_data, c.second_random, cfg.lambda)
        } else {
            size.max(1) as f64
        };
        per += se / eff;
    }
    Ok(cfg.lambda1 * whole + cfg.lambda2 * per)
}

/// Frozen sample streams an objective is evaluated on.
#[derive(Clone, Debug)]
pub struct ObjectiveScene {
    pub data: Samples,
    pub random: Samples,
    pub fixed: FixedRandomSet,
}

impl ObjectiveScene {
    /// Draws `n` data, `n` fresh uniform and `fixed_len` fixed uniform samples.
    pub fn draw(dist: &DataDistribution, null: &UniformNull, n: usize, fixed_len: usize, seed: u64) -> Result<Self> {
        Ok(ObjectiveScene {
            data: dist.sample(n, seed)?,
            random: null.sample(n, null_seed(seed))?,
            fixed: FixedRandomSet::draw(null, fixed_len, null_seed(null_seed(seed)))?,
        })
    }

    pub fn evaluate(&self, fns: &[&dyn BiOutput], cfg: &ObjectiveConfig) -> Result<(f64, BiOutputCounts)> {
        let counts = count_bioutput(fns, &self.data, &self.random, &self.fixed)?;
        let sizes: Vec<u64> = fns.iter().map(|f| f.total_size()).collect();
        Ok((objective(&counts, &sizes, cfg)?, counts))
    }
}

/// A family of bi-output sequences indexed by a real parameter vector.
pub trait ParametricFamily: Sync {
    fn initial(&self) -> Vec<f64>;
    /// Standard deviation of the Gaussian perturbation per parameter.
    fn step_scales(&self) -> Vec<f64>;
    fn build(&self, params: &[f64]) -> Result<Vec<Box<dyn BiOutput>>>;
}

/// `K` planar balls, one per function, each parameterized by `(x, y, r)`.
/// Second heads never spike.
#[derive(Clone, Debug)]
pub struct BallFamily {
    pub initial: Vec<[f64; 3]>,
    pub step: f64,
}

impl ParametricFamily for BallFamily {
    fn initial(&self) -> Vec<f64> {
        self.initial.iter().flatten().copied().collect()
    }

    fn step_scales(&self) -> Vec<f64> {
        vec![self.step; 3 * self.initial.len()]
    }

    fn build(&self, params: &[f64]) -> Result<Vec<Box<dyn BiOutput>>> {
        params
            .chunks_exact(3)
            .map(|p| {
                let f = GeometricBiOutput::new(Region::ball([p[0], p[1]], p[2].abs()), None, None)?;
                Ok(Box::new(f) as Box<dyn BiOutput>)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_params: Vec<f64>,
    pub best_objective: f64,
    /// Best objective after each step; entry 0 is the starting point.
    pub trace: Vec<f64>,
}

/// Baseline hill climbing with seeded Gaussian perturbations; a proposal is
/// kept when it does not lower the objective.
pub fn random_search(
    family: &dyn ParametricFamily,
    scene: &ObjectiveScene,
    cfg: &ObjectiveConfig,
    budget: usize,
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::ZeroBudget);
    }
    cfg.validate()?;
    let eval = |params: &[f64]| -> Result<f64> {
        let fns = family.build(params)?;
        let refs: Vec<&dyn BiOutput> = fns.iter().map(|b| b.as_ref()).collect();
        Ok(scene.evaluate(&refs, cfg)?.0)
    };
    let scales = family.step_scales();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut best = family.initial();
    let mut best_obj = eval(&best)?;
    let mut trace = Vec::with_capacity(budget + 1);
    trace.push(best_obj);
    for _ in 0..budget {
        let proposal: Vec<f64> = best
            .iter()
            .zip(&scales)
            .map(|(p, s)| p + s * normal.sample(&mut rng))
            .collect();
        let obj = eval(&proposal)?;
        if obj >= best_obj {
            best = proposal;
            best_obj = obj;
        }
        trace.push(best_obj);
    }
    Ok(SearchResult {
        best_params: best,
        best_objective: best_obj,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(points: &[[f64; 2]]) -> Samples {
        Samples::from_points(2, &points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn size_estimate_values() {
        assert_eq!(estimate_first_head_size(1000, 2, 100, 0, 0, 50.0), 800.0);
        assert_eq!(estimate_first_head_size(1000, 2, 0, 0, 0, 50.0), 1000.0);
        assert_eq!(estimate_first_head_size(10, 2, 100, 0, 0, 50.0), 1.0);
        // second-head spikes off the fixed set give size back
        assert_eq!(estimate_first_head_size(1000, 2, 100, 1, 1, 50.0), 1000.0);
    }

    #[test]
    fn single_function_tally() {
        let data = samples(&[[1.0, 1.0], [1.2, 0.9], [0.8, 1.1]]);
        let random = samples(&[[5.0, 5.0], [6.0, 6.0], [7.0, 7.0]]);
        let fixed = FixedRandomSet::from_samples(samples(&[[9.0, 9.0]]), 0);
        let f = GeometricBiOutput::new(Region::ball([1.0, 1.0], 0.5), None, None).unwrap();
        let c = count_bioutput(&[&f], &data, &random, &fixed).unwrap();
        assert_eq!(
            c.per_function[0],
            HeadCounts {
                first_data: 3,
                ..Default::default()
            }
        );
        let g = f.clone();
        let c = count_bioutput(&[&f, &g], &data, &random, &fixed).unwrap();
        assert_eq!(c.per_function[1].first_data, 0);
    }

    #[test]
    fn second_head_on_fixed_samples() {
        let null = UniformNull::new(crate::geometry::DataSpace::new([0.0, 0.0], [10.0, 10.0]).unwrap());
        let fixed = FixedRandomSet::draw(&null, 1000, 11).unwrap();
        let anchors: Vec<Region> = (0..3).map(|i| Region::ball(fixed.samples().get(i).to_vec(), 1e-6)).collect();
        let f = GeometricBiOutput::new(Region::ball([5.0, 5.0], 1.0), Some(Region::union(anchors)), None).unwrap();
        let data = null.sample(2000, 1).unwrap();
        let random = null.sample(2000, 2).unwrap();
        let c = count_bioutput(&[&f], &data, &random, &fixed).unwrap();
        assert_eq!(c.per_function[0].second_fixed, 3);
        assert_eq!(c.per_function[0].second_data, 0);
        assert_eq!(c.per_function[0].second_random, 0);
    }

    #[test]
    fn objective_values() {
        let cfg = ObjectiveConfig::new(2);
        let zero = BiOutputCounts {
            per_function: vec![HeadCounts::default()],
            n: 10_000,
            fixed_len: 10_000,
        };
        assert_eq!(objective(&zero, &[6], &cfg).unwrap(), 0.0);

        let a = BiOutputCounts {
            per_function: vec![HeadCounts {
                first_data: 10_000,
                first_random: 2244,
                ..Default::default()
            }],
            n: 10_000,
            fixed_len: 10_000,
        };
        let se = stats::observed_se(SpikeCounts { data: 10_000, random: 2244, n: 10_000 }, stats::DEFAULT_ALPHA);
        let o = objective(&a, &[6], &cfg).unwrap();
        assert!((o - (se + se / 6.0)).abs() < 1e-12);
        assert!((o - 1.7433).abs() < 2e-3);

        let doubled = objective(&a, &[6], &ObjectiveConfig { lambda1: 2.0, ..cfg }).unwrap();
        assert!((doubled - o - se).abs() < 1e-12);
    }

    #[test]
    fn search_rejects_zero_budget_and_is_deterministic() {
        let space = crate::geometry::DataSpace::new([0.0, 0.0], [7.0, 4.0]).unwrap();
        let dist = DataDistribution::new(
            space.clone(),
            vec![crate::distributions::ComponentSpec {
                region: Region::ball([2.0, 2.0], 1.0),
                weight: 1.0,
            }],
        )
        .unwrap();
        let null = UniformNull::new(space);
        let scene = ObjectiveScene::draw(&dist, &null, 1000, 500, 3).unwrap();
        let fam = BallFamily {
            initial: vec![[3.0, 2.0, 0.5]],
            step: 0.2,
        };
        let cfg = ObjectiveConfig::new(2);
        assert!(matches!(random_search(&fam, &scene, &cfg, 0, 1), Err(Error::ZeroBudget)));
        let a = random_search(&fam, &scene, &cfg, 50, 1).unwrap();
        let b = random_search(&fam, &scene, &cfg, 50, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), 51);
        assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
