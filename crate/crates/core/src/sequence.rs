//! Ordered sequences of spiking functions evaluated with first-spike
//! masking: a sample counts for `f_k` only if no earlier function spikes on it.
//!
//! Two evaluation modes share one report type. Monte Carlo mode draws `N`
//! data and `N` uniform samples and tallies them. Expected mode replaces the
//! tallies by rounded `N * probability` values computed from exact masses:
//! each function's count is `round(N p(independent region)) - round(N p(overlap
//! with earlier regions))`, and sequence totals are rounded from the union of
//! all spiking regions directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DataDistribution, PointSource, Samples, UniformNull};
use crate::error::{Error, Result};
use crate::geometry::{measure, DataSpace, Region};
use crate::spiking::{ContourConfig, SpikingFunction};
use crate::stats::{self, LeveledCounts, SpikeCounts};

#[derive(Clone, Debug)]
pub struct FunctionSequence {
    functions: Vec<SpikingFunction>,
}

impl FunctionSequence {
    pub fn new(functions: Vec<SpikingFunction>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(FunctionSequence { functions })
    }

    pub fn functions(&self) -> &[SpikingFunction] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn total_size(&self) -> u64 {
        self.functions.iter().map(SpikingFunction::declared_size).sum()
    }

    /// The sequence reordered by `order` (a permutation of `0..len`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &i in order {
            if i >= self.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidConfig("not a permutation".into()));
            }
        }
        if order.len() != self.len() {
            return Err(Error::InvalidConfig("not a permutation".into()));
        }
        Ok(FunctionSequence {
            functions: order.iter().map(|&i| self.functions[i].clone()).collect(),
        })
    }

    /// Keeps the functions whose index satisfies `keep`.
    pub fn filtered(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        FunctionSequence::new(
            self.functions
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, f)| f.clone())
                .collect(),
        )
    }

    /// Index of the first function spiking on `x`.
    #[inline]
    pub fn first_spike(&self, x: &[f64]) -> Option<usize> {
        self.functions.iter().position(|f| f.spikes(x))
    }

    /// First function reaching a non-negative level, with that level.
    #[inline]
    pub fn first_level(&self, x: &[f64], contour: &ContourConfig) -> Option<(usize, usize)> {
        self.functions.iter().enumerate().find_map(|(k, f)| {
            let l = f.spike_level(x, contour);
            (l >= 0).then_some((k, l as usize))
        })
    }

    /// Independent spiking regions `S^ind_{f_k}` (`None` when a function never spikes).
    pub fn independent_regions(&self, space: &DataSpace) -> Result<Vec<Option<Region>>> {
        self.functions
            .iter()
            .map(|f| selected_region(f, space, |v| v > 0.0))
            .collect()
    }

    /// Masked spiking regions `S_{f_k} = S^ind_{f_k} \ U_{i<k} S^ind_{f_i}`.
    pub fn masked_regions(&self, space: &DataSpace) -> Result<Vec<Option<Region>>> {
        let ind = self.independent_regions(space)?;
        Ok((0..ind.len())
            .map(|k| {
                let own = ind[k].clone()?;
                let earlier: Vec<Region> = ind[..k].iter().flatten().cloned().collect();
                Some(if earlier.is_empty() {
                    own
                } else {
                    Region::difference(own, Region::union(earlier))
                })
            })
            .collect())
    }

    /// Spiking region of the whole sequence.
    pub fn union_region(&self, space: &DataSpace) -> Result<Option<Region>> {
        let ind: Vec<Region> = self.independent_regions(space)?.into_iter().flatten().collect();
        Ok(match ind.len() {
            0 => None,
            1 => ind.into_iter().next(),
            _ => Some(Region::union(ind)),
        })
    }
}

/// Region where an indicator's value satisfies `pick`; errors for other kinds.
fn selected_region(
    f: &SpikingFunction,
    space: &DataSpace,
    pick: impl Fn(f64) -> bool,
) -> Result<Option<Region>> {
    let pieces = f.pieces(space).ok_or_else(|| {
        Error::Unsupported("expected-count mode needs region-indicator functions".into())
    })?;
    let (inside, outside) = (pick(pieces[0].1), pick(pieces[1].1));
    Ok(match (inside, outside) {
        (true, true) => Some(Region::axis_box(space.lower.clone(), space.upper.clone())),
        (true, false) => Some(pieces[0].0.clone()),
        (false, true) => Some(pieces[1].0.clone()),
        (false, false) => None,
    })
}

/// Per-function sample attribution under first-spike masking.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub per_function: Vec<u64>,
    pub unattributed: u64,
}

impl Attribution {
    pub fn attributed(&self) -> u64 {
        self.per_function.iter().sum()
    }
}

const PAR_BLOCK: usize = 4096;

/// Assigns every sample to the first function that spikes on it.
pub fn attribute_spikes(seq: &FunctionSequence, samples: &Samples) -> Attribution {
    let k = seq.len();
    let counts = samples
        .as_slice()
        .par_chunks(PAR_BLOCK * samples.dim())
        .map(|block| {
            let mut c = vec![0u64; k + 1];
            for x in block.chunks_exact(samples.dim()) {
                c[seq.first_spike(x).unwrap_or(k)] += 1;
            }
            c
        })
        .reduce(|| vec![0u64; k + 1], add_counts);
    let unattributed = counts[k];
    let out = Attribution {
        per_function: counts[..k].to_vec(),
        unattributed,
    };
    debug_assert_eq!(out.attributed() + out.unattributed, samples.len() as u64);
    out
}

/// Per-function, per-level attribution. Row `k` holds levels `0..=L` of `f_k`.
fn attribute_levels(seq: &FunctionSequence, samples: &Samples, contour: &ContourConfig) -> Vec<Vec<u64>> {
    let k = seq.len();
    let levels = contour.top_level as usize + 1;
    let flat = samples
        .as_slice()
        .par_chunks(PAR_BLOCK * samples.dim())
        .map(|block| {
            let mut c = vec![0u64; k * levels];
            for x in block.chunks_exact(samples.dim()) {
                if let Some((f, l)) = seq.first_level(x, contour) {
                    c[f * levels + l] += 1;
                }
            }
            c
        })
        .reduce(|| vec![0u64; k * levels], add_counts);
    flat.chunks(levels).map(<[u64]>::to_vec).collect()
}

fn add_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    a
}

/// Expected counts per function and for the whole sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub per_function: Vec<SpikeCounts>,
    pub total: SpikeCounts,
}

/// `round(N * x)`, half away from zero.
fn round_count(n: u64, x: f64) -> u64 {
    (n as f64 * x).round().max(0.0) as u64
}

/// Exact mass under `P` and under the uniform null of a region.
fn probabilities(region: &Region, dist: &DataDistribution, null: &UniformNull) -> Result<(f64, f64)> {
    let space = null.space();
    let p = dist.mass(region)?;
    let q = measure(region, space, dist.mc())?.value / space.measure();
    Ok((p, q))
}

/// Counts of one function piece after removing overlap with earlier regions.
fn masked_piece_counts(
    piece: &Region,
    earlier: &[Region],
    dist: &DataDistribution,
    null: &UniformNull,
    n: u64,
) -> Result<(u64, u64)> {
    let (p, q) = probabilities(piece, dist, null)?;
    let (mut m, mut mp) = (round_count(n, p), round_count(n, q));
    let touching: Vec<Region> = match piece.bounds() {
        Some(b) => earlier
            .iter()
            .filter(|r| r.bounds().map_or(true, |rb| !rb.disjoint(&b)))
            .cloned()
            .collect(),
        None => earlier.to_vec(),
    };
    if !touching.is_empty() {
        let overlap = Region::intersection([piece.clone(), Region::union(touching)]);
        let (po, qo) = probabilities(&overlap, dist, null)?;
        m -= round_count(n, po).min(m);
        mp -= round_count(n, qo).min(mp);
    }
    Ok((m, mp))
}

fn check_space(dist: &DataDistribution, null: &UniformNull) -> Result<()> {
    if dist.space() != null.space() {
        return Err(Error::InvalidConfig("data and null distributions live on different spaces".into()));
    }
    Ok(())
}

/// Expected-count tallies of a sequence of region indicators.
pub fn expected_counts(
    seq: &FunctionSequence,
    dist: &DataDistribution,
    null: &UniformNull,
    n: u64,
) -> Result<ExpectedCounts> {
    check_space(dist, null)?;
    if n == 0 {
        return Err(Error::InvalidCounts("N must be positive".into()));
    }
    let space = null.space();
    let ind = seq.independent_regions(space)?;
    let mut per_function = Vec::with_capacity(ind.len());
    for k in 0..ind.len() {
        let (data, random) = match &ind[k] {
            Some(region) => {
                let earlier: Vec<Region> = ind[..k].iter().flatten().cloned().collect();
                masked_piece_counts(region, &earlier, dist, null, n)?
            }
            None => (0, 0),
        };
        per_function.push(SpikeCounts { data, random, n });
    }
    let total = match seq.union_region(space)? {
        Some(u) => {
            let (p, q) = probabilities(&u, dist, null)?;
            SpikeCounts {
                data: round_count(n, p),
                random: round_count(n, q),
                n,
            }
        }
        None => SpikeCounts { data: 0, random: 0, n },
    };
    Ok(ExpectedCounts { per_function, total })
}

/// Expected leveled counts. Returns per-function rows and the sequence total.
fn expected_leveled(
    seq: &FunctionSequence,
    dist: &DataDistribution,
    null: &UniformNull,
    n: u64,
    contour: &ContourConfig,
) -> Result<(Vec<LeveledCounts>, LeveledCounts)> {
    check_space(dist, null)?;
    let space = null.space();
    let levels = contour.top_level as usize + 1;
    let ind = seq.independent_regions(space)?;
    // pieces[k][l]: where f_k sits exactly at level l
    let mut pieces: Vec<Vec<Option<Region>>> = Vec::with_capacity(seq.len());
    for f in seq.functions() {
        let row = (0..levels)
            .map(|l| selected_region(f, space, |v| contour.level(v) == l as i32))
            .collect::<Result<Vec<_>>>()?;
        pieces.push(row);
    }

    let mut rows = Vec::with_capacity(seq.len());
    for k in 0..seq.len() {
        let earlier: Vec<Region> = ind[..k].iter().flatten().cloned().collect();
        let mut data = vec![0u64; levels + 1];
        let mut random = vec![0u64; levels + 1];
        for l in 0..levels {
            if let Some(piece) = &pieces[k][l] {
                let (m, mp) = masked_piece_counts(piece, &earlier, dist, null, n)?;
                data[l + 1] = m;
                random[l + 1] = mp;
            }
        }
        finish_levels(&mut data, &mut random, n);
        rows.push(LeveledCounts { data, random, n });
    }

    let mut data = vec![0u64; levels + 1];
    let mut random = vec![0u64; levels + 1];
    for l in 0..levels {
        // when every spiking function sits wholly at level l the level region
        // is the plain union, which keeps L = 0 identical to the simple theory
        let whole = (0..seq.len()).all(|k| pieces[k][l] == ind[k] || ind[k].is_none());
        let region = if whole {
            seq.union_region(space)?
        } else {
            let parts: Vec<Region> = (0..seq.len())
                .filter_map(|k| {
                    let piece = pieces[k][l].clone()?;
                    let earlier: Vec<Region> = ind[..k].iter().flatten().cloned().collect();
                    Some(if earlier.is_empty() {
                        piece
                    } else {
                        Region::difference(piece, Region::union(earlier))
                    })
                })
                .collect();
            (!parts.is_empty()).then(|| Region::union(parts))
        };
        if let Some(r) = region {
            let (p, q) = probabilities(&r, dist, null)?;
            data[l + 1] = round_count(n, p);
            random[l + 1] = round_count(n, q);
        }
    }
    finish_levels(&mut data, &mut random, n);
    Ok((rows, LeveledCounts { data, random, n }))
}

/// Fills level -1 with the remainder, trimming rounding overshoot from the top.
fn finish_levels(data: &mut [u64], random: &mut [u64], n: u64) {
    for v in [data, random] {
        let mut spiking: u64 = v[1..].iter().sum();
        let mut i = v.len() - 1;
        while spiking > n && i >= 1 {
            let cut = (spiking - n).min(v[i]);
            v[i] -= cut;
            spiking -= cut;
            i -= 1;
        }
        v[0] = n - spiking;
    }
}

/// How counts are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EvalMode {
    Expected { n: u64 },
    MonteCarlo { n: u64, seed: u64 },
}

impl EvalMode {
    pub fn n(&self) -> u64 {
        match *self {
            EvalMode::Expected { n } | EvalMode::MonteCarlo { n, .. } => n,
        }
    }

    pub fn same_kind(&self, other: &EvalMode) -> bool {
        matches!(
            (self, other),
            (EvalMode::Expected { .. }, EvalMode::Expected { .. })
                | (EvalMode::MonteCarlo { .. }, EvalMode::MonteCarlo { .. })
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub alpha: f64,
    pub contour: Option<ContourConfig>,
}

impl EvalOptions {
    pub fn expected(n: u64) -> Self {
        EvalOptions {
            mode: EvalMode::Expected { n },
            alpha: stats::DEFAULT_ALPHA,
            contour: None,
        }
    }

    pub fn monte_carlo(n: u64, seed: u64) -> Self {
        EvalOptions {
            mode: EvalMode::MonteCarlo { n, seed },
            alpha: stats::DEFAULT_ALPHA,
            contour: None,
        }
    }

    pub fn with_contour(mut self, contour: ContourConfig) -> Self {
        self.contour = Some(contour);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionReport {
    pub data_spikes: u64,
    pub random_spikes: u64,
    pub se: f64,
    pub size: u64,
    pub conciseness: f64,
    pub ability: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub leveled: Option<LeveledCounts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalReport {
    pub data_spikes: u64,
    pub random_spikes: u64,
    pub se: f64,
    pub ability: f64,
    pub size: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub leveled: Option<LeveledCounts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub mode: EvalMode,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contour: Option<ContourConfig>,
    pub functions: Vec<FunctionReport>,
    pub total: TotalReport,
}

impl EfficiencyReport {
    pub fn n(&self) -> u64 {
        self.mode.n()
    }

    /// CSV with one row per function and a final totals row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("function,M,M_prime,N,SE,size,conciseness,ability\n");
        for (k, f) in self.functions.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{},{:.6},{:.6}\n",
                k + 1,
                f.data_spikes,
                f.random_spikes,
                self.n(),
                f.se,
                f.size,
                f.conciseness,
                f.ability
            ));
        }
        let t = &self.total;
        out.push_str(&format!(
            "total,{},{},{},{:.6},{},{:.6},{:.6}\n",
            t.data_spikes,
            t.random_spikes,
            self.n(),
            t.se,
            t.size,
            1.0 / t.size as f64,
            t.ability
        ));
        out
    }
}

fn simple_report(
    seq: &FunctionSequence,
    per_function: &[SpikeCounts],
    total: SpikeCounts,
    opts: &EvalOptions,
) -> Result<EfficiencyReport> {
    let mut functions = Vec::with_capacity(seq.len());
    for (f, c) in seq.functions().iter().zip(per_function) {
        let se = stats::observed_se(*c, opts.alpha);
        functions.push(FunctionReport {
            data_spikes: c.data,
            random_spikes: c.random,
            se,
            size: f.declared_size(),
            conciseness: f.conciseness(),
            ability: stats::ability(se, f.declared_size())?,
            leveled: None,
        });
    }
    let ability = functions.iter().map(|f| f.ability).sum();
    Ok(EfficiencyReport {
        mode: opts.mode,
        alpha: opts.alpha,
        contour: None,
        total: TotalReport {
            data_spikes: total.data,
            random_spikes: total.random,
            se: stats::observed_se(total, opts.alpha),
            ability,
            size: seq.total_size(),
            leveled: None,
        },
        functions,
    })
}

fn leveled_report(
    seq: &FunctionSequence,
    rows: Vec<LeveledCounts>,
    total: LeveledCounts,
    opts: &EvalOptions,
    contour: ContourConfig,
) -> Result<EfficiencyReport> {
    let mut functions = Vec::with_capacity(seq.len());
    for (f, c) in seq.functions().iter().zip(rows) {
        let se = stats::observed_se_leveled(&c, opts.alpha);
        let collapsed = c.collapsed();
        functions.push(FunctionReport {
            data_spikes: collapsed.data,
            random_spikes: collapsed.random,
            se,
            size: f.declared_size(),
            conciseness: f.conciseness(),
            ability: stats::ability(se, f.declared_size())?,
            leveled: Some(c),
        });
    }
    let ability = functions.iter().map(|f| f.ability).sum();
    let collapsed = total.collapsed();
    Ok(EfficiencyReport {
        mode: opts.mode,
        alpha: opts.alpha,
        contour: Some(contour),
        total: TotalReport {
            data_spikes: collapsed.data,
            random_spikes: collapsed.random,
            se: stats::observed_se_leveled(&total, opts.alpha),
            ability,
            size: seq.total_size(),
            leveled: Some(total),
        },
        functions,
    })
}

/// Seed of the uniform stream paired with data seed `seed`.
pub fn null_seed(seed: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws the data and uniform sample streams used by Monte Carlo mode.
pub fn draw_streams(dist: &DataDistribution, null: &UniformNull, n: u64, seed: u64) -> Result<(Samples, Samples)> {
    check_space(dist, null)?;
    let data = dist.sample(n as usize, seed)?;
    let random = null.sample(n as usize, null_seed(seed))?;
    Ok((data, random))
}

/// Evaluates a sequence on given data and uniform samples of equal size.
pub fn evaluate_on_samples(
    seq: &FunctionSequence,
    data: &Samples,
    random: &Samples,
    opts: &EvalOptions,
) -> Result<EfficiencyReport> {
    if data.len() != random.len() || data.is_empty() {
        return Err(Error::InvalidCounts(format!(
            "data and random streams must be non-empty and equal in size ({} vs {})",
            data.len(),
            random.len()
        )));
    }
    let n = data.len() as u64;
    match opts.contour {
        None => {
            let a = attribute_spikes(seq, data);
            let b = attribute_spikes(seq, random);
            let per: Vec<SpikeCounts> = a
                .per_function
                .iter()
                .zip(&b.per_function)
                .map(|(&m, &mp)| SpikeCounts { data: m, random: mp, n })
                .collect();
            let total = SpikeCounts {
                data: a.attributed(),
                random: b.attributed(),
                n,
            };
            simple_report(seq, &per, total, opts)
        }
        Some(contour) => {
            let a = attribute_levels(seq, data, &contour);
            let b = attribute_levels(seq, random, &contour);
            let levels = contour.top_level as usize + 1;
            let mut rows = Vec::with_capacity(seq.len());
            let mut td = vec![0u64; levels + 1];
            let mut tr = vec![0u64; levels + 1];
            for (ra, rb) in a.iter().zip(&b) {
                let mut d = vec![0u64; levels + 1];
                let mut r = vec![0u64; levels + 1];
                d[1..].copy_from_slice(ra);
                r[1..].copy_from_slice(rb);
                for l in 1..=levels {
                    td[l] += d[l];
                    tr[l] += r[l];
                }
                finish_levels(&mut d, &mut r, n);
                rows.push(LeveledCounts { data: d, random: r, n });
            }
            finish_levels(&mut td, &mut tr, n);
            leveled_report(seq, rows, LeveledCounts { data: td, random: tr, n }, opts, contour)
        }
    }
}

/// Full efficiency report of a sequence under `P` and the uniform null.
pub fn evaluate_sequence(
    seq: &FunctionSequence,
    dist: &DataDistribution,
    null: &UniformNull,
    opts: &EvalOptions,
) -> Result<EfficiencyReport> {
    if let Some(c) = &opts.contour {
        c.validate()?;
    }
    match opts.mode {
        EvalMode::Expected { n } => match opts.contour {
            None => {
                let counts = expected_counts(seq, dist, null, n)?;
                simple_report(seq, &counts.per_function, counts.total, opts)
            }
            Some(contour) => {
                let (rows, total) = expected_leveled(seq, dist, null, n, &contour)?;
                leveled_report(seq, rows, total, opts, contour)
            }
        },
        EvalMode::MonteCarlo { n, seed } => {
            let (data, random) = draw_streams(dist, null, n, seed)?;
            evaluate_on_samples(seq, &data, &random, opts)
        }
    }
}

/// Contour evaluation; identical to `evaluate_sequence` with the contour set.
pub fn evaluate_sequence_contour(
    seq: &FunctionSequence,
    dist: &DataDistribution,
    null: &UniformNull,
    contour: ContourConfig,
    opts: &EvalOptions,
) -> Result<EfficiencyReport> {
    evaluate_sequence(seq, dist, null, &opts.with_contour(contour))
}

/// Spiking equivalence: equal sequence efficiencies within `tol`.
pub fn spiking_equivalent(a: &EfficiencyReport, b: &EfficiencyReport, tol: f64) -> Result<bool> {
    if !a.mode.same_kind(&b.mode) || a.n() != b.n() || a.contour != b.contour {
        return Err(Error::ModeMismatch(format!("{:?} vs {:?}", a.mode, b.mode)));
    }
    Ok((a.total.se - b.total.se).abs() <= tol)
}

/// Theoretical efficiencies `(SE_{f_k} for each k, SE_f)` from exact masses.
pub fn theoretical_efficiencies(seq: &FunctionSequence, dist: &DataDistribution) -> Result<(Vec<f64>, f64)> {
    let space = dist.space();
    let per = seq
        .masked_regions(space)?
        .iter()
        .map(|r| match r {
            Some(r) => stats::theoretical_se(dist, r),
            None => Ok(0.0),
        })
        .collect::<Result<Vec<_>>>()?;
    let total = match seq.union_region(space)? {
        Some(u) => stats::theoretical_se(dist, &u)?,
        None => 0.0,
    };
    Ok((per, total))
}
