//! Ranking declared candidate encoders and pruning functions that carry no
//! information.

use serde::{Deserialize, Serialize};

use crate::distributions::{DataDistribution, UniformNull};
use crate::error::{Error, Result};
use crate::sequence::{
    draw_streams, evaluate_on_samples, evaluate_sequence, EfficiencyReport, EvalMode, EvalOptions,
    FunctionSequence,
};

/// Default equivalence tolerance on `SE_f` in expected mode.
pub const EXPECTED_TOL: f64 = 1e-3;
/// Default equivalence tolerance on `SE_f` in Monte Carlo mode.
pub const MC_TOL: f64 = 1e-2;

pub fn default_tol(mode: &EvalMode) -> f64 {
    match mode {
        EvalMode::Expected { .. } => EXPECTED_TOL,
        EvalMode::MonteCarlo { .. } => MC_TOL,
    }
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub name: String,
    pub sequence: FunctionSequence,
}

/// Named candidate sequences bound to one scene.
#[derive(Clone, Debug)]
pub struct CandidateSet<'a> {
    pub candidates: Vec<Candidate>,
    pub dist: &'a DataDistribution,
    pub null: &'a UniformNull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub name: String,
    /// Position in the declared candidate list.
    pub input_index: usize,
    /// Spiking-equivalence bucket, 0 being the most efficient.
    pub bucket: usize,
    pub report: EfficiencyReport,
}

/// Evaluates every candidate and orders them: buckets of spiking-equivalent
/// sequences by descending `SE_f`, then descending `A_f` inside a bucket,
/// then smaller total size, then declaration order.
///
/// Monte Carlo candidates all see the same data and uniform streams.
pub fn rank_candidates(set: &CandidateSet<'_>, opts: &EvalOptions, tol: f64) -> Result<Vec<RankedCandidate>> {
    if set.candidates.is_empty() {
        return Err(Error::InvalidConfig("candidate set is empty".into()));
    }
    let reports: Vec<EfficiencyReport> = match opts.mode {
        EvalMode::Expected { .. } => set
            .candidates
            .iter()
            .map(|c| evaluate_sequence(&c.sequence, set.dist, set.null, opts))
            .collect::<Result<_>>()?,
        EvalMode::MonteCarlo { n, seed } => {
            let (data, random) = draw_streams(set.dist, set.null, n, seed)?;
            set.candidates
                .iter()
                .map(|c| evaluate_on_samples(&c.sequence, &data, &random, opts))
                .collect::<Result<_>>()?
        }
    };
    Ok(order_reports(
        set.candidates.iter().map(|c| c.name.clone()).zip(reports).collect(),
        tol,
    ))
}

/// Orders already evaluated candidates.
pub fn order_reports(named: Vec<(String, EfficiencyReport)>, tol: f64) -> Vec<RankedCandidate> {
    let mut by_se: Vec<usize> = (0..named.len()).collect();
    by_se.sort_by(|&a, &b| {
        named[b].1.total.se.total_cmp(&named[a].1.total.se).then(a.cmp(&b))
    });

    // greedy buckets anchored at the most efficient remaining candidate
    let mut bucket_of = vec![0usize; named.len()];
    let mut bucket = 0;
    let mut anchor = f64::NAN;
    for (pos, &i) in by_se.iter().enumerate() {
        let se = named[i].1.total.se;
        if pos == 0 {
            anchor = se;
        } else if anchor - se > tol {
            bucket += 1;
            anchor = se;
        }
        bucket_of[i] = bucket;
    }

    let mut order: Vec<usize> = (0..named.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&named[a].1, &named[b].1);
        bucket_of[a]
            .cmp(&bucket_of[b])
            .then(rb.total.ability.total_cmp(&ra.total.ability))
            .then(ra.total.size.cmp(&rb.total.size))
            .then(a.cmp(&b))
    });

    let mut named: Vec<Option<(String, EfficiencyReport)>> = named.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|i| {
            let (name, report) = named[i].take().expect("each index used once");
            RankedCandidate {
                name,
                input_index: i,
                bucket: bucket_of[i],
                report,
            }
        })
        .collect()
}

/// Drops functions whose masked efficiency is at most `eps`, keeping order.
pub fn prune_zero_se(seq: &FunctionSequence, report: &EfficiencyReport, eps: f64) -> Result<FunctionSequence> {
    if report.functions.len() != seq.len() {
        return Err(Error::InvalidConfig(format!(
            "report covers {} functions, sequence has {}",
            report.functions.len(),
            seq.len()
        )));
    }
    seq.filtered(|k| report.functions[k].se > eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ComponentSpec;
    use crate::geometry::{DataSpace, Region};
    use crate::spiking::SpikingFunction;

    fn scene() -> (DataDistribution, UniformNull) {
        let space = DataSpace::new([0.0, 0.0], [7.0, 4.0]).unwrap();
        let dist = DataDistribution::new(
            space.clone(),
            vec![
                ComponentSpec {
                    region: Region::ball([2.0, 2.0], 1.0),
                    weight: 1.0,
                },
                ComponentSpec {
                    region: Region::ball([5.0, 2.0], 1.0),
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        (dist, UniformNull::new(space))
    }

    fn ind(r: Region) -> SpikingFunction {
        SpikingFunction::indicator(r)
    }

    #[test]
    fn prune_removes_empty_and_duplicate() {
        let (dist, null) = scene();
        let left = Region::ball([2.0, 2.0], 1.0);
        let seq = FunctionSequence::new(vec![ind(left.clone()), ind(left.clone()), ind(Region::ball([5.0, 2.0], 1.0))]).unwrap();
        let r = evaluate_sequence(&seq, &dist, &null, &EvalOptions::expected(10_000)).unwrap();
        assert_eq!(r.functions[1].data_spikes, 0);
        let pruned = prune_zero_se(&seq, &r, 1e-9).unwrap();
        assert_eq!(pruned.len(), 2);
        let again = evaluate_sequence(&pruned, &dist, &null, &EvalOptions::expected(10_000)).unwrap();
        assert!((again.total.se - r.total.se).abs() <= 1e-9 * 3.0);
        assert!(again.total.ability >= r.total.ability);

        let b = FunctionSequence::new(vec![ind(left), ind(Region::ball([5.0, 2.0], 1.0))]).unwrap();
        let rb = evaluate_sequence(&b, &dist, &null, &EvalOptions::expected(10_000)).unwrap();
        assert_eq!(prune_zero_se(&b, &rb, 1e-9).unwrap().len(), 2);
    }

    #[test]
    fn prune_everything_is_an_error() {
        let (dist, null) = scene();
        let nowhere = FunctionSequence::new(vec![ind(Region::ball([6.5, 3.5], 0.0))]).unwrap();
        let r = evaluate_sequence(&nowhere, &dist, &null, &EvalOptions::expected(1000)).unwrap();
        assert!(matches!(prune_zero_se(&nowhere, &r, 1e-9), Err(Error::EmptySequence)));
    }

    #[test]
    fn ranking_prefers_ability_within_bucket_and_se_across() {
        let (dist, null) = scene();
        let l = Region::ball([2.0, 2.0], 1.0);
        let r = Region::ball([5.0, 2.0], 1.0);
        let set = CandidateSet {
            candidates: vec![
                Candidate {
                    name: "joint".into(),
                    sequence: FunctionSequence::new(vec![ind(Region::union([l.clone(), r.clone()]))]).unwrap(),
                },
                Candidate {
                    name: "left-only".into(),
                    sequence: FunctionSequence::new(vec![ind(l.clone())]).unwrap(),
                },
                Candidate {
                    name: "split".into(),
                    sequence: FunctionSequence::new(vec![ind(l), ind(r)]).unwrap(),
                },
            ],
            dist: &dist,
            null: &null,
        };
        let ranked = rank_candidates(&set, &EvalOptions::expected(10_000), EXPECTED_TOL).unwrap();
        let names: Vec<&str> = ranked.iter().map(|c| c.name.as_str()).collect();
        // left-only has the best ability per parameter but lower SE
        assert_eq!(names, vec!["split", "joint", "left-only"]);
        assert_eq!(ranked[2].bucket, 1);
        let again = rank_candidates(&set, &EvalOptions::monte_carlo(20_000, 4), MC_TOL).unwrap();
        assert_eq!(again[0].name, "split");
    }
}
