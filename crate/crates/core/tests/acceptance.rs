//! Acceptance run: one PASS/FAIL/SKIP line per criterion, non-zero exit on
//! any FAIL. MNIST checks run only when `MNIST_DIR` holds the IDX files.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikelab::bioutput::{estimate_first_head_size, objective, BiOutputCounts, HeadCounts, ObjectiveConfig};
use spikelab::mnist::{load_idx, run_demo, DemoConfig};
use spikelab::scene::{bundled, golden_rows, parse_scene, BoundScene, BUNDLED};
use spikelab::search::EXPECTED_TOL;
use spikelab::sequence::{
    attribute_spikes, draw_streams, evaluate_on_samples, evaluate_sequence, EfficiencyReport, EvalOptions,
};
use spikelab::spiking::ContourConfig;
use spikelab::stats::{observed_se, se_upper_bound, z_score, SpikeCounts, DEFAULT_ALPHA};

const MC_N: u64 = 1_000_000;
const MC_SEEDS: u64 = 10;
const MC_TOL: f64 = 0.01;
const MC_BUDGET: Duration = Duration::from_secs(60);
const GOLDEN_BUDGET: Duration = Duration::from_secs(10);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn scene(name: &str) -> BoundScene {
    parse_scene(bundled(name).expect("bundled scene").as_bytes())
        .and_then(|s| s.bind(None))
        .expect("bundled scene binds")
}

fn expected(s: &BoundScene, cand: &str) -> EfficiencyReport {
    s.evaluate(cand, &s.eval.options()).expect("expected-mode evaluation")
}

fn golden() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    let rows = golden_rows().expect("golden table");
    for r in &rows {
        let got = r.quantity.of(&expected(&scene(&r.scene), &r.candidate));
        if (got - r.value).abs() > r.tol {
            bad.push(format!("{}/{} {:?} {got:.4} vs {}", r.scene, r.candidate, r.quantity, r.value));
        }
    }
    let t = start.elapsed();
    if bad.is_empty() && t < GOLDEN_BUDGET {
        Outcome::Pass(format!("{} golden values within tolerance in {:.2?}", rows.len(), t))
    } else {
        Outcome::Fail(format!("{} mismatches ({}), {:.2?}", bad.len(), bad.join("; "), t))
    }
}

fn printed_counts() -> Outcome {
    let circles = scene("two_circles");
    let diamonds = scene("diamonds");
    let squares = scene("squares");
    let conc = scene("concentric");
    let mut seen = Vec::new();
    let mut push = |r: &EfficiencyReport| {
        seen.push(r.total.random_spikes);
        for f in &r.functions {
            seen.push(f.data_spikes);
            seen.push(f.random_spikes);
        }
    };
    for c in ["a", "c", "d", "e", "f"] {
        push(&expected(&circles, c));
    }
    for c in ["a", "b"] {
        push(&expected(&diamonds, c));
    }
    for c in ["single", "per_square"] {
        push(&expected(&squares, c));
    }
    for c in ["outer", "inner_outer"] {
        push(&expected(&conc, c));
    }
    let want = [2244u64, 561, 280, 1683, 842, 980, 1500, 747, 100, 1963, 491];
    let missing: Vec<u64> = want.iter().copied().filter(|w| !seen.contains(w)).collect();
    if missing.is_empty() {
        Outcome::Pass(format!("all {} printed counts reproduced", want.len()))
    } else {
        Outcome::Fail(format!("counts not produced: {missing:?}"))
    }
}

fn z_vignettes() -> Outcome {
    let cases = [((100, 5, 1000), 9.5, 0.05), ((1000, 50, 10_000), 30.1, 0.05), ((10_000, 197, 10_000), 138.7, 0.1)];
    let mut parts = Vec::new();
    let mut ok = true;
    for ((m, mp, n), want, tol) in cases {
        let z = z_score(SpikeCounts { data: m, random: mp, n }).expect("non-degenerate");
        ok &= (z - want).abs() <= tol;
        parts.push(format!("{z:.2}"));
    }
    let msg = format!("z = {}", parts.join(", "));
    if ok {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn ranking() -> Outcome {
    let want = [("two_circles", "b"), ("diamonds", "b"), ("squares", "per_square"), ("concentric", "outer")];
    let mut got = Vec::new();
    for (name, winner) in want {
        let s = scene(name);
        let top = s.rank(&s.eval.options(), EXPECTED_TOL).expect("ranking")[0].name.clone();
        got.push((name, winner, top));
    }
    let msg = got.iter().map(|(n, _, t)| format!("{n}:{t}")).collect::<Vec<_>>().join(" ");
    if got.iter().all(|(_, w, t)| w == t) {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn monte_carlo() -> Outcome {
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    let mut bad = Vec::new();
    for (name, _) in BUNDLED {
        let s = scene(name);
        let exp: Vec<f64> = s.candidates.iter().map(|c| expected(&s, &c.name).total.ability).collect();
        let start = Instant::now();
        for seed in 0..MC_SEEDS {
            let opts = EvalOptions::monte_carlo(MC_N, seed);
            // every candidate sees the same two streams
            let (data, random) = draw_streams(&s.dist, &s.null, MC_N, seed).expect("sampling");
            for (c, e) in s.candidates.iter().zip(&exp) {
                let r = evaluate_on_samples(&c.sequence, &data, &random, &opts).expect("mc evaluation");
                let d = (r.total.ability - e).abs();
                worst = worst.max(d);
                if d > MC_TOL {
                    bad.push(format!("{name}/{} seed {seed}: {d:.4}", c.name));
                }
            }
        }
        let t = start.elapsed();
        slowest = slowest.max(t);
        if t > MC_BUDGET {
            bad.push(format!("{name} took {t:.1?}"));
        }
    }
    let msg = format!("max |MC - expected| ability = {worst:.4}, slowest scene {slowest:.1?}");
    if bad.is_empty() {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(format!("{msg}; {}", bad.join("; ")))
    }
}

fn properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut fails = Vec::new();

    let mut gibbs_min = f64::INFINITY;
    let mut anti_max = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=100_000u64);
        let c = SpikeCounts { data: rng.gen_range(0..=n), random: rng.gen_range(0..=n), n };
        gibbs_min = gibbs_min.min(observed_se(c, DEFAULT_ALPHA));
        if let (Ok(a), Ok(b)) = (z_score(c), z_score(SpikeCounts { data: c.random, random: c.data, n })) {
            anti_max = anti_max.max((a + b).abs());
        }
    }
    if gibbs_min < -1e-9 {
        fails.push(format!("observed SE reached {gibbs_min}"));
    }
    if anti_max > 1e-9 {
        fails.push(format!("z antisymmetry off by {anti_max}"));
    }

    let c0 = ContourConfig::new(1.0, 0).expect("contour");
    for (name, _) in BUNDLED {
        let s = scene(name);
        let bound = se_upper_bound(s.dist.omega(), s.dist.space().measure()).expect("bound");
        let (data, random) = draw_streams(&s.dist, &s.null, 20_000, 5).expect("sampling");
        for c in &s.candidates {
            let opts = s.eval.options();
            let r = evaluate_sequence(&c.sequence, &s.dist, &s.null, &opts).expect("eval");
            if r.total.se > bound || r.functions.iter().any(|f| f.se > bound) {
                fails.push(format!("{name}/{} exceeds bound {bound:.4}", c.name));
            }
            let lev = evaluate_sequence(&c.sequence, &s.dist, &s.null, &opts.with_contour(c0)).expect("eval");
            if lev.total.se.to_bits() != r.total.se.to_bits() || lev.total.ability.to_bits() != r.total.ability.to_bits() {
                fails.push(format!("{name}/{} contour L=0 differs", c.name));
            }
            let rev: Vec<usize> = (0..c.sequence.len()).rev().collect();
            let p = evaluate_sequence(&c.sequence.permuted(&rev).expect("perm"), &s.dist, &s.null, &opts).expect("eval");
            if p.total.se != r.total.se {
                fails.push(format!("{name}/{} SE changes under permutation", c.name));
            }
            for samples in [&data, &random] {
                let a = attribute_spikes(&c.sequence, samples);
                let any = samples.iter().filter(|x| c.sequence.first_spike(x).is_some()).count() as u64;
                if a.attributed() != any || a.attributed() + a.unattributed != samples.len() as u64 {
                    fails.push(format!("{name}/{} double attribution", c.name));
                }
            }
        }
    }
    if fails.is_empty() {
        Outcome::Pass(format!(
            "Gibbs (10^4 cases, min {gibbs_min:.2e}), bound, z antisymmetry, L=0 bitwise, masking, permutation"
        ))
    } else {
        Outcome::Fail(fails.join("; "))
    }
}

fn bioutput_objective() -> Outcome {
    let counts = |m, mp| BiOutputCounts {
        per_function: vec![HeadCounts { first_data: m, first_random: mp, ..Default::default() }],
        n: 10_000,
        fixed_len: 10_000,
    };
    let cfg = ObjectiveConfig::new(2);
    let a = counts(10_000, 2244);
    let o = objective(&a, &[6], &cfg).expect("objective");
    let se = observed_se(SpikeCounts { data: 10_000, random: 2244, n: 10_000 }, DEFAULT_ALPHA);
    let l1 = objective(&a, &[6], &ObjectiveConfig { lambda1: 2.0, ..cfg }).expect("objective");
    let l2 = objective(&a, &[6], &ObjectiveConfig { lambda2: 3.0, ..cfg }).expect("objective");
    let linear = (l1 - o - se).abs() < 1e-12 && (l2 - o - 2.0 * se / 6.0).abs() < 1e-12;
    let mono = (0..200u64).all(|l| {
        estimate_first_head_size(1000, 2, l + 1, 0, 0, 50.0) <= estimate_first_head_size(1000, 2, l, 0, 0, 50.0)
            && estimate_first_head_size(1000, 2, l, 1, 0, 50.0) >= estimate_first_head_size(1000, 2, l, 0, 0, 50.0)
    });
    let msg = format!("objective {o:.4}, linear {linear}, size estimate monotone {mono}");
    if (o - 1.7433).abs() <= 0.002 && linear && mono {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn mnist() -> Outcome {
    let Some(dir) = std::env::var_os("MNIST_DIR").map(PathBuf::from) else {
        return Outcome::Skip("set MNIST_DIR to a directory with train-images-idx3-ubyte and t10k-images-idx3-ubyte".into());
    };
    let (train, test) = match (
        load_idx(dir.join("train-images-idx3-ubyte")),
        load_idx(dir.join("t10k-images-idx3-ubyte")),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(format!("cannot load MNIST from {}: {e}", dir.display())),
    };
    let sub = match run_demo(&train, &test, &DemoConfig { subsample: Some(6000), ..Default::default() }) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("subsample run: {e}")),
    };
    let mut msg = format!("subsample: M={} M'={} z={:.1}", sub.data_spikes, sub.random_spikes, sub.z);
    let mut ok = sub.z >= 50.0 && sub.data_spikes >= 9900;
    if std::env::var_os("MNIST_FULL").is_some() {
        match run_demo(&train, &test, &DemoConfig::default()) {
            Ok(r) => {
                msg += &format!(
                    "; full: M={} M'={} z={:.1} size={} verdict={}",
                    r.data_spikes, r.random_spikes, r.z, r.size, r.verdict
                );
                ok &= r.data_spikes >= 9990 && r.z >= 120.0 && r.size == 47_040_000 && !r.verdict;
            }
            Err(e) => return Outcome::Fail(format!("full run: {e}")),
        }
    } else {
        msg += "; full run skipped (set MNIST_FULL=1)";
    }
    if ok {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("golden table", golden),
        ("expected counts", printed_counts),
        ("z-score vignettes", z_vignettes),
        ("ranking winners", ranking),
        ("monte carlo consistency", monte_carlo),
        ("property suite", properties),
        ("bi-output objective", bioutput_objective),
        ("mnist", mnist),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, msg) = match check() {
            Outcome::Pass(m) => ("PASS", m),
            Outcome::Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Outcome::Skip(m) => ("SKIP", m),
        };
        println!("criterion {} [{tag}] {name}: {msg}", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
