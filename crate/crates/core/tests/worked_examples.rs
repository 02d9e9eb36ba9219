use spikelab::scene::{bundled, golden_rows, parse_scene, BoundScene};
use spikelab::search::EXPECTED_TOL;
use spikelab::sequence::{EfficiencyReport, EvalOptions};
use spikelab::stats::{observed_se, SpikeCounts, DEFAULT_ALPHA};

fn scene(name: &str) -> BoundScene {
    parse_scene(bundled(name).unwrap().as_bytes()).unwrap().bind(None).unwrap()
}

fn expected(s: &BoundScene, cand: &str) -> EfficiencyReport {
    s.evaluate(cand, &s.eval.options()).unwrap()
}

fn counts(r: &EfficiencyReport) -> Vec<(u64, u64)> {
    r.functions.iter().map(|f| (f.data_spikes, f.random_spikes)).collect()
}

#[test]
fn golden_abilities() {
    for row in golden_rows().unwrap() {
        let s = scene(&row.scene);
        let got = row.quantity.of(&expected(&s, &row.candidate));
        assert!(
            (got - row.value).abs() <= row.tol,
            "{} {} {:?}: {got} vs {}",
            row.scene,
            row.candidate,
            row.quantity,
            row.value
        );
    }
}

#[test]
fn two_circle_counts() {
    let s = scene("two_circles");
    let a = expected(&s, "a");
    assert_eq!((a.total.data_spikes, a.total.random_spikes), (10_000, 2244));
    assert_eq!(counts(&expected(&s, "b")), vec![(5000, 1122); 2]);
    assert_eq!(counts(&expected(&s, "c")), vec![(2500, 561); 4]);
    assert_eq!(counts(&expected(&s, "d")), vec![(1250, 280); 8]);
    assert_eq!(counts(&expected(&s, "e")), vec![(7500, 1683), (2500, 561)]);
    assert_eq!(
        counts(&expected(&s, "f")),
        vec![(1250, 280), (3750, 842), (2500, 561), (2500, 561)]
    );
    let sizes: Vec<u64> = expected(&s, "e").functions.iter().map(|f| f.size).collect();
    assert_eq!(sizes, vec![7, 3]);
    let sizes: Vec<u64> = expected(&s, "d").functions.iter().map(|f| f.size).collect();
    assert_eq!(sizes, vec![5; 8]);
}

#[test]
fn diamond_counts() {
    let s = scene("diamonds");
    let a = expected(&s, "a");
    assert_eq!((a.total.data_spikes, a.total.random_spikes), (4200, 980));
    assert_eq!(a.functions[0].size, 8);
    for c in ["b", "c"] {
        assert_eq!(counts(&expected(&s, c)), vec![(2400, 560), (1800, 420)]);
    }
    assert_eq!(expected(&s, "c").functions[1].size, 8);
}

#[test]
fn square_and_concentric_counts() {
    let s = scene("squares");
    let single = expected(&s, "single");
    assert_eq!((single.total.data_spikes, single.total.random_spikes), (11_200, 1500));
    assert_eq!(single.total.size, 45);
    assert_eq!(counts(&expected(&s, "per_square")), vec![(747, 100); 15]);

    let c = scene("concentric");
    let outer = expected(&c, "outer");
    assert_eq!((outer.total.data_spikes, outer.total.random_spikes), (10_000, 1963));
    assert_eq!(counts(&expected(&c, "inner_outer")), vec![(6250, 491), (3750, 1472)]);
}

#[test]
fn winners() {
    let want = [
        ("two_circles", "b"),
        ("diamonds", "b"),
        ("squares", "per_square"),
        ("concentric", "outer"),
    ];
    for (name, winner) in want {
        let s = scene(name);
        let ranked = s.rank(&s.eval.options(), EXPECTED_TOL).unwrap();
        assert_eq!(ranked[0].name, winner, "{name}");
    }
}

#[test]
fn expected_se_tracks_theory() {
    for (name, _) in spikelab::scene::BUNDLED {
        let s = scene(name);
        for c in &s.candidates {
            let r = expected(&s, &c.name);
            let (_, theory) = spikelab::sequence::theoretical_efficiencies(&c.sequence, &s.dist).unwrap();
            assert!((r.total.se - theory).abs() < 1e-3, "{name} {}: {} vs {theory}", c.name, r.total.se);
        }
    }
}

#[test]
fn contour_level_zero_is_simple_mode() {
    let c0 = spikelab::spiking::ContourConfig::new(1.0, 0).unwrap();
    for (name, _) in spikelab::scene::BUNDLED {
        let s = scene(name);
        for c in &s.candidates {
            let simple = expected(&s, &c.name);
            let lev = s.evaluate(&c.name, &s.eval.options().with_contour(c0)).unwrap();
            assert_eq!(lev.total.se.to_bits(), simple.total.se.to_bits(), "{name} {}", c.name);
            assert_eq!(lev.total.ability.to_bits(), simple.total.ability.to_bits());
        }
    }
}

#[test]
fn mc_close_to_expected() {
    let s = scene("two_circles");
    let mc = s.evaluate("b", &EvalOptions::monte_carlo(200_000, 7)).unwrap();
    let exp = expected(&s, "b");
    assert!((mc.total.ability - exp.total.ability).abs() < 0.01);
    let direct = observed_se(SpikeCounts::new(5000, 1122, 10_000).unwrap(), DEFAULT_ALPHA);
    assert!((exp.functions[0].se - direct).abs() < 1e-12);
}
