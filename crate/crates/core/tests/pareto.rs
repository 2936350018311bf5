mod support;

use std::collections::BTreeSet;

use nasprune::pareto::{
    average_ranks, dominates, hypervolume, hypervolume_regret, mid_ranks_descending, nondominated_sort, ArchiveEntry, ObjectiveNormalizer,
    ObjectiveVector, ParetoArchive, QuantileNormalizer, RefPoint,
};
use nasprune::space::{SpaceKind, SubNetConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use support::{brute_force_layers, grid_hypervolume, ks_uniform};

fn ov(a: f64, b: f64) -> ObjectiveVector {
    ObjectiveVector::new(a, b)
}

fn entry(i: usize, p: ObjectiveVector) -> ArchiveEntry {
    ArchiveEntry {
        config: SubNetConfig::new(SpaceKind::Layer, vec![i]),
        objectives: p,
        wallclock_s: i as f64,
        seed: 0,
        fidelity_epochs: None,
    }
}

/// Points on a coarse lattice so that ties and duplicates are common.
fn lattice_points(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.gen_range(0..8) as f64 / 4.0, rng.gen_range(0..8) as f64 / 4.0)).collect()
}

#[test]
fn sort_matches_brute_force_peeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let n = rng.gen_range(1..=50);
        let raw = if rng.gen_bool(0.5) {
            lattice_points(&mut rng, n)
        } else {
            (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect()
        };
        let points: Vec<ObjectiveVector> = raw.iter().map(|&(a, b)| ov(a, b)).collect();
        let fronts: Vec<BTreeSet<usize>> = nondominated_sort(&points).into_iter().map(|f| f.into_iter().collect()).collect();
        let oracle: Vec<BTreeSet<usize>> = brute_force_layers(&raw).into_iter().map(|f| f.into_iter().collect()).collect();
        assert_eq!(fronts, oracle);
    }
}

#[test]
fn small_sort_example() {
    let fronts = nondominated_sort(&[ov(1.0, 2.0), ov(2.0, 1.0), ov(3.0, 3.0)]);
    assert_eq!(fronts, vec![vec![0, 1], vec![2]]);
}

#[test]
fn staircase_hypervolume_matches_grid() {
    let pts = [(0.5, 1.5), (1.0, 1.0), (1.5, 0.5)];
    let exact = hypervolume(&pts.map(|(a, b)| ov(a, b)), RefPoint::default()).unwrap();
    assert!((exact - 1.5).abs() < 1e-12);
    assert!((grid_hypervolume(&pts, (2.0, 2.0), 2000) - exact).abs() < 1e-2);
    assert_eq!(hypervolume(&[ov(0.0, 0.0)], RefPoint::default()).unwrap(), 4.0);
}

#[test]
fn random_fronts_match_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n = rng.gen_range(1..15);
        let raw: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0))).collect();
        let pts: Vec<ObjectiveVector> = raw.iter().map(|&(a, b)| ov(a, b)).collect();
        let exact = hypervolume(&pts, RefPoint::default()).unwrap();
        assert!((grid_hypervolume(&raw, (2.0, 2.0), 1000) - exact).abs() < 1e-2);
    }
}

#[test]
fn quantile_examples() {
    let q = QuantileNormalizer::fit(&[10.0, 20.0, 30.0]).unwrap();
    assert_eq!([q.transform(10.0), q.transform(20.0), q.transform(30.0)], [0.0, 0.5, 1.0]);
    let q = QuantileNormalizer::fit(&[5.0, 5.0]).unwrap();
    assert_eq!(q.transform(5.0), 0.5);
}

#[test]
fn normalized_continuous_sample_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let exp = Exp::new(0.3).unwrap();
    let values: Vec<f64> = (0..1000).map(|_| exp.sample(&mut rng)).collect();
    let q = QuantileNormalizer::fit(&values).unwrap();
    let normalized: Vec<f64> = values.iter().map(|&v| q.transform(v)).collect();
    assert!(normalized.iter().all(|v| (0.0..=1.0).contains(v)));
    let ks = ks_uniform(&normalized, 0.0, 1.0);
    assert!(ks < 0.05, "{ks}");
}

#[test]
fn incremental_archive_front_equals_rank_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let n = rng.gen_range(1..40);
        let pts: Vec<ObjectiveVector> = lattice_points(&mut rng, n).into_iter().map(|(a, b)| ov(a, b)).collect();
        let mut archive = ParetoArchive::new();
        for (i, &p) in pts.iter().enumerate() {
            archive.insert(entry(i, p));
        }
        let front: BTreeSet<usize> = archive.front().iter().copied().collect();
        let rank0: BTreeSet<usize> = nondominated_sort(&pts)[0].iter().copied().collect();
        assert_eq!(front, rank0);
        // front/history consistency
        for (i, e) in archive.history().iter().enumerate() {
            if front.contains(&i) {
                assert!(!archive.history().iter().any(|o| dominates(&o.objectives, &e.objectives)));
            } else {
                assert!(front.iter().any(|&f| dominates(&archive.history()[f].objectives, &e.objectives)));
            }
        }
    }
}

#[test]
fn regret_examples_and_monotone_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<ObjectiveVector> = (0..60).map(|_| ov(rng.gen(), rng.gen())).collect();
    let norm = ObjectiveNormalizer::fit(&pts).unwrap();
    let r = RefPoint::default();
    let best = hypervolume(&norm.transform_all(&pts), r).unwrap();
    let mut archive = ParetoArchive::new();
    assert_eq!(hypervolume_regret(&archive, &norm, r, best).unwrap(), best);
    let mut last = f64::INFINITY;
    for (i, &p) in pts.iter().enumerate() {
        archive.insert(entry(i, p));
        let reg = hypervolume_regret(&archive, &norm, r, best).unwrap();
        assert!(reg <= last);
        last = reg;
    }
    assert_eq!(last, 0.0);
}

/// Expected rank of each method when every seed combination is equally likely.
fn exhaustive_ranks(traces: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let steps = traces[0][0].len();
    let mut combos: Vec<Vec<usize>> = vec![vec![]];
    for seeds in traces {
        combos = combos.into_iter().flat_map(|c| (0..seeds.len()).map(move |s| [c.clone(), vec![s]].concat())).collect();
    }
    let mut out = vec![vec![0.0; steps]; traces.len()];
    for combo in &combos {
        for t in 0..steps {
            let col: Vec<f64> = combo.iter().enumerate().map(|(m, &s)| traces[m][s][t]).collect();
            for (m, r) in mid_ranks_descending(&col).into_iter().enumerate() {
                out[m][t] += r / combos.len() as f64;
            }
        }
    }
    out
}

#[test]
fn bootstrap_ranks_match_exhaustive_expectation() {
    let traces = vec![
        vec![vec![1.0, 2.0, 3.0, 3.5], vec![0.5, 2.5, 2.5, 3.0]],
        vec![vec![0.8, 2.0, 2.9, 4.0], vec![1.2, 1.0, 3.1, 3.0], vec![0.0, 2.2, 2.5, 3.5]],
        vec![vec![1.0, 1.5, 3.0, 3.6], vec![0.9, 2.0, 2.0, 2.0]],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let boot = average_ranks(std::slice::from_ref(&traces), 20_000, &mut rng).unwrap();
    let exact = exhaustive_ranks(&traces);
    for (b, e) in boot.iter().flatten().zip(exact.iter().flatten()) {
        assert!((b - e).abs() < 0.05, "{b} vs {e}");
    }
}

proptest! {
    #[test]
    fn dominance_is_a_strict_partial_order(raw in prop::collection::vec((0u8..4, 0u8..4), 3)) {
        let p: Vec<ObjectiveVector> = raw.iter().map(|&(a, b)| ov(a as f64, b as f64)).collect();
        prop_assert!(!dominates(&p[0], &p[0]));
        prop_assert!(!(dominates(&p[0], &p[1]) && dominates(&p[1], &p[0])));
        if dominates(&p[0], &p[1]) && dominates(&p[1], &p[2]) {
            prop_assert!(dominates(&p[0], &p[2]));
        }
    }

    #[test]
    fn hypervolume_monotone_and_permutation_invariant(
        raw in prop::collection::vec((0.0..2.0f64, 0.0..2.0f64), 1..12),
        extra in (0.0..2.0f64, 0.0..2.0f64),
    ) {
        let pts: Vec<ObjectiveVector> = raw.iter().map(|&(a, b)| ov(a, b)).collect();
        let r = RefPoint::default();
        let hv = hypervolume(&pts, r).unwrap();
        let mut more = pts.clone();
        more.push(ov(extra.0, extra.1));
        prop_assert!(hypervolume(&more, r).unwrap() >= hv - 1e-12);
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.push(pts[0]);
        prop_assert!((hypervolume(&shuffled, r).unwrap() - hv).abs() < 1e-12);
    }

    #[test]
    fn normalization_is_monotone(values in prop::collection::vec(-100.0..100.0f64, 2..50), a in -150.0..150.0f64, b in -150.0..150.0f64) {
        let q = QuantileNormalizer::fit(&values).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(q.transform(lo) <= q.transform(hi));
        prop_assert!((0.0..=1.0).contains(&q.transform(a)));
    }
}
