#![allow(clippy::needless_range_loop)]

use horolab_core::chain::*;
use proptest::prelude::*;

/// Minimum over all jump sequences of length m <= max_m, by exhaustive search.
fn brute_cost(sys: &DiscretizedSystem<f64>, x: usize, y: usize, max_m: usize) -> f64 {
    fn go(sys: &DiscretizedSystem<f64>, cur: usize, aim: usize, acc: f64, left: usize, best: &mut f64) {
        if sys.distance(cur, aim) <= sys.h {
            *best = best.min(acc);
        }
        if left == 0 || acc >= *best {
            return;
        }
        let moved = sys.sigma[cur];
        let next_aim = sys.sigma[aim];
        for z in 0..sys.len() {
            go(sys, z, next_aim, acc + sys.distance(moved, z), left - 1, best);
        }
    }
    let mut best = f64::INFINITY;
    go(sys, x, y, 0.0, max_m, &mut best);
    best
}

fn custom(pos: &[f64], sigma: &[usize]) -> DiscretizedSystem<f64> {
    let d: Vec<Vec<f64>> = pos.iter().map(|a| pos.iter().map(|b| (a - b).abs()).collect()).collect();
    discretize(&ModelSpec::Custom { distances: d, sigma: sigma.to_vec() }, pos.len()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layered_cost_matches_exhaustive(raw in prop::collection::vec((0.0f64..1.0, 0usize..6), 3..=6), max_m in 0usize..=3) {
        let n = raw.len();
        let pos: Vec<f64> = raw.iter().map(|r| r.0).collect();
        let sigma: Vec<usize> = raw.iter().map(|r| r.1 % n).collect();
        let sys = custom(&pos, &sigma);
        for x in 0..n {
            for y in 0..n {
                let r = interception_cost(&sys, x, y, max_m).unwrap();
                let want = brute_cost(&sys, x, y, max_m);
                prop_assert!((r.cost - want).abs() < 1e-12 || r.cost == want, "{} vs {}", r.cost, want);
                if let Some(c) = r.certificate {
                    prop_assert_eq!(c.replay(&sys), Some(r.cost));
                }
            }
        }
    }

    #[test]
    fn circle_transform_matches_direct(seed in 0u64..1000, jitter in 0.0f64..0.45, n in 5usize..80) {
        let sys = discretize(&ModelSpec::Doubling { jitter }, n).unwrap();
        let b: Vec<f64> = (0..n).map(|i| if (i as u64 * 2654435761 + seed).is_multiple_of(5) { ((i as u64 + seed) % 17) as f64 / 40.0 } else { f64::INFINITY }).collect();
        let mut f = vec![0.0; n];
        let mut arg = vec![0; n];
        sys.geometry.transform(&b, &mut f, &mut arg);
        for z in 0..n {
            let want = (0..n).map(|j| b[j] + sys.distance(z, j)).fold(f64::INFINITY, f64::min);
            prop_assert!((f[z] - want).abs() < 1e-12 || (f[z].is_infinite() && want.is_infinite()));
        }
    }

    #[test]
    fn rotation_cost_is_distance(x in 0usize..200, y in 0usize..200) {
        let sys = discretize(&ModelSpec::Rotation { alpha: 0.5f64.sqrt() }, 200).unwrap();
        let c = interception_cost(&sys, x, y, 30).unwrap().cost;
        let d = sys.distance(x, y);
        prop_assert!(c >= d - sys.h - 1e-12 && c <= d + 1e-12);
    }
}

#[test]
fn rotation_triangle_with_slop() {
    let sys = discretize(&ModelSpec::Rotation { alpha: 0.381966 }, 120).unwrap();
    let rows: Vec<Vec<f64>> = (0..120).step_by(7).map(|x| cost_row(&sys, x, 40, None)).collect();
    let idx: Vec<usize> = (0..120).step_by(7).collect();
    for ra in &rows {
        for (rb, &y) in rows.iter().zip(&idx) {
            for &z in &idx {
                assert!(ra[z] <= ra[y] + rb[z] + 2.0 * sys.h + 1e-12);
            }
        }
    }
}

#[test]
fn iet_three_intervals_is_piecewise_translation() {
    let sys = discretize(&ModelSpec::Iet { lengths: vec![0.25, 0.25, 0.5], permutation: vec![2, 1, 0] }, 400).unwrap();
    let pos = |i: usize| i as f64 / 400.0;
    for i in 0..400 {
        let x = pos(i);
        let image = if x < 0.25 {
            x + 0.75
        } else if x < 0.5 {
            x + 0.25
        } else {
            x - 0.5
        };
        assert!((pos(sys.sigma[i]) - image).abs() < 1.5 / 400.0, "{i}");
    }
}

#[test]
fn periodic_orbits_and_escape() {
    let sys = discretize(&ModelSpec::Rotation { alpha: 0.25 }, 40).unwrap();
    for x in [0, 7, 39] {
        let r = chain_recurrent(&sys, x, 3.0, 1e-6, 16).unwrap();
        assert!(r.recurrent && r.jumps.is_empty() && *r.path.last().unwrap() == x);
    }
    let abs = discretize(&ModelSpec::Absorbing { first_step: 0.2, growth: 1.2, gap: 0.5 }, 12).unwrap();
    assert!(!chain_recurrent(&abs, 0, 1.0, 0.15, 200).unwrap().recurrent);
    assert!(chain_recurrent(&abs, 0, 1.0, 10.0, 200).unwrap().recurrent);
}

#[test]
fn dense_rotation_is_recurrent_above_h() {
    let sys = discretize(&ModelSpec::Rotation { alpha: 2f64.sqrt() - 1.0 }, 500).unwrap();
    for x in [0, 123, 499] {
        let r = chain_recurrent(&sys, x, 5.0, 1.5 * sys.h, 600).unwrap();
        assert!(r.recurrent);
        assert!(r.jumps.iter().all(|j| j.cost <= 1.5 * sys.h));
        assert!(r.segments.iter().all(|&s| s >= 5.0 - 1e-12) || r.jumps.is_empty());
    }
}
