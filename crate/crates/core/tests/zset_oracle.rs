use horolab_core::graph::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vertex(id: &str, flag: VertexFlag) -> GraphVertex {
    GraphVertex { id: id.into(), flag }
}

fn edge(src: &str, dst: &str, s: f64) -> EdgeSpec<f64> {
    EdgeSpec { src: src.into(), dst: dst.into(), slack: Some(s), family: None }
}

/// Layered set-of-sums propagation: every path of length L is a path of
/// length L-1 plus one edge; sums are merged per vertex.
fn oracle(n: usize, edges: &[(usize, usize, f64)], y: usize, x: usize, budget: f64) -> Vec<f64> {
    let min = edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
    let depth = (budget / min + 1e-9).floor() as usize;
    let mut layer: Vec<Vec<f64>> = vec![Vec::new(); n];
    layer[y].push(0.0);
    let mut found = Vec::new();
    for _ in 0..=depth {
        found.extend_from_slice(&layer[x]);
        let mut next: Vec<Vec<f64>> = vec![Vec::new(); n];
        for &(s, d, w) in edges {
            for &v in &layer[s] {
                if v + w <= budget + 1e-12 {
                    next[d].push(v + w);
                }
            }
        }
        for list in next.iter_mut() {
            list.sort_by(f64::total_cmp);
            list.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        }
        layer = next;
    }
    found.sort_by(f64::total_cmp);
    found.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    found
}

fn random_case(rng: &mut ChaCha8Rng) -> (usize, Vec<(usize, usize, f64)>, f64) {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=4);
    let edges: Vec<_> = (0..m)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), (rng.gen_range(0.5..2.0f64) * 1000.0).round() / 1000.0))
        .collect();
    let min = edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
    let budget = min * rng.gen_range(4.0..20.0);
    (n, edges, budget)
}

fn build(n: usize, edges: &[(usize, usize, f64)]) -> SlackGraph<f64> {
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    build_graph(
        names.iter().map(|s| vertex(s, VertexFlag::Imc)).collect(),
        edges.iter().map(|&(s, d, w)| edge(&names[s], &names[d], w)).collect(),
    )
    .unwrap()
}

fn assert_same(got: &[f64], want: &[f64]) {
    assert_eq!(got.len(), want.len(), "{got:?} vs {want:?}");
    for (a, b) in got.iter().zip(want) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn ten_random_graphs_match_concatenation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let (n, edges, budget) = random_case(&mut rng);
        let g = build(n, &edges);
        let min = edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
        for y in 0..n {
            for x in 0..n {
                let z = enumerate_path_slacks(
                    &g,
                    &format!("v{y}"),
                    &format!("v{x}"),
                    &EnumerationOptions::new(budget, min),
                )
                .unwrap();
                assert_same(&z.slacks(), &oracle(n, &edges, y, x, budget));
            }
        }
    }
}

#[test]
fn witnesses_evaluate_to_their_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let (n, edges, budget) = random_case(&mut rng);
        let g = build(n, &edges);
        let min = edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
        let mut o = EnumerationOptions::new(budget, min);
        o.keep_witnesses = true;
        let z = enumerate_path_slacks(&g, "v0", &format!("v{}", n - 1), &o).unwrap();
        for e in &z.values {
            let (end, s) = g.evaluate_witness(0, &e.witness).unwrap();
            assert_eq!(end, n - 1);
            assert!((s - e.slack).abs() < 1e-9);
            assert_eq!(e.witness.len(), e.path_length);
        }
    }
}

#[test]
fn ray_example_against_brute_force() {
    let g = build_graph(
        vec![vertex("x", VertexFlag::Imc), vertex("w", VertexFlag::InfiniteLeaf)],
        vec![edge("x", "x", 1.0), edge("x", "x", 1.3), edge("x", "w", 0.7), edge("w", "x", 0.9)],
    )
    .unwrap();
    let (rho, z) = ray_threshold(&g, "x", "x", &EnumerationOptions::new(5.0, 0.5)).unwrap();
    // paths through w: their cheapest slack is the threshold
    let raw = [(0, 0, 1.0), (0, 0, 1.3), (0, 1, 0.7), (1, 0, 0.9)];
    let through_w = oracle(2, &raw[2..], 0, 0, 5.0);
    let imc_only = oracle(2, &raw[..2], 0, 0, 5.0);
    let all = oracle(2, &raw, 0, 0, 5.0);
    let first_w =
        all.iter().copied().filter(|v| !imc_only.iter().any(|u| (u - v).abs() < 1e-12)).fold(f64::INFINITY, f64::min);
    assert_eq!(rho, 1.6);
    assert!((first_w - 1.6).abs() < 1e-12 && (through_w[1] - 1.6).abs() < 1e-12);
    let below: Vec<f64> = all.iter().copied().filter(|&v| v < rho - 1e-12).collect();
    assert_same(&z.slacks(), &below);
    assert_same(&below, &[0.0, 1.0, 1.3]);
    assert_eq!(z.ray_start, Some(1.6));
}

#[test]
fn derived_set_of_harmonic_sequence() {
    let mut v: Vec<f64> = (1..=2000).map(|n| 1.0 / n as f64).collect();
    v.push(0.0);
    v.sort_by(f64::total_cmp);
    let d = derived_set(&v, 2e-4);
    assert!(!d.is_empty() && d.iter().all(|&x| x < 0.02), "{d:?}");
    let finite = [0.0, 1.0, 2.0, 3.5];
    assert!(derived_set(&finite, 0.5).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn enumeration_matches_oracle(
        n in 1usize..=3,
        raw in prop::collection::vec((0usize..3, 0usize..3, 500u32..2000), 1..=4),
        factor in 3.0f64..12.0,
    ) {
        let edges: Vec<_> = raw.iter().map(|&(s, d, w)| (s % n, d % n, w as f64 / 1000.0)).collect();
        let min = edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
        let budget = min * factor;
        let g = build(n, &edges);
        for y in 0..n {
            for x in 0..n {
                let z = enumerate_path_slacks(&g, &format!("v{y}"), &format!("v{x}"), &EnumerationOptions::new(budget, min)).unwrap();
                let want = oracle(n, &edges, y, x, budget);
                prop_assert_eq!(z.values.len(), want.len());
                for (a, b) in z.slacks().iter().zip(&want) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn concatenation_is_subadditive(
        raw in prop::collection::vec((0usize..2, 0usize..2, 500u32..2000), 1..=4),
    ) {
        let edges: Vec<_> = raw.iter().map(|&(s, d, w)| (s, d, w as f64 / 1000.0)).collect();
        let min = edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
        let g = build(2, &edges);
        let o = |b: f64| EnumerationOptions::new(b, min);
        for (x, y, z) in [("v0", "v0", "v1"), ("v1", "v0", "v1"), ("v0", "v1", "v0")] {
            let zy = enumerate_path_slacks(&g, y, z, &o(3.0)).unwrap();
            let xz = enumerate_path_slacks(&g, z, x, &o(3.0)).unwrap();
            let xy = enumerate_path_slacks(&g, y, x, &o(6.0)).unwrap();
            prop_assert!(check_subadditivity(&zy, &xz, &xy, 1e-9).unwrap().is_empty());
        }
    }
}
