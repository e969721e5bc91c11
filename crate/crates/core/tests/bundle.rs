use horolab_core::cover::*;
use horolab_core::graph::*;
use horolab_core::moebius::bruhat_nau;
use horolab_core::slack::*;

fn load() -> (FuchsianCoverSpec, Vec<VertexSpec>) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/genus2-octagon.json");
    let spec = FuchsianCoverSpec::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    let vs = build_vertices(&spec, &spec.vertices).unwrap();
    (spec, vs)
}

#[test]
fn bundle_is_a_valid_cover() {
    let (spec, vs) = load();
    let report = validate_group(&spec, 4).unwrap();
    assert!(report.ok, "{report:?}");
    assert_eq!(vs.len(), 2);
    assert!(vs.iter().all(|v| v.length_matches()));
}

#[test]
fn short_connectors_agree_with_geometry() {
    let (spec, vs) = load();
    let opts = ConnectorOptions { max_len: 5, slack_cap: 3.0, ..ConnectorOptions::default() };
    let r = enumerate_connectors(&spec, &vs, &opts).unwrap();
    assert!(r.candidates.len() >= 20 && r.min_raw_slack > -1e-6);
    for c in r.candidates.iter().take(40) {
        let o = connector_geometric_slack(c, &OracleOptions::default()).unwrap();
        assert!(o.difference < 1e-3, "{} {}", c.word, o.difference);
        assert!((bruhat_nau(&c.matrix).unwrap().t - c.raw_slack).abs() < 1e-9);
    }
}

#[test]
fn two_path_twists_follow_the_correction_law() {
    let (spec, vs) = load();
    let opts = ConnectorOptions { max_len: 5, slack_cap: 3.0, ..ConnectorOptions::default() };
    let mut c = enumerate_connectors(&spec, &vs, &opts).unwrap().candidates;
    c.sort_by(|a, b| a.raw_slack.total_cmp(&b.raw_slack));
    let mut checked = 0;
    for e1 in c.iter().take(12) {
        for e2 in c.iter().take(12).filter(|e| e.target_vertex == e1.source_vertex) {
            let y = vs.iter().find(|v| v.name == e1.source_vertex).unwrap();
            let f = twist_family("e", &e1.matrix, &e2.matrix, y.length, (0, 20)).unwrap();
            assert!(f.threshold.is_some());
            assert!(f.max_residual_past_threshold().unwrap() < 1e-8);
            assert!((f.analytic_limit - e1.raw_slack - e2.raw_slack).abs() < 1e-9);
            checked += 1;
        }
    }
    assert!(checked >= 5);
}

#[test]
fn connector_graph_is_subadditive() {
    let (spec, vs) = load();
    let opts = ConnectorOptions { max_len: 6, slack_cap: 3.0, ..ConnectorOptions::default() };
    let r = enumerate_connectors(&spec, &vs, &opts).unwrap();
    let g = connector_graph(&r, &vs, 2.5, 1e-9).unwrap();
    let o = |b: f64| EnumerationOptions::new(b, 1.0);
    for x in ["x0", "x1"] {
        for y in ["x0", "x1"] {
            for z in ["x0", "x1"] {
                let zy = enumerate_path_slacks(&g, y, z, &o(3.0)).unwrap();
                let xz = enumerate_path_slacks(&g, z, x, &o(3.0)).unwrap();
                let xy = enumerate_path_slacks(&g, y, x, &o(6.0)).unwrap();
                assert!(check_subadditivity(&zy, &xz, &xy, 1e-9).unwrap().is_empty());
            }
        }
    }
}
