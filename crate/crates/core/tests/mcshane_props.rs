use horolab_core::lipschitz::PartialLipschitzFunction;
use proptest::prelude::*;

fn euclid(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Values of a 1-Lipschitz function: a scaled distance to an anchor plus a
/// tilted linear part of gradient norm below 1.
fn values(points: &[[f64; 2]], anchor: [f64; 2], slope: f64) -> Vec<f64> {
    points.iter().map(|p| 0.5 * euclid(p, &anchor) + slope * 0.4 * p[0] + 0.3 * p[1]).collect()
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    prop::array::uniform2(-5.0f64..5.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn extension_and_lipschitz(pts in prop::collection::vec(point(), 1..20), q in prop::collection::vec(point(), 2..30),
                               anchor in point(), slope in -1.0f64..1.0) {
        let vals = values(&pts, anchor, slope);
        let f = PartialLipschitzFunction::new(pts.clone(), vals.clone(), euclid).unwrap();
        prop_assert_eq!(f.mcshane_extend(&pts).unwrap(), vals);
        let v = f.mcshane_extend(&q).unwrap();
        for i in 0..q.len() {
            for j in 0..q.len() {
                prop_assert!((v[i] - v[j]).abs() <= euclid(&q[i], &q[j]) + 1e-12);
            }
        }
    }

    #[test]
    fn greatest_extension(pts in prop::collection::vec(point(), 1..15), extra in prop::collection::vec((point(), 0.0f64..1.0), 1..10),
                          q in prop::collection::vec(point(), 1..30), anchor in point()) {
        let vals = values(&pts, anchor, 0.5);
        let f = PartialLipschitzFunction::new(pts.clone(), vals.clone(), euclid).unwrap();
        // another extension: grow the domain one point at a time with any admissible value
        let (mut p2, mut v2) = (pts.clone(), vals.clone());
        for (p, t) in &extra {
            let g = PartialLipschitzFunction::new(p2.clone(), v2.clone(), euclid).unwrap();
            let (lo, hi) = (g.lower_value(p), g.upper_value(p));
            p2.push(*p);
            v2.push(lo + t * (hi - lo));
        }
        let g = PartialLipschitzFunction::new(p2, v2, euclid).unwrap();
        prop_assert!(g.check_lipschitz().valid);
        let upper = f.mcshane_extend(&q).unwrap();
        for (a, b) in g.lower_extend(&q).unwrap().iter().zip(&upper) {
            prop_assert!(*a <= *b + 1e-12);
        }
    }

    #[test]
    fn shift_equivariance(pts in prop::collection::vec(point(), 1..10), q in prop::collection::vec(point(), 1..10),
                          anchor in point(), k in -3i32..=3) {
        // domain closed under x -> x + 3 on a window, values shifting by 0.7 per step
        let shift = |p: &[f64; 2], m: i32| [p[0] + 3.0 * m as f64, p[1]];
        let vals = values(&pts, anchor, 0.0);
        let mut dom = Vec::new();
        let mut dv = Vec::new();
        for m in -6..=6 {
            for (p, v) in pts.iter().zip(&vals) {
                dom.push(shift(p, m));
                dv.push(v.min(2.0) + 0.7 * m as f64);
            }
        }
        let f = PartialLipschitzFunction::new(dom, dv, euclid).unwrap();
        prop_assume!(f.check_lipschitz().valid);
        let base = f.mcshane_extend(&q).unwrap();
        let moved: Vec<[f64; 2]> = q.iter().map(|p| shift(p, k)).collect();
        let ext = f.mcshane_extend(&moved).unwrap();
        // orbits matched away from the truncation window
        for (i, p) in q.iter().enumerate() {
            if p[0].abs() < 3.0 {
                prop_assert!((ext[i] - base[i] - 0.7 * k as f64).abs() < 1e-9);
            }
        }
    }
}
