use horolab_core::moebius::*;
use num_complex::Complex;
use proptest::prelude::*;

fn sl2(a: f64, b: f64, c: f64) -> MoebiusElement<f64> {
    MoebiusElement::from_entries_unchecked(a, b, c, (1.0 + b * c) / a)
}

fn nonzero() -> impl Strategy<Value = f64> {
    prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn bruhat_round_trip(a in nonzero(), b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let m = sl2(a, b, c);
        let nau = bruhat_nau(&m).unwrap();
        // n a_t u multiplied out by hand
        let (n, t, u) = (nau.n_param, nau.t, nau.u_param);
        let (e, f) = ((t / 2.0).exp(), (-t / 2.0).exp());
        let rebuilt = MoebiusElement::from_entries_unchecked(e, e * u, n * e, n * e * u + f);
        prop_assert!(rebuilt.frobenius_distance(&m) < 1e-9);
        prop_assert_eq!(log_delta(&m).unwrap(), 2.0 * a.abs().ln());
    }

    #[test]
    fn distance_triangle_inequality(
        x in prop::array::uniform3(-3.0f64..3.0),
        y in prop::array::uniform3(0.05f64..4.0),
    ) {
        let p: Vec<Complex<f64>> = (0..3).map(|i| Complex::new(x[i], y[i])).collect();
        let d = |i: usize, j: usize| hyperbolic_distance(p[i], p[j]).unwrap();
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
        prop_assert!((d(0, 1) - d(1, 0)).abs() < 1e-12);
    }

    #[test]
    fn axis_length_from_trace(a in 0.2f64..4.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let m = sl2(a, b, c);
        let tr = m.trace().abs();
        prop_assume!(tr > 2.2);
        let (line, length) = axis(&m).unwrap();
        prop_assert!((length - 2.0 * (tr / 2.0).acosh()).abs() < 1e-9);
        // a point on the axis moves exactly by the translation length
        let z = line.standard_map().apply(Complex::new(0.0, 1.0));
        prop_assert!((hyperbolic_distance(z, m.apply(z)).unwrap() - length).abs() < 1e-7);
    }

    #[test]
    fn isometries_preserve_distance(a in nonzero(), b in -3.0f64..3.0, c in -3.0f64..3.0,
                                    z in (-2.0f64..2.0, 0.1f64..3.0), w in (-2.0f64..2.0, 0.1f64..3.0)) {
        let m = sl2(a, b, c);
        let (z, w) = (Complex::new(z.0, z.1), Complex::new(w.0, w.1));
        let before = hyperbolic_distance(z, w).unwrap();
        let after = hyperbolic_distance(m.apply(z), m.apply(w)).unwrap();
        prop_assert!((before - after).abs() < 1e-7 * (1.0 + before));
    }
}

#[test]
fn convention_contraction() {
    let g = frame_of_tangent(&UnitTangent::new(Complex::new(-0.4, 0.8), 2.1).unwrap());
    for s in [1e-3, -2e-3] {
        let n = MoebiusElement::lower(s);
        let u = MoebiusElement::upper(s);
        assert!(flow_separation(&n, &g, 5.0) < 1e-2 * flow_separation(&n, &g, 0.0));
        assert!(flow_separation(&u, &g, 5.0) > 10.0 * flow_separation(&u, &g, 0.0));
    }
}
