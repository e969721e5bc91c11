//! Linear-fractional geometry of the upper half-plane and its unit tangent
//! bundle.
//!
//! Conventions: `a_t = diag(e^{t/2}, e^{-t/2})`, `N` is lower unipotent,
//! `U` upper unipotent. A frame `g` represents the unit tangent `g^-1 . w0`
//! where `w0` sits at `i` pointing down, so left multiplication by `a_t` is
//! geodesic flow and `N` is the stable horocycle direction.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{wrap_angle, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoebiusError {
    #[error("near-singular matrix (|det| = {det:e})")]
    NearSingular { det: f64 },
    #[error("orientation-reversing matrix (det = {det:e})")]
    OrientationReversing { det: f64 },
    #[error("point outside the upper half-plane (Im = {im:e})")]
    Domain { im: f64 },
    #[error("matrix not NAU-decomposable (|a| = {a:e})")]
    NotDecomposable { a: f64 },
    #[error("matrix not hyperbolic (|trace| = {trace})")]
    NotHyperbolic { trace: f64 },
    #[error("geodesic endpoints coincide")]
    DegenerateLine,
    #[error("non-finite matrix entry")]
    NonFinite,
}

/// Element of PSL(2,R), stored with the canonical sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoebiusElement<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Real> MoebiusElement<T> {
    /// Builds from entries without rescaling; only the sign rule is applied.
    pub fn from_entries_unchecked(a: T, b: T, c: T, d: T) -> Self {
        Self { a, b, c, d }.canonical()
    }

    pub fn identity() -> Self {
        Self { a: T::one(), b: T::zero(), c: T::zero(), d: T::one() }
    }

    /// `a_t`
    pub fn diag_a(t: T) -> Self {
        let h = (t / T::lit(2.0)).exp();
        Self { a: h, b: T::zero(), c: T::zero(), d: h.recip() }
    }

    /// Lower unipotent `n_y`.
    pub fn lower(y: T) -> Self {
        Self::from_entries_unchecked(T::one(), T::zero(), y, T::one())
    }

    /// Upper unipotent `u_x`.
    pub fn upper(x: T) -> Self {
        Self::from_entries_unchecked(T::one(), x, T::zero(), T::one())
    }

    /// Elliptic element fixing `i` that turns tangent directions at `i` by `theta`.
    pub fn rotation(theta: T) -> Self {
        let h = theta / T::lit(2.0);
        Self::from_entries_unchecked(h.cos(), h.sin(), -h.sin(), h.cos())
    }

    pub fn from_array(m: [T; 4]) -> Result<Self, MoebiusError> {
        normalize([[m[0], m[1]], [m[2], m[3]]])
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn det(&self) -> T {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> T {
        self.a + self.d
    }

    pub fn inverse(&self) -> Self {
        Self::from_entries_unchecked(self.d, -self.b, -self.c, self.a)
    }

    /// First nonzero entry of (a, b, c, d) made positive.
    pub fn canonical(self) -> Self {
        let first = [self.a, self.b, self.c, self.d].into_iter().find(|x| !x.is_zero()).unwrap_or_else(T::one);
        if first < T::zero() {
            Self { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
        } else {
            self
        }
    }

    /// Frobenius distance in PSL(2,R), i.e. minimized over the sign.
    pub fn frobenius_distance(&self, other: &Self) -> T {
        let plus = (self.a - other.a).powi(2)
            + (self.b - other.b).powi(2)
            + (self.c - other.c).powi(2)
            + (self.d - other.d).powi(2);
        let minus = (self.a + other.a).powi(2)
            + (self.b + other.b).powi(2)
            + (self.c + other.c).powi(2)
            + (self.d + other.d).powi(2);
        plus.min(minus).sqrt()
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        self.frobenius_distance(other) <= tol
    }

    pub fn frobenius_norm(&self) -> T {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn apply(&self, z: Complex<T>) -> Complex<T> {
        let num = z * self.a + self.b;
        let den = z * self.c + self.d;
        num / den
    }

    pub fn apply_boundary(&self, p: BoundaryPoint<T>) -> BoundaryPoint<T> {
        match p {
            BoundaryPoint::Infinity => {
                if self.c.is_zero() {
                    BoundaryPoint::Infinity
                } else {
                    BoundaryPoint::from_value(self.a / self.c)
                }
            }
            BoundaryPoint::Finite(x) => {
                let den = self.c * x + self.d;
                if den.is_zero() {
                    BoundaryPoint::Infinity
                } else {
                    BoundaryPoint::from_value((self.a * x + self.b) / den)
                }
            }
        }
    }

    /// Argument of the derivative at `z`, i.e. the rotation applied to
    /// tangent directions there.
    pub fn derivative_arg(&self, z: Complex<T>) -> T {
        let w = z * self.c + self.d;
        -(T::lit(2.0) * w.im.atan2(w.re))
    }

    pub fn act_tangent(&self, v: &UnitTangent<T>) -> UnitTangent<T> {
        UnitTangent {
            basepoint: self.apply(v.basepoint),
            direction: wrap_angle(v.direction + self.derivative_arg(v.basepoint)),
        }
    }

    /// `self^k` for any integer `k`.
    pub fn pow(&self, k: i64) -> Self {
        let base = if k >= 0 { *self } else { self.inverse() };
        (0..k.unsigned_abs()).fold(Self::identity(), |acc, _| acc * base)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }
}

impl<T: Real> Mul for MoebiusElement<T> {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        Self::from_entries_unchecked(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl<T: Real> Serialize for MoebiusElement<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(4))?;
        for x in self.to_array() {
            seq.serialize_element(&x)?;
        }
        seq.end()
    }
}

impl<'de, T: Real> Deserialize<'de> for MoebiusElement<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = <[T; 4]>::deserialize(d)?;
        MoebiusElement::from_array(raw).map_err(de::Error::custom)
    }
}

/// Rescales to determinant one and applies the sign rule.
pub fn normalize<T: Real>(m: [[T; 2]; 2]) -> Result<MoebiusElement<T>, MoebiusError> {
    let [[a, b], [c, d]] = m;
    if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()) {
        return Err(MoebiusError::NonFinite);
    }
    let det = a * d - b * c;
    if det.abs() <= T::lit(T::DET_TOL) {
        return Err(MoebiusError::NearSingular { det: det.as_f64() });
    }
    if det < T::zero() {
        return Err(MoebiusError::OrientationReversing { det: det.as_f64() });
    }
    let s = det.sqrt().recip();
    Ok(MoebiusElement::from_entries_unchecked(a * s, b * s, c * s, d * s))
}

/// A point of the circle at infinity, R together with one point at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryPoint<T> {
    Finite(T),
    Infinity,
}

impl<T: Real> BoundaryPoint<T> {
    pub fn from_value(x: T) -> Self {
        if x.is_finite() {
            BoundaryPoint::Finite(x)
        } else {
            BoundaryPoint::Infinity
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, BoundaryPoint::Infinity)
    }

    pub fn finite(&self) -> Option<T> {
        match *self {
            BoundaryPoint::Finite(x) => Some(x),
            BoundaryPoint::Infinity => None,
        }
    }

    /// Position on the unit circle, `2 atan x`, with infinity at `pi`.
    pub fn circle_angle(&self) -> T {
        match *self {
            BoundaryPoint::Finite(x) => wrap_angle(T::lit(2.0) * x.atan()),
            BoundaryPoint::Infinity => T::PI(),
        }
    }

    /// Angular distance on the boundary circle.
    pub fn circle_distance(&self, other: &Self) -> T {
        wrap_angle(self.circle_angle() - other.circle_angle()).abs()
    }
}

impl<T: Real> fmt::Display for BoundaryPoint<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryPoint::Finite(x) => write!(f, "{x}"),
            BoundaryPoint::Infinity => write!(f, "inf"),
        }
    }
}

impl<T: Real> Serialize for BoundaryPoint<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BoundaryPoint::Finite(x) => x.serialize(s),
            BoundaryPoint::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de, T: Real> Deserialize<'de> for BoundaryPoint<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);
        impl<'de, T: Real> Visitor<'de> for V<T> {
            type Value = BoundaryPoint<T>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, x: f64) -> Result<Self::Value, E> {
                Ok(BoundaryPoint::from_value(T::lit(x)))
            }
            fn visit_i64<E: de::Error>(self, x: i64) -> Result<Self::Value, E> {
                Ok(BoundaryPoint::Finite(T::lit(x as f64)))
            }
            fn visit_u64<E: de::Error>(self, x: u64) -> Result<Self::Value, E> {
                Ok(BoundaryPoint::Finite(T::lit(x as f64)))
            }
            fn visit_str<E: de::Error>(self, s: &str) -> Result<Self::Value, E> {
                match s {
                    "inf" | "Infinity" | "infinity" => Ok(BoundaryPoint::Infinity),
                    _ => Err(E::custom(format!("unexpected boundary point {s:?}"))),
                }
            }
        }
        d.deserialize_any(V(std::marker::PhantomData))
    }
}

/// Oriented geodesic from `xi_minus` to `xi_plus`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GeodesicLine<T> {
    pub xi_minus: BoundaryPoint<T>,
    pub xi_plus: BoundaryPoint<T>,
}

impl<T: Real> GeodesicLine<T> {
    pub fn new(xi_minus: BoundaryPoint<T>, xi_plus: BoundaryPoint<T>) -> Result<Self, MoebiusError> {
        if xi_minus.circle_distance(&xi_plus) <= T::lit(T::DET_TOL) {
            return Err(MoebiusError::DegenerateLine);
        }
        Ok(Self { xi_minus, xi_plus })
    }

    /// The imaginary axis oriented downwards, the line of `w0`.
    pub fn standard() -> Self {
        Self { xi_minus: BoundaryPoint::Infinity, xi_plus: BoundaryPoint::Finite(T::zero()) }
    }

    /// Matrix sending the standard line onto this one: `0 -> xi_plus`,
    /// `inf -> xi_minus`.
    pub fn standard_map(&self) -> MoebiusElement<T> {
        match (self.xi_minus, self.xi_plus) {
            (BoundaryPoint::Infinity, BoundaryPoint::Finite(p)) => MoebiusElement::upper(p),
            (BoundaryPoint::Finite(m), BoundaryPoint::Infinity) => {
                MoebiusElement::from_entries_unchecked(m, -T::one(), T::one(), T::zero())
            }
            (BoundaryPoint::Finite(m), BoundaryPoint::Finite(p)) => {
                let k = if m > p { T::one() } else { -T::one() };
                normalize([[m, p * k], [T::one(), k]]).expect("distinct endpoints")
            }
            (BoundaryPoint::Infinity, BoundaryPoint::Infinity) => MoebiusElement::identity(),
        }
    }

    pub fn reversed(&self) -> Self {
        Self { xi_minus: self.xi_plus, xi_plus: self.xi_minus }
    }

    /// Hyperbolic distance from `z` to the line.
    pub fn distance_to(&self, z: Complex<T>) -> T {
        let w = self.standard_map().inverse().apply(z);
        (w.re.abs() / w.im).asinh()
    }

    /// Endpoints agree with `other` within `tol` in boundary-circle angle.
    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        self.xi_minus.circle_distance(&other.xi_minus) <= tol && self.xi_plus.circle_distance(&other.xi_plus) <= tol
    }
}

/// Unit tangent vector: basepoint in the upper half-plane and direction angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct UnitTangent<T> {
    pub basepoint: Complex<T>,
    pub direction: T,
}

impl<T: Real> UnitTangent<T> {
    pub fn new(basepoint: Complex<T>, direction: T) -> Result<Self, MoebiusError> {
        check_point(basepoint)?;
        Ok(Self { basepoint, direction: wrap_angle(direction) })
    }

    /// The reference vector `w0`.
    pub fn reference() -> Self {
        Self { basepoint: Complex::new(T::zero(), T::one()), direction: -T::FRAC_PI_2() }
    }

    pub fn reversed(&self) -> Self {
        Self { basepoint: self.basepoint, direction: wrap_angle(self.direction + T::PI()) }
    }
}

fn check_point<T: Real>(z: Complex<T>) -> Result<(), MoebiusError> {
    if !(z.im > T::zero()) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(MoebiusError::Domain { im: z.im.as_f64() });
    }
    Ok(())
}

/// `arcosh(1 + |z-w|^2 / (2 Im z Im w))`, evaluated in the stable
/// `2 asinh` form.
pub fn hyperbolic_distance<T: Real>(z: Complex<T>, w: Complex<T>) -> Result<T, MoebiusError> {
    check_point(z)?;
    check_point(w)?;
    Ok(dist_unchecked(z, w))
}

#[inline]
pub(crate) fn dist_unchecked<T: Real>(z: Complex<T>, w: Complex<T>) -> T {
    let num = (z - w).norm();
    let den = T::lit(2.0) * (z.im * w.im).sqrt();
    T::lit(2.0) * (num / den).asinh()
}

/// `m = n_y a_t u_x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NauDecomposition<T> {
    pub n_param: T,
    pub t: T,
    pub u_param: T,
}

impl<T: Real> NauDecomposition<T> {
    pub fn reconstruct(&self) -> MoebiusElement<T> {
        MoebiusElement::lower(self.n_param) * MoebiusElement::diag_a(self.t) * MoebiusElement::upper(self.u_param)
    }
}

pub fn bruhat_nau<T: Real>(m: &MoebiusElement<T>) -> Result<NauDecomposition<T>, MoebiusError> {
    if !(m.a.abs() > T::lit(T::DECOMP_TOL)) {
        return Err(MoebiusError::NotDecomposable { a: m.a.as_f64() });
    }
    Ok(NauDecomposition { n_param: m.c / m.a, t: T::lit(2.0) * m.a.abs().ln(), u_param: m.b / m.a })
}

/// `log delta(m) = 2 ln |m_11|`.
pub fn log_delta<T: Real>(m: &MoebiusElement<T>) -> Result<T, MoebiusError> {
    if !(m.a.abs() > T::lit(T::DECOMP_TOL)) {
        return Err(MoebiusError::NotDecomposable { a: m.a.as_f64() });
    }
    Ok(T::lit(2.0) * m.a.abs().ln())
}

/// Oriented axis (repelling to attracting fixed point) and translation length.
pub fn axis<T: Real>(m: &MoebiusElement<T>) -> Result<(GeodesicLine<T>, T), MoebiusError> {
    let two = T::lit(2.0);
    let tr = m.trace().abs();
    if tr <= two + T::alg_tol() {
        return Err(MoebiusError::NotHyperbolic { trace: tr.as_f64() });
    }
    let length = two * (tr / two).acosh();
    let (p, q) = if m.c.is_zero() {
        (BoundaryPoint::Infinity, BoundaryPoint::from_value(m.b / (m.d - m.a)))
    } else {
        let disc = (tr * tr - T::lit(4.0)).sqrt();
        let dma = m.d - m.a;
        let s = if dma < T::zero() { -disc } else { disc };
        let qq = -(dma + s) / two;
        (BoundaryPoint::from_value(qq / m.c), BoundaryPoint::from_value(-m.b / qq))
    };
    let attracting = |x: &BoundaryPoint<T>| match *x {
        BoundaryPoint::Infinity => (m.a / m.d).abs() > T::one(),
        BoundaryPoint::Finite(z) => (m.c * z + m.d).abs() > T::one(),
    };
    let line = if attracting(&q) && !attracting(&p) {
        GeodesicLine { xi_minus: p, xi_plus: q }
    } else {
        GeodesicLine { xi_minus: q, xi_plus: p }
    };
    Ok((line, length))
}

/// Direction at `p` of the geodesic heading to `q`.
pub fn departure_direction<T: Real>(p: Complex<T>, q: Complex<T>) -> T {
    let w = Complex::new((q.re - p.re) / p.im, q.im / p.im);
    let i = Complex::new(T::zero(), T::one());
    let zeta = (w - i) / (w + i);
    wrap_angle(zeta.im.atan2(zeta.re) + T::FRAC_PI_2())
}

/// Parallel transport of the direction `theta` at `p` to `q` along the
/// connecting geodesic.
pub fn transport_direction<T: Real>(p: Complex<T>, q: Complex<T>, theta: T) -> T {
    if dist_unchecked(p, q) <= T::lit(T::DET_TOL) {
        return theta;
    }
    let out = departure_direction(p, q);
    let arrive = wrap_angle(departure_direction(q, p) + T::PI());
    wrap_angle(arrive + (theta - out))
}

/// Base distance plus the angle defect after parallel transport.
pub fn t1_distance<T: Real>(v1: &UnitTangent<T>, v2: &UnitTangent<T>) -> Result<T, MoebiusError> {
    let base = hyperbolic_distance(v1.basepoint, v2.basepoint)?;
    let moved = transport_direction(v1.basepoint, v2.basepoint, v1.direction);
    Ok(base + wrap_angle(v2.direction - moved).abs())
}

/// Unit tangent represented by the frame `g`, namely `g^-1 . w0`.
pub fn tangent_of_frame<T: Real>(g: &MoebiusElement<T>) -> UnitTangent<T> {
    g.inverse().act_tangent(&UnitTangent::reference())
}

/// A frame `g` with `g^-1 . w0 = v`.
pub fn frame_of_tangent<T: Real>(v: &UnitTangent<T>) -> MoebiusElement<T> {
    let y = v.basepoint.im;
    let sy = y.sqrt();
    let translate = MoebiusElement::from_entries_unchecked(sy, v.basepoint.re / sy, T::zero(), sy.recip());
    let turn = MoebiusElement::rotation(v.direction + T::FRAC_PI_2());
    (translate * turn).inverse()
}

/// Geodesic flow on frames.
pub fn geodesic_flow<T: Real>(g: &MoebiusElement<T>, t: T) -> MoebiusElement<T> {
    MoebiusElement::diag_a(t) * *g
}

/// Unit tangent reached after flowing `v` for time `t`.
pub fn flow_tangent<T: Real>(v: &UnitTangent<T>, t: T) -> UnitTangent<T> {
    tangent_of_frame(&geodesic_flow(&frame_of_tangent(v), t))
}

/// `t1_distance` between the flowed images of the frames `h g` and `g`.
pub fn flow_separation<T: Real>(h: &MoebiusElement<T>, g: &MoebiusElement<T>, t: T) -> T {
    let moved = tangent_of_frame(&geodesic_flow(&(*h * *g), t));
    let reference = tangent_of_frame(&geodesic_flow(g, t));
    t1_distance(&moved, &reference).expect("frames give valid tangents")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn m(a: f64, b: f64, c: f64, d: f64) -> MoebiusElement<f64> {
        normalize([[a, b], [c, d]]).unwrap()
    }

    fn ci(x: f64, y: f64) -> Complex<f64> {
        Complex::new(x, y)
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(m(2.0, 0.0, 0.0, 2.0).to_array(), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(m(-1.0, 0.0, 0.0, -1.0).to_array(), [1.0, 0.0, 0.0, 1.0]);
        // equal to [[0,-1],[1,0]] in PSL; the stored sign makes b positive
        let r = m(0.0, -3.0, 3.0, 0.0);
        assert!(r.approx_eq(&MoebiusElement::from_entries_unchecked(0.0, -1.0, 1.0, 0.0), 0.0));
        assert_eq!(r.to_array(), [0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(normalize([[1.0, 1.0], [1.0, 1.0]]), Err(MoebiusError::NearSingular { .. })));
        assert!(matches!(normalize([[1.0, 0.0], [0.0, -1.0]]), Err(MoebiusError::OrientationReversing { .. })));
    }

    #[test]
    fn distance_examples() {
        assert!((hyperbolic_distance(ci(0.0, 1.0), ci(0.0, 2.0)).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(hyperbolic_distance(ci(0.0, 1.0), ci(0.0, 1.0)).unwrap(), 0.0);
        assert!((hyperbolic_distance(ci(0.0, 1.0), ci(1.0, 1.0)).unwrap() - 1.5f64.acosh()).abs() < 1e-15);
        assert!(hyperbolic_distance(ci(0.0, -1.0), ci(0.0, 1.0)).is_err());
    }

    #[test]
    fn distance_matches_metric_integral() {
        // geodesic from i to 1+i: circle centred at 1/2 of radius sqrt(5)/2
        let (cx, r) = (0.5, 1.25f64.sqrt());
        let a0 = (1.0f64).atan2(-0.5);
        let a1 = (1.0f64).atan2(0.5);
        let steps = 200_000;
        let mut total = 0.0;
        for k in 0..steps {
            let th = a0 + (a1 - a0) * (k as f64 + 0.5) / steps as f64;
            let y = r * th.sin();
            total += r * ((a1 - a0) / steps as f64).abs() / y;
        }
        let _ = cx;
        assert!((total - 0.9624236501192069).abs() < 1e-9, "{total}");
        assert!((hyperbolic_distance(ci(0.0, 1.0), ci(1.0, 1.0)).unwrap() - total).abs() < 1e-9);
    }

    #[test]
    fn bruhat_examples() {
        let s = 0.7f64;
        let nau = bruhat_nau(&MoebiusElement::diag_a(s)).unwrap();
        assert!(nau.n_param.abs() < 1e-15 && (nau.t - s).abs() < 1e-15 && nau.u_param.abs() < 1e-15);
        let nau = bruhat_nau(&m(1.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!((nau.n_param, nau.t, nau.u_param), (1.0, 0.0, 0.0));
        let nau = bruhat_nau(&m(1.0, 1.0, 1.0, 2.0)).unwrap();
        assert_eq!((nau.n_param, nau.t, nau.u_param), (1.0, 0.0, 1.0));
        assert!(matches!(bruhat_nau(&m(0.0, -1.0, 1.0, 0.0)), Err(MoebiusError::NotDecomposable { .. })));
    }

    #[test]
    fn log_delta_examples() {
        assert!((log_delta(&m(2.0, 0.0, 0.0, 0.5)).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        let t = 2f64.ln();
        let prod = MoebiusElement::diag_a(-t)
            * MoebiusElement::upper(1.0)
            * MoebiusElement::diag_a(t)
            * MoebiusElement::lower(1.0);
        assert!((log_delta(&prod).unwrap() - 2.0 * 1.5f64.ln()).abs() < 1e-14);
        assert_eq!(log_delta(&m(1.0, 5.0, 0.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn axis_examples() {
        let (line, len) = axis(&m(2.0, 0.0, 0.0, 0.5)).unwrap();
        assert_eq!(line.xi_minus, BoundaryPoint::Finite(0.0));
        assert_eq!(line.xi_plus, BoundaryPoint::Infinity);
        assert!((len - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!(matches!(axis(&m(1.0, 0.0, 1.0, 1.0)), Err(MoebiusError::NotHyperbolic { .. })));

        // fixed points of z -> (2z+1)/(z+1) by bisection on z^2 - z - 1
        let f = |z: f64| z * z - z - 1.0;
        let bisect = |mut lo: f64, mut hi: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let (neg, pos) = (bisect(-1.0, 0.0), bisect(1.0, 2.0));
        let (line, len) = axis(&m(2.0, 1.0, 1.0, 1.0)).unwrap();
        assert!((line.xi_minus.finite().unwrap() - neg).abs() < 1e-12);
        assert!((line.xi_plus.finite().unwrap() - pos).abs() < 1e-12);
        assert!((len - 2.0 * 1.5f64.acosh()).abs() < 1e-14);
    }

    #[test]
    fn standard_map_sends_standard_line() {
        for line in [
            GeodesicLine::<f64>::new(BoundaryPoint::Finite(-1.0), BoundaryPoint::Finite(3.0)).unwrap(),
            GeodesicLine::new(BoundaryPoint::Finite(2.0), BoundaryPoint::Finite(-0.5)).unwrap(),
            GeodesicLine::new(BoundaryPoint::Infinity, BoundaryPoint::Finite(0.3)).unwrap(),
            GeodesicLine::new(BoundaryPoint::Finite(0.3), BoundaryPoint::Infinity).unwrap(),
        ] {
            let s = line.standard_map();
            assert!((s.det() - 1.0).abs() < 1e-12);
            let img = GeodesicLine {
                xi_minus: s.apply_boundary(BoundaryPoint::Infinity),
                xi_plus: s.apply_boundary(BoundaryPoint::Finite(0.0)),
            };
            assert!(img.approx_eq(&line, 1e-12), "{img:?} {line:?}");
        }
    }

    #[test]
    fn t1_examples() {
        let v = UnitTangent::new(ci(0.3, 1.2), 0.4).unwrap();
        assert_eq!(t1_distance(&v, &v).unwrap(), 0.0);
        let a = UnitTangent::new(ci(0.0, 1.0), 0.0).unwrap();
        let b = UnitTangent::new(ci(0.0, 1.0), PI / 2.0).unwrap();
        assert!((t1_distance(&a, &b).unwrap() - PI / 2.0).abs() < 1e-15);
        let up1 = UnitTangent::new(ci(0.0, 1.0), PI / 2.0).unwrap();
        let up2 = UnitTangent::new(ci(0.0, 2.0), PI / 2.0).unwrap();
        assert!((t1_distance(&up1, &up2).unwrap() - 2f64.ln()).abs() < 1e-14);
    }

    /// Integrates d(theta)/ds = -x'/y along the geodesic from p to q.
    fn transport_oracle(p: Complex<f64>, q: Complex<f64>, theta: f64) -> f64 {
        let line = frame_of_tangent(&UnitTangent::new(p, departure_direction(p, q)).unwrap());
        let len = hyperbolic_distance(p, q).unwrap();
        let steps = 20_000;
        let h = len / steps as f64;
        let pos = |s: f64| tangent_of_frame(&geodesic_flow(&line, s)).basepoint;
        let mut th = theta;
        for k in 0..steps {
            let s0 = k as f64 * h;
            let rhs = |s: f64| {
                let e = 1e-6;
                let a = pos(s - e);
                let b = pos(s + e);
                let z = pos(s);
                -((b.re - a.re) / (2.0 * e)) / z.im
            };
            let k1 = rhs(s0);
            let k2 = rhs(s0 + h / 2.0);
            let k4 = rhs(s0 + h);
            th += h * (k1 + 4.0 * k2 + k4) / 6.0;
        }
        wrap_angle(th)
    }

    #[test]
    fn transport_matches_integrator() {
        for (p, q, th) in
            [(ci(0.0, 1.0), ci(1.0, 1.0), 0.3), (ci(-0.4, 0.7), ci(1.3, 2.1), -2.0), (ci(2.0, 0.5), ci(-1.0, 0.9), 1.1)]
        {
            let closed = transport_direction(p, q, th);
            let numeric = transport_oracle(p, q, th);
            assert!(wrap_angle(closed - numeric).abs() < 1e-7, "{closed} vs {numeric}");
        }
    }

    #[test]
    fn frames_round_trip() {
        let v = UnitTangent::new(ci(-0.7, 0.3), 2.5).unwrap();
        let g = frame_of_tangent(&v);
        let w = tangent_of_frame(&g);
        assert!(t1_distance(&v, &w).unwrap() < 1e-12);
        let w0 = tangent_of_frame(&MoebiusElement::<f64>::identity());
        assert!(t1_distance(&w0, &UnitTangent::reference()).unwrap() < 1e-15);
    }

    #[test]
    fn flow_moves_along_direction() {
        let v = UnitTangent::new(ci(0.0, 1.0), PI / 2.0).unwrap();
        let w = flow_tangent(&v, 2f64.ln());
        assert!((w.basepoint - ci(0.0, 2.0)).norm() < 1e-12);
        assert!(wrap_angle(w.direction - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn stable_and_unstable_directions() {
        let g = frame_of_tangent(&UnitTangent::new(ci(0.2, 1.3), 0.9).unwrap());
        let n = MoebiusElement::lower(1e-3);
        let u = MoebiusElement::upper(1e-3);
        let d0n = flow_separation(&n, &g, 0.0);
        let d5n = flow_separation(&n, &g, 5.0);
        let d0u = flow_separation(&u, &g, 0.0);
        let d5u = flow_separation(&u, &g, 5.0);
        assert!(d5n < 1e-2 * d0n, "{d0n} {d5n}");
        assert!(d5u > 10.0 * d0u, "{d0u} {d5u}");
    }

    #[test]
    fn serde_shapes() {
        let e = m(1.0, 1.0, 1.0, 2.0);
        assert_eq!(serde_json::to_string(&e).unwrap(), "[1.0,1.0,1.0,2.0]");
        let back: MoebiusElement<f64> = serde_json::from_str("[2,0,0,2]").unwrap();
        assert_eq!(back, MoebiusElement::identity());
        let line = GeodesicLine::<f64>::standard();
        let s = serde_json::to_string(&line).unwrap();
        assert_eq!(s, r#"{"xi_minus":"inf","xi_plus":0.0}"#);
        let back: GeodesicLine<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, line);
    }

    #[test]
    fn generic_over_f32() {
        let e = normalize([[2.0f32, 1.0], [1.0, 1.0]]).unwrap();
        let nau = bruhat_nau(&e).unwrap();
        assert!(nau.reconstruct().approx_eq(&e, 1e-5));
        let (_, len) = axis(&e).unwrap();
        assert!((len - 2.0 * 1.5f32.acosh()).abs() < 1e-5);
    }
}
