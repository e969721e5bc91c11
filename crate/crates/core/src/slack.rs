//! Slack calculus: Bruhat edge slacks, twist families, geometric slack of
//! polylines, broken-geodesic straightening and excursion calibration.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cover::{ConnectorCandidate, SampledLine, VertexSpec};
use crate::moebius::{
    bruhat_nau, departure_direction, dist_unchecked, flow_tangent, frame_of_tangent, log_delta, t1_distance,
    transport_direction, BoundaryPoint, GeodesicLine, MoebiusElement, MoebiusError, UnitTangent,
};
use crate::scalar::{wrap_angle, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlackError {
    #[error(transparent)]
    Moebius(#[from] MoebiusError),
    #[error("degenerate twist: 1 + e^-t u n = {arg:e}")]
    DegenerateTwist { arg: f64 },
    #[error("negative slack {value:e} (configuration is not distance minimizing)")]
    ConfigurationInvalid { value: f64 },
    #[error("polyline needs at least two points")]
    ShortPolyline,
    #[error("invalid chain: {0}")]
    InvalidChain(String),
}

/// Slacks this far below zero are float noise and clamp to zero.
pub const NEGATIVE_SLACK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Bruhat,
    Geometric,
    Composed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SlackValue<T> {
    pub value: T,
    pub provenance: Provenance,
}

pub fn clamp_slack<T: Real>(value: T, provenance: Provenance) -> Result<SlackValue<T>, SlackError> {
    if value < -T::lit(NEGATIVE_SLACK_TOL) || value.is_nan() {
        return Err(SlackError::ConfigurationInvalid { value: value.as_f64() });
    }
    Ok(SlackValue { value: value.max(T::zero()), provenance })
}

/// `log delta(g_x v g_y^-1)`.
pub fn edge_slack<T: Real>(
    g_x: &MoebiusElement<T>,
    v: &MoebiusElement<T>,
    g_y: &MoebiusElement<T>,
) -> Result<SlackValue<T>, SlackError> {
    let m = *g_x * *v * g_y.inverse();
    clamp_slack(log_delta(&m)?, Provenance::Bruhat)
}

/// `2 ln(1 + e^-t u n)`.
pub fn twist_correction<T: Real>(u_param: T, n_param: T, t: T) -> Result<T, SlackError> {
    let arg = T::one() + (-t).exp() * u_param * n_param;
    if !(arg > T::lit(1e-12)) {
        return Err(SlackError::DegenerateTwist { arg: arg.as_f64() });
    }
    Ok(T::lit(2.0) * arg.ln())
}

/// Slack of `m1 a_s m2 a_-s` computed from the entries of the two factors,
/// without forming large powers.
pub fn twisted_product_slack<T: Real>(m1: &MoebiusElement<T>, m2: &MoebiusElement<T>, s: T) -> Result<T, SlackError> {
    let e = (-s).exp();
    let a11 = m1.a * m2.a + m1.b * m2.c * e;
    if !(a11.abs() > T::lit(T::DECOMP_TOL)) {
        return Err(MoebiusError::NotDecomposable { a: a11.as_f64() }.into());
    }
    Ok(T::lit(2.0) * a11.abs().ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TwistMember<T> {
    pub k: i64,
    pub slack: T,
    /// `slack - limit - twist_correction(u, n, k * step)`.
    pub residual: T,
}

/// The family `m1 a_{k step} m2 a_{-k step}` obtained by winding a 2-path
/// `k` times around its middle vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TwistFamily<T> {
    pub edge: String,
    pub k_range: (i64, i64),
    pub step: T,
    pub u_param: T,
    pub n_param: T,
    pub members: Vec<TwistMember<T>>,
    /// k values where the product degenerates.
    pub gaps: Vec<i64>,
    pub forward_limit: Option<T>,
    /// First k at which successive differences drop below the detection
    /// tolerance.
    pub threshold: Option<i64>,
    pub backward_limit: Option<T>,
    /// `S(m1) + S(m2)`.
    pub analytic_limit: T,
}

pub const LIMIT_DETECTION_TOL: f64 = 1e-10;

impl<T: Real> TwistFamily<T> {
    pub fn slack(&self, k: i64) -> Option<T> {
        self.members.iter().find(|m| m.k == k).map(|m| m.slack)
    }

    /// Largest |residual| over members at or past the threshold.
    pub fn max_residual_past_threshold(&self) -> Option<T> {
        let t = self.threshold?;
        self.members.iter().filter(|m| m.k >= t).map(|m| m.residual.abs()).fold(None, |acc, r| {
            Some(match acc {
                None => r,
                Some(a) => a.max(r),
            })
        })
    }

    /// Strict decay of `|slack - limit|` past the threshold while the
    /// correction is resolvable above `floor`.
    pub fn decays_monotonically(&self, floor: T) -> bool {
        let limit = match self.forward_limit {
            Some(l) => l,
            None => return false,
        };
        let start = self.threshold.unwrap_or(self.k_range.0);
        let offs: Vec<T> = self.members.iter().filter(|m| m.k >= start).map(|m| (m.slack - limit).abs()).collect();
        offs.windows(2).filter(|w| w[0] > floor).all(|w| w[1] < w[0])
    }
}

pub fn twist_family<T: Real>(
    edge: &str,
    m1: &MoebiusElement<T>,
    m2: &MoebiusElement<T>,
    step: T,
    k_range: (i64, i64),
) -> Result<TwistFamily<T>, SlackError> {
    let n1 = bruhat_nau(m1)?;
    let n2 = bruhat_nau(m2)?;
    let limit = n1.t + n2.t;
    let mut members = Vec::new();
    let mut gaps = Vec::new();
    for k in k_range.0..=k_range.1 {
        let s = step * T::lit(k as f64);
        let value = match twisted_product_slack(m1, m2, s) {
            Ok(v) => v,
            Err(_) => {
                gaps.push(k);
                continue;
            }
        };
        let residual = match twist_correction(n1.u_param, n2.n_param, s) {
            Ok(c) => value - limit - c,
            Err(_) => {
                gaps.push(k);
                continue;
            }
        };
        members.push(TwistMember { k, slack: value, residual });
    }
    let mut threshold = None;
    for w in members.windows(2) {
        if w[1].k == w[0].k + 1 && (w[1].slack - w[0].slack).abs() < T::lit(LIMIT_DETECTION_TOL) {
            threshold = Some(w[0].k);
            break;
        }
    }
    let forward_limit = threshold.map(|_| limit);
    Ok(TwistFamily {
        edge: edge.to_string(),
        k_range,
        step,
        u_param: n1.u_param,
        n_param: n2.n_param,
        members,
        gaps,
        forward_limit,
        threshold,
        backward_limit: None,
        analytic_limit: limit,
    })
}

/// Length minus tau increment of a polyline in the upper half-plane.
pub fn geometric_slack<T: Real, F: Fn(&Complex<T>) -> T>(
    polyline: &[Complex<T>],
    tau: F,
) -> Result<SlackValue<T>, SlackError> {
    if polyline.len() < 2 {
        return Err(SlackError::ShortPolyline);
    }
    for z in polyline {
        if !(z.im > T::zero()) {
            return Err(MoebiusError::Domain { im: z.im.as_f64() }.into());
        }
    }
    let length = polyline.windows(2).fold(T::zero(), |acc, w| acc + dist_unchecked(w[0], w[1]));
    let dtau = tau(&polyline[polyline.len() - 1]) - tau(&polyline[0]);
    Ok(SlackValue { value: length - dtau, provenance: Provenance::Geometric })
}

/// Slack for the opposite end: tau replaced by `-tau`. Reversing the curve
/// exchanges the two, `S_+(alpha) = S_-(reversed alpha)`.
pub fn geometric_slack_minus<T: Real, F: Fn(&Complex<T>) -> T>(
    polyline: &[Complex<T>],
    tau: F,
) -> Result<SlackValue<T>, SlackError> {
    geometric_slack(polyline, |z| -tau(z))
}

/// Busemann function of the point at infinity.
pub fn busemann_tau<T: Real>(z: &Complex<T>) -> T {
    z.im.ln()
}

/// Hyperbolic distance from `z` to the geodesic segment `[a, b]`.
pub fn segment_distance<T: Real>(z: Complex<T>, a: Complex<T>, b: Complex<T>) -> T {
    let len = dist_unchecked(a, b);
    if len <= T::lit(T::DET_TOL) {
        return dist_unchecked(z, a);
    }
    let g = frame_of_tangent(&UnitTangent { basepoint: a, direction: departure_direction(a, b) });
    let w = g.apply(z);
    let s = (-w.norm().ln()).max(T::zero()).min(len);
    let foot = Complex::new(T::zero(), (-s).exp());
    dist_unchecked(w, foot)
}

/// Geodesic arc given by its initial unit tangent and length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Arc<T> {
    pub start: UnitTangent<T>,
    pub length: T,
}

impl<T: Real> Arc<T> {
    pub fn end(&self) -> UnitTangent<T> {
        flow_tangent(&self.start, self.length)
    }

    pub fn point(&self, s: T) -> Complex<T> {
        flow_tangent(&self.start, s).basepoint
    }

    /// Points spaced at most `step` apart, endpoints included.
    pub fn sample(&self, step: T) -> Vec<Complex<T>> {
        let n = (self.length / step).ceil().to_usize().unwrap_or(1).max(1);
        let g = frame_of_tangent(&self.start);
        let gi = g.inverse();
        (0..=n)
            .map(|j| {
                let s = self.length * T::lit(j as f64 / n as f64);
                gi.apply(Complex::new(T::zero(), (-s).exp()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BrokenChain<T> {
    pub segments: Vec<Arc<T>>,
    pub jump_total: T,
    pub min_segment_length: T,
}

impl<T: Real> BrokenChain<T> {
    pub fn new(segments: Vec<Arc<T>>, min_segment_length: T) -> Result<Self, SlackError> {
        if segments.is_empty() {
            return Err(SlackError::InvalidChain("no segments".into()));
        }
        if let Some(s) = segments.iter().find(|s| s.length < min_segment_length) {
            return Err(SlackError::InvalidChain(format!("segment of length {} below the floor", s.length)));
        }
        let mut jump_total = T::zero();
        for w in segments.windows(2) {
            jump_total = jump_total + t1_distance(&w[0].end(), &w[1].start)?;
        }
        Ok(Self { segments, jump_total, min_segment_length })
    }

    pub fn first_point(&self) -> Complex<T> {
        self.segments[0].start.basepoint
    }

    pub fn last_point(&self) -> Complex<T> {
        self.segments[self.segments.len() - 1].end().basepoint
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ComparisonReport<T> {
    pub straight_slack: T,
    pub sum_of_slacks: T,
    pub difference: T,
    pub epsilon: T,
    pub hausdorff: T,
    pub ratio: T,
    pub hausdorff_ratio: T,
}

/// Compares the slack of the geodesic joining the chain's endpoints with the
/// sum of the segment slacks, and measures how far the two curves are apart.
pub fn straighten_and_compare<T: Real, F: Fn(&Complex<T>) -> T>(
    chain: &BrokenChain<T>,
    tau: F,
    sample_step: T,
) -> ComparisonReport<T> {
    let p = chain.first_point();
    let q = chain.last_point();
    let straight = dist_unchecked(p, q) - (tau(&q) - tau(&p));
    let mut sum = T::zero();
    let mut ends = Vec::with_capacity(chain.segments.len());
    for s in &chain.segments {
        let e = s.end().basepoint;
        sum = sum + s.length - (tau(&e) - tau(&s.start.basepoint));
        ends.push((s.start.basepoint, e));
    }
    let difference = (straight - sum).abs();

    let mut h = T::zero();
    for s in &chain.segments {
        for z in s.sample(sample_step) {
            h = h.max(segment_distance(z, p, q));
        }
    }
    let straight_arc =
        Arc { start: UnitTangent { basepoint: p, direction: departure_direction(p, q) }, length: dist_unchecked(p, q) };
    for z in straight_arc.sample(sample_step) {
        let d = ends.iter().map(|&(a, b)| segment_distance(z, a, b)).fold(T::infinity(), T::min);
        h = h.max(d);
    }
    let eps = chain.jump_total;
    let (ratio, hausdorff_ratio) = if eps > T::zero() { (difference / eps, h / eps) } else { (T::zero(), T::zero()) };
    ComparisonReport {
        straight_slack: straight,
        sum_of_slacks: sum,
        difference,
        epsilon: eps,
        hausdorff: h,
        ratio,
        hausdorff_ratio,
    }
}

/// Moves `v` by a T1 displacement of size `size`: a base move of length `r`
/// in a random direction followed by a turn of `size - r`.
pub fn perturb_tangent<R: Rng>(v: &UnitTangent<f64>, size: f64, rng: &mut R) -> UnitTangent<f64> {
    let r = size * rng.gen::<f64>();
    let turn = (size - r) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let heading = rng.gen::<f64>() * std::f64::consts::TAU - std::f64::consts::PI;
    let mover = flow_tangent(&UnitTangent { basepoint: v.basepoint, direction: heading }, r);
    let moved = transport_direction(v.basepoint, mover.basepoint, v.direction);
    UnitTangent { basepoint: mover.basepoint, direction: wrap_angle(moved + turn) }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChainHarnessOptions {
    pub trials: usize,
    pub segments: usize,
    pub min_length: f64,
    pub max_length: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub sample_step: f64,
}

impl Default for ChainHarnessOptions {
    fn default() -> Self {
        Self {
            trials: 1000,
            segments: 10,
            min_length: 1.0,
            max_length: 2.0,
            eps_min: 1e-4,
            eps_max: 1e-1,
            sample_step: 0.02,
        }
    }
}

/// Random chain with total jump `eps` split at random over the breaks.
pub fn random_chain<R: Rng>(rng: &mut R, opts: &ChainHarnessOptions, eps: f64) -> BrokenChain<f64> {
    let start = UnitTangent {
        basepoint: Complex::new(rng.gen::<f64>() * 2.0 - 1.0, (rng.gen::<f64>() * 2.0 - 1.0).exp()),
        direction: rng.gen::<f64>() * std::f64::consts::TAU - std::f64::consts::PI,
    };
    let n = opts.segments;
    let weights: Vec<f64> = (1..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let wsum: f64 = weights.iter().sum();
    let mut segs = Vec::with_capacity(n);
    let mut cur = start;
    for i in 0..n {
        let len = opts.min_length + (opts.max_length - opts.min_length) * rng.gen::<f64>();
        let arc = Arc { start: cur, length: len };
        segs.push(arc);
        if i + 1 < n {
            cur = perturb_tangent(&arc.end(), eps * weights[i] / wsum, rng);
        }
    }
    BrokenChain::new(segs, opts.min_length).expect("lengths respect the floor")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainHarnessReport {
    pub trials: usize,
    pub kappa_hat: f64,
    pub hausdorff_hat: f64,
    pub worst_trial: usize,
}

/// Randomized straightening harness with tau the Busemann function of infinity.
pub fn chain_harness<R: Rng>(rng: &mut R, opts: &ChainHarnessOptions) -> ChainHarnessReport {
    let mut kappa = 0.0f64;
    let mut haus = 0.0f64;
    let mut worst = 0;
    let (lo, hi) = (opts.eps_min.ln(), opts.eps_max.ln());
    for t in 0..opts.trials {
        let eps = (lo + (hi - lo) * rng.gen::<f64>()).exp();
        let chain = random_chain(rng, opts, eps);
        let rep = straighten_and_compare(&chain, busemann_tau, opts.sample_step);
        if rep.ratio > kappa {
            kappa = rep.ratio;
            worst = t;
        }
        haus = haus.max(rep.hausdorff_ratio);
    }
    ChainHarnessReport { trials: opts.trials, kappa_hat: kappa, hausdorff_hat: haus, worst_trial: worst }
}

/// `asinh` with a Taylor branch for tiny arguments (truncation error below
/// `u^9 / 32`).
#[inline]
fn asinh_small(u: f64) -> f64 {
    if u < 1e-2 {
        let u2 = u * u;
        u * (1.0 - u2 * (1.0 / 6.0 - u2 * (3.0 / 40.0 - u2 * (5.0 / 112.0))))
    } else {
        u.asinh()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Polyline spacing.
    pub step: f64,
    /// The connector is cut where it comes this close to either axis lift.
    pub truncation: f64,
    /// Sample spacing along the two axis lifts for the McShane tau.
    pub tau_spacing: f64,
    /// How far behind the projection the axis samples reach.
    pub tau_reach: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { step: 1e-3, truncation: 1e-3, tau_spacing: 1e-2, tau_reach: 12.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub bruhat: f64,
    pub geometric: f64,
    pub difference: f64,
    pub polyline_points: usize,
}

/// Geometric slack of a connector measured in the target frame, where the
/// target lift is the imaginary axis (`tau = s` at `e^-s i`) and the source
/// lift is `P a_-s i` (`tau = s`), with tau the McShane extension of samples
/// on both lifts.
pub fn connector_geometric_slack(cand: &ConnectorCandidate, opts: &OracleOptions) -> Result<OracleReport, SlackError> {
    type M = MoebiusElement<f64>;
    let p_mat = cand.matrix;
    let p_inf = 1.0 / cand.n_param;
    let conn = GeodesicLine { xi_minus: BoundaryPoint::Finite(p_inf), xi_plus: BoundaryPoint::Finite(0.0) };
    let frame_inv = conn.standard_map();
    let point = |t: f64| (frame_inv * M::diag_a(-t)).apply(Complex::new(0.0, 1.0));
    let p_inv = p_mat.inverse();
    let dist_target = |z: Complex<f64>| (z.re.abs() / z.im).asinh();
    let dist_source = |z: Complex<f64>| {
        let w = p_inv.apply(z);
        (w.re.abs() / w.im).asinh()
    };
    // walk outwards from the connector midpoint region
    let mut t_end = 0.0;
    while dist_target(point(t_end)) > opts.truncation {
        t_end += 0.25;
        if t_end > 200.0 {
            return Err(SlackError::InvalidChain("connector never approaches the target lift".into()));
        }
    }
    let mut t_start = 0.0;
    while dist_source(point(t_start)) > opts.truncation {
        t_start -= 0.25;
        if t_start < -200.0 {
            return Err(SlackError::InvalidChain("connector never approaches the source lift".into()));
        }
    }
    let n = ((t_end - t_start) / opts.step).ceil() as usize;
    let h = (t_end - t_start) / n as f64;
    // points frame_inv(i q) with q = e^{-t} updated multiplicatively
    let (fa, fb, fc, fd) = (frame_inv.a, frame_inv.b, frame_inv.c, frame_inv.d);
    let at = |q: f64| {
        let (nr, ni) = (fb, fa * q);
        let (dr, di) = (fd, fc * q);
        let den = dr * dr + di * di;
        Complex::new((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    };
    let ratio = (-h).exp();
    let mut q = (-t_start).exp();
    let z0 = at(q);
    let mut prev = z0;
    let mut prev_sqrt = z0.im.sqrt();
    let mut length = 0.0;
    for j in 1..=n {
        q = if j == n { (-t_end).exp() } else { q * ratio };
        let z = at(q);
        let s = z.im.sqrt();
        let (dx, dy) = (z.re - prev.re, z.im - prev.im);
        length += 2.0 * asinh_small((dx * dx + dy * dy).sqrt() / (2.0 * s * prev_sqrt));
        prev = z;
        prev_sqrt = s;
    }
    let z1 = prev;
    let pts_len = n + 1;

    let target_line = |s: f64| Complex::new(0.0, (-s).exp());
    let source_line = |s: f64| (p_mat * M::diag_a(-s)).apply(Complex::new(0.0, 1.0));
    let s_target = -z1.norm().ln();
    let s_source = -p_inv.apply(z0).norm().ln();
    let mut samples: Vec<(Complex<f64>, f64)> = Vec::new();
    for (line, s_star) in [(&target_line as &dyn Fn(f64) -> Complex<f64>, s_target), (&source_line, s_source)] {
        for around in [s_target, s_source, s_star] {
            let m = (opts.tau_reach / opts.tau_spacing) as i64;
            for j in -m..=(1.0 / opts.tau_spacing) as i64 {
                let s = around + j as f64 * opts.tau_spacing;
                samples.push((line(s), s));
            }
        }
    }
    let tau = |z: &Complex<f64>| samples.iter().map(|(p, v)| v + dist_unchecked(*p, *z)).fold(f64::INFINITY, f64::min);
    let geo = length - (tau(&z1) - tau(&z0));
    Ok(OracleReport {
        bruhat: cand.raw_slack,
        geometric: geo,
        difference: (geo - cand.raw_slack).abs(),
        polyline_points: pts_len,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExcursionOptions {
    pub epsilon0: f64,
    pub trials: usize,
    /// Arc starting points are drawn within this distance of `i`.
    pub region_radius: f64,
    pub arc_length: f64,
    /// Tangents checked along each arc for the offset filter.
    pub checkpoints: usize,
}

impl Default for ExcursionOptions {
    fn default() -> Self {
        Self { epsilon0: 0.2, trials: 2000, region_radius: 1.0, arc_length: 1.0, checkpoints: 11 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcursionReport {
    pub delta: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub worst_arc: Option<Arc<f64>>,
}

/// Minimum of slack/length over random arcs staying `epsilon0` away (in T1)
/// from the given lines.
pub fn excursion_calibration<R: Rng, F: Fn(&Complex<f64>) -> f64>(
    lines: &[SampledLine],
    tau: F,
    opts: &ExcursionOptions,
    rng: &mut R,
) -> ExcursionReport {
    let i = Complex::new(0.0, 1.0);
    let mut delta = f64::INFINITY;
    let mut accepted = 0;
    let mut worst = None;
    for _ in 0..opts.trials {
        // uniform in hyperbolic area inside the region disc
        let r = (1.0 + (opts.region_radius.cosh() - 1.0) * rng.gen::<f64>()).acosh();
        let heading = rng.gen::<f64>() * std::f64::consts::TAU - std::f64::consts::PI;
        let base = flow_tangent(&UnitTangent { basepoint: i, direction: heading }, r).basepoint;
        let dir = rng.gen::<f64>() * std::f64::consts::TAU - std::f64::consts::PI;
        let arc = Arc { start: UnitTangent { basepoint: base, direction: dir }, length: opts.arc_length };
        let far = (0..opts.checkpoints).all(|j| {
            let s = opts.arc_length * j as f64 / (opts.checkpoints - 1).max(1) as f64;
            let v = flow_tangent(&arc.start, s);
            crate::cover::t1_offset_from_lines(lines, v.basepoint, v.direction) >= opts.epsilon0
        });
        if !far {
            continue;
        }
        accepted += 1;
        let ratio = (arc.length - (tau(&arc.end().basepoint) - tau(&arc.start.basepoint))) / arc.length;
        if ratio < delta {
            delta = ratio;
            worst = Some(arc);
        }
    }
    ExcursionReport { delta, accepted, rejected: opts.trials - accepted, worst_arc: worst }
}

/// Edge slack between two vertices for the matrix `v` and lift exponent `k`.
pub fn vertex_edge_slack(
    x: &VertexSpec,
    y: &VertexSpec,
    v: &MoebiusElement<f64>,
    k: i64,
) -> Result<SlackValue<f64>, SlackError> {
    let w = *v * y.matrix.pow(-k);
    edge_slack(&x.base_lift, &w, &y.base_lift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type M = MoebiusElement<f64>;

    #[test]
    fn edge_slack_examples() {
        let e = M::identity();
        assert!((edge_slack(&e, &M::diag_a(0.8), &e).unwrap().value - 0.8).abs() < 1e-15);
        let t = 2f64.ln();
        let v = M::diag_a(-t) * M::upper(1.0) * M::diag_a(t) * M::lower(1.0);
        let s = edge_slack(&e, &v, &e).unwrap();
        assert!((s.value - 2.0 * 1.5f64.ln()).abs() < 1e-14);
        assert_eq!(s.provenance, Provenance::Bruhat);
        assert!(matches!(edge_slack(&e, &M::diag_a(-0.5), &e), Err(SlackError::ConfigurationInvalid { .. })));
        assert_eq!(edge_slack(&e, &M::diag_a(-1e-8), &e).unwrap().value, 0.0);
    }

    #[test]
    fn twist_correction_examples() {
        assert!((twist_correction(1.0, 1.0, 0.0).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(twist_correction(0.0, 3.0, 1.7).unwrap(), 0.0);
        assert!(matches!(twist_correction(1.0, -1.0, 0.0), Err(SlackError::DegenerateTwist { .. })));
    }

    #[test]
    fn unipotent_twist_family() {
        let c = 1.3;
        let fam = twist_family("u1.n1", &M::upper(1.0), &M::lower(1.0), c, (0, 40)).unwrap();
        assert_eq!(fam.analytic_limit, 0.0);
        for m in &fam.members {
            let expect = 2.0 * (1.0 + (-(m.k as f64) * c).exp()).ln();
            assert!((m.slack - expect).abs() < 1e-14);
        }
        assert!(fam.threshold.is_some());
        assert!(fam.max_residual_past_threshold().unwrap() < 1e-8);
        assert!(fam.decays_monotonically(1e-13));
        assert!(fam.backward_limit.is_none());

        let flat = twist_family("flat", &M::diag_a(0.5), &M::lower(2.0), c, (0, 10)).unwrap();
        assert!(flat.members.iter().all(|m| (m.slack - 0.5).abs() < 1e-15));
    }

    #[test]
    fn geometric_slack_examples() {
        let i = Complex::new(0.0f64, 1.0);
        let s = geometric_slack(&[i, Complex::new(0.0, 2.0)], busemann_tau).unwrap();
        assert!(s.value.abs() < 1e-15);
        let s = geometric_slack(&[i, Complex::new(1.0, 1.0)], busemann_tau).unwrap();
        assert!((s.value - 1.5f64.acosh()).abs() < 1e-14);
        let loop_ = [i, Complex::new(1.0, 2.0), Complex::new(-0.5, 0.7), i];
        let s = geometric_slack(&loop_, busemann_tau).unwrap();
        let len: f64 = loop_.windows(2).map(|w| dist_unchecked(w[0], w[1])).sum();
        assert!((s.value - len).abs() < 1e-15);
        assert!(geometric_slack(&[i, Complex::new(0.0, -1.0)], busemann_tau).is_err());
    }

    #[test]
    fn collinear_chain_has_no_defect() {
        let v = UnitTangent::new(Complex::new(0.2, 1.5), 0.7).unwrap();
        let a = Arc { start: v, length: 1.5 };
        let b = Arc { start: a.end(), length: 1.2 };
        let chain = BrokenChain::new(vec![a, b], 1.0).unwrap();
        assert!(chain.jump_total < 1e-12);
        let rep = straighten_and_compare(&chain, busemann_tau, 0.01);
        assert!(rep.difference < 1e-12);
        assert!(rep.hausdorff < 1e-7);
    }

    #[test]
    fn single_jump_is_small_multiple() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = UnitTangent::new(Complex::new(0.0, 1.0), 0.3).unwrap();
        let a = Arc { start: v, length: 1.5 };
        let eps = 1e-3;
        let b = Arc { start: perturb_tangent(&a.end(), eps, &mut rng), length: 1.5 };
        let chain = BrokenChain::new(vec![a, b], 1.0).unwrap();
        assert!((chain.jump_total - eps).abs() < 1e-12);
        let rep = straighten_and_compare(&chain, busemann_tau, 0.01);
        assert!(rep.ratio < 5.0, "{rep:?}");
    }

    #[test]
    fn asinh_branch_matches() {
        for u in [0.0, 1e-9, 3e-4, 5e-3, 9.99e-3, 1e-2, 0.3] {
            assert!((asinh_small(u) - u.asinh()).abs() <= 1e-17 + 1e-15 * u, "{u}");
        }
    }

    #[test]
    fn segment_distance_endpoints() {
        let a = Complex::new(0.0, 1.0);
        let b = Complex::new(0.0, 3.0);
        assert!(segment_distance(Complex::new(0.0, 2.0), a, b) < 1e-12);
        assert!((segment_distance(Complex::new(0.0, 0.5), a, b) - 2f64.ln()).abs() < 1e-12);
        let z = Complex::new(1.0, 2.0);
        let d = segment_distance(z, a, b);
        assert!((d - (0.5f64).asinh()).abs() < 1e-12);
    }

    #[test]
    fn slack_minus_reverses() {
        let pts = [Complex::new(0.0f64, 1.0), Complex::new(0.0, 0.5)];
        // downward vertical: plus-slack 2 ln 2, minus-slack 0
        assert!((geometric_slack(&pts, busemann_tau).unwrap().value - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!(geometric_slack_minus(&pts, busemann_tau).unwrap().value.abs() < 1e-14);
        let path = [Complex::new(0.3, 1.0), Complex::new(1.0, 2.5), Complex::new(-0.4, 0.8)];
        let rev: Vec<_> = path.iter().rev().copied().collect();
        let plus: f64 = geometric_slack(&path, busemann_tau).unwrap().value;
        let minus = geometric_slack_minus(&rev, busemann_tau).unwrap().value;
        assert!((plus - minus).abs() < 1e-14);
    }
}
