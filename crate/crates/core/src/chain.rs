//! Chain proximality on discretized dynamical systems: epsilon-interception
//! costs by layered min-plus propagation, proximality classes and the
//! (b, epsilon)-chain recurrence search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("index {0} out of range")]
    BadIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapDirection {
    /// Shrinks under forward iteration from its anchor.
    Forward,
    /// Shrinks under backward iteration from its anchor.
    Backward,
    Both,
}

/// Orbit of gaps: the boundary at orbit index `j` from `anchor` has size
/// `length * rate^e(j)` with `e` set by the direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GapOrbit<T> {
    /// Anchor as a fraction of the circle.
    pub anchor: T,
    pub length: T,
    pub rate: T,
    pub direction: GapDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LaminarComponent<T> {
    pub alpha: T,
    pub gaps: Vec<GapOrbit<T>>,
    /// Length carried by each sample interval besides the gaps.
    #[serde(default)]
    pub measure: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec<T> {
    Rotation {
        alpha: T,
    },
    /// `permutation[i]` is the slot of interval `i` after the map.
    Iet {
        lengths: Vec<T>,
        permutation: Vec<usize>,
    },
    /// `x -> 2x` on samples jittered by up to `jitter` of a spacing.
    Doubling {
        #[serde(default)]
        jitter: T,
    },
    Laminar {
        components: Vec<LaminarComponent<T>>,
        separation: T,
    },
    /// Points `p_0 < ... < p_{K-1}` on a line with steps `first_step *
    /// growth^k`, then a fixed point `gap` beyond the last.
    Absorbing {
        first_step: T,
        growth: T,
        gap: T,
    },
    Custom {
        distances: Vec<Vec<T>>,
        sigma: Vec<usize>,
    },
}

impl<T: Real> ModelSpec<T> {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelSpec::Rotation { .. } => "rotation",
            ModelSpec::Iet { .. } => "iet",
            ModelSpec::Doubling { .. } => "doubling",
            ModelSpec::Laminar { .. } => "laminar",
            ModelSpec::Absorbing { .. } => "absorbing",
            ModelSpec::Custom { .. } => "custom",
        }
    }
}

/// Metric structure of the sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry<T> {
    /// Circles occupying contiguous index ranges, positions increasing
    /// within each; distinct circles are `separation` apart.
    Circles {
        starts: Vec<usize>,
        circumference: Vec<T>,
        position: Vec<T>,
        component: Vec<usize>,
        separation: T,
    },
    /// Increasing positions on a line.
    Line {
        position: Vec<T>,
    },
    Matrix {
        distances: Vec<Vec<T>>,
    },
}

impl<T: Real> Geometry<T> {
    pub fn len(&self) -> usize {
        match self {
            Geometry::Circles { position, .. } | Geometry::Line { position } => position.len(),
            Geometry::Matrix { distances } => distances.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn distance(&self, i: usize, j: usize) -> T {
        match self {
            Geometry::Circles { circumference, position, component, separation, .. } => {
                if component[i] != component[j] {
                    *separation
                } else {
                    let d = (position[i] - position[j]).abs();
                    d.min(circumference[component[i]] - d)
                }
            }
            Geometry::Line { position } => (position[i] - position[j]).abs(),
            Geometry::Matrix { distances } => distances[i][j],
        }
    }

    fn range(&self, comp: usize) -> (usize, usize) {
        match self {
            Geometry::Circles { starts, position, .. } => {
                (starts[comp], starts.get(comp + 1).copied().unwrap_or(position.len()))
            }
            _ => (0, self.len()),
        }
    }

    /// Indices within distance `r` of `i`, including `i`, ascending.
    pub fn ball(&self, i: usize, r: T) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            Geometry::Circles { position, component, .. } => {
                let (lo, hi) = self.range(component[i]);
                let mut v = Vec::new();
                // forward then backward along the circle
                for k in 1..(hi - lo) {
                    let j = lo + (i - lo + k) % (hi - lo);
                    if self.distance(i, j) > r && (position[j] - position[i]).abs() > T::zero() {
                        break;
                    }
                    v.push(j);
                }
                for k in 1..(hi - lo) {
                    let j = lo + (i + (hi - lo) - lo - k) % (hi - lo);
                    if self.distance(i, j) > r && (position[j] - position[i]).abs() > T::zero() {
                        break;
                    }
                    v.push(j);
                }
                v.push(i);
                v.retain(|&j| self.distance(i, j) <= r);
                v
            }
            Geometry::Line { position } => {
                let lo = position.partition_point(|&p| p < position[i] - r);
                let hi = position.partition_point(|&p| p <= position[i] + r);
                (lo..hi).collect()
            }
            Geometry::Matrix { distances } => (0..distances.len()).filter(|&j| distances[i][j] <= r).collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    /// `f(z) = min_j b(j) + d(z, j)` with the minimizing `j`; ties go to
    /// the lowest index.
    pub fn transform(&self, b: &[T], f: &mut [T], arg: &mut [usize]) {
        let n = self.len();
        match self {
            Geometry::Circles { circumference, position, component, separation, starts } => {
                for (c, _) in starts.iter().enumerate() {
                    let (lo, hi) = self.range(c);
                    circle_transform(
                        &position[lo..hi],
                        circumference[c],
                        &b[lo..hi],
                        &mut f[lo..hi],
                        &mut arg[lo..hi],
                        lo,
                    );
                }
                if starts.len() > 1 {
                    // best value per component for cross jumps
                    let mut best: Vec<(T, usize)> = vec![(T::infinity(), usize::MAX); starts.len()];
                    for (j, &bj) in b.iter().enumerate() {
                        let c = component[j];
                        if bj < best[c].0 {
                            best[c] = (bj, j);
                        }
                    }
                    for z in 0..n {
                        for (c, &(v, j)) in best.iter().enumerate() {
                            if c != component[z] && v + *separation < f[z] {
                                f[z] = v + *separation;
                                arg[z] = j;
                            }
                        }
                    }
                }
            }
            Geometry::Line { position } => line_transform(position, b, f, arg),
            Geometry::Matrix { distances } => {
                for z in 0..n {
                    f[z] = T::infinity();
                    arg[z] = usize::MAX;
                    for j in 0..n {
                        let v = b[j] + distances[z][j];
                        if v < f[z] {
                            f[z] = v;
                            arg[z] = j;
                        }
                    }
                }
            }
        }
    }
}

fn better<T: Real>(v: T, j: usize, cur: T, cj: usize) -> bool {
    v < cur || (v == cur && j < cj)
}

fn line_transform<T: Real>(pos: &[T], b: &[T], f: &mut [T], arg: &mut [usize]) {
    let n = pos.len();
    for z in 0..n {
        f[z] = b[z];
        arg[z] = if b[z].is_finite() { z } else { usize::MAX };
    }
    for z in 1..n {
        let v = f[z - 1] + (pos[z] - pos[z - 1]);
        if better(v, arg[z - 1], f[z], arg[z]) {
            f[z] = v;
            arg[z] = arg[z - 1];
        }
    }
    for z in (0..n.saturating_sub(1)).rev() {
        let v = f[z + 1] + (pos[z + 1] - pos[z]);
        if better(v, arg[z + 1], f[z], arg[z]) {
            f[z] = v;
            arg[z] = arg[z + 1];
        }
    }
}

fn circle_transform<T: Real>(pos: &[T], circ: T, b: &[T], f: &mut [T], arg: &mut [usize], offset: usize) {
    let n = pos.len();
    if n == 0 {
        return;
    }
    for z in 0..n {
        f[z] = b[z];
        arg[z] = if b[z].is_finite() { z + offset } else { usize::MAX };
    }
    let mut relax = |p: usize, z: usize, d: T| -> bool {
        let v = f[p] + d;
        if better(v, arg[p], f[z], arg[z]) {
            f[z] = v;
            arg[z] = arg[p];
            true
        } else {
            false
        }
    };
    let wrap = circ - pos[n - 1] + pos[0];
    // forward sweep, then keep going past the seam while values improve
    for z in 1..n {
        relax(z - 1, z, pos[z] - pos[z - 1]);
    }
    if n > 1 && relax(n - 1, 0, wrap) {
        for z in 1..n {
            if !relax(z - 1, z, pos[z] - pos[z - 1]) {
                break;
            }
        }
    }
    for z in (0..n - 1).rev() {
        relax(z + 1, z, pos[z + 1] - pos[z]);
    }
    if n > 1 && relax(0, n - 1, wrap) {
        for z in (0..n - 1).rev() {
            if !relax(z + 1, z, pos[z + 1] - pos[z]) {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DiscretizedSystem<T> {
    pub model: ModelSpec<T>,
    pub geometry: Geometry<T>,
    pub sigma: Vec<usize>,
    /// Largest distance between consecutive samples.
    pub h: T,
    /// Length of the orbit segment from `i` to `sigma(i)`.
    pub segment: Vec<T>,
}

fn frac<T: Real>(x: T) -> T {
    x - x.floor()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn mod_inverse(a: usize, n: usize) -> usize {
    let (mut t, mut new_t) = (0i64, 1i64);
    let (mut r, mut new_r) = (n as i64, a as i64);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    t.rem_euclid(n as i64) as usize
}

/// Index of the sample nearest to `x` on a sorted circle of samples in `[0, 1)`.
fn nearest_on_circle<T: Real>(pos: &[T], x: T) -> usize {
    let n = pos.len();
    let k = pos.partition_point(|&p| p < x);
    let cand = [(k + n - 1) % n, k % n];
    let d = |j: usize| {
        let d = (pos[j] - x).abs();
        d.min(T::one() - d)
    };
    if d(cand[1]) < d(cand[0]) || (d(cand[1]) == d(cand[0]) && cand[1] < cand[0]) {
        cand[1]
    } else {
        cand[0]
    }
}

/// Quasi-random offset in `[-1/2, 1/2)`.
fn weyl<T: Real>(k: usize) -> T {
    frac(T::lit(k as f64 * 0.618_033_988_749_894_9)) - T::lit(0.5)
}

fn unit_circle<T: Real>(model: ModelSpec<T>, pos: Vec<T>, sigma: Vec<usize>) -> DiscretizedSystem<T> {
    let n = pos.len();
    let mut h = T::zero();
    for k in 0..n {
        let next = if k + 1 < n { pos[k + 1] } else { pos[0] + T::one() };
        h = h.max(next - pos[k]);
    }
    DiscretizedSystem {
        model,
        geometry: Geometry::Circles {
            starts: vec![0],
            circumference: vec![T::one()],
            position: pos,
            component: vec![0; n],
            separation: T::one(),
        },
        sigma,
        h,
        segment: vec![T::one(); n],
    }
}

/// Samples the model with `n` points (per component for laminar models,
/// transient points plus one fixed point for absorbing ones).
pub fn discretize<T: Real>(model: &ModelSpec<T>, n: usize) -> Result<DiscretizedSystem<T>, ChainError> {
    let bad = |s: &str| Err(ChainError::InvalidModel(s.to_string()));
    if n < 2 {
        return bad("need at least two samples");
    }
    let nf = T::lit(n as f64);
    match model {
        ModelSpec::Rotation { alpha } => {
            if !alpha.is_finite() {
                return bad("rotation number must be finite");
            }
            let pos: Vec<T> = (0..n).map(|k| T::lit(k as f64) / nf).collect();
            let sigma = pos.iter().map(|&x| nearest_on_circle(&pos, frac(x + *alpha))).collect();
            Ok(unit_circle(model.clone(), pos, sigma))
        }
        ModelSpec::Iet { lengths, permutation } => {
            let d = lengths.len();
            if d == 0 || permutation.len() != d {
                return bad("lengths and permutation must have equal nonzero length");
            }
            if lengths.iter().any(|&l| !(l > T::zero())) {
                return bad("interval lengths must be positive");
            }
            let total = lengths.iter().fold(T::zero(), |a, &b| a + b);
            if (total - T::one()).abs() > T::lit(1e-9) {
                return bad("interval lengths must sum to 1");
            }
            let mut seen = vec![false; d];
            for &p in permutation {
                if p >= d || seen[p] {
                    return bad("permutation is not a bijection");
                }
                seen[p] = true;
            }
            let mut start = vec![T::zero(); d];
            for i in 1..d {
                start[i] = start[i - 1] + lengths[i - 1];
            }
            let mut image = vec![T::zero(); d];
            for i in 0..d {
                image[i] = (0..d).filter(|&j| permutation[j] < permutation[i]).fold(T::zero(), |a, j| a + lengths[j]);
            }
            let pos: Vec<T> = (0..n).map(|k| T::lit(k as f64) / nf).collect();
            let sigma = pos
                .iter()
                .map(|&x| {
                    let i = (0..d).rev().find(|&i| x >= start[i]).unwrap_or(0);
                    nearest_on_circle(&pos, frac(x - start[i] + image[i]))
                })
                .collect();
            Ok(unit_circle(model.clone(), pos, sigma))
        }
        ModelSpec::Doubling { jitter } => {
            if !(*jitter >= T::zero() && *jitter < T::lit(0.5)) {
                return bad("jitter must lie in [0, 0.5)");
            }
            let pos: Vec<T> = (0..n).map(|k| frac((T::lit(k as f64) + *jitter * weyl::<T>(k)) / nf)).collect();
            let mut pos = pos;
            pos.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let sigma = pos.iter().map(|&x| nearest_on_circle(&pos, frac(T::lit(2.0) * x))).collect();
            Ok(unit_circle(model.clone(), pos, sigma))
        }
        ModelSpec::Laminar { components, separation } => {
            if components.is_empty() {
                return bad("no components");
            }
            let mut starts = Vec::new();
            let mut circumference = Vec::new();
            let mut position = Vec::new();
            let mut component = Vec::new();
            let mut sigma = Vec::new();
            let mut h = T::zero();
            let mut max_circ = T::zero();
            for (c, comp) in components.iter().enumerate() {
                if comp.gaps.iter().any(|g| !(g.rate > T::zero() && g.rate < T::one()) || !(g.length > T::zero())) {
                    return bad("gap rates must lie in (0, 1) and lengths be positive");
                }
                if comp.measure < T::zero() {
                    return bad("measure part must be nonnegative");
                }
                let mut a = (frac(comp.alpha) * nf).round().to_usize().unwrap_or(1) % n;
                if a == 0 {
                    a = 1;
                }
                while gcd(a, n) != 1 {
                    a = (a + 1) % n;
                }
                let inv = mod_inverse(a, n);
                let base = position.len();
                starts.push(base);
                // boundary k sits between samples k and k + 1
                let mut gap = vec![comp.measure / nf; n];
                for g in &comp.gaps {
                    let anchor = (frac(g.anchor) * nf).floor().to_usize().unwrap_or(0) % n;
                    for (k, gk) in gap.iter_mut().enumerate() {
                        let j = ((k + n - anchor) % n * inv) % n;
                        let e = match g.direction {
                            GapDirection::Forward => j,
                            GapDirection::Backward => (n - j) % n,
                            GapDirection::Both => j.min(n - j),
                        };
                        *gk = *gk + g.length * g.rate.powi(e as i32);
                    }
                }
                let mut p = T::zero();
                for k in 0..n {
                    position.push(p);
                    component.push(c);
                    sigma.push(base + (k + a) % n);
                    p = p + gap[k];
                    h = h.max(gap[k]);
                }
                circumference.push(p);
                max_circ = max_circ.max(p);
            }
            if T::lit(2.0) * *separation < max_circ / T::lit(2.0) {
                return bad("separation too small for the triangle inequality");
            }
            let total = position.len();
            Ok(DiscretizedSystem {
                model: model.clone(),
                geometry: Geometry::Circles { starts, circumference, position, component, separation: *separation },
                sigma,
                h,
                segment: vec![T::one(); total],
            })
        }
        ModelSpec::Absorbing { first_step, growth, gap } => {
            if !(*first_step > T::zero() && *growth > T::zero() && *gap > T::zero()) {
                return bad("absorbing parameters must be positive");
            }
            let k = n - 1;
            let mut position = Vec::with_capacity(n);
            let mut p = T::zero();
            let mut step = *first_step;
            for i in 0..k {
                position.push(p);
                if i + 1 < k {
                    p = p + step;
                    step = step * *growth;
                }
            }
            position.push(p + *gap);
            let mut h = T::zero();
            for w in position.windows(2) {
                h = h.max(w[1] - w[0]);
            }
            let sigma = (0..n).map(|i| (i + 1).min(n - 1)).collect();
            Ok(DiscretizedSystem {
                model: model.clone(),
                geometry: Geometry::Line { position },
                sigma,
                h,
                segment: vec![T::one(); n],
            })
        }
        ModelSpec::Custom { distances, sigma } => {
            let m = distances.len();
            if m < 2 || sigma.len() != m || distances.iter().any(|r| r.len() != m) || sigma.iter().any(|&s| s >= m) {
                return bad("custom model needs a square matrix and a total map");
            }
            for i in 0..m {
                for j in 0..m {
                    let d = distances[i][j];
                    if !(d >= T::zero()) || (d - distances[j][i]).abs() > T::lit(1e-12) || (i == j && d != T::zero()) {
                        return bad("distances must be symmetric, nonnegative and zero on the diagonal");
                    }
                }
            }
            let h = (0..m)
                .map(|i| (0..m).filter(|&j| j != i).map(|j| distances[i][j]).fold(T::infinity(), T::min))
                .fold(T::zero(), T::max);
            Ok(DiscretizedSystem {
                model: model.clone(),
                geometry: Geometry::Matrix { distances: distances.clone() },
                sigma: sigma.clone(),
                h,
                segment: vec![T::one(); m],
            })
        }
    }
}

impl<T: Real> DiscretizedSystem<T> {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> T {
        self.geometry.distance(i, j)
    }

    pub fn iterate(&self, mut i: usize, m: usize) -> usize {
        for _ in 0..m {
            i = self.sigma[i];
        }
        i
    }

    /// Largest violation of the triangle inequality and of symmetry over
    /// the given index triples.
    pub fn metric_defect(&self, triples: &[(usize, usize, usize)]) -> T {
        let mut worst = T::zero();
        for &(a, b, c) in triples {
            let (ab, bc, ac) = (self.distance(a, b), self.distance(b, c), self.distance(a, c));
            worst = worst.max(ac - ab - bc).max((ab - self.distance(b, a)).abs());
            if ab < T::zero() {
                worst = worst.max(-ab);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChainStep<T> {
    /// Point reached after the free move and the jump.
    pub index: usize,
    pub jump_cost: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct InterceptionCertificate<T> {
    pub start: usize,
    pub target: usize,
    pub horizon: usize,
    pub chain: Vec<ChainStep<T>>,
    pub total_cost: T,
}

impl<T: Real> InterceptionCertificate<T> {
    /// Re-simulates the chain; returns the recomputed cost when every jump
    /// cost is exact and the end lies within `h` of `sigma^m(target)`.
    pub fn replay(&self, sys: &DiscretizedSystem<T>) -> Option<T> {
        if self.chain.len() != self.horizon {
            return None;
        }
        let mut cur = self.start;
        let mut total = T::zero();
        for s in &self.chain {
            let moved = sys.sigma[cur];
            let d = sys.distance(moved, s.index);
            if d != s.jump_cost {
                return None;
            }
            total = total + d;
            cur = s.index;
        }
        let aim = sys.iterate(self.target, self.horizon);
        (sys.distance(cur, aim) <= sys.h && total == self.total_cost).then_some(total)
    }
}

struct Layers<T> {
    cur: Vec<T>,
    bucket: Vec<T>,
    from: Vec<usize>,
    next: Vec<T>,
    arg: Vec<usize>,
}

impl<T: Real> Layers<T> {
    fn new(n: usize, start: usize) -> Self {
        let mut cur = vec![T::infinity(); n];
        cur[start] = T::zero();
        Self {
            cur,
            bucket: vec![T::infinity(); n],
            from: vec![usize::MAX; n],
            next: vec![T::infinity(); n],
            arg: vec![usize::MAX; n],
        }
    }

    /// One free move followed by an optional jump.
    fn advance(&mut self, sys: &DiscretizedSystem<T>) {
        self.bucket.iter_mut().for_each(|b| *b = T::infinity());
        self.from.iter_mut().for_each(|f| *f = usize::MAX);
        for (w, &v) in self.cur.iter().enumerate() {
            let j = sys.sigma[w];
            if v < self.bucket[j] {
                self.bucket[j] = v;
                self.from[j] = w;
            }
        }
        sys.geometry.transform(&self.bucket, &mut self.next, &mut self.arg);
        std::mem::swap(&mut self.cur, &mut self.next);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Interception<T> {
    pub cost: T,
    pub horizon: Option<usize>,
    pub certificate: Option<InterceptionCertificate<T>>,
}

/// Minimal epsilon-interception cost of `y` by `x` over horizons `m <= max_m`.
pub fn interception_cost<T: Real>(
    sys: &DiscretizedSystem<T>,
    x: usize,
    y: usize,
    max_m: usize,
) -> Result<Interception<T>, ChainError> {
    let n = sys.len();
    if x >= n {
        return Err(ChainError::BadIndex(x));
    }
    if y >= n {
        return Err(ChainError::BadIndex(y));
    }
    let mut lay = Layers::new(n, x);
    let mut history: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(max_m);
    let mut best = (T::infinity(), None, usize::MAX);
    let mut aim = y;
    for m in 0..=max_m {
        if m > 0 {
            lay.advance(sys);
            history.push((lay.from.clone(), lay.arg.clone()));
            aim = sys.sigma[aim];
        }
        for z in sys.geometry.ball(aim, sys.h) {
            if lay.cur[z] < best.0 {
                best = (lay.cur[z], Some(m), z);
            }
        }
    }
    let (cost, horizon, end) = best;
    let certificate = horizon.map(|m| {
        let mut chain = Vec::with_capacity(m);
        let mut z = end;
        for layer in (0..m).rev() {
            let (from, arg) = &history[layer];
            let j = arg[z];
            let w = from[j];
            chain.push(ChainStep { index: z, jump_cost: sys.distance(sys.sigma[w], z) });
            z = w;
        }
        chain.reverse();
        let total_cost = chain.iter().fold(T::zero(), |a, s| a + s.jump_cost);
        InterceptionCertificate { start: x, target: y, horizon: m, chain, total_cost }
    });
    Ok(Interception { cost, horizon, certificate })
}

/// Costs from `x` to every target, without certificates. If `stop_below` is
/// given, propagation stops once every point of a layer is cheaper than it;
/// the returned values are then upper bounds below `stop_below`.
pub fn cost_row<T: Real>(sys: &DiscretizedSystem<T>, x: usize, max_m: usize, stop_below: Option<T>) -> Vec<T> {
    let n = sys.len();
    let balls: Vec<Vec<usize>> = (0..n).map(|i| sys.geometry.ball(i, sys.h)).collect();
    cost_row_with(sys, x, max_m, stop_below, &balls)
}

fn cost_row_with<T: Real>(
    sys: &DiscretizedSystem<T>,
    x: usize,
    max_m: usize,
    stop_below: Option<T>,
    balls: &[Vec<usize>],
) -> Vec<T> {
    let n = sys.len();
    let mut lay = Layers::new(n, x);
    let mut best = vec![T::infinity(); n];
    let mut aim: Vec<usize> = (0..n).collect();
    for m in 0..=max_m {
        if m > 0 {
            lay.advance(sys);
            for a in aim.iter_mut() {
                *a = sys.sigma[*a];
            }
        }
        for (y, &a) in aim.iter().enumerate() {
            for &z in &balls[a] {
                if lay.cur[z] < best[y] {
                    best[y] = lay.cur[z];
                }
            }
        }
        if let Some(s) = stop_below {
            if lay.cur.iter().all(|&v| v < s) {
                break;
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AsymmetricPair<T> {
    pub x: usize,
    pub y: usize,
    pub forward: T,
    pub backward: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ProximalityPartition<T> {
    pub classes: Vec<Vec<usize>>,
    pub threshold: T,
    pub horizon: usize,
    pub asymmetric: Vec<AsymmetricPair<T>>,
    /// Pairs in a common class with some direction at or above threshold.
    pub within_class_violations: usize,
    /// Certificates for the union edges, up to the requested number.
    pub witnesses: Vec<InterceptionCertificate<T>>,
    /// Whether sigma maps every class into the `h`-neighbourhood of one
    /// class; only decided when all points are probed.
    pub sigma_invariant: Option<bool>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Union-find over probe pairs with both interception costs below `eps`.
pub fn classify<T: Real>(
    sys: &DiscretizedSystem<T>,
    eps: T,
    max_m: usize,
    probes: Option<&[usize]>,
    max_witnesses: usize,
) -> Result<ProximalityPartition<T>, ChainError> {
    let n = sys.len();
    let all: Vec<usize> = (0..n).collect();
    let probes = probes.unwrap_or(&all);
    if let Some(&bad) = probes.iter().find(|&&p| p >= n) {
        return Err(ChainError::BadIndex(bad));
    }
    let k = probes.len();
    let words = k.div_ceil(64);
    let mut below = vec![0u64; k * words];
    let balls: Vec<Vec<usize>> = (0..n).map(|i| sys.geometry.ball(i, sys.h)).collect();
    for (a, &x) in probes.iter().enumerate() {
        let row = cost_row_with(sys, x, max_m, Some(eps), &balls);
        for (b, &y) in probes.iter().enumerate() {
            if row[y] < eps {
                below[a * words + b / 64] |= 1 << (b % 64);
            }
        }
    }
    let bit = |a: usize, b: usize| below[a * words + b / 64] >> (b % 64) & 1 == 1;
    let mut uf = UnionFind::new(k);
    let mut tree = Vec::new();
    let mut odd = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            let (f, r) = (bit(a, b), bit(b, a));
            if f && r {
                if uf.union(a, b) {
                    tree.push((a, b));
                }
            } else if f != r {
                odd.push((a, b));
            }
        }
    }
    let mut asymmetric = Vec::new();
    for (a, b) in odd {
        let (x, y) = (probes[a], probes[b]);
        asymmetric.push(AsymmetricPair {
            x,
            y,
            forward: interception_cost(sys, x, y, max_m)?.cost,
            backward: interception_cost(sys, y, x, max_m)?.cost,
        });
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for a in 0..k {
        groups.entry(uf.find(a)).or_default().push(a);
    }
    let mut within_class_violations = 0;
    for members in groups.values() {
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                if !(bit(a, b) && bit(b, a)) {
                    within_class_violations += 1;
                }
            }
        }
    }
    let mut witnesses = Vec::new();
    for &(a, b) in tree.iter().take(max_witnesses) {
        if let Some(c) = interception_cost(sys, probes[a], probes[b], max_m)?.certificate {
            witnesses.push(c);
        }
    }
    let classes: Vec<Vec<usize>> = groups.values().map(|m| m.iter().map(|&a| probes[a]).collect()).collect();
    let sigma_invariant = (k == n).then(|| {
        let mut class_of = vec![0usize; n];
        for (c, members) in classes.iter().enumerate() {
            for &x in members {
                class_of[x] = c;
            }
        }
        classes.iter().all(|members| {
            let mut targets: Vec<usize> = members.iter().map(|&x| class_of[sys.sigma[x]]).collect();
            targets.sort_unstable();
            targets.dedup();
            // images may spill only into points within h of the main class
            let main = targets[0];
            members.iter().all(|&x| {
                let s = sys.sigma[x];
                class_of[s] == main || balls[s].iter().any(|&z| class_of[z] == main)
            })
        })
    });
    Ok(ProximalityPartition {
        classes,
        threshold: eps,
        horizon: max_m,
        asymmetric,
        within_class_violations,
        witnesses,
        sigma_invariant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RecurrenceJump<T> {
    pub from: usize,
    pub to: usize,
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChainRecurrence<T> {
    pub recurrent: bool,
    /// Visited points in order, ending at the start point.
    pub path: Vec<usize>,
    /// Jumps between orbit segments, including the closing one unless it is
    /// trivial.
    pub jumps: Vec<RecurrenceJump<T>>,
    pub segments: Vec<T>,
}

/// Searches for a cycle through `x` of orbit segments of length at least `b`
/// joined by jumps of size at most `eps`, within `horizon` map steps.
pub fn chain_recurrent<T: Real>(
    sys: &DiscretizedSystem<T>,
    x: usize,
    b: T,
    eps: T,
    horizon: usize,
) -> Result<ChainRecurrence<T>, ChainError> {
    let n = sys.len();
    if x >= n {
        return Err(ChainError::BadIndex(x));
    }
    if !(b > T::zero() && eps > T::zero()) {
        return Err(ChainError::InvalidModel("b and eps must be positive".into()));
    }
    #[derive(Clone, Copy)]
    enum Pred {
        None,
        Flow(usize),
        Jump(usize),
    }
    let unreached = -T::one();
    let balls: Vec<Vec<usize>> = (0..n).map(|i| sys.geometry.ball(i, eps)).collect();
    let mut acc = vec![unreached; n];
    acc[x] = T::zero();
    let mut layers: Vec<(Vec<T>, Vec<Pred>)> = Vec::new();
    let mut pred = vec![Pred::None; n];
    for t in 0..=horizon {
        // jumps inside the layer
        let ready: Vec<usize> = (0..n).filter(|&i| acc[i] >= b).collect();
        if t > 0 {
            if let Some(&end) = ready.iter().find(|&&i| balls[i].contains(&x)) {
                layers.push((acc.clone(), pred.clone()));
                return Ok(rebuild(sys, x, end, &layers, b));
            }
        }
        for &i in &ready {
            for &j in &balls[i] {
                if acc[j] < T::zero() {
                    acc[j] = T::zero();
                    pred[j] = Pred::Jump(i);
                }
            }
        }
        layers.push((acc.clone(), pred.clone()));
        if t == horizon {
            break;
        }
        let mut next = vec![unreached; n];
        let mut next_pred = vec![Pred::None; n];
        for i in 0..n {
            if acc[i] >= T::zero() {
                let j = sys.sigma[i];
                let v = (acc[i] + sys.segment[i]).min(b);
                if v > next[j] {
                    next[j] = v;
                    next_pred[j] = Pred::Flow(i);
                }
            }
        }
        acc = next;
        pred = next_pred;
    }
    return Ok(ChainRecurrence { recurrent: false, path: Vec::new(), jumps: Vec::new(), segments: Vec::new() });

    fn rebuild<T: Real>(
        sys: &DiscretizedSystem<T>,
        x: usize,
        end: usize,
        layers: &[(Vec<T>, Vec<Pred>)],
        _b: T,
    ) -> ChainRecurrence<T> {
        let mut path = vec![end];
        let mut jumps = Vec::new();
        let mut segments = Vec::new();
        let mut seg = T::zero();
        if end != x {
            jumps.push(RecurrenceJump { from: end, to: x, cost: sys.distance(end, x) });
        }
        let mut t = layers.len() - 1;
        let mut z = end;
        loop {
            match layers[t].1[z] {
                Pred::Flow(i) => {
                    seg = seg + sys.segment[i];
                    z = i;
                    t -= 1;
                    path.push(z);
                }
                Pred::Jump(i) => {
                    jumps.push(RecurrenceJump { from: i, to: z, cost: sys.distance(i, z) });
                    segments.push(seg);
                    seg = T::zero();
                    z = i;
                    path.push(z);
                }
                Pred::None => break,
            }
        }
        segments.push(seg);
        path.reverse();
        jumps.reverse();
        segments.reverse();
        path.push(x);
        ChainRecurrence { recurrent: true, path, jumps, segments }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(n: usize, alpha: f64) -> DiscretizedSystem<f64> {
        discretize(&ModelSpec::Rotation { alpha }, n).unwrap()
    }

    #[test]
    fn iet_swap_is_half_rotation() {
        let a = discretize(&ModelSpec::Iet { lengths: vec![0.5, 0.5], permutation: vec![1, 0] }, 200).unwrap();
        let b = rotation(200, 0.5);
        assert_eq!(a.sigma, b.sigma);
    }

    #[test]
    fn transform_matches_brute_force() {
        let sys = discretize(&ModelSpec::Doubling { jitter: 0.3 }, 97).unwrap();
        let n = sys.len();
        let b: Vec<f64> =
            (0..n).map(|i| if i % 7 == 3 { (i as f64 * 0.37).sin().abs() } else { f64::INFINITY }).collect();
        let mut f = vec![0.0; n];
        let mut arg = vec![0; n];
        sys.geometry.transform(&b, &mut f, &mut arg);
        for z in 0..n {
            let want = (0..n).map(|j| b[j] + sys.distance(z, j)).fold(f64::INFINITY, f64::min);
            assert!((f[z] - want).abs() < 1e-12, "{z}: {} vs {}", f[z], want);
            assert!((b[arg[z]] + sys.distance(z, arg[z]) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn reflexive_and_rotation_interval() {
        let sys = rotation(100, 0.5f64.sqrt());
        let r = interception_cost(&sys, 4, 4, 10).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.horizon, Some(0));
        let r = interception_cost(&sys, 0, 25, 50).unwrap();
        assert!(r.cost >= 0.24 - 1e-12 && r.cost <= 0.25 + 1e-12, "{}", r.cost);
        let cert = r.certificate.unwrap();
        assert_eq!(cert.replay(&sys), Some(r.cost));
    }

    #[test]
    fn laminar_components_are_separated() {
        let comp = LaminarComponent {
            alpha: 0.382,
            gaps: vec![GapOrbit { anchor: 0.1, length: 0.02, rate: 0.5, direction: GapDirection::Both }],
            measure: 0.0,
        };
        let sys =
            discretize(&ModelSpec::Laminar { components: vec![comp.clone(), comp], separation: 0.3 }, 50).unwrap();
        assert_eq!(sys.len(), 100);
        assert!(sys.distance(3, 70) >= 0.3);
    }

    #[test]
    fn periodic_point_zero_jumps() {
        let sys = rotation(10, 0.3);
        let r = chain_recurrent(&sys, 0, 5.0, 1e-3, 40).unwrap();
        assert!(r.recurrent);
        assert!(r.jumps.is_empty());
    }

    #[test]
    fn absorbing_escapes() {
        let sys = discretize(&ModelSpec::Absorbing { first_step: 0.1, growth: 1.5, gap: 1.0 }, 8).unwrap();
        assert!(!chain_recurrent(&sys, 0, 1.0, 0.05, 100).unwrap().recurrent);
        assert!(chain_recurrent(&sys, 7, 1.0, 0.05, 100).unwrap().recurrent);
    }
}
