//! Fuchsian groups with a degree homomorphism to Z: words, multicurve
//! vertices, connector geodesics and a sampled equivariant model of tau.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, EdgeSpec, GraphError, GraphVertex, NauEdge, SlackGraph, VertexFlag};
use crate::lipschitz::PartialLipschitzFunction;
use crate::moebius::{
    axis, bruhat_nau, dist_unchecked, log_delta, BoundaryPoint, GeodesicLine, MoebiusElement, MoebiusError,
    NauDecomposition,
};
use crate::scalar::wrap_angle;

type M64 = MoebiusElement<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoverError {
    #[error("cannot parse word {word:?}: {reason}")]
    Parse { word: String, reason: String },
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error("generator {0:?} has no phi value")]
    MissingPhi(String),
    #[error("vertex {vertex}: {source}")]
    Vertex { vertex: String, source: MoebiusError },
    #[error("vertex {vertex} has non-positive degree {degree}")]
    NonPositiveDegree { vertex: String, degree: i64 },
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("word stream of {count} elements exceeds the cap {cap}")]
    BudgetExceeded { count: u128, cap: u64 },
    #[error("invalid cover specification: {0}")]
    Invalid(String),
    #[error(transparent)]
    Moebius(#[from] MoebiusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    pub matrix: M64,
}

/// Optional vertex declaration carried by the JSON bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexDecl {
    pub name: String,
    pub word: String,
    #[serde(default)]
    pub conjugator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuchsianCoverSpec {
    #[serde(default)]
    pub name: String,
    pub generators: Vec<GeneratorSpec>,
    #[serde(default)]
    pub relations: Vec<String>,
    pub phi: BTreeMap<String, i64>,
    pub c: f64,
    #[serde(default)]
    pub vertices: Vec<VertexDecl>,
}

/// Letter index `2 * generator + (1 if inverse)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(pub u16);

impl Letter {
    pub fn new(generator: usize, inverse: bool) -> Self {
        Letter((2 * generator + inverse as usize) as u16)
    }
    pub fn generator(self) -> usize {
        (self.0 / 2) as usize
    }
    pub fn is_inverse(self) -> bool {
        self.0 % 2 == 1
    }
    pub fn inverse(self) -> Self {
        Letter(self.0 ^ 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inverse()).collect())
    }
    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|w| w[0] != w[1].inverse())
    }
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }
    pub fn power(&self, k: i64) -> Word {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut v = Vec::with_capacity(base.len() * k.unsigned_abs() as usize);
        for _ in 0..k.unsigned_abs() {
            v.extend_from_slice(&base.0);
        }
        Word(v)
    }

    /// Shortlex comparison with letter order g0, g0^-1, g1, ...
    pub fn shortlex_cmp(&self, other: &Word) -> std::cmp::Ordering {
        self.len().cmp(&other.len()).then_with(|| self.0.cmp(&other.0))
    }
}

/// A word rendered with generator names.
pub struct NamedWord<'a> {
    word: &'a Word,
    spec: &'a FuchsianCoverSpec,
}

impl fmt::Display for NamedWord<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.word.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(&self.spec.generators[l.generator()].name)?;
            if l.is_inverse() {
                f.write_str("^-1")?;
            }
        }
        Ok(())
    }
}

impl FuchsianCoverSpec {
    pub fn from_json(text: &str) -> Result<Self, CoverError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| CoverError::Invalid(e.to_string()))?;
        spec.check_shape()?;
        Ok(spec)
    }

    fn check_shape(&self) -> Result<(), CoverError> {
        if self.generators.is_empty() {
            return Err(CoverError::Invalid("no generators".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(CoverError::Invalid(format!("c must be positive, got {}", self.c)));
        }
        for g in &self.generators {
            if !self.phi.contains_key(&g.name) {
                return Err(CoverError::MissingPhi(g.name.clone()));
            }
        }
        Ok(())
    }

    pub fn generator_index(&self, name: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.name == name)
    }

    /// Parses `g0 g1^-1 g2^3`; the empty string is the empty word.
    pub fn parse_word(&self, text: &str) -> Result<Word, CoverError> {
        let mut letters = Vec::new();
        for tok in text.split_whitespace() {
            let (name, exp) = match tok.split_once('^') {
                Some((n, e)) => {
                    let e: i64 = e.parse().map_err(|_| CoverError::Parse {
                        word: text.to_string(),
                        reason: format!("bad exponent in {tok:?}"),
                    })?;
                    (n, e)
                }
                None => (tok, 1),
            };
            let g = self.generator_index(name).ok_or_else(|| CoverError::UnknownGenerator(name.to_string()))?;
            for _ in 0..exp.unsigned_abs() {
                letters.push(Letter::new(g, exp < 0));
            }
        }
        Ok(Word(letters))
    }

    pub fn display<'a>(&'a self, word: &'a Word) -> NamedWord<'a> {
        NamedWord { word, spec: self }
    }

    pub fn letter_matrix(&self, l: Letter) -> M64 {
        let m = self.generators[l.generator()].matrix;
        if l.is_inverse() {
            m.inverse()
        } else {
            m
        }
    }

    pub fn evaluate(&self, word: &Word) -> M64 {
        word.0.iter().fold(M64::identity(), |acc, &l| acc * self.letter_matrix(l))
    }

    pub fn letter_degree(&self, l: Letter) -> i64 {
        let d = self.phi[&self.generators[l.generator()].name];
        if l.is_inverse() {
            -d
        } else {
            d
        }
    }

    pub fn degree(&self, word: &Word) -> i64 {
        word.0.iter().map(|&l| self.letter_degree(l)).sum()
    }

    pub fn letter_count(&self) -> usize {
        2 * self.generators.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationResidual {
    pub relation: String,
    pub residual: f64,
    pub degree: i64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub relations: Vec<RelationResidual>,
    pub phi_homomorphism: bool,
    /// Length bound of the discreteness heuristic.
    pub discreteness_len: usize,
    /// Smallest distance to the identity among nontrivial words of that length.
    pub closest_to_identity: f64,
    pub closest_word: String,
    pub discreteness_ok: bool,
    pub ok: bool,
}

pub const RELATION_TOL: f64 = 1e-7;
pub const DISCRETENESS_TOL: f64 = 1e-4;

/// Relation residuals, degree homomorphism and the short-word discreteness
/// heuristic. Failures are reported, never raised.
pub fn validate_group(spec: &FuchsianCoverSpec, discreteness_len: usize) -> Result<ValidationReport, CoverError> {
    let id = M64::identity();
    let mut relations = Vec::new();
    for r in &spec.relations {
        let w = spec.parse_word(r)?;
        let residual = spec.evaluate(&w).frobenius_distance(&id);
        let degree = spec.degree(&w);
        relations.push(RelationResidual { relation: r.clone(), residual, degree, ok: residual < RELATION_TOL });
    }
    let phi_homomorphism = relations.iter().all(|r| r.degree == 0);
    let mut closest = f64::INFINITY;
    let mut closest_word = String::new();
    if discreteness_len > 0 {
        for item in WordStream::new(spec, discreteness_len, u64::MAX)? {
            let d = item.matrix.frobenius_distance(&id);
            if d < closest {
                closest = d;
                closest_word = spec.display(&item.word).to_string();
            }
        }
    }
    let discreteness_ok = closest > DISCRETENESS_TOL;
    let ok = relations.iter().all(|r| r.ok) && phi_homomorphism && discreteness_ok;
    Ok(ValidationReport {
        relations,
        phi_homomorphism,
        discreteness_len,
        closest_to_identity: closest,
        closest_word,
        discreteness_ok,
        ok,
    })
}

/// Number of nonempty reduced words of length at most `max_len` on `letters`
/// letters.
pub fn reduced_word_count(letters: usize, max_len: usize) -> u128 {
    let mut total = 0u128;
    let mut layer = letters as u128;
    for _ in 0..max_len {
        total += layer;
        layer = layer.saturating_mul(letters as u128 - 1);
    }
    total
}

#[derive(Clone, Debug)]
pub struct WordItem {
    pub word: Word,
    pub matrix: M64,
    pub degree: i64,
}

/// Reduced nonempty words in shortlex order, with their matrices and degrees.
pub struct WordStream<'a> {
    spec: &'a FuchsianCoverSpec,
    max_len: usize,
    len: usize,
    letters: Vec<u16>,
    prefix: Vec<M64>,
    degrees: Vec<i64>,
    mats: Vec<M64>,
    letter_deg: Vec<i64>,
    fresh: bool,
}

impl<'a> WordStream<'a> {
    pub fn new(spec: &'a FuchsianCoverSpec, max_len: usize, cap: u64) -> Result<Self, CoverError> {
        let count = reduced_word_count(spec.letter_count(), max_len);
        if count > cap as u128 {
            return Err(CoverError::BudgetExceeded { count, cap });
        }
        let n = spec.letter_count();
        Ok(Self {
            spec,
            max_len,
            len: 0,
            letters: Vec::new(),
            prefix: Vec::new(),
            degrees: Vec::new(),
            mats: (0..n).map(|i| spec.letter_matrix(Letter(i as u16))).collect(),
            letter_deg: (0..n).map(|i| spec.letter_degree(Letter(i as u16))).collect(),
            fresh: true,
        })
    }

    fn recompute_from(&mut self, pos: usize) {
        for i in pos..self.len {
            let (m, d) = if i == 0 { (M64::identity(), 0) } else { (self.prefix[i - 1], self.degrees[i - 1]) };
            let l = self.letters[i] as usize;
            self.prefix[i] = m * self.mats[l];
            self.degrees[i] = d + self.letter_deg[l];
        }
    }

    /// Smallest letter allowed after `prev` in a reduced word.
    fn smallest_after(prev: Option<u16>) -> u16 {
        match prev {
            Some(1) => 1,
            _ => 0,
        }
    }

    fn start_length(&mut self, len: usize) {
        self.len = len;
        self.letters = Vec::with_capacity(len);
        for i in 0..len {
            let prev = if i == 0 { None } else { Some(self.letters[i - 1]) };
            let l = Self::smallest_after(prev);
            self.letters.push(l);
        }
        self.prefix = vec![M64::identity(); len];
        self.degrees = vec![0; len];
        self.recompute_from(0);
    }

    /// Advances to the next reduced word of the same length.
    fn advance(&mut self) -> bool {
        let n = self.spec.letter_count() as u16;
        let mut pos = self.len;
        while pos > 0 {
            pos -= 1;
            let prev = if pos == 0 { None } else { Some(self.letters[pos - 1]) };
            let mut l = self.letters[pos] + 1;
            if let Some(p) = prev {
                if l == (p ^ 1) {
                    l += 1;
                }
            }
            if l < n {
                self.letters[pos] = l;
                for i in pos + 1..self.len {
                    self.letters[i] = Self::smallest_after(Some(self.letters[i - 1]));
                }
                self.recompute_from(pos);
                return true;
            }
        }
        false
    }
}

impl Iterator for WordStream<'_> {
    type Item = WordItem;

    fn next(&mut self) -> Option<WordItem> {
        if self.fresh {
            self.fresh = false;
            if self.max_len == 0 || self.spec.letter_count() == 0 {
                return None;
            }
            self.start_length(1);
        } else if !self.advance() {
            if self.len >= self.max_len {
                return None;
            }
            let next = self.len + 1;
            self.start_length(next);
        }
        Some(WordItem {
            word: Word(self.letters.iter().map(|&l| Letter(l)).collect()),
            matrix: self.prefix[self.len - 1],
            degree: self.degrees[self.len - 1],
        })
    }
}

pub fn enumerate_words(spec: &FuchsianCoverSpec, max_len: usize, cap: u64) -> Result<WordStream<'_>, CoverError> {
    if max_len == 0 {
        return Err(CoverError::Invalid("max_len must be at least 1".into()));
    }
    WordStream::new(spec, max_len, cap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub name: String,
    pub word: String,
    pub conjugator: String,
    /// Matrix of the conjugated closed geodesic, `gamma W gamma^-1`.
    pub matrix: M64,
    pub axis: GeodesicLine<f64>,
    pub length: f64,
    pub degree: i64,
    /// Frame `g_x` with `tau = 0`; `g_x matrix g_x^-1 = a_{-length}`.
    pub base_lift: M64,
    /// `length - degree * c`.
    pub length_defect: f64,
    /// Degree of the conjugator, which shifts the tau origin by `c` per unit.
    pub conjugator_degree: i64,
}

impl VertexSpec {
    pub fn length_matches(&self) -> bool {
        self.length_defect.abs() < 1e-6
    }

    /// `g_x^-1`, the matrix moving the standard line onto the axis.
    pub fn base_inverse(&self) -> M64 {
        self.base_lift.inverse()
    }

    /// Point of the axis at tau-parameter `s`.
    pub fn axis_point(&self, s: f64) -> Complex<f64> {
        (self.base_inverse() * M64::diag_a(-s)).apply(Complex::new(0.0, 1.0))
    }
}

/// Frame of the axis of `w` whose tau origin is the axis point nearest to `i`.
fn nearest_origin_lift(w: &M64) -> Result<(GeodesicLine<f64>, f64, M64), MoebiusError> {
    let (line, length) = axis(w)?;
    let m = line.standard_map();
    let q = m.inverse().apply(Complex::new(0.0, 1.0));
    let s0 = -q.norm().ln();
    let base_inv = m * M64::diag_a(-s0);
    Ok((line, length, base_inv))
}

pub fn build_vertices(spec: &FuchsianCoverSpec, decls: &[VertexDecl]) -> Result<Vec<VertexSpec>, CoverError> {
    let mut out: Vec<VertexSpec> = Vec::with_capacity(decls.len());
    for d in decls {
        if out.iter().any(|v| v.name == d.name) {
            return Err(CoverError::Invalid(format!("duplicate vertex name {:?}", d.name)));
        }
        let word = spec.parse_word(&d.word)?;
        let gamma = spec.parse_word(&d.conjugator)?;
        let degree = spec.degree(&word);
        let w = spec.evaluate(&word);
        let err = |source| CoverError::Vertex { vertex: d.name.clone(), source };
        let (_, length, base_inv) = nearest_origin_lift(&w).map_err(err)?;
        if degree <= 0 {
            return Err(CoverError::NonPositiveDegree { vertex: d.name.clone(), degree });
        }
        let g = spec.evaluate(&gamma);
        let conjugator_degree = spec.degree(&gamma);
        let base_inv = g * base_inv * M64::diag_a(spec.c * conjugator_degree as f64);
        let matrix = g * w * g.inverse();
        let (line, _) = axis(&matrix).map_err(err)?;
        out.push(VertexSpec {
            name: d.name.clone(),
            word: d.word.clone(),
            conjugator: d.conjugator.clone(),
            matrix,
            axis: line,
            length,
            degree,
            base_lift: base_inv.inverse(),
            length_defect: length - degree as f64 * spec.c,
            conjugator_degree,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectorCandidate {
    pub source_vertex: String,
    pub target_vertex: String,
    /// Word `v` as enumerated; the connector uses `v W_y^-k`.
    pub word: String,
    pub k: i64,
    /// `g_x v W_y^-k g_y^-1`.
    pub matrix: M64,
    /// Connector in upper half-plane coordinates.
    pub line: GeodesicLine<f64>,
    pub raw_slack: f64,
    pub n_param: f64,
    pub u_param: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectorReport {
    pub candidates: Vec<ConnectorCandidate>,
    pub words_examined: u64,
    pub admissible: u64,
    pub not_decomposable: u64,
    pub axis_coincident: u64,
    pub duplicates: u64,
    /// Most negative raw slack seen; below `-1e-6` the configuration is invalid.
    pub min_raw_slack: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ConnectorOptions {
    pub max_len: usize,
    pub slack_cap: f64,
    pub word_cap: u64,
    /// Tolerance in `log |p|` for identifying lines.
    pub dedup_tol: f64,
}

impl Default for ConnectorOptions {
    fn default() -> Self {
        Self { max_len: 8, slack_cap: 6.0, word_cap: 20_000_000, dedup_tol: 1e-9 }
    }
}

/// Backward endpoint of the connector in the target frame together with the
/// connector matrix; `None` if the line coincides with an axis.
pub fn connector_matrix(x: &VertexSpec, y: &VertexSpec, v: &M64, k: i64) -> M64 {
    x.base_lift * *v * y.base_inverse() * M64::diag_a(k as f64 * y.length)
}

/// Enumerates connector geodesics between all ordered vertex pairs.
pub fn enumerate_connectors(
    spec: &FuchsianCoverSpec,
    vertices: &[VertexSpec],
    opts: &ConnectorOptions,
) -> Result<ConnectorReport, CoverError> {
    struct Seen {
        positive: bool,
        key: f64,
    }
    let nv = vertices.len();
    let mut seen: Vec<Vec<Seen>> = (0..nv * nv).map(|_| Vec::new()).collect();
    let lefts: Vec<M64> = vertices.iter().map(|v| v.base_lift).collect();
    let rights: Vec<M64> = vertices.iter().map(|v| v.base_inverse()).collect();
    let mut rep = ConnectorReport {
        candidates: Vec::new(),
        words_examined: 0,
        admissible: 0,
        not_decomposable: 0,
        axis_coincident: 0,
        duplicates: 0,
        min_raw_slack: f64::INFINITY,
    };
    for item in enumerate_words(spec, opts.max_len, opts.word_cap)? {
        rep.words_examined += 1;
        for (yi, y) in vertices.iter().enumerate() {
            if item.degree.rem_euclid(y.degree) != 0 {
                continue;
            }
            let k = item.degree / y.degree;
            let vr = item.matrix * rights[yi] * M64::diag_a(k as f64 * y.length);
            for (xi, x) in vertices.iter().enumerate() {
                rep.admissible += 1;
                let p = lefts[xi] * vr;
                let nau = match bruhat_nau(&p) {
                    Ok(n) => n,
                    Err(_) => {
                        rep.not_decomposable += 1;
                        continue;
                    }
                };
                if nau.u_param.abs() <= 1e-9 || nau.n_param.abs() <= 1e-9 {
                    rep.axis_coincident += 1;
                    continue;
                }
                let slack = nau.t;
                rep.min_raw_slack = rep.min_raw_slack.min(slack);
                if slack > opts.slack_cap {
                    continue;
                }
                let pinf = 1.0 / nau.n_param;
                let positive = pinf > 0.0;
                let key = pinf.abs().ln().rem_euclid(x.length);
                let bucket = &mut seen[xi * nv + yi];
                let dup = bucket.iter().any(|s| {
                    s.positive == positive && {
                        let d = (s.key - key).abs();
                        d.min(x.length - d) <= opts.dedup_tol
                    }
                });
                if dup {
                    rep.duplicates += 1;
                    continue;
                }
                bucket.push(Seen { positive, key });
                let xb = x.base_inverse();
                let line = GeodesicLine {
                    xi_minus: xb.apply_boundary(BoundaryPoint::Finite(pinf)),
                    xi_plus: xb.apply_boundary(BoundaryPoint::Finite(0.0)),
                };
                rep.candidates.push(ConnectorCandidate {
                    source_vertex: y.name.clone(),
                    target_vertex: x.name.clone(),
                    word: spec.display(&item.word).to_string(),
                    k,
                    matrix: p,
                    line,
                    raw_slack: slack,
                    n_param: nau.n_param,
                    u_param: nau.u_param,
                });
            }
        }
    }
    if rep.min_raw_slack == f64::INFINITY {
        rep.min_raw_slack = 0.0;
    }
    Ok(rep)
}

/// Raw slack of `v` relative to the vertex pair, via the Bruhat projection.
pub fn raw_slack(x: &VertexSpec, y: &VertexSpec, v: &M64, k: i64) -> Result<f64, MoebiusError> {
    log_delta(&connector_matrix(x, y, v, k))
}

/// Sampled line of the lifted multicurve with its tau parametrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledLine {
    pub vertex: String,
    pub word: String,
    pub line: GeodesicLine<f64>,
    /// `g^-1` of the lift; the point at parameter `s` is `base a_{-s} i`.
    pub base: M64,
    /// tau of the point at parameter `s` is `s + tau_offset`.
    pub tau_offset: f64,
}

impl SampledLine {
    pub fn point(&self, s: f64) -> Complex<f64> {
        (self.base * M64::diag_a(-s)).apply(Complex::new(0.0, 1.0))
    }

    /// Parameter of the point of the line nearest to `z`.
    pub fn project(&self, z: Complex<f64>) -> f64 {
        let q = self.base.inverse().apply(z);
        -q.norm().ln()
    }

    pub fn tau(&self, s: f64) -> f64 {
        s + self.tau_offset
    }

    /// Forward direction of the line at parameter `s`.
    pub fn direction(&self, s: f64) -> f64 {
        let frame = (self.base * M64::diag_a(-s)).inverse();
        crate::moebius::tangent_of_frame(&frame).direction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub lines: usize,
    pub samples: usize,
    pub duplicate_lines: usize,
    /// Duplicate lifts whose tau parametrizations disagree.
    pub tau_inconsistencies: usize,
    pub violations: Vec<Violation>,
    pub max_margin: f64,
}

pub type SampledTau = PartialLipschitzFunction<Complex<f64>, f64, fn(&Complex<f64>, &Complex<f64>) -> f64>;

pub fn h2_metric(a: &Complex<f64>, b: &Complex<f64>) -> f64 {
    dist_unchecked(*a, *b)
}

#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    pub ball_radius: f64,
    /// Arclength spacing of samples along each lift.
    pub density: f64,
    /// Longest group word used to translate the vertex axes.
    pub word_len: usize,
    pub word_cap: u64,
    /// Margin above which a pair counts as a violation.
    pub tol: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { ball_radius: 3.0, density: 0.1, word_len: 6, word_cap: 5_000_000, tol: 1e-9 }
    }
}

/// Lifts of the vertex axes (`gamma` applied to each vertex lift) meeting the
/// ball of radius `ball_radius` around `i`, deduplicated.
pub fn lifted_lines(
    spec: &FuchsianCoverSpec,
    vertices: &[VertexSpec],
    opts: &SampleOptions,
) -> Result<(Vec<SampledLine>, usize, usize), CoverError> {
    let i = Complex::new(0.0, 1.0);
    let mut lines: Vec<SampledLine> = Vec::new();
    let mut duplicates = 0;
    let mut inconsistent = 0;
    let mut consider = |gamma: &M64, degree: i64, word: &str, lines: &mut Vec<SampledLine>| {
        for v in vertices {
            let base = *gamma * v.base_inverse();
            let cand = SampledLine {
                vertex: v.name.clone(),
                word: word.to_string(),
                line: GeodesicLine {
                    xi_minus: base.apply_boundary(BoundaryPoint::Infinity),
                    xi_plus: base.apply_boundary(BoundaryPoint::Finite(0.0)),
                },
                base,
                tau_offset: spec.c * degree as f64,
            };
            let s = cand.project(i);
            if dist_unchecked(cand.point(s), i) >= opts.ball_radius {
                continue;
            }
            if let Some(prev) = lines.iter().find(|l| l.line.approx_eq(&cand.line, 1e-9)) {
                duplicates += 1;
                let t_prev = prev.tau(prev.project(i));
                if (t_prev - cand.tau(s)).abs() > 1e-6 {
                    inconsistent += 1;
                }
                continue;
            }
            lines.push(cand);
        }
    };
    consider(&M64::identity(), 0, "", &mut lines);
    for item in enumerate_words(spec, opts.word_len, opts.word_cap)? {
        let name = spec.display(&item.word).to_string();
        consider(&item.matrix, item.degree, &name, &mut lines);
    }
    Ok((lines, duplicates, inconsistent))
}

/// Samples the equivariant tau on lifted vertex axes inside a ball around `i`
/// and lists all pairs violating the 1-Lipschitz inequality.
pub fn sample_model_tau(
    spec: &FuchsianCoverSpec,
    vertices: &[VertexSpec],
    opts: &SampleOptions,
) -> Result<(SampledTau, Vec<SampledLine>, CompatibilityReport), CoverError> {
    let i = Complex::new(0.0, 1.0);
    let (lines, duplicate_lines, tau_inconsistencies) = lifted_lines(spec, vertices, opts)?;
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for l in &lines {
        let s0 = l.project(i);
        let mut j = 0i64;
        // walk both ways from the point nearest to i until leaving the ball
        for dir in [1.0, -1.0] {
            let mut step = if dir > 0.0 { 0 } else { 1 };
            loop {
                let s = s0 + dir * step as f64 * opts.density;
                let z = l.point(s);
                if dist_unchecked(z, i) > opts.ball_radius {
                    break;
                }
                pts.push(z);
                vals.push(l.tau(s));
                step += 1;
                j += 1;
            }
        }
        let _ = j;
    }
    let mut violations = Vec::new();
    let mut max_margin = f64::NEG_INFINITY;
    for a in 0..pts.len() {
        for b in (a + 1)..pts.len() {
            let d = dist_unchecked(pts[a], pts[b]);
            let diff = vals[a] - vals[b];
            let (m, pair) = if diff >= 0.0 { (diff - d, (a, b)) } else { (-diff - d, (b, a)) };
            max_margin = max_margin.max(m);
            if m > opts.tol {
                violations.push(Violation { i: pair.0, j: pair.1, margin: m });
            }
        }
    }
    let report = CompatibilityReport {
        lines: lines.len(),
        samples: pts.len(),
        duplicate_lines,
        tau_inconsistencies,
        violations,
        max_margin: if pts.len() > 1 { max_margin } else { 0.0 },
    };
    let f = PartialLipschitzFunction::new(pts, vals, h2_metric as fn(&Complex<f64>, &Complex<f64>) -> f64)
        .map_err(|e| CoverError::Invalid(e.to_string()))?;
    Ok((f, lines, report))
}

/// Smallest T1 offset of the tangent `(z, theta)` from the sampled lines,
/// measured against each line's tangent at the projection of `z`.
pub fn t1_offset_from_lines(lines: &[SampledLine], z: Complex<f64>, theta: f64) -> f64 {
    let mut best = f64::INFINITY;
    for l in lines {
        let s = l.project(z);
        let p = l.point(s);
        let base = dist_unchecked(z, p);
        if base >= best {
            continue;
        }
        let moved = crate::moebius::transport_direction(p, z, l.direction(s));
        best = best.min(base + wrap_angle(theta - moved).abs());
    }
    best
}

/// Base edges for a twist closure: per ordered vertex pair, the `per_pair`
/// connectors of least slack not above `slack_cap`, plus the twist step of
/// every vertex (its length).
pub fn twist_base_edges(
    report: &ConnectorReport,
    vertices: &[VertexSpec],
    per_pair: usize,
    slack_cap: f64,
) -> Result<(Vec<NauEdge<f64>>, Vec<f64>), CoverError> {
    let index = |name: &str| {
        vertices.iter().position(|v| v.name == name).ok_or_else(|| CoverError::UnknownVertex(name.to_string()))
    };
    let mut by_pair: BTreeMap<(usize, usize), Vec<&ConnectorCandidate>> = BTreeMap::new();
    for c in report.candidates.iter().filter(|c| c.raw_slack <= slack_cap) {
        by_pair.entry((index(&c.source_vertex)?, index(&c.target_vertex)?)).or_default().push(c);
    }
    let mut edges = Vec::new();
    for ((src, dst), mut list) in by_pair {
        list.sort_by(|a, b| a.raw_slack.total_cmp(&b.raw_slack));
        for c in list.into_iter().take(per_pair) {
            edges.push(NauEdge {
                src,
                dst,
                nau: NauDecomposition { n_param: c.n_param, t: c.raw_slack, u_param: c.u_param },
                weight: 1,
            });
        }
    }
    Ok((edges, vertices.iter().map(|v| v.length).collect()))
}

/// Slack graph on the vertices with one edge per connector of slack at most
/// `slack_cap`. Parallel connectors whose slacks agree within `merge_tol`
/// become one edge, since path slack sets only see the values.
pub fn connector_graph(
    report: &ConnectorReport,
    vertices: &[VertexSpec],
    slack_cap: f64,
    merge_tol: f64,
) -> Result<SlackGraph<f64>, GraphError> {
    let mut list: Vec<&ConnectorCandidate> = report.candidates.iter().filter(|c| c.raw_slack <= slack_cap).collect();
    list.sort_by(|a, b| {
        (&a.source_vertex, &a.target_vertex)
            .cmp(&(&b.source_vertex, &b.target_vertex))
            .then(a.raw_slack.total_cmp(&b.raw_slack))
    });
    let mut edges: Vec<EdgeSpec<f64>> = Vec::new();
    for c in list {
        let dup = edges.last().is_some_and(|e| {
            e.src == c.source_vertex
                && e.dst == c.target_vertex
                && (e.slack.unwrap_or(f64::NAN) - c.raw_slack).abs() <= merge_tol
        });
        if !dup {
            edges.push(EdgeSpec {
                src: c.source_vertex.clone(),
                dst: c.target_vertex.clone(),
                slack: Some(c.raw_slack),
                family: None,
            });
        }
    }
    let vs = vertices.iter().map(|v| GraphVertex { id: v.name.clone(), flag: VertexFlag::Imc }).collect();
    build_graph(vs, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(gens: &[(&str, [f64; 4], i64)], c: f64) -> FuchsianCoverSpec {
        FuchsianCoverSpec {
            name: "toy".into(),
            generators: gens
                .iter()
                .map(|(n, m, _)| GeneratorSpec { name: n.to_string(), matrix: M64::from_array(*m).unwrap() })
                .collect(),
            relations: vec![],
            phi: gens.iter().map(|(n, _, d)| (n.to_string(), *d)).collect(),
            c,
            vertices: vec![],
        }
    }

    #[test]
    fn word_counts() {
        let s = toy(&[("g1", [2.0, 0.0, 0.0, 0.5], 1), ("g2", [2.0, 1.0, 1.0, 1.0], 0)], 1.0);
        let w: Vec<_> = enumerate_words(&s, 1, 1000).unwrap().collect();
        assert_eq!(w.len(), 4);
        let names: Vec<String> = w.iter().map(|i| s.display(&i.word).to_string()).collect();
        assert_eq!(names, ["g1", "g1^-1", "g2", "g2^-1"]);
        let w: Vec<_> = enumerate_words(&s, 2, 1000).unwrap().collect();
        assert_eq!(w.len(), 16);
        assert!(w.iter().all(|i| !i.word.is_empty() && i.word.is_reduced()));
        for pair in w.windows(2) {
            assert_eq!(pair[0].word.shortlex_cmp(&pair[1].word), std::cmp::Ordering::Less);
        }
        assert!(matches!(enumerate_words(&s, 3, 10), Err(CoverError::BudgetExceeded { .. })));
    }

    #[test]
    fn stream_matrices_match_evaluation() {
        let s = toy(
            &[("a", [2.0, 0.0, 0.0, 0.5], 1), ("b", [2.0, 1.0, 1.0, 1.0], -1), ("e", [3.0, 1.0, 2.0, 1.0], 2)],
            1.0,
        );
        let mut n = 0;
        for it in enumerate_words(&s, 4, 1_000_000).unwrap() {
            assert!(it.matrix.approx_eq(&s.evaluate(&it.word), 1e-9));
            assert_eq!(it.degree, s.degree(&it.word));
            n += 1;
        }
        assert_eq!(n as u128, reduced_word_count(6, 4));
    }

    #[test]
    fn diagonal_vertex() {
        let c = 2f64.ln() * 2.0;
        let s = toy(
            &[("g1", [2.0, 0.0, 0.0, 0.5], 1), ("g2", [2.0, 1.0, 1.0, 1.0], 0), ("g3", [1.0, 1.0, 0.0, 1.0], 1)],
            c,
        );
        let decl = |w: &str| VertexDecl { name: "v".into(), word: w.into(), conjugator: String::new() };
        let v = &build_vertices(&s, &[decl("g1")]).unwrap()[0];
        assert!((v.length - c).abs() < 1e-14);
        assert_eq!(v.degree, 1);
        assert!(v.length_matches());
        let conj = v.base_lift * v.matrix * v.base_inverse();
        assert!(conj.approx_eq(&M64::diag_a(-v.length), 1e-12));
        assert!(matches!(build_vertices(&s, &[decl("g2")]), Err(CoverError::NonPositiveDegree { .. })));
        assert!(matches!(build_vertices(&s, &[decl("g3")]), Err(CoverError::Vertex { .. })));
    }

    #[test]
    fn validation_flags_bad_relation() {
        let mut s = toy(&[("g1", [2.0, 0.0, 0.0, 0.5], 1)], 1.0);
        s.relations = vec!["g1".into()];
        let r = validate_group(&s, 2).unwrap();
        assert!(!r.relations[0].ok);
        let expected = M64::from_array([2.0, 0.0, 0.0, 0.5]).unwrap().frobenius_distance(&M64::identity());
        assert!((r.relations[0].residual - expected).abs() < 1e-12);
        assert!(!r.phi_homomorphism);
    }

    #[test]
    fn parse_round_trip() {
        let s = toy(&[("g0", [2.0, 0.0, 0.0, 0.5], 1), ("g1", [2.0, 1.0, 1.0, 1.0], 0)], 1.0);
        let w = s.parse_word("g0 g1^-1 g0^2").unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(s.display(&w).to_string(), "g0 g1^-1 g0 g0");
        assert!(s.parse_word("").unwrap().is_empty());
        assert!(s.parse_word("h7").is_err());
    }
}
