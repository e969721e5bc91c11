//! The slack graph: path slack enumeration under a budget, truncated
//! recurrence sets, numerical derived sets, ray thresholds, subadditivity
//! and the orbit-closure census.
//!
//! `Z_{x,y}` is the set of slacks of paths from `y` to `x`; an edge with
//! `src = y, dst = x` contributes to it.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moebius::NauDecomposition;
use crate::scalar::Real;
use crate::slack::NEGATIVE_SLACK_TOL;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("edge {edge} has negative slack {value:e}")]
    NegativeSlack { edge: usize, value: f64 },
    #[error("edge {edge} refers to unknown vertex {vertex:?}")]
    DanglingEdge { edge: usize, vertex: String },
    #[error("duplicate vertex id {0:?}")]
    DuplicateVertex(String),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("edge {edge}: {reason}")]
    BadEdge { edge: usize, reason: String },
    #[error("path enumeration exceeded its cap of {cap} values")]
    BudgetBlowup { cap: usize },
    #[error("path enumeration exceeded its work limit ({what} > {limit})")]
    WorkLimit { what: &'static str, limit: u64 },
    #[error("budgets incompatible: {zy} + {xz} > {xy}")]
    BudgetMismatch { zy: f64, xz: f64, xy: f64 },
    #[error("invalid enumeration parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexFlag {
    Imc,
    InfiniteLeaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphVertex {
    pub id: String,
    pub flag: VertexFlag,
}

/// Countable edge family with slacks `base + 2 ln(1 + e^{-k c} u n)`,
/// `k >= k_start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FamilyWeight<T> {
    pub base: T,
    /// `[u, n]`
    pub correction_params: [T; 2],
    pub c: T,
    #[serde(default)]
    pub k_start: i64,
}

impl<T: Real> FamilyWeight<T> {
    pub fn correction(&self, k: i64) -> Option<T> {
        let arg = T::one() + (-self.c * T::lit(k as f64)).exp() * self.correction_params[0] * self.correction_params[1];
        if arg > T::lit(1e-12) {
            Some(T::lit(2.0) * arg.ln())
        } else {
            None
        }
    }

    /// Members `(k, slack)` until the correction drops below `tol`.
    pub fn members(&self, tol: T, max_members: usize) -> Vec<(i64, T)> {
        let mut out = Vec::new();
        let mut k = self.k_start;
        while out.len() < max_members {
            if let Some(c) = self.correction(k) {
                out.push((k, self.base + c));
                if c.abs() < tol {
                    break;
                }
            }
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeight<T> {
    Slack(T),
    Family(FamilyWeight<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge<T> {
    pub src: usize,
    pub dst: usize,
    pub weight: EdgeWeight<T>,
}

/// Edge as it appears in graph JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EdgeSpec<T> {
    pub src: String,
    pub dst: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyWeight<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GraphSpec<T> {
    pub vertices: Vec<GraphVertex>,
    pub edges: Vec<EdgeSpec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlackGraph<T> {
    vertices: Vec<GraphVertex>,
    edges: Vec<GraphEdge<T>>,
}

impl<T: Real> SlackGraph<T> {
    pub fn vertices(&self) -> &[GraphVertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[GraphEdge<T>] {
        &self.edges
    }

    pub fn vertex_index(&self, id: &str) -> Result<usize, GraphError> {
        self.vertices.iter().position(|v| v.id == id).ok_or_else(|| GraphError::UnknownVertex(id.to_string()))
    }

    pub fn has_families(&self) -> bool {
        self.edges.iter().any(|e| matches!(e.weight, EdgeWeight::Family(_)))
    }

    /// Same vertices, every edge reversed, slacks unchanged.
    pub fn reversed(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            edges: self.edges.iter().map(|e| GraphEdge { src: e.dst, dst: e.src, weight: e.weight }).collect(),
        }
    }

    /// Graph with only the vertices satisfying `keep`.
    pub fn restricted(&self, keep: impl Fn(&GraphVertex) -> bool) -> (Self, Vec<Option<usize>>) {
        let mut map = vec![None; self.vertices.len()];
        let mut vertices = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if keep(v) {
                map[i] = Some(vertices.len());
                vertices.push(v.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|e| Some(GraphEdge { src: map[e.src]?, dst: map[e.dst]?, weight: e.weight }))
            .collect();
        (Self { vertices, edges }, map)
    }

    pub fn to_spec(&self) -> GraphSpec<T> {
        GraphSpec {
            vertices: self.vertices.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| {
                    let (slack, family) = match e.weight {
                        EdgeWeight::Slack(s) => (Some(s), None),
                        EdgeWeight::Family(f) => (None, Some(f)),
                    };
                    EdgeSpec {
                        src: self.vertices[e.src].id.clone(),
                        dst: self.vertices[e.dst].id.clone(),
                        slack,
                        family,
                    }
                })
                .collect(),
        }
    }

    /// Smallest member slack of the edge within the expansion tolerance.
    pub fn edge_min(&self, e: usize, tol: T) -> T {
        match self.edges[e].weight {
            EdgeWeight::Slack(s) => s,
            EdgeWeight::Family(f) => f.members(tol, 100_000).into_iter().map(|(_, s)| s).fold(T::infinity(), T::min),
        }
    }

    /// Slack of one witness step.
    pub fn step_slack(&self, step: &WitnessStep) -> Option<T> {
        let e = self.edges.get(step.edge)?;
        match (e.weight, step.k) {
            (EdgeWeight::Slack(s), None) => Some(s),
            (EdgeWeight::Family(f), Some(k)) if k >= f.k_start => f.correction(k).map(|c| f.base + c),
            _ => None,
        }
    }

    /// Re-evaluates a witness path from `y`; returns its end vertex and slack.
    pub fn evaluate_witness(&self, y: usize, witness: &[WitnessStep]) -> Option<(usize, T)> {
        let mut at = y;
        let mut total = T::zero();
        for s in witness {
            let e = self.edges.get(s.edge)?;
            if e.src != at {
                return None;
            }
            total = total + self.step_slack(s)?;
            at = e.dst;
        }
        Some((at, total))
    }
}

pub fn build_graph<T: Real>(vertices: Vec<GraphVertex>, edges: Vec<EdgeSpec<T>>) -> Result<SlackGraph<T>, GraphError> {
    for (i, v) in vertices.iter().enumerate() {
        if vertices[..i].iter().any(|w| w.id == v.id) {
            return Err(GraphError::DuplicateVertex(v.id.clone()));
        }
    }
    let find = |id: &str, edge: usize| {
        vertices
            .iter()
            .position(|v| v.id == id)
            .ok_or_else(|| GraphError::DanglingEdge { edge, vertex: id.to_string() })
    };
    let neg = -T::lit(NEGATIVE_SLACK_TOL);
    let mut out = Vec::with_capacity(edges.len());
    for (i, e) in edges.into_iter().enumerate() {
        let src = find(&e.src, i)?;
        let dst = find(&e.dst, i)?;
        let weight = match (e.slack, e.family) {
            (Some(s), None) => {
                if !(s >= neg) {
                    return Err(GraphError::NegativeSlack { edge: i, value: s.as_f64() });
                }
                EdgeWeight::Slack(s.max(T::zero()))
            }
            (None, Some(f)) => {
                if !(f.c > T::zero()) {
                    return Err(GraphError::BadEdge { edge: i, reason: "family step c must be positive".into() });
                }
                if !(f.base >= neg) {
                    return Err(GraphError::NegativeSlack { edge: i, value: f.base.as_f64() });
                }
                let m = f.members(T::lit(1e-12), 100_000);
                if let Some((_, low)) =
                    m.iter().copied().min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
                {
                    if !(low >= neg) {
                        return Err(GraphError::NegativeSlack { edge: i, value: low.as_f64() });
                    }
                }
                EdgeWeight::Family(f)
            }
            _ => return Err(GraphError::BadEdge { edge: i, reason: "exactly one of slack or family required".into() }),
        };
        out.push(GraphEdge { src, dst, weight });
    }
    Ok(SlackGraph { vertices, edges: out })
}

pub fn graph_from_spec<T: Real>(spec: GraphSpec<T>) -> Result<SlackGraph<T>, GraphError> {
    build_graph(spec.vertices, spec.edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WitnessStep {
    pub edge: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
}

fn shortlex(a: &[WitnessStep], b: &[WitnessStep]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ZEntry<T> {
    pub slack: T,
    /// Shortlex-least path realizing the value (empty when witnesses are
    /// not collected or for the empty path).
    pub witness: Vec<WitnessStep>,
    /// Combinatorial length of the witness.
    pub path_length: usize,
    /// Longest path found with this value.
    pub max_path_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TruncatedZSet<T> {
    pub source: String,
    pub target: String,
    pub budget: T,
    pub tolerance: T,
    pub values: Vec<ZEntry<T>>,
    pub ray_start: Option<T>,
}

impl<T: Real> TruncatedZSet<T> {
    pub fn slacks(&self) -> Vec<T> {
        self.values.iter().map(|e| e.slack).collect()
    }

    /// Membership within `tol`, counting the ray.
    pub fn contains(&self, t: T, tol: T) -> bool {
        if let Some(r) = self.ray_start {
            if t >= r - tol {
                return true;
            }
        }
        let i = self.values.partition_point(|e| e.slack < t - tol);
        self.values.get(i).is_some_and(|e| (e.slack - t).abs() <= tol)
    }

    /// Values carried by paths of combinatorial length at least `len`.
    pub fn hom_at_least(&self, len: usize) -> Vec<T> {
        self.values.iter().filter(|e| e.max_path_length >= len).map(|e| e.slack).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerationOptions<T> {
    pub budget: T,
    /// Lower bound on edge slacks; limits path length to `budget / delta`.
    pub min_edge_slack: T,
    /// Family members are expanded until the correction is below this.
    pub family_tol: T,
    pub dedup_tol: T,
    /// Cap on distinct values kept.
    pub cap: usize,
    /// Limit on search steps, which grow with the number of paths.
    pub work_cap: u64,
    pub keep_witnesses: bool,
}

impl<T: Real> EnumerationOptions<T> {
    pub fn new(budget: T, min_edge_slack: T) -> Self {
        Self {
            budget,
            min_edge_slack,
            family_tol: T::lit(1e-12),
            dedup_tol: T::dedup_tol(),
            cap: 2_000_000,
            work_cap: 1 << 27,
            keep_witnesses: true,
        }
    }
}

struct Member<T> {
    edge: usize,
    k: Option<i64>,
    value: T,
    dst: usize,
}

/// Recursion depth of the search.
const MAX_PATH_LENGTH: usize = 4096;
/// Witness steps kept across all merged values.
const MAX_WITNESS_STEPS: usize = 1 << 26;

struct Collector<T> {
    raw: Vec<(T, usize, Vec<WitnessStep>)>,
    work: u64,
    work_cap: u64,
    /// Witness steps held in `raw`.
    raw_steps: usize,
    merged: Vec<ZEntry<T>>,
    keep: bool,
    tol: T,
    cap: usize,
}

impl<T: Real> Collector<T> {
    fn step(&mut self) -> Result<(), GraphError> {
        self.work += 1;
        if self.work > self.work_cap {
            return Err(GraphError::WorkLimit { what: "search steps", limit: self.work_cap });
        }
        Ok(())
    }

    fn push(&mut self, v: T, path: &[WitnessStep]) -> Result<(), GraphError> {
        let w = if self.keep { path.to_vec() } else { Vec::new() };
        self.raw_steps += w.len();
        self.work += w.len() as u64;
        self.raw.push((v, path.len(), w));
        if self.raw.len() >= (1 << 22) || self.raw_steps >= (1 << 25) {
            self.compact()?;
        }
        Ok(())
    }

    fn compact(&mut self) -> Result<(), GraphError> {
        let mut all: Vec<ZEntry<T>> = std::mem::take(&mut self.merged);
        self.raw_steps = 0;
        all.extend(self.raw.drain(..).map(|(slack, len, witness)| ZEntry {
            slack,
            path_length: len,
            max_path_length: len,
            witness,
        }));
        all.sort_by(|a, b| {
            a.slack
                .partial_cmp(&b.slack)
                .unwrap_or(Ordering::Equal)
                .then_with(|| shortlex(&a.witness, &b.witness))
                .then_with(|| a.path_length.cmp(&b.path_length))
        });
        let mut out: Vec<ZEntry<T>> = Vec::with_capacity(all.len());
        let mut anchor = T::neg_infinity();
        for e in all {
            match out.last_mut() {
                Some(last) if e.slack - anchor <= self.tol => {
                    last.max_path_length = last.max_path_length.max(e.max_path_length);
                    let better = if self.keep {
                        shortlex(&e.witness, &last.witness) == Ordering::Less
                    } else {
                        e.path_length < last.path_length
                    };
                    if better {
                        last.witness = e.witness;
                        last.path_length = e.path_length;
                        last.slack = e.slack;
                    }
                }
                _ => {
                    anchor = e.slack;
                    out.push(e);
                }
            }
        }
        if out.len() > self.cap {
            return Err(GraphError::BudgetBlowup { cap: self.cap });
        }
        if out.iter().map(|e| e.witness.len()).sum::<usize>() > MAX_WITNESS_STEPS {
            return Err(GraphError::WorkLimit { what: "stored witness steps", limit: MAX_WITNESS_STEPS as u64 });
        }
        self.merged = out;
        Ok(())
    }
}

/// Expanded, sorted edge members per source vertex.
fn expand_members<T: Real>(g: &SlackGraph<T>, family_tol: T, budget: T) -> Vec<Vec<Member<T>>> {
    let mut out: Vec<Vec<Member<T>>> = (0..g.vertices.len()).map(|_| Vec::new()).collect();
    for (i, e) in g.edges.iter().enumerate() {
        match e.weight {
            EdgeWeight::Slack(s) => out[e.src].push(Member { edge: i, k: None, value: s, dst: e.dst }),
            EdgeWeight::Family(f) => {
                for (k, s) in f.members(family_tol, 1_000_000) {
                    if s <= budget {
                        out[e.src].push(Member { edge: i, k: Some(k), value: s, dst: e.dst });
                    }
                }
            }
        }
    }
    for m in &mut out {
        m.sort_by(|a, b| {
            a.value.partial_cmp(&b.value).unwrap_or(Ordering::Equal).then(a.edge.cmp(&b.edge)).then(a.k.cmp(&b.k))
        });
    }
    out
}

/// All path slacks from `y` to `x` up to the budget, deduplicated.
pub fn enumerate_path_slacks<T: Real>(
    g: &SlackGraph<T>,
    y: &str,
    x: &str,
    opts: &EnumerationOptions<T>,
) -> Result<TruncatedZSet<T>, GraphError> {
    let yi = g.vertex_index(y)?;
    let xi = g.vertex_index(x)?;
    if !(opts.min_edge_slack > T::zero()) || !opts.budget.is_finite() || opts.budget < T::zero() {
        return Err(GraphError::InvalidParameters("need min_edge_slack > 0 and a finite budget".into()));
    }
    let members = expand_members(g, opts.family_tol, opts.budget);
    for list in &members {
        if let Some(m) = list.first() {
            if m.value < opts.min_edge_slack - T::lit(1e-12) {
                return Err(GraphError::InvalidParameters(format!(
                    "edge {} has slack {} below the declared lower bound {}",
                    m.edge, m.value, opts.min_edge_slack
                )));
            }
        }
    }
    let max_depth = (opts.budget / opts.min_edge_slack + T::lit(1e-9)).floor().to_usize().unwrap_or(usize::MAX);
    if max_depth > MAX_PATH_LENGTH {
        return Err(GraphError::WorkLimit { what: "path length bound", limit: MAX_PATH_LENGTH as u64 });
    }
    let mut col = Collector {
        raw: Vec::new(),
        work: 0,
        work_cap: opts.work_cap,
        raw_steps: 0,
        merged: Vec::new(),
        keep: opts.keep_witnesses,
        tol: opts.dedup_tol,
        cap: opts.cap,
    };
    let slop = T::lit(1e-12);
    let mut path: Vec<WitnessStep> = Vec::new();

    #[allow(clippy::too_many_arguments)]
    fn dfs<T: Real>(
        v: usize,
        acc: T,
        x: usize,
        members: &[Vec<Member<T>>],
        budget: T,
        slop: T,
        max_depth: usize,
        path: &mut Vec<WitnessStep>,
        col: &mut Collector<T>,
    ) -> Result<(), GraphError> {
        col.step()?;
        if v == x {
            col.push(acc, path)?;
        }
        if path.len() >= max_depth {
            return Ok(());
        }
        for m in &members[v] {
            let next = acc + m.value;
            if next > budget + slop {
                break;
            }
            path.push(WitnessStep { edge: m.edge, k: m.k });
            dfs(m.dst, next, x, members, budget, slop, max_depth, path, col)?;
            path.pop();
        }
        Ok(())
    }

    dfs(yi, T::zero(), xi, &members, opts.budget, slop, max_depth, &mut path, &mut col)?;
    col.compact()?;
    let values: Vec<ZEntry<T>> = col.merged.into_iter().filter(|e| e.slack <= opts.budget + slop).collect();
    Ok(TruncatedZSet {
        source: y.to_string(),
        target: x.to_string(),
        budget: opts.budget,
        tolerance: opts.dedup_tol,
        values,
        ray_start: None,
    })
}

/// Shortest path slacks from `src` (Dijkstra on smallest member slacks).
pub fn shortest_slacks<T: Real>(g: &SlackGraph<T>, src: usize, family_tol: T) -> Vec<T> {
    let n = g.vertices.len();
    let mut dist = vec![T::infinity(); n];
    let mut done = vec![false; n];
    dist[src] = T::zero();
    let w: Vec<T> = (0..g.edges.len()).map(|e| g.edge_min(e, family_tol)).collect();
    for _ in 0..n {
        let mut best = None;
        for v in 0..n {
            if !done[v] && dist[v].is_finite() && best.is_none_or(|b: usize| dist[v] < dist[b]) {
                best = Some(v);
            }
        }
        let Some(u) = best else { break };
        done[u] = true;
        for (i, e) in g.edges.iter().enumerate() {
            if e.src == u && dist[u] + w[i] < dist[e.dst] {
                dist[e.dst] = dist[u] + w[i];
            }
        }
    }
    dist
}

/// `rho` for the pair and the assembled set: imc-only path slacks below
/// `rho` together with the ray `[rho, inf)`.
pub fn ray_threshold<T: Real>(
    g: &SlackGraph<T>,
    y: &str,
    x: &str,
    opts: &EnumerationOptions<T>,
) -> Result<(T, TruncatedZSet<T>), GraphError> {
    let yi = g.vertex_index(y)?;
    let xi = g.vertex_index(x)?;
    let from_y = shortest_slacks(g, yi, opts.family_tol);
    let mut rho = T::infinity();
    for (w, v) in g.vertices.iter().enumerate() {
        if v.flag != VertexFlag::InfiniteLeaf {
            continue;
        }
        let to_x = shortest_slacks(g, w, opts.family_tol)[xi];
        rho = rho.min(from_y[w] + to_x);
    }
    let imc_budget = if rho.is_finite() { opts.budget.min(rho) } else { opts.budget };
    let (sub, map) = g.restricted(|v| v.flag == VertexFlag::Imc);
    let mut assembled = match (map[yi], map[xi]) {
        (Some(_), Some(_)) => {
            let o = EnumerationOptions { budget: imc_budget, ..*opts };
            enumerate_path_slacks(&sub, y, x, &o)?
        }
        _ => TruncatedZSet {
            source: y.to_string(),
            target: x.to_string(),
            budget: imc_budget,
            tolerance: opts.dedup_tol,
            values: Vec::new(),
            ray_start: None,
        },
    };
    if rho.is_finite() {
        assembled.values.retain(|e| e.slack < rho - opts.dedup_tol);
        assembled.ray_start = Some(rho);
    }
    assembled.budget = opts.budget;
    Ok((rho, assembled))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SubadditivityViolation<T> {
    pub a: T,
    pub b: T,
    pub sum: T,
}

/// Checks `Z_zy + Z_xz` against `Z_xy`.
pub fn check_subadditivity<T: Real>(
    zzy: &TruncatedZSet<T>,
    zxz: &TruncatedZSet<T>,
    zxy: &TruncatedZSet<T>,
    tol: T,
) -> Result<Vec<SubadditivityViolation<T>>, GraphError> {
    if zzy.budget + zxz.budget > zxy.budget + T::lit(1e-12) {
        return Err(GraphError::BudgetMismatch {
            zy: zzy.budget.as_f64(),
            xz: zxz.budget.as_f64(),
            xy: zxy.budget.as_f64(),
        });
    }
    let mut out = Vec::new();
    for a in &zzy.values {
        for b in &zxz.values {
            let s = a.slack + b.slack;
            if s > zxy.budget {
                break;
            }
            if !zxy.contains(s, tol) {
                out.push(SubadditivityViolation { a: a.slack, b: b.slack, sum: s });
            }
        }
    }
    Ok(out)
}

/// One representative per single-linkage cluster (gaps at most `h`) with at
/// least two points: the lower end of the cluster's smallest gap.
pub fn derived_set<T: Real>(values: &[T], h: T) -> Vec<T> {
    derived_set_min(values, h, 2)
}

/// As [`derived_set`], keeping only clusters of at least `min_size` points.
pub fn derived_set_min<T: Real>(values: &[T], h: T, min_size: usize) -> Vec<T> {
    let mut out = Vec::new();
    let n = values.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        let mut best_gap = T::infinity();
        let mut rep = values[i];
        while j + 1 < n && values[j + 1] - values[j] <= h {
            let gap = values[j + 1] - values[j];
            if gap < best_gap {
                best_gap = gap;
                rep = values[j];
            }
            j += 1;
        }
        if j + 1 - i >= min_size.max(2) {
            out.push(rep);
        }
        i = j + 1;
    }
    out
}

/// Scales `h / gamma^(L - i + 1)` for levels `i = 1..=L`.
pub fn scale_ladder<T: Real>(h: T, gamma: T, max_level: usize) -> Vec<T> {
    (1..=max_level).map(|i| h / gamma.powi((max_level - i + 1) as i32)).collect()
}

/// Iterated derived sets, level `i` taken at `scales[i - 1]`.
pub fn derived_sets<T: Real>(values: &[T], scales: &[T]) -> Vec<Vec<T>> {
    derived_sets_min(values, scales, 2)
}

pub fn derived_sets_min<T: Real>(values: &[T], scales: &[T], min_size: usize) -> Vec<Vec<T>> {
    let mut levels = Vec::with_capacity(scales.len());
    let mut cur = values.to_vec();
    for &h in scales {
        cur = derived_set_min(&cur, h, min_size);
        levels.push(cur.clone());
    }
    levels
}

/// Directed Hausdorff-type discrepancy of `a` inside `[0, window]` from `b`,
/// and vice versa; points outside the window are only used as partners.
pub fn windowed_hausdorff<T: Real>(a: &[T], b: &[T], window: T) -> T {
    let one_way = |p: &[T], q: &[T]| {
        p.iter()
            .filter(|&&v| v <= window)
            .map(|&v| {
                let i = q.partition_point(|&w| w < v);
                let mut d = T::infinity();
                if i < q.len() {
                    d = d.min((q[i] - v).abs());
                }
                if i > 0 {
                    d = d.min((v - q[i - 1]).abs());
                }
                d
            })
            .fold(T::zero(), T::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    FiniteApproximationConsistent,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LevelReport<T> {
    pub level: usize,
    pub scale: T,
    pub derived: Vec<T>,
    pub hom_values: Vec<T>,
    pub hausdorff: T,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SweepReport<T> {
    pub h: T,
    pub levels: Vec<LevelReport<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DepthReport<T> {
    pub source: String,
    pub target: String,
    pub budget: T,
    pub margin: T,
    pub gamma: T,
    pub z_size: usize,
    pub sweep: Vec<SweepReport<T>>,
    /// Successive sweep values give derived sets within Hausdorff distance
    /// of the coarser `h` inside the window, level by level.
    pub stabilized: bool,
    /// Deepest level with a nonempty derived set at the largest `h`.
    pub estimated_depth: usize,
}

impl<T: Real> DepthReport<T> {
    pub fn all_match(&self) -> bool {
        self.sweep.iter().all(|s| s.levels.iter().all(|l| l.verdict != Verdict::Mismatch))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FiltrationOptions<T> {
    pub h0: T,
    pub gamma: T,
    pub max_level: usize,
    /// Smallest cluster counted as an accumulation.
    pub min_cluster: usize,
    /// Defaults to `budget / 10`.
    pub margin: Option<T>,
}

/// Compares the numerical derived sets of `Z` with the slacks of paths of
/// combinatorial length at least `i + 1`, over the sweep `h0/4, h0/2, h0`.
pub fn depth_from_zset<T: Real>(z: &TruncatedZSet<T>, has_families: bool, f: &FiltrationOptions<T>) -> DepthReport<T> {
    let values = z.slacks();
    let margin = f.margin.unwrap_or(z.budget / T::lit(10.0));
    let window = z.budget - margin;
    let mut sweep = Vec::new();
    for div in [4.0, 2.0, 1.0] {
        let h = f.h0 / T::lit(div);
        let scales = scale_ladder(h, f.gamma, f.max_level);
        let derived = derived_sets_min(&values, &scales, f.min_cluster);
        let mut levels = Vec::new();
        for (i, d) in derived.into_iter().enumerate() {
            let level = i + 1;
            let hom = z.hom_at_least(level + 1);
            let d_in: Vec<T> = d.iter().copied().filter(|&v| v <= window).collect();
            let h_in: Vec<T> = hom.iter().copied().filter(|&v| v <= window).collect();
            let haus =
                if d_in.is_empty() && h_in.is_empty() { T::zero() } else { windowed_hausdorff(&d, &hom, window) };
            let verdict = if !has_families && d.is_empty() {
                Verdict::FiniteApproximationConsistent
            } else if haus <= h {
                Verdict::Match
            } else {
                Verdict::Mismatch
            };
            levels.push(LevelReport { level, scale: scales[i], derived: d, hom_values: hom, hausdorff: haus, verdict });
        }
        sweep.push(SweepReport { h, levels });
    }
    let stabilized = sweep.windows(2).all(|w| {
        w[0].levels.iter().zip(&w[1].levels).all(|(a, b)| {
            let inside = |d: &[T]| d.iter().any(|&v| v <= window);
            inside(&a.derived) == inside(&b.derived)
                && (!inside(&a.derived) || windowed_hausdorff(&a.derived, &b.derived, window) <= w[1].h)
        })
    });
    let estimated_depth = sweep.last().map_or(0, |s| s.levels.iter().take_while(|l| !l.derived.is_empty()).count());
    DepthReport {
        source: z.source.clone(),
        target: z.target.clone(),
        budget: z.budget,
        margin,
        gamma: f.gamma,
        z_size: values.len(),
        sweep,
        stabilized,
        estimated_depth,
    }
}

pub fn check_filtration<T: Real>(
    g: &SlackGraph<T>,
    y: &str,
    x: &str,
    opts: &EnumerationOptions<T>,
    f: &FiltrationOptions<T>,
) -> Result<DepthReport<T>, GraphError> {
    let z = enumerate_path_slacks(g, y, x, opts)?;
    Ok(depth_from_zset(&z, g.has_families(), f))
}

/// Edge of a twist-closure graph kept in NAU coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NauEdge<T> {
    pub src: usize,
    pub dst: usize,
    pub nau: NauDecomposition<T>,
    /// Number of base edges composed into this one.
    pub weight: usize,
}

/// `m1 a_s m2 a_-s` in NAU coordinates, or `None` when degenerate.
pub fn twist_compose<T: Real>(m1: &NauDecomposition<T>, m2: &NauDecomposition<T>, s: T) -> Option<NauDecomposition<T>> {
    let x = m1.u_param;
    let y = (-s).exp() * m2.n_param;
    let q = T::one() + x * y;
    if !(q.abs() > T::lit(1e-12)) {
        return None;
    }
    Some(NauDecomposition {
        n_param: m1.n_param + (-m1.t).exp() * y / q,
        t: m1.t + m2.t + T::lit(2.0) * q.abs().ln(),
        u_param: (-m2.t).exp() * x / q + s.exp() * m2.u_param,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ClosureOptions<T> {
    pub budget: T,
    /// Members whose correction is below this are left to the limit path.
    pub tol: T,
    pub max_edges: usize,
    /// Maximal number of base edges in a composite.
    pub max_weight: usize,
}

/// Twisted words over the base edges: every composite
/// `c a_s e a_-s` with `c (y -> x)`, `e (z -> y)` and `s` in `step[y] Z`,
/// built by appending one base edge at a time and kept when its slack is
/// within the budget. Positive twists stop once the correction is below
/// `tol`; negative ones once the slack leaves the budget for good.
pub fn twist_closure<T: Real>(
    base: &[NauEdge<T>],
    step: &[T],
    opts: &ClosureOptions<T>,
) -> Result<Vec<NauEdge<T>>, GraphError> {
    let two = T::lit(2.0);
    let mut edges: Vec<NauEdge<T>> = base.iter().copied().filter(|e| e.nau.t <= opts.budget).collect();
    let mut layer: Vec<NauEdge<T>> = edges.clone();
    for w in 2..=opts.max_weight {
        let mut next = Vec::new();
        for c in &layer {
            for e in base.iter().filter(|e| e.dst == c.src) {
                let xy0 = c.nau.u_param * e.nau.n_param;
                let push = |s: T, next: &mut Vec<NauEdge<T>>| {
                    if let Some(m) = twist_compose(&c.nau, &e.nau, s) {
                        if m.t <= opts.budget {
                            next.push(NauEdge { src: e.src, dst: c.dst, nau: m, weight: w });
                        }
                    }
                };
                let mut j = 0i64;
                loop {
                    let s = step[c.src] * T::lit(j as f64);
                    let q = (T::one() + (-s).exp() * xy0).abs();
                    if j > 0 && (two * q.ln()).abs() < opts.tol {
                        break;
                    }
                    push(s, &mut next);
                    j += 1;
                }
                let mut j = -1i64;
                loop {
                    let s = step[c.src] * T::lit(j as f64);
                    let xy = (-s).exp() * xy0;
                    let t = c.nau.t + e.nau.t + two * (T::one() + xy).abs().ln();
                    if xy.abs() > two && t > opts.budget {
                        break;
                    }
                    push(s, &mut next);
                    j -= 1;
                }
            }
            if edges.len() + next.len() > opts.max_edges {
                return Err(GraphError::BudgetBlowup { cap: opts.max_edges });
            }
        }
        if next.is_empty() {
            break;
        }
        edges.extend_from_slice(&next);
        layer = next;
    }
    Ok(edges)
}

/// Slack graph of explicit edges from NAU edges.
pub fn graph_from_nau<T: Real>(vertices: Vec<GraphVertex>, edges: &[NauEdge<T>]) -> Result<SlackGraph<T>, GraphError> {
    let specs = edges
        .iter()
        .map(|e| EdgeSpec {
            src: vertices[e.src].id.clone(),
            dst: vertices[e.dst].id.clone(),
            slack: Some(e.nau.t),
            family: None,
        })
        .collect();
    build_graph(vertices, specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum End {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MarkedBusemannLabel<T> {
    pub beta: T,
    pub vertex: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrbitClass {
    Labelled { end: End, vertex: String },
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CensusReport<T> {
    pub classes: Vec<OrbitClass>,
    pub count: usize,
    /// `0 in Z_xx` for every vertex.
    pub reflexive: bool,
    /// `Z_yy` of the graph equals `Z_{-y,-y}` of the reversed graph.
    pub reversal_consistent: bool,
    /// Per vertex: `Z_xx` truncated at the census budget.
    pub z_self: BTreeMap<String, Vec<T>>,
}

/// Whether a point labelled `(t, x_j)` lies in the closure of `N x_i`,
/// i.e. `t in Z_{x_i, x_j}`.
pub fn in_orbit_closure<T: Real>(
    g: &SlackGraph<T>,
    label: &MarkedBusemannLabel<T>,
    x_i: usize,
    opts: &EnumerationOptions<T>,
) -> Result<bool, GraphError> {
    let yj = g.vertices[label.vertex].id.clone();
    let xi = g.vertices[x_i].id.clone();
    let o = EnumerationOptions { budget: opts.budget.max(label.beta), ..*opts };
    let (_, z) = ray_threshold(g, &yj, &xi, &o)?;
    Ok(z.contains(label.beta, T::lit(1e-9)))
}

pub fn census<T: Real>(g: &SlackGraph<T>, opts: &EnumerationOptions<T>) -> Result<CensusReport<T>, GraphError> {
    let mut classes = Vec::new();
    for end in [End::Plus, End::Minus] {
        for v in &g.vertices {
            classes.push(OrbitClass::Labelled { end, vertex: v.id.clone() });
        }
    }
    classes.push(OrbitClass::Dense);
    let rev = g.reversed();
    let mut reflexive = true;
    let mut reversal_consistent = true;
    let mut z_self = BTreeMap::new();
    for (i, v) in g.vertices.iter().enumerate() {
        let label = MarkedBusemannLabel { beta: T::zero(), vertex: i };
        reflexive &= in_orbit_closure(g, &label, i, opts)?;
        let (_, a) = ray_threshold(g, &v.id, &v.id, opts)?;
        let (_, b) = ray_threshold(&rev, &v.id, &v.id, opts)?;
        let (sa, sb) = (a.slacks(), b.slacks());
        reversal_consistent &= sa.len() == sb.len()
            && sa.iter().zip(&sb).all(|(p, q)| (*p - *q).abs() <= T::lit(1e-9))
            && a.ray_start == b.ray_start;
        z_self.insert(v.id.clone(), sa);
    }
    Ok(CensusReport { count: classes.len(), classes, reflexive, reversal_consistent, z_self })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(id: &str, flag: VertexFlag) -> GraphVertex {
        GraphVertex { id: id.into(), flag }
    }

    fn e(src: &str, dst: &str, s: f64) -> EdgeSpec<f64> {
        EdgeSpec { src: src.into(), dst: dst.into(), slack: Some(s), family: None }
    }

    fn slacks(z: &TruncatedZSet<f64>) -> Vec<f64> {
        z.slacks()
    }

    #[test]
    fn build_examples() {
        let g = build_graph(vec![v("a", VertexFlag::Imc)], vec![e("a", "a", 1.0), e("a", "a", 1.5)]).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert!(matches!(
            build_graph(vec![v("a", VertexFlag::Imc)], vec![e("a", "a", -0.5)]),
            Err(GraphError::NegativeSlack { .. })
        ));
        assert!(matches!(
            build_graph(vec![v("a", VertexFlag::Imc)], vec![e("a", "b", 0.5)]),
            Err(GraphError::DanglingEdge { .. })
        ));
        let g = build_graph::<f64>(vec![v("a", VertexFlag::Imc), v("b", VertexFlag::Imc)], vec![]).unwrap();
        let z = enumerate_path_slacks(&g, "a", "b", &EnumerationOptions::new(5.0, 1.0)).unwrap();
        assert!(z.values.is_empty());
    }

    #[test]
    fn single_vertex_examples() {
        let g = build_graph(vec![v("a", VertexFlag::Imc)], vec![e("a", "a", 1.0), e("a", "a", 1.5)]).unwrap();
        let z = enumerate_path_slacks(&g, "a", "a", &EnumerationOptions::new(3.2, 1.0)).unwrap();
        assert_eq!(slacks(&z), vec![0.0, 1.0, 1.5, 2.0, 2.5, 3.0]);
        let g = build_graph(vec![v("a", VertexFlag::Imc)], vec![e("a", "a", 1.0)]).unwrap();
        let z = enumerate_path_slacks(&g, "a", "a", &EnumerationOptions::new(3.5, 1.0)).unwrap();
        assert_eq!(slacks(&z), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(z.values[3].witness.len(), 3);
        assert_eq!(g.evaluate_witness(0, &z.values[3].witness), Some((0, 3.0)));
    }

    #[test]
    fn ray_examples() {
        let g = build_graph(
            vec![v("x", VertexFlag::Imc), v("w", VertexFlag::InfiniteLeaf)],
            vec![e("x", "x", 1.0), e("x", "x", 1.3), e("x", "w", 0.7), e("w", "x", 0.9)],
        )
        .unwrap();
        let (rho, z) = ray_threshold(&g, "x", "x", &EnumerationOptions::new(5.0, 0.5)).unwrap();
        assert!((rho - 1.6).abs() < 1e-15);
        assert_eq!(slacks(&z), vec![0.0, 1.0, 1.3]);
        assert_eq!(z.ray_start, Some(rho));
        assert!(z.contains(2.0, 1e-12) && z.contains(2.3, 1e-12) && !z.contains(1.5, 1e-12));

        let (rho, z) = ray_threshold(&g, "w", "w", &EnumerationOptions::new(5.0, 0.5)).unwrap();
        assert_eq!(rho, 0.0);
        assert!(z.values.is_empty() && z.ray_start == Some(0.0));

        let g = build_graph(vec![v("x", VertexFlag::Imc)], vec![e("x", "x", 1.0)]).unwrap();
        let (rho, z) = ray_threshold(&g, "x", "x", &EnumerationOptions::new(2.5, 1.0)).unwrap();
        assert!(rho.is_infinite() && z.ray_start.is_none());
        assert_eq!(slacks(&z), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn subadditivity_examples() {
        let g = build_graph(vec![v("x", VertexFlag::Imc)], vec![e("x", "x", 1.0)]).unwrap();
        let z = enumerate_path_slacks(&g, "x", "x", &EnumerationOptions::new(3.0, 1.0)).unwrap();
        assert!(matches!(check_subadditivity(&z, &z, &z, 1e-9), Err(GraphError::BudgetMismatch { .. })));
        let half = enumerate_path_slacks(&g, "x", "x", &EnumerationOptions::new(1.5, 1.0)).unwrap();
        assert!(check_subadditivity(&half, &half, &z, 1e-9).unwrap().is_empty());

        let g = build_graph(vec![v("x", VertexFlag::Imc)], vec![e("x", "x", 1.0), e("x", "x", 1.5)]).unwrap();
        let full = enumerate_path_slacks(&g, "x", "x", &EnumerationOptions::new(4.0, 1.0)).unwrap();
        let half = enumerate_path_slacks(&g, "x", "x", &EnumerationOptions::new(2.0, 1.0)).unwrap();
        let mut broken = full.clone();
        broken.values.retain(|e| (e.slack - 2.5).abs() > 1e-12);
        let viol = check_subadditivity(&half, &half, &broken, 1e-9).unwrap();
        assert!(!viol.is_empty() && viol.iter().all(|v| (v.sum - 2.5).abs() < 1e-12));
        assert!(check_subadditivity(&half, &half, &full, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn derived_set_examples() {
        let mut s: Vec<f64> = (1..=10_000).map(|n| 1.0 / n as f64).collect();
        s.push(0.0);
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = 2e-4;
        let levels = derived_sets(&s, &scale_ladder(h, 1.0, 2));
        assert_eq!(levels[0].len(), 1);
        assert!(levels[0][0].abs() <= h);
        assert!(levels[1].is_empty());

        let finite = [0.0, 1.0, 2.5, 4.0];
        assert!(derived_set(&finite, 0.5).is_empty());
    }

    #[test]
    fn finite_graph_has_no_accumulation() {
        let g = build_graph(vec![v("x", VertexFlag::Imc)], vec![e("x", "x", 1.0), e("x", "x", 1.37)]).unwrap();
        let rep = check_filtration(
            &g,
            "x",
            "x",
            &EnumerationOptions::new(6.0, 1.0),
            &FiltrationOptions { h0: 1e-3, gamma: 10.0, max_level: 2, min_cluster: 2, margin: None },
        )
        .unwrap();
        for s in &rep.sweep {
            assert!(s.levels[0].derived.is_empty());
            assert_eq!(s.levels[0].verdict, Verdict::FiniteApproximationConsistent);
        }
    }

    #[test]
    fn family_members_and_limit() {
        let fam = FamilyWeight { base: 1.0f64, correction_params: [1.0, 1.0], c: 2.0, k_start: 1 };
        let m = fam.members(1e-12, 1000);
        assert!(m.len() > 5);
        assert!(m.windows(2).all(|w| w[1].1 < w[0].1));
        assert!((m.last().unwrap().1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn twist_compose_matches_matrices() {
        use crate::moebius::{bruhat_nau, MoebiusElement};
        type M = MoebiusElement<f64>;
        let m1 = M::lower(0.3) * M::diag_a(1.1) * M::upper(0.7);
        let m2 = M::lower(0.9) * M::diag_a(0.4) * M::upper(-0.2);
        let s = 2.3;
        let direct = m1 * M::diag_a(s) * m2 * M::diag_a(-s);
        let c = twist_compose(&bruhat_nau(&m1).unwrap(), &bruhat_nau(&m2).unwrap(), s).unwrap();
        assert!(c.reconstruct().approx_eq(&direct, 1e-12));
    }

    #[test]
    fn census_counts() {
        for n in 1..=3 {
            let vs: Vec<_> = (0..n).map(|i| v(&format!("v{i}"), VertexFlag::Imc)).collect();
            let es: Vec<_> =
                (0..n).map(|i| e(&format!("v{i}"), &format!("v{}", (i + 1) % n), 1.0 + i as f64 * 0.1)).collect();
            let g = build_graph(vs, es).unwrap();
            let r = census(&g, &EnumerationOptions::new(4.0, 1.0)).unwrap();
            assert_eq!(r.count, 2 * n + 1);
            assert!(r.reflexive && r.reversal_consistent);
        }
    }
}
