//! The acceptance suite run by `verify-all`.

use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use horolab_core::chain::{self, classify, cost_row, discretize, GapDirection, GapOrbit, LaminarComponent, ModelSpec};
use horolab_core::cover::{
    build_vertices, connector_graph, enumerate_connectors, h2_metric, sample_model_tau, twist_base_edges,
    ConnectorOptions, ConnectorReport, FuchsianCoverSpec, SampleOptions, VertexSpec,
};
use horolab_core::graph::{
    build_graph, census, check_subadditivity, depth_from_zset, enumerate_path_slacks, graph_from_nau, ray_threshold,
    twist_closure, ClosureOptions, EdgeSpec, EnumerationOptions, FiltrationOptions, GraphVertex, NauEdge, Verdict,
    VertexFlag,
};
use horolab_core::lipschitz::PartialLipschitzFunction;
use horolab_core::moebius::{
    bruhat_nau, flow_separation, frame_of_tangent, log_delta, MoebiusElement, NauDecomposition, UnitTangent,
};
use horolab_core::slack::{
    chain_harness, connector_geometric_slack, excursion_calibration, twist_family, ChainHarnessOptions,
    ExcursionOptions, OracleOptions,
};

use crate::artifact::{envelope, f, ArtifactWriter, Csv};
use crate::config::{ExperimentConfig, LoadedConfig};
use crate::error::CliError;
use crate::golden::{GoldenCheck, GoldenRegistry};

type M64 = MoebiusElement<f64>;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    /// Outcome of the numerical checks; runtime is judged separately.
    pub passed: bool,
    pub summary: String,
    pub details: Value,
    pub goldens: Vec<GoldenCheck>,
    pub limit_seconds: f64,
    #[serde(skip)]
    pub csv: Option<Csv>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CriterionResult {
    pub fn within_time(&self) -> bool {
        self.elapsed.as_secs_f64() < self.limit_seconds
    }

    pub fn ok(&self) -> bool {
        self.passed && self.within_time()
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {} ({:.2}s / {}s) {}",
            self.id,
            self.name,
            if self.ok() { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.limit_seconds,
            self.summary
        )
    }
}

/// A value to pin in the golden registry.
#[derive(Debug, Clone)]
pub struct GoldenValue {
    pub name: String,
    pub value: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

struct Bundle {
    vertices: Vec<VertexSpec>,
    report: ConnectorReport,
}

pub struct Suite<'a> {
    pub cfg: &'a ExperimentConfig,
    loaded: &'a LoadedConfig,
    seed: u64,
    hash: String,
    registry: GoldenRegistry,
    bundle: Option<(FuchsianCoverSpec, Bundle)>,
    pub recorded: Vec<GoldenValue>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn result(id: u32, name: &str, limit: f64) -> CriterionResult {
    CriterionResult {
        id,
        name: name.to_string(),
        passed: false,
        summary: String::new(),
        details: Value::Null,
        goldens: Vec::new(),
        limit_seconds: limit,
        csv: None,
        elapsed: Duration::ZERO,
    }
}

/// Every path of length L is a path of length L-1 plus an edge; sums are
/// merged per vertex at the dedup tolerance.
pub fn concatenation_oracle(n: usize, edges: &[(usize, usize, f64)], y: usize, x: usize, budget: f64) -> Vec<f64> {
    let min = edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
    let depth = if min > 0.0 { (budget / min + 1e-9).floor() as usize } else { 0 };
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

fn same_values(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= tol)
}

fn imc(id: &str) -> GraphVertex {
    GraphVertex { id: id.into(), flag: VertexFlag::Imc }
}

fn plain_edge(src: &str, dst: &str, s: f64) -> EdgeSpec<f64> {
    EdgeSpec { src: src.into(), dst: dst.into(), slack: Some(s), family: None }
}

impl<'a> Suite<'a> {
    pub fn new(loaded: &'a LoadedConfig) -> Result<Self, CliError> {
        let cfg = &loaded.config;
        let seed = cfg.require_seed()?;
        let registry = GoldenRegistry::load(&loaded.resolve(&cfg.inputs.goldens))?;
        Ok(Self { cfg, loaded, seed, hash: cfg.hash(), registry, bundle: None, recorded: Vec::new() })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn golden(&mut self, r: &mut CriterionResult, name: &str, value: f64, abs_tol: f64, rel_tol: f64) -> bool {
        self.recorded.push(GoldenValue { name: name.into(), value, abs_tol, rel_tol });
        let check = self.registry.check(name, value, &self.hash);
        let ok = check.status.is_match();
        r.goldens.push(check);
        ok
    }

    fn bundle(&mut self) -> Result<&Bundle, CliError> {
        if self.bundle.is_none() {
            let path = self.loaded.resolve(&self.cfg.inputs.bundle);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let spec = FuchsianCoverSpec::from_json(&text)?;
            let vertices = build_vertices(&spec, &spec.vertices)?;
            let b = &self.cfg.budgets;
            let opts = ConnectorOptions {
                max_len: b.max_len,
                slack_cap: b.slack_cap,
                word_cap: b.word_cap,
                ..Default::default()
            };
            let report = enumerate_connectors(&spec, &vertices, &opts)?;
            self.bundle = Some((spec, Bundle { vertices, report }));
        }
        Ok(&self.bundle.as_ref().expect("loaded").1)
    }

    fn spec(&self) -> &FuchsianCoverSpec {
        &self.bundle.as_ref().expect("bundle loaded").0
    }

    pub fn run(&mut self, id: u32) -> Result<CriterionResult, CliError> {
        let start = Instant::now();
        let mut r = match id {
            1 => self.bruhat_suite(),
            2 => self.convention(),
            3 => self.slack_oracle(),
            4 => self.twist_law(),
            5 => self.broken_geodesics(),
            6 => self.zset_oracle(),
            7 => self.subadditivity(),
            8 => self.filtration(),
            9 => self.depth_growth(),
            10 => self.ray(),
            11 => self.census(),
            12 => self.rotation(),
            13 => self.doubling_and_laminar(),
            14 => self.recurrence(),
            15 => self.mcshane(),
            _ => Err(CliError::Config(format!("no criterion {id}"))),
        }?;
        r.elapsed = start.elapsed();
        Ok(r)
    }

    fn bruhat_suite(&mut self) -> Result<CriterionResult, CliError> {
        let p = &self.cfg.bruhat;
        let mut r = result(1, "bruhat round trip", 1.0);
        let mut g = rng(self.seed, 1);
        let mut worst = 0.0f64;
        let mut identity_failures = 0usize;
        for _ in 0..p.samples {
            let sign = if g.gen::<bool>() { 1.0 } else { -1.0 };
            let a = sign * g.gen_range(p.min_entry..p.entry_range);
            let b = g.gen_range(-p.entry_range..p.entry_range);
            let c = g.gen_range(-p.entry_range..p.entry_range);
            let m = M64::from_entries_unchecked(a, b, c, (1.0 + b * c) / a);
            let nau = bruhat_nau(&m)?;
            worst = worst.max(nau.reconstruct().frobenius_distance(&m));
            if log_delta(&m)? != 2.0 * m.a.abs().ln() || nau.t != 2.0 * m.a.abs().ln() {
                identity_failures += 1;
            }
        }
        r.passed = worst < self.cfg.tolerances.algebraic && identity_failures == 0;
        r.summary =
            format!("samples {} worst frobenius {:.3e} log_delta mismatches {}", p.samples, worst, identity_failures);
        r.details =
            json!({ "samples": p.samples, "worst_frobenius": worst, "log_delta_mismatches": identity_failures });
        Ok(r)
    }

    fn convention(&mut self) -> Result<CriterionResult, CliError> {
        let p = &self.cfg.bruhat;
        let mut r = result(2, "flow convention", 1.0);
        let mut g = rng(self.seed, 2);
        let mut worst_contract = 0.0f64;
        let mut worst_expand = f64::INFINITY;
        for _ in 0..p.frames {
            let v = UnitTangent::new(
                Complex::new(g.gen_range(-2.0..2.0), g.gen_range(0.2..3.0)),
                g.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            )?;
            let frame = frame_of_tangent(&v);
            for s in [p.perturbation, -p.perturbation] {
                let n = M64::lower(s);
                let u = M64::upper(s);
                worst_contract =
                    worst_contract.max(flow_separation(&n, &frame, p.flow_time) / flow_separation(&n, &frame, 0.0));
                worst_expand =
                    worst_expand.min(flow_separation(&u, &frame, p.flow_time) / flow_separation(&u, &frame, 0.0));
            }
        }
        r.passed = worst_contract < 1e-2 && worst_expand > 10.0;
        r.summary = format!("lower ratio {:.3e} (< 1e-2), upper ratio {:.3e} (> 10)", worst_contract, worst_expand);
        r.details = json!({ "frames": p.frames, "max_lower_ratio": worst_contract, "min_upper_ratio": worst_expand });
        Ok(r)
    }

    fn slack_oracle(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(3, "slack cross-oracle", 60.0);
        let step = self.cfg.connectors.oracle_step;
        let tol = self.cfg.tolerances.geometric;
        let min_count = self.cfg.connectors.min_count;
        let bundle = self.bundle()?;
        let opts = OracleOptions { step, ..OracleOptions::default() };
        let mut worst = 0.0f64;
        let mut csv = Csv::new(&["source", "target", "word", "k", "bruhat", "geometric", "difference"]);
        for c in &bundle.report.candidates {
            let o = connector_geometric_slack(c, &opts)?;
            worst = worst.max(o.difference);
            csv.push(vec![
                c.source_vertex.clone(),
                c.target_vertex.clone(),
                c.word.clone(),
                c.k.to_string(),
                f(o.bruhat),
                f(o.geometric),
                f(o.difference),
            ]);
        }
        let count = bundle.report.candidates.len();
        let min_slack = bundle.report.candidates.iter().map(|c| c.raw_slack).fold(f64::INFINITY, f64::min);
        let min_raw = bundle.report.min_raw_slack;
        let goldens_ok = self.golden(&mut r, "connector_count", count as f64, 0.0, 0.0)
            & self.golden(&mut r, "least_connector_slack", min_slack, 1e-9, 0.0);
        r.passed = count >= min_count && worst <= tol && min_raw > -1e-6 && goldens_ok;
        r.summary = format!("connectors {count} worst |bruhat - geometric| {worst:.3e}");
        r.details = json!({
            "connectors": count,
            "worst_difference": worst,
            "least_slack": min_slack,
            "min_raw_slack": min_raw,
            "words_examined": bundle_words(self.bundle.as_ref()),
        });
        r.csv = Some(csv);
        Ok(r)
    }

    fn twist_law(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(4, "twist-family law", 10.0);
        let p = self.cfg.connectors.clone();
        let bundle = self.bundle()?;
        let mut list: Vec<_> = bundle.report.candidates.iter().collect();
        list.sort_by(|a, b| a.raw_slack.total_cmp(&b.raw_slack).then(a.word.cmp(&b.word)));
        list.truncate(p.family_candidates);
        let mut families = Vec::new();
        let mut csv = Csv::new(&["family", "k", "slack", "residual"]);
        let mut worst = 0.0f64;
        let mut failures = 0;
        'outer: for e1 in &list {
            for e2 in list.iter().filter(|e| e.target_vertex == e1.source_vertex) {
                let y = bundle.vertices.iter().find(|v| v.name == e1.source_vertex).expect("vertex");
                let name = format!("{}|{}", e1.word, e2.word);
                let fam = twist_family(&name, &e1.matrix, &e2.matrix, y.length, (0, p.family_k_max))?;
                match fam.max_residual_past_threshold() {
                    Some(res) if res < p.residual_tol => worst = worst.max(res),
                    Some(res) => {
                        worst = worst.max(res);
                        failures += 1;
                    }
                    None => failures += 1,
                }
                for m in &fam.members {
                    csv.push(vec![name.clone(), m.k.to_string(), f(m.slack), f(m.residual)]);
                }
                families.push(json!({
                    "edge": name,
                    "threshold": fam.threshold,
                    "limit": fam.analytic_limit,
                    "u_param": fam.u_param,
                    "n_param": fam.n_param,
                    "max_residual": fam.max_residual_past_threshold(),
                }));
                if families.len() >= p.families {
                    break 'outer;
                }
            }
        }
        r.passed = families.len() >= 5 && failures == 0;
        r.summary = format!("families {} worst residual {:.3e}", families.len(), worst);
        r.details = json!({ "families": families, "worst_residual": worst });
        r.csv = Some(csv);
        Ok(r)
    }

    fn broken_geodesics(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(5, "broken-geodesic harness", 120.0);
        let h = &self.cfg.harness;
        let opts = ChainHarnessOptions {
            trials: h.trials,
            segments: h.segments,
            min_length: h.min_length,
            max_length: h.max_length,
            eps_min: h.eps_min,
            eps_max: h.eps_max,
            sample_step: h.sample_step,
        };
        let mut g = rng(self.seed, 5);
        let rep = chain_harness(&mut g, &opts);
        let rel = self.cfg.tolerances.golden_relative;
        let finite = rep.kappa_hat.is_finite() && rep.hausdorff_hat.is_finite();
        let gk = self.golden(&mut r, "kappa_hat", rep.kappa_hat, 0.0, rel);
        let gh = self.golden(&mut r, "hausdorff_ratio_hat", rep.hausdorff_hat, 0.0, rel);
        r.passed = finite && gk && gh;
        r.summary =
            format!("kappa_hat {:.6} hausdorff/eps {:.6} over {} chains", rep.kappa_hat, rep.hausdorff_hat, rep.trials);
        r.details = canon_value(&rep)?;
        Ok(r)
    }

    fn zset_oracle(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(6, "Z enumeration vs oracle", 30.0);
        let p = &self.cfg.graphs;
        let mut g = rng(self.seed, 6);
        let mut cases = Vec::new();
        let mut all_ok = true;
        for case in 0..p.random_graphs {
            let n = g.gen_range(1..=p.max_vertices);
            let m = g.gen_range(1..=p.max_edges);
            let edges: Vec<(usize, usize, f64)> =
                (0..m).map(|_| (g.gen_range(0..n), g.gen_range(0..n), g.gen_range(0.5..2.0))).collect();
            let min = edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
            let budget = min * g.gen_range(4.0..p.max_budget_factor);
            let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
            let graph = build_graph(
                names.iter().map(|s| imc(s)).collect(),
                edges.iter().map(|&(s, d, w)| plain_edge(&names[s], &names[d], w)).collect(),
            )?;
            let mut values = 0;
            let mut ok = true;
            for y in 0..n {
                for x in 0..n {
                    let z = enumerate_path_slacks(&graph, &names[y], &names[x], &EnumerationOptions::new(budget, min))?;
                    let want = concatenation_oracle(n, &edges, y, x, budget);
                    ok &= same_values(&z.slacks(), &want, 1e-12);
                    values += want.len();
                }
            }
            all_ok &= ok;
            cases.push(
                json!({ "case": case, "vertices": n, "edges": m, "budget": budget, "values": values, "agree": ok }),
            );
        }
        r.passed = all_ok && cases.len() == p.random_graphs;
        r.summary = format!("{} graphs, all pairs agree: {}", cases.len(), all_ok);
        r.details = json!({ "cases": cases });
        Ok(r)
    }

    fn subadditivity(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(7, "subadditivity", 60.0);
        let cap = self.cfg.connectors.graph_cap;
        let budget = self.cfg.connectors.subadditivity_budget;
        let bundle = self.bundle()?;
        let graph = connector_graph(&bundle.report, &bundle.vertices, cap, 1e-9)?;
        let min = (0..graph.edges().len()).map(|e| graph.edge_min(e, 1e-9)).fold(f64::INFINITY, f64::min);
        let names: Vec<String> = bundle.vertices.iter().map(|v| v.name.clone()).collect();
        let o = |b: f64| EnumerationOptions::new(b, min);
        let mut violations = 0;
        let mut triples = 0;
        let mut pairs = 0u64;
        for x in &names {
            for y in &names {
                for z in &names {
                    let zy = enumerate_path_slacks(&graph, y, z, &o(budget / 2.0))?;
                    let xz = enumerate_path_slacks(&graph, z, x, &o(budget / 2.0))?;
                    let xy = enumerate_path_slacks(&graph, y, x, &o(budget))?;
                    violations += check_subadditivity(&zy, &xz, &xy, 1e-9)?.len();
                    pairs += (zy.values.len() * xz.values.len()) as u64;
                    triples += 1;
                }
            }
        }
        r.passed = violations == 0 && triples == names.len().pow(3);
        r.summary = format!("{triples} triples, {pairs} sums, {violations} violations");
        r.details = json!({ "edges": graph.edges().len(), "budget": budget, "triples": triples, "sums": pairs, "violations": violations });
        Ok(r)
    }

    fn filtration(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(8, "filtration check", 120.0);
        let p = &self.cfg.filtration;
        let base = [NauEdge {
            src: 0,
            dst: 0,
            nau: NauDecomposition { n_param: p.n_param, t: p.loop_slack, u_param: p.u_param },
            weight: 1,
        }];
        let copts =
            ClosureOptions { budget: p.budget, tol: p.tol, max_edges: self.cfg.budgets.edge_cap, max_weight: 10 };
        let edges = twist_closure(&base, &[p.step], &copts)?;
        let graph = graph_from_nau(vec![imc("v")], &edges)?;
        let min = edges.iter().map(|e| e.nau.t).fold(f64::INFINITY, f64::min);
        let mut eo = EnumerationOptions::new(p.budget, min);
        eo.cap = self.cfg.budgets.value_cap;
        eo.work_cap = self.cfg.budgets.work_cap;
        let z = enumerate_path_slacks(&graph, "v", "v", &eo)?;
        let fo = FiltrationOptions {
            h0: p.h0,
            gamma: p.gamma,
            max_level: p.levels,
            min_cluster: p.min_cluster,
            margin: None,
        };
        let rep = depth_from_zset(&z, true, &fo);
        let all_match = rep
            .sweep
            .iter()
            .all(|s| s.levels.len() == p.levels && s.levels.iter().all(|l| l.verdict == Verdict::Match));
        r.passed = all_match && rep.stabilized;
        r.summary = format!(
            "closure edges {} |Z| {} levels 1..{} match at every h: {} stabilized: {}",
            edges.len(),
            z.values.len(),
            p.levels,
            all_match,
            rep.stabilized
        );
        r.csv = Some(depth_csv(&rep));
        r.details = json!({ "closure_edges": edges.len(), "report": canon_value(&rep)? });
        Ok(r)
    }

    fn depth_growth(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(9, "depth growth", 120.0);
        let p = self.cfg.depth.clone();
        let h = self.cfg.harness.clone();
        let edge_cap = self.cfg.budgets.edge_cap;
        let value_cap = self.cfg.budgets.value_cap;
        let rel = self.cfg.tolerances.golden_relative;
        let mut g = rng(self.seed, 9);
        self.bundle()?;
        let bundle = &self.bundle.as_ref().expect("loaded").1;
        let (f_tau, lines, _) = sample_model_tau(self.spec(), &bundle.vertices, &SampleOptions::default())?;
        let eopts =
            ExcursionOptions { epsilon0: h.excursion_epsilon0, trials: h.excursion_trials, ..Default::default() };
        let exc = excursion_calibration(&lines, |z| f_tau.upper_value(z), &eopts, &mut g);
        let delta_hat = exc.delta;

        let (base, steps) = twist_base_edges(&bundle.report, &bundle.vertices, p.per_pair, p.base_cap)?;
        let delta_min = base.iter().map(|e| e.nau.t).fold(f64::INFINITY, f64::min);
        let copts = ClosureOptions { budget: p.budget, tol: p.tol, max_edges: edge_cap, max_weight: 10 };
        let edges = twist_closure(&base, &steps, &copts)?;
        let vs: Vec<GraphVertex> = bundle.vertices.iter().map(|v| imc(&v.name)).collect();
        let graph = graph_from_nau(vs, &edges)?;
        let min = edges.iter().map(|e| e.nau.t).fold(f64::INFINITY, f64::min);
        let mut eo = EnumerationOptions::new(p.budget, min);
        eo.cap = value_cap;
        eo.work_cap = self.cfg.budgets.work_cap;
        let z = enumerate_path_slacks(&graph, &p.source, &p.target, &eo)?;
        let fo = FiltrationOptions {
            h0: p.h0,
            gamma: p.gamma,
            max_level: p.levels,
            min_cluster: p.min_cluster,
            margin: None,
        };
        let rep = depth_from_zset(&z, true, &fo);
        let top = p.top_fraction * p.budget;
        let mut nonempty = true;
        let mut growth = true;
        let mut lower = true;
        let mut minima = Vec::new();
        for s in &rep.sweep {
            let mut prev = 0.0f64;
            let mut row = Vec::new();
            for l in &s.levels {
                let m = l.derived.iter().copied().fold(f64::INFINITY, f64::min);
                nonempty &= m <= top;
                growth &= m >= delta_hat * l.level as f64 && m >= prev;
                lower &= m >= (l.level + 1) as f64 * delta_min - s.h;
                prev = m;
                row.push(m);
            }
            minima.push(json!({ "h": s.h, "minima": row }));
        }
        let mut goldens_ok = self.golden(&mut r, "delta_hat", delta_hat, 0.0, rel);
        if let Some(s) = rep.sweep.last() {
            for l in &s.levels {
                let m = l.derived.iter().copied().fold(f64::INFINITY, f64::min);
                goldens_ok &= self.golden(&mut r, &format!("depth_level_{}_min", l.level), m, 1e-9, 0.0);
            }
        }
        r.passed = rep.sweep.iter().all(|s| s.levels.len() == p.levels) && nonempty && growth && lower && goldens_ok;
        r.summary = format!(
            "|Z| {} levels nonempty below {:.2}: {} growth >= delta_hat*i ({:.3e}): {}",
            z.values.len(),
            top,
            nonempty,
            delta_hat,
            growth && lower
        );
        r.csv = Some(depth_csv(&rep));
        r.details = json!({
            "delta_hat": delta_hat,
            "excursion_accepted": exc.accepted,
            "least_base_slack": delta_min,
            "closure_edges": edges.len(),
            "z_size": z.values.len(),
            "level_minima": minima,
            "report": canon_value(&rep)?,
        });
        Ok(r)
    }

    fn ray(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(10, "ray threshold", 1.0);
        let budget = self.cfg.graphs.ray_budget;
        let graph = build_graph(
            vec![imc("x"), GraphVertex { id: "w".into(), flag: VertexFlag::InfiniteLeaf }],
            vec![
                plain_edge("x", "x", 1.0),
                plain_edge("x", "x", 1.3),
                plain_edge("x", "w", 0.7),
                plain_edge("w", "x", 0.9),
            ],
        )?;
        let (rho, z) = ray_threshold(&graph, "x", "x", &EnumerationOptions::new(budget, 0.5))?;
        let raw = [(0, 0, 1.0), (0, 0, 1.3), (0, 1, 0.7), (1, 0, 0.9)];
        let all = concatenation_oracle(2, &raw, 0, 0, budget);
        let imc_only = concatenation_oracle(2, &raw[..2], 0, 0, budget);
        let through_leaf = all
            .iter()
            .copied()
            .filter(|v| !imc_only.iter().any(|u| (u - v).abs() <= 1e-12))
            .fold(f64::INFINITY, f64::min);
        let below: Vec<f64> = all.iter().copied().filter(|&v| v < through_leaf - 1e-12).collect();
        r.passed = rho == 1.6
            && through_leaf == rho
            && z.slacks() == below
            && below == [0.0, 1.0, 1.3]
            && z.ray_start == Some(rho);
        r.summary = format!("rho {} Z below rho {:?} ray from {:?}", rho, z.slacks(), z.ray_start);
        r.details = json!({ "rho": rho, "oracle_rho": through_leaf, "z": z.slacks(), "ray_start": z.ray_start });
        Ok(r)
    }

    fn census(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(11, "orbit-closure census", 10.0);
        let budget = self.cfg.graphs.census_budget;
        let mut ok = true;
        let mut rows = Vec::new();
        for n in 1..=3usize {
            let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
            let mut es: Vec<EdgeSpec<f64>> =
                (0..n).map(|i| plain_edge(&names[i], &names[(i + 1) % n], 1.0 + 0.1 * i as f64)).collect();
            es.push(plain_edge(&names[0], &names[0], 1.25));
            let graph = build_graph(names.iter().map(|s| imc(s)).collect(), es)?;
            let opts = EnumerationOptions::new(budget, 1.0);
            let rep = census(&graph, &opts)?;
            let rev = graph.reversed();
            let mut value_for_value = true;
            for v in &names {
                let a = enumerate_path_slacks(&graph, v, v, &opts)?.slacks();
                let b = enumerate_path_slacks(&rev, v, v, &opts)?.slacks();
                value_for_value &= same_values(&a, &b, 1e-9);
            }
            let good = rep.count == 2 * n + 1 && rep.reflexive && rep.reversal_consistent && value_for_value;
            ok &= good;
            rows.push(
                json!({ "vertices": n, "classes": rep.count, "reflexive": rep.reflexive, "reversal": value_for_value }),
            );
        }
        r.passed = ok;
        r.summary = format!("class counts 3/5/7 and reversal consistency: {ok}");
        r.details = json!({ "graphs": rows });
        Ok(r)
    }

    fn rotation(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(12, "chain proximality rotation", 60.0);
        let p = &self.cfg.rotation;
        let horizon = self.cfg.budgets.horizon;
        let eps = self.cfg.tolerances.class_threshold;
        let sys = discretize(&ModelSpec::Rotation { alpha: p.alpha }, p.n)?;
        let mut margin = f64::INFINITY;
        for x in 0..sys.len() {
            let row = cost_row(&sys, x, horizon, None);
            for (y, c) in row.iter().enumerate() {
                margin = margin.min(c - (sys.distance(x, y) - sys.h));
            }
        }
        let probes: Vec<usize> = (0..p.probes).map(|k| (k * p.probe_spacing) % p.n).collect();
        let part = classify(&sys, eps, horizon, Some(&probes), 0)?;
        let singletons = part.classes.len() == probes.len();
        r.passed = margin >= -1e-12 && singletons && part.asymmetric.is_empty();
        r.summary = format!(
            "min cost - (d - h) over {} pairs {:.3e}; {} probes -> {} classes",
            sys.len() * sys.len(),
            margin,
            probes.len(),
            part.classes.len()
        );
        let mut csv = Csv::new(&["index", "class"]);
        for (c, members) in part.classes.iter().enumerate() {
            for m in members {
                csv.push(vec![m.to_string(), c.to_string()]);
            }
        }
        r.csv = Some(csv);
        r.details = json!({ "h": sys.h, "margin": margin, "partition": canon_value(&part)? });
        Ok(r)
    }

    fn doubling_and_laminar(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(13, "chain proximality doubling", 120.0);
        let d = &self.cfg.doubling;
        let sys = discretize(&ModelSpec::Doubling { jitter: d.jitter }, d.n)?;
        // costs below the next float above the bound are at most the bound
        let eps = d.bound * (1.0 + f64::EPSILON);
        let part = classify(&sys, eps, d.horizon, None, 4)?;
        let doubling_ok = part.classes.len() == 1 && part.asymmetric.is_empty() && part.within_class_violations == 0;

        let l = &self.cfg.laminar;
        let model = laminar_model(l);
        let lam = discretize(&model, l.samples)?;
        let lam_eps = l.class_factor * lam.h;
        let lpart = classify(&lam, lam_eps, l.horizon, None, 4)?;
        let matches_components = lpart.classes.len() == l.alphas.len()
            && lpart
                .classes
                .iter()
                .enumerate()
                .all(|(c, members)| members.len() == l.samples && members.iter().all(|&m| m / l.samples == c));
        let laminar_ok = matches_components && lpart.asymmetric.is_empty();
        r.passed = doubling_ok && laminar_ok;
        r.summary = format!(
            "doubling n {} classes {} (all costs <= 2^-9: {}); laminar classes {} asymmetric {}",
            sys.len(),
            part.classes.len(),
            part.within_class_violations == 0 && part.classes.len() == 1,
            lpart.classes.len(),
            lpart.asymmetric.len()
        );
        let mut csv = Csv::new(&["model", "index", "class"]);
        for (c, members) in lpart.classes.iter().enumerate() {
            for m in members {
                csv.push(vec!["laminar".into(), m.to_string(), c.to_string()]);
            }
        }
        r.csv = Some(csv);
        r.details = json!({
            "doubling": {
                "n": sys.len(),
                "h": sys.h,
                "bound": d.bound,
                "classes": part.classes.len(),
                "asymmetric": part.asymmetric.len(),
                "pairs_above_bound": part.within_class_violations,
                "witnesses": canon_value(&part.witnesses)?,
            },
            "laminar": {
                "h": lam.h,
                "threshold": lam_eps,
                "classes": lpart.classes.iter().map(|c| c.len()).collect::<Vec<_>>(),
                "asymmetric": canon_value(&lpart.asymmetric)?,
                "sigma_invariant": lpart.sigma_invariant,
                "witnesses": canon_value(&lpart.witnesses)?,
            },
        });
        Ok(r)
    }

    fn recurrence(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(14, "chain recurrence", 10.0);
        let p = &self.cfg.recurrence;
        let sys = discretize(&ModelSpec::Rotation { alpha: p.periodic_alpha }, p.periodic_n)?;
        let mut periodic_ok = true;
        for x in 0..sys.len() {
            let c = chain::chain_recurrent(&sys, x, p.periodic_b, p.periodic_eps, p.horizon)?;
            periodic_ok &= c.recurrent && c.jumps.is_empty();
        }
        let model = ModelSpec::Absorbing { first_step: p.first_step, growth: p.growth, gap: p.gap };
        let abs = discretize(&model, p.absorbing_points)?;
        let escape = p.first_step.min(p.gap);
        let start = chain::chain_recurrent(&abs, 0, p.absorbing_b, p.absorbing_eps, p.horizon)?;
        let fixed = chain::chain_recurrent(&abs, abs.len() - 1, p.absorbing_b, p.absorbing_eps, p.horizon)?;
        let absorbing_ok = p.absorbing_eps < escape && !start.recurrent && fixed.recurrent;
        r.passed = periodic_ok && absorbing_ok;
        r.summary = format!(
            "periodic points recurrent without jumps: {periodic_ok}; absorbing start recurrent at eps {} < escape gap {}: {}",
            p.absorbing_eps, escape, start.recurrent
        );
        r.details = json!({
            "periodic_points": sys.len(),
            "periodic_ok": periodic_ok,
            "escape_gap": escape,
            "absorbing_start_recurrent": start.recurrent,
            "fixed_point_recurrent": fixed.recurrent,
        });
        Ok(r)
    }

    fn mcshane(&mut self) -> Result<CriterionResult, CliError> {
        let mut r = result(15, "McShane extension", 10.0);
        let p = &self.cfg.mcshane;
        let mut g = rng(self.seed, 15);
        let point = |g: &mut ChaCha8Rng| Complex::new(g.gen_range(-2.0..2.0), g.gen_range(0.2..3.0));
        let anchor = Complex::new(0.0, 1.0);
        let domain: Vec<Complex<f64>> = (0..p.domain).map(|_| point(&mut g)).collect();
        let values: Vec<f64> = domain.iter().map(|z| 0.5 * z.im.ln() + 0.3 * h2_metric(z, &anchor)).collect();
        let metric = h2_metric as fn(&Complex<f64>, &Complex<f64>) -> f64;
        let fun = PartialLipschitzFunction::new(domain.clone(), values.clone(), metric)?;
        let exact = fun.mcshane_extend(&domain)? == values;
        let mut worst_lip = f64::NEG_INFINITY;
        for _ in 0..p.query_pairs {
            let (a, b) = (point(&mut g), point(&mut g));
            let (va, vb) = (fun.upper_value(&a), fun.upper_value(&b));
            worst_lip = worst_lip.max((va - vb).abs() - h2_metric(&a, &b));
        }
        let queries: Vec<Complex<f64>> = (0..p.alternative_queries).map(|_| point(&mut g)).collect();
        let upper = fun.mcshane_extend(&queries)?;
        let mut worst_max = f64::NEG_INFINITY;
        for _ in 0..p.alternatives {
            let (mut pts, mut vals) = (domain.clone(), values.clone());
            for _ in 0..3 {
                let q = point(&mut g);
                let grown = PartialLipschitzFunction::new(pts.clone(), vals.clone(), metric)?;
                let (lo, hi) = (grown.lower_value(&q), grown.upper_value(&q));
                pts.push(q);
                vals.push(lo + g.gen::<f64>() * (hi - lo));
            }
            let alt = PartialLipschitzFunction::new(pts, vals, metric)?.lower_extend(&queries)?;
            for (a, u) in alt.iter().zip(&upper) {
                worst_max = worst_max.max(a - u);
            }
        }
        r.passed = exact && worst_lip <= 1e-12 && worst_max <= 1e-12;
        r.summary = format!(
            "extension exact: {exact}; max |dv| - d {:.3e}; max alternative - mcshane {:.3e}",
            worst_lip, worst_max
        );
        r.details = json!({
            "domain": p.domain,
            "extension_exact": exact,
            "lipschitz_margin": worst_lip,
            "alternatives": p.alternatives,
            "maximality_margin": worst_max,
        });
        Ok(r)
    }
}

fn bundle_words(b: Option<&(FuchsianCoverSpec, Bundle)>) -> u64 {
    b.map_or(0, |(_, b)| b.report.words_examined)
}

fn canon_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    Ok(crate::canon::to_value(v)?)
}

fn depth_csv(rep: &horolab_core::graph::DepthReport<f64>) -> Csv {
    let mut csv = Csv::new(&["h", "level", "kind", "value"]);
    for s in &rep.sweep {
        for l in &s.levels {
            for v in &l.derived {
                csv.push(vec![f(s.h), l.level.to_string(), "derived".into(), f(*v)]);
            }
        }
    }
    if let Some(s) = rep.sweep.last() {
        for l in &s.levels {
            for v in &l.hom_values {
                csv.push(vec![f(s.h), l.level.to_string(), "hom".into(), f(*v)]);
            }
        }
    }
    csv
}

/// Two-component laminar model with gap orbits of mixed directions.
pub fn laminar_model(l: &crate::config::LaminarParams) -> ModelSpec<f64> {
    let dirs = [GapDirection::Forward, GapDirection::Backward, GapDirection::Both];
    let components = l
        .alphas
        .iter()
        .enumerate()
        .map(|(c, &alpha)| LaminarComponent {
            alpha,
            gaps: (0..l.orbits)
                .map(|k| GapOrbit {
                    anchor: 0.05 + 0.06 * c as f64 + 0.161 * k as f64,
                    length: l.gap_length,
                    rate: l.gap_rate,
                    direction: dirs[k % 3],
                })
                .collect(),
            measure: 0.0,
        })
        .collect();
    ModelSpec::Laminar { components, separation: l.separation }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub config_hash: String,
    pub criteria: Vec<CriterionResult>,
    pub all_passed: bool,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.criteria.iter().all(CriterionResult::ok)
    }
}

fn stem(r: &CriterionResult) -> String {
    let slug: String =
        r.name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect();
    format!("criterion-{:02}-{}", r.id, slug)
}

/// Runs the requested criteria and writes one JSON (and CSV where present)
/// artifact per criterion plus `summary.json`. Artifacts carry no timings.
pub fn verify_all(
    loaded: &LoadedConfig,
    out: &Path,
    ids: &[u32],
    mut progress: impl FnMut(&CriterionResult),
) -> Result<(SuiteReport, Vec<GoldenValue>), CliError> {
    let mut suite = Suite::new(loaded)?;
    let writer = ArtifactWriter::new(out)?;
    let mut criteria = Vec::new();
    for &id in ids {
        let r = suite.run(id)?;
        let s = stem(&r);
        writer.json(&s, &envelope("verify-all", &loaded.config, &r)?)?;
        if let Some(csv) = &r.csv {
            writer.csv(&s, csv)?;
        }
        progress(&r);
        criteria.push(r);
    }
    let all_passed = criteria.iter().all(|c| c.passed);
    let report = SuiteReport { config_hash: suite.config_hash().to_string(), criteria, all_passed };
    let summary: Vec<Value> = report
        .criteria
        .iter()
        .map(|c| json!({ "id": c.id, "name": c.name, "passed": c.passed, "summary": c.summary, "limit_seconds": c.limit_seconds }))
        .collect();
    writer.json(
        "summary",
        &envelope("verify-all", &loaded.config, &json!({ "criteria": summary, "all_passed": all_passed }))?,
    )?;
    Ok((report, suite.recorded))
}
