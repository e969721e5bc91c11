//! Subcommand implementations. Each writes `<stem>.json` (and a CSV table
//! where one applies) under the output directory and returns the result.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use horolab_core::chain::{chain_recurrent, classify, discretize, interception_cost, ModelSpec};
use horolab_core::cover::{
    build_vertices, enumerate_connectors, h2_metric, validate_group, ConnectorOptions, FuchsianCoverSpec,
};
use horolab_core::graph::{
    census, depth_from_zset, enumerate_path_slacks, graph_from_spec, ray_threshold, EnumerationOptions,
    FiltrationOptions, GraphSpec, SlackGraph, VertexFlag,
};
use horolab_core::lipschitz::PartialLipschitzFunction;
use horolab_core::moebius::{bruhat_nau, log_delta, normalize, MoebiusElement};
use horolab_core::slack::{connector_geometric_slack, twist_family, OracleOptions, SlackError};

use crate::artifact::{envelope, f, ArtifactWriter, Csv};
use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::golden::GoldenRegistry;
use crate::suite::{self, CriterionResult};

#[derive(Debug, Parser)]
#[command(name = "horolab", version, about = "Horocycle orbit-closure laboratory")]
pub struct Cli {
    /// TOML experiment configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// NAU decomposition of a matrix.
    Bruhat {
        /// `[[a,b],[c,d]]`, normalized to determinant 1.
        #[arg(long)]
        matrix: String,
    },
    /// Enumerate connectors of a cover.
    Connectors(BundleArgs),
    /// Bruhat slack of each connector against the geometric measurement.
    Slack(BundleArgs),
    /// Slack of the twist family `m1 a_{k step} m2 a_{-k step}`.
    Twist {
        #[arg(long)]
        m1: String,
        #[arg(long)]
        m2: String,
        #[arg(long)]
        step: f64,
        #[arg(long, default_value_t = 20)]
        k_max: i64,
        #[arg(long, default_value_t = 0)]
        k_min: i64,
    },
    /// Truncated path-slack set between two vertices.
    Zset(PairArgs),
    /// Derived-set filtration of a path-slack set.
    Depth {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 0.2)]
        h0: f64,
        #[arg(long, default_value_t = 150.0)]
        gamma: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 3)]
        min_cluster: usize,
    },
    /// Orbit-closure census of a graph.
    Census {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Interception costs and proximality classes of a discretized system.
    Chainprox {
        #[command(flatten)]
        model: ModelArgs,
        /// Partition into classes at threshold `--eps`.
        #[arg(long)]
        classify: bool,
        #[arg(long)]
        eps: Option<f64>,
        /// Source and target indices for a single cost with certificate.
        #[arg(long, num_args = 2, value_names = ["X", "Y"])]
        pair: Option<Vec<usize>>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Classify only this many evenly spaced sample points.
        #[arg(long)]
        probes: Option<usize>,
    },
    /// Chain recurrence of a point of a discretized system.
    Chainrec {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        point: usize,
        /// Least orbit-segment length.
        #[arg(long, default_value_t = 1)]
        b: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Greatest 1-Lipschitz extension of data on a finite domain.
    Mcshane {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Euclidean)]
        metric: Metric,
    },
    /// Run every acceptance criterion and write the artifacts.
    VerifyAll {
        /// Store the values of this run as the golden registry.
        #[arg(long)]
        record_goldens: bool,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

#[derive(Debug, Args)]
pub struct BundleArgs {
    /// Cover JSON; defaults to the configured bundle.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub slack_cap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    /// Defaults to the configured slack budget.
    #[arg(long)]
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Rotation,
    Doubling,
    Absorbing,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// JSON model specification (any model, including `custom`).
    #[arg(long, conflicts_with = "model")]
    pub system: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Euclidean,
    /// Upper half-plane; points are `[x, y]` with `y > 0`.
    H2,
}

/// Result of a subcommand: the JSON payload and an optional CSV table.
pub struct Output {
    pub stem: String,
    pub result: Value,
    pub csv: Option<Csv>,
    pub exit_code: i32,
}

fn output(stem: &str, result: Value, csv: Option<Csv>) -> Output {
    Output { stem: stem.to_string(), result, csv, exit_code: 0 }
}

pub fn load_config(cli: &Cli) -> Result<LoadedConfig, CliError> {
    let mut loaded = match &cli.config {
        Some(p) => LoadedConfig::load(p)?,
        None => LoadedConfig::defaults(),
    };
    if let Some(s) = cli.seed {
        loaded.config.seed = Some(s);
    }
    Ok(loaded)
}

pub fn out_dir(cli: &Cli, loaded: &LoadedConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(&loaded.config.output_dir))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn parse_matrix(text: &str) -> Result<MoebiusElement<f64>, CliError> {
    let m: [[f64; 2]; 2] =
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("matrix {text:?}: {e}")))?;
    Ok(normalize(m)?)
}

fn load_graph(path: &Path) -> Result<SlackGraph<f64>, CliError> {
    let spec: GraphSpec<f64> = parse_json(path)?;
    Ok(graph_from_spec(spec)?)
}

fn least_edge(g: &SlackGraph<f64>) -> f64 {
    (0..g.edges().len()).map(|e| g.edge_min(e, 1e-12)).fold(f64::INFINITY, f64::min)
}

fn pair_zset(
    loaded: &LoadedConfig,
    p: &PairArgs,
) -> Result<(SlackGraph<f64>, horolab_core::graph::TruncatedZSet<f64>), CliError> {
    let g = load_graph(&p.graph)?;
    let budget = p.budget.unwrap_or(loaded.config.budgets.slack_budget);
    let mut opts = EnumerationOptions::new(budget, least_edge(&g));
    opts.cap = loaded.config.budgets.value_cap;
    opts.work_cap = loaded.config.budgets.work_cap;
    let leaves = g.vertices().iter().any(|v| v.flag == VertexFlag::InfiniteLeaf);
    let z = if leaves {
        ray_threshold(&g, &p.from, &p.to, &opts)?.1
    } else {
        enumerate_path_slacks(&g, &p.from, &p.to, &opts)?
    };
    Ok((g, z))
}

fn bundle_report(
    loaded: &LoadedConfig,
    b: &BundleArgs,
) -> Result<(FuchsianCoverSpec, horolab_core::cover::ConnectorReport), CliError> {
    let path = b.bundle.clone().unwrap_or_else(|| loaded.resolve(&loaded.config.inputs.bundle));
    let spec = FuchsianCoverSpec::from_json(&read(&path)?)?;
    let vertices = build_vertices(&spec, &spec.vertices)?;
    let c = &loaded.config.budgets;
    let opts = ConnectorOptions {
        max_len: b.max_len.unwrap_or(c.max_len),
        slack_cap: b.slack_cap.unwrap_or(c.slack_cap),
        word_cap: c.word_cap,
        ..Default::default()
    };
    let report = enumerate_connectors(&spec, &vertices, &opts)?;
    if report.min_raw_slack < -1e-6 {
        return Err(SlackError::ConfigurationInvalid { value: report.min_raw_slack }.into());
    }
    Ok((spec, report))
}

fn model_spec(m: &ModelArgs) -> Result<ModelSpec<f64>, CliError> {
    if let Some(p) = &m.system {
        return parse_json(p);
    }
    let need_alpha = || m.alpha.ok_or_else(|| CliError::Validation("--alpha is required for this model".into()));
    match m.model {
        Some(ModelKind::Rotation) => Ok(ModelSpec::Rotation { alpha: need_alpha()? }),
        Some(ModelKind::Doubling) => Ok(ModelSpec::Doubling { jitter: m.jitter }),
        Some(ModelKind::Absorbing) => Ok(ModelSpec::Absorbing { first_step: 0.2, growth: 1.2, gap: 0.5 }),
        None => Err(CliError::Validation("one of --model or --system is required".into())),
    }
}

#[derive(Deserialize)]
struct DomainFile {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct QueryFile {
    points: Vec<Vec<f64>>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn to_h2(points: &[Vec<f64>]) -> Result<Vec<Complex<f64>>, CliError> {
    points
        .iter()
        .map(|p| match p.as_slice() {
            [x, y] if *y > 0.0 && x.is_finite() && y.is_finite() => Ok(Complex::new(*x, *y)),
            _ => Err(CliError::Validation(format!("{p:?} is not a point of the upper half-plane"))),
        })
        .collect()
}

fn mcshane_values(domain: &DomainFile, queries: &QueryFile, metric: Metric) -> Result<(Vec<f64>, f64), CliError> {
    match metric {
        Metric::Euclidean => {
            let dim = domain.points.first().map_or(0, Vec::len);
            if domain.points.iter().chain(&queries.points).any(|p| p.len() != dim) {
                return Err(CliError::Validation("points differ in dimension".into()));
            }
            let fun = PartialLipschitzFunction::new(
                domain.points.clone(),
                domain.values.clone(),
                |a: &Vec<f64>, b: &Vec<f64>| euclidean(a, b),
            )?;
            let margin = fun.check_lipschitz().margin;
            Ok((fun.mcshane_extend(&queries.points)?, margin))
        }
        Metric::H2 => {
            let fun = PartialLipschitzFunction::new(
                to_h2(&domain.points)?,
                domain.values.clone(),
                |a: &Complex<f64>, b: &Complex<f64>| h2_metric(a, b),
            )?;
            let margin = fun.check_lipschitz().margin;
            Ok((fun.mcshane_extend(&to_h2(&queries.points)?)?, margin))
        }
    }
}

#[derive(Serialize)]
struct Decomposition {
    matrix: [f64; 4],
    n: f64,
    t: f64,
    u: f64,
    log_delta: f64,
    reconstruction_error: f64,
}

pub fn run(cli: &Cli, loaded: &LoadedConfig, out: &Path) -> Result<Output, CliError> {
    let cfg = &loaded.config;
    let o = match &cli.command {
        Command::Bruhat { matrix } => {
            let m = parse_matrix(matrix)?;
            let nau = bruhat_nau(&m)?;
            let d = Decomposition {
                matrix: m.to_array(),
                n: nau.n_param,
                t: nau.t,
                u: nau.u_param,
                log_delta: log_delta(&m)?,
                reconstruction_error: nau.reconstruct().frobenius_distance(&m),
            };
            output("bruhat", crate::canon::to_value(&d)?, None)
        }
        Command::Connectors(b) => {
            let (spec, report) = bundle_report(loaded, b)?;
            let validation = validate_group(&spec, 4)?;
            let mut csv = Csv::new(&["source", "target", "word", "k", "slack", "n", "u"]);
            for c in &report.candidates {
                csv.push(vec![
                    c.source_vertex.clone(),
                    c.target_vertex.clone(),
                    c.word.clone(),
                    c.k.to_string(),
                    f(c.raw_slack),
                    f(c.n_param),
                    f(c.u_param),
                ]);
            }
            let result = json!({ "validation": crate::canon::to_value(&validation)?, "report": crate::canon::to_value(&report)? });
            output("connectors", result, Some(csv))
        }
        Command::Slack(b) => {
            let (_, report) = bundle_report(loaded, b)?;
            let opts = OracleOptions { step: cfg.connectors.oracle_step, ..OracleOptions::default() };
            let mut csv = Csv::new(&["source", "target", "word", "k", "bruhat", "geometric", "difference"]);
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for c in &report.candidates {
                let r = connector_geometric_slack(c, &opts)?;
                worst = worst.max(r.difference);
                csv.push(vec![
                    c.source_vertex.clone(),
                    c.target_vertex.clone(),
                    c.word.clone(),
                    c.k.to_string(),
                    f(r.bruhat),
                    f(r.geometric),
                    f(r.difference),
                ]);
                rows.push(json!({ "word": c.word, "k": c.k, "oracle": crate::canon::to_value(&r)? }));
            }
            let within = worst <= cfg.tolerances.geometric;
            let mut o = output(
                "slack",
                json!({ "connectors": rows, "worst_difference": worst, "within_tolerance": within }),
                Some(csv),
            );
            if !within {
                o.exit_code = 2;
            }
            o
        }
        Command::Twist { m1, m2, step, k_max, k_min } => {
            let (a, b) = (parse_matrix(m1)?, parse_matrix(m2)?);
            let fam = twist_family("twist", &a, &b, *step, (*k_min, *k_max))?;
            let mut csv = Csv::new(&["k", "slack", "residual"]);
            for m in &fam.members {
                csv.push(vec![m.k.to_string(), f(m.slack), f(m.residual)]);
            }
            let result = json!({ "family": crate::canon::to_value(&fam)?, "max_residual_past_threshold": fam.max_residual_past_threshold() });
            output("twist", result, Some(csv))
        }
        Command::Zset(p) => {
            let (_, z) = pair_zset(loaded, p)?;
            let mut csv = Csv::new(&["slack", "path_length"]);
            for e in &z.values {
                csv.push(vec![f(e.slack), e.path_length.to_string()]);
            }
            output("zset", crate::canon::to_value(&z)?, Some(csv))
        }
        Command::Depth { pair, h0, gamma, levels, min_cluster } => {
            let (g, z) = pair_zset(loaded, pair)?;
            let fo = FiltrationOptions {
                h0: *h0,
                gamma: *gamma,
                max_level: *levels,
                min_cluster: *min_cluster,
                margin: None,
            };
            let rep = depth_from_zset(&z, g.has_families(), &fo);
            let mut csv = Csv::new(&["h", "level", "value"]);
            for s in &rep.sweep {
                for l in &s.levels {
                    for v in &l.derived {
                        csv.push(vec![f(s.h), l.level.to_string(), f(*v)]);
                    }
                }
            }
            output("depth", crate::canon::to_value(&rep)?, Some(csv))
        }
        Command::Census { graph, budget } => {
            let g = load_graph(graph)?;
            let b = budget.unwrap_or(cfg.graphs.census_budget);
            let rep = census(&g, &EnumerationOptions::new(b, least_edge(&g)))?;
            output("census", crate::canon::to_value(&rep)?, None)
        }
        Command::Chainprox { model, classify: part, eps, pair, horizon, probes } => {
            let spec = model_spec(model)?;
            let sys = discretize(&spec, model.n)?;
            let horizon = horizon.unwrap_or(cfg.budgets.horizon);
            let mut result = json!({ "model": spec.tag(), "n": sys.len(), "h": sys.h, "horizon": horizon });
            let mut csv = None;
            if let Some(p) = pair {
                let (x, y) = (p[0], p[1]);
                let r = interception_cost(&sys, x, y, horizon)?;
                result["interception"] = crate::canon::to_value(&r)?;
            }
            if *part {
                let eps = eps.unwrap_or(cfg.tolerances.class_threshold);
                let probes = match probes {
                    Some(0) => return Err(CliError::Validation("--probes must be positive".into())),
                    Some(k) => {
                        Some((0..(*k).min(sys.len())).map(|i| i * sys.len() / (*k).min(sys.len())).collect::<Vec<_>>())
                    }
                    None => None,
                };
                let partition = classify(&sys, eps, horizon, probes.as_deref(), 8)?;
                let mut table = Csv::new(&["index", "class"]);
                for (c, members) in partition.classes.iter().enumerate() {
                    for m in members {
                        table.push(vec![m.to_string(), c.to_string()]);
                    }
                }
                csv = Some(table);
                result["eps"] = json!(eps);
                result["class_count"] = json!(partition.classes.len());
                result["partition"] = crate::canon::to_value(&partition)?;
            }
            output("chainprox", result, csv)
        }
        Command::Chainrec { model, point, b, eps, horizon } => {
            let spec = model_spec(model)?;
            let sys = discretize(&spec, model.n)?;
            let horizon = horizon.unwrap_or(cfg.budgets.horizon);
            let r = chain_recurrent(&sys, *point, *b as f64, *eps, horizon)?;
            output(
                "chainrec",
                json!({ "model": spec.tag(), "point": point, "b": b, "eps": eps, "recurrence": crate::canon::to_value(&r)? }),
                None,
            )
        }
        Command::Mcshane { domain, queries, metric } => {
            let d: DomainFile = parse_json(domain)?;
            let q: QueryFile = parse_json(queries)?;
            let (values, margin) = mcshane_values(&d, &q, *metric)?;
            let mut csv = Csv::new(&["query", "value"]);
            for (i, v) in values.iter().enumerate() {
                csv.push(vec![i.to_string(), f(*v)]);
            }
            output(
                "mcshane",
                json!({ "values": values, "lipschitz_margin": margin, "domain_size": d.points.len() }),
                Some(csv),
            )
        }
        Command::VerifyAll { record_goldens, only } => return verify_all(loaded, out, *record_goldens, only),
    };
    let writer = ArtifactWriter::new(out)?;
    writer.json(&o.stem, &envelope(command_name(&cli.command), cfg, &o.result)?)?;
    if let Some(csv) = &o.csv {
        writer.csv(&o.stem, csv)?;
    }
    Ok(o)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Bruhat { .. } => "bruhat",
        Command::Connectors(_) => "connectors",
        Command::Slack(_) => "slack",
        Command::Twist { .. } => "twist",
        Command::Zset(_) => "zset",
        Command::Depth { .. } => "depth",
        Command::Census { .. } => "census",
        Command::Chainprox { .. } => "chainprox",
        Command::Chainrec { .. } => "chainrec",
        Command::Mcshane { .. } => "mcshane",
        Command::VerifyAll { .. } => "verify-all",
    }
}

fn verify_all(loaded: &LoadedConfig, out: &Path, record: bool, only: &[u32]) -> Result<Output, CliError> {
    let ids: Vec<u32> = if only.is_empty() { (1..=15).collect() } else { only.to_vec() };
    let (report, recorded) = suite::verify_all(loaded, out, &ids, |r: &CriterionResult| eprintln!("{}", r.line()))?;
    if record {
        let path = loaded.resolve(&loaded.config.inputs.goldens);
        let mut reg = GoldenRegistry::load(&path)?;
        for g in &recorded {
            reg.record(&g.name, g.value, g.abs_tol, g.rel_tol, &report.config_hash);
        }
        reg.save(&path)?;
        eprintln!("recorded {} goldens in {}", recorded.len(), path.display());
    }
    let failed: Vec<u32> = report.criteria.iter().filter(|c| !c.ok()).map(|c| c.id).collect();
    let result = json!({ "config_hash": report.config_hash, "criteria": report.criteria.len(), "failed": failed });
    Ok(Output { stem: "summary".into(), result, csv: None, exit_code: if failed.is_empty() { 0 } else { 2 } })
}
