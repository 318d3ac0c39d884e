//! `ebn`: compile models into discrete networks and query them from the
//! command line.
//!
//! Tables go to stdout (or `--out`) as CSV with a fixed header per command,
//! or as JSON with `--format json`. Exit codes: 0 success, 2 invalid input,
//! 3 inconsistent evidence, 4 failed verification.

mod manifest;

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ebn::bn::Evidence;
use ebn::error::{Error, Result};
use ebn::model::{
    evidence_schema, load_evidence, marginal_gains, model_schema, parse_model_file, recommend, scenario, timeline, verify,
    CompiledModel, EvidenceScript, Finding, Model, Scenario,
};
use ebn::session::{extend_evidence, Session, SessionSource};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "ebn", version, about = "Reliability compilation, inference and decisions on enhanced Bayesian networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct NetArgs {
    /// Compiled network written by `ebn compile`.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    rbn: Option<PathBuf>,
    /// Model file or bundled scenario name, compiled before the query.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, env = "EBN_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvidenceArgs {
    /// Evidence script file, or the name of a script bundled with the scenario.
    #[arg(long)]
    evidence: Option<String>,
    /// Only this step of the script.
    #[arg(long)]
    step: Option<String>,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the run manifest; defaults to `<out>.manifest.json`
    /// when `--out` is given.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaKind {
    Model,
    Evidence,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a model into a persisted network and report its tables.
    Compile {
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "EBN_WORKERS")]
        workers: Option<usize>,
        /// Overrides the model's simulation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Posterior distribution of one node.
    Query {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        evidence: EvidenceArgs,
        #[arg(long)]
        node: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Reliability index per year.
    Timeline {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        evidence: EvidenceArgs,
        /// Declared timeline; the first one by default.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Expected utility of each decision alternative.
    Decide {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        evidence: EvidenceArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Value of information of measurement sets.
    Voi {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        evidence: EvidenceArgs,
        /// Sets separated by `;`, members by `,` (e.g. `M4;M5;M4,M5`);
        /// the model's declared sets by default.
        #[arg(long)]
        sets: Option<String>,
        /// Cost per measurement; prints the recommended set for each.
        #[arg(long = "cost")]
        costs: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare compiled failure probabilities with Monte Carlo bands.
    Verify {
        #[arg(long)]
        model: String,
        #[arg(long)]
        evidence: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "EBN_WORKERS")]
        workers: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Enter a cumulative evidence script step by step into a session and
    /// write its audit log.
    Replay {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        evidence: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the JSON Schema of model or evidence files.
    Schema {
        #[arg(long, value_enum)]
        kind: SchemaKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory for session logs; sessions are kept in memory only
        /// without it.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, env = "EBN_WORKERS")]
        workers: Option<usize>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// A model file, or a bundled scenario when no such file exists.
fn model_source(arg: &str) -> Result<(String, Option<&'static Scenario>)> {
    let p = Path::new(arg);
    if p.exists() {
        return Ok((read(p)?, None));
    }
    match scenario(arg) {
        Ok(sc) => Ok((sc.model.to_string(), Some(sc))),
        Err(_) => Err(Error::Io(format!("no model file or bundled scenario `{arg}`"))),
    }
}

fn load_model_arg(arg: &str, seed: Option<u64>) -> Result<(Model, Option<&'static Scenario>)> {
    let (text, sc) = model_source(arg)?;
    let mut file = parse_model_file(&text)?;
    if let Some(s) = seed {
        file.options.seed = s;
    }
    Ok((Model::new(file)?, sc))
}

fn load_net(args: &NetArgs) -> Result<(CompiledModel, Option<&'static Scenario>)> {
    match (&args.rbn, &args.model) {
        (Some(p), _) => {
            let m = CompiledModel::from_json(&read(p)?)?;
            let sc = scenario(&m.model).ok();
            Ok((m, sc))
        }
        (None, Some(arg)) => {
            let (m, sc) = load_model_arg(arg, None)?;
            Ok((m.compile(args.workers)?, sc))
        }
        (None, None) => Err(Error::Model("give --rbn or --model".into())),
    }
}

/// Evidence script text: a file, or a script bundled with the scenario.
fn script_source(arg: &str, sc: Option<&Scenario>) -> Result<String> {
    let p = Path::new(arg);
    if p.exists() {
        return read(p);
    }
    sc.and_then(|s| s.evidence.iter().find(|(n, _)| *n == arg))
        .map(|(_, t)| t.to_string())
        .ok_or_else(|| Error::Io(format!("no evidence file or bundled script `{arg}`")))
}

struct Steps {
    text: Option<String>,
    steps: Vec<(String, Vec<Finding>)>,
}

fn load_steps(args: &EvidenceArgs, sc: Option<&Scenario>) -> Result<Steps> {
    let Some(arg) = &args.evidence else {
        if args.step.is_some() {
            return Err(Error::Model("--step needs --evidence".into()));
        }
        return Ok(Steps {
            text: None,
            steps: vec![("none".into(), Vec::new())],
        });
    };
    let text = script_source(arg, sc)?;
    let script: EvidenceScript = load_evidence(&text)?;
    let mut steps = script.findings_by_step();
    if let Some(label) = &args.step {
        script.step(label)?;
        steps.retain(|(l, _)| l == label);
    }
    Ok(Steps { text: Some(text), steps })
}

fn resolve(model: &CompiledModel, findings: &[Finding]) -> Result<Evidence> {
    Ok(extend_evidence(&model.network, &Evidence::new(), findings)?.0)
}

fn emit<T: Serialize>(rows: &[T], out: &OutArgs) -> Result<()> {
    let bytes = match out.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Io(e.to_string()))?
        }
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(rows).map_err(|e| Error::Io(e.to_string()))?;
            v.push(b'\n');
            v
        }
    };
    match &out.out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(&bytes).map_err(Error::from),
    }
}

fn write_manifest(out: &OutArgs, m: &RunManifest) -> Result<()> {
    let path = match (&out.manifest, &out.out) {
        (Some(p), _) => p.clone(),
        (None, Some(o)) => manifest_path(o),
        (None, None) => return Ok(()),
    };
    m.write(&path)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct CptRow<'a> {
    node: &'a str,
    method: &'a str,
    rows: usize,
    cells: usize,
    solver_calls: usize,
    point_solves: usize,
    nonconverged: usize,
    cached: bool,
}

#[derive(Serialize)]
struct PosteriorRow<'a> {
    step: &'a str,
    node: &'a str,
    state: &'a str,
    lower: Option<f64>,
    upper: Option<f64>,
    probability: f64,
}

#[derive(Serialize)]
struct TimelineRow<'a> {
    step: &'a str,
    t: usize,
    beta: f64,
    pf: f64,
}

#[derive(Serialize)]
struct DecisionRow<'a> {
    step: &'a str,
    alternative: &'a str,
    expected_utility: f64,
    optimal: bool,
}

#[derive(Serialize)]
struct VoiRow<'a> {
    step: &'a str,
    set: String,
    voi: f64,
    marginal_gain: Option<f64>,
    with_measurement: f64,
    without_measurement: f64,
}

#[derive(Serialize)]
struct VerifyRow<'a> {
    step: &'a str,
    node: &'a str,
    compiled_pf: f64,
    compiled_beta: f64,
    mcs_pf: f64,
    mcs_beta: f64,
    band_lower: Option<f64>,
    band_upper: Option<f64>,
    effective_samples: Option<f64>,
    pass: bool,
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::Compile {
            model,
            out,
            workers,
            seed,
            manifest,
        } => {
            let (m, _) = load_model_arg(&model, seed)?;
            let compiled = m.compile(workers)?;
            write(&out, &(compiled.to_json()? + "\n"))?;
            let rows: Vec<CptRow> = compiled
                .report
                .cpts
                .iter()
                .map(|c| CptRow {
                    node: &c.node,
                    method: &c.method,
                    rows: c.rows,
                    cells: c.cells,
                    solver_calls: c.solver_calls,
                    point_solves: c.point_solves,
                    nonconverged: c.nonconverged.len(),
                    cached: c.cached,
                })
                .collect();
            emit(&rows, &OutArgs { out: None, manifest: None, format: Format::Csv })?;
            eprintln!(
                "compiled `{}`: {} nodes, {} solver calls in {:.1}s",
                compiled.model,
                compiled.network.len(),
                compiled.report.solver_calls,
                start.elapsed().as_secs_f64()
            );
            let mf = RunManifest::new("compile", &compiled, None, Some(m.file.options.seed), start.elapsed().as_secs_f64());
            mf.write(&manifest.unwrap_or_else(|| manifest_path(&out)))
        }
        Command::Query { net, evidence, node, out } => {
            let (model, sc) = load_net(&net)?;
            let steps = load_steps(&evidence, sc)?;
            let mut rows = Vec::new();
            let n = model.network.node(&node)?;
            let mut posts = Vec::new();
            for (label, f) in &steps.steps {
                let e = resolve(&model, f)?;
                posts.push((label.as_str(), model.network.posterior(&node, &e)?));
            }
            for (label, p) in &posts {
                for (k, (state, prob)) in p.states.iter().zip(&p.probabilities).enumerate() {
                    let bounds = n.scheme.as_ref().map(|s| s.bounds(k));
                    rows.push(PosteriorRow {
                        step: label,
                        node: &node,
                        state,
                        lower: bounds.map(|b| b.0),
                        upper: bounds.map(|b| b.1),
                        probability: *prob,
                    });
                }
            }
            emit(&rows, &out)?;
            write_manifest(&out, &RunManifest::new("query", &model, steps.text.as_deref(), None, start.elapsed().as_secs_f64()))
        }
        Command::Timeline {
            net,
            evidence,
            name,
            horizon,
            out,
        } => {
            let (model, sc) = load_net(&net)?;
            let steps = load_steps(&evidence, sc)?;
            let mut tls = Vec::new();
            for (label, f) in &steps.steps {
                let e = resolve(&model, f)?;
                tls.push((label.as_str(), timeline(&model, name.as_deref(), &e, horizon)?));
            }
            let rows: Vec<TimelineRow> = tls
                .iter()
                .flat_map(|(label, tl)| {
                    tl.rows.iter().map(|r| TimelineRow {
                        step: label,
                        t: r.t,
                        beta: r.beta,
                        pf: r.pf,
                    })
                })
                .collect();
            emit(&rows, &out)?;
            write_manifest(&out, &RunManifest::new("timeline", &model, steps.text.as_deref(), None, start.elapsed().as_secs_f64()))
        }
        Command::Decide { net, evidence, out } => {
            let (model, sc) = load_net(&net)?;
            let id = model.influence_diagram()?;
            let steps = load_steps(&evidence, sc)?;
            let mut results = Vec::new();
            for (label, f) in &steps.steps {
                let e = resolve(&model, f)?;
                results.push((label.as_str(), id.optimal_decision(&e)?));
            }
            let rows: Vec<DecisionRow> = results
                .iter()
                .flat_map(|(label, r)| {
                    r.alternatives.iter().zip(&r.expected_utilities).map(|(a, eu)| DecisionRow {
                        step: label,
                        alternative: a,
                        expected_utility: *eu,
                        optimal: *a == r.optimal,
                    })
                })
                .collect();
            emit(&rows, &out)?;
            write_manifest(&out, &RunManifest::new("decide", &model, steps.text.as_deref(), None, start.elapsed().as_secs_f64()))
        }
        Command::Voi {
            net,
            evidence,
            sets,
            costs,
            out,
        } => {
            let (model, sc) = load_net(&net)?;
            let id = model.influence_diagram()?;
            let declared = model.decision.as_ref().map(|d| d.measurement_sets.clone()).unwrap_or_default();
            let sets = match &sets {
                Some(s) => ebn_service::parse_sets(s),
                None => declared,
            };
            if sets.is_empty() {
                return Err(Error::Decision("no measurement sets given or declared".into()));
            }
            let steps = load_steps(&evidence, sc)?;
            let mut rows = Vec::new();
            for (label, f) in &steps.steps {
                let e = resolve(&model, f)?;
                let results = sets
                    .iter()
                    .map(|s| id.voi(&s.iter().map(String::as_str).collect::<Vec<_>>(), &e))
                    .collect::<Result<Vec<_>>>()?;
                for c in &costs {
                    let r = recommend(&results, *c)?;
                    let set = if r.measurements.is_empty() { "nothing".to_string() } else { r.measurements.join("+") };
                    eprintln!("step {label}, cost {c}: measure {set} (net value {:.1})", r.net_value);
                }
                for (r, gain) in results.iter().zip(marginal_gains(&results)) {
                    rows.push(VoiRow {
                        step: label,
                        set: r.measurements.join("+"),
                        voi: r.voi,
                        marginal_gain: gain,
                        with_measurement: r.with_measurement,
                        without_measurement: r.without_measurement,
                    });
                }
            }
            emit(&rows, &out)?;
            write_manifest(&out, &RunManifest::new("voi", &model, steps.text.as_deref(), None, start.elapsed().as_secs_f64()))
        }
        Command::Verify {
            model,
            evidence,
            samples,
            seed,
            workers,
            out,
        } => {
            let (m, sc) = load_model_arg(&model, None)?;
            let compiled = m.compile(workers)?;
            let text = evidence.as_deref().map(|a| script_source(a, sc)).transpose()?;
            let script = text.as_deref().map(load_evidence).transpose()?;
            let report = verify(&m, &compiled, script.as_ref(), samples, seed)?;
            let rows: Vec<VerifyRow> = report
                .checks
                .iter()
                .map(|c| {
                    let band = c.mcs.beta_band();
                    VerifyRow {
                        step: &c.step,
                        node: &c.node,
                        compiled_pf: c.compiled_pf,
                        compiled_beta: c.compiled_beta,
                        mcs_pf: c.mcs.pf,
                        mcs_beta: c.mcs.beta,
                        band_lower: band.map(|b| b.0),
                        band_upper: band.map(|b| b.1),
                        effective_samples: c.mcs.effective_sample_size,
                        pass: c.pass,
                    }
                })
                .collect();
            emit(&rows, &out)?;
            for s in &report.skipped {
                eprintln!("step {} not verified: {}", s.step, s.reason);
            }
            write_manifest(&out, &RunManifest::new("verify", &compiled, text.as_deref(), Some(seed), start.elapsed().as_secs_f64()))?;
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(Error::Verification(format!(
                    "{failed} of {} checks outside the 95% simulation band",
                    report.checks.len()
                )));
            }
            Ok(())
        }
        Command::Replay { net, evidence, out } => {
            let (model, sc) = load_net(&net)?;
            let script = load_evidence(&script_source(&evidence, sc)?)?;
            if !script.cumulative {
                return Err(Error::Model("only cumulative scripts can be replayed into a session".into()));
            }
            let source = match sc {
                Some(s) => SessionSource::Scenario { name: s.name.to_string() },
                None => SessionSource::Upload,
            };
            let mut session = Session::new("replay", source, std::sync::Arc::new(model))?;
            for step in &script.steps {
                let r = session.revision();
                session.add_evidence(&step.findings, Some(r))?;
            }
            let text: String = session.log().iter().map(|e| e.to_line() + "\n").collect();
            match out {
                Some(p) => write(&p, &text),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(Error::from),
            }
        }
        Command::Schema { kind, out } => {
            let schema = match kind {
                SchemaKind::Model => model_schema(),
                SchemaKind::Evidence => evidence_schema(),
            };
            let text = serde_json::to_string_pretty(&schema).map_err(|e| Error::Io(e.to_string()))? + "\n";
            match out {
                Some(p) => write(&p, &text),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(Error::from),
            }
        }
        Command::Serve { addr, data, workers } => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .init();
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let state = match data {
                    Some(d) => ebn_service::AppState::open(d, workers)
                        .await
                        .map_err(|e| Error::Io(format!("{e:?}")))?,
                    None => ebn_service::AppState::new(workers),
                };
                ebn_service::serve(addr, state).await.map_err(Error::from)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.code() as u8)
        }
    }
}
