//! `rulefuzz` command-line driver.
//!
//! Exit codes: 0 success, 1 diagnostics or failed check, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rulefuzz::data::{self, Dataset, Provenance};
use rulefuzz::dsl::{self, list_trainables};
use rulefuzz::fuzzify::{DiffModel, FuzzConfig, ModelSpec};
use rulefuzz::scenario::{Input, Relaxation, Scenario};
use rulefuzz::train::{self, report, MatrixConfig, ModelKind, TrainConfig, TrainError};

#[derive(Parser)]
#[command(name = "rulefuzz", version, about = "Compile relaxed rules into trainable models and compare them with a dense baseline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and type-check a rule file; list its trainable sites.
    Check {
        rules: PathBuf,
        /// Schema to check against; guessed from the file when omitted.
        #[arg(long)]
        scenario: Option<Scenario>,
    },
    /// Generate a labelled dataset as JSON Lines.
    GenData {
        #[arg(long)]
        scenario: Option<Scenario>,
        /// random | combined | recodex
        #[arg(long, default_value = "random")]
        kind: Provenance,
        #[arg(long, default_value_t = data::DEFAULT_SIZE)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset (90/10 split).
    Train(TrainArgs),
    /// Accuracy of a trained model, overall and per stratum.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Print the result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        source: RuleSource,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of random records.
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Test hook: perturb the analytic gradient.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Train the comparison matrix and print an accuracy table.
    Report(ReportArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct RuleSource {
    /// Bundled access rule: strict, time-ab, time-right or all.
    #[arg(long)]
    relaxation: Option<Relaxation>,
    /// Rule file to compile.
    #[arg(long)]
    rules: Option<PathBuf>,
}

impl RuleSource {
    fn load(&self) -> Result<(Scenario, String)> {
        match (&self.relaxation, &self.rules) {
            (Some(r), _) => Ok((Scenario::Industry, r.source().to_string())),
            (None, Some(p)) => {
                let src = read(p)?;
                Ok((Scenario::detect(&src), src))
            }
            (None, None) => bail!("give --relaxation or --rules"),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Bundled access rule: strict, time-ab, time-right or all.
    #[arg(long, group = "model")]
    relaxation: Option<Relaxation>,
    /// Rule file to compile.
    #[arg(long, group = "model")]
    rules: Option<PathBuf>,
    /// Dense baseline, `DEPTHxWIDTH` (e.g. 2x256).
    #[arg(long, group = "model")]
    baseline: Option<String>,
    /// Job classifier with a relaxed rule gate and this hidden width.
    #[arg(long, group = "model")]
    gated: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Connective strength.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    label_smoothing: Option<f64>,
    /// Include wall-clock time in the report.
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out_model: Option<PathBuf>,
    #[arg(long)]
    out_report: Option<PathBuf>,
    /// Suppress per-epoch progress.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = data::DEFAULT_SIZE)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long)]
    baseline_epochs: Option<usize>,
    #[arg(long, default_value = "2x256")]
    baseline: String,
    /// Comma-separated columns.
    #[arg(long, value_delimiter = ',', default_value = "baseline,time-ab,time-right,all")]
    models: Vec<ModelKind>,
    /// Comma-separated rows.
    #[arg(long, value_delimiter = ',', default_value = "random,combined")]
    datasets: Vec<Provenance>,
    #[arg(long, default_value_t = 10.0)]
    p: f64,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_text: Option<PathBuf>,
}

/// Failure that maps to exit code 1.
#[derive(Debug)]
struct Diagnostics;

impl std::fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("check failed")
    }
}

impl std::error::Error for Diagnostics {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Check { rules, scenario } => check(&rules, scenario),
        Cmd::GenData {
            scenario,
            kind,
            n,
            seed,
            out,
        } => gen_data(scenario, kind, n, seed, &out),
        Cmd::Train(a) => train_cmd(&a),
        Cmd::Eval { model, dataset, json } => eval(&model, &dataset, json),
        Cmd::Gradcheck {
            source,
            seed,
            points,
            corrupt_gradient,
        } => gradcheck(&source, seed, points, corrupt_gradient),
        Cmd::Report(a) => report_cmd(&a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Diagnostics>() => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
}

fn write(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))
}

fn check(path: &Path, scenario: Option<Scenario>) -> Result<()> {
    let src = read(path)?;
    let scenario = scenario.unwrap_or_else(|| Scenario::detect(&src));
    let typed = match dsl::compile(&src, &scenario.schema()) {
        Ok(t) => t,
        Err(diags) => {
            for d in &diags {
                println!("{}:{d}", path.display());
            }
            println!("{} diagnostic(s)", diags.len());
            return Err(Diagnostics.into());
        }
    };
    let sites = list_trainables(&typed);
    println!("{}: ok ({} schema)", path.display(), scenario);
    println!("{} trainable sites", sites.len());
    if !sites.is_empty() {
        println!(
            "{:<28} {:<20} {:>22} {:>22} {:>4} {:>4} {:<22} {}",
            "site", "kind", "min", "max", "cap", "cat", "qualifier", "unit"
        );
    }
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for d in sites {
        println!(
            "{:<28} {:<20} {:>22} {:>22} {:>4} {:>4} {:<22} {}",
            d.site_id,
            d.kind.to_string(),
            opt(d.min.map(|b| b.to_string())),
            opt(d.max.map(|b| b.to_string())),
            d.capacity,
            opt(d.categories.map(|c| c.to_string())),
            opt(d.qualifier_key.clone()),
            opt(d.unit.map(|u| u.to_string())),
        );
    }
    Ok(())
}

fn gen_data(scenario: Option<Scenario>, kind: Provenance, n: usize, seed: u64, out: &Path) -> Result<()> {
    if let Some(s) = scenario {
        if s != kind.scenario() {
            bail!("dataset kind {kind} belongs to the {} scenario, not {s}", kind.scenario());
        }
    }
    let d = report::generate(kind, n, seed)?;
    data::write_jsonl(&d, out)?;
    println!("wrote {} records to {}", d.len(), out.display());
    if d.scenario == Scenario::Industry {
        println!("true/false: {}/{}", d.positives(), d.len() - d.positives());
    }
    for (s, c) in d.strata() {
        println!("stratum {s}: {c}");
    }
    Ok(())
}

fn load_dataset(p: &Path) -> Result<Dataset> {
    data::read_jsonl(p).with_context(|| format!("cannot load dataset {}", p.display()))
}

fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let (d, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("baseline must look like DEPTHxWIDTH, got `{s}`"))?;
    Ok((d.trim().parse()?, w.trim().parse()?))
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let spec = if let Some(r) = a.relaxation {
        ModelSpec::rules(Scenario::Industry, r.source())
    } else if let Some(p) = &a.rules {
        ModelSpec::rules(d.scenario, read(p)?)
    } else if let Some(b) = &a.baseline {
        let (depth, width) = parse_dims(b)?;
        ModelSpec::Dense {
            scenario: d.scenario,
            depth,
            width,
        }
    } else if let Some(w) = a.gated {
        ModelSpec::gated(w)
    } else {
        bail!("choose a model: --relaxation, --rules, --baseline or --gated");
    };
    if spec.scenario() != d.scenario {
        bail!("the model works on {} records but the dataset holds {} records", spec.scenario(), d.scenario);
    }
    let mut fuzz = FuzzConfig {
        seed: a.seed,
        ..FuzzConfig::default()
    };
    if let Some(p) = a.p {
        fuzz.p = p;
    }
    let mut model = DiffModel::build(spec.clone(), fuzz)?;
    let mut cfg = TrainConfig::for_spec(&spec, a.seed);
    cfg.timings = a.timings;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.label_smoothing {
        cfg.label_smoothing = v;
    }
    let (tr, va) = data::split(&d, 0.9, d.seed)?;
    println!(
        "model {} with {} parameters; {} training / {} validation records",
        train::describe(&spec),
        model.param_count(),
        tr.len(),
        va.len()
    );
    let quiet = a.quiet;
    let rep = train::train_with_progress(&mut model, &tr, &va, &cfg, &mut |e, loss, acc| {
        if !quiet {
            eprintln!("epoch {e:>3}: loss {loss:.6}  val accuracy {acc:.5}");
        }
    });
    let rep = match rep {
        Ok(r) => r,
        Err(e @ TrainError::Diverged { .. }) => bail!("{e}"),
        Err(e) => return Err(e.into()),
    };
    println!("final accuracy {:.5} ({} parameters)", rep.final_accuracy, rep.params);
    if let Some(p) = &a.out_model {
        write(p, &model.to_json())?;
    }
    if let Some(p) = &a.out_report {
        write(p, &serde_json::to_string_pretty(&rep)?)?;
    }
    Ok(())
}

fn eval(model: &Path, dataset: &Path, json: bool) -> Result<()> {
    let m = DiffModel::from_json(&read(model)?).with_context(|| format!("cannot load model {}", model.display()))?;
    let d = load_dataset(dataset)?;
    let r = train::evaluate(&m, &d)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(());
    }
    println!("accuracy {:.5} on {} records", r.accuracy, r.n);
    for (s, v) in &r.strata {
        println!("stratum {s}: {:.5} ({}/{})", v.accuracy, v.correct, v.total);
    }
    Ok(())
}

fn gradcheck(source: &RuleSource, seed: u64, points: usize, corrupt: bool) -> Result<()> {
    let (scenario, src) = source.load()?;
    let m = DiffModel::build(
        ModelSpec::rules(scenario, src),
        FuzzConfig {
            seed,
            ..FuzzConfig::default()
        },
    )?;
    if m.param_count() == 0 {
        println!("no trainable parameters");
        return Ok(());
    }
    let d = report::generate(
        if scenario == Scenario::Industry {
            Provenance::Random
        } else {
            Provenance::Recodex
        },
        points.max(data::MIN_SIZE),
        seed,
    )?;
    let inputs: Vec<Input> = d.records.into_iter().take(points.max(1)).map(|r| r.input).collect();
    let tamper = |g: &mut [f64]| g.iter_mut().for_each(|v| *v = *v * 1.01 + 1e-3);
    let r = m
        .grad_check(&inputs, seed, corrupt.then_some(&tamper as &dyn Fn(&mut [f64])))?
        .expect("model has parameters");
    let owner = r
        .worst
        .and_then(|i| m.params.owner(i))
        .map(|(s, k)| format!(" at {s}[{k}]"))
        .unwrap_or_default();
    println!(
        "max relative error {:.3e}{owner} over {} points, {} parameters",
        r.max_rel_error,
        inputs.len(),
        m.param_count()
    );
    if r.max_rel_error < 1e-4 {
        println!("ok");
        Ok(())
    } else {
        println!("FAILED: error exceeds 1e-4");
        Err(Diagnostics.into())
    }
}

fn report_cmd(a: &ReportArgs) -> Result<()> {
    let (depth, width) = parse_dims(&a.baseline)?;
    let cfg = MatrixConfig {
        models: a.models.clone(),
        datasets: a.datasets.clone(),
        repeats: a.repeats,
        n: a.n,
        data_seed: a.data_seed,
        epochs: a.epochs,
        baseline_epochs: a.baseline_epochs,
        baseline_depth: depth,
        baseline_width: width,
        p: a.p,
    };
    if cfg.datasets.contains(&Provenance::Recodex) {
        bail!("the comparison matrix covers the access datasets (random, combined)");
    }
    let r = train::run_matrix(&cfg, &mut |line| eprintln!("{line}"))?;
    let text = r.to_text();
    print!("{text}");
    if let Some(p) = &a.out_json {
        write(p, &r.to_json())?;
    }
    if let Some(p) = &a.out_text {
        write(p, &text)?;
    }
    Ok(())
}
