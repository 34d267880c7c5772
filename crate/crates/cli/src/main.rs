use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rankbucket::bench::{self, BenchPlan, Summary, GRID_PCTS, GRID_SIZES};
use rankbucket::jsonl;
use rankbucket::synthetic::GeneratorMetadata;
use rankbucket::{
    evaluate, generate, DetectionSet, GradResult, LossKind, ReferenceConfig, SyntheticConfig,
    DEFAULT_DELTA,
};
use serde::Serialize;

const EXIT_MISMATCH: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "rankbucket",
    version,
    about = "Ranking-based detection losses and their bucketed variants"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic set as JSONL.
    Gen(GenArgs),
    /// Evaluate one loss and its gradients on a JSONL set.
    Eval(EvalArgs),
    /// Compare two loss kinds on the same set.
    Diff(DiffArgs),
    /// Time the losses over a grid of synthetic scenarios.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    num_logits: usize,
    /// Percentage of positives, e.g. 0.1.
    #[arg(long)]
    positive_pct: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pos_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pos_std: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    neg_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    neg_std: f64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InputArgs {
    /// JSONL input; `-` or omitted reads stdin.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Keep negatives that can never reach a positive (reference kinds only).
    #[arg(long)]
    keep_trivial: bool,
}

impl InputArgs {
    fn load(&self) -> Result<DetectionSet> {
        let (set, _) = match self.input.as_deref() {
            None => jsonl::read_set(io::stdin().lock(), self.delta),
            Some(p) if p == Path::new("-") => jsonl::read_set(io::stdin().lock(), self.delta),
            Some(p) => {
                let f = File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
                jsonl::read_set(BufReader::new(f), self.delta)
            }
        }
        .with_context(|| match &self.input {
            Some(p) => format!("reading {}", p.display()),
            None => "reading stdin".to_string(),
        })?;
        Ok(set)
    }

    fn reference(&self) -> ReferenceConfig {
        ReferenceConfig {
            discard_trivial: !self.keep_trivial,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    loss: LossKind,
    #[command(flatten)]
    input: InputArgs,
    /// Omit the gradient array from the report.
    #[arg(long)]
    no_grads: bool,
}

#[derive(Args)]
struct DiffArgs {
    #[arg(long)]
    a: LossKind,
    #[arg(long)]
    b: LossKind,
    #[command(flatten)]
    input: InputArgs,
    /// Relative tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Absolute tolerance, for entries near zero.
    #[arg(long, default_value_t = 1e-12)]
    abs_tol: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated sizes; the default is 10000,100000,1000000.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Comma-separated positive percentages; the default is 0.1,1,2,5.
    #[arg(long, value_delimiter = ',')]
    pcts: Vec<f64>,
    #[arg(long, default_value_t = bench::DEFAULT_REPS)]
    reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "ap,bap,rs,brs")]
    losses: Vec<LossKind>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    keep_trivial: bool,
    /// Threads used to generate data; capped by RANKBUCKET_THREADS.
    #[arg(long, default_value_t = 1)]
    gen_threads: usize,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary path; printed to stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    loss: f64,
    ranking_component: f64,
    sorting_component: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    grads: Option<&'a [f64]>,
}

impl<'a> EvalReport<'a> {
    fn new(r: &'a GradResult, with_grads: bool) -> Self {
        Self {
            loss: r.loss,
            ranking_component: r.ranking_component,
            sorting_component: r.sorting_component,
            grads: with_grads.then_some(&r.grads[..]),
        }
    }
}

#[derive(Serialize)]
struct DiffReport {
    a: LossKind,
    b: LossKind,
    loss_a: f64,
    loss_b: f64,
    loss_abs_diff: f64,
    grad_max_abs_diff: f64,
    grad_max_rel_diff: f64,
    worst_index: Option<usize>,
    tol: f64,
    abs_tol: f64,
    within_tol: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Diff(args) => cmd_diff(&args),
        Command::Bench(args) => cmd_bench(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode> {
    let cfg = SyntheticConfig {
        num_logits: args.num_logits,
        positive_pct: args.positive_pct,
        pos_mean: args.pos_mean,
        pos_std: args.pos_std,
        neg_mean: args.neg_mean,
        neg_std: args.neg_std,
        seed: args.seed,
    };
    let set = generate(&cfg)?;
    let out = open_out(args.out.as_deref())?;
    jsonl::write_set(out, &set, Some(&GeneratorMetadata::new(&cfg)))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let set = args.input.load()?;
    let (result, _) = evaluate(args.loss, &set, args.input.reference())?;
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, &EvalReport::new(&result, !args.no_grads))?;
    writeln!(out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_diff(args: &DiffArgs) -> Result<ExitCode> {
    if !(args.tol >= 0.0 && args.abs_tol >= 0.0) {
        bail!("tolerances must be non-negative");
    }
    let set = args.input.load()?;
    let cfg = args.input.reference();
    let (ra, _) = evaluate(args.a, &set, cfg)?;
    let (rb, _) = evaluate(args.b, &set, cfg)?;

    let close = |x: f64, y: f64| {
        let d = (x - y).abs();
        d <= args.abs_tol || d <= args.tol * x.abs().max(y.abs())
    };
    let mut within = close(ra.loss, rb.loss);
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut worst = None;
    for (i, (&x, &y)) in ra.grads.iter().zip(&rb.grads).enumerate() {
        let d = (x - y).abs();
        if d > max_abs {
            max_abs = d;
            worst = Some(i);
        }
        let scale = x.abs().max(y.abs());
        if scale > 0.0 {
            max_rel = max_rel.max(d / scale);
        }
        within &= close(x, y);
    }
    let report = DiffReport {
        a: args.a,
        b: args.b,
        loss_a: ra.loss,
        loss_b: rb.loss,
        loss_abs_diff: (ra.loss - rb.loss).abs(),
        grad_max_abs_diff: max_abs,
        grad_max_rel_diff: max_rel,
        worst_index: worst,
        tol: args.tol,
        abs_tol: args.abs_tol,
        within_tol: within,
    };
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, &report)?;
    writeln!(out)?;
    Ok(if within {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_MISMATCH)
    })
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("RANKBUCKET_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => bail!("RANKBUCKET_THREADS must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(None),
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode> {
    let mut gen_threads = args.gen_threads.max(1);
    if let Some(cap) = thread_cap()? {
        gen_threads = gen_threads.min(cap);
    }
    let plan = BenchPlan {
        sizes: if args.sizes.is_empty() {
            GRID_SIZES.to_vec()
        } else {
            args.sizes.clone()
        },
        pcts: if args.pcts.is_empty() {
            GRID_PCTS.to_vec()
        } else {
            args.pcts.clone()
        },
        reps: args.reps,
        losses: args.losses.clone(),
        delta: args.delta,
        seed: args.seed,
        reference: ReferenceConfig {
            discard_trivial: !args.keep_trivial,
        },
        gen_threads,
    };
    plan.validate()?;

    let mut wtr = bench::csv_writer(open_out(args.out.as_deref())?)?;
    let records = bench::run(&plan, |rec| bench::write_record(&mut wtr, rec))?;
    wtr.flush()?;
    drop(wtr);

    let summary = bench::summarize(&records);
    match &args.summary {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            serde_json::to_writer_pretty(BufWriter::new(f), &summary)?;
        }
        None => print_summary(&summary)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(summary: &Summary) -> Result<()> {
    let mut err = io::stderr().lock();
    writeln!(
        err,
        "{:<10} {:>9} {:>6} {:>13} {:>13}",
        "loss", "L", "m", "mean_wall_s", "min_wall_s"
    )?;
    for s in &summary.scenarios {
        writeln!(
            err,
            "{:<10} {:>9} {:>6} {:>13.6} {:>13.6}",
            s.loss.name(),
            s.num_logits,
            s.m,
            s.mean_wall_time_s,
            s.min_wall_time_s
        )?;
    }
    for s in &summary.speedups {
        writeln!(
            err,
            "speedup {}/{} L={} m={}: wall {:.2}x, diff_ops {:.1}x",
            s.reference, s.bucketed, s.num_logits, s.m, s.wall_time_speedup, s.diff_ops_ratio
        )?;
    }
    Ok(())
}
