//! Command-line front end. Exit codes: 0 success, 1 invalid configuration,
//! 2 runtime failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use qnc::decoder::DecoderOptions;
use qnc::harness::{
    aggregate, auto_t_max, delay_envelope, l_optimized_envelope, level_grid, read_records_file,
    run_sweep, run_sweep_on, write_csv, ExperimentConfig, Scenario,
};
use qnc::network::{generate_deployment, Deployment};
use qnc::rip::{estimate_tail_profile, ColumnScaling, GaussianSource, QncSource, TailProbRow};
use qnc::QncError;

#[derive(Parser)]
#[command(name = "qnc", version, about = "Quantized network coding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a deployment and write it as JSON.
    Deploy {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1400)]
        edges: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// QNC records only.
    QncRun(RunArgs),
    /// Packet-forwarding records only.
    PfRun(RunArgs),
    /// QNC and PF records for the whole grid.
    Sweep(RunArgs),
    /// Tail-probability estimates for QNC and Gaussian matrices.
    Rip(RipArgs),
    /// Block-length envelope of a sweep CSV.
    Envelope(EnvelopeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    edge_counts: Option<Vec<usize>>,
    #[arg(long = "L-values", alias = "l-values", value_delimiter = ',')]
    l_values: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    sparsity_factors: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eps_k_ratios: Option<Vec<f64>>,
    #[arg(long)]
    q_max: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output_path: Option<PathBuf>,
    #[arg(long)]
    alpha_variance: Option<f64>,
    /// JSON file with `ExperimentConfig` fields; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Run on this deployment file instead of sampling networks.
    #[arg(long)]
    deployment: Option<PathBuf>,
}

#[derive(Args)]
struct RipArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Deviation thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3])]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    matrix_draws: usize,
    #[arg(long, default_value_t = 100)]
    vector_draws: usize,
}

#[derive(Args)]
struct EnvelopeArgs {
    /// Sweep CSV.
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Quality grid spacing in dB.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    /// Emit the delay-domain envelope instead of the per-quality one.
    #[arg(long)]
    delay_domain: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<QncError> for Failure {
    fn from(e: QncError) -> Self {
        match e {
            QncError::InvalidParameters(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn build_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::default();
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = &args.$f { cfg.$f = v.clone(); } )* };
    }
    set!(n, edge_counts, l_values, sparsity_factors, eps_k_ratios, q_max, trials, seed, alpha_variance);
    if args.t_max.is_some() {
        cfg.t_max = args.t_max;
    }
    if args.output_path.is_some() {
        cfg.output_path = args.output_path.clone();
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
        let Value::Object(overrides) = file else {
            return Err(Failure::Config("config file must hold a JSON object".into()));
        };
        let mut merged = serde_json::to_value(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
        if let Value::Object(base) = &mut merged {
            base.extend(overrides);
        }
        cfg = serde_json::from_value(merged).map_err(|e| Failure::Config(e.to_string()))?;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run_records(args: &RunArgs, keep: Option<Scenario>) -> Result<(), Failure> {
    let cfg = build_config(&args.cfg)?;
    let mut records = match &args.deployment {
        Some(path) => {
            let d = Deployment::load_json(path).map_err(|e| Failure::Config(e.to_string()))?;
            run_sweep_on(&cfg, &d, &DecoderOptions::default())?
        }
        None => run_sweep(&cfg)?,
    };
    if let Some(s) = keep {
        records.retain(|r| r.scenario == s);
    }
    write_csv(&records, sink(cfg.output_path.as_ref())?)?;
    Ok(())
}

fn run_rip(args: &RipArgs) -> Result<(), Failure> {
    let cfg = build_config(&args.cfg)?;
    if args.epsilons.is_empty() || args.matrix_draws == 0 {
        return Err(Failure::Config("need epsilons and at least one matrix draw".into()));
    }
    let mut rows = Vec::new();
    for &edges in &cfg.edge_counts {
        let d = generate_deployment(cfg.n, edges, qnc::seed::derive(cfg.seed, &[edges as u64]))?;
        let t_max = match cfg.t_max {
            Some(t) => t,
            None => auto_t_max(&d)?,
        };
        let src = QncSource::new(d, t_max, cfg.alpha_variance)?;
        let prefixes: Vec<usize> = (2..=t_max).map(|t| src.rows_at(t)).collect();
        let est = estimate_tail_profile(
            &src,
            &prefixes,
            &args.epsilons,
            args.matrix_draws,
            args.vector_draws,
            ColumnScaling::Empirical,
            cfg.seed,
        )?;
        rows.extend(est.iter().map(|e| TailProbRow::new(&src, e)));
        for &m in &prefixes {
            let g = GaussianSource { rows: m, cols: cfg.n };
            let est = estimate_tail_profile(
                &g,
                &[m],
                &args.epsilons,
                args.matrix_draws,
                args.vector_draws,
                ColumnScaling::None,
                cfg.seed,
            )?;
            rows.extend(est.iter().map(|e| TailProbRow::new(&g, e)));
        }
    }
    qnc::rip::write_tail_csv(&rows, sink(cfg.output_path.as_ref())?)?;
    Ok(())
}

fn run_envelope(args: &EnvelopeArgs) -> Result<(), Failure> {
    if !(args.step > 0.0) {
        return Err(Failure::Config("step must be positive".into()));
    }
    let records = read_records_file(&args.input).map_err(|e| Failure::Config(e.to_string()))?;
    let rows = aggregate(&records);
    let out = sink(args.output.as_ref())?;
    if args.delay_domain {
        write_csv(&delay_envelope(&rows)?, out)?;
    } else {
        let finite = rows.iter().map(|r| r.mean_err_db).filter(|v| v.is_finite());
        let hi = finite.clone().fold(f64::NEG_INFINITY, f64::max).ceil();
        let lo = finite.fold(f64::INFINITY, f64::min).floor();
        if !(hi >= lo) {
            return Err(Failure::Runtime("no finite errors in input".into()));
        }
        write_csv(&l_optimized_envelope(&rows, &level_grid(hi, lo, args.step))?, out)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Deploy { n, edges, seed, output } => {
            let d = generate_deployment(n, edges, seed)?;
            let mut out = sink(output.as_ref())?;
            serde_json::to_writer_pretty(&mut out, &d.to_file()).map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(out).map_err(|e| Failure::Runtime(e.to_string()))?;
            Ok(())
        }
        Command::QncRun(args) => run_records(&args, Some(Scenario::Qnc)),
        Command::PfRun(args) => run_records(&args, Some(Scenario::Pf)),
        Command::Sweep(args) => run_records(&args, None),
        Command::Rip(args) => run_rip(&args),
        Command::Envelope(args) => run_envelope(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
