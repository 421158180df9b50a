mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cnnpipe::dse::{
    count_design_points, count_pipelines, exhaustive_search, merge_stage, CountVariant, DseError, OracleLimits,
    PlanDocument,
};
use cnnpipe::netdesc::parse_network;
use cnnpipe::perfmodel::{
    build_time_matrix, compare_with_model, fit_platform, prediction_error, read_measurements, FitError, TimeMatrix,
};
use cnnpipe::pipesim::{simulate, steady_state_throughput, SimSpec};
use cnnpipe::{CoreType, PlatformModel};
use serde_json::{json, Value};

use io::{group_digits, provenance, write_json, write_text, Input};

#[derive(Parser)]
#[command(
    name = "cnnpipe",
    version,
    about = "Plan layer-level CNN pipelines for big.LITTLE multi-cores"
)]
struct Cli {
    /// Seed recorded in every output and used for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a platform model from a measurement CSV.
    Fit(FitArgs),
    /// Build the time matrix and run the stage-merge heuristic.
    Explore(ExploreArgs),
    /// Compare the heuristic with an exhaustive search.
    Oracle(OracleArgs),
    /// Count pipelines and design points.
    Count(CountArgs),
    /// Simulate an image stream through a plan.
    Simulate(SimulateArgs),
    /// Render prediction-error and plan tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    measurements: PathBuf,
    /// Iterations tile size: one value for all clusters, or `big=N` / `small=N`.
    #[arg(long = "tile-size", default_value = "16")]
    tile_size: Vec<String>,
    #[arg(long, default_value = "platform")]
    name: String,
    #[arg(long)]
    out: PathBuf,
}

/// Either a network plus platform, or a precomputed time matrix.
#[derive(Args)]
struct ModelInputs {
    #[arg(long, requires = "platform", conflicts_with = "matrix")]
    network: Option<PathBuf>,
    #[arg(long)]
    platform: Option<PathBuf>,
    /// Time-matrix JSON (`configs`, `times_ms`).
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    /// Plan JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the time matrix.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    inputs: ModelInputs,
    #[arg(long, default_value_t = 10_000_000)]
    max_points: u128,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    AsWritten,
    Reported,
}

#[derive(Args)]
struct CountArgs {
    big_cores: u32,
    small_cores: u32,
    /// Also count design points for this many major layers.
    #[arg(long)]
    layers: Option<u64>,
    /// Print only one design-point variant.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 50)]
    images: u64,
    /// Log-normal jitter sigma (mean-1 multiplicative noise).
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Fixed delay per stage hand-off, in milliseconds.
    #[arg(long, default_value_t = 0.0)]
    handoff_ms: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-image completion times.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, requires = "measurements")]
    platform: Option<PathBuf>,
    /// Reference measurements; one table row per file.
    #[arg(long)]
    measurements: Vec<PathBuf>,
    /// Plan JSON to render as a table.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// CSV output for the error table.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.downcast_ref::<FitError>().is_some()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(cli.seed, a),
        Command::Explore(a) => cmd_explore(cli.seed, a),
        Command::Oracle(a) => cmd_oracle(cli.seed, a),
        Command::Count(a) => cmd_count(a),
        Command::Simulate(a) => cmd_simulate(cli.seed, a),
        Command::Report(a) => cmd_report(cli.seed, a),
    }
}

fn parse_tile_sizes(specs: &[String]) -> Result<impl Fn(CoreType) -> u64> {
    let (mut big, mut small) = (None, None);
    for spec in specs {
        let (target, value) = match spec.split_once('=') {
            Some((k, v)) => (Some(k.trim().parse::<CoreType>().map_err(anyhow::Error::msg)?), v),
            None => (None, spec.as_str()),
        };
        let n: u64 = value
            .trim()
            .parse()
            .with_context(|| format!("bad tile size {spec:?}"))?;
        if n == 0 {
            bail!("tile size must be positive");
        }
        match target {
            Some(CoreType::Big) => big = Some(n),
            Some(CoreType::Small) => small = Some(n),
            None => {
                big = big.or(Some(n));
                small = small.or(Some(n));
            }
        }
    }
    let (big, small) = (big.unwrap_or(16), small.unwrap_or(16));
    Ok(move |t| match t {
        CoreType::Big => big,
        CoreType::Small => small,
    })
}

fn cmd_fit(seed: u64, a: &FitArgs) -> Result<()> {
    let input = Input::read("measurements", &a.measurements)?;
    let samples = read_measurements(input.text.as_bytes()).with_context(|| format!("{}", a.measurements.display()))?;
    let (platform, diagnostics) = fit_platform(&a.name, &samples, parse_tile_sizes(&a.tile_size)?)?;
    for d in &diagnostics {
        println!(
            "{} cluster: {} single-core samples (rms {:.3e} s, cond {:.2e}), {} GEMM samples (rms {:.3e} s), {} FC samples (rms {:.3e} s)",
            d.core_type,
            d.single_core_samples,
            d.single_core_rms_s,
            d.single_core_condition,
            d.thread_samples,
            d.thread_rms_s,
            d.fc_samples,
            d.fc_rms_s
        );
        for w in &d.warnings {
            println!("  warning: {w}");
        }
    }
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), json!(1));
    if let Value::Object(m) = serde_json::to_value(&platform)? {
        doc.extend(m);
    }
    doc.insert("diagnostics".into(), serde_json::to_value(&diagnostics)?);
    doc.extend(provenance(seed, &[&input]));
    write_json(&a.out, &doc)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

struct Loaded {
    matrix: TimeMatrix,
    big: u32,
    small: u32,
    inputs: Vec<Input>,
}

fn load_model(m: &ModelInputs) -> Result<Loaded> {
    if let Some(path) = &m.matrix {
        let input = Input::read("matrix", path)?;
        let matrix = TimeMatrix::from_json(&input.text).with_context(|| format!("{}", path.display()))?;
        let (big, small) = (matrix.max_cores(CoreType::Big), matrix.max_cores(CoreType::Small));
        return Ok(Loaded {
            matrix,
            big,
            small,
            inputs: vec![input],
        });
    }
    let (Some(net_path), Some(plat_path)) = (&m.network, &m.platform) else {
        bail!("give --network with --platform, or --matrix");
    };
    let net_in = Input::read("network", net_path)?;
    let plat_in = Input::read("platform", plat_path)?;
    let net = parse_network(&net_in.text).with_context(|| format!("{}", net_path.display()))?;
    let platform = PlatformModel::from_json(&plat_in.text).with_context(|| format!("{}", plat_path.display()))?;
    let matrix = build_time_matrix(&net, &platform)?;
    for w in matrix.warnings() {
        log::warn!("{w}");
    }
    Ok(Loaded {
        big: platform.cores_of(CoreType::Big),
        small: platform.cores_of(CoreType::Small),
        matrix,
        inputs: vec![net_in, plat_in],
    })
}

fn input_refs(inputs: &[Input]) -> Vec<&Input> {
    inputs.iter().collect()
}

fn cmd_explore(seed: u64, a: &ExploreArgs) -> Result<()> {
    let m = load_model(&a.inputs)?;
    if m.matrix.layers() == 1 {
        eprintln!("warning: the network has a single major layer; pipelining is degenerate");
    }
    let plan = merge_stage(&m.matrix, m.big, m.small);
    print!("{}", plan.render_table());
    if let Some(out) = &a.out {
        let mut doc = plan.to_document();
        doc.extra = provenance(seed, &input_refs(&m.inputs));
        write_json(out, &doc)?;
    }
    if let Some(out) = &a.matrix_out {
        write_text(out, &m.matrix.to_json(None))?;
    }
    Ok(())
}

fn cmd_oracle(seed: u64, a: &OracleArgs) -> Result<()> {
    let m = load_model(&a.inputs)?;
    let limits = OracleLimits {
        max_points: a.max_points,
        jobs: a.jobs.max(1),
    };
    let started = Instant::now();
    let oracle = match exhaustive_search(&m.matrix, m.big, m.small, limits) {
        Ok(r) => r,
        Err(DseError::TooLarge { count, limit }) => bail!(
            "refusing exhaustive search: {} design points exceed the limit of {}",
            group_digits(count),
            group_digits(limit)
        ),
        Err(e) => return Err(e.into()),
    };
    let elapsed = started.elapsed();
    let heuristic = merge_stage(&m.matrix, m.big, m.small);
    let gap = 100.0 * (1.0 - heuristic.predicted_throughput / oracle.plan.predicted_throughput);
    println!(
        "heuristic: {:.3} img/s  {}",
        heuristic.predicted_throughput,
        heuristic.notation()
    );
    println!(
        "oracle:    {:.3} img/s  {}",
        oracle.plan.predicted_throughput,
        oracle.plan.notation()
    );
    println!(
        "gap: {gap:.2}%  ({} design points, {} with empty stages, {:.2} s)",
        group_digits(oracle.design_points),
        group_digits(oracle.degenerate_points),
        elapsed.as_secs_f64()
    );
    if let Some(out) = &a.out {
        let mut doc = serde_json::Map::new();
        doc.insert("schema".into(), json!(1));
        doc.insert("heuristic".into(), serde_json::to_value(heuristic.to_document())?);
        doc.insert("oracle".into(), serde_json::to_value(oracle.plan.to_document())?);
        doc.insert("gap_percent".into(), json!(gap));
        doc.insert("design_points".into(), json!(oracle.design_points.to_string()));
        doc.insert("degenerate_points".into(), json!(oracle.degenerate_points.to_string()));
        doc.extend(provenance(seed, &input_refs(&m.inputs)));
        write_json(out, &doc)?;
    }
    Ok(())
}

fn cmd_count(a: &CountArgs) -> Result<()> {
    if a.big_cores == 0 || a.small_cores == 0 {
        bail!("both clusters need at least one core");
    }
    let h = a.big_cores + a.small_cores;
    let mut total = 0u128;
    for p in 2..=h {
        let c = count_pipelines(a.big_cores, a.small_cores, p);
        total += c;
        println!("p={p}: {c}");
    }
    println!("total {total}");
    if let Some(w) = a.layers {
        if w < 2 {
            bail!("design points need at least 2 layers");
        }
        let written = count_design_points(w, a.big_cores, a.small_cores, CountVariant::AsWritten);
        let reported = count_design_points(w, a.big_cores, a.small_cores, CountVariant::Reported);
        match a.variant {
            None => println!(
                "design points (W={w}): as-written {} / reported-variant {}",
                group_digits(written),
                group_digits(reported)
            ),
            Some(VariantArg::AsWritten) => println!("design points (W={w}): as-written {}", group_digits(written)),
            Some(VariantArg::Reported) => {
                println!("design points (W={w}): reported-variant {}", group_digits(reported))
            }
        }
    }
    Ok(())
}

fn cmd_simulate(seed: u64, a: &SimulateArgs) -> Result<()> {
    let input = Input::read("plan", &a.plan)?;
    let plan = PlanDocument::from_json(&input.text).with_context(|| format!("{}", a.plan.display()))?;
    let mut spec = SimSpec::new(plan.stage_times(), a.images).with_handoff_delay(a.handoff_ms / 1e3);
    if a.jitter > 0.0 {
        spec = spec.with_jitter(a.jitter, seed);
    }
    let r = simulate(&spec)?;
    // completion rate once the pipeline is full
    let steady = if r.completion_times.len() > 1 {
        (r.completion_times.len() - 1) as f64 / (r.makespan - r.completion_times[0])
    } else {
        r.throughput
    };
    let analytic = steady_state_throughput(&spec).ok();
    println!("images: {}  stages: {}", a.images, spec.stage_times.len());
    println!("makespan: {:.3} ms", r.makespan * 1e3);
    println!(
        "throughput: {steady:.3} img/s (steady state), {:.3} img/s over the window",
        r.throughput
    );
    if let Some(t) = analytic {
        println!("predicted: {t:.3} img/s");
    }
    for (i, b) in r.busy_fraction.iter().enumerate() {
        println!("stage {}: busy {:.1}%", i + 1, b * 100.0);
    }
    if let Some(out) = &a.out {
        let mut doc = serde_json::Map::new();
        doc.insert("schema".into(), json!(1));
        doc.insert("images".into(), json!(a.images));
        doc.insert(
            "stage_times_ms".into(),
            json!(spec.stage_times.iter().map(|t| t * 1e3).collect::<Vec<_>>()),
        );
        doc.insert("makespan_ms".into(), json!(r.makespan * 1e3));
        doc.insert("throughput_ips".into(), json!(steady));
        doc.insert("window_throughput_ips".into(), json!(r.throughput));
        doc.insert("predicted_throughput_ips".into(), json!(analytic));
        doc.insert("busy_fraction".into(), json!(r.busy_fraction));
        doc.insert("jitter_sigma".into(), json!(a.jitter));
        doc.insert("handoff_ms".into(), json!(a.handoff_ms));
        doc.extend(provenance(seed, &[&input]));
        write_json(out, &doc)?;
    }
    if let Some(path) = &a.csv {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        r.write_completion_csv(file)?;
    }
    Ok(())
}

fn group_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_report(seed: u64, a: &ReportArgs) -> Result<()> {
    if a.platform.is_none() && a.plan.is_none() {
        bail!("nothing to report: give --platform with --measurements, and/or --plan");
    }
    let mut inputs = Vec::new();
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), json!(1));
    if let Some(path) = &a.platform {
        let plat_in = Input::read("platform", path)?;
        let platform = PlatformModel::from_json(&plat_in.text).with_context(|| format!("{}", path.display()))?;
        inputs.push(plat_in);
        let mut entries = Vec::new();
        for m in &a.measurements {
            let input = Input::read("measurements", m)?;
            let samples = read_measurements(input.text.as_bytes()).with_context(|| format!("{}", m.display()))?;
            entries.extend(compare_with_model(&group_name(m), &platform, &samples)?);
            inputs.push(input);
        }
        let table = prediction_error(&entries)?;
        println!("Prediction error (MAPE %)");
        print!("{}", table.render_text());
        if let Some(csv) = &a.csv {
            write_text(csv, &table.render_csv())?;
        }
        doc.insert("mape".into(), serde_json::to_value(&table)?);
    }
    if let Some(path) = &a.plan {
        let input = Input::read("plan", path)?;
        let plan = PlanDocument::from_json(&input.text).with_context(|| format!("{}", path.display()))?;
        println!();
        println!("stage | config | layers    | latency (ms)");
        println!("------+--------+-----------+-------------");
        for (i, ((cfg, r), t)) in plan
            .pipeline
            .iter()
            .zip(&plan.allocation)
            .zip(&plan.stage_latencies_ms)
            .enumerate()
        {
            let layers = match r.as_slice() {
                [lo, hi] => format!("[{lo},{hi}]"),
                _ => "-".into(),
            };
            println!("{:>5} | {:>6} | {:<9} | {:>11.3}", i + 1, cfg.to_string(), layers, t);
        }
        println!(
            "throughput: {:.3} img/s  ({})",
            plan.predicted_throughput_ips, plan.notation
        );
        doc.insert("plan".into(), serde_json::to_value(&plan)?);
        inputs.push(input);
    }
    if let Some(out) = &a.out {
        doc.extend(provenance(seed, &input_refs(&inputs)));
        write_json(out, &doc)?;
    }
    Ok(())
}
