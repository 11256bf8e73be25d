use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tndp_cli::city_source::{default_benchmark_dir, resolve_params, CitySource};
use tndp_cli::lc::learned_construction;
use tndp_cli::manifest::{write_atomic, write_json, Manifest};
use tndp_cli::pareto::{render_svg, ParetoSeries};
use tndp_cli::report::validate_network;
use tndp_cli::sweep::{self, Method, SweepConfig};
use tndp_cli::{config, lc::LcOutcome};
use tndp_core::city::CityFile;
use tndp_core::nn::load_params;
use tndp_core::train::{self, build_dataset};
use tndp_core::{evo, City, CostWeights, EaConfig, EaMode, Error, NdpParams, Network, PolicyParams, Result, TrainConfig};

#[derive(Parser)]
#[command(name = "tndp", version, about = "Transit network design: learned construction and evolutionary search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city dataset.
    GenCities(GenArgs),
    /// Train a construction policy.
    Train(CommonArgs),
    /// Best of K sampled policy rollouts on one city.
    Lc(LcArgs),
    /// Evolutionary search with the classic mutators.
    Ea(EaArgs),
    /// Evolutionary search with the neural mutator.
    Nea(EaArgs),
    /// Multi-seed, multi-α comparison of methods on one city.
    Sweep(SweepArgs),
    /// Render sweep trade-off curves as SVG.
    ParetoPlot(PlotArgs),
    /// Check a network against the constraints and report its cost.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Root seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat TOML file of configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CityArgs {
    /// Benchmark name (mandl, mumford0..3) or a city JSON file.
    #[arg(long)]
    city: String,
    /// Directory holding the benchmark files.
    #[arg(long)]
    benchmark_dir: Option<PathBuf>,
    #[arg(long)]
    routes: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

impl CityArgs {
    fn load(&self) -> Result<(City, NdpParams)> {
        let dir = self.benchmark_dir.clone().unwrap_or_else(default_benchmark_dir);
        let (city, p) = CitySource::parse(&self.city).load(&dir)?;
        let params = resolve_params(p, self.routes, self.min_len, self.max_len)?;
        params.validate(city.len())?;
        Ok((city, params))
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of cities; overrides `dataset_size`.
    #[arg(long)]
    count: Option<usize>,
    /// Nodes per city; overrides `city_nodes`.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Args)]
struct LcArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    city: CityArgs,
    /// Policy checkpoint.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 100)]
    rollouts: usize,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct EaArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    city: CityArgs,
    /// Policy checkpoint (required for the neural mutator).
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    city: CityArgs,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Comma-separated methods among lc, ea, nea.
    #[arg(long, default_value = "ea")]
    methods: String,
    /// Comma-separated α values; overrides the config grid.
    #[arg(long)]
    alphas: Option<String>,
    /// Runs per cell; overrides `seeds`.
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// `pareto.json` or `records.csv` written by a sweep.
    input: PathBuf,
    #[arg(long, default_value = "out/pareto.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Network JSON file: a list of routes.
    network: PathBuf,
    #[command(flatten)]
    city: CityArgs,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn fail(kind: &str, message: String) -> ExitCode {
    let report = ErrorReport { error: kind, message };
    eprintln!("{}", serde_json::to_string(&report).expect("error serializes"));
    ExitCode::FAILURE
}

// A closed stdout (e.g. piped into `head`) is not an error worth reporting.
fn emit(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim().to_string()),
    };
    let outcome = match cli.command {
        Command::GenCities(a) => gen_cities(a),
        Command::Train(a) => train_cmd(a),
        Command::Lc(a) => lc_cmd(a),
        Command::Ea(a) => ea_cmd(a, EaMode::Ea),
        Command::Nea(a) => ea_cmd(a, EaMode::Nea),
        Command::Sweep(a) => sweep_cmd(a),
        Command::ParetoPlot(a) => plot_cmd(a),
        Command::Validate(a) => validate_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn load_policy(path: Option<&Path>) -> Result<Option<PolicyParams>> {
    path.map(load_params).transpose()
}

fn gen_cities(a: GenArgs) -> Result<()> {
    let mut cfg: TrainConfig = config::load(a.common.config.as_deref())?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.count {
        cfg.dataset_size = c;
    }
    if let Some(n) = a.nodes {
        cfg.city_nodes = n;
    }
    let mut manifest = Manifest::begin("gen-cities", cfg.seed, to_value(&cfg));
    let data = build_dataset(cfg.dataset_size, cfg.city_nodes, cfg.edge_deletion, cfg.validation_fraction, cfg.seed)?;
    let dir = a.common.out.join("cities");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut index = String::from("index,kind,split\n");
    for (k, (city, kind)) in data.cities.iter().zip(&data.kinds).enumerate() {
        let file = CityFile::from_city(city, Some(cfg.ndp_params()));
        let text = serde_json::to_string(&file).expect("city serializes");
        write_atomic(&dir.join(format!("city_{k:05}.json")), text.as_bytes())?;
        let split = if k < data.split { "train" } else { "validation" };
        index += &format!("{k},{},{split}\n", kind.name());
    }
    write_atomic(&a.common.out.join("cities.csv"), index.as_bytes())?;
    manifest.outputs = vec!["cities/".into(), "cities.csv".into()];
    manifest.finish(&a.common.out)?;
    log::info!("wrote {} cities to {}", data.cities.len(), dir.display());
    Ok(())
}

fn train_cmd(a: CommonArgs) -> Result<()> {
    let mut cfg: TrainConfig = config::load(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut manifest = Manifest::begin("train", cfg.seed, to_value(&cfg));
    let outcome = train::train(&cfg, Some(&a.out))?;
    log::info!(
        "best epoch {} with validation cost {:.4}",
        outcome.best_epoch,
        outcome.history.get(outcome.best_epoch.saturating_sub(1)).map_or(f64::NAN, |r| r.val_cost_mean)
    );
    manifest.outputs = vec!["best.json".into(), "history.csv".into(), "best_epoch.txt".into()];
    manifest.finish(&a.out)?;
    Ok(())
}

fn ea_config(common: &CommonArgs, alpha: Option<f64>) -> Result<EaConfig> {
    let mut cfg: EaConfig = config::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(a) = alpha {
        cfg.alpha = a;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct LcSummary<'a> {
    city: String,
    rollouts: usize,
    outcome: &'a LcOutcome,
}

fn lc_cmd(a: LcArgs) -> Result<()> {
    let cfg = ea_config(&a.common, a.alpha)?;
    let (city, params) = a.city.load()?;
    let policy = load_params(&a.policy)?;
    let mut manifest = Manifest::begin(
        "lc",
        cfg.seed,
        serde_json::json!({ "ea": cfg, "rollouts": a.rollouts, "city": a.city.city, "params": params }),
    );
    let weights = cfg.weights(&city, &params);
    let out = learned_construction(&city, params, &policy, a.rollouts, &weights, cfg.seed)?;
    let out_dir = &a.common.out;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    out.network.write(&out_dir.join("network.json"))?;
    write_json(
        &out_dir.join("lc.json"),
        &LcSummary {
            city: a.city.city.clone(),
            rollouts: a.rollouts,
            outcome: &out,
        },
    )?;
    emit(&serde_json::to_string(&out.cost).expect("cost serializes"));
    manifest.outputs = vec!["network.json".into(), "lc.json".into()];
    manifest.finish(out_dir)?;
    Ok(())
}

fn ea_cmd(a: EaArgs, mode: EaMode) -> Result<()> {
    let mut cfg = ea_config(&a.common, a.alpha)?;
    cfg.mode = mode;
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    let (city, params) = a.city.load()?;
    let policy = load_policy(a.policy.as_deref())?;
    let command = if mode == EaMode::Ea { "ea" } else { "nea" };
    let mut manifest = Manifest::begin(
        command,
        cfg.seed,
        serde_json::json!({ "ea": cfg, "city": a.city.city, "params": params }),
    );
    let out = evo::run(&city, params, &cfg, policy.as_ref())?;
    let out_dir = &a.common.out;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    out.best.network.write(&out_dir.join("network.json"))?;
    evo::write_history_csv(&out_dir.join("history.csv"), &out.history)?;
    write_json(&out_dir.join("cost.json"), &out.best.cost)?;
    emit(&serde_json::to_string(&out.best.cost).expect("cost serializes"));
    manifest.outputs = vec!["network.json".into(), "history.csv".into(), "cost.json".into()];
    manifest.finish(out_dir)?;
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = config::load(a.common.config.as_deref())?;
    if let Some(s) = a.common.seed {
        cfg.ea.seed = s;
    }
    if let Some(r) = a.runs {
        cfg.seeds = r;
    }
    if let Some(list) = &a.alphas {
        cfg.alphas = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParams(format!("bad α {s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
    }
    let methods: Vec<Method> = a.methods.split(',').map(Method::parse).collect::<Result<_>>()?;
    let (city, params) = a.city.load()?;
    let policy = load_policy(a.policy.as_deref())?;
    if policy.is_none() && methods.iter().any(|m| m.needs_policy()) {
        return Err(Error::InvalidParams("lc and nea need --policy".into()));
    }
    let mut manifest = Manifest::begin(
        "sweep",
        cfg.ea.seed,
        serde_json::json!({ "sweep": cfg, "methods": methods, "city": a.city.city, "params": params }),
    );
    let out_dir = &a.common.out;
    let cells = out_dir.join("cells");
    std::fs::create_dir_all(&cells).map_err(|e| Error::io(&cells, e))?;
    let records = sweep::run_sweep(&city, params, &cfg, &methods, cfg.ea.seed, policy.as_ref(), Some(&cells));
    for r in records.iter().filter(|r| r.error.is_some()) {
        log::warn!("{} α={} run {} failed: {}", r.method.name(), r.alpha, r.seed_index, r.error.as_deref().unwrap_or(""));
    }
    let summaries = sweep::summarize(&records);
    sweep::write_records_csv(&out_dir.join("records.csv"), &records)?;
    write_json(&out_dir.join("summary.json"), &summaries)?;
    let table = sweep::table_markdown(&CitySource::parse(&a.city.city).label(), &summaries);
    write_atomic(&out_dir.join("table.md"), table.as_bytes())?;
    write_json(&out_dir.join("pareto.json"), &sweep::pareto_series(&summaries))?;
    print!("{table}");
    manifest.outputs = ["cells/", "records.csv", "summary.json", "table.md", "pareto.json"]
        .map(String::from)
        .to_vec();
    manifest.finish(out_dir)?;
    Ok(())
}

fn plot_cmd(a: PlotArgs) -> Result<()> {
    let series: Vec<ParetoSeries> = if a.input.extension().is_some_and(|e| e == "csv") {
        sweep::pareto_series(&sweep::summarize(&sweep::read_records_csv(&a.input)?))
    } else {
        let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: a.input.display().to_string(),
            message: e.to_string(),
        })?
    };
    let svg = render_svg(&series)?;
    write_atomic(&a.out, svg.as_bytes())
}

fn validate_cmd(a: ValidateArgs) -> Result<()> {
    let (city, params) = a.city.load()?;
    let network = Network::read(&a.network)?;
    let weights = CostWeights::with_defaults(&city, &params, a.alpha);
    let report = validate_network(&city, &network, &params, &weights);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = &a.out {
        write_atomic(path, text.as_bytes())?;
    }
    emit(&text);
    Ok(())
}
