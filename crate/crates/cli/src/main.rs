use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use esri_net_core::bundle::NetworkBundle;
use esri_net_core::output::{write_atomic, write_json_atomic};
use esri_net_core::report::{read_curve_csv, read_indices_csv, FigureInputs};
use esri_net_core::synth::{generate_or_load, write_synthetic};
use esri_net_core::{
    emit_figure_data, fit_rank_regimes, rank_firms, run_strategy, FunctionSet, Heuristic, Network,
    PropagationOptions, RiskModel, ShockScenario, StrategyError, SynthParams, X0Rule,
};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

/// Firm-removal simulations, systemic-risk indices and decarbonization
/// strategies on firm-level production networks.
#[derive(Debug, Parser, Serialize)]
#[command(name = "esri-net", version)]
struct Cli {
    /// Network directory with firms.csv and edges.csv.
    #[arg(long, global = true)]
    net: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
enum Command {
    /// Load a network and print a diagnostic summary.
    Validate,
    /// Generate a synthetic network.
    Synth(SynthArgs),
    /// Propagate the removal of a firm set to equilibrium.
    Simulate(SimulateArgs),
    /// Single-firm indices for a candidate set.
    Esri(EsriArgs),
    /// Greedy removal curve for one heuristic.
    Strategy(StrategyArgs),
    /// Two-regime exponential fit of ranked emission/risk ratios.
    FitRegimes(FitArgs),
    /// Plot-ready CSVs from earlier esri and strategy runs.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    n_firms: usize,
    #[arg(long, default_value_t = 5000)]
    n_edges: usize,
    #[arg(long, default_value_t = 20)]
    n_ets: usize,
    #[arg(long, default_value_t = 2.5)]
    degree_exponent: f64,
    /// Directory whose network replaces the generated one.
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum X0Arg {
    Out,
    Max,
}

impl From<X0Arg> for X0Rule {
    fn from(v: X0Arg) -> Self {
        match v {
            X0Arg::Out => X0Rule::Out,
            X0Arg::Max => X0Rule::Max,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    /// Share of non-essential input loss a firm can absorb, in [0, 1].
    #[arg(long)]
    gamma: Option<f64>,
    /// essentiality.csv overriding the network directory's table.
    #[arg(long)]
    essentiality: Option<PathBuf>,
    #[arg(long, value_enum)]
    x0_rule: Option<X0Arg>,
    #[arg(long, default_value_t = PropagationOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = PropagationOptions::default().max_iter)]
    max_iter: usize,
    /// Economy-wide CO2 total; defaults to the sum of reported emissions.
    #[arg(long)]
    total_co2: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Comma-separated firm ids, or a file with one id per line.
    #[arg(long)]
    remove: String,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
struct EsriArgs {
    /// A file with one firm id per line, or `all-ets`.
    #[arg(long, default_value = "all-ets")]
    candidates: String,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
struct StrategyArgs {
    #[arg(long)]
    heuristic: Heuristic,
    #[arg(long, default_value_t = 0.2)]
    target: f64,
    #[arg(long, default_value = "all-ets")]
    candidates: String,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    /// indices.csv from an esri run.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1000.0)]
    hi: f64,
    #[arg(long, default_value_t = 10.0)]
    lo: f64,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    #[arg(long)]
    indices: Option<PathBuf>,
    /// curve.csv from a strategy run, as `label=path` or a bare path.
    #[arg(long = "curve")]
    curves: Vec<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Data(m) => ("data", m),
        };
        write!(f, "{}", json!({ "error": kind, "message": message }))
    }
}

fn data(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Everything needed to rerun: the parsed command line plus values resolved
/// from defaults and the network directory.
#[derive(Serialize)]
struct RunConfig<'a> {
    version: &'static str,
    #[serde(flatten)]
    cli: &'a Cli,
    resolved: serde_json::Value,
}

struct Run<'a> {
    cli: &'a Cli,
    resolved: serde_json::Map<String, serde_json::Value>,
}

impl<'a> Run<'a> {
    fn resolve(&mut self, key: &str, value: impl Serialize) {
        self.resolved
            .insert(key.into(), serde_json::to_value(value).expect("serializable"));
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        write_atomic(&self.out(name), text.as_bytes()).map_err(data)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        write_json_atomic(&self.out(name), value).map_err(data)
    }

    fn finish(self) -> Result<(), CliError> {
        let config = RunConfig {
            version: env!("CARGO_PKG_VERSION"),
            cli: self.cli,
            resolved: serde_json::Value::Object(self.resolved.clone()),
        };
        self.write_json("config.json", &config)
    }

    fn net_dir(&self) -> Result<&'a Path, CliError> {
        self.cli
            .net
            .as_deref()
            .ok_or_else(|| CliError::Usage("--net <dir> is required for this subcommand".into()))
    }

    fn bundle(&self) -> Result<NetworkBundle<f64>, CliError> {
        NetworkBundle::load_dir(self.net_dir()?).map_err(data)
    }
}

fn calibrate(run: &mut Run, bundle: &mut NetworkBundle<f64>, m: &ModelArgs) -> Result<FunctionSet, CliError> {
    if let Some(path) = &m.essentiality {
        bundle.essentiality = esri_net_core::EssentialityMatrix::from_csv(path).map_err(data)?;
    }
    let pf = bundle.calibrate(m.gamma, m.x0_rule.map(X0Rule::from)).map_err(data)?;
    if !pf.degenerate.is_empty() {
        warn!("{} firms have no usable baseline output and are held fixed", pf.degenerate.len());
    }
    run.resolve("calibration", &pf.params);
    pf.write_audit(&bundle.network, run.out("calibration.csv")).map_err(data)?;
    Ok(pf)
}

fn options(m: &ModelArgs) -> PropagationOptions {
    PropagationOptions {
        tol: m.tol,
        max_iter: m.max_iter,
    }
}

fn read_ids(arg: &str) -> Result<Vec<String>, CliError> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?
    } else {
        arg.replace(',', "\n")
    };
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && *l != "firm_id")
        .map(String::from)
        .collect())
}

fn candidates(net: &Network, arg: &str) -> Result<Vec<String>, CliError> {
    let ids = if arg == "all-ets" {
        net.firms().iter().filter(|f| f.ets_member).map(|f| f.id.clone()).collect()
    } else {
        read_ids(arg)?
    };
    if ids.is_empty() {
        return Err(data(format!("candidate set {arg:?} is empty")));
    }
    Ok(ids)
}

fn validate(run: &mut Run) -> Result<(), CliError> {
    let bundle = run.bundle()?;
    let report = bundle.network.validate();
    println!("{}", serde_json::to_string_pretty(&report).map_err(data)?);
    run.write_json("validation.json", &report)
}

fn synth(run: &mut Run, a: &SynthArgs) -> Result<(), CliError> {
    let params = SynthParams {
        degree_exponent: a.degree_exponent,
        ..SynthParams::new(a.n_firms, a.n_edges, a.n_ets, run.cli.seed)
    };
    let net: Network = generate_or_load(&params, a.fixture.as_deref()).map_err(data)?;
    write_synthetic(&net, &run.cli.out).map_err(data)?;
    run.resolve("synth", &params);
    info!("wrote {} firms and {} edges", net.len(), net.edge_count());
    Ok(())
}

fn simulate(run: &mut Run, a: &SimulateArgs) -> Result<(), CliError> {
    let mut bundle = run.bundle()?;
    let pf = calibrate(run, &mut bundle, &a.model)?;
    let net = &bundle.network;
    let scenario = ShockScenario::from_ids(net, read_ids(&a.remove)?).map_err(data)?;
    let model = RiskModel::new(net, &pf, options(&a.model), a.model.total_co2).map_err(data)?;
    let outcome = model.evaluate(&scenario).map_err(data)?;
    let eq = &outcome.equilibrium;
    if !eq.converged {
        warn!("no convergence after {} iterations (max delta {:e})", eq.iterations, eq.max_delta);
    }
    let mut csv = String::from("firm_id,h_d,h_u,h\n");
    for (i, f) in net.firms().iter().enumerate() {
        csv.push_str(&format!("{},{},{},{}\n", f.id, eq.state.h_d[i], eq.state.h_u[i], eq.h(i)));
    }
    run.write("equilibrium.csv", &csv)?;
    let meta = json!({
        "iterations": eq.iterations,
        "max_delta": eq.max_delta,
        "converged": eq.converged,
        "removed": scenario.removed().iter().map(|&i| &net.firm(i).id).collect::<Vec<_>>(),
        "esri": outcome.esri,
        "ew_esri": outcome.ew_esri.as_ref().ok(),
        "co2_share_total": outcome.co2.as_ref().ok().map(|c| c.share_total),
        "co2_share_ets": outcome.co2.as_ref().ok().and_then(|c| c.share_ets),
    });
    println!("{meta}");
    run.write_json("equilibrium.json", &meta)
}

fn esri(run: &mut Run, a: &EsriArgs) -> Result<(), CliError> {
    let mut bundle = run.bundle()?;
    let pf = calibrate(run, &mut bundle, &a.model)?;
    let ids = candidates(&bundle.network, &a.candidates)?;
    let model = RiskModel::new(&bundle.network, &pf, options(&a.model), a.model.total_co2).map_err(data)?;
    let table = model.batch_indices(&ids);
    let unconverged = table.ok_rows().filter(|r| !r.convergence.converged).count();
    if unconverged > 0 {
        warn!("{unconverged} candidates did not converge");
    }
    let failed = table.errors().count();
    if failed > 0 {
        warn!("{failed} candidates failed; see errors.csv");
    }
    run.write("indices.csv", &table.to_csv())?;
    run.write("errors.csv", &table.errors_csv())?;
    run.resolve("candidates", ids.len());
    run.resolve("total_co2", model.emission_totals().total);
    Ok(())
}

fn strategy(run: &mut Run, a: &StrategyArgs) -> Result<(), CliError> {
    let mut bundle = run.bundle()?;
    let pf = calibrate(run, &mut bundle, &a.model)?;
    let ids = candidates(&bundle.network, &a.candidates)?;
    let model = RiskModel::new(&bundle.network, &pf, options(&a.model), a.model.total_co2).map_err(data)?;
    let table = model.batch_indices(&ids);
    if table.errors().count() > 0 {
        run.write("errors.csv", &table.errors_csv())?;
        return Err(data("some candidates could not be indexed; see errors.csv"));
    }
    let rows: Vec<_> = table.ok_rows().cloned().collect();
    let order = rank_firms(&rows, a.heuristic);
    let (curve, failure) = match run_strategy(&model, &order, a.target) {
        Ok(c) => (c, None),
        Err(e @ StrategyError::TargetUnreachable { .. }) => {
            let msg = e.to_string();
            (e.into_curve().expect("unreachable target carries its curve"), Some(msg))
        }
        Err(e) => return Err(data(e)),
    };
    let summary = curve.summary(Some(a.heuristic));
    run.write("curve.csv", &curve.to_csv())?;
    run.write_json("summary.json", &summary)?;
    run.resolve("total_co2", model.emission_totals().total);
    println!("{}", serde_json::to_string(&summary).map_err(data)?);
    match failure {
        Some(msg) => Err(data(msg)),
        None => Ok(()),
    }
}

fn fit_regimes(run: &mut Run, a: &FitArgs) -> Result<(), CliError> {
    let records = read_indices_csv(&a.input).map_err(data)?;
    let mut ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    let dropped = ratios.len();
    ratios.retain(|v| v.is_finite() && *v > 0.0);
    let dropped = dropped - ratios.len();
    if dropped > 0 {
        info!("ignoring {dropped} ratios that are zero or infinite");
    }
    ratios.sort_by(|a, b| b.total_cmp(a));
    let fit = fit_rank_regimes(&ratios, a.hi, a.lo).map_err(data)?;
    println!("{}", serde_json::to_string(&fit).map_err(data)?);
    run.write_json("regimes.json", &fit)
}

fn report(run: &mut Run, a: &ReportArgs) -> Result<(), CliError> {
    let net = run.bundle()?.network;
    let indices = a.indices.as_ref().map(read_indices_csv).transpose().map_err(data)?;
    let mut curves = Vec::new();
    for arg in &a.curves {
        let (label, path) = match arg.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(arg);
                let label = p
                    .parent()
                    .and_then(|d| d.file_name())
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "curve".into());
                (label, p)
            }
        };
        curves.push(read_curve_csv(&path, label).map_err(data)?);
    }
    let files = emit_figure_data(&net, &FigureInputs { indices, curves }, &run.cli.out).map_err(data)?;
    println!("{}", serde_json::to_string(&files).map_err(data)?);
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(data)?;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| data(format!("{}: {e}", cli.out.display())))?;
    let mut run = Run {
        cli,
        resolved: serde_json::Map::new(),
    };
    run.resolve("threads", rayon::current_num_threads());
    let result = match &cli.command {
        Command::Validate => validate(&mut run),
        Command::Synth(a) => synth(&mut run, a),
        Command::Simulate(a) => simulate(&mut run, a),
        Command::Esri(a) => esri(&mut run, a),
        Command::Strategy(a) => strategy(&mut run, a),
        Command::FitRegimes(a) => fit_regimes(&mut run, a),
        Command::Report(a) => report(&mut run, a),
    };
    // The config is recorded even when the command fails partway.
    let written = run.finish();
    result.and(written)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
