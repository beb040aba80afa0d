//! `lipagg`: derive and audit privacy mechanisms, generate tradeoff curves,
//! run seeded Monte-Carlo experiments, ingest datasets and solve the
//! centralized baseline.

mod args;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use args::{parse_eps_grid, parse_prior, parse_task, parse_values, read_channel};
use lipagg::analysis::search::SearchConfig;
use lipagg::analysis::{tradeoff_curve, CurveFamily, TradeoffCurve};
use lipagg::cip::{cip_search, CipInstance};
use lipagg::harness::{
    generate_population, ingest, run_experiment, BoundingBox, ExperimentConfig, IngestMode, IngestSpec,
    PopulationSource, PriorMode, PriorSource,
};
use lipagg::mechanisms::{derive, Mechanism, MechanismFamily};
use lipagg::notions::audit;
use lipagg::{Domain, Error, PrivacyBudget, Result};

#[derive(Parser)]
#[command(name = "lipagg", version, about = "Context-aware local privacy mechanisms and their utility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mechanism construction.
    Mechanism {
        #[command(subcommand)]
        action: MechanismAction,
    },
    /// Measure LDP, LIP and MIP leakage of a channel under a prior.
    Audit(AuditArgs),
    /// Closed-form analysis.
    Analyze {
        #[command(subcommand)]
        action: AnalyzeAction,
    },
    /// Monte-Carlo experiment.
    Simulate(SimulateArgs),
    /// Read a CSV dataset into a population.
    Ingest(IngestArgs),
    /// Centralized information privacy baseline.
    Cip(CipArgs),
}

#[derive(Subcommand)]
enum MechanismAction {
    /// Print the optimal channel of a family.
    Derive(DeriveArgs),
}

#[derive(Subcommand)]
enum AnalyzeAction {
    /// Closed-form sqrt(E/N) over a budget grid.
    Curve(CurveArgs),
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DeriveArgs {
    /// Mechanism family, e.g. opt-binary-lip or opt-mimo-ldp.
    #[arg(long)]
    family: MechanismFamily,
    /// Prior as comma-separated probabilities, or a single p1 for binary
    /// domains.
    #[arg(long, default_value = "0.5")]
    prior: String,
    /// Privacy budget.
    #[arg(long)]
    eps: f64,
    /// Domain values; defaults to 0..d-1.
    #[arg(long)]
    domain: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct AuditArgs {
    /// Channel file: CSV rows of probabilities (an optional header row is
    /// skipped) or the JSON emitted by `mechanism derive`.
    #[arg(long)]
    channel: PathBuf,
    /// Prior as comma-separated probabilities, or a single p1.
    #[arg(long)]
    prior: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Clone)]
struct PopulationArgs {
    /// Number of users.
    #[arg(long)]
    n: Option<usize>,
    /// Global prior (comma-separated probabilities or a single p1).
    #[arg(long, conflicts_with = "local_random")]
    prior: Option<String>,
    /// Draw every user's prior uniformly at random.
    #[arg(long)]
    local_random: bool,
    /// Domain values; defaults to 0..d-1 with d taken from the prior.
    #[arg(long)]
    domain: Option<String>,
    /// Seed for drawing local priors.
    #[arg(long, default_value_t = 0)]
    population_seed: u64,
}

impl PopulationArgs {
    fn is_set(&self) -> bool {
        self.n.is_some() || self.prior.is_some() || self.local_random || self.domain.is_some()
    }

    fn source(&self) -> Result<PopulationSource> {
        let n = self.n.ok_or_else(|| Error::InvalidConfig("--n is required".into()))?;
        let prior = match &self.prior {
            Some(p) => Some(parse_prior(p)?),
            None if self.local_random => None,
            None => return Err(Error::InvalidConfig("give --prior or --local-random".into())),
        };
        let domain = match (&self.domain, &prior) {
            (Some(d), _) => parse_values(d)?,
            (None, Some(p)) => (0..p.len()).map(|i| i as f64).collect(),
            (None, None) => vec![0.0, 1.0],
        };
        let prior = match prior {
            Some(p) => PriorMode::Global(p),
            None => PriorMode::LocalUniformRandom,
        };
        Ok(PopulationSource::Synthetic { n, domain, prior, seed: self.population_seed })
    }
}

#[derive(Args)]
struct CurveArgs {
    /// Families to evaluate; append @scale for a scaled budget, e.g.
    /// opt-binary-lip@0.5.
    #[arg(long = "family", required = true)]
    families: Vec<CurveFamily>,
    /// Task: survey[:target], summation or histogram.
    #[arg(long, default_value = "survey:1")]
    task: String,
    /// Budget grid as start:stop:step or a comma list.
    #[arg(long, default_value = "0.5:5:0.5")]
    eps_grid: String,
    #[command(flatten)]
    population: PopulationArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment descriptor (JSON); flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Families to simulate; append @scale for a scaled budget.
    #[arg(long = "family")]
    families: Vec<CurveFamily>,
    /// Task: survey[:target], summation or histogram.
    #[arg(long)]
    task: Option<String>,
    /// Budget grid as start:stop:step or a comma list.
    #[arg(long)]
    eps_grid: Option<String>,
    /// Monte-Carlo trials per point.
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the closed-form rows.
    #[arg(long)]
    no_closed_form: bool,
    #[command(flatten)]
    population: PopulationArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IngestKind {
    Binarize,
    Grid,
    Categorical,
}

#[derive(Args)]
struct IngestArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: IngestKind,
    /// Value column for binarize and categorical modes.
    #[arg(long)]
    column: Option<String>,
    /// Binarization threshold: values above it map to 1.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    lat_column: Option<String>,
    #[arg(long)]
    lon_column: Option<String>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Bounding box min_lat,max_lat,min_lon,max_lon.
    #[arg(long)]
    bbox: Option<String>,
    /// Build per-user priors from event history keyed by this column;
    /// without it each row is one user sharing the empirical prior.
    #[arg(long)]
    history_user_column: Option<String>,
    /// Write the ingest descriptor for `simulate` configs to this file.
    #[arg(long)]
    spec_out: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CipArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p1: f64,
    #[arg(long)]
    eps: f64,
    /// Output alphabet size; defaults to N + 1.
    #[arg(long)]
    outputs: Option<usize>,
    /// Random restarts of the search.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Sweep cap of each local polish; reaching it is an error.
    #[arg(long, default_value_t = SearchConfig::default().max_sweeps)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Mechanism { action: MechanismAction::Derive(a) } => cmd_derive(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Analyze { action: AnalyzeAction::Curve(a) } => cmd_curve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Cip(a) => cmd_cip(a),
    }
}

fn emit(output: &OutputArgs, text: &str) -> Result<()> {
    match &output.out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(fields).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
}

fn cmd_derive(a: DeriveArgs) -> Result<()> {
    let prior = parse_prior(&a.prior)?;
    let domain = match &a.domain {
        Some(d) => Domain::new(parse_values(d)?)?,
        None => Domain::range(prior.len())?,
    };
    let eps = PrivacyBudget::new(a.eps)?;
    let text = match derive(a.family, &domain, &prior, eps)? {
        Mechanism::Channel(ch) => {
            let report = audit(&ch, &prior)?;
            match a.output.format {
                Format::Json => pretty(&json!({
                    "family": a.family.name(),
                    "epsilon": a.eps,
                    "prior": prior.probs(),
                    "channel": ch,
                    "audit": report,
                })),
                Format::Csv => {
                    let mut header = vec!["input".to_string()];
                    header.extend(ch.output_domain().values().iter().map(|v| v.to_string()));
                    let mut s = csv_line(&header);
                    for (m, row) in ch.rows().iter().enumerate() {
                        let mut fields = vec![domain.value(m).to_string()];
                        fields.extend(row.iter().map(|q| q.to_string()));
                        s.push_str(&csv_line(&fields));
                    }
                    s
                }
            }
        }
        Mechanism::Unary(oue) => match a.output.format {
            Format::Json => pretty(&json!({ "family": a.family.name(), "epsilon": a.eps, "unary": oue })),
            Format::Csv => {
                let mut s = csv_line(&["d".into(), "keep_prob".into(), "flip_up_prob".into()]);
                s.push_str(&csv_line(&[oue.d.to_string(), oue.keep_prob.to_string(), oue.flip_up_prob.to_string()]));
                s
            }
        },
    };
    emit(&a.output, &text)
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    let prior = parse_prior(&a.prior)?;
    let channel = read_channel(&a.channel)?;
    let report = audit(&channel, &prior)?;
    let text = match a.output.format {
        Format::Json => pretty(&serde_json::to_value(report).expect("audit serializes")),
        Format::Csv => {
            let mut s = csv_line(&["ldp_eps".into(), "lip_eps".into(), "mip_nats".into()]);
            s.push_str(&csv_line(&[report.ldp_eps.to_string(), report.lip_eps.to_string(), report.mip_nats.to_string()]));
            s
        }
    };
    emit(&a.output, &text)
}

fn curve_text(curve: &TradeoffCurve, format: Format) -> String {
    match format {
        Format::Csv => curve.to_csv(),
        Format::Json => {
            let mut s = curve.to_json();
            s.push('\n');
            s
        }
    }
}

fn cmd_curve(a: CurveArgs) -> Result<()> {
    let PopulationSource::Synthetic { n, domain, prior, seed } = a.population.source()? else {
        unreachable!("flags only build synthetic populations")
    };
    let population = generate_population(n, &Domain::new(domain)?, &prior, seed)?;
    let task = parse_task(&a.task)?;
    let grid = parse_eps_grid(&a.eps_grid)?;
    let mut curve: Option<TradeoffCurve> = None;
    for family in a.families {
        let c = tradeoff_curve(family, &population, &task, &grid)?;
        curve = Some(match curve {
            Some(prev) => prev.merge(c),
            None => c,
        });
    }
    emit(&a.output, &curve_text(&curve.expect("at least one family"), a.output.format))
}

fn experiment_config(a: &SimulateArgs) -> Result<ExperimentConfig> {
    let base = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            Some(ExperimentConfig::from_json(&text)?)
        }
        None => None,
    };
    let population = if a.population.is_set() {
        a.population.source()?
    } else {
        base.as_ref()
            .map(|c| c.population.clone())
            .ok_or_else(|| Error::InvalidConfig("give --config or population flags".into()))?
    };
    let task = match (&a.task, &base) {
        (Some(t), _) => parse_task(t)?,
        (None, Some(c)) => c.task.clone(),
        (None, None) => parse_task("survey:1")?,
    };
    let families = match (a.families.is_empty(), &base) {
        (false, _) => a.families.clone(),
        (true, Some(c)) => c.families.clone(),
        (true, None) => return Err(Error::InvalidConfig("give at least one --family".into())),
    };
    let eps_grid = match (&a.eps_grid, &base) {
        (Some(g), _) => parse_eps_grid(g)?,
        (None, Some(c)) => c.eps_grid.clone(),
        (None, None) => parse_eps_grid("0.5:5:0.5")?,
    };
    let config = ExperimentConfig {
        task,
        families,
        eps_grid,
        population,
        trials: a.trials.or(base.as_ref().map(|c| c.trials)).unwrap_or(1000),
        seed: a.seed.or(base.as_ref().map(|c| c.seed)).unwrap_or(0),
        output: a.output.out.clone().or(base.as_ref().and_then(|c| c.output.clone())),
        closed_form: !a.no_closed_form && base.as_ref().is_none_or(|c| c.closed_form),
    };
    config.validate()?;
    Ok(config)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let config = experiment_config(&a)?;
    let curve = run_experiment(&config)?;
    let output = OutputArgs { format: a.output.format, out: config.output.clone() };
    emit(&output, &curve_text(&curve, a.output.format))
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value.clone().ok_or_else(|| Error::InvalidConfig(format!("--{flag} is required for this mode")))
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let mode = match a.mode {
        IngestKind::Binarize => IngestMode::BinarizeThreshold {
            column: required(&a.column, "column")?,
            threshold: required(&a.threshold, "threshold")?,
        },
        IngestKind::Categorical => IngestMode::Categorical { column: required(&a.column, "column")? },
        IngestKind::Grid => {
            let b = parse_values(&required(&a.bbox, "bbox")?)?;
            if b.len() != 4 {
                return Err(Error::InvalidConfig("--bbox needs min_lat,max_lat,min_lon,max_lon".into()));
            }
            IngestMode::GridMap {
                lat_column: required(&a.lat_column, "lat-column")?,
                lon_column: required(&a.lon_column, "lon-column")?,
                rows: required(&a.rows, "rows")?,
                cols: required(&a.cols, "cols")?,
                bbox: BoundingBox { min_lat: b[0], max_lat: b[1], min_lon: b[2], max_lon: b[3] },
            }
        }
    };
    let prior_source = match &a.history_user_column {
        Some(c) => PriorSource::PerUserFromHistory { user_column: c.clone() },
        None => PriorSource::GlobalFromData,
    };
    let spec = IngestSpec { mode, prior_source };
    let data = ingest(&a.input, &spec)?;
    if let Some(path) = &a.spec_out {
        let descriptor = json!({ "ingested": { "path": absolute(&a.input), "spec": spec } });
        fs::write(path, pretty(&descriptor)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    let histogram = data.truth(&lipagg::AggregationTask::Histogram)?;
    let text = match a.output.format {
        Format::Json => pretty(&json!({
            "users": data.population.len(),
            "domain": data.population.domain(),
            "labels": data.labels,
            "histogram": histogram,
            "population": data.population,
            "inputs": data.inputs,
        })),
        Format::Csv => {
            let mut header = vec!["user".to_string(), "value".to_string()];
            header.extend(data.labels.iter().map(|l| format!("p_{l}")));
            let mut s = csv_line(&header);
            for (user, &x) in data.population.users().iter().zip(&data.inputs) {
                let mut fields = vec![user.id.clone(), data.labels[x].clone()];
                fields.extend(user.prior.probs().iter().map(|p| p.to_string()));
                s.push_str(&csv_line(&fields));
            }
            s
        }
    };
    emit(&a.output, &text)
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

fn cmd_cip(a: CipArgs) -> Result<()> {
    let instance = CipInstance::new(a.n, a.p1, PrivacyBudget::new(a.eps)?)?;
    let outputs = a.outputs.unwrap_or(a.n + 1);
    let config = SearchConfig { random_starts: a.restarts, max_sweeps: a.max_sweeps, seed: a.seed };
    let result = cip_search(&instance, outputs, config)?;
    let metric = result.metric(a.n);
    let text = match a.output.format {
        Format::Json => pretty(&json!({
            "n": a.n,
            "p1": a.p1,
            "epsilon": a.eps,
            "band": result.band,
            "lower_bound": result.lower_bound,
            "mse": result.mse,
            "seed_mse": result.seed_mse,
            "metric": metric,
            "outputs": outputs,
            "channel": result.channel,
        })),
        Format::Csv => {
            let header = ["n", "p1", "epsilon", "band_lower", "band_upper", "lower_bound", "mse", "seed_mse", "metric"];
            let mut s = csv_line(&header.map(String::from));
            s.push_str(&csv_line(&[
                a.n.to_string(),
                a.p1.to_string(),
                a.eps.to_string(),
                result.band.lower.to_string(),
                result.band.upper.to_string(),
                result.lower_bound.to_string(),
                result.mse.to_string(),
                result.seed_mse.to_string(),
                metric.to_string(),
            ]));
            s
        }
    };
    emit(&a.output, &text)
}
