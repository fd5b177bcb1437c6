//! Command-line front end: model probabilities, closed-form moments, the
//! probit oracle, estimation/validation, equilibrium assignment, and the
//! bundled benchmark experiment, all as machine-readable JSON/CSV.
//!
//! Exit codes: 0 ok, 2 input error, 3 domain error, 4 non-convergence.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gmev::benchmark;
use gmev::error::{Error, ErrorClass};
use gmev::estimation::{ChoiceDataset, EstimationConfig, EstimationResult, Scenario};
use gmev::mnp::{
    build_covariance, generate_example_network, simulate_probabilities,
    CovarianceKind, MnpSpec,
};
use gmev::moments::{additive_moments, md_conditional_moments, multiplicative_moments};
use gmev::network::{route_set_from_json, NetworkFile, RouteSet};
use gmev::refroute::ReferencePolicy;
use gmev::spec::{model_spec_from_json, ModelSpec, ModelSpecFile, VectorFamily};
use gmev::sue::{solve_sue, LinkCostFunction, SueConfig, SueProblem};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "gmev",
    version,
    about = "Closed-form route-choice models: probabilities, moments, probit \
             simulation, estimation, and stochastic user equilibrium"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choice probabilities of a model on a network.
    Probs(ProbsArgs),
    /// Closed-form utility moments of a model on a network.
    Moments(MomentsArgs),
    /// Probit ground-truth probabilities on the bundled benchmark network.
    Mnp(MnpArgs),
    /// Maximum-likelihood estimation on a choice dataset.
    Estimate(EstimateArgs),
    /// Log-likelihood of fixed parameters on a dataset, without refitting.
    Validate(ValidateArgs),
    /// Stochastic user equilibrium for a model under flow-dependent costs.
    Sue(SueArgs),
    /// Run the bundled benchmark experiment end to end and write its
    /// ground-truth, estimation, and probability-curve tables.
    PaperExample(PaperExampleArgs),
    /// Check the directional behaviour of the basic models under the
    /// two-route network variations.
    BehaviorCheck,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct ProbsArgs {
    /// Network JSON file.
    #[arg(long)]
    network: PathBuf,
    /// Model specification JSON file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Reference route for conditional moments (reference-route models
    /// without a fixed policy).
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MnpArgs {
    /// Congestion parameter of the benchmark network.
    #[arg(long)]
    x: f64,
    /// Number of Monte Carlo draws.
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overlap covariance form.
    #[arg(long, value_enum, default_value = "arithmetic")]
    cov: CovArg,
    #[arg(long, default_value_t = 0.2)]
    theta: f64,
    #[arg(long, default_value_t = 10.0)]
    sigma_eps: f64,
    /// Worker threads (library default when omitted). Results are
    /// bit-identical for any thread count.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovArg {
    Geometric,
    Arithmetic,
}

#[derive(Args)]
struct EstimateArgs {
    /// Model specification JSON; its function/vector/policy define the form,
    /// its parameters are ignored.
    #[arg(long)]
    model: PathBuf,
    /// Training dataset CSV (scenario_key,route_id,count).
    #[arg(long)]
    train: PathBuf,
    /// Validation dataset CSV, evaluated at the fitted parameters.
    #[arg(long)]
    validate: Option<PathBuf>,
    /// Network JSON used for every scenario. When omitted, scenario keys are
    /// the benchmark congestion parameter x.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Model specification JSON carrying the parameters to evaluate.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV to score.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SueArgs {
    /// Equilibrium problem JSON (network, demand, link cost functions,
    /// model, solver config).
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gap-trajectory CSV (defaults to `<out>.gap.csv` when --out is set).
    #[arg(long)]
    gap_out: Option<PathBuf>,
}

#[derive(Args)]
struct PaperExampleArgs {
    /// Output directory for the experiment tables.
    #[arg(long)]
    out: PathBuf,
    /// Monte Carlo draws per congestion parameter.
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    /// Sweep of congestion parameters for ground truth and curves, e.g. 0..40.
    #[arg(long, default_value = "0..40")]
    x_range: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                CliError::Lib(err) => match err.class() {
                    ErrorClass::Input => 2,
                    ErrorClass::Domain => 3,
                    ErrorClass::NonConvergence => 4,
                    ErrorClass::Io => 1,
                },
                CliError::Input(_) => 2,
                CliError::NonConvergence(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}

enum CliError {
    Lib(Error),
    Input(String),
    NonConvergence(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Input(m) | CliError::NonConvergence(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

type CliResult = Result<(), CliError>;

fn run(command: Command) -> CliResult {
    match command {
        Command::Probs(args) => cmd_probs(args),
        Command::Moments(args) => cmd_moments(args),
        Command::Mnp(args) => cmd_mnp(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Sue(args) => cmd_sue(args),
        Command::PaperExample(args) => cmd_paper_example(args),
        Command::BehaviorCheck => cmd_behavior_check(),
    }
}

// ---------------------------------------------------------------------------
// Shared IO helpers
// ---------------------------------------------------------------------------

fn read_network(path: &Path) -> Result<RouteSet<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(route_set_from_json(&text)?)
}

fn read_model(path: &Path) -> Result<ModelSpec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(model_spec_from_json(&text)?)
}

fn emit(out: &Option<PathBuf>, content: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, content)?,
        None => println!("{content}"),
    }
    Ok(())
}

fn read_dataset(
    path: &Path,
    network: &Option<PathBuf>,
) -> Result<ChoiceDataset<f64>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let fixed = match network {
        Some(p) => Some(read_network(p)?),
        None => None,
    };
    Ok(ChoiceDataset::read_csv(file, move |key| match &fixed {
        Some(rs) => Ok(rs.clone()),
        None => {
            let x: f64 = key.parse().map_err(|_| {
                Error::Dataset(format!(
                    "scenario key `{key}` is not a benchmark congestion \
                     parameter; pass --network for a fixed network"
                ))
            })?;
            if !(x >= 0.0) {
                return Err(Error::Dataset(format!(
                    "scenario key `{key}` must be nonnegative"
                )));
            }
            Ok(generate_example_network(x).0)
        }
    })?)
}

fn metadata_header(seed: Option<u64>, n: Option<u64>) -> String {
    let mut line = format!("# tool=gmev-{VERSION}");
    if let Some(s) = seed {
        line.push_str(&format!(" seed={s}"));
    }
    if let Some(n) = n {
        line.push_str(&format!(" n={n}"));
    }
    line.push('\n');
    line
}

fn params_json(result: &EstimationResult<f64>) -> serde_json::Value {
    json!({
        "mu": result.params.mu,
        "c": result.params.c,
        "beta": result.params.beta,
        "rho": result.params.rho,
        "nest_scales": result.params.nest_scales,
    })
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_probs(args: ProbsArgs) -> CliResult {
    let rs = read_network(&args.network)?;
    let model = read_model(&args.model)?;
    let p = model.probabilities(&rs)?;
    let routes: Vec<&str> = rs.route_ids().collect();
    match args.format {
        OutputFormat::Json => {
            let value = json!({
                "model": model.name(),
                "routes": routes,
                "probabilities": p,
            });
            emit(&args.out, &serde_json::to_string_pretty(&value).unwrap())
        }
        OutputFormat::Csv => {
            let mut s = String::from("route,probability\n");
            for (id, prob) in routes.iter().zip(&p) {
                s.push_str(&format!("{id},{prob}\n"));
            }
            emit(&args.out, s.trim_end())
        }
    }
}

fn cmd_moments(args: MomentsArgs) -> CliResult {
    let rs = read_network(&args.network)?;
    let model = read_model(&args.model)?;
    let g = model.generating_function(&rs)?;
    let u = model.utility();
    let routes: Vec<&str> = rs.route_ids().collect();
    let value = match model.vector {
        VectorFamily::Additive => {
            let rep = additive_moments(&g, &rs, &u)?;
            json!({
                "model": model.name(),
                "routes": routes,
                "means": rep.means,
                "variances": rep.variances,
                "expected_max": rep.expected_max,
            })
        }
        VectorFamily::Multiplicative => {
            let rep = multiplicative_moments(&g, &rs, &u)?;
            json!({
                "model": model.name(),
                "routes": routes,
                "means": rep.means,
                "variances": rep.variances,
                "expected_max": rep.expected_max,
            })
        }
        VectorFamily::ReferenceRoute => {
            let reference = args
                .reference
                .clone()
                .or(match &model.reference_policy {
                    Some(ReferencePolicy::Fixed { reference }) => Some(reference.clone()),
                    _ => None,
                })
                .ok_or_else(|| {
                    Error::InvalidParameter(
                        "conditional moments need a reference route: pass \
                         --reference or a fixed policy"
                            .into(),
                    )
                })?;
            let (means, vars) = md_conditional_moments(&g, &rs, &u, &reference)?;
            json!({
                "model": model.name(),
                "reference": reference,
                "routes": routes,
                "means": means,
                "variances": vars,
                "expected_max": null,
            })
        }
        VectorFamily::HybridAdditive | VectorFamily::HybridMultiplicative => {
            return Err(Error::InvalidParameter(
                "closed-form moments are not available for hybrid vectors".into(),
            )
            .into());
        }
    };
    emit(&args.out, &serde_json::to_string_pretty(&value).unwrap())
}

fn cmd_mnp(args: MnpArgs) -> CliResult {
    if args.x < 0.0 {
        return Err(CliError::Input("x must be nonnegative".into()));
    }
    let (rs, mut spec) = generate_example_network(args.x);
    spec.theta = args.theta;
    spec.sigma_eps = args.sigma_eps;
    spec.cov_kind = match args.cov {
        CovArg::Geometric => CovarianceKind::Geometric,
        CovArg::Arithmetic => CovarianceKind::Arithmetic,
    };
    MnpSpec::new(spec.tau_hat.clone(), spec.theta, spec.sigma_eps, spec.cov_kind)?;
    let cov = build_covariance(&rs, &spec)?;
    let mean = spec.mean_utilities();
    let result = match args.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Input(e.to_string()))?;
            pool.install(|| simulate_probabilities(&mean, &cov, args.n, args.seed))?
        }
        None => simulate_probabilities(&mean, &cov, args.n, args.seed)?,
    };
    emit(&args.out, &serde_json::to_string_pretty(&result).unwrap())
}

fn cmd_estimate(args: EstimateArgs) -> CliResult {
    let model = read_model(&args.model)?;
    let train = read_dataset(&args.train, &args.network)?;
    let config = EstimationConfig {
        starts: args.starts,
        seed: args.seed,
        ..EstimationConfig::default()
    };
    let mut result = gmev::estimation::estimate(&model, &train, &config)?;
    if let Some(path) = &args.validate {
        let data = read_dataset(path, &args.network)?;
        result.validation_log_likelihood =
            Some(gmev::estimation::validate(&model, &result.params, &data)?);
    }
    let value = json!({
        "model": model.name(),
        "params": params_json(&result),
        "log_likelihood": result.log_likelihood,
        "per_observation_ll": result.per_observation_ll,
        "converged": result.converged,
        "iterations": result.iterations,
        "validation_log_likelihood": result.validation_log_likelihood,
        "pinned": result.pinned,
    });
    emit(&args.out, &serde_json::to_string_pretty(&value).unwrap())?;
    if !result.converged {
        return Err(CliError::NonConvergence(format!(
            "estimation of {} did not converge within the iteration budget",
            model.name()
        )));
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> CliResult {
    let model = read_model(&args.model)?;
    let data = read_dataset(&args.data, &args.network)?;
    let ll = gmev::estimation::validate(&model, &model.params, &data)?;
    let value = json!({
        "model": model.name(),
        "log_likelihood": ll,
        "per_observation_ll": ll / data.total_count(),
    });
    emit(&args.out, &serde_json::to_string_pretty(&value).unwrap())
}

// ---------------------------------------------------------------------------
// Equilibrium
// ---------------------------------------------------------------------------

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SueProblemFile {
    network: NetworkFile,
    demand: f64,
    link_costs: BTreeMap<String, LinkCostFunction<f64>>,
    model: ModelSpecFile,
    #[serde(default)]
    config: Option<SueConfig>,
}

fn cmd_sue(args: SueArgs) -> CliResult {
    let text = fs::read_to_string(&args.problem)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.problem.display())))?;
    let file: SueProblemFile =
        serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    let route_set: RouteSet<f64> = file.network.into_route_set()?;
    let link_costs = route_set
        .links()
        .iter()
        .map(|l| {
            file.link_costs
                .get(&l.id)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("no cost function for link `{}`", l.id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let problem = SueProblem {
        route_set,
        demand: file.demand,
        link_costs,
        model: file.model.into_spec()?,
        config: file.config.unwrap_or_default(),
    };
    let solution = solve_sue(&problem)?;
    let routes: Vec<&str> = problem.route_set.route_ids().collect();
    let value = json!({
        "routes": routes,
        "flows": solution.flows,
        "generalized_costs": solution.generalized_costs,
        "duality_gap": solution.duality_gap,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "experimental_mixture": solution.experimental_mixture,
    });
    emit(&args.out, &serde_json::to_string_pretty(&value).unwrap())?;

    let gap_path = args.gap_out.clone().or_else(|| {
        args.out
            .as_ref()
            .map(|p| PathBuf::from(format!("{}.gap.csv", p.display())))
    });
    if let Some(path) = gap_path {
        let mut s = String::from("iteration,gap\n");
        for (i, g) in solution.gap_trajectory.iter().enumerate() {
            s.push_str(&format!("{},{g}\n", i + 1));
        }
        fs::write(path, s)?;
    }
    if !solution.converged {
        return Err(CliError::NonConvergence(format!(
            "equilibrium gap {} above tolerance after {} iterations",
            solution.duality_gap, solution.iterations
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bundled experiment
// ---------------------------------------------------------------------------

fn parse_range(text: &str) -> Result<Vec<u32>, CliError> {
    let parts: Vec<&str> = text.split("..").collect();
    let err = || CliError::Input(format!("bad x-range `{text}`; expected like 0..40"));
    if parts.len() != 2 {
        return Err(err());
    }
    let lo: u32 = parts[0].parse().map_err(|_| err())?;
    let hi: u32 = parts[1].parse().map_err(|_| err())?;
    if hi < lo {
        return Err(err());
    }
    Ok((lo..=hi).collect())
}

fn cmd_paper_example(args: PaperExampleArgs) -> CliResult {
    if args.n < 10_000 {
        return Err(CliError::Input("n must be at least 10000".into()));
    }
    let sweep = parse_range(&args.x_range)?;
    fs::create_dir_all(&args.out)?;

    // Every x simulated once; dataset x-values included regardless of sweep.
    let mut all_xs: Vec<u32> = sweep.clone();
    all_xs.extend(benchmark::short_distance_xs());
    all_xs.extend(benchmark::long_distance_xs());
    all_xs.sort_unstable();
    all_xs.dedup();

    eprintln!("simulating ground truth for {} scenarios ...", all_xs.len());
    use rayon::prelude::*;
    let sims: BTreeMap<u32, _> = all_xs
        .par_iter()
        .map(|&x| Ok((x, benchmark::simulate_ground_truth(x, args.n, args.seed)?)))
        .collect::<Result<_, Error>>()?;

    let header = metadata_header(Some(args.seed), Some(args.n));

    let mut gt = header.clone();
    gt.push_str("x,route,probability,standard_error\n");
    for &x in &sweep {
        let (rs, sim) = &sims[&x];
        for (route, (p, se)) in rs
            .route_ids()
            .zip(sim.probabilities.iter().zip(&sim.standard_errors))
        {
            gt.push_str(&format!("{x},{route},{p},{se}\n"));
        }
    }
    fs::write(args.out.join("ground_truth.csv"), gt)?;

    let dataset_for = |xs: &[u32]| -> Result<ChoiceDataset<f64>, Error> {
        let scenarios = xs
            .iter()
            .map(|&x| {
                let (rs, sim) = &sims[&x];
                Scenario {
                    key: x.to_string(),
                    route_set: rs.clone(),
                    counts: sim
                        .probabilities
                        .iter()
                        .map(|&p| p * args.n as f64)
                        .collect(),
                }
            })
            .collect();
        ChoiceDataset::new(scenarios)
    };
    let short = dataset_for(&benchmark::short_distance_xs())?;
    let long = dataset_for(&benchmark::long_distance_xs())?;
    for (name, data) in [("dataset_short.csv", &short), ("dataset_long.csv", &long)] {
        let mut buf = Vec::new();
        buf.extend_from_slice(header.as_bytes());
        data.write_csv(&mut buf)?;
        fs::write(args.out.join(name), buf)?;
    }

    eprintln!("estimating 12 models on 2 datasets ...");
    let config = EstimationConfig {
        starts: args.starts,
        seed: args.seed,
        ..EstimationConfig::default()
    };
    let fits = benchmark::fit_all_models(&short, &long, &config)?;

    let mut est = header.clone();
    est.push_str(
        "model,dataset,mu,c,beta,rho,mu_1,mu_5,log_likelihood,per_observation_ll,\
         validation_log_likelihood,converged,iterations,pinned\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for row in &fits {
        let r = &row.result;
        est.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.model,
            row.dataset,
            r.params.mu,
            r.params.c,
            opt(r.params.beta),
            opt(r.params.rho),
            opt(r.params.nest_scales.get("1").copied()),
            opt(r.params.nest_scales.get("5").copied()),
            r.log_likelihood,
            r.per_observation_ll,
            opt(r.validation_log_likelihood),
            r.converged,
            r.iterations,
            r.pinned.join(";"),
        ));
    }
    fs::write(args.out.join("estimates.csv"), est)?;

    eprintln!("writing probability curves ...");
    let forms = benchmark::model_forms();
    let mut curves = header;
    curves.push_str("model,dataset,x,route,probability\n");
    for row in &fits {
        let form = forms
            .iter()
            .find(|f| f.name() == row.model)
            .expect("fit rows come from the forms");
        for (x, p) in benchmark::probability_curve(form, &row.result.params, &sweep)? {
            let (rs, _) = &sims[&x];
            for (route, prob) in rs.route_ids().zip(&p) {
                curves.push_str(&format!("{},{},{x},{route},{prob}\n", row.model, row.dataset));
            }
        }
    }
    fs::write(args.out.join("curves.csv"), curves)?;
    eprintln!("done: {}", args.out.display());
    Ok(())
}

fn cmd_behavior_check() -> CliResult {
    let cells = benchmark::behavior_table()?;
    let mut stdout = std::io::stdout().lock();
    let mut all_documented = true;
    writeln!(
        stdout,
        "{:<6} {:<34} {:<10} {:<10} mark",
        "model", "change", "expected", "observed"
    )?;
    for cell in &cells {
        let mark = if cell.matches_expected() { "\u{2713}" } else { "\u{2717}" };
        writeln!(
            stdout,
            "{:<6} {:<34} {:<10} {:<10} {mark}",
            cell.model,
            cell.change.label(),
            cell.expected.symbol(),
            cell.observed.symbol(),
        )?;
        all_documented &= cell.matches_documented();
    }
    if !all_documented {
        return Err(Error::InvalidParameter(
            "a model deviated from its documented directional behaviour".into(),
        )
        .into());
    }
    Ok(())
}
