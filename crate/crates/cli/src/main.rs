mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use popsize::{
    compare_models, estimate_homogeneous, estimate_regression, run_replicates, summarize,
    zelterman_lambda, zt_poisson_mle, Error, Method, ModelSpec, PopulationModel, ReplicateConfig,
    Schema, PRNG_VERSION,
};
use serde::Serialize;

use input::{build_schema, load, CategoricalArg, DataFormat, Loaded};
use report::*;

/// Population size estimation from zero-truncated counts.
#[derive(Debug, Parser)]
#[command(name = "popsize", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one estimator and report N with its 95% interval.
    Fit(FitArgs),
    /// Fit a sequence of nested covariate models and test each against the previous.
    Compare(CompareArgs),
    /// Simulate populations and score estimators against the known size.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::Individual)]
    format: DataFormat,
    /// Count column of an individual-record file.
    #[arg(long, default_value = "count")]
    count_col: String,
    /// Categorical covariate: name=levels[:reference]. Levels are separated by
    /// '|' if any is present, otherwise by ','. Repeatable.
    #[arg(long = "categorical", value_name = "SPEC")]
    categorical: Vec<CategoricalArg>,
    /// TOML file declaring covariates ([[covariate]] name, kind, levels, reference).
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Output::Text)]
    output: Output,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Comma-separated covariates (regression methods only).
    #[arg(long)]
    covariates: Option<String>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// zelterman-reg or ztpoisson-reg.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Semicolon-separated covariate lists, each a comma list; an empty entry is
    /// the intercept-only model. The first model is the base.
    #[arg(long, allow_hyphen_values = true)]
    models: String,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    n_pop: u64,
    /// Poisson rate of a homogeneous population.
    #[arg(
        long,
        allow_negative_numbers = true,
        conflicts_with = "mixture",
        required_unless_present = "mixture"
    )]
    lambda: Option<f64>,
    /// Mixture "w:lambda,w:lambda,...".
    #[arg(long)]
    mixture: Option<String>,
    /// Number of replicates.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Replicate k uses seed seed-base + k.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Comma-separated estimators.
    #[arg(long, default_value = "zelterman")]
    method: String,
    /// Write each replicate's observed units to DIR/seed-<seed>.csv.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Output::Text)]
    output: Output,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.message())
}

fn render<T: Serialize>(report: &T, output: Output, text: impl FnOnce(&T) -> String) -> String {
    match output {
        Output::Text => text(report)
            .lines()
            .map(|l| format!("{}\n", l.trim_end()))
            .collect(),
        Output::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

fn load_for(args: &DataArgs, terms: &[String], regression: bool) -> Result<(Loaded, InputDigest), Error> {
    if regression && args.format == DataFormat::Frequency {
        return Err(Error::Usage(
            "regression methods need --format individual".into(),
        ));
    }
    if !regression && !args.categorical.is_empty() {
        return Err(Error::Usage("--categorical applies to regression methods only".into()));
    }
    let schema = if regression {
        build_schema(terms, &args.categorical, args.schema.as_deref())?
    } else {
        Schema::default()
    };
    let loaded = load(&args.data, args.format, &args.count_col, &schema)?;
    let digest = InputDigest::new(
        &args.data.display().to_string(),
        args.format,
        loaded.rows(),
        &loaded.table(),
    );
    Ok((loaded, digest))
}

fn cmd_fit(args: &FitArgs) -> Result<String, Error> {
    let regression = args.method.is_regression();
    let spec = ModelSpec::parse(args.covariates.as_deref().unwrap_or(""));
    if !regression && args.covariates.is_some() {
        return Err(Error::Usage(format!("{} takes no covariates", args.method)));
    }
    let (loaded, digest) = load_for(&args.data, &spec.terms, regression)?;
    let table = loaded.table();

    let report = if regression {
        let Loaded::Units(dataset) = &loaded else {
            unreachable!("regression input is individual-format")
        };
        let result = estimate_regression(dataset, &spec, args.method)?;
        FitReport {
            schema_version: SCHEMA_VERSION,
            command: "fit",
            method: args.method,
            input: digest,
            estimate: (&result.estimate).into(),
            rate: None,
            model: Some(ModelBlock::new(spec.label(), &result.fit)),
            warnings: warnings_for(args.method, &table, Some(&result)),
        }
    } else {
        let estimate = estimate_homogeneous(&table, args.method)?;
        let rate = match args.method {
            Method::Zelterman => Some(zelterman_lambda(&table, 1)?),
            Method::ZtPoissonMle => Some(zt_poisson_mle(&table)?.0),
            _ => None,
        };
        FitReport {
            schema_version: SCHEMA_VERSION,
            command: "fit",
            method: args.method,
            input: digest,
            estimate: (&estimate).into(),
            rate: rate.as_ref().map(Into::into),
            model: None,
            warnings: warnings_for(args.method, &table, None),
        }
    };
    Ok(render(&report, args.data.output, FitReport::text))
}

fn cmd_compare(args: &CompareArgs) -> Result<String, Error> {
    if !args.method.is_regression() {
        return Err(Error::Usage(format!(
            "compare needs zelterman-reg or ztpoisson-reg, not {}",
            args.method
        )));
    }
    let specs: Vec<ModelSpec> = args.models.split(';').map(ModelSpec::parse).collect();
    let mut terms: Vec<String> = Vec::new();
    for spec in &specs {
        for t in &spec.terms {
            if !terms.contains(t) {
                terms.push(t.clone());
            }
        }
    }
    let (loaded, digest) = load_for(&args.data, &terms, true)?;
    let Loaded::Units(dataset) = &loaded else {
        unreachable!("regression input is individual-format")
    };
    let table = dataset.frequency_table();
    let rows = compare_models(dataset, args.method, &specs)?;
    let report = CompareReport {
        schema_version: SCHEMA_VERSION,
        command: "compare",
        method: args.method,
        input: digest,
        models: rows
            .iter()
            .map(|row| CompareRow {
                estimate: (&row.result.estimate).into(),
                model: ModelBlock::new(row.spec.label(), &row.result.fit),
                lrt: row.lrt.as_ref().map(Into::into),
                warnings: warnings_for(args.method, &table, Some(&row.result)),
            })
            .collect(),
    };
    Ok(render(&report, args.data.output, CompareReport::text))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String, Error> {
    let model = match (&args.mixture, args.lambda) {
        (Some(text), _) => PopulationModel::parse_mixture(text)?,
        (None, Some(lambda)) => PopulationModel::Poisson(lambda),
        (None, None) => return Err(Error::Usage("give --lambda or --mixture".into())),
    };
    let methods = args
        .method
        .split(',')
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    if args.seeds == 0 {
        return Err(Error::Usage("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds)
        .map(|k| {
            args.seed_base
                .checked_add(k)
                .ok_or_else(|| Error::Usage("seed range overflows u64".into()))
        })
        .collect::<Result<_, _>>()?;
    let config = ReplicateConfig {
        n_pop: args.n_pop,
        model,
        seeds,
        methods,
    };
    let replicates = run_replicates(&config)?;
    if let Some(dir) = &args.dump_dir {
        popsize::simulate::dump_populations(&config, dir)?;
    }
    let truth = config.n_pop as f64;
    let report = SimulateReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        prng: PRNG_VERSION,
        n_pop: config.n_pop,
        model: config.model.clone(),
        seed_base: args.seed_base,
        replicates: replicates
            .iter()
            .map(|r| SimReplicate {
                seed: r.seed,
                n_observed: r.n_observed,
                estimates: config
                    .methods
                    .iter()
                    .zip(&r.estimates)
                    .map(|(&method, e)| match e {
                        Ok(e) => SimEstimate {
                            method,
                            n_hat: Some(e.n_hat),
                            ci_low: Some(e.ci_low),
                            ci_high: Some(e.ci_high),
                            covers: Some(e.covers(truth)),
                            error: None,
                            rounded_n_hat: Some(whole(e.n_hat)),
                        },
                        Err(err) => SimEstimate {
                            method,
                            n_hat: None,
                            ci_low: None,
                            ci_high: None,
                            covers: None,
                            error: Some(format!("{}: {}", err.kind(), err.message())),
                            rounded_n_hat: None,
                        },
                    })
                    .collect(),
            })
            .collect(),
        summary: config
            .methods
            .iter()
            .enumerate()
            .map(|(i, &m)| summarize(&replicates, i, m, config.n_pop).into())
            .collect(),
    };
    Ok(render(&report, args.output, SimulateReport::text))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) => 2,
        Error::Validation { .. } | Error::Schema(_) | Error::Io { .. } | Error::Csv(_) => 3,
        Error::Domain(_)
        | Error::DegenerateData(_)
        | Error::Singular(_)
        | Error::Separation(_)
        | Error::Boundary(_)
        | Error::Iteration { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {}: {}", err.kind(), err.message().replace('\n', " "));
            ExitCode::from(exit_code(&err))
        }
    }
}
