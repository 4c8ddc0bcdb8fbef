//! Command-line front end: simulate / fit / select / summarize.
//!
//! Every command writes a `manifest.json` into its output directory
//! (command, config hash, seed, versions, input digests, timings) and
//! refuses to overwrite an existing output without `--force`. Exit codes:
//! 0 success, 2 usage error, 3 data error, 4 convergence failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use aldrm::data::LongitudinalDataset;
use aldrm::diagnostics::{self, ParameterSummary, RHAT_CONVERGED};
use aldrm::modelspec::{Family, ModelSpec, SkewnessSpec};
use aldrm::persist::{self, RunManifest};
use aldrm::sampler::{self, SamplerConfig};
use aldrm::selection::{self, FittedModel, Loss, PredictKind, QuantileSet};
use aldrm::simgen::{self, Scenario};

/// Environment variable holding the default output root; used when
/// `--out` is omitted.
const OUT_ROOT_ENV: &str = "ALDRM_OUT_ROOT";

const EXIT_USAGE: i32 = 2;
const EXIT_DATA: i32 = 3;
const EXIT_CONVERGENCE: i32 = 4;

#[derive(Parser)]
#[command(
    name = "aldrm",
    version,
    about = "Bayesian distributional regression for longitudinal data under the asymmetric Laplace distribution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic longitudinal dataset from a scenario.
    Simulate(SimulateArgs),
    /// Fit a model by MCMC and persist chains and summaries.
    Fit(FitArgs),
    /// Compare fitted models by the quantile-coverage criterion.
    Select(SelectArgs),
    /// Recompute posterior summaries from persisted chains.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file, or the built-in name `table1-default`.
    #[arg(long)]
    scenario: String,
    /// Override the scenario's subject count.
    #[arg(long)]
    n: Option<usize>,
    /// Override the scenario's measurements per subject.
    #[arg(long)]
    m: Option<usize>,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV (long format: id,time,y,covariates...).
    #[arg(long)]
    data: PathBuf,
    /// Model specification file.
    #[arg(long)]
    model: PathBuf,
    /// Override the spec's family.
    #[arg(long, value_parser = ["al", "gaussian"])]
    family: Option<String>,
    /// Replace the skewness component with a fixed order.
    #[arg(long)]
    tau_fixed: Option<f64>,
    /// Comma-separated covariates to z-score before fitting.
    #[arg(long, value_delimiter = ',')]
    standardize: Vec<String>,
    #[arg(long, default_value_t = 3)]
    chains: usize,
    #[arg(long, default_value_t = 40_000)]
    iter: usize,
    #[arg(long, default_value_t = 10_000)]
    burnin: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Do not fail when some R-hat is at or above the threshold.
    #[arg(long)]
    no_strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SelectArgs {
    /// Dataset CSV all fits refer to.
    #[arg(long)]
    data: PathBuf,
    /// Fit directory; pass at least twice.
    #[arg(long = "fit", required = true)]
    fits: Vec<PathBuf>,
    /// Quantile set: g1 (deciles), g2 (quartiles), g3 (0.1,0.5,0.9) or a
    /// comma-separated list of orders.
    #[arg(long, default_value = "g1")]
    set: String,
    /// Loss on the coverage errors: abs or sq.
    #[arg(long, default_value = "abs", value_parser = ["abs", "sq"])]
    loss: String,
    /// Subject ids for which to emit fitted density/CDF grids.
    #[arg(long, value_delimiter = ',')]
    grids: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Fit directory holding chain CSVs.
    #[arg(long)]
    fit: PathBuf,
    /// Optional directory for summary.csv / summary.json copies.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }

    fn convergence(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONVERGENCE, message: message.into() }
    }
}

impl From<aldrm::Error> for Failure {
    fn from(err: aldrm::Error) -> Self {
        use aldrm::Error::*;
        let code = match &err {
            InvalidParameter(_) | InvalidSpec(_) => EXIT_USAGE,
            InvalidData(_) | Design(_) | Parse { .. } | Io(_) | Json(_) => EXIT_DATA,
            Sampler { .. } | Diagnostics(_) => EXIT_CONVERGENCE,
        };
        Self { code, message: err.to_string() }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Select(args) => cmd_select(args),
        Command::Summarize(args) => cmd_summarize(args),
    };
    if let Err(failure) = result {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}

/// Resolves the output directory: explicit flag, or
/// `$ALDRM_OUT_ROOT/<command>-<hash8>`.
fn resolve_out(
    out: Option<PathBuf>,
    command: &str,
    config_hash: &str,
) -> Result<PathBuf, Failure> {
    if let Some(dir) = out {
        return Ok(dir);
    }
    match std::env::var(OUT_ROOT_ENV) {
        Ok(root) if !root.is_empty() => {
            Ok(PathBuf::from(root).join(format!("{command}-{}", &config_hash[..8])))
        }
        _ => Err(Failure::usage(format!(
            "no --out given and {OUT_ROOT_ENV} is not set"
        ))),
    }
}

/// Creates the output directory, refusing to reuse one that already holds
/// a manifest unless `--force` is set.
fn prepare_out(dir: &Path, force: bool) -> Result<(), Failure> {
    if dir.join("manifest.json").exists() && !force {
        return Err(Failure::usage(format!(
            "output directory {} already holds a run (use --force to overwrite)",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(())
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

// ----- simulate -------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let load = Instant::now();
    let mut input_digests = BTreeMap::new();
    let mut scenario = if args.scenario == "table1-default" {
        Scenario::table1_default(200, 50, 0x5eed)
    } else {
        let path = Path::new(&args.scenario);
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::data(format!("cannot read scenario {}: {e}", args.scenario)))?;
        input_digests.insert(args.scenario.clone(), persist::sha256_hex(text.as_bytes()));
        serde_json::from_str(&text).map_err(|e| {
            Failure::data(format!("malformed scenario {} (line {}): {e}", args.scenario, e.line()))
        })?
    };
    if let Some(n) = args.n {
        scenario.n = n;
    }
    if let Some(m) = args.m {
        scenario.m = m;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    scenario.validate().map_err(Failure::from)?;

    let config_json = serde_json::to_string(&scenario).map_err(aldrm::Error::from)?;
    let config_hash = persist::sha256_hex(config_json.as_bytes());
    let out = resolve_out(args.out, "simulate", &config_hash)?;
    prepare_out(&out, args.force)?;

    let gen_start = Instant::now();
    let dataset = simgen::generate(&scenario).map_err(Failure::from)?;
    let gen_ms = elapsed_ms(gen_start);

    let write_start = Instant::now();
    let mut csv = Vec::new();
    dataset.write_csv(&mut csv).map_err(Failure::from)?;
    fs::write(out.join("dataset.csv"), &csv).map_err(aldrm::Error::from)?;
    fs::write(out.join("scenario.json"), &config_json).map_err(aldrm::Error::from)?;

    let mut manifest = RunManifest::new("simulate", config_hash, scenario.seed);
    manifest.input_digests = input_digests;
    manifest
        .input_digests
        .insert("dataset.csv".into(), persist::sha256_hex(&csv));
    manifest.timings_ms.insert("load".into(), elapsed_ms(load) - gen_ms);
    manifest.timings_ms.insert("generate".into(), gen_ms);
    manifest.timings_ms.insert("write".into(), elapsed_ms(write_start));
    manifest.write(&out.join("manifest.json")).map_err(Failure::from)?;
    println!(
        "wrote {} ({} subjects x {} rows)",
        out.join("dataset.csv").display(),
        dataset.n_subjects(),
        dataset.n_obs()
    );
    Ok(())
}

// ----- fit ------------------------------------------------------------------

fn load_spec_with_overrides(args: &FitArgs) -> Result<ModelSpec, Failure> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| Failure::data(format!("cannot read model spec {}: {e}", args.model.display())))?;
    let mut spec = ModelSpec::parse(&text).map_err(Failure::from)?;
    match args.family.as_deref() {
        Some("gaussian") => {
            spec = ModelSpec::new(Family::Gaussian, spec.location, spec.scale, None)
                .map_err(Failure::from)?;
        }
        Some("al") => {
            let skew = spec.skewness.clone().or_else(|| {
                args.tau_fixed.map(SkewnessSpec::Fixed)
            });
            spec = ModelSpec::new(Family::AsymmetricLaplace, spec.location, spec.scale, skew)
                .map_err(Failure::from)?;
        }
        _ => {}
    }
    if let Some(tau) = args.tau_fixed {
        if spec.family == Family::Gaussian {
            return Err(Failure::usage("--tau-fixed does not apply to the Gaussian family"));
        }
        spec = ModelSpec::new(
            spec.family,
            spec.location,
            spec.scale,
            Some(SkewnessSpec::Fixed(tau)),
        )
        .map_err(Failure::from)?;
    }
    Ok(spec)
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let load = Instant::now();
    let data_bytes = fs::read(&args.data)
        .map_err(|e| Failure::data(format!("cannot read data {}: {e}", args.data.display())))?;
    let data_digest = persist::sha256_hex(&data_bytes);
    let mut dataset = LongitudinalDataset::read_csv(data_bytes.as_slice()).map_err(Failure::from)?;
    if !args.standardize.is_empty() {
        dataset.standardize(&args.standardize).map_err(Failure::from)?;
    }
    let spec = load_spec_with_overrides(&args)?;

    let cfg = SamplerConfig {
        n_chains: args.chains,
        n_iter: args.iter,
        burn_in: args.burnin,
        thin: args.thin,
        seed: args.seed,
        ..SamplerConfig::default()
    };
    cfg.validate().map_err(Failure::from)?;

    let config_text = format!(
        "fit\nspec:\n{}\nchains={} iter={} burnin={} thin={} seed={} standardize={:?}\ndata={data_digest}",
        spec.to_text(),
        cfg.n_chains,
        cfg.n_iter,
        cfg.burn_in,
        cfg.thin,
        cfg.seed,
        args.standardize,
    );
    let config_hash = persist::sha256_hex(config_text.as_bytes());
    let out = resolve_out(args.out, "fit", &config_hash)?;
    prepare_out(&out, args.force)?;
    let load_ms = elapsed_ms(load);

    let run_start = Instant::now();
    let sample = sampler::fit(&dataset, &spec, &cfg).map_err(Failure::from)?;
    let run_ms = elapsed_ms(run_start);

    let write_start = Instant::now();
    for (c, chain) in sample.chains.iter().enumerate() {
        let mut buf = Vec::new();
        persist::write_chain_csv(&mut buf, &sample.names, &chain.columns)
            .map_err(Failure::from)?;
        fs::write(out.join(format!("chain_{c}.csv")), buf).map_err(aldrm::Error::from)?;
    }
    let summaries = diagnostics::summarize(&sample).map_err(Failure::from)?;
    write_summaries(&out, &summaries)?;
    let mut effects_buf = Vec::new();
    let ids: Vec<String> = dataset.subjects().iter().map(|s| s.id.clone()).collect();
    persist::write_effects_csv(&mut effects_buf, &ids, &sample.effect_means)
        .map_err(Failure::from)?;
    fs::write(out.join("effects.csv"), effects_buf).map_err(aldrm::Error::from)?;
    fs::write(out.join("model.spec"), spec.to_text()).map_err(aldrm::Error::from)?;

    let mut manifest = RunManifest::new("fit", config_hash, cfg.seed);
    manifest.input_digests.insert("data".into(), data_digest);
    manifest.input_digests.insert(
        "model.spec".into(),
        persist::sha256_hex(spec.to_text().as_bytes()),
    );
    manifest.timings_ms.insert("load".into(), load_ms);
    manifest.timings_ms.insert("run".into(), run_ms);
    manifest.timings_ms.insert("write".into(), elapsed_ms(write_start));
    manifest.write(&out.join("manifest.json")).map_err(Failure::from)?;

    let max_rhat = diagnostics::max_rhat(&summaries);
    match max_rhat {
        Some(r) => println!(
            "fit {} ({}): {} chains, max R-hat = {r:.4}",
            out.display(),
            spec.kind().label(),
            cfg.n_chains
        ),
        None => println!(
            "fit {} ({}): single chain, R-hat not available",
            out.display(),
            spec.kind().label()
        ),
    }
    if !args.no_strict
        && let Some(r) = max_rhat
        && r >= RHAT_CONVERGED
    {
        return Err(Failure::convergence(format!(
            "max R-hat {r:.4} is at or above {RHAT_CONVERGED} (pass --no-strict to accept)"
        )));
    }
    Ok(())
}

fn write_summaries(out: &Path, summaries: &[ParameterSummary]) -> Result<(), Failure> {
    let mut csv = Vec::new();
    persist::write_summary_csv(&mut csv, summaries).map_err(Failure::from)?;
    fs::write(out.join("summary.csv"), csv).map_err(aldrm::Error::from)?;
    let json = serde_json::to_string_pretty(summaries).map_err(aldrm::Error::from)?;
    fs::write(out.join("summary.json"), json).map_err(aldrm::Error::from)?;
    Ok(())
}

// ----- select ---------------------------------------------------------------

fn parse_set(text: &str) -> Result<QuantileSet, Failure> {
    match text {
        "g1" | "gamma1" => Ok(QuantileSet::deciles()),
        "g2" | "gamma2" => Ok(QuantileSet::quartiles()),
        "g3" | "gamma3" => Ok(QuantileSet::outer_deciles()),
        other => {
            let orders: Result<Vec<f64>, _> =
                other.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let orders = orders
                .map_err(|_| Failure::usage(format!("cannot parse quantile set {other:?}")))?;
            QuantileSet::new(orders).map_err(Failure::from)
        }
    }
}

fn load_fitted_model(dir: &Path, data_digest: &str) -> Result<FittedModel, Failure> {
    let manifest = RunManifest::read(&dir.join("manifest.json"))
        .map_err(|e| Failure::data(format!("cannot read manifest in {}: {e}", dir.display())))?;
    match manifest.input_digests.get("data") {
        Some(d) if d == data_digest => {}
        Some(_) => {
            return Err(Failure::data(format!(
                "fit {} was produced from a different dataset (digest mismatch)",
                dir.display()
            )));
        }
        None => {
            return Err(Failure::data(format!(
                "fit {} has no recorded dataset digest",
                dir.display()
            )));
        }
    }
    let spec_text = fs::read_to_string(dir.join("model.spec"))
        .map_err(|e| Failure::data(format!("cannot read model.spec in {}: {e}", dir.display())))?;
    let spec = ModelSpec::parse(&spec_text).map_err(Failure::from)?;
    let names = spec.parameter_names();

    let mut chain_means: Vec<Vec<f64>> = Vec::new();
    let mut c = 0usize;
    loop {
        let path = dir.join(format!("chain_{c}.csv"));
        if !path.exists() {
            break;
        }
        let file = fs::File::open(&path).map_err(aldrm::Error::from)?;
        let (file_names, columns) = persist::read_chain_csv(file).map_err(Failure::from)?;
        if file_names != names {
            return Err(Failure::data(format!(
                "chain {} does not match the model spec's parameters",
                path.display()
            )));
        }
        chain_means.push(
            columns
                .iter()
                .map(|col| col.iter().sum::<f64>() / col.len().max(1) as f64)
                .collect(),
        );
        c += 1;
    }
    if chain_means.is_empty() {
        return Err(Failure::data(format!("no chain files in {}", dir.display())));
    }
    let means: Vec<f64> = (0..names.len())
        .map(|k| chain_means.iter().map(|m| m[k]).sum::<f64>() / chain_means.len() as f64)
        .collect();
    let theta = sampler::unflatten(&spec, &means);

    let effects_file = fs::File::open(dir.join("effects.csv"))
        .map_err(|e| Failure::data(format!("cannot read effects.csv in {}: {e}", dir.display())))?;
    let (_, effects) = persist::read_effects_csv(effects_file).map_err(Failure::from)?;
    Ok(FittedModel { spec, theta, effects })
}

fn cmd_select(args: SelectArgs) -> Result<(), Failure> {
    if args.fits.len() < 2 {
        return Err(Failure::usage("select needs at least two --fit directories"));
    }
    let set = parse_set(&args.set)?;
    let loss = match args.loss.as_str() {
        "abs" => Loss::Absolute,
        "sq" => Loss::Quadratic,
        _ => unreachable!("clap validates"),
    };
    let load = Instant::now();
    let data_bytes = fs::read(&args.data)
        .map_err(|e| Failure::data(format!("cannot read data {}: {e}", args.data.display())))?;
    let data_digest = persist::sha256_hex(&data_bytes);
    let dataset = LongitudinalDataset::read_csv(data_bytes.as_slice()).map_err(Failure::from)?;
    let models: Vec<FittedModel> = args
        .fits
        .iter()
        .map(|dir| load_fitted_model(dir, &data_digest))
        .collect::<Result<_, _>>()?;

    let config_text = format!(
        "select\ndata={data_digest}\nset={:?}\nloss={:?}\nfits={:?}",
        set.orders(),
        loss,
        args.fits
    );
    let config_hash = persist::sha256_hex(config_text.as_bytes());
    let out = resolve_out(args.out, "select", &config_hash)?;
    prepare_out(&out, args.force)?;
    let load_ms = elapsed_ms(load);

    let run_start = Instant::now();
    let mut reports = Vec::with_capacity(models.len());
    let mut errors_rows = Vec::new();
    for (k, fit) in models.iter().enumerate() {
        let report = selection::criterion(fit, &dataset, &set, loss).map_err(Failure::from)?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv).map_err(Failure::from)?;
        fs::write(out.join(format!("criterion_{k}.csv")), csv).map_err(aldrm::Error::from)?;
        let traj = selection::quantile_trajectories(fit, &dataset, &set).map_err(Failure::from)?;
        let mut traj_csv = Vec::new();
        selection::write_trajectories_csv(&mut traj_csv, &traj).map_err(Failure::from)?;
        fs::write(out.join(format!("trajectories_{k}.csv")), traj_csv)
            .map_err(aldrm::Error::from)?;
        for kind in [PredictKind::Mode, PredictKind::Mean, PredictKind::Median] {
            let (mse, mae) =
                selection::predictive_errors(fit, &dataset, kind).map_err(Failure::from)?;
            errors_rows.push((k, report.model_label.clone(), kind, mse, mae));
        }
        for id in &args.grids {
            let idx = dataset
                .subjects()
                .iter()
                .position(|s| &s.id == id)
                .ok_or_else(|| Failure::data(format!("no subject {id:?} in the dataset")))?;
            let grid =
                selection::distribution_grid(fit, &dataset, idx, 101).map_err(Failure::from)?;
            let mut grid_csv = Vec::new();
            selection::write_grid_csv(&mut grid_csv, &grid).map_err(Failure::from)?;
            fs::write(out.join(format!("grid_{k}_{id}.csv")), grid_csv)
                .map_err(aldrm::Error::from)?;
        }
        reports.push(report);
    }
    let run_ms = elapsed_ms(run_start);

    let best = reports
        .iter()
        .map(|r| r.global)
        .fold(f64::INFINITY, f64::min);
    let winners: Vec<usize> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.global == best)
        .map(|(k, _)| k)
        .collect();

    let mut errors_csv = String::from("model_index,model,kind,mse,mae\n");
    for (k, label, kind, mse, mae) in &errors_rows {
        errors_csv.push_str(&format!(
            "{k},{label},{},{},{}\n",
            kind.label(),
            persist::fmt_g17(*mse),
            persist::fmt_g17(*mae)
        ));
    }
    fs::write(out.join("errors.csv"), errors_csv).map_err(aldrm::Error::from)?;

    let report_json = serde_json::json!({
        "set": set.orders(),
        "loss": loss.label(),
        "models": reports.iter().enumerate().map(|(k, r)| serde_json::json!({
            "index": k,
            "dir": args.fits[k].display().to_string(),
            "label": r.model_label,
            "criterion": r.global,
        })).collect::<Vec<_>>(),
        "winner": if winners.len() == 1 {
            serde_json::json!({"index": winners[0], "label": reports[winners[0]].model_label})
        } else {
            serde_json::json!({"tie": winners})
        },
        "errors": errors_rows.iter().map(|(k, label, kind, mse, mae)| serde_json::json!({
            "index": k, "label": label, "kind": kind.label(), "mse": mse, "mae": mae,
        })).collect::<Vec<_>>(),
    });
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report_json).map_err(aldrm::Error::from)?,
    )
    .map_err(aldrm::Error::from)?;

    let mut manifest = RunManifest::new("select", config_hash, 0);
    manifest.input_digests.insert("data".into(), data_digest);
    manifest.timings_ms.insert("load".into(), load_ms);
    manifest.timings_ms.insert("run".into(), run_ms);
    manifest.write(&out.join("manifest.json")).map_err(Failure::from)?;

    for (k, r) in reports.iter().enumerate() {
        println!("model {k} ({}): C = {:.6}", r.model_label, r.global);
    }
    if winners.len() == 1 {
        println!("winner: model {} ({})", winners[0], reports[winners[0]].model_label);
    } else {
        println!("tie between models {winners:?}");
    }
    Ok(())
}

// ----- summarize ------------------------------------------------------------

fn cmd_summarize(args: SummarizeArgs) -> Result<(), Failure> {
    let mut chains = Vec::new();
    let mut names: Option<Vec<String>> = None;
    let mut c = 0usize;
    loop {
        let path = args.fit.join(format!("chain_{c}.csv"));
        if !path.exists() {
            break;
        }
        let file = fs::File::open(&path).map_err(aldrm::Error::from)?;
        let (file_names, columns) = persist::read_chain_csv(file).map_err(Failure::from)?;
        match &names {
            None => names = Some(file_names),
            Some(expect) if *expect == file_names => {}
            Some(_) => {
                return Err(Failure::data(format!(
                    "chain {} disagrees with earlier headers",
                    path.display()
                )));
            }
        }
        chains.push(columns);
        c += 1;
    }
    let names = names.ok_or_else(|| {
        Failure::data(format!("no chain files found in {}", args.fit.display()))
    })?;
    let summaries = diagnostics::summarize_columns(&names, &chains).map_err(Failure::from)?;

    println!(
        "{:<16} {:>12} {:>12} {:>12} {:>12} {:>8}",
        "parameter", "mean", "sd", "2.5%", "97.5%", "R-hat"
    );
    for s in &summaries {
        let rhat = s.rhat.map_or(String::from("-"), |r| format!("{r:.4}"));
        println!(
            "{:<16} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>8}",
            s.name, s.mean, s.sd, s.ci_lower, s.ci_upper, rhat
        );
    }
    if let Some(out) = args.out {
        let config_hash = persist::sha256_hex(args.fit.display().to_string().as_bytes());
        prepare_out(&out, args.force)?;
        write_summaries(&out, &summaries)?;
        let manifest = RunManifest::new("summarize", config_hash, 0);
        manifest.write(&out.join("manifest.json")).map_err(Failure::from)?;
    }
    Ok(())
}
