mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use coxthin::colouring::verify_colouring;
use coxthin::io::{
    load_csv, read_trace_jsonl, write_grid_csv, write_pattern_csv, write_pcf_csv, write_trace_jsonl, Dataset,
};
use coxthin::matern3::{simulate_matern3, verify_matern3, TimedPattern};
use coxthin::mtsgcp::{
    fit, geweke_test, pcf, posterior_intensity_grid, simulate_mtsgcp, MtsgcpParams, Trace, TraceRecord,
};
use coxthin::sgcp::{compare_samplers_empty, simulate_sgcp, verify_appendix_b, verify_appendix_c, SgcpParams};
use coxthin::{Error, Result, Rng};

use config::{Config, DataConfig, Matern3Config, MtsgcpConfig, SgcpConfig};

const ABOUT: &str = "Simulation and Bayesian inference for thinned point processes";

const LONG_ABOUT: &str = "\
Simulation and Bayesian inference for thinned point processes: the sigmoidal
Gaussian Cox process, its multitype extension and Matern type III.

Every run needs a seed, given by --seed or by `seed` in the config file.
Outputs go to --out (default `out`). CSV files start with `#` comment lines
that record the tool version, git revision, command, seed and configuration.

Edge effects: Matern III simulation and densities treat the window as the
whole space. Points near the border cannot be shadowed by points outside it,
so they are thinned less often than in an unbounded process. No edge
correction is applied.";

#[derive(Parser, Debug)]
#[command(name = "coxthin", version, about = ABOUT, long_about = LONG_ABOUT)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Independent chains for `fit`.
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// Recorded iterations per chain for `fit`.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Burn-in iterations per chain for `fit`.
    #[arg(long, global = true)]
    burn: Option<usize>,
    /// Map the bounding box of the data onto the domain.
    #[arg(long, global = true)]
    rescale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one realization of a model.
    Simulate {
        #[arg(value_enum)]
        model: SimModel,
    },
    /// Posterior sampling for observed data; writes one JSON-lines trace per chain.
    Fit {
        #[arg(value_enum)]
        model: FitModel,
        /// CSV with columns x,y and optionally a type column.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Column holding the point type.
        #[arg(long)]
        type_column: Option<String>,
    },
    /// Cross pair correlation functions from fitted traces.
    Pcf {
        /// Trace files written by `fit`.
        #[arg(long = "trace", required = true, num_args = 1..)]
        traces: Vec<PathBuf>,
    },
    /// Posterior mean intensity of every type on a grid, from traces with stored fields.
    IntensityGrid {
        #[arg(long = "trace", required = true, num_args = 1..)]
        traces: Vec<PathBuf>,
        /// Cells per axis.
        #[arg(long)]
        res: Option<usize>,
    },
    /// Statistical self-checks; exit status 2 when a check fails.
    Verify {
        #[arg(value_enum)]
        check: Check,
    },
    /// Probability of no thinned points given an empty observation, across samplers.
    CompareSamplers {
        #[arg(long, value_enum, default_value = "empty")]
        observed: Observed,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SimModel {
    Sgcp,
    Mtsgcp,
    Matern3,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FitModel {
    Sgcp,
    Mtsgcp,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Check {
    Colouring,
    AppendixB,
    AppendixC,
    Matern3,
    Geweke,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum Observed {
    Empty,
}

#[derive(Serialize)]
struct Provenance {
    tool: String,
    git: String,
    command: String,
    seed: u64,
    config: Config,
}

impl Provenance {
    fn header(&self) -> Vec<String> {
        vec![
            format!("{} ({})", self.tool, self.git),
            format!("command: {}", self.command),
            format!("seed: {}", self.seed),
            format!("config: {}", serde_json::to_string(&self.config).unwrap_or_default()),
        ]
    }
}

struct Run {
    config: Config,
    seed: u64,
    out: PathBuf,
    provenance: Provenance,
}

impl Run {
    fn rng(&self) -> Rng {
        Rng::new(self.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            provenance: &'a Provenance,
            report: &'a T,
        }
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &Wrapped { provenance: &self.provenance, report: value })?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn header(&self) -> Vec<String> {
        self.provenance.header()
    }
}

fn command_line(cmd: &Command) -> String {
    match cmd {
        Command::Simulate { model } => format!("simulate {}", name(model)),
        Command::Fit { model, .. } => format!("fit {}", name(model)),
        Command::Pcf { .. } => "pcf".into(),
        Command::IntensityGrid { .. } => "intensity-grid".into(),
        Command::Verify { check } => format!("verify {}", name(check)),
        Command::CompareSamplers { .. } => "compare-samplers".into(),
    }
}

fn name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

fn setup(cli: &Cli) -> Result<Run> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = Some(s);
    }
    let seed = config
        .seed
        .ok_or_else(|| Error::Parameter("a seed is required (--seed or `seed` in the config)".into()))?;
    if let Some(c) = cli.chains {
        config.fit.chains = c;
    }
    if let Some(i) = cli.iters {
        config.fit.iters = i;
    }
    if let Some(b) = cli.burn {
        config.fit.burn = b;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let provenance = Provenance {
        tool: format!("coxthin {}", env!("CARGO_PKG_VERSION")),
        git: env!("COXTHIN_GIT_DESCRIBE").to_string(),
        command: command_line(&cli.command),
        seed,
        config: config.clone(),
    };
    Ok(Run { config, seed, out, provenance })
}

fn threads() -> usize {
    std::env::var("COXTHIN_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn sgcp_params(run: &Run) -> Result<SgcpParams> {
    let c = run.config.sgcp.clone().unwrap_or(SgcpConfig { lambda: 5.0, range: 2.0, variance: 1.0, mean: 0.0 });
    SgcpParams::with_mean(c.lambda, c.kernel()?, run.config.domain()?, c.mean)
}

fn mtsgcp_params(run: &Run) -> Result<MtsgcpParams> {
    let c = run.config.mtsgcp.clone().unwrap_or(MtsgcpConfig {
        lambda: 100.0,
        a: vec![vec![1.0, 0.0], vec![-0.6, 0.8]],
        rho: vec![5.0, 5.0],
        mu: vec![0.0, 0.0],
    });
    MtsgcpParams::new(c.lambda, c.lmc()?, run.config.domain()?)
}

fn simulate(run: &Run, model: SimModel) -> Result<serde_json::Value> {
    let mut rng = run.rng();
    let header = run.header();
    match model {
        SimModel::Sgcp => {
            let params = sgcp_params(run)?;
            let (thinned, observed) = simulate_sgcp(&mut rng, &params)?;
            write_pattern_csv(&mut run.create("thinned.csv")?, &thinned, &header)?;
            write_pattern_csv(&mut run.create("observed.csv")?, &observed, &header)?;
            Ok(serde_json::json!({"thinned": thinned.len(), "observed": observed.len()}))
        }
        SimModel::Mtsgcp => {
            let params = mtsgcp_params(run)?;
            let (thinned, observed) = simulate_mtsgcp(&mut rng, &params)?;
            write_pattern_csv(&mut run.create("thinned.csv")?, &thinned, &header)?;
            for (k, o) in observed.iter().enumerate() {
                write_pattern_csv(&mut run.create(&format!("type{}.csv", k + 1))?, o, &header)?;
            }
            let counts: Vec<usize> = observed.iter().map(|o| o.len()).collect();
            Ok(serde_json::json!({"thinned": thinned.len(), "observed": counts}))
        }
        SimModel::Matern3 => {
            let c = run
                .config
                .matern3
                .clone()
                .unwrap_or(Matern3Config { lambda: 20.0, shadow: coxthin::matern3::Shadow::disc(0.1)? });
            let dom = run.config.domain()?;
            let (thinned, kept) = simulate_matern3(&mut rng, &dom, c.lambda, &c.shadow)?;
            let all = TimedPattern::combine(&dom, &thinned, &kept)?;
            write_pattern_csv(&mut run.create("matern3.csv")?, all.as_marked(), &header)?;
            Ok(serde_json::json!({"thinned": thinned.len(), "kept": kept.len()}))
        }
    }
}

fn load_data(run: &Run, path: Option<&Path>, type_column: Option<&str>, rescale: bool) -> Result<Dataset> {
    let from_config = run.config.data.clone();
    let data = match (path, from_config) {
        (Some(p), cfg) => DataConfig {
            path: p.to_path_buf(),
            type_column: type_column.map(str::to_string).or(cfg.as_ref().and_then(|c| c.type_column.clone())),
            rescale: rescale || cfg.is_some_and(|c| c.rescale),
        },
        (None, Some(cfg)) => DataConfig {
            type_column: type_column.map(str::to_string).or(cfg.type_column),
            rescale: rescale || cfg.rescale,
            path: cfg.path,
        },
        (None, None) => return Err(Error::Parameter("no data file given (--data or [data] in the config)".into())),
    };
    load_csv(&data.path, &run.config.domain()?, data.type_column.as_deref(), data.rescale)
}

fn fit_command(run: &Run, model: FitModel, data: Option<&Path>, type_column: Option<&str>, rescale: bool) -> Result<serde_json::Value> {
    let dataset = load_data(run, data, type_column, rescale)?;
    if matches!(model, FitModel::Sgcp) && dataset.n_types() != 1 {
        return Err(Error::Parameter(format!(
            "the univariate model needs one point type, the data has {}",
            dataset.n_types()
        )));
    }
    let dom = dataset.dom.clone();
    let priors = run.config.priors(&dom);
    let controls = run.config.controls;
    let fc = run.config.fit.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads())
        .build()
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let traces: Vec<Result<Trace>> = pool.install(|| {
        (0..fc.chains)
            .into_par_iter()
            .map(|c| {
                let mut rng = Rng::with_stream(run.seed, c as u64);
                fit(&mut rng, &dataset.patterns, &dom, &priors, &controls, fc.iters, fc.burn)
            })
            .collect()
    });
    let provenance = serde_json::to_value(&run.provenance)?;
    let mut summary = Vec::new();
    for (c, trace) in traces.into_iter().enumerate() {
        let trace = trace?;
        let mut w = run.create(&format!("trace_chain{c}.jsonl"))?;
        write_trace_jsonl(&mut w, Some(&provenance), &trace.records)?;
        w.flush()?;
        summary.push(serde_json::json!({
            "chain": c,
            "records": trace.len(),
            "hmc_accept_mean": trace.hmc_accept_mean,
            "bdm_proposed": trace.bdm.proposed,
            "bdm_accepted": trace.bdm.accepted,
        }));
    }
    Ok(serde_json::json!({"types": dataset.names, "counts": dataset.counts(), "chains": summary}))
}

fn pooled_records(paths: &[PathBuf]) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_trace_jsonl(File::open(p)?)?);
    }
    if out.is_empty() {
        return Err(Error::Parameter("the traces hold no records".into()));
    }
    Ok(out)
}

fn evenly_spaced<T: Clone>(items: &[T], max: usize) -> Vec<T> {
    if items.len() <= max || max == 0 {
        return items.to_vec();
    }
    (0..max).map(|i| items[i * items.len() / max].clone()).collect()
}

fn pcf_command(run: &Run, traces: &[PathBuf]) -> Result<serde_json::Value> {
    let records = evenly_spaced(&pooled_records(traces)?, run.config.pcf.max_draws);
    let draws = records.iter().map(TraceRecord::lmc).collect::<Result<Vec<_>>>()?;
    let table = pcf(&draws, &run.config.pcf.radii, run.config.pcf.n_mc, run.seed)?;
    write_pcf_csv(&mut run.create("pcf.csv")?, &table, &run.header())?;
    Ok(serde_json::json!({"draws": table.n_draws, "n_mc": table.n_mc, "rows": table.points.len()}))
}

fn grid_command(run: &Run, traces: &[PathBuf], res: Option<usize>) -> Result<serde_json::Value> {
    let records = evenly_spaced(&pooled_records(traces)?, run.config.grid.max_draws);
    let trace = Trace { records, ..Trace::default() };
    let res = res.unwrap_or(run.config.grid.res);
    let grid = posterior_intensity_grid(&mut run.rng(), &trace, &run.config.domain()?, res)?;
    for (k, layer) in grid.layers.iter().enumerate() {
        write_grid_csv(&mut run.create(&format!("intensity_type{k}.csv"))?, layer, res, &run.header())?;
    }
    let masses: Vec<f64> = (0..grid.layers.len()).map(|k| grid.mass(k)).collect();
    Ok(serde_json::json!({"res": res, "draws": grid.n_draws, "expected_counts": masses}))
}

/// Returns the report and whether the check passed.
fn verify_command(run: &Run, check: Check) -> Result<(serde_json::Value, bool)> {
    let mut rng = run.rng();
    let v = &run.config.verify;
    let (report, passed) = match check {
        Check::Colouring => {
            let r = verify_colouring(v.colouring_tolerance.unwrap_or(1e-10))?;
            let passed = r.passed;
            (serde_json::to_value(r)?, passed)
        }
        Check::AppendixB => {
            let c = &v.appendix_b;
            let params = SgcpParams::new(c.lambda, coxthin::gp::Kernel::exponential(c.range, 1.0)?, run.config.domain()?)?;
            let r = verify_appendix_b(&mut rng, &params, c.reps, c.grid_res, c.windows, &c.radii)?;
            let passed = r.passed(0.01);
            (serde_json::to_value(r)?, passed)
        }
        Check::AppendixC => {
            let c = &v.appendix_c;
            let mut reports = Vec::new();
            let mut passed = true;
            for &lambda in &c.lambdas {
                let params = SgcpParams::new(lambda, coxthin::gp::Kernel::exponential(c.range, 1.0)?, run.config.domain()?)?;
                let r = verify_appendix_c(&mut rng.fork(), &params, c.reps, c.grid_res, None)?;
                passed &= r.mean_log_void_z.abs() < 3.0 && r.jensen_z > 3.0;
                reports.push(r);
            }
            (serde_json::to_value(reports)?, passed)
        }
        Check::Matern3 => {
            let r = verify_matern3(&mut rng, &v.matern3)?;
            let passed = r.passed;
            (serde_json::to_value(r)?, passed)
        }
        Check::Geweke => {
            let r = geweke_test(&mut rng, &v.geweke)?;
            let passed = r.passed;
            (serde_json::to_value(r)?, passed)
        }
    };
    run.write_json(&format!("verify_{}.json", name(&check)), &report)?;
    Ok((serde_json::json!({"passed": passed, "report": report}), passed))
}

fn compare_command(run: &Run) -> Result<(serde_json::Value, bool)> {
    let c = &run.config.compare;
    let params = SgcpParams::new(c.lambda, coxthin::gp::Kernel::exponential(c.range, 1.0)?, run.config.domain()?)?;
    let r = compare_samplers_empty(&mut run.rng(), &params, &c.bdm, &c.runs)?;
    run.write_json("compare_samplers.json", &r)?;
    let flag = r.bdm_lower;
    Ok((serde_json::to_value(r)?, flag))
}

fn execute(cli: &Cli) -> Result<(serde_json::Value, bool)> {
    let run = setup(cli)?;
    let done = |v: serde_json::Value| -> Result<(serde_json::Value, bool)> {
        run.write_json("run.json", &v)?;
        Ok((v, true))
    };
    match &cli.command {
        Command::Simulate { model } => done(simulate(&run, *model)?),
        Command::Fit { model, data, type_column } => {
            done(fit_command(&run, *model, data.as_deref(), type_column.as_deref(), cli.rescale)?)
        }
        Command::Pcf { traces } => done(pcf_command(&run, traces)?),
        Command::IntensityGrid { traces, res } => done(grid_command(&run, traces, *res)?),
        Command::Verify { check } => verify_command(&run, *check),
        // the comparison itself is the result; a non-significant difference is not a failure
        Command::CompareSamplers { observed: Observed::Empty } => compare_command(&run).map(|(v, _)| (v, true)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok((summary, passed)) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            let body = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
