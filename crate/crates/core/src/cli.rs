//! Command-line front end for the `nmf-rlct` binary.
//!
//! Every subcommand resolves a [`RunConfig`] from (in increasing priority) a
//! preset, a config file or a manifest, and flags; writes `manifest.json` to
//! the output directory; then computes and writes its artifacts there.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::coefficients::{lambda_gap_lower_extended, rank_scores, select_rank, to_f64, PriorShapes};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gibbs::{run_chain_with, GibbsConfig};
use crate::harness::run_experiment;
use crate::io::{self, format_sig3, DrawWriter};
use crate::model::{generate_dataset, CountDataset, CountSummary, ModelDims};
use crate::vb::{fit_summary, VBConfig};
use crate::CoefficientReport;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "nmf-rlct", version, about = "Poisson-gamma NMF: Gibbs sampling, variational Bayes and learning coefficients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a training sample from the true factors.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Run the Gibbs sampler and write the posterior mean rate matrix.
    Gibbs {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        chain: ChainArgs,
        /// Also write every retained state to draws.jsonl.
        #[arg(long)]
        save_draws: bool,
    },
    /// Fit the mean-field variational posterior.
    Vb {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        vb: VbArgs,
    },
    /// Print the exact learning coefficients for a model and prior.
    Coefficients {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        preset: PresetArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        prior: PriorArgs,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Estimate the RLCT from replicated Gibbs runs.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        preset: PresetArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[command(flatten)]
        sample: SampleArgs,
        /// Test sample size (default 100·n).
        #[arg(long)]
        n_test: Option<usize>,
        #[command(flatten)]
        chain: ChainArgs,
        /// Replicate count D.
        #[arg(long)]
        replicates: Option<usize>,
        /// Seed from which every replicate stream is derived.
        #[arg(long)]
        master_seed: Option<u64>,
    },
    /// Choose the inner dimension by penalized variational free energy.
    Select {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        truth: TruthArgs,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        vb: VbArgs,
        /// Candidate ranks, comma separated.
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config file.
    #[arg(long, value_name = "FILE", conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Replay the configuration recorded in a manifest.json.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = "NMF_RLCT_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "NMF_RLCT_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PresetArgs {
    /// Bundled configuration, e.g. table1_row2_n1000.
    #[arg(long, conflicts_with_all = ["config", "manifest"])]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Rows M of each observation.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Columns N of each observation.
    #[arg(long)]
    pub cols: Option<usize>,
    /// Inner dimension H of the model.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Non-negative rank H0 of the truth.
    #[arg(long)]
    pub true_rank: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Shape of both priors (overridden by --phi-u / --phi-v).
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub phi_u: Option<f64>,
    #[arg(long)]
    pub phi_v: Option<f64>,
    #[arg(long)]
    pub theta_u: Option<f64>,
    #[arg(long)]
    pub theta_v: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TruthArgs {
    /// Seed of the uniformly drawn true factors.
    #[arg(long)]
    pub truth_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// Sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed for generating the sample.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Read the sample from a JSON-lines dataset instead of generating it.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Retained draws K.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub chain_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct VbArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative free-energy tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub vb_seed: Option<u64>,
}

/// Record of one run, written before any computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    /// Files written to the output directory.
    pub artifacts: Vec<String>,
    pub started_at: String,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&io::read_text(path)?)
            .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.model.m, self.rows);
        set(&mut cfg.model.n, self.cols);
        set(&mut cfg.model.h, self.rank);
        set(&mut cfg.model.h0, self.true_rank);
    }
}

impl PriorArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.prior.phi_u, self.phi);
        set(&mut cfg.prior.phi_v, self.phi);
        set(&mut cfg.prior.phi_u, self.phi_u);
        set(&mut cfg.prior.phi_v, self.phi_v);
        set(&mut cfg.prior.theta_u, self.theta_u);
        set(&mut cfg.prior.theta_v, self.theta_v);
    }
}

impl TruthArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(seed) = self.truth_seed {
            match &mut cfg.truth {
                crate::harness::TruthSpec::Uniform { seed: s, .. } => *s = seed,
                _ => return Err(Error::config("--truth-seed needs a uniform truth")),
            }
        }
        Ok(())
    }
}

impl SampleArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.data.n, self.n);
        set(&mut cfg.data.seed, self.data_seed);
    }
}

impl InputArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.data.is_some() {
            cfg.data.input = self.data.clone();
        }
    }
}

impl ChainArgs {
    fn apply(&self, g: &mut GibbsConfig) {
        set(&mut g.burn_in, self.burn_in);
        set(&mut g.thin, self.thin);
        set(&mut g.draws, self.draws);
        set(&mut g.seed, self.chain_seed);
    }
}

impl VbArgs {
    fn apply(&self, v: &mut VBConfig) {
        set(&mut v.max_iters, self.max_iters);
        set(&mut v.tol, self.tol);
        set(&mut v.restarts, self.restarts);
        set(&mut v.seed, self.vb_seed);
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Gibbs { .. } => "gibbs",
            Command::Vb { .. } => "vb",
            Command::Coefficients { .. } => "coefficients",
            Command::Experiment { .. } => "experiment",
            Command::Select { .. } => "select",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Generate { common, .. }
            | Command::Gibbs { common, .. }
            | Command::Vb { common, .. }
            | Command::Coefficients { common, .. }
            | Command::Experiment { common, .. }
            | Command::Select { common, .. } => common,
        }
    }

    fn preset(&self) -> Option<&str> {
        match self {
            Command::Coefficients { preset, .. } | Command::Experiment { preset, .. } => preset.preset.as_deref(),
            _ => None,
        }
    }

    fn base_config(&self) -> Result<RunConfig> {
        let common = self.common();
        if let Some(path) = &common.manifest {
            let m = RunManifest::read(path)?;
            if m.subcommand != self.name() {
                return Err(Error::config(format!(
                    "{} records a `{}` run, not `{}`",
                    path.display(),
                    m.subcommand,
                    self.name()
                )));
            }
            return Ok(m.config);
        }
        if let Some(name) = self.preset() {
            return RunConfig::preset(name);
        }
        match &common.config {
            Some(path) => RunConfig::from_file(path),
            None => Ok(RunConfig::default()),
        }
    }

    /// Base configuration with this command's flags applied.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = self.base_config()?;
        match self {
            Command::Generate { model, truth, sample, .. } => {
                model.apply(&mut cfg);
                truth.apply(&mut cfg)?;
                sample.apply(&mut cfg);
            }
            Command::Gibbs { model, prior, truth, sample, input, chain, save_draws, .. } => {
                model.apply(&mut cfg);
                prior.apply(&mut cfg);
                truth.apply(&mut cfg)?;
                sample.apply(&mut cfg);
                input.apply(&mut cfg);
                chain.apply(&mut cfg.gibbs);
                cfg.output.save_draws |= *save_draws;
            }
            Command::Vb { model, prior, truth, sample, input, vb, .. } => {
                model.apply(&mut cfg);
                prior.apply(&mut cfg);
                truth.apply(&mut cfg)?;
                sample.apply(&mut cfg);
                input.apply(&mut cfg);
                vb.apply(&mut cfg.vb);
            }
            Command::Coefficients { model, prior, .. } => {
                model.apply(&mut cfg);
                prior.apply(&mut cfg);
            }
            Command::Experiment { model, prior, truth, sample, n_test, chain, replicates, master_seed, .. } => {
                model.apply(&mut cfg);
                prior.apply(&mut cfg);
                truth.apply(&mut cfg)?;
                sample.apply(&mut cfg);
                if n_test.is_some() {
                    cfg.data.n_test = *n_test;
                }
                chain.apply(&mut cfg.gibbs);
                set(&mut cfg.experiment.replicates, *replicates);
                set(&mut cfg.experiment.master_seed, *master_seed);
            }
            Command::Select { model, prior, truth, sample, input, vb, ranks, .. } => {
                model.apply(&mut cfg);
                prior.apply(&mut cfg);
                truth.apply(&mut cfg)?;
                sample.apply(&mut cfg);
                input.apply(&mut cfg);
                vb.apply(&mut cfg.vb);
                if let Some(r) = ranks {
                    cfg.select.ranks = r.clone();
                }
            }
        }
        let cfg = cfg.resolved();
        cfg.validate()?;
        if let Command::Select { .. } = self {
            cfg.validate_ranks()?;
        }
        Ok(cfg)
    }
}

fn artifacts(command: &str, cfg: &RunConfig) -> Vec<String> {
    let names: &[&str] = match command {
        "generate" => &["dataset.jsonl", "truth_u.csv", "truth_v.csv"],
        "gibbs" if cfg.output.save_draws => &["posterior_mean.csv", "draws.jsonl"],
        "gibbs" => &["posterior_mean.csv"],
        "vb" => &["vb_fit.json"],
        "coefficients" => &["coefficients.json"],
        "experiment" => &["result.json", "replicates.csv", "summary.txt", "timings.json"],
        "select" => &["selection.json"],
        _ => &[],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn seeds(command: &str, cfg: &RunConfig) -> BTreeMap<String, u64> {
    let mut s = BTreeMap::new();
    if let crate::harness::TruthSpec::Uniform { seed, .. } = cfg.truth {
        if command != "coefficients" {
            s.insert("truth".to_string(), seed);
        }
    }
    let generated = cfg.data.input.is_none();
    match command {
        "generate" => {
            s.insert("data".into(), cfg.data.seed);
        }
        "gibbs" => {
            if generated {
                s.insert("data".into(), cfg.data.seed);
            }
            s.insert("chain".into(), cfg.gibbs.seed);
        }
        "vb" | "select" => {
            if generated {
                s.insert("data".into(), cfg.data.seed);
            }
            s.insert("vb".into(), cfg.vb.seed);
        }
        "experiment" => {
            s.insert("master".into(), cfg.experiment.master_seed);
        }
        _ => {}
    }
    s
}

/// Parses arguments and runs, writing human-readable output to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let command = cli.command;
    let cfg = command.resolve_config()?;
    let common = command.common().clone();
    let name = command.name();
    let manifest = RunManifest {
        subcommand: name.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: seeds(name, &cfg),
        artifacts: artifacts(name, &cfg),
        config: cfg.clone(),
        started_at: chrono::Utc::now().to_rfc3339(),
    };
    io::write_json(&common.out.join(MANIFEST_FILE), &manifest)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(Error::config("--jobs must be at least 1"));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let json = matches!(command, Command::Coefficients { json: true, .. });
    let text = pool.install(|| match name {
        "generate" => cmd_generate(&cfg, &common.out),
        "gibbs" => cmd_gibbs(&cfg, &common.out),
        "vb" => cmd_vb(&cfg, &common.out),
        "coefficients" => cmd_coefficients(&cfg, &common.out, json),
        "experiment" => cmd_experiment(&cfg, &common.out),
        _ => cmd_select(&cfg, &common.out),
    })?;
    write!(stdout, "{text}").map_err(|source| Error::Io { path: "<stdout>".into(), source })
}

/// The configured dataset: read from `data.input` or generated from the truth.
pub fn load_dataset(cfg: &RunConfig) -> Result<CountDataset> {
    let dims = cfg.dims()?;
    let data = match &cfg.data.input {
        Some(path) => io::read_dataset_jsonl(path)?,
        None => generate_dataset(&cfg.truth.resolve(&dims)?, cfg.data.n, cfg.data.seed)?,
    };
    if data.shape() != (dims.m, dims.n) {
        return Err(Error::config(format!(
            "observations are {:?} but the model expects {}×{}",
            data.shape(),
            dims.m,
            dims.n
        )));
    }
    Ok(data)
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let truth = cfg.truth.resolve(&cfg.dims()?)?;
    let data = generate_dataset(&truth, cfg.data.n, cfg.data.seed)?;
    io::write_dataset_jsonl(&out.join("dataset.jsonl"), &data)?;
    io::write_matrix_csv(&out.join("truth_u.csv"), &truth.u)?;
    io::write_matrix_csv(&out.join("truth_v.csv"), &truth.v)?;
    Ok(format!("wrote {} observations to {}\n", data.len(), out.join("dataset.jsonl").display()))
}

pub fn cmd_gibbs(cfg: &RunConfig, out: &Path) -> Result<String> {
    let dims = cfg.dims()?;
    let data = load_dataset(cfg)?;
    let mut writer = if cfg.output.save_draws { Some(DrawWriter::create(&out.join("draws.jsonl"))?) } else { None };
    let mut sum = ndarray::Array2::<f64>::zeros((dims.m, dims.n));
    let mut write_err = None;
    run_chain_with(&data.summary(), &cfg.hyper()?, &dims, &cfg.gibbs, |_, state| {
        sum += &state.rates();
        if let (Some(w), None) = (writer.as_mut(), write_err.as_ref()) {
            if let Err(e) = w.write(state) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    let mean = sum / cfg.gibbs.draws as f64;
    io::write_matrix_csv(&out.join("posterior_mean.csv"), &mean)?;
    Ok(format!("{} draws retained after {} sweeps\n", cfg.gibbs.draws, cfg.gibbs.total_sweeps()))
}

pub fn cmd_vb(cfg: &RunConfig, out: &Path) -> Result<String> {
    let data = load_dataset(cfg)?;
    let fit = fit_summary(&data.summary(), &cfg.hyper()?, &cfg.dims()?, &cfg.vb)?;
    io::write_json(&out.join("vb_fit.json"), &fit)?;
    Ok(format!(
        "variational free energy {} after {} passes (converged: {}, restart {})\n",
        io::format_real(fit.free_energy),
        fit.trajectory.len() - 1,
        fit.converged,
        fit.restart
    ))
}

pub fn cmd_coefficients(cfg: &RunConfig, out: &Path, json: bool) -> Result<String> {
    let report = CoefficientReport::compute(&cfg.dims()?, &cfg.hyper()?)?;
    io::write_json(&out.join("coefficients.json"), &report)?;
    if json {
        Ok(serde_json::to_string_pretty(&report).map_err(|e| Error::numeric(e.to_string()))? + "\n")
    } else {
        Ok(report.table())
    }
}

#[derive(Serialize)]
struct Timings {
    total_seconds: f64,
    replicate_seconds: Vec<f64>,
}

pub fn cmd_experiment(cfg: &RunConfig, out: &Path) -> Result<String> {
    let e = cfg.experiment()?;
    let start = Instant::now();
    let result = run_experiment(&e)?;
    let timings = Timings { total_seconds: start.elapsed().as_secs_f64(), replicate_seconds: result.wall_clock.clone() };
    io::write_json(&out.join("result.json"), &result)?;
    io::write_replicates_csv(&out.join("replicates.csv"), &result.replicates)?;
    let summary = summary_table(&result);
    io::write_text(&out.join("summary.txt"), &summary)?;
    io::write_json(&out.join("timings.json"), &timings)?;
    if !result.failed.is_empty() {
        log::warn!("{} replicate(s) excluded", result.failed.len());
    }
    Ok(summary)
}

/// Table-style row at three significant digits.
pub fn summary_table(r: &crate::ExperimentResult) -> String {
    let c = &r.config;
    let header = ["phi_U", "phi_V", "n", "D", "lambda_vb", "lambda_upper", "lambda_hat", "stderr", "upper-hat"];
    let row = [
        format_sig3(c.hyper.phi_u),
        format_sig3(c.hyper.phi_v),
        c.n.to_string(),
        r.replicates.len().to_string(),
        format_sig3(r.lambda_vb),
        format_sig3(r.lambda_upper),
        format_sig3(r.lambda_hat),
        format_sig3(r.stderr),
        format_sig3(r.margin()),
    ];
    let widths: Vec<usize> = header.iter().zip(&row).map(|(h, v)| h.len().max(v.len())).collect();
    let line = |cells: Vec<String>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ") + "\n"
    };
    line(header.iter().map(|s| s.to_string()).collect()) + &line(row.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCandidate {
    pub rank: usize,
    /// `None` stands for +∞ (rank 0 with any positive count).
    pub vb_free_energy: Option<f64>,
    pub gap_coefficient: f64,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub n: usize,
    pub candidates: Vec<RankCandidate>,
    pub selected: usize,
}

/// F̄_n at inner dimension `rank`; rank 0 means every rate is zero.
pub fn free_energy_at_rank(
    summary: &CountSummary,
    cfg: &RunConfig,
    rank: usize,
    vb: &VBConfig,
) -> Result<f64> {
    if rank == 0 {
        return Ok(if summary.totals.iter().any(|&c| c > 0) { f64::INFINITY } else { summary.log_factorial_sum });
    }
    let base = cfg.dims()?;
    let dims = ModelDims { h: rank, h0: 0, ..base };
    Ok(fit_summary(summary, &cfg.hyper()?, &dims, vb)?.free_energy)
}

pub fn select_from_data(data: &CountDataset, cfg: &RunConfig) -> Result<Selection> {
    let dims = cfg.dims()?;
    let shapes = PriorShapes::try_from(&cfg.hyper()?)?;
    let summary = data.summary();
    let mut energies = BTreeMap::new();
    for &rank in &cfg.select.ranks {
        energies.insert(rank, free_energy_at_rank(&summary, cfg, rank, &cfg.vb)?);
    }
    let scores = rank_scores(&energies, &dims, &shapes, data.len())?;
    let selected = select_rank(&energies, &dims, &shapes, data.len())?;
    let finite = |x: f64| x.is_finite().then_some(x);
    let candidates = energies
        .iter()
        .map(|(&rank, &f)| {
            Ok(RankCandidate {
                rank,
                vb_free_energy: finite(f),
                gap_coefficient: to_f64(lambda_gap_lower_extended(&dims.with_h0(rank), &shapes)?),
                score: finite(scores[&rank]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Selection { n: data.len(), candidates, selected })
}

pub fn cmd_select(cfg: &RunConfig, out: &Path) -> Result<String> {
    let data = load_dataset(cfg)?;
    let selection = select_from_data(&data, cfg)?;
    io::write_json(&out.join("selection.json"), &selection)?;
    Ok(format!("selected rank {}\n", selection.selected))
}
