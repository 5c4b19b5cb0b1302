//! Experiment front end: dataset generation/ingestion, one subcommand per
//! workflow, JSON config with flag overrides, plot-ready CSV output.
//!
//! Exit codes: 0 success, 1 failed acceptance check, 2 input error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use igb_core::boosting::{run_chain, run_chain_with, BoostState};
use igb_core::config::Config;
use igb_core::dataset::{generate_sine_dataset, Dataset};
use igb_core::infinitesimal::{
    euler_integrate, lambda_sweep, long_time_diagnostics, EnsembleTracking, SweepOptions,
};
use igb_core::loss::Loss;
use igb_core::measure::{l2_norm, sup_norm, SignedAtomMeasure, Weighting, DEFAULT_CELL_BUDGET};
use igb_core::rng::tag;
use igb_core::tree::fit_regression_tree;
use igb_core::{Ensemble, RngStream as Stream};

#[derive(Parser)]
#[command(name = "igb", about = "softmax gradient-tree boosting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit replicate softmax regression trees to the centered responses and
    /// export them sampled on a grid, plus each tree's atom measure.
    FitTree {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of replicate trees.
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// Number of grid points for the sampled step functions.
        #[arg(long, default_value_t = 1000)]
        grid: usize,
    },
    /// Run the boosting chain; write the trajectory CSV and the model JSON.
    Boost {
        #[command(flatten)]
        common: CommonArgs,
        /// Continue a previously saved model up to the configured step count.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Integrate the vanishing-learning-rate ODE and report long-time
    /// diagnostics (plus the analytic relaxation check when n = 1).
    Igb {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
        /// Euler step size.
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        /// Trees per drift estimate.
        #[arg(long, default_value_t = 50)]
        b: usize,
        /// Optional non-centered constant start.
        #[arg(long)]
        f0: Option<f64>,
    },
    /// Sweep descending learning rates against a reference ODE solution and
    /// fit the log-log convergence rate.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated descending learning rates.
        #[arg(long, default_value = "0.2,0.1,0.05,0.025,0.0125")]
        lambdas: String,
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        /// Reference Euler step (default: smallest lambda / 10).
        #[arg(long)]
        h_ref: Option<f64>,
        /// Trees per reference drift estimate.
        #[arg(long, default_value_t = 200)]
        b_ref: usize,
        /// Spacing of the rescaled snapshot times.
        #[arg(long, default_value_t = 0.1)]
        snapshot_spacing: f64,
    },
    /// Decompose a saved model into its atom measure, Jordan parts and face
    /// components; write atom CSVs and a norms summary.
    Decompose {
        #[command(flatten)]
        common: CommonArgs,
        /// Model JSON produced by `boost` or `igb`.
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Softmax inverse temperature (a number, or "inf" for argmax).
    #[arg(long)]
    beta: Option<String>,
    /// Candidate splits per node.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// squared_error | binary_cross_entropy | exponential_margin
    #[arg(long)]
    loss: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generate the sine dataset: "n,sigma".
    #[arg(long, value_name = "N,SIGMA")]
    generate_sine: Option<String>,
    /// Read a headerless x1..xp,y CSV dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Min-max scale CSV features into [0,1].
    #[arg(long)]
    scale: bool,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
enum DatasetSpec {
    GenerateSine { n: usize, sigma: f64 },
    Csv { path: PathBuf, #[serde(default)] scale: bool },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct ExperimentConfig {
    #[serde(flatten)]
    config: Config,
    dataset: DatasetSpec,
    out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            config: Config::default(),
            dataset: DatasetSpec::GenerateSine { n: 100, sigma: 0.1 },
            out: PathBuf::from("out"),
        }
    }
}

fn parse_beta(s: &str) -> anyhow::Result<f64> {
    match s {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => s.parse::<f64>().context("bad --beta value"),
    }
}

fn parse_loss(s: &str) -> anyhow::Result<Loss> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .with_context(|| format!("unknown loss {s:?}"))
}

impl CommonArgs {
    fn experiment(&self) -> anyhow::Result<ExperimentConfig> {
        let mut exp = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("malformed config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            exp.config.seed = v;
        }
        if let Some(v) = self.lambda {
            exp.config.lambda = v;
        }
        if let Some(v) = &self.beta {
            exp.config.beta = parse_beta(v)?;
        }
        if let Some(v) = self.k {
            exp.config.k = v;
        }
        if let Some(v) = self.depth {
            exp.config.depth = v;
        }
        if let Some(v) = self.steps {
            exp.config.steps = v;
        }
        if let Some(v) = &self.loss {
            exp.config.loss = parse_loss(v)?;
        }
        if let Some(v) = &self.out {
            exp.out = v.clone();
        }
        if let Some(spec) = &self.generate_sine {
            let (n, sigma) = spec
                .split_once(',')
                .and_then(|(n, s)| Some((n.trim().parse().ok()?, s.trim().parse().ok()?)))
                .context("--generate-sine expects \"n,sigma\"")?;
            exp.dataset = DatasetSpec::GenerateSine { n, sigma };
        }
        if let Some(path) = &self.data {
            exp.dataset = DatasetSpec::Csv {
                path: path.clone(),
                scale: self.scale,
            };
        }
        exp.config.validate()?;
        Ok(exp)
    }
}

fn load_dataset(exp: &ExperimentConfig) -> anyhow::Result<Dataset> {
    Ok(match &exp.dataset {
        DatasetSpec::GenerateSine { n, sigma } => {
            generate_sine_dataset(*n, *sigma, exp.config.seed)?
        }
        DatasetSpec::Csv { path, scale } => {
            let file = File::open(path)
                .with_context(|| format!("cannot open dataset {}", path.display()))?;
            Dataset::from_csv(BufReader::new(file), *scale)
                .with_context(|| format!("malformed dataset {}", path.display()))?
        }
    })
}

fn config_echo(exp: &ExperimentConfig) -> String {
    serde_json::to_string(exp).expect("config serializes")
}

fn create(out_dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let path = out_dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

/// Model file written by `boost` and `igb`, read back by `--resume` and
/// `decompose`.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: ExperimentConfig,
    step: usize,
    ensemble: Ensemble,
}

fn write_atoms(
    out_dir: &Path,
    name: &str,
    measure: &SignedAtomMeasure,
    echo: &str,
) -> anyhow::Result<()> {
    let mut w = create(out_dir, name)?;
    writeln!(w, "# config: {echo}")?;
    measure.write_csv(&mut w)?;
    Ok(())
}

fn cmd_fit_tree(common: &CommonArgs, replicates: usize, grid: usize) -> anyhow::Result<()> {
    let exp = common.experiment()?;
    let data = load_dataset(&exp)?;
    if data.p() != 1 {
        // the grid export samples functions of one variable
        bail!("fit-tree grid export requires a 1-d dataset (got p = {})", data.p());
    }
    let mean = data.responses().iter().sum::<f64>() / data.n() as f64;
    let centered: Vec<f64> = data.responses().iter().map(|y| y - mean).collect();
    let root = Stream::new(exp.config.seed);
    let echo = config_echo(&exp);

    let trees: Vec<_> = (0..replicates)
        .map(|r| {
            fit_regression_tree(&data, &centered, &exp.config, root.child(tag::REPLICATION, r as u64))
        })
        .collect();
    let mut w = create(&exp.out, "fit_tree_grid.csv")?;
    writeln!(w, "# config: {echo}")?;
    writeln!(w, "# grid: {grid} equispaced points on [0,1]; one row per point")?;
    let headers: Vec<String> = (1..=replicates).map(|r| format!("tree_{r:04}")).collect();
    writeln!(w, "{},mean", headers.join(","))?;
    for g in 0..grid {
        let x = if grid > 1 { g as f64 / (grid - 1) as f64 } else { 0.0 };
        let mut row = Vec::with_capacity(replicates + 1);
        let mut sum = 0.0;
        for tree in &trees {
            let v = tree.predict(&[x])?;
            sum += v;
            row.push(format!("{v}"));
        }
        row.push(format!("{}", sum / replicates as f64));
        writeln!(w, "{}", row.join(","))?;
    }
    for (r, tree) in trees.iter().enumerate() {
        let measure = SignedAtomMeasure::from_tree(tree);
        write_atoms(&exp.out, &format!("fit_tree_atoms_{:04}.csv", r + 1), &measure, &echo)?;
    }
    Ok(())
}

fn cmd_boost(common: &CommonArgs, resume: Option<&Path>) -> anyhow::Result<()> {
    let exp = common.experiment()?;
    let data = load_dataset(&exp)?;
    let echo = config_echo(&exp);
    let (state, trajectory) = match resume {
        None => run_chain(&data, &exp.config, &[])?,
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read model {}", path.display()))?;
            let model: ModelFile = serde_json::from_str(&text)
                .with_context(|| format!("malformed model {}", path.display()))?;
            if exp.config.steps < model.step {
                bail!(
                    "configured steps {} precede the saved step {}",
                    exp.config.steps,
                    model.step
                );
            }
            let mut state = BoostState::resume(model.ensemble, &data, model.step)?;
            let remaining = exp.config.steps - model.step;
            let trajectory = run_chain_with(
                &mut state,
                &data,
                &exp.config,
                Stream::new(exp.config.seed),
                remaining,
                &[],
            )?;
            (state, trajectory)
        }
    };
    let mut w = create(&exp.out, "trajectory.csv")?;
    writeln!(w, "# config: {echo}")?;
    trajectory.write_csv(&mut w)?;
    let model = ModelFile {
        config: exp.clone(),
        step: state.step,
        ensemble: state.ensemble,
    };
    let mut w = create(&exp.out, "model.json")?;
    serde_json::to_writer_pretty(&mut w, &model)?;
    writeln!(w)?;
    Ok(())
}

/// Returns false when the n = 1 analytic relaxation check fails.
fn cmd_igb(
    common: &CommonArgs,
    t_end: f64,
    h: f64,
    b: usize,
    f0: Option<f64>,
) -> anyhow::Result<bool> {
    let exp = common.experiment()?;
    let data = load_dataset(&exp)?;
    let echo = config_echo(&exp);
    let rng = Stream::new(exp.config.seed);
    let ode = match f0 {
        None => euler_integrate(&data, &exp.config, t_end, h, b, rng, &[], EnsembleTracking::Keep)?,
        Some(f0) => igb_core::infinitesimal::euler_integrate_from_constant(
            &data,
            &exp.config,
            f0,
            t_end,
            h,
            b,
            rng,
            &[],
            EnsembleTracking::Keep,
        )?,
    };
    let mut w = create(&exp.out, "ode_trajectory.csv")?;
    writeln!(w, "# config: {echo}")?;
    ode.write_csv(&mut w)?;

    let report = long_time_diagnostics(&ode);
    let mut w = create(&exp.out, "ode_diagnostics.json")?;
    serde_json::to_writer_pretty(
        &mut w,
        &serde_json::json!({ "config": exp, "t_end": t_end, "h": h, "b": b, "report": report }),
    )?;
    writeln!(w)?;

    let model = ModelFile {
        config: exp.clone(),
        step: ode.diagnostics.len() - 1,
        ensemble: ode.final_ensemble.clone().expect("ensemble was kept"),
    };
    let mut w = create(&exp.out, "ode_model.json")?;
    serde_json::to_writer_pretty(&mut w, &model)?;
    writeln!(w)?;

    let mut ok = true;
    if data.n() == 1 && exp.config.loss == Loss::SquaredError {
        // scalar square-loss ODE: F(t) = y + (F0 - y) e^{-t}
        let y = data.response(0);
        let start = ode.sample_values[0][0];
        let mut max_err = 0.0f64;
        for (k, values) in ode.sample_values.iter().enumerate() {
            let analytic = y + (start - y) * (-(k as f64) * h).exp();
            max_err = max_err.max((values[0] - analytic).abs());
        }
        ok = max_err <= 2.0 * h;
        println!(
            "analytic-relaxation check: {} (max error {max_err:.3e}, bound {:.3e})",
            if ok { "PASS" } else { "FAIL" },
            2.0 * h
        );
    }
    Ok(ok)
}

fn cmd_sweep(
    common: &CommonArgs,
    lambdas: &str,
    t_end: f64,
    replications: usize,
    h_ref: Option<f64>,
    b_ref: usize,
    snapshot_spacing: f64,
) -> anyhow::Result<()> {
    let exp = common.experiment()?;
    let data = load_dataset(&exp)?;
    let lambdas: Vec<f64> = lambdas
        .split(',')
        .map(|tok| tok.trim().parse::<f64>().context("bad --lambdas entry"))
        .collect::<anyhow::Result<_>>()?;
    let options = SweepOptions {
        h_ref,
        b_ref,
        snapshot_spacing,
    };
    let report = lambda_sweep(&data, &exp.config, &lambdas, t_end, replications, &options)?;

    let mut w = create(&exp.out, "sweep_report.json")?;
    serde_json::to_writer_pretty(
        &mut w,
        &serde_json::json!({ "experiment": exp, "report": report }),
    )?;
    writeln!(w)?;

    let mut w = create(&exp.out, "sweep_loglog.csv")?;
    writeln!(w, "# config: {}", config_echo(&exp))?;
    writeln!(w, "lambda,median_error,log_lambda,log_median_error")?;
    for (lambda, err) in report.lambdas.iter().zip(&report.per_lambda_median_error) {
        writeln!(w, "{lambda},{err},{},{}", lambda.ln(), err.ln())?;
    }
    if let (Some(slope), Some(intercept)) = (report.slope, report.intercept) {
        println!("rate fit: slope {slope:.4}, intercept {intercept:.4}");
    }
    Ok(())
}

fn cmd_decompose(common: &CommonArgs, model_path: &Path) -> anyhow::Result<()> {
    let exp = common.experiment()?;
    let text = fs::read_to_string(model_path)
        .with_context(|| format!("cannot read model {}", model_path.display()))?;
    let model: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("malformed model {}", model_path.display()))?;
    // echo the provenance of the decomposed model, not of this invocation
    let echo = config_echo(&model.config);

    let measure = SignedAtomMeasure::from_ensemble(&model.ensemble);
    write_atoms(&exp.out, "atoms.csv", &measure, &echo)?;
    let (pos, neg) = measure.jordan_split();
    write_atoms(&exp.out, "atoms_positive.csv", &pos, &echo)?;
    write_atoms(&exp.out, "atoms_negative.csv", &neg, &echo)?;

    let faces = measure.face_decompose();
    let mut face_norms = serde_json::Map::new();
    for (j_set, part) in &faces {
        let label = if j_set.is_empty() {
            "const".to_string()
        } else {
            j_set
                .iter()
                .map(|j| (j + 1).to_string())
                .collect::<Vec<_>>()
                .join("_")
        };
        write_atoms(&exp.out, &format!("face_{label}.csv"), part, &echo)?;
        face_norms.insert(label, serde_json::json!(part.tv_norm()));
    }

    let l2 = l2_norm(&measure, Weighting::Nu).ok();
    let sup = sup_norm(&measure, DEFAULT_CELL_BUDGET).ok();
    let mut w = create(&exp.out, "norms.json")?;
    serde_json::to_writer_pretty(
        &mut w,
        &serde_json::json!({
            "config": model.config,
            "tv_norm": measure.tv_norm(),
            "tv_norm_positive": pos.tv_norm(),
            "tv_norm_negative": neg.tv_norm(),
            "l2_nu_norm": l2,
            "sup_norm": sup,
            "face_tv_norms": face_norms,
            "n_atoms": measure.n_atoms(),
        }),
    )?;
    writeln!(w)?;
    println!("tv norm: {}", measure.tv_norm());
    Ok(())
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::FitTree { common, .. }
        | Command::Boost { common, .. }
        | Command::Igb { common, .. }
        | Command::Sweep { common, .. }
        | Command::Decompose { common, .. } => common,
    };
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match &cli.command {
        Command::FitTree {
            common,
            replicates,
            grid,
        } => cmd_fit_tree(common, *replicates, *grid).map(|()| true),
        Command::Boost { common, resume } => cmd_boost(common, resume.as_deref()).map(|()| true),
        Command::Igb {
            common,
            t_end,
            h,
            b,
            f0,
        } => cmd_igb(common, *t_end, *h, *b, *f0),
        Command::Sweep {
            common,
            lambdas,
            t_end,
            replications,
            h_ref,
            b_ref,
            snapshot_spacing,
        } => cmd_sweep(
            common,
            lambdas,
            *t_end,
            *replications,
            *h_ref,
            *b_ref,
            *snapshot_spacing,
        )
        .map(|()| true),
        Command::Decompose { common, model } => cmd_decompose(common, model).map(|()| true),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
