//! Command-line workbench: run single pipeline steps against files on disk,
//! or whole config-driven experiments and canned reproductions.
//!
//! The step commands (`generate`, `sample`, `fit-loss`, `train`, `evaluate`)
//! exist for poking at one stage at a time; they fit losses for every
//! instance in the file. The `experiment` command is the strict version:
//! per-trial regenerated datasets and test instances kept out of loss
//! fitting. Exit codes: 0 success, 2 config/input error, 3 solver or numeric
//! failure, 4 a reproduction missed its thresholds, 1 anything else.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use egl_lab::datagen::{
    generate, load_dataset, model_input_width, model_inputs, save_dataset, split_dataset, Dataset,
    DatasetSpec, Domain, SplitMode,
};
use egl_lab::harness::{
    init_thread_pool_from_env, load_experiment_config, make_problem, render_outcome,
    render_timing_table, run_experiment, run_repro, step_timing_summary, ExperimentReport,
    ReproName,
};
use egl_lab::losses::{
    fit_fbp, fit_lodl_dataset, induced_params, FbpConfig, FbpInstance, FitConfig, LearnedLossTable,
    LossFamily, LossParams,
};
use egl_lab::nn::{predict_instance, train, Mlp, MseLoss, TrainConfig, TrainExample};
use egl_lab::pto::{normalized_dq, Split};
use egl_lab::sampling::{
    build_loss_dataset, load_loss_dataset, sample_dataset, save_loss_dataset, BuildOptions,
    InstanceSamples, SamplerConfig, SamplerKind,
};
use egl_lab::seed::derive_seed;
use egl_lab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "egl-lab",
    version,
    about = "Learned task-specific losses for predict-then-optimize pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset and split it
    Generate(GenerateArgs),
    /// Step 1 + 2: sample candidate predictions and price them with the solver
    Sample(SampleArgs),
    /// Step 3: fit a convex loss per instance (or a feature-based network)
    FitLoss(FitLossArgs),
    /// Step 4: train a predictive model on learned losses or plain MSE
    Train(TrainArgs),
    /// Score a trained model's normalized decision quality on one split
    Evaluate(EvaluateArgs),
    /// Config-driven multi-trial experiments
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Run a named desk-scale reproduction bundle
    Repro(ReproArgs),
    /// Print the per-step timing table of a saved experiment report
    Timing(TimingArgs),
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Run every trial in a config file and write the aggregated report
    Run(ExperimentRunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// cubic, cubic_hard, webadv, or portfolio
    #[arg(long)]
    domain: Domain,
    #[arg(long)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Resources per cubic instance
    #[arg(long, default_value_t = 50)]
    resources: usize,
    /// Websites per web-advertising instance
    #[arg(long, default_value_t = 5)]
    sites: usize,
    /// Users per web-advertising instance
    #[arg(long, default_value_t = 10)]
    users: usize,
    /// Stocks per portfolio instance
    #[arg(long, default_value_t = 50)]
    stocks: usize,
    /// Return-history window per stock
    #[arg(long, default_value_t = 8)]
    history: usize,
    /// Train/validation/test fractions
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.15, 0.15])]
    fractions: Vec<f64>,
    /// iid or temporal (defaults to temporal for portfolio, iid otherwise)
    #[arg(long)]
    split: Option<String>,
    /// Directory the dataset files go into
    #[arg(long)]
    out: PathBuf,
    /// Basename for the dataset files
    #[arg(long)]
    name: String,
}

#[derive(Args)]
struct SampleArgs {
    /// Directory holding the dataset
    #[arg(long)]
    data: PathBuf,
    /// Dataset basename
    #[arg(long)]
    name: String,
    /// gaussian or model_based
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 32)]
    samples: usize,
    /// Gaussian noise scale
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Models trained for checkpoint sampling
    #[arg(long, default_value_t = 5)]
    num_models: usize,
    /// Learning rate of the checkpoint-sampling models
    #[arg(long, default_value_t = 0.1)]
    sampler_lr: f64,
    /// Total update budget across checkpoint-sampling models
    #[arg(long, default_value_t = 50_000)]
    budget: usize,
    /// Also take each model's untrained initialization as a checkpoint
    #[arg(long)]
    include_step_zero: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden widths of the checkpoint-sampling models
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<usize>,
    /// Skip the one-hot user-identity feature block (webadv)
    #[arg(long)]
    no_one_hot: bool,
    /// Directory the priced loss dataset goes into
    #[arg(long)]
    out: PathBuf,
    /// Basename for the loss-dataset files
    #[arg(long)]
    out_name: String,
}

#[derive(Args)]
struct FitLossArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    name: String,
    /// Directory holding the priced loss dataset
    #[arg(long)]
    samples_dir: PathBuf,
    /// Loss-dataset basename
    #[arg(long)]
    samples_name: String,
    /// mse, lz_scalar, weighted_mse, quadratic, directed_weighted_mse, directed_quadratic
    #[arg(long)]
    family: LossFamily,
    /// Fit one feature-based parameter network instead of per-instance losses
    #[arg(long)]
    fbp: bool,
    #[arg(long, default_value_t = 0.01)]
    w_min: f64,
    /// Per-instance fit learning rate
    #[arg(long, default_value_t = 0.05)]
    fit_lr: f64,
    /// Per-instance fit steps
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// Parameter-network hidden widths (--fbp)
    #[arg(long, value_delimiter = ',', default_values_t = [500, 500, 500])]
    hidden: Vec<usize>,
    /// Parameter-network learning rate (--fbp)
    #[arg(long, default_value_t = 1e-3)]
    fbp_lr: f64,
    /// Parameter-network epochs (--fbp)
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Parameter-network batch size (--fbp)
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Early-stopping patience in epochs (--fbp)
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_one_hot: bool,
    /// Fitted loss-table file (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    name: String,
    /// Loss-table file from fit-loss; omit to train on plain MSE
    #[arg(long)]
    losses: Option<PathBuf>,
    /// Predictive-model hidden widths (empty = linear)
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Hard cap on gradient updates
    #[arg(long)]
    max_updates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_one_hot: bool,
    /// Model checkpoint file (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    name: String,
    /// Model checkpoint from train
    #[arg(long)]
    model: PathBuf,
    /// train, validation, or test
    #[arg(long, default_value = "test")]
    eval_split: String,
    #[arg(long, default_value_t = 100)]
    baseline_draws: usize,
    /// Seed stream for the uniform-baseline draws
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_one_hot: bool,
}

#[derive(Args)]
struct ExperimentRunArgs {
    /// Experiment config file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Report file; defaults to the config path with a .report.json suffix
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproArgs {
    /// table1_cubic, table1_hard, table2_ablation, table4_mse, counterexample
    name: ReproName,
    /// Directory the JSON and text artifacts go into
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TimingArgs {
    /// Experiment report written by `experiment run`
    report: PathBuf,
}

/// On-disk format tying fit-loss to train: one fitted loss per instance, in
/// dataset order.
#[derive(serde::Serialize, serde::Deserialize)]
struct LossTableFile {
    family: LossFamily,
    params: Vec<LossParams>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    init_thread_pool_from_env()?;
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Sample(args) => cmd_sample(args),
        Command::FitLoss(args) => cmd_fit_loss(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment {
            action: ExperimentAction::Run(args),
        } => cmd_experiment_run(args),
        Command::Repro(args) => cmd_repro(args),
        Command::Timing(args) => cmd_timing(args),
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "validation" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(Error::Input(format!(
            "unknown split '{other}' (expected train, validation, or test)"
        ))),
    }
}

fn parse_split_mode(s: &str) -> Result<SplitMode> {
    match s {
        "iid" => Ok(SplitMode::Iid),
        "temporal" => Ok(SplitMode::Temporal),
        other => Err(Error::Input(format!(
            "unknown split mode '{other}' (expected iid or temporal)"
        ))),
    }
}

fn parse_sampler_kind(s: &str) -> Result<SamplerKind> {
    match s {
        "gaussian" => Ok(SamplerKind::Gaussian),
        "model_based" => Ok(SamplerKind::ModelBased),
        other => Err(Error::Input(format!(
            "unknown sampler kind '{other}' (expected gaussian or model_based)"
        ))),
    }
}

fn split_counts(dataset: &Dataset) -> (usize, usize, usize) {
    let count = |s: Split| dataset.instances.iter().filter(|i| i.split == s).count();
    (
        count(Split::Train),
        count(Split::Validation),
        count(Split::Test),
    )
}

/// Feature rows, labels, and dataset-position loss index for every instance
/// of one split, so positions line up with a loss table fit in file order.
fn split_examples(dataset: &Dataset, split: Split, one_hot: bool) -> Vec<TrainExample> {
    dataset
        .instances
        .iter()
        .enumerate()
        .filter(|(_, instance)| instance.split == split)
        .map(|(position, instance)| TrainExample {
            features: model_inputs(&dataset.spec, instance, one_hot),
            labels: instance.labels.clone(),
            loss_index: position,
        })
        .collect()
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut spec = match args.domain {
        Domain::Cubic => DatasetSpec::cubic(args.instances, args.resources, args.seed),
        Domain::CubicHard => DatasetSpec::cubic_hard(args.instances, args.resources, args.seed),
        Domain::Webadv => DatasetSpec::webadv(args.instances, args.sites, args.users, args.seed),
        Domain::Portfolio => {
            DatasetSpec::portfolio(args.instances, args.stocks, args.history, args.seed)
        }
    };
    spec.split_fractions = [args.fractions[0], args.fractions[1], args.fractions[2]];
    let mode = match &args.split {
        Some(s) => parse_split_mode(s)?,
        None if args.domain == Domain::Portfolio => SplitMode::Temporal,
        None => SplitMode::Iid,
    };
    let dataset = generate(&spec)?;
    let dataset = split_dataset(dataset, spec.split_fractions, mode, derive_seed(args.seed, 1))?;
    save_dataset(&dataset, &args.out, &args.name)?;
    let (n_train, n_val, n_test) = split_counts(&dataset);
    println!(
        "wrote {} ({} instances, dim {}, split {}/{}/{}) to {}",
        args.name,
        dataset.instances.len(),
        spec.dim(),
        n_train,
        n_val,
        n_test,
        args.out.display(),
    );
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, &args.name)?;
    let problem = make_problem(&dataset)?;
    let config = SamplerConfig {
        kind: parse_sampler_kind(&args.kind)?,
        samples_per_instance: args.samples,
        sigma: args.sigma,
        num_models: args.num_models,
        learning_rate: args.sampler_lr,
        update_budget: args.budget,
        include_step_zero: args.include_step_zero,
        seed: args.seed,
    };
    let one_hot = !args.no_one_hot;
    let mut widths = vec![model_input_width(&dataset.spec, one_hot)];
    widths.extend_from_slice(&args.hidden);
    widths.push(1);

    let mut entries = sample_dataset(&dataset, &widths, one_hot, &config)?;
    let refs: Vec<_> = dataset.instances.iter().collect();
    let timing = build_loss_dataset(&mut entries, &refs, problem.as_ref(), &BuildOptions::default())?;
    save_loss_dataset(
        &entries,
        &config,
        problem.name(),
        dataset.spec.dim(),
        &args.out,
        &args.out_name,
    )?;
    println!(
        "priced {} candidates per instance across {} instances: {} solver calls in {:.2}s",
        args.samples,
        entries.len(),
        timing.num_solves,
        timing.wall_seconds,
    );
    Ok(())
}

fn cmd_fit_loss(args: FitLossArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, &args.name)?;
    let (entries, _) = load_loss_dataset(&args.samples_dir, &args.samples_name)?;
    check_alignment(&dataset, &entries)?;
    let one_hot = !args.no_one_hot;

    let params: Vec<LossParams> = if args.fbp {
        let fbp_instances: Vec<FbpInstance> = dataset
            .instances
            .iter()
            .zip(&entries)
            .map(|(instance, entry)| FbpInstance {
                labels: instance.labels.clone(),
                features: model_inputs(&dataset.spec, instance, one_hot),
                samples: entry.samples.clone(),
            })
            .collect();
        let is_val: Vec<bool> = dataset
            .instances
            .iter()
            .map(|i| i.split == Split::Validation)
            .collect();
        let train_set: Vec<FbpInstance> = fbp_instances
            .iter()
            .zip(&is_val)
            .filter(|(_, v)| !**v)
            .map(|(i, _)| i.clone())
            .collect();
        let val_set: Vec<FbpInstance> = fbp_instances
            .iter()
            .zip(&is_val)
            .filter(|(_, v)| **v)
            .map(|(i, _)| i.clone())
            .collect();
        let config = FbpConfig {
            hidden_widths: args.hidden.clone(),
            w_min: args.w_min,
            learning_rate: args.fbp_lr,
            epochs: args.epochs,
            batch_size: args.batch,
            patience: args.patience,
            seed: args.seed,
        };
        let fit = fit_fbp(&train_set, &val_set, args.family, &config)?;
        let val_text = fit
            .val_fit_mse
            .map(|v| format!("{v:.4e}"))
            .unwrap_or_else(|| "n/a (no validation instances)".into());
        println!(
            "parameter network fit: train MSE {:.4e}, val MSE {val_text}, best epoch {}",
            fit.train_fit_mse, fit.best_epoch,
        );
        fbp_instances
            .iter()
            .map(|fi| induced_params(&fit.network, &fi.features))
            .collect::<Result<_>>()?
    } else {
        let labels: Vec<&[f64]> = dataset
            .instances
            .iter()
            .map(|i| i.labels.as_slice())
            .collect();
        let config = FitConfig {
            w_min: args.w_min,
            learning_rate: args.fit_lr,
            steps: args.steps,
            seed: args.seed,
        };
        let fitted = fit_lodl_dataset(&entries, &labels, args.family, &config)?;
        let mean_fit_mse =
            fitted.iter().map(|f| f.fit_mse).sum::<f64>() / fitted.len().max(1) as f64;
        println!(
            "fit {} per-instance losses: mean fit MSE {:.4e}",
            fitted.len(),
            mean_fit_mse,
        );
        fitted.into_iter().map(|f| f.params).collect()
    };

    let file = LossTableFile {
        family: args.family,
        params,
    };
    std::fs::write(&args.out, serde_json::to_string(&file)?)?;
    println!("wrote loss table to {}", args.out.display());
    Ok(())
}

fn check_alignment(dataset: &Dataset, entries: &[InstanceSamples]) -> Result<()> {
    if entries.len() != dataset.instances.len() {
        return Err(Error::Input(format!(
            "loss dataset has {} instances, dataset has {}",
            entries.len(),
            dataset.instances.len()
        )));
    }
    for (instance, entry) in dataset.instances.iter().zip(entries) {
        if instance.instance_id != entry.instance_id {
            return Err(Error::Input(format!(
                "loss dataset is misaligned: expected {}, found {}",
                instance.instance_id, entry.instance_id
            )));
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, &args.name)?;
    let one_hot = !args.no_one_hot;
    let train_examples = split_examples(&dataset, Split::Train, one_hot);
    let val_examples = split_examples(&dataset, Split::Validation, one_hot);
    if train_examples.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }

    let mut widths = vec![model_input_width(&dataset.spec, one_hot)];
    widths.extend_from_slice(&args.hidden);
    widths.push(1);
    let mut model = Mlp::new(&widths, args.seed)?;
    let config = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        max_updates: args.max_updates,
        patience: args.patience,
        seed: derive_seed(args.seed, 1),
        ..TrainConfig::default()
    };

    let history = match &args.losses {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
            let file: LossTableFile = serde_json::from_str(&raw)?;
            let dims: Vec<usize> = dataset.instances.iter().map(|i| i.dim()).collect();
            let table = LearnedLossTable::new(file.params, &dims)?;
            println!("training on learned {} losses", file.family);
            train(&mut model, &train_examples, &val_examples, &table, &config)?
        }
        None => {
            println!("training on plain MSE");
            train(&mut model, &train_examples, &val_examples, &MseLoss, &config)?
        }
    };

    model.save_checkpoint(&args.out)?;
    let last = |curve: &[f64]| curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {:?} model: {} updates, best epoch {}, final train loss {:.4e}, val loss {:.4e}",
        widths,
        history.updates,
        history.best_epoch,
        last(&history.train_loss),
        last(&history.val_loss),
    );
    println!("wrote checkpoint to {}", args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, &args.name)?;
    let split = parse_split(&args.eval_split)?;
    let model = Mlp::load_checkpoint(&args.model)?;
    let problem = make_problem(&dataset)?;
    let one_hot = !args.no_one_hot;

    let mut dq_total = 0.0;
    let mut mse_total = 0.0;
    let mut count = 0usize;
    for (position, instance) in dataset.instances.iter().enumerate() {
        if instance.split != split {
            continue;
        }
        let inputs = model_inputs(&dataset.spec, instance, one_hot);
        let predictions = predict_instance(&model, &inputs)?;
        dq_total += normalized_dq(
            problem.as_ref(),
            &predictions,
            &instance.labels,
            derive_seed(args.seed, position as u64),
            args.baseline_draws,
        )?;
        mse_total += predictions
            .iter()
            .zip(&instance.labels)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / predictions.len() as f64;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Input(format!("{} split has no instances", args.eval_split)));
    }
    println!(
        "{} on {} ({} instances): mean normalized DQ {:+.4}, mean MSE {:.4e}",
        args.model.display(),
        args.eval_split,
        count,
        dq_total / count as f64,
        mse_total / count as f64,
    );
    Ok(())
}

fn cmd_experiment_run(args: ExperimentRunArgs) -> Result<()> {
    let config = load_experiment_config(&args.config)?;
    let report = run_experiment(&config)?;
    let out = args
        .out
        .unwrap_or_else(|| report_path_for(&args.config));
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    println!("{}", report.one_line_summary());
    print!(
        "{}",
        render_timing_table(&config.name, &step_timing_summary(&report))
    );
    println!("wrote report to {}", out.display());
    Ok(())
}

fn report_path_for(config_path: &Path) -> PathBuf {
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into());
    config_path.with_file_name(format!("{stem}.report.json"))
}

fn cmd_repro(args: ReproArgs) -> Result<()> {
    let outcome = run_repro(args.name, &args.out)?;
    print!("{}", render_outcome(&outcome));
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }
    if !outcome.all_pass() {
        let failed: Vec<&str> = outcome
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.label.as_str())
            .collect();
        return Err(Error::Acceptance(format!(
            "{}: {} of {} checks failed ({})",
            outcome.name,
            failed.len(),
            outcome.checks.len(),
            failed.join("; ")
        )));
    }
    Ok(())
}

fn cmd_timing(args: TimingArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.report)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", args.report.display())))?;
    let report: ExperimentReport = serde_json::from_str(&raw)?;
    print!(
        "{}",
        render_timing_table(&report.config.name, &step_timing_summary(&report))
    );
    Ok(())
}
