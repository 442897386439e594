//! Command-line front end: synthetic data generation, adaptation runs,
//! ablations, sweeps and evaluation of saved models.
//!
//! Every subcommand is a plain function taking its parsed arguments and
//! returning the text to print, so the binary stays a thin shell.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use subalign::data::{self, generate_shift_instance, ShiftSpec};
use subalign::trainer::{self, phi_dynamics, ModelDocument, ReportDocument};
use subalign::{Error, FeatureDataset, LossWeights, Mode, Result, RunReport, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "subalign", version, about = "Subspace alignment as an auxiliary task for unsupervised domain adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic source/target/test triple as CSV files.
    Synth(SynthArgs),
    /// Run one adaptation and write its report.
    Adapt(AdaptArgs),
    /// Run every ablation mode with shared seeds.
    Ablate(RunArgs),
    /// Re-run adaptation on subsamples of the target training data.
    SweepTargetSize(SweepTargetArgs),
    /// Re-run adaptation with different ensemble sizes.
    SweepEnsemble(SweepEnsembleArgs),
    /// Evaluate a saved model on a labeled CSV file.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Directory receiving source.csv, target.csv and test.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub intrinsic_dim: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub test_samples_per_class: Option<usize>,
    /// Rotation angle in degrees.
    #[arg(long)]
    pub angle: Option<f64>,
    #[arg(long)]
    pub translation: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub in_plane_spread: Option<f64>,
    #[arg(long)]
    pub class_separation: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SynthArgs {
    pub fn spec(&self) -> ShiftSpec {
        let d = ShiftSpec::default();
        ShiftSpec {
            class_count: self.classes.unwrap_or(d.class_count),
            ambient_dim: self.dim.unwrap_or(d.ambient_dim),
            intrinsic_dim: self.intrinsic_dim.unwrap_or(d.intrinsic_dim),
            samples_per_class: self.samples_per_class.unwrap_or(d.samples_per_class),
            test_samples_per_class: self.test_samples_per_class.unwrap_or(d.test_samples_per_class),
            rotation_angle_degrees: self.angle.unwrap_or(d.rotation_angle_degrees),
            translation_magnitude: self.translation.unwrap_or(d.translation_magnitude),
            noise_sigma: self.sigma.unwrap_or(d.noise_sigma),
            in_plane_spread: self.in_plane_spread.unwrap_or(d.in_plane_spread),
            class_separation: self.class_separation.unwrap_or(d.class_separation),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

/// Training overrides. Unset flags fall back to the config file, then to the
/// built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    /// JSON file with `TrainConfig` fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training mode: a1..a5, or no-adapt, primary-only, independent, joint, alternating.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Subspace dimension [default: round(0.39·D)].
    #[arg(long)]
    pub subspace_dim: Option<usize>,
    /// Outer iterations [default: 10].
    #[arg(long)]
    pub n_iter: Option<usize>,
    /// Classifier steps per outer iteration [default: 100].
    #[arg(long)]
    pub t1: Option<usize>,
    /// Alignment steps per outer iteration [default: 100].
    #[arg(long)]
    pub t2: Option<usize>,
    /// Mini-batch size [default: 512].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fraction of each domain used for classifier updates [default: 0.8].
    #[arg(long)]
    pub split_fraction: Option<f64>,
    /// Training seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of bootstrapped alignment maps [default: 1].
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    /// Stop when the alignment step norm falls below this; 0 disables [default: 0].
    #[arg(long)]
    pub early_stop_tol: Option<f64>,
    /// Target entropy weight in the classifier loss [default: 0.1].
    #[arg(long)]
    pub lambda_c: Option<f64>,
    /// Class-balance weight in the classifier loss [default: 0.1].
    #[arg(long)]
    pub lambda_cb: Option<f64>,
    /// Target entropy weight in the alignment loss [default: 0.1].
    #[arg(long)]
    pub gamma_c: Option<f64>,
    /// Class-balance weight in the alignment loss [default: 0.1].
    #[arg(long)]
    pub gamma_cb: Option<f64>,
    /// Source pre-training steps [default: 500].
    #[arg(long)]
    pub warmup_steps: Option<usize>,
    /// Pre-training learning rate [default: 0.01].
    #[arg(long)]
    pub warmup_lr: Option<f64>,
    /// Classifier learning rate [default: 1e-4].
    #[arg(long)]
    pub primary_lr: Option<f64>,
    /// Classifier momentum [default: 0.9].
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Alignment (Adam) learning rate [default: 1e-3].
    #[arg(long)]
    pub aux_lr: Option<f64>,
}

impl TrainOverrides {
    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => serde_json::from_reader(BufReader::new(open(path)?))?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.subspace_dim {
            c.subspace_dim = Some(v);
        }
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { c.$target = v; })*
            };
        }
        set!(
            n_iter => n_iter, t1 => t1, t2 => t2, batch_size => batch_size,
            split_fraction => split_fraction, seed => seed, ensemble_size => ensemble_size,
            early_stop_tol => early_stop_tol, warmup_steps => warmup_steps,
            warmup_lr => warmup_learning_rate, primary_lr => primary_learning_rate,
            momentum => momentum, aux_lr => aux_learning_rate,
        );
        let w: &mut LossWeights = &mut c.weights;
        for (flag, slot) in [
            (self.lambda_c, &mut w.lambda_c),
            (self.lambda_cb, &mut w.lambda_cb),
            (self.gamma_c, &mut w.gamma_c),
            (self.gamma_cb, &mut w.gamma_cb),
        ] {
            if let Some(v) = flag {
                *slot = v;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Labeled source CSV.
    #[arg(long)]
    pub source: PathBuf,
    /// Target CSV; a label column, if present, is ignored.
    #[arg(long)]
    pub target: PathBuf,
    /// Labeled target test CSV used for reporting accuracy.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainOverrides,
    /// Where to write the report; nothing is written when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepTargetArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Fractions of the target training data, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.7, 1.0])]
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepEnsembleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Ensemble sizes, comma separated.
    #[arg(long = "sizes", value_delimiter = ',', default_values_t = [1, 3, 5])]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Model JSON, or a report JSON written by `adapt`.
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled CSV to evaluate on.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Adapt(a) => cmd_adapt(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::SweepTargetSize(a) => cmd_sweep_target_size(a),
        Command::SweepEnsemble(a) => cmd_sweep_ensemble(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Opens `path`, naming it in the error when that fails.
fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn has_label_column(path: &Path) -> Result<bool> {
    let mut header = String::new();
    BufReader::new(open(path)?).read_line(&mut header)?;
    Ok(header.trim_end().rsplit(',').next() == Some("label"))
}

pub fn load_labeled(path: &Path) -> Result<FeatureDataset> {
    open(path)?;
    data::load_csv(path, true)
}

/// Loads features, dropping a label column when the file has one.
pub fn load_unlabeled(path: &Path) -> Result<FeatureDataset> {
    let labeled = has_label_column(path)?;
    Ok(data::load_csv::<f64>(path, labeled)?.without_labels())
}

struct Inputs {
    source: FeatureDataset,
    target: FeatureDataset,
    test: Option<FeatureDataset>,
}

fn load_inputs(d: &DataArgs) -> Result<Inputs> {
    Ok(Inputs {
        source: load_labeled(&d.source)?,
        target: load_unlabeled(&d.target)?,
        test: d.test.as_deref().map(load_labeled).transpose()?,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn percent(x: Option<f64>) -> String {
    x.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String> {
    let spec = args.spec();
    let inst = generate_shift_instance::<f64>(&spec)?;
    fs::create_dir_all(&args.out_dir)?;
    data::save_csv(&inst.source, args.out_dir.join("source.csv"))?;
    data::save_csv(&inst.target.without_labels(), args.out_dir.join("target.csv"))?;
    if let Some(test) = &inst.target_test {
        data::save_csv(test, args.out_dir.join("test.csv"))?;
    }
    let rotation_shift = inst
        .rotation
        .indexed_iter()
        .map(|((i, j), &r)| (r - if i == j { 1.0 } else { 0.0 }).powi(2))
        .sum::<f64>()
        .sqrt();
    let translation_shift = inst.translation.dot(&inst.translation).sqrt();
    let mut out = String::new();
    writeln!(out, "classes: {}", spec.class_count).unwrap();
    writeln!(out, "ambient dim: {}", spec.ambient_dim).unwrap();
    writeln!(out, "source rows: {}", inst.source.len()).unwrap();
    writeln!(out, "target rows: {}", inst.target.len()).unwrap();
    writeln!(out, "test rows: {}", inst.target_test.as_ref().map_or(0, |t| t.len())).unwrap();
    writeln!(out, "rotation shift magnitude: {rotation_shift}").unwrap();
    writeln!(out, "translation shift magnitude: {translation_shift}").unwrap();
    Ok(out)
}

fn train_run(inputs: &Inputs, config: &TrainConfig) -> Result<RunReport> {
    trainer::train(&inputs.source, &inputs.target, config, inputs.test.as_ref())
}

fn write_report(report: &RunReport, out: Option<&Path>, format: ReportFormat) -> Result<()> {
    let Some(path) = out else { return Ok(()) };
    let mut w = create(path)?;
    match format {
        ReportFormat::Json => {
            report.write_json(&mut w)?;
            writeln!(w)?;
        }
        ReportFormat::Csv => report.write_csv(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn run_summary(report: &RunReport) -> String {
    let mut out = String::new();
    writeln!(out, "mode: {}", report.mode.label()).unwrap();
    writeln!(out, "source accuracy: {}", percent(Some(report.source_accuracy))).unwrap();
    writeln!(out, "target accuracy: {}", percent(report.target_accuracy)).unwrap();
    if let Ok((drift, step)) = phi_dynamics(report) {
        writeln!(out, "{:>5} {:>14} {:>14} {:>8}", "iter", "phi_drift", "phi_step", "tgt_acc").unwrap();
        for (i, r) in report.iterations.iter().enumerate() {
            writeln!(out, "{:>5} {:>14.6e} {:>14.6e} {:>8}", r.iter, drift[i], step[i], percent(r.target_accuracy)).unwrap();
        }
    }
    out
}

pub fn cmd_adapt(args: &AdaptArgs) -> Result<String> {
    let run = &args.run;
    let config = run.train.resolve()?;
    let inputs = load_inputs(&run.data)?;
    let report = train_run(&inputs, &config)?;
    write_report(&report, run.out.as_deref(), run.format)?;
    Ok(run_summary(&report))
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: Mode,
    pub source_accuracy: f64,
    pub target_accuracy: Option<f64>,
    pub final_phi_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSizeRow {
    pub fraction: f64,
    pub target_samples: usize,
    pub target_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub ensemble_size: usize,
    pub target_accuracy: Option<f64>,
}

/// Writes rows as a JSON array or as CSV with a header from `columns`.
fn write_rows<T: Serialize>(rows: &[T], columns: &[&str], cells: impl Fn(&T) -> Vec<String>, out: Option<&Path>, format: ReportFormat) -> Result<()> {
    let Some(path) = out else { return Ok(()) };
    let mut w = create(path)?;
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
        ReportFormat::Csv => {
            writeln!(w, "{}", columns.join(","))?;
            for r in rows {
                writeln!(w, "{}", cells(r).join(","))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cell(x: Option<f64>) -> String {
    x.map(data::format_value).unwrap_or_default()
}

pub fn run_ablation(source: &FeatureDataset, target: &FeatureDataset, test: Option<&FeatureDataset>, config: &TrainConfig) -> Result<Vec<AblationRow>> {
    Mode::ALL
        .iter()
        .map(|&mode| {
            let report = trainer::train(source, target, &config.clone().with_mode(mode), test)?;
            Ok(AblationRow {
                mode,
                source_accuracy: report.source_accuracy,
                target_accuracy: report.target_accuracy,
                final_phi_drift: report.iterations.last().filter(|_| mode.uses_alignment()).map(|r| r.phi_drift),
            })
        })
        .collect()
}

pub fn cmd_ablate(args: &RunArgs) -> Result<String> {
    let config = args.train.resolve()?;
    if config.ensemble_size != 1 {
        return Err(Error::Config("ablate runs single-subspace models; drop ensemble_size".into()));
    }
    let inputs = load_inputs(&args.data)?;
    let rows = run_ablation(&inputs.source, &inputs.target, inputs.test.as_ref(), &config)?;
    write_rows(
        &rows,
        &["mode", "source_accuracy", "target_accuracy", "final_phi_drift"],
        |r| vec![r.mode.label().into(), data::format_value(r.source_accuracy), cell(r.target_accuracy), cell(r.final_phi_drift)],
        args.out.as_deref(),
        args.format,
    )?;
    let mut out = format!("{:<18} {:>8} {:>8}\n", "mode", "src_acc", "tgt_acc");
    for r in &rows {
        writeln!(out, "{:<18} {:>8} {:>8}", r.mode.label(), percent(Some(r.source_accuracy)), percent(r.target_accuracy)).unwrap();
    }
    Ok(out)
}

pub fn run_target_sweep(source: &FeatureDataset, target: &FeatureDataset, test: Option<&FeatureDataset>, config: &TrainConfig, fractions: &[f64]) -> Result<Vec<TargetSizeRow>> {
    if fractions.is_empty() {
        return Err(Error::Config("at least one fraction is required".into()));
    }
    if let Some(bad) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!("fractions must lie in (0, 1], got {bad}")));
    }
    fractions
        .iter()
        .map(|&fraction| {
            let sub = data::subsample(target, fraction, config.seed)?;
            let report = trainer::train(source, &sub, config, test)?;
            Ok(TargetSizeRow { fraction, target_samples: sub.len(), target_accuracy: report.target_accuracy })
        })
        .collect()
}

pub fn cmd_sweep_target_size(args: &SweepTargetArgs) -> Result<String> {
    let config = args.run.train.resolve()?;
    let inputs = load_inputs(&args.run.data)?;
    let rows = run_target_sweep(&inputs.source, &inputs.target, inputs.test.as_ref(), &config, &args.fractions)?;
    write_rows(
        &rows,
        &["fraction", "target_samples", "target_accuracy"],
        |r| vec![r.fraction.to_string(), r.target_samples.to_string(), cell(r.target_accuracy)],
        args.run.out.as_deref(),
        args.run.format,
    )?;
    let mut out = format!("{:>8} {:>8} {:>8}\n", "fraction", "samples", "tgt_acc");
    for r in &rows {
        writeln!(out, "{:>8} {:>8} {:>8}", r.fraction, r.target_samples, percent(r.target_accuracy)).unwrap();
    }
    Ok(out)
}

pub fn run_ensemble_sweep(source: &FeatureDataset, target: &FeatureDataset, test: Option<&FeatureDataset>, config: &TrainConfig, sizes: &[usize]) -> Result<Vec<EnsembleRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("at least one ensemble size is required".into()));
    }
    let unique: BTreeSet<usize> = sizes.iter().copied().collect();
    if unique.len() != sizes.len() {
        return Err(Error::Config(format!("duplicate ensemble sizes in {sizes:?}")));
    }
    sizes
        .iter()
        .map(|&k| {
            let report = trainer::train_ensemble(source, target, config, k, test)?;
            Ok(EnsembleRow { ensemble_size: k, target_accuracy: report.target_accuracy })
        })
        .collect()
}

pub fn cmd_sweep_ensemble(args: &SweepEnsembleArgs) -> Result<String> {
    let config = args.run.train.resolve()?;
    let inputs = load_inputs(&args.run.data)?;
    let rows = run_ensemble_sweep(&inputs.source, &inputs.target, inputs.test.as_ref(), &config, &args.sizes)?;
    write_rows(
        &rows,
        &["ensemble_size", "target_accuracy"],
        |r| vec![r.ensemble_size.to_string(), cell(r.target_accuracy)],
        args.run.out.as_deref(),
        args.run.format,
    )?;
    let mut out = format!("{:>4} {:>8}\n", "k", "tgt_acc");
    for r in &rows {
        writeln!(out, "{:>4} {:>8}", r.ensemble_size, percent(r.target_accuracy)).unwrap();
    }
    Ok(out)
}

/// Reads a model document, accepting either a bare model or a full report.
pub fn load_model(path: &Path) -> Result<ModelDocument> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(open(path)?))?;
    let doc = if value.get("model").is_some() {
        serde_json::from_value::<ReportDocument>(value)?.model
    } else {
        serde_json::from_value::<ModelDocument>(value)?
    };
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(model: &ModelDocument, test: &FeatureDataset) -> Result<Evaluation> {
    if test.ambient_dim() != model.ambient_dim {
        return Err(Error::Schema(format!(
            "test data has {} features, model expects {}",
            test.ambient_dim(),
            model.ambient_dim
        )));
    }
    let labels = test.labels().ok_or_else(|| Error::Schema("evaluation data needs a label column".into()))?;
    if let Some(bad) = labels.iter().find(|&&l| l >= model.classes) {
        return Err(Error::Schema(format!("label {bad} outside the model's {} classes", model.classes)));
    }
    let fitted = model.to_model::<f64>()?;
    let confusion = fitted.confusion(test.features(), labels)?;
    Ok(Evaluation {
        accuracy: fitted.accuracy(test.features(), labels)?,
        confusion: confusion.outer_iter().map(|r| r.to_vec()).collect(),
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let model = load_model(&args.model)?;
    let test = load_labeled(&args.test)?;
    let eval = evaluate(&model, &test)?;
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &eval)?;
        writeln!(w)?;
        w.flush()?;
    }
    let mut out = format!("accuracy: {}\nconfusion (rows: true class, columns: predicted):\n", percent(Some(eval.accuracy)));
    for row in &eval.confusion {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        writeln!(out, "{}", cells.join("")).unwrap();
    }
    Ok(out)
}
