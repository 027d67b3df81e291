//! `casii` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure (non-finite values or a failed gradient check).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::read_pairs;
use crate::error::{Error, ErrorKind, Result};
use crate::eval::{self, attention_localization, classification_metrics, grouped_accuracy};
use crate::model::{forward, predict, CasiiParams, InstanceBag};
use crate::nrl::{build_key_matrix, KeyMatrix};
use crate::synthdata::{self, generate, load_dataset, save_dataset, witness_group, Dataset, SynthConfig};
use crate::train::gradcheck::{self, GradDims};
use crate::train::{multi_run_select, LossToggles, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "casii", version, about = "Cross-attention saliency MIL on embedding bags")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bag dataset.
    GenerateData(GenerateArgs),
    /// Extract negative keys from a dataset's negative bags.
    BuildKeys(BuildKeysArgs),
    /// Train with best-of-N run selection.
    Train(TrainArgs),
    /// Score a dataset with a trained model.
    Eval(EvalArgs),
    /// Export per-instance attention for one bag.
    Attend(AttendArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// key=value generator settings; flags override them.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub positives: Option<usize>,
    /// Instances per bag, `lo..hi`.
    #[arg(long)]
    pub instances: Option<String>,
    /// Witness-rate range, `lo..hi`.
    #[arg(long)]
    pub witness_rate: Option<String>,
    #[arg(long)]
    pub tumor_shift: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub cluster_spread: Option<f64>,
    #[arg(long)]
    pub clusters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildKeysArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = crate::nrl::DEFAULT_T_MAX)]
    pub t_max: usize,
    /// Keep only the first N instances of each bag before selection.
    #[arg(long)]
    pub max_instances_per_bag: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Key file; built from the dataset's negative bags with `t_max` when omitted.
    #[arg(long)]
    pub keys: Option<PathBuf>,
    /// Output directory for the selected checkpoint and per-run histories.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value training settings; flags override them.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_bot: bool,
    #[arg(long)]
    pub no_top: bool,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub val_ratio: Option<f64>,
    /// Train the runs concurrently.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Also report accuracy per witness group.
    #[arg(long)]
    pub group: bool,
    #[arg(long, default_value_t = eval::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Write the metrics as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttendArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bag_id: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random problems.
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    /// `D,D_h,tau,n`.
    #[arg(long, default_value = "6,4,5,7")]
    pub dims: String,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Perturb one analytic gradient (negative control).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenerateData(a) => generate_data(a, out),
        Command::BuildKeys(a) => build_keys(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Attend(a) => attend(a, out),
        Command::Gradcheck(a) => gradcheck_cmd(a, out),
    }
}

fn synth_config(a: &GenerateArgs) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    if let Some(path) = &a.config {
        for (k, v) in read_pairs(path)? {
            cfg.set(&k, &v)?;
        }
    }
    let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
    set("seed", a.seed.map(|v| v.to_string()))?;
    set("dim", a.dim.map(|v| v.to_string()))?;
    set("n_negative_bags", a.negatives.map(|v| v.to_string()))?;
    set("n_positive_bags", a.positives.map(|v| v.to_string()))?;
    set("instances_per_bag", a.instances.clone())?;
    set("witness_rate", a.witness_rate.clone())?;
    set("tumor_shift", a.tumor_shift.map(|v| v.to_string()))?;
    set("noise_sigma", a.noise_sigma.map(|v| v.to_string()))?;
    set("cluster_spread", a.cluster_spread.map(|v| v.to_string()))?;
    set("n_normal_clusters", a.clusters.map(|v| v.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn group_counts(ds: &Dataset) -> Result<[usize; 3]> {
    let mut counts = [0; 3];
    for bag in &ds.bags {
        counts[witness_group(bag)? as usize] += 1;
    }
    Ok(counts)
}

fn generate_data(a: GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = synth_config(&a)?;
    let ds = generate(&cfg)?;
    save_dataset(&ds, &a.out)?;
    let [neg, mac, mic] = group_counts(&ds)?;
    emit(
        out,
        &format!(
            "wrote {} bags (D={}) to {}\nnegative={neg} macro={mac} micro={mic}\n",
            ds.len(),
            ds.dim,
            a.out.display()
        ),
    )
}

fn build_keys(a: BuildKeysArgs, out: &mut dyn Write) -> Result<()> {
    if a.t_max == 0 {
        return Err(Error::InvalidArgument("--t-max must be at least 1".into()));
    }
    let ds = load_dataset(&a.data)?;
    let keys = build_key_matrix(&ds.negatives(), a.t_max, a.max_instances_per_bag)?;
    keys.save(&a.out)?;
    let mut text = format!(
        "tau={} from {} negative bags (D={})\n",
        keys.tau(),
        keys.provenance().len(),
        keys.dim()
    );
    for p in keys.provenance() {
        text.push_str(&format!("bag {} t={}\n", p.bag_id, p.t()));
    }
    emit(out, &text)
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &a.config {
        for (k, v) in read_pairs(path)? {
            cfg.set(&k, &v)?;
        }
    }
    let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
    set("lambda1", a.lambda1.map(|v| v.to_string()))?;
    set("lambda2", a.lambda2.map(|v| v.to_string()))?;
    set("warmup_epochs", a.warmup.map(|v| v.to_string()))?;
    set("patience", a.patience.map(|v| v.to_string()))?;
    set("runs", a.runs.map(|v| v.to_string()))?;
    set("seed", a.seed.map(|v| v.to_string()))?;
    set("max_epochs", a.max_epochs.map(|v| v.to_string()))?;
    set("learning_rate", a.lr.map(|v| v.to_string()))?;
    set("weight_decay", a.weight_decay.map(|v| v.to_string()))?;
    set("latent_dim", a.latent_dim.map(|v| v.to_string()))?;
    set("r", a.r.map(|v| v.to_string()))?;
    set("t_max", a.t_max.map(|v| v.to_string()))?;
    set("val_ratio", a.val_ratio.map(|v| v.to_string()))?;
    if a.no_bot {
        cfg.toggles = LossToggles { use_bot: false, ..cfg.toggles };
    }
    if a.no_top {
        cfg.toggles = LossToggles { use_top: false, ..cfg.toggles };
    }
    if a.parallel {
        cfg.parallel = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_compatible(ds: &Dataset, keys: &KeyMatrix) -> Result<()> {
    if ds.dim != keys.dim() {
        return Err(Error::Shape(format!(
            "dataset has D={} but keys have D={}",
            ds.dim,
            keys.dim()
        )));
    }
    Ok(())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = train_config(&a)?;
    let ds = load_dataset(&a.data)?;
    let keys = match &a.keys {
        Some(path) => KeyMatrix::load(path)?,
        None => build_key_matrix(&ds.negatives(), cfg.t_max, None)?,
    };
    check_compatible(&ds, &keys)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let outcome = multi_run_select(&ds.bags, &keys, &cfg)?;
    let mut text = String::new();
    for (i, run) in outcome.runs.iter().enumerate() {
        let path = a.out.join(format!("history_run{i}.csv"));
        run.history.save_csv(&path)?;
        text.push_str(&format!(
            "run {i}: best val AUC {:.4} at epoch {} ({} epochs)\n",
            run.history.best_val_auc,
            run.history.best_epoch,
            run.history.records.len()
        ));
    }
    let model_path = a.out.join("model.csim");
    outcome.params.save(&model_path)?;
    if a.keys.is_none() {
        keys.save(&a.out.join("keys.csik"))?;
    }
    text.push_str(&format!(
        "selected run {} with best val AUC {:.4}; checkpoint {}\n",
        outcome.selected,
        outcome.runs[outcome.selected].history.best_val_auc,
        model_path.display()
    ));
    emit(out, &text)
}

fn load_artifacts(data: &Path, keys: &Path, model: &Path) -> Result<(Dataset, KeyMatrix, CasiiParams)> {
    let ds = load_dataset(data)?;
    let keys = KeyMatrix::load(keys)?;
    let params = CasiiParams::load(model)?;
    check_compatible(&ds, &keys)?;
    if params.input_dim() != keys.dim() || params.tau() != keys.tau() {
        return Err(Error::Shape(format!(
            "model expects D={} tau={} but keys have D={} tau={}",
            params.input_dim(),
            params.tau(),
            keys.dim(),
            keys.tau()
        )));
    }
    Ok((ds, keys, params))
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (ds, keys, params) = load_artifacts(&a.data, &a.keys, &a.model)?;
    if a.group {
        if let Some(b) = ds.bags.iter().find(|b| b.instance_labels.is_none()) {
            return Err(Error::MissingInstanceLabels(b.id));
        }
    }
    let scores = ds
        .bags
        .iter()
        .map(|b| predict(b, &keys, &params))
        .collect::<Result<Vec<_>>>()?;
    let report = classification_metrics(&scores, &ds.labels(), a.threshold)?;
    let mut text = report.to_table();
    if a.group {
        let bags: Vec<&InstanceBag> = ds.bags.iter().collect();
        text.push('\n');
        text.push_str(&grouped_accuracy(&scores, &bags, a.threshold)?.to_table());
    }
    if let Some(path) = &a.csv {
        std::fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    emit(out, &text)
}

fn attend(a: AttendArgs, out: &mut dyn Write) -> Result<()> {
    let (ds, keys, params) = load_artifacts(&a.data, &a.keys, &a.model)?;
    let bag = ds.find(a.bag_id).ok_or(Error::UnknownBag(a.bag_id))?;
    let trace = forward(bag, &keys, &params)?;
    eval::export_attention(&trace, bag, &a.out)?;
    let mut text = format!(
        "bag {} (label {}, {} instances): P_bag={:.6}\n",
        bag.id,
        bag.label,
        bag.len(),
        trace.p_bag
    );
    if bag.is_positive() && bag.instance_labels.is_some() {
        let precision = attention_localization(&trace.attention, bag, a.fraction)?;
        text.push_str(&format!(
            "top-{:.0}% attention precision {:.4} (witness rate {:.4})\n",
            a.fraction * 100.0,
            precision,
            bag.witness_rate().unwrap_or(0.0)
        ));
    }
    emit(out, &text)
}

fn parse_dims(s: &str) -> Result<GradDims> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("--dims expects D,D_h,tau,n, got `{s}`")))?;
    match parts.as_slice() {
        &[d, d_h, tau, n] if d > 0 && d_h > 0 && tau > 0 && n > 0 => Ok(GradDims { d, d_h, tau, n }),
        _ => Err(Error::InvalidArgument(format!("--dims expects four positive integers, got `{s}`"))),
    }
}

fn gradcheck_cmd(a: GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let dims = parse_dims(&a.dims)?;
    let seeds: Vec<u64> = (0..a.cases as u64).map(|i| synthdata::derive_seed(a.seed, i)).collect();
    let report = gradcheck::run_suite(dims, &seeds, a.corrupt)?;
    emit(out, &report.to_table())?;
    gradcheck::enforce(&report, a.tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("casii").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["bogus"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["gradcheck", "--dims", "1,2"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn gradcheck_pass_and_negative_control() {
        let (code, out, _) = run_args(&["gradcheck", "--cases", "2"]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert!(out.contains("W_k"));
        let (code, _, err) = run_args(&["gradcheck", "--cases", "1", "--corrupt"]);
        assert_eq!(code, EXIT_NUMERICAL);
        assert_eq!(err.lines().count(), 1);
    }
}
