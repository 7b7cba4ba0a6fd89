//! Command-line workflow: synth, partition, train, predict, eval, sweep.
//!
//! Every setting can come from a TOML file passed with `--config`; flags on
//! the command line take precedence.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bp::{fit_partition, search_q, BpConfig, QSetting};
use crate::codec::Encode;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::export::export_permuted_matrix;
use crate::ingest::{read_dataset_file, write_dataset_file};
use crate::linear::TrainConfig;
use crate::metrics::{label_propensities, EvalReport, PropensityParams};
use crate::partition::Partition;
use crate::pipeline::{
    predict_bp, read_mults_csv, read_predictions, train_on_partition, write_mults_csv,
    write_predictions, BpModel, OvaLogistic,
};
use crate::synth::{generate_train_test, PlantedSpec};

#[derive(Debug, Parser)]
#[command(name = "blockpart", version, about = "Block-wise partitioning for multi-label prediction")]
pub struct Cli {
    /// TOML file with default settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Co-cluster instances and labels.
    Partition(PartitionArgs),
    /// Train router and per-cluster classifiers.
    Train(TrainArgs),
    /// Predict top-k labels for a test file.
    Predict(PredictArgs),
    /// Score predictions against a test file.
    Eval(EvalArgs),
    /// Precision and speedup over a list of lambdas.
    Sweep(SweepArgs),
    /// Write a planted block dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct BpFlags {
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of clusters, or `auto`.
    #[arg(long)]
    pub q: Option<String>,
    /// Upper bound for `--q auto`.
    #[arg(long)]
    pub q_max: Option<usize>,
    #[arg(long)]
    pub max_alt_iters: Option<usize>,
    #[arg(long)]
    pub conv_tol: Option<f64>,
    #[arg(long)]
    pub min_labels: Option<usize>,
    /// Keep raw feature values instead of unit-length rows.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args, Default)]
pub struct SolverFlags {
    /// Loss weight (inverse regularization strength).
    #[arg(long = "c")]
    pub reg_strength: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub prune: Option<f64>,
    /// Reweight positives and negatives to equal total cost.
    #[arg(long)]
    pub balance: bool,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub bp: BpFlags,
    /// Rows per cluster in the permuted-matrix image.
    #[arg(long, default_value_t = 200)]
    pub row_limit: usize,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Reuse a partition file instead of fitting one.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    #[command(flatten)]
    pub bp: BpFlags,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    /// Predictions file; mults go to `<out>.mults.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Training file, for label propensities.
    #[arg(long)]
    pub train: PathBuf,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Mults CSV; defaults to `<predictions>.mults.csv` when present.
    #[arg(long)]
    pub mults: Option<PathBuf>,
    /// Metrics CSV (stdout gets the summary either way).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    #[command(flatten)]
    pub bp: BpFlags,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub q_true: usize,
    #[arg(long, default_value_t = 100)]
    pub instances_per_block: usize,
    #[arg(long, default_value_t = 20)]
    pub test_per_block: usize,
    #[arg(long, default_value_t = 10)]
    pub labels_per_block: usize,
    #[arg(long, default_value_t = 100)]
    pub features: usize,
    #[arg(long, default_value_t = 0.8)]
    pub density: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub popular: usize,
    #[arg(long, default_value_t = 5.0)]
    pub separation: f64,
    #[arg(long)]
    pub num_labels: Option<usize>,
    /// Writes `<out>.train.txt`, `<out>.test.txt`, `<out>.truth.partition`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub bp: BpSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpSection {
    pub lambda: Option<f64>,
    pub q: Option<toml::Value>,
    pub q_max: Option<usize>,
    pub max_alt_iters: Option<usize>,
    pub conv_tol: Option<f64>,
    pub min_labels: Option<usize>,
    pub normalize: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub reg_strength: Option<f64>,
    pub tol: Option<f64>,
    pub max_epochs: Option<usize>,
    pub prune: Option<f64>,
    pub balance: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub k: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Format {
            what: "config",
            message: e.to_string(),
        })
    }
}

struct Settings {
    file: FileConfig,
    seed: u64,
}

impl Settings {
    fn bp(&self, flags: &BpFlags) -> Result<BpConfig> {
        let file = &self.file.bp;
        let defaults = BpConfig::default();
        let q_max = flags.q_max.or(file.q_max).unwrap_or(8);
        let q_text = match (&flags.q, &file.q) {
            (Some(q), _) => Some(q.clone()),
            (None, Some(toml::Value::Integer(q))) => Some(q.to_string()),
            (None, Some(toml::Value::String(q))) => Some(q.clone()),
            (None, Some(other)) => {
                return Err(Error::InvalidArgument(format!("bad q in config: {other}")))
            }
            (None, None) => None,
        };
        let q = match q_text.as_deref() {
            None | Some("auto") => QSetting::Auto { q_max },
            Some(text) => QSetting::Fixed(text.parse().map_err(|_| {
                Error::InvalidArgument(format!("--q expects a count or `auto`, got {text:?}"))
            })?),
        };
        let config = BpConfig {
            lambda: flags.lambda.or(file.lambda).unwrap_or(defaults.lambda),
            q,
            max_alt_iters: flags
                .max_alt_iters
                .or(file.max_alt_iters)
                .unwrap_or(defaults.max_alt_iters),
            conv_tol: flags.conv_tol.or(file.conv_tol).unwrap_or(defaults.conv_tol),
            min_labels_per_cluster: flags
                .min_labels
                .or(file.min_labels)
                .unwrap_or(defaults.min_labels_per_cluster),
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    fn normalize(&self, flags: &BpFlags) -> bool {
        !flags.no_normalize && self.file.bp.normalize.unwrap_or(true)
    }

    fn train(&self, flags: &SolverFlags) -> Result<TrainConfig> {
        let file = &self.file.train;
        let defaults = TrainConfig::default();
        let config = TrainConfig {
            reg_strength: flags
                .reg_strength
                .or(file.reg_strength)
                .unwrap_or(defaults.reg_strength),
            tol: flags.tol.or(file.tol).unwrap_or(defaults.tol),
            max_epochs: flags.max_epochs.or(file.max_epochs).unwrap_or(defaults.max_epochs),
            seed: self.seed,
            prune_threshold: flags.prune.or(file.prune).unwrap_or(defaults.prune_threshold),
            balance_classes: flags.balance || file.balance.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    fn ks(&self, flags: &Option<Vec<usize>>) -> Vec<usize> {
        flags
            .clone()
            .or_else(|| self.file.eval.k.clone())
            .unwrap_or_else(|| vec![1, 3, 5])
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_dataset(path: &Path, normalize: bool) -> Result<Dataset> {
    let mut data = read_dataset_file(path)?;
    if normalize {
        data.normalize_rows_l2();
    }
    Ok(data)
}

fn fit(data: &Dataset, config: &BpConfig, out: Option<&Path>) -> Result<Partition> {
    match config.q {
        QSetting::Fixed(q) => {
            if q == 1 {
                eprintln!("warning: q = 1 scans every label; expect no speedup");
            }
            fit_partition(data, config)
        }
        QSetting::Auto { q_max } => {
            let search = search_q(data, config, q_max)?;
            if let Some(prefix) = out {
                let mut w = create(&with_suffix(prefix, ".qsearch.csv"))?;
                writeln!(w, "q,captured_proportion,any_empty,objective")?;
                for r in &search.reports {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        r.q, r.captured_proportion, r.any_empty, r.objective.f
                    )?;
                }
                w.flush()?;
            }
            Ok(search.partition)
        }
    }
}

fn cmd_partition(settings: &Settings, args: &PartitionArgs) -> Result<()> {
    let data = load_dataset(&args.train, settings.normalize(&args.bp))?;
    let config = settings.bp(&args.bp)?;
    let partition = fit(&data, &config, Some(&args.out))?;
    println!("chosen q = {}", partition.q());

    partition.write_file(with_suffix(&args.out, ".partition"))?;
    std::fs::write(with_suffix(&args.out, ".partition.json"), partition.to_json())?;
    let mut w = create(&with_suffix(&args.out, ".trace.csv"))?;
    writeln!(w, "iteration,objective")?;
    for (t, f) in partition.objective_trace().iter().enumerate() {
        writeln!(w, "{},{}", t + 1, f)?;
    }
    w.flush()?;

    let image = export_permuted_matrix(data.labels(), &partition, args.row_limit)?;
    let mut w = create(&with_suffix(&args.out, ".pgm"))?;
    image.write_pgm(&mut w)?;
    w.flush()?;
    let mut w = create(&with_suffix(&args.out, ".rows.csv"))?;
    image.write_rows_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&with_suffix(&args.out, ".cols.csv"))?;
    image.write_cols_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_train(settings: &Settings, args: &TrainArgs) -> Result<()> {
    let normalize = settings.normalize(&args.bp);
    let data = load_dataset(&args.train, normalize)?;
    let train = settings.train(&args.solver)?;

    let start = Instant::now();
    let partition = match &args.partition {
        Some(path) => Partition::read_file(path)?,
        None => fit(&data, &settings.bp(&args.bp)?, None)?,
    };
    let partition_time = start.elapsed();

    let start = Instant::now();
    let mut model = train_on_partition(&data, partition, &train, &OvaLogistic(train.clone()))?;
    model.set_normalized_features(normalize);
    let training_time = start.elapsed();

    model.write_file(&args.out)?;
    println!("phase,seconds");
    println!("data partitioning,{:.3}", partition_time.as_secs_f64());
    println!("training,{:.3}", training_time.as_secs_f64());
    Ok(())
}

fn cmd_predict(settings: &Settings, args: &PredictArgs) -> Result<()> {
    let model = BpModel::read_file(&args.model)?;
    let test = load_dataset(&args.test, model.normalized_features())?;
    let k = args.k.unwrap_or_else(|| settings.ks(&None).into_iter().max().unwrap_or(5));
    let result = predict_bp(&model, test.features(), k)?;
    let mut w = create(&args.out)?;
    write_predictions(&result, &mut w)?;
    w.flush()?;
    let mut w = create(&with_suffix(&args.out, ".mults.csv"))?;
    write_mults_csv(&result, &mut w)?;
    w.flush()?;
    eprintln!(
        "{} instances, mean {:.1} multiplications each",
        result.num_instances(),
        result.mean_mults()
    );
    Ok(())
}

fn cmd_eval(settings: &Settings, args: &EvalArgs) -> Result<()> {
    let test = read_dataset_file(&args.test)?;
    let train = read_dataset_file(&args.train)?;
    let (predictions, _) = read_predictions(BufReader::new(File::open(&args.predictions)?))?;
    if predictions.len() != test.num_instances() {
        return Err(Error::Dimension(format!(
            "{} prediction lines for {} test instances",
            predictions.len(),
            test.num_instances()
        )));
    }
    let ks = settings.ks(&args.k);
    let propensities = label_propensities(
        &train.labels().column_counts(),
        train.num_instances(),
        PropensityParams::default(),
    )?;
    let mults_path = args
        .mults
        .clone()
        .or_else(|| Some(with_suffix(&args.predictions, ".mults.csv")).filter(|p| p.exists()));
    let mults = match &mults_path {
        Some(path) => Some(read_mults_csv(BufReader::new(File::open(path)?))?),
        None => None,
    };
    let m = test.num_labels() as u64;
    let report = EvalReport::compute(
        test.labels(),
        &predictions,
        &propensities,
        &ks,
        mults.as_deref().map(|mu| (mu, m)),
    )?;
    if let Some(out) = &args.out {
        let mut w = create(out)?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    print!("{}", report.summary_table());
    Ok(())
}

fn cmd_sweep(settings: &Settings, args: &SweepArgs) -> Result<()> {
    let normalize = settings.normalize(&args.bp);
    let train_data = load_dataset(&args.train, normalize)?;
    let test = load_dataset(&args.test, normalize)?;
    let base = settings.bp(&args.bp)?;
    let train = settings.train(&args.solver)?;
    let ks = settings.ks(&args.k);
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let propensities = vec![1.0; test.num_labels()];

    let mut w = create(&args.out)?;
    write!(w, "lambda")?;
    for k in &ks {
        write!(w, ",P@{k}")?;
    }
    writeln!(w, ",speedup")?;
    for &lambda in &args.lambdas {
        let config = BpConfig { lambda, ..base.clone() };
        let partition = fit(&train_data, &config, None)?;
        let model = train_on_partition(&train_data, partition, &train, &OvaLogistic(train.clone()))?;
        let result = predict_bp(&model, test.features(), k_max)?;
        let report = EvalReport::compute(
            test.labels(),
            &result.top_labels,
            &propensities,
            &ks,
            Some((&result.mults_used, test.num_labels() as u64)),
        )?;
        write!(w, "{lambda}")?;
        for &k in &ks {
            write!(w, ",{}", report.get("P", k).expect("computed"))?;
        }
        writeln!(w, ",{}", report.speedup.expect("computed"))?;
        eprintln!("lambda {lambda} done");
    }
    w.flush()?;
    Ok(())
}

fn cmd_synth(settings: &Settings, args: &SynthArgs) -> Result<()> {
    let spec = PlantedSpec {
        q_true: args.q_true,
        instances_per_block: args.instances_per_block,
        labels_per_block: args.labels_per_block,
        d: args.features,
        in_block_density: args.density,
        off_block_noise: args.noise,
        popular_labels: args.popular,
        feature_separation: args.separation,
        num_labels: args.num_labels,
        seed: settings.seed,
    };
    let (train, test, truth) = generate_train_test(&spec, args.test_per_block)?;
    write_dataset_file(&train, with_suffix(&args.out, ".train.txt"))?;
    write_dataset_file(&test, with_suffix(&args.out, ".test.txt"))?;
    truth.write_file(with_suffix(&args.out, ".truth.partition"))?;
    Ok(())
}

/// Runs a parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = (|| {
        let file = match &cli.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let settings = Settings {
            seed: cli.seed.or(file.seed).unwrap_or(0),
            file,
        };
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads.or(settings.file.threads) {
            pool = pool.num_threads(n);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| match &cli.command {
            Command::Partition(a) => cmd_partition(&settings, a),
            Command::Train(a) => cmd_train(&settings, a),
            Command::Predict(a) => cmd_predict(&settings, a),
            Command::Eval(a) => cmd_eval(&settings, a),
            Command::Sweep(a) => cmd_sweep(&settings, a),
            Command::Synth(a) => cmd_synth(&settings, a),
        })
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let file: FileConfig = toml::from_str(
            "seed = 4\n[bp]\nlambda = 0.5\nq = 3\n[train]\nreg_strength = 2.0\n",
        )
        .unwrap();
        let settings = Settings { seed: 4, file };
        let bp = settings.bp(&BpFlags::default()).unwrap();
        assert_eq!((bp.lambda, bp.q), (0.5, QSetting::Fixed(3)));
        let flags = BpFlags {
            lambda: Some(0.1),
            q: Some("auto".into()),
            ..Default::default()
        };
        let bp = settings.bp(&flags).unwrap();
        assert_eq!((bp.lambda, bp.q), (0.1, QSetting::Auto { q_max: 8 }));
        assert_eq!(settings.train(&SolverFlags::default()).unwrap().reg_strength, 2.0);
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[bp]\nlamda = 1.0\n").is_err());
    }

    #[test]
    fn bad_q_flag() {
        let settings = Settings {
            seed: 0,
            file: FileConfig::default(),
        };
        let flags = BpFlags {
            q: Some("many".into()),
            ..Default::default()
        };
        assert!(settings.bp(&flags).is_err());
    }

    #[test]
    fn missing_file_exits_one() {
        assert_eq!(
            run(["blockpart", "partition", "--train", "/nonexistent/x.txt", "--out", "/tmp/x"]),
            1
        );
    }
}
