use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use krv::bench::{emit_nemenyi_diagram, emit_tables, read_accuracy_csv, run_experiment};
use krv::bench::{ExperimentConfig, KernelFamily, LearnerKind};
use krv::stats::RankReport;
use krv::{
    load_csv, Classifier, CsvOptions, KernelSpec, KrvError, LabelColumn, Likelihood, Result,
    SblConfig, Scaling,
};

#[derive(Parser)]
#[command(
    name = "krv",
    version,
    about = "k-relevance-vector classification and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-searched cross-validation benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Train one model on a CSV dataset and save it.
    Train(TrainArgs),
    /// Classify the rows of a CSV file with a saved model.
    Predict(PredictArgs),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run the experiment described by a TOML config and write the report.
    Run(Box<RunArgs>),
    /// Recompute rank statistics and the Nemenyi diagram from a report.
    Stats {
        report_dir: PathBuf,
        #[arg(long, default_value_t = krv::bench::runner::ALPHA)]
        alpha: f64,
    },
}

/// Each flag overrides the config field of the same name.
#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long, value_delimiter = ',')]
    datasets: Option<Vec<PathBuf>>,
    #[arg(long, value_delimiter = ',')]
    learners: Option<Vec<LearnerKind>>,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    width_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    #[arg(long)]
    poly_order: Option<u32>,
    #[arg(long)]
    scaling: Option<Scaling>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    /// krv, rvm_bern or rvm_gauss.
    #[arg(long, default_value = "krv")]
    learner: LearnerKind,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 0.5)]
    width: f64,
    #[arg(long, default_value_t = 2)]
    order: u32,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    delta_alpha: f64,
    /// unit_range or z_score.
    #[arg(long, default_value = "unit_range")]
    scaling: Scaling,
    #[arg(long, default_value = "last")]
    label_column: String,
    #[arg(short, long, default_value = "model.krv")]
    output: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    model: PathBuf,
    csv: PathBuf,
    /// Column of the CSV holding true labels; accuracy is reported when set.
    #[arg(long)]
    label_column: Option<String>,
    /// Skip the first row.
    #[arg(long)]
    header: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Bench(BenchCommand::Run(args)) => bench_run(*args),
        Command::Bench(BenchCommand::Stats { report_dir, alpha }) => {
            bench_stats(&report_dir, alpha)
        }
        Command::Train(args) => train(args),
        Command::Predict(args) => predict(args),
    }
}

fn bench_run(a: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = a.$field { cfg.$field = v; })*};
    }
    set!(
        datasets,
        learners,
        kernel,
        k_grid,
        width_grid,
        delta_grid,
        poly_order,
        scaling,
        runs,
        folds,
        seed,
        output_dir,
        label_column
    );
    cfg.parallel |= a.parallel;
    let report = run_experiment(&cfg)?;
    for p in emit_tables(&report, &cfg.output_dir)? {
        println!("wrote {}", p.display());
    }
    for (path, reason) in &report.skipped {
        eprintln!("skipped {path}: {reason}");
    }
    Ok(())
}

fn bench_stats(dir: &Path, alpha: f64) -> Result<()> {
    let (learners, datasets, acc) = read_accuracy_csv(dir.join("accuracy.csv"))?;
    let ranks = RankReport::new(learners, datasets, acc, alpha)?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| KrvError::Config(format!("{}: {e}", p.display())))
    };
    write("ranks.csv", ranks.to_csv())?;
    write("ranks.txt", ranks.to_text())?;
    emit_nemenyi_diagram(&ranks, dir.join("nemenyi.svg"))?;
    print!("{}", ranks.to_text());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let label: LabelColumn = match a.label_column.parse() {
        Ok(l) => l,
        Err(never) => match never {},
    };
    let data = load_csv(&a.dataset, &CsvOptions::with_label(label))?;
    let kernel = match a.kernel {
        KernelFamily::Gaussian => KernelSpec::gaussian(a.width)?,
        KernelFamily::Polynomial => KernelSpec::polynomial(a.order)?,
    };
    let cfg = SblConfig::with_delta_alpha(a.delta_alpha);
    let model = match a.learner {
        LearnerKind::Krv => Classifier::train_krv(&data, &kernel, a.k, a.scaling, &cfg)?,
        LearnerKind::RvmBern => {
            Classifier::train_rvm(&data, &kernel, Likelihood::Bernoulli, a.scaling, &cfg)?
        }
        LearnerKind::RvmGauss => {
            Classifier::train_rvm(&data, &kernel, Likelihood::Gaussian, a.scaling, &cfg)?
        }
        other => {
            return Err(KrvError::Config(format!(
                "{other} has no trained model; use krv, rvm_bern or rvm_gauss"
            )))
        }
    };
    model.save(&a.output)?;
    println!(
        "trained {} on {} ({} instances, {} classes) -> {}",
        a.learner,
        data.name(),
        data.n_instances(),
        data.n_classes(),
        a.output.display()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = Classifier::load(&a.model)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(a.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(&a.csv)
        .map_err(|e| KrvError::Config(format!("{}: {e}", a.csv.display())))?;
    let header: Vec<String> = if a.header {
        let h = reader
            .headers()
            .map_err(|e| KrvError::Config(e.to_string()))?;
        h.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let (mut correct, mut total) = (0usize, 0usize);
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| KrvError::Config(e.to_string()))?;
        let mut fields: Vec<&str> = rec.iter().collect();
        if fields.len() == 1 && fields[0].is_empty() {
            continue;
        }
        let truth = match &a.label_column {
            Some(spec) => {
                let idx = label_index(spec, &header, fields.len())?;
                Some(fields.remove(idx).to_string())
            }
            None => None,
        };
        let row = match &model.schema {
            Some(schema) => schema.encode(&fields, i + 1)?,
            None => fields
                .iter()
                .enumerate()
                .map(|(c, f)| {
                    f.parse::<f64>().map_err(|_| KrvError::NonNumeric {
                        row: i + 1,
                        column: c,
                        value: f.to_string(),
                    })
                })
                .collect::<Result<_>>()?,
        };
        let class = &model.class_names[model.predict(&row)?];
        println!("{class}");
        if let Some(t) = truth {
            total += 1;
            correct += usize::from(&t == class);
        }
    }
    if total > 0 {
        eprintln!(
            "accuracy {:.4} ({correct}/{total})",
            correct as f64 / total as f64
        );
    }
    Ok(())
}

fn label_index(spec: &str, header: &[String], n_fields: usize) -> Result<usize> {
    let idx = match spec.parse() {
        Ok(LabelColumn::Last) => n_fields.checked_sub(1),
        Ok(LabelColumn::Index(i)) => Some(i),
        Ok(LabelColumn::Name(n)) => header.iter().position(|h| *h == n),
        Err(never) => match never {},
    };
    idx.filter(|&i| i < n_fields)
        .ok_or_else(|| KrvError::LabelColumn(spec.to_string()))
}
