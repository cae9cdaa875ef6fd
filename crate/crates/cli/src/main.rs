use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fann::dataset::{
    generate_synthetic, split_queries, DatasetManifest, FilteredQuery, LabeledDataset,
    SyntheticSpec,
};
use fann::eval::{run_benchmark, write_csv, BenchmarkConfig, BenchmarkInputs, Method};
use fann::index::{load_index, save_index, BuildParams, EntryMode, GraphIndex};
use fann::learner::{grid_search_alpha, triplets_from_ground_truth, LearnerConfig, LearnerReport};
use fann::oracle::{build_ground_truth, GroundTruth, GroundTruthMode};
use fann::planner::PlannerConfig;
use fann::{Error, Result, WeightModel};

#[derive(Parser)]
#[command(
    name = "fann",
    version,
    about = "Filter-aware graph ANN with a learned label-mismatch penalty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory from a JSON spec.
    GenSynthetic {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute exact ground truth for the dataset's queries.
    GroundTruth {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mode: GroundTruthMode,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn the label-mismatch weight from unfiltered ground truth.
    LearnWeights(LearnArgs),
    /// Build a graph index.
    Build(BuildArgs),
    /// Run the method comparison and write a CSV table.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SplitArgs {
    /// Fraction of the queries used for training; the rest are evaluated.
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    data: PathBuf,
    /// Unfiltered ground truth over all queries.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,100,1000")]
    alpha_grid: Vec<f64>,
    /// Ranking depth used for triplets, capped at the ground-truth depth.
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long, default_value_t = 0.25)]
    validation_fraction: f64,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "R", default_value_t = 32)]
    r: usize,
    #[arg(long = "L", default_value_t = 64)]
    l: usize,
    #[arg(long, default_value_t = 1.2)]
    alpha_prune: f64,
    /// Path to a learned weights JSON, or `zero`.
    #[arg(long)]
    weights: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "integrated,fixed,post")]
    methods: Vec<Method>,
    #[arg(
        long = "L-sweep",
        value_delimiter = ',',
        default_value = "10,20,50,100,200"
    )]
    l_sweep: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    threshold: u64,
    #[arg(long, default_value_t = 0.1)]
    sample_fraction: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Index built with the learned weight.
    #[arg(long)]
    integrated: PathBuf,
    /// Index built with `w_m = 0`.
    #[arg(long)]
    zero: PathBuf,
    /// Learned weights JSON.
    #[arg(long)]
    weights: PathBuf,
    /// Filtered ground truth over all queries.
    #[arg(long)]
    gt: PathBuf,
    /// Unfiltered ground truth over all queries; adds unfiltered-quality rows.
    #[arg(long)]
    unfiltered_gt: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1.0")]
    fixed_penalties: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    post_overprovision: f64,
    #[arg(long, default_value = "label-starts")]
    entry_mode: EntryModeArg,
    /// Evaluate every query instead of the held-out split.
    #[arg(long)]
    all_queries: bool,
    #[command(flatten)]
    split: SplitArgs,
    /// Write zero wall times so repeated runs give identical files.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EntryModeArg {
    LabelStarts,
    MedoidOnly,
}

fn load_data(dir: &Path) -> Result<(LabeledDataset, Vec<FilteredQuery>)> {
    let manifest = DatasetManifest::load(dir)?;
    Ok((manifest.load_dataset(dir)?, manifest.load_queries(dir)?))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_model(weights: &Path) -> Result<WeightModel> {
    let report = LearnerReport::from_json(&read_text(weights)?)?;
    let model = report.model();
    model.validate()?;
    Ok(model)
}

fn split(
    queries: &[FilteredQuery],
    args: &SplitArgs,
) -> Result<(Vec<FilteredQuery>, Vec<FilteredQuery>)> {
    split_queries(queries, args.train_fraction, args.split_seed)
}

/// Rows of `gt` for `queries`, selected by query id.
fn select_rows(gt: &GroundTruth, queries: &[FilteredQuery]) -> Result<GroundTruth> {
    let rows = queries
        .iter()
        .map(|q| {
            gt.rows.get(q.id as usize).cloned().ok_or_else(|| {
                Error::Invalid(format!("ground truth has no row for query {}", q.id))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth { rows, ..gt.clone() })
}

fn gen_synthetic(spec: &Path, out: &Path) -> Result<()> {
    let spec: SyntheticSpec = serde_json::from_str(&read_text(spec)?)?;
    let data = generate_synthetic(&spec)?;
    let manifest = DatasetManifest::standard(spec.metric, spec.label_universe);
    manifest.write_dir(out, &data.dataset, &data.queries)?;
    log::info!(
        "wrote {} points and {} queries to {}",
        data.dataset.len(),
        data.queries.len(),
        out.display()
    );
    Ok(())
}

fn ground_truth(data: &Path, mode: GroundTruthMode, k: usize, out: &Path) -> Result<()> {
    let (ds, queries) = load_data(data)?;
    let gt = build_ground_truth(&ds, &queries, k, mode)?;
    gt.save(out)
}

fn learn(args: &LearnArgs) -> Result<()> {
    let (ds, queries) = load_data(&args.data)?;
    let gt = GroundTruth::load(&args.gt)?;
    if gt.metric != ds.metric() {
        return Err(Error::Invalid(
            "ground truth metric differs from dataset metric".into(),
        ));
    }
    let (train, _) = split(&queries, &args.split)?;
    let depth = args.depth.min(gt.k);
    if depth < args.depth {
        log::warn!(
            "ground truth depth {} limits the triplet ranking depth",
            gt.k
        );
    }
    let config = LearnerConfig {
        epsilon: args.epsilon,
        alpha_grid: args.alpha_grid.clone(),
        learner_gt_k: depth,
        validation_fraction: args.validation_fraction,
        sensitivity_depths: Vec::new(),
        ..Default::default()
    };
    config.validate()?;
    let (fit, val) = if args.validation_fraction > 0.0 && train.len() >= 2 {
        let (val, fit) = split_queries(&train, args.validation_fraction, config.validation_seed)?;
        (fit, val)
    } else {
        (train, Vec::new())
    };
    let mut report = match triplets_from_ground_truth(&ds, &fit, &gt, &config) {
        Ok(triplets) => {
            let validation = match triplets_from_ground_truth(&ds, &val, &gt, &config) {
                Ok(v) => v,
                Err(Error::NoTriplets) => Vec::new(),
                Err(e) => return Err(e),
            };
            grid_search_alpha(&triplets, &config, &validation)?
        }
        Err(Error::NoTriplets) => LearnerReport::no_triplets(&config, ds.metric()),
        Err(e) => return Err(e),
    };
    report.metric_kind = ds.metric();
    for w in &report.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "learned w_m = {} (alpha = {}, {} triplets)",
        report.w_m,
        report.alpha,
        report.triplet_count
    );
    write_text(&args.out, &report.to_json()?)
}

fn build(args: &BuildArgs) -> Result<()> {
    let (ds, _) = load_data(&args.data)?;
    let model = if args.weights == "zero" {
        WeightModel::zero()
    } else {
        load_model(Path::new(&args.weights))?
    };
    let params = BuildParams {
        max_degree: args.r,
        l_build: args.l,
        alpha_prune: args.alpha_prune,
        model,
        seed: args.seed,
        ..Default::default()
    };
    let (index, stats) = GraphIndex::build(&ds, &params)?;
    index.check_structure()?;
    log::info!(
        "built {} points, mean degree {:.2}, {} patch edges",
        index.len(),
        stats.mean_degree,
        stats.patch_edges
    );
    save_index(&index, &args.out)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let (ds, queries) = load_data(&args.data)?;
    let eval_queries = if args.all_queries {
        queries
    } else {
        split(&queries, &args.split)?.1
    };
    let truth = select_rows(&GroundTruth::load(&args.gt)?, &eval_queries)?;
    let unfiltered = match &args.unfiltered_gt {
        Some(p) => Some(select_rows(&GroundTruth::load(p)?, &eval_queries)?),
        None => None,
    };
    let integrated = load_index(&args.integrated, &ds)?;
    let zero = load_index(&args.zero, &ds)?;
    let model = load_model(&args.weights)?;
    let cfg = BenchmarkConfig {
        methods: args.methods.clone(),
        l_sweep: args.l_sweep.clone(),
        k: args.k,
        fixed_penalties: args.fixed_penalties.clone(),
        post_overprovision: args.post_overprovision,
        planner: PlannerConfig {
            selectivity_threshold: args.threshold,
            sample_fraction: args.sample_fraction,
            seed: 0,
        },
        entry_mode: match args.entry_mode {
            EntryModeArg::LabelStarts => EntryMode::LabelStarts,
            EntryModeArg::MedoidOnly => EntryMode::MedoidOnly,
        },
        deterministic: args.deterministic,
    };
    let inputs = BenchmarkInputs {
        dataset: &ds,
        queries: &eval_queries,
        truth: &truth,
        integrated: &integrated,
        zero: &zero,
        model,
        unfiltered_truth: unfiltered.as_ref(),
    };
    let rows = run_benchmark(&inputs, &cfg)?;
    let file = fs::File::create(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    write_csv(&rows, std::io::BufWriter::new(file)).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic { spec, out } => gen_synthetic(&spec, &out),
        Command::GroundTruth { data, mode, k, out } => ground_truth(&data, mode, k, &out),
        Command::LearnWeights(args) => learn(&args),
        Command::Build(args) => build(&args),
        Command::Eval(args) => eval(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
