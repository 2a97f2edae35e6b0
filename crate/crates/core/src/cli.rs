//! The `coupled-rec` command line.
//!
//! Exit codes: 0 on success, 2 for invalid input (bad flags, missing or
//! malformed files), 1 for failures during the run itself.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cf::{NeighborSource, RatingIndex, DEFAULT_NEIGHBORS};
use crate::coupling::{coupling_matrix, CouplingParams};
use crate::data::{RatingDataset, RelationGraph};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, throughput_bench, write_bench_csv, write_reports_csv};
use crate::ingest::{load_attribute_table, load_graph, load_pairs, load_ratings};
use crate::kmodes::{ck_modes, plain_k_modes};
use crate::mf::{self, Couplings, FactorModel, TrainConfig};
use crate::recommender::{fit, Algorithm, AuxInputs, FactorPredictor, FitConfig, RatingPredictor};

#[derive(Debug, Parser)]
#[command(
    name = "coupled-rec",
    version,
    about = "Coupled similarity, clustering and recommendation"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Plain-text `key = value` file supplying default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: u16,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupled object similarity of every pair in an attribute table.
    Sim(SimArgs),
    /// Cluster the objects of an attribute table.
    Cluster(ClusterArgs),
    /// Predict ratings for the pairs in a `user_id,item_id` file.
    Predict(PredictArgs),
    /// Train a factor model and save it.
    #[command(name = "train-mf")]
    TrainMf(TrainArgs),
    /// Cross-validated RMSE and MAE per algorithm.
    Eval(EvalArgs),
    /// Prediction throughput per algorithm and cluster count.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Attribute table: header `id,attr…`.
    #[arg(long, value_name = "FILE")]
    pub attrs: PathBuf,
    /// Output CSV (stdout when absent).
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Similarity {
    Coupled,
    Matching,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long, value_name = "FILE")]
    pub attrs: PathBuf,
    #[arg(long, short)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = Similarity::Coupled)]
    pub similarity: Similarity,
    /// Assignment CSV `object_id,cluster` (stdout when absent).
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Mode CSV `cluster,attr…`.
    #[arg(long, value_name = "FILE")]
    pub modes_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Ratings: header `user_id,item_id,rating`.
    #[arg(long, value_name = "FILE")]
    pub ratings: PathBuf,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub r_min: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub r_max: f64,
    /// Item attribute table, required by ck-cf.
    #[arg(long, value_name = "FILE")]
    pub item_attrs: Option<PathBuf>,
    /// User-user relation graph `src,dst,weight`, used by cmf.
    #[arg(long, value_name = "FILE")]
    pub social: Option<PathBuf>,
    /// Item-item relation graph `src,dst,weight`, used by cmf.
    #[arg(long, value_name = "FILE")]
    pub item_links: Option<PathBuf>,
    /// Row-normalize relation graphs on load.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Cluster,
    Global,
}

#[derive(Debug, Args)]
pub struct CfArgs {
    /// Neighbors used per prediction.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub cap: NonZeroUsize,
    /// Item clusters for ck-cf.
    #[arg(long, short, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Where ck-cf looks for neighbors.
    #[arg(long, value_enum, default_value_t = Source::Cluster)]
    pub source: Source,
}

#[derive(Debug, Args)]
pub struct MfArgs {
    /// Latent dimension.
    #[arg(long, short, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub init_scale: f64,
    /// Learn the global offset instead of fixing it to the rating mean.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub train_offset: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cf: CfArgs,
    #[command(flatten)]
    pub mf: MfArgs,
    #[arg(long)]
    pub algo: String,
    /// Pairs to score: header `user_id,item_id`.
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    /// Saved factor model for basemf or cmf; skips training.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub mf: MfArgs,
    /// Train the coupled model; needs `--social` or `--item-links`.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub coupled: bool,
    /// Model file.
    #[arg(long, short, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-epoch training loss CSV `epoch,loss`.
    #[arg(long, value_name = "FILE")]
    pub losses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cf: CfArgs,
    #[command(flatten)]
    pub mf: MfArgs,
    /// Comma-separated algorithm labels.
    #[arg(long, value_delimiter = ',', required = true)]
    pub algo: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cf: CfArgs,
    #[command(flatten)]
    pub mf: MfArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub algo: Vec<String>,
    /// Comma-separated cluster counts; one row per algorithm and count.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub requests: usize,
    #[arg(long, default_value_t = 100)]
    pub warmup: usize,
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

const COMMANDS: [&str; 6] = ["sim", "cluster", "predict", "train-mf", "eval", "bench"];

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match with_config_defaults(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

/// Inserts `--key value` pairs from the `--config` file right after the
/// subcommand, so flags given on the command line win.
fn with_config_defaults(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        }
    }
    let Some(path) = config else { return Ok(args) };
    let Some(at) = args.iter().position(|a| COMMANDS.iter().any(|c| a == c)) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let defaults = parse_config(&text)?;
    let tail = args.split_off(at + 1);
    for (key, value) in defaults {
        args.push(format!("--{}", key.replace('_', "-")).into());
        args.push(value.into());
    }
    args.extend(tail);
    Ok(args)
}

/// `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: n as u64 + 1,
            message: format!("expected `key = value`, found {line:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key == "config" {
            return Err(Error::Parse {
                line: n as u64 + 1,
                message: format!("invalid key {key:?}"),
            });
        }
        out.push((key.to_owned(), value.to_owned()));
    }
    Ok(out)
}

fn execute(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(usize::from(cli.threads))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let seed = cli.seed;
    pool.install(|| match cli.command {
        Command::Sim(a) => cmd_sim(&a),
        Command::Cluster(a) => cmd_cluster(&a, seed),
        Command::Predict(a) => cmd_predict(&a, seed),
        Command::TrainMf(a) => cmd_train(&a, seed),
        Command::Eval(a) => cmd_eval(&a, seed),
        Command::Bench(a) => cmd_bench(&a, seed),
    })
}

fn require_files<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::io(
                p,
                io::Error::new(io::ErrorKind::NotFound, "input file not found"),
            ));
        }
    }
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::io(p, e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut out: Box<dyn Write>, path: Option<&Path>) -> Result<()> {
    out.flush()
        .map_err(|e| Error::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn cmd_sim(a: &SimArgs) -> Result<()> {
    require_files([a.attrs.as_path()])?;
    let table = load_attribute_table(&a.attrs)?;
    let matrix = coupling_matrix(&table, &CouplingParams::uniform(table.num_attributes()))?;
    let out = output(a.out.as_deref())?;
    let mut out = out;
    matrix.write_csv(table.objects().ids(), &mut out)?;
    finish(out, a.out.as_deref())
}

fn cmd_cluster(a: &ClusterArgs, seed: u64) -> Result<()> {
    if a.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "--max-iter must be at least 1".into(),
        ));
    }
    require_files([a.attrs.as_path()])?;
    let table = load_attribute_table(&a.attrs)?;
    if a.k == 0 || a.k > table.num_objects() {
        return Err(Error::InvalidArgument(format!(
            "-k {} must lie in 1..={}",
            a.k,
            table.num_objects()
        )));
    }
    let model = match a.similarity {
        Similarity::Coupled => ck_modes(
            &table,
            a.k,
            seed,
            a.max_iter,
            &CouplingParams::uniform(table.num_attributes()),
        )?,
        Similarity::Matching => plain_k_modes(&table, a.k, seed, a.max_iter)?,
    };
    let mut out = output(a.out.as_deref())?;
    model.write_assignment_csv(&table, &mut out)?;
    finish(out, a.out.as_deref())?;
    if let Some(p) = &a.modes_out {
        let mut out = output(Some(p))?;
        model.write_modes_csv(&table, &mut out)?;
        finish(out, Some(p))?;
    }
    Ok(())
}

fn mf_config(a: &MfArgs, seed: u64) -> Result<TrainConfig> {
    let config = TrainConfig {
        rank: a.d,
        lambda: a.lambda,
        learning_rate: a.lr,
        epochs: a.epochs,
        init_scale: a.init_scale,
        seed,
        train_offset: a.train_offset,
        ..TrainConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn fit_config(cf: &CfArgs, mf: &MfArgs, seed: u64) -> Result<FitConfig> {
    if cf.k == 0 {
        return Err(Error::InvalidArgument("-k must be at least 1".into()));
    }
    if cf.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "--max-iter must be at least 1".into(),
        ));
    }
    Ok(FitConfig {
        neighbors: cf.cap,
        source: match cf.source {
            Source::Cluster => NeighborSource::Cluster,
            Source::Global => NeighborSource::Global,
        },
        clusters: cf.k,
        max_iter: cf.max_iter,
        seed,
        coupling: None,
        mf: mf_config(mf, seed)?,
    })
}

fn parse_algorithms(labels: &[String]) -> Result<Vec<Algorithm>> {
    labels.iter().map(|l| l.trim().parse()).collect()
}

impl DataArgs {
    fn inputs(&self) -> impl Iterator<Item = &Path> {
        std::iter::once(self.ratings.as_path())
            .chain(self.item_attrs.as_deref())
            .chain(self.social.as_deref())
            .chain(self.item_links.as_deref())
    }

    fn load(&self, algorithms: &[Algorithm]) -> Result<(RatingDataset, AuxInputs)> {
        if algorithms.contains(&Algorithm::CoupledCf) && self.item_attrs.is_none() {
            return Err(Error::InvalidArgument("ck-cf needs --item-attrs".into()));
        }
        if algorithms.contains(&Algorithm::CoupledMf)
            && self.social.is_none()
            && self.item_links.is_none()
        {
            return Err(Error::InvalidArgument(
                "cmf needs --social or --item-links".into(),
            ));
        }
        require_files(self.inputs())?;
        let data = load_ratings(&self.ratings, self.r_min, self.r_max)?;
        let item_attrs = match &self.item_attrs {
            Some(p) => Some(load_attribute_table(p)?),
            None => None,
        };
        let couplings = if self.social.is_some() || self.item_links.is_some() {
            let graph = |path: &Option<PathBuf>, nodes, n| -> Result<RelationGraph> {
                Ok(match path {
                    Some(p) => load_graph(p, nodes, self.normalize)?.graph,
                    None => RelationGraph::empty(n),
                })
            };
            Some(Couplings::new(
                graph(&self.social, data.users(), data.num_users())?,
                graph(&self.item_links, data.items(), data.num_items())?,
            ))
        } else {
            None
        };
        Ok((
            data,
            AuxInputs {
                item_attrs,
                couplings,
            },
        ))
    }
}

fn cmd_predict(a: &PredictArgs, seed: u64) -> Result<()> {
    let algorithm: Algorithm = a.algo.parse()?;
    let config = fit_config(&a.cf, &a.mf, seed)?;
    if a.model.is_some() && !matches!(algorithm, Algorithm::BaseMf | Algorithm::CoupledMf) {
        return Err(Error::InvalidArgument(format!(
            "--model applies to basemf and cmf, not {algorithm}"
        )));
    }
    require_files(std::iter::once(a.pairs.as_path()).chain(a.model.as_deref()))?;
    let (data, aux) = a.data.load(&[algorithm])?;
    let pairs = load_pairs(&a.pairs)?;
    let index = RatingIndex::new(&data)?;

    let predictor: Box<dyn RatingPredictor> = match &a.model {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let model = FactorModel::read_from(BufReader::new(file))?;
            if model.num_users() != data.num_users() || model.num_items() != data.num_items() {
                return Err(Error::InvalidArgument(format!(
                    "{}: model is {}x{}, ratings have {} users and {} items",
                    path.display(),
                    model.num_users(),
                    model.num_items(),
                    data.num_users(),
                    data.num_items()
                )));
            }
            let couplings = match algorithm {
                Algorithm::CoupledMf => aux.couplings.clone(),
                _ => None,
            };
            Box::new(FactorPredictor {
                model,
                couplings,
                range: data.range(),
            })
        }
        None => fit(algorithm, &data, &aux, &config)?,
    };

    let mut out = output(a.out.as_deref())?;
    let path = a.out.as_deref().unwrap_or(Path::new("<stdout>"));
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(&mut out);
    wtr.write_record(["user_id", "item_id", "prediction"])
        .map_err(|e| Error::csv(path, e))?;
    for (user_id, item_id) in &pairs {
        let u = data.users().index_of(user_id);
        let i = data.items().index_of(item_id);
        let value = match (u, i) {
            (Some(u), Some(i)) => predictor.predict(u, i),
            _ => data.range().clamp(index.fallback(u, i)),
        };
        wtr.write_record([user_id.as_str(), item_id.as_str(), &format!("{value:.6}")])
            .map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    drop(wtr);
    finish(out, a.out.as_deref())
}

fn cmd_train(a: &TrainArgs, seed: u64) -> Result<()> {
    let config = mf_config(&a.mf, seed)?;
    let algorithm = if a.coupled {
        Algorithm::CoupledMf
    } else {
        Algorithm::BaseMf
    };
    let (data, aux) = a.data.load(&[algorithm])?;
    let graphs = if a.coupled {
        aux.couplings.as_ref()
    } else {
        None
    };
    let outcome = mf::train(&data, graphs, &config)?;
    let mut out = output(Some(&a.out))?;
    outcome.model.write_to(&mut out)?;
    finish(out, Some(&a.out))?;
    if let Some(p) = &a.losses {
        let mut out = output(Some(p))?;
        writeln!(out, "epoch,loss").map_err(|e| Error::io(p, e))?;
        for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
            writeln!(out, "{},{loss:.9}", epoch + 1).map_err(|e| Error::io(p, e))?;
        }
        finish(out, Some(p))?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, seed: u64) -> Result<()> {
    let algorithms = parse_algorithms(&a.algo)?;
    let config = fit_config(&a.cf, &a.mf, seed)?;
    if a.folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "--folds {} must be at least 2",
            a.folds
        )));
    }
    let (data, aux) = a.data.load(&algorithms)?;
    if a.folds > data.len() {
        return Err(Error::InvalidArgument(format!(
            "--folds {} exceeds the {} ratings",
            a.folds,
            data.len()
        )));
    }
    let reports = algorithms
        .iter()
        .map(|&alg| cross_validate(&data, &aux, alg, &config, a.folds, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut out = output(a.out.as_deref())?;
    write_reports_csv(&reports, &mut out)?;
    finish(out, a.out.as_deref())
}

fn cmd_bench(a: &BenchArgs, seed: u64) -> Result<()> {
    let algorithms = parse_algorithms(&a.algo)?;
    let base = fit_config(&a.cf, &a.mf, seed)?;
    if a.ks.contains(&0) {
        return Err(Error::InvalidArgument(
            "--ks entries must be at least 1".into(),
        ));
    }
    let (data, aux) = a.data.load(&algorithms)?;
    let mut results = Vec::new();
    for &alg in &algorithms {
        for &k in &a.ks {
            let config = FitConfig {
                clusters: k,
                ..base.clone()
            };
            results.push(throughput_bench(
                alg, &data, &aux, &config, a.requests, a.warmup,
            )?);
        }
    }
    let mut out = output(a.out.as_deref())?;
    write_bench_csv(&results, &mut out)?;
    finish(out, a.out.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let parsed = parse_config("# defaults\nseed = 7\n\nlr=0.02  # step\n").unwrap();
        assert_eq!(
            parsed,
            vec![
                ("seed".to_string(), "7".to_string()),
                ("lr".to_string(), "0.02".to_string())
            ]
        );
        assert!(matches!(
            parse_config("seed 7"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn config_values_precede_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        fs::write(&cfg, "k = 3\nmax_iter = 7\n").unwrap();
        let args: Vec<OsString> = [
            "coupled-rec",
            "--config",
            cfg.to_str().unwrap(),
            "cluster",
            "--attrs",
            "a.csv",
            "-k",
            "2",
        ]
        .iter()
        .map(OsString::from)
        .collect();
        let cli = Cli::try_parse_from(with_config_defaults(args).unwrap()).unwrap();
        let Command::Cluster(c) = cli.command else {
            panic!("expected cluster")
        };
        assert_eq!(c.k, 2);
        assert_eq!(c.max_iter, 7);
    }

    #[test]
    fn help_and_bad_flags() {
        assert_eq!(run(["coupled-rec", "--help"]), 0);
        assert_eq!(run(["coupled-rec", "sim"]), 2);
        assert_eq!(
            run(["coupled-rec", "cluster", "--attrs", "x.csv", "-k", "nope"]),
            2
        );
    }
}
