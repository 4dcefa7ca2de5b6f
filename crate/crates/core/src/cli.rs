//! Command implementations behind the `gdsrec` binary.
//!
//! A training run writes into `out_dir`:
//!
//! | file              | content                                         |
//! |-------------------|-------------------------------------------------|
//! | `config.txt`      | effective [`RunConfig`], every key               |
//! | `manifest.txt`    | dims, entity counts, scale, seed (reload checks) |
//! | `model.ckpt`      | parameters, see [`crate::diffcore::save`]        |
//! | `metrics.log`     | `epoch,train_loss,val_metric,seconds` per epoch  |
//! | `train_report.txt`| test metrics of the kept parameters              |
//!
//! `evaluate` adds `report.txt` and `predictions.tsv`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dataset::{load_ratings, load_trust, DataError, LoadedRatings, LoadedTrust};
use crate::diffcore::{self, sigmoid, DiffError};
use crate::eval::{self, EvalError, EvalReport};
use crate::model::{Model, NeighborSample};
use crate::pipeline::{make_splits, Context, Splits};
use crate::synth::{self, SynthConfig, SynthData, SynthError};
use crate::trainer::{fit, EpochRecord, Task, TrainError, TrainHistory};

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.log";
pub const TRAIN_REPORT_FILE: &str = "train_report.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";

const MANIFEST_FORMAT: &str = "gdsrec-manifest-1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 1 for usage/config problems, 2 for data problems, 3 for internal
    /// invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Manifest(_) => 1,
            CliError::Synth(SynthError::Invalid(_)) => 1,
            CliError::Data(_) | CliError::Io { .. } | CliError::Synth(SynthError::Io(_)) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<DiffError> for CliError {
    fn from(e: DiffError) -> Self {
        match e {
            DiffError::Io(source) => CliError::Io {
                path: "checkpoint".into(),
                source,
            },
            DiffError::LayoutMismatch(m) | DiffError::Checkpoint(m) => CliError::Manifest(m),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(ConfigError::Invalid(m)),
            TrainError::Diff(d) => d.into(),
            TrainError::Eval(e) => e.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(d) => d.into(),
            EvalError::SingleClass(_) | EvalError::Empty => CliError::Data(DataError::Parse {
                source_name: "test split".into(),
                line: 0,
                message: e.to_string(),
            }),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Loaded data, splits and training context for one configuration.
pub struct PreparedRun {
    pub config: RunConfig,
    pub ratings: LoadedRatings,
    pub trust: LoadedTrust,
    pub splits: Splits,
    pub ctx: Context,
}

impl PreparedRun {
    pub fn num_users(&self) -> usize {
        self.ratings.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.ratings.items.len()
    }
}

fn load_inputs(cfg: &RunConfig) -> Result<(LoadedRatings, LoadedTrust), CliError> {
    let ratings = load_ratings(cfg.ratings_path()?, cfg.scale()?)?;
    let trust = match &cfg.trust {
        Some(path) => load_trust(path, &ratings.users)?,
        None => LoadedTrust::default(),
    };
    Ok((ratings, trust))
}

/// Loads, splits and builds the context from the training portion.
pub fn prepare(cfg: &RunConfig) -> Result<PreparedRun, CliError> {
    cfg.validate()?;
    let (ratings, trust) = load_inputs(cfg)?;
    let splits = make_splits(
        &ratings.records,
        cfg.test_fraction,
        cfg.train.val_fraction,
        cfg.train.seed,
    )?;
    let ctx = Context::build(
        &splits.train,
        &trust.pairs,
        ratings.users.len(),
        ratings.items.len(),
        cfg.scale()?,
        cfg.delta,
    )?;
    Ok(PreparedRun {
        config: cfg.clone(),
        ratings,
        trust,
        splits,
        ctx,
    })
}

/// Dimensions and data facts a checkpoint was trained against.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn for_run(run: &PreparedRun, model: &Model, history: &TrainHistory) -> Self {
        let cfg = &run.config;
        let mut entries = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            entries.insert(k.to_owned(), v);
        };
        put("format", MANIFEST_FORMAT.into());
        put("dim", model.dims.dim.to_string());
        put("diff_levels", model.dims.diff_levels.to_string());
        put("attn_hidden", model.dims.attn_hidden.to_string());
        put("mlp_hidden", model.dims.mlp_hidden.to_string());
        put("num_users", model.num_users.to_string());
        put("num_items", model.num_items.to_string());
        put("r_min", cfg.r_min.to_string());
        put("r_max", cfg.r_max.to_string());
        put("seed", cfg.train.seed.to_string());
        put("task", cfg.train.task.to_string());
        put("num_scalars", model.store.num_scalars().to_string());
        put(
            "best_epoch",
            history.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
        );
        Manifest { entries }
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Manifest(format!("malformed line {line:?}")))?;
            entries.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        if entries.get("format").map(String::as_str) != Some(MANIFEST_FORMAT) {
            return Err(CliError::Manifest("unrecognized manifest format".into()));
        }
        Ok(Manifest { entries })
    }

    /// Every key of `expected` must carry the same value here.
    pub fn check_against(&self, expected: &Manifest) -> Result<(), CliError> {
        const CHECKED: &[&str] = &[
            "dim",
            "diff_levels",
            "attn_hidden",
            "mlp_hidden",
            "num_users",
            "num_items",
            "r_min",
            "r_max",
            "num_scalars",
        ];
        for key in CHECKED {
            let (found, want) = (self.entries.get(*key), expected.entries.get(*key));
            if found != want {
                return Err(CliError::Manifest(format!(
                    "{key}: checkpoint has {}, configuration implies {}",
                    found.map(String::as_str).unwrap_or("<missing>"),
                    want.map(String::as_str).unwrap_or("<missing>")
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub report: EvalReport,
    pub out_dir: PathBuf,
}

/// split → statistics → graph → fit, then writes the run directory.
pub fn cmd_train(
    cfg: &RunConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, CliError> {
    let run = prepare(cfg)?;
    let dims = cfg.dims()?;
    let mut model = Model::new(dims, run.num_users(), run.num_items(), cfg.train.seed);
    let out_dir = cfg.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;

    let metrics_path = out_dir.join(METRICS_FILE);
    let mut metrics = fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    writeln!(metrics, "epoch,train_loss,val_metric,seconds").map_err(io_err(&metrics_path))?;
    let mut log_err = None;
    let history = fit(
        &mut model,
        &run.ctx,
        &run.splits.train,
        &run.splits.val,
        &cfg.train,
        |rec| {
            if let Err(e) = writeln!(metrics, "{}", rec.log_line()) {
                log_err.get_or_insert(e);
            }
            on_epoch(rec);
        },
    )?;
    if let Some(e) = log_err {
        return Err(io_err(&metrics_path)(e));
    }

    let report = eval::evaluate(
        &model,
        &run.ctx,
        &run.splits.test,
        cfg.train.task,
        cfg.train.threshold,
    )?;
    write_file(&out_dir.join(CONFIG_FILE), cfg.to_text())?;
    write_file(
        &out_dir.join(MANIFEST_FILE),
        Manifest::for_run(&run, &model, &history).to_text(),
    )?;
    diffcore::save(&model.store, &out_dir.join(CHECKPOINT_FILE))?;
    write_file(&out_dir.join(TRAIN_REPORT_FILE), report.to_record())?;
    Ok(TrainOutcome {
        history,
        report,
        out_dir,
    })
}

/// A trained model reattached to its data.
pub struct LoadedRun {
    pub run: PreparedRun,
    pub model: Model,
}

/// Reads `config.txt` from `run_dir`, applies `overrides`, rebuilds the
/// splits from the recorded seed, and loads the checkpoint after checking
/// the manifest.
pub fn load_run(run_dir: &Path, overrides: &[(String, String)]) -> Result<LoadedRun, CliError> {
    let mut cfg = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    let run = prepare(&cfg)?;
    let mut model = Model::new(cfg.dims()?, run.num_users(), run.num_items(), cfg.train.seed);
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let stored = Manifest::parse(&text)?;
    stored.check_against(&Manifest::for_run(&run, &model, &TrainHistory::default()))?;
    diffcore::load(&mut model.store, &run_dir.join(CHECKPOINT_FILE))?;
    Ok(LoadedRun { run, model })
}

/// Evaluates the stored model on the reconstructed test split and writes
/// `report.txt` and `predictions.tsv`.
pub fn cmd_evaluate(run_dir: &Path, overrides: &[(String, String)]) -> Result<EvalReport, CliError> {
    let LoadedRun { run, model } = load_run(run_dir, overrides)?;
    let test = &run.splits.test;
    let preds = eval::predict_all(&model, &run.ctx, test)?;
    let cfg = &run.config;
    let report = eval::report_from_predictions(
        &run.ctx,
        test,
        &preds,
        cfg.train.task,
        cfg.train.threshold,
    )?;
    let mut lines = String::from("user\titem\trating\tprediction\n");
    for (r, p) in test.iter().zip(&preds) {
        lines.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            run.ratings.users.raw(r.user).unwrap_or("?"),
            run.ratings.items.raw(r.item).unwrap_or("?"),
            r.rating,
            p
        ));
    }
    write_file(&run_dir.join(PREDICTIONS_FILE), lines)?;
    write_file(&run_dir.join(REPORT_FILE), report.to_record())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub rating: f64,
    /// `sigmoid(rating)` for ranking runs.
    pub probability: Option<f64>,
    pub cold_user: bool,
    pub cold_item: bool,
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rating={}", self.rating)?;
        if let Some(p) = self.probability {
            write!(f, "\nprobability={p}")?;
        }
        Ok(())
    }
}

/// Predicts one raw `(user, item)` pair with complete neighborhoods.
/// Unknown ids are treated as cold entities.
pub fn predict_pair(loaded: &LoadedRun, user_raw: &str, item_raw: &str) -> Result<Prediction, CliError> {
    let run = &loaded.run;
    let user = run.ratings.users.get(user_raw);
    let item = run.ratings.items.get(item_raw);
    if user.is_none() {
        log::warn!("unknown user {user_raw:?}; predicting as a cold user");
    }
    if item.is_none() {
        log::warn!("unknown item {item_raw:?}; predicting as a cold item");
    }
    // out-of-range ids have no interactions, neighbors or means
    let user = user.unwrap_or(run.num_users());
    let item = item.unwrap_or(run.num_items());
    let sample = NeighborSample::full(&run.ctx.tables, &run.ctx.graph, user, item);
    let rating = loaded.model.predict(&run.ctx.stats, user, item, &sample)?;
    Ok(Prediction {
        rating,
        probability: (run.config.train.task == Task::Ranking).then(|| sigmoid(rating)),
        cold_user: run.ctx.stats.is_cold_user(user),
        cold_item: run.ctx.stats.is_cold_item(item),
    })
}

pub fn cmd_predict(run_dir: &Path, user_raw: &str, item_raw: &str) -> Result<Prediction, CliError> {
    let loaded = load_run(run_dir, &[])?;
    predict_pair(&loaded, user_raw, item_raw)
}

pub fn cmd_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthData, CliError> {
    let data = synth::generate(cfg)?;
    synth::write(&data, out_dir)?;
    Ok(data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsReport {
    pub num_users: usize,
    pub num_items: usize,
    pub num_ratings: usize,
    pub num_trust: usize,
    pub dropped_self_loops: usize,
    pub dropped_unknown: usize,
    pub dropped_duplicates: usize,
    pub global_mean: Option<f64>,
    /// Rating value (as written) → count.
    pub rating_histogram: Vec<(String, usize)>,
    /// Lower edge of a half-point bin → number of users / items.
    pub user_mean_histogram: Vec<(f64, usize)>,
    pub item_mean_histogram: Vec<(f64, usize)>,
    /// Relationship coefficient → number of edges.
    pub strength_histogram: Vec<(u32, usize)>,
    /// Out-degree → number of users.
    pub degree_histogram: Vec<(usize, usize)>,
}

fn half_point_bins(means: impl Iterator<Item = f64>, lo: f64) -> Vec<(f64, usize)> {
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for m in means {
        *bins.entry(((m - lo) / 0.5).floor() as i64).or_default() += 1;
    }
    bins.into_iter().map(|(b, c)| (lo + 0.5 * b as f64, c)).collect()
}

fn count<K: Ord>(keys: impl Iterator<Item = K>) -> Vec<(K, usize)> {
    let mut m = BTreeMap::new();
    for k in keys {
        *m.entry(k).or_default() += 1;
    }
    m.into_iter().collect()
}

/// Dataset summary over all ratings. When `export` is given the graph is
/// written as `<user> <neighbor> <T>` lines with raw ids.
pub fn cmd_stats(cfg: &RunConfig, export: Option<&Path>) -> Result<StatsReport, CliError> {
    let scale = cfg.scale()?;
    let (ratings, trust) = load_inputs(cfg)?;
    let (nu, ni) = (ratings.users.len(), ratings.items.len());
    let ctx = if ratings.records.is_empty() {
        None
    } else {
        Some(Context::build(&ratings.records, &trust.pairs, nu, ni, scale, cfg.delta)?)
    };
    let mut rating_values: Vec<f64> = ratings.records.iter().map(|r| r.rating).collect();
    rating_values.sort_by(f64::total_cmp);
    let rating_histogram = count(rating_values.iter().map(|r| r.to_bits()))
        .into_iter()
        .map(|(bits, c)| (f64::from_bits(bits).to_string(), c))
        .collect::<Vec<_>>();
    let mut rating_histogram = rating_histogram;
    rating_histogram.sort_by(|a, b| a.0.parse::<f64>().unwrap().total_cmp(&b.0.parse().unwrap()));

    let (user_means, item_means, strengths, degrees, global_mean) = match &ctx {
        Some(ctx) => (
            half_point_bins((0..nu).filter_map(|u| ctx.stats.observed_user_mean(u)), scale.min),
            half_point_bins((0..ni).filter_map(|v| ctx.stats.observed_item_mean(v)), scale.min),
            count(ctx.graph.edges().map(|e| e.2)),
            count((0..nu).map(|u| ctx.graph.neighbors(u).len())),
            Some(ctx.stats.global_mean()),
        ),
        None => (Vec::new(), Vec::new(), Vec::new(), Vec::new(), None),
    };

    if let (Some(path), Some(ctx)) = (export, &ctx) {
        let mut out = String::new();
        for (u, n, t) in ctx.graph.edges() {
            out.push_str(&format!(
                "{} {} {}\n",
                ratings.users.raw(u).unwrap_or("?"),
                ratings.users.raw(n).unwrap_or("?"),
                t
            ));
        }
        write_file(path, out)?;
    }

    Ok(StatsReport {
        num_users: nu,
        num_items: ni,
        num_ratings: ratings.records.len(),
        num_trust: trust.pairs.len(),
        dropped_self_loops: trust.self_loops,
        dropped_unknown: trust.unknown_users,
        dropped_duplicates: trust.duplicates,
        global_mean,
        rating_histogram,
        user_mean_histogram: user_means,
        item_mean_histogram: item_means,
        strength_histogram: strengths,
        degree_histogram: degrees,
    })
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "users={}", self.num_users)?;
        writeln!(f, "items={}", self.num_items)?;
        writeln!(f, "ratings={}", self.num_ratings)?;
        writeln!(f, "trust_pairs={}", self.num_trust)?;
        writeln!(
            f,
            "dropped_trust=self_loops:{} unknown_users:{} duplicates:{}",
            self.dropped_self_loops, self.dropped_unknown, self.dropped_duplicates
        )?;
        if let Some(g) = self.global_mean {
            writeln!(f, "global_mean={g:.4}")?;
        }
        writeln!(f, "[ratings]")?;
        for (r, c) in &self.rating_histogram {
            writeln!(f, "{r}\t{c}")?;
        }
        writeln!(f, "[user_means]")?;
        for (lo, c) in &self.user_mean_histogram {
            writeln!(f, "[{lo:.1},{:.1})\t{c}", lo + 0.5)?;
        }
        writeln!(f, "[item_means]")?;
        for (lo, c) in &self.item_mean_histogram {
            writeln!(f, "[{lo:.1},{:.1})\t{c}", lo + 0.5)?;
        }
        writeln!(f, "[strength]")?;
        for (t, c) in &self.strength_histogram {
            writeln!(f, "{t}\t{c}")?;
        }
        writeln!(f, "[out_degree]")?;
        for (d, c) in &self.degree_histogram {
            writeln!(f, "{d}\t{c}")?;
        }
        Ok(())
    }
}
