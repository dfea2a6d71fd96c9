use std::fmt;

use rayon::prelude::*;

use super::folds::{stratified_kfold, FoldPlan};
use super::metrics::{evaluate, MetricsReport};
use crate::classifier::{train, Features, ModelConfig};
use crate::error::{Error, Result};
use crate::recurrent::CellKind;
use crate::text::{EmbeddingTable, HeadlineExample, Label, Vocabulary};

/// One (architecture, features) cell of the comparison grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPoint {
    pub arch: CellKind,
    pub features: Features,
}

impl GridPoint {
    /// Row label such as `BiLSTM (CE+WE)`.
    pub fn model_name(&self) -> String {
        format!("Bi{} ({})", self.arch.as_str().to_uppercase(), self.features)
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.model_name())
    }
}

/// All nine points, architecture-major: RNN, GRU, LSTM, each with CE, WE, CE+WE.
pub fn full_grid() -> Vec<GridPoint> {
    CellKind::ALL
        .iter()
        .flat_map(|&arch| Features::ALL.iter().map(move |&features| GridPoint { arch, features }))
        .collect()
}

/// `all`, or a comma list of `arch:features` such as `lstm:ce+we,gru:we`.
/// Points are returned in canonical table order without duplicates.
pub fn parse_grid(spec: &str) -> Result<Vec<GridPoint>> {
    if spec.trim() == "all" {
        return Ok(full_grid());
    }
    let mut points = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || Error::Config(format!("grid entry {item:?} is not arch:features"));
        let (a, f) = item.split_once(':').ok_or_else(bad)?;
        let arch = CellKind::parse(a.trim()).ok_or_else(bad)?;
        let features = Features::parse(f.trim()).ok_or_else(bad)?;
        points.push(GridPoint { arch, features });
    }
    if points.is_empty() {
        return Err(Error::Config("grid is empty".into()));
    }
    points.sort();
    points.dedup();
    Ok(points)
}

/// How per-fold results are folded into the summary row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregate {
    /// Arithmetic mean of per-fold metrics.
    #[default]
    Mean,
    /// Metrics recomputed on all held-out predictions at once.
    Pooled,
}

impl Aggregate {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(Aggregate::Mean),
            "pooled" => Some(Aggregate::Pooled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossvalOptions {
    pub folds: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    pub aggregate: Aggregate,
    pub threshold: f64,
}

impl Default for CrossvalOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            jobs: 0,
            aggregate: Aggregate::Mean,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigResult {
    pub point: GridPoint,
    pub folds: Vec<MetricsReport>,
    /// Confusion counts are summed over folds in either aggregation.
    pub summary: MetricsReport,
}

#[derive(Debug)]
pub struct CrossvalResult {
    pub aggregate: Aggregate,
    /// One entry per grid point, in grid order. A failed configuration keeps
    /// its error here and does not stop the others.
    pub configs: Vec<(GridPoint, Result<ConfigResult>)>,
}

impl CrossvalResult {
    pub fn first_error(&self) -> Option<&Error> {
        self.configs.iter().find_map(|(_, r)| r.as_ref().err())
    }

    pub fn get(&self, point: GridPoint) -> Option<&ConfigResult> {
        self.configs
            .iter()
            .find(|(p, _)| *p == point)
            .and_then(|(_, r)| r.as_ref().ok())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The training seed for one fold of one configuration. Depends only on its
/// arguments, so results do not depend on scheduling.
pub fn fold_seed(seed: u64, point: GridPoint, fold: usize) -> u64 {
    let cell = (point.arch as u64) * 3 + point.features as u64;
    splitmix(splitmix(splitmix(seed) ^ cell) ^ fold as u64)
}

/// Per-fold scores, with the labels they are compared against.
type FoldScores = (Vec<f64>, Vec<Label>);

fn run_fold(
    data: &[HeadlineExample],
    plan: &FoldPlan,
    fold: usize,
    point: GridPoint,
    base: &ModelConfig,
    vocab: &Vocabulary,
    words: Option<&EmbeddingTable>,
    seed: u64,
) -> Result<FoldScores> {
    let config = ModelConfig {
        arch: point.arch,
        features: point.features,
        seed: fold_seed(seed, point, fold),
        ..base.clone()
    };
    let train_set: Vec<HeadlineExample> = plan.train_indices(fold).iter().map(|&i| data[i].clone()).collect();
    let words = if point.features.uses_words() { words } else { None };
    let outcome = train(&train_set, &config, vocab.clone(), words)?;
    let test: Vec<&HeadlineExample> = plan.test_indices(fold).iter().map(|&i| &data[i]).collect();
    let probs = outcome.model.score(&test)?;
    Ok((probs, test.iter().map(|e| e.label).collect()))
}

/// Aggregates per-fold scores under `aggregate`.
pub fn summarize(scores: &[FoldScores], aggregate: Aggregate, threshold: f64) -> Result<(Vec<MetricsReport>, MetricsReport)> {
    let folds = scores
        .iter()
        .map(|(p, y)| evaluate(p, y, threshold))
        .collect::<Result<Vec<_>>>()?;
    let sum = |f: fn(&MetricsReport) -> usize| folds.iter().map(f).sum::<usize>();
    let mut summary = MetricsReport::from_counts(
        sum(|r| r.true_pos),
        sum(|r| r.false_pos),
        sum(|r| r.true_neg),
        sum(|r| r.false_neg),
    );
    match aggregate {
        Aggregate::Mean => {
            let k = folds.len() as f64;
            let mean = |f: fn(&MetricsReport) -> f64| folds.iter().map(f).sum::<f64>() / k;
            summary.accuracy = mean(|r| r.accuracy);
            summary.precision = mean(|r| r.precision);
            summary.recall = mean(|r| r.recall);
            summary.f1 = mean(|r| r.f1);
            summary.roc_auc = Some(mean(|r| r.roc_auc.unwrap_or(f64::NAN)));
        }
        Aggregate::Pooled => {
            let probs: Vec<f64> = scores.iter().flat_map(|(p, _)| p.iter().copied()).collect();
            let labels: Vec<Label> = scores.iter().flat_map(|(_, y)| y.iter().copied()).collect();
            summary = evaluate(&probs, &labels, threshold)?;
        }
    }
    Ok((folds, summary))
}

/// Stratified k-fold cross-validation of every grid point.
///
/// `vocab` is built once from the full dataset (it uses no labels) and
/// `words`, if given, must have been loaded against it. Every (point, fold)
/// pair trains an independent model; pairs run in parallel on a pool of
/// `opts.jobs` threads and results are assembled in grid order.
pub fn crossval_run(
    data: &[HeadlineExample],
    grid: &[GridPoint],
    base: &ModelConfig,
    vocab: &Vocabulary,
    words: Option<&EmbeddingTable>,
    opts: &CrossvalOptions,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<CrossvalResult> {
    base.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("grid is empty".into()));
    }
    if words.is_none() {
        if let Some(p) = grid.iter().find(|p| p.features.uses_words()) {
            return Err(Error::Config(format!("{p} needs pretrained word vectors")));
        }
    }
    let labels: Vec<Label> = data.iter().map(|e| e.label).collect();
    let plan = stratified_kfold(&labels, opts.folds, opts.seed)?;

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..plan.k()).map(move |f| (g, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", opts.jobs)))?;
    let outputs: Vec<Result<FoldScores>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(g, f)| {
                let point = grid[g];
                let out = run_fold(data, &plan, f, point, base, vocab, words, opts.seed)
                    .map_err(|e| e.context(format!("{point}, fold {}", f + 1)));
                match &out {
                    Ok(_) => progress(&format!("{point}: fold {}/{} done", f + 1, plan.k())),
                    Err(e) => progress(&format!("{point}: fold {}/{} failed: {e}", f + 1, plan.k())),
                }
                out
            })
            .collect()
    });

    let mut outputs = outputs.into_iter();
    let mut configs = Vec::with_capacity(grid.len());
    for &point in grid {
        let per_fold: Vec<Result<FoldScores>> = outputs.by_ref().take(plan.k()).collect();
        let result = per_fold
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .and_then(|scores| summarize(&scores, opts.aggregate, opts.threshold))
            .map(|(folds, summary)| ConfigResult { point, folds, summary });
        configs.push((point, result));
    }
    Ok(CrossvalResult {
        aggregate: opts.aggregate,
        configs,
    })
}
