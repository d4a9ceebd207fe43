//! Cross-validation, grid search and the synthetic gate suite.
//!
//! Every fit owns its seed, derived from the master seed and its position
//! in the sweep, so results do not depend on how many worker threads run
//! them. Only the `fit_seconds` timings vary between runs.

use std::time::Instant;

use hornets_core::datagen::{generate_gate_dataset, suite_seed, Gate, GateSpec, DEFAULT_COUNT};
use hornets_core::eval::{fit_logistic_baseline, mean_std, predict_logistic, stratified_holdout};
use hornets_core::rng::{derive_seed, RngStream};
use hornets_core::{
    fit, macro_f1, predict, stratified_folds, ActivationKind, Dataset, HorNetsConfig, LogisticConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

const FOLD_STREAM: u64 = 0xF01D;
const SPLIT_STREAM: u64 = 0x5A17;
const FIT_STREAM: u64 = 0xF17;

pub const DEFAULT_TEST_FRACTION: f64 = 0.3;

/// Thread pool with `jobs` workers; `jobs` must be positive.
pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(AppError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Format {
            origin: "thread pool".into(),
            message: e.to_string(),
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CvOptions {
    pub folds: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub jobs: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            seeds: 5,
            master_seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub seed_index: usize,
    pub fold: usize,
    pub macro_f1: f64,
    pub fit_seconds: f64,
}

/// Scores of one configuration over `folds × seeds` cells.
///
/// Cells are ordered by `(seed_index, fold)`; `std` is the population
/// standard deviation of the cell scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: HorNetsConfig,
    pub folds: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub cells: Vec<CellScore>,
    pub mean: f64,
    pub std: f64,
    pub total_fit_seconds: f64,
}

impl EvalReport {
    pub fn scores(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.macro_f1).collect()
    }

    /// Copy with every timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.cells.iter_mut().for_each(|c| c.fit_seconds = 0.0);
        out.total_fit_seconds = 0.0;
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::Format {
        origin: "json".into(),
        message: e.to_string(),
    })?;
    text.push('\n');
    Ok(text)
}

fn cv_splits(dataset: &Dataset, opts: &CvOptions) -> Result<Vec<Vec<Vec<usize>>>> {
    if opts.seeds == 0 {
        return Err(AppError::Usage("--seeds must be at least 1".into()));
    }
    (0..opts.seeds)
        .map(|s| {
            let root = derive_seed(opts.master_seed, s as u64);
            let mut rng = RngStream::new(derive_seed(root, FOLD_STREAM));
            Ok(stratified_folds(&dataset.labels, opts.folds, &mut rng)?)
        })
        .collect()
}

fn score_cell(
    dataset: &Dataset,
    config: &HorNetsConfig,
    folds: &[Vec<usize>],
    seed_index: usize,
    fold: usize,
    master_seed: u64,
) -> Result<CellScore> {
    let test = &folds[fold];
    let train: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(f, _)| f != fold)
        .flat_map(|(_, idx)| idx.iter().copied())
        .collect();
    let mut cfg = config.clone();
    cfg.seed = derive_seed(derive_seed(master_seed, seed_index as u64), fold as u64);
    let start = Instant::now();
    let (model, _) = fit(&dataset.subset(&train), &cfg)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let held_out = dataset.subset(test);
    let pred = predict(&model, &held_out.features)?;
    let score = macro_f1(&held_out.labels, &pred, dataset.class_count())?;
    Ok(CellScore {
        seed_index,
        fold,
        macro_f1: score,
        fit_seconds,
    })
}

fn evaluate(dataset: &Dataset, config: &HorNetsConfig, opts: &CvOptions) -> Result<EvalReport> {
    config.validate_for(dataset.feature_count())?;
    let splits = cv_splits(dataset, opts)?;
    let tasks: Vec<(usize, usize)> = (0..opts.seeds)
        .flat_map(|s| (0..opts.folds).map(move |f| (s, f)))
        .collect();
    let cells: Vec<CellScore> = tasks
        .par_iter()
        .map(|&(s, f)| score_cell(dataset, config, &splits[s], s, f, opts.master_seed))
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = cells.iter().map(|c| c.macro_f1).collect();
    let (mean, std) = mean_std(&scores);
    let total_fit_seconds = cells.iter().map(|c| c.fit_seconds).sum();
    Ok(EvalReport {
        config: config.clone(),
        folds: opts.folds,
        seeds: opts.seeds,
        master_seed: opts.master_seed,
        cells,
        mean,
        std,
        total_fit_seconds,
    })
}

/// Stratified `folds`-fold cross-validation repeated over `seeds` shuffles.
///
/// Every split is checked before any model is fitted, so a class with too
/// few members fails fast with a stratification error.
pub fn run_cv(dataset: &Dataset, config: &HorNetsConfig, opts: &CvOptions) -> Result<EvalReport> {
    let pool = thread_pool(opts.jobs)?;
    pool.install(|| evaluate(dataset, config, opts))
}

/// Cartesian hyperparameter grid.
///
/// JSON schema:
///
/// ```json
/// { "activations": [{"kind": "poly_clip", "k": 1}, {"kind": "relu"}],
///   "orders": [4, 8], "rule_counts": [4, 8], "learning_rates": [0.01],
///   "batch_size": 15,
///   "base": { ...optional full HorNetsConfig for the remaining fields... } }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub activations: Vec<ActivationKind>,
    pub orders: Vec<usize>,
    pub rule_counts: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<HorNetsConfig>,
}

pub const GRID_SIZES: [usize; 10] = [4, 8, 16, 32, 64, 128, 512, 1024, 2048, 4096];

impl GridSpec {
    /// Two activations, ten orders, ten rule counts, three learning rates.
    pub fn standard() -> Self {
        Self {
            activations: vec![ActivationKind::default(), ActivationKind::Relu],
            orders: GRID_SIZES.to_vec(),
            rule_counts: GRID_SIZES.to_vec(),
            learning_rates: vec![0.001, 0.01, 0.1],
            batch_size: 15,
            base: None,
        }
    }

    pub fn len(&self) -> usize {
        self.activations.len() * self.orders.len() * self.rule_counts.len() * self.learning_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("activations", self.activations.is_empty()),
            ("orders", self.orders.is_empty()),
            ("rule_counts", self.rule_counts.is_empty()),
            ("learning_rates", self.learning_rates.is_empty()),
        ];
        if let Some((axis, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(hornets_core::Error::Config(format!("grid axis '{axis}' is empty")).into());
        }
        for cfg in self.configs() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Keeps only orders and rule counts up to the given caps.
    pub fn restrict(&self, max_order: usize, max_rules: usize) -> Self {
        let mut out = self.clone();
        out.orders.retain(|&o| o <= max_order);
        out.rule_counts.retain(|&r| r <= max_rules);
        out
    }

    /// Every configuration, activation-major then order, rules, learning rate.
    pub fn configs(&self) -> Vec<HorNetsConfig> {
        let base = self.base.clone().unwrap_or_default();
        let mut out = Vec::with_capacity(self.len());
        for &activation in &self.activations {
            for &order in &self.orders {
                for &num_rules in &self.rule_counts {
                    for &learning_rate in &self.learning_rates {
                        out.push(HorNetsConfig {
                            activation,
                            order,
                            num_rules,
                            learning_rate,
                            batch_size: self.batch_size,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let grid: GridSpec = serde_json::from_str(text).map_err(|e| AppError::Format {
            origin: origin.to_owned(),
            message: e.to_string(),
        })?;
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedConfig {
    /// Position in [`GridSpec::configs`].
    pub grid_index: usize,
    pub report: EvalReport,
}

/// Evaluates every grid cell and ranks by mean macro-F1, then by lower
/// total fit time, then by grid position.
pub fn grid_search(dataset: &Dataset, grid: &GridSpec, opts: &CvOptions) -> Result<Vec<RankedConfig>> {
    grid.validate()?;
    let configs = grid.configs();
    let pool = thread_pool(opts.jobs)?;
    let reports: Vec<EvalReport> =
        pool.install(|| configs.par_iter().map(|cfg| evaluate(dataset, cfg, opts)).collect::<Result<_>>())?;
    let mut ranked: Vec<RankedConfig> = reports
        .into_iter()
        .enumerate()
        .map(|(grid_index, report)| RankedConfig { grid_index, report })
        .collect();
    ranked.sort_by(|a, b| {
        b.report
            .mean
            .total_cmp(&a.report.mean)
            .then(a.report.total_fit_seconds.total_cmp(&b.report.total_fit_seconds))
            .then(a.grid_index.cmp(&b.grid_index))
    });
    Ok(ranked)
}

/// A model family scored on the synthetic suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HorNets(HorNetsConfig),
    Logistic(LogisticConfig),
}

impl Method {
    /// Column label in result tables.
    pub fn family(&self) -> &'static str {
        match self {
            Method::HorNets(c) if c.activation == ActivationKind::Relu => "hornets-relu",
            Method::HorNets(_) => "hornets-polyclip",
            Method::Logistic(_) => "logistic",
        }
    }
}

/// Generation and split parameters of the synthetic suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub count: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub test_fraction: f64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            count: DEFAULT_COUNT,
            repetitions: 30,
            base_seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

/// Holdout macro-F1 of `method` on one generated repetition.
///
/// The dataset, the split and the fit seed all derive from
/// `suite_seed(base_seed, gate, dim, repetition)`.
pub fn holdout_score(spec: &SuiteSpec, gate: Gate, dim: usize, repetition: usize, method: &Method) -> Result<f64> {
    let seed = suite_seed(spec.base_seed, gate, dim, repetition);
    let ds = generate_gate_dataset(&GateSpec::new(gate, dim, seed).with_count(spec.count))?;
    let mut rng = RngStream::new(derive_seed(seed, SPLIT_STREAM));
    let (train_idx, test_idx) = stratified_holdout(&ds.labels, spec.test_fraction, &mut rng)?;
    let (train, test) = (ds.subset(&train_idx), ds.subset(&test_idx));
    let pred = match method {
        Method::HorNets(config) => {
            let cfg = HorNetsConfig {
                seed: derive_seed(seed, FIT_STREAM),
                ..config.clone()
            };
            let (model, _) = fit(&train, &cfg)?;
            predict(&model, &test.features)?
        }
        Method::Logistic(config) => {
            let model = fit_logistic_baseline(&train, *config)?;
            predict_logistic(&model, &test.features)?
        }
    };
    Ok(macro_f1(&test.labels, &pred, ds.class_count())?)
}

/// Holdout scores of `method` over every repetition, in repetition order.
pub fn holdout_scores(spec: &SuiteSpec, gate: Gate, dim: usize, method: &Method) -> Result<Vec<f64>> {
    (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| holdout_score(spec, gate, dim, rep, method))
        .collect()
}

/// One `(gate, dim, method family)` line of the suite table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub gate: Gate,
    pub dim: usize,
    pub method: String,
    pub mean: f64,
    pub std: f64,
    /// Index into the method list of the best member of this family.
    pub best_method: usize,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub spec: SuiteSpec,
    pub methods: Vec<Method>,
    pub rows: Vec<SuiteRow>,
}

impl SuiteResult {
    /// `gate,dim,method,mean,std,repetitions,best_method`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gate,dim,method,mean,std,repetitions,best_method\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{},{}\n",
                r.gate,
                r.dim,
                r.method,
                r.mean,
                r.std,
                r.scores.len(),
                r.best_method
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// Scores every method on every `(gate, dim)` cell and keeps, per method
/// family, the member with the highest mean (ties go to the earlier one).
///
/// `progress` is called once per finished cell.
pub fn run_suite(
    spec: &SuiteSpec,
    gates: &[Gate],
    dims: &[usize],
    methods: &[Method],
    jobs: usize,
    mut progress: impl FnMut(Gate, usize),
) -> Result<SuiteResult> {
    if methods.is_empty() {
        return Err(AppError::Usage("no methods to benchmark".into()));
    }
    if spec.repetitions == 0 {
        return Err(AppError::Usage("--reps must be at least 1".into()));
    }
    for m in methods {
        if let Method::HorNets(c) = m {
            c.validate()?;
        }
    }
    let pool = thread_pool(jobs)?;
    let mut rows = Vec::new();
    for &gate in gates {
        for &dim in dims {
            GateSpec::new(gate, dim, 0).validate()?;
            let per_method: Vec<Vec<f64>> = pool.install(|| {
                methods
                    .par_iter()
                    .map(|m| holdout_scores(spec, gate, dim, m))
                    .collect::<Result<_>>()
            })?;
            let mut families: Vec<&'static str> = Vec::new();
            for m in methods {
                if !families.contains(&m.family()) {
                    families.push(m.family());
                }
            }
            for family in families {
                let mut best: Option<(usize, f64, f64)> = None;
                for (i, _) in methods.iter().enumerate().filter(|(_, m)| m.family() == family) {
                    let (mean, std) = mean_std(&per_method[i]);
                    if best.is_none_or(|(_, b, _)| mean > b) {
                        best = Some((i, mean, std));
                    }
                }
                let (i, mean, std) = best.expect("family has a member");
                rows.push(SuiteRow {
                    gate,
                    dim,
                    method: family.into(),
                    mean,
                    std,
                    best_method: i,
                    scores: per_method[i].clone(),
                });
            }
            progress(gate, dim);
        }
    }
    Ok(SuiteResult {
        spec: spec.clone(),
        methods: methods.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_has_600_cells() {
        let grid = GridSpec::standard();
        assert_eq!(grid.len(), 600);
        assert_eq!(grid.configs().len(), 600);
        assert!(grid.configs().iter().all(|c| c.batch_size == 15));
        assert_eq!(grid.restrict(64, 64).len(), 2 * 5 * 5 * 3);
    }

    #[test]
    fn empty_axis_rejected() {
        let mut grid = GridSpec::standard();
        grid.learning_rates.clear();
        assert!(grid.is_empty());
        assert!(grid.validate().unwrap_err().to_string().contains("learning_rates"));
    }

    #[test]
    fn grid_json_round_trip() {
        let text = to_json(&GridSpec::standard()).unwrap();
        assert!(text.contains("\"poly_clip\""));
        assert_eq!(GridSpec::from_json(&text, "mem").unwrap(), GridSpec::standard());
    }

    #[test]
    fn grid_base_fills_other_fields() {
        let text = r#"{"activations":[{"kind":"relu"}],"orders":[4],"rule_counts":[8],
            "learning_rates":[0.1],"batch_size":10,"base":null}"#;
        let grid = GridSpec::from_json(text, "mem").unwrap();
        let cfg = &grid.configs()[0];
        assert_eq!((cfg.order, cfg.num_rules, cfg.batch_size), (4, 8, 10));
        assert_eq!(cfg.epochs, HorNetsConfig::default().epochs);
    }

    #[test]
    fn zero_jobs_is_a_usage_error() {
        assert_eq!(thread_pool(0).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn families() {
        let relu = HorNetsConfig {
            activation: ActivationKind::Relu,
            ..Default::default()
        };
        assert_eq!(Method::HorNets(relu).family(), "hornets-relu");
        assert_eq!(Method::HorNets(HorNetsConfig::default()).family(), "hornets-polyclip");
        assert_eq!(Method::Logistic(LogisticConfig::default()).family(), "logistic");
    }
}
