//! End-to-end optimisation of a HorNets model.
//!
//! Categorical batches are remapped from `{0, 1}` to `{-1, +1}` and extended
//! with `order` constant `+1` pseudovariable columns before they reach
//! `catInt`. A combination may then spend some of its slots on
//! pseudovariables, which act as masks and let a high-order combination
//! express a lower-order interaction.
//!
//! At the end of every epoch the lowest-scoring combinations (by mean softmax
//! mass) are replaced with fresh uniform draws from the combination space.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::activation::ActivationKind;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::layers::{
    cat_int_backward, cat_int_forward, cat_router, lin_att_backward, lin_att_forward,
    CatIntGrads, CatIntParams, CombTable, LinAttGrads, LinAttParams, Route,
};
use crate::matrix::{softmax_in_place, Matrix};
use crate::rng::{derive_seed, RngStream};

/// Loss improvement below this counts as no improvement for early stopping.
pub const EARLY_STOP_MIN_DELTA: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RoutePolicy {
    /// Route every batch by its value cardinality.
    #[default]
    Auto,
    /// Send every batch down one path regardless of cardinality.
    Pinned(Route),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HorNetsConfig {
    pub activation: ActivationKind,
    /// Features per combination.
    pub order: usize,
    /// Number of combinations carried by `catInt`.
    pub num_rules: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub p_norm: f64,
    pub epsilon: f64,
    /// Fraction of combinations replaced at the end of each epoch.
    pub resample_fraction: f64,
    /// Half-width of the uniform initialisation of factorization rows.
    pub m_init_scale: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub route: RoutePolicy,
}

impl Default for HorNetsConfig {
    fn default() -> Self {
        Self {
            activation: ActivationKind::default(),
            order: 4,
            num_rules: 64,
            learning_rate: 0.01,
            batch_size: 15,
            epochs: 100,
            dropout_rate: 0.2,
            p_norm: 2.0,
            epsilon: 1e-12,
            resample_fraction: 0.5,
            m_init_scale: 0.5,
            seed: 0,
            early_stop_patience: 10,
            route: RoutePolicy::Auto,
        }
    }
}

impl HorNetsConfig {
    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.order == 0 {
            return fail("order must be at least 1".into());
        }
        if self.num_rules < 2 {
            return fail(format!(
                "num_rules = {} is degenerate: softmax over a single combination is constant",
                self.num_rules
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.p_norm >= 1.0 && self.p_norm.is_finite()) {
            return fail(format!("p-norm {} must be >= 1", self.p_norm));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return fail("epsilon must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.resample_fraction) {
            return fail(format!("resample fraction {} outside [0, 1]", self.resample_fraction));
        }
        if !(self.m_init_scale > 0.0 && self.m_init_scale.is_finite()) {
            return fail("factorization init scale must be positive".into());
        }
        if self.early_stop_patience == 0 {
            return fail("early-stop patience must be positive".into());
        }
        Ok(())
    }

    /// Checks the configuration against a concrete input width.
    pub fn validate_for(&self, feature_count: usize) -> Result<()> {
        self.validate()?;
        let augmented = feature_count + self.order;
        if self.order > augmented {
            return Err(Error::Config(format!(
                "order {} exceeds the augmented input width {augmented}",
                self.order
            )));
        }
        Ok(())
    }
}

/// Appends `order` constant `+1` pseudovariable columns.
pub fn augment_pseudovariables(x: &Matrix, order: usize) -> Matrix {
    let cols = x.cols() + order;
    let mut data = Vec::with_capacity(x.rows() * cols);
    for row in x.row_iter() {
        data.extend_from_slice(row);
        data.extend(core::iter::repeat_n(1.0, order));
    }
    Matrix::from_vec(x.rows(), cols, data).expect("augmented shape is consistent")
}

/// Maps `{0, 1}` features to `{-1, +1}`.
pub fn remap_binary_signs(x: &Matrix) -> Result<Matrix> {
    for (i, &v) in x.as_slice().iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            let cols = x.cols().max(1);
            return Err(Error::Input(format!(
                "categorical input must be 0/1, found {v} at row {}, column {}",
                i / cols,
                i % cols
            )));
        }
    }
    Ok(x.map(|v| 2.0 * v - 1.0))
}

/// `C(n, k)` saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) is exact at every step
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// All-subsets enumeration is used when the space is at most this large and
/// the request is dense in it.
const ENUMERATION_LIMIT: u128 = 1 << 16;

fn random_subset(n: usize, k: usize, rng: &mut RngStream) -> Vec<usize> {
    // Floyd's algorithm, then ascending order.
    let mut chosen = BTreeSet::new();
    for j in (n - k)..n {
        let t = rng.below(j + 1);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // rightmost slot that can still advance
        let mut i = k;
        while i > 0 && current[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        current[i - 1] += 1;
        for j in i..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Draws `count` distinct ascending `k`-subsets of `0..n` that are not in
/// `excluded`, uniformly among the remaining subsets.
fn sample_subsets_excluding(
    n: usize,
    k: usize,
    count: usize,
    excluded: &BTreeSet<Vec<usize>>,
    rng: &mut RngStream,
) -> Vec<Vec<usize>> {
    let total = binomial(n, k);
    let wanted = count as u128 + excluded.len() as u128;
    if total <= ENUMERATION_LIMIT && wanted.saturating_mul(2) >= total {
        let mut free: Vec<Vec<usize>> = all_subsets(n, k)
            .into_iter()
            .filter(|s| !excluded.contains(s))
            .collect();
        let take = count.min(free.len());
        for i in 0..take {
            let j = i + rng.below(free.len() - i);
            free.swap(i, j);
        }
        free.truncate(take);
        return free;
    }
    let mut seen = excluded.clone();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s = random_subset(n, k, rng);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Samples `num_rules` distinct combinations of `order` indices from
/// `0..augmented_dim`, clamping `num_rules` to the size of the space.
pub fn sample_combinations(
    augmented_dim: usize,
    order: usize,
    num_rules: usize,
    rng: &mut RngStream,
) -> Result<CombTable> {
    if order == 0 || order > augmented_dim {
        return Err(Error::Config(format!(
            "cannot draw combinations of order {order} from {augmented_dim} columns"
        )));
    }
    let total = binomial(augmented_dim, order);
    let rules = (num_rules as u128).min(total) as usize;
    let rows = sample_subsets_excluding(augmented_dim, order, rules, &BTreeSet::new(), rng);
    CombTable::from_rows(order, &rows)
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn cross_entropy_loss(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::Input(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!("label {bad} outside [0, {classes})")));
    }
    let n = logits.rows() as f64;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
        total += log_z - row[y];
        let g = grad.row_mut(r);
        softmax_in_place(g);
        g[y] -= 1.0;
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    Ok((total / n, grad))
}

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Clears the moments of `range` (used when parameters are re-initialised).
    pub fn reset(&mut self, range: core::ops::Range<usize>) {
        self.m[range.clone()].fill(0.0);
        self.v[range].fill(0.0);
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, learning_rate: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - libm::pow(ADAM_BETA1, f64::from(t));
    let c2 = 1.0 - libm::pow(ADAM_BETA2, f64::from(t));
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HorNetsModel {
    pub config: HorNetsConfig,
    pub lin_att: LinAttParams,
    pub cat_int: CatIntParams,
    pub fitted_route: Option<Route>,
    pub class_count: usize,
    pub feature_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Grads {
    LinAtt(LinAttGrads),
    CatInt(CatIntGrads),
}

fn uniform_matrix(rows: usize, cols: usize, half_width: f64, rng: &mut RngStream) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.uniform(-half_width, half_width)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape is consistent")
}

impl HorNetsModel {
    /// Freshly initialised model for `feature_count` inputs and `class_count` classes.
    pub fn new(config: HorNetsConfig, feature_count: usize, class_count: usize) -> Result<Self> {
        config.validate_for(feature_count)?;
        if class_count < 2 {
            return Err(Error::Input(format!("need at least 2 classes, got {class_count}")));
        }
        let mut rng = RngStream::new(derive_seed(config.seed, 0x1417));
        let lin_scale = 1.0 / libm::sqrt(feature_count.max(1) as f64);
        let lin_att = LinAttParams {
            w: uniform_matrix(feature_count, class_count, lin_scale, &mut rng),
            b: vec![0.0; class_count],
            p: config.p_norm,
            epsilon: config.epsilon,
        };
        let comb_table = sample_combinations(
            feature_count + config.order,
            config.order,
            config.num_rules,
            &mut rng,
        )?;
        let rules = comb_table.len();
        let cat_scale = 1.0 / libm::sqrt(rules as f64);
        let cat_int = CatIntParams {
            m: uniform_matrix(rules, config.order, config.m_init_scale, &mut rng),
            w: uniform_matrix(rules, class_count, cat_scale, &mut rng),
            b: vec![0.0; class_count],
            comb_table,
            dropout_rate: config.dropout_rate,
        };
        Ok(Self {
            config,
            lin_att,
            cat_int,
            fitted_route: None,
            class_count,
            feature_count,
        })
    }

    pub fn augmented_width(&self) -> usize {
        self.feature_count + self.config.order
    }

    /// Whether column `index` of the augmented input is a pseudovariable.
    pub fn is_pseudovariable(&self, index: usize) -> bool {
        index >= self.feature_count
    }

    /// Sign-remaps and augments raw `{0, 1}` features for `catInt`.
    pub fn prepare_categorical(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        Ok(augment_pseudovariables(&remap_binary_signs(x)?, self.config.order))
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.feature_count {
            return Err(Error::shape(
                "model input",
                x.shape(),
                (x.rows(), self.feature_count),
            ));
        }
        Ok(())
    }

    /// Route used for a batch under the configured policy.
    pub fn route_for(&self, x: &Matrix) -> Result<Route> {
        match self.config.route {
            RoutePolicy::Pinned(route) => Ok(route),
            RoutePolicy::Auto => cat_router(x),
        }
    }

    /// Logits for raw features along `route`, dropout disabled.
    pub fn logits(&self, x: &Matrix, route: Route) -> Result<Matrix> {
        self.check_width(x)?;
        match route {
            Route::Continuous => Ok(lin_att_forward(x, &self.lin_att, self.config.activation)?.0),
            Route::Categorical => {
                let prepared = self.prepare_categorical(x)?;
                let mut rng = RngStream::new(0);
                Ok(cat_int_forward(&prepared, &self.cat_int, self.config.activation, false, &mut rng)?.0)
            }
        }
    }

    /// Mean cross-entropy on a batch of raw features and its parameter gradients.
    ///
    /// With `dropout` set, the mask is drawn from `rng`.
    pub fn loss_and_grads(
        &self,
        x: &Matrix,
        labels: &[usize],
        route: Route,
        dropout: bool,
        rng: &mut RngStream,
    ) -> Result<(f64, Grads)> {
        Ok(self.step_pass(x, labels, route, dropout, rng)?.0)
    }

    fn step_pass(
        &self,
        x: &Matrix,
        labels: &[usize],
        route: Route,
        dropout: bool,
        rng: &mut RngStream,
    ) -> Result<((f64, Grads), Option<Matrix>)> {
        self.check_width(x)?;
        let act = self.config.activation;
        match route {
            Route::Continuous => {
                let (logits, cache) = lin_att_forward(x, &self.lin_att, act)?;
                let (loss, d_logits) = cross_entropy_loss(&logits, labels)?;
                let grads = lin_att_backward(&cache, &d_logits, &self.lin_att)?;
                Ok(((loss, Grads::LinAtt(grads)), None))
            }
            Route::Categorical => {
                let prepared = self.prepare_categorical(x)?;
                let (logits, cache) = cat_int_forward(&prepared, &self.cat_int, act, dropout, rng)?;
                let (loss, d_logits) = cross_entropy_loss(&logits, labels)?;
                let grads = cat_int_backward(&cache, &d_logits, &self.cat_int, act)?;
                let crate::layers::ForwardCache::CatInt(cache) = cache else {
                    unreachable!("catInt forward returns a catInt cache")
                };
                Ok(((loss, Grads::CatInt(grads)), Some(cache.softmax)))
            }
        }
    }
}

/// Argmax per row, ties resolved to the lowest class index.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    logits
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn predict(model: &HorNetsModel, x: &Matrix) -> Result<Vec<usize>> {
    let route = model.route_for(x)?;
    Ok(argmax_rows(&model.logits(x, route)?))
}

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub categorical_batches: usize,
    pub continuous_batches: usize,
    /// Combination table at the end of training.
    pub comb_table: Option<CombTable>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

struct Optimizer {
    lin_w: AdamState,
    lin_b: AdamState,
    cat_m: AdamState,
    cat_w: AdamState,
    cat_b: AdamState,
}

impl Optimizer {
    fn new(model: &HorNetsModel) -> Self {
        Self {
            lin_w: AdamState::new(model.lin_att.w.as_slice().len()),
            lin_b: AdamState::new(model.lin_att.b.len()),
            cat_m: AdamState::new(model.cat_int.m.as_slice().len()),
            cat_w: AdamState::new(model.cat_int.w.as_slice().len()),
            cat_b: AdamState::new(model.cat_int.b.len()),
        }
    }

    fn apply(&mut self, model: &mut HorNetsModel, grads: &Grads) {
        let lr = model.config.learning_rate;
        match grads {
            Grads::LinAtt(g) => {
                adam_step(model.lin_att.w.as_mut_slice(), g.w.as_slice(), &mut self.lin_w, lr);
                adam_step(&mut model.lin_att.b, &g.b, &mut self.lin_b, lr);
            }
            Grads::CatInt(g) => {
                adam_step(model.cat_int.m.as_mut_slice(), g.m.as_slice(), &mut self.cat_m, lr);
                adam_step(model.cat_int.w.as_mut_slice(), g.w.as_slice(), &mut self.cat_w, lr);
                adam_step(&mut model.cat_int.b, &g.b, &mut self.cat_b, lr);
            }
        }
    }
}

/// Replaces the lowest-scoring `⌈fraction · rules⌉` combinations with fresh
/// draws that avoid the survivors. Replaced factorization rows are
/// re-initialised and their head rows zeroed; survivors are untouched.
///
/// Returns the indices of the replaced combinations.
pub fn resample_combinations(
    model: &mut HorNetsModel,
    scores: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let rules = model.cat_int.num_rules();
    if scores.len() != rules {
        return Err(Error::Internal(format!(
            "{} scores for {rules} combinations",
            scores.len()
        )));
    }
    let replace = libm::ceil(model.config.resample_fraction * rules as f64) as usize;
    let replace = replace.min(rules);
    if replace == 0 {
        return Ok(Vec::new());
    }
    let mut ranked: Vec<usize> = (0..rules).collect();
    ranked.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut replaced: Vec<usize> = ranked[..replace].to_vec();
    replaced.sort_unstable();

    let survivors: BTreeSet<Vec<usize>> = ranked[replace..]
        .iter()
        .map(|&c| model.cat_int.comb_table.row(c).to_vec())
        .collect();
    let order = model.config.order;
    let fresh =
        sample_subsets_excluding(model.augmented_width(), order, replace, &survivors, rng);
    let scale = model.config.m_init_scale;
    for (&c, subset) in replaced.iter().zip(&fresh) {
        model.cat_int.comb_table.set_row(c, subset);
        for v in model.cat_int.m.row_mut(c) {
            *v = rng.uniform(-scale, scale);
        }
        model.cat_int.w.row_mut(c).fill(0.0);
    }
    Ok(replaced)
}

fn distinct_labels(labels: &[usize]) -> usize {
    labels.iter().collect::<BTreeSet<_>>().len()
}

/// Trains a model on `dataset`.
pub fn fit(dataset: &Dataset, config: &HorNetsConfig) -> Result<(HorNetsModel, TrainReport)> {
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::Input("cannot fit on an empty dataset".into()));
    }
    if distinct_labels(&dataset.labels) < 2 {
        return Err(Error::Input("training data contains a single class".into()));
    }
    let mut model = HorNetsModel::new(
        config.clone(),
        dataset.feature_count(),
        dataset.class_count(),
    )?;
    let mut report = TrainReport::default();
    let mut optimizer = Optimizer::new(&model);
    let mut shuffle_rng = RngStream::new(derive_seed(config.seed, 0x5348));
    let mut dropout_rng = RngStream::new(derive_seed(config.seed, 0xD209));
    let mut resample_rng = RngStream::new(derive_seed(config.seed, 0x2E5A));

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let rules = model.cat_int.num_rules();
        let mut mass = vec![0.0; rules];
        let mut mass_rows = 0usize;
        let mut loss_sum = 0.0;

        for batch in order.chunks(config.batch_size) {
            let x = dataset.features.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| dataset.labels[i]).collect();
            let route = model.route_for(&x)?;
            let ((loss, grads), softmax) =
                model.step_pass(&x, &y, route, true, &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite batch loss {loss}"),
                });
            }
            loss_sum += loss * batch.len() as f64;
            match route {
                Route::Continuous => report.continuous_batches += 1,
                Route::Categorical => report.categorical_batches += 1,
            }
            if let Some(s) = softmax {
                for row in s.row_iter() {
                    for (acc, v) in mass.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                mass_rows += s.rows();
            }
            optimizer.apply(&mut model, &grads);
        }

        let epoch_loss = loss_sum / dataset.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite epoch loss {epoch_loss}"),
            });
        }
        report.epoch_losses.push(epoch_loss);
        report.epochs_run = epoch + 1;

        if mass_rows > 0 && epoch + 1 < config.epochs {
            for v in mass.iter_mut() {
                *v /= mass_rows as f64;
            }
            let replaced = resample_combinations(&mut model, &mass, &mut resample_rng)?;
            let order_len = model.config.order;
            let classes = model.class_count;
            for c in replaced {
                optimizer.cat_m.reset(c * order_len..(c + 1) * order_len);
                optimizer.cat_w.reset(c * classes..(c + 1) * classes);
            }
        }

        if epoch_loss < best - EARLY_STOP_MIN_DELTA {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                report.stopped_early = true;
                break;
            }
        }
    }

    model.fitted_route = match (report.categorical_batches, report.continuous_batches) {
        (0, 0) => None,
        (cat, cont) if cat >= cont => Some(Route::Categorical),
        _ => Some(Route::Continuous),
    };
    if report.epochs_run > 0 {
        report.comb_table = Some(model.cat_int.comb_table.clone());
    }
    Ok((model, report))
}
