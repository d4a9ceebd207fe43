//! Reading rules off a trained categorical path.
//!
//! Each combination is scored by the mean softmax mass it receives. Its
//! factorization row is discretised to `{-1, 0, 1}`; `+1` reads as the
//! feature, `-1` as its negation and `0` as absent. Pseudovariable slots are
//! masks and never appear in a rule.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::activation::discretize;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::layers::{cat_int_forward, Route};
use crate::rng::RngStream;
use crate::training::HorNetsModel;

/// Clause text used when every literal discretises to zero.
pub const EMPTY_CLAUSE: &str = "⊤ (no literals)";

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RuleEntry {
    /// Index of the combination in the model's table.
    pub combination: usize,
    /// Original feature indices of the combination, pseudovariables removed.
    pub feature_indices: Vec<usize>,
    /// Discretised weight for each entry of `feature_indices`.
    pub sign_pattern: Vec<i8>,
    pub score: f64,
    pub clause: String,
}

impl RuleEntry {
    /// Features that survive discretisation (non-zero sign).
    pub fn literal_features(&self) -> Vec<usize> {
        self.feature_indices
            .iter()
            .zip(&self.sign_pattern)
            .filter(|(_, &s)| s != 0)
            .map(|(&f, _)| f)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RuleReport {
    /// Sorted by score, highest first.
    pub entries: Vec<RuleEntry>,
}

impl RuleReport {
    /// One `score<TAB>clause` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{:.6}\t{}", e.score, e.clause);
        }
        out
    }
}

fn ensure_categorical(model: &HorNetsModel) -> Result<()> {
    match model.fitted_route {
        Some(Route::Continuous) => Err(Error::UnsupportedRoute(Route::Continuous)),
        _ => Ok(()),
    }
}

/// Mean softmax mass per combination over every sample, dropout off.
pub fn score_interactions(model: &HorNetsModel, dataset: &Dataset) -> Result<Vec<f64>> {
    ensure_categorical(model)?;
    if dataset.is_empty() {
        return Err(Error::Input("cannot score interactions on an empty dataset".into()));
    }
    let x = model.prepare_categorical(&dataset.features)?;
    let mut rng = RngStream::new(0);
    let (_, cache) = cat_int_forward(&x, &model.cat_int, model.config.activation, false, &mut rng)?;
    let crate::layers::ForwardCache::CatInt(cache) = cache else {
        return Err(Error::Internal("catInt forward returned a linAtt cache".into()));
    };
    let mut scores = vec![0.0; model.cat_int.num_rules()];
    for row in cache.softmax.row_iter() {
        for (s, v) in scores.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = cache.softmax.rows() as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    Ok(scores)
}

/// Renders `±1` literals as a conjunction, `-1` as negation.
pub fn render_clause(names: &[String], features: &[usize], signs: &[i8]) -> String {
    let mut parts = Vec::new();
    for (&f, &s) in features.iter().zip(signs) {
        let name = names.get(f).cloned().unwrap_or_else(|| format!("f{f}"));
        match s {
            1 => parts.push(name),
            -1 => parts.push(format!("¬{name}")),
            _ => {}
        }
    }
    if parts.is_empty() {
        EMPTY_CLAUSE.into()
    } else {
        parts.join(" ∧ ")
    }
}

/// Entry for combination `c` with a given score.
pub fn rule_for_combination(
    model: &HorNetsModel,
    feature_names: &[String],
    c: usize,
    score: f64,
) -> RuleEntry {
    let mut feature_indices = Vec::new();
    let mut sign_pattern = Vec::new();
    for (&idx, &w) in model.cat_int.comb_table.row(c).iter().zip(model.cat_int.m.row(c)) {
        if model.is_pseudovariable(idx) {
            continue;
        }
        feature_indices.push(idx);
        sign_pattern.push(discretize(w));
    }
    let clause = render_clause(feature_names, &feature_indices, &sign_pattern);
    RuleEntry {
        combination: c,
        feature_indices,
        sign_pattern,
        score,
        clause,
    }
}

/// The `top_n` highest-scoring combinations as rules.
pub fn extract_rules(model: &HorNetsModel, dataset: &Dataset, top_n: usize) -> Result<RuleReport> {
    if top_n == 0 {
        return Err(Error::Input("top_n must be at least 1".into()));
    }
    let scores = score_interactions(model, dataset)?;
    let mut ranked: Vec<usize> = (0..scores.len()).collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let entries = ranked
        .into_iter()
        .take(top_n)
        .map(|c| rule_for_combination(model, &dataset.feature_names, c, scores[c]))
        .collect();
    Ok(RuleReport { entries })
}
