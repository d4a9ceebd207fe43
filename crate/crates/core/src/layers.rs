//! The routed blocks: `cat_router`, the continuous `linAtt` path and the
//! categorical `catInt` path, with forward passes and exact backward passes.
//!
//! Both paths finish with a linear head `x · w + b` producing class logits.
//!
//! * `linAtt`: `x0 = x / max(‖x‖_p, ε)` per row, `x1 = act(x0) ⊙ x`,
//!   `logits = x1 · w + b`. The only learned parameters are the head.
//! * `catInt`: `F = combActOp(M, x, table)`, `x0 = dropout(F)`,
//!   `x1 = softmax(x0)` over combinations, `logits = x1 · w + b`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::matrix::{softmax_in_place, Matrix};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Route {
    /// Handled by `linAtt`.
    Continuous,
    /// Handled by `catInt`.
    Categorical,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::Continuous => f.write_str("continuous (linAtt)"),
            Route::Categorical => f.write_str("categorical (catInt)"),
        }
    }
}

/// Number of distinct values in the batch, saturating at `limit`.
fn distinct_values_up_to(batch: &Matrix, limit: usize) -> usize {
    let mut seen: Vec<f64> = Vec::with_capacity(limit);
    for &v in batch.as_slice() {
        if !seen.contains(&v) {
            seen.push(v);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// Picks the path for a batch: categorical iff the whole batch holds at most
/// two distinct values.
pub fn cat_router(batch: &Matrix) -> Result<Route> {
    if batch.is_empty() {
        return Err(Error::Input("cannot route an empty batch".into()));
    }
    Ok(if distinct_values_up_to(batch, 3) <= 2 {
        Route::Categorical
    } else {
        Route::Continuous
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinAttParams {
    /// `input_dim × classes`
    pub w: Matrix,
    pub b: Vec<f64>,
    pub p: f64,
    pub epsilon: f64,
}

/// Feature-index sets for the sampled combinations, one row of `order`
/// ascending indices per rule. Indices address the pseudovariable-augmented
/// input.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CombTable {
    order: usize,
    indices: Vec<usize>,
}

impl CombTable {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            indices: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[usize]>>(order: usize, rows: &[R]) -> Result<Self> {
        let mut table = Self::new(order);
        for row in rows {
            table.push(row.as_ref())?;
        }
        Ok(table)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len().checked_div(self.order).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[usize] {
        &self.indices[c * self.order..(c + 1) * self.order]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.indices.chunks_exact(self.order.max(1))
    }

    pub fn push(&mut self, row: &[usize]) -> Result<()> {
        if row.len() != self.order {
            return Err(Error::Config(alloc::format!(
                "combination of size {} in a table of order {}",
                row.len(),
                self.order
            )));
        }
        self.indices.extend_from_slice(row);
        Ok(())
    }

    pub(crate) fn set_row(&mut self, c: usize, row: &[usize]) {
        self.indices[c * self.order..(c + 1) * self.order].copy_from_slice(row);
    }

    /// Checks bounds, per-row distinctness and that no two rows coincide as sets.
    pub fn validate(&self, width: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (c, row) in self.rows().enumerate() {
            let mut sorted: Vec<usize> = row.to_vec();
            sorted.sort_unstable();
            if let Some(&bad) = sorted.iter().find(|&&i| i >= width) {
                return Err(Error::Config(alloc::format!(
                    "combination {c} references column {bad}, but the input has {width} columns"
                )));
            }
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(alloc::format!(
                    "combination {c} repeats a feature index"
                )));
            }
            if !seen.insert(sorted) {
                return Err(Error::Config(alloc::format!(
                    "combination {c} duplicates an earlier combination"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CatIntParams {
    /// Interaction factorization weights, `rules × order`; row `c` belongs to
    /// combination `c`.
    pub m: Matrix,
    pub comb_table: CombTable,
    /// `rules × classes`
    pub w: Matrix,
    pub b: Vec<f64>,
    pub dropout_rate: f64,
}

impl CatIntParams {
    pub fn num_rules(&self) -> usize {
        self.comb_table.len()
    }

    pub fn order(&self) -> usize {
        self.comb_table.order()
    }
}

#[derive(Clone, Debug)]
pub struct LinAttCache {
    /// Normalised input `x0`.
    pub normalized: Matrix,
    /// Gated input `x1 = act(x0) ⊙ x`, the head's input.
    pub gated: Matrix,
}

#[derive(Clone, Debug)]
pub struct CatIntCache {
    /// Augmented, sign-remapped input the combinations index into.
    pub input: Matrix,
    /// Pre-activations `z[b, c] = Σ_j x[b, table[c][j]] · M[c, j]`.
    pub pre: Matrix,
    /// `F = act(z)`.
    pub activations: Matrix,
    /// Inverted-dropout multipliers (0 or `1/(1-rate)`), absent at inference.
    pub dropout_mask: Option<Matrix>,
    /// Softmax over combinations, the head's input.
    pub softmax: Matrix,
}

#[derive(Clone, Debug)]
pub enum ForwardCache {
    LinAtt(LinAttCache),
    CatInt(CatIntCache),
}

impl ForwardCache {
    pub fn batch_rows(&self) -> usize {
        match self {
            ForwardCache::LinAtt(c) => c.gated.rows(),
            ForwardCache::CatInt(c) => c.softmax.rows(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinAttGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatIntGrads {
    pub m: Matrix,
    pub w: Matrix,
    pub b: Vec<f64>,
}

fn linear_head(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut logits = x.matmul(w)?;
    logits.add_row_vector(b)?;
    Ok(logits)
}

pub fn lin_att_forward(
    x: &Matrix,
    params: &LinAttParams,
    act: ActivationKind,
) -> Result<(Matrix, ForwardCache)> {
    if x.cols() != params.w.rows() {
        return Err(Error::shape("lin_att_forward", x.shape(), params.w.shape()));
    }
    let norms = x.row_pnorm(params.p);
    let mut normalized = x.clone();
    let mut gated = x.clone();
    for (r, norm) in norms.into_iter().enumerate() {
        let denom = norm.max(params.epsilon);
        for ((n, g), &v) in normalized
            .row_mut(r)
            .iter_mut()
            .zip(gated.row_mut(r).iter_mut())
            .zip(x.row(r))
        {
            *n = v / denom;
            *g = act.apply(*n) * v;
        }
    }
    let logits = linear_head(&gated, &params.w, &params.b)?;
    Ok((logits, ForwardCache::LinAtt(LinAttCache { normalized, gated })))
}

pub fn lin_att_backward(
    cache: &ForwardCache,
    d_logits: &Matrix,
    params: &LinAttParams,
) -> Result<LinAttGrads> {
    let ForwardCache::LinAtt(cache) = cache else {
        return Err(Error::Internal("linAtt backward given a catInt cache".into()));
    };
    if cache.gated.rows() != d_logits.rows() || d_logits.cols() != params.w.cols() {
        return Err(Error::Internal(alloc::format!(
            "stale linAtt cache: cache has {} rows, gradient is {}x{}, head is {}x{}",
            cache.gated.rows(),
            d_logits.rows(),
            d_logits.cols(),
            params.w.rows(),
            params.w.cols()
        )));
    }
    Ok(LinAttGrads {
        w: cache.gated.t_matmul(d_logits)?,
        b: d_logits.column_sums(),
    })
}

/// Fills `F[:, c] = act(Σ_j x[:, table[c][j]] · M[c, j])` for every combination.
///
/// Returns `(pre-activations, F)`.
pub fn comb_act_op(
    m: &Matrix,
    x: &Matrix,
    table: &CombTable,
    act: ActivationKind,
) -> Result<(Matrix, Matrix)> {
    if m.rows() != table.len() || m.cols() != table.order() {
        return Err(Error::Config(alloc::format!(
            "factorization matrix is {}x{} but the table holds {} combinations of order {}",
            m.rows(),
            m.cols(),
            table.len(),
            table.order()
        )));
    }
    if let Some(bad) = table.rows().flatten().find(|&&i| i >= x.cols()) {
        return Err(Error::Config(alloc::format!(
            "combination index {bad} out of bounds for input with {} columns",
            x.cols()
        )));
    }
    let rules = table.len();
    let mut pre = Matrix::zeros(x.rows(), rules);
    for r in 0..x.rows() {
        let xr = x.row(r);
        let out = pre.row_mut(r);
        for (c, z) in out.iter_mut().enumerate() {
            *z = table
                .row(c)
                .iter()
                .zip(m.row(c))
                .map(|(&i, &weight)| xr[i] * weight)
                .sum();
        }
    }
    let activations = pre.map(|z| act.apply(z));
    Ok((pre, activations))
}

pub fn cat_int_forward(
    x: &Matrix,
    params: &CatIntParams,
    act: ActivationKind,
    training: bool,
    rng: &mut RngStream,
) -> Result<(Matrix, ForwardCache)> {
    let (pre, activations) = comb_act_op(&params.m, x, &params.comb_table, act)?;
    let mut dropped = activations.clone();
    let dropout_mask = if training && params.dropout_rate > 0.0 {
        let keep = 1.0 - params.dropout_rate;
        let scale = 1.0 / keep;
        let mut mask = Matrix::zeros(dropped.rows(), dropped.cols());
        for (mv, dv) in mask.as_mut_slice().iter_mut().zip(dropped.as_mut_slice()) {
            *mv = if rng.bernoulli(keep) { scale } else { 0.0 };
            *dv *= *mv;
        }
        Some(mask)
    } else {
        None
    };
    let mut softmax = dropped;
    for r in 0..softmax.rows() {
        softmax_in_place(softmax.row_mut(r));
    }
    let logits = linear_head(&softmax, &params.w, &params.b)?;
    Ok((
        logits,
        ForwardCache::CatInt(CatIntCache {
            input: x.clone(),
            pre,
            activations,
            dropout_mask,
            softmax,
        }),
    ))
}

pub fn cat_int_backward(
    cache: &ForwardCache,
    d_logits: &Matrix,
    params: &CatIntParams,
    act: ActivationKind,
) -> Result<CatIntGrads> {
    let ForwardCache::CatInt(cache) = cache else {
        return Err(Error::Internal("catInt backward given a linAtt cache".into()));
    };
    let rules = params.num_rules();
    if cache.softmax.rows() != d_logits.rows()
        || cache.softmax.cols() != rules
        || d_logits.cols() != params.w.cols()
    {
        return Err(Error::Internal(alloc::format!(
            "stale catInt cache: cache is {}x{}, gradient is {}x{}, model has {} rules",
            cache.softmax.rows(),
            cache.softmax.cols(),
            d_logits.rows(),
            d_logits.cols(),
            rules
        )));
    }

    let grad_w = cache.softmax.t_matmul(d_logits)?;
    let grad_b = d_logits.column_sums();

    // dL/dsoftmax, then through the softmax Jacobian, dropout and activation.
    let d_soft = d_logits.matmul_t(&params.w)?;
    let mut d_pre = Matrix::zeros(d_logits.rows(), rules);
    for r in 0..d_logits.rows() {
        let s = cache.softmax.row(r);
        let ds = d_soft.row(r);
        let inner: f64 = s.iter().zip(ds).map(|(a, b)| a * b).sum();
        let mask = cache.dropout_mask.as_ref().map(|m| m.row(r));
        let pre = cache.pre.row(r);
        let out = d_pre.row_mut(r);
        for c in 0..rules {
            let mut g = s[c] * (ds[c] - inner);
            if let Some(mask) = mask {
                g *= mask[c];
            }
            out[c] = g * act.grad(pre[c]);
        }
    }

    let order = params.order();
    let mut grad_m = Matrix::zeros(rules, order);
    for r in 0..d_pre.rows() {
        let xr = cache.input.row(r);
        for (c, &g) in d_pre.row(r).iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let gm = grad_m.row_mut(c);
            for (slot, &i) in gm.iter_mut().zip(params.comb_table.row(c)) {
                *slot += g * xr[i];
            }
        }
    }
    Ok(CatIntGrads {
        m: grad_m,
        w: grad_w,
        b: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    const K0: ActivationKind = ActivationKind::PolyClip { k: 0 };

    #[test]
    fn router_examples() {
        assert_eq!(cat_router(&m(&[&[0.0, 1.0], &[1.0, 1.0]])).unwrap(), Route::Categorical);
        assert_eq!(cat_router(&m(&[&[0.1, 0.2, 0.3]])).unwrap(), Route::Continuous);
        assert_eq!(cat_router(&Matrix::zeros(4, 3)).unwrap(), Route::Categorical);
        assert!(cat_router(&Matrix::zeros(0, 3)).is_err());
    }

    fn lin_params(w: Matrix, b: Vec<f64>) -> LinAttParams {
        LinAttParams {
            w,
            b,
            p: 2.0,
            epsilon: 1e-12,
        }
    }

    #[test]
    fn lin_att_zero_input_leaves_bias() {
        let params = lin_params(m(&[&[1.0, 2.0], &[3.0, 4.0]]), vec![0.5, -0.5]);
        let (logits, _) = lin_att_forward(&Matrix::zeros(3, 2), &params, K0).unwrap();
        for row in logits.row_iter() {
            assert_eq!(row, &[0.5, -0.5]);
        }
    }

    #[test]
    fn lin_att_hand_example() {
        let params = lin_params(Matrix::zeros(2, 2), vec![1.0, -1.0]);
        let (logits, cache) = lin_att_forward(&m(&[&[3.0, 4.0]]), &params, K0).unwrap();
        assert_eq!(logits.row(0), &[1.0, -1.0]);
        let ForwardCache::LinAtt(cache) = cache else { unreachable!() };
        assert!((cache.normalized.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((cache.normalized.get(0, 1) - 0.8).abs() < 1e-15);
        assert!((cache.gated.get(0, 0) - 1.8).abs() < 1e-12);
        assert!((cache.gated.get(0, 1) - 3.2).abs() < 1e-12);
    }

    #[test]
    fn lin_att_shape_mismatch() {
        let params = lin_params(Matrix::zeros(3, 2), vec![0.0; 2]);
        assert!(matches!(
            lin_att_forward(&Matrix::zeros(1, 2), &params, K0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn comb_act_op_examples() {
        // columns: f0 f1 p2 p3 p4 p5 (pseudovariables all +1)
        let x = m(&[
            &[1.0, -1.0, 1.0, 1.0, 1.0, 1.0],
            &[-1.0, -1.0, 1.0, 1.0, 1.0, 1.0],
        ]);
        let table = CombTable::from_rows(4, &[[0, 1, 2, 3], [2, 3, 4, 5]]).unwrap();
        let weights = m(&[&[0.0, 0.0, 0.0, 0.0], &[0.5, 0.5, 0.0, 0.0]]);
        let (_, f) = comb_act_op(&weights, &x, &table, K0).unwrap();
        for r in 0..2 {
            assert_eq!(f.get(r, 0), 0.0);
            assert_eq!(f.get(r, 1), 1.0);
        }

        let table = CombTable::from_rows(2, &[[0, 1]]).unwrap();
        let (_, f) = comb_act_op(&m(&[&[1.0, 1.0]]), &m(&[&[1.0, -1.0]]), &table, K0).unwrap();
        assert_eq!(f.get(0, 0), 0.0);
    }

    #[test]
    fn comb_act_op_out_of_bounds() {
        let table = CombTable::from_rows(2, &[[0, 5]]).unwrap();
        let err = comb_act_op(&Matrix::zeros(1, 2), &Matrix::zeros(1, 3), &table, K0);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn comb_table_validation() {
        assert!(CombTable::from_rows(2, &[[0, 1], [1, 2]]).unwrap().validate(3).is_ok());
        assert!(CombTable::from_rows(2, &[[0, 1], [1, 0]]).unwrap().validate(3).is_err());
        assert!(CombTable::from_rows(2, &[[0, 0]]).unwrap().validate(3).is_err());
        assert!(CombTable::from_rows(2, &[[0, 3]]).unwrap().validate(3).is_err());
        assert!(CombTable::from_rows(2, &[[0, 1, 2]]).is_err());
    }

    fn cat_params(rules: usize, classes: usize, w: Matrix) -> CatIntParams {
        let rows: Vec<Vec<usize>> = (0..rules).map(|c| vec![c, c + 1]).collect();
        CatIntParams {
            m: Matrix::filled(rules, 2, 0.3),
            comb_table: CombTable::from_rows(2, &rows).unwrap(),
            w,
            b: vec![0.0; classes],
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn cat_int_uniform_softmax() {
        let params = cat_params(3, 3, Matrix::identity(3));
        // all-ones input makes every F equal
        let x = Matrix::filled(2, 4, 1.0);
        let mut rng = RngStream::new(0);
        let (logits, _) = cat_int_forward(&x, &params, K0, false, &mut rng).unwrap();
        for v in logits.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cat_int_inference_is_deterministic() {
        let mut params = cat_params(3, 2, m(&[&[1.0, -1.0], &[0.5, 0.2], &[-0.3, 0.9]]));
        params.dropout_rate = 0.5;
        let x = m(&[&[1.0, -1.0, 1.0, -1.0], &[-1.0, 1.0, 1.0, 1.0]]);
        let (a, _) = cat_int_forward(&x, &params, K0, false, &mut RngStream::new(1)).unwrap();
        let (b, _) = cat_int_forward(&x, &params, K0, false, &mut RngStream::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cat_int_single_rule_ignores_features() {
        let params = cat_params(1, 2, m(&[&[0.25, -0.75]]));
        let x = m(&[&[1.0, -1.0], &[-1.0, 1.0], &[1.0, 1.0]]);
        let (logits, _) = cat_int_forward(&x, &params, K0, false, &mut RngStream::new(0)).unwrap();
        for row in logits.row_iter() {
            assert_eq!(row, &[0.25, -0.75]);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let params = cat_params(3, 2, m(&[&[1.0, -1.0], &[0.5, 0.2], &[-0.3, 0.9]]));
        let x = m(&[&[1.0, -1.0, 1.0, -1.0], &[-1.0, 1.0, 1.0, 1.0]]);
        let (_, cache) = cat_int_forward(&x, &params, K0, false, &mut RngStream::new(0)).unwrap();
        let g = cat_int_backward(&cache, &Matrix::zeros(2, 2), &params, K0).unwrap();
        assert!(g.m.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.w.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.b.iter().all(|&v| v == 0.0));

        let lin = lin_params(m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[0.0, 0.0]]), vec![0.0; 2]);
        let (_, cache) = lin_att_forward(&x, &lin, K0).unwrap();
        let g = lin_att_backward(&cache, &Matrix::zeros(2, 2), &lin).unwrap();
        assert!(g.w.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let params = cat_params(3, 2, Matrix::zeros(3, 2));
        let x = Matrix::filled(2, 4, 1.0);
        let (_, cache) = cat_int_forward(&x, &params, K0, false, &mut RngStream::new(0)).unwrap();
        assert!(matches!(
            cat_int_backward(&cache, &Matrix::zeros(3, 2), &params, K0),
            Err(Error::Internal(_))
        ));
        let lin = lin_params(Matrix::zeros(4, 2), vec![0.0; 2]);
        assert!(matches!(
            lin_att_backward(&cache, &Matrix::zeros(2, 2), &lin),
            Err(Error::Internal(_))
        ));
    }
}
