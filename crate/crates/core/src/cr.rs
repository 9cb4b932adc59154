//! Sparse-dense collaborative representation classification.
//!
//! A test vector is represented over the whole training dictionary twice: a
//! dense ridge solution and a sparse OMP solution with at most `k` atoms. The
//! two are blended convexly and the blended coefficients are summed per class;
//! the largest class sum wins.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::fusion::FusedDictionary;
use crate::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_LAMBDA1: f64 = 0.35;
pub const DEFAULT_SPARSITY: usize = 50;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseRep(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRep {
    pub coefficients: Vec<f64>,
    /// Selected columns in selection order.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedRep {
    pub coefficients: Vec<f64>,
    pub lambda1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores(pub Vec<f64>);

fn check_system(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "dictionary has {} rows but the query has length {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("dictionary has no columns"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entries in dictionary or query"));
    }
    Ok(())
}

/// Cached Cholesky factor of `XᵀX + λI`, so each query costs `Xᵀy` plus two
/// triangular solves.
#[derive(Debug, Clone)]
pub struct RidgeProjection {
    xt: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    lambda: f64,
}

impl RidgeProjection {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn apply(&self, y: &DVector<f64>) -> Result<DenseRep> {
        if y.len() != self.xt.ncols() {
            return Err(Error::invalid(format!(
                "projection expects length {} but the query has {}",
                self.xt.ncols(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entries in query"));
        }
        let rhs = &self.xt * y;
        Ok(DenseRep(self.factor.solve(&rhs).as_slice().to_vec()))
    }
}

/// Factor the ridge normal equations of `x` once.
pub fn precompute_projection(x: &DMatrix<f64>, lambda: f64) -> Result<RidgeProjection> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("dictionary has no columns"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entries in dictionary"));
    }
    let xt = x.transpose();
    let mut gram = &xt * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let factor = Cholesky::new(gram).ok_or_else(|| Error::invalid("ridge system is not positive definite"))?;
    Ok(RidgeProjection { xt, factor, lambda })
}

/// Minimizer of `‖y − Xα‖² + λ‖α‖²`.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DenseRep> {
    check_system(x, y)?;
    precompute_projection(x, lambda)?.apply(y)
}

/// One OMP iteration: the support after selection, its least-squares
/// coefficients and the refreshed residual.
#[derive(Debug, Clone)]
pub struct OmpStep {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual: DVector<f64>,
}

/// Orthogonal matching pursuit with at most `k` atoms. Columns of `x` are
/// assumed to be unit length.
pub fn omp_solve(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, residual_tol: f64) -> Result<SparseRep> {
    omp_impl(x, y, k, residual_tol, |_| {})
}

/// [`omp_solve`] plus a snapshot of every iteration.
pub fn omp_trace(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, residual_tol: f64) -> Result<(SparseRep, Vec<OmpStep>)> {
    let mut steps = Vec::new();
    let rep = omp_impl(x, y, k, residual_tol, |s| steps.push(s.clone()))?;
    Ok((rep, steps))
}

fn omp_impl(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    residual_tol: f64,
    mut on_step: impl FnMut(&OmpStep),
) -> Result<SparseRep> {
    check_system(x, y)?;
    let n = x.ncols();
    if k > n {
        return Err(Error::invalid(format!("sparsity {k} exceeds the {n} dictionary columns")));
    }
    if !(residual_tol >= 0.0) {
        return Err(Error::invalid("residual tolerance must be non-negative"));
    }
    if let Some(j) = (0..n).find(|&j| x.column(j).iter().all(|&v| v == 0.0)) {
        return Err(Error::invalid(format!("dictionary column {j} is zero")));
    }

    let mut selected = vec![false; n];
    let mut step = OmpStep {
        support: Vec::with_capacity(k),
        coefficients: Vec::new(),
        residual: y.clone(),
    };
    // Thin QR of the selected columns, grown one column at a time.
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut upper = DMatrix::<f64>::zeros(k, k);
    let mut qty: Vec<f64> = Vec::with_capacity(k);

    while step.support.len() < k && step.residual.norm() > residual_tol {
        let corr = x.tr_mul(&step.residual);
        let mut best: Option<(usize, f64)> = None;
        for (j, &c) in corr.iter().enumerate() {
            if !selected[j] && best.is_none_or(|(_, b)| c.abs() > b) {
                best = Some((j, c.abs()));
            }
        }
        let Some((j, score)) = best else { break };
        if score == 0.0 {
            break;
        }

        // Two passes of Gram-Schmidt keep the basis orthogonal to working precision.
        let s = basis.len();
        let mut v = x.column(j).into_owned();
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let h = q.dot(&v);
                v.axpy(-h, q, 1.0);
                upper[(i, s)] += h;
            }
        }
        let norm = v.norm();
        if norm <= 1e-12 * x.column(j).norm() {
            // Atom lies in the span of the support; nothing left to explain.
            break;
        }
        v /= norm;
        upper[(s, s)] = norm;
        qty.push(v.dot(y));
        basis.push(v);
        selected[j] = true;
        step.support.push(j);

        let m = s + 1;
        let mut coef = vec![0.0; m];
        for i in (0..m).rev() {
            let tail: f64 = (i + 1..m).map(|c| upper[(i, c)] * coef[c]).sum();
            coef[i] = (qty[i] - tail) / upper[(i, i)];
        }
        let mut residual = y.clone();
        for (&col, &c) in step.support.iter().zip(&coef) {
            residual.axpy(-c, &x.column(col), 1.0);
        }
        step.coefficients = coef;
        step.residual = residual;
        on_step(&step);
    }

    let mut coefficients = vec![0.0; n];
    for (&j, &c) in step.support.iter().zip(&step.coefficients) {
        coefficients[j] = c;
    }
    Ok(SparseRep {
        coefficients,
        support: step.support,
    })
}

/// `λ₁·sparse + (1 − λ₁)·dense`.
pub fn combine(sparse: &SparseRep, dense: &DenseRep, lambda1: f64) -> Result<CombinedRep> {
    if !(0.0..=1.0).contains(&lambda1) {
        return Err(Error::invalid(format!("lambda1 {lambda1} outside [0, 1]")));
    }
    if sparse.coefficients.len() != dense.0.len() {
        return Err(Error::invalid("sparse and dense representations differ in length"));
    }
    let coefficients = sparse
        .coefficients
        .iter()
        .zip(&dense.0)
        .map(|(s, d)| lambda1 * s + (1.0 - lambda1) * d)
        .collect();
    Ok(CombinedRep { coefficients, lambda1 })
}

/// Class scores `q = B·α°` and the arg-max class (lowest index on ties).
pub fn predict(coefficients: &[f64], b: &DMatrix<f64>) -> Result<(usize, ClassScores)> {
    if b.ncols() != coefficients.len() {
        return Err(Error::invalid(format!(
            "class matrix has {} columns but the representation has {}",
            b.ncols(),
            coefficients.len()
        )));
    }
    if b.nrows() == 0 {
        return Err(Error::invalid("class matrix has no classes"));
    }
    let q = b * DVector::from_column_slice(coefficients);
    let mut label = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[label] {
            label = i;
        }
    }
    Ok((label, ClassScores(q.as_slice().to_vec())))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrParams {
    pub lambda: f64,
    pub lambda1: f64,
    pub sparsity: usize,
    pub residual_tol: f64,
}

impl Default for CrParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            lambda1: DEFAULT_LAMBDA1,
            sparsity: DEFAULT_SPARSITY,
            residual_tol: DEFAULT_RESIDUAL_TOL,
        }
    }
}

/// Every intermediate representation of one classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: usize,
    pub dense: DenseRep,
    pub sparse: SparseRep,
    pub combined: CombinedRep,
    pub scores: ClassScores,
}

/// A dictionary with its ridge factorization, ready for repeated queries.
#[derive(Debug, Clone)]
pub struct Classifier {
    dict: FusedDictionary,
    projection: RidgeProjection,
    params: CrParams,
}

impl Classifier {
    pub fn new(dict: FusedDictionary, params: CrParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&params.lambda1) {
            return Err(Error::invalid(format!("lambda1 {} outside [0, 1]", params.lambda1)));
        }
        if params.sparsity == 0 || params.sparsity > dict.len() {
            return Err(Error::invalid(format!(
                "sparsity {} must lie in [1, {}]",
                params.sparsity,
                dict.len()
            )));
        }
        let projection = precompute_projection(&dict.x, params.lambda)?;
        Ok(Self {
            dict,
            projection,
            params,
        })
    }

    pub fn dictionary(&self) -> &FusedDictionary {
        &self.dict
    }

    pub fn params(&self) -> &CrParams {
        &self.params
    }

    pub fn classify(&self, y: &DVector<f64>) -> Result<Classification> {
        check_system(&self.dict.x, y)?;
        let norm = y.norm();
        let y = if norm > 0.0 { y / norm } else { y.clone() };
        let dense = self.projection.apply(&y)?;
        let sparse = omp_solve(&self.dict.x, &y, self.params.sparsity, self.params.residual_tol)?;
        let combined = combine(&sparse, &dense, self.params.lambda1)?;
        let (label, scores) = predict(&combined.coefficients, &self.dict.b)?;
        Ok(Classification {
            label,
            dense,
            sparse,
            combined,
            scores,
        })
    }
}

/// One-shot classification of `y` against `dict`.
pub fn classify(dict: &FusedDictionary, y: &DVector<f64>, params: CrParams) -> Result<Classification> {
    Classifier::new(dict.clone(), params)?.classify(y)
}
