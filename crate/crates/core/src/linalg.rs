//! Sparse matrix patterns and cached direct factorizations.
//!
//! Both PDE operators in the optimization loop keep a fixed sparsity pattern,
//! so the symbolic analysis (fill-reducing ordering, supernode structure) is
//! computed once and only the numeric factorization is redone per solve.

use std::sync::Arc;

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::sparse::linalg::cholesky::{self, SymbolicCholesky};
use faer::sparse::linalg::lu::{self, NumericLu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Side};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Maximum number of iterative refinement sweeps after a direct solve.
const MAX_REFINEMENT: usize = 4;

/// Compressed-column sparsity pattern with sorted row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CscPattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl CscPattern {
    /// Builds the pattern of an `n x n` matrix from (row, col) pairs;
    /// duplicates are merged.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, c) in entries {
            debug_assert!(r < n && c < n);
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut col in cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend(col);
            col_ptr.push(row_idx.len());
        }
        CscPattern {
            n,
            col_ptr,
            row_idx,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Storage position of entry (row, col), if structurally present.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (a, b) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[a..b].binary_search(&row).ok().map(|k| a + k)
    }

    /// y = A x.
    pub fn matvec(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += values[k] * xc;
            }
        }
        y
    }

    /// Entry (row, col) or zero.
    pub fn get(&self, values: &[f64], row: usize, col: usize) -> f64 {
        self.position(row, col).map_or(0.0, |k| values[k])
    }

    /// Largest |A - A^T| over stored entries.
    pub fn asymmetry(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                worst = worst.max((values[k] - self.get(values, c, r)).abs());
            }
        }
        worst
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }

    fn view<'a>(&'a self, values: &'a [f64]) -> SparseColMatRef<'a, usize, f64> {
        SparseColMatRef::new(self.symbolic(), values)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Relative residual ||A x - b|| / ||b|| (absolute when b = 0).
pub fn relative_residual(pattern: &CscPattern, values: &[f64], x: &[f64], b: &[f64]) -> f64 {
    let ax = pattern.matvec(values, x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
    let nb = norm(b);
    if nb > 0.0 {
        norm(&r) / nb
    } else {
        norm(&r)
    }
}

fn as_col_mut(x: &mut [f64]) -> MatMut<'_, f64> {
    let n = x.len();
    MatMut::from_column_major_slice_mut(x, n, 1)
}

/// Solves with `apply_inverse`, then refines against the exact operator
/// until the relative residual reaches `tol`.
fn refine(
    pattern: &CscPattern,
    values: &[f64],
    rhs: &[f64],
    tol: f64,
    mut apply_inverse: impl FnMut(&mut [f64]),
) -> Result<SolveReport> {
    let mut x = rhs.to_vec();
    apply_inverse(&mut x);
    let nb = norm(rhs);
    let scale = if nb > 0.0 { nb } else { 1.0 };
    let mut sweeps = 0;
    loop {
        let ax = pattern.matvec(values, &x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let residual = norm(&r) / scale;
        if !residual.is_finite() {
            return Err(Error::Solver {
                message: "factorization produced non-finite values".into(),
                residual,
            });
        }
        if residual <= tol {
            return Ok(SolveReport {
                solution: x,
                residual,
                refinement_sweeps: sweeps,
            });
        }
        if sweeps == MAX_REFINEMENT {
            return Err(Error::Solver {
                message: format!("no convergence after {sweeps} refinement sweeps"),
                residual,
            });
        }
        apply_inverse(&mut r);
        x.iter_mut().zip(&r).for_each(|(x, d)| *x += d);
        sweeps += 1;
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub residual: f64,
    pub refinement_sweeps: usize,
}

/// Symbolic LU analysis of a fixed (generally unsymmetric or indefinite)
/// pattern, shared between numeric factorizations.
#[derive(Debug, Clone)]
pub struct LuAnalysis {
    pattern: Arc<CscPattern>,
    symbolic: Arc<SymbolicLu<usize>>,
}

impl LuAnalysis {
    pub fn new(pattern: Arc<CscPattern>) -> Result<Self> {
        let symbolic = lu::factorize_symbolic_lu(pattern.symbolic(), Default::default())
            .map_err(|e| Error::Singular(format!("symbolic LU failed: {e:?}")))?;
        Ok(LuAnalysis {
            pattern,
            symbolic: Arc::new(symbolic),
        })
    }

    pub fn pattern(&self) -> &Arc<CscPattern> {
        &self.pattern
    }

    pub fn factorize(&self, values: Vec<f64>, exec: Execution) -> Result<LuFactors> {
        assert_eq!(values.len(), self.pattern.nnz());
        let par = exec.faer_par();
        let mut numeric = NumericLu::new();
        let mut mem = MemBuffer::new(
            self.symbolic
                .factorize_numeric_lu_scratch::<f64>(par, Default::default()),
        );
        self.symbolic
            .factorize_numeric_lu(
                &mut numeric,
                self.pattern.view(&values),
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Singular(format!("numeric LU failed: {e:?}")))?;
        Ok(LuFactors {
            analysis: self.clone(),
            numeric,
            values,
            exec,
        })
    }
}

/// Numeric LU factors together with the matrix they factor.
#[derive(Debug)]
pub struct LuFactors {
    analysis: LuAnalysis,
    numeric: NumericLu<usize, f64>,
    values: Vec<f64>,
    exec: Execution,
}

impl LuFactors {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pattern(&self) -> &CscPattern {
        &self.analysis.pattern
    }

    pub fn solve(&self, rhs: &[f64], tol: f64) -> Result<SolveReport> {
        let par = self.exec.faer_par();
        let symbolic = &*self.analysis.symbolic;
        let lu = lu::LuRef::new_unchecked(symbolic, &self.numeric);
        let mut mem = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, par));
        refine(&self.analysis.pattern, &self.values, rhs, tol, |x| {
            lu.solve_in_place_with_conj(Conj::No, as_col_mut(x), par, MemStack::new(&mut mem));
        })
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
/// Only the lower triangle of the stored pattern is read by the factorization;
/// the full pattern is kept for residual checks.
#[derive(Debug)]
pub struct CholeskyFactors {
    pattern: Arc<CscPattern>,
    values: Vec<f64>,
    symbolic: SymbolicCholesky<usize>,
    factor: Vec<f64>,
    exec: Execution,
}

impl CholeskyFactors {
    pub fn new(pattern: Arc<CscPattern>, values: Vec<f64>, exec: Execution) -> Result<Self> {
        let par = exec.faer_par();
        let symbolic = cholesky::factorize_symbolic_cholesky(
            pattern.symbolic(),
            Side::Lower,
            Default::default(),
            Default::default(),
        )
        .map_err(|e| Error::Singular(format!("symbolic Cholesky failed: {e:?}")))?;
        let mut factor = vec![0.0; symbolic.len_val()];
        let mut mem =
            MemBuffer::new(symbolic.factorize_numeric_llt_scratch::<f64>(par, Default::default()));
        symbolic
            .factorize_numeric_llt(
                &mut factor,
                pattern.view(&values),
                Side::Lower,
                LltRegularization {
                    dynamic_regularization_delta: 0.0,
                    dynamic_regularization_epsilon: 0.0,
                },
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Singular(format!("matrix is not positive definite: {e:?}")))?;
        Ok(CholeskyFactors {
            pattern,
            values,
            symbolic,
            factor,
            exec,
        })
    }

    pub fn pattern(&self) -> &CscPattern {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn solve(&self, rhs: &[f64], tol: f64) -> Result<SolveReport> {
        let par = self.exec.faer_par();
        let llt = cholesky::LltRef::new(&self.symbolic, &self.factor);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, par));
        refine(&self.pattern, &self.values, rhs, tol, |x| {
            llt.solve_in_place_with_conj(Conj::No, as_col_mut(x), par, MemStack::new(&mut mem));
        })
    }
}
