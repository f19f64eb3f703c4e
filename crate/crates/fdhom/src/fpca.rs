//! Functional principal component analysis of a coefficient set.
//!
//! With Ψ the Gram matrix of the basis and A the n×p coefficient matrix,
//! the functional eigenproblem reduces to the symmetric multivariate one
//! n⁻¹ Ψ^{1/2} A_c' A_c Ψ^{1/2} u_k = λ_k u_k on the grand-mean-centered
//! coefficients; eigenfunction coefficients are b_k = Ψ^{-1/2} u_k and the
//! scores are the L² projections of the centered curves onto them.

use nalgebra::{DMatrix, DVector};

use crate::basis::{BSplineBasis, GramMatrix};
use crate::error::{Error, Result};
use crate::smooth::CoefficientSet;

/// Relative eigenvalue cutoff below which components are discarded.
const EIGEN_DROP: f64 = 1e-12;

/// Symmetric square root of a positive-definite Gram matrix, with its
/// inverse, via the symmetric eigendecomposition.
pub fn sqrt_gram(psi: &GramMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = psi.nrows();
    if psi.ncols() != p {
        return Err(Error::InvalidArgument("Gram matrix must be square".into()));
    }
    let eigen = psi.clone().symmetric_eigen();
    let max = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::Conditioning(format!(
            "Gram matrix is not positive definite (eigenvalue range [{min:.3e}, {max:.3e}])"
        )));
    }
    let v = &eigen.eigenvectors;
    let sqrt = v * DMatrix::from_diagonal(&eigen.eigenvalues.map(f64::sqrt)) * v.transpose();
    let inv =
        v * DMatrix::from_diagonal(&eigen.eigenvalues.map(|d| 1.0 / d.sqrt())) * v.transpose();
    Ok((symmetrize(sqrt), symmetrize(inv)))
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..m.nrows() {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

/// Fitted functional PCA model.
#[derive(Debug, Clone)]
pub struct FpcaModel {
    mean: DVector<f64>,
    eigenvalues: Vec<f64>,
    /// p×r matrix with eigenfunction coefficient vectors b_k as columns.
    harmonics: DMatrix<f64>,
    /// n×r score matrix for the fitting data.
    scores: DMatrix<f64>,
    psi: GramMatrix,
    basis: BSplineBasis,
}

impl FpcaModel {
    /// Fits the model to a coefficient set. Components whose eigenvalue is
    /// below `1e-12` times the leading one are dropped.
    pub fn fit(coeffs: &CoefficientSet, psi: &GramMatrix) -> Result<Self> {
        let n = coeffs.n_curves();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "functional PCA needs at least 2 curves, got {n}"
            )));
        }
        let (sqrt, sqrt_inv) = sqrt_gram(psi)?;
        let a = coeffs.coefficients();
        let mean = a.row_mean().transpose();
        let mut centered = a.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        // covariance of A_c Ψ^{1/2}, divisor n
        let whitened = &centered * &sqrt;
        let cov = symmetrize(whitened.transpose() * &whitened / n as f64);
        let eigen = cov.symmetric_eigen();

        let mut order: Vec<usize> = (0..eigen.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eigen.eigenvalues[j].partial_cmp(&eigen.eigenvalues[i]).unwrap());
        let leading = eigen.eigenvalues[order[0]].max(0.0);
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&k| eigen.eigenvalues[k] > EIGEN_DROP * leading && eigen.eigenvalues[k] > 0.0)
            .collect();

        let r = kept.len();
        let p = psi.nrows();
        let mut eigenvalues = Vec::with_capacity(r);
        let mut u = DMatrix::zeros(p, r);
        for (col, &k) in kept.iter().enumerate() {
            eigenvalues.push(eigen.eigenvalues[k]);
            u.set_column(col, &eigen.eigenvectors.column(k));
        }
        let mut harmonics = &sqrt_inv * &u;
        // deterministic sign: largest-magnitude coefficient of each b_k ends
        // up positive
        for col in 0..r {
            let mut column = harmonics.column_mut(col);
            let mut arg = 0;
            for (i, v) in column.iter().enumerate() {
                if v.abs() > column[arg].abs() {
                    arg = i;
                }
            }
            if column[arg] < 0.0 {
                column.neg_mut();
                u.column_mut(col).neg_mut();
            }
        }
        let scores = whitened * &u;
        Ok(Self {
            mean,
            eigenvalues,
            harmonics,
            scores,
            psi: psi.clone(),
            basis: coeffs.basis().clone(),
        })
    }

    /// Grand-mean coefficient vector.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Retained eigenvalues, in decreasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenfunction coefficient vectors b_k, one column per component.
    pub fn harmonics(&self) -> &DMatrix<f64> {
        &self.harmonics
    }

    /// Scores of the fitting data, one column per component.
    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    /// Explained-variance proportions per component.
    pub fn proportions(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues.iter().map(|l| l / total).collect()
    }

    /// Cumulative explained-variance proportions.
    pub fn cumulative_proportions(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.proportions()
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }

    /// Smallest q whose cumulative explained variance reaches `threshold`.
    pub fn components_for_variance(&self, threshold: f64) -> Result<usize> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "variance threshold must lie in (0, 1], got {threshold}"
            )));
        }
        let cum = self.cumulative_proportions();
        for (k, c) in cum.iter().enumerate() {
            if *c >= threshold - 1e-12 {
                return Ok(k + 1);
            }
        }
        Ok(self.n_components())
    }

    /// Scores of arbitrary coefficients on the first q components:
    /// ξ_k = (a - ā)' Ψ b_k.
    pub fn project(&self, coeffs: &CoefficientSet, q: usize) -> Result<DMatrix<f64>> {
        if q > self.n_components() {
            return Err(Error::ComponentRange {
                requested: q,
                retained: self.n_components(),
            });
        }
        let mut centered = coeffs.coefficients().clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * &self.psi * self.harmonics.columns(0, q))
    }

    /// Truncated reconstruction ā + Σ_{k≤q} ξ_k b_k as a coefficient set
    /// aligned with the fitting data.
    pub fn reconstruct(&self, coeffs: &CoefficientSet, q: usize) -> Result<CoefficientSet> {
        if q > self.n_components() {
            return Err(Error::ComponentRange {
                requested: q,
                retained: self.n_components(),
            });
        }
        let n = self.scores.nrows();
        let mut rows = DMatrix::zeros(n, self.mean.len());
        for i in 0..n {
            let mut row = self.mean.clone();
            for k in 0..q {
                row += self.scores[(i, k)] * self.harmonics.column(k);
            }
            rows.set_row(i, &row.transpose());
        }
        Ok(CoefficientSet::from_parts(
            rows,
            coeffs.curve_ids().to_vec(),
            coeffs.groups().to_vec(),
            coeffs.group_names().to_vec(),
            self.basis.clone(),
        ))
    }

    /// Eigenfunction values on a grid, one column per component.
    pub fn eigenfunction_values(&self, grid: &[f64], q: usize) -> Result<DMatrix<f64>> {
        if q > self.n_components() {
            return Err(Error::ComponentRange {
                requested: q,
                retained: self.n_components(),
            });
        }
        let design = self.basis.eval_matrix(grid)?;
        Ok(design * self.harmonics.columns(0, q))
    }
}
