//! Homogeneity testing for samples of curves via basis expansion.
//!
//! The crate turns discretized sample curves into B-spline coefficient
//! vectors and decides whether several independent groups of curves were
//! generated by the same stochastic process. Two routes are provided:
//!
//! - parametric: one-way MANOVA on the coefficient matrix, or univariate
//!   ANOVA batteries on functional principal component scores with
//!   Bonferroni control;
//! - nonparametric: multivariate spatial-sign (Mood-type) and spatial-rank
//!   (Kruskal–Wallis-type) tests with χ² or permutation p-values, plus
//!   pairwise Wilcoxon rank-sum comparisons with Benjamini–Hochberg
//!   adjustment.
//!
//! Supporting machinery covers curve registration onto [0, 1], least-squares
//! and P-spline smoothing with leave-one-out cross-validation, functional
//! PCA through the Gram-matrix square root, and a reproducible Monte Carlo
//! harness for power studies.

pub mod basis;
pub mod error;
pub mod fpca;
pub mod io;
pub mod manova;
pub mod nonparametric;
pub mod report;
pub mod rng;
pub mod sim;
pub mod smooth;

pub use basis::{difference_penalty, BSplineBasis, GramMatrix, PenaltyMatrix};
pub use error::{Error, Result};
pub use fpca::FpcaModel;
pub use report::TestReport;
pub use smooth::{CoefficientSet, CurveSet, RawCurve};
