//! Curve registration and conversion of discretized curves into basis
//! coefficients.
//!
//! Raw curves observed on per-curve voltage ranges are first rescaled onto
//! [0, 1] and interpolated onto a common grid. Coefficients are then obtained
//! by least squares (through a QR decomposition rather than the normal
//! equations) or by penalized least squares with a difference penalty, with
//! an optional leave-one-out cross-validation search for the smoothing
//! parameter shared by all curves.

use nalgebra::DMatrix;

use crate::basis::{difference_penalty, BSplineBasis};
use crate::error::{Error, Result};

/// One raw curve as observed: increasing abscissas in original units and a
/// terminal abscissa used for rescaling (defaults to the largest abscissa).
#[derive(Debug, Clone)]
pub struct RawCurve {
    pub id: String,
    pub group: String,
    /// (abscissa, ordinate) pairs with strictly increasing abscissas.
    pub points: Vec<(f64, f64)>,
    pub v_reset: Option<f64>,
}

impl RawCurve {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "curve '{}' has fewer than 2 points",
                self.id
            )));
        }
        if self.points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidArgument(format!(
                "curve '{}' has non-increasing abscissas",
                self.id
            )));
        }
        let reset = self.reset_value();
        if !(reset > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "curve '{}' has nonpositive terminal abscissa {reset}",
                self.id
            )));
        }
        if self.points.last().unwrap().0 > reset {
            return Err(Error::InvalidArgument(format!(
                "curve '{}' has abscissas beyond its terminal value {reset}",
                self.id
            )));
        }
        Ok(())
    }

    pub fn reset_value(&self) -> f64 {
        self.v_reset
            .unwrap_or_else(|| self.points.last().map(|p| p.0).unwrap_or(f64::NAN))
    }
}

/// Sample curves discretized on a shared grid, with group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    grid: Vec<f64>,
    /// One row per curve, one column per grid point.
    values: DMatrix<f64>,
    curve_ids: Vec<String>,
    /// Group index per curve, into `group_names`.
    groups: Vec<usize>,
    group_names: Vec<String>,
}

impl CurveSet {
    pub fn new(
        grid: Vec<f64>,
        values: DMatrix<f64>,
        curve_ids: Vec<String>,
        group_labels: Vec<String>,
    ) -> Result<Self> {
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "grid must be strictly increasing".into(),
            ));
        }
        if values.ncols() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "value matrix has {} columns but the grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        if values.nrows() != curve_ids.len() || values.nrows() != group_labels.len() {
            return Err(Error::InvalidArgument(
                "curve ids and group labels must align with the value rows".into(),
            ));
        }
        if values.nrows() == 0 {
            return Err(Error::InvalidArgument("no curves".into()));
        }
        let (groups, group_names) = index_groups(&group_labels);
        Ok(Self {
            grid,
            values,
            curve_ids,
            groups,
            group_names,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }

    pub fn curve_ids(&self) -> &[String] {
        &self.curve_ids
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_labels(&self) -> Vec<String> {
        self.groups
            .iter()
            .map(|&g| self.group_names[g].clone())
            .collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.group_names.len()];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }
}

/// Basis coefficients of a set of curves, row-aligned with the curve labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    coeffs: DMatrix<f64>,
    curve_ids: Vec<String>,
    groups: Vec<usize>,
    group_names: Vec<String>,
    basis: BSplineBasis,
}

impl CoefficientSet {
    pub fn new(
        coeffs: DMatrix<f64>,
        curve_ids: Vec<String>,
        group_labels: Vec<String>,
        basis: BSplineBasis,
    ) -> Result<Self> {
        if coeffs.ncols() != basis.dimension() {
            return Err(Error::InvalidArgument(format!(
                "coefficient matrix has {} columns but the basis dimension is {}",
                coeffs.ncols(),
                basis.dimension()
            )));
        }
        if coeffs.nrows() != curve_ids.len() || coeffs.nrows() != group_labels.len() {
            return Err(Error::InvalidArgument(
                "curve ids and group labels must align with the coefficient rows".into(),
            ));
        }
        let (groups, group_names) = index_groups(&group_labels);
        Ok(Self {
            coeffs,
            curve_ids,
            groups,
            group_names,
            basis,
        })
    }

    pub(crate) fn from_parts(
        coeffs: DMatrix<f64>,
        curve_ids: Vec<String>,
        groups: Vec<usize>,
        group_names: Vec<String>,
        basis: BSplineBasis,
    ) -> Self {
        Self {
            coeffs,
            curve_ids,
            groups,
            group_names,
            basis,
        }
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn n_curves(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn curve_ids(&self) -> &[String] {
        &self.curve_ids
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_labels(&self) -> Vec<String> {
        self.groups
            .iter()
            .map(|&g| self.group_names[g].clone())
            .collect()
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    /// Evaluates every fitted curve on a grid.
    pub fn eval_on(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let design = self.basis.eval_matrix(grid)?;
        Ok(&self.coeffs * design.transpose())
    }
}

fn index_groups(labels: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut names: Vec<String> = Vec::new();
    let mut idx = Vec::with_capacity(labels.len());
    for label in labels {
        match names.iter().position(|n| n == label) {
            Some(i) => idx.push(i),
            None => {
                names.push(label.clone());
                idx.push(names.len() - 1);
            }
        }
    }
    (idx, names)
}

/// Rescales each raw curve onto [0, 1] via u = v / v_reset and interpolates
/// its ordinates linearly onto the common target grid. Extrapolation is never
/// performed: every grid point must be covered by the rescaled curve.
pub fn register_domain(curves: &[RawCurve], grid: &[f64]) -> Result<CurveSet> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no curves to register".into()));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "target grid must be nonempty and strictly increasing".into(),
        ));
    }
    let mut values = DMatrix::zeros(curves.len(), grid.len());
    let mut ids = Vec::with_capacity(curves.len());
    let mut labels = Vec::with_capacity(curves.len());
    for (row, curve) in curves.iter().enumerate() {
        curve.validate()?;
        let reset = curve.reset_value();
        let u: Vec<f64> = curve.points.iter().map(|p| p.0 / reset).collect();
        let lo = u[0];
        let hi = *u.last().unwrap();
        for (col, &t) in grid.iter().enumerate() {
            if t < lo || t > hi {
                return Err(Error::RegistrationCoverage {
                    curve: curve.id.clone(),
                    lo,
                    hi,
                    point: t,
                });
            }
            values[(row, col)] = interpolate(&u, &curve.points, t);
        }
        ids.push(curve.id.clone());
        labels.push(curve.group.clone());
    }
    CurveSet::new(grid.to_vec(), values, ids, labels)
}

fn interpolate(u: &[f64], points: &[(f64, f64)], t: f64) -> f64 {
    // binary search for the segment containing t; exact hits return the node
    let j = match u.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
        Ok(exact) => return points[exact].1,
        Err(ins) => ins.clamp(1, u.len() - 1) - 1,
    };
    let (u0, u1) = (u[j], u[j + 1]);
    let (y0, y1) = (points[j].1, points[j + 1].1);
    let w = (t - u0) / (u1 - u0);
    y0 + w * (y1 - y0)
}

/// Unpenalized least-squares coefficients for every curve, via a thin QR of
/// the design matrix.
pub fn fit_least_squares(curves: &CurveSet, basis: &BSplineBasis) -> Result<CoefficientSet> {
    let p = basis.dimension();
    let m = curves.grid().len();
    if m < p {
        return Err(Error::SingularFit(format!(
            "{m} grid points cannot identify {p} basis functions; use fewer basis functions"
        )));
    }
    let design = basis.eval_matrix(curves.grid())?;
    let qr = design.clone().qr();
    let r = qr.r();
    let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let diag_min = (0..p).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if diag_min <= 1e-12 * diag_max {
        return Err(Error::SingularFit(
            "design matrix is rank deficient; use fewer basis functions".into(),
        ));
    }
    let qty = qr.q().transpose() * curves.values().transpose();
    let coeffs_t = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularFit("triangular solve failed".into()))?;
    Ok(CoefficientSet::from_parts(
        coeffs_t.transpose(),
        curves.curve_ids().to_vec(),
        curves.groups().to_vec(),
        curves.group_names().to_vec(),
        basis.clone(),
    ))
}

/// Penalized least-squares coefficients: each row solves
/// (B'B + λP) a = B'y with P the difference penalty of the given order.
pub fn fit_pspline(
    curves: &CurveSet,
    basis: &BSplineBasis,
    lambda: f64,
    order: usize,
) -> Result<CoefficientSet> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty parameter must be nonnegative, got {lambda}"
        )));
    }
    let design = basis.eval_matrix(curves.grid())?;
    let penalty = difference_penalty(basis.dimension(), order)?;
    let gram = design.transpose() * &design + lambda * penalty;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::SingularFit(
            "penalized system is singular; increase the penalty or use fewer basis functions"
                .into(),
        )
    })?;
    let rhs = design.transpose() * curves.values().transpose();
    let coeffs_t = chol.solve(&rhs);
    Ok(CoefficientSet::from_parts(
        coeffs_t.transpose(),
        curves.curve_ids().to_vec(),
        curves.groups().to_vec(),
        curves.group_names().to_vec(),
        basis.clone(),
    ))
}

/// Result of the leave-one-out search: the chosen λ and the CV score per
/// candidate.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// (λ, CV(λ)) in the order given.
    pub table: Vec<(f64, f64)>,
}

/// Default λ candidates: 25 log-spaced values in [1e-6, 1e3].
pub fn default_lambda_grid() -> Vec<f64> {
    let n = 25;
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            10f64.powf(-6.0 + 9.0 * t)
        })
        .collect()
}

/// Leave-one-out cross-validation over a λ grid, shared by all curves.
///
/// For each λ the pointwise shortcut is used: with H(λ) = B (B'B + λP)⁻¹ B'
/// the left-out residual at grid point s is (y_s − ŷ_s) / (1 − h_ss), and the
/// CV score sums its square over grid points and curves. Ties prefer the
/// larger λ.
pub fn select_lambda_loocv(
    curves: &CurveSet,
    basis: &BSplineBasis,
    lambda_grid: &[f64],
    order: usize,
) -> Result<LambdaSelection> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty λ grid".into()));
    }
    let design = basis.eval_matrix(curves.grid())?;
    let penalty = difference_penalty(basis.dimension(), order)?;
    let btb = design.transpose() * &design;
    let bty = design.transpose() * curves.values().transpose();

    let mut table = Vec::with_capacity(lambda_grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &lambda in lambda_grid {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "penalty parameter must be nonnegative, got {lambda}"
            )));
        }
        let score = match (&btb + lambda * &penalty).cholesky() {
            Some(chol) => {
                let coeffs_t = chol.solve(&bty);
                let fitted_t = &design * &coeffs_t;
                let hat = &design * chol.solve(&design.transpose());
                let mut cv = 0.0;
                for s in 0..curves.grid().len() {
                    let denom = 1.0 - hat[(s, s)];
                    if denom.abs() < 1e-12 {
                        cv = f64::INFINITY;
                        break;
                    }
                    for c in 0..curves.n_curves() {
                        let e = (curves.values()[(c, s)] - fitted_t[(s, c)]) / denom;
                        cv += e * e;
                    }
                }
                cv
            }
            None => f64::INFINITY,
        };
        table.push((lambda, score));
        if score.is_finite() {
            best = match best {
                Some((bl, bs)) if bs < score => Some((bl, bs)),
                _ => Some((lambda, score)),
            };
        }
    }
    match best {
        Some((lambda, _)) => Ok(LambdaSelection { lambda, table }),
        None => Err(Error::SelectionError(
            "every candidate λ produced a non-finite CV score".into(),
        )),
    }
}

/// Trace of the hat matrix H(λ); the effective degrees of freedom of the fit.
pub fn hat_trace(
    curves: &CurveSet,
    basis: &BSplineBasis,
    lambda: f64,
    order: usize,
) -> Result<f64> {
    let design = basis.eval_matrix(curves.grid())?;
    let penalty = difference_penalty(basis.dimension(), order)?;
    let chol = (design.transpose() * &design + lambda * penalty)
        .cholesky()
        .ok_or_else(|| Error::SingularFit("penalized system is singular".into()))?;
    let hat = &design * chol.solve(&design.transpose());
    Ok(hat.trace())
}
