//! Python bindings exposing the main types and operations: basis systems,
//! smoothing, functional PCA, the parametric and nonparametric homogeneity
//! tests, and the simulation cells.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use fdhom::basis::{difference_penalty, BSplineBasis};
use fdhom::error::Error;
use fdhom::fpca::FpcaModel;
use fdhom::manova::{bonferroni_battery, manova_sscp, manova_test};
use fdhom::nonparametric::{
    kruskal_multivariate, mood_multivariate, permutation_pvalue, spatial_median,
    wilcoxon_pairwise_bh, NpTest,
};
use fdhom::sim::{run_cell, ErrorFamily, MeanModel, Scenario, SimMethod};
use fdhom::smooth::{
    default_lambda_grid, fit_least_squares, fit_pspline, register_domain, select_lambda_loocv,
    CoefficientSet, CurveSet, RawCurve,
};

fn py_err(err: Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("empty matrix"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have unequal lengths"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

fn index_labels(labels: &[String]) -> Vec<usize> {
    let mut names: Vec<&String> = Vec::new();
    labels
        .iter()
        .map(|l| match names.iter().position(|n| *n == l) {
            Some(i) => i,
            None => {
                names.push(l);
                names.len() - 1
            }
        })
        .collect()
}

/// Clamped B-spline basis on an interval.
#[pyclass(name = "Basis", skip_from_py_object)]
#[derive(Clone)]
struct PyBasis {
    inner: BSplineBasis,
}

#[pymethods]
impl PyBasis {
    #[new]
    #[pyo3(signature = (degree, dimension, a=0.0, b=1.0))]
    fn new(degree: usize, dimension: usize, a: f64, b: f64) -> PyResult<Self> {
        Ok(Self {
            inner: BSplineBasis::new(degree, dimension, (a, b)).map_err(py_err)?,
        })
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn knots(&self) -> Vec<f64> {
        self.inner.knots().to_vec()
    }

    /// Design matrix rows for the given points.
    fn eval(&self, grid: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let design = self.inner.eval_matrix(&grid).map_err(py_err)?;
        Ok(from_matrix(&design))
    }

    /// Gram matrix of pairwise L² inner products.
    fn gram(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.gram())
    }

    /// Difference penalty matrix of the given order.
    fn penalty(&self, order: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_matrix(
            &difference_penalty(self.inner.dimension(), order).map_err(py_err)?,
        ))
    }

    fn __repr__(&self) -> String {
        let (a, b) = self.inner.domain();
        format!(
            "Basis(degree={}, dimension={}, domain=({a}, {b}))",
            self.inner.degree(),
            self.inner.dimension()
        )
    }
}

/// Curves on a shared grid with group labels.
#[pyclass(name = "CurveSet", skip_from_py_object)]
#[derive(Clone)]
struct PyCurveSet {
    inner: CurveSet,
}

#[pymethods]
impl PyCurveSet {
    #[new]
    fn new(
        grid: Vec<f64>,
        values: Vec<Vec<f64>>,
        ids: Vec<String>,
        groups: Vec<String>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: CurveSet::new(grid, to_matrix(values)?, ids, groups).map_err(py_err)?,
        })
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        from_matrix(self.inner.values())
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.curve_ids().to_vec()
    }

    #[getter]
    fn groups(&self) -> Vec<String> {
        self.inner.group_labels()
    }

    /// Unpenalized least-squares coefficients.
    fn fit_least_squares(&self, basis: &PyBasis) -> PyResult<PyCoefficients> {
        Ok(PyCoefficients {
            inner: fit_least_squares(&self.inner, &basis.inner).map_err(py_err)?,
        })
    }

    /// Penalized least-squares coefficients with a fixed λ.
    #[pyo3(signature = (basis, lam, order=2))]
    fn fit_pspline(&self, basis: &PyBasis, lam: f64, order: usize) -> PyResult<PyCoefficients> {
        Ok(PyCoefficients {
            inner: fit_pspline(&self.inner, &basis.inner, lam, order).map_err(py_err)?,
        })
    }

    /// Leave-one-out selection of λ; returns (lambda, [(lambda, cv), ...]).
    #[pyo3(signature = (basis, lambdas=None, order=2))]
    fn select_lambda_loocv(
        &self,
        basis: &PyBasis,
        lambdas: Option<Vec<f64>>,
        order: usize,
    ) -> PyResult<(f64, Vec<(f64, f64)>)> {
        let grid = lambdas.unwrap_or_else(default_lambda_grid);
        let sel = select_lambda_loocv(&self.inner, &basis.inner, &grid, order).map_err(py_err)?;
        Ok((sel.lambda, sel.table))
    }

    fn __len__(&self) -> usize {
        self.inner.n_curves()
    }
}

/// Basis coefficients of a set of curves.
#[pyclass(name = "Coefficients", skip_from_py_object)]
#[derive(Clone)]
struct PyCoefficients {
    inner: CoefficientSet,
}

#[pymethods]
impl PyCoefficients {
    #[new]
    fn new(
        matrix: Vec<Vec<f64>>,
        ids: Vec<String>,
        groups: Vec<String>,
        basis: &PyBasis,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: CoefficientSet::new(to_matrix(matrix)?, ids, groups, basis.inner.clone())
                .map_err(py_err)?,
        })
    }

    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        from_matrix(self.inner.coefficients())
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.curve_ids().to_vec()
    }

    #[getter]
    fn groups(&self) -> Vec<String> {
        self.inner.group_labels()
    }

    /// Fitted curve values on a grid.
    fn eval(&self, grid: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_matrix(&self.inner.eval_on(&grid).map_err(py_err)?))
    }

    /// Functional PCA of these coefficients.
    fn fpca(&self) -> PyResult<PyFpca> {
        let psi = self.inner.basis().gram();
        Ok(PyFpca {
            inner: FpcaModel::fit(&self.inner, &psi).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.n_curves()
    }
}

/// Fitted functional PCA model.
#[pyclass(name = "Fpca")]
struct PyFpca {
    inner: FpcaModel,
}

#[pymethods]
impl PyFpca {
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    #[getter]
    fn proportions(&self) -> Vec<f64> {
        self.inner.proportions()
    }

    #[getter]
    fn cumulative_proportions(&self) -> Vec<f64> {
        self.inner.cumulative_proportions()
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    /// Score matrix of the fitting data (first q columns).
    #[pyo3(signature = (q=None))]
    fn scores(&self, q: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
        let q = q.unwrap_or_else(|| self.inner.n_components());
        if q > self.inner.n_components() {
            return Err(PyValueError::new_err(format!(
                "requested {q} components, retained {}",
                self.inner.n_components()
            )));
        }
        Ok(from_matrix(&self.inner.scores().columns(0, q).into_owned()))
    }

    /// Eigenfunction values on a grid, one column per component.
    fn eigenfunctions(&self, grid: Vec<f64>, q: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_matrix(
            &self.inner.eigenfunction_values(&grid, q).map_err(py_err)?,
        ))
    }

    /// Smallest q reaching the cumulative variance threshold.
    fn components_for_variance(&self, threshold: f64) -> PyResult<usize> {
        self.inner.components_for_variance(threshold).map_err(py_err)
    }
}

/// Rescale raw curves onto [0, 1] and interpolate onto `grid`.
/// Curves are (id, group, [(v, value), ...], v_reset-or-None) tuples.
#[pyfunction]
fn register(
    curves: Vec<(String, String, Vec<(f64, f64)>, Option<f64>)>,
    grid: Vec<f64>,
) -> PyResult<PyCurveSet> {
    let raw: Vec<RawCurve> = curves
        .into_iter()
        .map(|(id, group, points, v_reset)| RawCurve {
            id,
            group,
            points,
            v_reset,
        })
        .collect();
    Ok(PyCurveSet {
        inner: register_domain(&raw, &grid).map_err(py_err)?,
    })
}

/// One-way MANOVA; returns rows of (method, statistic, df1, df2, p).
#[pyfunction]
fn manova(
    data: Vec<Vec<f64>>,
    groups: Vec<String>,
) -> PyResult<Vec<(String, f64, f64, Option<f64>, f64)>> {
    let matrix = to_matrix(data)?;
    let idx = index_labels(&groups);
    let sscp = manova_sscp(&matrix, &idx).map_err(py_err)?;
    let report = manova_test(&sscp).map_err(py_err)?;
    Ok(report
        .rows()
        .into_iter()
        .map(|r| (r.method, r.statistic, r.df1, r.df2, r.p_value))
        .collect())
}

/// Per-component ANOVA battery with Bonferroni control; returns
/// (per_component_p, adjusted_p, reject).
#[pyfunction]
fn anova_battery(
    scores: Vec<Vec<f64>>,
    groups: Vec<String>,
    alpha: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, bool)> {
    let matrix = to_matrix(scores)?;
    let idx = index_labels(&groups);
    let battery = bonferroni_battery(&matrix, &idx, alpha).map_err(py_err)?;
    Ok((
        battery.per_component.iter().map(|r| r.p_value).collect(),
        battery.adjusted_p.clone(),
        battery.reject,
    ))
}

fn np_tuple(
    kind: NpTest,
    data: Vec<Vec<f64>>,
    groups: Vec<String>,
) -> PyResult<(f64, f64, f64)> {
    let matrix = to_matrix(data)?;
    let idx = index_labels(&groups);
    let report = match kind {
        NpTest::Mood => mood_multivariate(&matrix, &idx),
        NpTest::Kruskal => kruskal_multivariate(&matrix, &idx),
    }
    .map_err(py_err)?;
    Ok((report.statistic, report.df1, report.p_value))
}

/// Mood-type spatial-sign test; returns (statistic, df, p).
#[pyfunction]
fn mood_test(data: Vec<Vec<f64>>, groups: Vec<String>) -> PyResult<(f64, f64, f64)> {
    np_tuple(NpTest::Mood, data, groups)
}

/// Kruskal–Wallis-type spatial-rank test; returns (statistic, df, p).
#[pyfunction]
fn kruskal_test(data: Vec<Vec<f64>>, groups: Vec<String>) -> PyResult<(f64, f64, f64)> {
    np_tuple(NpTest::Kruskal, data, groups)
}

/// Label-permutation p-value for "mood" or "kruskal".
#[pyfunction]
#[pyo3(signature = (test, data, groups, permutations=999, seed=42))]
fn permutation_test(
    test: &str,
    data: Vec<Vec<f64>>,
    groups: Vec<String>,
    permutations: usize,
    seed: u64,
) -> PyResult<f64> {
    let kind = match test {
        "mood" => NpTest::Mood,
        "kruskal" => NpTest::Kruskal,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown test '{other}' (expected 'mood' or 'kruskal')"
            )))
        }
    };
    let matrix = to_matrix(data)?;
    let idx = index_labels(&groups);
    permutation_pvalue(kind, &matrix, &idx, permutations, seed).map_err(py_err)
}

/// Pairwise Wilcoxon rank-sum comparisons with Benjamini–Hochberg
/// adjustment; returns the m×m adjusted p-value table.
#[pyfunction]
fn wilcoxon_pairwise(values: Vec<f64>, groups: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
    let idx = index_labels(&groups);
    Ok(from_matrix(
        &wilcoxon_pairwise_bh(&values, &idx).map_err(py_err)?,
    ))
}

/// Geometric median of the rows.
#[pyfunction]
fn geometric_median(data: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let matrix = to_matrix(data)?;
    Ok(spatial_median(&matrix)
        .map_err(py_err)?
        .iter()
        .cloned()
        .collect())
}

/// One Monte Carlo cell of the power study; returns (acceptance, failures).
/// model ∈ {M1, M2, M3}, family ∈ {gaussian, lognormal},
/// method ∈ {basis-coef, pc-<q>}.
#[pyfunction]
#[pyo3(signature = (model, family, sigma, n_i, method, reps=300, seed=42))]
#[allow(clippy::too_many_arguments)]
fn simulate_cell(
    model: &str,
    family: &str,
    sigma: f64,
    n_i: usize,
    method: &str,
    reps: usize,
    seed: u64,
) -> PyResult<(f64, usize)> {
    let scenario = Scenario::new(
        MeanModel::parse(model).map_err(py_err)?,
        ErrorFamily::parse(family).map_err(py_err)?,
        sigma,
        n_i,
    )
    .map_err(py_err)?;
    let method = SimMethod::parse(method).map_err(py_err)?;
    let result = run_cell(&scenario, method, reps, seed).map_err(py_err)?;
    Ok((result.acceptance, result.failures))
}

#[pymodule]
fn fdhom_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBasis>()?;
    m.add_class::<PyCurveSet>()?;
    m.add_class::<PyCoefficients>()?;
    m.add_class::<PyFpca>()?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    m.add_function(wrap_pyfunction!(manova, m)?)?;
    m.add_function(wrap_pyfunction!(anova_battery, m)?)?;
    m.add_function(wrap_pyfunction!(mood_test, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_test, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_test, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_pairwise, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_median, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cell, m)?)?;
    Ok(())
}
