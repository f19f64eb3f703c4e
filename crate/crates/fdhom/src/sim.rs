//! Monte Carlo study of the homogeneity tests.
//!
//! Three balanced groups of curves are generated from one of three mean
//! models plus a truncated Wiener Karhunen–Loève error process (Gaussian
//! case) or its centered exponential (log-normal case), observed at 51
//! equally spaced points and converted to cubic B-spline coefficients of
//! dimension 18 by least squares. Each cell of the study records the
//! proportion of replications in which the configured test accepts at level
//! α. Replicates draw from streams derived from (master seed, cell,
//! replicate), so the aggregate output is bit-identical for any worker
//! count.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::basis::BSplineBasis;
use crate::error::{Error, Result};
use crate::fpca::FpcaModel;
use crate::manova::{bonferroni_battery, manova_sscp, manova_test};
use crate::nonparametric::kruskal_multivariate;
use crate::rng::{cell_key, replicate_rng};
use crate::smooth::{fit_least_squares, CoefficientSet, CurveSet};

/// Group mean models; group indices run 1..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeanModel {
    /// Identical means 0.1·|sin 4πt| (the null holds).
    M1,
    /// 0.05·i·|sin 4πt|.
    M2,
    /// 0.025·i·|sin 4πt| (smaller separation).
    M3,
}

impl MeanModel {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M1" => Ok(Self::M1),
            "M2" => Ok(Self::M2),
            "M3" => Ok(Self::M3),
            other => Err(Error::InvalidArgument(format!(
                "unknown mean model '{other}' (expected M1, M2 or M3)"
            ))),
        }
    }

    fn tag(self) -> u64 {
        match self {
            Self::M1 => 1,
            Self::M2 => 2,
            Self::M3 => 3,
        }
    }
}

impl fmt::Display for MeanModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::M1 => write!(f, "M1"),
            Self::M2 => write!(f, "M2"),
            Self::M3 => write!(f, "M3"),
        }
    }
}

/// Error process attached to the group means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorFamily {
    Gaussian,
    Lognormal,
}

impl ErrorFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "lognormal" => Ok(Self::Lognormal),
            other => Err(Error::InvalidArgument(format!(
                "unknown error family '{other}' (expected gaussian or lognormal)"
            ))),
        }
    }

    fn tag(self) -> u64 {
        match self {
            Self::Gaussian => 1,
            Self::Lognormal => 2,
        }
    }
}

impl fmt::Display for ErrorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => write!(f, "gaussian"),
            Self::Lognormal => write!(f, "lognormal"),
        }
    }
}

/// Test route executed in each replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimMethod {
    /// Homogeneity test on the full coefficient vectors.
    BasisCoef,
    /// Dimension reduction to the first q principal component scores.
    PcScores(usize),
}

impl SimMethod {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "basis-coef" {
            return Ok(Self::BasisCoef);
        }
        if let Some(q) = s.strip_prefix("pc-") {
            let q: usize = q.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad component count in method '{s}'"))
            })?;
            if q == 0 {
                return Err(Error::InvalidArgument(
                    "component count must be positive".into(),
                ));
            }
            return Ok(Self::PcScores(q));
        }
        Err(Error::InvalidArgument(format!(
            "unknown method '{s}' (expected basis-coef or pc-<q>)"
        )))
    }

    fn tag(self) -> u64 {
        match self {
            Self::BasisCoef => 0,
            Self::PcScores(q) => q as u64,
        }
    }
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BasisCoef => write!(f, "basis-coef"),
            Self::PcScores(q) => write!(f, "pc-{q}"),
        }
    }
}

/// One data-generating configuration of the study.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: MeanModel,
    pub family: ErrorFamily,
    pub sigma: f64,
    /// Balanced size of each of the three groups.
    pub group_size: usize,
    pub alpha: f64,
}

pub const N_GROUPS: usize = 3;
pub const GRID_POINTS: usize = 51;
pub const ERROR_TRUNCATION: usize = 20;
pub const BASIS_DEGREE: usize = 3;
pub const BASIS_DIMENSION: usize = 18;

impl Scenario {
    pub fn new(model: MeanModel, family: ErrorFamily, sigma: f64, group_size: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dispersion must be positive, got {sigma}"
            )));
        }
        if group_size < 2 {
            return Err(Error::InvalidArgument(
                "need at least two curves per group".into(),
            ));
        }
        Ok(Self {
            model,
            family,
            sigma,
            group_size,
            alpha: 0.05,
        })
    }

    /// The common 51-point observation grid on [0, 1].
    pub fn grid() -> Vec<f64> {
        (0..GRID_POINTS)
            .map(|s| s as f64 / (GRID_POINTS - 1) as f64)
            .collect()
    }

    /// The cubic dimension-18 analysis basis.
    pub fn basis() -> BSplineBasis {
        BSplineBasis::new(BASIS_DEGREE, BASIS_DIMENSION, (0.0, 1.0)).expect("fixed valid basis")
    }

    fn key(&self, method: SimMethod) -> u64 {
        cell_key(&[
            self.model.tag(),
            self.family.tag(),
            self.sigma.to_bits(),
            self.group_size as u64,
            method.tag(),
        ])
    }
}

/// Group mean value at time t; groups are numbered 1..=3.
pub fn mean_function(model: MeanModel, group: usize, t: f64) -> f64 {
    let base = (4.0 * std::f64::consts::PI * t).sin().abs();
    match model {
        MeanModel::M1 => 0.1 * base,
        MeanModel::M2 => 0.05 * group as f64 * base,
        MeanModel::M3 => 0.025 * group as f64 * base,
    }
}

/// k-th eigenvalue of the Wiener covariance σ²·min(s,t): σ²/((k−½)²π²).
pub fn wiener_eigenvalue(sigma: f64, k: usize) -> f64 {
    let freq = (k as f64 - 0.5) * std::f64::consts::PI;
    sigma * sigma / (freq * freq)
}

/// k-th eigenfunction of the Wiener covariance: √2·sin((k−½)πt).
pub fn wiener_eigenfunction(k: usize, t: f64) -> f64 {
    let freq = (k as f64 - 0.5) * std::f64::consts::PI;
    std::f64::consts::SQRT_2 * (freq * t).sin()
}

/// Truncated pointwise variance Σ_{k≤q} λ_k f_k(t)².
pub fn truncated_variance(sigma: f64, q: usize, t: f64) -> f64 {
    (1..=q)
        .map(|k| {
            let f = wiener_eigenfunction(k, t);
            wiener_eigenvalue(sigma, k) * f * f
        })
        .sum()
}

/// One draw of the truncated Wiener expansion on the grid.
pub fn wiener_kl_sample(
    sigma: f64,
    q: usize,
    grid: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let coefs: Vec<f64> = (1..=q)
        .map(|k| {
            let z: f64 = rng.sample(StandardNormal);
            wiener_eigenvalue(sigma, k).sqrt() * z
        })
        .collect();
    grid.iter()
        .map(|&t| {
            (1..=q)
                .map(|k| coefs[k - 1] * wiener_eigenfunction(k, t))
                .sum()
        })
        .collect()
}

/// One draw of the centered exponential of the Wiener expansion:
/// η(t) = exp(ε(t)) − exp(v(t)/2), so that Eη(t) = 0 pointwise under the
/// truncation actually simulated.
pub fn lognormal_error_sample(
    sigma: f64,
    q: usize,
    grid: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let eps = wiener_kl_sample(sigma, q, grid, rng);
    grid.iter()
        .zip(eps)
        .map(|(&t, e)| e.exp() - (0.5 * truncated_variance(sigma, q, t)).exp())
        .collect()
}

/// Generates one replication: three groups of curves on the 51-point grid
/// and their least-squares coefficients in the dimension-18 cubic basis.
pub fn generate_replicate(
    scenario: &Scenario,
    rng: &mut ChaCha8Rng,
) -> Result<(CurveSet, CoefficientSet)> {
    let grid = Scenario::grid();
    let n = N_GROUPS * scenario.group_size;
    let mut values = DMatrix::zeros(n, grid.len());
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for group in 1..=N_GROUPS {
        for j in 1..=scenario.group_size {
            let err = match scenario.family {
                ErrorFamily::Gaussian => {
                    wiener_kl_sample(scenario.sigma, ERROR_TRUNCATION, &grid, rng)
                }
                ErrorFamily::Lognormal => {
                    lognormal_error_sample(scenario.sigma, ERROR_TRUNCATION, &grid, rng)
                }
            };
            for (s, &t) in grid.iter().enumerate() {
                values[(row, s)] = mean_function(scenario.model, group, t) + err[s];
            }
            ids.push(format!("g{group}-{j}"));
            labels.push(format!("G{group}"));
            row += 1;
        }
    }
    let curves = CurveSet::new(grid, values, ids, labels)?;
    let coeffs = fit_least_squares(&curves, &Scenario::basis())?;
    Ok((curves, coeffs))
}

/// Acceptance (p ≥ α, or no Bonferroni rejection) of one replicate under the
/// given method.
fn replicate_accepts(scenario: &Scenario, method: SimMethod, rng: &mut ChaCha8Rng) -> Result<bool> {
    let (_, coeffs) = generate_replicate(scenario, rng)?;
    let alpha = scenario.alpha;
    match (scenario.family, method) {
        (ErrorFamily::Gaussian, SimMethod::BasisCoef) => {
            let sscp = manova_sscp(coeffs.coefficients(), coeffs.groups())?;
            let report = manova_test(&sscp)?;
            Ok(!report.headline().reject_at(alpha))
        }
        (ErrorFamily::Gaussian, SimMethod::PcScores(q)) => {
            let model = FpcaModel::fit(&coeffs, &Scenario::basis().gram())?;
            if model.n_components() < q {
                return Err(Error::ComponentRange {
                    requested: q,
                    retained: model.n_components(),
                });
            }
            let scores = model.scores().columns(0, q).into_owned();
            let battery = bonferroni_battery(&scores, coeffs.groups(), alpha)?;
            Ok(!battery.reject)
        }
        (ErrorFamily::Lognormal, SimMethod::BasisCoef) => {
            let report = kruskal_multivariate(coeffs.coefficients(), coeffs.groups())?;
            Ok(!report.reject_at(alpha))
        }
        (ErrorFamily::Lognormal, SimMethod::PcScores(q)) => {
            let model = FpcaModel::fit(&coeffs, &Scenario::basis().gram())?;
            if model.n_components() < q {
                return Err(Error::ComponentRange {
                    requested: q,
                    retained: model.n_components(),
                });
            }
            let scores = model.scores().columns(0, q).into_owned();
            let report = kruskal_multivariate(&scores, coeffs.groups())?;
            Ok(!report.reject_at(alpha))
        }
    }
}

/// Aggregated outcome of one study cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub model: MeanModel,
    pub family: ErrorFamily,
    pub sigma: f64,
    pub group_size: usize,
    pub method: SimMethod,
    pub reps: usize,
    pub alpha: f64,
    /// Fraction of successful replications that accepted the null.
    pub acceptance: f64,
    /// Replications excluded because of an error; zero in healthy runs.
    pub failures: usize,
    pub seed: u64,
}

/// Runs `reps` replications of one cell. Replicate r uses the stream derived
/// from (seed, cell, r); the result is independent of the rayon worker count.
pub fn run_cell(
    scenario: &Scenario,
    method: SimMethod,
    reps: usize,
    seed: u64,
) -> Result<StudyResult> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let cell = scenario.key(method);
    let outcomes: Vec<Result<bool>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, cell, r as u64);
            replicate_accepts(scenario, method, &mut rng)
        })
        .collect();
    let mut accepted = 0usize;
    let mut failures = 0usize;
    for outcome in &outcomes {
        match outcome {
            Ok(true) => accepted += 1,
            Ok(false) => {}
            Err(_) => failures += 1,
        }
    }
    let effective = reps - failures;
    if effective == 0 {
        return Err(Error::InvalidDesign(
            "every replication of the cell failed".into(),
        ));
    }
    Ok(StudyResult {
        model: scenario.model,
        family: scenario.family,
        sigma: scenario.sigma,
        group_size: scenario.group_size,
        method,
        reps,
        alpha: scenario.alpha,
        acceptance: accepted as f64 / effective as f64,
        failures,
        seed,
    })
}

/// One configured cell of a study run.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCell {
    pub scenario: Scenario,
    pub method: SimMethod,
    pub reps: usize,
}

/// Runs every cell in order. Cells are independent; parallelism lives inside
/// `run_cell`, so the output ordering and content are deterministic.
pub fn run_study(cells: &[StudyCell], seed: u64) -> Result<Vec<StudyResult>> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument("empty study configuration".into()));
    }
    cells
        .iter()
        .map(|cell| run_cell(&cell.scenario, cell.method, cell.reps, seed))
        .collect()
}

/// Parses a study configuration in delimited text form with header
/// `mean_model,error_family,sigma,n_i,method,reps,alpha`.
pub fn parse_study_config(text: &str) -> Result<Vec<StudyCell>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty study configuration".into()))?;
    let expected = ["mean_model", "error_family", "sigma", "n_i", "method", "reps", "alpha"];
    let got: Vec<&str> = header.split(',').map(str::trim).collect();
    if got.len() != expected.len() {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected {} columns ({}), found {}",
                expected.len(),
                expected.join(","),
                got.len()
            ),
        });
    }
    for (g, e) in got.iter().zip(expected.iter()) {
        if !g.eq_ignore_ascii_case(e) {
            return Err(Error::Parse {
                line: 1,
                message: format!("unknown column '{g}' (expected '{e}')"),
            });
        }
    }
    let mut cells = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != expected.len() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} fields, found {}", expected.len(), fields.len()),
            });
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad {what} value '{s}'"),
            })
        };
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad {what} value '{s}'"),
            })
        };
        let model = MeanModel::parse(fields[0]).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let family = ErrorFamily::parse(fields[1]).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let sigma = parse_f64(fields[2], "sigma")?;
        let group_size = parse_usize(fields[3], "n_i")?;
        let method = SimMethod::parse(fields[4]).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let reps = parse_usize(fields[5], "reps")?;
        let alpha = parse_f64(fields[6], "alpha")?;
        let mut scenario = Scenario::new(model, family, sigma, group_size).map_err(|e| {
            Error::Parse {
                line: lineno,
                message: e.to_string(),
            }
        })?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("significance level must lie in (0, 1), got {alpha}"),
            });
        }
        scenario.alpha = alpha;
        cells.push(StudyCell {
            scenario,
            method,
            reps,
        });
    }
    if cells.is_empty() {
        return Err(Error::InvalidArgument(
            "study configuration has no cells".into(),
        ));
    }
    Ok(cells)
}

/// Serializes results as CSV (long form; lossless round trip through
/// `parse_study_results`).
pub fn study_results_to_csv(results: &[StudyResult]) -> String {
    let mut out =
        String::from("mean_model,error_family,sigma,n_i,method,reps,alpha,acceptance,failures,seed\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.family,
            r.sigma,
            r.group_size,
            r.method,
            r.reps,
            r.alpha,
            r.acceptance,
            r.failures,
            r.seed
        ));
    }
    out
}

/// Reads back the long-form results CSV.
pub fn parse_study_results(text: &str) -> Result<Vec<StudyResult>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty results file".into()))?;
    if header.trim()
        != "mean_model,error_family,sigma,n_i,method,reps,alpha,acceptance,failures,seed"
    {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected results header".into(),
        });
    }
    let mut results = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 10 fields, found {}", f.len()),
            });
        }
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        results.push(StudyResult {
            model: MeanModel::parse(f[0])?,
            family: ErrorFamily::parse(f[1])?,
            sigma: f[2].parse().map_err(|_| err(format!("bad sigma '{}'", f[2])))?,
            group_size: f[3].parse().map_err(|_| err(format!("bad n_i '{}'", f[3])))?,
            method: SimMethod::parse(f[4])?,
            reps: f[5].parse().map_err(|_| err(format!("bad reps '{}'", f[5])))?,
            alpha: f[6].parse().map_err(|_| err(format!("bad alpha '{}'", f[6])))?,
            acceptance: f[7]
                .parse()
                .map_err(|_| err(format!("bad acceptance '{}'", f[7])))?,
            failures: f[8]
                .parse()
                .map_err(|_| err(format!("bad failures '{}'", f[8])))?,
            seed: f[9].parse().map_err(|_| err(format!("bad seed '{}'", f[9])))?,
        });
    }
    Ok(results)
}

fn method_label(method: SimMethod) -> String {
    match method {
        SimMethod::BasisCoef => "Basis coef.".into(),
        SimMethod::PcScores(q) => format!("{q} p.c.'s"),
    }
}

fn method_order(method: SimMethod) -> (u8, usize) {
    match method {
        SimMethod::BasisCoef => (0, 0),
        SimMethod::PcScores(q) => (1, q),
    }
}

/// Markdown acceptance table per error family: rows are mean model × group
/// size × method, columns the dispersion values.
pub fn study_markdown(results: &[StudyResult]) -> String {
    let mut out = String::new();
    for family in [ErrorFamily::Gaussian, ErrorFamily::Lognormal] {
        let subset: Vec<&StudyResult> = results.iter().filter(|r| r.family == family).collect();
        if subset.is_empty() {
            continue;
        }
        let mut sigmas: Vec<f64> = subset.iter().map(|r| r.sigma).collect();
        sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sigmas.dedup();

        let mut rows: Vec<(MeanModel, usize, SimMethod)> = subset
            .iter()
            .map(|r| (r.model, r.group_size, r.method))
            .collect();
        rows.sort_by_key(|(m, n, method)| (m.tag(), *n, method_order(*method)));
        rows.dedup();

        out.push_str(&format!(
            "## Observed acceptance proportions ({family} errors)\n\n"
        ));
        out.push_str("| Mean | n_i | Method |");
        for s in &sigmas {
            out.push_str(&format!(" σ={s} |"));
        }
        out.push('\n');
        out.push_str("|---|---|---|");
        for _ in &sigmas {
            out.push_str("---|");
        }
        out.push('\n');
        for (model, n_i, method) in rows {
            out.push_str(&format!("| {model} | {n_i} | {} |", method_label(method)));
            for &sigma in &sigmas {
                let hit = subset.iter().find(|r| {
                    r.model == model
                        && r.group_size == n_i
                        && r.method == method
                        && r.sigma == sigma
                });
                match hit {
                    Some(r) => out.push_str(&format!(" {:.3} |", r.acceptance)),
                    None => out.push_str("  |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_function_values() {
        // sin(π/2) = 1 at t = 0.125
        assert_abs_diff_eq!(mean_function(MeanModel::M2, 2, 0.125), 0.1, epsilon = 1e-12);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert_abs_diff_eq!(
                mean_function(MeanModel::M1, 1, t),
                mean_function(MeanModel::M2, 2, t),
                epsilon = 1e-15
            );
        }
        for model in [MeanModel::M1, MeanModel::M2, MeanModel::M3] {
            assert_eq!(mean_function(model, 3, 0.0), 0.0);
        }
    }

    #[test]
    fn wiener_eigenvalue_formula() {
        let l1 = wiener_eigenvalue(0.1, 1);
        assert_abs_diff_eq!(l1, 0.04 / (std::f64::consts::PI * std::f64::consts::PI), epsilon = 1e-15);
        assert_abs_diff_eq!(l1, 4.0528e-3, epsilon = 1e-6);
        // decreasing in k
        assert!(wiener_eigenvalue(0.1, 2) < l1);
    }

    #[test]
    fn wiener_paths_start_at_zero() {
        let grid = Scenario::grid();
        for rep in 0..5 {
            let mut rng = replicate_rng(9, 1, rep);
            let path = wiener_kl_sample(0.2, ERROR_TRUNCATION, &grid, &mut rng);
            assert_eq!(path[0], 0.0);
        }
    }

    #[test]
    fn wiener_terminal_variance_matches_truncated_oracle() {
        let sigma = 0.1;
        let truth = truncated_variance(sigma, ERROR_TRUNCATION, 1.0);
        let n = 20_000;
        let grid = [0.0, 1.0];
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for rep in 0..n {
            let mut rng = replicate_rng(13, 2, rep as u64);
            let path = wiener_kl_sample(sigma, ERROR_TRUNCATION, &grid, &mut rng);
            sum += path[1];
            sumsq += path[1] * path[1];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let se = truth * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (var - truth).abs() < 3.0 * se,
            "empirical {var:.6e} vs truncated {truth:.6e} (3se = {:.2e})",
            3.0 * se
        );
    }

    #[test]
    fn lognormal_errors_are_centered_and_skewed() {
        let grid = [0.0, 0.5, 1.0];
        let sigma = 0.2;
        let n = 20_000;
        let mut sum_mid = 0.0;
        let mut sumsq_mid = 0.0;
        let mut terminal = Vec::with_capacity(n);
        for rep in 0..n {
            let mut rng = replicate_rng(17, 3, rep as u64);
            let path = lognormal_error_sample(sigma, ERROR_TRUNCATION, &grid, &mut rng);
            assert_eq!(path[0], 0.0);
            sum_mid += path[1];
            sumsq_mid += path[1] * path[1];
            terminal.push(path[2]);
        }
        let nf = n as f64;
        let mean_mid = sum_mid / nf;
        let sd_mid = (sumsq_mid / nf - mean_mid * mean_mid).sqrt();
        assert!(
            mean_mid.abs() < 3.0 * sd_mid / nf.sqrt(),
            "mean at 0.5 = {mean_mid:.5} exceeds 3 standard errors"
        );

        let mean_t: f64 = terminal.iter().sum::<f64>() / nf;
        let m2: f64 = terminal.iter().map(|v| (v - mean_t).powi(2)).sum::<f64>() / nf;
        let m3: f64 = terminal.iter().map(|v| (v - mean_t).powi(3)).sum::<f64>() / nf;
        assert!(m3 / m2.powf(1.5) > 0.0, "log-normal errors must be right skewed");
    }

    #[test]
    fn replicate_has_expected_shape_and_recovers_means() {
        let scenario = Scenario::new(MeanModel::M2, ErrorFamily::Gaussian, 1e-8, 5).unwrap();
        let mut rng = replicate_rng(5, 4, 0);
        let (curves, coeffs) = generate_replicate(&scenario, &mut rng).unwrap();
        assert_eq!(curves.n_curves(), 15);
        assert_eq!(coeffs.coefficients().ncols(), BASIS_DIMENSION);
        assert_eq!(curves.group_sizes(), vec![5, 5, 5]);

        // near-noiseless fit reproduces the group means up to the basis
        // truncation error of the |sin| kinks (measured at 0.034 for the
        // strongest mean; the dispersion contributes nothing at σ = 1e-8)
        let grid = Scenario::grid();
        let fitted = coeffs.eval_on(&grid).unwrap();
        for g in 0..3 {
            for (s, &t) in grid.iter().enumerate() {
                let mut avg = 0.0;
                for j in 0..5 {
                    avg += fitted[(g * 5 + j, s)] / 5.0;
                }
                let truth = mean_function(MeanModel::M2, g + 1, t);
                assert!(
                    (avg - truth).abs() < 0.05,
                    "group {g} at t={t}: fitted {avg:.4} vs {truth:.4}"
                );
            }
        }
    }

    #[test]
    fn replicates_draw_distinct_data() {
        let scenario = Scenario::new(MeanModel::M1, ErrorFamily::Gaussian, 0.1, 3).unwrap();
        let mut r0 = replicate_rng(5, 6, 0);
        let mut r1 = replicate_rng(5, 6, 1);
        let (a, _) = generate_replicate(&scenario, &mut r0).unwrap();
        let (b, _) = generate_replicate(&scenario, &mut r1).unwrap();
        assert_ne!(a.values(), b.values());
    }

    #[test]
    fn run_cell_is_deterministic_in_the_seed() {
        let scenario = Scenario::new(MeanModel::M1, ErrorFamily::Gaussian, 0.05, 8).unwrap();
        let a = run_cell(&scenario, SimMethod::BasisCoef, 40, 7).unwrap();
        let b = run_cell(&scenario, SimMethod::BasisCoef, 40, 7).unwrap();
        assert_eq!(a, b);
        let c = run_cell(&scenario, SimMethod::BasisCoef, 40, 8).unwrap();
        assert_eq!(c.seed, 8);
    }

    #[test]
    fn run_cell_output_is_independent_of_worker_count() {
        let scenario = Scenario::new(MeanModel::M3, ErrorFamily::Lognormal, 0.2, 4).unwrap();
        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_cell(&scenario, SimMethod::PcScores(3), 30, 11).unwrap())
        };
        let single = run_with(1);
        let multi = run_with(4);
        assert_eq!(single, multi);
    }

    #[test]
    fn config_parsing_round_trip_and_errors() {
        let text = "mean_model,error_family,sigma,n_i,method,reps,alpha\n\
                    M1,gaussian,0.05,25,basis-coef,300,0.05\n\
                    M2,lognormal,0.4,15,pc-3,100,0.05\n";
        let cells = parse_study_config(text).unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].scenario.model, MeanModel::M1);
        assert_eq!(cells[1].method, SimMethod::PcScores(3));
        assert_eq!(cells[1].reps, 100);

        let bad_col = "mean_model,error_family,sigma,n_j,method,reps,alpha\nM1,gaussian,0.05,25,basis-coef,300,0.05\n";
        match parse_study_config(bad_col).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("n_j"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let bad_method = "mean_model,error_family,sigma,n_i,method,reps,alpha\nM1,gaussian,0.05,25,pc-x,300,0.05\n";
        assert!(matches!(
            parse_study_config(bad_method),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn results_csv_round_trips() {
        let scenario = Scenario::new(MeanModel::M1, ErrorFamily::Gaussian, 0.05, 8).unwrap();
        let result = run_cell(&scenario, SimMethod::BasisCoef, 25, 3).unwrap();
        let csv = study_results_to_csv(std::slice::from_ref(&result));
        let parsed = parse_study_results(&csv).unwrap();
        assert_eq!(parsed, vec![result]);
    }

    #[test]
    fn markdown_layout_single_cell() {
        let result = StudyResult {
            model: MeanModel::M2,
            family: ErrorFamily::Gaussian,
            sigma: 0.1,
            group_size: 25,
            method: SimMethod::PcScores(5),
            reps: 300,
            alpha: 0.05,
            acceptance: 0.123,
            failures: 0,
            seed: 42,
        };
        let md = study_markdown(&[result]);
        let lines: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).collect();
        assert_eq!(lines.len(), 3); // header, separator, one data row
        assert!(lines[2].contains("| M2 | 25 | 5 p.c.'s | 0.123 |"));
    }
}
