//! Parametric homogeneity tests: one-way MANOVA on coefficient vectors and
//! univariate ANOVA batteries on principal component scores.
//!
//! The four classical MANOVA criteria are computed from the eigenvalues of
//! E⁻¹H with the usual F approximations; Pillai's trace is the headline
//! statistic. Score batteries run one ANOVA per component at level α/q
//! (Bonferroni).

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::report::TestReport;

/// Between-group (H) and within-group (E) sums of squares and cross
/// products, with the design sizes they were computed from.
#[derive(Debug, Clone)]
pub struct SscpPair {
    pub h: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

/// Decomposes an n×p data matrix into between- and within-group SSCP
/// matrices. Every group must be nonempty and n > m.
pub fn manova_sscp(data: &DMatrix<f64>, groups: &[usize]) -> Result<SscpPair> {
    let n = data.nrows();
    let p = data.ncols();
    if groups.len() != n {
        return Err(Error::InvalidDesign(format!(
            "{} labels for {} rows",
            groups.len(),
            n
        )));
    }
    let m = groups.iter().max().map(|g| g + 1).unwrap_or(0);
    let mut sizes = vec![0usize; m];
    for &g in groups {
        sizes[g] += 1;
    }
    if m < 2 || sizes.contains(&0) {
        return Err(Error::InvalidDesign(
            "need at least two nonempty groups".into(),
        ));
    }

    let grand = data.row_mean().transpose();
    let mut group_means = vec![DVector::zeros(p); m];
    for (i, &g) in groups.iter().enumerate() {
        group_means[g] += data.row(i).transpose();
    }
    for (g, mean) in group_means.iter_mut().enumerate() {
        *mean /= sizes[g] as f64;
    }

    let mut h = DMatrix::zeros(p, p);
    for g in 0..m {
        let d = &group_means[g] - &grand;
        h += sizes[g] as f64 * &d * d.transpose();
    }
    let mut e = DMatrix::zeros(p, p);
    for (i, &g) in groups.iter().enumerate() {
        let d = data.row(i).transpose() - &group_means[g];
        e += &d * d.transpose();
    }
    Ok(SscpPair { h, e, n, m, p })
}

/// Joint report for the four MANOVA criteria. When E is singular only the
/// Pillai route (which needs (H+E)⁻¹ only) is available.
#[derive(Debug, Clone)]
pub struct ManovaReport {
    pub pillai: TestReport,
    pub wilks: Option<TestReport>,
    pub lawley_hotelling: Option<TestReport>,
    pub roy: Option<TestReport>,
    /// Eigenvalues of E⁻¹H (or of (H+E)⁻¹H mapped back when E is singular).
    pub eigenvalues: Vec<f64>,
    pub notes: Vec<String>,
}

impl ManovaReport {
    /// Headline statistic.
    pub fn headline(&self) -> &TestReport {
        &self.pillai
    }

    pub fn rows(&self) -> Vec<TestReport> {
        let mut rows = vec![self.pillai.clone()];
        for r in [&self.wilks, &self.lawley_hotelling, &self.roy].into_iter().flatten() {
            rows.push(r.clone());
        }
        rows
    }
}

fn f_pvalue(f: f64, df1: f64, df2: f64) -> f64 {
    if !f.is_finite() {
        return if f > 0.0 { 0.0 } else { 1.0 };
    }
    if f <= 0.0 {
        return 1.0;
    }
    match FisherSnedecor::new(df1, df2) {
        Ok(dist) => dist.sf(f).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// Eigenvalues of E⁻¹H through the symmetric reduction L⁻¹ H L⁻ᵀ with
/// E = L L'. Returns None when E has no Cholesky factor.
fn relative_eigenvalues(h: &DMatrix<f64>, e: &DMatrix<f64>) -> Option<Vec<f64>> {
    let chol = e.clone().cholesky()?;
    let l = chol.l();
    let y = l.solve_lower_triangular(h)?;
    let w = l.solve_lower_triangular(&y.transpose())?;
    let sym = 0.5 * (&w + w.transpose());
    let mut eig: Vec<f64> = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Some(eig)
}

/// Eigenvalues θ of (H+E)⁻¹H via the pseudo-inverse square root of H+E.
fn boundary_eigenvalues(h: &DMatrix<f64>, e: &DMatrix<f64>) -> Vec<f64> {
    let t = h + e;
    let eigen = t.symmetric_eigen();
    let max = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let inv_sqrt = DMatrix::from_diagonal(&eigen.eigenvalues.map(|d| {
        if d > 1e-12 * max {
            1.0 / d.sqrt()
        } else {
            0.0
        }
    }));
    let w = &eigen.eigenvectors * inv_sqrt;
    let reduced = w.transpose() * h * &w;
    let mut theta: Vec<f64> = reduced
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    theta.sort_by(|a, b| b.partial_cmp(a).unwrap());
    theta
}

/// Runs the four MANOVA criteria on an SSCP pair.
///
/// Requires n > p + m; with fewer observations the coefficient covariance is
/// not identifiable and dimension reduction through principal component
/// scores should be used instead.
pub fn manova_test(sscp: &SscpPair) -> Result<ManovaReport> {
    let (n, m, p) = (sscp.n, sscp.m, sscp.p);
    if n <= p + m {
        return Err(Error::InvalidDesign(format!(
            "MANOVA needs n > p + m (n = {n}, p = {p}, m = {m}); reduce the dimension, \
             e.g. by testing principal component scores"
        )));
    }
    let vh = (m - 1) as f64; // hypothesis degrees of freedom
    let ve = (n - m) as f64; // error degrees of freedom
    let pf = p as f64;
    let s = pf.min(vh);
    let m_star = 0.5 * ((pf - vh).abs() - 1.0);
    let n_star = 0.5 * (ve - pf - 1.0);

    match relative_eigenvalues(&sscp.h, &sscp.e) {
        Some(eig) => {
            // Pillai's trace
            let v: f64 = eig.iter().map(|l| l / (1.0 + l)).sum();
            let df1_v = s * (2.0 * m_star + s + 1.0);
            let df2_v = s * (2.0 * n_star + s + 1.0);
            let f_v = if (s - v) > 0.0 {
                (df2_v / df1_v) * v / (s - v)
            } else {
                f64::INFINITY
            };
            let pillai = TestReport::new("pillai", v, df1_v, Some(df2_v), f_pvalue(f_v, df1_v, df2_v));

            // Wilks' lambda with Rao's F
            let lambda: f64 = eig.iter().map(|l| 1.0 / (1.0 + l)).product();
            let t = {
                let denom = pf * pf + vh * vh - 5.0;
                if denom > 0.0 {
                    ((pf * pf * vh * vh - 4.0) / denom).sqrt()
                } else {
                    1.0
                }
            };
            let w = ve - 0.5 * (pf - vh + 1.0);
            let df1_l = pf * vh;
            let df2_l = w * t - 0.5 * (pf * vh - 2.0);
            let f_l = if lambda > 0.0 {
                (lambda.powf(-1.0 / t) - 1.0) * df2_l / df1_l
            } else {
                f64::INFINITY
            };
            let wilks = TestReport::new("wilks", lambda, df1_l, Some(df2_l), f_pvalue(f_l, df1_l, df2_l));

            // Lawley-Hotelling trace
            let trace: f64 = eig.iter().sum();
            let df1_t = s * (2.0 * m_star + s + 1.0);
            let df2_t = 2.0 * (s * n_star + 1.0);
            let f_t = df2_t * trace / (s * df1_t);
            let lh = TestReport::new(
                "lawley-hotelling",
                trace,
                df1_t,
                Some(df2_t),
                f_pvalue(f_t, df1_t, df2_t),
            );

            // Roy's largest root, reported with the F upper bound
            let lmax = eig.first().cloned().unwrap_or(0.0);
            let theta = lmax / (1.0 + lmax);
            let df1_r = pf.max(vh);
            let df2_r = ve - df1_r + vh;
            let f_r = df2_r * lmax / df1_r;
            let roy = TestReport::new("roy", theta, df1_r, Some(df2_r), f_pvalue(f_r, df1_r, df2_r));

            Ok(ManovaReport {
                pillai,
                wilks: Some(wilks),
                lawley_hotelling: Some(lh),
                roy: Some(roy),
                eigenvalues: eig,
                notes: Vec::new(),
            })
        }
        None => {
            // E singular: only Pillai, defined through (H+E)⁻¹, is stable
            let theta = boundary_eigenvalues(&sscp.h, &sscp.e);
            let v: f64 = theta.iter().sum();
            let df1_v = s * (2.0 * m_star + s + 1.0);
            let df2_v = s * (2.0 * n_star + s + 1.0);
            let f_v = if (s - v) > 0.0 {
                (df2_v / df1_v) * v / (s - v)
            } else {
                f64::INFINITY
            };
            let pillai = TestReport::new("pillai", v, df1_v, Some(df2_v), f_pvalue(f_v, df1_v, df2_v));
            let eigenvalues = theta
                .iter()
                .map(|&th| if th < 1.0 { th / (1.0 - th) } else { f64::INFINITY })
                .collect();
            Ok(ManovaReport {
                pillai,
                wilks: None,
                lawley_hotelling: None,
                roy: None,
                eigenvalues,
                notes: vec![
                    "within-group SSCP is singular; wilks, lawley-hotelling and roy unavailable"
                        .into(),
                ],
            })
        }
    }
}

/// One-way ANOVA. Degenerate variance decompositions follow the usual
/// conventions: p = 1 when both SSB and SSW vanish, p = 0 when only SSW does.
pub fn anova_oneway(values: &[f64], groups: &[usize]) -> Result<TestReport> {
    let n = values.len();
    if groups.len() != n {
        return Err(Error::InvalidDesign(format!(
            "{} labels for {} values",
            groups.len(),
            n
        )));
    }
    let m = groups.iter().max().map(|g| g + 1).unwrap_or(0);
    let mut sizes = vec![0usize; m];
    for &g in groups {
        sizes[g] += 1;
    }
    if m < 2 || sizes.contains(&0) {
        return Err(Error::InvalidDesign(
            "need at least two nonempty groups".into(),
        ));
    }
    if n <= m {
        return Err(Error::InvalidDesign(format!(
            "need more observations ({n}) than groups ({m})"
        )));
    }

    let grand = values.iter().sum::<f64>() / n as f64;
    let mut means = vec![0.0; m];
    for (i, &g) in groups.iter().enumerate() {
        means[g] += values[i];
    }
    for (g, mean) in means.iter_mut().enumerate() {
        *mean /= sizes[g] as f64;
    }
    let ssb: f64 = (0..m)
        .map(|g| sizes[g] as f64 * (means[g] - grand) * (means[g] - grand))
        .sum();
    let ssw: f64 = values
        .iter()
        .zip(groups)
        .map(|(&v, &g)| (v - means[g]) * (v - means[g]))
        .sum();

    let df1 = (m - 1) as f64;
    let df2 = (n - m) as f64;
    let (f, p) = if ssw <= 0.0 {
        if ssb <= 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ssb / df1) / (ssw / df2);
        (f, f_pvalue(f, df1, df2))
    };
    Ok(TestReport::new("anova-f", f, df1, Some(df2), p))
}

/// Battery of per-component ANOVAs with Bonferroni control.
#[derive(Debug, Clone)]
pub struct BatteryReport {
    /// One report per score column, in column order.
    pub per_component: Vec<TestReport>,
    /// min(1, q·p) per component.
    pub adjusted_p: Vec<f64>,
    pub alpha: f64,
    pub per_test_alpha: f64,
    pub reject: bool,
}

impl BatteryReport {
    pub fn rows(&self) -> Vec<TestReport> {
        self.per_component
            .iter()
            .enumerate()
            .map(|(k, r)| {
                TestReport::new(
                    format!("anova-pc{}", k + 1),
                    r.statistic,
                    r.df1,
                    r.df2,
                    r.p_value,
                )
            })
            .collect()
    }
}

/// Runs one ANOVA per score column at level alpha / q; the overall null is
/// rejected as soon as any component rejects.
pub fn bonferroni_battery(
    scores: &DMatrix<f64>,
    groups: &[usize],
    alpha: f64,
) -> Result<BatteryReport> {
    let q = scores.ncols();
    if q == 0 {
        return Err(Error::InvalidArgument("no score columns to test".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance level must lie in (0, 1), got {alpha}"
        )));
    }
    let per_test_alpha = alpha / q as f64;
    let mut per_component = Vec::with_capacity(q);
    for k in 0..q {
        let col: Vec<f64> = scores.column(k).iter().cloned().collect();
        per_component.push(anova_oneway(&col, groups)?);
    }
    let adjusted_p: Vec<f64> = per_component
        .iter()
        .map(|r| (r.p_value * q as f64).min(1.0))
        .collect();
    let reject = per_component.iter().any(|r| r.p_value < per_test_alpha);
    Ok(BatteryReport {
        per_component,
        adjusted_p,
        alpha,
        per_test_alpha,
        reject,
    })
}

/// Bonferroni adjustment: per-test level alpha/q; adjusted p = min(1, q p).
pub fn bonferroni_decision(p_values: &[f64], alpha: f64) -> (Vec<f64>, bool) {
    let q = p_values.len() as f64;
    let adjusted: Vec<f64> = p_values.iter().map(|p| (p * q).min(1.0)).collect();
    let reject = p_values.iter().any(|&p| p < alpha / q);
    (adjusted, reject)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_data() -> (DMatrix<f64>, Vec<usize>) {
        let data = DMatrix::from_row_slice(
            6,
            2,
            &[
                1.0, 2.0, //
                2.0, 1.5, //
                4.0, 3.0, //
                5.0, 2.5, //
                2.5, 6.0, //
                3.0, 5.0,
            ],
        );
        (data, vec![0, 0, 1, 1, 2, 2])
    }

    #[test]
    fn equal_group_means_give_zero_between_sscp() {
        let data = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 2.0, 1.0, 0.0, -1.0, 2.0]);
        let sscp = manova_sscp(&data, &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(sscp.h.abs().max(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn one_point_per_group_gives_zero_within_sscp() {
        let data = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 4.0, -1.0]);
        let sscp = manova_sscp(&data, &[0, 1, 2]).unwrap();
        assert_abs_diff_eq!(sscp.e.abs().max(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sscp_matches_elementwise_oracle() {
        let (data, groups) = toy_data();
        let sscp = manova_sscp(&data, &groups).unwrap();

        // direct double-loop oracle
        let n = 6;
        let m = 3;
        let p = 2;
        let mut grand = vec![0.0; p];
        for i in 0..n {
            for k in 0..p {
                grand[k] += data[(i, k)] / n as f64;
            }
        }
        let mut means = vec![vec![0.0; p]; m];
        let mut sizes = vec![0.0; m];
        for i in 0..n {
            sizes[groups[i]] += 1.0;
            for k in 0..p {
                means[groups[i]][k] += data[(i, k)];
            }
        }
        for g in 0..m {
            for k in 0..p {
                means[g][k] /= sizes[g];
            }
        }
        for a in 0..p {
            for b in 0..p {
                let mut h = 0.0;
                for g in 0..m {
                    h += sizes[g] * (means[g][a] - grand[a]) * (means[g][b] - grand[b]);
                }
                assert_abs_diff_eq!(sscp.h[(a, b)], h, epsilon = 1e-12);
                let mut e = 0.0;
                for i in 0..n {
                    e += (data[(i, a)] - means[groups[i]][a]) * (data[(i, b)] - means[groups[i]][b]);
                }
                assert_abs_diff_eq!(sscp.e[(a, b)], e, epsilon = 1e-12);
            }
        }

        // H + E equals the total centered SSCP
        let mut total = DMatrix::zeros(p, p);
        for i in 0..n {
            let d = data.row(i).transpose() - DVector::from_row_slice(&grand);
            total += &d * d.transpose();
        }
        assert_abs_diff_eq!((sscp.h + sscp.e - total).abs().max(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_group_is_rejected() {
        let data = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            manova_sscp(&data, &[0, 0, 2]),
            Err(Error::InvalidDesign(_))
        ));
    }

    #[test]
    fn zero_between_gives_unit_pvalues() {
        let data = DMatrix::from_row_slice(
            8,
            2,
            &[
                1.0, 0.0, -1.0, 1.0, 2.0, -1.0, 0.5, 0.25, //
                1.0, 0.0, -1.0, 1.0, 2.0, -1.0, 0.5, 0.25,
            ],
        );
        let sscp = manova_sscp(&data, &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        let report = manova_test(&sscp).unwrap();
        assert_abs_diff_eq!(report.pillai.statistic, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.pillai.p_value, 1.0, epsilon = 1e-12);
        let wilks = report.wilks.unwrap();
        assert_abs_diff_eq!(wilks.statistic, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wilks.p_value, 1.0, epsilon = 1e-12);
        let lh = report.lawley_hotelling.unwrap();
        assert_abs_diff_eq!(lh.statistic, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lh.p_value, 1.0, epsilon = 1e-12);
        let roy = report.roy.unwrap();
        assert_abs_diff_eq!(roy.statistic, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(roy.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn statistics_match_direct_eigen_oracle() {
        let (data, groups) = toy_data();
        let sscp = manova_sscp(&data, &groups).unwrap();
        let report = manova_test(&sscp).unwrap();

        // independent oracle: eigenvalues of E⁻¹H via explicit inverse
        let ei = sscp.e.clone().try_inverse().unwrap();
        let mut eig: Vec<f64> = (ei * &sscp.h)
            .complex_eigenvalues()
            .iter()
            .map(|c| c.re)
            .collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());

        let wilks: f64 = eig.iter().map(|l| 1.0 / (1.0 + l)).product();
        let pillai: f64 = eig.iter().map(|l| l / (1.0 + l)).sum();
        let trace: f64 = eig.iter().sum();
        let roy = eig[0] / (1.0 + eig[0]);

        assert_abs_diff_eq!(report.pillai.statistic, pillai, epsilon = 1e-10);
        assert_abs_diff_eq!(report.wilks.unwrap().statistic, wilks, epsilon = 1e-10);
        assert_abs_diff_eq!(
            report.lawley_hotelling.unwrap().statistic,
            trace,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(report.roy.unwrap().statistic, roy, epsilon = 1e-10);
    }

    #[test]
    fn univariate_pillai_f_reduces_to_anova_f() {
        let values = [1.2, 0.8, 1.5, 3.1, 2.9, 3.4, 5.0, 4.6, 5.2, 4.9];
        let groups = [0usize, 0, 0, 1, 1, 1, 2, 2, 2, 2];
        let data = DMatrix::from_column_slice(10, 1, &values);
        let sscp = manova_sscp(&data, &groups).unwrap();
        let report = manova_test(&sscp).unwrap();
        let anova = anova_oneway(&values, &groups).unwrap();

        // Pillai's F approximation is exact for p = 1
        let v = report.pillai.statistic;
        let s = 1.0;
        let m_star = 0.5 * ((1.0 - 2.0f64).abs() - 1.0);
        let n_star = 0.5 * ((10.0 - 3.0) - 1.0 - 1.0);
        let f = ((2.0 * n_star + s + 1.0) / (2.0 * m_star + s + 1.0)) * v / (s - v);
        assert_abs_diff_eq!(f, anova.statistic, epsilon = 1e-10);
        assert_abs_diff_eq!(report.pillai.p_value, anova.p_value, epsilon = 1e-10);
    }

    #[test]
    fn singular_within_sscp_keeps_only_pillai() {
        // two identical observations per group make E singular in 3 dims
        let data = DMatrix::from_row_slice(
            6,
            3,
            &[
                1.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, 0.0, 1.0,
            ],
        );
        let mut sscp = manova_sscp(&data, &[0, 0, 1, 1, 2, 2]).unwrap();
        sscp.n = 10; // pretend enough samples so only singularity triggers
        let report = manova_test(&sscp).unwrap();
        assert!(report.wilks.is_none());
        assert!(report.lawley_hotelling.is_none());
        assert!(report.roy.is_none());
        assert!(!report.notes.is_empty());
        // with E = 0 every direction is pure separation: V = min(p, m-1)
        assert_abs_diff_eq!(report.pillai.statistic, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn small_sample_guard_points_to_score_route() {
        let data = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 1.0, 3.0, 2.0]);
        let sscp = manova_sscp(&data, &[0, 0, 1, 1]).unwrap();
        let err = manova_test(&sscp).unwrap_err();
        match err {
            Error::InvalidDesign(msg) => assert!(msg.contains("principal component")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn manova_statistics_are_invariant_under_linear_maps() {
        let (data, groups) = toy_data();
        let base = manova_test(&manova_sscp(&data, &groups).unwrap()).unwrap();
        let map = DMatrix::from_row_slice(2, 2, &[1.3, -0.4, 0.7, 2.1]);
        let mapped = &data * map.transpose();
        let trans = manova_test(&manova_sscp(&mapped, &groups).unwrap()).unwrap();
        assert_abs_diff_eq!(
            base.pillai.statistic,
            trans.pillai.statistic,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            base.wilks.unwrap().statistic,
            trans.wilks.unwrap().statistic,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            base.lawley_hotelling.unwrap().statistic,
            trans.lawley_hotelling.unwrap().statistic,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            base.roy.unwrap().statistic,
            trans.roy.unwrap().statistic,
            epsilon = 1e-8
        );
    }

    #[test]
    fn pillai_increases_with_group_separation() {
        let noise = [0.3, -0.2, 0.1, -0.4, 0.25, -0.1, 0.05, -0.3, 0.2];
        let mut last = -1.0;
        for scale in [0.5, 1.0, 2.0] {
            let mut data = DMatrix::zeros(9, 2);
            for i in 0..9 {
                let g = i / 3;
                data[(i, 0)] = scale * g as f64 + noise[i];
                data[(i, 1)] = -scale * g as f64 + noise[8 - i];
            }
            let report = manova_test(&manova_sscp(&data, &[0, 0, 0, 1, 1, 1, 2, 2, 2]).unwrap())
                .unwrap();
            assert!(report.pillai.statistic > last);
            last = report.pillai.statistic;
        }
    }

    #[test]
    fn anova_degenerate_conventions() {
        let r = anova_oneway(&[0.0, 1.0, 0.0, 1.0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);

        let r = anova_oneway(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn anova_matches_textbook_formula() {
        let values = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 9.0, 10.0, 11.0];
        let groups = [0usize, 0, 0, 1, 1, 1, 2, 2, 2];
        let r = anova_oneway(&values, &groups).unwrap();

        // hand computation: group means 3, 6, 10; grand 19/3
        let grand: f64 = values.iter().sum::<f64>() / 9.0;
        let ssb = 3.0 * ((3.0 - grand).powi(2) + (6.0 - grand).powi(2) + (10.0 - grand).powi(2));
        let ssw = 6.0; // each group contributes 1 + 0 + 1
        let f = (ssb / 2.0) / (ssw / 6.0);
        assert_abs_diff_eq!(r.statistic, f, epsilon = 1e-12);
        assert_eq!(r.df1, 2.0);
        assert_eq!(r.df2, Some(6.0));
    }

    #[test]
    fn battery_with_one_component_is_plain_anova() {
        let values = [1.0, 1.3, 0.8, 2.4, 2.6, 2.2];
        let groups = [0usize, 0, 0, 1, 1, 1];
        let scores = DMatrix::from_column_slice(6, 1, &values);
        let battery = bonferroni_battery(&scores, &groups, 0.05).unwrap();
        let plain = anova_oneway(&values, &groups).unwrap();
        assert_eq!(battery.per_component.len(), 1);
        assert_abs_diff_eq!(
            battery.per_component[0].p_value,
            plain.p_value,
            epsilon = 1e-15
        );
        assert_eq!(battery.per_test_alpha, 0.05);
        assert_eq!(battery.reject, plain.p_value < 0.05);
        assert_abs_diff_eq!(battery.adjusted_p[0], plain.p_value, epsilon = 1e-15);
    }

    #[test]
    fn bonferroni_threshold_arithmetic() {
        let (adjusted, reject) = bonferroni_decision(&[0.03, 0.5, 0.9], 0.05);
        assert!(!reject, "0.03 > 0.05/3 must not reject");
        assert_abs_diff_eq!(adjusted[0], 0.09, epsilon = 1e-12);
        assert_abs_diff_eq!(adjusted[1], 1.0, epsilon = 1e-12);

        let (_, reject) = bonferroni_decision(&[0.01, 0.5, 0.9], 0.05);
        assert!(reject, "0.01 < 0.05/3 must reject");
    }
}
