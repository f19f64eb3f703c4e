//! Nonparametric homogeneity tests built on spatial signs and ranks.
//!
//! The Mood-type test works with directions of the observations around the
//! pooled spatial median; the Kruskal–Wallis-type test with centered spatial
//! ranks. Both compare group averages through the empirical normalizer and
//! refer the quadratic form Q to χ² with d(m−1) degrees of freedom, with a
//! label-permutation alternative for small samples or degenerate geometry.
//! Pairwise comparisons use the Wilcoxon rank-sum normal approximation with
//! Benjamini–Hochberg adjustment.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::report::TestReport;
use crate::rng;

const ZERO_NORM: f64 = 1e-12;

/// Direction of a vector: x/‖x‖, or zero when ‖x‖ ≤ 1e-12.
pub fn spatial_sign(x: &DVector<f64>) -> DVector<f64> {
    let norm = x.norm();
    if norm > ZERO_NORM {
        x / norm
    } else {
        DVector::zeros(x.len())
    }
}

/// Minimizer of Σᵢ ‖xᵢ − μ‖ over μ.
///
/// Weiszfeld iteration with the standard correction when an iterate lands on
/// a data point; in one dimension the sample median (midpoint convention) is
/// returned directly. Tolerance 1e-9 on the step norm, at most 1000
/// iterations.
pub fn spatial_median(data: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = data.nrows();
    let d = data.ncols();
    if n == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    if n == 1 {
        return Ok(data.row(0).transpose());
    }
    if d == 1 {
        let mut vals: Vec<f64> = data.column(0).iter().cloned().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = n / 2;
        let median = if n % 2 == 1 {
            vals[mid]
        } else {
            0.5 * (vals[mid - 1] + vals[mid])
        };
        return Ok(DVector::from_element(1, median));
    }

    // start from the coordinatewise median
    let mut current = DVector::zeros(d);
    for k in 0..d {
        let mut col: Vec<f64> = data.column(k).iter().cloned().collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = n / 2;
        current[k] = if n % 2 == 1 {
            col[mid]
        } else {
            0.5 * (col[mid - 1] + col[mid])
        };
    }

    // iterates within this radius of a data point count as coinciding with
    // it; without it the plain step crawls when the median sits next to an
    // observation (the 1/distance weight dominates and the linear rate
    // approaches one)
    let scale = (0..n)
        .map(|i| (data.row(i).transpose() - &current).norm())
        .fold(0.0, f64::max);
    let snap = (1e-9 * scale).max(ZERO_NORM);

    const MAX_ITER: usize = 1000;
    const TOL: f64 = 1e-9;
    let objective = |mu: &DVector<f64>| -> f64 {
        (0..n).map(|i| (data.row(i).transpose() - mu).norm()).sum()
    };
    let mut last_step = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mut weight_sum = 0.0;
        let mut weighted = DVector::zeros(d);
        let mut pull = DVector::zeros(d); // Σ (xᵢ − μ)/‖xᵢ − μ‖ over distinct points
        let mut hessian = DMatrix::zeros(d, d);
        let mut multiplicity = 0.0;
        for i in 0..n {
            let xi = data.row(i).transpose();
            let diff = &xi - &current;
            let dist = diff.norm();
            if dist > snap {
                let w = 1.0 / dist;
                weight_sum += w;
                weighted += w * &xi;
                pull += &diff * w;
                let u = diff * w;
                hessian += (DMatrix::identity(d, d) - &u * u.transpose()) * w;
            } else {
                multiplicity += 1.0;
            }
        }
        if weight_sum == 0.0 {
            // every observation coincides with the iterate
            return Ok(current);
        }
        let target = weighted / weight_sum;
        let next = if multiplicity > 0.0 {
            let r = pull.norm();
            if r <= multiplicity {
                return Ok(current);
            }
            // bounded pull of the coincident points
            &current + (1.0 - multiplicity / r) * (target - &current)
        } else {
            let weiszfeld_step = (&target - &current).norm();
            // the plain iteration converges linearly with a rate that can
            // approach one; close to the optimum a Newton step on the smooth
            // objective finishes in a couple of iterations
            let mut next = target;
            if weiszfeld_step < 1e-4 * scale.max(1.0) {
                if let Some(chol) = hessian.cholesky() {
                    let candidate = &current + chol.solve(&pull);
                    let far_from_data = (0..n)
                        .all(|i| (data.row(i).transpose() - &candidate).norm() > snap);
                    if far_from_data && objective(&candidate) <= objective(&next) {
                        next = candidate;
                    }
                }
            }
            next
        };
        last_step = (&next - &current).norm();
        current = next;
        if last_step < TOL {
            return Ok(current);
        }
    }
    Err(Error::MedianConvergence {
        iterations: MAX_ITER,
        step: last_step,
        last: current.iter().cloned().collect(),
    })
}

fn group_sizes(groups: &[usize]) -> Result<Vec<usize>> {
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
    Ok(sizes)
}

/// Spatial signs of the observations around the pooled spatial median.
pub fn sign_vectors(data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let median = spatial_median(data)?;
    let n = data.nrows();
    let mut signs = DMatrix::zeros(n, data.ncols());
    for i in 0..n {
        let s = spatial_sign(&(data.row(i).transpose() - &median));
        signs.set_row(i, &s.transpose());
    }
    Ok(signs)
}

/// Centered spatial ranks Rᵢ = n⁻¹ Σⱼ sign(xᵢ − xⱼ); they sum to zero.
pub fn rank_vectors(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows();
    let d = data.ncols();
    let mut ranks = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..i {
            let diff = data.row(i).transpose() - data.row(j).transpose();
            let s = spatial_sign(&diff);
            for k in 0..d {
                ranks[(i, k)] += s[k];
                ranks[(j, k)] -= s[k];
            }
        }
    }
    ranks / n as f64
}

/// Quadratic-form statistic Q = Σᵢ nᵢ v̄ᵢ' N⁻¹ v̄ᵢ for per-observation
/// vectors v with normalizer N = n⁻¹ Σ v v'. Errors when N is singular.
fn quadratic_statistic(vectors: &DMatrix<f64>, groups: &[usize], sizes: &[usize]) -> Result<f64> {
    let n = vectors.nrows();
    let normalizer = vectors.transpose() * vectors / n as f64;
    let chol = normalizer.cholesky().ok_or_else(|| {
        Error::DegenerateGeometry(
            "sign/rank normalizer is singular; use the permutation p-value".into(),
        )
    })?;
    Ok(quadratic_with_inverse(
        vectors,
        groups,
        sizes,
        &chol.inverse(),
    ))
}

fn quadratic_with_inverse(
    vectors: &DMatrix<f64>,
    groups: &[usize],
    sizes: &[usize],
    inv: &DMatrix<f64>,
) -> f64 {
    let d = vectors.ncols();
    let m = sizes.len();
    let mut means = DMatrix::zeros(m, d);
    for (i, &g) in groups.iter().enumerate() {
        for k in 0..d {
            means[(g, k)] += vectors[(i, k)];
        }
    }
    let mut q = 0.0;
    for g in 0..m {
        let mean = means.row(g).transpose() / sizes[g] as f64;
        q += sizes[g] as f64 * (mean.transpose() * inv * &mean)[(0, 0)];
    }
    q
}

fn chisq_pvalue(q: f64, df: f64) -> f64 {
    match ChiSquared::new(df) {
        Ok(dist) => dist.sf(q).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// Mood-type multivariate test: spatial signs around the pooled spatial
/// median, χ² reference with d(m−1) degrees of freedom.
pub fn mood_multivariate(data: &DMatrix<f64>, groups: &[usize]) -> Result<TestReport> {
    if groups.len() != data.nrows() {
        return Err(Error::InvalidDesign("labels must align with rows".into()));
    }
    let sizes = group_sizes(groups)?;
    let signs = sign_vectors(data)?;
    let q = quadratic_statistic(&signs, groups, &sizes)?;
    let df = (data.ncols() * (sizes.len() - 1)) as f64;
    Ok(TestReport::new("mood-chisq", q, df, None, chisq_pvalue(q, df)))
}

/// Kruskal–Wallis-type multivariate test: centered spatial ranks, χ²
/// reference with d(m−1) degrees of freedom.
pub fn kruskal_multivariate(data: &DMatrix<f64>, groups: &[usize]) -> Result<TestReport> {
    if groups.len() != data.nrows() {
        return Err(Error::InvalidDesign("labels must align with rows".into()));
    }
    let sizes = group_sizes(groups)?;
    let ranks = rank_vectors(data);
    let q = quadratic_statistic(&ranks, groups, &sizes)?;
    let df = (data.ncols() * (sizes.len() - 1)) as f64;
    Ok(TestReport::new(
        "kruskal-chisq",
        q,
        df,
        None,
        chisq_pvalue(q, df),
    ))
}

/// Which score statistic a permutation test resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpTest {
    Mood,
    Kruskal,
}

/// Label-permutation p-value for the Mood or Kruskal statistic.
///
/// The per-observation vectors and the normalizer do not depend on the
/// labels, so each permutation only re-averages fixed vectors. A
/// pseudo-inverse normalizer keeps the statistic defined even in degenerate
/// geometry. p = (1 + #{Q* ≥ Q}) / (1 + B); permutation b draws its labels
/// from a stream derived from (seed, b), making the result independent of
/// scheduling.
pub fn permutation_pvalue(
    test: NpTest,
    data: &DMatrix<f64>,
    groups: &[usize],
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    if permutations < 99 {
        return Err(Error::InvalidArgument(format!(
            "need at least 99 permutations, got {permutations}"
        )));
    }
    if groups.len() != data.nrows() {
        return Err(Error::InvalidDesign("labels must align with rows".into()));
    }
    let sizes = group_sizes(groups)?;
    let vectors = match test {
        NpTest::Mood => sign_vectors(data)?,
        NpTest::Kruskal => rank_vectors(data),
    };
    let n = vectors.nrows();
    let normalizer = vectors.transpose() * &vectors / n as f64;
    let inv = pseudo_inverse(&normalizer);

    let observed = quadratic_with_inverse(&vectors, groups, &sizes, &inv);
    let tag = match test {
        NpTest::Mood => 0x6d00,
        NpTest::Kruskal => 0x6b00,
    };
    let exceed: usize = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::replicate_rng(seed, tag, b as u64);
            let mut labels = groups.to_vec();
            labels.shuffle(&mut rng);
            let q = quadratic_with_inverse(&vectors, &labels, &sizes, &inv);
            usize::from(q >= observed)
        })
        .sum();
    Ok((1 + exceed) as f64 / (1 + permutations) as f64)
}

fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eigen = m.clone().symmetric_eigen();
    let max = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let inv = DMatrix::from_diagonal(&eigen.eigenvalues.map(|d| {
        if d > 1e-12 * max && d > 0.0 {
            1.0 / d
        } else {
            0.0
        }
    }));
    &eigen.eigenvectors * inv * eigen.eigenvectors.transpose()
}

/// Two-sided Wilcoxon rank-sum (Mann–Whitney) p-value via the normal
/// approximation with tie and continuity corrections.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidDesign("empty group".into()));
    }
    let n1 = a.len();
    let n2 = b.len();
    let n = n1 + n2;
    let mut pooled: Vec<(f64, usize)> = a
        .iter()
        .map(|&v| (v, 0usize))
        .chain(b.iter().map(|&v| (v, 1usize)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    // average ranks within tie groups; collect tie sizes for the variance
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let avg = 0.5 * ((i + 1) + (j + 1)) as f64;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = avg;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let rank_sum: f64 = ranks
        .iter()
        .zip(&pooled)
        .filter(|(_, p)| p.1 == 0)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean_u = (n1 * n2) as f64 / 2.0;
    let nf = n as f64;
    let var_u = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p = if var_u <= 0.0 {
        1.0
    } else {
        let z = ((u - mean_u).abs() - 0.5).max(0.0) / var_u.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * normal.sf(z)).clamp(0.0, 1.0)
    };
    Ok(TestReport::new("wilcoxon", u, f64::NAN, None, p))
}

/// Benjamini–Hochberg step-up adjustment.
pub fn benjamini_hochberg(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let candidate = (p_values[idx] * m as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(candidate);
        adjusted[idx] = running;
    }
    adjusted
}

/// All pairwise Wilcoxon comparisons with BH-adjusted p-values, returned as
/// a symmetric m×m matrix with unit diagonal.
pub fn wilcoxon_pairwise_bh(values: &[f64], groups: &[usize]) -> Result<DMatrix<f64>> {
    if groups.len() != values.len() {
        return Err(Error::InvalidDesign("labels must align with values".into()));
    }
    let sizes = group_sizes(groups)?;
    let m = sizes.len();
    let mut by_group: Vec<Vec<f64>> = vec![Vec::new(); m];
    for (&v, &g) in values.iter().zip(groups) {
        by_group[g].push(v);
    }
    let mut raw = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            raw.push(wilcoxon_rank_sum(&by_group[i], &by_group[j])?.p_value);
        }
    }
    let adjusted = benjamini_hochberg(&raw);
    let mut table = DMatrix::from_element(m, m, 1.0);
    let mut k = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            table[(i, j)] = adjusted[k];
            table[(j, i)] = adjusted[k];
            k += 1;
        }
    }
    Ok(table)
}
