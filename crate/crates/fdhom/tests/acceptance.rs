//! End-to-end acceptance suite.
//!
//! Each test prints one PASS/FAIL line (visible with `--nocapture`) and
//! asserts the stated tolerance. The Monte Carlo checks use fixed seeds and
//! the replication counts given in the criteria, so their outcomes are
//! deterministic.

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use fdhom::basis::{difference_penalty, BSplineBasis};
use fdhom::fpca::{sqrt_gram, FpcaModel};
use fdhom::manova::{manova_sscp, manova_test};
use fdhom::nonparametric::{kruskal_multivariate, mood_multivariate};
use fdhom::rng::replicate_rng;
use fdhom::sim::{run_cell, ErrorFamily, MeanModel, Scenario, SimMethod};
use fdhom::smooth::{select_lambda_loocv, CoefficientSet, CurveSet};

const SEED: u64 = 42;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

#[test]
fn criterion_1_table1_level_cells() {
    // M1, gaussian, σ ∈ {0.02, 0.05, 0.10}, n_i = 25, basis coefficients,
    // 300 reps: acceptance within ±0.05 of the reported 0.952/0.953/0.953.
    let expected = [(0.02, 0.952), (0.05, 0.953), (0.10, 0.953)];
    let mut detail = String::new();
    let mut pass = true;
    for (sigma, target) in expected {
        let scenario = Scenario::new(MeanModel::M1, ErrorFamily::Gaussian, sigma, 25).unwrap();
        let start = std::time::Instant::now();
        let result = run_cell(&scenario, SimMethod::BasisCoef, 300, SEED).unwrap();
        let elapsed = start.elapsed();
        pass &= result.failures == 0;
        pass &= (result.acceptance - target).abs() <= 0.05;
        pass &= elapsed.as_secs_f64() < 120.0;
        detail.push_str(&format!(
            "σ={sigma}: {:.3} vs {target}±0.05 in {:.1}s; ",
            result.acceptance,
            elapsed.as_secs_f64()
        ));
    }
    verdict("criterion 1 (Table 1 level cells)", pass, detail.trim_end());
}

#[test]
fn criterion_2_table1_power_cells() {
    // M2, gaussian, σ ≤ 0.10, all four methods, n_i = 25: acceptance ≤ 0.01.
    let methods = [
        SimMethod::BasisCoef,
        SimMethod::PcScores(3),
        SimMethod::PcScores(5),
        SimMethod::PcScores(8),
    ];
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for sigma in [0.02, 0.05, 0.10] {
        for method in methods {
            let scenario = Scenario::new(MeanModel::M2, ErrorFamily::Gaussian, sigma, 25).unwrap();
            let result = run_cell(&scenario, method, 300, SEED).unwrap();
            pass &= result.failures == 0;
            pass &= result.acceptance <= 0.01;
            worst = worst.max(result.acceptance);
        }
    }
    verdict(
        "criterion 2 (Table 1 power cells)",
        pass,
        &format!("max acceptance over 12 cells = {worst:.4}, bound 0.01"),
    );
}

#[test]
fn criterion_3_table1_hard_cell() {
    // M2, gaussian, n_i = 15, σ = 0.40, three components: within ±0.07 of 0.852.
    let scenario = Scenario::new(MeanModel::M2, ErrorFamily::Gaussian, 0.40, 15).unwrap();
    let result = run_cell(&scenario, SimMethod::PcScores(3), 300, SEED).unwrap();
    let pass = result.failures == 0 && (result.acceptance - 0.852).abs() <= 0.07;
    verdict(
        "criterion 3 (Table 1 hard cell)",
        pass,
        &format!("acceptance {:.3} vs 0.852±0.07", result.acceptance),
    );
}

#[test]
fn criterion_4_table2_level_cells() {
    // M1, lognormal, n_i = 15, basis coefficients: acceptance ≥ 0.95.
    let mut pass = true;
    let mut detail = String::new();
    for sigma in [0.02, 0.05, 0.10, 0.20, 0.40] {
        let scenario = Scenario::new(MeanModel::M1, ErrorFamily::Lognormal, sigma, 15).unwrap();
        let result = run_cell(&scenario, SimMethod::BasisCoef, 300, SEED).unwrap();
        pass &= result.failures == 0 && result.acceptance >= 0.95;
        detail.push_str(&format!("σ={sigma}: {:.3}; ", result.acceptance));
    }
    verdict(
        "criterion 4 (Table 2 level cells, bound 0.95)",
        pass,
        detail.trim_end(),
    );
}

#[test]
fn criterion_5_table3_degrees_of_freedom() {
    // Mood-type χ² df: 20 coefficients × 3 groups → 40; one score → 2.
    let mut rng = replicate_rng(SEED, 0xD0F, 0);
    let n = 60;
    let mut data = DMatrix::zeros(n, 20);
    for v in data.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    let groups: Vec<usize> = (0..n).map(|i| i / 20).collect();
    let multi = mood_multivariate(&data, &groups).unwrap();

    let mut uni = DMatrix::zeros(n, 1);
    for v in uni.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    let single = mood_multivariate(&uni, &groups).unwrap();

    let pass = multi.df1 == 40.0
        && single.df1 == 2.0
        && multi.df2.is_none()
        && multi.p_value.is_finite();
    verdict(
        "criterion 5 (Table 3 df structure)",
        pass,
        &format!("d=20,m=3 → df {}; d=1,m=3 → df {}", multi.df1, single.df1),
    );
}

#[test]
fn criterion_6_oracle_equivalences() {
    let mut pass = true;
    let mut detail = String::new();

    // FPCA eigenvalues vs an independent SVD of A_c Ψ^{1/2} (1e-8)
    {
        let basis = BSplineBasis::new(3, 6, (0.0, 1.0)).unwrap();
        let psi = basis.gram();
        let mut rng = replicate_rng(SEED, 0x0A, 0);
        let mut a = DMatrix::zeros(9, 6);
        for v in a.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let coeffs = CoefficientSet::new(
            a.clone(),
            (0..9).map(|i| format!("c{i}")).collect(),
            vec!["g".into(); 9],
            basis,
        )
        .unwrap();
        let model = FpcaModel::fit(&coeffs, &psi).unwrap();
        let (c, _) = sqrt_gram(&psi).unwrap();
        let mean = a.row_mean();
        for mut row in a.row_iter_mut() {
            row -= &mean;
        }
        let svd = (a * c).svd(false, false);
        let mut oracle: Vec<f64> = svd.singular_values.iter().map(|s| s * s / 9.0).collect();
        oracle.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let max_diff = model
            .eigenvalues()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        pass &= max_diff < 1e-8;
        detail.push_str(&format!("fpca-svd {max_diff:.2e}; "));
    }

    // MANOVA statistics vs a direct eigen oracle (1e-10)
    {
        let mut rng = replicate_rng(SEED, 0x0B, 0);
        let mut data = DMatrix::zeros(12, 3);
        for v in data.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        for i in 0..4 {
            data[(i, 0)] += 1.0;
        }
        let groups: Vec<usize> = (0..12).map(|i| i / 4).collect();
        let sscp = manova_sscp(&data, &groups).unwrap();
        let report = manova_test(&sscp).unwrap();
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
        let diffs = [
            (report.pillai.statistic - pillai).abs(),
            (report.wilks.as_ref().unwrap().statistic - wilks).abs(),
            (report.lawley_hotelling.as_ref().unwrap().statistic - trace).abs(),
            (report.roy.as_ref().unwrap().statistic - roy).abs(),
        ];
        let max_diff = diffs.iter().cloned().fold(0.0f64, f64::max);
        pass &= max_diff < 1e-10;
        detail.push_str(&format!("manova-eigen {max_diff:.2e}; "));
    }

    // d = 1 spatial-rank statistic vs (n/(n-1))·Kruskal-Wallis (1e-10)
    {
        let values = [
            3.0, 11.0, 4.0, 17.0, 9.0, 1.0, 14.0, 6.0, 12.0, 2.0, 16.0, 5.0, 8.0, 13.0, 7.0,
        ];
        let groups: Vec<usize> = (0..15).map(|i| i / 5).collect();
        let data = DMatrix::from_column_slice(15, 1, &values);
        let q = kruskal_multivariate(&data, &groups).unwrap().statistic;
        let n = 15.0;
        let mut idx: Vec<usize> = (0..15).collect();
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let mut rank = [0.0; 15];
        for (r, &i) in idx.iter().enumerate() {
            rank[i] = (r + 1) as f64;
        }
        let mut h = 0.0;
        for g in 0..3 {
            let rbar: f64 = (0..15)
                .filter(|&i| groups[i] == g)
                .map(|i| rank[i])
                .sum::<f64>()
                / 5.0;
            h += 5.0 * (rbar - 8.0) * (rbar - 8.0);
        }
        h *= 12.0 / (n * (n + 1.0));
        let diff = (q - h * n / (n - 1.0)).abs();
        pass &= diff < 1e-10;
        detail.push_str(&format!("rank-kw {diff:.2e}; "));
    }

    // LOOCV shortcut vs literal refits on a 12-point grid (1e-8)
    {
        let grid: Vec<f64> = (0..12).map(|s| s as f64 / 11.0).collect();
        let basis = BSplineBasis::new(3, 8, (0.0, 1.0)).unwrap();
        let y: Vec<f64> = grid
            .iter()
            .enumerate()
            .map(|(i, t)| (5.0 * t).sin() + 0.1 * ((i * 7 % 5) as f64 - 2.0))
            .collect();
        let curves = CurveSet::new(
            grid.clone(),
            DMatrix::from_row_slice(1, 12, &y),
            vec!["c".into()],
            vec!["g".into()],
        )
        .unwrap();
        let lambda = 0.3;
        let shortcut = select_lambda_loocv(&curves, &basis, &[lambda], 2)
            .unwrap()
            .table[0]
            .1;
        let design = basis.eval_matrix(&grid).unwrap();
        let penalty = difference_penalty(8, 2).unwrap();
        let mut literal = 0.0;
        for s in 0..12 {
            let keep: Vec<usize> = (0..12).filter(|&r| r != s).collect();
            let design_s = design.select_rows(keep.iter());
            let y_s = DVector::from_iterator(11, keep.iter().map(|&r| y[r]));
            let a = (design_s.transpose() * &design_s + lambda * &penalty)
                .cholesky()
                .unwrap()
                .solve(&(design_s.transpose() * y_s));
            let pred = (design.row(s) * &a)[(0, 0)];
            literal += (y[s] - pred) * (y[s] - pred);
        }
        let diff = (shortcut - literal).abs();
        pass &= diff < 1e-8;
        detail.push_str(&format!("loocv {diff:.2e}; "));
    }

    // Gram matrix vs a dense trapezoid oracle (1e-8)
    {
        let basis = BSplineBasis::new(3, 18, (0.0, 1.0)).unwrap();
        let psi = basis.gram();
        let n = 100_000;
        let h = 1.0 / n as f64;
        let mut oracle = DMatrix::zeros(18, 18);
        for s in 0..=n {
            let t = s as f64 * h;
            let w = if s == 0 || s == n { 0.5 * h } else { h };
            let row = basis.eval_at(t).unwrap();
            oracle += w * &row * row.transpose();
        }
        let diff = (psi - oracle).abs().max();
        pass &= diff < 1e-8;
        detail.push_str(&format!("gram {diff:.2e}"));
    }

    verdict("criterion 6 (oracle equivalence suite)", pass, &detail);
}

#[test]
fn criterion_7_property_suite() {
    let mut pass = true;
    let mut detail = String::new();

    // partition of unity at 1000 points
    {
        let basis = BSplineBasis::new(3, 18, (0.0, 1.0)).unwrap();
        let mut worst: f64 = 0.0;
        let mut x = 0.5f64;
        for _ in 0..1000 {
            x = (x + std::f64::consts::FRAC_1_SQRT_2) % 1.0;
            worst = worst.max((basis.eval_at(x).unwrap().sum() - 1.0).abs());
        }
        pass &= worst < 1e-10;
        detail.push_str(&format!("unity {worst:.1e}; "));
    }

    // Ψ positive definite and banded
    {
        let basis = BSplineBasis::new(3, 18, (0.0, 1.0)).unwrap();
        let psi = basis.gram();
        let min_eig = psi
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let mut banded = true;
        for i in 0..18usize {
            for j in 0..18usize {
                if i.abs_diff(j) > 3 {
                    banded &= psi[(i, j)] == 0.0;
                }
            }
        }
        pass &= min_eig > 0.0 && banded;
        detail.push_str(&format!("psi min-eig {min_eig:.1e}, banded {banded}; "));
    }

    // b'Ψb orthonormality and score moments on simulated data
    {
        let scenario = Scenario::new(MeanModel::M2, ErrorFamily::Gaussian, 0.2, 15).unwrap();
        let mut rng = replicate_rng(SEED, 0x70, 0);
        let (_, coeffs) = fdhom::sim::generate_replicate(&scenario, &mut rng).unwrap();
        let psi = Scenario::basis().gram();
        let model = FpcaModel::fit(&coeffs, &psi).unwrap();
        let b = model.harmonics();
        let gram_b = b.transpose() * &psi * b;
        let mut ortho: f64 = 0.0;
        for i in 0..model.n_components() {
            for j in 0..model.n_components() {
                let expect = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((gram_b[(i, j)] - expect).abs());
            }
        }
        let scores = model.scores();
        let nf = scores.nrows() as f64;
        let mut mean_dev: f64 = 0.0;
        let mut uncorr: f64 = 0.0;
        let moments = scores.transpose() * scores / nf;
        for k in 0..model.n_components() {
            mean_dev = mean_dev.max(scores.column(k).mean().abs());
            for j in 0..k {
                uncorr = uncorr.max(moments[(k, j)].abs());
            }
        }
        let tol = 1e-8 * model.eigenvalues()[0].max(1.0);
        pass &= ortho < 1e-8 && mean_dev < 1e-8 && uncorr < tol;
        detail.push_str(&format!(
            "ortho {ortho:.1e}, score-mean {mean_dev:.1e}, uncorr {uncorr:.1e}; "
        ));
    }

    // rotation + location invariance of both Q statistics
    {
        let mut rng = replicate_rng(SEED, 0x71, 0);
        let n = 30;
        let mut data = DMatrix::zeros(n, 2);
        for i in 0..n {
            let angle = i as f64 * 0.61;
            let radius = 1.0 + 0.4 * ((i % 7) as f64);
            data[(i, 0)] = radius * angle.cos() + 0.05 * rng.sample::<f64, _>(StandardNormal);
            data[(i, 1)] = radius * angle.sin() + 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
        let groups: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let theta = 1.1f64;
        let rot =
            DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let rotated = &data * rot.transpose();
        let mut shifted = data.clone();
        for i in 0..n {
            shifted[(i, 0)] -= 3.25;
            shifted[(i, 1)] += 9.5;
        }
        let mut worst: f64 = 0.0;
        for build in [mood_multivariate, kruskal_multivariate] {
            let q0 = build(&data, &groups).unwrap().statistic;
            let qr = build(&rotated, &groups).unwrap().statistic;
            let qs = build(&shifted, &groups).unwrap().statistic;
            worst = worst.max((q0 - qr).abs()).max((q0 - qs).abs());
        }
        pass &= worst < 1e-8;
        detail.push_str(&format!("invariance {worst:.1e}; "));
    }

    // null rejection rates at α = 0.05 over 2000 synthetic replications
    {
        let reps = 2000;
        let mut pillai_rejects = 0;
        for rep in 0..reps {
            let mut rng = replicate_rng(SEED, 0x72, rep);
            let mut data = DMatrix::zeros(60, 3);
            for v in data.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let groups: Vec<usize> = (0..60).map(|i| i / 20).collect();
            let report = manova_test(&manova_sscp(&data, &groups).unwrap()).unwrap();
            if report.pillai.p_value < 0.05 {
                pillai_rejects += 1;
            }
        }
        let pillai_rate = pillai_rejects as f64 / reps as f64;

        let mut mood_rejects = 0;
        for rep in 0..reps {
            let mut rng = replicate_rng(SEED, 0x73, rep);
            let mut data = DMatrix::zeros(90, 2);
            for v in data.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let groups: Vec<usize> = (0..90).map(|i| i / 30).collect();
            let report = mood_multivariate(&data, &groups).unwrap();
            if report.p_value < 0.05 {
                mood_rejects += 1;
            }
        }
        let mood_rate = mood_rejects as f64 / reps as f64;
        pass &= (0.03..=0.07).contains(&pillai_rate) && (0.03..=0.07).contains(&mood_rate);
        detail.push_str(&format!(
            "pillai level {pillai_rate:.3}, mood level {mood_rate:.3} (target [0.03, 0.07])"
        ));
    }

    verdict("criterion 7 (property suite)", pass, &detail);
}

#[test]
fn criterion_8_determinism_across_workers() {
    let cells = vec![
        fdhom::sim::StudyCell {
            scenario: Scenario::new(MeanModel::M1, ErrorFamily::Gaussian, 0.05, 15).unwrap(),
            method: SimMethod::BasisCoef,
            reps: 60,
        },
        fdhom::sim::StudyCell {
            scenario: Scenario::new(MeanModel::M2, ErrorFamily::Lognormal, 0.2, 9).unwrap(),
            method: SimMethod::PcScores(3),
            reps: 60,
        },
    ];
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let results = pool.install(|| fdhom::sim::run_study(&cells, SEED).unwrap());
        fdhom::sim::study_results_to_csv(&results)
    };
    let one = run_with(1);
    let four = run_with(4);
    let eight = run_with(8);
    let pass = one == four && four == eight;
    verdict(
        "criterion 8 (worker-count determinism)",
        pass,
        &format!("{} result bytes identical across 1/4/8 workers", one.len()),
    );
    // byte-identical also means numerically identical acceptance values
    assert_abs_diff_eq!(
        fdhom::sim::parse_study_results(&one).unwrap()[0].acceptance,
        fdhom::sim::parse_study_results(&eight).unwrap()[0].acceptance
    );
}
