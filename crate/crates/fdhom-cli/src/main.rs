//! Batch front end: registration of raw curves, end-to-end homogeneity
//! testing, and Monte Carlo study tables.
//!
//! Every command is deterministic given its inputs, flags and seed. Exit
//! codes: 0 on success, 2 for validation problems (arguments, formats,
//! design), 3 for computation failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use fdhom::basis::BSplineBasis;
use fdhom::error::Error;
use fdhom::fpca::FpcaModel;
use fdhom::io;
use fdhom::manova::{bonferroni_battery, manova_sscp, manova_test};
use fdhom::nonparametric::{
    kruskal_multivariate, mood_multivariate, permutation_pvalue, wilcoxon_pairwise_bh, NpTest,
};
use fdhom::report::{reports_to_csv, reports_to_markdown, TestReport};
use fdhom::sim::{parse_study_config, run_study, study_markdown, study_results_to_csv};
use fdhom::smooth::{
    default_lambda_grid, fit_least_squares, fit_pspline, register_domain, select_lambda_loocv,
    CoefficientSet, CurveSet,
};

#[derive(Parser)]
#[command(name = "fdhom", version, about = "Homogeneity tests for samples of curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rescale raw curves onto [0, 1] and interpolate them onto a common grid
    Register(RegisterArgs),
    /// Run one homogeneity test route end to end
    Test(TestArgs),
    /// Run a Monte Carlo study from a configuration file
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct RegisterArgs {
    /// Raw CSV with columns curve_id,group,v,value[,v_reset]
    #[arg(long)]
    input: PathBuf,
    /// Number of equally spaced grid points on [0, 1]
    #[arg(long, default_value_t = 51)]
    grid_points: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Long,
    Wide,
    Raw,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Route {
    Manova,
    PcAnova,
    NpMood,
    NpKw,
    PairwiseWilcoxon,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Long)]
    format: InputFormat,
    /// Grid size used when registering raw input
    #[arg(long, default_value_t = 51)]
    grid_points: usize,
    /// B-spline basis dimension
    #[arg(long, default_value_t = 18)]
    basis_dim: usize,
    /// B-spline degree
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Fixed penalty parameter; enables P-spline smoothing
    #[arg(long, conflicts_with = "loocv")]
    lambda: Option<f64>,
    /// Select the penalty parameter by leave-one-out cross-validation
    #[arg(long)]
    loocv: bool,
    /// Test route
    #[arg(long, value_enum)]
    route: Route,
    /// Number of principal components
    #[arg(long, conflicts_with = "var_threshold")]
    q: Option<usize>,
    /// Cumulative explained-variance threshold for choosing q
    #[arg(long)]
    var_threshold: Option<f64>,
    /// Significance level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Seed for permutation p-values
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Replace the χ² reference of np-mood / np-kw with a label-permutation
    /// p-value using this many permutations
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study configuration (mean_model,error_family,sigma,n_i,method,reps,alpha)
    #[arg(long)]
    config: PathBuf,
    /// Override the replication count of every cell
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Rayon worker threads (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Run the full 1000-replication design
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Register(args) => cmd_register(&args),
        Command::Test(args) => cmd_test(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn unit_grid(points: usize) -> Result<Vec<f64>, Error> {
    if points < 2 {
        return Err(Error::InvalidArgument(
            "need at least two grid points".into(),
        ));
    }
    Ok((0..points)
        .map(|s| s as f64 / (points - 1) as f64)
        .collect())
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_register(args: &RegisterArgs) -> Result<(), Error> {
    let raw = io::read_raw_curves(fs::File::open(&args.input)?)?;
    let defaulted = raw.iter().filter(|c| c.v_reset.is_none()).count();
    if defaulted > 0 {
        eprintln!(
            "note: {defaulted} of {} curves have no v_reset; defaulting to each curve's largest abscissa",
            raw.len()
        );
    }
    let grid = unit_grid(args.grid_points)?;
    let registered = register_domain(&raw, &grid)?;
    fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    io::write_curves_long(&mut buf, &registered)?;
    write(
        &args.out.join("registered.csv"),
        std::str::from_utf8(&buf).expect("utf8 csv"),
    )
}

fn load_curves(args: &TestArgs) -> Result<CurveSet, Error> {
    let file = fs::File::open(&args.input)?;
    match args.format {
        InputFormat::Long => io::read_curves_long(file),
        InputFormat::Wide => io::read_curves_wide(file),
        InputFormat::Raw => {
            let raw = io::read_raw_curves(file)?;
            register_domain(&raw, &unit_grid(args.grid_points)?)
        }
    }
}

fn smooth_curves(args: &TestArgs, curves: &CurveSet) -> Result<(CoefficientSet, Vec<String>), Error> {
    let basis = BSplineBasis::new(args.degree, args.basis_dim, (0.0, 1.0))?;
    let mut log = Vec::new();
    let coeffs = if args.loocv {
        let selection = select_lambda_loocv(curves, &basis, &default_lambda_grid(), 2)?;
        log.push(format!("loocv selected lambda = {}", selection.lambda));
        fit_pspline(curves, &basis, selection.lambda, 2)?
    } else if let Some(lambda) = args.lambda {
        log.push(format!("pspline with fixed lambda = {lambda}"));
        fit_pspline(curves, &basis, lambda, 2)?
    } else {
        log.push("unpenalized least squares".into());
        fit_least_squares(curves, &basis)?
    };
    Ok((coeffs, log))
}

/// Explained-variance table in the four-component percentage layout.
fn variance_tables(model: &FpcaModel) -> (String, String) {
    let props = model.proportions();
    let cum = model.cumulative_proportions();
    let mut csv = String::from("component,eigenvalue,percent,cumulative_percent\n");
    let mut md = String::from(
        "| component | eigenvalue | % variance | cumulative % |\n|---|---|---|---|\n",
    );
    for k in 0..model.n_components() {
        csv.push_str(&format!(
            "{},{},{:.3},{:.3}\n",
            k + 1,
            model.eigenvalues()[k],
            100.0 * props[k],
            100.0 * cum[k]
        ));
        md.push_str(&format!(
            "| {} | {:.6e} | {:.3} | {:.3} |\n",
            k + 1,
            model.eigenvalues()[k],
            100.0 * props[k],
            100.0 * cum[k]
        ));
    }
    (csv, md)
}

fn select_components(args: &TestArgs, model: &FpcaModel) -> Result<usize, Error> {
    if let Some(q) = args.q {
        if q == 0 || q > model.n_components() {
            return Err(Error::ComponentRange {
                requested: q,
                retained: model.n_components(),
            });
        }
        return Ok(q);
    }
    let threshold = args.var_threshold.unwrap_or(0.99);
    let q = model.components_for_variance(threshold)?;
    eprintln!(
        "variance threshold {threshold} selects q = {q} of {} components",
        model.n_components()
    );
    Ok(q)
}

fn fit_fpca(
    args: &TestArgs,
    coeffs: &CoefficientSet,
    out: &Path,
) -> Result<(FpcaModel, usize), Error> {
    let psi = coeffs.basis().gram();
    let model = FpcaModel::fit(coeffs, &psi)?;
    let q = select_components(args, &model)?;
    let (var_csv, var_md) = variance_tables(&model);
    write(&out.join("variance.csv"), &var_csv)?;
    write(&out.join("variance.md"), &var_md)?;

    let mut buf = Vec::new();
    io::write_scores(
        &mut buf,
        coeffs.curve_ids(),
        &coeffs.group_labels(),
        &model.scores().columns(0, q).into_owned(),
    )?;
    write(
        &out.join("scores.csv"),
        std::str::from_utf8(&buf).expect("utf8 csv"),
    )?;

    // eigenfunctions evaluated on a dense grid
    let grid = unit_grid(101)?;
    let values = model.eigenfunction_values(&grid, q)?;
    let mut ef = String::from("t");
    for k in 1..=q {
        ef.push_str(&format!(",f{k}"));
    }
    ef.push('\n');
    for (s, t) in grid.iter().enumerate() {
        ef.push_str(&t.to_string());
        for k in 0..q {
            ef.push_str(&format!(",{}", values[(s, k)]));
        }
        ef.push('\n');
    }
    write(&out.join("eigenfunctions.csv"), &ef)?;
    Ok((model, q))
}

fn np_report(
    args: &TestArgs,
    data: &DMatrix<f64>,
    groups: &[usize],
    kind: NpTest,
) -> Result<TestReport, Error> {
    let mut report = match kind {
        NpTest::Mood => mood_multivariate(data, groups),
        NpTest::Kruskal => kruskal_multivariate(data, groups),
    };
    if let Some(b) = args.permutations {
        let p = permutation_pvalue(kind, data, groups, b, args.seed)?;
        let method = match kind {
            NpTest::Mood => "mood-permutation",
            NpTest::Kruskal => "kruskal-permutation",
        };
        report = match report {
            Ok(mut r) => {
                r.method = method.into();
                r.p_value = p;
                Ok(r)
            }
            // degenerate normalizer: the χ² route failed but the
            // permutation statistic is still defined
            Err(Error::DegenerateGeometry(_)) => {
                Ok(TestReport::new(method, f64::NAN, f64::NAN, None, p))
            }
            Err(other) => Err(other),
        };
    }
    report
}

fn cmd_test(args: &TestArgs) -> Result<(), Error> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance level must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    if let Some(t) = args.var_threshold {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "variance threshold must lie in (0, 1], got {t}"
            )));
        }
    }
    let curves = load_curves(args)?;
    fs::create_dir_all(&args.out)?;
    let (coeffs, smooth_log) = smooth_curves(args, &curves)?;
    for line in &smooth_log {
        eprintln!("{line}");
    }
    let mut buf = Vec::new();
    io::write_coefficients(&mut buf, &coeffs)?;
    write(
        &args.out.join("coefficients.csv"),
        std::str::from_utf8(&buf).expect("utf8 csv"),
    )?;

    let reports: Vec<TestReport> = match args.route {
        Route::Manova => {
            let sscp = manova_sscp(coeffs.coefficients(), coeffs.groups())?;
            let report = manova_test(&sscp)?;
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            let headline = report.headline();
            eprintln!(
                "pillai = {:.6}, p = {:.6} → {} at alpha = {}",
                headline.statistic,
                headline.p_value,
                if headline.reject_at(args.alpha) {
                    "reject homogeneity"
                } else {
                    "accept homogeneity"
                },
                args.alpha
            );
            report.rows()
        }
        Route::PcAnova => {
            let (model, q) = fit_fpca(args, &coeffs, &args.out)?;
            let scores = model.scores().columns(0, q).into_owned();
            let battery = bonferroni_battery(&scores, coeffs.groups(), args.alpha)?;
            eprintln!(
                "battery of {q} ANOVAs at per-test alpha {} → {}",
                battery.per_test_alpha,
                if battery.reject {
                    "reject homogeneity"
                } else {
                    "accept homogeneity"
                }
            );
            battery.rows()
        }
        Route::NpMood | Route::NpKw => {
            let kind = if args.route == Route::NpMood {
                NpTest::Mood
            } else {
                NpTest::Kruskal
            };
            let (data, groups) = if args.q.is_some() || args.var_threshold.is_some() {
                let (model, q) = fit_fpca(args, &coeffs, &args.out)?;
                (
                    model.scores().columns(0, q).into_owned(),
                    coeffs.groups().to_vec(),
                )
            } else {
                (coeffs.coefficients().clone(), coeffs.groups().to_vec())
            };
            let report = np_report(args, &data, &groups, kind)?;
            eprintln!(
                "{} = {:.4}, p = {:.6} → {}",
                report.method,
                report.statistic,
                report.p_value,
                if report.reject_at(args.alpha) {
                    "reject homogeneity"
                } else {
                    "accept homogeneity"
                }
            );
            vec![report]
        }
        Route::PairwiseWilcoxon => {
            let (model, _) = fit_fpca(args, &coeffs, &args.out)?;
            let first: Vec<f64> = model.scores().column(0).iter().cloned().collect();
            let table = wilcoxon_pairwise_bh(&first, coeffs.groups())?;
            let names = coeffs.group_names();
            let mut csv = String::from("group");
            for name in names {
                csv.push_str(&format!(",{name}"));
            }
            csv.push('\n');
            for i in 0..names.len() {
                csv.push_str(&names[i]);
                for j in 0..names.len() {
                    csv.push_str(&format!(",{}", table[(i, j)]));
                }
                csv.push('\n');
            }
            write(&args.out.join("pairwise.csv"), &csv)?;
            // summary rows: one per pair, BH-adjusted p-values
            let mut rows = Vec::new();
            for i in 0..names.len() {
                for j in (i + 1)..names.len() {
                    rows.push(TestReport::new(
                        format!("wilcoxon-bh {} vs {}", names[i], names[j]),
                        f64::NAN,
                        f64::NAN,
                        None,
                        table[(i, j)],
                    ));
                }
            }
            rows
        }
    };

    write(&args.out.join("report.csv"), &reports_to_csv(&reports))?;
    write(&args.out.join("report.md"), &reports_to_markdown(&reports))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let text = fs::read_to_string(&args.config)?;
    let mut cells = parse_study_config(&text)?;
    let reps_override = if args.full { Some(1000) } else { args.reps };
    if let Some(reps) = reps_override {
        if reps == 0 {
            return Err(Error::InvalidArgument("reps must be positive".into()));
        }
        for cell in &mut cells {
            cell.reps = reps;
        }
    }
    eprintln!("running {} cells", cells.len());
    let results = match args.workers {
        Some(w) => {
            if w == 0 {
                return Err(Error::InvalidArgument("workers must be positive".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_study(&cells, args.seed))?
        }
        None => run_study(&cells, args.seed)?,
    };
    let excluded: usize = results.iter().map(|r| r.failures).sum();
    if excluded > 0 {
        eprintln!("warning: {excluded} replications were excluded after errors");
    }
    fs::create_dir_all(&args.out)?;
    write(&args.out.join("results.csv"), &study_results_to_csv(&results))?;
    write(&args.out.join("tables.md"), &study_markdown(&results))
}
