//! Test reports and their CSV / Markdown serialization.

/// Outcome of a single hypothesis test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    /// Human-readable method identifier, e.g. "pillai" or "mood-chisq".
    pub method: String,
    pub statistic: f64,
    pub df1: f64,
    /// Second degrees of freedom; absent for χ²-referenced statistics.
    pub df2: Option<f64>,
    pub p_value: f64,
}

impl TestReport {
    pub fn new(method: impl Into<String>, statistic: f64, df1: f64, df2: Option<f64>, p_value: f64) -> Self {
        Self {
            method: method.into(),
            statistic,
            df1,
            df2,
            p_value,
        }
    }

    pub fn reject_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.method,
            self.statistic,
            self.df1,
            self.df2.map(|d| d.to_string()).unwrap_or_default(),
            self.p_value
        )
    }

    fn markdown_row(&self) -> String {
        format!(
            "| {} | {:.6} | {} | {} | {:.6} |",
            self.method,
            self.statistic,
            trim_float(self.df1),
            self.df2.map(trim_float).unwrap_or_default(),
            self.p_value
        )
    }
}

fn trim_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// CSV serialization with a header, one row per report.
pub fn reports_to_csv(reports: &[TestReport]) -> String {
    let mut out = String::from("method,statistic,df1,df2,p\n");
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Markdown table with the same columns as the CSV form.
pub fn reports_to_markdown(reports: &[TestReport]) -> String {
    let mut out = String::from("| method | statistic | df1 | df2 | p |\n|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&r.markdown_row());
        out.push('\n');
    }
    out
}
