//! Coefficient tables and test results rendered as text, CSV or Markdown.
//!
//! Within each estimator block rows are grouped by regressor (in order of
//! first appearance) and ordered by quantile. The CSV form keeps full float
//! precision and can be parsed back with [`parse_report_csv`].

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{significance_stars, Block, CoefRow, CoefficientTable, QuantileLevel, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidArgument(format!("unknown report format `{s}`"))),
        }
    }
}

pub const TEST_SECTION: &str = "test";
const CSV_HEADER: [&str; 9] = [
    "section",
    "name",
    "quantile",
    "estimate",
    "interval_lo",
    "interval_hi",
    "prob",
    "stars",
    "df",
];
const NOTE: &str = "Significance: *** p < 0.01, ** p < 0.05, * p < 0.10.";

pub fn stars(count: u8) -> &'static str {
    match count {
        0 => "",
        1 => "*",
        2 => "**",
        _ => "***",
    }
}

pub fn render_report(table: &CoefficientTable, tests: &[TestResult], format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(table, tests),
        ReportFormat::Csv => render_csv(table, tests),
        ReportFormat::Markdown => render_markdown(table, tests),
    }
}

/// Rows of one block, grouped by regressor and sorted by quantile.
fn grouped(table: &CoefficientTable, block: Block) -> Vec<&CoefRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in table.block(block) {
        if !order.contains(&r.regressor.as_str()) {
            order.push(&r.regressor);
        }
    }
    let mut out = Vec::new();
    for name in order {
        let mut rows: Vec<&CoefRow> = table.block(block).filter(|r| r.regressor == name).collect();
        rows.sort_by(|a, b| tau_key(a).total_cmp(&tau_key(b)));
        out.extend(rows);
    }
    out
}

fn tau_key(r: &CoefRow) -> f64 {
    r.tau.map_or(-1.0, QuantileLevel::value)
}

fn quantile_cell(r: &CoefRow) -> String {
    r.tau.map_or_else(|| "-".to_string(), |t| t.to_string())
}

fn present_blocks(table: &CoefficientTable) -> Vec<Block> {
    Block::ALL
        .into_iter()
        .filter(|&b| table.block(b).next().is_some())
        .collect()
}

fn render_text(table: &CoefficientTable, tests: &[TestResult]) -> String {
    let mut out = String::new();
    let header = ["Variable", "Quantile", "Coefficient", "Prob.", "Sig.", "Lower", "Upper"];
    for block in present_blocks(table) {
        let rows = grouped(table, block);
        let width = rows
            .iter()
            .map(|r| r.regressor.len())
            .chain([header[0].len()])
            .max()
            .unwrap_or(0);
        let _ = writeln!(out, "{}", block.title());
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>12}  {:>7}  {:<4}  {:>12}  {:>12}",
            header[0], header[1], header[2], header[3], header[4], header[5], header[6]
        );
        for r in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>12.5}  {:>7.4}  {:<4}  {:>12.5}  {:>12.5}",
                r.regressor,
                quantile_cell(r),
                r.estimate,
                r.prob,
                stars(r.stars),
                r.interval_lo,
                r.interval_hi
            );
        }
        out.push('\n');
    }
    if !tests.is_empty() {
        let width = tests.iter().map(|t| t.name.len()).chain([4]).max().unwrap_or(4);
        let _ = writeln!(out, "Tests");
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>4}  {:>7}  {:<4}", "Test", "Statistic", "df", "Prob.", "Sig.");
        for t in tests {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.4}  {:>4}  {:>7.4}  {:<4}",
                t.name,
                t.statistic,
                t.df,
                t.p_value,
                stars(significance_stars(t.p_value))
            );
        }
        out.push('\n');
    }
    out.push_str(NOTE);
    out.push('\n');
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}

fn render_markdown(table: &CoefficientTable, tests: &[TestResult]) -> String {
    let mut out = String::new();
    for block in present_blocks(table) {
        let _ = writeln!(out, "### {}\n", block.title());
        out.push_str("| Variable | Quantile | Coefficient | Prob. | Sig. | Interval |\n");
        out.push_str("|---|---:|---:|---:|---|---|\n");
        for r in grouped(table, block) {
            let _ = writeln!(
                out,
                "| {} | {} | {:.5} | {:.4} | {} | [{:.5}, {:.5}] |",
                r.regressor,
                quantile_cell(r),
                r.estimate,
                r.prob,
                stars(r.stars).replace('*', "\\*"),
                r.interval_lo,
                r.interval_hi
            );
        }
        out.push('\n');
    }
    if !tests.is_empty() {
        out.push_str("### Tests\n\n| Test | Statistic | df | Prob. | Sig. |\n|---|---:|---:|---:|---|\n");
        for t in tests {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {} | {:.4} | {} |",
                t.name,
                t.statistic,
                t.df,
                t.p_value,
                stars(significance_stars(t.p_value)).replace('*', "\\*")
            );
        }
        out.push('\n');
    }
    out.push_str(&NOTE.replace('*', "\\*"));
    out.push('\n');
    out
}

fn render_csv(table: &CoefficientTable, tests: &[TestResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, rec: [String; 9]| w.write_record(&rec).expect("writing to memory");
    write(&mut w, CSV_HEADER.map(str::to_string));
    for r in &table.rows {
        write(
            &mut w,
            [
                r.block.key().to_string(),
                r.regressor.clone(),
                r.tau.map_or_else(String::new, |t| format!("{}", t.value())),
                format!("{}", r.estimate),
                format!("{}", r.interval_lo),
                format!("{}", r.interval_hi),
                format!("{}", r.prob),
                r.stars.to_string(),
                String::new(),
            ],
        );
    }
    for t in tests {
        write(
            &mut w,
            [
                TEST_SECTION.to_string(),
                t.name.clone(),
                String::new(),
                format!("{}", t.statistic),
                String::new(),
                String::new(),
                format!("{}", t.p_value),
                significance_stars(t.p_value).to_string(),
                t.df.to_string(),
            ],
        );
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is UTF-8")
}

/// Reads a report written in the CSV format back into a table and tests.
pub fn parse_report_csv(text: &str, label: &str) -> Result<(CoefficientTable, Vec<TestResult>)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            file: label.into(),
            row: 1,
            column: "section".into(),
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut table = CoefficientTable::default();
    let mut tests = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |column: &str, message: String| Error::Parse {
            file: label.into(),
            row,
            column: column.into(),
            message,
        };
        let num = |k: usize| -> Result<f64> {
            let cell = rec.get(k).unwrap_or("");
            cell.parse::<f64>()
                .map_err(|_| bad(CSV_HEADER[k], format!("`{cell}` is not a number")))
        };
        let section = rec.get(0).unwrap_or("");
        let name = rec.get(1).unwrap_or("").to_string();
        if section == TEST_SECTION {
            let df_cell = rec.get(8).unwrap_or("");
            let df = df_cell
                .parse::<usize>()
                .map_err(|_| bad("df", format!("`{df_cell}` is not a count")))?;
            tests.push(TestResult::new(name, num(3)?, df, num(6)?));
            continue;
        }
        let block = Block::from_key(section).ok_or_else(|| bad("section", format!("unknown section `{section}`")))?;
        let tau = match rec.get(2).unwrap_or("") {
            "" => None,
            _ => Some(QuantileLevel::new(num(2)?).map_err(|e| bad("quantile", e.to_string()))?),
        };
        table.rows.push(CoefRow::new(block, name, tau, num(3)?, (num(4)?, num(5)?), num(6)?));
    }
    Ok((table, tests))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tau(t: f64) -> Option<QuantileLevel> {
        Some(QuantileLevel::new(t).unwrap())
    }

    fn sample() -> (CoefficientTable, Vec<TestResult>) {
        let mut t = CoefficientTable::default();
        t.extend([
            CoefRow::new(Block::Ols, "C", None, 1.5, (1.0, 2.0), 0.0024),
            CoefRow::new(Block::Ols, "VC", None, 0.04983, (0.001, 0.09), 0.0426),
            CoefRow::new(Block::Bqr, "C", tau(0.9), 2.0, (1.5, 2.5), 0.0),
            CoefRow::new(Block::Bqr, "VC", tau(0.9), -0.1, (-0.3, 0.1), 0.3),
            CoefRow::new(Block::Bqr, "C", tau(0.1), 1.0, (0.5, 1.5), 0.08),
            CoefRow::new(Block::Bqr, "VC", tau(0.1), 0.2, (0.0, 0.4), 0.06),
        ]);
        let tests = vec![TestResult::new("slope VC", 3.2, 1, 0.0736)];
        (t, tests)
    }

    #[test]
    fn stars_follow_thresholds() {
        let (t, _) = sample();
        let ols: Vec<u8> = t.block(Block::Ols).map(|r| r.stars).collect();
        assert_eq!(ols, vec![3, 2]);
        let text = render_report(&t, &[], ReportFormat::Text);
        let vc = text.lines().find(|l| l.starts_with("VC")).unwrap();
        assert!(vc.contains("0.04983") && vc.contains("**") && !vc.contains("***"), "{vc}");
    }

    #[test]
    fn text_groups_by_regressor_then_quantile() {
        let (t, tests) = sample();
        let text = render_report(&t, &tests, ReportFormat::Text);
        let bqr: Vec<&str> = text
            .split("Bayesian quantile regression\n")
            .nth(1)
            .unwrap()
            .lines()
            .skip(1)
            .take(4)
            .collect();
        let keys: Vec<(String, String)> = bqr
            .iter()
            .map(|l| {
                let mut it = l.split_whitespace();
                (it.next().unwrap().to_string(), it.next().unwrap().to_string())
            })
            .collect();
        let want = [("C", "0.100"), ("C", "0.900"), ("VC", "0.100"), ("VC", "0.900")];
        assert_eq!(keys, want.map(|(a, b)| (a.to_string(), b.to_string())));
        assert!(text.contains("Tests\n"));
        assert!(text.lines().any(|l| l.starts_with("slope VC") && l.ends_with('*')));
    }

    #[test]
    fn rendering_is_byte_stable() {
        let (t, tests) = sample();
        for f in [ReportFormat::Text, ReportFormat::Csv, ReportFormat::Markdown] {
            assert_eq!(render_report(&t, &tests, f), render_report(&t, &tests, f));
        }
    }

    #[test]
    fn csv_round_trips() {
        let (t, tests) = sample();
        let csv = render_report(&t, &tests, ReportFormat::Csv);
        let (t2, tests2) = parse_report_csv(&csv, "r.csv").unwrap();
        assert_eq!(t2, t);
        assert_eq!(tests2, tests);
        assert_eq!(render_report(&t2, &tests2, ReportFormat::Csv), csv);
    }

    #[test]
    fn csv_parse_errors_are_located() {
        let (t, tests) = sample();
        let csv = render_report(&t, &tests, ReportFormat::Csv).replace("0.04983", "x");
        assert!(matches!(
            parse_report_csv(&csv, "r.csv").unwrap_err(),
            Error::Parse { row: 3, ref column, .. } if column == "estimate"
        ));
        assert!(parse_report_csv("a,b\n", "r.csv").is_err());
    }

    #[test]
    fn markdown_escapes_stars() {
        let (t, tests) = sample();
        let md = render_report(&t, &tests, ReportFormat::Markdown);
        assert!(md.contains("### OLS Results"));
        assert!(md.contains("| \\*\\*\\* |"));
    }

    proptest! {
        #[test]
        fn star_rule_is_a_function_of_prob(p in 0.0f64..=1.0) {
            let a = CoefRow::new(Block::Ols, "a", None, 1.0, (0.0, 2.0), p);
            let b = CoefRow::new(Block::Bqr, "b", tau(0.3), -5.0, (-9.0, 9.0), p);
            prop_assert_eq!(a.stars, b.stars);
            let want = if p < 0.01 { 3 } else if p < 0.05 { 2 } else if p < 0.10 { 1 } else { 0 };
            prop_assert_eq!(a.stars, want);
        }
    }
}
