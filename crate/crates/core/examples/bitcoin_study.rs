//! The full study on the bundled fixture: OLS and Bayesian quantile
//! regression of the Bitcoin price on nine drivers over the decile grid,
//! with slope-equality tests between the 0.1 and 0.9 quantiles.
//!
//!     cargo run --release --example bitcoin_study [-- text|csv|markdown]

use std::path::PathBuf;

use qreg::bayes::McmcConfig;
use qreg::pipeline::{read_manifest, render_report, ReportFormat};

fn main() -> qreg::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/study.manifest");
    let mut manifest = read_manifest(&path)?;
    // Shorter chains than the manifest's so the example finishes quickly.
    manifest.study.mcmc = McmcConfig::new(3000, 500, 1, manifest.study.mcmc.seed)?;
    let format: ReportFormat = match std::env::args().nth(1) {
        Some(f) => f.parse()?,
        None => ReportFormat::Markdown,
    };

    let report = manifest.run()?;
    eprintln!("{} observations, {} table rows, {} tests", report.n, report.table.len(), report.tests.len());
    print!("{}", render_report(&report.table, &report.tests, format));
    Ok(())
}
