//! Bayesian quantile regression with the asymmetric-Laplace Gibbs sampler:
//! posterior summaries, convergence across seeds, and chain export.
//!
//!     cargo run --release --example bayesian_quantile_regression [-- CHAIN_DIR]

use qreg::bayes::{bqr_fit_named, chain_diagnostics, posterior_medians, summarize_chain, BqrPrior, McmcConfig};
use qreg::classical::qr_fit;
use qreg::model::{build_design, Block, QuantileLevel};
use qreg::pipeline::{dgp, simulate_dgp, write_chains, DgpConfig, Noise};

fn main() -> qreg::Result<()> {
    let cfg = DgpConfig::location_scale(500, vec![1.0, 2.0, -1.0], vec![1.0, 0.5, 0.0], Noise::Laplace, 5);
    let (data, truth) = simulate_dgp(&cfg)?;
    let design = build_design(&data, &dgp::true_spec(&cfg)?)?;
    let tau = QuantileLevel::new(0.75)?;
    let prior = BqrPrior::weakly_informative(design.p());

    let chains = (0..4)
        .map(|seed| {
            let mcmc = McmcConfig::new(4000, 1000, 1, seed)?;
            bqr_fit_named(&design.x, &design.y, tau, &prior, &mcmc, design.names.clone())
        })
        .collect::<qreg::Result<Vec<_>>>()?;

    let rhat = chain_diagnostics(&chains, true)?;
    let qr = qr_fit(&design.x, &design.y, tau)?;
    let medians = posterior_medians(&chains[0]);
    let want = truth.quantile_coefficients(tau);
    println!("tau = {tau}, {} retained draws per chain", chains[0].len());
    println!("{:>4} {:>10} {:>10} {:>10} {:>8}", "", "median", "qr_fit", "truth", "R-hat");
    for (k, name) in design.names.iter().enumerate() {
        println!(
            "{name:>4} {:>10.4} {:>10.4} {:>10.4} {:>8.4}",
            medians[k], qr.coefficients[k], want[k], rhat[k]
        );
    }

    for row in summarize_chain(&chains[0], 0.9)? {
        println!(
            "{:>4}: mean {:.4}, 90% interval [{:.4}, {:.4}], tail prob {:.4}",
            row.regressor, row.estimate, row.interval_lo, row.interval_hi, row.prob
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        let tagged: Vec<_> = chains.into_iter().map(|c| (Block::Bqr, c)).collect();
        for path in write_chains(std::path::Path::new(&dir), &tagged[..1])? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
