//! Check-loss quantile regression against least squares on heteroskedastic
//! data, compared with the known quantile coefficients.
//!
//!     cargo run --example quantile_regression

use qreg::classical::{check_objective, ols_fit, qr_fit};
use qreg::model::{build_design, QuantileLevel};
use qreg::pipeline::{simulate_dgp, DgpConfig, Noise};

fn main() -> qreg::Result<()> {
    // Scale grows with x1, so the slope differs across quantiles.
    let cfg = DgpConfig::location_scale(2000, vec![1.0, 2.0], vec![0.5, 0.75], Noise::Normal, 11);
    let (data, truth) = simulate_dgp(&cfg)?;
    let spec = qreg::pipeline::dgp::true_spec(&cfg)?;
    let design = build_design(&data, &spec)?;

    let ols = ols_fit(&design.x, &design.y)?;
    println!("OLS slope {:.4} (se {:.4})", ols.coefficients[1], ols.std_errors[1]);

    println!("{:>6} {:>10} {:>10} {:>12} {:>6}", "tau", "slope", "truth", "objective", "iters");
    for tau in QuantileLevel::decile_grid() {
        let fit = qr_fit(&design.x, &design.y, tau)?;
        let want = truth.quantile_coefficients(tau);
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>12.4} {:>6}",
            tau, fit.coefficients[1], want[1], fit.objective, fit.iterations
        );
    }

    // The median fit beats least squares on the absolute-error objective.
    let median = QuantileLevel::new(0.5)?;
    let lad = qr_fit(&design.x, &design.y, median)?;
    println!(
        "check loss at tau 0.5: LAD {:.4}, OLS {:.4}",
        lad.objective,
        check_objective(&design.x, &design.y, &ols.coefficients, median)
    );
    Ok(())
}
