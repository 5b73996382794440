//! Synthetic data with known quantile coefficients, written as CSV.
//!
//!     cargo run --example simulate [-- OUT.csv]

use qreg::model::QuantileLevel;
use qreg::pipeline::{simulate_dgp, write_csv, DgpConfig, Noise};

fn main() -> qreg::Result<()> {
    let cfg = DgpConfig::location_scale(200, vec![0.5, 1.0, -2.0], vec![1.0, 0.3, 0.0], Noise::Laplace, 1);
    let (data, truth) = simulate_dgp(&cfg)?;
    println!("{} rows, columns {:?}", data.n(), data.column_names().collect::<Vec<_>>());
    for tau in QuantileLevel::decile_grid() {
        let b = truth.quantile_coefficients(tau);
        println!("tau {tau}: {:?}", b.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
    }

    let sim = DgpConfig::simultaneous(200, vec![0.0, 1.0], 0.6, 1);
    let (sim_data, sim_truth) = simulate_dgp(&sim)?;
    println!(
        "simultaneous design: columns {:?}, OLS bias {:.2}",
        sim_data.column_names().collect::<Vec<_>>(),
        sim_truth.ols_bias().unwrap_or(f64::NAN)
    );

    if let Some(path) = std::env::args().nth(1) {
        write_csv(&data, std::fs::File::create(&path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
