//! Bootstrap Wald tests of equal slopes across quantiles: a pairwise test of
//! tau against 1 - tau and a joint test over the decile grid.
//!
//!     cargo run --release --example slope_equality

use qreg::inference::{joint_slope_test, slope_equality_test, BootstrapConfig};
use qreg::model::{build_design, QuantileLevel};
use qreg::pipeline::{dgp, simulate_dgp, DgpConfig, Noise};

fn main() -> qreg::Result<()> {
    let boot = BootstrapConfig::new(200, 9)?;
    let lo = QuantileLevel::new(0.1)?;
    for (label, slope_scale) in [("location shift", 0.0), ("scale effect", 1.0)] {
        let cfg = DgpConfig::location_scale(1000, vec![1.0, 1.0], vec![1.0, slope_scale], Noise::Normal, 21);
        let (data, _) = simulate_dgp(&cfg)?;
        let design = build_design(&data, &dgp::true_spec(&cfg)?)?;
        let pair = slope_equality_test(&design.x, &design.y, lo, lo.mirror(), 1, &boot)?;
        let joint = joint_slope_test(&design.x, &design.y, &QuantileLevel::decile_grid(), 1, &boot)?;
        println!("{label}:");
        for t in [pair, joint] {
            println!("  {}: W = {:.3}, df = {}, p = {:.4}", t.name, t.statistic, t.df, t.p_value);
        }
    }
    Ok(())
}
