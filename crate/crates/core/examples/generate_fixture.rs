//! Regenerates the bundled daily fixture in `fixtures/`.
//!
//! The series are synthetic stand-ins for the ten variables of the Bitcoin
//! study (price index, velocity, exchange-trade ratio, hash rate, search
//! attention in India and Venezuela, gold, yuan, and the UK and US volatility
//! indices). Blockchain and search series are observed every day; gold and
//! the DataStream-style series only on trading days, so the loader has real
//! weekend and holiday gaps to fill.
//!
//!     cargo run --example generate_fixture [-- OUT_DIR]

use std::error::Error;
use std::fs;
use std::path::PathBuf;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 20_150_101;

/// Exchange closures that fall on weekdays.
const HOLIDAYS: [&str; 6] = ["2015-01-01", "2015-04-03", "2015-12-25", "2016-01-01", "2016-03-25", "2016-12-26"];

struct Ar1 {
    level: f64,
    mean: f64,
    phi: f64,
    sd: f64,
    trend: f64,
}

impl Ar1 {
    fn new(start: f64, phi: f64, sd: f64, trend: f64) -> Self {
        Ar1 {
            level: start,
            mean: start,
            phi,
            sd,
            trend,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        self.mean += self.trend;
        let e: f64 = rng.sample(StandardNormal);
        self.level = self.mean + self.phi * (self.level - self.mean) + self.sd * e;
        self.level
    }
}

fn main() -> Result<(), Box<dyn Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    fs::create_dir_all(&out)?;

    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2016, 12, 30).unwrap();
    let holidays: Vec<NaiveDate> = HOLIDAYS.iter().map(|d| d.parse().unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    // Log levels.
    let mut vc = Ar1::new(1.6, 0.85, 0.12, 0.0);
    let mut etr = Ar1::new(-0.9, 0.9, 0.10, 0.0006);
    let mut hr = Ar1::new(12.6, 0.7, 0.06, 0.0029);
    let mut abi = Ar1::new(2.9, 0.8, 0.18, 0.0009);
    let mut abv = Ar1::new(2.6, 0.8, 0.22, 0.0012);
    let mut gp = Ar1::new(7.07, 0.995, 0.009, -0.00002);
    let mut yuan = Ar1::new(1.826, 0.998, 0.0015, 0.00015);
    let mut bv = Ar1::new(2.85, 0.95, 0.07, -0.0002);
    let mut usv = Ar1::new(2.80, 0.94, 0.08, -0.0002);
    let mut noise = 0.0;

    let mut bitcoin = String::from("date,close\n");
    let mut chain = String::from("date,velocity,exchange_trade_ratio,hash_rate\n");
    let mut trends = String::from("date,bitcoin_india,bitcoin_venezuela\n");
    let mut gold = String::from("date,usd_am\n");
    let mut market = String::from("date,CNY,VFTSE,VIX\n");

    let mut day = start;
    while day <= end {
        let (l_vc, l_etr, l_hr) = (vc.step(&mut rng), etr.step(&mut rng), hr.step(&mut rng));
        let (l_abi, l_abv) = (abi.step(&mut rng), abv.step(&mut rng));
        let (l_gp, l_yuan) = (gp.step(&mut rng), yuan.step(&mut rng));
        let (l_bv, l_usv) = (bv.step(&mut rng), usv.step(&mut rng));

        // Heavier right tail and more dispersion when attention is high.
        let scale = 0.05 + 0.03 * (l_abi - 2.9).max(0.0);
        let shock: f64 = rng.sample(StandardNormal);
        noise = 0.9 * noise + scale * shock * if shock > 0.0 { 1.4 } else { 0.8 };
        let l_bpi = 1.85 - 0.12 * l_vc + 0.35 * l_etr - 0.2 * l_gp + 0.1 * l_abi + 0.12 * l_abv + 0.55 * l_hr
            - 1.2 * l_yuan
            + 0.08 * l_bv
            + 0.1 * l_usv
            + noise;

        let date = day.format("%Y-%m-%d");
        bitcoin.push_str(&format!("{date},{:.4}\n", l_bpi.exp()));
        chain.push_str(&format!("{date},{:.4},{:.4},{:.0}\n", l_vc.exp(), l_etr.exp(), l_hr.exp()));
        trends.push_str(&format!(
            "{date},{},{}\n",
            l_abi.exp().round().clamp(1.0, 100.0),
            l_abv.exp().round().clamp(1.0, 100.0)
        ));
        let trading = !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) && !holidays.contains(&day);
        if trading {
            gold.push_str(&format!("{date},{:.2}\n", l_gp.exp()));
            market.push_str(&format!("{date},{:.4},{:.2},{:.2}\n", l_yuan.exp(), l_bv.exp(), l_usv.exp()));
        }
        day = day.succ_opt().unwrap();
    }

    for (name, body) in [
        ("coindesk_bpi.csv", bitcoin),
        ("blockchain.csv", chain),
        ("google_trends.csv", trends),
        ("gold.csv", gold),
        ("datastream.csv", market),
    ] {
        fs::write(out.join(name), body)?;
    }
    println!("wrote fixture to {}", out.display());
    Ok(())
}
