//! Aligns the bundled 7-day and trading-day series on one calendar,
//! forward-filling weekend and holiday gaps, then applies transforms.
//!
//!     cargo run --example load_and_transform

use std::path::PathBuf;

use qreg::model::{build_design, ModelSpec, Transform};
use qreg::pipeline::{apply_transforms, load_csv, ColumnSchema, SourceFile};

fn main() -> qreg::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let sources = vec![
        SourceFile::new(dir.join("coindesk_bpi.csv"), vec![ColumnSchema::new("BPI", "close")]),
        SourceFile::new(
            dir.join("gold.csv"),
            vec![ColumnSchema::new("GP", "usd_am").with_fill_limit(3)?],
        ),
    ];
    let data = load_csv(&sources)?;
    println!(
        "{} rows from {} to {}",
        data.n(),
        data.dates()[0],
        data.dates()[data.n() - 1]
    );

    // Without filling, weekends and holidays drop out of the join.
    let strict = vec![sources[0].clone(), SourceFile::new(dir.join("gold.csv"), vec![ColumnSchema::new("GP", "usd_am")])];
    println!("{} rows with no forward filling", load_csv(&strict)?.n());

    let spec = ModelSpec::new("BPI", vec!["GP".into()], true)?
        .with_transform("BPI", Transform::Log)
        .with_transform("GP", Transform::Log)
        .with_transform("GP", Transform::Diff);
    let transformed = apply_transforms(&data, &spec)?;
    println!("columns after transforms: {:?}", transformed.column_names().collect::<Vec<_>>());
    let design = build_design(&transformed, &spec)?;
    println!("design: {} x {} ({:?})", design.n(), design.p(), design.names);
    Ok(())
}
