//! CSV ingestion, calendar alignment and column transforms.
//!
//! Every input file has a `date` column (ISO-8601) followed by numeric
//! columns. Files are aligned on the union of their dates. A column that is
//! missing on some dates (a market holiday, a weekend for exchange-traded
//! series) is forward-filled when the whole gap is no longer than the
//! column's fill limit; otherwise the gap stays missing and those rows are
//! dropped from the joined sample.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, Transform};

pub const DATE_COLUMN: &str = "date";

/// Longest gap, in days, that forward filling may bridge.
pub const MAX_FILL_LIMIT: u32 = 5;

/// How one dataset column is read from a source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub name: String,
    /// Header of the column in its source file.
    pub header: String,
    /// Whether the study models this column in logs.
    pub log: bool,
    pub fill_limit: u32,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, header: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            header: header.into(),
            log: false,
            fill_limit: 0,
        }
    }

    pub fn with_fill_limit(mut self, days: u32) -> Result<Self> {
        if days > MAX_FILL_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "fill limit {days} for `{}` exceeds {MAX_FILL_LIMIT} days",
                self.name
            )));
        }
        self.fill_limit = days;
        Ok(self)
    }

    pub fn with_log(mut self) -> Self {
        self.log = true;
        self
    }
}

/// A CSV file and the columns taken from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: PathBuf,
    pub columns: Vec<ColumnSchema>,
}

impl SourceFile {
    pub fn new(path: impl Into<PathBuf>, columns: Vec<ColumnSchema>) -> Self {
        SourceFile {
            path: path.into(),
            columns,
        }
    }
}

/// Adds a log transform to `spec` for every schema column flagged `log`
/// that the model uses and does not already transform.
pub fn schema_transforms(spec: ModelSpec, sources: &[SourceFile]) -> ModelSpec {
    let mut spec = spec;
    for col in sources.iter().flat_map(|s| &s.columns) {
        if col.log && !spec.transforms.contains_key(&col.name) {
            spec = spec.with_transform(&col.name, Transform::Log);
        }
    }
    spec
}

struct RawSeries {
    dates: Vec<NaiveDate>,
    /// One entry per requested column; `None` marks an empty cell.
    values: Vec<Vec<Option<f64>>>,
}

fn read_source(source: &SourceFile) -> Result<RawSeries> {
    let file = std::fs::File::open(&source.path)
        .map_err(|e| Error::Io(e).context(format!("opening {}", source.path.display())))?;
    let label = source.path.display().to_string();
    read_series(file, &label, &source.columns)
}

fn parse_error(file: &str, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        file: PathBuf::from(file),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Row numbers in errors count the header as row 1.
fn read_series<R: Read>(reader: R, label: &str, columns: &[ColumnSchema]) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some(DATE_COLUMN) {
        return Err(parse_error(label, 1, DATE_COLUMN, "first column must be `date`"));
    }
    let positions = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == c.header)
                .ok_or_else(|| parse_error(label, 1, &c.header, "header not found"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values = vec![Vec::new(); columns.len()];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let raw_date = record.get(0).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| parse_error(label, row, DATE_COLUMN, format!("`{raw_date}` is not an ISO-8601 date")))?;
        if let Some(&prev) = dates.last() {
            if date <= prev {
                return Err(parse_error(label, row, DATE_COLUMN, format!("date {date} is not after {prev}")));
            }
        }
        dates.push(date);
        for ((col, &pos), out) in columns.iter().zip(&positions).zip(values.iter_mut()) {
            let cell = record.get(pos).unwrap_or("").trim();
            if cell.is_empty() {
                out.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(label, row, &col.header, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(label, row, &col.header, format!("`{cell}` is not finite")));
            }
            out.push(Some(v));
        }
    }
    Ok(RawSeries { dates, values })
}

/// Loads and aligns the columns of every source into one dataset.
pub fn load_csv(sources: &[SourceFile]) -> Result<Dataset> {
    let raws = sources.iter().map(read_source).collect::<Result<Vec<_>>>()?;
    let schemas: Vec<&ColumnSchema> = sources.iter().flat_map(|s| &s.columns).collect();
    for (i, c) in schemas.iter().enumerate() {
        if schemas[..i].iter().any(|o| o.name == c.name) {
            return Err(Error::InvalidArgument(format!("column `{}` defined twice", c.name)));
        }
        if c.fill_limit > MAX_FILL_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "fill limit {} for `{}` exceeds {MAX_FILL_LIMIT} days",
                c.fill_limit, c.name
            )));
        }
    }
    align(&raws, &schemas)
}

fn align(raws: &[RawSeries], schemas: &[&ColumnSchema]) -> Result<Dataset> {
    let calendar: Vec<NaiveDate> = raws
        .iter()
        .flat_map(|r| r.dates.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let slot: BTreeMap<NaiveDate, usize> = calendar.iter().enumerate().map(|(i, &d)| (d, i)).collect();

    let mut filled: Vec<Vec<Option<f64>>> = Vec::with_capacity(schemas.len());
    let mut schema_iter = schemas.iter();
    for raw in raws {
        for series in &raw.values {
            let schema = schema_iter.next().expect("one schema per column");
            let mut col = vec![None; calendar.len()];
            for (d, v) in raw.dates.iter().zip(series) {
                col[slot[d]] = *v;
            }
            forward_fill(&mut col, &calendar, schema.fill_limit);
            filled.push(col);
        }
    }

    let keep: Vec<usize> = (0..calendar.len())
        .filter(|&i| filled.iter().all(|c| c[i].is_some()))
        .collect();
    if keep.is_empty() {
        return Err(Error::DegenerateSample("no date has every column after alignment".into()));
    }
    let columns: IndexMap<String, Vec<f64>> = schemas
        .iter()
        .zip(&filled)
        .map(|(s, c)| (s.name.clone(), keep.iter().map(|&i| c[i].expect("kept rows are complete")).collect()))
        .collect();
    Dataset::new(keep.iter().map(|&i| calendar[i]).collect(), columns)
}

/// Fills each run of missing values from the last observation when the run
/// spans at most `limit` calendar days.
fn forward_fill(col: &mut [Option<f64>], calendar: &[NaiveDate], limit: u32) {
    if limit == 0 {
        return;
    }
    let n = col.len();
    let mut i = 0;
    while i < n {
        if col[i].is_some() || i == 0 {
            i += 1;
            continue;
        }
        let Some(last) = col[i - 1] else {
            i += 1;
            continue;
        };
        let start = i;
        while i < n && col[i].is_none() {
            i += 1;
        }
        let gap_end = if i < n { calendar[i] } else { calendar[n - 1].succ_opt().expect("date in range") };
        let gap_days = (gap_end - calendar[start - 1]).num_days() - 1;
        if gap_days <= i64::from(limit) {
            for v in &mut col[start..i] {
                *v = Some(last);
            }
        }
    }
}

/// Reads a dataset written by [`write_csv`], taking every column as-is.
pub fn read_dataset<R: Read>(mut reader: R, label: &str) -> Result<Dataset> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let headers = csv::Reader::from_reader(text.as_bytes()).headers()?.clone();
    let schemas: Vec<ColumnSchema> = headers
        .iter()
        .skip(1)
        .map(|h| ColumnSchema::new(h.trim(), h.trim()))
        .collect();
    let raw = read_series(text.as_bytes(), label, &schemas)?;
    let refs: Vec<&ColumnSchema> = schemas.iter().collect();
    align(&[raw], &refs)
}

/// Reads a dataset file from disk; see [`read_dataset`].
pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(e).context(format!("opening {}", path.display())))?;
    read_dataset(file, &path.display().to_string())
}

/// Writes `date` plus every column with round-trip float formatting.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![DATE_COLUMN.to_string()];
    header.extend(dataset.column_names().map(str::to_string));
    w.write_record(&header)?;
    let cols: Vec<&Vec<f64>> = dataset.columns().values().collect();
    for (i, d) in dataset.dates().iter().enumerate() {
        let mut rec = vec![d.format("%Y-%m-%d").to_string()];
        rec.extend(cols.iter().map(|c| format_value(c[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Applies each column's transforms in order, replacing the column with one
/// whose name records the transforms (`log(BPI)`, `lag1(x)`, ...). Lags and
/// differences leave undefined leading values that [`crate::model::build_design`]
/// trims.
pub fn apply_transforms(dataset: &Dataset, spec: &ModelSpec) -> Result<Dataset> {
    for col in spec.transforms.keys() {
        dataset.column(col)?;
    }
    let mut columns: IndexMap<String, Vec<f64>> = IndexMap::with_capacity(dataset.columns().len());
    for (name, values) in dataset.columns() {
        let Some(transforms) = spec.transforms.get(name) else {
            columns.insert(name.clone(), values.clone());
            continue;
        };
        let mut label = name.clone();
        let mut v = values.clone();
        for &t in transforms {
            v = match t {
                Transform::Log => {
                    if let Some(i) = v.iter().position(|&x| x <= 0.0) {
                        return Err(Error::Domain(format!(
                            "log of non-positive value {} in `{name}` on {} (row {})",
                            v[i],
                            dataset.dates()[i],
                            i + 1
                        )));
                    }
                    v.iter().map(|x| x.ln()).collect()
                }
                Transform::Lag(k) => (0..v.len()).map(|i| if i < k { f64::NAN } else { v[i - k] }).collect(),
                Transform::Diff => (0..v.len()).map(|i| if i == 0 { f64::NAN } else { v[i] - v[i - 1] }).collect(),
            };
            label = t.label(&label);
        }
        if columns.contains_key(&label) {
            return Err(Error::InvalidArgument(format!("transformed column `{label}` already exists")));
        }
        columns.insert(label, v);
    }
    Dataset::with_undefined(dataset.dates().to_vec(), columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn schema(name: &str, fill: u32) -> ColumnSchema {
        ColumnSchema::new(name, name).with_fill_limit(fill).unwrap()
    }

    fn load_str(parts: &[(&str, Vec<ColumnSchema>)]) -> Result<Dataset> {
        let raws = parts
            .iter()
            .map(|(text, cols)| read_series(text.as_bytes(), "mem.csv", cols))
            .collect::<Result<Vec<_>>>()?;
        let schemas: Vec<&ColumnSchema> = parts.iter().flat_map(|(_, c)| c).collect();
        align(&raws, &schemas)
    }

    // 2015-01-09 is a Friday.
    const DAILY: &str = "date,btc\n2015-01-08,1\n2015-01-09,2\n2015-01-10,3\n2015-01-11,4\n2015-01-12,5\n2015-01-13,6\n";

    #[test]
    fn weekend_gap_is_filled_with_friday() {
        let market = "date,gold\n2015-01-08,10\n2015-01-09,11\n2015-01-12,12\n2015-01-13,13\n";
        let ds = load_str(&[(DAILY, vec![schema("btc", 0)]), (market, vec![schema("gold", 3)])]).unwrap();
        assert_eq!(ds.n(), 6);
        assert_eq!(ds.column("gold").unwrap(), &[10.0, 11.0, 11.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn gap_longer_than_limit_is_dropped() {
        let market = "date,gold\n2015-01-08,10\n2015-01-13,13\n";
        let ds = load_str(&[(DAILY, vec![schema("btc", 0)]), (market, vec![schema("gold", 3)])]).unwrap();
        assert_eq!(ds.dates(), &[d("2015-01-08"), d("2015-01-13")]);
        assert_eq!(ds.column("btc").unwrap(), &[1.0, 6.0]);
    }

    #[test]
    fn zero_limit_never_fills() {
        let market = "date,gold\n2015-01-08,10\n2015-01-09,11\n2015-01-12,12\n2015-01-13,13\n";
        let ds = load_str(&[(DAILY, vec![schema("btc", 0)]), (market, vec![schema("gold", 0)])]).unwrap();
        assert_eq!(ds.n(), 4);
    }

    #[test]
    fn leading_gap_cannot_be_filled() {
        let market = "date,gold\n2015-01-09,11\n2015-01-10,12\n";
        let ds = load_str(&[(DAILY, vec![schema("btc", 0)]), (market, vec![schema("gold", 3)])]).unwrap();
        assert_eq!(ds.dates()[0], d("2015-01-09"));
    }

    #[test]
    fn empty_cells_are_missing_and_fillable() {
        let text = "date,a\n2015-01-01,1\n2015-01-02,\n2015-01-03,3\n";
        let ds = load_str(&[(text, vec![schema("a", 1)])]).unwrap();
        assert_eq!(ds.column("a").unwrap(), &[1.0, 1.0, 3.0]);
    }

    #[test]
    fn parse_errors_are_located() {
        let text = "date,a\n2015-01-01,1\n2015-01-02,abc\n";
        match load_str(&[(text, vec![schema("a", 0)])]).unwrap_err() {
            Error::Parse { file, row, column, .. } => {
                assert_eq!((file.to_str().unwrap(), row, column.as_str()), ("mem.csv", 3, "a"));
            }
            e => panic!("unexpected {e:?}"),
        }
        let text = "date,a\n01/02/2015,1\n";
        assert!(matches!(
            load_str(&[(text, vec![schema("a", 0)])]).unwrap_err(),
            Error::Parse { row: 2, .. }
        ));
        let text = "date,b\n2015-01-01,1\n";
        assert!(matches!(
            load_str(&[(text, vec![schema("a", 0)])]).unwrap_err(),
            Error::Parse { row: 1, .. }
        ));
        let text = "date,a\n2015-01-02,1\n2015-01-01,2\n";
        assert!(matches!(
            load_str(&[(text, vec![schema("a", 0)])]).unwrap_err(),
            Error::Parse { row: 3, .. }
        ));
    }

    #[test]
    fn disjoint_sources_are_degenerate() {
        let a = "date,a\n2015-01-01,1\n";
        let b = "date,b\n2015-02-01,1\n";
        let err = load_str(&[(a, vec![schema("a", 0)]), (b, vec![schema("b", 0)])]).unwrap_err();
        assert!(matches!(err, Error::DegenerateSample(_)));
    }

    #[test]
    fn fill_limit_is_bounded() {
        assert!(ColumnSchema::new("a", "a").with_fill_limit(5).is_ok());
        assert!(ColumnSchema::new("a", "a").with_fill_limit(6).is_err());
    }

    #[test]
    fn write_then_read_is_identity() {
        let ds = load_str(&[(DAILY, vec![schema("btc", 0)])]).unwrap();
        let mut cols = ds.columns().clone();
        cols.insert("z".into(), vec![0.1, 1.0 / 3.0, -2.5e-12, 7e20, 0.0, -1.0]);
        let ds = Dataset::new(ds.dates().to_vec(), cols).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, ds);
    }

    fn dataset(cols: &[(&str, Vec<f64>)]) -> Dataset {
        let n = cols[0].1.len();
        let start = d("2015-01-01");
        let dates = (0..n).map(|i| start + chrono::Days::new(i as u64)).collect();
        Dataset::new(dates, cols.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()).unwrap()
    }

    #[test]
    fn log_of_ones_is_zero() {
        let ds = dataset(&[("y", vec![1.0; 4]), ("x", vec![1.0, 2.0, 3.0, 4.0])]);
        let spec = ModelSpec::new("y", vec!["x".into()], true).unwrap().with_transform("y", Transform::Log);
        let out = apply_transforms(&ds, &spec).unwrap();
        assert_eq!(out.column("log(y)").unwrap(), &[0.0; 4]);
        assert!(out.column("y").is_err());
        assert_eq!(out.column_names().collect::<Vec<_>>(), vec!["log(y)", "x"]);
    }

    #[test]
    fn lag_then_diff_loses_two_rows() {
        let n = 10;
        let ds = dataset(&[("y", (0..n).map(|i| i as f64).collect()), ("x", (0..n).map(|i| (i * i) as f64).collect())]);
        let spec = ModelSpec::new("y", vec!["x".into()], true)
            .unwrap()
            .with_transform("x", Transform::Lag(1))
            .with_transform("x", Transform::Diff);
        let out = apply_transforms(&ds, &spec).unwrap();
        let col = out.column("diff(lag1(x))").unwrap();
        assert_eq!(col.iter().filter(|v| v.is_finite()).count(), n - 2);
        assert_eq!(col[2], 1.0);
        let design = crate::model::build_design(&out, &spec).unwrap();
        assert_eq!(design.n(), n - 2);
    }

    #[test]
    fn log_of_zero_names_the_row() {
        let ds = dataset(&[("y", vec![1.0, 0.0, 2.0]), ("x", vec![1.0, 2.0, 3.0])]);
        let spec = ModelSpec::new("y", vec!["x".into()], true).unwrap().with_transform("y", Transform::Log);
        match apply_transforms(&ds, &spec).unwrap_err() {
            Error::Domain(msg) => assert!(msg.contains("2015-01-02") && msg.contains("row 2"), "{msg}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn transform_of_absent_column_is_named() {
        let ds = dataset(&[("y", vec![1.0, 2.0]), ("x", vec![1.0, 2.0])]);
        let spec = ModelSpec::new("y", vec!["x".into()], true).unwrap().with_transform("Z", Transform::Log);
        assert!(matches!(apply_transforms(&ds, &spec).unwrap_err(), Error::MissingColumn(c) if c == "Z"));
    }

    #[test]
    fn schema_logs_become_spec_transforms() {
        let src = SourceFile::new("a.csv", vec![ColumnSchema::new("y", "Y").with_log(), ColumnSchema::new("x", "X")]);
        let spec = schema_transforms(ModelSpec::new("y", vec!["x".into()], true).unwrap(), &[src]);
        assert_eq!(spec.resolved_name("y"), "log(y)");
        assert_eq!(spec.resolved_name("x"), "x");
    }
}
