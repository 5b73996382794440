//! Run manifests: one `key = value` setting per line.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the manifest's directory. See [`MANIFEST_HELP`] for the
//! keys.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::bayes::McmcConfig;
use crate::error::{Error, Result};
use crate::inference::BootstrapConfig;
use crate::model::{InstrumentBlock, ModelSpec, QuantileLevel, Transform};
use crate::pipeline::data::{schema_transforms, ColumnSchema, SourceFile};
use crate::pipeline::report::ReportFormat;
use crate::pipeline::study::{EstimatorSet, StudyConfig};
use crate::stats::derive_seed;

pub const MANIFEST_HELP: &str = "\
Run manifest keys (one `key = value` per line, `#` starts a comment line):
  data = PATH                        one CSV whose columns are used as-is
  source.ALIAS = PATH                a CSV file referenced by column entries
  column.NAME = ALIAS:HEADER [fill=N] [log]
                                     take HEADER from source ALIAS as NAME,
                                     forward-filling gaps up to N days (0-5),
                                     modelled in logs when `log` is given
  response = NAME                    (required)
  regressors = NAME, NAME, ...       (required)
  intercept = true|false             default true
  transform.NAME = T T ...           transforms applied in order: log, lag(k), diff
  endogenous = NAME                  endogenous regressor for 2sls / bqr_2sls
  instruments = NAME, ...            extra excluded instruments
  lagged_response_instrument = true|false
                                     add the lag-1 response as an instrument
                                     (default true when `endogenous` is set)
  taus = T, T, ...                   default 0.1, 0.2, ..., 0.9
  estimators = KEY, ...              ols, 2sls, qr, bqr, bqr_2sls; default ols, bqr
  draws = N                          Gibbs iterations including burn-in (default 11000)
  burn_in = N                        default 1000
  thin = N                           default 1
  seed = N                           base seed for every random stream (default 0)
  bootstrap_replications = N         default 200, at least 100
  slope_pairs = LO:HI, ...           quantile pairs for slope-equality tests
  interval_mass = P                  default 0.95
  format = text|csv|markdown         default text
  output = PATH                      report path (default standard output)
  chains_dir = PATH                  write each posterior chain as CSV here
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    /// A single file loaded column-for-column.
    Table(PathBuf),
    Sources(Vec<SourceFile>),
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub data: DataSource,
    pub spec: ModelSpec,
    pub taus: Vec<QuantileLevel>,
    pub estimators: EstimatorSet,
    pub study: StudyConfig,
    pub format: ReportFormat,
    pub output: Option<PathBuf>,
    pub chains_dir: Option<PathBuf>,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(e).context(format!("reading {}", path.display())))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

struct Entry {
    line: usize,
    value: String,
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Manifest> {
    let mut entries: IndexMap<String, Entry> = IndexMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| manifest_error(line, "expected `key = value`"))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(manifest_error(line, "empty key"));
        }
        if !known_key(&key) {
            return Err(manifest_error(line, format!("unknown key `{key}`")));
        }
        if let Some(prev) = entries.get(&key) {
            return Err(manifest_error(line, format!("`{key}` already set on line {}", prev.line)));
        }
        entries.insert(
            key,
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    Parser { entries, base_dir }.build()
}

fn manifest_error(line: usize, message: impl Into<String>) -> Error {
    Error::Manifest {
        line,
        message: message.into(),
    }
}

const SCALAR_KEYS: [&str; 19] = [
    "data",
    "response",
    "regressors",
    "intercept",
    "endogenous",
    "instruments",
    "lagged_response_instrument",
    "taus",
    "estimators",
    "draws",
    "burn_in",
    "thin",
    "seed",
    "bootstrap_replications",
    "slope_pairs",
    "interval_mass",
    "format",
    "output",
    "chains_dir",
];

fn known_key(key: &str) -> bool {
    if SCALAR_KEYS.contains(&key) {
        return true;
    }
    ["source.", "column.", "transform."]
        .iter()
        .any(|p| key.strip_prefix(p).is_some_and(|rest| !rest.is_empty()))
}

struct Parser<'a> {
    entries: IndexMap<String, Entry>,
    base_dir: &'a Path,
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

impl Parser<'_> {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn line(&self, key: &str) -> usize {
        self.get(key).map_or(0, |e| e.line)
    }

    fn required(&self, key: &str) -> Result<&Entry> {
        self.get(key)
            .ok_or_else(|| manifest_error(0, format!("missing required key `{key}`")))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse()
                .map_err(|_| manifest_error(e.line, format!("invalid value `{}` for `{key}`", e.value))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key).map(|e| (e.line, e.value.as_str())) {
            None => Ok(default),
            Some((_, "true" | "yes" | "1")) => Ok(true),
            Some((_, "false" | "no" | "0")) => Ok(false),
            Some((line, v)) => Err(manifest_error(line, format!("`{key}` must be true or false, got `{v}`"))),
        }
    }

    fn path(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn at<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| manifest_error(self.line(key), e.to_string()))
    }

    fn quantile(&self, key: &str, s: &str) -> Result<QuantileLevel> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| manifest_error(self.line(key), format!("`{s}` is not a quantile level")))?;
        self.at(key, QuantileLevel::new(v))
    }

    fn build(self) -> Result<Manifest> {
        let data = self.data_source()?;
        let mut spec = self.spec()?;
        if let DataSource::Sources(sources) = &data {
            spec = schema_transforms(spec, sources);
        }

        let taus = match self.get("taus") {
            None => QuantileLevel::decile_grid(),
            Some(e) => list(&e.value)
                .iter()
                .map(|s| self.quantile("taus", s))
                .collect::<Result<Vec<_>>>()?,
        };
        let estimators = match self.get("estimators") {
            None => "ols,bqr".parse()?,
            Some(e) => self.at("estimators", e.value.parse::<EstimatorSet>())?,
        };
        if estimators.needs_instruments() && spec.instrument_block.is_none() {
            return Err(manifest_error(
                self.line("estimators"),
                "instrumented estimators need `endogenous`",
            ));
        }

        let seed: u64 = self.parsed("seed", 0)?;
        let defaults = McmcConfig::default();
        let mcmc = McmcConfig::new(
            self.parsed("draws", defaults.draws)?,
            self.parsed("burn_in", defaults.burn_in)?,
            self.parsed("thin", defaults.thin)?,
            seed,
        )
        .map_err(|e| manifest_error(self.line("draws").max(self.line("burn_in")), e.to_string()))?;
        let bootstrap = self.at(
            "bootstrap_replications",
            BootstrapConfig::new(
                self.parsed("bootstrap_replications", BootstrapConfig::default().replications)?,
                derive_seed(seed, 1),
            ),
        )?;
        let slope_pairs = match self.get("slope_pairs") {
            None => Vec::new(),
            Some(e) => list(&e.value)
                .iter()
                .map(|pair| {
                    let (lo, hi) = pair
                        .split_once(':')
                        .ok_or_else(|| manifest_error(e.line, format!("slope pair `{pair}` is not LO:HI")))?;
                    let (lo, hi) = (self.quantile("slope_pairs", lo)?, self.quantile("slope_pairs", hi)?);
                    if !(lo < hi) {
                        return Err(manifest_error(e.line, format!("slope pair `{pair}` is not increasing")));
                    }
                    Ok((lo, hi))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let interval_mass: f64 = self.parsed("interval_mass", 0.95)?;
        if !(interval_mass > 0.0 && interval_mass < 1.0) {
            return Err(manifest_error(self.line("interval_mass"), "interval_mass must lie in (0, 1)"));
        }
        let format = match self.get("format") {
            None => ReportFormat::Text,
            Some(e) => self.at("format", e.value.parse())?,
        };

        Ok(Manifest {
            data,
            spec,
            taus,
            estimators,
            study: StudyConfig {
                mcmc,
                prior: None,
                bootstrap,
                slope_pairs,
                interval_mass,
            },
            format,
            output: self.get("output").map(|e| self.path(&e.value)),
            chains_dir: self.get("chains_dir").map(|e| self.path(&e.value)),
        })
    }

    fn data_source(&self) -> Result<DataSource> {
        let mut sources: IndexMap<String, (usize, SourceFile)> = IndexMap::new();
        for (key, e) in &self.entries {
            if let Some(alias) = key.strip_prefix("source.") {
                sources.insert(alias.to_string(), (e.line, SourceFile::new(self.path(&e.value), Vec::new())));
            }
        }
        let mut names = HashSet::new();
        for (key, e) in &self.entries {
            let Some(name) = key.strip_prefix("column.") else { continue };
            let mut parts = e.value.split_whitespace();
            let target = parts.next().unwrap_or("");
            let (alias, header) = target
                .split_once(':')
                .ok_or_else(|| manifest_error(e.line, format!("expected ALIAS:HEADER, got `{target}`")))?;
            let mut schema = ColumnSchema::new(name, header);
            for opt in parts {
                if opt == "log" {
                    schema = schema.with_log();
                } else if let Some(n) = opt.strip_prefix("fill=") {
                    let days: u32 = n
                        .parse()
                        .map_err(|_| manifest_error(e.line, format!("fill limit `{n}` is not a number")))?;
                    schema = schema.with_fill_limit(days).map_err(|err| manifest_error(e.line, err.to_string()))?;
                } else {
                    return Err(manifest_error(e.line, format!("unknown column option `{opt}`")));
                }
            }
            if !names.insert(name.to_string()) {
                return Err(manifest_error(e.line, format!("column `{name}` defined twice")));
            }
            let (_, source) = sources
                .get_mut(alias)
                .ok_or_else(|| manifest_error(e.line, format!("unknown source `{alias}`")))?;
            source.columns.push(schema);
        }

        match self.get("data") {
            Some(e) if !sources.is_empty() => Err(manifest_error(e.line, "`data` cannot be combined with `source.*`")),
            Some(e) => Ok(DataSource::Table(self.path(&e.value))),
            None if sources.is_empty() => Err(manifest_error(0, "no data: set `data` or `source.*` with `column.*`")),
            None => {
                if let Some((line, _)) = sources.values().find(|(_, s)| s.columns.is_empty()) {
                    return Err(manifest_error(*line, "source has no columns"));
                }
                Ok(DataSource::Sources(sources.into_values().map(|(_, s)| s).collect()))
            }
        }
    }

    fn spec(&self) -> Result<ModelSpec> {
        let response = self.required("response")?.value.clone();
        let regressors = list(&self.required("regressors")?.value);
        let intercept = self.flag("intercept", true)?;
        let mut spec = ModelSpec {
            response,
            regressors,
            intercept,
            transforms: IndexMap::new(),
            instrument_block: None,
        };
        for (key, e) in &self.entries {
            let Some(col) = key.strip_prefix("transform.") else { continue };
            for t in e.value.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()) {
                let t: Transform = t.parse().map_err(|err: Error| manifest_error(e.line, err.to_string()))?;
                spec = spec.with_transform(col, t);
            }
        }
        if let Some(e) = self.get("endogenous") {
            spec.instrument_block = Some(InstrumentBlock {
                endogenous: e.value.clone(),
                instruments: self.get("instruments").map(|i| list(&i.value)).unwrap_or_default(),
                lagged_response: self.flag("lagged_response_instrument", true)?,
            });
        } else if let Some(key) = ["instruments", "lagged_response_instrument"]
            .into_iter()
            .find(|k| self.get(k).is_some())
        {
            return Err(manifest_error(self.line(key), format!("`{key}` requires `endogenous`")));
        }
        spec.validate()
            .map_err(|e| manifest_error(self.line("regressors").max(self.line("endogenous")), e.to_string()))?;
        Ok(spec)
    }
}
