//! Dataset readers, the JSON result document, and the embedded fixture.
//!
//! `RawCounts` input is whitespace-separated nonnegative integers; blank
//! lines and lines starting with `#` are ignored. `FrequencyCSV` input has
//! the header `value,count` followed by rows with strictly increasing values
//! and positive counts.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::apma::{Branch, FitConfig, FitResult};
use crate::error::{NbError, Result};
use crate::gof::GofResult;
use crate::sample::{CountSample, MAX_OBSERVATION};

pub const SCHEMA_VERSION: &str = "1";

/// The horse-kick table `{0: 144, 1: 91, 2: 32, 3: 11, 4: 2}`.
pub const PRUSSIAN_CSV: &str = include_str!("../fixtures/prussian.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    RawCounts,
    FrequencyCSV,
}

impl std::str::FromStr for DatasetFormat {
    type Err = NbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(DatasetFormat::RawCounts),
            "freq" => Ok(DatasetFormat::FrequencyCSV),
            other => Err(NbError::InvalidParameter(format!(
                "unknown format `{other}` (expected raw or freq)"
            ))),
        }
    }
}

fn parse_count(token: &str, line: usize, what: &str) -> Result<u64> {
    let bad = |message: String| NbError::Parse {
        line,
        token: token.to_string(),
        message,
    };
    let v: u64 = token
        .parse()
        .map_err(|_| bad(format!("expected a nonnegative integer {what}")))?;
    if v > MAX_OBSERVATION {
        return Err(bad(format!("{what} exceeds 2^53")));
    }
    Ok(v)
}

/// Reads and summarizes a dataset.
pub fn read_dataset<R: BufRead>(reader: R, format: DatasetFormat) -> Result<CountSample> {
    match format {
        DatasetFormat::RawCounts => read_raw(reader),
        DatasetFormat::FrequencyCSV => read_freq(reader),
    }
}

pub fn read_dataset_path(path: &Path, format: DatasetFormat) -> Result<CountSample> {
    let file = std::fs::File::open(path)
        .map_err(|e| NbError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(file), format)
}

fn read_raw<R: BufRead>(reader: R) -> Result<CountSample> {
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        for token in trimmed.split_whitespace() {
            values.push(parse_count(token, i + 1, "observation")?);
        }
    }
    if values.is_empty() {
        return Err(NbError::EmptySample);
    }
    CountSample::from_counts(&values)
}

fn read_freq<R: BufRead>(reader: R) -> Result<CountSample> {
    let mut header_seen = false;
    let mut pairs: Vec<(u64, u64)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols != ["value", "count"] {
                return Err(NbError::Parse {
                    line: lineno,
                    token: trimmed.to_string(),
                    message: "expected header `value,count`".into(),
                });
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(NbError::Parse {
                line: lineno,
                token: trimmed.to_string(),
                message: "expected two columns".into(),
            });
        }
        let value = parse_count(cols[0], lineno, "value")?;
        let count = parse_count(cols[1], lineno, "count")?;
        if count == 0 {
            return Err(NbError::Parse {
                line: lineno,
                token: cols[1].to_string(),
                message: "count must be at least 1".into(),
            });
        }
        if let Some(&(prev, _)) = pairs.last() {
            if value <= prev {
                return Err(NbError::Parse {
                    line: lineno,
                    token: cols[0].to_string(),
                    message: "values must be strictly increasing".into(),
                });
            }
        }
        pairs.push((value, count));
    }
    if pairs.is_empty() {
        return Err(NbError::EmptySample);
    }
    CountSample::from_frequencies(pairs)
}

/// Frequency-table CSV for a sample.
pub fn write_frequency_csv(s: &CountSample) -> String {
    let mut out = String::from("value,count\n");
    for (y, c) in s.freq() {
        out.push_str(&format!("{y},{c}\n"));
    }
    out
}

/// The embedded prussian fixture.
pub fn prussian() -> CountSample {
    read_dataset(PRUSSIAN_CSV.as_bytes(), DatasetFormat::FrequencyCSV).expect("fixture parses")
}

/// A real number that serializes non-finite values as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            F(f64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::F(v) => Ok(Num(v)),
            Repr::S(s) => match s.as_str() {
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                "nan" => Ok(Num(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad number `{other}`"))),
            },
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub n: u64,
    pub mean: Num,
    pub var_biased: Num,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_unbiased: Option<Num>,
    pub max: u64,
    pub distinct: usize,
}

impl From<&CountSample> for InputSummary {
    fn from(s: &CountSample) -> Self {
        Self {
            n: s.n(),
            mean: Num(s.mean()),
            var_biased: Num(s.var_biased()),
            var_unbiased: s.var_unbiased().map(Num),
            max: s.max(),
            distinct: s.distinct(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Num>,
    pub p: Num,
    pub mu: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofBlock {
    pub statistic: Num,
    pub critical: Num,
    pub p_value: Num,
    pub reject: bool,
    pub boot_reps: usize,
    pub level: Num,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: String,
    pub input: InputSummary,
    /// `nb`, `enb` or `poisson`.
    pub model: String,
    pub estimates: Estimates,
    pub loglik: Num,
    pub at_boundary: bool,
    pub branch: Branch,
    pub converged: bool,
    pub iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_nu: Option<Num>,
    pub config: FitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gof: Option<GofBlock>,
}

impl ResultDocument {
    pub fn from_fit(s: &CountSample, model: &str, fit: &FitResult, cfg: &FitConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            input: s.into(),
            model: model.into(),
            estimates: Estimates {
                nu: fit.nu_hat().map(Num),
                p: Num(fit.p_hat()),
                mu: Num(fit.mean_hat()),
            },
            loglik: Num(fit.loglik),
            at_boundary: fit.at_boundary,
            branch: fit.branch,
            converged: fit.converged,
            iterations: fit.iterations,
            init_nu: fit.init_nu.map(Num),
            config: *cfg,
            gof: None,
        }
    }

    /// Poisson fit document; `λ̂` is reported as μ with p = 1.
    pub fn from_poisson(s: &CountSample, lambda: f64, loglik: f64, cfg: &FitConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            input: s.into(),
            model: "poisson".into(),
            estimates: Estimates {
                nu: None,
                p: Num(1.0),
                mu: Num(lambda),
            },
            loglik: Num(loglik),
            at_boundary: false,
            branch: if s.is_all_zero() {
                Branch::AllZero
            } else {
                Branch::PoissonBranch
            },
            converged: true,
            iterations: 0,
            init_nu: None,
            config: *cfg,
            gof: None,
        }
    }

    pub fn with_gof(mut self, g: &GofResult, level: f64) -> Self {
        self.gof = Some(GofBlock {
            statistic: Num(g.statistic),
            critical: Num(g.critical),
            p_value: Num(g.p_value),
            reject: g.reject,
            boot_reps: g.boot_stats.len(),
            level: Num(level),
            seed: g.seed,
        });
        self
    }
}

/// Canonical JSON text: fixed key order, trailing newline.
pub fn write_result(doc: &ResultDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("document serializes");
    s.push('\n');
    s
}

pub fn parse_result(text: &str) -> Result<ResultDocument> {
    serde_json::from_str(text).map_err(|e| NbError::Parse {
        line: e.line(),
        token: String::new(),
        message: e.to_string(),
    })
}
