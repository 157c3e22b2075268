//! Auction records and the dataset container, with log-file I/O.
//!
//! A dataset is a flat sequence of candidate-ad records in file order (the
//! "pooled" view) plus a grouping of those records into impression lists.
//! Groups are ordered by the first appearance of their impression id and
//! each group lists its members in file order.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading, validating or writing auction logs.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: parse error: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: invalid {field}: {message}")]
    Invalid {
        line: u64,
        field: &'static str,
        message: String,
    },
    #[error("dataset has no records")]
    Empty,
}

/// On-disk log format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Picks a format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format '{other}' (expected csv or jsonl)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Format::Csv => f.write_str("csv"),
            Format::Jsonl => f.write_str("jsonl"),
        }
    }
}

/// One candidate ad in one auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub impression_id: String,
    pub ectr: f64,
    pub bid: f64,
    pub click: u8,
    /// Revenue label, always `click * bid`.
    pub y: f64,
}

impl AuctionRecord {
    /// Builds a validated record. `y` is derived from `click` and `bid`.
    pub fn new(
        impression_id: impl Into<String>,
        ectr: f64,
        bid: f64,
        click: u8,
    ) -> Result<Self, (&'static str, String)> {
        if !(ectr > 0.0 && ectr <= 1.0) {
            return Err(("ectr", format!("ectr out of (0,1]: {ectr}")));
        }
        if !(bid > 0.0 && bid.is_finite()) {
            return Err(("bid", format!("bid must be finite and > 0: {bid}")));
        }
        if click > 1 {
            return Err(("click", format!("click must be 0 or 1: {click}")));
        }
        Ok(AuctionRecord {
            impression_id: impression_id.into(),
            ectr,
            bid,
            click,
            y: f64::from(click) * bid,
        })
    }

    pub fn clicked(&self) -> bool {
        self.click == 1
    }
}

/// Records of one auction, referenced by position in the pooled sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpressionList {
    pub impression_id: String,
    pub members: Vec<usize>,
}

/// Immutable collection of auction records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<AuctionRecord>,
    impressions: Vec<ImpressionList>,
}

impl Dataset {
    /// Groups `records` by impression id, keeping file order.
    pub fn from_records(records: Vec<AuctionRecord>) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut impressions: Vec<ImpressionList> = Vec::new();
        for (pos, rec) in records.iter().enumerate() {
            let slot = *index.entry(rec.impression_id.as_str()).or_insert_with(|| {
                impressions.push(ImpressionList {
                    impression_id: rec.impression_id.clone(),
                    members: Vec::new(),
                });
                impressions.len() - 1
            });
            impressions[slot].members.push(pos);
        }
        Ok(Dataset { records, impressions })
    }

    /// Pooled view in file order.
    pub fn records(&self) -> &[AuctionRecord] {
        &self.records
    }

    pub fn impressions(&self) -> &[ImpressionList] {
        &self.impressions
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one impression list, in file order.
    pub fn impression_records<'a>(&'a self, list: &'a ImpressionList) -> impl Iterator<Item = &'a AuctionRecord> + 'a {
        list.members.iter().map(move |&i| &self.records[i])
    }

    /// Subset of impressions (by index into `impressions()`), members kept in order.
    pub fn select_impressions(&self, which: &[usize]) -> Result<Dataset, DataError> {
        let records = which
            .iter()
            .flat_map(|&g| self.impressions[g].members.iter())
            .map(|&i| self.records[i].clone())
            .collect();
        Dataset::from_records(records)
    }

    pub fn n_clicks(&self) -> usize {
        self.records.iter().filter(|r| r.clicked()).count()
    }
}

#[derive(Deserialize)]
struct RawRow {
    #[serde(default)]
    impression_id: Option<serde_json::Value>,
    ectr: f64,
    bid: f64,
    click: serde_json::Value,
}

#[derive(Serialize)]
struct OutRow<'a> {
    impression_id: &'a str,
    ectr: f64,
    bid: f64,
    click: u8,
}

fn parse_click(v: &serde_json::Value, line: u64) -> Result<u8, DataError> {
    let invalid = || DataError::Invalid {
        line,
        field: "click",
        message: format!("click must be 0 or 1: {v}"),
    };
    match v {
        serde_json::Value::Number(n) => match n.as_f64() {
            Some(0.0) => Ok(0),
            Some(1.0) => Ok(1),
            _ => Err(invalid()),
        },
        serde_json::Value::Bool(b) => Ok(u8::from(*b)),
        _ => Err(invalid()),
    }
}

fn id_from_json(v: Option<serde_json::Value>) -> String {
    match v {
        None | Some(serde_json::Value::Null) => String::new(),
        Some(serde_json::Value::String(s)) => s,
        Some(other) => other.to_string(),
    }
}

fn validated(id: String, ectr: f64, bid: f64, click: u8, line: u64) -> Result<AuctionRecord, DataError> {
    AuctionRecord::new(id, ectr, bid, click).map_err(|(field, message)| DataError::Invalid { line, field, message })
}

fn parse_csv_field<T: FromStr>(field: &str, name: &'static str, line: u64) -> Result<T, DataError>
where
    T::Err: fmt::Display,
{
    field.trim().parse::<T>().map_err(|e| DataError::Parse {
        line,
        message: format!("{name}: '{field}': {e}"),
    })
}

fn load_csv(path: &Path) -> Result<Vec<AuctionRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| DataError::Parse {
        line: 1,
        message: format!("missing required column '{name}'"),
    };
    let id_col = col("impression_id");
    let ectr_col = col("ectr").ok_or_else(|| missing("ectr"))?;
    let bid_col = col("bid").ok_or_else(|| missing("bid"))?;
    let click_col = col("click").ok_or_else(|| missing("click"))?;

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let get = |c: usize| row.get(c).unwrap_or("");
        let id = id_col.map(|c| get(c).to_string()).unwrap_or_default();
        let ectr: f64 = parse_csv_field(get(ectr_col), "ectr", line)?;
        let bid: f64 = parse_csv_field(get(bid_col), "bid", line)?;
        let click_raw: f64 = parse_csv_field(get(click_col), "click", line)?;
        let click = if click_raw == 0.0 {
            0
        } else if click_raw == 1.0 {
            1
        } else {
            return Err(DataError::Invalid {
                line,
                field: "click",
                message: format!("click must be 0 or 1: {}", get(click_col)),
            });
        };
        out.push(validated(id, ectr, bid, click, line)?);
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        other => DataError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn load_jsonl(path: &Path) -> Result<Vec<AuctionRecord>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRow = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let click = parse_click(&raw.click, line_no)?;
        out.push(validated(
            id_from_json(raw.impression_id),
            raw.ectr,
            raw.bid,
            click,
            line_no,
        )?);
    }
    Ok(out)
}

/// Reads and validates an auction log. Any `y` column is ignored.
pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let records = match format {
        Format::Csv => load_csv(path)?,
        Format::Jsonl => load_jsonl(path)?,
    };
    Dataset::from_records(records)
}

/// Writes the pooled records in order. Floats use the shortest
/// representation that parses back to the same value.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>, format: Format) -> Result<(), DataError> {
    if ds.is_empty() {
        return Err(DataError::Empty);
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(ds, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(ds: &Dataset, w: &mut W, format: Format) -> Result<(), DataError> {
    match format {
        Format::Csv => {
            writeln!(w, "impression_id,ectr,bid,click")?;
            for r in ds.records() {
                writeln!(w, "{},{},{},{}", csv_quote(&r.impression_id), r.ectr, r.bid, r.click)?;
            }
        }
        Format::Jsonl => {
            for r in ds.records() {
                let row = OutRow {
                    impression_id: &r.impression_id,
                    ectr: r.ectr,
                    bid: r.bid,
                    click: r.click,
                };
                serde_json::to_writer(&mut *w, &row).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
