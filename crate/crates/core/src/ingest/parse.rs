use std::io::Read;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{EnergyTransaction, GeoPoint};
use crate::{Error, Result};

/// Maps transaction fields onto header names of the source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub evse_id: String,
    pub start: String,
    pub end: String,
    pub energy: String,
    pub model: Option<String>,
    pub lat: Option<String>,
    pub lon: Option<String>,
    pub nominal_power: Option<String>,
    pub delimiter: char,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            evse_id: "evse_id".into(),
            start: "start".into(),
            end: "end".into(),
            energy: "energy_kwh".into(),
            model: Some("model".into()),
            lat: Some("lat".into()),
            lon: Some("lon".into()),
            nominal_power: Some("nominal_power_kw".into()),
            delimiter: ',',
        }
    }
}

/// A source row that could not be turned into a transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub transactions: Vec<EnergyTransaction>,
    pub rejects: Vec<Reject>,
}

struct Indices {
    evse_id: usize,
    start: usize,
    end: usize,
    energy: usize,
    model: Option<usize>,
    lat: Option<usize>,
    lon: Option<usize>,
    nominal_power: Option<usize>,
}

/// Parse delimiter-separated transactions with a mandatory header row.
///
/// Mandatory columns are the EVSE id, start, end and energy; the optional
/// ones fall back to defaults when the header does not contain them. Rows
/// that cannot be parsed end up in [`ParseOutcome::rejects`].
pub fn parse_transactions<R: Read>(source: R, schema: &ColumnMap) -> Result<ParseOutcome> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::config("delimiter must be an ASCII character"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(ParseOutcome::default());
    }

    let find = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        find(name).ok_or_else(|| Error::config(format!("missing mandatory column '{name}'")))
    };
    let optional = |name: &Option<String>| name.as_deref().and_then(find);
    let idx = Indices {
        evse_id: required(&schema.evse_id)?,
        start: required(&schema.start)?,
        end: required(&schema.end)?,
        energy: required(&schema.energy)?,
        model: optional(&schema.model),
        lat: optional(&schema.lat),
        lon: optional(&schema.lon),
        nominal_power: optional(&schema.nominal_power),
    };

    let mut out = ParseOutcome::default();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject { row, reason: format!("malformed row: {e}") });
                continue;
            }
        };
        match parse_row(&record, &idx) {
            Ok(tx) => out.transactions.push(tx),
            Err(reason) => out.rejects.push(Reject { row, reason }),
        }
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord, idx: &Indices) -> std::result::Result<EnergyTransaction, String> {
    let field = |i: usize| record.get(i).unwrap_or("");
    let evse_id = field(idx.evse_id);
    if evse_id.is_empty() {
        return Err("missing evse id".into());
    }
    let start = parse_timestamp(field(idx.start)).ok_or("unparseable start timestamp")?;
    let end = parse_timestamp(field(idx.end)).ok_or("unparseable end timestamp")?;
    let energy = parse_finite(field(idx.energy)).ok_or("non-numeric energy")?;

    let lat = match idx.lat {
        Some(i) => parse_finite(field(i)).ok_or("non-numeric latitude")?,
        None => 0.0,
    };
    let lon = match idx.lon {
        Some(i) => parse_finite(field(i)).ok_or("non-numeric longitude")?,
        None => 0.0,
    };
    let nominal = match idx.nominal_power.map(field) {
        Some(s) if !s.is_empty() => match parse_finite(s) {
            Some(v) if v > 0.0 => Some(v),
            _ => return Err("invalid nominal power".into()),
        },
        _ => None,
    };
    let model = idx
        .model
        .map(field)
        .filter(|s| !s.is_empty())
        .unwrap_or("unknown");

    let tx = EnergyTransaction::new(evse_id, start, end, energy)
        .map_err(|_| "end not after start".to_string())?;
    Ok(tx
        .with_model(model)
        .with_location(GeoPoint::new(lat, lon))
        .with_nominal_power(nominal))
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

const NAIVE_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
];

/// Accepts RFC 3339 or naive ISO-like timestamps (taken as UTC).
pub(crate) fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    NAIVE_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}
