//! Report output.
//!
//! JSON keeps the struct's field order and writes every float with 17
//! significant digits, so re-parsing recovers each value exactly. The CSV
//! summary is one header row and one data row with the same formatting.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    CsvSummary,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv-summary" => Ok(ReportFormat::CsvSummary),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format `{other}` (expected json or csv-summary)"
            ))),
        }
    }
}

/// 17 significant digits; non-finite values have no JSON form and become
/// `null`.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn number(n: &Number) -> String {
    if n.is_f64() {
        format_number(n.as_f64().expect("f64 number"))
    } else {
        n.to_string()
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = "  ".repeat(indent + 1);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&number(n)),
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad);
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            let _ = write!(out, "{}]", "  ".repeat(indent));
        }
        Value::Object(map) => write_object(out, map, indent),
    }
}

fn write_object(out: &mut String, map: &Map<String, Value>, indent: usize) {
    if map.is_empty() {
        out.push_str("{}");
        return;
    }
    let pad = "  ".repeat(indent + 1);
    out.push_str("{\n");
    for (i, (k, v)) in map.iter().enumerate() {
        let _ = write!(out, "{pad}{}: ", serde_json::to_string(k).expect("keys serialize"));
        write_value(out, v, indent + 1);
        out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
    }
    let _ = write!(out, "{}}}", "  ".repeat(indent));
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("report does not parse: {e}")))
}

fn csv_cell(v: &Value) -> Result<String> {
    Ok(match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => number(n),
        Value::String(s) => s.clone(),
        _ => return Err(Error::InvalidParameter("nested values have no csv-summary form".into())),
    })
}

/// Header row of keys plus one data row. Only flat records are accepted.
pub fn to_csv_summary<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let Value::Object(map) = v else {
        return Err(Error::InvalidParameter("csv-summary needs a record".into()));
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(map.keys())?;
    w.write_record(map.values().map(csv_cell).collect::<Result<Vec<_>>>()?)?;
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render<T: Serialize>(value: &T, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => to_json(value),
        ReportFormat::CsvSummary => to_csv_summary(value),
    }
}

pub fn emit_report<T: Serialize, W: Write>(value: &T, format: ReportFormat, mut writer: W) -> Result<()> {
    writer.write_all(render(value, format)?.as_bytes())?;
    writer.flush()?;
    Ok(())
}
