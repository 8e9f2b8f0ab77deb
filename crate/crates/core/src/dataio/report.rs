use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::MetricsReport;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A benchmark report with the dataset id and the resolved configuration
/// that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub dataset: String,
    pub config: serde_json::Value,
    pub report: MetricsReport,
}

impl ReportDocument {
    pub fn new(dataset: impl Into<String>, config: serde_json::Value, report: MetricsReport) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            dataset: dataset.into(),
            config,
            report,
        }
    }
}

pub fn write_report(doc: &ReportDocument, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    let text = fs::read_to_string(path)?;
    parse_report(&text)
}

pub fn parse_report(text: &str) -> Result<ReportDocument> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(REPORT_SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(Error::SchemaVersionMismatch(format!(
                "version {v}, expected {REPORT_SCHEMA_VERSION}"
            )))
        }
        None => return Err(Error::SchemaVersionMismatch("missing schema_version".into())),
    }
    serde_json::from_value(value).map_err(|e| Error::SchemaVersionMismatch(e.to_string()))
}
