//! Output plumbing: provenance blocks, format rendering, value formatting.
//!
//! Every subcommand's stdout embeds a provenance block (input digest,
//! canonical flags, seed, tool version) so that identical inputs and flags
//! are recognizable as such; none of the fields depend on time or
//! environment, which keeps output bytes stable across reruns.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub input_sha256: Option<String>,
    pub flags: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(
        command: &'static str,
        input: Option<&[u8]>,
        flags: String,
        seed: Option<u64>,
    ) -> Self {
        Provenance {
            tool: "balmatch",
            version: env!("CARGO_PKG_VERSION"),
            command,
            input_sha256: input.map(|bytes| hex::encode(Sha256::digest(bytes))),
            flags,
            seed,
        }
    }

    fn comment_lines(&self) -> String {
        let mut out = format!("# {} v{} {}\n", self.tool, self.version, self.command);
        if let Some(digest) = &self.input_sha256 {
            out.push_str(&format!("# input sha256: {digest}\n"));
        }
        out.push_str(&format!("# flags: {}\n", self.flags));
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed: {seed}\n"));
        }
        out
    }
}

/// Flattens a JSON report into `key,value` rows (depth-first, dotted keys).
fn flatten_csv(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_csv(&key, v, rows);
            }
        }
        Value::Array(items) => {
            rows.push((format!("{prefix}.len"), items.len().to_string()));
            for (i, v) in items.iter().enumerate() {
                flatten_csv(&format!("{prefix}.{i}"), v, rows);
            }
        }
        other => rows.push((prefix.to_string(), render_scalar(other))),
    }
}

fn render_scalar(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Renders one report in the requested format. `report` must serialize to a
/// JSON object; `table` is the human rendering used by the table format.
pub fn render<R: Serialize>(
    format: OutputFormat,
    provenance: &Provenance,
    report: &R,
    table: &str,
) -> String {
    match format {
        OutputFormat::Json => {
            let doc = serde_json::json!({
                "provenance": provenance,
                "report": serde_json::to_value(report).expect("report serializes"),
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
            text.push('\n');
            text
        }
        OutputFormat::Csv => {
            let mut out = provenance.comment_lines();
            out.push_str("key,value\n");
            let value = serde_json::to_value(report).expect("report serializes");
            let mut rows = Vec::new();
            flatten_csv("", &value, &mut rows);
            for (k, v) in rows {
                out.push_str(&format!("{k},{v}\n"));
            }
            out
        }
        OutputFormat::Table => {
            let mut out = provenance.comment_lines();
            out.push_str(table);
            if !table.ends_with('\n') {
                out.push('\n');
            }
            out
        }
    }
}

/// Paper-style percentage with one decimal place.
pub fn percent(rate: f64) -> String {
    format!("{:.1}%", rate * 100.0)
}

/// Paper-style p-value: four decimals, `<0.0001` below that resolution.
pub fn p_value(p: f64) -> String {
    if p < 0.0001 {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

/// Fixed-width two-column table: rows of (label, value).
pub fn kv_table(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    out
}
