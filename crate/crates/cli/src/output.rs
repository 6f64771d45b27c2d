//! Report rendering. Every report carries `"schema": 1`.

use clap::ValueEnum;
use serde_json::{json, Map, Value};

pub const SCHEMA: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// A command's result in both renderings.
pub struct Report {
    pub command: &'static str,
    pub body: Map<String, Value>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(command: &'static str, header: Vec<&'static str>) -> Self {
        Report {
            command,
            body: Map::new(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn field(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.body.insert(key.to_string(), v.into());
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut obj = Map::new();
                obj.insert("schema".into(), json!(SCHEMA));
                obj.insert("command".into(), json!(self.command));
                obj.extend(self.body.clone());
                let mut s =
                    serde_json::to_string_pretty(&Value::Object(obj)).expect("serializable");
                s.push('\n');
                s
            }
            Format::Csv => {
                let mut s = format!("# schema={SCHEMA} command={}\n", self.command);
                s.push_str(&self.header.join(","));
                s.push('\n');
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(|c| csv_cell(c)).collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                s
            }
        }
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

pub fn error_object(message: &str) -> String {
    let v = json!({ "schema": SCHEMA, "error": message });
    format!(
        "{}\n",
        serde_json::to_string_pretty(&v).expect("serializable")
    )
}
