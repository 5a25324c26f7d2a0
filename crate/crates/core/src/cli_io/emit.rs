use std::str::FromStr;

use serde_json::{json, Value};

use super::{CliError, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Dot,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "dot" => Ok(Format::Dot),
            other => Err(CliError::UnsupportedFormat { report: String::new(), format: other.to_string() }),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Dot => "dot",
        }
    }
}

/// Modelling choices every constant depends on.
pub fn model_tags() -> Value {
    json!({
        "tree_model": "free-group Cayley tree balls",
        "cones": "apex cones",
        "piece_metric": "l1 of base and fiber",
    })
}

/// One pipeline output.
#[derive(Clone, Debug)]
pub struct Report {
    pub name: String,
    pub pass: bool,
    pub headline: String,
    pub params: Value,
    pub data: Value,
    pub csv: Option<String>,
    pub dot: Option<String>,
}

impl Report {
    pub fn new(name: impl Into<String>, pass: bool, headline: impl Into<String>, params: Value, data: Value) -> Self {
        Self { name: name.into(), pass, headline: headline.into(), params, data, csv: None, dot: None }
    }

    pub fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    pub fn with_dot(mut self, dot: String) -> Self {
        self.dot = Some(dot);
        self
    }

    pub fn document(&self, scenario: &Scenario) -> Value {
        json!({
            "report": self.name,
            "scenario": scenario.name,
            "scenario_sha256": scenario.sha256,
            "seed": scenario.seed,
            "model": model_tags(),
            "params": self.params,
            "pass": self.pass,
            "headline": self.headline,
            "data": self.data,
        })
    }
}

fn with_newline(mut s: String) -> Vec<u8> {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s.into_bytes()
}

/// Serializes a report; object keys are sorted, output ends in a newline.
pub fn emit(report: &Report, scenario: &Scenario, format: Format) -> Result<(String, Vec<u8>), CliError> {
    let file = format!("{}.{}", report.name, format.extension());
    let unsupported = || CliError::UnsupportedFormat { report: report.name.clone(), format: format.extension().to_string() };
    let bytes = match format {
        Format::Json => with_newline(serde_json::to_string_pretty(&report.document(scenario)).expect("report serializes")),
        Format::Csv => with_newline(report.csv.clone().ok_or_else(unsupported)?),
        Format::Dot => with_newline(report.dot.clone().ok_or_else(unsupported)?),
    };
    Ok((file, bytes))
}
