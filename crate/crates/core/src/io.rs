//! Versioned JSON documents exchanged between the command-line steps.
//!
//! Every file is one object carrying `"schema": "chromm-io/1"` and a `kind`
//! tag; the remaining fields belong to the kind. Matrices are row-major
//! nested arrays and vectors plain arrays.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pipeline::{Evaluation, PipelineInput, PipelineOutput};
use crate::synth::Scenario;

pub const SCHEMA: &str = "chromm-io/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultDocument {
    pub config: PipelineConfig,
    pub result: PipelineOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Document {
    Scenario(Scenario),
    Observations(PipelineInput),
    Result(ResultDocument),
    Metrics(Evaluation),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    schema: String,
    #[serde(flatten)]
    document: Document,
}

impl Document {
    pub fn kind(&self) -> &'static str {
        match self {
            Document::Scenario(_) => "scenario",
            Document::Observations(_) => "observations",
            Document::Result(_) => "result",
            Document::Metrics(_) => "metrics",
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            schema: &'a str,
            #[serde(flatten)]
            document: &'a Document,
        }
        let mut s = serde_json::to_string_pretty(&Out { schema: SCHEMA, document: self })
            .expect("documents contain only finite numbers and string keys");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("invalid JSON: {e}")))?;
        match probe.get("schema").and_then(|s| s.as_str()) {
            Some(SCHEMA) => {}
            Some(other) => return Err(Error::Input(format!("unsupported schema `{other}`, expected `{SCHEMA}`"))),
            None => return Err(Error::Input("missing `schema` field".into())),
        }
        let env: Envelope = serde_json::from_value(probe).map_err(|e| Error::Input(e.to_string()))?;
        Ok(env.document)
    }

    /// Pipeline input carried by a scenario or observations document.
    pub fn into_pipeline_input(self) -> Result<PipelineInput> {
        match self {
            Document::Scenario(s) => Ok(PipelineInput::from(&s)),
            Document::Observations(i) => Ok(i),
            other => Err(Error::Input(format!("expected a scenario or observations file, got `{}`", other.kind()))),
        }
    }
}
