//! Problem-spec documents.
//!
//! A spec file is JSON. Numeric literals may be written as JSON numbers or as
//! strings (`"7/20"`, `"0.35"`); either way they are read as exact rationals.
//! Series values and initial conditions are polynomial expressions over the
//! declared symbols, e.g. `"-2"`, `"A"`, `"(2 - A)/6"`.
//!
//! ```json
//! {
//!   "problem": { "t0": 0, "radius": "inf", "order": 20 },
//!   "symbols": [ { "name": "A", "dist": { "kind": "bernoulli", "p": 0.35 } } ],
//!   "blocks": [ { "names": ["Y1", "C"],
//!                 "dist": { "kind": "multinomial", "n": 3, "probs": [0.2, 0.8] } } ],
//!   "series": { "A": [ { "n": 1, "value": "-2" } ], "B": [ { "n": 0, "value": "A" } ] },
//!   "generators": { "B": { "family": "inverse_power", "power": 2, "from": 1, "M": 40 } },
//!   "initial": { "Y0": "Y0", "Y1": "Y1" }
//! }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::polyalg::{parse_rational, Poly, Rational, SymbolTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("malformed spec document: {0}")]
    Syntax(String),
    #[error("`{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

pub(crate) fn invalid(key: impl Into<String>, msg: impl Into<String>) -> SpecError {
    SpecError::Invalid {
        key: key.into(),
        msg: msg.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub symbols: Vec<SymbolDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<BlockDecl>,
    #[serde(default)]
    pub series: SeriesSection,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub generators: BTreeMap<String, GeneratorDecl>,
    pub initial: InitialSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default = "zero_lit")]
    pub t0: Value,
    #[serde(default = "inf_lit")]
    pub radius: Value,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn zero_lit() -> Value {
    Value::from(0)
}

fn inf_lit() -> Value {
    Value::from("inf")
}

fn default_order() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolDecl {
    pub name: String,
    pub dist: DistDecl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDecl {
    pub names: Vec<String>,
    pub dist: DistDecl,
}

/// `{"kind": "...", <parameters>}`; parameters are checked per kind when the
/// problem is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistDecl {
    pub kind: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    #[serde(rename = "A", default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<SeriesEntry>,
    #[serde(rename = "B", default, skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<SeriesEntry>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<SeriesEntry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesEntry {
    pub n: usize,
    pub value: Value,
}

/// Rule producing the coefficients `from..=M` of an infinite input series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDecl {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(rename = "Y0")]
    pub y0: Value,
    #[serde(rename = "Y1")]
    pub y1: Value,
}

impl SpecDocument {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        serde_json::from_str(text).map_err(|e| SpecError::Syntax(e.to_string()))
    }

    /// Canonical serialization (pretty JSON, fixed key order).
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec documents always serialize")
    }
}

/// Text form of a literal: strings as-is, numbers in their JSON spelling.
fn lit_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub(crate) fn lit_rational(v: &Value, key: &str) -> Result<Rational, SpecError> {
    let text = lit_text(v).ok_or_else(|| invalid(key, "expected a number or a numeric string"))?;
    parse_rational(&text).ok_or_else(|| invalid(key, format!("`{text}` is not a rational literal")))
}

pub(crate) fn lit_poly(v: &Value, symbols: &SymbolTable, key: &str) -> Result<Poly, SpecError> {
    let text = lit_text(v).ok_or_else(|| invalid(key, "expected an expression string or a number"))?;
    Poly::parse(&text, symbols).map_err(|e| invalid(key, e.to_string()))
}

/// `inf` / `infinity` or a positive number.
pub(crate) fn lit_radius(v: &Value, key: &str) -> Result<f64, SpecError> {
    if let Some(t) = lit_text(v) {
        let t = t.trim().to_ascii_lowercase();
        if t == "inf" || t == "infinity" {
            return Ok(f64::INFINITY);
        }
    }
    let r = crate::polyalg::rational_to_f64(&lit_rational(v, key)?);
    if r <= 0.0 {
        return Err(invalid(key, format!("radius must be positive, got {r}")));
    }
    Ok(r)
}
