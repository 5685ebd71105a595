//! Per-water-class optical coefficients.
//!
//! A [`CoefficientTable`] maps water class labels to wideband attenuation
//! (`beta`, 1/m) and veiling light (`veil`, unitless) triples in R, G, B order.
//! Coefficients are data: the bundled default table lives in
//! `data/jerlov_default.txt` and any table with the same grammar can replace it.
//!
//! # Table grammar
//!
//! ```text
//! file    := line*
//! line    := comment | blank | header | row
//! comment := '#' text            ; "# source: <text>" lines form the provenance note
//! header  := "class beta_r beta_g beta_b veil_r veil_g veil_b"
//! row     := label f64 f64 f64 f64 f64 f64
//! ```
//!
//! Tokens are separated by ASCII whitespace. The header must be the first
//! non-comment, non-blank line. Labels are case-sensitive and unique.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The built-in Jerlov classes, open ocean first, then coastal.
pub const BUILTIN_CLASSES: [&str; 8] = ["I", "II", "III", "1C", "3C", "5C", "7C", "9C"];

pub const TABLE_HEADER: [&str; 7] = [
    "class", "beta_r", "beta_g", "beta_b", "veil_r", "veil_g", "veil_b",
];

const DEFAULT_TABLE: &str = include_str!("../data/jerlov_default.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("coefficient table not found: {0}")]
    MissingFile(String),
    #[error("coefficient table parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("invalid coefficient for class {class}: {field} = {value}")]
    InvalidCoefficient {
        class: String,
        field: &'static str,
        value: f64,
    },
    #[error("unknown water class: {0}")]
    UnknownWaterClass(String),
}

/// Label of a water class, e.g. `"3C"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WaterClassId(String);

impl WaterClassId {
    pub fn new(name: impl Into<String>) -> Self {
        WaterClassId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True for the eight Jerlov classes shipped with the default table.
    pub fn is_builtin(&self) -> bool {
        BUILTIN_CLASSES.contains(&self.0.as_str())
    }
}

impl fmt::Display for WaterClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for WaterClassId {
    fn from(s: &str) -> Self {
        WaterClassId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterCoefficients {
    pub class_id: WaterClassId,
    /// Wideband attenuation per channel, 1/m.
    pub beta: [f64; 3],
    /// Veiling light (backscatter at infinite range) per channel.
    pub veil: [f64; 3],
}

impl WaterCoefficients {
    pub fn new(class_id: impl Into<WaterClassId>, beta: [f64; 3], veil: [f64; 3]) -> Result<Self, OpticsError> {
        let coeffs = WaterCoefficients {
            class_id: class_id.into(),
            beta,
            veil,
        };
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        const BETA_FIELDS: [&str; 3] = ["beta_r", "beta_g", "beta_b"];
        const VEIL_FIELDS: [&str; 3] = ["veil_r", "veil_g", "veil_b"];
        for c in 0..3 {
            let b = self.beta[c];
            if !(b.is_finite() && b > 0.0) {
                return Err(self.invalid(BETA_FIELDS[c], b));
            }
            let v = self.veil[c];
            if !(0.0..=1.0).contains(&v) {
                return Err(self.invalid(VEIL_FIELDS[c], v));
            }
        }
        Ok(())
    }

    fn invalid(&self, field: &'static str, value: f64) -> OpticsError {
        OpticsError::InvalidCoefficient {
            class: self.class_id.to_string(),
            field,
            value,
        }
    }
}

/// Ordered, validated set of water classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    entries: Vec<WaterCoefficients>,
    pub source: String,
}

impl CoefficientTable {
    /// Builds a table, rejecting duplicates and invalid entries.
    pub fn new(entries: Vec<WaterCoefficients>, source: impl Into<String>) -> Result<Self, OpticsError> {
        for (i, e) in entries.iter().enumerate() {
            e.validate()?;
            if entries[..i].iter().any(|p| p.class_id == e.class_id) {
                return Err(OpticsError::ParseError {
                    line: 0,
                    message: format!("duplicate class {}", e.class_id),
                });
            }
        }
        Ok(CoefficientTable {
            entries,
            source: source.into(),
        })
    }

    /// The bundled Jerlov table.
    pub fn bundled() -> Self {
        parse_coefficient_table(DEFAULT_TABLE).expect("bundled coefficient table is valid")
    }

    pub fn lookup(&self, id: &WaterClassId) -> Result<&WaterCoefficients, OpticsError> {
        self.entries
            .iter()
            .find(|e| &e.class_id == id)
            .ok_or_else(|| OpticsError::UnknownWaterClass(id.to_string()))
    }

    pub fn contains(&self, id: &WaterClassId) -> bool {
        self.entries.iter().any(|e| &e.class_id == id)
    }

    pub fn entries(&self) -> &[WaterCoefficients] {
        &self.entries
    }

    pub fn class_ids(&self) -> Vec<WaterClassId> {
        self.entries.iter().map(|e| e.class_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Restricts the table to `ids`, keeping table order.
    pub fn subset(&self, ids: &[WaterClassId]) -> Result<Self, OpticsError> {
        for id in ids {
            self.lookup(id)?;
        }
        Ok(CoefficientTable {
            entries: self
                .entries
                .iter()
                .filter(|e| ids.contains(&e.class_id))
                .cloned()
                .collect(),
            source: self.source.clone(),
        })
    }

    /// Serializes in the documented grammar. Values are printed with
    /// shortest round-trip formatting so parsing the output is lossless.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in self.source.lines() {
            out.push_str("# source: ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&TABLE_HEADER.join(" "));
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{} {:?} {:?} {:?} {:?} {:?} {:?}\n",
                e.class_id, e.beta[0], e.beta[1], e.beta[2], e.veil[0], e.veil[1], e.veil[2]
            ));
        }
        out
    }
}

/// Free-function form of [`CoefficientTable::lookup`].
pub fn lookup<'t>(table: &'t CoefficientTable, id: &WaterClassId) -> Result<&'t WaterCoefficients, OpticsError> {
    table.lookup(id)
}

pub fn load_coefficient_table(path: &Path) -> Result<CoefficientTable, OpticsError> {
    let text = fs::read_to_string(path)
        .map_err(|_| OpticsError::MissingFile(path.display().to_string()))?;
    parse_coefficient_table(&text)
}

pub fn parse_coefficient_table(text: &str) -> Result<CoefficientTable, OpticsError> {
    let mut source = Vec::new();
    let mut seen_header = false;
    let mut entries: Vec<WaterCoefficients> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(note) = comment.trim_start().strip_prefix("source:") {
                source.push(note.trim().to_string());
            }
            continue;
        }
        let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
        if !seen_header {
            if tokens != TABLE_HEADER {
                return Err(OpticsError::ParseError {
                    line: line_no,
                    message: format!("expected header `{}`", TABLE_HEADER.join(" ")),
                });
            }
            seen_header = true;
            continue;
        }
        if tokens.len() != TABLE_HEADER.len() {
            return Err(OpticsError::ParseError {
                line: line_no,
                message: format!("expected {} columns, found {}", TABLE_HEADER.len(), tokens.len()),
            });
        }
        let mut values = [0.0f64; 6];
        for (slot, (tok, name)) in values.iter_mut().zip(tokens[1..].iter().zip(&TABLE_HEADER[1..])) {
            *slot = tok.parse().map_err(|_| OpticsError::ParseError {
                line: line_no,
                message: format!("{name}: cannot parse `{tok}` as a number"),
            })?;
        }
        let class_id = WaterClassId::new(tokens[0]);
        if entries.iter().any(|e| e.class_id == class_id) {
            return Err(OpticsError::ParseError {
                line: line_no,
                message: format!("duplicate class {class_id}"),
            });
        }
        entries.push(WaterCoefficients::new(
            class_id,
            [values[0], values[1], values[2]],
            [values[3], values[4], values[5]],
        )?);
    }
    if !seen_header {
        return Err(OpticsError::ParseError {
            line: text.lines().count().max(1),
            message: "missing header".into(),
        });
    }
    Ok(CoefficientTable {
        entries,
        source: source.join("\n"),
    })
}
