//! JSON report plumbing: comparison tables (computed versus reference
//! values with explicit tolerances) and a serializer that rounds every
//! number to 9 significant digits so repeated runs emit identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fluid::FluidError;
use crate::numerics::sig9;

/// One compared quantity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// What is being compared.
    pub quantity: String,
    /// Value computed here.
    pub computed: f64,
    /// Externally reported reference value.
    pub reference: f64,
    /// Comparison tolerance (absolute), or the slack for one-sided checks.
    pub tolerance: f64,
    /// Whether the check passed.
    pub within: bool,
    /// Optional context for the row (e.g. why a discrepancy is expected).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A titled list of comparisons with free-form notes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Report title.
    pub title: String,
    /// Compared quantities in presentation order.
    pub rows: Vec<ComparisonRow>,
    /// All rows passed.
    pub all_within: bool,
    /// Report-level remarks.
    pub notes: Vec<String>,
}

impl ComparisonReport {
    /// Start an empty report.
    pub fn new(title: &str) -> Self {
        Self { title: title.to_string(), rows: Vec::new(), all_within: true, notes: Vec::new() }
    }

    /// Add a two-sided check `|computed − reference| ≤ tolerance`.
    pub fn row(&mut self, quantity: &str, computed: f64, reference: f64, tolerance: f64) {
        self.push(quantity, computed, reference, tolerance, None);
    }

    /// Add a two-sided check with a context note.
    pub fn row_noted(
        &mut self,
        quantity: &str,
        computed: f64,
        reference: f64,
        tolerance: f64,
        note: &str,
    ) {
        self.push(quantity, computed, reference, tolerance, Some(note.to_string()));
    }

    /// Add a one-sided check `computed ≥ reference`.
    pub fn row_at_least(&mut self, quantity: &str, computed: f64, reference: f64) {
        let within = computed >= reference;
        self.all_within &= within;
        self.rows.push(ComparisonRow {
            quantity: quantity.to_string(),
            computed,
            reference,
            tolerance: 0.0,
            within,
            note: Some("one-sided: computed must be at least the reference".to_string()),
        });
    }

    fn push(
        &mut self,
        quantity: &str,
        computed: f64,
        reference: f64,
        tolerance: f64,
        note: Option<String>,
    ) {
        let within = (computed - reference).abs() <= tolerance;
        self.all_within &= within;
        self.rows.push(ComparisonRow {
            quantity: quantity.to_string(),
            computed,
            reference,
            tolerance,
            within,
            note,
        });
    }

    /// Append a report-level remark.
    pub fn note(&mut self, text: &str) {
        self.notes.push(text.to_string());
    }

    /// Render as CSV (`quantity,computed,reference,tolerance,within`).
    pub fn to_csv_string(&self) -> String {
        use crate::numerics::format_g9;
        let mut out = String::from("quantity,computed,reference,tolerance,within\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.quantity,
                format_g9(r.computed),
                format_g9(r.reference),
                format_g9(r.tolerance),
                r.within
            ));
        }
        out
    }
}

/// Round every JSON number (recursively) to 9 significant digits. Integers
/// are left untouched.
fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap_or(0.0);
                if let Some(rounded) = serde_json::Number::from_f64(sig9(x)) {
                    *n = rounded;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serialize any report type to pretty JSON with all floating-point values
/// rounded to 9 significant digits. Keys are emitted in sorted order, so
/// identical values always produce identical bytes.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).unwrap_or(Value::Null);
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).unwrap_or_else(|_| "null".to_string());
    s.push('\n');
    s
}

/// Write a report as rounded pretty JSON.
///
/// # Errors
///
/// Underlying I/O failure.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), FluidError> {
    fs::write(path, to_json_string(value))?;
    Ok(())
}

// ---------------------------------------------------------------------------
