//! Structured pass/fail residual reports and their JSON form.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub points_tested: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub grid_spec: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_point: Vec<PointRecord>,
    /// Named auxiliary results (dimensions, sub-residuals, verdict strings).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub info: BTreeMap<String, Value>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> CheckReport {
        CheckReport {
            name: name.into(),
            points_tested: 0,
            max_residual: 0.0,
            tolerance,
            pass: true,
            grid_spec: None,
            per_point: Vec::new(),
            info: BTreeMap::new(),
        }
    }

    pub fn with_grid(mut self, spec: GridSpec) -> CheckReport {
        self.grid_spec = Some(spec);
        self
    }

    /// Add one evaluated point. NaN residuals count as failures.
    pub fn record(&mut self, point: &[f64], residual: f64) {
        let r = if residual.is_nan() { f64::INFINITY } else { residual };
        self.points_tested += 1;
        self.max_residual = self.max_residual.max(r);
        self.per_point.push(PointRecord { point: point.to_vec(), residual: r });
        self.pass = self.max_residual <= self.tolerance;
    }

    /// Fold a residual into the maximum without a per-point entry.
    pub fn absorb(&mut self, residual: f64) {
        let r = if residual.is_nan() { f64::INFINITY } else { residual };
        self.max_residual = self.max_residual.max(r);
        self.pass = self.max_residual <= self.tolerance;
    }

    pub fn set_info(&mut self, key: &str, value: impl Into<Value>) {
        self.info.insert(key.to_string(), value.into());
    }

    pub fn without_points(mut self) -> CheckReport {
        self.per_point.clear();
        self
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

/// JSON formatter writing every float with 17 significant digits.
struct SigDigits;

impl Formatter for SigDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{:.16e}", value)
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", value as f64)
    }
}

pub fn to_json<S: Serialize>(value: &S) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value.serialize(&mut ser).expect("report serialisation");
    String::from_utf8(buf).expect("utf8 json")
}

/// A float with 17 significant digits, as used in CSV output.
pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}
