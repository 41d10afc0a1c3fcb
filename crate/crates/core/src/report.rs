//! CSV artifacts for allocation and optimization runs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::allocation::{ComponentAllocation, ExchangeRates};
use crate::error::{Error, Result};
use crate::optimizer::OptimizationSolution;

pub(crate) fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(csv::Writer::from_writer(File::create(path)?))
}

pub(crate) fn num(x: f64) -> String {
    format!("{x}")
}

/// Per-unit allocation report.
#[derive(Debug, Clone)]
pub struct AllocationReport {
    pub unit_ids: Vec<String>,
    pub component_names: Vec<String>,
    /// `inputs[j][k]`: component `j` of unit `k`.
    pub inputs: Vec<Vec<f64>>,
    pub allocation: ComponentAllocation,
    pub stderr: Option<Vec<f64>>,
    pub rates: Option<ExchangeRates>,
}

impl AllocationReport {
    pub fn validate(&self) -> Result<()> {
        let n = self.unit_ids.len();
        let checks = [
            ("component names", self.component_names.len(), self.inputs.len()),
            ("allocation", n, self.allocation.values.len()),
        ];
        for (context, expected, found) in checks {
            if expected != found {
                return Err(Error::DimensionMismatch { context, expected, found });
            }
        }
        if let Some(col) = self.inputs.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                context: "component inputs",
                expected: n,
                found: col.len(),
            });
        }
        if let Some(r) = &self.rates {
            if r.weights.len() != self.inputs.len() {
                return Err(Error::DimensionMismatch {
                    context: "exchange rates",
                    expected: self.inputs.len(),
                    found: r.weights.len(),
                });
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        self.validate()?;
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["unit_id".to_string(), "method".to_string()];
        header.extend(self.component_names.iter().cloned());
        header.push("allocation".into());
        if self.stderr.is_some() {
            header.push("stderr".into());
        }
        if self.rates.is_some() {
            header.extend(self.component_names.iter().map(|c| format!("rate_{c}")));
            header.push("beta".into());
        }
        out.write_record(&header)?;
        for (k, id) in self.unit_ids.iter().enumerate() {
            let mut row = vec![id.clone(), self.allocation.method.tag().to_string()];
            row.extend(self.inputs.iter().map(|c| num(c[k])));
            row.push(num(self.allocation.values[k]));
            if let Some(se) = &self.stderr {
                row.push(num(se[k]));
            }
            if let Some(r) = &self.rates {
                row.extend(r.weights.iter().map(|w| num(*w)));
                row.push(num(r.beta));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        self.write_to(File::create(path)?)
    }
}

/// Optimization run laid out for CSV output.
#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub solver: String,
    pub unit_ids: Vec<String>,
    /// Labels for the components of one unit, e.g. `["rwa", "lbs"]`.
    pub component_labels: Vec<String>,
    pub h: DVector<f64>,
    pub w: DVector<f64>,
    pub r: DVector<f64>,
    pub solution: OptimizationSolution,
    pub allocation_before: Vec<f64>,
    pub allocation_after: Vec<f64>,
    /// Total capital after the move minus before.
    pub realized_change: f64,
}

impl OptimizationReport {
    fn per_unit(&self) -> usize {
        self.component_labels.len()
    }

    pub fn component_id(&self, i: usize) -> String {
        let per = self.per_unit();
        format!("{}:{}", self.unit_ids[i / per], self.component_labels[i % per])
    }

    pub fn allocation_change(&self) -> Vec<f64> {
        self.allocation_after
            .iter()
            .zip(&self.allocation_before)
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Writes `<stem>_components.csv`, `<stem>_units.csv` and
    /// `<stem>_summary.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
        let m = self.h.len();
        if self.per_unit() == 0 || m != self.unit_ids.len() * self.per_unit() {
            return Err(Error::DimensionMismatch {
                context: "optimization report components",
                expected: self.unit_ids.len() * self.per_unit(),
                found: m,
            });
        }
        let dir = dir.as_ref();
        let per = self.per_unit();
        let change = self.allocation_change();

        let components = dir.join(format!("{stem}_components.csv"));
        let mut out = create(&components)?;
        out.write_record(["component_id", "unit_id", "h", "w", "r", "delta", "new_h", "threshold", "unit_allocation_change"])?;
        for i in 0..m {
            let delta = self.solution.delta[i];
            out.write_record([
                self.component_id(i),
                self.unit_ids[i / per].clone(),
                num(self.h[i]),
                num(self.w[i]),
                num(self.r[i]),
                num(delta),
                num(self.h[i] + delta),
                num(self.w[i] / self.solution.lambda),
                num(change[i / per]),
            ])?;
        }
        out.flush()?;

        let units = dir.join(format!("{stem}_units.csv"));
        let mut out = create(&units)?;
        let mut header = vec!["unit_id".to_string()];
        header.extend(self.component_labels.iter().map(|c| format!("delta_{c}")));
        header.extend(["allocation_before", "allocation_after", "allocation_change"].map(String::from));
        out.write_record(&header)?;
        for (k, id) in self.unit_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend((0..per).map(|j| num(self.solution.delta[k * per + j])));
            row.extend([
                num(self.allocation_before[k]),
                num(self.allocation_after[k]),
                num(change[k]),
            ]);
            out.write_record(&row)?;
        }
        out.flush()?;

        let summary = dir.join(format!("{stem}_summary.csv"));
        let mut out = create(&summary)?;
        out.write_record(["key", "value"])?;
        for (key, value) in self.summary() {
            out.write_record([key, value.as_str()])?;
        }
        out.flush()?;
        Ok(vec![components, units, summary])
    }

    pub fn summary(&self) -> Vec<(&'static str, String)> {
        let s = &self.solution;
        vec![
            ("solver", self.solver.clone()),
            ("lambda", num(s.lambda)),
            ("capital_change", num(s.capital_change)),
            ("realized_change", num(self.realized_change)),
            ("kkt_stationarity", num(s.kkt_stationarity)),
            ("constraint_residual", num(s.constraint_residual)),
            ("mahalanobis", num(s.mahalanobis)),
        ]
    }
}
