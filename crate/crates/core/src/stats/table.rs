use serde::{Deserialize, Serialize};

use super::StatsError;

/// Labels of one measured walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLabel {
    pub subject: String,
    pub walk: String,
}

/// Complete matrix of measurements: one row per walk, one column per method
/// or repeated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTable {
    pub parameter: String,
    pub unit: String,
    pub columns: Vec<String>,
    pub labels: Vec<RowLabel>,
    values: Vec<Vec<f64>>,
}

impl MeasurementTable {
    pub fn new(
        parameter: impl Into<String>,
        unit: impl Into<String>,
        columns: Vec<String>,
        labels: Vec<RowLabel>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, StatsError> {
        if labels.len() != values.len() {
            return Err(StatsError::LengthMismatch {
                left: labels.len(),
                right: values.len(),
            });
        }
        if values.len() < 2 {
            return Err(StatsError::TooFewRows(values.len()));
        }
        if columns.len() < 2 {
            return Err(StatsError::TooFewColumns(columns.len()));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(StatsError::RaggedRow {
                    row: i,
                    len: row.len(),
                    expected: columns.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite { row: i });
            }
        }
        Ok(MeasurementTable {
            parameter: parameter.into(),
            unit: unit.into(),
            columns,
            labels,
            values,
        })
    }

    /// Builds a table from rows that may have gaps. Rows with any missing
    /// cell are left out; the count of excluded rows is returned alongside.
    pub fn from_rows_with_gaps(
        parameter: impl Into<String>,
        unit: impl Into<String>,
        columns: Vec<String>,
        rows: Vec<(RowLabel, Vec<Option<f64>>)>,
    ) -> Result<(Self, usize), StatsError> {
        let total = rows.len();
        let (labels, values): (Vec<_>, Vec<_>) = rows
            .into_iter()
            .filter_map(|(label, cells)| cells.into_iter().collect::<Option<Vec<f64>>>().map(|v| (label, v)))
            .unzip();
        let excluded = total - labels.len();
        Ok((Self::new(parameter, unit, columns, labels, values)?, excluded))
    }

    /// Unlabeled table, convenient for numeric work.
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let k = values.first().map_or(0, Vec::len);
        let labels = (0..values.len())
            .map(|i| RowLabel {
                subject: i.to_string(),
                walk: i.to_string(),
            })
            .collect();
        Self::new("value", "", (0..k).map(|j| format!("c{j}")).collect(), labels, values)
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }
}
