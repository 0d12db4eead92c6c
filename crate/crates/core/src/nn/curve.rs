//! Training-loss logs.

use std::io::Write;

use crate::error::Result;

/// One row per epoch (or step); first column is the index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl LossCurve {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, index: usize, values: Vec<f64>) {
        debug_assert_eq!(values.len() + 1, self.columns.len());
        self.rows.push((index, values));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values of column `col` (0 = first value column).
    pub fn column(&self, col: usize) -> Vec<f64> {
        self.rows.iter().map(|(_, v)| v[col]).collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns)?;
        for (i, vals) in &self.rows {
            let mut rec = vec![i.to_string()];
            rec.extend(vals.iter().map(|v| format!("{v}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}
