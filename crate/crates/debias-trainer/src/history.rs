use std::path::Path;

use crate::TrainError;

/// One monitored batch.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss_msi: f64,
    /// Per configured bias; `None` when the regime has no bias heads or the
    /// adversarial phases were skipped for this batch.
    pub loss_be: Vec<Option<f64>>,
    pub dc_task: f64,
    pub dc_bias: Vec<f64>,
    /// Row count the adversarial phases ran on (0 or 1 means skipped).
    pub adv_rows: usize,
}

/// Training curves: one row per monitored batch, iteration indices strictly
/// increasing.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub bias_names: Vec<String>,
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    pub fn new(bias_names: &[String]) -> Self {
        TrainHistory {
            bias_names: bias_names.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: HistoryRow) {
        if let Some(last) = self.rows.last() {
            assert!(
                row.iter > last.iter,
                "iteration indices must increase: {} after {}",
                row.iter,
                last.iter
            );
        }
        assert_eq!(row.loss_be.len(), self.bias_names.len());
        assert_eq!(row.dc_bias.len(), self.bias_names.len());
        self.rows.push(row);
    }

    /// Columns: iter, loss_msi, loss_be_<name>..., dc_task, dc_<name>..., adv_rows.
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["iter".to_string(), "loss_msi".to_string()];
        header.extend(self.bias_names.iter().map(|n| format!("loss_be_{n}")));
        header.push("dc_task".to_string());
        header.extend(self.bias_names.iter().map(|n| format!("dc_{n}")));
        header.push("adv_rows".to_string());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.iter.to_string(), format!("{:.8}", r.loss_msi)];
            rec.extend(
                r.loss_be
                    .iter()
                    .map(|l| l.map(|v| format!("{v:.8}")).unwrap_or_default()),
            );
            rec.push(format!("{:.8}", r.dc_task));
            rec.extend(r.dc_bias.iter().map(|v| format!("{v:.8}")));
            rec.push(r.adv_rows.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
