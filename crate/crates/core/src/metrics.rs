//! Append-only CSV metrics.
//!
//! Header (fixed):
//! `env_step,gradient_steps,episode_return,c_rate,dangerous_episodes,train_return,mean_q,mean_qc,mean_lambda,alpha,q1_loss,q2_loss,qc_loss,policy_loss,multiplier_loss,frac_vc_le_d,multiplier_active`
//!
//! The first five value columns come from deterministic evaluation episodes.
//! Loss and critic columns are means over the gradient steps of the interval;
//! a column is left empty when nothing contributed to it.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::learner::StepReport;

pub const METRICS_HEADER: &str = "env_step,gradient_steps,episode_return,c_rate,dangerous_episodes,train_return,mean_q,mean_qc,mean_lambda,alpha,q1_loss,q2_loss,qc_loss,policy_loss,multiplier_loss,frac_vc_le_d,multiplier_active";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub env_step: u64,
    pub gradient_steps: u64,
    pub episode_return: f64,
    pub c_rate: f64,
    pub dangerous_episodes: usize,
    pub train_return: Option<f64>,
    pub mean_q: Option<f64>,
    pub mean_qc: Option<f64>,
    pub mean_lambda: Option<f64>,
    pub alpha: f64,
    pub q1_loss: Option<f64>,
    pub q2_loss: Option<f64>,
    pub qc_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub multiplier_loss: Option<f64>,
    pub frac_vc_le_d: Option<f64>,
    pub multiplier_active: bool,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.env_step,
            self.gradient_steps,
            self.episode_return,
            self.c_rate,
            self.dangerous_episodes,
            opt(self.train_return),
            opt(self.mean_q),
            opt(self.mean_qc),
            opt(self.mean_lambda),
            self.alpha,
            opt(self.q1_loss),
            opt(self.q2_loss),
            opt(self.qc_loss),
            opt(self.policy_loss),
            opt(self.multiplier_loss),
            opt(self.frac_vc_le_d),
            self.multiplier_active
        )
    }
}

/// Running means of optional scalars.
#[derive(Clone, Debug, Default)]
pub struct Mean {
    sum: f64,
    n: u64,
}

impl Mean {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    pub fn push_opt(&mut self, x: Option<f64>) {
        if let Some(x) = x {
            self.push(x);
        }
    }

    pub fn take(&mut self) -> Option<f64> {
        let out = (self.n > 0).then(|| self.sum / self.n as f64);
        *self = Mean::default();
        out
    }
}

/// Per-interval accumulation of [`StepReport`]s.
#[derive(Clone, Debug, Default)]
pub struct ReportAccumulator {
    pub q1_loss: Mean,
    pub q2_loss: Mean,
    pub qc_loss: Mean,
    pub mean_q: Mean,
    pub mean_qc: Mean,
    pub policy_loss: Mean,
    pub multiplier_loss: Mean,
    pub mean_lambda: Mean,
}

impl ReportAccumulator {
    pub fn push(&mut self, r: &StepReport) {
        self.q1_loss.push(r.q1_loss);
        self.q2_loss.push(r.q2_loss);
        self.mean_q.push(r.mean_q);
        self.qc_loss.push_opt(r.qc_loss);
        self.mean_qc.push_opt(r.mean_qc);
        self.policy_loss.push_opt(r.policy_loss);
        self.multiplier_loss.push_opt(r.multiplier_loss);
        self.mean_lambda.push_opt(r.mean_lambda);
    }

    /// Moves the interval means into `row` and resets.
    pub fn drain_into(&mut self, row: &mut MetricsRow) {
        row.q1_loss = self.q1_loss.take();
        row.q2_loss = self.q2_loss.take();
        row.qc_loss = self.qc_loss.take();
        row.mean_q = self.mean_q.take();
        row.mean_qc = self.mean_qc.take();
        row.policy_loss = self.policy_loss.take();
        row.multiplier_loss = self.multiplier_loss.take();
        row.mean_lambda = self.mean_lambda.take();
    }
}

pub struct MetricsSink {
    path: PathBuf,
}

impl MetricsSink {
    /// Opens `path` for appending, writing the header if the file is new or empty.
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        if fresh {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{METRICS_HEADER}")?;
        }
        Ok(MetricsSink {
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{}", row.to_csv())?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Parses a metrics file back into `(header, rows)` of raw cells.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split(',').map(String::from).collect())
        .unwrap_or_default();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_row_width() {
        let row = MetricsRow::default();
        assert_eq!(row.to_csv().split(',').count(), METRICS_HEADER.split(',').count());
    }

    #[test]
    fn sink_appends_under_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut sink = MetricsSink::open(&path).unwrap();
        sink.append(&MetricsRow { env_step: 1, ..Default::default() }).unwrap();
        let mut again = MetricsSink::open(&path).unwrap();
        again.append(&MetricsRow { env_step: 2, ..Default::default() }).unwrap();
        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header.len(), 17);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][0], "2");
    }

    #[test]
    fn mean_resets_after_take() {
        let mut m = Mean::default();
        assert_eq!(m.take(), None);
        m.push(1.0);
        m.push(2.0);
        assert_eq!(m.take(), Some(1.5));
        assert_eq!(m.take(), None);
    }
}
