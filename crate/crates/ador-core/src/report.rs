//! Auditable record of one training run.

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Per-iteration loss history plus the smoothed final estimate.
///
/// `wall_ms` is kept for diagnostics but excluded from serialization so that
/// re-running a seeded pipeline produces byte-identical artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub final_divergence: f64,
    pub seed: u64,
    #[serde(skip)]
    pub wall_ms: u64,
}

/// Mean of the trailing `frac` portion of `curve` (at least one element).
pub fn smoothed_tail(curve: &[f64], frac: f64) -> f64 {
    if curve.is_empty() {
        return f64::NAN;
    }
    let window = ((curve.len() as f64 * frac).ceil() as usize).clamp(1, curve.len());
    let tail = &curve[curve.len() - window..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

impl TrainReport {
    /// Writes the loss history as two-column CSV `(iteration, loss)`.
    pub fn write_curve_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("iteration,loss\n");
        for (i, loss) in self.loss_curve.iter().enumerate() {
            out.push_str(&format!("{i},{loss}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
