//! Plain MSE-minimizing network, the comparison baseline for the
//! adversarial trainers. Shares the regression stack and standardization.

use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::report::{smoothed_tail, TrainReport};
use crate::rng::RngState;

use super::{adam_step, regressor_specs, xavier_init, AdamConfig, AdamState, Direction, LayerSpec, MlpParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub iterations: usize,
    pub batch: usize,
    pub hidden_width: usize,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
    pub smooth_frac: f64,
    pub standardize: bool,
    /// Overrides the default regression stack when set.
    pub specs: Option<Vec<LayerSpec>>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            iterations: 5000,
            batch: 128,
            hidden_width: 32,
            leaky_slope: 0.2,
            adam: AdamConfig::default(),
            smooth_frac: 0.1,
            standardize: true,
            specs: None,
        }
    }
}

/// Trained MSE network plus the transform needed to predict in raw units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseModel {
    pub params: MlpParams,
    pub scaling: Standardizer,
    pub report: TrainReport,
}

impl MseModel {
    /// Deterministic predictions in the original response units.
    pub fn predict(&self, u: &Matrix) -> Result<Vec<f64>> {
        if u.rows() == 0 {
            return Ok(Vec::new());
        }
        let out = self.params.predict(&self.scaling.apply_u(u))?;
        Ok(self.scaling.invert_z(&out.col(0)))
    }
}

/// Trains the baseline by Adam descent on minibatch mean-squared error.
pub fn fit_mse_baseline(
    data: &Dataset,
    cfg: &BaselineConfig,
    rng: &mut RngState,
) -> Result<MseModel> {
    if data.is_empty() {
        return Err(Error::param("cannot fit a baseline on an empty dataset"));
    }
    let started = std::time::Instant::now();
    let seed = rng.seed();

    let (train, scaling) = if cfg.standardize {
        let std = standardize(data);
        let scaling = std.standardizer.clone().unwrap();
        (std, scaling)
    } else {
        (data.clone(), Standardizer::identity(data.num_regressors()))
    };

    let specs = cfg.specs.clone().unwrap_or_else(|| {
        regressor_specs(train.num_regressors(), cfg.hidden_width, cfg.leaky_slope, true)
    });
    let mut params = xavier_init(&specs, rng)?;
    let mut adam = AdamState::new(&params, cfg.adam);

    let n = train.len();
    let batch = cfg.batch.min(n).max(1);
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let idx = rng.sample_indices(n, batch);
        let u = train.u.select_rows(&idx);
        let z: Vec<f64> = idx.iter().map(|&i| train.z[i]).collect();

        let (pred, cache) = params.forward(&u)?;
        let resid: Vec<f64> = pred
            .col(0)
            .iter()
            .zip(&z)
            .map(|(p, z)| p - z)
            .collect();
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / batch as f64;
        if !loss.is_finite() {
            return Err(Error::non_finite(it, "mse loss"));
        }
        loss_curve.push(loss);

        // d(mean squared error)/d(pred_i) = 2 (pred_i - z_i) / batch
        let grad = Matrix::column(resid.iter().map(|r| 2.0 * r / batch as f64).collect());
        let (grads, _) = params.backward(&cache, &grad)?;
        adam_step(&mut params, &grads, &mut adam, Direction::Descend)?;
    }

    let report = TrainReport {
        final_divergence: smoothed_tail(&loss_curve, cfg.smooth_frac),
        loss_curve,
        seed,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    Ok(MseModel {
        params,
        scaling,
        report,
    })
}
