//! Adversarial orthogonal regression.
//!
//! A regression network and a mutual-information critic play a minimax game
//! on the divergence bound: the critic ascends to expose dependence between
//! residuals and regressors, the regressor descends to remove it. At
//! equilibrium the loss value is the mutual information between the two,
//! and the fitted map is identified only up to an additive constant because
//! the regression output carries no bias.

use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mine::{critic_gradients, estimate_mi, MineConfig, MineEstimate};
use crate::mine::marginal_pairing;
use crate::nn::{
    adam_step, critic_specs, regressor_specs, validate_specs, xavier_init, AdamConfig, AdamState,
    Direction, LayerSpec, MlpParams,
};
use crate::report::{smoothed_tail, TrainReport};
use crate::rng::RngState;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdorConfig {
    /// Half-batch size b; every iteration draws 2b rows.
    pub batch_half_b: usize,
    pub iterations: usize,
    /// Regressor updates per iteration.
    pub k_r: usize,
    /// Critic updates per iteration.
    pub k_mi: usize,
    pub hidden_width: usize,
    pub leaky_slope: f64,
    /// Shared optimizer settings; per-network overrides below.
    pub adam: AdamConfig,
    pub lr_r: Option<f64>,
    pub lr_mi: Option<f64>,
    pub smooth_frac: f64,
    pub standardize: bool,
    /// Full layer stacks override the width/slope defaults when set.
    pub r_specs: Option<Vec<LayerSpec>>,
    pub mi_specs: Option<Vec<LayerSpec>>,
}

impl Default for AdorConfig {
    fn default() -> Self {
        AdorConfig {
            batch_half_b: 128,
            iterations: 20_000,
            k_r: 1,
            k_mi: 5,
            hidden_width: 32,
            leaky_slope: 0.2,
            adam: AdamConfig::default(),
            lr_r: None,
            lr_mi: None,
            smooth_frac: 0.1,
            standardize: true,
            r_specs: None,
            mi_specs: None,
        }
    }
}

impl AdorConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_half_b < 2 {
            return Err(Error::param("batch_half_b must be >= 2"));
        }
        if self.k_r < 1 || self.k_mi < 1 {
            return Err(Error::param("k_r and k_mi must be >= 1"));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations must be >= 1"));
        }
        Ok(())
    }

    fn adam_for(&self, lr_override: Option<f64>) -> AdamConfig {
        match lr_override {
            Some(lr) => AdamConfig { lr, ..self.adam },
            None => self.adam,
        }
    }
}

/// Trained regression network, its adversarially co-trained critic, and the
/// run record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdorModel {
    pub r_params: MlpParams,
    pub mi_params: MlpParams,
    pub scaling: Standardizer,
    pub report: TrainReport,
}

/// Residuals for one batch plus the caches needed to push gradients back
/// through the regressor.
fn residuals(
    r: &MlpParams,
    u: &Matrix,
    z: &[f64],
) -> Result<(Matrix, crate::nn::ForwardCache)> {
    let (zhat, cache) = r.forward(u)?;
    let eps = Matrix::column(
        z.iter()
            .zip(zhat.col(0))
            .map(|(z, p)| z - p)
            .collect(),
    );
    Ok((eps, cache))
}

/// Runs the minimax training loop.
///
/// Per iteration: draw 2b rows, compute residuals, split into joint and
/// marginal critic inputs, and record the divergence loss. Then take `k_r`
/// Adam descent steps on the regressor (its gradient arrives through the
/// critic's input gradient at the residual column) followed by `k_mi`
/// ascent steps on the critic. Each inner step recomputes the forward pass
/// it depends on.
pub fn ador_train(data: &Dataset, cfg: &AdorConfig, rng: &mut RngState) -> Result<AdorModel> {
    cfg.validate()?;
    let n = data.len();
    if n < 2 * cfg.batch_half_b {
        return Err(Error::param(format!(
            "dataset has {n} rows; needs at least 2*b = {}",
            2 * cfg.batch_half_b
        )));
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
    let m = train.num_regressors();

    let r_specs = cfg
        .r_specs
        .clone()
        .unwrap_or_else(|| regressor_specs(m, cfg.hidden_width, cfg.leaky_slope, false));
    let mi_specs = cfg
        .mi_specs
        .clone()
        .unwrap_or_else(|| critic_specs(m + 1, cfg.hidden_width, cfg.leaky_slope));
    validate_specs(&r_specs)?;
    validate_specs(&mi_specs)?;
    if r_specs.last().unwrap().has_bias {
        return Err(Error::param("regression output layer must not carry a bias"));
    }
    if mi_specs.last().unwrap().has_bias {
        return Err(Error::param("critic output layer must not carry a bias"));
    }
    if mi_specs[0].in_width != m + 1 {
        return Err(Error::shape(format!(
            "critic expects {} inputs for residual + {m} regressors",
            m + 1
        )));
    }

    let mut r = xavier_init(&r_specs, rng)?;
    let mut mi = xavier_init(&mi_specs, rng)?;
    let mut adam_r = AdamState::new(&r, cfg.adam_for(cfg.lr_r));
    let mut adam_mi = AdamState::new(&mi, cfg.adam_for(cfg.lr_mi));

    let b = cfg.batch_half_b;
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let idx = rng.sample_indices(n, 2 * b);
        let u = train.u.select_rows(&idx);
        let z: Vec<f64> = idx.iter().map(|&i| train.z[i]).collect();

        // loss of this iteration, before any update
        {
            let (eps, _) = residuals(&r, &u, &z)?;
            let (joint, marginal) = marginal_pairing(&u, &eps)?;
            let (loss, _, _, _) = critic_gradients(&mi, &joint, &marginal)?;
            if !loss.is_finite() {
                return Err(Error::non_finite(it, "minimax loss"));
            }
            loss_curve.push(loss);
        }

        // regressor phase: descend through the residual path
        for _ in 0..cfg.k_r {
            let (eps, r_cache) = residuals(&r, &u, &z)?;
            let (joint, marginal) = marginal_pairing(&u, &eps)?;
            let (_, _, joint_in, marginal_in) = critic_gradients(&mi, &joint, &marginal)?;

            // Critic input rows are [eps | u]; column 0 carries dL/d eps.
            // Joint scores touch residuals 0..b, marginal scores touch b..2b,
            // and eps = z - zhat flips the sign onto the prediction.
            let mut d_zhat = vec![0.0; 2 * b];
            for i in 0..b {
                d_zhat[i] = -joint_in.get(i, 0);
                d_zhat[i + b] = -marginal_in.get(i, 0);
            }
            let (r_grads, _) = r.backward(&r_cache, &Matrix::column(d_zhat))?;
            adam_step(&mut r, &r_grads, &mut adam_r, Direction::Descend)?;
        }

        // critic phase: ascend on the residuals of the updated regressor
        let (eps, _) = residuals(&r, &u, &z)?;
        let (joint, marginal) = marginal_pairing(&u, &eps)?;
        for _ in 0..cfg.k_mi {
            let (_, mi_grads, _, _) = critic_gradients(&mi, &joint, &marginal)?;
            adam_step(&mut mi, &mi_grads, &mut adam_mi, Direction::Ascend)?;
        }
    }

    let report = TrainReport {
        final_divergence: smoothed_tail(&loss_curve, cfg.smooth_frac),
        loss_curve,
        seed,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    Ok(AdorModel {
        r_params: r,
        mi_params: mi,
        scaling,
        report,
    })
}

impl AdorModel {
    /// Deterministic predictions in raw response units. The map is
    /// identifiable only up to an additive constant.
    pub fn predict(&self, u: &Matrix) -> Result<Vec<f64>> {
        if u.rows() == 0 {
            return Ok(Vec::new());
        }
        let out = self.r_params.predict(&self.scaling.apply_u(u))?;
        Ok(self.scaling.invert_z(&out.col(0)))
    }

    /// Residuals in standardized units over a whole dataset.
    pub fn residuals_std(&self, data: &Dataset) -> Result<(Matrix, Matrix)> {
        let u_std = self.scaling.apply_u(&data.u);
        let z_std = self.scaling.apply_z(&data.z);
        let zhat = self.r_params.predict(&u_std)?;
        let eps = Matrix::column(
            z_std
                .iter()
                .zip(zhat.col(0))
                .map(|(z, p)| z - p)
                .collect(),
        );
        Ok((eps, u_std))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<AdorModel> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Trains a fresh critic from scratch on the full-dataset residual/regressor
/// pairs — an independent audit of what the co-trained critic claims.
pub fn residual_mi_audit(
    model: &AdorModel,
    data: &Dataset,
    cfg: &MineConfig,
    rng: &mut RngState,
) -> Result<MineEstimate> {
    let (eps, u_std) = model.residuals_std(data)?;
    estimate_mi(&eps, &u_std, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistSpec;

    fn linear_dataset(n: usize, noise_sd: f64, seed: u64) -> Dataset {
        let mut rng = RngState::from_seed(seed);
        let x = DistSpec::Uniform { lo: -1.0, hi: 1.0 }
            .sample(n, &mut rng)
            .unwrap();
        let e = DistSpec::Normal {
            mean: 0.0,
            sd: noise_sd,
        }
        .sample(n, &mut rng)
        .unwrap();
        let z: Vec<f64> = x.iter().zip(&e).map(|(x, e)| x + e).collect();
        Dataset::from_xy(&x, &z, "linear").unwrap()
    }

    fn quick_cfg(iterations: usize) -> AdorConfig {
        AdorConfig {
            batch_half_b: 32,
            iterations,
            hidden_width: 16,
            ..AdorConfig::default()
        }
    }

    #[test]
    fn rejects_undersized_datasets() {
        let data = linear_dataset(20, 0.1, 1);
        let cfg = AdorConfig {
            batch_half_b: 16,
            ..quick_cfg(10)
        };
        assert!(ador_train(&data, &cfg, &mut RngState::from_seed(1)).is_err());
    }

    #[test]
    fn rejects_biased_output_layers() {
        let data = linear_dataset(200, 0.1, 1);
        let mut cfg = quick_cfg(5);
        cfg.r_specs = Some(regressor_specs(1, 8, 0.2, true));
        assert!(ador_train(&data, &cfg, &mut RngState::from_seed(1)).is_err());
    }

    #[test]
    fn loss_curve_is_bit_deterministic() {
        let data = linear_dataset(200, 0.1, 2);
        let cfg = quick_cfg(40);
        let a = ador_train(&data, &cfg, &mut RngState::from_seed(9)).unwrap();
        let b = ador_train(&data, &cfg, &mut RngState::from_seed(9)).unwrap();
        assert_eq!(a.report.loss_curve, b.report.loss_curve);
        assert_eq!(a.r_params, b.r_params);
    }

    #[test]
    fn predictions_are_deterministic_and_empty_input_is_empty() {
        let data = linear_dataset(200, 0.1, 3);
        let model = ador_train(&data, &quick_cfg(50), &mut RngState::from_seed(4)).unwrap();
        let p1 = model.predict(&data.u).unwrap();
        let p2 = model.predict(&data.u).unwrap();
        assert_eq!(p1, p2);
        assert!(model.predict(&Matrix::zeros(0, 1)).unwrap().is_empty());
        assert!(model.predict(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn update_directions_have_minimax_signs() {
        // With a frozen partner and a tiny learning rate, one critic step must
        // raise the batch loss and one regressor step must lower it.
        let data = linear_dataset(256, 0.2, 5);
        let std = standardize(&data);
        let mut rng = RngState::from_seed(6);
        let r = xavier_init(&regressor_specs(1, 8, 0.2, false), &mut rng).unwrap();
        let mut mi = xavier_init(&critic_specs(2, 8, 0.2), &mut rng).unwrap();

        let idx: Vec<usize> = (0..64).collect();
        let u = std.u.select_rows(&idx);
        let z: Vec<f64> = idx.iter().map(|&i| std.z[i]).collect();

        let loss_of = |r: &MlpParams, mi: &MlpParams| {
            let (eps, _) = residuals(r, &u, &z).unwrap();
            let (joint, marginal) = marginal_pairing(&u, &eps).unwrap();
            let (loss, _, _, _) = critic_gradients(mi, &joint, &marginal).unwrap();
            loss
        };

        // give the critic a head start so the loss surface is not flat
        let mut adam_mi = AdamState::new(&mi, AdamConfig::default());
        for _ in 0..50 {
            let (eps, _) = residuals(&r, &u, &z).unwrap();
            let (joint, marginal) = marginal_pairing(&u, &eps).unwrap();
            let (_, grads, _, _) = critic_gradients(&mi, &joint, &marginal).unwrap();
            adam_step(&mut mi, &grads, &mut adam_mi, Direction::Ascend).unwrap();
        }

        let tiny = AdamConfig {
            lr: 1e-5,
            ..AdamConfig::default()
        };

        // critic ascent raises the loss
        let before = loss_of(&r, &mi);
        let mut mi_up = mi.clone();
        let mut adam_up = AdamState::new(&mi_up, tiny);
        {
            let (eps, _) = residuals(&r, &u, &z).unwrap();
            let (joint, marginal) = marginal_pairing(&u, &eps).unwrap();
            let (_, grads, _, _) = critic_gradients(&mi_up, &joint, &marginal).unwrap();
            adam_step(&mut mi_up, &grads, &mut adam_up, Direction::Ascend).unwrap();
        }
        assert!(loss_of(&r, &mi_up) > before, "critic step must ascend");

        // regressor descent lowers it
        let mut r_down = r.clone();
        let mut adam_down = AdamState::new(&r_down, tiny);
        {
            let (eps, r_cache) = residuals(&r_down, &u, &z).unwrap();
            let (joint, marginal) = marginal_pairing(&u, &eps).unwrap();
            let (_, _, joint_in, marginal_in) = critic_gradients(&mi, &joint, &marginal).unwrap();
            let b = 32;
            let mut d_zhat = vec![0.0; 64];
            for i in 0..b {
                d_zhat[i] = -joint_in.get(i, 0);
                d_zhat[i + b] = -marginal_in.get(i, 0);
            }
            let (r_grads, _) = r_down.backward(&r_cache, &Matrix::column(d_zhat)).unwrap();
            adam_step(&mut r_down, &r_grads, &mut adam_down, Direction::Descend).unwrap();
        }
        assert!(loss_of(&r_down, &mi) < before, "regressor step must descend");
    }

    #[test]
    fn constant_response_trains_to_negligible_dependence() {
        let mut rng = RngState::from_seed(7);
        let x = DistSpec::Uniform { lo: -1.0, hi: 1.0 }
            .sample(400, &mut rng)
            .unwrap();
        // constant response needs a pinch of noise to avoid a degenerate
        // standardizer column
        let z: Vec<f64> = (0..400)
            .map(|_| 3.0 + 1e-9 * (rng.next_f64() - 0.5))
            .collect();
        let data = Dataset::from_xy(&x, &z, "const").unwrap();
        let cfg = AdorConfig {
            batch_half_b: 64,
            iterations: 400,
            hidden_width: 16,
            ..AdorConfig::default()
        };
        let model = ador_train(&data, &cfg, &mut RngState::from_seed(8)).unwrap();
        assert!(
            model.report.final_divergence.abs() < 0.05,
            "final loss {}",
            model.report.final_divergence
        );
    }
}
