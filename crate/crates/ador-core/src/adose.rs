//! Adversarial structural equation model estimation.
//!
//! The regression network consumes regressors plus exogenous noise that a
//! one-hidden-layer transform shapes out of standard Gaussian draws. A KL
//! critic scores true `(u, z)` pairs against generated `(u, zhat)` pairs;
//! generator and noise transform descend the divergence bound while the
//! critic ascends. At equilibrium the loss sits at zero and the generator
//! samples from the learned conditional response distribution.
//!
//! Inner-step counts follow a linear feedback rule on the current batch
//! loss: a large loss hands more steps to the generator, a small one to the
//! critic. The raw rule goes nonpositive once the loss magnitude reaches
//! a/b, so both counts are clamped to a configured range.

use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, Standardizer};
use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mine::critic_gradients;
use crate::nn::{
    adam_step, critic_specs, noise_transform_specs, regressor_specs, validate_specs, xavier_init,
    AdamConfig, AdamState, Direction, LayerSpec, MlpParams,
};
use crate::report::{smoothed_tail, TrainReport};
use crate::rng::RngState;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdoseConfig {
    pub batch_b: usize,
    pub iterations: usize,
    pub feedback_a: f64,
    pub feedback_b: f64,
    pub step_min: usize,
    pub step_max: usize,
    pub hidden_width: usize,
    /// Hidden width of the noise transform.
    pub rt_hidden: usize,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
    pub smooth_frac: f64,
    pub standardize: bool,
    pub r_specs: Option<Vec<LayerSpec>>,
    pub kl_specs: Option<Vec<LayerSpec>>,
}

impl Default for AdoseConfig {
    fn default() -> Self {
        AdoseConfig {
            batch_b: 128,
            iterations: 3000,
            feedback_a: 30.0,
            feedback_b: 10.0,
            step_min: 1,
            step_max: 100,
            hidden_width: 32,
            rt_hidden: 16,
            leaky_slope: 0.2,
            adam: AdamConfig::default(),
            smooth_frac: 0.1,
            standardize: true,
            r_specs: None,
            kl_specs: None,
        }
    }
}

impl AdoseConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_b < 2 {
            return Err(Error::param("batch_b must be >= 2"));
        }
        if self.step_min < 1 || self.step_min > self.step_max {
            return Err(Error::param("need 1 <= step_min <= step_max"));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Linear-feedback inner-step counts for one iteration:
/// `k_r = floor(a + b*loss)` and `k_kl = floor(a - b*loss)`, both clamped
/// into `[step_min, step_max]`.
pub fn feedback_steps(loss: f64, cfg: &AdoseConfig) -> (usize, usize) {
    let clamp = |raw: f64| raw.clamp(cfg.step_min as f64, cfg.step_max as f64) as usize;
    let k_r = clamp((cfg.feedback_a + cfg.feedback_b * loss).floor());
    let k_kl = clamp((cfg.feedback_a - cfg.feedback_b * loss).floor());
    (k_r, k_kl)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdoseModel {
    /// Regression network over `[u | eps]`; its output layer has a bias.
    pub r_params: MlpParams,
    /// One-hidden-layer Gaussian-noise transform.
    pub rt_params: MlpParams,
    /// KL critic over `[u | response]`; no output bias.
    pub kl_params: MlpParams,
    pub scaling: Standardizer,
    pub report: TrainReport,
}

fn generated_batch(
    r: &MlpParams,
    rt: &MlpParams,
    u: &Matrix,
    n_g: &Matrix,
) -> Result<(Matrix, crate::nn::ForwardCache, crate::nn::ForwardCache)> {
    let (eps, rt_cache) = rt.forward(n_g)?;
    let (zhat, r_cache) = r.forward(&u.hstack(&eps))?;
    Ok((zhat, r_cache, rt_cache))
}

/// Trains the generator/critic pair on the divergence between true and
/// generated joint distributions.
pub fn adose_train(data: &Dataset, cfg: &AdoseConfig, rng: &mut RngState) -> Result<AdoseModel> {
    cfg.validate()?;
    let n = data.len();
    if n < cfg.batch_b {
        return Err(Error::param(format!(
            "dataset has {n} rows; needs at least batch_b = {}",
            cfg.batch_b
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

    // Regression input is [u | eps]; output keeps its bias here, unlike the
    // additive-model regressor.
    let r_specs = cfg
        .r_specs
        .clone()
        .unwrap_or_else(|| regressor_specs(m + 1, cfg.hidden_width, cfg.leaky_slope, true));
    let kl_specs = cfg
        .kl_specs
        .clone()
        .unwrap_or_else(|| critic_specs(m + 1, cfg.hidden_width, cfg.leaky_slope));
    let rt_specs = noise_transform_specs(cfg.rt_hidden, cfg.leaky_slope);
    validate_specs(&r_specs)?;
    validate_specs(&kl_specs)?;
    if !r_specs.last().unwrap().has_bias {
        return Err(Error::param("generator output layer must carry a bias"));
    }
    if kl_specs.last().unwrap().has_bias {
        return Err(Error::param("critic output layer must not carry a bias"));
    }

    let mut r = xavier_init(&r_specs, rng)?;
    let mut rt = xavier_init(&rt_specs, rng)?;
    let mut kl = xavier_init(&kl_specs, rng)?;
    let mut adam_r = AdamState::new(&r, cfg.adam);
    let mut adam_rt = AdamState::new(&rt, cfg.adam);
    let mut adam_kl = AdamState::new(&kl, cfg.adam);

    let b = cfg.batch_b;
    let gaussian = DistSpec::Normal { mean: 0.0, sd: 1.0 };
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let idx = rng.sample_indices(n, b);
        let u = train.u.select_rows(&idx);
        let z = Matrix::column(idx.iter().map(|&i| train.z[i]).collect());
        let n_g = Matrix::column(gaussian.sample(b, rng)?);
        let true_in = u.hstack(&z);

        // iteration loss, before any update; it also drives the controller
        let loss = {
            let (zhat, _, _) = generated_batch(&r, &rt, &u, &n_g)?;
            let est_in = u.hstack(&zhat);
            let (loss, _, _, _) = critic_gradients(&kl, &true_in, &est_in)?;
            loss
        };
        if !loss.is_finite() {
            return Err(Error::non_finite(it, "divergence loss"));
        }
        loss_curve.push(loss);
        let (k_r, k_kl) = feedback_steps(loss, cfg);

        // generator phase: regressor and noise transform descend together
        for _ in 0..k_r {
            let (zhat, r_cache, rt_cache) = generated_batch(&r, &rt, &u, &n_g)?;
            let est_in = u.hstack(&zhat);
            let (_, _, _, est_in_grad) = critic_gradients(&kl, &true_in, &est_in)?;

            // critic input rows are [u | response]: column m is dL/d zhat
            let d_zhat = Matrix::column((0..b).map(|i| est_in_grad.get(i, m)).collect());
            let (r_grads, r_in_grad) = r.backward(&r_cache, &d_zhat)?;
            // generator input rows are [u | eps]: column m is dL/d eps
            let d_eps = Matrix::column((0..b).map(|i| r_in_grad.get(i, m)).collect());
            let (rt_grads, _) = rt.backward(&rt_cache, &d_eps)?;

            adam_step(&mut r, &r_grads, &mut adam_r, Direction::Descend)?;
            adam_step(&mut rt, &rt_grads, &mut adam_rt, Direction::Descend)?;
        }

        // critic phase against the updated generator
        let (zhat, _, _) = generated_batch(&r, &rt, &u, &n_g)?;
        let est_in = u.hstack(&zhat);
        for _ in 0..k_kl {
            let (_, kl_grads, _, _) = critic_gradients(&kl, &true_in, &est_in)?;
            adam_step(&mut kl, &kl_grads, &mut adam_kl, Direction::Ascend)?;
        }
    }

    let report = TrainReport {
        final_divergence: smoothed_tail(&loss_curve, cfg.smooth_frac),
        loss_curve,
        seed,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    Ok(AdoseModel {
        r_params: r,
        rt_params: rt,
        kl_params: kl,
        scaling,
        report,
    })
}

impl AdoseModel {
    /// Draws from the learned conditional response distribution at `u_row`
    /// by feeding fresh Gaussian noise through the trained transform.
    pub fn sample(&self, u_row: &[f64], n_draws: usize, rng: &mut RngState) -> Result<Vec<f64>> {
        let m = self.scaling.u_means.len();
        if u_row.len() != m {
            return Err(Error::shape(format!(
                "u has {} entries, model expects {m}",
                u_row.len()
            )));
        }
        if n_draws == 0 {
            return Ok(Vec::new());
        }
        let u_std: Vec<f64> = u_row
            .iter()
            .enumerate()
            .map(|(c, v)| (v - self.scaling.u_means[c]) / self.scaling.u_scales[c])
            .collect();
        let u = Matrix::from_fn(n_draws, m, |_, c| u_std[c]);
        let n_g = Matrix::column(
            DistSpec::Normal { mean: 0.0, sd: 1.0 }.sample(n_draws, rng)?,
        );
        let eps = self.rt_params.predict(&n_g)?;
        let zhat = self.r_params.predict(&u.hstack(&eps))?;
        Ok(self.scaling.invert_z(&zhat.col(0)))
    }

    /// Monte-Carlo conditional mean over `n_draws` samples.
    pub fn conditional_mean(
        &self,
        u_row: &[f64],
        n_draws: usize,
        rng: &mut RngState,
    ) -> Result<f64> {
        if n_draws == 0 {
            return Err(Error::param("conditional mean needs n_draws >= 1"));
        }
        let draws = self.sample(u_row, n_draws, rng)?;
        Ok(draws.iter().sum::<f64>() / n_draws as f64)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<AdoseModel> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedback_table_matches_the_stated_rule() {
        let cfg = AdoseConfig::default();
        assert_eq!(feedback_steps(0.0, &cfg), (30, 30));
        assert_eq!(feedback_steps(1.0, &cfg), (40, 20));
        // floor(30 - 50) = -20 clamps to step_min; floor(30 + 50) = 80
        assert_eq!(feedback_steps(-5.0, &cfg), (1, 80));
    }

    #[test]
    fn feedback_is_monotone_in_loss() {
        let cfg = AdoseConfig::default();
        let mut last_k_r = 0;
        for i in 0..100 {
            let loss = -6.0 + 0.12 * i as f64;
            let (k_r, _) = feedback_steps(loss, &cfg);
            assert!(k_r >= last_k_r, "k_r fell from {last_k_r} to {k_r}");
            last_k_r = k_r;
        }
    }

    fn quick_cfg(iterations: usize) -> AdoseConfig {
        AdoseConfig {
            batch_b: 32,
            iterations,
            hidden_width: 16,
            rt_hidden: 8,
            // keep unit tests fast; the controller still engages
            step_max: 5,
            ..AdoseConfig::default()
        }
    }

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = RngState::from_seed(seed);
        let u = DistSpec::Uniform { lo: -1.0, hi: 1.0 }
            .sample(n, &mut rng)
            .unwrap();
        let e = DistSpec::Normal {
            mean: 0.0,
            sd: 0.3,
        }
        .sample(n, &mut rng)
        .unwrap();
        let z: Vec<f64> = u.iter().zip(&e).map(|(u, e)| u + e).collect();
        Dataset::from_xy(&u, &z, "toy").unwrap()
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = toy_dataset(200, 1);
        let cfg = quick_cfg(25);
        let a = adose_train(&data, &cfg, &mut RngState::from_seed(3)).unwrap();
        let b = adose_train(&data, &cfg, &mut RngState::from_seed(3)).unwrap();
        assert_eq!(a.report.loss_curve, b.report.loss_curve);
        assert_eq!(a.r_params, b.r_params);
        assert_eq!(a.rt_params, b.rt_params);
    }

    #[test]
    fn severed_noise_path_gives_identical_draws() {
        let data = toy_dataset(200, 2);
        let mut model = adose_train(&data, &quick_cfg(20), &mut RngState::from_seed(4)).unwrap();
        let out = model.rt_params.layers.last_mut().unwrap();
        for i in 0..out.weight.data().len() {
            let (r, c) = (i / out.weight.cols(), i % out.weight.cols());
            out.weight.set(r, c, 0.0);
        }
        let draws = model.sample(&[0.5], 50, &mut RngState::from_seed(5)).unwrap();
        let first = draws[0];
        assert!(draws.iter().all(|&d| (d - first).abs() < 1e-12));
        assert!(
            (model
                .conditional_mean(&[0.5], 10, &mut RngState::from_seed(6))
                .unwrap()
                - first)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn zero_draws_is_empty() {
        let data = toy_dataset(200, 3);
        let model = adose_train(&data, &quick_cfg(5), &mut RngState::from_seed(7)).unwrap();
        assert!(model.sample(&[0.0], 0, &mut RngState::from_seed(8)).unwrap().is_empty());
        assert!(model.conditional_mean(&[0.0], 0, &mut RngState::from_seed(9)).is_err());
    }

    #[test]
    fn rejects_undersized_datasets_and_bad_steps() {
        let data = toy_dataset(20, 4);
        let cfg = AdoseConfig {
            batch_b: 32,
            ..quick_cfg(5)
        };
        assert!(adose_train(&data, &cfg, &mut RngState::from_seed(1)).is_err());
        let cfg = AdoseConfig {
            step_min: 0,
            ..quick_cfg(5)
        };
        assert!(adose_train(&toy_dataset(100, 5), &cfg, &mut RngState::from_seed(1)).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let data = toy_dataset(100, 6);
        let model = adose_train(&data, &quick_cfg(5), &mut RngState::from_seed(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = AdoseModel::load(&path).unwrap();
        assert_eq!(model.r_params, back.r_params);
        assert_eq!(model.kl_params, back.kl_params);
        let a = model.sample(&[0.1], 5, &mut RngState::from_seed(10)).unwrap();
        let b = back.sample(&[0.1], 5, &mut RngState::from_seed(10)).unwrap();
        assert_eq!(a, b);
    }
}
