//! Donsker-Varadhan divergence loss and a standalone neural mutual
//! information estimator.
//!
//! The loss on a minibatch of critic scores is
//! `mean(t_joint) - log(mean(exp(t_marginal)))`. The maximum over both score
//! vectors is subtracted from every entry before evaluating it; the shift
//! cancels identically between the two terms, so the stabilized value is
//! exact, not approximate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    adam_step, critic_specs, xavier_init, AdamConfig, AdamState, Direction, MlpGrads, MlpParams,
};
use crate::report::smoothed_tail;
use crate::rng::RngState;

/// Critic scores for one minibatch: `T` on jointly drawn pairs and on
/// recombined (marginal) pairs.
#[derive(Debug, Clone)]
pub struct DvBatch {
    t_joint: Vec<f64>,
    t_marginal: Vec<f64>,
}

impl DvBatch {
    pub fn new(t_joint: Vec<f64>, t_marginal: Vec<f64>) -> Result<Self> {
        if t_joint.len() != t_marginal.len() {
            return Err(Error::shape(format!(
                "joint and marginal score counts differ: {} vs {}",
                t_joint.len(),
                t_marginal.len()
            )));
        }
        if t_joint.len() < 2 {
            return Err(Error::param("divergence batch needs at least 2 scores"));
        }
        if t_joint.iter().chain(&t_marginal).any(|v| !v.is_finite()) {
            return Err(Error::param("non-finite critic score"));
        }
        Ok(DvBatch { t_joint, t_marginal })
    }

    pub fn t_joint(&self) -> &[f64] {
        &self.t_joint
    }

    pub fn t_marginal(&self) -> &[f64] {
        &self.t_marginal
    }
}

/// Donsker-Varadhan lower-bound value for one batch of critic scores.
pub fn dv_loss(batch: &DvBatch) -> f64 {
    let shift = batch
        .t_joint
        .iter()
        .chain(&batch.t_marginal)
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let b = batch.t_joint.len() as f64;
    let joint_mean = batch.t_joint.iter().map(|t| t - shift).sum::<f64>() / b;
    let marginal_mean_exp = batch
        .t_marginal
        .iter()
        .map(|t| (t - shift).exp())
        .sum::<f64>()
        / b;
    joint_mean - marginal_mean_exp.ln()
}

/// Softmax weights of the marginal scores: the (negated) gradient of
/// `dv_loss` with respect to each marginal score.
pub(crate) fn marginal_softmax(t_marginal: &[f64]) -> Vec<f64> {
    let shift = t_marginal.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = t_marginal.iter().map(|t| (t - shift).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Splits a `2b`-row batch into joint and marginal critic inputs.
///
/// Rows are `[eps | u]`. Joint pairs keep row `i`'s residual with row `i`'s
/// regressors; marginal pairs recombine row `i+b`'s residual with row `i`'s
/// regressors, breaking the dependence. The split is a pure function of row
/// order — there is no internal shuffle.
pub fn marginal_pairing(u: &Matrix, eps: &Matrix) -> Result<(Matrix, Matrix)> {
    if u.rows() != eps.rows() {
        return Err(Error::shape(format!(
            "regressors have {} rows, residuals {}",
            u.rows(),
            eps.rows()
        )));
    }
    if u.rows() % 2 != 0 || u.rows() < 4 {
        return Err(Error::shape(format!(
            "pairing needs an even row count >= 4, got {}",
            u.rows()
        )));
    }
    let b = u.rows() / 2;
    let first: Vec<usize> = (0..b).collect();
    let second: Vec<usize> = (b..2 * b).collect();
    let joint = eps.select_rows(&first).hstack(&u.select_rows(&first));
    let marginal = eps.select_rows(&second).hstack(&u.select_rows(&first));
    Ok((joint, marginal))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MineConfig {
    pub iterations: usize,
    /// Half-batch size b; each iteration draws 2b sample rows. Clamped to
    /// n/4 so every iteration sees a fresh minibatch.
    pub batch_half: usize,
    pub hidden_width: usize,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
    /// Fraction of trailing iterations averaged into the reported scalar.
    pub smooth_frac: f64,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig {
            iterations: 3000,
            batch_half: 256,
            hidden_width: 32,
            leaky_slope: 0.2,
            adam: AdamConfig::default(),
            smooth_frac: 0.1,
        }
    }
}

/// Result of one mutual-information estimation run.
///
/// `mi_nats` is the raw smoothed tail of the loss curve and may dip slightly
/// below zero on independent data; [`MineEstimate::reported`] clamps for
/// user-facing output while the curve keeps the raw values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MineEstimate {
    pub mi_nats: f64,
    pub loss_curve: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

impl MineEstimate {
    pub fn reported(&self) -> f64 {
        self.mi_nats.max(0.0)
    }

    /// Two-column CSV `(iteration, loss)`.
    pub fn write_curve_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("iteration,loss\n");
        for (i, loss) in self.loss_curve.iter().enumerate() {
            out.push_str(&format!("{i},{loss}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Accumulates critic gradients for one divergence step: `+1/b` per joint
/// score, `-softmax` per marginal score. Returns the summed parameter
/// gradients and each side's input gradient.
pub(crate) fn critic_gradients(
    critic: &MlpParams,
    joint: &Matrix,
    marginal: &Matrix,
) -> Result<(f64, MlpGrads, Matrix, Matrix)> {
    let (t_joint, joint_cache) = critic.forward(joint)?;
    let (t_marginal, marginal_cache) = critic.forward(marginal)?;
    let batch = DvBatch::new(t_joint.col(0), t_marginal.col(0))?;
    let loss = dv_loss(&batch);

    let b = batch.t_joint().len() as f64;
    let joint_grad = Matrix::column(vec![1.0 / b; batch.t_joint().len()]);
    let weights = marginal_softmax(batch.t_marginal());
    let marginal_grad = Matrix::column(weights.into_iter().map(|w| -w).collect());

    let (mut grads, joint_input_grad) = critic.backward(&joint_cache, &joint_grad)?;
    let (marginal_grads, marginal_input_grad) =
        critic.backward(&marginal_cache, &marginal_grad)?;
    grads.accumulate(&marginal_grads);
    Ok((loss, grads, joint_input_grad, marginal_input_grad))
}

/// Trains a fresh statistics network by Adam ascent on the divergence bound
/// and reports the smoothed tail of the loss curve as the estimate.
pub fn estimate_mi(
    x: &Matrix,
    y: &Matrix,
    cfg: &MineConfig,
    rng: &mut RngState,
) -> Result<MineEstimate> {
    let n = x.rows();
    if y.rows() != n {
        return Err(Error::shape(format!(
            "x has {n} rows, y has {}",
            y.rows()
        )));
    }
    if n < 8 {
        return Err(Error::param("mutual information estimation needs n >= 8"));
    }
    if x.cols() == 0 || y.cols() == 0 {
        return Err(Error::param("variables need at least one column"));
    }
    let b = cfg.batch_half.min(n / 4).max(2);
    let seed = rng.seed();

    let specs = critic_specs(x.cols() + y.cols(), cfg.hidden_width, cfg.leaky_slope);
    let mut critic = xavier_init(&specs, rng)?;
    let mut adam = AdamState::new(&critic, cfg.adam);

    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let idx = rng.sample_indices(n, 2 * b);
        let xb = x.select_rows(&idx);
        let yb = y.select_rows(&idx);
        let (joint, marginal) = marginal_pairing(&yb, &xb)?;

        let (loss, grads, _, _) = critic_gradients(&critic, &joint, &marginal)?;
        if !loss.is_finite() {
            return Err(Error::non_finite(it, "divergence loss"));
        }
        loss_curve.push(loss);
        adam_step(&mut critic, &grads, &mut adam, Direction::Ascend)?;
    }

    Ok(MineEstimate {
        mi_nats: smoothed_tail(&loss_curve, cfg.smooth_frac),
        loss_curve,
        iterations: cfg.iterations,
        seed,
    })
}
