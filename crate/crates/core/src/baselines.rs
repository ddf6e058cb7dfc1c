//! First-order latent factor trainers: per-entry SGD and Adam.
//!
//! Both visit the training entries in a freshly shuffled order every epoch
//! and update the user and item factors of one entry at a time, using the
//! pre-update user factor for the item update.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::model::{init_params, objective, ParamVector};
use crate::trainer::{monitor_set, EarlyStopping, EpochRecord, StopReason, TrainReport};
use crate::vector::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderConfig {
    pub f: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lambda: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub init_low: f64,
    pub init_high: f64,
    pub seed: u64,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        Self {
            f: 20,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lambda: 0.02,
            max_epochs: 500,
            patience: 10,
            init_low: 0.0,
            init_high: 0.004,
            seed: 42,
        }
    }
}

impl FirstOrderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparameter(msg));
        if self.f == 0 {
            return bad("f must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be > 0, got {}", self.adam_eps));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.init_low.is_finite() && self.init_high.is_finite())
            || self.init_low > self.init_high
        {
            return bad(format!("init range [{}, {}) is invalid", self.init_low, self.init_high));
        }
        Ok(())
    }
}

/// One SGD update for entry `(u, i, r)`.
pub fn sgd_entry_update(params: &mut ParamVector, u: usize, i: usize, r: f64, lr: f64, lambda: f64) {
    let f = params.f();
    let off = params.item_offset();
    let (users, items) = params.values_mut().split_at_mut(off);
    let yu = &mut users[u * f..(u + 1) * f];
    let yi = &mut items[i * f..(i + 1) * f];
    let e = r - dot(yu, yi);
    for d in 0..f {
        let u_old = yu[d];
        yu[d] += lr * (e * yi[d] - lambda * u_old);
        yi[d] += lr * (e * u_old - lambda * yi[d]);
    }
}

/// Adam moment estimates over the whole parameter vector with one global
/// step counter advanced per entry update.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(p: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; p],
            v: vec![0.0; p],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One Adam update for entry `(u, i, r)`.
    pub fn entry_update(
        &mut self,
        params: &mut ParamVector,
        u: usize,
        i: usize,
        r: f64,
        lr: f64,
        lambda: f64,
    ) {
        let f = params.f();
        let u0 = params.user_index(u, 0);
        let i0 = params.item_index(i, 0);
        let e = r - dot(params.user(u), params.item(i));
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);

        let y = params.values_mut();
        for d in 0..f {
            let (ju, ji) = (u0 + d, i0 + d);
            let (yu, yi) = (y[ju], y[ji]);
            let gu = -e * yi + lambda * yu;
            let gi = -e * yu + lambda * yi;
            for (j, g) in [(ju, gu), (ji, gi)] {
                self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * g;
                self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[j] / bc1;
                let v_hat = self.v[j] / bc2;
                y[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

pub fn train_sgd(split: &DatasetSplit, cfg: &FirstOrderConfig) -> Result<(ParamVector, TrainReport)> {
    train_sgd_with(split, cfg, |_| {})
}

pub fn train_sgd_with<F: FnMut(&EpochRecord)>(
    split: &DatasetSplit,
    cfg: &FirstOrderConfig,
    on_epoch: F,
) -> Result<(ParamVector, TrainReport)> {
    let (lr, lambda) = (cfg.learning_rate, cfg.lambda);
    run_first_order(split, cfg, on_epoch, |params, (u, i, r)| {
        sgd_entry_update(params, u, i, r, lr, lambda)
    })
}

pub fn train_adam(split: &DatasetSplit, cfg: &FirstOrderConfig) -> Result<(ParamVector, TrainReport)> {
    train_adam_with(split, cfg, |_| {})
}

pub fn train_adam_with<F: FnMut(&EpochRecord)>(
    split: &DatasetSplit,
    cfg: &FirstOrderConfig,
    on_epoch: F,
) -> Result<(ParamVector, TrainReport)> {
    let p = (split.n_users() + split.n_items()) * cfg.f;
    let mut state = AdamState::new(p, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let (lr, lambda) = (cfg.learning_rate, cfg.lambda);
    run_first_order(split, cfg, on_epoch, |params, (u, i, r)| {
        state.entry_update(params, u, i, r, lr, lambda)
    })
}

fn run_first_order<F, U>(
    split: &DatasetSplit,
    cfg: &FirstOrderConfig,
    mut on_epoch: F,
    mut update: U,
) -> Result<(ParamVector, TrainReport)>
where
    F: FnMut(&EpochRecord),
    U: FnMut(&mut ParamVector, (usize, usize, f64)),
{
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let start = Instant::now();
    let monitor = monitor_set(split);
    let mut params = init_params(
        split.n_users(),
        split.n_items(),
        cfg.f,
        cfg.init_low,
        cfg.init_high,
        cfg.seed,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Keep the shuffle stream independent of the initialization stream.
    rng.set_stream(1);

    let entries: Vec<(usize, usize, f64)> = split.train.entries().collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut records = Vec::new();
    let mut stopped_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let epoch_start = Instant::now();
        let before = params.values().to_vec();
        order.shuffle(&mut rng);
        for &k in &order {
            update(&mut params, entries[k]);
        }
        let e = objective(&params, &split.train, cfg.lambda)?;
        let val = rmse(&params, monitor)?.rmse;
        if !e.is_finite() || !val.is_finite() {
            log::warn!("epoch {epoch}: non-finite objective or RMSE");
            stopped_reason = StopReason::Divergence;
            break;
        }
        let step_norm = before
            .iter()
            .zip(params.values())
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        let record = EpochRecord {
            epoch,
            objective: e,
            val_rmse: val,
            cg_iters: 0,
            step_norm,
            gamma: 0.0,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        records.push(record);

        if stopper.observe(epoch, val) {
            best_params = params.clone();
        } else if stopper.should_stop() {
            stopped_reason = StopReason::Patience;
            break;
        }
    }

    let report = TrainReport {
        records,
        best_epoch: stopper.best_epoch(),
        best_validation_rmse: stopper.best(),
        stopped_reason,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((best_params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_fixed_point_at_exact_fit() {
        let mut p = ParamVector::from_values(1, 1, 1, vec![1.0, 1.0]).unwrap();
        sgd_entry_update(&mut p, 0, 0, 1.0, 0.1, 0.0);
        assert_eq!(p.values(), &[1.0, 1.0]);
    }

    #[test]
    fn sgd_uses_pre_update_user_factor() {
        // e = 1 - 1*2 = -1; yu' = 1 + 0.1*(-1*2) = 0.8; yi' = 2 + 0.1*(-1*1) = 1.9
        let mut p = ParamVector::from_values(1, 1, 1, vec![1.0, 2.0]).unwrap();
        sgd_entry_update(&mut p, 0, 0, 1.0, 0.1, 0.0);
        assert!((p.values()[0] - 0.8).abs() < 1e-15);
        assert!((p.values()[1] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut p = ParamVector::from_values(1, 1, 1, vec![1.0, 1.0]).unwrap();
        let mut s = AdamState::new(2, 0.9, 0.999, 1e-8);
        s.entry_update(&mut p, 0, 0, 1.0, 0.01, 0.0);
        assert_eq!(p.values(), &[1.0, 1.0]);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn adam_bias_correction_recovers_gradient_at_first_step() {
        // At t = 1, m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = ParamVector::from_values(1, 1, 1, vec![0.5, 2.0]).unwrap();
        let mut s = AdamState::new(2, 0.9, 0.999, 1e-8);
        let g_u = -(3.0 - 1.0) * 2.0;
        s.entry_update(&mut p, 0, 0, 3.0, 0.1, 0.0);
        let m_hat = s.m[0] / (1.0 - 0.9);
        assert!((m_hat - g_u).abs() < 1e-12);
        let expected = 0.5 - 0.1 * g_u / (g_u.abs() + 1e-8);
        assert!((p.values()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(FirstOrderConfig::default().validate().is_ok());
        let bad = FirstOrderConfig {
            adam_beta1: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = FirstOrderConfig {
            learning_rate: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
