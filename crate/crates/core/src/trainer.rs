//! Full-batch sharpness-aware Hessian-free training.
//!
//! One epoch:
//!
//! 1. `g = ∇E(y)` on the training set
//! 2. `ε = rho g / |g|`, `ŷ = y + ε`
//! 3. `ĝ = ∇E(ŷ)`
//! 4. curvature operator `J^T J + λD + γI` at `ŷ` (or at `y` in gradient-only mode)
//! 5. `Δ` from CG on `(J^T J + λD + γI) Δ = -ĝ`
//! 6. backtracking on `E(y + ηΔ)`, then damping adaptation from the
//!    reduction ratio
//!
//! Validation RMSE after every epoch drives early stopping; the parameters of
//! the best validation epoch are returned.

use std::time::Instant;

use serde::Serialize;

use crate::cg::{solve_newton_step, CgConfig};
use crate::curvature::HvpOperator;
use crate::dataset::{DatasetSplit, InteractionIndex};
use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::model::{gradient, init_from_hyperparams, objective, Hyperparams, ParamVector};
use crate::sam::{perturbed_point, sam_perturbation, SamMode};
use crate::vector::{axpy, dot, norm};

pub const GAMMA_MIN: f64 = 1e-8;
pub const GAMMA_MAX: f64 = 1e8;
/// Sufficient-decrease constant of the backtracking rule.
pub const ARMIJO_C: f64 = 1e-4;
pub const MAX_HALVINGS: usize = 20;

/// One line of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training objective after the epoch's update.
    #[serde(rename = "E")]
    pub objective: f64,
    pub val_rmse: f64,
    pub cg_iters: usize,
    pub step_norm: f64,
    pub gamma: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch of the best validation RMSE; 0 if no epoch completed.
    pub best_epoch: usize,
    pub best_validation_rmse: f64,
    pub stopped_reason: StopReason,
    pub total_seconds: f64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.records.len()
    }
}

/// Patience-based early stopping on a metric where lower is better.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Record `metric` for `epoch`; returns true if it is a new best.
    /// Any strict decrease counts as an improvement.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        if metric < self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Partition used to monitor generalization: validation, or the training
/// set when the split has no validation entries.
pub(crate) fn monitor_set(split: &DatasetSplit) -> &InteractionIndex {
    if split.validation.is_empty() {
        log::warn!("validation partition is empty; monitoring training RMSE instead");
        &split.train
    } else {
        &split.validation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Accepted step scale; zero means the step was rejected.
    pub eta: f64,
    /// Objective at the accepted point (the starting objective on rejection).
    pub objective: f64,
}

/// Backtracking line search along a descent direction.
///
/// Starts at `η = 1` and halves while
/// `E(y + ηΔ) > E(y) + c η <g, Δ>`, at most [`MAX_HALVINGS`] times.
/// `slope` is `<g, Δ>`; `eval(η)` returns `E(y + ηΔ)`.
pub fn step_control<F>(e_before: f64, slope: f64, mut eval: F) -> Result<StepControl>
where
    F: FnMut(f64) -> Result<f64>,
{
    let slope = slope.min(0.0);
    let mut eta = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let e = eval(eta)?;
        if e <= e_before + ARMIJO_C * eta * slope {
            return Ok(StepControl { eta, objective: e });
        }
        eta *= 0.5;
    }
    Ok(StepControl {
        eta: 0.0,
        objective: e_before,
    })
}

/// Levenberg-Marquardt style damping update from the ratio of actual to
/// model-predicted decrease.
pub fn adapt_damping(gamma: f64, reduction_ratio: f64) -> f64 {
    let next = if !reduction_ratio.is_finite() {
        gamma
    } else if reduction_ratio > 0.75 {
        gamma / 1.5
    } else if reduction_ratio < 0.25 {
        gamma * 1.5
    } else {
        gamma
    };
    next.clamp(GAMMA_MIN, GAMMA_MAX)
}

/// What one outer iteration did.
#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub objective_before: f64,
    pub objective_after: f64,
    /// CG solution `Δ` before step scaling.
    pub delta: Vec<f64>,
    pub eta: f64,
    pub cg_iters: usize,
    pub cg_converged: bool,
    pub gamma_used: f64,
    pub gamma_next: f64,
    pub reduction_ratio: f64,
}

/// Stateful second-order trainer; [`train_sslf`] drives it with early stopping.
pub struct SslfTrainer<'a> {
    train: &'a InteractionIndex,
    hp: Hyperparams,
    params: ParamVector,
    gamma: f64,
    prev_delta: Option<Vec<f64>>,
}

impl<'a> SslfTrainer<'a> {
    pub fn new(train: &'a InteractionIndex, hp: Hyperparams) -> Result<Self> {
        let params = init_from_hyperparams(train.n_users(), train.n_items(), &hp);
        Self::with_params(train, hp, params)
    }

    pub fn with_params(train: &'a InteractionIndex, hp: Hyperparams, params: ParamVector) -> Result<Self> {
        hp.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        params.check_index(train)?;
        if params.f() != hp.f {
            return Err(Error::DimensionMismatch {
                expected: hp.f,
                found: params.f(),
            });
        }
        Ok(Self {
            train,
            gamma: hp.gamma,
            hp,
            params,
            prev_delta: None,
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn cg_config(&self) -> CgConfig {
        CgConfig {
            max_iters: self.hp.cg_max_iters.min(self.params.len()).max(1),
            rel_tol: self.hp.cg_rel_tol,
            abs_tol: self.hp.cg_abs_tol,
        }
    }

    /// Run one outer iteration and update the parameters in place.
    pub fn step(&mut self) -> Result<EpochOutcome> {
        let hp = self.hp;
        let train = self.train;
        let e_before = objective(&self.params, train, hp.lambda)?;
        if !e_before.is_finite() {
            return Err(Error::NumericalDivergence { iteration: 0 });
        }
        let g = gradient(&self.params, train, hp.lambda)?;

        let pert = sam_perturbation(&g, hp.rho);
        let perturbed = if pert.is_zero() {
            None
        } else {
            Some(perturbed_point(&self.params, &pert)?)
        };
        let g_eval = match &perturbed {
            Some(p) => gradient(p, train, hp.lambda)?,
            None => g.clone(),
        };
        let curvature_point = match (hp.sam_mode, &perturbed) {
            (SamMode::GradientAndCurvature, Some(p)) => p,
            _ => &self.params,
        };

        let gamma_used = self.gamma;
        let op = HvpOperator::new(curvature_point, train, hp.lambda, gamma_used)?;
        let x0 = if hp.warm_start {
            self.prev_delta.as_deref()
        } else {
            None
        };
        let cg = solve_newton_step(&op, &g_eval, x0, &self.cg_config())?;
        let delta = cg.delta;

        // Quadratic model along Δ: m(η) = η <ĝ,Δ> + η²/2 <Δ,AΔ>.
        let lin = dot(&g_eval, &delta);
        let quad = dot(&delta, &op.apply(&delta)?);

        let mut trial = self.params.clone();
        let base = self.params.values();
        let sc = step_control(e_before, dot(&g, &delta), |eta| {
            for ((t, y), d) in trial.values_mut().iter_mut().zip(base).zip(&delta) {
                *t = y + eta * d;
            }
            objective(&trial, train, hp.lambda)
        })?;

        let (reduction_ratio, gamma_next) = if sc.eta > 0.0 {
            axpy(sc.eta, &delta, self.params.values_mut());
            let predicted = -(sc.eta * lin + 0.5 * sc.eta * sc.eta * quad);
            let ratio = (e_before - sc.objective) / predicted;
            let next = if hp.adapt_damping {
                adapt_damping(gamma_used, ratio)
            } else {
                gamma_used
            };
            (ratio, next)
        } else if hp.adapt_damping {
            (f64::NAN, (gamma_used * 2.0).clamp(GAMMA_MIN, GAMMA_MAX))
        } else {
            (f64::NAN, gamma_used)
        };
        self.gamma = gamma_next;

        let outcome = EpochOutcome {
            objective_before: e_before,
            objective_after: sc.objective,
            eta: sc.eta,
            cg_iters: cg.iters,
            cg_converged: cg.converged,
            gamma_used,
            gamma_next,
            reduction_ratio,
            delta,
        };
        if hp.warm_start {
            self.prev_delta = Some(outcome.delta.clone());
        }
        Ok(outcome)
    }
}

/// Train with early stopping; returns the best-validation parameters.
pub fn train_sslf(split: &DatasetSplit, hp: &Hyperparams) -> Result<(ParamVector, TrainReport)> {
    train_sslf_with(split, hp, |_| {})
}

/// [`train_sslf`] with a callback invoked after every completed epoch.
pub fn train_sslf_with<F>(
    split: &DatasetSplit,
    hp: &Hyperparams,
    mut on_epoch: F,
) -> Result<(ParamVector, TrainReport)>
where
    F: FnMut(&EpochRecord),
{
    let start = Instant::now();
    let mut trainer = SslfTrainer::new(&split.train, *hp)?;
    let monitor = monitor_set(split);

    let mut stopper = EarlyStopping::new(hp.patience);
    let mut best_params = trainer.params().clone();
    let mut records = Vec::new();
    let mut stopped_reason = StopReason::MaxEpochs;

    for epoch in 1..=hp.max_epochs {
        let epoch_start = Instant::now();
        let outcome = match trainer.step() {
            Ok(o) => o,
            Err(Error::NumericalDivergence { iteration }) => {
                log::warn!("epoch {epoch}: numerical divergence in CG iteration {iteration}");
                stopped_reason = StopReason::Divergence;
                break;
            }
            Err(e) => return Err(e),
        };
        let val = rmse(trainer.params(), monitor)?.rmse;
        if !outcome.objective_after.is_finite() || !val.is_finite() {
            log::warn!("epoch {epoch}: non-finite objective or RMSE");
            stopped_reason = StopReason::Divergence;
            break;
        }
        let record = EpochRecord {
            epoch,
            objective: outcome.objective_after,
            val_rmse: val,
            cg_iters: outcome.cg_iters,
            step_norm: outcome.eta * norm(&outcome.delta),
            gamma: outcome.gamma_used,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        log::debug!("{record:?}");
        on_epoch(&record);
        records.push(record);

        if stopper.observe(epoch, val) {
            best_params = trainer.params().clone();
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

/// One point of a hyperparameter grid together with its outcome.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub hp: Hyperparams,
    pub report: TrainReport,
}

/// Train once per `(lambda, rho, gamma)` combination on top of `base` and
/// return every run plus the index of the one with the lowest best
/// validation RMSE (earliest wins ties).
pub fn grid_search(
    split: &DatasetSplit,
    base: &Hyperparams,
    lambdas: &[f64],
    rhos: &[f64],
    gammas: &[f64],
) -> Result<(Vec<GridPoint>, usize, ParamVector)> {
    let mut points: Vec<GridPoint> = Vec::new();
    let mut best: Option<(usize, ParamVector)> = None;
    for &lambda in lambdas {
        for &rho in rhos {
            for &gamma in gammas {
                let hp = Hyperparams {
                    lambda,
                    rho,
                    gamma,
                    ..*base
                };
                let (params, report) = train_sslf(split, &hp)?;
                log::info!(
                    "grid lambda={lambda} rho={rho} gamma={gamma}: val {} at epoch {}",
                    report.best_validation_rmse,
                    report.best_epoch
                );
                let better = match &best {
                    None => true,
                    Some((k, _)) => {
                        report.best_validation_rmse < points[*k].report.best_validation_rmse
                    }
                };
                if better {
                    best = Some((points.len(), params));
                }
                points.push(GridPoint { hp, report });
            }
        }
    }
    let (k, params) = best.ok_or_else(|| Error::InvalidHyperparameter("empty grid".into()))?;
    Ok((points, k, params))
}
