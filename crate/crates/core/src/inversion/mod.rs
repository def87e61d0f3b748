//! Training loop: initial estimate, masked forward/adjoint iterations with
//! Adam, scheduled subregion updates, and the transfer-learning workflows.

mod log;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use self::log::{read_log_csv, write_log_csv, LogRow, LOG_HEADER};

use crate::em::{Backpropagation, ForwardModel, Initializer, MeasurementSet, PermittivityMap, Setup};
use crate::error::{Error, Result};
use crate::net::{net_init, Activation, Checkpoint, NetworkParams};
use crate::objective::{adam_step, AdamConfig, AdamState, LossWeights, Objective};
use crate::subregion::{
    threshold_mask, update_mask, BinaryMask, MaskUpdate, Schedule, ScheduleAction, StabilityTracker,
    DEFAULT_MIN_UPDATE_ITER, DEFAULT_PERIOD, DEFAULT_WINDOW,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub max_iters: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub threshold_period: usize,
    pub min_update_iter: usize,
    pub stability_window: usize,
    pub seed: u64,
    pub activation: Activation,
    /// Stop when the relative change of the total loss falls below this; 0
    /// runs the full budget.
    pub stop_tol: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            lr: 1e-3,
            weights: LossWeights::default(),
            threshold_period: DEFAULT_PERIOD,
            min_update_iter: DEFAULT_MIN_UPDATE_ITER,
            stability_window: DEFAULT_WINDOW,
            seed: 0,
            activation: Activation::Glow,
            stop_tol: 0.0,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.schedule()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.stability_window == 0 {
            return Err(Error::Config("stability window must be positive".into()));
        }
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            return Err(Error::Config(format!("stop_tol must be non-negative, got {}", self.stop_tol)));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.threshold_period, self.min_update_iter)
    }
}

/// Optional inputs of a run beyond measurements, setup and config.
#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Starting network; a fresh seeded network when absent.
    pub init_params: Option<&'a NetworkParams>,
    /// Source of the network input; backpropagation when absent.
    pub initializer: Option<&'a dyn Initializer>,
    /// Ground truth for the per-iteration relative error.
    pub truth: Option<&'a PermittivityMap>,
    /// Prebuilt operators for `setup`, reused across runs.
    pub model: Option<&'a ForwardModel>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Best-iterate estimate as seen by the forward model (background off the mask).
    pub eps_hat: PermittivityMap,
    /// Best-iterate network output over the whole grid.
    pub raw: PermittivityMap,
    /// Network input ε̂⁽⁰⁾.
    pub initial_estimate: PermittivityMap,
    pub initial_mask: BinaryMask,
    /// Mask in force when the run ended.
    pub mask: BinaryMask,
    /// Iterations at which the mask changed, with the new mask.
    pub mask_updates: Vec<(usize, BinaryMask)>,
    pub log: Vec<LogRow>,
    pub wall_time: Duration,
    pub iterations: usize,
    pub best_iteration: usize,
    /// Parameters at the best iteration.
    pub params: NetworkParams,
    /// Parameters after the last update.
    pub final_params: NetworkParams,
    pub activation: Activation,
    pub grid_fingerprint: String,
}

impl ReconstructionResult {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            activation: self.activation,
            fingerprint: self.grid_fingerprint.clone(),
        }
    }

    pub fn best_row(&self) -> &LogRow {
        &self.log[self.best_iteration - 1]
    }
}

/// ‖ε_true − ε̂‖_F / ‖ε_true‖_F.
pub fn relative_error(truth: &PermittivityMap, estimate: &PermittivityMap) -> Result<f64> {
    estimate.check_n_side(truth.n_side())?;
    let num: f64 = truth
        .values
        .iter()
        .zip(estimate.values.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let den = truth.frobenius_norm();
    if den == 0.0 {
        return Err(Error::Config("reference map has zero norm".into()));
    }
    Ok(num.sqrt() / den)
}

/// Reconstructs the permittivity from `meas` with default options.
pub fn invert(
    meas: &MeasurementSet,
    setup: &Setup,
    config: &InversionConfig,
    init_params: Option<&NetworkParams>,
) -> Result<ReconstructionResult> {
    invert_with(
        meas,
        setup,
        config,
        RunOptions {
            init_params,
            ..RunOptions::default()
        },
    )
}

pub fn invert_with(
    meas: &MeasurementSet,
    setup: &Setup,
    config: &InversionConfig,
    options: RunOptions<'_>,
) -> Result<ReconstructionResult> {
    let started = Instant::now();
    config.validate()?;
    setup.validate()?;
    meas.check_setup(setup)?;
    let schedule = config.schedule()?;
    let owned_model;
    let model = match options.model {
        Some(m) => {
            if m.setup != *setup {
                return Err(Error::Config("prebuilt forward model belongs to a different setup".into()));
            }
            m
        }
        None => {
            owned_model = ForwardModel::new(setup)?;
            &owned_model
        }
    };
    if let Some(t) = options.truth {
        t.check_n_side(setup.n_side)?;
    }

    let input = match options.initializer {
        Some(init) => init.initial_estimate(meas, setup, &model.greens)?,
        None => Backpropagation.initial_estimate(meas, setup, &model.greens)?,
    };
    let mut initial_mask = threshold_mask(&input);
    if initial_mask.is_empty() {
        ::log::warn!("initial estimate has no active cells; using the whole domain");
        initial_mask = BinaryMask::full(setup.n_side);
    }

    let mut params = match options.init_params {
        Some(p) => {
            p.validate()?;
            if p.n_side != setup.n_side {
                return Err(Error::Shape(format!(
                    "initial network is for a {0}x{0} grid, setup has {1}x{1}",
                    p.n_side, setup.n_side
                )));
            }
            p.clone()
        }
        None => net_init(config.seed, setup.n_side),
    };

    let objective = Objective::new(model, &input, meas, config.weights, config.activation)?;
    let mut adam = AdamState::new(&params, AdamConfig::with_lr(config.lr));
    let mut mask = initial_mask.clone();
    let mut tracker = StabilityTracker::new(config.stability_window);
    tracker.push(initial_mask.count());
    let mut first_update = true;
    let mut mask_updates = Vec::new();
    let mut log = Vec::with_capacity(config.max_iters);

    let mut best: Option<(f64, usize, NetworkParams, PermittivityMap, PermittivityMap)> = None;
    let mut prev_total = f64::NAN;

    for k in 1..=config.max_iters {
        let eval = objective.evaluate(&params, &mask, true)?;
        let b = eval.breakdown;
        if !b.is_finite() {
            return Err(Error::NonFinite {
                iter: k,
                detail: format!("data={} bound={} tv={}", b.data, b.bound, b.tv),
            });
        }
        let rel_err = match options.truth {
            Some(t) => Some(relative_error(t, &eval.effective)?),
            None => None,
        };
        log.push(LogRow {
            iter: k,
            data: b.data,
            bound: b.bound,
            tv: b.tv,
            total: b.total,
            rel_err,
            n_active_cells: mask.count(),
        });
        if best.as_ref().is_none_or(|(t, ..)| b.total < *t) {
            best = Some((b.total, k, params.clone(), eval.effective.clone(), eval.raw.clone()));
        }

        let grad = eval.gradient.as_ref().expect("gradient requested");
        if !grad.is_finite() {
            return Err(Error::NonFinite {
                iter: k,
                detail: "gradient contains non-finite entries".into(),
            });
        }
        adam_step(&mut params, grad, &mut adam)?;

        match schedule.action(k) {
            ScheduleAction::None => {}
            action => {
                let proposed = threshold_mask(&eval.raw);
                let stable = tracker.update(proposed.count());
                ::log::debug!("iteration {k}: {} cells above threshold, stable={stable}", proposed.count());
                if action == ScheduleAction::ThresholdAndMaybeUpdate && stable {
                    if let MaskUpdate::Updated(next) = update_mask(&mask, &proposed, &initial_mask, first_update) {
                        first_update = false;
                        if next != mask {
                            ::log::info!("iteration {k}: mask {} -> {} cells", mask.count(), next.count());
                            mask = next;
                            mask_updates.push((k, mask.clone()));
                        }
                    }
                }
            }
        }

        if config.stop_tol > 0.0 && prev_total.is_finite() {
            let change = (prev_total - b.total).abs() / prev_total.abs().max(f64::MIN_POSITIVE);
            if change < config.stop_tol {
                break;
            }
        }
        prev_total = b.total;
    }

    let (_, best_iteration, best_params, eps_hat, raw) = match best {
        Some(b) => b,
        None => {
            let eval = objective.evaluate(&params, &mask, false)?;
            (eval.breakdown.total, 0, params.clone(), eval.effective, eval.raw)
        }
    };
    Ok(ReconstructionResult {
        eps_hat,
        raw,
        initial_estimate: input,
        initial_mask,
        mask,
        mask_updates,
        iterations: log.len(),
        log,
        wall_time: started.elapsed(),
        best_iteration,
        params: best_params,
        final_params: params,
        activation: config.activation,
        grid_fingerprint: setup.grid_fingerprint(),
    })
}

/// Trains on measurements of the defect-free object and returns the network
/// as a checkpoint for later fine-tuning.
pub fn pretrain(
    sound_meas: &MeasurementSet,
    setup: &Setup,
    config: &InversionConfig,
) -> Result<(Checkpoint, ReconstructionResult)> {
    let result = invert(sound_meas, setup, config, None)?;
    Ok((result.checkpoint(), result))
}

/// Runs an inversion starting from a pretrained network. The network input
/// is recomputed from `defect_meas`.
pub fn finetune(
    checkpoint: &Checkpoint,
    defect_meas: &MeasurementSet,
    setup: &Setup,
    config: &InversionConfig,
) -> Result<ReconstructionResult> {
    finetune_with(checkpoint, defect_meas, setup, config, RunOptions::default())
}

pub fn finetune_with(
    checkpoint: &Checkpoint,
    defect_meas: &MeasurementSet,
    setup: &Setup,
    config: &InversionConfig,
    options: RunOptions<'_>,
) -> Result<ReconstructionResult> {
    checkpoint.check_fingerprint(&setup.grid_fingerprint())?;
    let mut config = *config;
    if config.activation != checkpoint.activation {
        ::log::warn!(
            "checkpoint was trained with {}, overriding configured {}",
            checkpoint.activation,
            config.activation
        );
        config.activation = checkpoint.activation;
    }
    invert_with(
        defect_meas,
        setup,
        &config,
        RunOptions {
            init_params: Some(&checkpoint.params),
            ..options
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn relative_error_fixtures() {
        let mut t = PermittivityMap::background(2);
        t.values[[1, 1]] = Complex64::new(2.0, -1.0);
        assert_eq!(relative_error(&t, &t).unwrap(), 0.0);
        let mut twice = t.clone();
        twice.values.mapv_inplace(|v| 2.0 * v);
        assert!((relative_error(&t, &twice).unwrap() - 1.0).abs() < 1e-15);
        // ‖diag(0, .., 0.5)‖ / √(1 + 1 + 1 + 5) on the fixture.
        let mut est = t.clone();
        est.values[[1, 1]] = Complex64::new(1.5, -1.0);
        assert!((relative_error(&t, &est).unwrap() - 0.5 / 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(InversionConfig::default().validate().is_ok());
        let bad = InversionConfig {
            min_update_iter: 50,
            ..InversionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = InversionConfig {
            lr: 0.0,
            ..InversionConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_fills_defaults() {
        let c: InversionConfig = serde_json::from_str(r#"{"max_iters": 10, "activation": "tanh"}"#).unwrap();
        assert_eq!(c.max_iters, 10);
        assert_eq!(c.activation, Activation::Tanh);
        assert_eq!(c.threshold_period, 100);
        assert!(serde_json::from_str::<InversionConfig>(r#"{"max_iter": 10}"#).is_err());
    }
}
