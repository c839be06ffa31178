use super::{init_model, Adam, Architecture, Loss, Model, ModelError};
use crate::depth::{Dataset, DepthFrame, Domain};
use crate::rng::Rng;
use crate::scene::{rollout_controller, Action, Controller, Demonstration, Scene, V_MAX};
use crate::transforms::{apply_sequence, AugmentationSequence};

// Stream families derived from the training seed, so shuffling and
// augmentation never share random numbers.
const SHUFFLE_SALT: u64 = 0x5348_5546;
const AUGMENT_SALT: u64 = 0x4155_474d;
const EVAL_BATCH: usize = 64;
const INPUT_CENTER: f64 = 0.75;
const INPUT_GAIN: f64 = 4.0;
/// Regressor outputs are positions divided by this (the workspace half-width).
const POSITION_SCALE: f64 = 0.3;

/// Optimizer and schedule settings shared by regression and BC training.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Weight of the velocity term in the BC loss.
    pub lambda: f64,
    pub seed: u64,
    /// Number of final epochs whose evaluations are reported.
    pub eval_epochs_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            lambda: 0.9,
            seed: 0,
            eval_epochs_window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.eval_epochs_window == 0 {
            return bad("epochs, batch_size and eval_epochs_window must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("adam_betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        Ok(())
    }

    /// First epoch (0-based) inside the evaluation window.
    fn window_start(&self) -> usize {
        self.epochs.saturating_sub(self.eval_epochs_window)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("expected a {expected} dataset, got {actual}")]
    WrongDomain { expected: Domain, actual: Domain },
    #[error("no demonstrations to train on")]
    NoDemonstrations,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One row of the training history. Errors are in meters and only present
/// for epochs inside the evaluation window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub sim_error: Option<f64>,
    pub pseudo_real_error: Option<f64>,
}

/// Held-out sets evaluated during the last `eval_epochs_window` epochs.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalSets<'a> {
    pub sim: Option<&'a Dataset>,
    pub pseudo_real: Option<&'a Dataset>,
}

/// Training history as CSV with header
/// `epoch,train_loss,sim_error,pseudoreal_error` (errors in meters, empty
/// when not evaluated).
pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,sim_error,pseudoreal_error\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.8},{},{}\n",
            r.epoch,
            r.train_loss,
            opt(r.sim_error),
            opt(r.pseudo_real_error)
        ));
    }
    out
}

/// Normalized depth is mapped affinely so the scene's usual depth band
/// (about 0.5 to 1.0) spans roughly [-1, 1].
fn push_frame(buf: &mut Vec<f64>, frame: &DepthFrame) {
    buf.extend(
        frame
            .depth()
            .iter()
            .map(|&d| (d as f64 - INPUT_CENTER) * INPUT_GAIN),
    );
}

fn shuffled(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::stream(seed ^ SHUFFLE_SALT, epoch as u64).shuffle(&mut order);
    order
}

/// Shared minibatch loop. `fill` appends the inputs and targets of one
/// sample for the given epoch.
fn fit(
    model: &mut Model,
    n_samples: usize,
    cfg: &TrainConfig,
    loss: Loss,
    mut fill: impl FnMut(usize, usize, &mut Vec<f64>, &mut Vec<f64>),
    mut evaluate: impl FnMut(&Model, usize, &mut EpochRecord) -> Result<(), ModelError>,
) -> Result<Vec<EpochRecord>, TrainError> {
    let mut adam = Adam::new(
        model.theta().len(),
        cfg.learning_rate,
        cfg.adam_betas,
        cfg.adam_eps,
    );
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for epoch in 0..cfg.epochs {
        let order = shuffled(n_samples, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            inputs.clear();
            targets.clear();
            for &i in chunk {
                fill(epoch, i, &mut inputs, &mut targets);
            }
            let (value, grad) = model.backward(&inputs, &targets, chunk.len(), loss)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { epoch });
            }
            loss_sum += value * chunk.len() as f64;
            adam.step(model.theta_mut(), &grad);
        }
        if model.theta().iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { epoch });
        }
        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / n_samples as f64,
            sim_error: None,
            pseudo_real_error: None,
        };
        if epoch >= cfg.window_start() {
            evaluate(model, epoch, &mut record)?;
        }
        history.push(record);
    }
    Ok(history)
}

/// Trains a fresh cube-position regressor on `sim`, re-drawing the
/// augmentation of every frame each epoch (one draw per frame per epoch).
/// The network always starts from the parameters `init_model(arch, cfg.seed)`.
pub fn train_regressor(
    sim: &Dataset,
    seq: &AugmentationSequence,
    cfg: &TrainConfig,
    eval: EvalSets<'_>,
) -> Result<(Model, Vec<EpochRecord>), TrainError> {
    cfg.validate()?;
    if sim.domain() != Domain::Sim {
        return Err(TrainError::WrongDomain {
            expected: Domain::Sim,
            actual: sim.domain(),
        });
    }
    let arch = Architecture {
        height: sim.height(),
        width: sim.width(),
        ..Architecture::regressor(sim.width())
    };
    let mut model = init_model(&arch, cfg.seed)?;
    let items = sim.items();
    let n = items.len();
    let history = fit(
        &mut model,
        n,
        cfg,
        Loss::Regression,
        |epoch, i, inputs, targets| {
            let mut rng = Rng::stream(cfg.seed ^ AUGMENT_SALT, (epoch * n + i) as u64);
            push_frame(inputs, &apply_sequence(seq, &items[i].frame, &mut rng));
            targets.extend(items[i].cube_position.iter().map(|p| p / POSITION_SCALE));
        },
        |model, _, record| {
            if let Some(d) = eval.sim {
                record.sim_error = Some(evaluate_error(model, d)?);
            }
            if let Some(d) = eval.pseudo_real {
                record.pseudo_real_error = Some(evaluate_error(model, d)?);
            }
            Ok(())
        },
    )?;
    Ok((model, history))
}

/// Mean Euclidean distance (meters) between predictions and labels, without
/// augmentation.
pub fn evaluate_error(model: &Model, dataset: &Dataset) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut inputs = Vec::new();
    for chunk in dataset.items().chunks(EVAL_BATCH) {
        inputs.clear();
        for item in chunk {
            push_frame(&mut inputs, &item.frame);
        }
        let out = model.forward(&inputs, chunk.len())?;
        for (pred, item) in out.chunks_exact(3).zip(chunk) {
            let p = item.cube_position;
            let d2: f64 = (0..3)
                .map(|k| (pred[k] * POSITION_SCALE - p[k]).powi(2))
                .sum();
            total += d2.sqrt();
        }
    }
    Ok(total / dataset.len() as f64)
}

/// Median of a non-empty slice (mean of the middle pair for even length).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Window-median errors of one regressor training, in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceScore {
    pub sim_error: f64,
    pub pseudo_real_error: f64,
}

fn check_domain(d: &Dataset, expected: Domain) -> Result<(), TrainError> {
    if d.domain() != expected {
        return Err(TrainError::WrongDomain {
            expected,
            actual: d.domain(),
        });
    }
    Ok(())
}

/// Trains with `seq` and reports the median sim and shifted-domain errors
/// over the evaluation window. Divergence scores as infinite error.
pub fn evaluate_sequence(
    seq: &AugmentationSequence,
    sim_train: &Dataset,
    sim_eval: &Dataset,
    pseudo_real: &Dataset,
    cfg: &TrainConfig,
) -> Result<SequenceScore, TrainError> {
    check_domain(sim_eval, Domain::Sim)?;
    check_domain(pseudo_real, Domain::PseudoReal)?;
    let eval = EvalSets {
        sim: Some(sim_eval),
        pseudo_real: Some(pseudo_real),
    };
    match train_regressor(sim_train, seq, cfg, eval) {
        Ok((_, history)) => {
            let window = &history[cfg.window_start()..];
            let sim: Vec<f64> = window.iter().filter_map(|r| r.sim_error).collect();
            let real: Vec<f64> = window.iter().filter_map(|r| r.pseudo_real_error).collect();
            Ok(SequenceScore {
                sim_error: median(&sim),
                pseudo_real_error: median(&real),
            })
        }
        Err(TrainError::Diverged { .. }) => Ok(SequenceScore {
            sim_error: f64::INFINITY,
            pseudo_real_error: f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}

/// Search objective: median shifted-domain error (meters) over the last
/// `eval_epochs_window` epochs of a fresh training run with `seq`.
pub fn score_sequence(
    seq: &AugmentationSequence,
    sim: &Dataset,
    pseudo_real: &Dataset,
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    check_domain(pseudo_real, Domain::PseudoReal)?;
    let eval = EvalSets {
        sim: None,
        pseudo_real: Some(pseudo_real),
    };
    match train_regressor(sim, seq, cfg, eval) {
        Ok((_, history)) => {
            let errs: Vec<f64> = history.iter().filter_map(|r| r.pseudo_real_error).collect();
            Ok(median(&errs))
        }
        Err(TrainError::Diverged { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// BC regression target: velocities scaled by `V_MAX`, then the gripper bit.
pub fn action_target(a: &Action) -> [f64; 7] {
    let mut v = a.as_vector();
    for x in &mut v[..6] {
        *x /= V_MAX;
    }
    v
}

/// Inverse of [`action_target`] for network outputs; the gripper closes when
/// the logit is positive (probability above 0.5).
pub fn action_from_output(out: &[f64]) -> Action {
    assert_eq!(out.len(), 7, "policy output has 7 entries");
    Action {
        linear_velocity: [out[0] * V_MAX, out[1] * V_MAX, out[2] * V_MAX],
        angular_velocity: [out[3] * V_MAX, out[4] * V_MAX, out[5] * V_MAX],
        gripper: out[6] > 0.0,
    }
}

/// Behavior cloning on every (observation, action) pair of `demos`. Each of
/// the three stacked frames gets its own augmentation draw per epoch.
pub fn train_bc(
    demos: &[Demonstration],
    seq: &AugmentationSequence,
    cfg: &TrainConfig,
) -> Result<(Model, Vec<EpochRecord>), TrainError> {
    cfg.validate()?;
    let first = demos
        .iter()
        .find_map(|d| d.frames.first())
        .ok_or(TrainError::NoDemonstrations)?;
    let arch = Architecture {
        height: first.height(),
        width: first.width(),
        ..Architecture::policy(first.width())
    };
    let samples: Vec<(usize, usize)> = demos
        .iter()
        .enumerate()
        .flat_map(|(d, demo)| (0..demo.len()).map(move |t| (d, t)))
        .collect();
    if samples.is_empty() {
        return Err(TrainError::NoDemonstrations);
    }
    let mut model = init_model(&arch, cfg.seed)?;
    let n = samples.len();
    let history = fit(
        &mut model,
        n,
        cfg,
        Loss::BehaviorCloning { lambda: cfg.lambda },
        |epoch, i, inputs, targets| {
            let (d, t) = samples[i];
            let demo = &demos[d];
            for (slot, frame) in demo.observation(t).into_iter().enumerate() {
                let stream = ((epoch * n + i) * 3 + slot) as u64;
                let mut rng = Rng::stream(cfg.seed ^ AUGMENT_SALT, stream);
                push_frame(inputs, &apply_sequence(seq, frame, &mut rng));
            }
            targets.extend_from_slice(&action_target(&demo.actions[t]));
        },
        |_, _, _| Ok(()),
    )?;
    Ok((model, history))
}

/// A trained policy network driving the reach environment. It sees only the
/// stacked frames.
pub struct NetPolicy<'a> {
    model: &'a Model,
    input: Vec<f64>,
}

impl<'a> NetPolicy<'a> {
    pub fn new(model: &'a Model) -> Self {
        Self {
            model,
            input: Vec::with_capacity(model.arch().input_len()),
        }
    }
}

impl Controller for NetPolicy<'_> {
    fn act(&mut self, observation: [&DepthFrame; 3], _state: &Scene) -> Action {
        self.input.clear();
        for f in observation {
            push_frame(&mut self.input, f);
        }
        let out = self
            .model
            .forward(&self.input, 1)
            .expect("observation matches the policy input shape");
        action_from_output(&out)
    }
}

/// Closed-loop successes of `model` over `n_trials` fresh reach scenes.
pub fn rollout_policy(model: &Model, domain: Domain, n_trials: usize, seed: u64) -> usize {
    let size = model.arch().width;
    rollout_controller(&mut NetPolicy::new(model), domain, n_trials, size, seed)
}
