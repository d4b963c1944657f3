//! Penalized L1 loss, Adam, Xavier init, consecutive-window sampling,
//! optional convolutional pretraining, the training loop, and MAE
//! evaluation in degrees.

use serde::{Deserialize, Serialize};

use crate::decoder::TrainMode;
use crate::encoder::{self, EncoderConfig};
use crate::model::{ModelConfig, Predictor, SteeringModel};
use crate::preprocess::{theta_from_u, ProcessedFrame, VehicleParams};
use crate::rng::{self, SeededRng};
use crate::tensor::{ParamSet, Tape, Tensor, ValueId};
use crate::{par, Error, Result};

// ---------------------------------------------------------------------------
// loss

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyForm {
    /// Sum of squared per-location attention deficits. Non-constant under
    /// normalized attention, so it actually spreads attention over time.
    Squared,
    /// The linear form. Under per-step softmax normalization it telescopes
    /// to the constant L - T, so its gradient vanishes; kept for fidelity
    /// experiments.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub penalty_form: PenaltyForm,
    /// Window length T.
    pub window: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.0,
            penalty_form: PenaltyForm::Squared,
            window: 20,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.window == 0 {
            return Err(Error::invalid(format!("loss config {self:?}")));
        }
        Ok(())
    }
}

/// Plain-value loss: sum_t |u_t - u_hat_t| + lambda * penalty(alpha).
pub fn loss_value(u: &[f64], u_hat: &[f64], alphas: &[Vec<f64>], config: &LossConfig) -> Result<f64> {
    config.validate()?;
    if u.len() != u_hat.len() || u.len() != alphas.len() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            lhs: vec![u.len(), u_hat.len()],
            rhs: vec![alphas.len()],
        });
    }
    if u.is_empty() {
        return Err(Error::EmptyInput("loss over zero steps"));
    }
    let l1: f64 = u.iter().zip(u_hat).map(|(&a, &b)| (a - b).abs()).sum();
    let locations = alphas[0].len();
    let mut penalty = 0.0;
    for i in 0..locations {
        let col: f64 = alphas.iter().map(|row| row[i]).sum();
        let deficit = 1.0 - col;
        penalty += match config.penalty_form {
            PenaltyForm::Squared => deficit * deficit,
            PenaltyForm::Literal => deficit,
        };
    }
    Ok(l1 + config.lambda * penalty)
}

/// Builds the loss on the window tape so it can be differentiated.
/// `u_hats`/`alphas` are per-step outputs; `u_targets` a `[T]` leaf.
pub fn loss_on_tape(
    tape: &mut Tape,
    u_targets: ValueId,
    u_hats: &[ValueId],
    alphas: &[ValueId],
    config: &LossConfig,
) -> Result<ValueId> {
    config.validate()?;
    if u_hats.is_empty() || u_hats.len() != alphas.len() {
        return Err(Error::invalid(format!(
            "loss over {} predictions / {} attention rows",
            u_hats.len(),
            alphas.len()
        )));
    }
    let t = u_hats.len();
    let mut u_hat_vec = u_hats[0];
    for &u in &u_hats[1..] {
        u_hat_vec = tape.concat(u_hat_vec, u, 0)?;
    }
    let diff = tape.sub(u_targets, u_hat_vec)?;
    let absdiff = tape.abs(diff)?;
    let l1 = tape.reduce_sum(absdiff, None)?;

    let locations = tape.value(alphas[0]).len();
    let mut stack = tape.reshape(alphas[0], &[1, locations])?;
    for &a in &alphas[1..] {
        let row = tape.reshape(a, &[1, locations])?;
        stack = tape.concat(stack, row, 0)?;
    }
    debug_assert_eq!(tape.value(stack).shape(), &[t, locations]);
    let colsum = tape.reduce_sum(stack, Some(0))?;
    let ones = tape.leaf(Tensor::filled(&[locations], 1.0));
    let deficit = tape.sub(ones, colsum)?;
    let penalty = match config.penalty_form {
        PenaltyForm::Squared => {
            let sq = tape.mul(deficit, deficit)?;
            tape.reduce_sum(sq, None)?
        }
        PenaltyForm::Literal => tape.reduce_sum(deficit, None)?,
    };
    let weighted = tape.scale(penalty, config.lambda)?;
    tape.add(l1, weighted)
}

// ---------------------------------------------------------------------------
// initialization

/// Xavier/Glorot uniform init: samples in +-sqrt(6 / (fan_in + fan_out)).
/// Rank-1 shapes use fan_in = fan_out = n; rank >= 2 treats leading axes as
/// the receptive field, so conv kernels `[kh,kw,ci,co]` get
/// fan_in = kh*kw*ci, fan_out = kh*kw*co. Samples are rounded through f32,
/// matching the precision parameters live at.
pub fn xavier_init(shape: &[usize], mut rng: SeededRng) -> Result<Tensor> {
    if shape.is_empty() {
        return Err(Error::invalid("xavier_init needs rank >= 1".to_string()));
    }
    let (fan_in, fan_out) = match shape.len() {
        1 => (shape[0], shape[0]),
        n => {
            let receptive: usize = shape[..n - 2].iter().product();
            (shape[n - 2] * receptive, shape[n - 1] * receptive)
        }
    };
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    use rand::Rng;
    let count: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..count)
            .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * bound) as f32 as f64)
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moment accumulators plus the step counter.
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let v = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState {
            config,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Bias-corrected update in place. Gradients are matched to parameters
    /// by name; a missing gradient means zero. Updated parameters are
    /// rounded through f32 to stay within checkpoint precision.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, (name, tensor)) in params.iter_mut().enumerate() {
            let zero;
            let grad = match grads.get(name) {
                Some(g) => {
                    if g.shape() != tensor.shape() {
                        return Err(Error::ShapeMismatch {
                            op: "adam",
                            lhs: g.shape().to_vec(),
                            rhs: tensor.shape().to_vec(),
                        });
                    }
                    g.data()
                }
                None => {
                    zero = vec![0.0; tensor.len()];
                    &zero
                }
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = tensor.data_mut();
            for j in 0..data.len() {
                let g = grad[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] = (data[j] - c.lr * m_hat / (v_hat.sqrt() + c.eps)) as f32 as f64;
            }
        }
        Ok(())
    }
}

/// Scales the whole gradient set so its global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for (_, g) in grads.iter() {
        sq += g.data().iter().map(|&v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

// ---------------------------------------------------------------------------
// window sampling

/// Start offsets (into the retained frame vec) of every window of `t`
/// consecutive frames. Stop-frame exclusion leaves gaps in the original
/// indices; windows never span them.
pub fn valid_window_starts(frames: &[ProcessedFrame], t: usize) -> Vec<usize> {
    if t == 0 || frames.len() < t {
        return Vec::new();
    }
    (0..=frames.len() - t)
        .filter(|&s| {
            frames[s..s + t]
                .windows(2)
                .all(|pair| pair[1].index == pair[0].index + 1)
        })
        .collect()
}

/// Uniformly samples `batch` window start offsets with replacement.
pub fn sample_windows(
    frames: &[ProcessedFrame],
    batch: usize,
    t: usize,
    rng: &mut SeededRng,
) -> Result<Vec<usize>> {
    let starts = valid_window_starts(frames, t);
    if starts.is_empty() {
        return Err(Error::NoValidWindow(format!(
            "no run of {t} consecutive frames among {} retained",
            frames.len()
        )));
    }
    use rand::Rng;
    Ok((0..batch)
        .map(|_| starts[rng.random_range(0..starts.len())])
        .collect())
}

// ---------------------------------------------------------------------------
// training loop

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub batch: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    /// Global-norm gradient clip; `None` disables.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults: half-resolution encoder, hidden 64, batch 16.
    pub fn desk_scale() -> Self {
        TrainConfig {
            model: ModelConfig::desk_scale(),
            loss: LossConfig::default(),
            batch: 16,
            steps: 2000,
            adam: AdamConfig::default(),
            clip_norm: Some(5.0),
            seed: 0,
        }
    }

    /// Full-scale defaults: batch of 128 consecutive-frame windows.
    pub fn full_scale() -> Self {
        TrainConfig {
            model: ModelConfig::full_scale(),
            loss: LossConfig::default(),
            batch: 128,
            steps: 2000,
            adam: AdamConfig::default(),
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub train_loss: f64,
    pub train_mae_deg: f64,
}

pub struct TrainOutput {
    pub model: SteeringModel,
    pub metrics: Vec<StepMetrics>,
}

struct WindowGrad {
    grads: Vec<(String, Tensor)>,
    loss: f64,
    abs_err_deg_sum: f64,
    frames: usize,
}

const TAG_SAMPLER: u64 = 60;
const TAG_DROPOUT: u64 = 61;

/// Trains the attention model. Batch windows run forward/backward in
/// parallel; gradients reduce in a fixed order and feed one serialized Adam
/// update, so the trajectory is independent of scheduling.
pub fn train(
    frames: &[ProcessedFrame],
    vehicle: &VehicleParams,
    config: &TrainConfig,
    initial: Option<ParamSet>,
) -> Result<TrainOutput> {
    config.loss.validate()?;
    if config.batch == 0 {
        return Err(Error::invalid("batch size 0".to_string()));
    }
    let mut model = SteeringModel::init(config.model.clone(), config.seed)?;
    if let Some(pre) = initial {
        for (name, tensor) in pre.iter() {
            if model.params.get(name).is_some() {
                model.params.insert(name, tensor.clone());
            }
        }
    }
    let t = config.loss.window;
    if valid_window_starts(frames, t).is_empty() {
        return Err(Error::NoValidWindow(format!(
            "dataset has no {t}-frame consecutive run"
        )));
    }
    let mut adam = AdamState::new(&model.params, config.adam);
    let mut metrics = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mut sampler = rng::stream(config.seed, TAG_SAMPLER, step as u64);
        let starts = sample_windows(frames, config.batch, t, &mut sampler)?;

        let results: Vec<Result<WindowGrad>> = par::map_range(starts.len(), |b| {
            let window = &frames[starts[b]..starts[b] + t];
            let mut dropout_rng = rng::stream(
                config.seed,
                TAG_DROPOUT,
                (step * config.batch + b) as u64,
            );
            window_gradient(&model, window, vehicle, &config.loss, &mut dropout_rng)
        });

        // fixed-order reduction keeps the update independent of scheduling
        let mut total = ParamSet::new();
        for (name, tensor) in model.params.iter() {
            total.insert(name, Tensor::zeros(tensor.shape()));
        }
        let mut loss_sum = 0.0;
        let mut err_sum = 0.0;
        let mut frame_count = 0usize;
        for r in results {
            let wg = r?;
            loss_sum += wg.loss;
            err_sum += wg.abs_err_deg_sum;
            frame_count += wg.frames;
            for (name, g) in &wg.grads {
                let acc = total.get_mut(name).expect("grad name matches params");
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
        let inv_batch = 1.0 / config.batch as f64;
        for (_, g) in total.iter_mut() {
            for v in g.data_mut() {
                *v *= inv_batch;
            }
        }
        if let Some(max_norm) = config.clip_norm {
            clip_global_norm(&mut total, max_norm);
        }
        adam.step(&mut model.params, &total)?;
        metrics.push(StepMetrics {
            step,
            train_loss: loss_sum * inv_batch,
            train_mae_deg: err_sum / frame_count.max(1) as f64,
        });
    }
    Ok(TrainOutput { model, metrics })
}

fn window_gradient(
    model: &SteeringModel,
    window: &[ProcessedFrame],
    vehicle: &VehicleParams,
    loss_cfg: &LossConfig,
    dropout_rng: &mut SeededRng,
) -> Result<WindowGrad> {
    let mut fwd = model.window_forward(window, &mut TrainMode::Train { rng: dropout_rng })?;
    let targets: Vec<f64> = window.iter().map(|f| f.u_target).collect();
    let target_leaf = fwd.tape.leaf(Tensor::new(vec![window.len()], targets.clone())?);
    let loss_id = loss_on_tape(&mut fwd.tape, target_leaf, &fwd.u_hats, &fwd.alphas, loss_cfg)?;
    let loss = fwd.tape.value(loss_id).item();
    let grads_all = fwd.tape.backward(loss_id, &Tensor::scalar(1.0))?;

    let mut grads = Vec::with_capacity(fwd.param_ids.len());
    for (name, _) in model.params.iter() {
        let id = fwd.param_ids[name];
        grads.push((name.to_string(), grads_all.get_or_zero(id, &fwd.tape)));
    }
    let mut abs_err_deg_sum = 0.0;
    for (f, &uid) in window.iter().zip(&fwd.u_hats) {
        let u_hat = fwd.tape.value(uid).item();
        let theta_hat = theta_from_u(u_hat, f.v_smooth, vehicle);
        let theta = theta_from_u(f.u_target, f.v_smooth, vehicle);
        abs_err_deg_sum += (theta - theta_hat).abs();
    }
    Ok(WindowGrad {
        grads,
        loss,
        abs_err_deg_sum,
        frames: window.len(),
    })
}

// ---------------------------------------------------------------------------
// pretraining

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// Hidden widths of the fully connected head appended to the flattened
    /// cube. The head regresses per-frame u and is discarded afterwards.
    pub head_widths: Vec<usize>,
    pub steps: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            head_widths: vec![1164, 100, 50, 10],
            steps: 500,
            batch: 16,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

pub struct PretrainOutput {
    /// Encoder parameters only; the FC head is dropped.
    pub encoder_params: ParamSet,
    pub metrics: Vec<StepMetrics>,
}

/// Trains encoder + FC head on per-frame u regression (L1), returning the
/// encoder weights. MAE metrics here are in u units, not degrees.
pub fn pretrain_cnn(
    frames: &[ProcessedFrame],
    encoder_cfg: &EncoderConfig,
    config: &PretrainConfig,
) -> Result<PretrainOutput> {
    encoder_cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyInput("pretraining dataset"));
    }
    if config.batch == 0 || config.head_widths.is_empty() {
        return Err(Error::invalid(format!("pretrain config {config:?}")));
    }

    // parameter set: encoder plus the temporary head
    let mut params = ParamSet::new();
    let mut shapes = encoder_cfg.param_shapes();
    let flat = encoder_cfg.feature_len() * encoder_cfg.depth();
    let mut prev = flat;
    for (i, &w) in config.head_widths.iter().enumerate() {
        shapes.push((format!("head.fc{i}.w"), vec![prev, w]));
        shapes.push((format!("head.fc{i}.b"), vec![w]));
        prev = w;
    }
    shapes.push(("head.out.w".into(), vec![prev, 1]));
    shapes.push(("head.out.b".into(), vec![1]));
    for (i, (name, shape)) in shapes.into_iter().enumerate() {
        let tensor = if crate::model::is_bias(&name) {
            Tensor::zeros(&shape)
        } else {
            xavier_init(&shape, rng::stream(config.seed, 62, i as u64))?
        };
        params.insert(name, tensor);
    }

    let mut adam = AdamState::new(&params, config.adam);
    let mut metrics = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut sampler = rng::stream(config.seed, 63, step as u64);
        use rand::Rng;
        let picks: Vec<usize> = (0..config.batch)
            .map(|_| sampler.random_range(0..frames.len()))
            .collect();

        let results: Vec<Result<(Vec<(String, Tensor)>, f64)>> = par::map(&picks, |&i| {
            frame_head_gradient(&frames[i], encoder_cfg, &params, config)
        });
        let mut total = ParamSet::new();
        for (name, tensor) in params.iter() {
            total.insert(name, Tensor::zeros(tensor.shape()));
        }
        let mut err_sum = 0.0;
        for r in results {
            let (grads, abs_err) = r?;
            err_sum += abs_err;
            for (name, g) in &grads {
                let acc = total.get_mut(name).expect("grad name matches params");
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
        let inv = 1.0 / config.batch as f64;
        for (_, g) in total.iter_mut() {
            for v in g.data_mut() {
                *v *= inv;
            }
        }
        clip_global_norm(&mut total, 5.0);
        adam.step(&mut params, &total)?;
        metrics.push(StepMetrics {
            step,
            train_loss: err_sum * inv,
            train_mae_deg: err_sum * inv,
        });
    }

    let mut encoder_params = ParamSet::new();
    for (name, tensor) in params.iter() {
        if name.starts_with("enc.") {
            encoder_params.insert(name, tensor.clone());
        }
    }
    Ok(PretrainOutput {
        encoder_params,
        metrics,
    })
}

fn frame_head_gradient(
    frame: &ProcessedFrame,
    encoder_cfg: &EncoderConfig,
    params: &ParamSet,
    config: &PretrainConfig,
) -> Result<(Vec<(String, Tensor)>, f64)> {
    let mut tape = Tape::single();
    let ids = params.leaves(&mut tape);
    let input = tape.leaf(frame.to_tensor());
    let cube = encoder::encode_on_tape(&mut tape, input, &ids, encoder_cfg)?;
    let flat_len = encoder_cfg.feature_len() * encoder_cfg.depth();
    let mut x = tape.reshape(cube, &[flat_len])?;
    for i in 0..config.head_widths.len() {
        x = tape.matmul(x, ids[&format!("head.fc{i}.w")])?;
        x = tape.add(x, ids[&format!("head.fc{i}.b")])?;
        x = tape.relu(x)?;
    }
    x = tape.matmul(x, ids["head.out.w"])?;
    let pred = tape.add(x, ids["head.out.b"])?;

    let target = tape.leaf(Tensor::new(vec![1], vec![frame.u_target])?);
    let diff = tape.sub(target, pred)?;
    let absdiff = tape.abs(diff)?;
    let loss = tape.reduce_sum(absdiff, None)?;
    let abs_err = tape.value(loss).item();
    let grads_all = tape.backward(loss, &Tensor::scalar(1.0))?;
    let mut grads = Vec::new();
    for (name, _) in params.iter() {
        grads.push((name.to_string(), grads_all.get_or_zero(ids[name], &tape)));
    }
    Ok((grads, abs_err))
}

// ---------------------------------------------------------------------------
// evaluation

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MaeReport {
    pub mae_deg: f64,
    pub sd_deg: f64,
    pub frames: usize,
}

impl MaeReport {
    /// `MAE [SD]` rendering used by the evaluate command.
    pub fn format(&self) -> String {
        format!("{:.3} [{:.3}]", self.mae_deg, self.sd_deg)
    }
}

/// Splits retained frames into maximal consecutive runs and chunks each run
/// into `(start, end)` windows of at most `window` frames.
pub fn consecutive_windows(frames: &[ProcessedFrame], window: usize) -> Vec<(usize, usize)> {
    let mut windows = Vec::new();
    let mut run_start = 0usize;
    for i in 1..=frames.len() {
        let broken = i == frames.len() || frames[i].index != frames[i - 1].index + 1;
        if broken {
            let mut s = run_start;
            while s < i {
                let e = (s + window).min(i);
                windows.push((s, e));
                s = e;
            }
            run_start = i;
        }
    }
    windows
}

/// Splits retained frames into maximal consecutive runs, chunks each run
/// into windows of at most `window` frames, and evaluates the predictor.
/// Errors are per-frame |theta - theta_hat| in degrees, using each frame's
/// smoothed velocity for the conversion.
pub fn evaluate_mae(
    frames: &[ProcessedFrame],
    predictor: &dyn Predictor,
    vehicle: &VehicleParams,
    window: usize,
) -> Result<MaeReport> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("evaluation dataset"));
    }
    if window == 0 {
        return Err(Error::invalid("window length 0".to_string()));
    }
    let windows = consecutive_windows(frames, window);
    let errors: Vec<Result<Vec<f64>>> = par::map(&windows, |&(s, e)| {
        let w = &frames[s..e];
        let u_hats = predictor.predict_u(w)?;
        Ok(w.iter()
            .zip(u_hats)
            .map(|(f, u_hat)| {
                let theta_hat = theta_from_u(u_hat, f.v_smooth, vehicle);
                let theta = theta_from_u(f.u_target, f.v_smooth, vehicle);
                (theta - theta_hat).abs()
            })
            .collect())
    });
    let mut all = Vec::with_capacity(frames.len());
    for e in errors {
        all.extend(e?);
    }
    let n = all.len() as f64;
    let mae = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|e| (e - mae) * (e - mae)).sum::<f64>() / n;
    Ok(MaeReport {
        mae_deg: mae,
        sd_deg: var.sqrt(),
        frames: all.len(),
    })
}

/// MAE of the constant predictor that always answers the dataset mean
/// steering angle; the reference point for learning checks.
pub fn constant_mean_baseline(
    train: &[ProcessedFrame],
    eval: &[ProcessedFrame],
    vehicle: &VehicleParams,
) -> Result<MaeReport> {
    if train.is_empty() || eval.is_empty() {
        return Err(Error::EmptyInput("baseline dataset"));
    }
    let mean_theta = train
        .iter()
        .map(|f| theta_from_u(f.u_target, f.v_smooth, vehicle))
        .sum::<f64>()
        / train.len() as f64;
    let errs: Vec<f64> = eval
        .iter()
        .map(|f| (theta_from_u(f.u_target, f.v_smooth, vehicle) - mean_theta).abs())
        .collect();
    let n = errs.len() as f64;
    let mae = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mae) * (e - mae)).sum::<f64>() / n;
    Ok(MaeReport {
        mae_deg: mae,
        sd_deg: var.sqrt(),
        frames: errs.len(),
    })
}
