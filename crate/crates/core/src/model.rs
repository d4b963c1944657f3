//! Full steering model: encoder + attention decoder over a frame window,
//! plus the `Predictor` abstraction the causality tests run against.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::decoder::{self, DecoderConfig, DecoderCtx, TrainMode};
use crate::encoder::{self, EncoderConfig};
use crate::preprocess::ProcessedFrame;
use crate::tensor::{ParamSet, Tape, ValueId};
use crate::training::xavier_init;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub hidden: usize,
    pub attn_hidden: usize,
    pub out_hidden: usize,
    pub beta_gate: bool,
    pub dropout_keep: f64,
}

impl ModelConfig {
    pub fn full_scale() -> Self {
        ModelConfig::with_encoder(EncoderConfig::full_scale())
    }

    pub fn desk_scale() -> Self {
        ModelConfig::with_encoder(EncoderConfig::desk_scale())
    }

    pub fn with_encoder(encoder: EncoderConfig) -> Self {
        ModelConfig {
            encoder,
            hidden: 64,
            attn_hidden: 64,
            out_hidden: 64,
            beta_gate: true,
            dropout_keep: 0.5,
        }
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            feature_len: self.encoder.feature_len(),
            depth: self.encoder.depth(),
            hidden: self.hidden,
            attn_hidden: self.attn_hidden,
            out_hidden: self.out_hidden,
            beta_gate: self.beta_gate,
            dropout_keep: self.dropout_keep,
        }
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = self.encoder.param_shapes();
        shapes.extend(self.decoder().param_shapes());
        shapes
    }
}

pub struct SteeringModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

/// Bias tensors are the ones whose final name segment is `b`, `b1`, `b2`,
/// `bias`, ...; they initialize to zero.
pub(crate) fn is_bias(name: &str) -> bool {
    name.rsplit('.').next().is_some_and(|s| s.starts_with('b'))
}

impl SteeringModel {
    /// Xavier-initialized weights, zero biases; deterministic per seed.
    /// The final output projection starts at zero so predictions open at
    /// the target scale instead of O(1).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.encoder.validate()?;
        config.decoder().validate()?;
        let mut params = ParamSet::new();
        for (i, (name, shape)) in config.param_shapes().into_iter().enumerate() {
            let tensor = if is_bias(&name) || name == "dec.out.w2" {
                crate::tensor::Tensor::zeros(&shape)
            } else {
                xavier_init(&shape, crate::rng::stream(seed, 40, i as u64))?
            };
            params.insert(name, tensor);
        }
        Ok(SteeringModel { config, params })
    }

    /// Wraps existing parameters, checking every expected shape.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        for (name, shape) in config.param_shapes() {
            match params.get(&name) {
                None => return Err(Error::invalid(format!("checkpoint missing {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::ShapeMismatch {
                        op: "from_params",
                        lhs: t.shape().to_vec(),
                        rhs: shape,
                    })
                }
                _ => {}
            }
        }
        Ok(SteeringModel { config, params })
    }

    fn check_window(&self, frames: &[ProcessedFrame]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("empty frame window"));
        }
        let (h, w) = (self.config.encoder.input_h, self.config.encoder.input_w);
        for f in frames {
            if f.h != h || f.w != w {
                return Err(Error::ShapeMismatch {
                    op: "window",
                    lhs: vec![f.h, f.w],
                    rhs: vec![h, w],
                });
            }
        }
        Ok(())
    }

    /// Builds the full forward tape over a window. The caller can attach a
    /// loss and run backward; parameter gradients come back by name.
    pub fn window_forward(
        &self,
        frames: &[ProcessedFrame],
        mode: &mut TrainMode,
    ) -> Result<WindowForward> {
        self.check_window(frames)?;
        let mut tape = Tape::single();
        let param_ids = self.params.leaves(&mut tape);
        let dec_cfg = self.config.decoder();
        let ctx = DecoderCtx::new(&mut tape, &param_ids, &dec_cfg)?;
        let mut cubes = Vec::with_capacity(frames.len());
        for f in frames {
            let input = tape.leaf(f.to_tensor());
            let cube = encoder::encode_on_tape(&mut tape, input, &param_ids, &self.config.encoder)?;
            cubes.push(encoder::flatten_on_tape(&mut tape, cube, &self.config.encoder)?);
        }
        let out = decoder::rollout(&mut tape, &ctx, &cubes, mode)?;
        Ok(WindowForward {
            tape,
            param_ids,
            u_hats: out.u_hats,
            alphas: out.alphas,
        })
    }

    /// Inference over a window: predictions and attention weights as values.
    pub fn predict_window(&self, frames: &[ProcessedFrame]) -> Result<WindowPrediction> {
        let fwd = self.window_forward(frames, &mut TrainMode::Inference)?;
        Ok(WindowPrediction {
            u_hats: fwd.u_hats.iter().map(|&id| fwd.tape.value(id).item()).collect(),
            alphas: fwd
                .alphas
                .iter()
                .map(|&id| fwd.tape.value(id).data().to_vec())
                .collect(),
        })
    }
}

pub struct WindowForward {
    pub tape: Tape,
    pub param_ids: HashMap<String, ValueId>,
    pub u_hats: Vec<ValueId>,
    pub alphas: Vec<ValueId>,
}

pub struct WindowPrediction {
    pub u_hats: Vec<f64>,
    pub alphas: Vec<Vec<f64>>,
}

/// Anything that maps a frame window to inverse-turning-radius predictions.
/// The causal tests mask frames and re-run whatever implements this.
pub trait Predictor: Sync {
    fn predict_u(&self, window: &[ProcessedFrame]) -> Result<Vec<f64>>;
}

impl Predictor for SteeringModel {
    fn predict_u(&self, window: &[ProcessedFrame]) -> Result<Vec<f64>> {
        Ok(self.predict_window(window)?.u_hats)
    }
}

/// Ignores its input entirely.
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn predict_u(&self, window: &[ProcessedFrame]) -> Result<Vec<f64>> {
        Ok(vec![self.0; window.len()])
    }
}

/// Reads the mean intensity of one channel over a fixed pixel region;
/// analytically transparent, so causal deltas are predictable.
pub struct RegionMeanPredictor {
    /// Inclusive-exclusive pixel bounds: columns x0..x1, rows y0..y1.
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub channel: usize,
    pub gain: f64,
    pub bias: f64,
}

impl RegionMeanPredictor {
    pub fn region_mean(&self, frame: &ProcessedFrame) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y in self.y0..self.y1.min(frame.h) {
            for x in self.x0..self.x1.min(frame.w) {
                sum += frame.pixels[(y * frame.w + x) * 3 + self.channel] as f64;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

impl Predictor for RegionMeanPredictor {
    fn predict_u(&self, window: &[ProcessedFrame]) -> Result<Vec<f64>> {
        Ok(window
            .iter()
            .map(|f| self.gain * self.region_mean(f) + self.bias)
            .collect())
    }
}
