//! Strided convolutional encoder producing the feature cube the attention
//! decoder consumes. No pooling layers; spatial information is preserved by
//! strides alone, and the cumulative stride pins the cube grid to the input
//! extents.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::tensor::{ParamSet, Tape, Tensor, ValueId};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub layers: Vec<ConvLayer>,
}

fn layer(kernel: usize, stride: usize, channels: usize) -> ConvLayer {
    ConvLayer {
        kernel,
        stride,
        channels,
    }
}

impl EncoderConfig {
    /// Full-scale network: 80x160 input, three stride-2 5x5 layers then two
    /// stride-1 3x3 layers, 10x20x64 cube.
    pub fn full_scale() -> Self {
        EncoderConfig {
            input_h: 80,
            input_w: 160,
            layers: vec![
                layer(5, 2, 24),
                layer(5, 2, 36),
                layer(5, 2, 48),
                layer(3, 1, 64),
                layer(3, 1, 64),
            ],
        }
    }

    /// Half-resolution configuration for desk-scale runs: 40x80 input,
    /// three stride-2 layers, 5x10 grid.
    pub fn desk_scale() -> Self {
        EncoderConfig {
            input_h: 40,
            input_w: 80,
            layers: vec![layer(3, 2, 6), layer(3, 2, 8), layer(3, 2, 8)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::EmptyInput("encoder needs at least one layer"));
        }
        for l in &self.layers {
            if l.kernel == 0 || l.stride == 0 || l.channels == 0 {
                return Err(Error::invalid(format!("conv layer {l:?}")));
            }
        }
        Ok(())
    }

    /// Cube grid extents implied by the stride chain (same padding:
    /// each layer maps `n` to `ceil(n / stride)`).
    pub fn grid(&self) -> (usize, usize) {
        let mut h = self.input_h;
        let mut w = self.input_w;
        for l in &self.layers {
            h = h.div_ceil(l.stride);
            w = w.div_ceil(l.stride);
        }
        (h, w)
    }

    /// Cube depth D.
    pub fn depth(&self) -> usize {
        self.layers.last().map(|l| l.channels).unwrap_or(0)
    }

    /// Number of feature vectors L = H' * W'.
    pub fn feature_len(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    /// Parameter names and shapes, in forward order. Kernels are
    /// `[k, k, c_in, c_out]`, biases `[c_out]`.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let mut c_in = 3;
        for (i, l) in self.layers.iter().enumerate() {
            shapes.push((
                format!("enc.conv{i}.kernel"),
                vec![l.kernel, l.kernel, c_in, l.channels],
            ));
            shapes.push((format!("enc.conv{i}.bias"), vec![l.channels]));
            c_in = l.channels;
        }
        shapes
    }
}

/// Feature cube: the final conv activation of one frame, `[H', W', D]`,
/// viewed as L = H'*W' feature vectors of dimension D in row-major grid
/// order (flattened row `i` is grid cell `(i / W', i % W')`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCube {
    values: Tensor,
}

impl FeatureCube {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 3 {
            return Err(Error::invalid(format!(
                "feature cube must be rank 3, got {:?}",
                values.shape()
            )));
        }
        Ok(FeatureCube { values })
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.values.shape()[0], self.values.shape()[1])
    }

    pub fn depth(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn feature_len(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    pub fn tensor(&self) -> &Tensor {
        &self.values
    }

    /// Feature vector at grid cell (row, col).
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let (_, w) = self.grid();
        let d = self.depth();
        let base = (row * w + col) * d;
        &self.values.data()[base..base + d]
    }

    /// L x D matrix in the documented grid order. Invertible.
    pub fn flatten(&self) -> Tensor {
        let d = self.depth();
        Tensor::new(vec![self.feature_len(), d], self.values.data().to_vec())
            .expect("cube data already validated")
    }

    /// Inverse of [`FeatureCube::flatten`].
    pub fn unflatten(matrix: &Tensor, grid: (usize, usize)) -> Result<Self> {
        let (h, w) = grid;
        if matrix.rank() != 2 || matrix.shape()[0] != h * w {
            return Err(Error::ShapeMismatch {
                op: "unflatten",
                lhs: matrix.shape().to_vec(),
                rhs: vec![h * w],
            });
        }
        FeatureCube::new(Tensor::new(
            vec![h, w, matrix.shape()[1]],
            matrix.data().to_vec(),
        )?)
    }
}

/// Applies the encoder on a tape: conv -> bias -> ReLU per layer.
/// Returns the cube id, shape `[H', W', D]`.
pub fn encode_on_tape(
    tape: &mut Tape,
    input: ValueId,
    params: &HashMap<String, ValueId>,
    config: &EncoderConfig,
) -> Result<ValueId> {
    config.validate()?;
    let mut x = input;
    for i in 0..config.layers.len() {
        let kernel = params
            .get(&format!("enc.conv{i}.kernel"))
            .ok_or_else(|| Error::invalid(format!("missing enc.conv{i}.kernel")))?;
        let bias = params
            .get(&format!("enc.conv{i}.bias"))
            .ok_or_else(|| Error::invalid(format!("missing enc.conv{i}.bias")))?;
        x = tape.conv2d(x, *kernel, config.layers[i].stride)?;
        x = tape.add(x, *bias)?;
        x = tape.relu(x)?;
    }
    Ok(x)
}

/// Reshapes a cube id to the flattened `[L, D]` view.
pub fn flatten_on_tape(tape: &mut Tape, cube: ValueId, config: &EncoderConfig) -> Result<ValueId> {
    tape.reshape(cube, &[config.feature_len(), config.depth()])
}

/// Inference convenience: encodes one frame tensor on a throwaway tape.
pub fn encode(frame: &Tensor, params: &ParamSet, config: &EncoderConfig) -> Result<FeatureCube> {
    if frame.shape() != [config.input_h, config.input_w, 3] {
        return Err(Error::ShapeMismatch {
            op: "encode",
            lhs: frame.shape().to_vec(),
            rhs: vec![config.input_h, config.input_w, 3],
        });
    }
    let mut tape = Tape::single();
    let ids = params.leaves(&mut tape);
    let input = tape.leaf(frame.clone());
    let cube = encode_on_tape(&mut tape, input, &ids, config)?;
    FeatureCube::new(tape.value(cube).clone())
}
