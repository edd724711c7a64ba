//! Dense binary32 linear algebra for fully-connected layers.
//!
//! Everything here accumulates in `f32` and never sanitizes non-finite
//! values: a NaN or Inf that enters a layer leaves it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Tanh,
    Linear,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, v: f32) -> f32 {
        match self {
            // `f32::max` would swallow NaN, so compare explicitly.
            ActivationKind::Relu => {
                if v < 0.0 {
                    0.0
                } else {
                    v
                }
            }
            ActivationKind::Tanh => libm::tanhf(v),
            ActivationKind::Linear => v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Linear => "linear",
        }
    }
}

/// Row-major `rows x cols` matrix of binary32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config(format!("matrix shape {rows}x{cols} has a zero dimension")));
        }
        if data.len() != rows * cols {
            return Err(Error::config(format!(
                "matrix {rows}x{cols} needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// `output[i] = act(sum_j weights[i,j] * input[j] + bias[i])`.
pub fn fc_forward(weights: &Matrix, bias: &[f32], input: &[f32], act: ActivationKind) -> Result<Vec<f32>> {
    let mut out = vec![0.0; weights.rows];
    fc_forward_into(weights, bias, input, act, &mut out)?;
    Ok(out)
}

/// Same as [`fc_forward`] but writes into a caller-provided buffer.
pub fn fc_forward_into(
    weights: &Matrix,
    bias: &[f32],
    input: &[f32],
    act: ActivationKind,
    out: &mut [f32],
) -> Result<()> {
    if weights.cols != input.len() {
        return Err(Error::config(format!("fc layer expects {} inputs, got {}", weights.cols, input.len())));
    }
    if bias.len() != weights.rows || out.len() != weights.rows {
        return Err(Error::config(format!(
            "fc layer has {} outputs but bias has {} and output buffer {}",
            weights.rows,
            bias.len(),
            out.len()
        )));
    }
    for ((row, b), o) in weights.data.chunks_exact(weights.cols).zip(bias).zip(out.iter_mut()) {
        let mut acc = 0.0f32;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        *o = act.apply(acc + b);
    }
    Ok(())
}
