//! Plain layer stacks without pooling or skips, for receptive-field
//! experiments and small gradient checks.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group_shift::{apply_permutation, invert_permutation, PermutationTable};
use crate::layers::{
    conv3_backward, conv3_forward, norm_backward, norm_forward, pointwise_backward, pointwise_forward,
    relu_backward_inplace, Conv3Params, NormCache, NormParams, PointwiseConvParams,
};
use crate::scalar::Scalar;
use crate::tensor::VolumeTensor;

#[derive(Clone, Debug)]
pub enum FlatLayer<T> {
    Pointwise(PointwiseConvParams<T>),
    Conv3(Conv3Params<T>),
    Norm(NormParams<T>),
    Relu,
    Shift {
        table: Arc<PermutationTable>,
        inverse: Arc<PermutationTable>,
    },
}

impl<T> FlatLayer<T> {
    pub fn shift(table: PermutationTable) -> Self {
        let inverse = Arc::new(invert_permutation(&table));
        FlatLayer::Shift { table: Arc::new(table), inverse }
    }
}

#[derive(Clone, Debug)]
enum Cache<T> {
    Input(VolumeTensor<T>),
    Norm(NormCache<T>),
    Output(VolumeTensor<T>),
    None,
}

/// A sequential stack of layers.
#[derive(Clone, Debug, Default)]
pub struct FlatStack<T> {
    pub layers: Vec<FlatLayer<T>>,
    tape: Option<Vec<Cache<T>>>,
}

impl<T: Scalar> FlatStack<T> {
    pub fn new(layers: Vec<FlatLayer<T>>) -> Self {
        FlatStack { layers, tape: None }
    }

    fn run(&self, x: &VolumeTensor<T>, record: bool) -> Result<(VolumeTensor<T>, Vec<Cache<T>>)> {
        let mut h = x.clone();
        let mut tape = Vec::new();
        for layer in &self.layers {
            let (next, cache) = match layer {
                FlatLayer::Pointwise(p) => (pointwise_forward(&h, p)?, Cache::Input(h)),
                FlatLayer::Conv3(p) => (conv3_forward(&h, p)?, Cache::Input(h)),
                FlatLayer::Norm(p) => {
                    let (y, c) = norm_forward(&h, p)?;
                    (y, Cache::Norm(c))
                }
                FlatLayer::Relu => {
                    let y = h.relu();
                    (y.clone(), Cache::Output(y))
                }
                FlatLayer::Shift { table, .. } => (apply_permutation(&h, table)?, Cache::None),
            };
            if record {
                tape.push(cache);
            }
            h = next;
        }
        Ok((h, tape))
    }

    pub fn predict(&self, x: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        self.run(x, false).map(|(y, _)| y)
    }

    pub fn forward(&mut self, x: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        let (y, tape) = self.run(x, true)?;
        self.tape = Some(tape);
        Ok(y)
    }

    /// Gradient with respect to the stack input; parameter gradients are
    /// returned per layer (empty for parameter-free layers).
    pub fn backward(&mut self, grad_out: &VolumeTensor<T>) -> Result<(VolumeTensor<T>, Vec<Vec<Vec<T>>>)> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::State("backward called without a preceding forward".into()))?;
        let mut g = grad_out.clone();
        let mut param_grads = vec![Vec::new(); self.layers.len()];
        for (i, (layer, cache)) in self.layers.iter().zip(&tape).enumerate().rev() {
            g = match (layer, cache) {
                (FlatLayer::Pointwise(p), Cache::Input(x)) => {
                    let r = pointwise_backward(x, p, &g)?;
                    param_grads[i] = vec![r.weight, r.bias];
                    r.input
                }
                (FlatLayer::Conv3(p), Cache::Input(x)) => {
                    let r = conv3_backward(x, p, &g)?;
                    param_grads[i] = vec![r.weight, r.bias];
                    r.input
                }
                (FlatLayer::Norm(p), Cache::Norm(c)) => {
                    let r = norm_backward(c, p, &g)?;
                    param_grads[i] = vec![r.scale, r.shift];
                    r.input
                }
                (FlatLayer::Relu, Cache::Output(y)) => {
                    relu_backward_inplace(g.data_mut(), y.data());
                    g
                }
                (FlatLayer::Shift { inverse, .. }, Cache::None) => apply_permutation(&g, inverse)?,
                _ => return Err(Error::State("tape does not match stack".into())),
            };
        }
        Ok((g, param_grads))
    }
}
