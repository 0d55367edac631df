use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{view1, view2, ParamView, Parameters};

/// `y = x W^T + b` over a batch of row vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl Linear {
    /// Uniform fan-in initialisation, `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || rng.random_range(-bound..=bound));
        let bias = bias.then(|| Array1::from_shape_simple_fn(output, || rng.random_range(-bound..=bound)));
        Self { weight, bias }
    }

    pub fn zeros(input: usize, output: usize, bias: bool) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: bias.then(|| Array1::zeros(output)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim(), self.bias.is_some())
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        if let Some(b) = &self.bias {
            y += b;
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        self.backward_params(x, dy, grad);
        dy.dot(&self.weight)
    }

    /// Like [`Linear::backward`] but skips the input gradient.
    pub fn backward_params(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) {
        grad.weight += &dy.t().dot(&x);
        if let Some(gb) = &mut grad.bias {
            *gb += &dy.sum_axis(Axis(0));
        }
    }
}

impl Parameters for Linear {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        out.push(view2(prefix, "weight", &self.weight));
        if let Some(b) = &self.bias {
            out.push(view1(prefix, "bias", b));
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.weight.as_slice_mut().expect("contiguous"));
        if let Some(b) = &mut self.bias {
            out.push(b.as_slice_mut().expect("contiguous"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn forward_and_backward_shapes() {
        let l = Linear {
            weight: array![[1.0, 2.0], [0.0, -1.0], [3.0, 1.0]],
            bias: Some(array![0.5, 0.0, -1.0]),
        };
        let x = array![[1.0, 1.0]];
        assert_eq!(l.forward(x.view()), array![[3.5, -1.0, 3.0]]);
        let mut g = l.zeros_like();
        let dx = l.backward(x.view(), array![[1.0, 0.0, 1.0]].view(), &mut g);
        assert_eq!(dx, array![[4.0, 3.0]]);
        assert_eq!(g.weight, array![[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]]);
        assert_eq!(g.bias.unwrap(), array![1.0, 0.0, 1.0]);
    }
}
