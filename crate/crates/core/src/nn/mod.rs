//! Minimal dense layers with hand-written backward passes, in `f64`.

mod adam;
mod gru;
mod linear;

pub use adam::{Adam, AdamConfig};
pub use gru::{GruCache, GruEncoder, GruLayer};
pub use linear::Linear;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

/// Borrowed view of one named parameter tensor.
#[derive(Debug)]
pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Enumerates trainable tensors in a fixed order. Gradient containers share
/// the model's type, so zipping `params` with `params_mut` lines entries up.
pub trait Parameters {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>);
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>);

    fn param_views(&self) -> Vec<ParamView<'_>> {
        let mut out = Vec::new();
        self.params("", &mut out);
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.params_mut(&mut out);
        out
    }

    fn n_params(&self) -> usize {
        self.param_views().iter().map(|p| p.data.len()).sum()
    }

    fn fill_zero(&mut self) {
        for s in self.param_slices_mut() {
            s.fill(0.0);
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn view1<'a>(prefix: &str, name: &str, a: &'a Array1<f64>) -> ParamView<'a> {
    ParamView {
        name: join(prefix, name),
        shape: vec![a.len()],
        data: a.as_slice().expect("parameter arrays are contiguous"),
    }
}

pub(crate) fn view2<'a>(prefix: &str, name: &str, a: &'a Array2<f64>) -> ParamView<'a> {
    ParamView {
        name: join(prefix, name),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("parameter arrays are contiguous"),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise L2 norms.
pub fn row_norms(x: ArrayView2<f64>) -> Array1<f64> {
    x.map_axis(Axis(1), |r| r.dot(&r).sqrt())
}

/// Backward pass of `h = z / |z|` per row, given `h`, `|z|` and `dL/dh`.
pub fn normalize_backward(h: ArrayView2<f64>, norms: &Array1<f64>, dh: ArrayView2<f64>) -> Array2<f64> {
    let mut dz = dh.to_owned();
    for ((mut dz_row, h_row), &n) in dz.outer_iter_mut().zip(h.outer_iter()).zip(norms.iter()) {
        let proj = h_row.dot(&dz_row);
        Zip::from(&mut dz_row).and(&h_row).for_each(|d, &hv| *d = (*d - hv * proj) / n);
    }
    dz
}
