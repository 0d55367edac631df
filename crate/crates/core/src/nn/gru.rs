use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{join, sigmoid, view1, view2, ParamView, Parameters};

/// One GRU layer, gates stacked in `(r, z, n)` order:
///
/// ```text
/// r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
/// z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
/// n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruLayer {
    /// `3h x in`.
    pub w_ih: Array2<f64>,
    /// `3h x h`.
    pub w_hh: Array2<f64>,
    pub b_ih: Array1<f64>,
    pub b_hh: Array1<f64>,
}

struct LayerCache {
    input: Array3<f64>,
    /// `B x (T+1) x h`; slot 0 is the zero initial state.
    h: Array3<f64>,
    r: Array3<f64>,
    z: Array3<f64>,
    n: Array3<f64>,
    /// `W_hn h_prev + b_hn`.
    gh_n: Array3<f64>,
}

/// Intermediate values kept by a training-mode forward pass.
pub struct GruCache {
    layers: Vec<LayerCache>,
    /// Scaled dropout masks applied to each non-top layer's output.
    masks: Vec<Option<Array3<f64>>>,
}

impl GruLayer {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut u = || rng.random_range(-bound..=bound);
        Self {
            w_ih: Array2::from_shape_simple_fn((3 * hidden, input), &mut u),
            w_hh: Array2::from_shape_simple_fn((3 * hidden, hidden), &mut u),
            b_ih: Array1::from_shape_simple_fn(3 * hidden, &mut u),
            b_hh: Array1::from_shape_simple_fn(3 * hidden, &mut u),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((3 * hidden, input)),
            w_hh: Array2::zeros((3 * hidden, hidden)),
            b_ih: Array1::zeros(3 * hidden),
            b_hh: Array1::zeros(3 * hidden),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }

    fn forward(&self, x: Array3<f64>) -> LayerCache {
        let (b, t_len, inp) = x.dim();
        let hd = self.hidden_dim();
        let flat = x.to_shape((b * t_len, inp)).expect("standard layout");
        let mut gi = flat.dot(&self.w_ih.t());
        gi += &self.b_ih;
        let gi = gi.into_shape_with_order((b, t_len, 3 * hd)).expect("reshape");

        let mut h = Array3::zeros((b, t_len + 1, hd));
        let mut r = Array3::zeros((b, t_len, hd));
        let mut z = Array3::zeros((b, t_len, hd));
        let mut n = Array3::zeros((b, t_len, hd));
        let mut gh_n = Array3::zeros((b, t_len, hd));
        for t in 0..t_len {
            let mut gh = h.index_axis(Axis(1), t).dot(&self.w_hh.t());
            gh += &self.b_hh;
            for bi in 0..b {
                for k in 0..hd {
                    let rv = sigmoid(gi[[bi, t, k]] + gh[[bi, k]]);
                    let zv = sigmoid(gi[[bi, t, hd + k]] + gh[[bi, hd + k]]);
                    let ghn = gh[[bi, 2 * hd + k]];
                    let nv = (gi[[bi, t, 2 * hd + k]] + rv * ghn).tanh();
                    let prev = h[[bi, t, k]];
                    h[[bi, t + 1, k]] = (1.0 - zv) * nv + zv * prev;
                    r[[bi, t, k]] = rv;
                    z[[bi, t, k]] = zv;
                    n[[bi, t, k]] = nv;
                    gh_n[[bi, t, k]] = ghn;
                }
            }
        }
        LayerCache {
            input: x,
            h,
            r,
            z,
            n,
            gh_n,
        }
    }

    /// Backpropagation through time. `d_seq` holds gradients w.r.t. every
    /// step's output (from a layer above), `d_last` w.r.t. the final state.
    fn backward(
        &self,
        cache: &LayerCache,
        d_seq: Option<&Array3<f64>>,
        d_last: ArrayView2<f64>,
        grad: &mut GruLayer,
        need_input_grad: bool,
    ) -> Option<Array3<f64>> {
        let (b, t_len, inp) = cache.input.dim();
        let hd = self.hidden_dim();
        let mut d_gi = Array3::<f64>::zeros((b, t_len, 3 * hd));
        let mut d_gh = Array3::<f64>::zeros((b, t_len, 3 * hd));
        let mut dh = d_last.to_owned();
        for t in (0..t_len).rev() {
            if let Some(ds) = d_seq {
                dh += &ds.index_axis(Axis(1), t);
            }
            let mut dh_prev = Array2::<f64>::zeros((b, hd));
            for bi in 0..b {
                for k in 0..hd {
                    let g = dh[[bi, k]];
                    let (rv, zv, nv) = (cache.r[[bi, t, k]], cache.z[[bi, t, k]], cache.n[[bi, t, k]]);
                    let prev = cache.h[[bi, t, k]];
                    let dz_pre = g * (prev - nv) * zv * (1.0 - zv);
                    let dn_pre = g * (1.0 - zv) * (1.0 - nv * nv);
                    let dr_pre = dn_pre * cache.gh_n[[bi, t, k]] * rv * (1.0 - rv);
                    d_gi[[bi, t, k]] = dr_pre;
                    d_gi[[bi, t, hd + k]] = dz_pre;
                    d_gi[[bi, t, 2 * hd + k]] = dn_pre;
                    d_gh[[bi, t, k]] = dr_pre;
                    d_gh[[bi, t, hd + k]] = dz_pre;
                    d_gh[[bi, t, 2 * hd + k]] = dn_pre * rv;
                    dh_prev[[bi, k]] = g * zv;
                }
            }
            dh_prev += &d_gh.index_axis(Axis(1), t).dot(&self.w_hh);
            dh = dh_prev;
        }

        let d_gi = d_gi.into_shape_with_order((b * t_len, 3 * hd)).expect("reshape");
        let d_gh = d_gh.into_shape_with_order((b * t_len, 3 * hd)).expect("reshape");
        let x = cache.input.to_shape((b * t_len, inp)).expect("standard layout");
        let h_prev = cache.h.slice(s![.., 0..t_len, ..]).to_owned();
        let h_prev = h_prev.into_shape_with_order((b * t_len, hd)).expect("reshape");
        grad.w_ih += &d_gi.t().dot(&x);
        grad.w_hh += &d_gh.t().dot(&h_prev);
        grad.b_ih += &d_gi.sum_axis(Axis(0));
        grad.b_hh += &d_gh.sum_axis(Axis(0));
        need_input_grad.then(|| {
            d_gi.dot(&self.w_ih)
                .into_shape_with_order((b, t_len, inp))
                .expect("reshape")
        })
    }
}

/// Stacked GRU returning the top layer's last hidden state. Dropout is
/// applied between layers in training mode only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruEncoder {
    pub layers: Vec<GruLayer>,
    pub dropout: f64,
}

impl GruEncoder {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, depth: usize, dropout: f64, rng: &mut R) -> Self {
        let layers = (0..depth)
            .map(|l| GruLayer::init(if l == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Self { layers, dropout }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| GruLayer::zeros(l.input_dim(), l.hidden_dim()))
                .collect(),
            dropout: self.dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].hidden_dim()
    }

    /// `x` is `B x T x d`. Passing an rng enables dropout (training mode).
    pub fn forward(&self, x: ArrayView3<f64>, mut dropout_rng: Option<&mut dyn RngCore>) -> (Array2<f64>, GruCache) {
        let mut input = x.as_standard_layout().into_owned();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let cache = layer.forward(input);
            if l + 1 == self.layers.len() {
                layers.push(cache);
                masks.push(None);
                break;
            }
            let t_len = cache.r.dim().1;
            let mut out = cache.h.slice(s![.., 1..=t_len, ..]).to_owned();
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    let m = Array3::from_shape_simple_fn(out.dim(), || {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    out *= &m;
                    Some(m)
                }
                _ => None,
            };
            layers.push(cache);
            masks.push(mask);
            input = out;
        }
        let top = layers.last().expect("at least one layer");
        let t_len = top.r.dim().1;
        let last = top.h.index_axis(Axis(1), t_len).to_owned();
        (last, GruCache { layers, masks })
    }

    /// Eval-mode forward without retaining a cache beyond one chunk.
    pub fn encode(&self, x: ArrayView3<f64>) -> Array2<f64> {
        const CHUNK: usize = 256;
        let b = x.dim().0;
        let mut out = Array2::zeros((b, self.hidden_dim()));
        let mut start = 0;
        while start < b {
            let end = (start + CHUNK).min(b);
            let (h, _) = self.forward(x.slice(s![start..end, .., ..]), None);
            out.slice_mut(s![start..end, ..]).assign(&h);
            start = end;
        }
        out
    }

    /// Accumulates parameter gradients given `dL/d(last hidden state)`.
    pub fn backward(&self, cache: &GruCache, d_last: ArrayView2<f64>, grad: &mut GruEncoder) {
        let depth = self.layers.len();
        let zero_last = Array2::<f64>::zeros(d_last.dim());
        let mut d_seq: Option<Array3<f64>> = None;
        for l in (0..depth).rev() {
            let last = if l + 1 == depth { d_last } else { zero_last.view() };
            let d_input = self.layers[l].backward(&cache.layers[l], d_seq.as_ref(), last, &mut grad.layers[l], l > 0);
            d_seq = d_input.map(|mut d| {
                if let Some(mask) = &cache.masks[l - 1] {
                    d *= mask;
                }
                d
            });
        }
    }
}

impl Parameters for GruEncoder {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        for (l, layer) in self.layers.iter().enumerate() {
            let p = join(prefix, &format!("layer{l}"));
            out.push(view2(&p, "w_ih", &layer.w_ih));
            out.push(view2(&p, "w_hh", &layer.w_hh));
            out.push(view1(&p, "b_ih", &layer.b_ih));
            out.push(view1(&p, "b_hh", &layer.b_hh));
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        for layer in &mut self.layers {
            out.push(layer.w_ih.as_slice_mut().expect("contiguous"));
            out.push(layer.w_hh.as_slice_mut().expect("contiguous"));
            out.push(layer.b_ih.as_slice_mut().expect("contiguous"));
            out.push(layer.b_hh.as_slice_mut().expect("contiguous"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use ndarray::Array3;

    #[test]
    fn zero_parameters_and_input_give_zero_state() {
        let mut enc = GruEncoder::init(3, 4, 2, 0.0, &mut rng_for(0, &[]));
        enc.fill_zero();
        let (h, _) = enc.forward(Array3::zeros((2, 5, 3)).view(), None);
        assert!(h.iter().all(|&v| v == 0.0));
    }

    /// Finite-difference check of every GRU parameter on a random instance.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_for(42, &[]);
        let enc = GruEncoder::init(3, 4, 2, 0.0, &mut rng);
        let x = Array3::from_shape_simple_fn((2, 4, 3), || rng.random_range(-1.0..1.0));
        let weights = Array2::from_shape_simple_fn((2, 4), || rng.random_range(-1.0..1.0));
        let loss = |e: &GruEncoder| (&e.forward(x.view(), None).0 * &weights).sum();

        let (_, cache) = enc.forward(x.view(), None);
        let mut grad = enc.zeros_like();
        enc.backward(&cache, weights.view(), &mut grad);

        let analytic: Vec<f64> = grad.param_views().iter().flat_map(|p| p.data.to_vec()).collect();
        let mut probe = enc.clone();
        let n = probe.n_params();
        let step = 1e-5;
        for idx in 0..n {
            let base = {
                let mut slices = probe.param_slices_mut();
                let (mut acc, mut found) = (0, None);
                for (si, s) in slices.iter().enumerate() {
                    if idx < acc + s.len() {
                        found = Some((si, idx - acc));
                        break;
                    }
                    acc += s.len();
                }
                let (si, off) = found.unwrap();
                let v = slices[si][off];
                slices[si][off] = v + step;
                (si, off, v)
            };
            let plus = loss(&probe);
            probe.param_slices_mut()[base.0][base.1] = base.2 - step;
            let minus = loss(&probe);
            probe.param_slices_mut()[base.0][base.1] = base.2;
            let fd = (plus - minus) / (2.0 * step);
            let err = (fd - analytic[idx]).abs() / fd.abs().max(analytic[idx].abs()).max(1e-6);
            assert!(err < 1e-5, "param {idx}: fd {fd} analytic {}", analytic[idx]);
        }
    }

    #[test]
    fn chunked_encode_matches_forward() {
        let mut rng = rng_for(1, &[]);
        let enc = GruEncoder::init(2, 3, 1, 0.1, &mut rng);
        let x = Array3::from_shape_simple_fn((300, 3, 2), || rng.random_range(-1.0..1.0));
        assert_eq!(enc.encode(x.view()), enc.forward(x.view(), None).0);
    }
}
