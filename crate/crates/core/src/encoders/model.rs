use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EncoderError, TextEmbedder, DEGENERATE_NORM};
use crate::nn::{join, normalize_backward, row_norms, GruCache, GruEncoder, Linear, ParamView, Parameters};
use crate::objective::Temperature;

/// Unit-norm series and text embeddings of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub h_s: Array1<f64>,
    pub h_t: Array1<f64>,
}

/// Time-series tower `W_A * GRU(x)`, text tower
/// `W_B * concat(MLP(LM(x)), LM(x))`, and the shared temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveModel {
    pub series: GruEncoder,
    pub text_hidden: Linear,
    pub text_out: Linear,
    pub proj_series: Linear,
    pub proj_text: Linear,
    pub temperature: Temperature,
}

/// Activations retained for the backward pass.
pub struct PairForward {
    pub h_s: Array2<f64>,
    pub h_t: Array2<f64>,
    series_cache: GruCache,
    series_repr: Array2<f64>,
    s_norms: Array1<f64>,
    provider: Array2<f64>,
    mlp_pre: Array2<f64>,
    mlp_act: Array2<f64>,
    text_repr: Array2<f64>,
    t_norms: Array1<f64>,
}

fn normalize_rows(z: Array2<f64>) -> Result<(Array2<f64>, Array1<f64>), EncoderError> {
    let norms = row_norms(z.view());
    if let Some((row, &norm)) = norms.iter().enumerate().find(|(_, &n)| !(n >= DEGENERATE_NORM)) {
        return Err(EncoderError::DegenerateEmbedding { row, norm });
    }
    let h = &z / &norms.view().insert_axis(Axis(1));
    Ok((h, norms))
}

impl ContrastiveModel {
    pub fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self, EncoderError> {
        cfg.validate()?;
        Ok(Self {
            series: GruEncoder::init(cfg.input_dim, cfg.hidden_dim, cfg.depth, cfg.dropout, rng),
            text_hidden: Linear::init(cfg.provider_dim, cfg.mlp_hidden_dim, true, rng),
            text_out: Linear::init(cfg.mlp_hidden_dim, cfg.mlp_output(), true, rng),
            proj_series: Linear::init(cfg.hidden_dim, cfg.shared_dim, false, rng),
            proj_text: Linear::init(cfg.text_repr_dim(), cfg.shared_dim, false, rng),
            temperature: Temperature::default(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            series: self.series.zeros_like(),
            text_hidden: self.text_hidden.zeros_like(),
            text_out: self.text_out.zeros_like(),
            proj_series: self.proj_series.zeros_like(),
            proj_text: self.proj_text.zeros_like(),
            temperature: Temperature { log_inv: 0.0 },
        }
    }

    pub fn provider_dim(&self) -> usize {
        self.text_hidden.input_dim()
    }

    fn check_series(&self, x: &ArrayView3<f64>) -> Result<(), EncoderError> {
        let (_, t, d) = x.dim();
        if t < 1 {
            return Err(EncoderError::Shape("sequence must have at least one step".into()));
        }
        if d != self.series.input_dim() {
            return Err(EncoderError::Shape(format!(
                "series has {d} variables, encoder expects {}",
                self.series.input_dim()
            )));
        }
        Ok(())
    }

    /// Eval-mode GRU representation of a batch `B x T x d_v`.
    pub fn encode_series_batch(&self, x: ArrayView3<f64>) -> Result<Array2<f64>, EncoderError> {
        self.check_series(&x)?;
        Ok(self.series.encode(x))
    }

    /// Final hidden state for one sequence `T x d_v`. An rng enables dropout.
    pub fn encode_series(&self, x: ArrayView2<f64>, dropout_rng: Option<&mut dyn RngCore>) -> Result<Array1<f64>, EncoderError> {
        let x3 = x.insert_axis(Axis(0));
        self.check_series(&x3)?;
        let (h, _) = self.series.forward(x3, dropout_rng);
        Ok(h.row(0).to_owned())
    }

    fn text_mlp(&self, provider: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let pre = self.text_hidden.forward(provider);
        let act = pre.mapv(|v| v.max(0.0));
        let out = self.text_out.forward(act.view());
        (pre, act, out)
    }

    /// `concat(MLP(e), e)` for provider embeddings `e` (`B x p`).
    pub fn encode_text_features(&self, provider: ArrayView2<f64>) -> Result<Array2<f64>, EncoderError> {
        if provider.ncols() != self.provider_dim() {
            return Err(EncoderError::Shape(format!(
                "provider output has {} dims, MLP expects {}",
                provider.ncols(),
                self.provider_dim()
            )));
        }
        let (_, _, out) = self.text_mlp(provider);
        Ok(concatenate(Axis(1), &[out.view(), provider]).expect("same row count"))
    }

    pub fn encode_text(&self, text: &str, provider: &dyn TextEmbedder) -> Result<Array1<f64>, EncoderError> {
        let e = provider.embed(text).insert_axis(Axis(0));
        Ok(self.encode_text_features(e.view())?.row(0).to_owned())
    }

    /// Normalised shared-space text embeddings for a list of strings.
    pub fn embed_texts(&self, texts: &[String], provider: &dyn TextEmbedder) -> Result<Array2<f64>, EncoderError> {
        let feats = self.encode_text_features(provider.embed_batch(texts).view())?;
        Ok(normalize_rows(self.proj_text.forward(feats.view()))?.0)
    }

    /// Normalised shared-space series embeddings from GRU representations.
    pub fn project_series(&self, series_repr: ArrayView2<f64>) -> Result<Array2<f64>, EncoderError> {
        if series_repr.ncols() != self.proj_series.input_dim() {
            return Err(EncoderError::Shape(format!(
                "series representation has {} dims, projection expects {}",
                series_repr.ncols(),
                self.proj_series.input_dim()
            )));
        }
        Ok(normalize_rows(self.proj_series.forward(series_repr))?.0)
    }

    pub fn project_and_normalize(&self, series_repr: ArrayView1<f64>, text_repr: ArrayView1<f64>) -> Result<EmbeddingPair, EncoderError> {
        project_and_normalize(series_repr, text_repr, &self.proj_series, &self.proj_text)
    }

    /// Training-mode forward over a batch of windows and provider embeddings.
    pub fn forward_pairs(
        &self,
        windows: ArrayView3<f64>,
        provider: ArrayView2<f64>,
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<PairForward, EncoderError> {
        self.check_series(&windows)?;
        if windows.dim().0 != provider.nrows() {
            return Err(EncoderError::Shape(format!(
                "{} windows but {} texts",
                windows.dim().0,
                provider.nrows()
            )));
        }
        let (series_repr, series_cache) = self.series.forward(windows, dropout_rng);
        let (h_s, s_norms) = normalize_rows(self.proj_series.forward(series_repr.view()))?;
        let (mlp_pre, mlp_act, mlp_out) = self.text_mlp(provider);
        let text_repr = concatenate(Axis(1), &[mlp_out.view(), provider]).expect("same row count");
        let (h_t, t_norms) = normalize_rows(self.proj_text.forward(text_repr.view()))?;
        Ok(PairForward {
            h_s,
            h_t,
            series_cache,
            series_repr,
            s_norms,
            provider: provider.to_owned(),
            mlp_pre,
            mlp_act,
            text_repr,
            t_norms,
        })
    }

    /// Accumulates gradients of every tower parameter given `dL/dh_S` and
    /// `dL/dh_T`. The temperature gradient is the caller's business.
    pub fn backward_pairs(&self, fwd: &PairForward, d_h_s: ArrayView2<f64>, d_h_t: ArrayView2<f64>, grad: &mut ContrastiveModel) {
        let dz_s = normalize_backward(fwd.h_s.view(), &fwd.s_norms, d_h_s);
        let d_repr = self.proj_series.backward(fwd.series_repr.view(), dz_s.view(), &mut grad.proj_series);
        self.series.backward(&fwd.series_cache, d_repr.view(), &mut grad.series);

        let dz_t = normalize_backward(fwd.h_t.view(), &fwd.t_norms, d_h_t);
        let d_text = self.proj_text.backward(fwd.text_repr.view(), dz_t.view(), &mut grad.proj_text);
        let mlp_out_dim = self.text_out.output_dim();
        // the provider half of the concat is frozen
        let d_mlp_out = d_text.slice(s![.., 0..mlp_out_dim]);
        let mut d_act = self.text_out.backward(fwd.mlp_act.view(), d_mlp_out, &mut grad.text_out);
        ndarray::Zip::from(&mut d_act)
            .and(&fwd.mlp_pre)
            .for_each(|d, &pre| {
                if pre <= 0.0 {
                    *d = 0.0
                }
            });
        self.text_hidden.backward_params(fwd.provider.view(), d_act.view(), &mut grad.text_hidden);
    }
}

/// `h_S = norm(W_A s)`, `h_T = norm(W_B t)`.
pub fn project_and_normalize(
    series_repr: ArrayView1<f64>,
    text_repr: ArrayView1<f64>,
    proj_series: &Linear,
    proj_text: &Linear,
) -> Result<EmbeddingPair, EncoderError> {
    if series_repr.len() != proj_series.input_dim() || text_repr.len() != proj_text.input_dim() {
        return Err(EncoderError::Shape(format!(
            "inputs ({}, {}) do not match projections ({}, {})",
            series_repr.len(),
            text_repr.len(),
            proj_series.input_dim(),
            proj_text.input_dim()
        )));
    }
    let (h_s, _) = normalize_rows(proj_series.forward(series_repr.insert_axis(Axis(0))))?;
    let (h_t, _) = normalize_rows(proj_text.forward(text_repr.insert_axis(Axis(0))))?;
    Ok(EmbeddingPair {
        h_s: h_s.row(0).to_owned(),
        h_t: h_t.row(0).to_owned(),
    })
}

impl Parameters for ContrastiveModel {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        self.series.params(&join(prefix, "series"), out);
        self.text_hidden.params(&join(prefix, "text_hidden"), out);
        self.text_out.params(&join(prefix, "text_out"), out);
        self.proj_series.params(&join(prefix, "proj_series"), out);
        self.proj_text.params(&join(prefix, "proj_text"), out);
        out.push(ParamView {
            name: join(prefix, "log_inv_temperature"),
            shape: vec![1],
            data: std::slice::from_ref(&self.temperature.log_inv),
        });
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.series.params_mut(out);
        self.text_hidden.params_mut(out);
        self.text_out.params_mut(out);
        self.proj_series.params_mut(out);
        self.proj_text.params_mut(out);
        out.push(std::slice::from_mut(&mut self.temperature.log_inv));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::HashingEmbedder;
    use crate::rng::rng_for;
    use ndarray::{array, Array3};

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            input_dim: 3,
            hidden_dim: 5,
            depth: 2,
            dropout: 0.1,
            provider_dim: 8,
            mlp_hidden_dim: 6,
            mlp_output_dim: None,
            shared_dim: 4,
        }
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut rng = rng_for(0, &[]);
        let m = ContrastiveModel::init(&tiny(), &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0));
        assert_eq!(m.encode_series(x.view(), None).unwrap(), m.encode_series(x.view(), None).unwrap());
    }

    #[test]
    fn zero_recurrent_weights_fixed_point() {
        let mut m = ContrastiveModel::init(&tiny(), &mut rng_for(1, &[])).unwrap();
        m.series.fill_zero();
        let h = m.encode_series(Array2::zeros((4, 3)).view(), None).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sequence_length_matters() {
        let mut rng = rng_for(2, &[]);
        let m = ContrastiveModel::init(&tiny(), &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((2, 3), || rng.random_range(-1.0..1.0));
        let one = m.encode_series(x.slice(s![0..1, ..]), None).unwrap();
        let two = m.encode_series(x.view(), None).unwrap();
        assert_ne!(one, two);
    }

    #[test]
    fn wrong_width_is_a_shape_error() {
        let m = ContrastiveModel::init(&tiny(), &mut rng_for(3, &[])).unwrap();
        assert!(matches!(m.encode_series(Array2::zeros((4, 2)).view(), None), Err(EncoderError::Shape(_))));
    }

    #[test]
    fn text_concat_contract() {
        let m = ContrastiveModel::init(&tiny(), &mut rng_for(4, &[])).unwrap();
        let p = HashingEmbedder::new(8);
        let text = "patient stable overnight";
        let out = m.encode_text(text, &p).unwrap();
        assert_eq!(out.len(), 8 + 8);
        assert_eq!(out.slice(s![8..]), p.embed(text));
    }

    #[test]
    fn zero_mlp_weights_leave_bias() {
        let mut m = ContrastiveModel::init(&tiny(), &mut rng_for(5, &[])).unwrap();
        m.text_hidden.fill_zero();
        m.text_out.weight.fill(0.0);
        let out = m.encode_text("unstable", &HashingEmbedder::new(8)).unwrap();
        assert_eq!(out.slice(s![0..8]), m.text_out.bias.as_ref().unwrap());
        m.text_out.fill_zero();
        let out = m.encode_text("unstable", &HashingEmbedder::new(8)).unwrap();
        assert!(out.slice(s![0..8]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_normalises() {
        let eye = Linear {
            weight: Array2::eye(3),
            bias: None,
        };
        let pair = project_and_normalize(array![1.0, 0.0, 0.0].view(), array![0.0, 2.0, 0.0].view(), &eye, &eye).unwrap();
        assert_eq!(pair.h_s, array![1.0, 0.0, 0.0]);
        assert_eq!(pair.h_t, array![0.0, 1.0, 0.0]);

        let mut rng = rng_for(6, &[]);
        let m = ContrastiveModel::init(&tiny(), &mut rng).unwrap();
        let s_in = Array1::from_shape_simple_fn(5, || rng.random_range(-1.0..1.0));
        let t_in = Array1::from_shape_simple_fn(16, || rng.random_range(-1.0..1.0));
        let a = m.project_and_normalize(s_in.view(), t_in.view()).unwrap();
        let b = m.project_and_normalize((&s_in * 10.0).view(), t_in.view()).unwrap();
        for (x, y) in a.h_s.iter().zip(b.h_s.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.h_s.dot(&a.h_s) - 1.0).abs() < 1e-6);
        assert!((a.h_t.dot(&a.h_t) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_projection_is_degenerate() {
        let zero = Linear::zeros(3, 3, false);
        let err = project_and_normalize(array![1.0, 1.0, 1.0].view(), array![1.0, 0.0, 0.0].view(), &zero, &zero).unwrap_err();
        assert!(matches!(err, EncoderError::DegenerateEmbedding { .. }));
    }

    #[test]
    fn outputs_are_finite() {
        let mut rng = rng_for(7, &[]);
        let m = ContrastiveModel::init(&tiny(), &mut rng).unwrap();
        let x = Array3::from_shape_simple_fn((3, 4, 3), || rng.random_range(-50.0..50.0));
        let e = HashingEmbedder::new(8).embed_batch(&["a b".into(), "c".into(), "".into()]);
        let f = m.forward_pairs(x.view(), e.view(), None).unwrap();
        assert!(f.h_s.iter().chain(f.h_t.iter()).all(|v| v.is_finite()));
    }
}
