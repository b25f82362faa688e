use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::uniform;

/// Additive self-attention pooling with a learned query:
/// `e_t = query · tanh(W h_t + b)`, `α = softmax(e)`, output `Σ α_t h_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `A × input`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub query: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionTrace {
    /// `tanh(W h_t + b)`, `T × A`
    projected: Array2<f64>,
    weights: Array1<f64>,
}

impl AttentionTrace {
    pub(crate) fn weights(&self) -> &Array1<f64> {
        &self.weights
    }
}

fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = scores.mapv(|v| (v - max).exp());
    let total = out.sum();
    out /= total;
    out
}

impl Attention {
    pub fn init(input: usize, width: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (width as f64).sqrt();
        Self {
            w: uniform((width, input), bound, rng),
            b: Array1::zeros(width),
            query: uniform(width, bound, rng),
        }
    }

    pub fn zeros(input: usize, width: usize) -> Self {
        Self {
            w: Array2::zeros((width, input)),
            b: Array1::zeros(width),
            query: Array1::zeros(width),
        }
    }

    pub fn width(&self) -> usize {
        self.query.len()
    }

    pub(crate) fn forward(&self, states: ArrayView2<f64>) -> (Array1<f64>, AttentionTrace) {
        let mut projected = states.dot(&self.w.t());
        projected += &self.b;
        projected.mapv_inplace(f64::tanh);
        let scores = projected.dot(&self.query);
        let weights = softmax(&scores);
        let pooled = weights.dot(&states);
        (pooled, AttentionTrace { projected, weights })
    }

    /// Accumulates parameter gradients and returns the gradient for `states`.
    pub(crate) fn backward(
        &self,
        trace: &AttentionTrace,
        states: ArrayView2<f64>,
        d_pooled: &Array1<f64>,
        grad: &mut Attention,
    ) -> Array2<f64> {
        let alpha = &trace.weights;
        // pooled = Σ α_t h_t
        let mut d_states = Array2::zeros(states.raw_dim());
        for (t, mut row) in d_states.rows_mut().into_iter().enumerate() {
            row.scaled_add(alpha[t], d_pooled);
        }
        let d_alpha = states.dot(d_pooled);
        let mean = alpha.dot(&d_alpha);
        let d_scores = alpha * &(&d_alpha - mean);

        // scores_t = query · z_t with z = tanh(W h + b)
        grad.query += &trace.projected.t().dot(&d_scores);
        let mut d_pre = Array2::from_shape_fn(trace.projected.raw_dim(), |(t, a)| {
            let z = trace.projected[[t, a]];
            d_scores[t] * self.query[a] * (1.0 - z * z)
        });
        grad.w += &d_pre.t().dot(&states);
        grad.b += &d_pre.sum_axis(Axis(0));
        d_pre = d_pre.dot(&self.w);
        d_states += &d_pre;
        d_states
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((format!("{prefix}.w"), self.w.view().into_dyn()));
        out.push((format!("{prefix}.b"), self.b.view().into_dyn()));
        out.push((format!("{prefix}.query"), self.query.view().into_dyn()));
    }

    pub(crate) fn named_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>,
    ) {
        out.push((format!("{prefix}.w"), self.w.view_mut().into_dyn()));
        out.push((format!("{prefix}.b"), self.b.view_mut().into_dyn()));
        out.push((format!("{prefix}.query"), self.query.view_mut().into_dyn()));
    }
}
