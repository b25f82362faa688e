use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::uniform;

/// Affine map `input → classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `classes × input`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: uniform((output, input), bound, rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.nrows()
    }

    pub(crate) fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weight.t());
        out += &self.bias;
        out
    }

    pub(crate) fn backward(
        &self,
        x: ArrayView2<f64>,
        d_out: ArrayView2<f64>,
        grad: &mut Dense,
    ) -> Array2<f64> {
        grad.weight += &d_out.t().dot(&x);
        grad.bias += &d_out.sum_axis(Axis(0));
        d_out.dot(&self.weight)
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((format!("{prefix}.weight"), self.weight.view().into_dyn()));
        out.push((format!("{prefix}.bias"), self.bias.view().into_dyn()));
    }

    pub(crate) fn named_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>,
    ) {
        out.push((
            format!("{prefix}.weight"),
            self.weight.view_mut().into_dyn(),
        ));
        out.push((format!("{prefix}.bias"), self.bias.view_mut().into_dyn()));
    }
}
