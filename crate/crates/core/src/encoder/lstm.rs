use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::{sigmoid, uniform};

/// One LSTM direction. Gate blocks are stacked in the order input, forget,
/// cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `4H × input`
    pub w_ih: Array2<f64>,
    /// `4H × H`
    pub w_hh: Array2<f64>,
    /// `4H`
    pub bias: Array1<f64>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    reverse: bool,
    x: Array2<f64>,
    /// activated gates, `T × 4H`
    gates: Array2<f64>,
    cells: Array2<f64>,
    hidden: Array2<f64>,
}

impl LstmTrace {
    pub(crate) fn hidden(&self) -> &Array2<f64> {
        &self.hidden
    }
}

impl Lstm {
    /// Weights uniform in ±1/√H, forget-gate bias 1, other biases 0.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = Array1::zeros(4 * hidden);
        bias.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        Self {
            w_ih: uniform((4 * hidden, input), bound, rng),
            w_hh: uniform((4 * hidden, hidden), bound, rng),
            bias,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.ncols()
    }

    fn order(len: usize, reverse: bool) -> Box<dyn DoubleEndedIterator<Item = usize>> {
        if reverse {
            Box::new((0..len).rev())
        } else {
            Box::new(0..len)
        }
    }

    /// Runs over the rows of `x`, right to left when `reverse`. Hidden states
    /// are stored at the position of their input row.
    pub(crate) fn forward(&self, x: ArrayView2<f64>, reverse: bool) -> LstmTrace {
        let len = x.nrows();
        let h = self.hidden_size();
        let mut gates = x.dot(&self.w_ih.t());
        gates += &self.bias;
        let mut cells = Array2::zeros((len, h));
        let mut hidden = Array2::zeros((len, h));
        let mut h_prev = Array1::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);

        for t in Self::order(len, reverse) {
            let recurrent = self.w_hh.dot(&h_prev);
            let mut z = gates.row_mut(t);
            z += &recurrent;
            let z = z.as_slice_mut().expect("contiguous rows");
            let (c_row, h_row) = (cells.row_mut(t), hidden.row_mut(t));
            let c_row = c_row.into_slice().expect("contiguous rows");
            let h_row = h_row.into_slice().expect("contiguous rows");
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                z[k] = i;
                z[h + k] = f;
                z[2 * h + k] = g;
                z[3 * h + k] = o;
                let c = f * c_prev[k] + i * g;
                c_row[k] = c;
                h_row[k] = o * c.tanh();
            }
            c_prev.assign(&cells.row(t));
            h_prev.assign(&hidden.row(t));
        }

        LstmTrace {
            reverse,
            x: x.to_owned(),
            gates,
            cells,
            hidden,
        }
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input rows.
    pub(crate) fn backward(
        &self,
        trace: &LstmTrace,
        d_hidden: ArrayView2<f64>,
        grad: &mut Lstm,
    ) -> Array2<f64> {
        let len = trace.x.nrows();
        let h = self.hidden_size();
        let mut dz = Array2::<f64>::zeros((len, 4 * h));
        let mut h_prev_rows = Array2::<f64>::zeros((len, h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);

        let order: Vec<usize> = Self::order(len, trace.reverse).collect();
        for (step, &t) in order.iter().enumerate().rev() {
            let prev = step.checked_sub(1).map(|p| order[p]);
            if let Some(p) = prev {
                h_prev_rows.row_mut(t).assign(&trace.hidden.row(p));
            }
            let gates = trace.gates.row(t);
            let cells = trace.cells.row(t);
            let up = d_hidden.row(t);
            let mut dz_row = dz.row_mut(t);
            for k in 0..h {
                let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
                let c_prev = prev.map_or(0.0, |p| trace.cells[[p, k]]);
                let tc = cells[k].tanh();
                let dh = up[k] + dh_next[k];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                dz_row[k] = dc * g * i * (1.0 - i);
                dz_row[h + k] = dc * c_prev * f * (1.0 - f);
                dz_row[2 * h + k] = dc * i * (1.0 - g * g);
                dz_row[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next = self.w_hh.t().dot(&dz_row);
        }

        grad.w_ih += &dz.t().dot(&trace.x);
        grad.w_hh += &dz.t().dot(&h_prev_rows);
        grad.bias += &dz.sum_axis(Axis(0));
        dz.dot(&self.w_ih)
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        out.push((format!("{prefix}.w_ih"), self.w_ih.view().into_dyn()));
        out.push((format!("{prefix}.w_hh"), self.w_hh.view().into_dyn()));
        out.push((format!("{prefix}.bias"), self.bias.view().into_dyn()));
    }

    pub(crate) fn named_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>,
    ) {
        out.push((format!("{prefix}.w_ih"), self.w_ih.view_mut().into_dyn()));
        out.push((format!("{prefix}.w_hh"), self.w_hh.view_mut().into_dyn()));
        out.push((format!("{prefix}.bias"), self.bias.view_mut().into_dyn()));
    }
}

/// A forward and a backward LSTM whose states are concatenated per position.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

#[derive(Debug, Clone)]
pub(crate) struct BiLstmTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
    output: Array2<f64>,
}

impl BiLstmTrace {
    pub(crate) fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl BiLstm {
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            fwd: Lstm::init(input, hidden, rng),
            bwd: Lstm::init(input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            fwd: Lstm::zeros(input, hidden),
            bwd: Lstm::zeros(input, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.fwd.hidden_size()
    }

    pub fn input_size(&self) -> usize {
        self.fwd.input_size()
    }

    pub fn output_size(&self) -> usize {
        2 * self.hidden_size()
    }

    /// `T × input` → `T × 2H`: forward states then backward states.
    pub(crate) fn forward(&self, x: ArrayView2<f64>) -> BiLstmTrace {
        let fwd = self.fwd.forward(x, false);
        let bwd = self.bwd.forward(x, true);
        let h = self.hidden_size();
        let mut output = Array2::zeros((x.nrows(), 2 * h));
        output.slice_mut(s![.., ..h]).assign(fwd.hidden());
        output.slice_mut(s![.., h..]).assign(bwd.hidden());
        BiLstmTrace { fwd, bwd, output }
    }

    pub(crate) fn backward(
        &self,
        trace: &BiLstmTrace,
        d_output: ArrayView2<f64>,
        grad: &mut BiLstm,
    ) -> Array2<f64> {
        let h = self.hidden_size();
        let mut dx = self
            .fwd
            .backward(&trace.fwd, d_output.slice(s![.., ..h]), &mut grad.fwd);
        dx += &self
            .bwd
            .backward(&trace.bwd, d_output.slice(s![.., h..]), &mut grad.bwd);
        dx
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        self.fwd.named(&format!("{prefix}.forward"), out);
        self.bwd.named(&format!("{prefix}.backward"), out);
    }

    pub(crate) fn named_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>,
    ) {
        self.fwd.named_mut(&format!("{prefix}.forward"), out);
        self.bwd.named_mut(&format!("{prefix}.backward"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_shapes_and_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = Lstm::init(5, 3, &mut rng);
        assert_eq!(lstm.w_ih.dim(), (12, 5));
        assert_eq!(lstm.w_hh.dim(), (12, 3));
        assert_eq!(
            lstm.bias.to_vec(),
            vec![0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]
        );
        let bound = 1.0 / 3f64.sqrt();
        assert!(lstm.w_ih.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn reverse_direction_reads_right_to_left() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lstm = Lstm::init(2, 2, &mut rng);
        let x = uniform((4, 2), 1.0, &mut rng);
        let rev = lstm.forward(x.view(), true);
        let mut flipped = x.clone();
        flipped.invert_axis(Axis(0));
        let fwd_on_flipped = lstm.forward(flipped.view(), false);
        for t in 0..4 {
            let a = rev.hidden().row(t);
            let b = fwd_on_flipped.hidden().row(3 - t);
            assert!((&a - &b).iter().all(|d| d.abs() < 1e-14));
        }
    }
}
