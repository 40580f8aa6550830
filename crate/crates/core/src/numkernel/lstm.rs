use rand::Rng;

use super::activation::sigmoid;
use super::{init_uniform, KernelError, Mat, Param, Parameterized, Real};

/// Layout of the four gate blocks inside `w_ih`, `w_hh` and `b`.
pub const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];

/// One LSTM layer. Weight rows are stacked gate blocks in [`GATE_ORDER`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer<T> {
    /// `4H × D_in`
    pub w_ih: Param<T>,
    /// `4H × H`
    pub w_hh: Param<T>,
    /// `1 × 4H`
    pub b: Param<T>,
}

/// Everything one cell step needs for its backward pass.
#[derive(Debug, Clone)]
pub struct LstmCellCache<T> {
    x: Mat<T>,
    h_prev: Mat<T>,
    c_prev: Mat<T>,
    /// Activated gates `[i | f | g | o]`, `B × 4H`.
    gates: Mat<T>,
    tanh_c: Mat<T>,
}

impl<T: Real> LstmLayer<T> {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut b = Mat::zeros(1, 4 * hidden);
        for j in hidden..2 * hidden {
            b.set(0, j, T::one());
        }
        Self {
            w_ih: Param::new(format!("{name}.w_ih"), init_uniform(4 * hidden, input, input, rng)),
            w_hh: Param::new(format!("{name}.w_hh"), init_uniform(4 * hidden, hidden, hidden, rng)),
            b: Param::new(format!("{name}.b"), b),
        }
    }

    pub fn zeros(name: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Param::zeros(format!("{name}.w_ih"), 4 * hidden, input),
            w_hh: Param::zeros(format!("{name}.w_hh"), 4 * hidden, hidden),
            b: Param::zeros(format!("{name}.b"), 1, 4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.value.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.value.cols()
    }

    /// One step over a batch: `x` is `B × D_in`, `h` and `c` are `B × H`.
    #[allow(clippy::type_complexity)]
    pub fn cell_forward(
        &self,
        x: &Mat<T>,
        h: &Mat<T>,
        c: &Mat<T>,
    ) -> Result<(Mat<T>, Mat<T>, LstmCellCache<T>), KernelError> {
        let hd = self.hidden();
        let batch = x.rows();
        if x.cols() != self.input_dim() {
            return Err(KernelError::ShapeMismatch { op: "lstm_cell", expected: (batch, self.input_dim()), got: x.shape() });
        }
        if h.shape() != (batch, hd) || c.shape() != (batch, hd) {
            return Err(KernelError::ShapeMismatch { op: "lstm_cell", expected: (batch, hd), got: h.shape() });
        }
        let mut gates = x.matmul_nt(&self.w_ih.value)?;
        gates.add_matmul_nt(h, &self.w_hh.value);
        let bias = self.b.value.data();
        let mut c_new = Mat::zeros(batch, hd);
        let mut h_new = Mat::zeros(batch, hd);
        let mut tanh_c = Mat::zeros(batch, hd);
        for r in 0..batch {
            let g = gates.row_mut(r);
            for (gi, bi) in g.iter_mut().zip(bias) {
                *gi += *bi;
            }
            for j in 0..hd {
                g[j] = sigmoid(g[j]);
                g[hd + j] = sigmoid(g[hd + j]);
                g[2 * hd + j] = g[2 * hd + j].tanh();
                g[3 * hd + j] = sigmoid(g[3 * hd + j]);
            }
            let cp = c.row(r);
            let cn = c_new.row_mut(r);
            for j in 0..hd {
                cn[j] = g[hd + j] * cp[j] + g[j] * g[2 * hd + j];
            }
            let tc = tanh_c.row_mut(r);
            for j in 0..hd {
                tc[j] = cn[j].tanh();
            }
            let hn = h_new.row_mut(r);
            for j in 0..hd {
                hn[j] = g[3 * hd + j] * tc[j];
            }
        }
        h_new.debug_assert_finite("lstm_cell h");
        c_new.debug_assert_finite("lstm_cell c");
        let cache = LstmCellCache { x: x.clone(), h_prev: h.clone(), c_prev: c.clone(), gates, tanh_c };
        Ok((h_new, c_new, cache))
    }

    /// Backward of one step given gradients flowing into `h'` and `c'`.
    /// Returns `(dx, dh_prev, dc_prev)`.
    pub fn cell_backward(&mut self, cache: &LstmCellCache<T>, dh: &Mat<T>, dc: &Mat<T>) -> (Mat<T>, Mat<T>, Mat<T>) {
        let hd = self.hidden();
        let batch = dh.rows();
        let mut dpre = Mat::zeros(batch, 4 * hd);
        let mut dc_prev = Mat::zeros(batch, hd);
        let one = T::one();
        for r in 0..batch {
            let g = cache.gates.row(r);
            let tc = cache.tanh_c.row(r);
            let cp = cache.c_prev.row(r);
            let dhr = dh.row(r);
            let dcr = dc.row(r);
            let dp = dpre.row_mut(r);
            let dcp = dc_prev.row_mut(r);
            for j in 0..hd {
                let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let dct = dcr[j] + dhr[j] * o * (one - tc[j] * tc[j]);
                let d_o = dhr[j] * tc[j];
                let d_i = dct * gg;
                let d_g = dct * i;
                let d_f = dct * cp[j];
                dcp[j] = dct * f;
                dp[j] = d_i * i * (one - i);
                dp[hd + j] = d_f * f * (one - f);
                dp[2 * hd + j] = d_g * (one - gg * gg);
                dp[3 * hd + j] = d_o * o * (one - o);
            }
        }
        self.w_ih.grad.add_matmul_tn(&dpre, &cache.x);
        self.w_hh.grad.add_matmul_tn(&dpre, &cache.h_prev);
        let gb = self.b.grad.data_mut();
        for r in 0..batch {
            for (gbi, d) in gb.iter_mut().zip(dpre.row(r)) {
                *gbi += *d;
            }
        }
        let mut dx = Mat::zeros(batch, self.input_dim());
        dx.add_matmul(&dpre, &self.w_ih.value);
        let mut dh_prev = Mat::zeros(batch, hd);
        dh_prev.add_matmul(&dpre, &self.w_hh.value);
        (dx, dh_prev, dc_prev)
    }
}

impl<T: Real> Parameterized<T> for LstmLayer<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w_ih, &self.w_hh, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.b]
    }
}

/// Stacked LSTM: layer `l + 1` consumes the hidden sequence of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack<T> {
    pub layers: Vec<LstmLayer<T>>,
}

/// Per-layer, per-step caches from [`LstmStack::forward_seq`].
#[derive(Debug, Clone)]
pub struct LstmSeqCache<T> {
    steps: Vec<Vec<LstmCellCache<T>>>,
}

impl<T: Real> LstmStack<T> {
    pub fn new(name: &str, input: usize, hidden: usize, num_layers: usize, rng: &mut impl Rng) -> Self {
        let layers = (0..num_layers)
            .map(|l| LstmLayer::new(&format!("{name}.l{l}"), if l == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Self { layers }
    }

    pub fn zeros(name: &str, input: usize, hidden: usize, num_layers: usize) -> Self {
        let layers = (0..num_layers)
            .map(|l| LstmLayer::zeros(&format!("{name}.l{l}"), if l == 0 { input } else { hidden }, hidden))
            .collect();
        Self { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden())
    }

    /// Runs the whole stack from zero state over `seq` (one `B × D_in`
    /// matrix per step) and returns the last layer's final hidden state.
    pub fn forward_seq(&self, seq: &[Mat<T>]) -> Result<(Mat<T>, LstmSeqCache<T>), KernelError> {
        let first = seq.first().ok_or(KernelError::EmptySequence)?;
        let batch = first.rows();
        let mut inputs: Vec<Mat<T>> = seq.to_vec();
        let mut steps = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let hd = layer.hidden();
            let mut h = Mat::zeros(batch, hd);
            let mut c = Mat::zeros(batch, hd);
            let mut caches = Vec::with_capacity(inputs.len());
            let mut outputs = Vec::with_capacity(inputs.len());
            for x in &inputs {
                let (hn, cn, cache) = layer.cell_forward(x, &h, &c)?;
                caches.push(cache);
                outputs.push(hn.clone());
                h = hn;
                c = cn;
            }
            steps.push(caches);
            inputs = outputs;
        }
        let last = inputs.pop().expect("nonempty sequence");
        Ok((last, LstmSeqCache { steps }))
    }

    /// Backpropagation through time from a gradient on the final hidden
    /// state. Returns the gradient for every input step.
    pub fn backward_seq(&mut self, cache: &LstmSeqCache<T>, dh_final: &Mat<T>) -> Vec<Mat<T>> {
        let steps = cache.steps.first().map_or(0, |s| s.len());
        let batch = dh_final.rows();
        // Gradient arriving at each step's output from the layer above.
        let mut d_out: Vec<Option<Mat<T>>> = vec![None; steps];
        if steps > 0 {
            d_out[steps - 1] = Some(dh_final.clone());
        }
        for (layer, caches) in self.layers.iter_mut().zip(&cache.steps).rev() {
            let hd = layer.hidden();
            let mut dh_next = Mat::zeros(batch, hd);
            let mut dc_next = Mat::zeros(batch, hd);
            let mut d_in: Vec<Option<Mat<T>>> = vec![None; steps];
            for t in (0..steps).rev() {
                let mut dh = dh_next;
                if let Some(d) = &d_out[t] {
                    dh.add_assign(d);
                }
                let (dx, dhp, dcp) = layer.cell_backward(&caches[t], &dh, &dc_next);
                d_in[t] = Some(dx);
                dh_next = dhp;
                dc_next = dcp;
            }
            d_out = d_in;
        }
        d_out.into_iter().map(|d| d.expect("every step visited")).collect()
    }
}

impl<T: Real> Parameterized<T> for LstmStack<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
