use crate::datapipe::Batch;
use crate::numkernel::{
    adaptive_avg_pool, adaptive_avg_pool_backward, mse_loss, Activation, Conv2d, Conv2dCache, Linear, LstmSeqCache,
    LstmStack, MapShape, Mat, Param, Parameterized, Real,
};
use crate::seed::rng_from;

use super::fusion::{fuse, gates_from_sigmoids};
use super::loss::{spatial_loss, total_loss, LossBreakdown};
use super::{ModelConfig, ModelError, SceneMode};

/// Output channels of the three stride-2 conv layers.
pub const CONV_CHANNELS: [usize; 3] = [8, 16, 32];
/// Side of the adaptive pooling grid after the conv stack.
pub const CONV_POOL: usize = 4;

/// Initial gate-logit bias: each gate sigmoid starts near 1/3 so the implied
/// gaze weight starts near 1/3 as well instead of at the clamp.
const GATE_BIAS_INIT: f64 = -std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq)]
struct Mlp<T> {
    l1: Linear<T>,
    l2: Linear<T>,
}

struct MlpCache<T> {
    x: Mat<T>,
    pre: Mat<T>,
    hidden: Mat<T>,
}

impl<T: Real> Mlp<T> {
    fn new(name: &str, input: usize, hidden: usize, output: usize, rng: &mut impl rand::Rng) -> Self {
        Self { l1: Linear::new(&format!("{name}.l1"), input, hidden, rng), l2: Linear::new(&format!("{name}.l2"), hidden, output, rng) }
    }

    /// Returns the output logits (before the final sigmoid).
    fn forward(&self, x: &Mat<T>) -> Result<(Mat<T>, MlpCache<T>), ModelError> {
        let pre = self.l1.forward(x)?;
        let hidden = Activation::Relu.forward(&pre);
        let out = self.l2.forward(&hidden)?;
        Ok((out, MlpCache { x: x.clone(), pre, hidden }))
    }

    fn backward(&mut self, cache: &MlpCache<T>, dout: &Mat<T>) -> Mat<T> {
        let dh = self.l2.backward(&cache.hidden, dout);
        let dpre = Activation::Relu.backward(&cache.pre, &dh);
        self.l1.backward(&cache.x, &dpre)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.l1.params();
        v.extend(self.l2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.l1.params_mut();
        v.extend(self.l2.params_mut());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Keep every intermediate needed by [`GazeModel::backward`].
    Train,
    /// Outputs only.
    Infer,
}

/// Predictions and diagnostics for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput<T> {
    /// `k_steps` matrices of `B × 2`.
    pub preds: Vec<Mat<T>>,
    /// `B × 3`, columns `(gaze, head, scene)`.
    pub gates: Mat<T>,
    pub aux_head: Mat<T>,
    pub aux_scene: Mat<T>,
    pub f_gaze: Mat<T>,
    pub f_head: Mat<T>,
    pub f_scene: Mat<T>,
    pub f_fused: Mat<T>,
}

/// Intermediates of a training-mode forward pass.
pub struct ForwardCache<T> {
    conv: Vec<(Conv2dCache<T>, Mat<T>)>,
    conv_last: Option<MapShape>,
    scene_in: Mat<T>,
    scene_pre: Mat<T>,
    gaze_seq: LstmSeqCache<T>,
    head_seq: LstmSeqCache<T>,
    gate_head: MlpCache<T>,
    gate_scene: MlpCache<T>,
    sig_head: Vec<T>,
    sig_scene: Vec<T>,
    raw_gaze: Vec<T>,
    heads: Vec<MlpCache<T>>,
}

pub struct Forward<T> {
    pub output: ModelOutput<T>,
    pub cache: Option<ForwardCache<T>>,
}

/// Every learnable component of the predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeModel<T> {
    config: ModelConfig,
    conv: Vec<Conv2d<T>>,
    scene_head: Linear<T>,
    gaze_lstm: LstmStack<T>,
    head_lstm: LstmStack<T>,
    gate_head: Mlp<T>,
    gate_scene: Mlp<T>,
    proj: Linear<T>,
    heads: Vec<Mlp<T>>,
    aux_head: Linear<T>,
    aux_scene: Linear<T>,
}

fn sigmoid_mat<T: Real>(x: &Mat<T>) -> Mat<T> {
    Activation::Sigmoid.forward(x)
}

/// `dy ⊙ y(1 − y)` for a sigmoid output `y`.
fn sigmoid_back<T: Real>(y: &Mat<T>, dy: &Mat<T>) -> Mat<T> {
    Mat::from_fn(y.rows(), y.cols(), |r, c| {
        let v = y.get(r, c);
        dy.get(r, c) * v * (T::one() - v)
    })
}

impl<T: Real> GazeModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = rng_from(seed);
        let h = config.hidden;
        let (conv, scene_in) = match config.scene_mode {
            SceneMode::Precomputed => (Vec::new(), config.scene_feature_dim),
            SceneMode::Conv { .. } => {
                let mut layers = Vec::new();
                let mut cin = 1;
                for (i, &c) in CONV_CHANNELS.iter().enumerate() {
                    layers.push(Conv2d::new(&format!("scene_conv{i}"), cin, c, 3, 2, 1, &mut rng));
                    cin = c;
                }
                (layers, cin * CONV_POOL * CONV_POOL)
            }
        };
        let scene_head = Linear::new("scene_head", scene_in, h, &mut rng);
        let gaze_lstm = LstmStack::new("gaze_lstm", 2, h, config.lstm_layers, &mut rng);
        let head_lstm = LstmStack::new("head_lstm", 4, h, config.lstm_layers, &mut rng);
        let mut gate_head = Mlp::new("gate_head", h, config.gate_hidden, 1, &mut rng);
        let mut gate_scene = Mlp::new("gate_scene", h, config.gate_hidden, 1, &mut rng);
        gate_head.l2.bias.value.fill(T::of(GATE_BIAS_INIT));
        gate_scene.l2.bias.value.fill(T::of(GATE_BIAS_INIT));
        let proj = Linear::new("proj", h, config.fused_proj, &mut rng);
        let heads = (0..config.k_steps)
            .map(|i| Mlp::new(&format!("head{}", i + 1), config.fused_proj + 2 * i, config.head_hidden, 2, &mut rng))
            .collect();
        let aux_head = Linear::new("aux_head", h, 2, &mut rng);
        let aux_scene = Linear::new("aux_scene", h, 2, &mut rng);
        Ok(Self { config, conv, scene_head, gaze_lstm, head_lstm, gate_head, gate_scene, proj, heads, aux_head, aux_scene })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Same parameters in another precision.
    pub fn cast<U: Real>(&self) -> GazeModel<U> {
        let mut out = GazeModel::<U>::new(self.config.clone(), 0).expect("validated config");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            for (d, s) in dst.value.data_mut().iter_mut().zip(src.value.data()) {
                *d = U::of(s.f64());
            }
        }
        out
    }

    pub fn set_lambda_aux(&mut self, lambda: f64) {
        self.config.lambda_aux = lambda;
    }

    /// Sets the output bias of both gate MLPs, e.g. to pin the gates near
    /// a chosen operating point.
    pub fn set_gate_biases(&mut self, head: f64, scene: f64) {
        self.gate_head.l2.bias.value.fill(T::of(head));
        self.gate_scene.l2.bias.value.fill(T::of(scene));
    }

    /// Parameters of the head encoder only.
    pub fn head_encoder_params(&self) -> Vec<&Param<T>> {
        self.head_lstm.params()
    }

    pub fn scene_head_params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self.conv.iter().flat_map(|c| c.params()).collect();
        v.extend(self.scene_head.params());
        v
    }

    fn check_scene(&self, scene: &Mat<T>) -> Result<(), ModelError> {
        let expected = self.config.scene_input_width();
        if scene.cols() != expected {
            let mode = match self.config.scene_mode {
                SceneMode::Precomputed => "precomputed",
                SceneMode::Conv { .. } => "conv",
            };
            return Err(ModelError::ModeMismatch { mode, expected, got: scene.cols() });
        }
        Ok(())
    }

    fn check_seq(&self, seq: &[Mat<T>], dim: usize, op: &'static str) -> Result<(), ModelError> {
        if seq.len() != self.config.n_in {
            return Err(crate::numkernel::KernelError::ShapeMismatch { op, expected: (self.config.n_in, dim), got: (seq.len(), dim) }.into());
        }
        Ok(())
    }

    #[allow(clippy::type_complexity)]
    fn scene_forward(
        &self,
        scene: &Mat<T>,
    ) -> Result<(Mat<T>, Vec<(Conv2dCache<T>, Mat<T>)>, Option<MapShape>, Mat<T>, Mat<T>), ModelError> {
        self.check_scene(scene)?;
        let mut caches = Vec::new();
        let mut last = None;
        let scene_in = if let SceneMode::Conv { side } = self.config.scene_mode {
            let mut x = scene.clone();
            let mut shape = MapShape::new(1, side, side);
            for conv in &self.conv {
                let (pre, cache) = conv.forward(&x, shape)?;
                shape = conv.output_shape(shape);
                x = Activation::Relu.forward(&pre);
                caches.push((cache, pre));
            }
            last = Some(shape);
            adaptive_avg_pool(&x, shape, CONV_POOL, CONV_POOL)
        } else {
            scene.clone()
        };
        let pre = self.scene_head.forward(&scene_in)?;
        let f = Activation::Relu.forward(&pre);
        Ok((f, caches, last, scene_in, pre))
    }

    /// Scene projection head, applied to features or to an image through the conv stack.
    pub fn scene_encode(&self, scene: &Mat<T>) -> Result<Mat<T>, ModelError> {
        Ok(self.scene_forward(scene)?.0)
    }

    /// Final top-layer hidden state of the gaze LSTM over `n_in` steps of `B × 2`.
    pub fn gaze_encode(&self, seq: &[Mat<T>]) -> Result<Mat<T>, ModelError> {
        self.check_seq(seq, 2, "gaze sequence")?;
        Ok(self.gaze_lstm.forward_seq(seq)?.0)
    }

    /// Final top-layer hidden state of the head LSTM over `n_in` steps of `B × 4`.
    pub fn head_encode(&self, seq: &[Mat<T>]) -> Result<Mat<T>, ModelError> {
        self.check_seq(seq, 4, "head sequence")?;
        Ok(self.head_lstm.forward_seq(seq)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn gates_forward(&self, f_gaze: &Mat<T>) -> Result<(Mat<T>, MlpCache<T>, MlpCache<T>, Vec<T>, Vec<T>, Vec<T>), ModelError> {
        let (lh, ch) = self.gate_head.forward(f_gaze)?;
        let (ls, cs) = self.gate_scene.forward(f_gaze)?;
        let b = f_gaze.rows();
        let mut gates = Mat::zeros(b, 3);
        let (mut sh, mut ss, mut raw) = (Vec::with_capacity(b), Vec::with_capacity(b), Vec::with_capacity(b));
        for r in 0..b {
            let h = Activation::Sigmoid.apply(lh.get(r, 0));
            let s = Activation::Sigmoid.apply(ls.get(r, 0));
            gates.row_mut(r).copy_from_slice(&gates_from_sigmoids(h, s));
            sh.push(h);
            ss.push(s);
            raw.push(T::one() - h - s);
        }
        Ok((gates, ch, cs, sh, ss, raw))
    }

    /// Gate weights `B × 3` computed from the gaze features.
    pub fn compute_gates(&self, f_gaze: &Mat<T>) -> Result<Mat<T>, ModelError> {
        Ok(self.gates_forward(f_gaze)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn predict_forward(&self, f_fused: &Mat<T>) -> Result<(Vec<Mat<T>>, Mat<T>, Vec<MlpCache<T>>), ModelError> {
        let z = self.proj.forward(f_fused)?;
        let mut preds: Vec<Mat<T>> = Vec::with_capacity(self.heads.len());
        let mut caches = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let mut parts = vec![&z];
            parts.extend(preds.iter());
            let input = Mat::hcat(&parts)?;
            let (logits, cache) = head.forward(&input)?;
            preds.push(sigmoid_mat(&logits));
            caches.push(cache);
        }
        Ok((preds, z, caches))
    }

    /// Autoregressive step predictions from fused features.
    pub fn predict_steps(&self, f_fused: &Mat<T>) -> Result<Vec<Mat<T>>, ModelError> {
        Ok(self.predict_forward(f_fused)?.0)
    }

    /// Auxiliary next-step predictions from the head and scene features alone.
    pub fn aux_predict(&self, f_head: &Mat<T>, f_scene: &Mat<T>) -> Result<(Mat<T>, Mat<T>), ModelError> {
        Ok((sigmoid_mat(&self.aux_head.forward(f_head)?), sigmoid_mat(&self.aux_scene.forward(f_scene)?)))
    }

    pub fn forward(&self, batch: &Batch<T>, mode: ForwardMode) -> Result<Forward<T>, ModelError> {
        if batch.scene.rows() == 0 {
            return Err(ModelError::EmptyBatch);
        }
        let finite = |m: &Mat<T>| m.is_finite();
        if !(finite(&batch.scene) && batch.gaze.iter().all(finite) && batch.head.iter().all(finite)) {
            return Err(ModelError::NonFinite("input batch"));
        }
        let (f_scene, conv, conv_last, scene_in, scene_pre) = self.scene_forward(&batch.scene)?;
        self.check_seq(&batch.gaze, 2, "gaze sequence")?;
        self.check_seq(&batch.head, 4, "head sequence")?;
        let (f_gaze, gaze_seq) = self.gaze_lstm.forward_seq(&batch.gaze)?;
        let (f_head, head_seq) = self.head_lstm.forward_seq(&batch.head)?;
        let (gates, gate_head, gate_scene, sig_head, sig_scene, raw_gaze) = self.gates_forward(&f_gaze)?;
        let f_fused = fuse(&f_gaze, &f_head, &f_scene, &gates);
        let (preds, _z, heads) = self.predict_forward(&f_fused)?;
        let (aux_head, aux_scene) = self.aux_predict(&f_head, &f_scene)?;
        let output = ModelOutput { preds, gates, aux_head, aux_scene, f_gaze, f_head, f_scene, f_fused };
        if output.preds.iter().any(|p| !p.is_finite()) || !output.gates.is_finite() {
            return Err(ModelError::NonFinite("forward"));
        }
        let cache = match mode {
            ForwardMode::Infer => None,
            ForwardMode::Train => Some(ForwardCache {
                conv,
                conv_last,
                scene_in,
                scene_pre,
                gaze_seq,
                head_seq,
                gate_head,
                gate_scene,
                sig_head,
                sig_scene,
                raw_gaze,
                heads,
            }),
        };
        Ok(Forward { output, cache })
    }

    /// Loss terms for `output` against `k_steps` target matrices.
    pub fn loss(&self, output: &ModelOutput<T>, targets: &[Mat<T>]) -> Result<LossBreakdown, ModelError> {
        let (spatial, per_step) = spatial_loss(&output.preds, targets, &self.config.spatial_weights)?;
        let first = targets.first().ok_or(ModelError::EmptyBatch)?;
        let aux_head = mse_loss(&output.aux_head, first)?.0.f64();
        let aux_scene = mse_loss(&output.aux_scene, first)?.0.f64();
        let total = total_loss(spatial, aux_head, aux_scene, self.config.lambda_aux)?;
        Ok(LossBreakdown { total, spatial, per_step, aux_head, aux_scene })
    }

    /// Accumulates gradients of the total loss into every parameter and
    /// returns the loss terms.
    pub fn backward(&mut self, fwd: &Forward<T>, targets: &[Mat<T>]) -> Result<LossBreakdown, ModelError> {
        let cache = fwd.cache.as_ref().ok_or(ModelError::MissingForwardCache)?;
        let out = &fwd.output;
        let loss = self.loss(out, targets)?;
        let k = self.config.k_steps;
        let p_dim = self.config.fused_proj;
        let lambda = T::of(self.config.lambda_aux);

        let mut dpreds: Vec<Mat<T>> = Vec::with_capacity(k);
        for ((p, t), w) in out.preds.iter().zip(targets).zip(&self.config.spatial_weights) {
            let (_, mut g) = mse_loss(p, t)?;
            g.scale(T::of(*w));
            dpreds.push(g);
        }
        let mut dz = Mat::zeros(out.f_fused.rows(), p_dim);
        for i in (0..k).rev() {
            let dlogit = sigmoid_back(&out.preds[i], &dpreds[i]);
            let din = self.heads[i].backward(&cache.heads[i], &dlogit);
            dz.add_assign(&din.col_slice(0, p_dim));
            for (j, dp) in dpreds.iter_mut().enumerate().take(i) {
                dp.add_assign(&din.col_slice(p_dim + 2 * j, 2));
            }
        }
        let df_fused = self.proj.backward(&out.f_fused, &dz);

        let b = out.f_fused.rows();
        let h = self.config.hidden;
        let mut df_gaze = Mat::zeros(b, h);
        let mut df_head = Mat::zeros(b, h);
        let mut df_scene = Mat::zeros(b, h);
        let mut dlh = Mat::zeros(b, 1);
        let mut dls = Mat::zeros(b, 1);
        for r in 0..b {
            let g = out.gates.row(r);
            let d = df_fused.row(r);
            let feats = [out.f_gaze.row(r), out.f_head.row(r), out.f_scene.row(r)];
            let mut dg = [T::zero(); 3];
            for (m, f) in feats.iter().enumerate() {
                dg[m] = crate::numkernel::dot(d, f);
            }
            for (dst, gm) in [(&mut df_gaze, g[0]), (&mut df_head, g[1]), (&mut df_scene, g[2])] {
                for (o, &v) in dst.row_mut(r).iter_mut().zip(d) {
                    *o = gm * v;
                }
            }
            let (sh, ss, raw) = (cache.sig_head[r], cache.sig_scene[r], cache.raw_gaze[r]);
            let clamped = if raw > T::zero() { raw } else { T::zero() };
            let sum = clamped + sh + ss;
            let mean = dg[0] * g[0] + dg[1] * g[1] + dg[2] * g[2];
            let du: Vec<T> = dg.iter().map(|&x| (x - mean) / sum).collect();
            let through_raw = if raw > T::zero() { du[0] } else { T::zero() };
            let dsh = du[1] - through_raw;
            let dss = du[2] - through_raw;
            dlh.set(r, 0, dsh * sh * (T::one() - sh));
            dls.set(r, 0, dss * ss * (T::one() - ss));
        }
        df_gaze.add_assign(&self.gate_head.backward(&cache.gate_head, &dlh));
        df_gaze.add_assign(&self.gate_scene.backward(&cache.gate_scene, &dls));

        let first = &targets[0];
        let (_, mut dah) = mse_loss(&out.aux_head, first)?;
        dah.scale(lambda);
        let (_, mut das) = mse_loss(&out.aux_scene, first)?;
        das.scale(lambda);
        df_head.add_assign(&self.aux_head.backward(&out.f_head, &sigmoid_back(&out.aux_head, &dah)));
        df_scene.add_assign(&self.aux_scene.backward(&out.f_scene, &sigmoid_back(&out.aux_scene, &das)));

        let dpre = Activation::Relu.backward(&cache.scene_pre, &df_scene);
        if self.conv.is_empty() {
            self.scene_head.accumulate_grads(&cache.scene_in, &dpre);
        } else {
            let dpool = self.scene_head.backward(&cache.scene_in, &dpre);
            let shape = cache.conv_last.expect("conv cache");
            let mut dx = adaptive_avg_pool_backward(&dpool, shape, CONV_POOL, CONV_POOL);
            for (conv, (cc, pre)) in self.conv.iter_mut().zip(&cache.conv).rev() {
                let dpre = Activation::Relu.backward(pre, &dx);
                dx = conv.backward(cc, &dpre);
            }
        }
        self.gaze_lstm.backward_seq(&cache.gaze_seq, &df_gaze);
        self.head_lstm.backward_seq(&cache.head_seq, &df_head);
        if self.params().iter().any(|p| !p.grad.is_finite()) {
            return Err(ModelError::NonFinite("gradients"));
        }
        Ok(loss)
    }
}

impl<T: Real> Parameterized<T> for GazeModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self.conv.iter().flat_map(|c| c.params()).collect();
        v.extend(self.scene_head.params());
        v.extend(self.gaze_lstm.params());
        v.extend(self.head_lstm.params());
        v.extend(self.gate_head.params());
        v.extend(self.gate_scene.params());
        v.extend(self.proj.params());
        for h in &self.heads {
            v.extend(h.params());
        }
        v.extend(self.aux_head.params());
        v.extend(self.aux_scene.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = self.conv.iter_mut().flat_map(|c| c.params_mut()).collect();
        v.extend(self.scene_head.params_mut());
        v.extend(self.gaze_lstm.params_mut());
        v.extend(self.head_lstm.params_mut());
        v.extend(self.gate_head.params_mut());
        v.extend(self.gate_scene.params_mut());
        v.extend(self.proj.params_mut());
        for h in &mut self.heads {
            v.extend(h.params_mut());
        }
        v.extend(self.aux_head.params_mut());
        v.extend(self.aux_scene.params_mut());
        v
    }
}
