//! Straight-line reference implementation of the predictor, one row at a
//! time with plain loops, reading weights by parameter name.

use std::collections::HashMap;

use foveacast_core::model::{GazeModel, ModelConfig, SceneMode};
use foveacast_core::numkernel::{Parameterized, Real};

pub struct Oracle {
    cfg: ModelConfig,
    p: HashMap<String, (usize, usize, Vec<f64>)>,
}

pub struct OracleOut {
    pub preds: Vec<[f64; 2]>,
    pub gates: [f64; 3],
    pub aux_head: [f64; 2],
    pub aux_scene: [f64; 2],
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Oracle {
    pub fn new<T: Real>(m: &GazeModel<T>) -> Self {
        let p = m
            .params()
            .iter()
            .map(|p| (p.name.clone(), (p.value.rows(), p.value.cols(), p.value.to_f64())))
            .collect();
        Self { cfg: m.config().clone(), p }
    }

    fn w(&self, name: &str) -> &(usize, usize, Vec<f64>) {
        self.p.get(name).unwrap_or_else(|| panic!("no parameter {name}"))
    }

    pub fn linear(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let (rows, cols, w) = self.w(&format!("{name}.weight"));
        let (_, _, b) = self.w(&format!("{name}.bias"));
        assert_eq!(*cols, x.len());
        let mut y = vec![0.0; *rows];
        for o in 0..*rows {
            let mut s = b[o];
            for i in 0..*cols {
                s += w[o * cols + i] * x[i];
            }
            y[o] = s;
        }
        y
    }

    fn mlp(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = self.linear(&format!("{name}.l1"), x).into_iter().map(|v| v.max(0.0)).collect();
        self.linear(&format!("{name}.l2"), &h)
    }

    pub fn lstm(&self, name: &str, seq: &[Vec<f64>]) -> Vec<f64> {
        let hd = self.cfg.hidden;
        let mut inputs: Vec<Vec<f64>> = seq.to_vec();
        for l in 0..self.cfg.lstm_layers {
            let (_, din, wih) = self.w(&format!("{name}.l{l}.w_ih"));
            let (_, _, whh) = self.w(&format!("{name}.l{l}.w_hh"));
            let (_, _, b) = self.w(&format!("{name}.l{l}.b"));
            let mut h = vec![0.0; hd];
            let mut c = vec![0.0; hd];
            let mut outs = Vec::new();
            for x in &inputs {
                let mut z = vec![0.0; 4 * hd];
                for g in 0..4 * hd {
                    let mut s = b[g];
                    for i in 0..*din {
                        s += wih[g * din + i] * x[i];
                    }
                    for j in 0..hd {
                        s += whh[g * hd + j] * h[j];
                    }
                    z[g] = s;
                }
                for j in 0..hd {
                    let (i, f, gg, o) = (sig(z[j]), sig(z[hd + j]), z[2 * hd + j].tanh(), sig(z[3 * hd + j]));
                    c[j] = f * c[j] + i * gg;
                    h[j] = o * c[j].tanh();
                }
                outs.push(h.clone());
            }
            inputs = outs;
        }
        inputs.pop().unwrap()
    }

    fn conv(&self, name: &str, x: &[f64], cin: usize, side: usize) -> (Vec<f64>, usize) {
        let (cout, _, w) = self.w(&format!("{name}.weight"));
        let (_, _, b) = self.w(&format!("{name}.bias"));
        let os = (side + 2 - 3) / 2 + 1;
        let mut y = vec![0.0; cout * os * os];
        for oc in 0..*cout {
            for oy in 0..os {
                for ox in 0..os {
                    let mut s = b[oc];
                    for ic in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as i64 - 1;
                                let ix = (ox * 2 + kx) as i64 - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < side && (ix as usize) < side {
                                    s += w[oc * cin * 9 + ic * 9 + ky * 3 + kx] * x[(ic * side + iy as usize) * side + ix as usize];
                                }
                            }
                        }
                    }
                    y[(oc * os + oy) * os + ox] = s.max(0.0);
                }
            }
        }
        (y, os)
    }

    pub fn scene(&self, input: &[f64]) -> Vec<f64> {
        let feat = match self.cfg.scene_mode {
            SceneMode::Precomputed => input.to_vec(),
            SceneMode::Conv { side } => {
                let mut x = input.to_vec();
                let (mut cin, mut s) = (1, side);
                for (i, cout) in [8usize, 16, 32].into_iter().enumerate() {
                    let (y, os) = self.conv(&format!("scene_conv{i}"), &x, cin, s);
                    x = y;
                    cin = cout;
                    s = os;
                }
                let mut pooled = vec![0.0; cin * 16];
                for c in 0..cin {
                    for py in 0..4 {
                        let (y0, y1) = (py * s / 4, ((py + 1) * s).div_ceil(4));
                        for px in 0..4 {
                            let (x0, x1) = (px * s / 4, ((px + 1) * s).div_ceil(4));
                            let mut acc = 0.0;
                            for yy in y0..y1 {
                                for xx in x0..x1 {
                                    acc += x[(c * s + yy) * s + xx];
                                }
                            }
                            pooled[(c * 4 + py) * 4 + px] = acc / ((y1 - y0) * (x1 - x0)) as f64;
                        }
                    }
                }
                pooled
            }
        };
        self.linear("scene_head", &feat).into_iter().map(|v| v.max(0.0)).collect()
    }

    pub fn forward_row(&self, gaze: &[Vec<f64>], head: &[Vec<f64>], scene: &[f64]) -> OracleOut {
        let fs = self.scene(scene);
        let fg = self.lstm("gaze_lstm", gaze);
        let fh = self.lstm("head_lstm", head);
        let sh = sig(self.mlp("gate_head", &fg)[0]);
        let ss = sig(self.mlp("gate_scene", &fg)[0]);
        let raw = (1.0 - sh - ss).max(0.0);
        let sum = raw + sh + ss;
        let gates = [raw / sum, sh / sum, ss / sum];
        let fused: Vec<f64> = (0..fg.len()).map(|j| gates[0] * fg[j] + gates[1] * fh[j] + gates[2] * fs[j]).collect();
        let z = self.linear("proj", &fused);
        let mut preds: Vec<[f64; 2]> = Vec::new();
        for i in 0..self.cfg.k_steps {
            let mut input = z.clone();
            for p in &preds {
                input.extend_from_slice(p);
            }
            let o = self.mlp(&format!("head{}", i + 1), &input);
            preds.push([sig(o[0]), sig(o[1])]);
        }
        let ah = self.linear("aux_head", &fh);
        let asc = self.linear("aux_scene", &fs);
        OracleOut { preds, gates, aux_head: [sig(ah[0]), sig(ah[1])], aux_scene: [sig(asc[0]), sig(asc[1])] }
    }
}
