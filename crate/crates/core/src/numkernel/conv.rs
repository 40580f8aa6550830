use rand::Rng;

use super::{init_uniform, KernelError, Mat, Param, Parameterized, Real};

/// Spatial size of a feature map: `channels × height × width`, stored
/// channel-major in one matrix row per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl MapShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Square-kernel 2D convolution with zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `out_channels × (in_channels · k · k)`
    pub weight: Param<T>,
    /// `1 × out_channels`
    pub bias: Param<T>,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Unfolded input patches of every sample, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv2dCache<T> {
    cols: Vec<Mat<T>>,
    input: MapShape,
    output: MapShape,
}

impl<T: Real> Conv2d<T> {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: Param::new(format!("{name}.weight"), init_uniform(out_channels, fan_in, fan_in, rng)),
            bias: Param::zeros(format!("{name}.bias"), 1, out_channels),
            in_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn output_shape(&self, input: MapShape) -> MapShape {
        let o = |n: usize| (n + 2 * self.pad).saturating_sub(self.kernel) / self.stride + 1;
        MapShape::new(self.out_channels(), o(input.height), o(input.width))
    }

    fn im2col(&self, x: &[T], input: MapShape, output: MapShape) -> Mat<T> {
        let k = self.kernel;
        let mut cols = Mat::zeros(output.height * output.width, input.channels * k * k);
        for oy in 0..output.height {
            for ox in 0..output.width {
                let row = cols.row_mut(oy * output.width + ox);
                for c in 0..input.channels {
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= input.height as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= input.width as isize {
                                continue;
                            }
                            row[(c * k + ky) * k + kx] = x[(c * input.height + iy as usize) * input.width + ix as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Mat<T>, input: MapShape) -> Result<(Mat<T>, Conv2dCache<T>), KernelError> {
        if x.cols() != input.len() || input.channels != self.in_channels {
            return Err(KernelError::ShapeMismatch {
                op: "conv2d",
                expected: (x.rows(), self.in_channels * input.height * input.width),
                got: x.shape(),
            });
        }
        let output = self.output_shape(input);
        let p = output.height * output.width;
        let mut y = Mat::zeros(x.rows(), output.len());
        let mut cache = Conv2dCache { cols: Vec::with_capacity(x.rows()), input, output };
        for b in 0..x.rows() {
            let cols = self.im2col(x.row(b), input, output);
            let yb = cols.matmul_nt(&self.weight.value)?;
            let row = y.row_mut(b);
            for (oc, &bias) in self.bias.value.data().iter().enumerate() {
                for i in 0..p {
                    row[oc * p + i] = yb.get(i, oc) + bias;
                }
            }
            cache.cols.push(cols);
        }
        y.debug_assert_finite("conv2d");
        Ok((y, cache))
    }

    pub fn backward(&mut self, cache: &Conv2dCache<T>, dy: &Mat<T>) -> Mat<T> {
        let (input, output) = (cache.input, cache.output);
        let p = output.height * output.width;
        let oc_n = self.out_channels();
        let k = self.kernel;
        let mut dx = Mat::zeros(dy.rows(), input.len());
        for (b, cols) in cache.cols.iter().enumerate() {
            let d = dy.row(b);
            let dyb = Mat::from_fn(p, oc_n, |i, oc| d[oc * p + i]);
            self.weight.grad.add_matmul_tn(&dyb, cols);
            for (oc, g) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *g += d[oc * p..(oc + 1) * p].iter().copied().sum::<T>();
            }
            let mut dcols = Mat::zeros(p, cols.cols());
            dcols.add_matmul(&dyb, &self.weight.value);
            let dxr = dx.row_mut(b);
            for oy in 0..output.height {
                for ox in 0..output.width {
                    let row = dcols.row(oy * output.width + ox);
                    for c in 0..input.channels {
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= input.height as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= input.width as isize {
                                    continue;
                                }
                                dxr[(c * input.height + iy as usize) * input.width + ix as usize] += row[(c * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
        dx.debug_assert_finite("conv2d backward");
        dx
    }
}

impl<T: Real> Parameterized<T> for Conv2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

fn pool_range(i: usize, input: usize, output: usize) -> std::ops::Range<usize> {
    (i * input / output)..((i + 1) * input).div_ceil(output)
}

/// Averages each channel over a grid of `out_h × out_w` adaptive cells.
pub fn adaptive_avg_pool<T: Real>(x: &Mat<T>, input: MapShape, out_h: usize, out_w: usize) -> Mat<T> {
    let out = MapShape::new(input.channels, out_h, out_w);
    let mut y = Mat::zeros(x.rows(), out.len());
    for b in 0..x.rows() {
        let xr = x.row(b);
        let yr = y.row_mut(b);
        for c in 0..input.channels {
            for oy in 0..out_h {
                let ry = pool_range(oy, input.height, out_h);
                for ox in 0..out_w {
                    let rx = pool_range(ox, input.width, out_w);
                    let mut s = T::zero();
                    for iy in ry.clone() {
                        for ix in rx.clone() {
                            s += xr[(c * input.height + iy) * input.width + ix];
                        }
                    }
                    yr[(c * out_h + oy) * out_w + ox] = s / T::of((ry.len() * rx.len()) as f64);
                }
            }
        }
    }
    y
}

pub fn adaptive_avg_pool_backward<T: Real>(dy: &Mat<T>, input: MapShape, out_h: usize, out_w: usize) -> Mat<T> {
    let mut dx = Mat::zeros(dy.rows(), input.len());
    for b in 0..dy.rows() {
        let dyr = dy.row(b);
        let dxr = dx.row_mut(b);
        for c in 0..input.channels {
            for oy in 0..out_h {
                let ry = pool_range(oy, input.height, out_h);
                for ox in 0..out_w {
                    let rx = pool_range(ox, input.width, out_w);
                    let g = dyr[(c * out_h + oy) * out_w + ox] / T::of((ry.len() * rx.len()) as f64);
                    for iy in ry.clone() {
                        for ix in rx.clone() {
                            dxr[(c * input.height + iy) * input.width + ix] += g;
                        }
                    }
                }
            }
        }
    }
    dx
}
