//! The layer zoo: dense, ReLU, strided 3x3 convolution, global average
//! pooling and flatten.

use rand::Rng;

use super::{matmul_abt, matmul_acc, matmul_atb, Layer, LayerSpec, NnError, Tensor};

/// Weight initialization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// `U(-sqrt(6/fan_in), +sqrt(6/fan_in))`, for layers feeding a ReLU.
    HeUniform,
    /// `U(-sqrt(6/(fan_in+fan_out)), ...)`, for linear output layers.
    XavierUniform,
}

fn init_limit(kind: InitKind, fan_in: usize, fan_out: usize) -> f64 {
    match kind {
        InitKind::HeUniform => (6.0 / fan_in as f64).sqrt(),
        InitKind::XavierUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    }
}

fn fill_uniform<R: Rng>(t: &mut Tensor, limit: f64, rng: &mut R) {
    for x in t.data_mut() {
        *x = -limit + 2.0 * limit * rng.random::<f64>();
    }
}

/// Fully connected layer: `y = W x + b`, weights stored `[out, in]`.
pub struct Dense {
    input: usize,
    output: usize,
    w: Tensor,
    b: Tensor,
    gw: Tensor,
    gb: Tensor,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new<R: Rng>(input: usize, output: usize, init: InitKind, rng: &mut R) -> Self {
        let mut w = Tensor::zeros(&[output, input]);
        fill_uniform(&mut w, init_limit(init, input, output), rng);
        Self {
            input,
            output,
            w,
            b: Tensor::zeros(&[output]),
            gw: Tensor::zeros(&[output, input]),
            gb: Tensor::zeros(&[output]),
            cache: None,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        if x.shape() != [self.input] {
            return Err(NnError::ShapeMismatch {
                layer: format!("Dense({}->{})", self.input, self.output),
                expected: format!("[{}]", self.input),
                got: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }
}

impl Layer for Dense {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Dense {
            input: self.input,
            output: self.output,
        }
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let mut y = self.b.clone();
        matmul_acc(y.data_mut(), self.w.data(), x.data(), self.output, self.input, 1);
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor, NnError> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| NnError::NoForwardCache(format!("Dense({}->{})", self.input, self.output)))?;
        if gy.shape() != [self.output] {
            return Err(NnError::ShapeMismatch {
                layer: format!("Dense({}->{})", self.input, self.output),
                expected: format!("[{}]", self.output),
                got: format!("{:?}", gy.shape()),
            });
        }
        // gw[o][i] += gy[o] * x[i]; gb += gy; gx = W^T gy
        matmul_abt(self.gw.data_mut(), gy.data(), x.data(), self.output, self.input, 1);
        for (g, &v) in self.gb.data_mut().iter_mut().zip(gy.data()) {
            *g += v;
        }
        let mut gx = Tensor::zeros(&[self.input]);
        matmul_atb(gx.data_mut(), self.w.data(), gy.data(), self.output, self.input, 1);
        Ok(gx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }

    fn grads(&self) -> Vec<&Tensor> {
        vec![&self.gw, &self.gb]
    }

    fn zero_grads(&mut self) {
        self.gw.fill_zero();
        self.gb.fill_zero();
    }
}

/// Elementwise `max(0, x)`.
#[derive(Default)]
pub struct Relu {
    cache: Option<Tensor>,
    last_min_abs_input: f64,
}

impl Relu {
    pub fn new() -> Self {
        Self {
            cache: None,
            last_min_abs_input: f64::INFINITY,
        }
    }
}

impl Layer for Relu {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Relu
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        self.last_min_abs_input = x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor, NnError> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| NnError::NoForwardCache("Relu".into()))?;
        if gy.shape() != x.shape() {
            return Err(NnError::ShapeMismatch {
                layer: "Relu".into(),
                expected: format!("{:?}", x.shape()),
                got: format!("{:?}", gy.shape()),
            });
        }
        let mut gx = gy.clone();
        for (g, &v) in gx.data_mut().iter_mut().zip(x.data()) {
            if v <= 0.0 {
                *g = 0.0;
            }
        }
        Ok(gx)
    }

    fn min_abs_preactivation(&self) -> Option<f64> {
        Some(self.last_min_abs_input)
    }
}

/// Strided valid convolution over `[C, H, W]` inputs, 3x3 by default.
///
/// Implemented as im2col plus the shared matrix kernels; the column buffer
/// from the forward pass is cached for the backward pass.
pub struct Conv2d {
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    w: Tensor, // [out_ch, in_ch, k, k]
    b: Tensor, // [out_ch]
    gw: Tensor,
    gb: Tensor,
    cache: Option<ConvCache>,
}

struct ConvCache {
    col: Vec<f64>,
    in_shape: [usize; 3],
    out_hw: [usize; 2],
}

impl Conv2d {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, stride: usize, rng: &mut R) -> Self {
        Self::with_kernel(in_ch, out_ch, 3, stride, rng)
    }

    pub fn with_kernel<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel > 0 && stride > 0);
        let mut w = Tensor::zeros(&[out_ch, in_ch, kernel, kernel]);
        let fan_in = in_ch * kernel * kernel;
        fill_uniform(&mut w, init_limit(InitKind::HeUniform, fan_in, out_ch), rng);
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            w,
            b: Tensor::zeros(&[out_ch]),
            gw: Tensor::zeros(&[out_ch, in_ch, kernel, kernel]),
            gb: Tensor::zeros(&[out_ch]),
            cache: None,
        }
    }

    fn name(&self) -> String {
        format!("Conv({}->{}, k{}, s{})", self.in_ch, self.out_ch, self.kernel, self.stride)
    }

    fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        if h < self.kernel || w < self.kernel {
            return Err(NnError::ShapeMismatch {
                layer: self.name(),
                expected: format!("spatial dims >= {}", self.kernel),
                got: format!("{h}x{w}"),
            });
        }
        Ok(((h - self.kernel) / self.stride + 1, (w - self.kernel) / self.stride + 1))
    }

    fn check_input(&self, x: &Tensor) -> Result<[usize; 3], NnError> {
        match *x.shape() {
            [c, h, w] if c == self.in_ch => Ok([c, h, w]),
            _ => Err(NnError::ShapeMismatch {
                layer: self.name(),
                expected: format!("[{}, h, w]", self.in_ch),
                got: format!("{:?}", x.shape()),
            }),
        }
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
        let k = self.kernel;
        let s = self.stride;
        let patch = oh * ow;
        let mut col = vec![0.0; self.in_ch * k * k * patch];
        for c in 0..self.in_ch {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((c * k + ky) * k + kx) * patch..((c * k + ky) * k + kx + 1) * patch];
                    for oy in 0..oh {
                        let src = &plane[(oy * s + ky) * w..];
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        for ox in 0..ow {
                            dst[ox] = src[ox * s + kx];
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, gcol: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
        let k = self.kernel;
        let s = self.stride;
        let patch = oh * ow;
        let mut gx = vec![0.0; self.in_ch * h * w];
        for c in 0..self.in_ch {
            let plane = &mut gx[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &gcol[((c * k + ky) * k + kx) * patch..((c * k + ky) * k + kx + 1) * patch];
                    for oy in 0..oh {
                        let dst = &mut plane[(oy * s + ky) * w..];
                        let src = &row[oy * ow..(oy + 1) * ow];
                        for ox in 0..ow {
                            dst[ox * s + kx] += src[ox];
                        }
                    }
                }
            }
        }
        gx
    }

    fn infer_with_col(&self, x: &Tensor) -> Result<(Tensor, Vec<f64>, [usize; 3], [usize; 2]), NnError> {
        let [c, h, w] = self.check_input(x)?;
        let (oh, ow) = self.out_hw(h, w)?;
        let col = self.im2col(x.data(), h, w, oh, ow);
        let patch = oh * ow;
        let mut out = Tensor::zeros(&[self.out_ch, oh, ow]);
        {
            let data = out.data_mut();
            for (o, &bias) in self.b.data().iter().enumerate() {
                data[o * patch..(o + 1) * patch].iter_mut().for_each(|v| *v = bias);
            }
            matmul_acc(
                data,
                self.w.data(),
                &col,
                self.out_ch,
                self.in_ch * self.kernel * self.kernel,
                patch,
            );
        }
        Ok((out, col, [c, h, w], [oh, ow]))
    }
}

impl Layer for Conv2d {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Conv {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            kernel: self.kernel,
            stride: self.stride,
        }
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.infer_with_col(x).map(|(out, ..)| out)
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let (out, col, in_shape, out_hw) = self.infer_with_col(x)?;
        self.cache = Some(ConvCache { col, in_shape, out_hw });
        Ok(out)
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| NnError::NoForwardCache(self.name()))?;
        let [_, h, w] = cache.in_shape;
        let [oh, ow] = cache.out_hw;
        let patch = oh * ow;
        if gy.shape() != [self.out_ch, oh, ow] {
            return Err(NnError::ShapeMismatch {
                layer: self.name(),
                expected: format!("[{}, {oh}, {ow}]", self.out_ch),
                got: format!("{:?}", gy.shape()),
            });
        }
        let ckk = self.in_ch * self.kernel * self.kernel;
        for o in 0..self.out_ch {
            self.gb.data_mut()[o] += gy.data()[o * patch..(o + 1) * patch].iter().sum::<f64>();
        }
        // gw += gy * col^T ; gcol = W^T * gy ; gx = col2im(gcol)
        matmul_abt(self.gw.data_mut(), gy.data(), &cache.col, self.out_ch, ckk, patch);
        let mut gcol = vec![0.0; ckk * patch];
        matmul_atb(&mut gcol, self.w.data(), gy.data(), self.out_ch, ckk, patch);
        let gx = self.col2im(&gcol, h, w, oh, ow);
        Tensor::from_vec(&cache.in_shape, gx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }

    fn grads(&self) -> Vec<&Tensor> {
        vec![&self.gw, &self.gb]
    }

    fn zero_grads(&mut self) {
        self.gw.fill_zero();
        self.gb.fill_zero();
    }
}

/// Mean over the spatial dimensions: `[C, H, W] -> [C]`.
#[derive(Default)]
pub struct GlobalAvgPool {
    cache_shape: Option<[usize; 3]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for GlobalAvgPool {
    fn spec(&self) -> LayerSpec {
        LayerSpec::GlobalAvgPool
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        match *x.shape() {
            [c, h, w] => {
                let hw = (h * w) as f64;
                let mut out = Tensor::zeros(&[c]);
                for ci in 0..c {
                    out.data_mut()[ci] =
                        x.data()[ci * h * w..(ci + 1) * h * w].iter().sum::<f64>() / hw;
                }
                Ok(out)
            }
            _ => Err(NnError::ShapeMismatch {
                layer: "GlobalAvgPool".into(),
                expected: "[c, h, w]".into(),
                got: format!("{:?}", x.shape()),
            }),
        }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let y = self.infer(x)?;
        let s = x.shape();
        self.cache_shape = Some([s[0], s[1], s[2]]);
        Ok(y)
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor, NnError> {
        let [c, h, w] = self
            .cache_shape
            .ok_or_else(|| NnError::NoForwardCache("GlobalAvgPool".into()))?;
        if gy.shape() != [c] {
            return Err(NnError::ShapeMismatch {
                layer: "GlobalAvgPool".into(),
                expected: format!("[{c}]"),
                got: format!("{:?}", gy.shape()),
            });
        }
        let hw = (h * w) as f64;
        let mut gx = Tensor::zeros(&[c, h, w]);
        for ci in 0..c {
            let g = gy.data()[ci] / hw;
            gx.data_mut()[ci * h * w..(ci + 1) * h * w]
                .iter_mut()
                .for_each(|v| *v = g);
        }
        Ok(gx)
    }
}

/// Reshape to rank 1.
#[derive(Default)]
pub struct Flatten {
    cache_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Flatten {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Flatten
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        x.reshaped(&[x.len()])
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        self.cache_shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn backward(&mut self, gy: &Tensor) -> Result<Tensor, NnError> {
        let shape = self
            .cache_shape
            .as_ref()
            .ok_or_else(|| NnError::NoForwardCache("Flatten".into()))?;
        gy.reshaped(shape)
    }
}
