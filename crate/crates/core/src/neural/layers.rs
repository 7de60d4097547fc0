//! Layer implementations over `(batch, channels, length)` activations.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Architecture-level description of one layer, used for checkpoints and
/// shape checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { d_in: usize, d_out: usize },
    Conv1d { c_in: usize, c_out: usize, kernel: usize, stride: usize },
    Relu,
    MaxPool1d { factor: usize },
    Residual { c_in: usize, c_out: usize, stride: usize },
    Flatten,
}

fn uniform_init(rng: &mut Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| (2.0 * rng.uniform() - 1.0) * bound).collect()
}

/// `"same"` padding split used by the convolutions: output length
/// `ceil(L / stride)`, total padding `max((L_out - 1)·stride + K - L, 0)`
/// with the smaller half on the left.
pub fn same_padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(len);
    (out, total / 2)
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    gw: Array2<f64>,
    gb: Array1<f64>,
    input: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        let w = Array2::from_shape_vec((d_out, d_in), uniform_init(rng, d_in, d_in * d_out)).expect("shape");
        Dense {
            w,
            b: Array1::zeros(d_out),
            gw: Array2::zeros((d_out, d_in)),
            gb: Array1::zeros(d_out),
            input: None,
        }
    }

    fn run(&self, x: &Array3<f64>) -> Result<(Array3<f64>, Array2<f64>)> {
        let (batch, c, l) = x.dim();
        if c * l != self.w.ncols() || l != 1 {
            return Err(Error::InvalidDimension(format!(
                "dense layer expects {} features, got ({c}, {l})",
                self.w.ncols()
            )));
        }
        let x2 = x.to_shape((batch, c)).expect("standard layout").to_owned();
        let mut y = x2.dot(&self.w.t());
        y += &self.b;
        // `dot` may hand back column-major output when an operand is a single row or column
        let y = y.as_standard_layout().into_owned().into_shape_with_order((batch, self.w.nrows(), 1)).expect("standard layout");
        Ok((y, x2))
    }

    fn infer(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        Ok(self.run(x)?.0)
    }

    fn forward(&mut self, x: &Array3<f64>) -> Result<Array3<f64>> {
        let (y, x2) = self.run(x)?;
        self.input = Some(x2);
        Ok(y)
    }

    fn backward(&mut self, g: &Array3<f64>) -> Array3<f64> {
        let (batch, d_out, _) = g.dim();
        let g2 = g.to_shape((batch, d_out)).expect("standard layout");
        let x = self.input.as_ref().expect("forward before backward");
        self.gw += &g2.t().dot(x);
        self.gb += &g2.sum_axis(Axis(0));
        let dx = g2.dot(&self.w);
        dx.as_standard_layout().into_owned().into_shape_with_order((batch, self.w.ncols(), 1)).expect("standard layout")
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    /// `(c_out, c_in, kernel)`.
    pub w: Array3<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
    gw: Array3<f64>,
    gb: Array1<f64>,
    input: Option<Array3<f64>>,
}

impl Conv1d {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize, rng: &mut Rng) -> Self {
        let fan_in = c_in * kernel;
        let w = Array3::from_shape_vec((c_out, c_in, kernel), uniform_init(rng, fan_in, c_out * fan_in))
            .expect("shape");
        Conv1d {
            w,
            b: Array1::zeros(c_out),
            stride,
            gw: Array3::zeros((c_out, c_in, kernel)),
            gb: Array1::zeros(c_out),
            input: None,
        }
    }

    fn kernel(&self) -> usize {
        self.w.dim().2
    }

    pub fn out_len(&self, len: usize) -> usize {
        same_padding(len, self.kernel(), self.stride).0
    }

    /// `(output position, input position, tap)` triples that touch real input samples.
    fn taps(&self, len: usize) -> Vec<(usize, usize, usize)> {
        let k = self.kernel();
        let (out, left) = same_padding(len, k, self.stride);
        let mut taps = Vec::new();
        for o in 0..out {
            for t in 0..k {
                let pos = (o * self.stride + t) as isize - left as isize;
                if pos >= 0 && (pos as usize) < len {
                    taps.push((o, pos as usize, t));
                }
            }
        }
        taps
    }

    fn infer(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        let (batch, c_in, len) = x.dim();
        let (c_out, w_in, _) = self.w.dim();
        if c_in != w_in || len == 0 {
            return Err(Error::InvalidDimension(format!(
                "conv1d expects {w_in} input channels, got ({c_in}, {len})"
            )));
        }
        let out_len = self.out_len(len);
        let mut y = Array3::zeros((batch, c_out, out_len));
        for (o, i, t) in self.taps(len) {
            let xi = x.slice(s![.., .., i]);
            let wt = self.w.slice(s![.., .., t]);
            let mut yo = y.slice_mut(s![.., .., o]);
            yo += &xi.dot(&wt.t());
        }
        y += &self.b.view().insert_axis(Axis(1));
        Ok(y)
    }

    fn forward(&mut self, x: &Array3<f64>) -> Result<Array3<f64>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, g: &Array3<f64>) -> Array3<f64> {
        let x = self.input.as_ref().expect("forward before backward");
        let (batch, c_in, len) = x.dim();
        let mut dx = Array3::zeros((batch, c_in, len));
        for (o, i, t) in self.taps(len) {
            let go: ArrayView2<f64> = g.slice(s![.., .., o]);
            let xi = x.slice(s![.., .., i]);
            let mut gwt = self.gw.slice_mut(s![.., .., t]);
            gwt += &go.t().dot(&xi);
            let mut dxi = dx.slice_mut(s![.., .., i]);
            dxi += &go.dot(&self.w.slice(s![.., .., t]));
        }
        self.gb += &g.sum_axis(Axis(2)).sum_axis(Axis(0));
        dx
    }
}

/// ReLU that lets NaN through so divergence reaches the loss check.
fn relu(v: f64) -> f64 {
    if v > 0.0 || v.is_nan() {
        v
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Array3<bool>>,
}

impl Relu {
    fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        self.mask = Some(x.mapv(|v| v > 0.0));
        x.mapv(relu)
    }

    fn backward(&mut self, g: &Array3<f64>) -> Array3<f64> {
        let mask = self.mask.as_ref().expect("forward before backward");
        let mut dx = g.clone();
        dx.zip_mut_with(mask, |d, &keep| {
            if !keep {
                *d = 0.0
            }
        });
        dx
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub factor: usize,
    argmax: Option<Array3<usize>>,
    in_len: usize,
}

impl MaxPool1d {
    pub fn new(factor: usize) -> Self {
        MaxPool1d { factor, argmax: None, in_len: 0 }
    }

    fn run(&self, x: &Array3<f64>) -> Result<(Array3<f64>, Array3<usize>)> {
        let (batch, c, len) = x.dim();
        let out = len / self.factor;
        if out == 0 {
            return Err(Error::InvalidDimension(format!(
                "max pooling by {} needs length >= {}, got {len}",
                self.factor, self.factor
            )));
        }
        let mut y = Array3::zeros((batch, c, out));
        let mut arg = Array3::zeros((batch, c, out));
        for b in 0..batch {
            for ch in 0..c {
                for o in 0..out {
                    let start = o * self.factor;
                    let mut best = start;
                    for p in start + 1..start + self.factor {
                        if x[[b, ch, p]] > x[[b, ch, best]] {
                            best = p;
                        }
                    }
                    y[[b, ch, o]] = x[[b, ch, best]];
                    arg[[b, ch, o]] = best;
                }
            }
        }
        Ok((y, arg))
    }

    fn forward(&mut self, x: &Array3<f64>) -> Result<Array3<f64>> {
        let (y, arg) = self.run(x)?;
        self.argmax = Some(arg);
        self.in_len = x.dim().2;
        Ok(y)
    }

    fn backward(&mut self, g: &Array3<f64>) -> Array3<f64> {
        let arg = self.argmax.as_ref().expect("forward before backward");
        let (batch, c, out) = g.dim();
        let mut dx = Array3::zeros((batch, c, self.in_len));
        for b in 0..batch {
            for ch in 0..c {
                for o in 0..out {
                    dx[[b, ch, arg[[b, ch, o]]]] += g[[b, ch, o]];
                }
            }
        }
        dx
    }
}

/// `ReLU(conv2(ReLU(conv1(x))) + skip(x))`, where the skip is a 1x1
/// projection convolution whenever channels or stride change.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: Conv1d,
    pub relu1: Relu,
    pub conv2: Conv1d,
    pub projection: Option<Conv1d>,
    out_relu: Relu,
}

impl ResidualBlock {
    pub fn new(c_in: usize, c_out: usize, stride: usize, rng: &mut Rng) -> Self {
        let conv1 = Conv1d::new(c_in, c_out, 3, stride, rng);
        let conv2 = Conv1d::new(c_out, c_out, 3, 1, rng);
        let projection = (c_in != c_out || stride != 1).then(|| Conv1d::new(c_in, c_out, 1, stride, rng));
        ResidualBlock { conv1, relu1: Relu::default(), conv2, projection, out_relu: Relu::default() }
    }

    fn infer(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        let a = self.conv1.infer(x)?.mapv(relu);
        let mut out = self.conv2.infer(&a)?;
        match &self.projection {
            Some(p) => out += &p.infer(x)?,
            None => out += x,
        }
        Ok(out.mapv(relu))
    }

    fn forward(&mut self, x: &Array3<f64>) -> Result<Array3<f64>> {
        let a = self.conv1.forward(x)?;
        let a = self.relu1.forward(&a);
        let mut out = self.conv2.forward(&a)?;
        match &mut self.projection {
            Some(p) => out += &p.forward(x)?,
            None => out += x,
        }
        Ok(self.out_relu.forward(&out))
    }

    fn backward(&mut self, g: &Array3<f64>) -> Array3<f64> {
        let g = self.out_relu.backward(g);
        let skip = match &mut self.projection {
            Some(p) => p.backward(&g),
            None => g.clone(),
        };
        let d = self.conv2.backward(&g);
        let d = self.relu1.backward(&d);
        let mut dx = self.conv1.backward(&d);
        dx += &skip;
        dx
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    Relu(Relu),
    MaxPool1d(MaxPool1d),
    Residual(ResidualBlock),
    Flatten { in_shape: (usize, usize) },
}

impl Layer {
    pub fn from_spec(spec: &LayerSpec, rng: &mut Rng) -> Self {
        match *spec {
            LayerSpec::Dense { d_in, d_out } => Layer::Dense(Dense::new(d_in, d_out, rng)),
            LayerSpec::Conv1d { c_in, c_out, kernel, stride } => {
                Layer::Conv1d(Conv1d::new(c_in, c_out, kernel, stride, rng))
            }
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::MaxPool1d { factor } => Layer::MaxPool1d(MaxPool1d::new(factor)),
            LayerSpec::Residual { c_in, c_out, stride } => {
                Layer::Residual(ResidualBlock::new(c_in, c_out, stride, rng))
            }
            LayerSpec::Flatten => Layer::Flatten { in_shape: (0, 0) },
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense { d_in: d.w.ncols(), d_out: d.w.nrows() },
            Layer::Conv1d(c) => {
                let (c_out, c_in, kernel) = c.w.dim();
                LayerSpec::Conv1d { c_in, c_out, kernel, stride: c.stride }
            }
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::MaxPool1d(p) => LayerSpec::MaxPool1d { factor: p.factor },
            Layer::Residual(r) => {
                let (c_out, c_in, _) = r.conv1.w.dim();
                LayerSpec::Residual { c_in, c_out, stride: r.conv1.stride }
            }
            Layer::Flatten { .. } => LayerSpec::Flatten,
        }
    }

    /// Output `(channels, length)` for an input shape, or `None` if incompatible.
    pub fn out_shape(spec: &LayerSpec, (c, l): (usize, usize)) -> Option<(usize, usize)> {
        match *spec {
            LayerSpec::Dense { d_in, d_out } => (c * l == d_in && l == 1).then_some((d_out, 1)),
            LayerSpec::Conv1d { c_in, c_out, kernel, stride } => {
                (c == c_in && l > 0).then(|| (c_out, same_padding(l, kernel, stride).0))
            }
            LayerSpec::Relu => Some((c, l)),
            LayerSpec::MaxPool1d { factor } => (l / factor > 0).then_some((c, l / factor)),
            LayerSpec::Residual { c_in, c_out, stride } => {
                (c == c_in && l > 0).then(|| (c_out, same_padding(l, 3, stride).0))
            }
            LayerSpec::Flatten => Some((c * l, 1)),
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Result<Array3<f64>> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Conv1d(c) => c.forward(x),
            Layer::Relu(r) => Ok(r.forward(x)),
            Layer::MaxPool1d(p) => p.forward(x),
            Layer::Residual(r) => r.forward(x),
            Layer::Flatten { in_shape } => {
                let (batch, c, l) = x.dim();
                *in_shape = (c, l);
                Ok(x.to_shape((batch, c * l, 1)).expect("standard layout").to_owned())
            }
        }
    }

    /// Forward pass without caching activations.
    pub fn infer(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        match self {
            Layer::Dense(d) => d.infer(x),
            Layer::Conv1d(c) => c.infer(x),
            Layer::Relu(_) => Ok(x.mapv(relu)),
            Layer::MaxPool1d(p) => Ok(p.run(x)?.0),
            Layer::Residual(r) => r.infer(x),
            Layer::Flatten { .. } => {
                let (batch, c, l) = x.dim();
                Ok(x.to_shape((batch, c * l, 1)).expect("standard layout").to_owned())
            }
        }
    }

    pub fn backward(&mut self, g: &Array3<f64>) -> Array3<f64> {
        match self {
            Layer::Dense(d) => d.backward(g),
            Layer::Conv1d(c) => c.backward(g),
            Layer::Relu(r) => r.backward(g),
            Layer::MaxPool1d(p) => p.backward(g),
            Layer::Residual(r) => r.backward(g),
            Layer::Flatten { in_shape } => {
                let batch = g.dim().0;
                g.to_shape((batch, in_shape.0, in_shape.1)).expect("standard layout").to_owned()
            }
        }
    }

    /// Visits `(parameters, gradients)` buffers in a fixed order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        fn conv(c: &mut Conv1d, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
            f(c.w.as_slice_mut().expect("contiguous"), c.gw.as_slice_mut().expect("contiguous"));
            f(c.b.as_slice_mut().expect("contiguous"), c.gb.as_slice_mut().expect("contiguous"));
        }
        match self {
            Layer::Dense(d) => {
                f(d.w.as_slice_mut().expect("contiguous"), d.gw.as_slice_mut().expect("contiguous"));
                f(d.b.as_slice_mut().expect("contiguous"), d.gb.as_slice_mut().expect("contiguous"));
            }
            Layer::Conv1d(c) => conv(c, f),
            Layer::Residual(r) => {
                conv(&mut r.conv1, f);
                conv(&mut r.conv2, f);
                if let Some(p) = &mut r.projection {
                    conv(p, f);
                }
            }
            Layer::Relu(_) | Layer::MaxPool1d(_) | Layer::Flatten { .. } => {}
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Dense(d) => d.input = None,
            Layer::Conv1d(c) => c.input = None,
            Layer::Relu(r) => r.mask = None,
            Layer::MaxPool1d(p) => p.argmax = None,
            Layer::Residual(r) => {
                r.conv1.input = None;
                r.conv2.input = None;
                r.relu1.mask = None;
                r.out_relu.mask = None;
                if let Some(p) = &mut r.projection {
                    p.input = None;
                }
            }
            Layer::Flatten { .. } => {}
        }
    }
}
