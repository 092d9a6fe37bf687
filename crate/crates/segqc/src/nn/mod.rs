//! Minimal reverse-mode autodiff over `ndarray`, sized for small 3D CNNs.
//!
//! A [`Tape`] records each operation as a node in a Wengert list; calling
//! [`Tape::backward`] with seed gradients walks the list in reverse and
//! accumulates gradients for every node, including parameters (leaf nodes
//! with a slot index) and intermediate activations (used for Grad-CAM).
//! Generic over `f32`/`f64` so every operation can be checked against
//! central finite differences in double precision.

pub mod adam;
pub mod conv;
pub mod init;
pub mod params;

use ndarray::{ArcArray, Array1, ArrayD, Axis, IxDyn};

pub use adam::Adam;
pub use params::ParamSet;

/// Scalar element type for network tensors.
pub trait Scalar: ndarray::NdFloat + std::iter::Sum {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

pub type Value<F> = ArcArray<F, IxDyn>;
pub type NodeId = usize;

enum Op<F> {
    Leaf {
        param_slot: Option<usize>,
    },
    Conv3d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: [usize; 3],
        pad: usize,
    },
    InstanceNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Array1<F>,
        inv_std: Array1<F>,
    },
    LeakyRelu {
        x: NodeId,
        slope: F,
    },
    Sigmoid {
        x: NodeId,
    },
    SoftmaxChannels {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    ConcatChannels {
        parts: Vec<NodeId>,
    },
    UpsampleNearest {
        x: NodeId,
        factors: [usize; 3],
    },
    GlobalAvgPool {
        x: NodeId,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Conv1dChannels {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    ScaleChannels {
        x: NodeId,
        gates: NodeId,
    },
    ChannelDropout {
        x: NodeId,
        keep: Vec<bool>,
        scale: F,
    },
}

struct Node<F> {
    value: Value<F>,
    op: Op<F>,
}

/// Gradients for every tape node, indexed by [`NodeId`].
pub struct Gradients<F> {
    by_node: Vec<Option<ArrayD<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn node(&self, id: NodeId) -> Option<&ArrayD<F>> {
        self.by_node[id].as_ref()
    }
}

pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    /// Skip convolution input gradients for non-parameter leaves (model
    /// inputs never need them; saves one GEMM + scatter per input conv).
    skip_input_grads: bool,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(128), skip_input_grads: false }
    }

    /// Tape that skips gradients of convolutions straight into non-parameter
    /// leaf inputs.
    pub fn without_input_grads() -> Self {
        Self { nodes: Vec::with_capacity(128), skip_input_grads: true }
    }

    pub fn value(&self, id: NodeId) -> &Value<F> {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<F>, op: Op<F>) -> NodeId {
        self.push_shared(value.into_shared(), op)
    }

    fn push_shared(&mut self, value: Value<F>, op: Op<F>) -> NodeId {
        debug_assert!(value.iter().all(|v| v.is_finite()), "non-finite activation");
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    /// Non-parameter leaf (network input).
    pub fn input(&mut self, value: ArrayD<F>) -> NodeId {
        self.push(value, Op::Leaf { param_slot: None })
    }

    /// Parameter leaf; gradients are collected under `slot`.
    pub fn param(&mut self, value: Value<F>, slot: usize) -> NodeId {
        self.push_shared(value, Op::Leaf { param_slot: Some(slot) })
    }

    pub fn conv3d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: [usize; 3],
        pad: usize,
    ) -> NodeId {
        let y = conv::conv3d_forward(
            &self.nodes[x].value.view(),
            &self.nodes[w].value.view(),
            b.map(|b| self.nodes[b].value.view()).as_ref(),
            stride,
            pad,
        );
        self.push(y, Op::Conv3d { x, w, b, stride, pad })
    }

    /// Channel-wise normalization over the spatial dims of a (C, D, H, W) tensor.
    pub fn instance_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> NodeId {
        let xv = &self.nodes[x].value;
        let c = xv.shape()[0];
        let m = xv.len() / c;
        let gm = self.nodes[gamma].value.as_slice().expect("gamma contiguous").to_vec();
        let bt = self.nodes[beta].value.as_slice().expect("beta contiguous").to_vec();
        let xs = xv.as_slice().expect("standard layout");
        let mut y = vec![F::zero(); xs.len()];
        let mut mean = Array1::<F>::zeros(c);
        let mut inv_std = Array1::<F>::zeros(c);
        let eps = F::from_f64(eps);
        let mf = F::from_f64(m as f64);
        for ci in 0..c {
            let xc = &xs[ci * m..(ci + 1) * m];
            let mu = xc.iter().copied().sum::<F>() / mf;
            let var = xc.iter().map(|&v| (v - mu) * (v - mu)).sum::<F>() / mf;
            let is = F::one() / (var + eps).sqrt();
            mean[ci] = mu;
            inv_std[ci] = is;
            let yc = &mut y[ci * m..(ci + 1) * m];
            for (dst, &v) in yc.iter_mut().zip(xc.iter()) {
                *dst = gm[ci] * (v - mu) * is + bt[ci];
            }
        }
        let y = ArrayD::from_shape_vec(xv.raw_dim(), y).expect("same shape");
        self.push(y, Op::InstanceNorm { x, gamma, beta, mean, inv_std })
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let slope = F::from_f64(slope);
        let y = self.nodes[x].value.mapv(|v| if v > F::zero() { v } else { slope * v });
        self.push(y, Op::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self.nodes[x].value.mapv(|v| F::one() / (F::one() + (-v).exp()));
        self.push(y, Op::Sigmoid { x })
    }

    /// Softmax over the channel axis (axis 0).
    pub fn softmax_channels(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let c = xv.shape()[0];
        let m = xv.len() / c;
        let xs = xv.as_slice().expect("standard layout");
        let mut y = vec![F::zero(); xs.len()];
        for v in 0..m {
            let mut mx = F::neg_infinity();
            for ci in 0..c {
                mx = mx.max(xs[ci * m + v]);
            }
            let mut z = F::zero();
            for ci in 0..c {
                let e = (xs[ci * m + v] - mx).exp();
                y[ci * m + v] = e;
                z = z + e;
            }
            for ci in 0..c {
                y[ci * m + v] = y[ci * m + v] / z;
            }
        }
        let y = ArrayD::from_shape_vec(xv.raw_dim(), y).expect("same shape");
        self.push(y, Op::SoftmaxChannels { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape(), self.nodes[b].value.shape());
        let y = &self.nodes[a].value.view() + &self.nodes[b].value.view();
        self.push(y.into_owned(), Op::Add { a, b })
    }

    pub fn concat_channels(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.nodes[p].value.view()).collect();
        let y = ndarray::concatenate(Axis(0), &views).expect("channel concat");
        self.push(y.into_owned(), Op::ConcatChannels { parts: parts.to_vec() })
    }

    /// Nearest-neighbor upsampling by integer per-axis factors.
    pub fn upsample_nearest(&mut self, x: NodeId, factors: [usize; 3]) -> NodeId {
        let xv = &self.nodes[x].value;
        let s = xv.shape();
        let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
        let (od, oh, ow) = (d * factors[0], h * factors[1], w * factors[2]);
        let xs = xv.as_slice().expect("standard layout");
        let mut y = vec![F::zero(); c * od * oh * ow];
        for ci in 0..c {
            for oz in 0..od {
                for oy in 0..oh {
                    let src = ((ci * d + oz / factors[0]) * h + oy / factors[1]) * w;
                    let dst = ((ci * od + oz) * oh + oy) * ow;
                    if factors[2] == 1 {
                        y[dst..dst + ow].copy_from_slice(&xs[src..src + w]);
                    } else {
                        for ox in 0..ow {
                            y[dst + ox] = xs[src + ox / factors[2]];
                        }
                    }
                }
            }
        }
        let y = ArrayD::from_shape_vec(IxDyn(&[c, od, oh, ow]), y).expect("upsample shape");
        self.push(y, Op::UpsampleNearest { x, factors })
    }

    /// Spatial mean of a (C, D, H, W) tensor, producing (C,).
    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let c = xv.shape()[0];
        let m = xv.len() / c;
        let xs = xv.as_slice().expect("standard layout");
        let mf = F::from_f64(m as f64);
        let y: Vec<F> = (0..c).map(|ci| xs[ci * m..(ci + 1) * m].iter().copied().sum::<F>() / mf).collect();
        self.push(ArrayD::from_shape_vec(IxDyn(&[c]), y).expect("gap shape"), Op::GlobalAvgPool { x })
    }

    /// Fully connected layer: x (In,), w (Out, In), b (Out,) -> (Out,).
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xv = self.nodes[x].value.view().into_dimensionality::<ndarray::Ix1>().expect("x 1-d");
        let wv = self.nodes[w].value.view().into_dimensionality::<ndarray::Ix2>().expect("w 2-d");
        let bv = self.nodes[b].value.view().into_dimensionality::<ndarray::Ix1>().expect("b 1-d");
        let y = wv.dot(&xv) + bv;
        self.push(y.into_dyn(), Op::Linear { x, w, b })
    }

    /// 1D convolution across the channel axis: x (C,), w (k,) with odd k,
    /// bias (1,); zero padding keeps the length.
    pub fn conv1d_channels(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xv = self.nodes[x].value.as_slice().expect("x contiguous");
        let wv = self.nodes[w].value.as_slice().expect("w contiguous");
        let bv = self.nodes[b].value.as_slice().expect("b contiguous");
        let k = wv.len();
        assert!(k % 2 == 1, "kernel must be odd");
        let half = (k / 2) as isize;
        let c = xv.len();
        let mut y = vec![F::zero(); c];
        for i in 0..c {
            let mut acc = bv[0];
            for j in 0..k {
                let src = i as isize + j as isize - half;
                if src >= 0 && (src as usize) < c {
                    acc = acc + wv[j] * xv[src as usize];
                }
            }
            y[i] = acc;
        }
        self.push(ArrayD::from_shape_vec(IxDyn(&[c]), y).expect("conv1d shape"), Op::Conv1dChannels { x, w, b })
    }

    /// Multiplies channel `c` of x (C, D, H, W) by `gates[c]`.
    pub fn scale_channels(&mut self, x: NodeId, gates: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let gv = self.nodes[gates].value.as_slice().expect("gates contiguous");
        let c = xv.shape()[0];
        assert_eq!(gv.len(), c);
        let m = xv.len() / c;
        let xs = xv.as_slice().expect("standard layout");
        let mut y = vec![F::zero(); xs.len()];
        for ci in 0..c {
            let g = gv[ci];
            for i in 0..m {
                y[ci * m + i] = xs[ci * m + i] * g;
            }
        }
        let y = ArrayD::from_shape_vec(xv.raw_dim(), y).expect("same shape");
        self.push(y, Op::ScaleChannels { x, gates })
    }

    /// Inverted spatial dropout: whole channels are zeroed (given `keep`)
    /// and survivors scaled by 1/(1-p). Identity when `keep` is all-true
    /// and `scale` is 1.
    pub fn channel_dropout(&mut self, x: NodeId, keep: Vec<bool>, scale: f64) -> NodeId {
        let xv = &self.nodes[x].value;
        let c = xv.shape()[0];
        assert_eq!(keep.len(), c);
        let scale = F::from_f64(scale);
        let m = xv.len() / c;
        let xs = xv.as_slice().expect("standard layout");
        let mut y = vec![F::zero(); xs.len()];
        for ci in 0..c {
            if keep[ci] {
                for i in 0..m {
                    y[ci * m + i] = xs[ci * m + i] * scale;
                }
            }
        }
        let y = ArrayD::from_shape_vec(xv.raw_dim(), y).expect("same shape");
        self.push(y, Op::ChannelDropout { x, keep, scale })
    }

    /// Reverse pass from `seeds`; returns per-node gradients.
    pub fn backward(&self, seeds: Vec<(NodeId, ArrayD<F>)>) -> Gradients<F> {
        let mut grads: Vec<Option<ArrayD<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, g) in seeds {
            assert_eq!(g.shape(), self.nodes[id].value.shape(), "seed shape");
            accumulate(&mut grads[id], g);
        }
        for id in (0..self.nodes.len()).rev() {
            let Some(gout) = grads[id].take() else { continue };
            self.backprop_node(id, &gout, &mut grads);
            grads[id] = Some(gout);
        }
        Gradients { by_node: grads }
    }

    /// Collects parameter gradients by slot; missing slots get zeros shaped
    /// like the parameter.
    pub fn param_grads(&self, grads: &Gradients<F>, params: &ParamSet<F>) -> Vec<ArrayD<F>> {
        let mut out: Vec<ArrayD<F>> =
            params.tensors().iter().map(|t| ArrayD::zeros(t.raw_dim())).collect();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param_slot: Some(slot) } = node.op {
                if let Some(g) = grads.node(id) {
                    out[slot] = out[slot].clone() + g;
                }
            }
        }
        out
    }

    fn backprop_node(&self, id: NodeId, gout: &ArrayD<F>, grads: &mut [Option<ArrayD<F>>]) {
        match &self.nodes[id].op {
            Op::Leaf { .. } => {}
            Op::Conv3d { x, w, b, stride, pad } => {
                let x_needs_grad = !self.skip_input_grads
                    || !matches!(self.nodes[*x].op, Op::Leaf { param_slot: None });
                let (dx, dw, db) = conv::conv3d_backward(
                    &gout.view(),
                    &self.nodes[*x].value.view(),
                    &self.nodes[*w].value.view(),
                    *stride,
                    *pad,
                    b.is_some(),
                    x_needs_grad,
                );
                if let Some(dx) = dx {
                    accumulate(&mut grads[*x], dx);
                }
                accumulate(&mut grads[*w], dw);
                if let (Some(b), Some(db)) = (b, db) {
                    accumulate(&mut grads[*b], db);
                }
            }
            Op::InstanceNorm { x, gamma, beta, mean, inv_std } => {
                let xv = &self.nodes[*x].value;
                let gm = self.nodes[*gamma].value.as_slice().expect("gamma contiguous");
                let c = xv.shape()[0];
                let m = xv.len() / c;
                let mf = F::from_f64(m as f64);
                let xs = xv.as_slice().expect("standard layout");
                let gs = gout.as_slice().expect("grad contiguous");
                let mut dx = vec![F::zero(); xs.len()];
                let mut dgamma = vec![F::zero(); c];
                let mut dbeta = vec![F::zero(); c];
                for ci in 0..c {
                    let (mu, is) = (mean[ci], inv_std[ci]);
                    let xc = &xs[ci * m..(ci + 1) * m];
                    let gc = &gs[ci * m..(ci + 1) * m];
                    let mut sum_g = F::zero();
                    let mut sum_gx = F::zero();
                    for i in 0..m {
                        let xhat = (xc[i] - mu) * is;
                        sum_g = sum_g + gc[i];
                        sum_gx = sum_gx + gc[i] * xhat;
                    }
                    dgamma[ci] = sum_gx;
                    dbeta[ci] = sum_g;
                    let mean_g = sum_g / mf;
                    let mean_gx = sum_gx / mf;
                    let dxc = &mut dx[ci * m..(ci + 1) * m];
                    for i in 0..m {
                        let xhat = (xc[i] - mu) * is;
                        dxc[i] = gm[ci] * is * (gc[i] - mean_g - xhat * mean_gx);
                    }
                }
                accumulate(&mut grads[*x], ArrayD::from_shape_vec(xv.raw_dim(), dx).unwrap());
                accumulate(&mut grads[*gamma], ArrayD::from_shape_vec(IxDyn(&[c]), dgamma).unwrap());
                accumulate(&mut grads[*beta], ArrayD::from_shape_vec(IxDyn(&[c]), dbeta).unwrap());
            }
            Op::LeakyRelu { x, slope } => {
                let xv = &self.nodes[*x].value;
                let mut dx = gout.clone();
                for (d, &v) in dx.iter_mut().zip(xv.iter()) {
                    if v <= F::zero() {
                        *d = *d * *slope;
                    }
                }
                accumulate(&mut grads[*x], dx);
            }
            Op::Sigmoid { x } => {
                let yv = &self.nodes[id].value;
                let mut dx = gout.clone();
                for (d, &y) in dx.iter_mut().zip(yv.iter()) {
                    *d = *d * y * (F::one() - y);
                }
                accumulate(&mut grads[*x], dx);
            }
            Op::SoftmaxChannels { x } => {
                let yv = &self.nodes[id].value;
                let c = yv.shape()[0];
                let m = yv.len() / c;
                let ys = yv.as_slice().expect("standard layout");
                let gs = gout.as_slice().expect("grad contiguous");
                let mut dx = vec![F::zero(); ys.len()];
                for v in 0..m {
                    let mut dot = F::zero();
                    for ci in 0..c {
                        dot = dot + gs[ci * m + v] * ys[ci * m + v];
                    }
                    for ci in 0..c {
                        dx[ci * m + v] = ys[ci * m + v] * (gs[ci * m + v] - dot);
                    }
                }
                accumulate(&mut grads[*x], ArrayD::from_shape_vec(yv.raw_dim(), dx).unwrap());
            }
            Op::Add { a, b } => {
                accumulate(&mut grads[*a], gout.clone());
                accumulate(&mut grads[*b], gout.clone());
            }
            Op::ConcatChannels { parts } => {
                let mut start = 0;
                for &p in parts {
                    let len = self.nodes[p].value.shape()[0];
                    let slice = gout
                        .slice_axis(Axis(0), ndarray::Slice::from(start..start + len))
                        .to_owned();
                    accumulate(&mut grads[p], slice);
                    start += len;
                }
            }
            Op::UpsampleNearest { x, factors } => {
                let xv = &self.nodes[*x].value;
                let s = xv.shape();
                let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
                let (od, oh, ow) = (d * factors[0], h * factors[1], w * factors[2]);
                let gs = gout.as_slice().expect("grad contiguous");
                let mut dx = vec![F::zero(); xv.len()];
                for ci in 0..c {
                    for oz in 0..od {
                        for oy in 0..oh {
                            let dst = ((ci * d + oz / factors[0]) * h + oy / factors[1]) * w;
                            let src = ((ci * od + oz) * oh + oy) * ow;
                            for ox in 0..ow {
                                dx[dst + ox / factors[2]] =
                                    dx[dst + ox / factors[2]] + gs[src + ox];
                            }
                        }
                    }
                }
                accumulate(&mut grads[*x], ArrayD::from_shape_vec(xv.raw_dim(), dx).unwrap());
            }
            Op::GlobalAvgPool { x } => {
                let xv = &self.nodes[*x].value;
                let c = xv.shape()[0];
                let m = xv.len() / c;
                let mf = F::from_f64(m as f64);
                let gs = gout.as_slice().expect("grad contiguous");
                let mut dx = vec![F::zero(); xv.len()];
                for ci in 0..c {
                    let g = gs[ci] / mf;
                    for i in 0..m {
                        dx[ci * m + i] = g;
                    }
                }
                accumulate(&mut grads[*x], ArrayD::from_shape_vec(xv.raw_dim(), dx).unwrap());
            }
            Op::Linear { x, w, b } => {
                let xv = self.nodes[*x].value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
                let wv = self.nodes[*w].value.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let gv = gout.view().into_dimensionality::<ndarray::Ix1>().unwrap();
                let dx = wv.t().dot(&gv);
                let mut dw = ndarray::Array2::<F>::zeros(wv.raw_dim());
                for (i, &g) in gv.iter().enumerate() {
                    for (j, &xj) in xv.iter().enumerate() {
                        dw[[i, j]] = g * xj;
                    }
                }
                accumulate(&mut grads[*x], dx.into_dyn());
                accumulate(&mut grads[*w], dw.into_dyn());
                accumulate(&mut grads[*b], gout.clone());
            }
            Op::Conv1dChannels { x, w, b } => {
                let xv = self.nodes[*x].value.as_slice().unwrap();
                let wv = self.nodes[*w].value.as_slice().unwrap();
                let k = wv.len();
                let half = (k / 2) as isize;
                let c = xv.len();
                let gs = gout.as_slice().unwrap();
                let mut dx = vec![F::zero(); c];
                let mut dw = vec![F::zero(); k];
                let mut db = F::zero();
                for i in 0..c {
                    db = db + gs[i];
                    for j in 0..k {
                        let src = i as isize + j as isize - half;
                        if src >= 0 && (src as usize) < c {
                            dw[j] = dw[j] + gs[i] * xv[src as usize];
                            dx[src as usize] = dx[src as usize] + gs[i] * wv[j];
                        }
                    }
                }
                accumulate(&mut grads[*x], ArrayD::from_shape_vec(IxDyn(&[c]), dx).unwrap());
                accumulate(&mut grads[*w], ArrayD::from_shape_vec(IxDyn(&[k]), dw).unwrap());
                accumulate(&mut grads[*b], ArrayD::from_shape_vec(IxDyn(&[1]), vec![db]).unwrap());
            }
            Op::ScaleChannels { x, gates } => {
                let xv = &self.nodes[*x].value;
                let gv = self.nodes[*gates].value.as_slice().unwrap();
                let c = xv.shape()[0];
                let m = xv.len() / c;
                let xs = xv.as_slice().unwrap();
                let gs = gout.as_slice().unwrap();
                let mut dx = vec![F::zero(); xs.len()];
                let mut dg = vec![F::zero(); c];
                for ci in 0..c {
                    let mut acc = F::zero();
                    for i in 0..m {
                        dx[ci * m + i] = gs[ci * m + i] * gv[ci];
                        acc = acc + gs[ci * m + i] * xs[ci * m + i];
                    }
                    dg[ci] = acc;
                }
                accumulate(&mut grads[*x], ArrayD::from_shape_vec(xv.raw_dim(), dx).unwrap());
                accumulate(&mut grads[*gates], ArrayD::from_shape_vec(IxDyn(&[c]), dg).unwrap());
            }
            Op::ChannelDropout { x, keep, scale } => {
                let xv = &self.nodes[*x].value;
                let c = xv.shape()[0];
                let m = xv.len() / c;
                let gs = gout.as_slice().unwrap();
                let mut dx = vec![F::zero(); xv.len()];
                for ci in 0..c {
                    if keep[ci] {
                        for i in 0..m {
                            dx[ci * m + i] = gs[ci * m + i] * *scale;
                        }
                    }
                }
                accumulate(&mut grads[*x], ArrayD::from_shape_vec(xv.raw_dim(), dx).unwrap());
            }
        }
    }
}

fn accumulate<F: Scalar>(slot: &mut Option<ArrayD<F>>, g: ArrayD<F>) {
    match slot {
        Some(existing) => existing.zip_mut_with(&g, |a, &b| *a = *a + b),
        None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;
    use rand::prelude::*;
    use rand_distr::StandardNormal;

    fn randn(shape: &[usize], rng: &mut impl Rng) -> ArrayD<f64> {
        ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.sample(StandardNormal))
    }

    /// Finite-difference check of a scalar objective built as `cᵀ · out(input)`
    /// against the tape gradient at the input leaves.
    fn fd_check<B: Fn(&mut Tape<f64>, &[NodeId]) -> NodeId>(
        shapes: &[&[usize]],
        build: B,
        seed: u64,
    ) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<ArrayD<f64>> = shapes.iter().map(|s| randn(s, &mut rng)).collect();
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|a| tape.input(a.clone())).collect();
        let out = build(&mut tape, &ids);
        let c = randn(tape.value(out).shape(), &mut rng);
        let grads = tape.backward(vec![(out, c.clone())]);

        let objective = |inputs: &[ArrayD<f64>]| -> f64 {
            let mut t = Tape::new();
            let ids: Vec<NodeId> = inputs.iter().map(|a| t.input(a.clone())).collect();
            let out = build(&mut t, &ids);
            (&t.value(out).view().into_owned() * &c).sum()
        };

        let h = 1e-6;
        for (which, base) in inputs.iter().enumerate() {
            let analytic = grads
                .node(ids[which])
                .cloned()
                .unwrap_or_else(|| ArrayD::zeros(base.raw_dim()));
            let len = base.len();
            for t in 0..6.min(len) {
                let idx = (t * 2671 + 1) % len;
                let mut work = inputs.to_vec();
                let mut plus = base.clone();
                plus.as_slice_mut().unwrap()[idx] += h;
                work[which] = plus;
                let fp = objective(&work);
                let mut minus = base.clone();
                minus.as_slice_mut().unwrap()[idx] -= h;
                work[which] = minus;
                let fm = objective(&work);
                let fd = (fp - fm) / (2.0 * h);
                let an = analytic.as_slice().unwrap()[idx];
                assert!(
                    (fd - an).abs() <= 1e-5 * (1.0 + fd.abs().max(an.abs())),
                    "input {which} idx {idx}: fd={fd} analytic={an}"
                );
            }
        }
    }

    #[test]
    fn instance_norm_gradients() {
        fd_check(
            &[&[3, 2, 4, 2], &[3], &[3]],
            |t, ids| t.instance_norm(ids[0], ids[1], ids[2], 1e-5),
            10,
        );
    }

    #[test]
    fn activation_gradients() {
        fd_check(&[&[2, 3, 3, 2]], |t, ids| t.leaky_relu(ids[0], 0.01), 11);
        fd_check(&[&[2, 3, 3, 2]], |t, ids| t.sigmoid(ids[0]), 12);
        fd_check(&[&[4, 2, 2, 2]], |t, ids| t.softmax_channels(ids[0]), 13);
    }

    #[test]
    fn structural_op_gradients() {
        fd_check(&[&[2, 2, 2, 2], &[2, 2, 2, 2]], |t, ids| t.add(ids[0], ids[1]), 14);
        fd_check(
            &[&[2, 2, 2, 2], &[3, 2, 2, 2]],
            |t, ids| t.concat_channels(&[ids[0], ids[1]]),
            15,
        );
        fd_check(&[&[2, 2, 3, 2]], |t, ids| t.upsample_nearest(ids[0], [2, 1, 2]), 16);
        fd_check(&[&[3, 2, 2, 2]], |t, ids| t.global_avg_pool(ids[0]), 17);
    }

    #[test]
    fn head_op_gradients() {
        fd_check(&[&[5], &[2, 5], &[2]], |t, ids| t.linear(ids[0], ids[1], ids[2]), 18);
        fd_check(&[&[7], &[3], &[1]], |t, ids| t.conv1d_channels(ids[0], ids[1], ids[2]), 19);
        fd_check(&[&[3, 2, 2, 2], &[3]], |t, ids| t.scale_channels(ids[0], ids[1]), 20);
    }

    #[test]
    fn dropout_gradient_and_identity() {
        fd_check(
            &[&[4, 2, 2, 2]],
            |t, ids| t.channel_dropout(ids[0], vec![true, false, true, false], 2.0),
            21,
        );
        let mut t = Tape::<f64>::new();
        let x = randn(&[3, 2, 2, 2], &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let id = t.input(x.clone());
        let y = t.channel_dropout(id, vec![true; 3], 1.0);
        assert_eq!(t.value(y).view().into_owned(), x);
    }

    #[test]
    fn conv3d_through_tape() {
        fd_check(
            &[&[2, 4, 4, 4], &[3, 2, 3, 3, 3], &[3]],
            |t, ids| t.conv3d(ids[0], ids[1], Some(ids[2]), [2, 1, 2], 1),
            22,
        );
    }

    #[test]
    fn fan_in_gradient_accumulates() {
        // y = x + x: grad wrt x must be 2·seed.
        let mut t = Tape::<f64>::new();
        let x = t.input(ArrayD::from_elem(IxDyn(&[2, 1, 1, 1]), 3.0));
        let y = t.add(x, x);
        let g = t.backward(vec![(y, ArrayD::from_elem(IxDyn(&[2, 1, 1, 1]), 1.0))]);
        assert_eq!(g.node(x).unwrap()[[0, 0, 0, 0]], 2.0);
    }
}
