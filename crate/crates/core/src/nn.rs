//! Policy/value network with hand-written backpropagation.
//!
//! Wiring: a feature net (two tanh layers) over the layout observation, two
//! context encoders (areas and adjacency flags, one tanh layer each), a tanh
//! fusion layer over their concatenation, and linear actor and critic heads.
//! In image mode two stride-2 3x3 convolutions run in front of the feature net.
//!
//! Layer order, which is also the checkpoint order:
//! `[conv1, conv2,] feature1, feature2, areas, adjacency, fusion, actor, critic`.
//! Dense weights are `in x out`; conv weights are `(3 * 3 * c_in) x c_out` with
//! rows ordered by kernel row, kernel column, then input channel.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ObsDims, ObsMode};

pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// `c = alpha * a * b + beta * c` on strided storage.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n`
    /// matrices, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `c = alpha * a * b + beta * c`.
pub fn gemm<F: Real>(alpha: F, a: ArrayView2<F>, b: ArrayView2<F>, beta: F, mut c: ArrayViewMut2<F>) {
    let ((m, k), (k2, n)) = (a.dim(), b.dim());
    assert!(k == k2 && c.dim() == (m, n), "gemm shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    let (sa, sb, sc) = (a.strides(), b.strides(), c.strides());
    let (sa, sb, sc) = ([sa[0], sa[1]], [sb[0], sb[1]], [sc[0], sc[1]]);
    // SAFETY: the views guarantee valid strided storage of the asserted
    // shapes, and `c` is a unique borrow.
    unsafe {
        F::raw_gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            sa[0],
            sa[1],
            b.as_ptr(),
            sb[0],
            sb[1],
            beta,
            c.as_mut_ptr(),
            sc[0],
            sc[1],
        )
    }
}

fn matmul<F: Real>(a: ArrayView2<F>, b: ArrayView2<F>) -> Array2<F> {
    let mut c = Array2::zeros((a.nrows(), b.ncols()));
    gemm(F::one(), a, b, F::zero(), c.view_mut());
    c
}

fn real<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("representable")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("expected {what} of width {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Weight matrix and bias of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> Layer<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Layer {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w.dim()
    }

    pub fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = matmul(x, self.w.view());
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients into `grad`; returns `dx` when asked.
    fn backward(&self, x: ArrayView2<F>, dy: ArrayView2<F>, grad: &mut Layer<F>, want_dx: bool) -> Option<Array2<F>> {
        gemm(F::one(), x.t(), dy, F::one(), grad.w.view_mut());
        grad.b += &dy.sum_axis(Axis(0));
        want_dx.then(|| matmul(dy, self.w.t()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &F> {
        self.w.iter().chain(self.b.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut F> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }
}

/// Geometry of a 3x3, stride 2, padding 1 convolution over an NHWC input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub height: usize,
    pub width: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl ConvGeom {
    const K: usize = 3;
    const STRIDE: usize = 2;

    pub fn out_height(&self) -> usize {
        (self.height - 1) / Self::STRIDE + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width - 1) / Self::STRIDE + 1
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width * self.c_in
    }

    pub fn output_len(&self) -> usize {
        self.out_height() * self.out_width() * self.c_out
    }

    /// Input cell read by output `(oy, ox)` at kernel offset `(ky, kx)`.
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * Self::STRIDE + ky).checked_sub(1)?;
        let x = (ox * Self::STRIDE + kx).checked_sub(1)?;
        (y < self.height && x < self.width).then_some((y, x))
    }

    /// `(batch * oh * ow) x (9 * c_in)` patch matrix.
    fn im2col<F: Real>(&self, x: ArrayView2<F>) -> Array2<F> {
        let (oh, ow, c) = (self.out_height(), self.out_width(), self.c_in);
        let batch = x.nrows();
        let mut cols = Array2::zeros((batch * oh * ow, Self::K * Self::K * c));
        for n in 0..batch {
            let img = x.row(n);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut row = cols.row_mut((n * oh + oy) * ow + ox);
                    for ky in 0..Self::K {
                        for kx in 0..Self::K {
                            if let Some((y, xx)) = self.source(oy, ox, ky, kx) {
                                let src = (y * self.width + xx) * c;
                                let dst = (ky * Self::K + kx) * c;
                                row.slice_mut(s![dst..dst + c]).assign(&img.slice(s![src..src + c]));
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<F: Real>(&self, dcols: ArrayView2<F>, batch: usize) -> Array2<F> {
        let (oh, ow, c) = (self.out_height(), self.out_width(), self.c_in);
        let mut dx = Array2::zeros((batch, self.input_len()));
        for n in 0..batch {
            let mut img = dx.row_mut(n);
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = dcols.row((n * oh + oy) * ow + ox);
                    for ky in 0..Self::K {
                        for kx in 0..Self::K {
                            if let Some((y, xx)) = self.source(oy, ox, ky, kx) {
                                let dst = (y * self.width + xx) * c;
                                let src = (ky * Self::K + kx) * c;
                                let mut out = img.slice_mut(s![dst..dst + c]);
                                out += &row.slice(s![src..src + c]);
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Shapes and options of a policy network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub obs: ObsMode,
    /// Layout input width in feature mode.
    pub features: usize,
    /// `(height, width)` of the RGB input in image mode.
    pub image: Option<(usize, usize)>,
    pub context: bool,
    pub context_areas: usize,
    pub context_adjacency: usize,
    pub actions: usize,
    pub hidden: usize,
    pub context_hidden: usize,
    pub fusion: usize,
    pub conv_channels: [usize; 2],
}

impl NetSpec {
    pub fn new(dims: &ObsDims, actions: usize) -> Self {
        NetSpec {
            obs: if dims.image.is_some() { ObsMode::Image } else { ObsMode::Features },
            features: dims.features,
            image: dims.image.map(|(h, w, _)| (h, w)),
            context: dims.context > 0,
            context_areas: dims.context_areas(),
            context_adjacency: dims.context_adjacency(),
            actions,
            hidden: 256,
            context_hidden: 64,
            fusion: 256,
            conv_channels: [16, 32],
        }
    }

    pub fn convs(&self) -> Vec<ConvGeom> {
        let Some((h, w)) = self.image else {
            return Vec::new();
        };
        let first = ConvGeom {
            height: h,
            width: w,
            c_in: 3,
            c_out: self.conv_channels[0],
        };
        let second = ConvGeom {
            height: first.out_height(),
            width: first.out_width(),
            c_in: first.c_out,
            c_out: self.conv_channels[1],
        };
        vec![first, second]
    }

    /// Width of one layout observation row.
    pub fn layout_len(&self) -> usize {
        match self.image {
            Some((h, w)) => h * w * 3,
            None => self.features,
        }
    }

    pub fn context_len(&self) -> usize {
        if self.context {
            self.context_areas + self.context_adjacency
        } else {
            0
        }
    }

    fn conv_count(&self) -> usize {
        if self.image.is_some() {
            2
        } else {
            0
        }
    }

    /// `(in, out)` for every layer in checkpoint order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let convs = self.convs();
        let mut shapes: Vec<(usize, usize)> = convs.iter().map(|g| (9 * g.c_in, g.c_out)).collect();
        let feature_in = convs.last().map_or(self.features, ConvGeom::output_len);
        let (ca, cj) = if self.context {
            (self.context_areas, self.context_adjacency)
        } else {
            (0, 0)
        };
        shapes.extend([
            (feature_in, self.hidden),
            (self.hidden, self.hidden),
            (ca, self.context_hidden),
            (cj, self.context_hidden),
            (self.hidden + 2 * self.context_hidden, self.fusion),
            (self.fusion, self.actions),
            (self.fusion, 1),
        ]);
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// A batch of observations: layout rows (features, or RGB scaled to `[0, 1]`)
/// and context rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBatch<F> {
    pub layout: Array2<F>,
    pub context: Array2<F>,
}

impl<F: Real> ObsBatch<F> {
    pub fn len(&self) -> usize {
        self.layout.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        ObsBatch {
            layout: self.layout.select(Axis(0), rows),
            context: self.context.select(Axis(0), rows),
        }
    }
}

/// Network outputs plus the activations backpropagation needs.
#[derive(Debug, Clone)]
pub struct Forward<F> {
    pub logits: Array2<F>,
    pub values: Array1<F>,
    conv_cols: Vec<Array2<F>>,
    conv_out: Vec<Array2<F>>,
    feature_in: Array2<F>,
    h1: Array2<F>,
    h2: Array2<F>,
    areas: Array2<F>,
    adjacency: Array2<F>,
    embed_areas: Array2<F>,
    embed_adjacency: Array2<F>,
    fusion_in: Array2<F>,
    fused: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<F> {
    spec: NetSpec,
    layers: Vec<Layer<F>>,
}

fn tanh_inplace<F: Real>(a: &mut Array2<F>) {
    a.mapv_inplace(F::tanh);
}

/// `dy * (1 - y^2)` in place on `dy`.
fn tanh_backward<F: Real>(dy: &mut Array2<F>, y: &Array2<F>) {
    Zip::from(dy).and(y).for_each(|d, &y| *d *= F::one() - y * y);
}

impl<F: Real> PolicyNet<F> {
    pub fn zeros(spec: NetSpec) -> Self {
        let layers = spec.layer_shapes().into_iter().map(|(i, o)| Layer::zeros(i, o)).collect();
        PolicyNet { spec, layers }
    }

    /// Orthogonal weights (gain 1, actor head 0.01), zero biases.
    pub fn init<R: Rng>(spec: NetSpec, rng: &mut R) -> Self {
        let mut net = Self::zeros(spec);
        let actor = net.actor_index();
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let gain = if i == actor { 0.01 } else { 1.0 };
            layer.w = orthogonal(layer.w.nrows(), layer.w.ncols(), gain, rng);
        }
        net
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn zeros_like(&self) -> Vec<Layer<F>> {
        self.layers.iter().map(|l| Layer::zeros(l.w.nrows(), l.w.ncols())).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    fn base(&self) -> usize {
        self.spec.conv_count()
    }

    pub fn actor_index(&self) -> usize {
        self.base() + 5
    }

    pub fn critic_index(&self) -> usize {
        self.base() + 6
    }

    /// Converts every weight through `f64`.
    pub fn cast<G: Real>(&self) -> PolicyNet<G> {
        PolicyNet {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: l.w.mapv(|x| real(x.to_f64().unwrap())),
                    b: l.b.mapv(|x| real(x.to_f64().unwrap())),
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.iter().all(|x| x.is_finite()))
    }

    pub fn check_batch(&self, obs: &ObsBatch<F>) -> Result<(), NetError> {
        let layout = self.spec.layout_len();
        if obs.layout.ncols() != layout {
            return Err(NetError::ShapeMismatch {
                what: "layout observation",
                expected: layout,
                got: obs.layout.ncols(),
            });
        }
        let context = self.spec.context_len();
        if obs.context.ncols() != context {
            return Err(NetError::ShapeMismatch {
                what: "context observation",
                expected: context,
                got: obs.context.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, obs: &ObsBatch<F>) -> Result<Forward<F>, NetError> {
        self.check_batch(obs)?;
        let batch = obs.len();
        let base = self.base();

        let mut conv_cols = Vec::new();
        let mut conv_out = Vec::new();
        let mut x = obs.layout.clone();
        for (i, geom) in self.spec.convs().iter().enumerate() {
            let cols = geom.im2col(x.view());
            let mut y = self.layers[i].forward(cols.view());
            tanh_inplace(&mut y);
            let y = y
                .into_shape_with_order((batch, geom.output_len()))
                .expect("contiguous conv output");
            conv_cols.push(cols);
            conv_out.push(y.clone());
            x = y;
        }
        let feature_in = x;

        let mut h1 = self.layers[base].forward(feature_in.view());
        tanh_inplace(&mut h1);
        let mut h2 = self.layers[base + 1].forward(h1.view());
        tanh_inplace(&mut h2);

        let ca = if self.spec.context { self.spec.context_areas } else { 0 };
        let areas = obs.context.slice(s![.., ..ca]).to_owned();
        let adjacency = obs.context.slice(s![.., ca..]).to_owned();
        let ch = self.spec.context_hidden;
        let (embed_areas, embed_adjacency) = if self.spec.context {
            let mut ea = self.layers[base + 2].forward(areas.view());
            tanh_inplace(&mut ea);
            let mut ej = self.layers[base + 3].forward(adjacency.view());
            tanh_inplace(&mut ej);
            (ea, ej)
        } else {
            (Array2::zeros((batch, ch)), Array2::zeros((batch, ch)))
        };

        let hidden = self.spec.hidden;
        let mut fusion_in = Array2::zeros((batch, hidden + 2 * ch));
        fusion_in.slice_mut(s![.., ..hidden]).assign(&h2);
        fusion_in.slice_mut(s![.., hidden..hidden + ch]).assign(&embed_areas);
        fusion_in.slice_mut(s![.., hidden + ch..]).assign(&embed_adjacency);
        let mut fused = self.layers[base + 4].forward(fusion_in.view());
        tanh_inplace(&mut fused);

        let logits = self.layers[base + 5].forward(fused.view());
        let values = self.layers[base + 6]
            .forward(fused.view())
            .index_axis_move(Axis(1), 0);

        Ok(Forward {
            logits,
            values,
            conv_cols,
            conv_out,
            feature_in,
            h1,
            h2,
            areas,
            adjacency,
            embed_areas,
            embed_adjacency,
            fusion_in,
            fused,
        })
    }

    /// Gradients of a loss given its derivatives with respect to the logits
    /// and the values.
    pub fn backward(&self, fwd: &Forward<F>, dlogits: ArrayView2<F>, dvalues: ArrayView1<F>) -> Vec<Layer<F>> {
        let mut grads = self.zeros_like();
        let base = self.base();
        let batch = fwd.fused.nrows();
        let dv = dvalues.insert_axis(Axis(1));

        let mut dfused = self.layers[base + 5]
            .backward(fwd.fused.view(), dlogits, &mut grads[base + 5], true)
            .expect("dx");
        dfused += &self.layers[base + 6]
            .backward(fwd.fused.view(), dv, &mut grads[base + 6], true)
            .expect("dx");
        tanh_backward(&mut dfused, &fwd.fused);
        let dcat = self.layers[base + 4]
            .backward(fwd.fusion_in.view(), dfused.view(), &mut grads[base + 4], true)
            .expect("dx");

        let (hidden, ch) = (self.spec.hidden, self.spec.context_hidden);
        if self.spec.context {
            let mut dea = dcat.slice(s![.., hidden..hidden + ch]).to_owned();
            tanh_backward(&mut dea, &fwd.embed_areas);
            self.layers[base + 2].backward(fwd.areas.view(), dea.view(), &mut grads[base + 2], false);
            let mut dej = dcat.slice(s![.., hidden + ch..]).to_owned();
            tanh_backward(&mut dej, &fwd.embed_adjacency);
            self.layers[base + 3].backward(fwd.adjacency.view(), dej.view(), &mut grads[base + 3], false);
        }

        let mut dh2 = dcat.slice(s![.., ..hidden]).to_owned();
        tanh_backward(&mut dh2, &fwd.h2);
        let mut dh1 = self.layers[base + 1]
            .backward(fwd.h1.view(), dh2.view(), &mut grads[base + 1], true)
            .expect("dx");
        tanh_backward(&mut dh1, &fwd.h1);
        let convs = self.spec.convs();
        let mut dx = self.layers[base].backward(fwd.feature_in.view(), dh1.view(), &mut grads[base], !convs.is_empty());

        for i in (0..convs.len()).rev() {
            let geom = convs[i];
            let mut dy = dx.take().expect("conv gradient");
            tanh_backward(&mut dy, &fwd.conv_out[i]);
            let rows = batch * geom.out_height() * geom.out_width();
            let dy = dy.into_shape_with_order((rows, geom.c_out)).expect("contiguous");
            let dcols = self.layers[i].backward(fwd.conv_cols[i].view(), dy.view(), &mut grads[i], i > 0);
            dx = dcols.map(|d| geom.col2im(d.view(), batch));
        }
        grads
    }

    /// Weights as little-endian `f32` blocks, `w` then `b` per layer.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count() * 4);
        for layer in &self.layers {
            for x in layer.iter() {
                out.extend_from_slice(&x.to_f32().expect("finite").to_le_bytes());
            }
        }
        out
    }

    pub fn from_le_bytes(spec: NetSpec, bytes: &[u8]) -> Result<Self, NetError> {
        let mut net = Self::zeros(spec);
        let expected = net.param_count() * 4;
        if bytes.len() != expected {
            return Err(NetError::ShapeMismatch {
                what: "weight payload (bytes)",
                expected,
                got: bytes.len(),
            });
        }
        let mut chunks = bytes.chunks_exact(4);
        for layer in &mut net.layers {
            for x in layer.iter_mut() {
                let raw: [u8; 4] = chunks.next().expect("length checked").try_into().expect("4 bytes");
                *x = real(f32::from_le_bytes(raw) as f64);
            }
        }
        Ok(net)
    }
}

/// `rows x cols` matrix with orthonormal rows or columns (whichever are fewer), times `gain`.
pub fn orthogonal<F: Real, R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<F> {
    let (n, len) = (rows.min(cols), rows.max(cols));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let x = if rows <= cols { basis[r][c] } else { basis[c][r] };
        real(x * gain)
    })
}

/// Global L2 norm of a gradient set.
pub fn grad_norm<F: Real>(grads: &[Layer<F>]) -> f64 {
    grads
        .iter()
        .flat_map(Layer::iter)
        .map(|x| {
            let x = x.to_f64().unwrap();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<F: Real>(grads: &mut [Layer<F>], max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm {
        let scale: F = real(max_norm / norm);
        for g in grads.iter_mut() {
            g.w *= scale;
            g.b *= scale;
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<F> {
    config: AdamConfig,
    t: i32,
    m: Vec<Layer<F>>,
    v: Vec<Layer<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig, net: &PolicyNet<F>) -> Self {
        Adam {
            config,
            t: 0,
            m: net.zeros_like(),
            v: net.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, net: &mut PolicyNet<F>, grads: &[Layer<F>]) {
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (real::<F>(c.beta1), real::<F>(c.beta2));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        let bias1 = 1.0 - c.beta1.powi(self.t);
        let bias2 = 1.0 - c.beta2.powi(self.t);
        let step: F = real(c.lr * bias2.sqrt() / bias1);
        let eps: F = real(c.eps * bias2.sqrt());
        let update = |p: &mut F, &g: &F, m: &mut F, v: &mut F| {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        };
        for (((layer, g), m), v) in net.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(update);
            Zip::from(&mut layer.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(update);
        }
    }
}
