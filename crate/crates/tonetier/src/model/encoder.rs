//! Pyramidal bidirectional LSTM encoder with a fully-connected output layer.
//!
//! Three bidirectional layers; before layers 2 and 3 adjacent frame pairs
//! are concatenated, halving the frame rate each time (x4 total), so the
//! output length is `ceil(ceil(T/2)/2)`. Odd-length sequences pad with a
//! zero frame before pairing. The fully-connected layer applies tanh.
//!
//! Forward passes cache every gate activation; backward passes are plain
//! backpropagation through time producing gradients for all weights and the
//! layer inputs.

use ndarray::{s, Array1, Array2, ArrayView2};

use super::ModelError;
use crate::model::params::{GradBuffer, ParamStore};

pub const NUM_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub fc_dim: usize,
}

impl EncoderConfig {
    /// Input width of a bidirectional layer: raw features for layer 0,
    /// concatenated frame pairs of the previous layer's output after that.
    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            4 * self.hidden
        }
    }

    /// Parameter shapes of the encoder (LSTM stacks plus the FC layer).
    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut shapes = Vec::new();
        for layer in 0..NUM_LAYERS {
            let in_dim = self.layer_input_dim(layer);
            for dir in ["f", "b"] {
                let prefix = format!("enc.l{}.{}", layer + 1, dir);
                shapes.push((format!("{prefix}.w"), 4 * self.hidden, in_dim));
                shapes.push((format!("{prefix}.u"), 4 * self.hidden, self.hidden));
                shapes.push((format!("{prefix}.b"), 1, 4 * self.hidden));
            }
        }
        shapes.push(("enc.fc.w".into(), self.fc_dim, 2 * self.hidden));
        shapes.push(("enc.fc.b".into(), 1, self.fc_dim));
        shapes
    }

    /// Encoder output length for `t` input frames.
    pub fn output_len(t: usize) -> usize {
        t.div_ceil(2).div_ceil(2)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cached activations of one LSTM direction, rows in processing order.
#[derive(Debug, Clone)]
struct DirCache {
    gate_i: Array2<f64>,
    gate_f: Array2<f64>,
    gate_g: Array2<f64>,
    gate_o: Array2<f64>,
    cell: Array2<f64>,
    tanh_cell: Array2<f64>,
    hidden: Array2<f64>,
}

fn lstm_dir_forward(
    x: &ArrayView2<f64>,
    w: &ArrayView2<f64>,
    u: &ArrayView2<f64>,
    b: &ArrayView2<f64>,
) -> DirCache {
    let t_len = x.nrows();
    let h = u.ncols();
    let xw = x.dot(&w.t());
    let mut cache = DirCache {
        gate_i: Array2::zeros((t_len, h)),
        gate_f: Array2::zeros((t_len, h)),
        gate_g: Array2::zeros((t_len, h)),
        gate_o: Array2::zeros((t_len, h)),
        cell: Array2::zeros((t_len, h)),
        tanh_cell: Array2::zeros((t_len, h)),
        hidden: Array2::zeros((t_len, h)),
    };
    let mut h_prev = Array1::<f64>::zeros(h);
    let mut c_prev = Array1::<f64>::zeros(h);
    for t in 0..t_len {
        let rec = u.dot(&h_prev);
        for j in 0..h {
            let zi = xw[[t, j]] + rec[j] + b[[0, j]];
            let zf = xw[[t, h + j]] + rec[h + j] + b[[0, h + j]];
            let zg = xw[[t, 2 * h + j]] + rec[2 * h + j] + b[[0, 2 * h + j]];
            let zo = xw[[t, 3 * h + j]] + rec[3 * h + j] + b[[0, 3 * h + j]];
            let i = sigmoid(zi);
            let f = sigmoid(zf);
            let g = zg.tanh();
            let o = sigmoid(zo);
            let c = f * c_prev[j] + i * g;
            let tc = c.tanh();
            cache.gate_i[[t, j]] = i;
            cache.gate_f[[t, j]] = f;
            cache.gate_g[[t, j]] = g;
            cache.gate_o[[t, j]] = o;
            cache.cell[[t, j]] = c;
            cache.tanh_cell[[t, j]] = tc;
            cache.hidden[[t, j]] = o * tc;
        }
        h_prev.assign(&cache.hidden.row(t));
        c_prev.assign(&cache.cell.row(t));
    }
    cache
}

/// BPTT for one direction. `dh_seq` holds d loss / d hidden in processing
/// order; weight gradients accumulate into `grads` under `prefix` and the
/// input gradient into `dx` (also processing order).
#[allow(clippy::too_many_arguments)]
fn lstm_dir_backward(
    x: &ArrayView2<f64>,
    w: &ArrayView2<f64>,
    u: &ArrayView2<f64>,
    cache: &DirCache,
    dh_seq: &Array2<f64>,
    grads: &mut GradBuffer,
    layout: &crate::model::params::ParamLayout,
    prefix: &str,
    dx: &mut Array2<f64>,
) {
    let t_len = x.nrows();
    let h = u.ncols();
    let mut dz_all = Array2::<f64>::zeros((t_len, 4 * h));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    for t in (0..t_len).rev() {
        let mut dz = Array1::<f64>::zeros(4 * h);
        for j in 0..h {
            let dh = dh_seq[[t, j]] + dh_next[j];
            let o = cache.gate_o[[t, j]];
            let tc = cache.tanh_cell[[t, j]];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            let d_o = dh * tc;
            let i = cache.gate_i[[t, j]];
            let f = cache.gate_f[[t, j]];
            let g = cache.gate_g[[t, j]];
            let c_prev = if t > 0 { cache.cell[[t - 1, j]] } else { 0.0 };
            let di = dc * g;
            let dg = dc * i;
            let df = dc * c_prev;
            dz[j] = di * i * (1.0 - i);
            dz[h + j] = df * f * (1.0 - f);
            dz[2 * h + j] = dg * (1.0 - g * g);
            dz[3 * h + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dh_next = u.t().dot(&dz);
        dz_all.row_mut(t).assign(&dz);
    }
    // Hidden states shifted one step back (h_{t-1}; zero at t = 0).
    let mut h_prev_mat = Array2::<f64>::zeros((t_len, h));
    if t_len > 1 {
        h_prev_mat
            .slice_mut(s![1.., ..])
            .assign(&cache.hidden.slice(s![..t_len - 1, ..]));
    }
    {
        let mut dw = grads.view_mut(layout, &format!("{prefix}.w"));
        dw += &dz_all.t().dot(x);
    }
    {
        let mut du = grads.view_mut(layout, &format!("{prefix}.u"));
        du += &dz_all.t().dot(&h_prev_mat);
    }
    {
        let mut db = grads.view_mut(layout, &format!("{prefix}.b"));
        for t in 0..t_len {
            for j in 0..4 * h {
                db[[0, j]] += dz_all[[t, j]];
            }
        }
    }
    *dx += &dz_all.dot(w);
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    fwd: DirCache,
    bwd: DirCache,
}

/// All activations needed to backpropagate one utterance.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    layers: Vec<LayerCache>,
    /// FC input (last layer's bidirectional output).
    fc_input: Array2<f64>,
    /// FC output after tanh, n x d.
    pub output: Array2<f64>,
}

/// Concatenate adjacent frame pairs, zero-padding an odd tail frame.
fn reduce_pairs(x: &Array2<f64>) -> Array2<f64> {
    let (t, d) = x.dim();
    let t2 = t.div_ceil(2);
    let mut out = Array2::<f64>::zeros((t2, 2 * d));
    for j in 0..t2 {
        out.slice_mut(s![j, ..d]).assign(&x.row(2 * j));
        if 2 * j + 1 < t {
            out.slice_mut(s![j, d..]).assign(&x.row(2 * j + 1));
        }
    }
    out
}

fn reduce_pairs_backward(d_out: &Array2<f64>, t: usize) -> Array2<f64> {
    let d = d_out.ncols() / 2;
    let mut dx = Array2::<f64>::zeros((t, d));
    for j in 0..d_out.nrows() {
        dx.row_mut(2 * j)
            .assign(&d_out.slice(s![j, ..d]));
        if 2 * j + 1 < t {
            dx.row_mut(2 * j + 1)
                .assign(&d_out.slice(s![j, d..]));
        }
    }
    dx
}

fn bilstm_forward(
    params: &ParamStore,
    layer: usize,
    input: Array2<f64>,
) -> (Array2<f64>, LayerCache) {
    let prefix = format!("enc.l{}", layer + 1);
    let view = input.view();
    let fwd = lstm_dir_forward(
        &view,
        &params.view(&format!("{prefix}.f.w")),
        &params.view(&format!("{prefix}.f.u")),
        &params.view(&format!("{prefix}.f.b")),
    );
    let rev_input = input.slice(s![..;-1, ..]);
    let bwd = lstm_dir_forward(
        &rev_input,
        &params.view(&format!("{prefix}.b.w")),
        &params.view(&format!("{prefix}.b.u")),
        &params.view(&format!("{prefix}.b.b")),
    );
    let t_len = input.nrows();
    let h = fwd.hidden.ncols();
    let mut out = Array2::<f64>::zeros((t_len, 2 * h));
    for t in 0..t_len {
        out.slice_mut(s![t, ..h]).assign(&fwd.hidden.row(t));
        // Backward direction processed reversed rows; flip back to input order.
        out.slice_mut(s![t, h..])
            .assign(&bwd.hidden.row(t_len - 1 - t));
    }
    (out, LayerCache { input, fwd, bwd })
}

fn bilstm_backward(
    params: &ParamStore,
    grads: &mut GradBuffer,
    layer: usize,
    cache: &LayerCache,
    d_out: &Array2<f64>,
) -> Array2<f64> {
    let prefix = format!("enc.l{}", layer + 1);
    let t_len = cache.input.nrows();
    let h = cache.fwd.hidden.ncols();
    let layout = params.layout.clone();

    let dh_fwd = d_out.slice(s![.., ..h]).to_owned();
    let mut dh_bwd = Array2::<f64>::zeros((t_len, h));
    for t in 0..t_len {
        dh_bwd
            .row_mut(t)
            .assign(&d_out.slice(s![t_len - 1 - t, h..]));
    }

    let mut dx = Array2::<f64>::zeros(cache.input.dim());
    lstm_dir_backward(
        &cache.input.view(),
        &params.view(&format!("{prefix}.f.w")),
        &params.view(&format!("{prefix}.f.u")),
        &cache.fwd,
        &dh_fwd,
        grads,
        &layout,
        &format!("{prefix}.f"),
        &mut dx,
    );
    let rev_input = cache.input.slice(s![..;-1, ..]).to_owned();
    let mut dx_rev = Array2::<f64>::zeros(cache.input.dim());
    lstm_dir_backward(
        &rev_input.view(),
        &params.view(&format!("{prefix}.b.w")),
        &params.view(&format!("{prefix}.b.u")),
        &cache.bwd,
        &dh_bwd,
        grads,
        &layout,
        &format!("{prefix}.b"),
        &mut dx_rev,
    );
    dx += &dx_rev.slice(s![..;-1, ..]);
    dx
}

/// Run the encoder. Inputs need at least 4 frames and the configured width.
pub fn encode(
    config: &EncoderConfig,
    params: &ParamStore,
    features: &ArrayView2<f64>,
) -> Result<EncoderCache, ModelError> {
    let t = features.nrows();
    if t < 4 {
        return Err(ModelError::InputTooShort { frames: t });
    }
    if features.ncols() != config.input_dim {
        return Err(ModelError::DimMismatch {
            expected: config.input_dim,
            got: features.ncols(),
        });
    }
    let mut layers = Vec::with_capacity(NUM_LAYERS);
    let mut x = features.to_owned();
    for layer in 0..NUM_LAYERS {
        let (out, cache) = bilstm_forward(params, layer, x);
        layers.push(cache);
        x = if layer + 1 < NUM_LAYERS {
            reduce_pairs(&out)
        } else {
            out
        };
    }
    let fc_input = x;
    let w = params.view("enc.fc.w");
    let b = params.view("enc.fc.b");
    let mut output = fc_input.dot(&w.t());
    for mut row in output.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v + b[[0, j]]).tanh();
        }
    }
    Ok(EncoderCache {
        layers,
        fc_input,
        output,
    })
}

/// Backpropagate `d_output` (n x d) through the FC layer and LSTM stack,
/// accumulating parameter gradients.
pub fn encode_backward(
    params: &ParamStore,
    grads: &mut GradBuffer,
    cache: &EncoderCache,
    d_output: &Array2<f64>,
) {
    let layout = params.layout.clone();
    // tanh backward.
    let mut d_pre = d_output.clone();
    for (dp, y) in d_pre.iter_mut().zip(cache.output.iter()) {
        *dp *= 1.0 - y * y;
    }
    {
        let mut dw = grads.view_mut(&layout, "enc.fc.w");
        dw += &d_pre.t().dot(&cache.fc_input);
    }
    {
        let mut db = grads.view_mut(&layout, "enc.fc.b");
        for t in 0..d_pre.nrows() {
            for j in 0..d_pre.ncols() {
                db[[0, j]] += d_pre[[t, j]];
            }
        }
    }
    let w = params.view("enc.fc.w").to_owned();
    let mut d_layer_out = d_pre.dot(&w);
    for layer in (0..NUM_LAYERS).rev() {
        let dx = bilstm_backward(params, grads, layer, &cache.layers[layer], &d_layer_out);
        if layer > 0 {
            let prev_t = cache.layers[layer - 1].input.nrows();
            d_layer_out = reduce_pairs_backward(&dx, prev_t);
        }
    }
}
