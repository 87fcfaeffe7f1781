//! Recurrent layers: simple RNN, LSTM, and GRU, each with full
//! backpropagation through time.
//!
//! All three share conventions:
//!
//! * Input is [batch, time, in_dim]; states are row vectors, so a weight of
//!   shape [in_dim, hidden] is applied as `x · W`.
//! * With `return_sequences` the output is [batch, time, hidden], otherwise
//!   only the final state [batch, hidden].
//! * Initial states default to zero; `forward_with_state` accepts explicit
//!   ones so single-step behaviour can be pinned down in tests.
//! * A zero-length time axis cannot occur: tensors reject zero dimensions at
//!   construction.
//!
//! LSTM and GRU gates read the concatenation [h_prev, x_t], so each gate is a
//! single matrix of shape [hidden + in_dim, hidden]. Internally the per-gate
//! matrices are packed column-wise into one scratch matrix per step batch, so
//! each step performs one fused matmul; parameters and gradients stay
//! separate under their own names.

use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_at, matmul_bt, sigmoid, Tensor};

use super::{init_uniform, LayerParams};
use rand_chacha::ChaCha8Rng;

/// Columns `a` then `b`: [rows, p] and [rows, q] give [rows, p + q].
fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [ra, ca] = a.dims2()?;
    let [rb, cb] = b.dims2()?;
    if ra != rb {
        return Err(Error::Shape(format!(
            "cannot concatenate {ra} rows with {rb} rows"
        )));
    }
    let mut out = Tensor::zeros(&[ra, ca + cb]);
    {
        let ad = a.data();
        let bd = b.data();
        let od = out.data_mut();
        for r in 0..ra {
            od[r * (ca + cb)..r * (ca + cb) + ca].copy_from_slice(&ad[r * ca..(r + 1) * ca]);
            od[r * (ca + cb) + ca..(r + 1) * (ca + cb)].copy_from_slice(&bd[r * cb..(r + 1) * cb]);
        }
    }
    Ok(out)
}

/// Splits columns at `at`: [rows, c] gives [rows, at] and [rows, c - at].
fn split_cols(x: &Tensor, at: usize) -> Result<(Tensor, Tensor)> {
    let [rows, cols] = x.dims2()?;
    if at == 0 || at >= cols {
        return Err(Error::Shape(format!(
            "cannot split {cols} columns at {at}"
        )));
    }
    let mut left = Tensor::zeros(&[rows, at]);
    let mut right = Tensor::zeros(&[rows, cols - at]);
    {
        let xd = x.data();
        let ld = left.data_mut();
        let rd = right.data_mut();
        for r in 0..rows {
            ld[r * at..(r + 1) * at].copy_from_slice(&xd[r * cols..r * cols + at]);
            rd[r * (cols - at)..(r + 1) * (cols - at)]
                .copy_from_slice(&xd[r * cols + at..(r + 1) * cols]);
        }
    }
    Ok((left, right))
}

/// Packs equally-tall matrices side by side into one column-block matrix.
fn pack_cols(mats: &[&Tensor]) -> Result<Tensor> {
    let [rows, _] = mats[0].dims2()?;
    let mut widths = Vec::with_capacity(mats.len());
    let mut total = 0;
    for m in mats {
        let [r, c] = m.dims2()?;
        if r != rows {
            return Err(Error::Shape("pack_cols needs equal row counts".into()));
        }
        widths.push(c);
        total += c;
    }
    let mut out = Tensor::zeros(&[rows, total]);
    {
        let od = out.data_mut();
        for r in 0..rows {
            let mut offset = 0;
            for (m, &w) in mats.iter().zip(&widths) {
                od[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&m.data()[r * w..(r + 1) * w]);
                offset += w;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pack_cols`] for equal block widths.
fn unpack_cols(x: &Tensor, blocks: usize) -> Result<Vec<Tensor>> {
    let [rows, cols] = x.dims2()?;
    if cols % blocks != 0 {
        return Err(Error::Shape(format!(
            "cannot unpack {cols} columns into {blocks} equal blocks"
        )));
    }
    let w = cols / blocks;
    let xd = x.data();
    let mut out = Vec::with_capacity(blocks);
    for i in 0..blocks {
        let mut m = Tensor::zeros(&[rows, w]);
        {
            let md = m.data_mut();
            for r in 0..rows {
                md[r * w..(r + 1) * w]
                    .copy_from_slice(&xd[r * cols + i * w..r * cols + (i + 1) * w]);
            }
        }
        out.push(m);
    }
    Ok(out)
}

fn add_row_bias(y: &mut Tensor, b: &[f64]) {
    let cols = b.len();
    for row in y.data_mut().chunks_mut(cols) {
        for (v, bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
}

fn col_sums(x: &Tensor) -> Result<Tensor> {
    let [rows, cols] = x.dims2()?;
    let mut out = Tensor::zeros(&[cols]);
    {
        let xd = x.data();
        let od = out.data_mut();
        for r in 0..rows {
            for c in 0..cols {
                od[c] += xd[r * cols + c];
            }
        }
    }
    Ok(out)
}

/// Checks an explicit initial state against [batch, hidden].
fn check_state(name: &str, state: &Tensor, batch: usize, hidden: usize) -> Result<()> {
    if state.shape() != [batch, hidden] {
        return Err(Error::Shape(format!(
            "{name} shape {:?} does not match [{batch}, {hidden}]",
            state.shape()
        )));
    }
    Ok(())
}

/// Splits the upstream gradient into per-step slices. With sequences the
/// upstream is [batch, time, hidden] and every step receives a slice; without
/// it is [batch, hidden] and only the final step does.
fn upstream_at(
    upstream: &Tensor,
    return_sequences: bool,
    t: usize,
    time: usize,
    batch: usize,
    hidden: usize,
) -> Result<Option<Tensor>> {
    if return_sequences {
        let [b, tt, h] = upstream.dims3()?;
        if [b, tt, h] != [batch, time, hidden] {
            return Err(Error::Shape(format!(
                "upstream shape {:?} does not match [{batch}, {time}, {hidden}]",
                upstream.shape()
            )));
        }
        Ok(Some(upstream.time_slice(t)?))
    } else if t + 1 == time {
        check_state("upstream", upstream, batch, hidden)?;
        Ok(Some(upstream.clone()))
    } else {
        Ok(None)
    }
}

/// Simple recurrent layer: `h_t = tanh(h_prev W_h + x_t W_x + b)`.
///
/// Parameters: `W_h` [hidden, hidden], `W_x` [in_dim, hidden], `b` [hidden].
#[derive(Debug, Clone)]
pub struct Rnn {
    pub in_dim: usize,
    pub hidden: usize,
    pub return_sequences: bool,
}

#[derive(Debug)]
pub struct RnnCache {
    input: Tensor,
    /// States h_0 .. h_T, so `states[t + 1]` is the output of step t.
    states: Vec<Tensor>,
}

impl Rnn {
    pub fn new(in_dim: usize, hidden: usize) -> Result<Self> {
        if in_dim == 0 || hidden == 0 {
            return Err(Error::Config("rnn dimensions must be positive".into()));
        }
        Ok(Self { in_dim, hidden, return_sequences: false })
    }

    pub fn with_sequences(mut self, return_sequences: bool) -> Self {
        self.return_sequences = return_sequences;
        self
    }

    /// Weights are drawn in lexicographic name order (`W_h`, then `W_x`);
    /// the bias starts at zero.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<LayerParams> {
        let mut params = LayerParams::new();
        params.insert("W_h", init_uniform(&[self.hidden, self.hidden], self.hidden, rng)?)?;
        params.insert("W_x", init_uniform(&[self.in_dim, self.hidden], self.in_dim, rng)?)?;
        params.insert("b", Tensor::zeros(&[self.hidden]))?;
        Ok(params)
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<(Tensor, RnnCache)> {
        self.forward_with_state(x, params, None)
    }

    pub fn forward_with_state(
        &self,
        x: &Tensor,
        params: &LayerParams,
        h0: Option<&Tensor>,
    ) -> Result<(Tensor, RnnCache)> {
        let [batch, time, d] = x.dims3()?;
        if d != self.in_dim {
            return Err(Error::Shape(format!(
                "rnn expects {} input features, got {d}",
                self.in_dim
            )));
        }
        let w_h = params.get("W_h")?;
        let w_x = params.get("W_x")?;
        let b = params.get("b")?;
        let h_init = match h0 {
            Some(h) => {
                check_state("h0", h, batch, self.hidden)?;
                h.clone()
            }
            None => Tensor::zeros(&[batch, self.hidden]),
        };

        let mut states = Vec::with_capacity(time + 1);
        states.push(h_init);
        for t in 0..time {
            let x_t = x.time_slice(t)?;
            let mut pre = matmul(states.last().unwrap(), w_h)?;
            pre = pre.add(&matmul(&x_t, w_x)?)?;
            add_row_bias(&mut pre, b.data());
            states.push(pre.map(f64::tanh));
        }

        let out = if self.return_sequences {
            let mut out = Tensor::zeros(&[batch, time, self.hidden]);
            for t in 0..time {
                out.set_time_slice(t, &states[t + 1])?;
            }
            out
        } else {
            states.last().unwrap().clone()
        };
        Ok((out, RnnCache { input: x.clone(), states }))
    }

    pub fn backward(
        &self,
        cache: RnnCache,
        params: &LayerParams,
        upstream: &Tensor,
    ) -> Result<(Tensor, LayerParams)> {
        let x = &cache.input;
        let [batch, time, _] = x.dims3()?;
        let w_h = params.get("W_h")?;
        let w_x = params.get("W_x")?;

        let mut d_wh = Tensor::zeros(&[self.hidden, self.hidden]);
        let mut d_wx = Tensor::zeros(&[self.in_dim, self.hidden]);
        let mut d_b = Tensor::zeros(&[self.hidden]);
        let mut dx = Tensor::zeros(&[batch, time, self.in_dim]);
        let mut carry = Tensor::zeros(&[batch, self.hidden]);

        for t in (0..time).rev() {
            let mut dh = carry;
            if let Some(u) = upstream_at(upstream, self.return_sequences, t, time, batch, self.hidden)? {
                dh = dh.add(&u)?;
            }
            // tanh'(pre) expressed through the stored output: 1 - h^2.
            let h_t = &cache.states[t + 1];
            let dpre = dh.zip_map(h_t, |g, h| g * (1.0 - h * h))?;
            d_b = d_b.add(&col_sums(&dpre)?)?;
            let x_t = x.time_slice(t)?;
            d_wx = d_wx.add(&matmul_at(&x_t, &dpre)?)?;
            d_wh = d_wh.add(&matmul_at(&cache.states[t], &dpre)?)?;
            dx.set_time_slice(t, &matmul_bt(&dpre, w_x)?)?;
            carry = matmul_bt(&dpre, w_h)?;
        }

        let mut grads = LayerParams::new();
        grads.insert("W_h", d_wh)?;
        grads.insert("W_x", d_wx)?;
        grads.insert("b", d_b)?;
        Ok((dx, grads))
    }
}

/// LSTM with forget, input, candidate, and output gates over [h_prev, x_t]:
///
/// ```text
/// f_t = sigmoid([h_prev, x_t] W_f + b_f)
/// i_t = sigmoid([h_prev, x_t] W_i + b_i)
/// c~_t = tanh([h_prev, x_t] W_C + b_C)
/// C_t = f_t * C_prev + i_t * c~_t
/// o_t = sigmoid([h_prev, x_t] W_o + b_o)
/// h_t = o_t * tanh(C_t)
/// ```
///
/// Parameters: `W_f`, `W_i`, `W_C`, `W_o` [hidden + in_dim, hidden] and
/// `b_f`, `b_i`, `b_C`, `b_o` [hidden].
#[derive(Debug, Clone)]
pub struct Lstm {
    pub in_dim: usize,
    pub hidden: usize,
    pub return_sequences: bool,
}

#[derive(Debug)]
pub struct LstmCache {
    /// Concatenated step inputs [h_prev, x_t], one per step.
    zs: Vec<Tensor>,
    /// Gate activations per step, packed [f | i | c~ | o] as [batch, 4 * hidden].
    gates: Vec<Tensor>,
    /// Cell states C_0 .. C_T.
    cells: Vec<Tensor>,
    /// tanh(C_t) per step, reused by both forward output and backward.
    tanh_cells: Vec<Tensor>,
}

/// Packing order of the fused gate blocks, shared by forward and backward.
const LSTM_GATE_NAMES: [&str; 4] = ["W_f", "W_i", "W_C", "W_o"];
const LSTM_BIAS_NAMES: [&str; 4] = ["b_f", "b_i", "b_C", "b_o"];

impl Lstm {
    pub fn new(in_dim: usize, hidden: usize) -> Result<Self> {
        if in_dim == 0 || hidden == 0 {
            return Err(Error::Config("lstm dimensions must be positive".into()));
        }
        Ok(Self { in_dim, hidden, return_sequences: false })
    }

    pub fn with_sequences(mut self, return_sequences: bool) -> Self {
        self.return_sequences = return_sequences;
        self
    }

    /// Weights are drawn in lexicographic name order (`W_C`, `W_f`, `W_i`,
    /// `W_o`), each with fan_in = hidden + in_dim; biases start at zero.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<LayerParams> {
        let rows = self.hidden + self.in_dim;
        let mut params = LayerParams::new();
        for name in ["W_C", "W_f", "W_i", "W_o"] {
            params.insert(name, init_uniform(&[rows, self.hidden], rows, rng)?)?;
        }
        for name in LSTM_BIAS_NAMES {
            params.insert(name, Tensor::zeros(&[self.hidden]))?;
        }
        Ok(params)
    }

    /// One matrix [hidden + in_dim, 4 * hidden] holding all four gates.
    fn packed_weights(&self, params: &LayerParams) -> Result<Tensor> {
        let mats: Vec<&Tensor> = LSTM_GATE_NAMES
            .iter()
            .map(|n| params.get(n))
            .collect::<Result<_>>()?;
        for m in &mats {
            if m.shape() != [self.hidden + self.in_dim, self.hidden] {
                return Err(Error::Shape(format!(
                    "lstm gate weight shape {:?} does not match [{}, {}]",
                    m.shape(),
                    self.hidden + self.in_dim,
                    self.hidden
                )));
            }
        }
        pack_cols(&mats)
    }

    fn packed_biases(&self, params: &LayerParams) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(4 * self.hidden);
        for name in LSTM_BIAS_NAMES {
            let b = params.get(name)?;
            if b.shape() != [self.hidden] {
                return Err(Error::Shape(format!(
                    "lstm bias shape {:?} does not match [{}]",
                    b.shape(),
                    self.hidden
                )));
            }
            out.extend_from_slice(b.data());
        }
        Ok(out)
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<(Tensor, LstmCache)> {
        self.forward_with_state(x, params, None, None)
    }

    pub fn forward_with_state(
        &self,
        x: &Tensor,
        params: &LayerParams,
        h0: Option<&Tensor>,
        c0: Option<&Tensor>,
    ) -> Result<(Tensor, LstmCache)> {
        let [batch, time, d] = x.dims3()?;
        if d != self.in_dim {
            return Err(Error::Shape(format!(
                "lstm expects {} input features, got {d}",
                self.in_dim
            )));
        }
        let h = self.hidden;
        let w_packed = self.packed_weights(params)?;
        let b_packed = self.packed_biases(params)?;
        let mut h_prev = match h0 {
            Some(s) => {
                check_state("h0", s, batch, h)?;
                s.clone()
            }
            None => Tensor::zeros(&[batch, h]),
        };
        let c_init = match c0 {
            Some(s) => {
                check_state("c0", s, batch, h)?;
                s.clone()
            }
            None => Tensor::zeros(&[batch, h]),
        };

        let mut zs = Vec::with_capacity(time);
        let mut gates = Vec::with_capacity(time);
        let mut cells = Vec::with_capacity(time + 1);
        let mut tanh_cells = Vec::with_capacity(time);
        cells.push(c_init);
        let mut outputs = if self.return_sequences {
            Some(Tensor::zeros(&[batch, time, h]))
        } else {
            None
        };

        for t in 0..time {
            let z = concat_cols(&h_prev, &x.time_slice(t)?)?;
            let mut pre = matmul(&z, &w_packed)?;
            add_row_bias(&mut pre, &b_packed);
            // Activate in place: sigmoid on the f, i, o blocks, tanh on c~.
            let gate = {
                let mut g = pre;
                let gd = g.data_mut();
                for row in gd.chunks_mut(4 * h) {
                    for v in &mut row[0..2 * h] {
                        *v = sigmoid(*v);
                    }
                    for v in &mut row[2 * h..3 * h] {
                        *v = v.tanh();
                    }
                    for v in &mut row[3 * h..4 * h] {
                        *v = sigmoid(*v);
                    }
                }
                g
            };

            let c_prev = cells.last().unwrap();
            let mut c_t = Tensor::zeros(&[batch, h]);
            let mut h_t = Tensor::zeros(&[batch, h]);
            let mut tanh_c = Tensor::zeros(&[batch, h]);
            {
                let gd = gate.data();
                let cp = c_prev.data();
                let cd = c_t.data_mut();
                let hd = h_t.data_mut();
                let td = tanh_c.data_mut();
                for bi in 0..batch {
                    let go = bi * 4 * h;
                    for u in 0..h {
                        let f = gd[go + u];
                        let i = gd[go + h + u];
                        let cand = gd[go + 2 * h + u];
                        let o = gd[go + 3 * h + u];
                        let c = f * cp[bi * h + u] + i * cand;
                        let tc = c.tanh();
                        cd[bi * h + u] = c;
                        td[bi * h + u] = tc;
                        hd[bi * h + u] = o * tc;
                    }
                }
            }
            if let Some(out) = outputs.as_mut() {
                out.set_time_slice(t, &h_t)?;
            }
            zs.push(z);
            gates.push(gate);
            cells.push(c_t);
            tanh_cells.push(tanh_c);
            h_prev = h_t;
        }

        let out = match outputs {
            Some(out) => out,
            None => h_prev,
        };
        Ok((out, LstmCache { zs, gates, cells, tanh_cells }))
    }

    pub fn backward(
        &self,
        cache: LstmCache,
        params: &LayerParams,
        upstream: &Tensor,
    ) -> Result<(Tensor, LayerParams)> {
        let time = cache.zs.len();
        let [batch, _] = cache.cells[0].dims2()?;
        let h = self.hidden;
        let w_packed = self.packed_weights(params)?;

        let mut d_w_packed = Tensor::zeros(&[h + self.in_dim, 4 * h]);
        let mut d_b_packed = Tensor::zeros(&[4 * h]);
        let mut dx = Tensor::zeros(&[batch, time, self.in_dim]);
        let mut dh_carry = Tensor::zeros(&[batch, h]);
        let mut dc_carry = Tensor::zeros(&[batch, h]);

        for t in (0..time).rev() {
            let mut dh = dh_carry;
            if let Some(u) = upstream_at(upstream, self.return_sequences, t, time, batch, h)? {
                dh = dh.add(&u)?;
            }
            let gate = &cache.gates[t];
            let tanh_c = &cache.tanh_cells[t];
            let c_prev = &cache.cells[t];

            // Per-element gate gradients, packed like the activations.
            let mut dpre = Tensor::zeros(&[batch, 4 * h]);
            let mut dc_next = Tensor::zeros(&[batch, h]);
            {
                let gd = gate.data();
                let tc = tanh_c.data();
                let cp = c_prev.data();
                let dhd = dh.data();
                let dcd = dc_carry.data();
                let dp = dpre.data_mut();
                let dcn = dc_next.data_mut();
                for bi in 0..batch {
                    let go = bi * 4 * h;
                    for u in 0..h {
                        let f = gd[go + u];
                        let i = gd[go + h + u];
                        let cand = gd[go + 2 * h + u];
                        let o = gd[go + 3 * h + u];
                        let t_c = tc[bi * h + u];
                        let g_h = dhd[bi * h + u];
                        // dL/dC_t combines the carried cell gradient and the
                        // path through h_t = o * tanh(C_t).
                        let dc = dcd[bi * h + u] + g_h * o * (1.0 - t_c * t_c);
                        dp[go + u] = dc * cp[bi * h + u] * f * (1.0 - f);
                        dp[go + h + u] = dc * cand * i * (1.0 - i);
                        dp[go + 2 * h + u] = dc * i * (1.0 - cand * cand);
                        dp[go + 3 * h + u] = g_h * t_c * o * (1.0 - o);
                        dcn[bi * h + u] = dc * f;
                    }
                }
            }
            dc_carry = dc_next;
            d_b_packed = d_b_packed.add(&col_sums(&dpre)?)?;
            d_w_packed = d_w_packed.add(&matmul_at(&cache.zs[t], &dpre)?)?;
            let dz = matmul_bt(&dpre, &w_packed)?;
            let (dh_prev, dx_t) = split_cols(&dz, h)?;
            dx.set_time_slice(t, &dx_t)?;
            dh_carry = dh_prev;
        }

        let mut grads = LayerParams::new();
        for (name, grad) in LSTM_GATE_NAMES.iter().zip(unpack_cols(&d_w_packed, 4)?) {
            grads.insert(name, grad)?;
        }
        for (i, chunk) in d_b_packed.data().chunks(h).enumerate() {
            grads.insert(LSTM_BIAS_NAMES[i], Tensor::from_slice(chunk))?;
        }
        Ok((dx, grads))
    }
}

/// GRU with update and reset gates over [h_prev, x_t] and no bias terms:
///
/// ```text
/// z_t = sigmoid([h_prev, x_t] W_z)
/// r_t = sigmoid([h_prev, x_t] W_r)
/// h~_t = tanh([r_t * h_prev, x_t] W)
/// h_t = (1 - z_t) * h_prev + z_t * h~_t
/// ```
///
/// Parameters: `W_z`, `W_r`, `W`, all [hidden + in_dim, hidden].
#[derive(Debug, Clone)]
pub struct Gru {
    pub in_dim: usize,
    pub hidden: usize,
    pub return_sequences: bool,
}

#[derive(Debug)]
pub struct GruCache {
    /// [h_prev, x_t] per step.
    zs: Vec<Tensor>,
    /// [r * h_prev, x_t] per step.
    candidates_in: Vec<Tensor>,
    /// Gate activations per step, packed [z | r] as [batch, 2 * hidden].
    gates: Vec<Tensor>,
    /// Candidate states h~ per step.
    candidates: Vec<Tensor>,
    /// States h_0 .. h_T.
    states: Vec<Tensor>,
}

impl Gru {
    pub fn new(in_dim: usize, hidden: usize) -> Result<Self> {
        if in_dim == 0 || hidden == 0 {
            return Err(Error::Config("gru dimensions must be positive".into()));
        }
        Ok(Self { in_dim, hidden, return_sequences: false })
    }

    pub fn with_sequences(mut self, return_sequences: bool) -> Self {
        self.return_sequences = return_sequences;
        self
    }

    /// Weights are drawn in lexicographic name order (`W`, `W_r`, `W_z`),
    /// each with fan_in = hidden + in_dim. The GRU here has no biases.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<LayerParams> {
        let rows = self.hidden + self.in_dim;
        let mut params = LayerParams::new();
        for name in ["W", "W_r", "W_z"] {
            params.insert(name, init_uniform(&[rows, self.hidden], rows, rng)?)?;
        }
        Ok(params)
    }

    /// One matrix [hidden + in_dim, 2 * hidden] holding the z and r gates.
    fn packed_gate_weights(&self, params: &LayerParams) -> Result<Tensor> {
        let w_z = params.get("W_z")?;
        let w_r = params.get("W_r")?;
        for m in [w_z, w_r] {
            if m.shape() != [self.hidden + self.in_dim, self.hidden] {
                return Err(Error::Shape(format!(
                    "gru gate weight shape {:?} does not match [{}, {}]",
                    m.shape(),
                    self.hidden + self.in_dim,
                    self.hidden
                )));
            }
        }
        pack_cols(&[w_z, w_r])
    }

    pub fn forward(&self, x: &Tensor, params: &LayerParams) -> Result<(Tensor, GruCache)> {
        self.forward_with_state(x, params, None)
    }

    pub fn forward_with_state(
        &self,
        x: &Tensor,
        params: &LayerParams,
        h0: Option<&Tensor>,
    ) -> Result<(Tensor, GruCache)> {
        let [batch, time, d] = x.dims3()?;
        if d != self.in_dim {
            return Err(Error::Shape(format!(
                "gru expects {} input features, got {d}",
                self.in_dim
            )));
        }
        let h = self.hidden;
        let w_zr = self.packed_gate_weights(params)?;
        let w = params.get("W")?;
        let h_init = match h0 {
            Some(s) => {
                check_state("h0", s, batch, h)?;
                s.clone()
            }
            None => Tensor::zeros(&[batch, h]),
        };

        let mut zs = Vec::with_capacity(time);
        let mut candidates_in = Vec::with_capacity(time);
        let mut gates = Vec::with_capacity(time);
        let mut candidates = Vec::with_capacity(time);
        let mut states = Vec::with_capacity(time + 1);
        states.push(h_init);
        let mut outputs = if self.return_sequences {
            Some(Tensor::zeros(&[batch, time, h]))
        } else {
            None
        };

        for t in 0..time {
            let x_t = x.time_slice(t)?;
            let h_prev = states.last().unwrap().clone();
            let zc = concat_cols(&h_prev, &x_t)?;
            let gate = matmul(&zc, &w_zr)?.map(sigmoid);
            // r * h_prev feeds the candidate path.
            let mut rh = Tensor::zeros(&[batch, h]);
            {
                let gd = gate.data();
                let hp = h_prev.data();
                let rd = rh.data_mut();
                for bi in 0..batch {
                    for u in 0..h {
                        rd[bi * h + u] = gd[bi * 2 * h + h + u] * hp[bi * h + u];
                    }
                }
            }
            let cc = concat_cols(&rh, &x_t)?;
            let cand = matmul(&cc, w)?.map(f64::tanh);
            let mut h_t = Tensor::zeros(&[batch, h]);
            {
                let gd = gate.data();
                let hp = h_prev.data();
                let cd = cand.data();
                let hd = h_t.data_mut();
                for bi in 0..batch {
                    for u in 0..h {
                        let z = gd[bi * 2 * h + u];
                        hd[bi * h + u] = (1.0 - z) * hp[bi * h + u] + z * cd[bi * h + u];
                    }
                }
            }
            if let Some(out) = outputs.as_mut() {
                out.set_time_slice(t, &h_t)?;
            }
            zs.push(zc);
            candidates_in.push(cc);
            gates.push(gate);
            candidates.push(cand);
            states.push(h_t);
        }

        let out = match outputs {
            Some(out) => out,
            None => states.last().unwrap().clone(),
        };
        Ok((out, GruCache { zs, candidates_in, gates, candidates, states }))
    }

    pub fn backward(
        &self,
        cache: GruCache,
        params: &LayerParams,
        upstream: &Tensor,
    ) -> Result<(Tensor, LayerParams)> {
        let time = cache.zs.len();
        let [batch, _] = cache.states[0].dims2()?;
        let h = self.hidden;
        let w_zr = self.packed_gate_weights(params)?;
        let w = params.get("W")?;

        let mut d_w_zr = Tensor::zeros(&[h + self.in_dim, 2 * h]);
        let mut d_w = Tensor::zeros(&[h + self.in_dim, h]);
        let mut dx = Tensor::zeros(&[batch, time, self.in_dim]);
        let mut carry = Tensor::zeros(&[batch, h]);

        for t in (0..time).rev() {
            let mut dh = carry;
            if let Some(u) = upstream_at(upstream, self.return_sequences, t, time, batch, h)? {
                dh = dh.add(&u)?;
            }
            let gate = &cache.gates[t];
            let cand = &cache.candidates[t];
            let h_prev = &cache.states[t];

            // Direct paths out of h_t = (1 - z) * h_prev + z * h~.
            let mut dpre_zr = Tensor::zeros(&[batch, 2 * h]);
            let mut dpre_c = Tensor::zeros(&[batch, h]);
            let mut dh_prev = Tensor::zeros(&[batch, h]);
            {
                let gd = gate.data();
                let cd = cand.data();
                let hp = h_prev.data();
                let dhd = dh.data();
                let dzr = dpre_zr.data_mut();
                let dpc = dpre_c.data_mut();
                let dhp = dh_prev.data_mut();
                for bi in 0..batch {
                    for u in 0..h {
                        let z = gd[bi * 2 * h + u];
                        let c = cd[bi * h + u];
                        let g = dhd[bi * h + u];
                        dhp[bi * h + u] = g * (1.0 - z);
                        dzr[bi * 2 * h + u] = g * (c - hp[bi * h + u]) * z * (1.0 - z);
                        dpc[bi * h + u] = g * z * (1.0 - c * c);
                    }
                }
            }

            d_w = d_w.add(&matmul_at(&cache.candidates_in[t], &dpre_c)?)?;
            let dcc = matmul_bt(&dpre_c, w)?;
            let (d_rh, dx_c) = split_cols(&dcc, h)?;
            // r * h_prev splits into a reset-gate path and another h_prev path.
            {
                let gd = gate.data();
                let hp = h_prev.data();
                let drh = d_rh.data();
                let dzr = dpre_zr.data_mut();
                let dhp = dh_prev.data_mut();
                for bi in 0..batch {
                    for u in 0..h {
                        let r = gd[bi * 2 * h + h + u];
                        let g = drh[bi * h + u];
                        dzr[bi * 2 * h + h + u] = g * hp[bi * h + u] * r * (1.0 - r);
                        dhp[bi * h + u] += g * r;
                    }
                }
            }

            d_w_zr = d_w_zr.add(&matmul_at(&cache.zs[t], &dpre_zr)?)?;
            let dzc = matmul_bt(&dpre_zr, &w_zr)?;
            let (dh_prev_gates, dx_g) = split_cols(&dzc, h)?;
            dx.set_time_slice(t, &dx_c.add(&dx_g)?)?;
            carry = dh_prev.add(&dh_prev_gates)?;
        }

        let unpacked = unpack_cols(&d_w_zr, 2)?;
        let mut grads = LayerParams::new();
        grads.insert("W", d_w)?;
        grads.insert("W_r", unpacked[1].clone())?;
        grads.insert("W_z", unpacked[0].clone())?;
        Ok((dx, grads))
    }
}
