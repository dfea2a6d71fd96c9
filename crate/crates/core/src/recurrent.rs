//! Recurrent cells (plain RNN, peephole LSTM, GRU), bidirectional readout and
//! inverted dropout.
//!
//! Weight matrices are stored input-major, `[in × out]`, so a batch of row
//! vectors `x: [B × in]` is multiplied on the left (`x · W`). A matrix written
//! `W: [H × D]` in column-vector notation is therefore stored here as `[D × H]`.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{glorot, param_struct, trainable_full, trainable_zeros};

param_struct! {
    /// `h' = tanh(h·U + x·W_x + b)`
    pub struct RnnCellParams {
        /// `[H × H]`
        pub u,
        /// `[D × H]`
        pub w_x,
        /// `[H]`
        pub b,
    }
}

param_struct! {
    /// Peephole LSTM. The `w_c*` peepholes are `[H × H]` matrices, or `[1 × H]`
    /// vectors applied element-wise when [`Peephole::Diagonal`] is selected.
    pub struct LstmCellParams {
        pub w_xi,
        pub w_xf,
        pub w_xc,
        pub w_xo,
        pub w_hi,
        pub w_hf,
        pub w_hc,
        pub w_ho,
        pub w_ci,
        pub w_cf,
        pub w_co,
        pub b_i,
        pub b_f,
        pub b_c,
        pub b_o,
    }
}

param_struct! {
    /// Bias-free GRU as in its original formulation.
    pub struct GruCellParams {
        pub w_z,
        pub w_r,
        pub w_h,
        pub u_z,
        pub u_r,
        pub u,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Rnn, CellKind::Gru, CellKind::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Some(CellKind::Rnn),
            "gru" => Some(CellKind::Gru),
            "lstm" => Some(CellKind::Lstm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Peephole {
    #[default]
    Full,
    Diagonal,
}

impl Peephole {
    pub fn as_str(self) -> &'static str {
        match self {
            Peephole::Full => "full",
            Peephole::Diagonal => "diagonal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Peephole::Full),
            "diagonal" => Some(Peephole::Diagonal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellParams<T = Tensor> {
    Rnn(RnnCellParams<T>),
    Gru(GruCellParams<T>),
    Lstm(LstmCellParams<T>),
}

impl<T> CellParams<T> {
    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Rnn(_) => CellKind::Rnn,
            CellParams::Gru(_) => CellKind::Gru,
            CellParams::Lstm(_) => CellKind::Lstm,
        }
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> CellParams<U> {
        match self {
            CellParams::Rnn(p) => CellParams::Rnn(p.map(f)),
            CellParams::Gru(p) => CellParams::Gru(p.map(f)),
            CellParams::Lstm(p) => CellParams::Lstm(p.map(f)),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &T)) {
        match self {
            CellParams::Rnn(p) => p.visit(prefix, f),
            CellParams::Gru(p) => p.visit(prefix, f),
            CellParams::Lstm(p) => p.visit(prefix, f),
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        match self {
            CellParams::Rnn(p) => p.visit_mut(prefix, f),
            CellParams::Gru(p) => p.visit_mut(prefix, f),
            CellParams::Lstm(p) => p.visit_mut(prefix, f),
        }
    }
}

impl CellParams<Tensor> {
    /// Glorot-uniform weights, zero biases, LSTM forget bias 1.
    pub fn init(kind: CellKind, input: usize, hidden: usize, peephole: Peephole, rng: &mut impl Rng) -> Self {
        let (d, h) = (input, hidden);
        let wx = |rng: &mut _| glorot(&[d, h], d, h, rng);
        match kind {
            CellKind::Rnn => CellParams::Rnn(RnnCellParams {
                u: glorot(&[h, h], h, h, rng),
                w_x: wx(rng),
                b: trainable_zeros(&[h]),
            }),
            CellKind::Gru => CellParams::Gru(GruCellParams {
                w_z: wx(rng),
                w_r: wx(rng),
                w_h: wx(rng),
                u_z: glorot(&[h, h], h, h, rng),
                u_r: glorot(&[h, h], h, h, rng),
                u: glorot(&[h, h], h, h, rng),
            }),
            CellKind::Lstm => {
                let peep = |rng: &mut _| match peephole {
                    Peephole::Full => glorot(&[h, h], h, h, rng),
                    Peephole::Diagonal => glorot(&[1, h], h, h, rng),
                };
                CellParams::Lstm(LstmCellParams {
                    w_xi: wx(rng),
                    w_xf: wx(rng),
                    w_xc: wx(rng),
                    w_xo: wx(rng),
                    w_hi: glorot(&[h, h], h, h, rng),
                    w_hf: glorot(&[h, h], h, h, rng),
                    w_hc: glorot(&[h, h], h, h, rng),
                    w_ho: glorot(&[h, h], h, h, rng),
                    w_ci: peep(rng),
                    w_cf: peep(rng),
                    w_co: peep(rng),
                    b_i: trainable_zeros(&[h]),
                    b_f: trainable_full(&[h], 1.0),
                    b_c: trainable_zeros(&[h]),
                    b_o: trainable_zeros(&[h]),
                })
            }
        }
    }
}

/// Recurrent state for a batch: `h: [B × H]`, plus `c: [B × H]` for LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepState {
    pub h: Var,
    pub c: Option<Var>,
}

impl StepState {
    pub fn zeros(tape: &mut Tape, kind: CellKind, batch: usize, hidden: usize) -> Self {
        let h = tape.constant(Tensor::zeros(&[batch, hidden]));
        let c = (kind == CellKind::Lstm).then(|| tape.constant(Tensor::zeros(&[batch, hidden])));
        Self { h, c }
    }
}

fn hidden_size(tape: &Tape, h: Var) -> usize {
    tape.shape(h)[1]
}

/// `x·W_x + h·U`
fn project(tape: &mut Tape, x: Var, w_x: Var, h: Var, u: Var) -> Result<Var> {
    let a = tape.matmul(x, w_x)?;
    let b = tape.matmul(h, u)?;
    tape.add(a, b)
}

/// `c·W_c` for a full peephole, `c ⊙ w_c` for a diagonal one.
fn peephole(tape: &mut Tape, c: Var, w: Var) -> Result<Var> {
    let (rows, width) = (tape.shape(w)[0], tape.shape(w)[1]);
    if rows == 1 && width == hidden_size(tape, c) {
        let batch = tape.shape(c)[0];
        let ones = tape.constant(Tensor::full(&[batch, 1], 1.0));
        let tiled = tape.matmul(ones, w)?;
        tape.mul(c, tiled)
    } else {
        tape.matmul(c, w)
    }
}

pub fn rnn_step(tape: &mut Tape, x: Var, state: StepState, p: &RnnCellParams<Var>) -> Result<StepState> {
    let pre = project(tape, x, p.w_x, state.h, p.u)?;
    let pre = tape.add_row_bias(pre, p.b)?;
    Ok(StepState {
        h: tape.tanh(pre)?,
        c: None,
    })
}

/// One peephole-LSTM step. The output gate peeks at the *updated* cell.
pub fn lstm_step(tape: &mut Tape, x: Var, state: StepState, p: &LstmCellParams<Var>) -> Result<StepState> {
    let c_prev = state
        .c
        .ok_or_else(|| Error::invalid("lstm_step", "state has no memory cell"))?;
    let h_prev = state.h;

    let gate = |tape: &mut Tape, w_x, w_h, cell, w_c, b| -> Result<Var> {
        let pre = project(tape, x, w_x, h_prev, w_h)?;
        let peek = peephole(tape, cell, w_c)?;
        let pre = tape.add(pre, peek)?;
        let pre = tape.add_row_bias(pre, b)?;
        tape.sigmoid(pre)
    };

    let i = gate(tape, p.w_xi, p.w_hi, c_prev, p.w_ci, p.b_i)?;
    let f = gate(tape, p.w_xf, p.w_hf, c_prev, p.w_cf, p.b_f)?;
    let cand = project(tape, x, p.w_xc, h_prev, p.w_hc)?;
    let cand = tape.add_row_bias(cand, p.b_c)?;
    let cand = tape.tanh(cand)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, cand)?;
    let c = tape.add(keep, write)?;
    let o = gate(tape, p.w_xo, p.w_ho, c, p.w_co, p.b_o)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;
    Ok(StepState { h, c: Some(c) })
}

/// One GRU step, `h' = (1 - z) ⊙ h + z ⊙ h̃`.
pub fn gru_step(tape: &mut Tape, x: Var, state: StepState, p: &GruCellParams<Var>) -> Result<StepState> {
    let h = state.h;
    let z = project(tape, x, p.w_z, h, p.u_z)?;
    let z = tape.sigmoid(z)?;
    let r = project(tape, x, p.w_r, h, p.u_r)?;
    let r = tape.sigmoid(r)?;
    let gated = tape.mul(r, h)?;
    let cand = project(tape, x, p.w_h, gated, p.u)?;
    let cand = tape.tanh(cand)?;
    let one_minus_z = tape.affine(z, -1.0, 1.0)?;
    let keep = tape.mul(one_minus_z, h)?;
    let write = tape.mul(z, cand)?;
    Ok(StepState {
        h: tape.add(keep, write)?,
        c: None,
    })
}

pub fn cell_step(tape: &mut Tape, x: Var, state: StepState, p: &CellParams<Var>) -> Result<StepState> {
    match p {
        CellParams::Rnn(p) => rnn_step(tape, x, state, p),
        CellParams::Gru(p) => gru_step(tape, x, state, p),
        CellParams::Lstm(p) => lstm_step(tape, x, state, p),
    }
}

fn cell_hidden(tape: &Tape, p: &CellParams<Var>) -> usize {
    let w = match p {
        CellParams::Rnn(p) => p.w_x,
        CellParams::Gru(p) => p.w_z,
        CellParams::Lstm(p) => p.w_xi,
    };
    tape.shape(w)[1]
}

/// Runs one direction over a padded batch and returns the state after each
/// sequence's last valid step (`[B × H]`). `steps[t]` is `[B × D]`; example `b`
/// is valid for `t < lengths[b]`. Padded steps never touch the state, so in
/// reverse mode every sequence effectively starts at its own last word.
pub fn run_direction(
    tape: &mut Tape,
    steps: &[Var],
    lengths: &[usize],
    p: &CellParams<Var>,
    reverse: bool,
) -> Result<Var> {
    let batch = lengths.len();
    if steps.is_empty() || lengths.iter().any(|&l| l == 0 || l > steps.len()) {
        return Err(Error::invalid(
            "run_bidirectional",
            format!("lengths {lengths:?} need 1..={} valid steps each", steps.len()),
        ));
    }
    let hidden = cell_hidden(tape, p);
    let mut state = StepState::zeros(tape, p.kind(), batch, hidden);
    let order: Vec<usize> = if reverse {
        (0..steps.len()).rev().collect()
    } else {
        (0..steps.len()).collect()
    };
    for t in order {
        let next = cell_step(tape, steps[t], state, p)?;
        let valid: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
        state = if valid.iter().all(|&v| v) {
            next
        } else {
            let keep_new = Tensor::from_fn(&[batch, hidden], |i| f64::from(u8::from(valid[i / hidden])));
            let keep_old = Tensor::from_fn(&[batch, hidden], |i| f64::from(u8::from(!valid[i / hidden])));
            let keep_new = tape.constant(keep_new);
            let keep_old = tape.constant(keep_old);
            let blend = |tape: &mut Tape, new: Var, old: Var| -> Result<Var> {
                let a = tape.mul(keep_new, new)?;
                let b = tape.mul(keep_old, old)?;
                tape.add(a, b)
            };
            StepState {
                h: blend(tape, next.h, state.h)?,
                c: match (next.c, state.c) {
                    (Some(n), Some(o)) => Some(blend(tape, n, o)?),
                    _ => None,
                },
            }
        };
    }
    Ok(state.h)
}

/// `concat(h_fwd at the last valid step, h_bwd at the first step)`: `[B × 2H]`.
pub fn run_bidirectional(
    tape: &mut Tape,
    steps: &[Var],
    lengths: &[usize],
    forward: &CellParams<Var>,
    backward: &CellParams<Var>,
) -> Result<Var> {
    let fwd = run_direction(tape, steps, lengths, forward, false)?;
    let bwd = run_direction(tape, steps, lengths, backward, true)?;
    tape.concat(&[fwd, bwd], 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: in training, zero each component with probability `rate`
/// and scale survivors by `1/(1-rate)`. Identity in eval mode or at rate 0.
pub fn apply_dropout(tape: &mut Tape, x: Var, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid("dropout", format!("rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let scale = 1.0 / (1.0 - rate);
    let shape = tape.shape(x).to_vec();
    let mask = Tensor::from_fn(&shape, |_| if rng.gen::<f64>() < rate { 0.0 } else { scale });
    let mask = tape.constant(mask);
    tape.mul(x, mask)
}
