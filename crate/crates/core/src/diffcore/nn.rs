//! Recurrent and dense building blocks composed from tape primitives.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore, SeededRng};
use crate::error::{Error, Result};

/// Fully connected layer `y = x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    weight: Var,
    bias: Var,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.add_uniform(format!("{name}.weight"), &[input, output], input, rng)?,
            bias: store.add_uniform(format!("{name}.bias"), &[output], input, rng)?,
            input,
            output,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> LinearVars {
        LinearVars {
            weight: g.param(store, self.weight),
            bias: g.param(store, self.bias),
        }
    }
}

impl LinearVars {
    pub fn weight(&self) -> Var {
        self.weight
    }

    pub fn bias(&self) -> Var {
        self.bias
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let xw = g.matmul(x, self.weight)?;
        g.add(xw, self.bias)
    }
}

/// Parameters of a single LSTM cell with gate order input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    w_input: Var,
    w_hidden: Var,
    bias: Var,
    input: usize,
    hidden: usize,
}

impl LstmParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let gates = 4 * hidden;
        Ok(Self {
            w_input: store.add_uniform(format!("{name}.w_input"), &[input, gates], input, rng)?,
            w_hidden: store.add_uniform(
                format!("{name}.w_hidden"),
                &[hidden, gates],
                hidden,
                rng,
            )?,
            bias: store.add_uniform(format!("{name}.bias"), &[gates], hidden, rng)?,
            input,
            hidden,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> LstmVars {
        LstmVars {
            w_input: g.param(store, self.w_input),
            w_hidden: g.param(store, self.w_hidden),
            bias: g.param(store, self.bias),
            input: self.input,
            hidden: self.hidden,
        }
    }
}

impl LstmVars {
    pub fn hidden(&self) -> usize {
        self.hidden
    }
}

/// One LSTM step: returns `(h', c')`.
pub fn lstm_cell(g: &mut Graph, x: Var, h: Var, c: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let hsz = p.hidden;
    if g.shape(x) != [p.input] {
        return Err(Error::Dimension {
            op: "lstm_cell input",
            left: vec![p.input],
            right: g.shape(x).to_vec(),
        });
    }
    for state in [h, c] {
        if g.shape(state) != [hsz] {
            return Err(Error::Dimension {
                op: "lstm_cell state",
                left: vec![hsz],
                right: g.shape(state).to_vec(),
            });
        }
    }
    let xi = g.matmul(x, p.w_input)?;
    let hh = g.matmul(h, p.w_hidden)?;
    let pre = g.add_n(&[xi, hh, p.bias])?;
    let i_pre = g.slice(pre, 0, hsz)?;
    let f_pre = g.slice(pre, hsz, hsz)?;
    let g_pre = g.slice(pre, 2 * hsz, hsz)?;
    let o_pre = g.slice(pre, 3 * hsz, hsz)?;
    let i_gate = g.sigmoid(i_pre)?;
    let f_gate = g.sigmoid(f_pre)?;
    let cand = g.tanh(g_pre)?;
    let o_gate = g.sigmoid(o_pre)?;
    let keep = g.mul(f_gate, c)?;
    let write = g.mul(i_gate, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next)?;
    let h_next = g.mul(o_gate, squashed)?;
    Ok((h_next, c_next))
}

/// Runs a cell over `inputs` from zero (or given) initial state, returning
/// every hidden state and the final `(h, c)`.
pub fn lstm_unroll(
    g: &mut Graph,
    inputs: &[Var],
    p: &LstmVars,
    init: Option<(Var, Var)>,
) -> Result<(Vec<Var>, Var, Var)> {
    let (mut h, mut c) = match init {
        Some(state) => state,
        None => {
            let zero = g.constant(super::Tensor::zeros(&[p.hidden]));
            (zero, zero)
        }
    };
    let mut outputs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        (h, c) = lstm_cell(g, x, h, c, p)?;
        outputs.push(h);
    }
    Ok((outputs, h, c))
}

/// A forward and a backward LSTM over the same sequence.
#[derive(Clone, Debug)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmVars {
    pub forward: LstmVars,
    pub backward: LstmVars,
}

impl BiLstmParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            forward: LstmParams::new(store, &format!("{name}.fwd"), input, hidden, rng)?,
            backward: LstmParams::new(store, &format!("{name}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BiLstmVars {
        BiLstmVars {
            forward: self.forward.bind(g, store),
            backward: self.backward.bind(g, store),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BiLstmOutput {
    /// Per step `concat(h_fwd_t, h_bwd_t)`, in input order.
    pub steps: Vec<Var>,
    pub h_fwd: Var,
    pub c_fwd: Var,
    pub h_bwd: Var,
    pub c_bwd: Var,
}

impl BiLstmOutput {
    /// Per-step outputs as a `[T, 2H]` matrix.
    pub fn stacked(&self, g: &mut Graph) -> Result<Var> {
        g.stack(&self.steps)
    }

    /// `concat(h_fwd, c_fwd, h_bwd, c_bwd)`.
    pub fn summary(&self, g: &mut Graph) -> Result<Var> {
        g.concat(&[self.h_fwd, self.c_fwd, self.h_bwd, self.c_bwd])
    }
}

/// Bidirectional pass: the forward cell reads `t = 1..T`, the backward cell
/// reads `t = T..1`.
pub fn bilstm(g: &mut Graph, inputs: &[Var], p: &BiLstmVars) -> Result<BiLstmOutput> {
    if inputs.is_empty() {
        return Err(Error::Domain("bilstm over an empty sequence".into()));
    }
    let (fwd, h_fwd, c_fwd) = lstm_unroll(g, inputs, &p.forward, None)?;
    let reversed: Vec<Var> = inputs.iter().rev().copied().collect();
    let (mut bwd, h_bwd, c_bwd) = lstm_unroll(g, &reversed, &p.backward, None)?;
    bwd.reverse();
    let steps = fwd
        .into_iter()
        .zip(bwd)
        .map(|(f, b)| g.concat(&[f, b]))
        .collect::<Result<_>>()?;
    Ok(BiLstmOutput {
        steps,
        h_fwd,
        c_fwd,
        h_bwd,
        c_bwd,
    })
}

/// Splits the rows of a `[T, d]` matrix into per-step vectors.
pub fn rows(g: &mut Graph, m: Var) -> Result<Vec<Var>> {
    let n = match g.shape(m) {
        [n, _] => *n,
        other => return Err(Error::Domain(format!("expected a matrix, got {other:?}"))),
    };
    (0..n).map(|i| g.row(m, i)).collect()
}
