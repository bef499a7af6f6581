//! Single-step computations of the recurrent kernels, on graph variables.

use ktbench_autodiff::{Graph, Var};

use crate::error::Result;

/// `h_t = tanh(h_prev W_h + x_t W_x + b)`
pub fn vanilla_step(g: &mut Graph, x: Var, h: Var, w_x: Var, w_h: Var, b: Var) -> Result<Var> {
    let xs = g.matmul(x, w_x)?;
    let hs = g.matmul(h, w_h)?;
    let z = g.add(xs, hs)?;
    let z = g.add_row(z, b)?;
    Ok(g.tanh(z))
}

/// Input weight, recurrent weight and bias of one LSTM gate.
#[derive(Debug, Clone, Copy)]
pub struct GateWeights {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub input: GateWeights,
    pub forget: GateWeights,
    pub output: GateWeights,
    pub candidate: GateWeights,
}

fn gate(g: &mut Graph, x: Var, h: Var, w: GateWeights) -> Result<Var> {
    let xw = g.matmul(x, w.w)?;
    let hu = g.matmul(h, w.u)?;
    let z = g.add(xw, hu)?;
    Ok(g.add_row(z, w.b)?)
}

/// One LSTM step returning `(h_t, m_t)`. With `literal` the output gate
/// uses tanh and the candidate uses the sigmoid.
pub fn lstm_step(g: &mut Graph, x: Var, h: Var, m: Var, w: &LstmWeights, literal: bool) -> Result<(Var, Var)> {
    let zi = gate(g, x, h, w.input)?;
    let zf = gate(g, x, h, w.forget)?;
    let zo = gate(g, x, h, w.output)?;
    let zm = gate(g, x, h, w.candidate)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let (o, cand) = if literal {
        (g.tanh(zo), g.sigmoid(zm))
    } else {
        (g.sigmoid(zo), g.tanh(zm))
    };
    let keep = g.mul(f, m)?;
    let write = g.mul(i, cand)?;
    let m_next = g.add(keep, write)?;
    let squashed = g.tanh(m_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, m_next))
}

/// Read value `r = sum_i w(i) M(i)`. `mem` stacks the `slots` memory rows
/// of each sequence, `(B * slots) x V`; `w` is `B x slots`.
pub fn dkvmn_read(g: &mut Graph, mem: Var, w: Var, slots: usize) -> Result<Var> {
    let rows = g.value(w).rows();
    let wf = g.reshape(w, rows * slots, 1)?;
    let weighted = g.mul_col(mem, wf)?;
    Ok(g.sum_groups(weighted, slots)?)
}

/// Memory update `M(i) <- a + M(i) (1 - w(i) e)`, or with the add term
/// weighted by `w(i)` when `weighted_add` is set. `e` and `a` are `B x V`.
pub fn dkvmn_write(g: &mut Graph, mem: Var, w: Var, e: Var, a: Var, slots: usize, weighted_add: bool) -> Result<Var> {
    let rows = g.value(w).rows();
    let wf = g.reshape(w, rows * slots, 1)?;
    let e_rows = g.repeat_rows(e, slots)?;
    let erase = g.mul_col(e_rows, wf)?;
    let keep = g.one_minus(erase);
    let kept = g.mul(mem, keep)?;
    let mut add = g.repeat_rows(a, slots)?;
    if weighted_add {
        add = g.mul_col(add, wf)?;
    }
    Ok(g.add(add, kept)?)
}
