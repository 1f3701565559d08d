use crate::autodiff::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Graph handles for one LSTM direction: four gate weight matrices of shape
/// `d x (d_in + d)` acting on `[x; h]`, plus their `d x 1` biases.
#[derive(Clone, Copy, Debug)]
pub struct LstmGates {
    pub w_i: NodeId,
    pub w_f: NodeId,
    pub w_o: NodeId,
    pub w_g: NodeId,
    pub b_i: NodeId,
    pub b_f: NodeId,
    pub b_o: NodeId,
    pub b_g: NodeId,
}

/// Output of [`bilstm_encode`].
pub struct BiLstmOut {
    /// Per-position `[fwd_k; bwd_k]` concatenations, each `2d x 1`.
    pub states: Vec<NodeId>,
    /// Last forward hidden state, `d x 1`.
    pub fwd_last: NodeId,
    /// First backward hidden state (the backward pass seen at position 0).
    pub bwd_first: NodeId,
}

/// One step of a standard LSTM cell:
/// `i,f,o = sigmoid(W [x;h] + b)`, `g = tanh(W_g [x;h] + b_g)`,
/// `c' = f*c + i*g`, `h' = o * tanh(c')`.
pub fn lstm_cell(
    tape: &mut Tape,
    gates: &LstmGates,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId)> {
    let d = tape.value(h).rows();
    let d_in = tape.value(x).rows();
    check_vec(tape, x, d_in, "lstm_cell x")?;
    check_vec(tape, h, d, "lstm_cell h")?;
    check_vec(tape, c, d, "lstm_cell c")?;
    for (w, name) in [
        (gates.w_i, "w_i"),
        (gates.w_f, "w_f"),
        (gates.w_o, "w_o"),
        (gates.w_g, "w_g"),
    ] {
        let shape = tape.value(w).shape();
        if shape != (d, d_in + d) {
            return Err(Error::ShapeMismatch {
                context: format!("lstm_cell {name}"),
                expected: format!("{}x{}", d, d_in + d),
                got: format!("{}x{}", shape.0, shape.1),
            });
        }
    }

    let xh = tape.concat_rows(&[x, h]);
    let zi = affine(tape, gates.w_i, xh, gates.b_i);
    let zf = affine(tape, gates.w_f, xh, gates.b_f);
    let zo = affine(tape, gates.w_o, xh, gates.b_o);
    let zg = affine(tape, gates.w_g, xh, gates.b_g);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let o = tape.sigmoid(zo);
    let g = tape.tanh(zg);

    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_next = tape.add(fc, ig);
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc);
    Ok((h_next, c_next))
}

/// Run forward and backward LSTM passes over a sequence of column vectors and
/// concatenate the two states at each position.
pub fn bilstm_encode(
    tape: &mut Tape,
    fwd: &LstmGates,
    bwd: &LstmGates,
    seq: &[NodeId],
) -> Result<BiLstmOut> {
    if seq.is_empty() {
        return Err(Error::EmptySequence("bilstm_encode"));
    }
    let d = tape.value(fwd.b_i).rows();

    let fwd_states = run_direction(tape, fwd, seq.iter().copied(), d)?;
    let bwd_states_rev = run_direction(tape, bwd, seq.iter().rev().copied(), d)?;
    let bwd_states: Vec<NodeId> = bwd_states_rev.into_iter().rev().collect();

    let states = fwd_states
        .iter()
        .zip(&bwd_states)
        .map(|(&f, &b)| tape.concat_rows(&[f, b]))
        .collect();
    Ok(BiLstmOut {
        states,
        fwd_last: *fwd_states.last().unwrap(),
        bwd_first: bwd_states[0],
    })
}

fn run_direction(
    tape: &mut Tape,
    gates: &LstmGates,
    seq: impl Iterator<Item = NodeId>,
    d: usize,
) -> Result<Vec<NodeId>> {
    let zeros = crate::autodiff::tensor::Tensor::zeros(d, 1);
    let mut h = tape.constant(zeros.clone());
    let mut c = tape.constant(zeros);
    let mut states = Vec::new();
    for x in seq {
        let (h2, c2) = lstm_cell(tape, gates, x, h, c)?;
        h = h2;
        c = c2;
        states.push(h);
    }
    Ok(states)
}

fn affine(tape: &mut Tape, w: NodeId, x: NodeId, b: NodeId) -> NodeId {
    let wx = tape.matmul(w, x);
    tape.add(wx, b)
}

fn check_vec(tape: &Tape, id: NodeId, rows: usize, context: &str) -> Result<()> {
    let shape = tape.value(id).shape();
    if shape != (rows, 1) {
        return Err(Error::ShapeMismatch {
            context: context.into(),
            expected: format!("{rows}x1"),
            got: format!("{}x{}", shape.0, shape.1),
        });
    }
    Ok(())
}
