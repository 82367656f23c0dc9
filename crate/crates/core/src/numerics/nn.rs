use super::tape::{Tape, Var};
use crate::{Error, Result};

/// Weights of one LSTM bound to a tape.
///
/// `w` is `(input + hidden) x 4·hidden` acting on `[x, h]`, `b` is the
/// `1 x 4·hidden` bias. Gate blocks are ordered input, forget, candidate,
/// output.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w: Var,
    pub b: Var,
    pub hidden: usize,
}

/// One LSTM step over a batch of rows. Returns the new `(h, c)`.
pub fn lstm_cell(tape: &mut Tape<'_>, x: Var, h_prev: Var, c_prev: Var, lstm: LstmVars) -> Result<(Var, Var)> {
    let hd = lstm.hidden;
    let (in_rows, in_cols) = tape.value(x).dims();
    let w_rows = tape.value(lstm.w).rows();
    if tape.value(h_prev).dims() != (in_rows, hd) || tape.value(c_prev).dims() != (in_rows, hd) || w_rows != in_cols + hd {
        return Err(Error::Shape {
            op: "lstm_cell",
            detail: alloc::format!(
                "x {:?}, h {:?}, c {:?} against weights {:?} with hidden {hd}",
                tape.value(x).dims(),
                tape.value(h_prev).dims(),
                tape.value(c_prev).dims(),
                tape.value(lstm.w).dims()
            ),
        });
    }
    let xh = tape.concat_cols(&[x, h_prev])?;
    let z = tape.matmul(xh, lstm.w)?;
    let z = tape.add_row(z, lstm.b)?;
    let i = tape.slice_cols(z, 0, hd)?;
    let i = tape.sigmoid(i);
    let f = tape.slice_cols(z, hd, hd)?;
    let f = tape.sigmoid(f);
    let g = tape.slice_cols(z, 2 * hd, hd)?;
    let g = tape.tanh(g);
    let o = tape.slice_cols(z, 3 * hd, hd)?;
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Embedding lookup of a single row.
pub fn embed(tape: &mut Tape<'_>, table: Var, index: usize) -> Result<Var> {
    tape.gather_rows(table, &[index])
}

/// `-log softmax(logits)[target]` for a single row of logits, as a scalar.
pub fn softmax_xent(tape: &mut Tape<'_>, logits: Var, target: usize) -> Result<Var> {
    let rows = tape.value(logits).rows();
    if rows != 1 {
        return Err(Error::Shape {
            op: "softmax_xent",
            detail: alloc::format!("expected a single row of logits, got {rows}"),
        });
    }
    let loss = tape.softmax_xent(logits, &[target], &[1.0])?;
    Ok(tape.sum(loss))
}
