use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nn::{embed, lstm_cell, LstmVars};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::Result;

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares an analytic gradient against fourth-order central differences,
/// `(8 (f(x+e) - f(x-e)) - (f(x+2e) - f(x-2e))) / 12e`.
///
/// `f` evaluates the scalar function at a point and returns its value
/// together with the analytic gradient at that point. Returns the maximum
/// [`relative_error`] over all coordinates.
pub fn grad_check<F>(mut f: F, point: &[Tensor], eps: f64) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, analytic) = f(point)?;
    let mut probe: Vec<Tensor> = point.to_vec();
    let mut worst: f64 = 0.0;
    for (pi, p) in point.iter().enumerate() {
        for i in 0..p.len() {
            let x = p.data()[i];
            let mut at = |offset: f64| -> Result<f64> {
                probe[pi].data_mut()[i] = x + offset;
                Ok(f(&probe)?.0)
            };
            let (p2, p1, m1, m2) = (at(2.0 * eps)?, at(eps)?, at(-eps)?, at(-2.0 * eps)?);
            probe[pi].data_mut()[i] = x;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            worst = worst.max(relative_error(analytic[pi].data()[i], numeric));
        }
    }
    Ok(worst)
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_rows(rows, cols, data).expect("sized")
}

/// Gradient check of a tape expression over `inputs`. The output node is
/// reduced to a scalar through a fixed random projection so every element
/// contributes.
pub fn check_expression<F>(inputs: &[Tensor], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Result<Var>,
{
    let eval = |point: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = point.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        let (r, c) = tape.value(out).dims();
        let w = tape.constant(random(&mut ChaCha8Rng::seed_from_u64(99), r, c));
        let weighted = tape.mul(out, w)?;
        let loss = tape.sum(weighted);
        let mut grads = tape.backward(loss);
        let g = vars
            .iter()
            .zip(point)
            .map(|(v, t)| grads.take(*v).unwrap_or_else(|| t.map(|_| 0.0)))
            .collect();
        Ok((tape.value(loss).item(), g))
    };
    grad_check(eval, inputs, eps)
}

/// Step used by [`check_primitives`].
pub const PRIMITIVE_EPS: f64 = 1e-5;

/// Runs [`check_expression`] over every differentiable primitive, the LSTM
/// cell and the embedding lookup on randomized small shapes. Returns the
/// worst relative error per operation name.
pub fn check_primitives(seed: u64, trials: usize) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(slot) => slot.1 = slot.1.max(err),
        None => worst.push((name, err)),
    };
    let eps = PRIMITIVE_EPS;
    for trial in 0..trials {
        let m = 1 + trial % 3;
        let k = 2 + trial % 2;
        let n = 1 + (trial * 7) % 4;
        let a = random(&mut rng, m, k);
        let b = random(&mut rng, k, n);
        let c = random(&mut rng, m, k);
        let row = random(&mut rng, 1, k);
        let ac = [a.clone(), c.clone()];
        let one = [a.clone()];
        record("matmul", check_expression(&[a.clone(), b.clone()], eps, |t, v| t.matmul(v[0], v[1]))?);
        record("add", check_expression(&ac, eps, |t, v| t.add(v[0], v[1]))?);
        record("sub", check_expression(&ac, eps, |t, v| t.sub(v[0], v[1]))?);
        record("mul", check_expression(&ac, eps, |t, v| t.mul(v[0], v[1]))?);
        record("add_row", check_expression(&[a.clone(), row.clone()], eps, |t, v| t.add_row(v[0], v[1]))?);
        record("scale", check_expression(&one, eps, |t, v| Ok(t.scale(v[0], -2.5)))?);
        record("tanh", check_expression(&one, eps, |t, v| Ok(t.tanh(v[0])))?);
        record("sigmoid", check_expression(&one, eps, |t, v| Ok(t.sigmoid(v[0])))?);
        record("concat_cols", check_expression(&ac, eps, |t, v| t.concat_cols(&[v[0], v[1], v[0]]))?);
        record("concat_rows", check_expression(&ac, eps, |t, v| t.concat_rows(&[v[1], v[0]]))?);
        record("slice_cols", check_expression(&one, eps, |t, v| t.slice_cols(v[0], 1, k - 1))?);
        record("gather_rows", check_expression(&one, eps, |t, v| t.gather_rows(v[0], &[0, m - 1, 0]))?);
        record(
            "select_rows",
            check_expression(&ac, eps, |t, v| {
                let mask: Vec<bool> = (0..m).map(|i| i % 2 == 0).collect();
                t.select_rows(&mask, v[0], v[1])
            })?,
        );
        record(
            "max_pool",
            check_expression(&ac, eps, |t, v| {
                let lengths: Vec<usize> = (0..m).map(|i| 1 + i % 2).collect();
                t.max_pool(&[v[0], v[1]], &lengths)
            })?,
        );
        record(
            "softmax_xent",
            check_expression(&one, eps, |t, v| {
                let targets: Vec<usize> = (0..m).map(|i| i % k).collect();
                let weights: Vec<f64> = (0..m).map(|i| 1.0 + i as f64).collect();
                t.softmax_xent(v[0], &targets, &weights)
            })?,
        );
        record("sum", check_expression(&one, eps, |t, v| Ok(t.sum(v[0])))?);
        record("embed", check_expression(&[random(&mut rng, 5, k)], eps, |t, v| embed(t, v[0], trial % 5))?);
        let (input, hidden) = (1 + trial % 4, 1 + (trial + 1) % 4);
        let lstm_inputs = [
            random(&mut rng, m, input),
            random(&mut rng, m, hidden),
            random(&mut rng, m, hidden),
            random(&mut rng, input + hidden, 4 * hidden),
            random(&mut rng, 1, 4 * hidden),
        ];
        for output in 0..2 {
            let err = check_expression(&lstm_inputs, eps, |t, v| {
                let (h, c) = lstm_cell(t, v[0], v[1], v[2], LstmVars { w: v[3], b: v[4], hidden })?;
                Ok(if output == 0 { h } else { c })
            })?;
            record("lstm_cell", err);
        }
    }
    Ok(worst)
}
