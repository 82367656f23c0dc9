use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::Result;

const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_rows(rows, cols, data).unwrap()
}

fn check<F>(inputs: Vec<Tensor>, build: F) -> f64
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Result<Var>,
{
    check_expression(&inputs, 1e-5, build).unwrap()
}

#[test]
fn primitives_pass_gradient_check() {
    let report = check_primitives(1, 6).unwrap();
    assert_eq!(report.len(), 18);
    for (name, err) in report {
        assert!(err < TOL, "{name} relative error {err}");
    }
}

#[test]
fn lstm_cell_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (input, hidden, rows) in [(1, 1, 1), (3, 2, 2), (4, 4, 1), (2, 3, 3)] {
        let inputs = vec![
            random(&mut rng, rows, input),
            random(&mut rng, rows, hidden),
            random(&mut rng, rows, hidden),
            random(&mut rng, input + hidden, 4 * hidden),
            random(&mut rng, 1, 4 * hidden),
        ];
        for output in 0..2 {
            let err = check(inputs.clone(), |t, v| {
                let (h, c) = lstm_cell(t, v[0], v[1], v[2], LstmVars { w: v[3], b: v[4], hidden })?;
                Ok(if output == 0 { h } else { c })
            });
            assert!(err < TOL, "lstm ({input},{hidden},{rows}) output {output}: {err}");
        }
    }
}

#[test]
fn square_via_tape() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0));
    let y = tape.mul(x, x).unwrap();
    let grads = tape.backward(y);
    assert_eq!(grads.get(x).unwrap().item(), 6.0);
}

#[test]
fn duplicated_subexpression_sums_branches() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(0.7));
    let t = tape.tanh(x);
    let a = tape.scale(t, 2.0);
    let b = tape.mul(t, t).unwrap();
    let y = tape.add(a, b).unwrap();
    let grads = tape.backward(y);
    let th = 0.7f64.tanh();
    let expected = (2.0 + 2.0 * th) * (1.0 - th * th);
    assert!((grads.get(x).unwrap().item() - expected).abs() < 1e-14);
}

#[test]
fn activation_values() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::scalar(0.0));
    let t = tape.tanh(z);
    let s = tape.sigmoid(z);
    assert_eq!(tape.value(t).item(), 0.0);
    assert_eq!(tape.value(s).item(), 0.5);
}

#[test]
fn softmax_xent_values() {
    let mut tape = Tape::new();
    let uniform = tape.constant(Tensor::row_vector(vec![0.0, 0.0]));
    let l = softmax_xent(&mut tape, uniform, 0).unwrap();
    assert!((tape.value(l).item() - core::f64::consts::LN_2).abs() < 1e-15);
    let peaked = tape.constant(Tensor::row_vector(vec![1000.0, 0.0]));
    let l = softmax_xent(&mut tape, peaked, 0).unwrap();
    let v = tape.value(l).item();
    assert!(v.is_finite() && v.abs() < 1e-12);
    let l = softmax_xent(&mut tape, peaked, 1).unwrap();
    assert!((tape.value(l).item() - 1000.0).abs() < 1e-9);
    assert!(matches!(softmax_xent(&mut tape, peaked, 2), Err(crate::Error::IndexOutOfRange { .. })));
}

#[test]
fn softmax_xent_gradient_is_probs_minus_onehot() {
    let mut tape = Tape::new();
    let logits = tape.leaf(Tensor::row_vector(vec![0.5, -1.0, 2.0]));
    let l = softmax_xent(&mut tape, logits, 1).unwrap();
    let grads = tape.backward(l);
    let z: f64 = [0.5f64, -1.0, 2.0].iter().map(|x| x.exp()).sum();
    let expected = [0.5f64.exp() / z, (-1.0f64).exp() / z - 1.0, 2.0f64.exp() / z];
    for (g, e) in grads.get(logits).unwrap().data().iter().zip(expected) {
        assert!((g - e).abs() < 1e-12);
    }
}

#[test]
fn embedding_gradient_touches_one_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let table = random(&mut rng, 5, 3);
    let mut tape = Tape::new();
    let t = tape.leaf(table.clone());
    let e = embed(&mut tape, t, 2).unwrap();
    assert_eq!(tape.value(e).data(), table.row(2));
    let w = tape.constant(Tensor::row_vector(vec![1.0, -2.0, 0.5]));
    let y = tape.mul(e, w).unwrap();
    let y = tape.sum(y);
    let grads = tape.backward(y);
    let g = grads.get(t).unwrap();
    for r in 0..5 {
        if r == 2 {
            assert_eq!(g.row(r), [1.0, -2.0, 0.5]);
        } else {
            assert!(g.row(r).iter().all(|&x| x == 0.0));
        }
    }
    assert!(embed(&mut tape, t, 5).is_err());
}

#[test]
fn zero_lstm_is_a_fixed_point() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::row_vector(vec![0.3, -0.8]));
    let h = tape.constant(Tensor::zeros(1, 3));
    let c = tape.constant(Tensor::zeros(1, 3));
    let w = tape.constant(Tensor::zeros(5, 12));
    let b = tape.constant(Tensor::zeros(1, 12));
    let (h1, c1) = lstm_cell(&mut tape, x, h, c, LstmVars { w, b, hidden: 3 }).unwrap();
    assert!(tape.value(h1).data().iter().all(|&v| v == 0.0));
    assert!(tape.value(c1).data().iter().all(|&v| v == 0.0));
    // With a nonzero cell: c' = 0.5 c, h' = 0.5 tanh(c').
    let c = tape.constant(Tensor::row_vector(vec![1.0, -2.0, 0.0]));
    let (h2, c2) = lstm_cell(&mut tape, x, h, c, LstmVars { w, b, hidden: 3 }).unwrap();
    assert_eq!(tape.value(c2).data(), [0.5, -1.0, 0.0]);
    for (hv, cv) in tape.value(h2).data().iter().zip(tape.value(c2).data()) {
        assert!((hv - 0.5 * cv.tanh()).abs() < 1e-15);
    }
}

#[test]
fn scalar_lstm_converges_to_cell_fixed_point() {
    // Frozen input and weights that ignore h: gates are constants i, f and
    // candidate g, so c_t = f c_{t-1} + i g converges to i g / (1 - f).
    let (wi, wf, wg) = (0.4, -0.3, 0.9);
    let x_val = 0.8;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::scalar(x_val));
    let w = tape.constant(Tensor::from_rows(2, 4, vec![wi, wf, wg, 0.2, 0.0, 0.0, 0.0, 0.0]).unwrap());
    let b = tape.constant(Tensor::zeros(1, 4));
    let mut h = tape.constant(Tensor::scalar(0.0));
    let mut c = h;
    for _ in 0..200 {
        let (nh, nc) = lstm_cell(&mut tape, x, h, c, LstmVars { w, b, hidden: 1 }).unwrap();
        h = nh;
        c = nc;
    }
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let (i, f, g) = (sig(wi * x_val), sig(wf * x_val), (wg * x_val).tanh());
    let fixed = i * g / (1.0 - f);
    assert!((tape.value(c).item() - fixed).abs() < 1e-12);
}

#[test]
fn shape_errors_name_the_op() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(3, 2));
    match tape.add(a, b) {
        Err(crate::Error::Shape { op, .. }) => assert_eq!(op, "add"),
        other => panic!("{other:?}"),
    }
    assert!(tape.slice_cols(a, 2, 2).is_err());
    assert!(tape.max_pool(&[a], &[1, 2]).is_err());
}

#[test]
fn grad_check_on_simple_functions() {
    let quad = |p: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let x = p[0].data();
        let v = x.iter().map(|a| 3.0 * a * a).sum();
        let g = Tensor::row_vector(x.iter().map(|a| 6.0 * a).collect());
        Ok((v, vec![g]))
    };
    let point = [Tensor::row_vector(vec![0.5, -1.5, 2.0])];
    assert!(grad_check(quad, &point, 1e-4).unwrap() < 1e-8);
    let constant = |_: &[Tensor]| -> Result<(f64, Vec<Tensor>)> { Ok((4.0, vec![Tensor::zeros(1, 3)])) };
    assert_eq!(grad_check(constant, &point, 1e-4).unwrap(), 0.0);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_xent_is_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 1..8),
            shift in -100.0f64..100.0,
            pick in 0usize..8,
        ) {
            let target = pick % logits.len();
            let mut tape = Tape::new();
            let a = tape.constant(Tensor::row_vector(logits.clone()));
            let b = tape.constant(Tensor::row_vector(logits.iter().map(|x| x + shift).collect()));
            let la = softmax_xent(&mut tape, a, target).unwrap();
            let lb = softmax_xent(&mut tape, b, target).unwrap();
            prop_assert!((tape.value(la).item() - tape.value(lb).item()).abs() < 1e-12);
        }

        #[test]
        fn adam_with_zero_gradients_is_identity(values in proptest::collection::vec(-5.0f64..5.0, 1..6), steps in 1usize..5) {
            let mut p = ParamSet::new();
            p.insert("w", Tensor::row_vector(values.clone()));
            let mut g = Grads::new();
            g.insert("w".into(), Tensor::zeros(1, values.len()));
            for _ in 0..steps {
                p.adam_step(&g, &AdamConfig::default()).unwrap();
            }
            prop_assert_eq!(p.get("w").unwrap().data(), values.as_slice());
        }
    }
}

