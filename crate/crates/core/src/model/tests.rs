use super::*;
use crate::numerics::{grad_check, AdamConfig};

fn tiny(vocab: usize, ingredients: usize) -> ModelConfig {
    let mut c = ModelConfig::new(vocab, ingredients);
    c.embed_dim = 3;
    c.enc_hidden = 2;
    c.dec_hidden = 4;
    c.vid_hidden = 2;
    c.recipe_hidden = 4;
    c.feature_dim = 3;
    c.max_decode_len = 6;
    c
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straightforward LSTM step over plain vectors.
fn ref_lstm(w: &Tensor, b: &Tensor, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = h.len();
    let input: Vec<f64> = x.iter().chain(h).copied().collect();
    let z: Vec<f64> = (0..4 * hd)
        .map(|k| b.data()[k] + input.iter().enumerate().map(|(r, v)| v * w.get(r, k)).sum::<f64>())
        .collect();
    let mut nh = vec![0.0; hd];
    let mut nc = vec![0.0; hd];
    for u in 0..hd {
        let i = sigmoid(z[u]);
        let f = sigmoid(z[hd + u]);
        let g = z[2 * hd + u].tanh();
        let o = sigmoid(z[3 * hd + u]);
        nc[u] = f * c[u] + i * g;
        nh[u] = o * nc[u].tanh();
    }
    (nh, nc)
}

fn ref_bi_encode(p: &ModelParams, prefix: &str, hidden: usize, xs: &[Vec<f64>]) -> Vec<f64> {
    let run = |dir: &str, order: Vec<usize>| {
        let w = p.params.get(&format!("{prefix}.{dir}.w")).unwrap();
        let b = p.params.get(&format!("{prefix}.{dir}.b")).unwrap();
        let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
        let mut pooled = vec![f64::NEG_INFINITY; hidden];
        for t in order {
            let (nh, nc) = ref_lstm(w, b, &xs[t], &h, &c);
            h = nh;
            c = nc;
            for u in 0..hidden {
                pooled[u] = pooled[u].max(h[u]);
            }
        }
        pooled
    };
    let mut out = run("fwd", (0..xs.len()).collect());
    out.extend(run("bwd", (0..xs.len()).rev().collect()));
    out
}

fn ref_encode_sentence(p: &ModelParams, tokens: &[usize]) -> Vec<f64> {
    let emb = p.params.get("encoder.embedding").unwrap();
    let xs: Vec<Vec<f64>> = tokens.iter().map(|&t| emb.row(t).to_vec()).collect();
    ref_bi_encode(p, "encoder", p.config.enc_hidden, &xs)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn sentence_encoding_matches_reference() {
    let p = ModelParams::init(tiny(9, 3), 4).unwrap();
    for s in [vec![5], vec![4, 6], vec![7, 7, 8, 4, 5]] {
        let got = p.encode_sentence(&s).unwrap();
        assert_eq!(got.len(), p.config.context_dim());
        assert!(close(&got, &ref_encode_sentence(&p, &s), 1e-12), "{s:?}");
    }
}

#[test]
fn batched_sentences_match_single_encoding() {
    let p = ModelParams::init(tiny(9, 3), 4).unwrap();
    let sentences: [&[usize]; 3] = [&[5], &[7, 7, 8, 4, 5], &[4, 6]];
    let mut tape = Tape::new();
    let net = p.bind_frozen(&mut tape).unwrap();
    let r = net.encode_sentences(&mut tape, &sentences).unwrap();
    for (i, s) in sentences.iter().enumerate() {
        assert_eq!(tape.value(r).row(i), p.encode_sentence(s).unwrap().as_slice());
    }
}

#[test]
fn single_token_is_its_own_output() {
    let p = ModelParams::init(tiny(9, 3), 2).unwrap();
    let emb = p.params.get("encoder.embedding").unwrap();
    let zero = vec![0.0; p.config.enc_hidden];
    let w = |n: &str| p.params.get(n).unwrap();
    let (f, _) = ref_lstm(w("encoder.fwd.w"), w("encoder.fwd.b"), emb.row(6), &zero, &zero);
    let (b, _) = ref_lstm(w("encoder.bwd.w"), w("encoder.bwd.b"), emb.row(6), &zero, &zero);
    let expected: Vec<f64> = f.into_iter().chain(b).collect();
    assert!(close(&p.encode_sentence(&[6]).unwrap(), &expected, 1e-12));
}

#[test]
fn max_pool_takes_per_dimension_max() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::row_vector(vec![1.0, 5.0]));
    let b = tape.constant(Tensor::row_vector(vec![3.0, 2.0]));
    let m = tape.max_pool(&[a, b], &[2]).unwrap();
    assert_eq!(tape.value(m).data(), &[3.0, 5.0]);
}

#[test]
fn sentence_encoding_depends_on_order() {
    let p = ModelParams::init(tiny(8, 2), 1).unwrap();
    let mut found = None;
    'search: for a in 4..8 {
        for b in 4..8 {
            if a == b {
                continue;
            }
            let ab = p.encode_sentence(&[a, b]).unwrap();
            let ba = p.encode_sentence(&[b, a]).unwrap();
            if !close(&ab, &ba, 1e-9) {
                found = Some((a, b));
                break 'search;
            }
        }
    }
    assert!(found.is_some());
}

#[test]
fn empty_sentence_is_rejected() {
    let p = ModelParams::init(tiny(8, 2), 1).unwrap();
    assert!(matches!(p.encode_sentence(&[]), Err(Error::EmptyStep)));
}

#[test]
fn ingredient_projection() {
    let p = ModelParams::init(tiny(8, 4), 3).unwrap();
    let d = p.config.context_dim();
    let mut p2 = p.clone();
    p2.params.insert("ingredient_proj.b", Tensor::row_vector((0..d).map(|i| 0.1 * i as f64 - 0.2).collect()));
    let w = p2.params.get("ingredient_proj.w").unwrap();
    let b = p2.params.get("ingredient_proj.b").unwrap();
    let zero = p2.project_ingredients(&[0.0; 4]).unwrap();
    let expected: Vec<f64> = b.data().iter().map(|x| x.tanh()).collect();
    assert!(close(&zero, &expected, 1e-15));
    let mut one_hot = vec![0.0; 4];
    one_hot[2] = 1.0;
    let got = p2.project_ingredients(&one_hot).unwrap();
    let expected: Vec<f64> = (0..d).map(|k| (w.get(2, k) + b.data()[k]).tanh()).collect();
    assert!(close(&got, &expected, 1e-15));
    assert!(p2.project_ingredients(&[0.0; 3]).is_err());

    let mut off = p.config.clone();
    off.use_ingredients = false;
    let ablated = ModelParams::from_params(off, p.params.clone()).unwrap();
    assert!(ablated.project_ingredients(&one_hot).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn recipe_step_is_a_pure_lstm_step() {
    let p = ModelParams::init(tiny(8, 2), 9).unwrap();
    let d = p.config.context_dim();
    let r0: Vec<f64> = (0..d).map(|i| (i as f64 * 0.7).sin()).collect();
    let r1: Vec<f64> = (0..d).map(|i| (i as f64 * 1.3).cos()).collect();
    let s0 = RecipeState::zeros(&p.config);
    let s1 = p.recipe_step(&s0, &r0).unwrap();
    assert_eq!(s1.prediction(), s1.h.as_slice());
    assert_eq!(s1.steps, 1);
    assert_eq!(p.recipe_step(&s0, &r0).unwrap(), s1);
    let s2 = p.recipe_step(&s1, &r1).unwrap();

    let w = p.params.get("recipe.w").unwrap();
    let b = p.params.get("recipe.b").unwrap();
    let (h1, c1) = ref_lstm(w, b, &r0, &s0.h, &s0.c);
    let (h2, c2) = ref_lstm(w, b, &r1, &h1, &c1);
    assert!(close(&s2.h, &h2, 1e-12) && close(&s2.c, &c2, 1e-12));
    assert_eq!(s2.h.len(), p.config.recipe_hidden);
}

#[test]
fn teacher_forcing_scores_tokens_plus_end() {
    let p = ModelParams::init(tiny(10, 2), 5).unwrap();
    let r = vec![0.3; p.config.context_dim()];
    let losses = p.decode_teacher_forced(&r, &[4, 5, 6]).unwrap();
    assert_eq!(losses.len(), 4);
    assert!(losses.iter().all(|l| l.is_finite() && *l > 0.0));
}

#[test]
fn greedy_decoding_is_deterministic_and_bounded() {
    let p = ModelParams::init(tiny(10, 2), 5).unwrap();
    let d = p.config.context_dim();
    for k in 0..20 {
        let r: Vec<f64> = (0..d).map(|i| ((i * 7 + k * 3) as f64).sin() * 2.0).collect();
        let a = p.decode_greedy(&r).unwrap();
        assert_eq!(a, p.decode_greedy(&r).unwrap());
        assert!(a.len() <= p.config.max_decode_len);
        assert!(a.iter().all(|&t| t != PAD_ID && t != BOS_ID && t != EOS_ID));
    }
    assert!(p.decode_greedy(&vec![0.0; d + 1]).is_err());
}

#[test]
fn decoder_overfits_one_pair() {
    let mut p = ModelParams::init(tiny(12, 2), 7).unwrap();
    let d = p.config.context_dim();
    let r: Vec<f64> = (0..d).map(|i| (i as f64).sin()).collect();
    let target = [5usize, 9, 4, 11, 5];
    let adam = AdamConfig {
        lr: 0.05,
        ..AdamConfig::default()
    };
    for _ in 0..300 {
        let grads: Grads = {
            let mut tape = Tape::new();
            let net = p.bind(&mut tape, &|n| n.starts_with("decoder") || n == "encoder.embedding").unwrap();
            let x = tape.constant(Tensor::row_vector(r.clone()));
            let loss = net.decode_teacher(&mut tape, x, &[&target]).unwrap();
            let total = tape.sum(loss.per_sentence);
            let mut g = tape.backward(total);
            net.collect_grads(&tape, &mut g)
        };
        p.params.adam_step(&grads, &adam).unwrap();
    }
    assert_eq!(p.decode_greedy(&r).unwrap(), target);
}

#[test]
fn video_encoding() {
    let p = ModelParams::init(tiny(8, 2), 11).unwrap();
    let frames: Vec<Vec<f32>> = (0..5)
        .map(|t| (0..3).map(|k| ((t * 3 + k) as f32 * 0.37).sin()).collect())
        .collect();
    for l in 1..=5 {
        let seg = FeatureSegment::new(frames[..l].to_vec()).unwrap();
        let got = p.encode_video(&seg).unwrap();
        assert_eq!(got.len(), p.config.context_dim());
        let xs: Vec<Vec<f64>> = frames[..l].iter().map(|f| f.iter().map(|&x| x as f64).collect()).collect();
        assert!(close(&got, &ref_bi_encode(&p, "video", p.config.vid_hidden, &xs), 1e-12));
    }
    let wrong = FeatureSegment::new(vec![vec![0.0; 4]]).unwrap();
    assert!(p.encode_video(&wrong).is_err());
}

#[test]
fn dimension_mismatch_is_rejected() {
    let mut c = tiny(8, 2);
    c.recipe_hidden = 5;
    assert!(ModelParams::init(c, 0).is_err());
}

#[test]
fn from_params_checks_shapes() {
    let p = ModelParams::init(tiny(8, 2), 0).unwrap();
    let mut bad = p.params.clone();
    bad.insert("recipe.b", Tensor::zeros(1, 3));
    assert!(ModelParams::from_params(p.config.clone(), bad).is_err());
    assert_eq!(ModelParams::from_params(p.config.clone(), p.params.clone()).unwrap(), p);
}

#[test]
fn full_loss_gradient_check() {
    for seed in [21, 22] {
        let err = crate::train::check_gradients(seed).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}

#[test]
fn video_gradient_check() {
    let config = tiny(9, 3);
    let base = ModelParams::init(config.clone(), 5).unwrap();
    let names = ["video.fwd.w", "video.fwd.b", "video.bwd.w", "video.bwd.b"];
    let point: Vec<Tensor> = names.iter().map(|n| base.params.get(n).unwrap().clone()).collect();
    let segs = [
        FeatureSegment::new(vec![vec![0.5, -0.1, 0.3], vec![0.2, 0.4, -0.6]]).unwrap(),
        FeatureSegment::new(vec![vec![-0.3, 0.8, 0.1]]).unwrap(),
    ];
    let f = |ts: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let mut set = base.params.clone();
        for (n, t) in names.iter().zip(ts) {
            set.insert(*n, t.clone());
        }
        let m = ModelParams::from_params(config.clone(), set)?;
        let mut tape = Tape::new();
        let net = m.bind(&mut tape, &|n| n.starts_with("video"))?;
        let v = net.encode_segments(&mut tape, &[&segs[0], &segs[1]])?;
        let w = tape.constant(Tensor::from_rows(2, 4, vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9, 0.5, -1.3])?);
        let prod = tape.mul(v, w)?;
        let total = tape.sum(prod);
        let value = tape.value(total).item();
        let mut g = tape.backward(total);
        let grads = net.collect_grads(&tape, &mut g);
        Ok((value, names.iter().map(|n| grads[*n].clone()).collect()))
    };
    assert!(grad_check(f, &point, 1e-5).unwrap() < 1e-4);
}

