use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanparse::autodiff::{AdamConfig, AdamState, Tape, Tensor};
use spanparse::checkpoint::{Checkpoint, CheckpointError};
use spanparse::gradcheck::{check_ops, TOLERANCE};

fn random(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
    t
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let a = random(&mut rng, &[2, 3]);
        let b = random(&mut rng, &[3, 2]);
        let mut tape = Tape::new();
        let (x, y) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let c = tape.matmul(x, y).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a.get2(i, k) * b.get2(k, j);
                }
                assert!((tape.value(c).get2(i, j) - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn small_examples() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![-1.0, 0.0, 2.0]));
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = tape.constant(Tensor::vector(vec![0.0, 0.0]));
    let s = tape.softmax(z);
    assert_eq!(tape.value(s).data(), &[0.5, 0.5]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let loss = tape.sum(x);
    assert_eq!(tape.backward(loss).unwrap().get(x).data(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![-1.0, 2.0]));
    let r = tape.relu(x);
    let loss = tape.sum(r);
    assert_eq!(tape.backward(loss).unwrap().get(x).data(), &[0.0, 1.0]);
}

#[test]
fn normalizers() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let rows = rng.gen_range(1..5);
        let cols = rng.gen_range(2..9);
        let x = random(&mut rng, &[rows, cols]);
        let mut tape = Tape::new();
        let id = tape.constant(x);
        let s = tape.softmax(id);
        let ln = tape.layer_norm(id, 1e-12).unwrap();
        for r in 0..rows {
            let total: f64 = tape.value(s).row(r).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let row = tape.value(ln).row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn backward_is_repeatable() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, w, b) = (random(&mut rng, &[4, 3]), random(&mut rng, &[3, 5]), random(&mut rng, &[5]));
    let run = || {
        let mut tape = Tape::new();
        let (x, wn, bn) = (tape.param(a.clone()), tape.param(w.clone()), tape.param(b.clone()));
        let h = tape.matmul(x, wn).unwrap();
        let h = tape.add(h, bn).unwrap();
        let h = tape.relu(h);
        let h = tape.layer_norm(h, 1e-6).unwrap();
        let h = tape.softmax(h);
        let loss = tape.sum(h);
        let g = tape.backward(loss).unwrap();
        let again = tape.backward(loss).unwrap();
        assert_eq!(g.get(wn), again.get(wn));
        (g.get(x), g.get(wn), g.get(bn))
    };
    assert_eq!(run(), run());
}

#[test]
fn every_op_passes_finite_differences() {
    for r in check_ops(50, 17).unwrap() {
        assert!(r.passed(), "{}: {:e} >= {TOLERANCE}", r.name, r.max_error);
    }
}

#[test]
fn adam_scalar_oracle() {
    let cfg = AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(cfg, 1);
    let mut p = vec![Tensor::scalar(0.0)];
    state.step(&mut p, &[Some(Tensor::scalar(1.0))], 0.1).unwrap();
    // -lr / (1 + eps)
    assert!((p[0].item() - -0.099_999_999).abs() < 1e-16);
    let before = p[0].item();
    state.step(&mut p, &[Some(Tensor::scalar(-1.0))], 0.1).unwrap();
    assert!((p[0].item() - before - 0.005_263_157_842_105_264).abs() < 1e-15);
}

#[test]
fn adam_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = vec![random(&mut rng, &[3, 3]), random(&mut rng, &[3])];
        let mut state = AdamState::new(AdamConfig::default(), 2);
        for _ in 0..25 {
            let grads: Vec<_> = params.iter().map(|p| Some(random(&mut rng, p.shape()))).collect();
            state.step(&mut params, &grads, 1e-3).unwrap();
        }
        params
    };
    assert_eq!(run(), run());
}

/// Independent SPCK1 reader.
fn read_spck(bytes: &[u8]) -> (String, Vec<(String, Vec<usize>, Vec<f32>)>) {
    assert_eq!(&bytes[..6], b"SPCK1\0");
    assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 1);
    let meta_len = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
    let meta = String::from_utf8(bytes[18..18 + meta_len].to_vec()).unwrap();
    let mut pos = 18 + meta_len;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let name_len = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
        pos += 2;
        let name = String::from_utf8(bytes[pos..pos + name_len].to_vec()).unwrap();
        pos += name_len;
        let rank = bytes[pos] as usize;
        pos += 1;
        let mut dims = Vec::new();
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize);
            pos += 4;
        }
        let count: usize = dims.iter().product();
        let data = (0..count)
            .map(|k| f32::from_le_bytes(bytes[pos + 4 * k..pos + 4 * k + 4].try_into().unwrap()))
            .collect();
        pos += 4 * count;
        out.push((name, dims, data));
    }
    (meta, out)
}

#[test]
fn checkpoint_layout_matches_reference_reader() {
    let mut ck = Checkpoint::new("{\"k\":1}".into());
    ck.tensors.push(("a.w".into(), Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 0.25, 3.0, -0.125]).unwrap()));
    ck.tensors.push(("b".into(), Tensor::vector(vec![7.0])));
    let bytes = ck.to_bytes().unwrap();
    let (meta, tensors) = read_spck(&bytes);
    assert_eq!(meta, "{\"k\":1}");
    assert_eq!(tensors[0], ("a.w".into(), vec![2, 3], vec![1.0, -2.0, 0.5, 0.25, 3.0, -0.125]));
    assert_eq!(tensors[1], ("b".into(), vec![1], vec![7.0]));
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated(_))));
}
