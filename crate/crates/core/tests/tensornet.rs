use pcsc::seed;
use pcsc::tensornet::{DiffTensor, Shape, Tape, Var};
use rand::Rng;

fn random(shape: Shape, rng: &mut impl Rng) -> Vec<f64> {
    (0..shape.iter().product())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect()
}

fn param(tape: &mut Tape<f64>, shape: Shape, values: Vec<f64>) -> Var {
    tape.leaf(DiffTensor::new(shape, values, true).unwrap())
}

/// Direct cross-correlation, one output element at a time.
fn naive_conv(x: &[f64], xs: Shape, w: &[f64], ws: Shape, stride: usize, pad: usize) -> (Vec<f64>, Shape) {
    let k = ws[2];
    let side = |n: usize| (n + 2 * pad - k) / stride + 1;
    let os = [xs[0], ws[0], side(xs[2]), side(xs[3]), side(xs[4])];
    let mut out = vec![0.0; os.iter().product()];
    for n in 0..os[0] {
        for co in 0..os[1] {
            for od in 0..os[2] {
                for oh in 0..os[3] {
                    for ow in 0..os[4] {
                        let mut acc = 0.0;
                        for ci in 0..xs[1] {
                            for kd in 0..k {
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let id = (od * stride + kd) as isize - pad as isize;
                                        let ih = (oh * stride + kh) as isize - pad as isize;
                                        let iw = (ow * stride + kw) as isize - pad as isize;
                                        if id < 0 || ih < 0 || iw < 0 {
                                            continue;
                                        }
                                        let (id, ih, iw) = (id as usize, ih as usize, iw as usize);
                                        if id >= xs[2] || ih >= xs[3] || iw >= xs[4] {
                                            continue;
                                        }
                                        let xi = (((n * xs[1] + ci) * xs[2] + id) * xs[3] + ih) * xs[4] + iw;
                                        let wi = (((co * ws[1] + ci) * k + kd) * k + kh) * k + kw;
                                        acc += x[xi] * w[wi];
                                    }
                                }
                            }
                        }
                        out[(((n * os[1] + co) * os[2] + od) * os[3] + oh) * os[4] + ow] = acc;
                    }
                }
            }
        }
    }
    (out, os)
}

fn identity_kernel(c: usize) -> Vec<f64> {
    let mut w = vec![0.0; c * c * 27];
    for i in 0..c {
        w[(i * c + i) * 27 + 13] = 1.0;
    }
    w
}

#[test]
fn identity_kernel_reproduces_input() {
    let mut rng = seed::rng(1);
    let shape = [2, 3, 4, 5, 3];
    let xv = random(shape, &mut rng);
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(shape, xv.clone()).unwrap();
    let w = tape.constant([3, 3, 3, 3, 3], identity_kernel(3)).unwrap();
    let y = tape.conv3d(x, w, None, 1, 1).unwrap();
    assert_eq!(tape.value(y), &xv[..]);
    let yt = tape.conv_transpose3d(x, w, None, 1, 1).unwrap();
    assert_eq!(tape.value(yt), &xv[..]);
}

#[test]
fn all_ones_center_is_27() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant([1, 1, 3, 3, 3], vec![1.0; 27]).unwrap();
    let w = tape.constant([1, 1, 3, 3, 3], vec![1.0; 27]).unwrap();
    let y = tape.conv3d(x, w, None, 1, 1).unwrap();
    assert_eq!(tape.value(y)[13], 27.0);
    assert_eq!(tape.value(y)[0], 8.0);
}

#[test]
fn conv_matches_naive_loops() {
    let mut rng = seed::rng(2);
    for (xs, co, stride, pad, k) in [
        ([1, 2, 5, 5, 5], 3, 1, 1, 3),
        ([2, 2, 5, 6, 7], 2, 2, 1, 3),
        ([1, 3, 4, 4, 4], 2, 1, 0, 1),
        ([1, 1, 6, 6, 6], 1, 2, 0, 3),
    ] {
        let ws = [co, xs[1], k, k, k];
        let xv = random(xs, &mut rng);
        let wv = random(ws, &mut rng);
        let (expect, os) = naive_conv(&xv, xs, &wv, ws, stride, pad);
        let xf: Vec<f32> = xv.iter().map(|&v| v as f32).collect();
        let wf: Vec<f32> = wv.iter().map(|&v| v as f32).collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(xs, xf).unwrap();
        let w = tape.constant(ws, wf).unwrap();
        let y = tape.conv3d(x, w, None, stride, pad).unwrap();
        assert_eq!(tape.shape(y), os);
        let diff = tape
            .value(y)
            .iter()
            .zip(&expect)
            .map(|(&a, &b)| (a as f64 - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-5, "{diff}");
    }
}

#[test]
fn transpose_is_the_adjoint_of_conv() {
    let mut rng = seed::rng(3);
    for (xs, co, stride) in [([2, 2, 8, 8, 8], 3, 2), ([1, 3, 5, 5, 5], 2, 1)] {
        let ws = [co, xs[1], 3, 3, 3];
        let xv = random(xs, &mut rng);
        let wv = random(ws, &mut rng);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(xs, xv.clone()).unwrap();
        let w = tape.constant(ws, wv).unwrap();
        let y = tape.conv3d(x, w, None, stride, 1).unwrap();
        let ys = tape.shape(y);
        let yv = random(ys, &mut rng);
        let probe = tape.constant(ys, yv.clone()).unwrap();
        let back = tape.conv_transpose3d(probe, w, None, stride, 1).unwrap();
        assert_eq!(tape.shape(back), xs);
        let lhs: f64 = tape.value(y).iter().zip(&yv).map(|(a, b)| a * b).sum();
        let rhs: f64 = xv.iter().zip(tape.value(back)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-5 * lhs.abs().max(1.0));

        // Forward of the transpose equals the data gradient of the conv.
        let mut t2 = Tape::<f64>::new();
        let x2 = param(&mut t2, xs, xv.clone());
        let w2 = t2.constant(ws, tape.value(w).to_vec()).unwrap();
        let y2 = t2.conv3d(x2, w2, None, stride, 1).unwrap();
        let p2 = t2.constant(ys, yv.clone()).unwrap();
        let m = t2.mul(y2, p2).unwrap();
        let l = t2.sum(m).unwrap();
        t2.backward(l).unwrap();
        let d = t2
            .grad(x2)
            .unwrap()
            .iter()
            .zip(tape.value(back))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-12);
    }
}

#[test]
fn transpose_shape_contract() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant([1, 2, 4, 4, 4], vec![0.5; 128]).unwrap();
    let w = tape.constant([2, 5, 3, 3, 3], vec![0.1; 270]).unwrap();
    let y = tape.conv_transpose3d(x, w, None, 2, 1).unwrap();
    assert_eq!(tape.shape(y), [1, 5, 8, 8, 8]);
}

#[test]
fn shape_mismatch_is_an_error() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant([1, 2, 4, 4, 4], vec![0.0; 128]).unwrap();
    let w = tape.constant([1, 3, 3, 3, 3], vec![0.0; 81]).unwrap();
    assert!(tape.conv3d(x, w, None, 1, 1).is_err());
    let b = tape.constant([1, 2, 4, 4, 5], vec![0.0; 160]).unwrap();
    assert!(tape.add(x, b).is_err());
}

#[test]
fn wbce_uniform_logits() {
    let mut tape = Tape::<f32>::new();
    let z = tape.leaf(DiffTensor::new([1, 1, 4, 4, 4], vec![0.0; 64], true).unwrap());
    let occ: Vec<bool> = (0..64).map(|i| i % 3 == 0).collect();
    let l = tape.wbce(z, &occ, 3.0).unwrap();
    assert!((tape.value(l)[0] as f64 - 4.0 * 2f64.ln()).abs() < 1e-6);
}

#[test]
fn wbce_saturates_to_zero() {
    let occ: Vec<bool> = (0..64).map(|i| i % 5 == 0).collect();
    let z: Vec<f32> = occ.iter().map(|&o| if o { 40.0 } else { -40.0 }).collect();
    let mut tape = Tape::<f32>::new();
    let zv = tape.leaf(DiffTensor::new([1, 1, 4, 4, 4], z, true).unwrap());
    let l = tape.wbce(zv, &occ, 3.0).unwrap();
    let v = tape.value(l)[0];
    assert!(v.is_finite() && (0.0..1e-10).contains(&v));
}

#[test]
fn wbce_matches_direct_formula() {
    let mut rng = seed::rng(4);
    let z: Vec<f64> = (0..64).map(|_| rng.random_range(-6.0..6.0)).collect();
    let occ: Vec<bool> = (0..64).map(|_| rng.random_bool(0.3)).collect();
    let (mut pos, mut neg, mut no, mut nn) = (0.0f64, 0.0f64, 0, 0);
    for (&v, &o) in z.iter().zip(&occ) {
        let p = 1.0 / (1.0 + (-v).exp());
        if o {
            pos -= p.ln();
            no += 1;
        } else {
            neg -= (1.0 - p).ln();
            nn += 1;
        }
    }
    let expect = pos / no as f64 + 3.0 * neg / nn as f64;
    let mut tape = Tape::<f32>::new();
    let zv = tape
        .constant([1, 1, 4, 4, 4], z.iter().map(|&v| v as f32).collect())
        .unwrap();
    let l = tape.wbce(zv, &occ, 3.0).unwrap();
    let got = tape.value(l)[0] as f64;
    assert!(((got - expect) / expect).abs() < 1e-6, "{got} vs {expect}");
}

#[test]
fn wbce_degenerate_classes() {
    let mut tape = Tape::<f64>::new();
    let z = param(&mut tape, [1, 1, 1, 1, 4], vec![0.0; 4]);
    let l = tape.wbce(z, &[false; 4], 3.0).unwrap();
    assert!((tape.value(l)[0] - 3.0 * 2f64.ln()).abs() < 1e-12);
    let l = tape.wbce(z, &[true; 4], 3.0).unwrap();
    assert!((tape.value(l)[0] - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn backward_of_sum_is_ones() {
    let mut tape = Tape::<f64>::new();
    let x = param(&mut tape, [1, 1, 1, 1, 3], vec![1.0, 2.0, 3.0]);
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn backward_of_sum_of_squares_and_accumulation() {
    let mut tape = Tape::<f64>::new();
    let x = param(&mut tape, [1, 1, 1, 1, 2], vec![1.0, -2.0]);
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, -4.0]);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[4.0, -8.0]);
    tape.zero_grad();
    assert!(tape.grad(x).is_none());
}

#[test]
fn scale_by_needs_a_scalar_and_sqrt_a_positive_input() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant([1, 1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
    assert!(tape.scale_by(x, x).is_err());
    let z = tape.constant([1; 5], vec![0.0]).unwrap();
    assert!(tape.sqrt(z).is_err());
    let k = tape.constant([1; 5], vec![4.0]).unwrap();
    let r = tape.sqrt(k).unwrap();
    let y = tape.scale_by(x, r).unwrap();
    assert_eq!(tape.value(y), &[2.0, 4.0]);
}

#[test]
fn backward_on_detached_scalar_fails() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant([1, 1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
    let s = tape.sum(x).unwrap();
    assert!(tape.backward(s).is_err());
    let y = param(&mut tape, [1, 1, 1, 1, 2], vec![1.0, 2.0]);
    assert!(tape.backward(y).is_err(), "non-scalar loss");
}

/// Builds a graph exercising every op from flat parameter values and returns the loss.
fn every_op_loss(p: &[Vec<f64>], tape: &mut Tape<f64>) -> (Var, Vec<Var>) {
    let shapes: [Shape; 6] = [
        [2, 2, 4, 4, 4],
        [3, 2, 3, 3, 3],
        [3, 1, 1, 1, 1],
        [3, 2, 3, 3, 3],
        [2, 1, 1, 1, 1],
        [2, 2, 1, 1, 1],
    ];
    let v: Vec<Var> = shapes
        .iter()
        .zip(p)
        .map(|(&s, vals)| param(tape, s, vals.clone()))
        .collect();
    let (x, w1, b1, wt, bt, w2) = (v[0], v[1], v[2], v[3], v[4], v[5]);
    let h = tape.conv3d(x, w1, Some(b1), 2, 1).unwrap();
    let h = tape.sigmoid(h).unwrap();
    let u = tape.conv_transpose3d(h, wt, Some(bt), 2, 1).unwrap();
    let r = tape.relu(u).unwrap();
    let c = tape.conv3d(r, w2, None, 1, 0).unwrap();
    let cat = tape.concat_channels(&[c, x]).unwrap();
    let two = tape.scale(cat, 0.5).unwrap();
    let sq = tape.mul(two, cat).unwrap();
    let s = tape.sum(sq).unwrap();
    let occ: Vec<bool> = (0..tape.tensor(u).len()).map(|i| i % 7 < 2).collect();
    let mixed = tape.add(u, r).unwrap();
    let l = tape.wbce(mixed, &occ, 3.0).unwrap();
    let root = tape.sqrt(s).unwrap();
    let spread = tape.scale_by(cat, root).unwrap();
    let spread = tape.sum(spread).unwrap();
    let s = tape.add(s, spread).unwrap();
    let s = tape.scale(s, 0.01).unwrap();
    let loss = tape.add(l, s).unwrap();
    (loss, v)
}

#[test]
fn every_kernel_matches_finite_differences() {
    let mut rng = seed::rng(6);
    let sizes = [256, 162, 3, 162, 2, 4];
    let params: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&n| (0..n).map(|_| rng.random_range(-0.8..0.8)).collect())
        .collect();
    let mut tape = Tape::new();
    let (loss, vars) = every_op_loss(&params, &mut tape);
    tape.backward(loss).unwrap();
    let h = 1e-3;
    let eval = |p: &[Vec<f64>]| {
        let mut t = Tape::new();
        let (l, _) = every_op_loss(p, &mut t);
        t.value(l)[0]
    };
    let mut worst = 0.0f64;
    for (pi, &var) in vars.iter().enumerate() {
        let analytic = tape.grad(var).unwrap().to_vec();
        for j in 0..params[pi].len() {
            let mut plus = params.clone();
            plus[pi][j] += h;
            let mut minus = params.clone();
            minus[pi][j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            // ReLU kinks inside the step make isolated points non-smooth.
            if rel > 1e-4 && (a - numeric).abs() > 1e-9 {
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}
