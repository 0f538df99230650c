//! Finite-difference checks of every differentiable tape operation.

mod common;

use bdg_core::autodiff::{Activation, BinaryKind, Reduction, Tape, Tensor};
use common::{contract, gradient_check, random_tensor, rng};

const CASES: u64 = 100;
const TOL: f64 = 1e-4;

#[test]
fn matmul_gradients() {
    for case in 0..CASES {
        let mut r = rng(case);
        let a = random_tensor(&mut r, 3, 4, -2.0, 2.0);
        let b = random_tensor(&mut r, 4, 2, -2.0, 2.0);
        let w = random_tensor(&mut r, 3, 2, -1.0, 1.0);
        let err = gradient_check(&[a, b], |t, v| {
            let c = t.matmul(v[0], v[1])?;
            contract(t, c, &w)
        });
        assert!(err < TOL, "case {case}: {err}");
    }
}

#[test]
fn elementwise_gradients() {
    for kind in [BinaryKind::Add, BinaryKind::Sub, BinaryKind::Mul] {
        for case in 0..CASES {
            let mut r = rng(1000 + case);
            let a = random_tensor(&mut r, 3, 3, -2.0, 2.0);
            let b = random_tensor(&mut r, 3, 3, -2.0, 2.0);
            let w = random_tensor(&mut r, 3, 3, -1.0, 1.0);
            let err = gradient_check(&[a, b], |t, v| {
                let c = t.binary(v[0], v[1], kind)?;
                contract(t, c, &w)
            });
            assert!(err < TOL, "{kind:?} case {case}: {err}");
        }
    }
}

#[test]
fn scalar_broadcast_gradients() {
    for kind in [BinaryKind::Add, BinaryKind::Sub, BinaryKind::Mul] {
        for case in 0..CASES {
            let mut r = rng(2000 + case);
            let a = random_tensor(&mut r, 2, 3, -2.0, 2.0);
            let s = Tensor::scalar(r_scalar(&mut r));
            let w = random_tensor(&mut r, 2, 3, -1.0, 1.0);
            let err = gradient_check(&[s.clone(), a.clone()], |t, v| {
                let c = t.binary(v[0], v[1], kind)?;
                contract(t, c, &w)
            });
            assert!(err < TOL, "scalar-lhs {kind:?} case {case}: {err}");
            let err = gradient_check(&[a, s], |t, v| {
                let c = t.binary(v[0], v[1], kind)?;
                contract(t, c, &w)
            });
            assert!(err < TOL, "scalar-rhs {kind:?} case {case}: {err}");
        }
    }
}

fn r_scalar(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    r.random_range(-2.0..2.0)
}

#[test]
fn add_row_and_scale_gradients() {
    for case in 0..CASES {
        let mut r = rng(3000 + case);
        let a = random_tensor(&mut r, 4, 3, -2.0, 2.0);
        let b = random_tensor(&mut r, 1, 3, -2.0, 2.0);
        let w = random_tensor(&mut r, 4, 3, -1.0, 1.0);
        let err = gradient_check(&[a, b], |t, v| {
            let c = t.add_row(v[0], v[1])?;
            let c = t.scale(c, -1.7);
            contract(t, c, &w)
        });
        assert!(err < TOL, "case {case}: {err}");
    }
}

#[test]
fn activation_gradients() {
    for kind in [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Log] {
        for case in 0..CASES {
            let mut r = rng(4000 + case);
            let (lo, hi) = match kind {
                Activation::Log => (0.05, 3.0),
                _ => (-3.0, 3.0),
            };
            let mut a = random_tensor(&mut r, 3, 4, lo, hi);
            if kind == Activation::Relu {
                // keep inputs away from the kink
                for v in a.data_mut() {
                    if v.abs() < 1e-3 {
                        *v = 0.5;
                    }
                }
            }
            let w = random_tensor(&mut r, 3, 4, -1.0, 1.0);
            let err = gradient_check(&[a], |t, v| {
                let c = t.activation(v[0], kind)?;
                contract(t, c, &w)
            });
            assert!(err < TOL, "{kind:?} case {case}: {err}");
        }
    }
}

#[test]
fn softmax_gradients() {
    for case in 0..CASES {
        let mut r = rng(5000 + case);
        let a = random_tensor(&mut r, 4, 5, -3.0, 3.0);
        let w = random_tensor(&mut r, 4, 5, -1.0, 1.0);
        let err = gradient_check(&[a], |t, v| {
            let c = t.softmax_rows(v[0])?;
            contract(t, c, &w)
        });
        assert!(err < TOL, "case {case}: {err}");
    }
}

#[test]
fn reduction_gradients() {
    let kinds = [
        Reduction::MeanAll,
        Reduction::MeanRows,
        Reduction::Sum,
        Reduction::L1Norm,
        Reduction::L2Norm,
    ];
    for kind in kinds {
        for case in 0..CASES {
            let mut r = rng(6000 + case);
            let mut a = random_tensor(&mut r, 6, 3, -2.0, 2.0);
            if kind == Reduction::L1Norm {
                for v in a.data_mut() {
                    if v.abs() < 1e-3 {
                        *v = 0.3;
                    }
                }
            }
            let w = random_tensor(&mut r, 1, 3, -1.0, 1.0);
            let err = gradient_check(&[a], |t, v| {
                let c = t.reduce(v[0], kind)?;
                if kind == Reduction::MeanRows {
                    contract(t, c, &w)
                } else {
                    Ok(c)
                }
            });
            assert!(err < TOL, "{kind:?} case {case}: {err}");
        }
    }
}

#[test]
fn mean_rows_matches_direct_summation() {
    let mut r = rng(77);
    let a = random_tensor(&mut r, 6, 3, -5.0, 5.0);
    let mut tape = Tape::new();
    let v = tape.constant(a.clone());
    let m = tape.mean_rows(v).unwrap();
    for j in 0..3 {
        let mut s = 0.0;
        for i in 0..6 {
            s += a.get(i, j);
        }
        assert!((tape.value(m).get(0, j) - s / 6.0).abs() < 1e-12);
    }
}

#[test]
fn softmax_rows_are_distributions() {
    for case in 0..CASES {
        let mut r = rng(7000 + case);
        let a = random_tensor(&mut r, 4, 5, -30.0, 30.0);
        let mut tape = Tape::new();
        let v = tape.constant(a);
        let s = tape.softmax_rows(v).unwrap();
        let p = tape.value(s);
        for row in 0..4 {
            let total: f64 = p.row(row).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(p.row(row).iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut r = rng(99);
    let x = random_tensor(&mut r, 3, 4, -1.0, 1.0);
    let w = random_tensor(&mut r, 4, 2, -1.0, 1.0);

    let build = |tape: &mut Tape, which: u8| {
        let xv = tape.leaf(x.clone());
        let wv = tape.leaf(w.clone());
        let h = tape.matmul(xv, wv).unwrap();
        let a = tape.tanh(h).unwrap();
        let l1 = tape.l2_norm(a).unwrap();
        let s = tape.softmax_rows(h).unwrap();
        let l2 = tape.mean_all(s).unwrap();
        let l2 = tape.scale(l2, 3.0);
        let loss = match which {
            0 => l1,
            1 => l2,
            _ => tape.add(l1, l2).unwrap(),
        };
        tape.backward(loss).unwrap();
        (tape.grad(xv).unwrap().clone(), tape.grad(wv).unwrap().clone())
    };
    let (x1, w1) = build(&mut Tape::new(), 0);
    let (x2, w2) = build(&mut Tape::new(), 1);
    let (xs, ws) = build(&mut Tape::new(), 2);
    for ((a, b), s) in x1.data().iter().zip(x2.data()).zip(xs.data()) {
        assert!((a + b - s).abs() < 1e-14);
    }
    for ((a, b), s) in w1.data().iter().zip(w2.data()).zip(ws.data()) {
        assert!((a + b - s).abs() < 1e-14);
    }
}

#[test]
fn identical_tapes_give_bitwise_identical_gradients() {
    let mut r = rng(5);
    let x = random_tensor(&mut r, 5, 3, -1.0, 1.0);
    let w = random_tensor(&mut r, 3, 3, -1.0, 1.0);
    let run = || {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let wv = tape.leaf(w.clone());
        let h = tape.matmul(xv, wv).unwrap();
        let s = tape.softmax_rows(h).unwrap();
        let l = tape.log(s).unwrap();
        let loss = tape.mean_all(l).unwrap();
        tape.backward(loss).unwrap();
        (tape.grad(xv).unwrap().clone(), tape.grad(wv).unwrap().clone())
    };
    let (a, b) = run();
    let (c, d) = run();
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
               c.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
               d.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}
