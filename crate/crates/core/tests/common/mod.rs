#![allow(dead_code)]

use bdg_core::autodiff::{Tape, Tensor, Var};
use bdg_core::losses::{total_loss, BatchBundle, Network, Objective, Side};
use bdg_core::nn::{Classifier, Generator, Parameterized};
use bdg_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)` over the flattened gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central finite differences of a scalar function of several tensors,
/// evaluated on fresh tapes with every input held constant.
pub fn numeric_grads<F>(inputs: &[Tensor], f: &F, h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.value(out).item()
    };
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[i].numel());
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            g.push((eval(&plus) - eval(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Analytic gradients of the same function with every input tracked.
pub fn analytic_grads<F>(inputs: &[Tensor], f: &F) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.backward(out).unwrap();
    vars.iter()
        .map(|&v| match tape.grad(v) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; tape.value(v).numel()],
        })
        .collect()
}

/// Largest relative error over all inputs.
pub fn gradient_check<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let a = analytic_grads(inputs, &f);
    let n = numeric_grads(inputs, &f, 1e-5);
    a.iter()
        .zip(&n)
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Contracts a tensor-valued node with fixed weights into a scalar.
pub fn contract(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let p = tape.mul(out, w)?;
    tape.sum(p)
}

pub struct Nets {
    pub c_s: Classifier,
    pub c_t: Classifier,
    pub g_s: Generator,
    pub g_t: Generator,
}

pub fn nets(seed: u64, dim: usize, hidden: usize, classes: usize) -> Nets {
    let mut r = rng(seed);
    Nets {
        c_s: Classifier::new(dim, hidden, classes, &mut r),
        c_t: Classifier::new(dim, hidden, classes, &mut r),
        g_s: Generator::xavier(dim, hidden, &mut r),
        g_t: Generator::xavier(dim, hidden, &mut r),
    }
}

pub fn bundle(seed: u64, ns: usize, nt: usize, dim: usize, classes: usize) -> BatchBundle {
    let mut r = rng(seed);
    let x_s = random_tensor(&mut r, ns, dim, -3.0, 3.0);
    let x_t = random_tensor(&mut r, nt, dim, -3.0, 3.0);
    let y_s = random_labels(&mut r, ns, classes);
    let y_t = random_labels(&mut r, nt, classes);
    BatchBundle::new(x_s, y_s, x_t, y_t, classes).unwrap()
}

pub fn bind_net(tape: &mut Tape, n: &Nets, b: &BatchBundle, side: Side) -> Network {
    let gen = side == Side::Generator;
    Network {
        x_s: tape.constant(b.x_s.clone()),
        x_t: tape.constant(b.x_t.clone()),
        g_s: Some(n.g_s.bind(tape, gen)),
        g_t: n.g_t.bind(tape, gen),
        c_s: n.c_s.bind(tape, !gen),
        c_t: Some(n.c_t.bind(tape, !gen)),
    }
}

pub fn composed_total(n: &Nets, b: &BatchBundle, lambda: f64, gamma: f64, side: Side) -> f64 {
    let mut tape = Tape::new();
    let net = bind_net(&mut tape, n, b, side);
    let t = total_loss(&mut tape, &net, b, &Objective::full(lambda, gamma), side).unwrap();
    tape.value(t.total).item()
}

/// Central differences of the generator objective w.r.t. one generator's parameters.
pub fn generator_fd(n: &mut Nets, b: &BatchBundle, which_s: bool, h: f64) -> Vec<f64> {
    let count = if which_s { n.g_s.params_mut().len() } else { n.g_t.params_mut().len() };
    let mut out = Vec::new();
    for p in 0..count {
        let len = {
            let g = if which_s { &mut n.g_s } else { &mut n.g_t };
            g.params_mut()[p].numel()
        };
        for j in 0..len {
            let bump = |n: &mut Nets, delta: f64| {
                let g = if which_s { &mut n.g_s } else { &mut n.g_t };
                g.params_mut()[p].data_mut()[j] += delta;
            };
            bump(n, h);
            let plus = composed_total(n, b, 1.0, 1.0, Side::Generator);
            bump(n, -2.0 * h);
            let minus = composed_total(n, b, 1.0, 1.0, Side::Generator);
            bump(n, h);
            out.push((plus - minus) / (2.0 * h));
        }
    }
    out
}

/// Relative errors of the analytic `(G_s, G_t)` gradients of the full
/// generator objective against central differences.
pub fn generator_gradient_errors(seed: u64, samples: usize) -> (f64, f64) {
    let mut n = nets(seed, 2, 6, 3);
    let b = bundle(seed + 1, samples, samples, 2, 3);
    let mut tape = Tape::new();
    let net = bind_net(&mut tape, &n, &b, Side::Generator);
    let t = total_loss(&mut tape, &net, &b, &Objective::full(1.0, 1.0), Side::Generator).unwrap();
    tape.backward(t.total).unwrap();
    let flat = |vars: Vec<Var>| -> Vec<f64> {
        vars.iter().flat_map(|&v| tape.grad(v).unwrap().data().to_vec()).collect()
    };
    let ags = flat(net.g_s.as_ref().unwrap().vars());
    let agt = flat(net.g_t.vars());
    let ngs = generator_fd(&mut n, &b, true, 1e-5);
    let ngt = generator_fd(&mut n, &b, false, 1e-5);
    (relative_error(&ags, &ngs), relative_error(&agt, &ngt))
}
