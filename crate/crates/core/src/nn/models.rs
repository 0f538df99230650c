use rand::Rng;

use super::layers::{BoundLinear, Linear, Parameterized};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{BdgError, Result};

fn check_width(op: &'static str, tape: &Tape, x: Var, expected: usize) -> Result<()> {
    let shape = tape.value(x).shape();
    if shape.len() != 2 || shape[1] != expected {
        return Err(BdgError::Dimension {
            op,
            lhs: shape.to_vec(),
            rhs: vec![expected],
        });
    }
    Ok(())
}

/// Feature-space generator `d → h → h → d` with tanh hidden units.
///
/// In residual mode the output is `x + trunk(x)`, so a zeroed trunk is the
/// identity map.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub trunk: Vec<Linear>,
    pub residual: bool,
}

impl Generator {
    /// Xavier-initialized trunk with a zeroed output layer, so a fresh
    /// residual generator starts at the identity.
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut g = Self::xavier(dim, hidden, rng);
        let last = g.trunk.last_mut().expect("non-empty trunk");
        *last = Linear::zeros(hidden, dim);
        g
    }

    /// Every trunk layer Xavier-initialized.
    pub fn xavier<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            trunk: vec![
                Linear::xavier(dim, hidden, rng),
                Linear::xavier(hidden, hidden, rng),
                Linear::xavier(hidden, dim, rng),
            ],
            residual: true,
        }
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            trunk: vec![
                Linear::zeros(dim, hidden),
                Linear::zeros(hidden, hidden),
                Linear::zeros(hidden, dim),
            ],
            residual: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.trunk[0].in_features()
    }

    pub fn bind(&self, tape: &mut Tape, track: bool) -> BoundGenerator {
        BoundGenerator {
            trunk: self.trunk.iter().map(|l| l.bind(tape, track)).collect(),
            residual: self.residual,
            dim: self.dim(),
        }
    }

    /// Evaluates the generator on a fixed batch outside any training tape.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = bound.forward(&mut tape, xv)?;
        Ok(tape.value(out).clone())
    }
}

impl Parameterized for Generator {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.trunk.iter().enumerate() {
            layer.push_named(&format!("trunk.{i}"), &mut out);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.trunk {
            layer.push_mut(&mut out);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct BoundGenerator {
    trunk: Vec<BoundLinear>,
    residual: bool,
    dim: usize,
}

impl BoundGenerator {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        check_width("generator_forward", tape, x, self.dim)?;
        let mut h = x;
        let last = self.trunk.len() - 1;
        for (i, layer) in self.trunk.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last {
                h = tape.tanh(h)?;
            }
        }
        if self.residual {
            h = tape.add(x, h)?;
        }
        Ok(h)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.trunk.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }
}

/// Shared trunk `d → h → h` (tanh) with a class head and a domain head.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub trunk: Vec<Linear>,
    pub class_head: Linear,
    pub domain_head: Linear,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            trunk: vec![
                Linear::xavier(dim, hidden, rng),
                Linear::xavier(hidden, hidden, rng),
            ],
            class_head: Linear::xavier(hidden, classes, rng),
            domain_head: Linear::xavier(hidden, 1, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.trunk[0].in_features()
    }

    pub fn classes(&self) -> usize {
        self.class_head.out_features()
    }

    pub fn bind(&self, tape: &mut Tape, track: bool) -> BoundClassifier {
        BoundClassifier {
            trunk: self.trunk.iter().map(|l| l.bind(tape, track)).collect(),
            class_head: self.class_head.bind(tape, track),
            domain_head: self.domain_head.bind(tape, track),
            dim: self.dim(),
        }
    }

    /// Evaluates both heads and the trunk activations outside training.
    pub fn predict(&self, x: &Tensor) -> Result<Prediction> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = bound.forward(&mut tape, xv)?;
        Ok(Prediction {
            features: tape.value(out.features).clone(),
            class_probs: tape.value(out.class_probs).clone(),
            domain_prob: tape.value(out.domain_prob).clone(),
        })
    }
}

impl Parameterized for Classifier {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.trunk.iter().enumerate() {
            layer.push_named(&format!("trunk.{i}"), &mut out);
        }
        self.class_head.push_named("class_head", &mut out);
        self.domain_head.push_named("domain_head", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.trunk {
            layer.push_mut(&mut out);
        }
        self.class_head.push_mut(&mut out);
        self.domain_head.push_mut(&mut out);
        out
    }
}

/// Tape nodes produced by one classifier pass.
#[derive(Clone, Copy, Debug)]
pub struct ClassifierOutput {
    pub features: Var,
    pub class_probs: Var,
    pub domain_prob: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub features: Tensor,
    pub class_probs: Tensor,
    pub domain_prob: Tensor,
}

#[derive(Clone, Debug)]
pub struct BoundClassifier {
    trunk: Vec<BoundLinear>,
    class_head: BoundLinear,
    domain_head: BoundLinear,
    dim: usize,
}

impl BoundClassifier {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<ClassifierOutput> {
        check_width("classifier_forward", tape, x, self.dim)?;
        let mut h = x;
        for layer in &self.trunk {
            h = layer.forward(tape, h)?;
            h = tape.tanh(h)?;
        }
        let logits = self.class_head.forward(tape, h)?;
        let class_probs = tape.softmax_rows(logits)?;
        let dlogit = self.domain_head.forward(tape, h)?;
        let domain_prob = tape.sigmoid(dlogit)?;
        Ok(ClassifierOutput {
            features: h,
            class_probs,
            domain_prob,
        })
    }

    pub fn vars(&self) -> Vec<Var> {
        self.trunk
            .iter()
            .chain([&self.class_head, &self.domain_head])
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }
}

/// Collects the gradients of `vars`, substituting zeros where the loss
/// did not reach a parameter.
pub fn collect_grads(tape: &Tape, vars: &[Var]) -> Vec<Tensor> {
    vars.iter()
        .map(|&v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Tensor {
        let data = (0..m * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        Tensor::matrix(m, d, data).unwrap()
    }

    #[test]
    fn zero_trunk_generator_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = batch(&mut rng, 7, 3);
        let g = Generator::zeros(3, 8);
        let y = g.apply(&x).unwrap();
        assert_eq!(y.max_abs_diff(&x), 0.0);
        // the default constructor also starts at the identity
        let g = Generator::new(3, 8, &mut rng);
        assert_eq!(g.apply(&x).unwrap().max_abs_diff(&x), 0.0);
    }

    #[test]
    fn generator_preserves_shape_and_checks_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Generator::xavier(4, 16, &mut rng);
        let x = batch(&mut rng, 5, 4);
        assert_eq!(g.apply(&x).unwrap().shape(), &[5, 4]);
        let bad = batch(&mut rng, 5, 3);
        assert!(matches!(g.apply(&bad), Err(BdgError::Dimension { .. })));
    }

    #[test]
    fn classifier_heads_are_valid_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Classifier::new(2, 16, 5, &mut rng);
        let x = batch(&mut rng, 9, 2);
        let p = c.predict(&x).unwrap();
        for r in 0..9 {
            let s: f64 = p.class_probs.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            let d = p.domain_prob.get(r, 0);
            assert!(d > 0.0 && d < 1.0);
        }
        let twin = c.clone();
        assert_eq!(twin.predict(&x).unwrap(), p);
        assert!(matches!(
            c.predict(&batch(&mut rng, 2, 3)),
            Err(BdgError::Dimension { .. })
        ));
    }

    #[test]
    fn heads_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Classifier::new(2, 16, 3, &mut rng);
        let x = batch(&mut rng, 6, 2);
        let base = c.predict(&x).unwrap();

        let mut perturbed = c.clone();
        perturbed.class_head.weight.data_mut()[0] += 0.7;
        let p = perturbed.predict(&x).unwrap();
        assert_eq!(p.domain_prob, base.domain_prob);
        assert_ne!(p.class_probs, base.class_probs);

        let mut perturbed = c.clone();
        perturbed.domain_head.weight.data_mut()[0] += 0.7;
        let p = perturbed.predict(&x).unwrap();
        assert_eq!(p.class_probs, base.class_probs);
        assert_ne!(p.domain_prob, base.domain_prob);
    }

    #[test]
    fn param_order_matches_bound_vars() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = Classifier::new(2, 4, 3, &mut rng);
        let mut tape = Tape::new();
        let bound = c.bind(&mut tape, true);
        let named = c.named_params();
        let vars = bound.vars();
        assert_eq!(named.len(), vars.len());
        for ((_, t), v) in named.iter().zip(vars) {
            assert_eq!(*t, tape.value(v));
        }
    }
}
