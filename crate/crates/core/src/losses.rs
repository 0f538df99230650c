//! Differentiable terms of the bi-directional generation objective.
//!
//! Every term is a cross-entropy or distance to be minimized. Classifier-side
//! GAN terms label `X_s` real / `F_t` fake (source branch) and `F_t`
//! source-origin / `F_s` target-origin (target branch). Generator-side terms
//! flip both domain labels and keep the class terms on generated samples.
//! All `log` calls clamp their input at [`LOG_EPS`](crate::autodiff::LOG_EPS).

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{BdgError, Result};
use crate::nn::{BoundClassifier, BoundGenerator, ClassifierOutput};

/// Which player a loss is evaluated for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Classifier,
    Generator,
}

/// Which MMD pair to compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// `F_t = G_s(X_s)` (labels `Y_s`) against `X_t` (labels `Ŷ_t`).
    Source,
    /// `F_s = G_t(X_t)` (labels `Ŷ_t`) against `X_s` (labels `Y_s`).
    Target,
}

/// One labeled minibatch from each domain, with frozen target pseudo labels.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchBundle {
    pub x_s: Tensor,
    pub y_s: Vec<usize>,
    pub x_t: Tensor,
    pub y_t_pseudo: Vec<usize>,
    pub classes: usize,
}

impl BatchBundle {
    pub fn new(
        x_s: Tensor,
        y_s: Vec<usize>,
        x_t: Tensor,
        y_t_pseudo: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if x_s.rows() == 0 || x_t.rows() == 0 {
            return Err(BdgError::DegenerateBatch("batch bundle"));
        }
        if x_s.rows() != y_s.len() || x_t.rows() != y_t_pseudo.len() {
            return Err(BdgError::Dimension {
                op: "batch bundle labels",
                lhs: vec![x_s.rows(), x_t.rows()],
                rhs: vec![y_s.len(), y_t_pseudo.len()],
            });
        }
        if x_s.cols() != x_t.cols() {
            return Err(BdgError::Dimension {
                op: "batch bundle features",
                lhs: x_s.shape().to_vec(),
                rhs: x_t.shape().to_vec(),
            });
        }
        check_labels(&y_s, classes)?;
        check_labels(&y_t_pseudo, classes)?;
        Ok(Self {
            x_s,
            y_s,
            x_t,
            y_t_pseudo,
            classes,
        })
    }
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(l) => Err(BdgError::Validation(format!(
            "label {l} out of range for {classes} classes"
        ))),
        None => Ok(()),
    }
}

fn rows_of(tape: &Tape, v: Var) -> usize {
    tape.value(v).rows()
}

/// Mean of `-log p` (target 1) or `-log(1 − p)` (target 0) over a `m×1` column.
pub fn binary_cross_entropy(tape: &mut Tape, prob: Var, real: bool) -> Result<Var> {
    if rows_of(tape, prob) == 0 {
        return Err(BdgError::DegenerateBatch("binary_cross_entropy"));
    }
    let p = if real {
        prob
    } else {
        let one = tape.constant(Tensor::scalar(1.0));
        tape.sub(one, prob)?
    };
    let logp = tape.log(p)?;
    let mean = tape.mean_all(logp)?;
    Ok(tape.scale(mean, -1.0))
}

/// Mean categorical cross-entropy of `m×C` probabilities against `labels`.
pub fn class_cross_entropy(tape: &mut Tape, probs: Var, labels: &[usize]) -> Result<Var> {
    let (m, c) = {
        let p = tape.value(probs);
        (p.rows(), p.cols())
    };
    if m == 0 {
        return Err(BdgError::DegenerateBatch("class_cross_entropy"));
    }
    if labels.len() != m {
        return Err(BdgError::Dimension {
            op: "class_cross_entropy",
            lhs: vec![m, c],
            rhs: vec![labels.len()],
        });
    }
    check_labels(labels, c)?;
    let mut onehot = Tensor::zeros(&[m, c]);
    for (i, &l) in labels.iter().enumerate() {
        onehot.data_mut()[i * c + l] = 1.0;
    }
    let mask = tape.constant(onehot);
    let logp = tape.log(probs)?;
    let picked = tape.mul(mask, logp)?;
    let total = tape.sum(picked)?;
    Ok(tape.scale(total, -1.0 / m as f64))
}

/// A GAN term split into its domain-discrimination and classification parts.
#[derive(Clone, Copy, Debug)]
pub struct GanTerms {
    pub dis: Var,
    pub cls: Var,
    pub total: Var,
}

fn gan_terms(tape: &mut Tape, dis: Vec<Var>, cls: Vec<Var>) -> Result<GanTerms> {
    let dis = sum_vars(tape, &dis)?;
    let cls = sum_vars(tape, &cls)?;
    let total = tape.add(dis, cls)?;
    Ok(GanTerms { dis, cls, total })
}

fn sum_vars(tape: &mut Tape, vars: &[Var]) -> Result<Var> {
    let (first, rest) = vars
        .split_first()
        .ok_or_else(|| BdgError::Contract("empty loss sum".into()))?;
    let mut acc = *first;
    for &v in rest {
        acc = tape.add(acc, v)?;
    }
    Ok(acc)
}

/// Source-branch GAN loss from precomputed `C_s` outputs.
///
/// `real_out` is `C_s(X_s)`; it is only read on the classifier side.
pub fn source_gan_from_outputs(
    tape: &mut Tape,
    real_out: Option<&ClassifierOutput>,
    fake_out: &ClassifierOutput,
    y_s: &[usize],
    side: Side,
) -> Result<GanTerms> {
    match side {
        Side::Classifier => {
            let real = real_out.ok_or_else(|| {
                BdgError::Contract("classifier-side source loss needs C_s(X_s)".into())
            })?;
            let d_real = binary_cross_entropy(tape, real.domain_prob, true)?;
            let d_fake = binary_cross_entropy(tape, fake_out.domain_prob, false)?;
            let c_real = class_cross_entropy(tape, real.class_probs, y_s)?;
            let c_fake = class_cross_entropy(tape, fake_out.class_probs, y_s)?;
            gan_terms(tape, vec![d_real, d_fake], vec![c_real, c_fake])
        }
        Side::Generator => {
            let d_fake = binary_cross_entropy(tape, fake_out.domain_prob, true)?;
            let c_fake = class_cross_entropy(tape, fake_out.class_probs, y_s)?;
            gan_terms(tape, vec![d_fake], vec![c_fake])
        }
    }
}

/// Source-branch GAN loss: `C_s` separates `X_s` (real) from `F_t` (fake)
/// while classifying both with `Y_s`.
pub fn source_gan_loss(
    tape: &mut Tape,
    c_s: &BoundClassifier,
    x_s: Var,
    y_s: &[usize],
    f_t: Var,
    side: Side,
) -> Result<GanTerms> {
    let fake = c_s.forward(tape, f_t)?;
    let real = match side {
        Side::Classifier => Some(c_s.forward(tape, x_s)?),
        Side::Generator => None,
    };
    source_gan_from_outputs(tape, real.as_ref(), &fake, y_s, side)
}

/// Target-branch GAN loss from precomputed `C_t(F_t)` and `C_t(F_s)`.
pub fn target_gan_from_outputs(
    tape: &mut Tape,
    ft_out: &ClassifierOutput,
    y_s: &[usize],
    fs_out: &ClassifierOutput,
    y_t_pseudo: &[usize],
    side: Side,
) -> Result<GanTerms> {
    // Domain head: 1 = source-origin. The generator side swaps both labels.
    let ft_is_source = side == Side::Classifier;
    let d_ft = binary_cross_entropy(tape, ft_out.domain_prob, ft_is_source)?;
    let d_fs = binary_cross_entropy(tape, fs_out.domain_prob, !ft_is_source)?;
    let c_ft = class_cross_entropy(tape, ft_out.class_probs, y_s)?;
    let c_fs = class_cross_entropy(tape, fs_out.class_probs, y_t_pseudo)?;
    gan_terms(tape, vec![d_ft, d_fs], vec![c_ft, c_fs])
}

/// Target-branch GAN loss: `C_t` tells `F_t` (source-origin) from `F_s`
/// (target-origin) and classifies them with `Y_s` and `Ŷ_t`.
pub fn target_gan_loss(
    tape: &mut Tape,
    c_t: &BoundClassifier,
    f_t: Var,
    y_s: &[usize],
    f_s: Var,
    y_t_pseudo: &[usize],
    side: Side,
) -> Result<GanTerms> {
    let ft_out = c_t.forward(tape, f_t)?;
    let fs_out = c_t.forward(tape, f_s)?;
    target_gan_from_outputs(tape, &ft_out, y_s, &fs_out, y_t_pseudo, side)
}

/// Single-direction GAN loss used by the one-generator ablations: one
/// classifier separates `X_s` (real) from `F_s = G_t(X_t)` (fake) and
/// classifies them with `Y_s` and `Ŷ_t`.
pub fn single_gan_from_outputs(
    tape: &mut Tape,
    real_out: Option<&ClassifierOutput>,
    y_s: &[usize],
    fake_out: &ClassifierOutput,
    y_t_pseudo: &[usize],
    side: Side,
) -> Result<GanTerms> {
    match side {
        Side::Classifier => {
            let real = real_out.ok_or_else(|| {
                BdgError::Contract("classifier-side single loss needs C(X_s)".into())
            })?;
            let d_real = binary_cross_entropy(tape, real.domain_prob, true)?;
            let d_fake = binary_cross_entropy(tape, fake_out.domain_prob, false)?;
            let c_real = class_cross_entropy(tape, real.class_probs, y_s)?;
            let c_fake = class_cross_entropy(tape, fake_out.class_probs, y_t_pseudo)?;
            gan_terms(tape, vec![d_real, d_fake], vec![c_real, c_fake])
        }
        Side::Generator => {
            let d_fake = binary_cross_entropy(tape, fake_out.domain_prob, true)?;
            let c_fake = class_cross_entropy(tape, fake_out.class_probs, y_t_pseudo)?;
            gan_terms(tape, vec![d_fake], vec![c_fake])
        }
    }
}

/// `‖mean(F) − mean(X)‖₂`: linear-kernel mean-embedding distance.
pub fn global_mmd(tape: &mut Tape, f: Var, x: Var) -> Result<Var> {
    if rows_of(tape, f) == 0 || rows_of(tape, x) == 0 {
        return Err(BdgError::DegenerateBatch("global_mmd"));
    }
    let mf = tape.mean_rows(f)?;
    let mx = tape.mean_rows(x)?;
    let diff = tape.sub(mf, mx)?;
    tape.l2_norm(diff)
}

/// Result of [`class_mmd`] with its empty-class diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct ClassMmd {
    pub value: Var,
    /// Classes skipped because one side had no sample of that class.
    pub skipped: usize,
    /// Classes present on both sides.
    pub matched: usize,
}

/// Row weights that average the rows labeled `class`, or `None` if absent.
fn class_mean_weights(labels: &[usize], class: usize) -> Option<Tensor> {
    let count = labels.iter().filter(|&&l| l == class).count();
    if count == 0 {
        return None;
    }
    let w = 1.0 / count as f64;
    let data = labels.iter().map(|&l| if l == class { w } else { 0.0 }).collect();
    Some(Tensor::matrix(1, labels.len(), data).expect("weight row"))
}

/// `Σ_c ‖mean(F_c) − mean(X_c)‖₂` over classes present on both sides.
pub fn class_mmd(
    tape: &mut Tape,
    f: Var,
    labels_f: &[usize],
    x: Var,
    labels_x: &[usize],
    classes: usize,
) -> Result<ClassMmd> {
    if rows_of(tape, f) != labels_f.len() || rows_of(tape, x) != labels_x.len() {
        return Err(BdgError::Dimension {
            op: "class_mmd",
            lhs: vec![rows_of(tape, f), rows_of(tape, x)],
            rhs: vec![labels_f.len(), labels_x.len()],
        });
    }
    check_labels(labels_f, classes)?;
    check_labels(labels_x, classes)?;
    let mut terms = Vec::new();
    let mut skipped = 0;
    for c in 0..classes {
        match (class_mean_weights(labels_f, c), class_mean_weights(labels_x, c)) {
            (Some(wf), Some(wx)) => {
                let wf = tape.constant(wf);
                let wx = tape.constant(wx);
                let mf = tape.matmul(wf, f)?;
                let mx = tape.matmul(wx, x)?;
                let diff = tape.sub(mf, mx)?;
                terms.push(tape.l2_norm(diff)?);
            }
            _ => skipped += 1,
        }
    }
    let matched = terms.len();
    let value = if terms.is_empty() {
        tape.constant(Tensor::scalar(0.0))
    } else {
        sum_vars(tape, &terms)?
    };
    Ok(ClassMmd {
        value,
        skipped,
        matched,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct MmdTerms {
    pub global: Var,
    pub class: ClassMmd,
    /// `global + class / C`.
    pub total: Var,
}

/// `gMMD + cMMD / C` for one branch.
#[allow(clippy::too_many_arguments)]
pub fn mmd_loss(
    tape: &mut Tape,
    branch: Branch,
    f: Var,
    x: Var,
    y_s: &[usize],
    y_t_pseudo: &[usize],
    classes: usize,
) -> Result<MmdTerms> {
    let (labels_f, labels_x) = match branch {
        Branch::Source => (y_s, y_t_pseudo),
        Branch::Target => (y_t_pseudo, y_s),
    };
    let global = global_mmd(tape, f, x)?;
    let class = class_mmd(tape, f, labels_f, x, labels_x, classes)?;
    let scaled = tape.scale(class.value, 1.0 / classes as f64);
    let total = tape.add(global, scaled)?;
    Ok(MmdTerms {
        global,
        class,
        total,
    })
}

/// Batch-mean L1 distance between two `m×C` probability matrices.
pub fn consistency_from_probs(tape: &mut Tape, probs_t: Var, probs_s: Var) -> Result<Var> {
    let m = rows_of(tape, probs_t);
    if m == 0 {
        return Err(BdgError::DegenerateBatch("consistency_loss"));
    }
    let diff = tape.sub(probs_t, probs_s)?;
    let l1 = tape.l1_norm(diff)?;
    Ok(tape.scale(l1, 1.0 / m as f64))
}

/// Mean over `F_s` rows of `‖C_t(F_s) − C_s(F_s)‖₁`.
pub fn consistency_loss(
    tape: &mut Tape,
    c_t: &BoundClassifier,
    c_s: &BoundClassifier,
    f_s: Var,
) -> Result<Var> {
    if rows_of(tape, f_s) == 0 {
        return Err(BdgError::DegenerateBatch("consistency_loss"));
    }
    let pt = c_t.forward(tape, f_s)?;
    let ps = c_s.forward(tape, f_s)?;
    consistency_from_probs(tape, pt.class_probs, ps.class_probs)
}

/// Mean class cross-entropy of `C_0` on the labeled source batch.
pub fn pretrain_loss(tape: &mut Tape, c0: &BoundClassifier, x_s: Var, y_s: &[usize]) -> Result<Var> {
    if rows_of(tape, x_s) == 0 {
        return Err(BdgError::DegenerateBatch("pretrain_loss"));
    }
    let out = c0.forward(tape, x_s)?;
    class_cross_entropy(tape, out.class_probs, y_s)
}

/// Which optional terms enter the objective, and their weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub lambda: f64,
    pub gamma: f64,
    pub use_mmd: bool,
    pub use_consistency: bool,
}

impl Objective {
    pub fn full(lambda: f64, gamma: f64) -> Self {
        Self {
            lambda,
            gamma,
            use_mmd: true,
            use_consistency: true,
        }
    }
}

/// Models and batch already placed on a tape.
///
/// The bi-directional setup has both generators and both classifiers. The
/// single-direction setup has only `g_t` and uses `c_s` as its one
/// classifier.
pub struct Network {
    pub x_s: Var,
    pub x_t: Var,
    pub g_s: Option<BoundGenerator>,
    pub g_t: BoundGenerator,
    pub c_s: BoundClassifier,
    pub c_t: Option<BoundClassifier>,
}

/// Individual objective terms, all scalar tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub gan_s: Option<GanTerms>,
    pub gan_t: GanTerms,
    pub mmd_s: Option<MmdTerms>,
    pub mmd_t: MmdTerms,
    pub con: Option<Var>,
    /// Weighted objective for the requested side.
    pub total: Var,
    pub f_t: Option<Var>,
    pub f_s: Var,
}

impl LossTerms {
    pub fn skipped_classes(&self) -> usize {
        self.mmd_t.class.skipped + self.mmd_s.map_or(0, |m| m.class.skipped)
    }
}

/// Builds every objective term on `tape` and combines them for `side`.
///
/// The generator side adds `λ(L^s_MMD + L^t_MMD) + γ·L_con` to the flipped GAN
/// terms; the classifier side adds only `γ·L_con`. MMD terms are always
/// evaluated so that they can be logged.
pub fn total_loss(
    tape: &mut Tape,
    net: &Network,
    bundle: &BatchBundle,
    objective: &Objective,
    side: Side,
) -> Result<LossTerms> {
    let y_s = &bundle.y_s;
    let y_t = &bundle.y_t_pseudo;
    let classes = bundle.classes;
    let f_s = net.g_t.forward(tape, net.x_t)?;
    let f_t = match &net.g_s {
        Some(g) => Some(g.forward(tape, net.x_s)?),
        None => None,
    };

    let xs_out = match side {
        Side::Classifier => Some(net.c_s.forward(tape, net.x_s)?),
        Side::Generator => None,
    };

    let mut parts = Vec::new();
    let (gan_s, gan_t, mmd_s, con) = match (f_t, &net.c_t) {
        (Some(f_t), Some(c_t)) => {
            let cs_ft = net.c_s.forward(tape, f_t)?;
            let ct_ft = c_t.forward(tape, f_t)?;
            let ct_fs = c_t.forward(tape, f_s)?;
            let gan_s = source_gan_from_outputs(tape, xs_out.as_ref(), &cs_ft, y_s, side)?;
            let gan_t = target_gan_from_outputs(tape, &ct_ft, y_s, &ct_fs, y_t, side)?;
            let mmd_s = mmd_loss(tape, Branch::Source, f_t, net.x_t, y_s, y_t, classes)?;
            let con = if objective.use_consistency {
                let cs_fs = net.c_s.forward(tape, f_s)?;
                Some(consistency_from_probs(tape, ct_fs.class_probs, cs_fs.class_probs)?)
            } else {
                None
            };
            parts.push(gan_s.total);
            parts.push(gan_t.total);
            (Some(gan_s), gan_t, Some(mmd_s), con)
        }
        (None, None) => {
            let c_fs = net.c_s.forward(tape, f_s)?;
            let gan = single_gan_from_outputs(tape, xs_out.as_ref(), y_s, &c_fs, y_t, side)?;
            parts.push(gan.total);
            (None, gan, None, None)
        }
        _ => {
            return Err(BdgError::Contract(
                "network must have both or neither of g_s and c_t".into(),
            ))
        }
    };
    let mmd_t = mmd_loss(tape, Branch::Target, f_s, net.x_s, y_s, y_t, classes)?;

    if side == Side::Generator && objective.use_mmd {
        let mmd = match mmd_s {
            Some(s) => tape.add(s.total, mmd_t.total)?,
            None => mmd_t.total,
        };
        parts.push(tape.scale(mmd, objective.lambda));
    }
    if let Some(c) = con {
        parts.push(tape.scale(c, objective.gamma));
    }
    let total = sum_vars(tape, &parts)?;
    Ok(LossTerms {
        gan_s,
        gan_t,
        mmd_s,
        mmd_t,
        con,
        total,
        f_t,
        f_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Tensor {
        Tensor::matrix(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn bce_saturation_and_coin_flip() {
        let mut tape = Tape::new();
        let p = tape.constant(col(&[1.0, 1.0]));
        let real = binary_cross_entropy(&mut tape, p, true).unwrap();
        assert_eq!(tape.value(real).item(), 0.0);
        let q = tape.constant(col(&[0.0, 0.0]));
        let fake = binary_cross_entropy(&mut tape, q, false).unwrap();
        assert_eq!(tape.value(fake).item(), 0.0);
        let half = tape.constant(col(&[0.5; 4]));
        let b = binary_cross_entropy(&mut tape, half, true).unwrap();
        assert!((tape.value(b).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_uniform_and_perfect() {
        let mut tape = Tape::new();
        let uniform = tape.constant(Tensor::filled(&[3, 4], 0.25));
        let ce = class_cross_entropy(&mut tape, uniform, &[0, 1, 3]).unwrap();
        assert!((tape.value(ce).item() - 4f64.ln()).abs() < 1e-15);

        let onehot = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let p = tape.constant(onehot);
        let ce = class_cross_entropy(&mut tape, p, &[0, 1]).unwrap();
        assert!(tape.value(ce).item().abs() < 1e-12);
        assert!(matches!(
            class_cross_entropy(&mut tape, p, &[0, 2]),
            Err(BdgError::Validation(_))
        ));
    }

    #[test]
    fn empty_batches_rejected() {
        let mut tape = Tape::new();
        let empty = tape.constant(Tensor::zeros(&[0, 2]));
        let x = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(global_mmd(&mut tape, empty, x), Err(BdgError::DegenerateBatch(_))));
        let e1 = tape.constant(Tensor::zeros(&[0, 1]));
        assert!(matches!(
            binary_cross_entropy(&mut tape, e1, true),
            Err(BdgError::DegenerateBatch(_))
        ));
        assert!(matches!(
            class_cross_entropy(&mut tape, empty, &[]),
            Err(BdgError::DegenerateBatch(_))
        ));
        assert!(matches!(
            consistency_from_probs(&mut tape, empty, empty),
            Err(BdgError::DegenerateBatch(_))
        ));
        assert!(BatchBundle::new(
            Tensor::zeros(&[0, 2]),
            vec![],
            Tensor::zeros(&[1, 2]),
            vec![0],
            2
        )
        .is_err());
    }

    #[test]
    fn singleton_mmd() {
        let mut tape = Tape::new();
        let f = tape.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let x = tape.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap());
        let g = global_mmd(&mut tape, f, x).unwrap();
        assert_eq!(tape.value(g).item(), 5.0);
    }

    #[test]
    fn class_mmd_skips_and_flags_empty_classes() {
        let mut tape = Tape::new();
        let f = tape.constant(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let x = tape.constant(Tensor::matrix(2, 1, vec![5.0, 7.0]).unwrap());
        let r = class_mmd(&mut tape, f, &[0, 0], x, &[1, 2], 3).unwrap();
        assert_eq!(r.matched, 0);
        assert_eq!(r.skipped, 3);
        assert_eq!(tape.value(r.value).item(), 0.0);

        let r = class_mmd(&mut tape, f, &[0, 1], x, &[1, 1], 3).unwrap();
        assert_eq!(r.matched, 1);
        assert_eq!(r.skipped, 2);
        assert_eq!(tape.value(r.value).item(), 4.0);
    }

    #[test]
    fn disjoint_one_hot_consistency_is_two() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let b = tape.constant(Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap());
        let c = consistency_from_probs(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(c).item(), 2.0);
    }
}
