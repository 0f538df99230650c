//! Three-step optimization: pretrain `C_0` and freeze pseudo labels, then
//! alternate one classifier step and one generator step per minibatch.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::{BatchSampler, DomainDataset, SamplingStrategy};
use crate::error::{BdgError, Result};
use crate::losses::{self, BatchBundle, LossTerms, Network, Objective, Side};
use crate::nn::{collect_grads, Classifier, Generator, Optimizer, Parameterized};

/// Ablation variant: which models exist and which terms are optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One generator (`G_t`), one classifier, GAN terms only.
    V1,
    /// `V1` plus the target-branch MMD.
    V2,
    /// Both generators and classifiers, GAN terms only.
    V3,
    /// GAN terms plus consistency.
    V4,
    /// GAN terms plus MMD.
    V5,
    /// Full objective.
    Bdg,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::V1,
        Variant::V2,
        Variant::V3,
        Variant::V4,
        Variant::V5,
        Variant::Bdg,
    ];

    pub fn bidirectional(self) -> bool {
        !matches!(self, Variant::V1 | Variant::V2)
    }

    pub fn uses_mmd(self) -> bool {
        matches!(self, Variant::V2 | Variant::V5 | Variant::Bdg)
    }

    pub fn uses_consistency(self) -> bool {
        matches!(self, Variant::V4 | Variant::Bdg)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::V3 => "v3",
            Variant::V4 => "v4",
            Variant::V5 => "v5",
            Variant::Bdg => "bdg",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = BdgError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| BdgError::Config(format!("unknown variant {s:?}")))
    }
}

/// All training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the MMD terms.
    pub lambda: f64,
    /// Weight of the consistency term.
    pub gamma: f64,
    pub classifier_lr: f64,
    pub momentum: f64,
    pub generator_lr: f64,
    /// Rows drawn from each domain per iteration.
    pub batch_size: usize,
    pub pretrain_iters: usize,
    pub iters: usize,
    pub hidden: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Recompute pseudo labels from `C_s` every this many iterations; 0 = never.
    pub pseudo_refresh: usize,
    /// Iterations between metrics rows.
    pub eval_period: usize,
    pub sampling: SamplingStrategy,
    /// Fill the wall-clock column; off keeps metrics byte-reproducible.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 1.0,
            classifier_lr: 5e-4,
            momentum: 0.9,
            generator_lr: 5e-4,
            batch_size: 64,
            pretrain_iters: 500,
            iters: 2000,
            hidden: 64,
            seed: 1,
            variant: Variant::Bdg,
            pseudo_refresh: 0,
            eval_period: 25,
            sampling: SamplingStrategy::ClassBalanced,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(BdgError::Config(m));
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("classifier_lr", self.classifier_lr),
            ("generator_lr", self.generator_lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.pretrain_iters == 0 {
            return fail("pretrain_iters must be >= 1: pseudo labels require C_0".into());
        }
        if self.iters == 0 {
            return fail("iters must be >= 1".into());
        }
        if self.batch_size == 0 || self.hidden == 0 || self.eval_period == 0 {
            return fail("batch_size, hidden and eval_period must be >= 1".into());
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        Objective {
            lambda: self.lambda,
            gamma: self.gamma,
            use_mmd: self.variant.uses_mmd(),
            use_consistency: self.variant.uses_consistency(),
        }
    }
}

/// One metrics row. Loss columns average the iterations since the previous
/// row; accuracies are measured at `iteration`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub gan_s: f64,
    pub gan_t: f64,
    pub mmd_s: f64,
    pub mmd_t: f64,
    pub con: f64,
    /// `C_s` on raw `X_t` against held-out labels.
    pub target_acc: Option<f64>,
    /// `C_t` on `F_s` (the single classifier for one-generator variants).
    pub secondary_acc: Option<f64>,
    pub skipped_classes: usize,
    pub wall_ms: u64,
}

impl MetricsRecord {
    pub const HEADER: [&'static str; 10] = [
        "iteration",
        "gan_s",
        "gan_t",
        "mmd_s",
        "mmd_t",
        "con",
        "target_acc",
        "secondary_acc",
        "skipped_classes",
        "wall_ms",
    ];

    pub fn mmd(&self) -> f64 {
        self.mmd_s + self.mmd_t
    }

    /// CSV fields in [`Self::HEADER`] order; absent accuracies are empty.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |a| a.to_string());
        vec![
            self.iteration.to_string(),
            self.gan_s.to_string(),
            self.gan_t.to_string(),
            self.mmd_s.to_string(),
            self.mmd_t.to_string(),
            self.con.to_string(),
            opt(self.target_acc),
            opt(self.secondary_acc),
            self.skipped_classes.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

/// Streams metrics rows to a CSV file, flushing after each row.
pub struct MetricsWriter {
    inner: csv::Writer<std::fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &std::path::Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(csv_io)?;
        inner.write_record(MetricsRecord::HEADER).map_err(csv_io)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        self.inner.write_record(record.csv_fields()).map_err(csv_io)?;
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> BdgError {
    BdgError::Io(e.to_string())
}

/// Scalar values of one objective evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub total: f64,
    pub gan_s: f64,
    pub gan_t: f64,
    pub mmd_s: f64,
    pub mmd_t: f64,
    pub con: f64,
    pub skipped_classes: usize,
}

impl StepReport {
    fn from_terms(tape: &Tape, terms: &LossTerms) -> Self {
        let v = |x| tape.value(x).item();
        Self {
            total: v(terms.total),
            gan_s: terms.gan_s.map_or(0.0, |g| v(g.total)),
            gan_t: v(terms.gan_t.total),
            mmd_s: terms.mmd_s.map_or(0.0, |m| v(m.total)),
            mmd_t: v(terms.mmd_t.total),
            con: terms.con.map_or(0.0, v),
            skipped_classes: terms.skipped_classes(),
        }
    }
}

/// Models, optimizers and frozen pseudo labels.
#[derive(Clone, Debug)]
pub struct TrainerState {
    pub c0: Classifier,
    pub g_s: Option<Generator>,
    pub g_t: Generator,
    pub c_s: Classifier,
    pub c_t: Option<Classifier>,
    pub opt_c0: Optimizer,
    pub opt_g_s: Option<Optimizer>,
    pub opt_g_t: Optimizer,
    pub opt_c_s: Optimizer,
    pub opt_c_t: Option<Optimizer>,
    pub pseudo_labels: Vec<usize>,
    pub pretrained: bool,
    pub iteration: usize,
}

impl TrainerState {
    /// Initializes the models the variant needs from `seed`.
    pub fn new(config: &TrainConfig, dim: usize, classes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden;
        let bi = config.variant.bidirectional();
        let c0 = Classifier::new(dim, h, classes, &mut rng);
        let c_s = Classifier::new(dim, h, classes, &mut rng);
        let c_t = Classifier::new(dim, h, classes, &mut rng);
        let g_t = Generator::new(dim, h, &mut rng);
        let g_s = Generator::new(dim, h, &mut rng);
        let sgd = || Optimizer::sgd_momentum(config.classifier_lr, config.momentum);
        let adam = || Optimizer::adam(config.generator_lr);
        Self {
            c0,
            g_s: bi.then_some(g_s),
            g_t,
            c_s,
            c_t: bi.then_some(c_t),
            opt_c0: sgd(),
            opt_g_s: bi.then(adam),
            opt_g_t: adam(),
            opt_c_s: sgd(),
            opt_c_t: bi.then(sgd),
            pseudo_labels: Vec::new(),
            pretrained: false,
            iteration: 0,
        }
    }

    /// Parameters updated during the main loop.
    pub fn trained_param_count(&self) -> usize {
        self.g_t.param_count()
            + self.c_s.param_count()
            + self.g_s.as_ref().map_or(0, Parameterized::param_count)
            + self.c_t.as_ref().map_or(0, Parameterized::param_count)
    }

    pub fn generator_snapshot(&self) -> Vec<Tensor> {
        let mut out = self.g_t.snapshot();
        if let Some(g) = &self.g_s {
            out.extend(g.snapshot());
        }
        out
    }

    pub fn classifier_snapshot(&self) -> Vec<Tensor> {
        let mut out = self.c_s.snapshot();
        if let Some(c) = &self.c_t {
            out.extend(c.snapshot());
        }
        out
    }
}

/// Fraction of `predicted` equal to `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / predicted.len() as f64
}

fn check_finite(what: &str, grads: &[Tensor]) -> Result<()> {
    if grads.iter().all(Tensor::all_finite) {
        Ok(())
    } else {
        Err(BdgError::Divergence(format!("non-finite gradient in {what}")))
    }
}

fn check_loss(what: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(BdgError::Divergence(format!("{what} loss is {value}")))
    }
}

/// Drives training over one source/target pair.
pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub state: TrainerState,
    source: &'a DomainDataset,
    target: &'a DomainDataset,
    source_labels: &'a [usize],
    source_sampler: BatchSampler,
    target_sampler: Option<BatchSampler>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: TrainConfig,
        source: &'a DomainDataset,
        target: &'a DomainDataset,
    ) -> Result<Self> {
        config.validate()?;
        let source_labels = source
            .labels
            .as_deref()
            .ok_or_else(|| BdgError::Validation("source dataset must be labeled".into()))?;
        if source.dim() != target.dim() || source.classes != target.classes {
            return Err(BdgError::Validation(format!(
                "source (d={}, C={}) and target (d={}, C={}) disagree",
                source.dim(),
                source.classes,
                target.dim(),
                target.classes
            )));
        }
        if source.is_empty() || target.is_empty() {
            return Err(BdgError::DegenerateBatch("trainer datasets"));
        }
        let state = TrainerState::new(&config, source.dim(), source.classes);
        let source_sampler = BatchSampler::new(
            source.len(),
            Some(source_labels),
            source.classes,
            config.sampling,
            config.seed.wrapping_mul(2).wrapping_add(1),
        )?;
        Ok(Self {
            config,
            state,
            source,
            target,
            source_labels,
            source_sampler,
            target_sampler: None,
        })
    }

    fn source_batch(&mut self) -> Result<(Tensor, Vec<usize>)> {
        let idx = self.source_sampler.next_batch(self.config.batch_size)?;
        let x = self.source.features.select_rows(&idx);
        let y = idx.iter().map(|&i| self.source_labels[i]).collect();
        Ok((x, y))
    }

    fn rebuild_target_sampler(&mut self) -> Result<()> {
        self.target_sampler = Some(BatchSampler::new(
            self.target.len(),
            Some(&self.state.pseudo_labels),
            self.target.classes,
            self.config.sampling,
            self.config
                .seed
                .wrapping_mul(2)
                .wrapping_add(2)
                .wrapping_add(self.state.iteration as u64),
        )?);
        Ok(())
    }

    /// Step A: fits `C_0` on labeled source batches, then labels all of `X_t`.
    pub fn pretrain(&mut self) -> Result<f64> {
        let mut last = f64::NAN;
        for _ in 0..self.config.pretrain_iters {
            let (x, y) = self.source_batch()?;
            let mut tape = Tape::new();
            let c0 = self.state.c0.bind(&mut tape, true);
            let xv = tape.constant(x);
            let loss = losses::pretrain_loss(&mut tape, &c0, xv, &y)?;
            last = tape.value(loss).item();
            check_loss("pretrain", last)?;
            tape.backward(loss)?;
            let grads = collect_grads(&tape, &c0.vars());
            check_finite("C_0", &grads)?;
            self.state.opt_c0.step(self.state.c0.params_mut(), &grads)?;
        }
        self.state.pseudo_labels = self.predict_target(&self.state.c0)?;
        self.state.pretrained = true;
        self.rebuild_target_sampler()?;
        Ok(last)
    }

    fn predict_target(&self, c: &Classifier) -> Result<Vec<usize>> {
        Ok(c.predict(&self.target.features)?.class_probs.argmax_rows())
    }

    /// Draws the next source and target minibatches.
    pub fn next_bundle(&mut self) -> Result<BatchBundle> {
        if !self.state.pretrained {
            return Err(BdgError::Contract("Step A must run before sampling bundles".into()));
        }
        let (x_s, y_s) = self.source_batch()?;
        let idx = self
            .target_sampler
            .as_mut()
            .expect("sampler built in pretrain")
            .next_batch(self.config.batch_size)?;
        let x_t = self.target.features.select_rows(&idx);
        let y_t = idx.iter().map(|&i| self.state.pseudo_labels[i]).collect();
        BatchBundle::new(x_s, y_s, x_t, y_t, self.source.classes)
    }

    fn network(&self, tape: &mut Tape, bundle: &BatchBundle, side: Side) -> Network {
        let train_cls = side == Side::Classifier;
        let s = &self.state;
        let x_s = tape.constant(bundle.x_s.clone());
        let x_t = tape.constant(bundle.x_t.clone());
        Network {
            x_s,
            x_t,
            g_s: s.g_s.as_ref().map(|g| g.bind(tape, !train_cls)),
            g_t: s.g_t.bind(tape, !train_cls),
            c_s: s.c_s.bind(tape, train_cls),
            c_t: s.c_t.as_ref().map(|c| c.bind(tape, train_cls)),
        }
    }

    /// Step B: one SGD-momentum step on the classifiers, generators fixed.
    pub fn step_b(&mut self, bundle: &BatchBundle) -> Result<StepReport> {
        if !self.state.pretrained {
            return Err(BdgError::Contract("Step B requires Step A".into()));
        }
        let mut tape = Tape::new();
        let net = self.network(&mut tape, bundle, Side::Classifier);
        let terms = losses::total_loss(
            &mut tape,
            &net,
            bundle,
            &self.config.objective(),
            Side::Classifier,
        )?;
        let report = StepReport::from_terms(&tape, &terms);
        check_loss("classifier", report.total)?;
        tape.backward(terms.total)?;

        let gs = collect_grads(&tape, &net.c_s.vars());
        check_finite("C_s", &gs)?;
        let gt = match &net.c_t {
            Some(c) => {
                let g = collect_grads(&tape, &c.vars());
                check_finite("C_t", &g)?;
                Some(g)
            }
            None => None,
        };
        let st = &mut self.state;
        st.opt_c_s.step(st.c_s.params_mut(), &gs)?;
        if let (Some(c), Some(opt), Some(g)) = (st.c_t.as_mut(), st.opt_c_t.as_mut(), gt) {
            opt.step(c.params_mut(), &g)?;
        }
        Ok(report)
    }

    /// Step C: one Adam step on the generators with label-switched GAN terms,
    /// classifiers fixed.
    pub fn step_c(&mut self, bundle: &BatchBundle) -> Result<StepReport> {
        if !self.state.pretrained {
            return Err(BdgError::Contract("Step C requires Step A".into()));
        }
        let mut tape = Tape::new();
        let net = self.network(&mut tape, bundle, Side::Generator);
        let terms = losses::total_loss(
            &mut tape,
            &net,
            bundle,
            &self.config.objective(),
            Side::Generator,
        )?;
        let report = StepReport::from_terms(&tape, &terms);
        check_loss("generator", report.total)?;
        tape.backward(terms.total)?;

        let gt = collect_grads(&tape, &net.g_t.vars());
        check_finite("G_t", &gt)?;
        let gs = match &net.g_s {
            Some(g) => {
                let grads = collect_grads(&tape, &g.vars());
                check_finite("G_s", &grads)?;
                Some(grads)
            }
            None => None,
        };
        let st = &mut self.state;
        st.opt_g_t.step(st.g_t.params_mut(), &gt)?;
        if let (Some(g), Some(opt), Some(grads)) = (st.g_s.as_mut(), st.opt_g_s.as_mut(), gs) {
            opt.step(g.params_mut(), &grads)?;
        }
        Ok(report)
    }

    /// One main-loop iteration: sample, Step B, Step C.
    pub fn iterate(&mut self) -> Result<(StepReport, StepReport)> {
        let bundle = self.next_bundle()?;
        let b = self.step_b(&bundle)?;
        let c = self.step_c(&bundle)?;
        self.state.iteration += 1;
        let refresh = self.config.pseudo_refresh;
        if refresh > 0 && self.state.iteration.is_multiple_of(refresh) {
            self.state.pseudo_labels = self.predict_target(&self.state.c_s)?;
            self.rebuild_target_sampler()?;
        }
        Ok((b, c))
    }

    /// `(C_s on X_t, secondary)` accuracies against held-out target labels.
    pub fn evaluate(&self) -> Result<(Option<f64>, Option<f64>)> {
        let Some(truth) = self.target.labels.as_deref() else {
            return Ok((None, None));
        };
        let primary = accuracy(&self.predict_target(&self.state.c_s)?, truth);
        let f_s = self.state.g_t.apply(&self.target.features)?;
        let second = self.state.c_t.as_ref().unwrap_or(&self.state.c_s);
        let secondary = accuracy(&second.predict(&f_s)?.class_probs.argmax_rows(), truth);
        Ok((Some(primary), Some(secondary)))
    }

    /// Accuracy of the pretrained `C_0` on `X_t` (the source-only baseline).
    pub fn baseline_accuracy(&self) -> Option<f64> {
        let truth = self.target.labels.as_deref()?;
        Some(accuracy(&self.state.pseudo_labels, truth))
    }
}

/// Outcome of a complete run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub state: TrainerState,
    pub metrics: Vec<MetricsRecord>,
    /// `C_0` accuracy on `X_t`, i.e. the pseudo-label accuracy.
    pub baseline_acc: Option<f64>,
    pub final_acc: Option<f64>,
}

/// Step A, then `iters` alternations of Steps B and C, emitting one metrics
/// row every `eval_period` iterations (and after the last one) to `sink`.
pub fn run_with<F>(
    config: &TrainConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    mut sink: F,
) -> Result<RunSummary>
where
    F: FnMut(&MetricsRecord) -> Result<()>,
{
    let start = Instant::now();
    let mut trainer = Trainer::new(config.clone(), source, target)?;
    trainer.pretrain()?;
    let baseline_acc = trainer.baseline_accuracy();

    let mut metrics = Vec::new();
    let mut acc = StepReport::default();
    let mut pending = 0usize;
    for it in 1..=config.iters {
        let (b, _c) = trainer.iterate()?;
        acc.gan_s += b.gan_s;
        acc.gan_t += b.gan_t;
        acc.mmd_s += b.mmd_s;
        acc.mmd_t += b.mmd_t;
        acc.con += b.con;
        acc.skipped_classes += b.skipped_classes;
        pending += 1;
        if it % config.eval_period == 0 || it == config.iters {
            let (target_acc, secondary_acc) = trainer.evaluate()?;
            let n = pending as f64;
            let record = MetricsRecord {
                iteration: it,
                gan_s: acc.gan_s / n,
                gan_t: acc.gan_t / n,
                mmd_s: acc.mmd_s / n,
                mmd_t: acc.mmd_t / n,
                con: acc.con / n,
                target_acc,
                secondary_acc,
                skipped_classes: acc.skipped_classes,
                wall_ms: if config.record_timing {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
            };
            sink(&record)?;
            metrics.push(record);
            acc = StepReport::default();
            pending = 0;
        }
    }
    let final_acc = metrics.last().and_then(|m| m.target_acc);
    Ok(RunSummary {
        state: trainer.state,
        metrics,
        baseline_acc,
        final_acc,
    })
}

pub fn run(config: &TrainConfig, source: &DomainDataset, target: &DomainDataset) -> Result<RunSummary> {
    run_with(config, source, target, |_| Ok(()))
}

/// Runs `config` with its variant replaced by `variant`.
pub fn run_variant(
    config: &TrainConfig,
    variant: Variant,
    source: &DomainDataset,
    target: &DomainDataset,
) -> Result<RunSummary> {
    let cfg = TrainConfig {
        variant,
        ..config.clone()
    };
    run(&cfg, source, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_structure() {
        assert!(!Variant::V1.bidirectional() && !Variant::V1.uses_mmd());
        assert!(!Variant::V2.bidirectional() && Variant::V2.uses_mmd());
        assert!(Variant::V3.bidirectional() && !Variant::V3.uses_mmd());
        assert!(!Variant::V3.uses_consistency());
        assert!(Variant::V4.uses_consistency() && !Variant::V4.uses_mmd());
        assert!(Variant::V5.uses_mmd() && !Variant::V5.uses_consistency());
        assert!(Variant::Bdg.uses_mmd() && Variant::Bdg.uses_consistency());
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!((c.lambda, c.gamma), (1.0, 1.0));
        assert_eq!((c.classifier_lr, c.generator_lr, c.momentum), (5e-4, 5e-4, 0.9));
        c.validate().unwrap();
        let bad = [
            TrainConfig { lambda: -1.0, ..c.clone() },
            TrainConfig { gamma: f64::NAN, ..c.clone() },
            TrainConfig { pretrain_iters: 0, ..c.clone() },
            TrainConfig { iters: 0, ..c.clone() },
            TrainConfig { momentum: 1.0, ..c.clone() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(BdgError::Config(_))));
        }
    }

    #[test]
    fn single_direction_variants_omit_models() {
        let cfg = TrainConfig { variant: Variant::V1, ..TrainConfig::default() };
        let st = TrainerState::new(&cfg, 2, 5);
        assert!(st.g_s.is_none() && st.c_t.is_none() && st.opt_g_s.is_none());
        let full = TrainerState::new(&TrainConfig::default(), 2, 5);
        assert!(st.trained_param_count() < full.trained_param_count());
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 1, 2]), 0.75);
    }
}
