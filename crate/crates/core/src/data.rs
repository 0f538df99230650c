//! Synthetic domain pairs, the dataset file format and minibatch sampling.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{BdgError, Result};

/// Radius of the circle that carries the gaussian-ring class means.
pub const RING_RADIUS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

impl FromStr for Domain {
    type Err = BdgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(BdgError::Validation(format!("unknown domain tag {other:?}"))),
        }
    }
}

/// Feature matrix with optional labels.
///
/// Target labels, when present, are ground truth kept for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub features: Tensor,
    pub labels: Option<Vec<usize>>,
    pub domain: Domain,
    pub classes: usize,
}

impl DomainDataset {
    pub fn new(
        features: Tensor,
        labels: Option<Vec<usize>>,
        domain: Domain,
        classes: usize,
    ) -> Result<Self> {
        if !features.is_matrix() {
            return Err(BdgError::Validation("features must be a matrix".into()));
        }
        if classes == 0 {
            return Err(BdgError::Validation("class count must be positive".into()));
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(BdgError::Validation(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.rows()
                )));
            }
            if let Some(bad) = l.iter().find(|&&v| v >= classes) {
                return Err(BdgError::Validation(format!(
                    "label {bad} out of range for {classes} classes"
                )));
            }
        }
        if domain == Domain::Source && labels.is_none() {
            return Err(BdgError::Validation("source datasets must be labeled".into()));
        }
        Ok(Self {
            features,
            labels,
            domain,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Features and labels (if any) of the selected rows.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Option<Vec<usize>>) {
        let x = self.features.select_rows(indices);
        let y = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        (x, y)
    }

    /// Per-class row counts; zero counts when unlabeled.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        if let Some(l) = &self.labels {
            for &c in l {
                counts[c] += 1;
            }
        }
        counts
    }

    /// Mean feature vector of the rows labeled `class`.
    pub fn class_mean(&self, class: usize) -> Option<Vec<f64>> {
        let labels = self.labels.as_ref()?;
        let d = self.dim();
        let mut acc = vec![0.0; d];
        let mut n = 0;
        for (i, &l) in labels.iter().enumerate() {
            if l == class {
                n += 1;
                for (a, &x) in acc.iter_mut().zip(self.features.row(i)) {
                    *a += x;
                }
            }
        }
        (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
    }

    /// Writes the `d,C,domain` header followed by `f1,...,fd,label` rows.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{},{},{}", self.dim(), self.classes, self.domain)?;
        for r in 0..self.len() {
            for v in self.features.row(r) {
                // 17 significant digits round-trip every f64 exactly.
                write!(out, "{v:.16e},")?;
            }
            match &self.labels {
                Some(l) => writeln!(out, "{}", l[r])?,
                None => writeln!(out)?,
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(file);
        let mut records = reader.records();
        let header = records
            .next()
            .ok_or(BdgError::Parse {
                line: 1,
                msg: "missing header".into(),
            })?
            .map_err(|e| parse_err(1, e))?;
        if header.len() != 3 {
            return Err(BdgError::Parse {
                line: 1,
                msg: format!("header must be d,C,domain; found {} fields", header.len()),
            });
        }
        let dim: usize = parse_field(&header[0], 1, "d")?;
        let classes: usize = parse_field(&header[1], 1, "C")?;
        let domain: Domain = header[2].parse().map_err(|e: BdgError| BdgError::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        if dim == 0 || classes == 0 {
            return Err(BdgError::Parse {
                line: 1,
                msg: "d and C must be positive".into(),
            });
        }

        let mut data = Vec::new();
        let mut labels: Vec<Option<usize>> = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| parse_err(0, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != dim + 1 {
                return Err(BdgError::Parse {
                    line,
                    msg: format!(
                        "row has {} feature columns, expected {dim}",
                        rec.len().saturating_sub(1)
                    ),
                });
            }
            for j in 0..dim {
                let v: f64 = parse_field(&rec[j], line, "feature")?;
                if !v.is_finite() {
                    return Err(BdgError::Parse {
                        line,
                        msg: "non-finite feature".into(),
                    });
                }
                data.push(v);
            }
            let label = rec[dim].trim();
            if label.is_empty() {
                labels.push(None);
            } else {
                let l: usize = parse_field(label, line, "label")?;
                if l >= classes {
                    return Err(BdgError::Parse {
                        line,
                        msg: format!("label {l} >= C = {classes}"),
                    });
                }
                labels.push(Some(l));
            }
        }
        let n = labels.len();
        let labels = if labels.iter().all(Option::is_some) && n > 0 {
            Some(labels.into_iter().map(Option::unwrap).collect())
        } else if labels.iter().all(Option::is_none) {
            None
        } else {
            let line = labels.iter().position(Option::is_none).unwrap_or(0) + 2;
            return Err(BdgError::Parse {
                line,
                msg: "dataset mixes labeled and unlabeled rows".into(),
            });
        };
        let features = Tensor::matrix(n, dim, data)?;
        DomainDataset::new(features, labels, domain, classes).map_err(|e| BdgError::Parse {
            line: 1,
            msg: e.to_string(),
        })
    }
}

fn parse_err(line: usize, e: csv::Error) -> BdgError {
    let line = e
        .position()
        .map_or(line, |p| p.line() as usize);
    BdgError::Parse {
        line,
        msg: e.to_string(),
    }
}

fn parse_field<T: FromStr>(field: &str, line: usize, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| BdgError::Parse {
        line,
        msg: format!("invalid {what} value {field:?}"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    /// `C` isotropic gaussians with means evenly spaced on a circle.
    GaussianRing,
    /// Two interleaving half circles (requires `C = 2`).
    Moons,
}

/// Parameters of a synthetic source/target pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftSpec {
    pub kind: ShapeKind,
    pub classes: usize,
    pub per_domain: usize,
    pub dim: usize,
    /// Rotation of the first two coordinates, degrees.
    pub rotation_deg: f64,
    /// Added after rotation and scaling; empty means zero.
    pub translation: Vec<f64>,
    pub scale: f64,
    pub noise: f64,
    /// Relative class frequencies; empty means balanced.
    pub imbalance: Vec<f64>,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            kind: ShapeKind::GaussianRing,
            classes: 5,
            per_domain: 500,
            dim: 2,
            rotation_deg: 45.0,
            translation: Vec::new(),
            scale: 1.0,
            noise: 0.35,
            imbalance: Vec::new(),
            seed: 7,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(BdgError::Validation(m));
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.dim < 2 {
            return fail(format!("need at least 2 feature dimensions, got {}", self.dim));
        }
        if self.kind == ShapeKind::Moons && self.classes != 2 {
            return fail("moons requires exactly 2 classes".into());
        }
        if !self.translation.is_empty() && self.translation.len() != self.dim {
            return fail(format!(
                "translation has {} entries for dimension {}",
                self.translation.len(),
                self.dim
            ));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return fail(format!("scale must be positive, got {}", self.scale));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return fail(format!("noise must be non-negative, got {}", self.noise));
        }
        if !self.rotation_deg.is_finite() || self.translation.iter().any(|t| !t.is_finite()) {
            return fail("rotation and translation must be finite".into());
        }
        if !self.imbalance.is_empty() {
            if self.imbalance.len() != self.classes {
                return fail(format!(
                    "{} imbalance ratios for {} classes",
                    self.imbalance.len(),
                    self.classes
                ));
            }
            if self.imbalance.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return fail("imbalance ratios must be positive".into());
            }
        }
        if self.class_sizes().iter().any(|&n| n < 2) {
            return fail("every class needs at least 2 samples per domain".into());
        }
        Ok(())
    }

    /// True when the transform leaves the distribution unchanged.
    pub fn is_identity_shift(&self) -> bool {
        self.rotation_deg.rem_euclid(360.0) == 0.0
            && self.translation.iter().all(|&t| t == 0.0)
            && self.scale == 1.0
    }

    /// Per-class sample counts, summing to `per_domain`.
    pub fn class_sizes(&self) -> Vec<usize> {
        let weights: Vec<f64> = if self.imbalance.is_empty() {
            vec![1.0; self.classes]
        } else {
            self.imbalance.clone()
        };
        let total: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights
            .iter()
            .map(|w| w / total * self.per_domain as f64)
            .collect();
        let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        // Largest remainder, ties to the lower class id.
        let mut order: Vec<usize> = (0..self.classes).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = self.per_domain - sizes.iter().sum::<usize>();
        for &c in order.iter().take(short) {
            sizes[c] += 1;
        }
        sizes
    }

    /// Untransformed class-conditional mean of `class` in the source domain.
    pub fn source_mean(&self, class: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        match self.kind {
            ShapeKind::GaussianRing => {
                let angle = std::f64::consts::TAU * class as f64 / self.classes as f64;
                m[0] = RING_RADIUS * angle.cos();
                m[1] = RING_RADIUS * angle.sin();
            }
            ShapeKind::Moons => {
                // average of the half-circle arc, after centering
                let arc = 2.0 / std::f64::consts::PI * MOON_SCALE;
                if class == 0 {
                    m[0] = -0.5 * MOON_SCALE;
                    m[1] = arc - 0.25 * MOON_SCALE;
                } else {
                    m[0] = 0.5 * MOON_SCALE;
                    m[1] = 0.25 * MOON_SCALE - arc;
                }
            }
        }
        m
    }

    /// Applies `scale · R(θ) · x + translation` in place.
    pub fn transform(&self, x: &mut [f64]) {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let (a, b) = (x[0], x[1]);
        x[0] = c * a - s * b;
        x[1] = s * a + c * b;
        for v in x.iter_mut() {
            *v *= self.scale;
        }
        for (v, t) in x.iter_mut().zip(&self.translation) {
            *v += t;
        }
    }

    fn sample_domain(&self, rng: &mut ChaCha8Rng, domain: Domain) -> Result<DomainDataset> {
        let noise = Normal::new(0.0, self.noise)
            .map_err(|e| BdgError::Validation(format!("noise distribution: {e}")))?;
        let sizes = self.class_sizes();
        let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(self.per_domain);
        for (class, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                let mut x = match self.kind {
                    ShapeKind::GaussianRing => self.source_mean(class),
                    ShapeKind::Moons => moon_point(class, rng.random_range(0.0..std::f64::consts::PI), self.dim),
                };
                for v in x.iter_mut() {
                    *v += noise.sample(rng);
                }
                if domain == Domain::Target {
                    self.transform(&mut x);
                }
                rows.push((x, class));
            }
        }
        rows.shuffle(rng);
        let labels = rows.iter().map(|(_, c)| *c).collect();
        let data = rows.into_iter().flat_map(|(x, _)| x).collect();
        let features = Tensor::matrix(self.per_domain, self.dim, data)?;
        DomainDataset::new(features, Some(labels), domain, self.classes)
    }
}

const MOON_SCALE: f64 = 2.0;

fn moon_point(class: usize, t: f64, dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    let (px, py) = if class == 0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.5 - t.sin())
    };
    x[0] = (px - 0.5) * MOON_SCALE;
    x[1] = (py - 0.25) * MOON_SCALE;
    x
}

/// Draws a labeled source domain and its shifted target.
///
/// Both domains keep their ground-truth labels; the target's are for
/// evaluation only. Source and target use independent random streams.
pub fn make_domain_pair(spec: &ShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let source = spec.sample_domain(&mut rng, Domain::Source)?;
    rng.set_stream(1);
    let target = spec.sample_domain(&mut rng, Domain::Target)?;
    Ok((source, target))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Epoch-wise permutation, no replacement within an epoch.
    Uniform,
    /// `⌈size / C⌉` rows per class, shuffled and truncated to `size`.
    ClassBalanced,
}

/// Stateful minibatch index sampler with a private rng.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    strategy: SamplingStrategy,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    by_class: Vec<ClassQueue>,
}

#[derive(Clone, Debug)]
struct ClassQueue {
    members: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    /// `labels` drive class balancing; pass pseudo labels for target data.
    pub fn new(
        len: usize,
        labels: Option<&[usize]>,
        classes: usize,
        strategy: SamplingStrategy,
        seed: u64,
    ) -> Result<Self> {
        if len == 0 {
            return Err(BdgError::DegenerateBatch("sampler"));
        }
        let mut by_class = Vec::new();
        if strategy == SamplingStrategy::ClassBalanced {
            let labels = labels.ok_or_else(|| {
                BdgError::Contract("class-balanced sampling requires labels".into())
            })?;
            if labels.len() != len {
                return Err(BdgError::Contract(format!(
                    "{} labels for {len} rows",
                    labels.len()
                )));
            }
            by_class = (0..classes)
                .map(|c| ClassQueue {
                    members: (0..len).filter(|&i| labels[i] == c).collect(),
                    cursor: 0,
                })
                .collect();
        }
        Ok(Self {
            strategy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..len).collect(),
            cursor: len,
            by_class,
        })
    }

    pub fn for_dataset(ds: &DomainDataset, strategy: SamplingStrategy, seed: u64) -> Result<Self> {
        Self::new(ds.len(), ds.labels.as_deref(), ds.classes, strategy, seed)
    }

    pub fn next_batch(&mut self, size: usize) -> Result<Vec<usize>> {
        if size == 0 {
            return Err(BdgError::Contract("batch size must be at least 1".into()));
        }
        match self.strategy {
            SamplingStrategy::Uniform => {
                let mut out = Vec::with_capacity(size);
                while out.len() < size {
                    if self.cursor == self.order.len() {
                        self.order.shuffle(&mut self.rng);
                        self.cursor = 0;
                    }
                    out.push(self.order[self.cursor]);
                    self.cursor += 1;
                }
                Ok(out)
            }
            SamplingStrategy::ClassBalanced => {
                let nonempty = self.by_class.iter().filter(|q| !q.members.is_empty()).count();
                if nonempty == 0 {
                    return Err(BdgError::DegenerateBatch("class-balanced sampler"));
                }
                let per_class = size.div_ceil(nonempty);
                let mut out = Vec::with_capacity(per_class * nonempty);
                for q in self.by_class.iter_mut().filter(|q| !q.members.is_empty()) {
                    for _ in 0..per_class {
                        if q.cursor == 0 {
                            q.members.shuffle(&mut self.rng);
                        }
                        out.push(q.members[q.cursor]);
                        q.cursor = (q.cursor + 1) % q.members.len();
                    }
                }
                out.shuffle(&mut self.rng);
                out.truncate(size);
                Ok(out)
            }
        }
    }
}

/// One-shot draw from a fresh sampler seeded from `rng`.
pub fn sample_batch<R: Rng + ?Sized>(
    ds: &DomainDataset,
    size: usize,
    strategy: SamplingStrategy,
    rng: &mut R,
) -> Result<Vec<usize>> {
    BatchSampler::for_dataset(ds, strategy, rng.random())?.next_batch(size)
}
