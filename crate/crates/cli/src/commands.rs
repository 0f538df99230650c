use std::fs::File;
use std::path::{Path, PathBuf};

use bdg_core::data::DomainDataset;
use bdg_core::nn::{Checkpoint, Classifier, Generator};
use bdg_core::training::{run_with, MetricsWriter, RunSummary, TrainerState};
use bdg_core::{BdgError, Result, TrainConfig, Variant};
use rand::SeedableRng;
use rayon::prelude::*;

use crate::config::{create_dir, ExperimentConfig};
use crate::{AblateArgs, ConfigArgs, DataFlags, ExportArgs, GenDataArgs, SweepArgs, TrainArgs, TrainFlags};

fn base_config(common: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load_or_default(common.config.as_deref())?;
    if let Some(o) = &common.output {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut ExperimentConfig, f: &DataFlags) {
    let d = &mut cfg.data;
    if let Some(v) = f.kind {
        d.kind = v;
    }
    if let Some(v) = f.classes {
        d.classes = v;
    }
    if let Some(v) = f.per_domain {
        d.per_domain = v;
    }
    if let Some(v) = f.dim {
        d.dim = v;
    }
    if let Some(v) = f.rotation {
        d.rotation_deg = v;
    }
    if let Some(v) = &f.translation {
        d.translation = v.clone();
    }
    if let Some(v) = f.scale {
        d.scale = v;
    }
    if let Some(v) = f.noise {
        d.noise = v;
    }
    if let Some(v) = &f.imbalance {
        d.imbalance = v.clone();
    }
}

fn apply_train(cfg: &mut ExperimentConfig, f: &TrainFlags) {
    let t = &mut cfg.train;
    if let Some(v) = f.variant {
        t.variant = v;
    }
    if let Some(v) = f.iters {
        t.iters = v;
    }
    if let Some(v) = f.pretrain_iters {
        t.pretrain_iters = v;
    }
    if let Some(v) = f.lambda {
        t.lambda = v;
    }
    if let Some(v) = f.gamma {
        t.gamma = v;
    }
    if let Some(v) = f.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = f.hidden {
        t.hidden = v;
    }
    if let Some(v) = f.eval_period {
        t.eval_period = v;
    }
    if let Some(v) = f.classifier_lr {
        t.classifier_lr = v;
    }
    if let Some(v) = f.generator_lr {
        t.generator_lr = v;
    }
    if let Some(v) = f.data_seed {
        cfg.data.seed = v;
    }
    if let (Some(s), Some(tg)) = (&f.source, &f.target) {
        cfg.source = Some(s.clone());
        cfg.target = Some(tg.clone());
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| BdgError::Io(format!("{}: {e}", path.display())))
}

fn write_row<I, S>(w: &mut csv::Writer<File>, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| BdgError::Io(e.to_string()))
}

fn finish(mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| BdgError::Io(e.to_string()))
}

fn check_datasets(src: &DomainDataset, tgt: &DomainDataset) -> Result<()> {
    if src.dim() != tgt.dim() || src.classes != tgt.classes {
        return Err(BdgError::Validation(format!(
            "source (d={}, C={}) and target (d={}, C={}) disagree",
            src.dim(),
            src.classes,
            tgt.dim(),
            tgt.classes
        )));
    }
    Ok(())
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    if let Some(s) = args.seed {
        cfg.data.seed = s;
    }
    let spec = &cfg.data;
    spec.validate()?;
    if spec.is_identity_shift() {
        eprintln!("warning: no-shift spec; source and target share one distribution");
    }
    let (src, tgt) = bdg_core::make_domain_pair(spec)?;
    let out = cfg.resolved_output();
    create_dir(&out)?;
    src.save(&out.join("source.csv"))?;
    tgt.save(&out.join("target.csv"))?;
    println!(
        "wrote {} and {}: n={} per domain, d={}, C={}, kind={:?}, rotation={}deg, translation={:?}, scale={}, noise={}, seed={}",
        out.join("source.csv").display(),
        out.join("target.csv").display(),
        spec.per_domain,
        spec.dim,
        spec.classes,
        spec.kind,
        spec.rotation_deg,
        spec.translation,
        spec.scale,
        spec.noise,
        spec.seed
    );
    Ok(())
}

fn checkpoint(summary: &RunSummary, cfg: &TrainConfig, dim: usize, classes: usize) -> Checkpoint {
    let s = &summary.state;
    let mut ck = Checkpoint::new();
    ck.meta.insert("dim".into(), dim.into());
    ck.meta.insert("classes".into(), classes.into());
    ck.meta.insert("hidden".into(), cfg.hidden.into());
    ck.meta.insert("variant".into(), cfg.variant.name().into());
    ck.meta.insert("seed".into(), cfg.seed.into());
    ck.insert_model("c0", &s.c0);
    ck.insert_model("c_s", &s.c_s);
    ck.insert_model("g_t", &s.g_t);
    if let Some(c) = &s.c_t {
        ck.insert_model("c_t", c);
    }
    if let Some(g) = &s.g_s {
        ck.insert_model("g_s", g);
    }
    ck
}

/// Runs one training job into the output directory; returns the summary.
pub fn train(args: &TrainArgs) -> Result<RunSummary> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    apply_train(&mut cfg, &args.train);
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let (src, tgt) = cfg.datasets()?;
    check_datasets(&src, &tgt)?;
    let out = cfg.resolved_output();
    create_dir(&out)?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;

    let mut writer = MetricsWriter::create(&out.join("metrics.csv"))?;
    let summary = run_with(&cfg.train, &src, &tgt, |m| writer.write(m))?;
    checkpoint(&summary, &cfg.train, src.dim(), src.classes).save(&out.join("checkpoint.json"))?;

    let fmt = |a: Option<f64>| a.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} seed {}: final target accuracy {} (source-only baseline {}), {} trained parameters",
        cfg.train.variant,
        cfg.train.seed,
        fmt(summary.final_acc),
        fmt(summary.baseline_acc),
        summary.state.trained_param_count()
    );
    Ok(summary)
}

/// Outcome of one job in a batch of runs.
#[derive(Clone, Debug)]
pub struct JobResult {
    pub config: TrainConfig,
    pub final_acc: Option<f64>,
    pub baseline_acc: Option<f64>,
    pub trained_params: usize,
    pub error: Option<String>,
}

fn run_jobs(configs: Vec<TrainConfig>, src: &DomainDataset, tgt: &DomainDataset, jobs: Option<usize>) -> Result<Vec<JobResult>> {
    for c in &configs {
        c.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| BdgError::Config(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        configs
            .into_par_iter()
            .map(|config| {
                let params = TrainerState::new(&config, src.dim(), src.classes).trained_param_count();
                match run_with(&config, src, tgt, |_| Ok(())) {
                    Ok(s) => JobResult {
                        config,
                        final_acc: s.final_acc,
                        baseline_acc: s.baseline_acc,
                        trained_params: params,
                        error: None,
                    },
                    Err(e) => JobResult {
                        config,
                        final_acc: None,
                        baseline_acc: None,
                        trained_params: params,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    Ok(results)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |a| a.to_string())
}

fn mean_ok(rows: &[&JobResult]) -> (Option<f64>, usize) {
    let accs: Vec<f64> = rows.iter().filter_map(|r| r.final_acc).collect();
    let mean = (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64);
    (mean, accs.len())
}

fn prepared(common: &ConfigArgs, train: &TrainFlags, data: &DataFlags, seeds: &Option<Vec<u64>>)
    -> Result<(ExperimentConfig, DomainDataset, DomainDataset, PathBuf)> {
    let mut cfg = base_config(common)?;
    apply_data(&mut cfg, data);
    apply_train(&mut cfg, train);
    if let Some(s) = seeds {
        cfg.seeds = s.clone();
    }
    cfg.validate()?;
    let (src, tgt) = cfg.datasets()?;
    check_datasets(&src, &tgt)?;
    let out = cfg.resolved_output();
    create_dir(&out)?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;
    Ok((cfg, src, tgt, out))
}

/// Every variant × seed; rows ordered by (variant, seed).
pub fn ablate(args: &AblateArgs) -> Result<()> {
    let (cfg, src, tgt, out) = prepared(&args.common, &args.train, &args.data, &args.seeds)?;
    let configs: Vec<TrainConfig> = Variant::ALL
        .iter()
        .flat_map(|&variant| {
            cfg.seeds.iter().map(move |&seed| (variant, seed))
        })
        .map(|(variant, seed)| TrainConfig { variant, seed, ..cfg.train.clone() })
        .collect();
    let results = run_jobs(configs, &src, &tgt, args.jobs)?;

    let mut table = csv_writer(&out.join("table.csv"))?;
    write_row(&mut table, ["variant", "seed", "final_acc", "baseline_acc", "trained_params", "error"])?;
    for r in &results {
        write_row(
            &mut table,
            [
                r.config.variant.to_string(),
                r.config.seed.to_string(),
                opt(r.final_acc),
                opt(r.baseline_acc),
                r.trained_params.to_string(),
                r.error.clone().unwrap_or_default(),
            ],
        )?;
    }
    finish(table)?;

    let mut summary = csv_writer(&out.join("summary.csv"))?;
    write_row(
        &mut summary,
        ["variant", "bidirectional", "mmd", "consistency", "trained_params", "mean_acc", "ok_runs", "failed_runs"],
    )?;
    println!("variant  mean_acc  ok/total  params");
    for v in Variant::ALL {
        let rows: Vec<&JobResult> = results.iter().filter(|r| r.config.variant == v).collect();
        let (mean, ok) = mean_ok(&rows);
        let params = rows.first().map_or(0, |r| r.trained_params);
        write_row(
            &mut summary,
            [
                v.to_string(),
                v.bidirectional().to_string(),
                v.uses_mmd().to_string(),
                v.uses_consistency().to_string(),
                params.to_string(),
                opt(mean),
                ok.to_string(),
                (rows.len() - ok).to_string(),
            ],
        )?;
        let shown = mean.map_or_else(|| "n/a".into(), |m| format!("{m:.4}"));
        println!("{:<8} {:>8}  {}/{}  {}", v.name(), shown, ok, rows.len(), params);
    }
    finish(summary)?;
    for r in results.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {} seed {} failed: {}",
            r.config.variant,
            r.config.seed,
            r.error.as_deref().unwrap_or_default()
        );
    }
    Ok(())
}

/// The swept parameter takes each grid value while the other is fixed at 1.
pub fn sweep(args: &SweepArgs) -> Result<()> {
    if args.grid.is_empty() {
        return Err(BdgError::Config("sweep grid must not be empty".into()));
    }
    let (cfg, src, tgt, out) = prepared(&args.common, &args.train, &args.data, &args.seeds)?;
    let param = args.param;
    let configs: Vec<TrainConfig> = args
        .grid
        .iter()
        .flat_map(|&value| cfg.seeds.iter().map(move |&seed| (value, seed)))
        .map(|(value, seed)| {
            let (lambda, gamma) = match param {
                crate::SweepParam::Lambda => (value, 1.0),
                crate::SweepParam::Gamma => (1.0, value),
            };
            TrainConfig { lambda, gamma, seed, ..cfg.train.clone() }
        })
        .collect();
    let results = run_jobs(configs, &src, &tgt, args.jobs)?;
    let value_of = |c: &TrainConfig| match param {
        crate::SweepParam::Lambda => c.lambda,
        crate::SweepParam::Gamma => c.gamma,
    };

    let mut rows = csv_writer(&out.join("sweep.csv"))?;
    write_row(&mut rows, ["param", "value", "seed", "final_acc", "error"])?;
    for r in &results {
        write_row(
            &mut rows,
            [
                param.name().to_string(),
                value_of(&r.config).to_string(),
                r.config.seed.to_string(),
                opt(r.final_acc),
                r.error.clone().unwrap_or_default(),
            ],
        )?;
    }
    finish(rows)?;

    let mut summary = csv_writer(&out.join("sweep_summary.csv"))?;
    write_row(&mut summary, ["param", "value", "mean_acc", "ok_runs"])?;
    for &value in &args.grid {
        let group: Vec<&JobResult> = results.iter().filter(|r| value_of(&r.config) == value).collect();
        let (mean, ok) = mean_ok(&group);
        write_row(&mut summary, [param.name().to_string(), value.to_string(), opt(mean), ok.to_string()])?;
        let shown = mean.map_or_else(|| "n/a".into(), |m| format!("{m:.4}"));
        println!("{}={value}: mean accuracy {shown} over {ok} runs", param.name());
    }
    finish(summary)
}

/// Rows `set,label,a0..a{h-1}` for X_s, F_t (two-generator models only), F_s, X_t.
pub fn export_embeddings(args: &ExportArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    if let Some(s) = args.data_seed {
        cfg.data.seed = s;
    }
    if let (Some(s), Some(t)) = (&args.source, &args.target) {
        cfg.source = Some(s.clone());
        cfg.target = Some(t.clone());
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let dim = ck.meta_usize("dim")?;
    let classes = ck.meta_usize("classes")?;
    let hidden = ck.meta_usize("hidden")?;
    let (src, tgt) = cfg.datasets()?;
    for ds in [&src, &tgt] {
        if ds.dim() != dim || ds.classes != classes {
            return Err(BdgError::Validation(format!(
                "{} dataset has d={}, C={} but checkpoint has d={dim}, C={classes}",
                ds.domain,
                ds.dim(),
                ds.classes
            )));
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut c0 = Classifier::new(dim, hidden, classes, &mut rng);
    let mut c_s = Classifier::new(dim, hidden, classes, &mut rng);
    let mut g_t = Generator::zeros(dim, hidden);
    ck.load_model("c0", &mut c0)?;
    ck.load_model("c_s", &mut c_s)?;
    ck.load_model("g_t", &mut g_t)?;
    let g_s = if ck.has_model("g_s") {
        let mut g = Generator::zeros(dim, hidden);
        ck.load_model("g_s", &mut g)?;
        Some(g)
    } else {
        None
    };

    let y_s = src.labels.clone().expect("source datasets are labeled");
    let pseudo = c0.predict(&tgt.features)?.class_probs.argmax_rows();
    let mut sets = vec![("Xs", src.features.clone(), y_s.clone())];
    if let Some(g) = &g_s {
        sets.push(("Ft", g.apply(&src.features)?, y_s));
    }
    sets.push(("Fs", g_t.apply(&tgt.features)?, pseudo.clone()));
    sets.push(("Xt", tgt.features.clone(), pseudo));

    let out = cfg.resolved_output();
    create_dir(&out)?;
    let path = out.join("embeddings.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["set".to_string(), "label".to_string()];
    header.extend((0..hidden).map(|j| format!("a{j}")));
    write_row(&mut w, &header)?;
    let mut total = 0;
    for (tag, x, labels) in &sets {
        let feats = c_s.predict(x)?.features;
        for (i, label) in labels.iter().enumerate() {
            let mut row = vec![tag.to_string(), label.to_string()];
            row.extend(feats.row(i).iter().map(f64::to_string));
            write_row(&mut w, &row)?;
        }
        total += labels.len();
    }
    finish(w)?;
    println!("wrote {total} rows to {}", path.display());
    Ok(())
}
