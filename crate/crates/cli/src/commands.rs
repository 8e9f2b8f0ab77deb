use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use grnsem::baselines::{matcomp_fit, onehot_lr_train};
use grnsem::dataio::{
    check_tf_flags, generate_synthetic, load_embeddings, load_expression, load_labels, load_matrix, preprocess,
    write_embeddings, write_expression, write_labels, write_matrix, ExpressionMatrix, ReportDocument,
};
use grnsem::evalbench::{auprc, hit_at_1pct, make_split, pr_curve, recall_at_threshold, run_benchmark, Dataset};
use grnsem::models::Variant;
use grnsem::numkit::{Matrix, Rng};
use grnsem::training::{init_state, train, TrainTrace};
use log::{info, warn};
use serde::Serialize;

use crate::args::{BenchmarkArgs, Cli, Command, EvaluateArgs, GenerateArgs, ScoreArgs, SplitArgs, TrainArgs};
use crate::config::{CliConfig, Kind, ProbMap};
use crate::error::{CliError, CliResult};
use crate::record::{write_json, RunRecord};
use crate::splitfile::{read_split, write_split, Partition};
use crate::stored::{ModelFile, StoredModel};

pub fn run(cli: &Cli) -> CliResult<()> {
    let common = &cli.common;
    let mut cfg = match &common.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    let seed = common.seed.unwrap_or(cfg.seed);
    cfg.set_seed(seed);
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()
            .map_err(|e| CliError::runtime(format!("--jobs: {e}")))?;
    }
    fs::create_dir_all(&common.out).map_err(|e| CliError::runtime(format!("--out {}: {e}", common.out.display())))?;
    let out = common.out.as_path();
    match &cli.command {
        Command::Generate(a) => generate(a, cfg, out),
        Command::Split(a) => split(a, cfg, out),
        Command::Train(a) => train_cmd(a, cfg, out),
        Command::Score(a) => score(a, cfg, out),
        Command::Evaluate(a) => evaluate(a, cfg, out),
        Command::Benchmark(a) => benchmark(a, cfg, out),
    }
}

fn require_file(path: &Path, flag: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{flag}: no such file {}", path.display())))
    }
}

fn finish(record: &RunRecord, out: &Path) -> CliResult<()> {
    let path = record.write(out)?;
    info!("run record written to {}", path.display());
    Ok(())
}

fn load_inputs(path: &Path, cfg: &CliConfig, record: &mut RunRecord) -> CliResult<ExpressionMatrix> {
    require_file(path, "--expression")?;
    let x = load_expression(path)?;
    record.read("expression", path);
    let p = &cfg.preprocess;
    if p.log1p || p.zscore {
        Ok(preprocess(&x, p.log1p, p.zscore)?)
    } else {
        Ok(x)
    }
}

fn regulators(x: &ExpressionMatrix, cfg: &CliConfig) -> Option<Vec<bool>> {
    if !cfg.tf_regulators {
        return None;
    }
    if x.is_tf().iter().any(|&t| t) {
        Some(x.is_tf().to_vec())
    } else {
        warn!("no gene is flagged as a TF; every gene may regulate");
        None
    }
}

fn load_embedding_values(path: &Path, x: &ExpressionMatrix, record: &mut RunRecord) -> CliResult<Matrix> {
    require_file(path, "--embeddings")?;
    let h = load_embeddings(path, x.genes(), None)?;
    record.read("embeddings", path);
    Ok(h.values().clone())
}

fn generate(a: &GenerateArgs, mut cfg: CliConfig, out: &Path) -> CliResult<()> {
    let g = &mut cfg.generate;
    for (slot, v) in [
        (&mut g.p, a.p),
        (&mut g.n, a.n),
        (&mut g.n_tfs, a.n_tfs),
        (&mut g.edges_per_tf, a.edges_per_tf),
        (&mut g.dim, a.dim),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    for (slot, v) in [
        (&mut g.rho, a.rho),
        (&mut g.sigma_z, a.sigma_z),
        (&mut g.effect_lo, a.effect_lo),
        (&mut g.effect_hi, a.effect_hi),
        (&mut g.negative_fraction, a.negative_fraction),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    g.validate().map_err(|e| CliError::from(e).context("generate"))?;
    let data = generate_synthetic(g)?;
    let g = &cfg.generate;
    let mut record = RunRecord::new("generate", &cfg);
    let files = [
        out.join("expression.csv"),
        out.join("labels.tsv"),
        out.join("embeddings.csv"),
        out.join("adjacency.csv"),
    ];
    write_expression(&data.expression, &files[0])?;
    write_labels(&data.labels, &files[1])?;
    write_embeddings(&data.embeddings, &files[2])?;
    write_matrix(&data.adjacency, data.expression.genes(), &files[3])?;
    for f in &files {
        record.wrote(f);
        println!("wrote {}", f.display());
    }
    println!(
        "{} genes ({} TFs), {} cells, {} labeled edges, prevalence {:.4}",
        g.p,
        g.n_tfs,
        g.n,
        data.labels.len(),
        data.labels.prevalence()
    );
    finish(&record, out)
}

fn split(a: &SplitArgs, cfg: CliConfig, out: &Path) -> CliResult<()> {
    let mut record = RunRecord::new("split", &cfg);
    require_file(&a.expression, "--expression")?;
    require_file(&a.labels, "--labels")?;
    let x = load_expression(&a.expression)?;
    record.read("expression", &a.expression);
    let labels = load_labels(&a.labels, x.genes())?;
    record.read("labels", &a.labels);
    if let Err(e) = check_tf_flags(&labels, x.is_tf()) {
        warn!("{e}");
    }
    let s = make_split(&labels, cfg.seed)?;
    let path = out.join("split.tsv");
    write_split(&s, &path)?;
    record.wrote(&path);
    println!("{:<12} {:>8} {:>10} {:>11}", "set", "edges", "positives", "prevalence");
    for part in Partition::ALL {
        let e = part.of(&s);
        let prev = if e.is_empty() { "n/a".to_string() } else { format!("{:.4}", e.prevalence()) };
        println!("{:<12} {:>8} {:>10} {:>11}", part.as_str(), e.len(), e.positives(), prev);
    }
    println!(
        "unseen TFs {} of {}, unseen TGs {} of {}",
        s.unseen_tfs.len(),
        s.unseen_tfs.len() + s.seen_tfs.len(),
        s.unseen_tgs.len(),
        s.unseen_tgs.len() + s.seen_tgs.len()
    );
    println!("wrote {}", path.display());
    finish(&record, out)
}

fn train_labels(split: Option<&PathBuf>, x: &ExpressionMatrix, what: &str, record: &mut RunRecord) -> CliResult<grnsem::dataio::LabeledEdges> {
    let path = split.ok_or_else(|| CliError::usage(format!("--split is required for {what}")))?;
    require_file(path, "--split")?;
    let mut parts = read_split(path, x.genes(), &[Partition::Train])?;
    record.read_partitions("split", path, &[Partition::Train.as_str()]);
    Ok(parts.remove(0))
}

fn write_trace(trace: &TrainTrace, path: &Path) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,phase,elbo")?;
    for e in &trace.entries {
        writeln!(w, "{},{},{:?}", e.epoch, e.phase, e.elbo)?;
    }
    w.flush()?;
    Ok(())
}

fn train_cmd(a: &TrainArgs, mut cfg: CliConfig, out: &Path) -> CliResult<()> {
    if let Some(k) = a.variant {
        cfg.variant = k;
    }
    cfg.apply_hyper(&a.hyper);
    cfg.validate()?;
    let kind = cfg.variant;
    let mut record = RunRecord::new("train", &cfg);
    if let Some(v) = kind.variant() {
        if v.uses_embeddings() && a.embeddings.is_none() {
            return Err(CliError::usage(format!("--embeddings is required for {v}")));
        }
        if v.uses_labels() && a.split.is_none() {
            return Err(CliError::usage(format!("--split is required for {v}")));
        }
    }
    let x = load_inputs(&a.expression, &cfg, &mut record)?;
    let p = x.n_genes();
    let started = Instant::now();
    let model_path = out.join("model.json");
    let model = match kind.variant() {
        Some(v) => {
            let h = match (&a.embeddings, v.uses_embeddings()) {
                (Some(path), true) => Some(load_embedding_values(path, &x, &mut record)?),
                (Some(_), false) => {
                    warn!("--embeddings ignored by {v}");
                    None
                }
                _ => None,
            };
            let y = if v.uses_labels() {
                Some(train_labels(a.split.as_ref(), &x, v.as_str(), &mut record)?)
            } else {
                if a.split.is_some() {
                    warn!("--split ignored by {v}");
                }
                None
            };
            let mut state = init_state(v, p, h.as_ref(), &cfg.model, &mut Rng::derive(cfg.seed, 0))?;
            if let Some(r) = regulators(&x, &cfg) {
                state.restrict_regulators(&r)?;
            }
            let (state, trace) = train(state, x.values(), y.as_ref(), &cfg.train)
                .map_err(|e| CliError::from(e).context(format!("training {v} failed")))?;
            let trace_path = out.join("trace.csv");
            write_trace(&trace, &trace_path)?;
            record.wrote(&trace_path);
            println!(
                "{v}: {} epochs, final ELBO {:.4}, {} rejected adjacency steps",
                trace.len(),
                trace.entries.last().map_or(f64::NAN, |e| e.elbo),
                trace.rejected_steps
            );
            if v == Variant::DeepSem && y.is_none() && a.split.is_none() {
                info!("trained without labels");
            }
            StoredModel::Sem { state: Box::new(state) }
        }
        None => match kind {
            Kind::OnehotLr => {
                let y = train_labels(a.split.as_ref(), &x, kind.name(), &mut record)?;
                let model = onehot_lr_train(&y, p, &cfg.lr)?;
                println!("onehot-lr: {} iterations, converged {}", model.objective_trace.len(), model.converged);
                StoredModel::OneHotLr { model }
            }
            Kind::Matcomp => {
                let y = train_labels(a.split.as_ref(), &x, kind.name(), &mut record)?;
                let model = matcomp_fit(&y, p, &cfg.matcomp, cfg.seed)?;
                println!("matcomp: rank {}, {} sweeps", model.rank, model.objective_trace.len().saturating_sub(1));
                StoredModel::MatComp { model }
            }
            _ => return Err(CliError::usage("random has nothing to train; use it in `benchmark`")),
        },
    };
    info!("trained in {:.2}s", started.elapsed().as_secs_f64());
    let file = ModelFile {
        seed: cfg.seed,
        config: cfg.clone(),
        genes: x.genes().to_vec(),
        model,
    };
    write_json(&model_path, &file)?;
    record.wrote(&model_path);
    println!("wrote {}", model_path.display());
    finish(&record, out)
}

fn score(a: &ScoreArgs, mut cfg: CliConfig, out: &Path) -> CliResult<()> {
    require_file(&a.model, "--model")?;
    let model = ModelFile::load(&a.model)?;
    cfg.score = a.score.unwrap_or(model.config.score);
    let mut record = RunRecord::new("score", &cfg);
    record.read("model", &a.model);
    let s = model.scores(cfg.score)?;
    let path = out.join("scores.csv");
    write_matrix(&s, &model.genes, &path)?;
    record.wrote(&path);
    println!("wrote {} ({} scores)", path.display(), model.name());
    finish(&record, out)
}

#[derive(Serialize)]
struct SetResult {
    set: String,
    n_edges: usize,
    positives: usize,
    prevalence: Option<f64>,
    auprc: Option<f64>,
    hit_at_1pct: Option<f64>,
    recall_at_0_5: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct EvalDocument<'a> {
    seed: u64,
    config: &'a CliConfig,
    source: String,
    results: Vec<SetResult>,
}

/// Probabilities for recall at 0.5, or a usage error if the scores are
/// weights and no mapping was requested.
fn probabilities(s: &Matrix, native: bool, map: ProbMap, name: &str) -> CliResult<Matrix> {
    let p = s.rows();
    let off: Vec<f64> = (0..p)
        .flat_map(|i| (0..p).filter(move |&k| k != i).map(move |k| (i, k)))
        .map(|(i, k)| s[(i, k)])
        .collect();
    let mut out = s.clone();
    let mut apply = |f: &dyn Fn(f64) -> f64| {
        for i in 0..p {
            for k in 0..p {
                if i != k {
                    out[(i, k)] = f(s[(i, k)]);
                }
            }
        }
    };
    match (native, map) {
        (true, _) => apply(&|v| v.clamp(0.0, 1.0)),
        (false, ProbMap::None) => {
            return Err(CliError::usage(format!(
                "recall@0.5 needs probabilities but {name} scores are edge weights; pass --prob-map minmax or identity"
            )))
        }
        (false, ProbMap::Identity) => {
            if let Some(v) = off.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(CliError::usage(format!("--prob-map identity: score {v} is outside [0, 1]")));
            }
        }
        (false, ProbMap::Minmax) => {
            let lo = off.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(CliError::runtime("--prob-map minmax: scores are not finite"));
            }
            let span = hi - lo;
            apply(&|v| if span > 0.0 { (v - lo) / span } else { 0.5 });
        }
    }
    Ok(out)
}

fn write_pr(labels: &[bool], scores: &[f64], path: &Path) -> CliResult<()> {
    let curve = pr_curve(labels, scores)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "recall,precision")?;
    let first = curve.first().map_or(1.0, |c| c.1);
    writeln!(w, "{:?},{first:?}", 0.0)?;
    for (r, p, _) in curve {
        writeln!(w, "{r:?},{p:?}")?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate(a: &EvaluateArgs, mut cfg: CliConfig, out: &Path) -> CliResult<()> {
    cfg.evaluate.recall |= a.recall;
    if let Some(m) = a.prob_map {
        cfg.evaluate.prob_map = m;
    }
    let mut record = RunRecord::new("evaluate", &cfg);
    let (genes, scores, native, name, source) = match (&a.model, &a.scores) {
        (Some(path), _) => {
            require_file(path, "--model")?;
            let model = ModelFile::load(path)?;
            record.read("model", path);
            cfg.score = a.score.unwrap_or(model.config.score);
            let s = model.scores(cfg.score)?;
            let native = model.emits_probabilities(cfg.score);
            (model.genes.clone(), s, native, model.name().to_string(), path.clone())
        }
        (None, Some(path)) => {
            require_file(path, "--scores")?;
            let (genes, s) = load_matrix(path)?;
            record.read("scores", path);
            (genes, s, false, "matrix".to_string(), path.clone())
        }
        (None, None) => return Err(CliError::usage("one of --model or --scores is required")),
    };
    record.config = cfg.clone();
    let probs = if cfg.evaluate.recall {
        Some(probabilities(&scores, native, cfg.evaluate.prob_map, &name)?)
    } else {
        None
    };
    require_file(&a.split, "--split")?;
    let wanted = [Partition::SeenTest, Partition::UnseenTest];
    let sets = read_split(&a.split, &genes, &wanted)?;
    record.read_partitions("split", &a.split, &wanted.map(Partition::as_str));
    let mut results = Vec::new();
    for (part, edges) in wanted.into_iter().zip(&sets) {
        let labels = edges.labels();
        let s = edges.gather(&scores);
        let metrics = (|| -> CliResult<(f64, f64, Option<f64>)> {
            let ap = auprc(&labels, &s)?;
            let hit = hit_at_1pct(&labels, &s)?;
            let rec = match &probs {
                Some(pm) => Some(recall_at_threshold(&labels, &edges.gather(pm), 0.5)?),
                None => None,
            };
            let pr_path = out.join(format!("pr_{}.csv", part.as_str()));
            write_pr(&labels, &s, &pr_path)?;
            record.wrote(&pr_path);
            Ok((ap, hit, rec))
        })();
        let mut r = SetResult {
            set: part.as_str().into(),
            n_edges: edges.len(),
            positives: edges.positives(),
            prevalence: (!edges.is_empty()).then(|| edges.prevalence()),
            auprc: None,
            hit_at_1pct: None,
            recall_at_0_5: None,
            error: None,
        };
        match metrics {
            Ok((ap, hit, rec)) => {
                r.auprc = Some(ap);
                r.hit_at_1pct = Some(hit);
                r.recall_at_0_5 = rec;
            }
            Err(e) => {
                warn!("{}: {}", part.as_str(), e.message);
                r.error = Some(e.message);
            }
        }
        results.push(r);
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{:<12} {:>7} {:>10} {:>8} {:>8} {:>10}",
        "set", "edges", "prevalence", "auprc", "hit@1%", "recall@0.5"
    );
    for r in &results {
        println!(
            "{:<12} {:>7} {:>10} {:>8} {:>8} {:>10}",
            r.set,
            r.n_edges,
            fmt(r.prevalence),
            fmt(r.auprc),
            fmt(r.hit_at_1pct),
            fmt(r.recall_at_0_5)
        );
    }
    let all_failed = results.iter().all(|r| r.error.is_some());
    let doc = EvalDocument {
        seed: cfg.seed,
        config: &cfg,
        source: format!("{name}:{}", source.display()),
        results,
    };
    let path = out.join("metrics.json");
    write_json(&path, &doc)?;
    record.wrote(&path);
    finish(&record, out)?;
    if all_failed {
        return Err(CliError::runtime("no test set could be evaluated"));
    }
    Ok(())
}

fn benchmark(a: &BenchmarkArgs, mut cfg: CliConfig, out: &Path) -> CliResult<()> {
    cfg.apply_hyper(&a.hyper);
    if let Some(r) = a.repeats {
        cfg.benchmark.n_repeats = r as usize;
    }
    cfg.benchmark.downsample |= a.downsample;
    if let Some(m) = a.members {
        cfg.members = m as usize;
    }
    if let Some(models) = &a.models {
        cfg.models = models.clone();
    }
    if cfg.models.is_empty() {
        cfg.models = vec![Kind::Deepsem];
        if a.embeddings.is_some() {
            cfg.models.extend([Kind::InfosemB, Kind::InfosemBc]);
        }
        cfg.models.extend([Kind::OnehotLr, Kind::Matcomp, Kind::Random]);
    }
    cfg.validate()?;
    let mut seen = vec![];
    for k in &cfg.models {
        if seen.contains(k) {
            return Err(CliError::usage(format!("--models lists {} twice", k.name())));
        }
        seen.push(*k);
        if k.variant().is_some_and(Variant::uses_embeddings) && a.embeddings.is_none() {
            return Err(CliError::usage(format!("--embeddings is required for {}", k.name())));
        }
    }
    let mut record = RunRecord::new("benchmark", &cfg);
    let x = load_inputs(&a.expression, &cfg, &mut record)?;
    require_file(&a.labels, "--labels")?;
    let labels = load_labels(&a.labels, x.genes())?;
    record.read("labels", &a.labels);
    if let Err(e) = check_tf_flags(&labels, x.is_tf()) {
        warn!("{e}");
    }
    let h = match &a.embeddings {
        Some(path) => Some(load_embedding_values(path, &x, &mut record)?),
        None => None,
    };
    let mut data = Dataset::new(x.values().clone(), labels, h)?;
    if let Some(r) = regulators(&x, &cfg) {
        data = data.with_regulators(r)?;
    }
    let models: Vec<_> = cfg.models.iter().map(|k| cfg.bench_model(*k)).collect();
    let report = run_benchmark(&data, &models, &cfg.benchmark, cfg.seed)?;
    let report_path = out.join("report.json");
    let csv_path = out.join("metrics.csv");
    record.wrote(&report_path);
    record.wrote(&csv_path);
    let dataset = a
        .expression
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let doc = ReportDocument::new(dataset, serde_json::to_value(&record)?, report);
    grnsem::dataio::write_report(&doc, &report_path)?;
    let mut w = BufWriter::new(File::create(&csv_path)?);
    doc.report.write_csv(&mut w)?;
    w.flush()?;
    print!("{}", doc.report.table());
    for model in &doc.report.models {
        let failed = doc.report.records.iter().filter(|r| &r.model == model && r.error.is_some()).count();
        if failed > 0 {
            println!("{model}: {failed} failed cell(s), see report");
        }
    }
    println!("wrote {} and {}", report_path.display(), csv_path.display());
    finish(&record, out)?;
    if doc.report.records.iter().all(|r| r.metrics.is_none()) {
        return Err(CliError::runtime("every model failed"));
    }
    Ok(())
}
