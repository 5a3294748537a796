use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use xmodal_core::data::{generate_synthetic, read_dataset, validate_meld_schema, write_dataset};
use xmodal_core::gradcheck::run_gradcheck_with;
use xmodal_core::training::{predict_indices, train_loop_with};
use xmodal_core::{BimodalClassifier, EncoderConfig, EvalReport, Split, SplitDataset, SyntheticConfig};

use crate::args::{EvaluateArgs, GenerateArgs, GradcheckArgs, ReportArgs, TrainArgs, ValidateArgs};
use crate::config::{load_json, write_json, RunConfig};
use crate::invalid;

fn read_split(dir: &Path) -> Result<SplitDataset<f32>> {
    read_dataset::<f32>(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

#[derive(Serialize)]
struct Provenance<'a> {
    generator: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a SyntheticConfig,
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg: SyntheticConfig = load_json(a.config.as_deref())?;
    if a.config.is_none() {
        cfg.dim = 768;
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { cfg.$f = v; })* };
    }
    set!(seed, n_train, n_validation, n_test, dim, text_len, audio_len, interaction_strength, noise, separation);
    if let Some(p) = a.priors {
        cfg.priors = p;
    }
    cfg.validate().map_err(|e| {
        let flag = if e.to_string().contains("priors") { "--priors" } else { "generator flags" };
        invalid(format!("{flag}: {e}"))
    })?;
    let splits = generate_synthetic::<f32>(&cfg)?;
    for ds in [&splits.train, &splits.validation, &splits.test] {
        write_dataset(ds, &a.out.join(ds.split.as_str()))?;
    }
    let prov = Provenance {
        generator: "xmodal generate",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: &cfg,
    };
    write_json(&a.out, "provenance.json", &prov)?;
    println!(
        "wrote {} / {} / {} records to {}",
        splits.train.len(),
        splits.validation.len(),
        splits.test.len(),
        a.out.display()
    );
    Ok(())
}

pub fn resolve_train(a: &TrainArgs) -> Result<(RunConfig, SplitDataset<f32>, SplitDataset<f32>)> {
    let mut run: RunConfig = load_json(a.config.as_deref())?;
    if let Some(d) = &a.data {
        run.data = d.clone();
    }
    if let Some(o) = &a.out {
        run.out = o.clone();
    }
    let m = &mut run.model;
    if let Some(v) = a.fusion {
        m.fusion = v.into();
    }
    if let Some(v) = a.heads {
        m.num_heads = v;
    }
    if let Some(v) = a.dim {
        m.dim = v;
    }
    if let Some(v) = a.dropout {
        m.dropout = v;
    }
    if let Some(v) = a.train_encoders {
        m.train_encoders = v;
    }
    if let Some(v) = a.mask_padding {
        m.mask_padding = v;
    }
    if let Some(v) = a.truncate {
        m.truncate = v;
    }
    if a.hidden_head_dim.is_some() {
        m.hidden_head_dim = a.hidden_head_dim;
    }
    if let Some(kind) = a.encoder {
        let depth = a.encoder_depth.unwrap_or(m.text_encoder.depth);
        m.text_encoder = EncoderConfig {
            kind: kind.into(),
            depth,
            ..m.text_encoder.clone()
        };
        m.audio_encoder = EncoderConfig {
            kind: kind.into(),
            depth,
            ..m.audio_encoder.clone()
        };
    } else if let Some(depth) = a.encoder_depth {
        m.text_encoder.depth = depth;
        m.audio_encoder.depth = depth;
    }
    let t = &mut run.train;
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    if let Some(v) = a.max_epochs {
        t.max_epochs = v;
    }
    if let Some(v) = a.eval_every {
        t.eval_every = v;
    }
    if let Some(v) = a.class_weights {
        t.class_weights = v.into();
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    run.model.validate()?;
    run.train.validate()?;

    let train = read_split(&run.data.join(Split::Train.as_str()))?;
    let val = read_split(&run.data.join(Split::Validation.as_str()))?;
    if train.dim != run.model.dim {
        return Err(invalid(format!(
            "dataset features are {}-dimensional but the model dim is {}; pass --dim {}",
            train.dim, run.model.dim, train.dim
        )));
    }
    run.model.text_len = a.text_len.unwrap_or(train.text_len_max.max(val.text_len_max));
    run.model.audio_len = a.audio_len.unwrap_or(train.audio_len_max.max(val.audio_len_max));
    run.model.validate()?;
    Ok((run, train, val))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (run, train, val) = resolve_train(&a)?;
    write_json(&run.out, "config.json", &run)?;
    let mut model = BimodalClassifier::<f32>::new(run.model.clone(), run.train.seed)?;
    eprintln!(
        "training {} fusion, {} parameters, {} train / {} validation records",
        run.model.fusion,
        model.params().num_elements(),
        train.len(),
        val.len()
    );
    let history = train_loop_with(&mut model, &train, &val, &run.train, |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  val weighted F1 {:.4}  {:.1}s",
            r.epoch, r.train_loss, r.val_weighted_f1, r.wall_secs
        );
    })?;
    model.save(&run.out.join("checkpoint"))?;
    let path = run.out.join("history.jsonl");
    fs::write(&path, history.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    if let Some(best) = history.best_record() {
        println!(
            "best epoch {} (val weighted F1 {:.4}); checkpoint in {}",
            best.epoch,
            best.val_weighted_f1,
            run.out.join("checkpoint").display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    checkpoint: &'a Path,
    data: &'a Path,
    out: &'a Path,
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    write_json(
        &a.out,
        "config.json",
        &EvalConfig {
            checkpoint: &a.checkpoint,
            data: &a.data,
            out: &a.out,
        },
    )?;
    let model = BimodalClassifier::<f32>::load(&a.checkpoint)
        .with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let ds = read_split(&a.data)?;
    let cfg = model.config();
    if ds.dim != cfg.dim {
        return Err(invalid(format!(
            "checkpoint {} expects {}-dimensional features but {} holds {}-dimensional features",
            a.checkpoint.display(),
            cfg.dim,
            a.data.display(),
            ds.dim
        )));
    }
    if ds.audio_len_max > cfg.audio_len || (!cfg.truncate && ds.text_len_max > cfg.text_len) {
        return Err(invalid(format!(
            "checkpoint {} was built for text length {} and audio length {}, but {} has sequences up to {} and {}",
            a.checkpoint.display(),
            cfg.text_len,
            cfg.audio_len,
            a.data.display(),
            ds.text_len_max,
            ds.audio_len_max
        )));
    }
    let preds = predict_indices(&model, &ds)?;
    let golds: Vec<usize> = ds.records.iter().map(|r| r.label.index()).collect();
    let report = EvalReport::from_indices(&golds, &preds, cfg.num_classes)?;
    let table = report.to_text_table();
    for (name, body) in [
        ("report.txt", table.clone()),
        ("report.json", report.to_json()?),
        ("confusion.csv", report.confusion_csv()),
    ] {
        let path = a.out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{table}");
    Ok(())
}

/// Returns whether every component passed.
pub fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    let report = run_gradcheck_with(a.seed, a.inject_corrupted)?;
    print!("{}", report.to_text());
    let failures = report.failures();
    if failures.is_empty() {
        println!("gradcheck passed: {} components (seed {})", report.components.len(), a.seed);
    } else {
        let names: Vec<&str> = failures.iter().map(|c| c.name.as_str()).collect();
        eprintln!("gradcheck FAILED: {}", names.join(", "));
    }
    Ok(failures.is_empty())
}

/// Returns whether the dataset is clean.
pub fn validate(a: ValidateArgs) -> Result<bool> {
    let load = |s: Split| read_split(&a.data.join(s.as_str()));
    let (train, val, test) = (load(Split::Train)?, load(Split::Validation)?, load(Split::Test)?);
    let report = validate_meld_schema(&train, &val, &test);
    for v in &report.violations {
        println!("violation: {v}");
    }
    println!(
        "{} violation(s) across {} / {} / {} records",
        report.violations.len(),
        train.len(),
        val.len(),
        test.len()
    );
    Ok(report.is_ok())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report = EvalReport::from_json(&text).map_err(|e| invalid(format!("{}: {e}", a.input.display())))?;
    if a.confusion {
        print!("{}", report.confusion_csv());
    } else {
        print!("{}", report.to_text_table());
    }
    Ok(())
}
