//! The six subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use choicenet::data::{split, synthesize, write_dataset, Schema, SplitKind};
use choicenet::econ::{
    BundleSummary, EconBundle, EconOptions, EditOp, FeatureEdit, Scenario, SliceSpec, VotSpec, WelfareSpec,
};
use choicenet::hypersearch::{random_search, CandidateOutcome, SearchSettings};
use choicenet::training::repeat_train_each;
use choicenet::{train, Dataset, Hyperparameters, SplitIndices, TrainOptions, TrainedModel};
use serde_json::json;

use crate::config::{load_data, synth_truth, RunConfig, SynthConfig};
use crate::output::Output;
use crate::report::render;

fn history_jsonl(model: &TrainedModel) -> String {
    model
        .history
        .iter()
        .map(|r| serde_json::to_string(r).expect("epoch record serializes") + "\n")
        .collect()
}

fn splits_for(config: &RunConfig, data: &Dataset) -> Result<SplitIndices> {
    Ok(split(data.n_obs(), config.split_ratios(), config.split_seed())?)
}

fn attach_data(out: &mut Output, source: &str, data: &Dataset) {
    out.data_source = Some(source.to_string());
    out.data_fingerprint = Some(data.fingerprint());
}

pub fn synth(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let spec: &SynthConfig = config
        .synth
        .as_ref()
        .context("synth needs a [synth] section or --preset and --n")?;
    let truth = synth_truth(spec)?;
    let seed = spec.seed.unwrap_or(config.base_seed());
    let mut out = Output::create(out_dir, "synth")?;
    let data = out.stage("synthesize", |_| Ok(synthesize(&truth, spec.n, seed)?))?;
    out.stage("write", |out| {
        let path = out.file("data.csv")?;
        write_dataset(&data, &path)?;
        out.write_json("data.schema.json", &Schema::for_dataset(&data))?;
        out.write_json("ground_truth.json", &truth)
    })?;
    attach_data(&mut out, &format!("synth:{}:{}:{}", spec.preset, spec.n, seed), &data);
    out.seed("synth", seed);
    out.finish(config)?;
    Ok(())
}

pub fn train_cmd(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let loaded = load_data(config)?;
    let data = loaded.data;
    let splits = splits_for(config, &data)?;
    let hyper = config.hyperparameters();
    let options = config.train_options();
    let mut out = Output::create(out_dir, "train")?;
    attach_data(&mut out, &loaded.source, &data);
    let model = out.stage("train", |_| Ok(train(&data, &splits, &hyper, &options)?))?;
    out.write_text("model.json", &model.to_json())?;
    out.write_text("train_log.jsonl", &history_jsonl(&model))?;
    out.seed("split", splits.seed);
    out.seed("train", hyper.seed);
    out.finish(config)?;
    Ok(())
}

pub fn search(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let loaded = load_data(config)?;
    let data = loaded.data;
    let splits = splits_for(config, &data)?;
    let space = config.search_space();
    let settings = SearchSettings {
        candidates: config.search_candidates(),
        seed: config.search_seed(),
        base: config.hyperparameters(),
        options: config.train_options(),
        workers: config.workers(),
    };
    let mut out = Output::create(out_dir, "search")?;
    attach_data(&mut out, &loaded.source, &data);
    let result = out.stage("search", |_| Ok(random_search(&data, &splits, &space, &settings)?))?;

    let mut rows = Vec::with_capacity(result.candidates.len());
    for c in &result.candidates {
        let (status, acc, path, error) = match &c.outcome {
            CandidateOutcome::Trained(m) => {
                let rel = format!("candidates/candidate_{:03}.json", c.index);
                out.write_text(&rel, &m.to_json())?;
                ("ok", m.val_accuracy.to_string(), rel, String::new())
            }
            CandidateOutcome::Failed(e) => ("failed", String::new(), String::new(), e.clone()),
        };
        out.item_time(format!("candidate_{:03}", c.index), c.wall_time_secs);
        let h = &c.hyper;
        rows.push(vec![
            c.index.to_string(),
            h.seed.to_string(),
            h.depth.to_string(),
            h.width.to_string(),
            h.l1.to_string(),
            h.l2.to_string(),
            h.dropout.to_string(),
            c.n_params.to_string(),
            status.to_string(),
            acc,
            path,
            error,
        ]);
    }
    let path = out.file("search_manifest.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "index",
        "seed",
        "depth",
        "width",
        "l1",
        "l2",
        "dropout",
        "n_params",
        "status",
        "val_accuracy",
        "model_path",
        "error",
    ])?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    out.write_text("best_model.json", &result.best_model().to_json())?;
    out.seed("split", splits.seed);
    out.seed("search", settings.seed);
    out.seed(
        "candidates",
        result.candidates.iter().map(|c| c.hyper.seed).collect::<Vec<_>>(),
    );
    out.seed("best_index", result.best_index);
    out.finish(&json!({
        "config": config,
        "candidates": settings.candidates,
        "space": space,
    }))?;
    Ok(())
}

pub fn repeat(config: &RunConfig, out_dir: &Path, model: Option<&Path>) -> Result<()> {
    let loaded = load_data(config)?;
    let data = loaded.data;
    let (hyper, options, splits) = match model {
        Some(p) => {
            let m = TrainedModel::load(p).with_context(|| format!("loading {}", p.display()))?;
            ensure!(
                m.data_fingerprint == data.fingerprint(),
                "{} was trained on different data",
                p.display()
            );
            let splits = match &m.split {
                Some(s) => split(data.n_obs(), s.ratios, s.seed)?,
                None => splits_for(config, &data)?,
            };
            (m.hyper, m.options, splits)
        }
        None => (
            config.hyperparameters(),
            config.train_options(),
            splits_for(config, &data)?,
        ),
    };
    let count = config.repeat_count();
    ensure!(count >= 1, "repeat count must be at least 1");
    let seed_base = config.repeat_seed_base();
    let mut out = Output::create(out_dir, "repeat")?;
    attach_data(&mut out, &loaded.source, &data);
    let results = out.stage("train", |_| {
        Ok(repeat_train_each(
            &data,
            &splits,
            &hyper,
            &options,
            count,
            seed_base,
            config.workers(),
        ))
    })?;
    let mut failures = Vec::new();
    for (i, (seed, r)) in results.iter().enumerate() {
        match r {
            Ok(m) => {
                out.write_text(&format!("models/model_{i:03}.json"), &m.to_json())?;
                out.write_text(&format!("logs/model_{i:03}.jsonl"), &history_jsonl(m))?;
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    if !failures.is_empty() {
        out.write_text("failures.txt", &(failures.join("\n") + "\n"))?;
    }
    out.seed("split", splits.seed);
    out.seed("models", results.iter().map(|(s, _)| *s).collect::<Vec<_>>());
    let echo = json!({
        "config": config,
        "count": count,
        "hyperparameters": hyper,
        "options": options,
        "model": model.map(|p| p.display().to_string()),
    });
    out.finish(&echo)?;
    if !failures.is_empty() {
        bail!(
            "{} of {count} trainings failed: {}",
            failures.len(),
            failures.join("; ")
        );
    }
    Ok(())
}

/// A named group of models given as `name=PATH` or `PATH`. A directory is
/// searched for `models/*.json`, then `*.json`; a file is a group of one.
fn load_group(spec: &str) -> Result<(String, Vec<TrainedModel>)> {
    let (name, path) = match spec.split_once('=') {
        Some((n, p)) => (n.to_string(), PathBuf::from(p)),
        None => {
            let p = PathBuf::from(spec);
            let n = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "group".into());
            (n, p)
        }
    };
    ensure!(
        !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
        "group name {name:?} must be letters, digits, '_' or '-'"
    );
    let files = if path.is_dir() {
        let dir = if path.join("models").is_dir() {
            path.join("models")
        } else {
            path.clone()
        };
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|e| e == "json")
                    && p.file_name()
                        .is_some_and(|n| n != "manifest.json" && n != "timings.json")
            })
            .collect();
        files.sort();
        files
    } else {
        vec![path.clone()]
    };
    ensure!(!files.is_empty(), "no model files in {}", path.display());
    let models = files
        .iter()
        .map(|f| TrainedModel::load(f).with_context(|| format!("loading model {}", f.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok((name, models))
}

fn feature(data: &Dataset, name: &str) -> Result<usize> {
    data.feature_index(name)
        .with_context(|| format!("unknown feature {name:?}"))
}

fn econ_options(config: &RunConfig, data: &Dataset, idx: &[usize]) -> Result<EconOptions> {
    let e = &config.econ;
    let attrs = data.attribute_map();

    let slice_feature = match &e.slice_feature {
        Some(name) => Some(feature(data, name)?),
        None => attrs.and_then(|a| a.by_alt.values().find_map(|r| r.cost)),
    };
    let slice = match slice_feature {
        Some(j) => {
            let grid = match &e.slice_grid {
                Some(g) => g.values()?,
                None => {
                    let values: Vec<f64> = idx.iter().map(|&i| data.features()[[i, j]]).collect();
                    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    if lo < hi {
                        crate::config::GridConfig {
                            start: lo,
                            stop: hi,
                            points: 20,
                        }
                        .values()?
                    } else {
                        vec![lo]
                    }
                }
            };
            Some(SliceSpec { feature: j, grid })
        }
        None => None,
    };

    let vot_pair = match (&e.vot_time, &e.vot_cost) {
        (Some(t), Some(c)) => {
            ensure!(
                attrs.is_some(),
                "value of time needs cost/time roles in the data schema"
            );
            Some((feature(data, t)?, feature(data, c)?))
        }
        (None, None) => attrs.and_then(|a| a.by_alt.values().find_map(|r| Some((*r.time.first()?, r.cost?)))),
        _ => bail!("set both econ.vot_time and econ.vot_cost, or neither"),
    };
    let vot = vot_pair.map(|(time, cost)| VotSpec {
        time,
        cost,
        scale: e.vot_scale.unwrap_or(1.0),
        model: e.vot_model.unwrap_or(0),
    });

    let welfare = if e.scenario.is_empty() {
        None
    } else {
        ensure!(attrs.is_some(), "welfare needs cost roles in the data schema");
        let edits = e
            .scenario
            .iter()
            .map(|ed| {
                let op = match (ed.set, ed.offset) {
                    (Some(v), None) => EditOp::Set(v),
                    (None, Some(d)) => EditOp::Offset(d),
                    _ => bail!("scenario edit of {:?} needs exactly one of set or offset", ed.feature),
                };
                Ok(FeatureEdit {
                    feature: feature(data, &ed.feature)?,
                    op,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let alternative = e
            .alpha_alternative
            .as_deref()
            .map(|a| data.alt_index(a).with_context(|| format!("unknown alternative {a:?}")))
            .transpose()?;
        Some(WelfareSpec {
            before: Scenario::identity(),
            after: Scenario { edits },
            alternative,
        })
    };
    Ok(EconOptions { slice, vot, welfare })
}

pub fn econ(config: &RunConfig, out_dir: &Path, ensembles: &[String]) -> Result<()> {
    ensure!(!ensembles.is_empty(), "econ needs at least one --ensemble");
    let loaded = load_data(config)?;
    let data = loaded.data;
    let fingerprint = data.fingerprint();
    let mut groups = ensembles.iter().map(|s| load_group(s)).collect::<Result<Vec<_>>>()?;
    let mut names = std::collections::BTreeSet::new();
    for (name, models) in &groups {
        ensure!(names.insert(name.clone()), "duplicate group name {name:?}");
        for m in models {
            ensure!(
                m.data_fingerprint.is_empty() || m.data_fingerprint == fingerprint,
                "group {name:?} was trained on different data"
            );
        }
    }
    let provenance = groups[0].1[0].split.clone();
    ensure!(
        groups.iter().all(|(_, ms)| ms.iter().all(|m| m.split == provenance)),
        "all models must share one train/validation/test split"
    );
    let splits = match &provenance {
        Some(s) => split(data.n_obs(), s.ratios, s.seed)?,
        None => splits_for(config, &data)?,
    };
    let kind = config.econ.split.unwrap_or(SplitKind::Test);
    let idx = splits.get(kind).to_vec();

    let mut out = Output::create(out_dir, "econ")?;
    attach_data(&mut out, &loaded.source, &data);

    let want_baseline = config.econ.baseline.unwrap_or(true);
    if want_baseline && groups.iter().all(|(_, ms)| ms[0].arch().depth != 0) {
        let reference = &groups[0].1;
        let hyper = Hyperparameters {
            depth: 0,
            width: 0,
            l1: 0.0,
            l2: 0.0,
            dropout: 0.0,
            ..reference[0].hyper.clone()
        };
        let options: TrainOptions = reference[0].options.clone();
        let seeds: Vec<u64> = reference.iter().map(|m| m.hyper.seed).collect();
        let baseline = out.stage("baseline", |_| {
            seeds
                .iter()
                .map(|&s| Ok(train(&data, &splits, &hyper.with_seed(s), &options)?))
                .collect::<Result<Vec<_>>>()
        })?;
        for (i, m) in baseline.iter().enumerate() {
            out.write_text(&format!("baseline/model_{i:03}.json"), &m.to_json())?;
        }
        let name = if names.contains("mnl") { "mnl_baseline" } else { "mnl" };
        groups.insert(0, (name.to_string(), baseline));
    }

    let options = econ_options(config, &data, &idx)?;
    let split_name = format!("{kind:?}").to_lowercase();
    let bundle = out.stage("analyze", |_| {
        Ok(EconBundle::build(&split_name, &groups, &data, &idx, &options)?)
    })?;
    let files = out.stage("write", |out| Ok(bundle.write(out.dir())?))?;
    out.record("", files);
    out.seed("split", splits.seed);
    for (name, models) in &groups {
        out.seed(
            &format!("group_{name}"),
            models.iter().map(|m| m.hyper.seed).collect::<Vec<_>>(),
        );
    }
    out.finish(&json!({
        "config": config,
        "ensembles": ensembles,
        "split": split_name,
        "options": options,
    }))?;
    Ok(())
}

pub fn report(bundle_dir: &Path, out_dir: Option<&Path>) -> Result<String> {
    let summary = BundleSummary::load(&bundle_dir.join("summary.json")).map_err(anyhow::Error::msg)?;
    let text = render(&summary);
    if let Some(dir) = out_dir {
        let mut out = Output::create(dir, "report")?;
        out.write_text("report.txt", &text)?;
        out.finish(&json!({ "bundle": bundle_dir.display().to_string() }))?;
    }
    Ok(text)
}
