//! Per-group analysis of trained ensembles and the on-disk result bundle.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::aggregate::{
    alphas, derivatives_and_elasticities, mean_std, predictions, slice_curve, slice_derivative_curve, vot_stats,
    welfare_change, ElasticityTable, MeanStd, Scenario, SliceCurve, VotMode, VotStats, WelfareResult,
};
use super::{check_models, market_share, vot, EconError, Vot, MIN_RATIO_DENOMINATOR};
use crate::data::Dataset;
use crate::hypersearch::vc_bound;
use crate::training::{argmax, mean_probabilities, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub feature: usize,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotSpec {
    pub time: usize,
    pub cost: usize,
    /// Multiplier applied to every value, e.g. 60 for per-minute to per-hour.
    pub scale: f64,
    /// Model used for the per-individual distribution.
    pub model: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareSpec {
    pub before: Scenario,
    pub after: Scenario,
    /// Alternative whose cost defines the marginal utility of money; the
    /// predicted alternative when `None`.
    pub alternative: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EconOptions {
    pub slice: Option<SliceSpec>,
    pub vot: Option<VotSpec>,
    pub welfare: Option<WelfareSpec>,
}

/// Everything computed for one ensemble of models on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub n_models: usize,
    pub depth: usize,
    pub width: usize,
    pub seeds: Vec<u64>,
    pub accuracy_per_model: Vec<f64>,
    pub ensemble_accuracy: f64,
    /// Market shares, one row per model.
    pub shares_per_model: Vec<Vec<f64>>,
    pub shares_mean: Vec<f64>,
    pub shares_std: Vec<f64>,
    /// Across-model mean probabilities, `observations x alternatives`.
    pub probabilities: Array2<f64>,
    pub predictions: Vec<usize>,
    pub observation_index: Vec<usize>,
    /// Sample-mean `s_row / s_col`, averaged over models.
    pub substitution: Array2<f64>,
    pub derivatives: MeanStd,
    pub elasticity: ElasticityTable,
    pub vot_individual: Option<VotStats>,
    pub vot_training: Option<VotStats>,
    /// Per-observation values of time for the per-individual model, scaled;
    /// `None` where undefined.
    pub vot_rows: Option<Vec<Option<Vot>>>,
    pub alphas: Option<Vec<f64>>,
    pub welfare: Option<WelfareResult>,
    pub slice: Option<SliceCurve>,
    pub slice_derivative: Option<SliceCurve>,
    pub n_weights: usize,
    pub n_layers: usize,
    pub vc_bound: Option<f64>,
}

fn substitution_table(models: &[TrainedModel], data: &Dataset, idx: &[usize]) -> Array2<f64> {
    let k = data.n_alts();
    let mut total = Array2::<f64>::zeros((k, k));
    for m in models {
        let mut sums = Array2::<f64>::zeros((k, k));
        let mut counts = Array2::<usize>::zeros((k, k));
        for &i in idx {
            let p = m.probabilities(&data.row_vec(i));
            for a in 0..k {
                for b in 0..k {
                    if p[b] >= MIN_RATIO_DENOMINATOR {
                        sums[[a, b]] += p[a] / p[b];
                        counts[[a, b]] += 1;
                    }
                }
            }
        }
        sums.zip_mut_with(&counts, |s, &c| *s = if c == 0 { f64::NAN } else { *s / c as f64 });
        total += &sums;
    }
    total / models.len() as f64
}

/// Computes every measure for one group of models on `idx`.
pub fn analyze_group(
    name: &str,
    models: &[TrainedModel],
    data: &Dataset,
    idx: &[usize],
    options: &EconOptions,
) -> Result<GroupReport, EconError> {
    check_models(models, data)?;
    if idx.is_empty() {
        return Err(EconError::Empty("no observations"));
    }
    let k = data.n_alts();
    let choices = data.choices();

    let mut accuracy_per_model = Vec::with_capacity(models.len());
    let mut shares_per_model = Vec::with_capacity(models.len());
    for m in models {
        let pred = predictions(m, data, idx);
        let hits = pred.iter().zip(idx).filter(|(p, &i)| **p == choices[i]).count();
        accuracy_per_model.push(hits as f64 / idx.len() as f64);
        shares_per_model.push(market_share(m, data, idx)?);
    }
    let mut shares_mean = vec![0.0; k];
    let mut shares_std = vec![0.0; k];
    for a in 0..k {
        let col: Vec<f64> = shares_per_model.iter().map(|s| s[a]).collect();
        (shares_mean[a], shares_std[a]) = mean_std(&col);
    }

    let mut probabilities = Array2::zeros((idx.len(), k));
    let mut ensemble_pred = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        let p = mean_probabilities(models, &data.row_vec(i));
        ensemble_pred.push(argmax(&p));
        for (a, v) in p.into_iter().enumerate() {
            probabilities[[r, a]] = v;
        }
    }
    let ensemble_hits = ensemble_pred
        .iter()
        .zip(idx)
        .filter(|(p, &i)| **p == choices[i])
        .count();

    let (derivatives, elasticity) = derivatives_and_elasticities(models, data, idx)?;

    let (vot_individual, vot_training, vot_rows) = match &options.vot {
        Some(v) => {
            let individual = vot_stats(
                models,
                data,
                idx,
                v.time,
                v.cost,
                VotMode::PerIndividual { model: v.model },
                v.scale,
            )?;
            let training = vot_stats(models, data, idx, v.time, v.cost, VotMode::PerTraining, v.scale)?;
            let model = &models[v.model];
            let rows = idx
                .iter()
                .map(|&i| match vot(model, &data.row_vec(i), v.time, v.cost) {
                    Ok(r) => Ok(Some(Vot {
                        value: r.value * v.scale,
                        mrs_signed: r.mrs_signed * v.scale,
                        alternative: r.alternative,
                    })),
                    Err(EconError::UndefinedVot(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>, _>>()?;
            (Some(individual), Some(training), Some(rows))
        }
        None => (None, None, None),
    };

    let (alpha_values, welfare) = match &options.welfare {
        Some(w) => {
            let a = alphas(models, data, idx, w.alternative)?;
            let result = welfare_change(models, data, idx, &w.before, &w.after, &a)?;
            (Some(a), Some(result))
        }
        None => (None, None),
    };

    let (slice, slice_derivative) = match &options.slice {
        Some(s) => (
            Some(slice_curve(models, data, idx, s.feature, &s.grid)?),
            Some(slice_derivative_curve(models, data, idx, s.feature, &s.grid)?),
        ),
        None => (None, None),
    };

    let arch = models[0].arch();
    let n_weights = arch.n_weights();
    let n_layers = arch.n_layers();
    Ok(GroupReport {
        name: name.to_string(),
        n_models: models.len(),
        depth: arch.depth,
        width: arch.width,
        seeds: models.iter().map(|m| m.hyper.seed).collect(),
        ensemble_accuracy: ensemble_hits as f64 / idx.len() as f64,
        accuracy_per_model,
        shares_per_model,
        shares_mean,
        shares_std,
        probabilities,
        predictions: ensemble_pred,
        observation_index: idx.to_vec(),
        substitution: substitution_table(models, data, idx),
        derivatives,
        elasticity,
        vot_individual,
        vot_training,
        vot_rows,
        alphas: alpha_values,
        welfare,
        slice,
        slice_derivative,
        n_weights,
        n_layers,
        vc_bound: (n_weights >= 2).then(|| vc_bound(n_weights, n_layers)),
    })
}

/// Results for several groups on one split of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EconBundle {
    pub split: String,
    pub feature_names: Vec<String>,
    pub alt_names: Vec<String>,
    pub observed_shares: Vec<f64>,
    pub chosen: Vec<usize>,
    pub options: EconOptions,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotSummary {
    pub median: Option<f64>,
    pub share_negative: f64,
    pub share_undefined: f64,
    pub n_values: usize,
    pub n_evaluated: usize,
}

impl From<&VotStats> for VotSummary {
    fn from(v: &VotStats) -> Self {
        Self {
            median: v.median,
            share_negative: v.share_negative,
            share_undefined: v.share_undefined,
            n_values: v.values.len(),
            n_evaluated: v.n_evaluated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareSummary {
    pub total: f64,
    pub mean_per_included: f64,
    pub n_included: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub value: f64,
    pub n_weights: usize,
    pub n_layers: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub n_models: usize,
    pub depth: usize,
    pub width: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub ensemble_accuracy: f64,
    pub shares_mean: Vec<f64>,
    pub shares_std: Vec<f64>,
    /// `features x alternatives`; `None` where no value was defined.
    pub elasticity_mean: Vec<Vec<Option<f64>>>,
    pub elasticity_std: Vec<Vec<Option<f64>>>,
    pub elasticity_undefined: usize,
    pub vot_individual: Option<VotSummary>,
    pub vot_training: Option<VotSummary>,
    pub welfare: Option<WelfareSummary>,
    pub capacity: Option<CapacitySummary>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub format: String,
    pub version: u32,
    pub split: String,
    pub n_obs: usize,
    pub alternatives: Vec<String>,
    pub features: Vec<String>,
    pub observed_shares: Vec<f64>,
    pub slice_feature: Option<String>,
    pub groups: Vec<GroupSummary>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn table_rows(t: &Array2<f64>) -> Vec<Vec<Option<f64>>> {
    t.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| finite(*v)).collect())
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

impl EconBundle {
    pub fn n_obs(&self) -> usize {
        self.chosen.len()
    }

    fn feature_alt_table(&self, path: &Path, t: &Array2<f64>) -> std::io::Result<()> {
        let mut header = vec!["feature".to_string()];
        header.extend(self.alt_names.iter().cloned());
        let rows: Vec<Vec<String>> = self
            .feature_names
            .iter()
            .zip(t.rows())
            .map(|(f, r)| std::iter::once(f.clone()).chain(r.iter().map(|v| fmt(*v))).collect())
            .collect();
        write_csv(path, &header, &rows)
    }

    fn slice_file(&self, path: &Path, c: &SliceCurve) -> std::io::Result<()> {
        let mut header = vec![self.feature_names[c.feature].clone()];
        for a in &self.alt_names {
            header.push(format!("{a}_mean"));
            header.extend((0..c.per_model.len()).map(|m| format!("{a}_model{m:03}")));
        }
        let rows: Vec<Vec<String>> = c
            .grid
            .iter()
            .enumerate()
            .map(|(g, x)| {
                let mut row = vec![fmt(*x)];
                for a in 0..self.alt_names.len() {
                    row.push(fmt(c.ensemble_mean[[g, a]]));
                    row.extend(c.per_model.iter().map(|t| fmt(t[[g, a]])));
                }
                row
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    fn write_group(&self, dir: &Path, g: &GroupReport) -> std::io::Result<Vec<String>> {
        let mut files = Vec::new();
        let mut add = |name: String| -> std::path::PathBuf {
            let p = dir.join(&name);
            files.push(name);
            p
        };
        let n = &g.name;

        self.feature_alt_table(&add(format!("{n}_elasticity_mean.csv")), &g.elasticity.mean)?;
        self.feature_alt_table(&add(format!("{n}_elasticity_std.csv")), &g.elasticity.std)?;
        self.feature_alt_table(&add(format!("{n}_derivatives_mean.csv")), &g.derivatives.mean)?;
        self.feature_alt_table(&add(format!("{n}_derivatives_std.csv")), &g.derivatives.std)?;

        let mut header = vec!["alternative".to_string()];
        header.extend(self.alt_names.iter().cloned());
        let rows: Vec<Vec<String>> = self
            .alt_names
            .iter()
            .zip(g.substitution.rows())
            .map(|(a, r)| std::iter::once(a.clone()).chain(r.iter().map(|v| fmt(*v))).collect())
            .collect();
        write_csv(&add(format!("{n}_substitution.csv")), &header, &rows)?;

        let mut header = vec!["row".to_string()];
        header.extend(self.alt_names.iter().cloned());
        header.push("predicted".into());
        header.push("chosen".into());
        let rows: Vec<Vec<String>> = g
            .observation_index
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                let mut row = vec![i.to_string()];
                row.extend(g.probabilities.row(r).iter().map(|v| fmt(*v)));
                row.push(self.alt_names[g.predictions[r]].clone());
                row.push(self.alt_names[self.chosen[r]].clone());
                row
            })
            .collect();
        write_csv(&add(format!("{n}_probabilities.csv")), &header, &rows)?;

        if let Some(v) = &g.vot_rows {
            let rows: Vec<Vec<String>> = g
                .observation_index
                .iter()
                .zip(v)
                .map(|(i, r)| match r {
                    Some(r) => vec![
                        i.to_string(),
                        self.alt_names[r.alternative].clone(),
                        fmt(r.value),
                        fmt(r.mrs_signed),
                    ],
                    None => vec![i.to_string(), String::new(), String::new(), String::new()],
                })
                .collect();
            let header = ["row", "predicted", "vot", "mrs_signed"].map(String::from);
            write_csv(&add(format!("{n}_vot_individual.csv")), &header, &rows)?;
        }
        if let Some(v) = &g.vot_training {
            let rows: Vec<Vec<String>> = v.values.iter().map(|x| vec![fmt(*x)]).collect();
            write_csv(
                &add(format!("{n}_vot_training.csv")),
                &["model_median_vot".to_string()],
                &rows,
            )?;
        }
        if let (Some(w), Some(a)) = (&g.welfare, &g.alphas) {
            let rows: Vec<Vec<String>> = g
                .observation_index
                .iter()
                .zip(a)
                .zip(&w.per_individual)
                .map(|((i, alpha), d)| vec![i.to_string(), fmt(*alpha), d.map(fmt).unwrap_or_default()])
                .collect();
            let header = ["row", "alpha", "welfare_change"].map(String::from);
            write_csv(&add(format!("{n}_welfare.csv")), &header, &rows)?;
        }
        if let Some(c) = &g.slice {
            let f = &self.feature_names[c.feature];
            self.slice_file(&add(format!("slice_{n}_{f}.csv")), c)?;
        }
        if let Some(c) = &g.slice_derivative {
            let f = &self.feature_names[c.feature];
            self.slice_file(&add(format!("slice_derivative_{n}_{f}.csv")), c)?;
        }
        Ok(files)
    }

    fn shares_file(&self, path: &Path) -> std::io::Result<()> {
        let mut header = vec!["alternative".to_string(), "observed".to_string()];
        for g in &self.groups {
            header.push(format!("{}_mean", g.name));
            header.push(format!("{}_std", g.name));
        }
        let rows: Vec<Vec<String>> = self
            .alt_names
            .iter()
            .enumerate()
            .map(|(a, name)| {
                let mut row = vec![name.clone(), fmt(self.observed_shares[a])];
                for g in &self.groups {
                    row.push(fmt(g.shares_mean[a]));
                    row.push(fmt(g.shares_std[a]));
                }
                row
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    /// Writes all tables and `summary.json` into `dir`; returns the file
    /// names written, sorted.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut files = vec!["shares.csv".to_string()];
        self.shares_file(&dir.join("shares.csv"))?;
        let mut per_group = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let f = self.write_group(dir, g)?;
            files.extend(f.iter().cloned());
            per_group.push(f);
        }
        let summary = self.summary(per_group);
        let text = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)? + "\n";
        fs::write(dir.join("summary.json"), text)?;
        files.push("summary.json".into());
        files.sort();
        Ok(files)
    }

    fn summary(&self, files: Vec<Vec<String>>) -> BundleSummary {
        let groups = self
            .groups
            .iter()
            .zip(files)
            .map(|(g, files)| {
                let (accuracy_mean, accuracy_std) = mean_std(&g.accuracy_per_model);
                GroupSummary {
                    name: g.name.clone(),
                    n_models: g.n_models,
                    depth: g.depth,
                    width: g.width,
                    accuracy_mean,
                    accuracy_std,
                    ensemble_accuracy: g.ensemble_accuracy,
                    shares_mean: g.shares_mean.clone(),
                    shares_std: g.shares_std.clone(),
                    elasticity_mean: table_rows(&g.elasticity.mean),
                    elasticity_std: table_rows(&g.elasticity.std),
                    elasticity_undefined: g.elasticity.undefined,
                    vot_individual: g.vot_individual.as_ref().map(VotSummary::from),
                    vot_training: g.vot_training.as_ref().map(VotSummary::from),
                    welfare: g.welfare.as_ref().map(|w| WelfareSummary {
                        total: w.total,
                        mean_per_included: w.mean_included(),
                        n_included: w.n_included,
                        n_excluded: w.n_excluded,
                    }),
                    capacity: g.vc_bound.map(|value| CapacitySummary {
                        value,
                        n_weights: g.n_weights,
                        n_layers: g.n_layers,
                        note: "W*L*log2(W) with constant 1; order-of-magnitude diagnostic only".into(),
                    }),
                    files,
                }
            })
            .collect();
        BundleSummary {
            format: "choicenet-econ".into(),
            version: 1,
            split: self.split.clone(),
            n_obs: self.n_obs(),
            alternatives: self.alt_names.clone(),
            features: self.feature_names.clone(),
            observed_shares: self.observed_shares.clone(),
            slice_feature: self
                .options
                .slice
                .as_ref()
                .map(|s| self.feature_names[s.feature].clone()),
            groups,
        }
    }
}

impl BundleSummary {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

impl EconBundle {
    /// Analyzes every `(name, models)` group on the observations `idx`.
    pub fn build(
        split: &str,
        groups: &[(String, Vec<TrainedModel>)],
        data: &Dataset,
        idx: &[usize],
        options: &EconOptions,
    ) -> Result<Self, EconError> {
        if groups.is_empty() {
            return Err(EconError::Empty("no groups"));
        }
        let reports = groups
            .iter()
            .map(|(name, models)| analyze_group(name, models, data, idx, options))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            split: split.to_string(),
            feature_names: data.feature_names().to_vec(),
            alt_names: data.alt_names().to_vec(),
            observed_shares: data.observed_shares(idx),
            chosen: idx.iter().map(|&i| data.choices()[i]).collect(),
            options: options.clone(),
            groups: reports,
        })
    }
}
