//! MSE training with Adam, per-epoch curves, best-checkpoint selection, the
//! three-way comparison experiment and field evaluation/export.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetSplit, FunctionPair, Problem};
use crate::error::{Error, Result};
use crate::model::{self, ModelKind, ModelSpec, OperatorModel};
use crate::optim::{AdamConfig, AdamState};
use crate::pde::{SolutionField, SolverGrid};
use crate::rng;
use crate::tensor::Tensor2;

/// Rows per chunk when evaluating a whole split side.
const EVAL_CHUNK: usize = 4096;

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Parameter("mse of an empty batch".into()));
    }
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPolicy {
    /// Keep the parameters with the lowest test MSE.
    #[default]
    BestTest,
    /// Keep the parameters after the last epoch.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// `None` selects `min(1000, train_records / 10)` (at least 1).
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub checkpoint: CheckpointPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: None,
            epochs: 200,
            eval_every: 1,
            seed: 0,
            checkpoint: CheckpointPolicy::BestTest,
        }
    }
}

impl TrainConfig {
    /// Checks the configuration. A zero learning rate is accepted so the
    /// frozen-optimizer case can be exercised.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Parameter("eval_every must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolved_batch_size(&self, train_records: usize) -> usize {
        self.batch_size.unwrap_or_else(|| (train_records / 10).clamp(1, 1000))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
    pub best_train_mse: f64,
    pub best_train_epoch: usize,
    pub best_test_mse: f64,
    pub best_test_epoch: usize,
}

impl RunMetrics {
    pub fn train_mse_at(&self, epoch: usize) -> Option<f64> {
        self.epochs.iter().find(|e| e.epoch == epoch).map(|e| e.train_mse)
    }

    /// `epoch,train_mse,test_mse`, one row per evaluated epoch. Values use
    /// the shortest round-trip representation.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,test_mse\n");
        for e in &self.epochs {
            if let Some(test) = e.test_mse {
                out.push_str(&format!("{},{:e},{:e}\n", e.epoch, e.train_mse, test));
            }
        }
        out
    }
}

pub struct TrainOutcome {
    pub metrics: RunMetrics,
    /// Parameters selected by the checkpoint policy.
    pub checkpoint: OperatorModel,
}

fn check_schema(model: &OperatorModel, dataset: &Dataset) -> Result<()> {
    let spec = model.spec();
    if spec.n_branches() != 2 || spec.sensor_counts.iter().any(|&m| m != dataset.m()) || spec.query_dim != 2 {
        return Err(Error::Usage(format!(
            "model expects {:?} sensors per input and {}-d queries; dataset records hold two functions of {} sensors and (x, t) queries",
            spec.sensor_counts,
            spec.query_dim,
            dataset.m()
        )));
    }
    Ok(())
}

/// Squared errors of `model` on `records`, summed in record order.
fn sum_squared_errors(model: &OperatorModel, dataset: &Dataset, records: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in records.chunks(EVAL_CHUNK) {
        let batch = dataset.gather(chunk);
        let pred = model.predict(&[&batch.u, &batch.v], &batch.y)?;
        total += pred.iter().zip(&batch.s).map(|(p, s)| (p - s) * (p - s)).sum::<f64>();
    }
    Ok(total)
}

/// MSE over `records` in inference mode; the model is not modified.
pub fn evaluate_mse(model: &OperatorModel, dataset: &Dataset, records: &[usize]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Parameter("cannot evaluate on an empty split side".into()));
    }
    Ok(sum_squared_errors(model, dataset, records)? / records.len() as f64)
}

/// Trains `model` in place.
///
/// The reported train MSE of an epoch is the mean squared error of every
/// train record at the moment its batch was processed. Squared errors are
/// accumulated per record and summed in record order, so the value does not
/// depend on the shuffle.
pub fn train(model: &mut OperatorModel, dataset: &Dataset, split: &DatasetSplit, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_schema(model, dataset)?;
    let train_records = split.train_records();
    let test_records = split.test_records();
    if train_records.is_empty() || test_records.is_empty() {
        return Err(Error::Parameter("train and test sides must be non-empty".into()));
    }
    let batch_size = config.resolved_batch_size(train_records.len());
    let mut adam = AdamState::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    })?;
    let mut squared = vec![0.0; dataset.len()];
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best_test = (f64::INFINITY, 0);
    let mut best_train = (f64::INFINITY, 0);
    let mut checkpoint = model.clone();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let epoch_seed = rng::derive_seed(config.seed, &[epoch as u64]);
        for (batch_index, batch) in dataset.batch_iter(&train_records, batch_size, epoch_seed)?.enumerate() {
            let pred = model.forward(&[&batch.u, &batch.v], &batch.y)?;
            let b = batch.len() as f64;
            let mut upstream = Vec::with_capacity(batch.len());
            let mut loss = 0.0;
            for ((p, s), &i) in pred.iter().zip(&batch.s).zip(&batch.indices) {
                let e = p - s;
                squared[i] = e * e;
                loss += e * e;
                upstream.push(2.0 * e / b);
            }
            loss /= b;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_index,
                    loss,
                    max_abs_param: model.max_abs_parameter(),
                });
            }
            model.backward(&upstream)?;
            adam.apply_update(model)?;
        }
        model.clear_cache();
        let train_mse = train_records.iter().map(|&i| squared[i]).sum::<f64>() / train_records.len() as f64;
        if train_mse < best_train.0 {
            best_train = (train_mse, epoch);
        }
        let test_mse = if epoch % config.eval_every == 0 || epoch == config.epochs {
            let value = evaluate_mse(model, dataset, &test_records)?;
            if !value.is_finite() {
                // reported against the batch count, i.e. after the last update
                return Err(Error::Diverged {
                    epoch,
                    batch: train_records.len().div_ceil(batch_size),
                    loss: value,
                    max_abs_param: model.max_abs_parameter(),
                });
            }
            if value < best_test.0 {
                best_test = (value, epoch);
                if config.checkpoint == CheckpointPolicy::BestTest {
                    checkpoint = model.clone();
                }
            }
            Some(value)
        } else {
            None
        };
        log::debug!("epoch {epoch}: train {train_mse:e}, test {test_mse:?}");
        epochs.push(EpochMetrics {
            epoch,
            train_mse,
            test_mse,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    if config.checkpoint == CheckpointPolicy::Final {
        checkpoint = model.clone();
    }
    Ok(TrainOutcome {
        metrics: RunMetrics {
            epochs,
            best_train_mse: best_train.0,
            best_train_epoch: best_train.1,
            best_test_mse: best_test.0,
            best_test_epoch: best_test.1,
        },
        checkpoint,
    })
}

/// Writes `curves.csv` and `model.bin` for one run into `dir`.
pub fn write_run_artifacts(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("curves.csv"), outcome.metrics.curves_csv())?;
    outcome.checkpoint.save(&dir.join("model.bin"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub n_seeds: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Master seed for model initialization and batch shuffling.
    pub seed: u64,
    /// Number of enhanced-DeepONet branches (must equal the number of input
    /// functions in the dataset).
    pub branches: usize,
    pub train: TrainConfig,
    /// Reference architecture the other kinds are matched against; `None`
    /// uses the default enhanced DeepONet.
    pub reference: Option<ModelSpec>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            n_seeds: 5,
            train_fraction: 0.9,
            split_seed: 0,
            seed: 0,
            branches: 2,
            train: TrainConfig::default(),
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed_index: usize,
    pub model_seed: u64,
    pub best_train_mse: Option<f64>,
    pub best_test_mse: Option<f64>,
    pub best_train_epoch: Option<usize>,
    pub best_test_epoch: Option<usize>,
    /// Train MSE at `early_epoch` of the report.
    pub early_train_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub kind: ModelKind,
    pub spec_digest: String,
    pub param_count: usize,
    pub spec: ModelSpec,
    pub runs: Vec<SeedResult>,
    pub median_best_train_mse: Option<f64>,
    pub median_best_test_mse: Option<f64>,
    pub median_early_train_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub baseline: ModelKind,
    /// Baseline median best train MSE over enhanced-DeepONet median.
    pub train: Option<f64>,
    pub test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub problem: Problem,
    pub dataset_digest: String,
    pub config: CompareConfig,
    /// Epoch at 10% of the budget, where early train MSE is recorded.
    pub early_epoch: usize,
    pub complete: bool,
    pub models: Vec<ModelReport>,
    pub ratios: Vec<Improvement>,
}

impl ComparisonReport {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.kind == kind)
    }

    /// Aligned plain-text table of medians and ratios.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3e}"));
        let ratio = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}x"));
        let mut out = format!(
            "{:<10} {:>8} {:>12} {:>12} {:>10} {:>10}\n",
            "model", "params", "train_mse", "test_mse", "train_imp", "test_imp"
        );
        for m in &self.models {
            let imp = self.ratios.iter().find(|r| r.baseline == m.kind);
            out.push_str(&format!(
                "{:<10} {:>8} {:>12} {:>12} {:>10} {:>10}\n",
                m.kind.name(),
                m.param_count,
                fmt(m.median_best_train_mse),
                fmt(m.median_best_test_mse),
                ratio(imp.and_then(|r| r.train)),
                ratio(imp.and_then(|r| r.test)),
            ));
        }
        if !self.complete {
            out.push_str("(incomplete: at least one run failed)\n");
        }
        out
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Parameter-matched specs for the three kinds, derived from the reference.
pub fn comparison_specs(dataset: &Dataset, config: &CompareConfig) -> Result<Vec<ModelSpec>> {
    let reference = match &config.reference {
        Some(spec) => spec.clone(),
        None => ModelSpec::default_for(ModelKind::EDeepOnet, dataset.m(), config.branches, 0)?,
    };
    ModelKind::ALL
        .iter()
        .map(|&kind| model::match_parameter_counts(&reference, kind))
        .collect()
}

/// One finished (or failed) run of the comparison.
pub struct CompareRun {
    pub kind: ModelKind,
    pub seed_index: usize,
    pub outcome: Result<TrainOutcome>,
}

pub struct ComparisonOutcome {
    pub report: ComparisonReport,
    pub runs: Vec<CompareRun>,
}

/// Trains every kind on the same split for `n_seeds` seeds.
///
/// Seed index `s` shares one batch-shuffling seed across kinds; model
/// initialization seeds differ per kind. Runs execute on the current rayon
/// pool and results are assembled in a fixed order.
pub fn compare(dataset: &Dataset, config: &CompareConfig) -> Result<ComparisonOutcome> {
    config.train.validate()?;
    if config.n_seeds == 0 {
        return Err(Error::Parameter("need at least one seed".into()));
    }
    if config.branches != 2 {
        return Err(Error::Usage(format!(
            "dataset records carry 2 input functions; --branches {} is not supported",
            config.branches
        )));
    }
    let specs = comparison_specs(dataset, config)?;
    let split = dataset.split(config.train_fraction, config.split_seed)?;
    let jobs: Vec<(usize, usize)> = (0..config.n_seeds)
        .flat_map(|s| (0..specs.len()).map(move |k| (s, k)))
        .collect();
    let runs: Vec<CompareRun> = jobs
        .par_iter()
        .map(|&(s, k)| {
            let mut spec = specs[k].clone();
            spec.seed = rng::derive_seed(config.seed, &[s as u64, k as u64]);
            let train_config = TrainConfig {
                seed: rng::derive_seed(config.seed, &[s as u64]),
                ..config.train
            };
            let outcome = OperatorModel::build(spec).and_then(|mut m| train(&mut m, dataset, &split, &train_config));
            if let Err(e) = &outcome {
                log::error!("{} seed {s} failed: {e}", specs[k].kind);
            }
            CompareRun {
                kind: specs[k].kind,
                seed_index: s,
                outcome,
            }
        })
        .collect();

    let early_epoch = (config.train.epochs / 10).max(1);
    let mut models = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        let mut results = Vec::new();
        for run in runs.iter().filter(|r| r.kind == spec.kind) {
            let model_seed = rng::derive_seed(config.seed, &[run.seed_index as u64, k as u64]);
            results.push(match &run.outcome {
                Ok(o) => SeedResult {
                    seed_index: run.seed_index,
                    model_seed,
                    best_train_mse: Some(o.metrics.best_train_mse),
                    best_test_mse: Some(o.metrics.best_test_mse),
                    best_train_epoch: Some(o.metrics.best_train_epoch),
                    best_test_epoch: Some(o.metrics.best_test_epoch),
                    early_train_mse: o.metrics.train_mse_at(early_epoch),
                    error: None,
                },
                Err(e) => SeedResult {
                    seed_index: run.seed_index,
                    model_seed,
                    best_train_mse: None,
                    best_test_mse: None,
                    best_train_epoch: None,
                    best_test_epoch: None,
                    early_train_mse: None,
                    error: Some(e.to_string()),
                },
            });
        }
        let collect = |f: fn(&SeedResult) -> Option<f64>| results.iter().filter_map(f).collect::<Vec<_>>();
        models.push(ModelReport {
            kind: spec.kind,
            spec_digest: spec.digest(),
            param_count: spec.parameter_count(),
            spec: spec.clone(),
            median_best_train_mse: median(&collect(|r| r.best_train_mse)),
            median_best_test_mse: median(&collect(|r| r.best_test_mse)),
            median_early_train_mse: median(&collect(|r| r.early_train_mse)),
            runs: results,
        });
    }
    let enhanced = models
        .iter()
        .find(|m| m.kind == ModelKind::EDeepOnet)
        .map(|m| (m.median_best_train_mse, m.median_best_test_mse))
        .unwrap_or((None, None));
    let quotient = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a / b);
    let ratios = models
        .iter()
        .filter(|m| m.kind != ModelKind::EDeepOnet)
        .map(|m| Improvement {
            baseline: m.kind,
            train: quotient(m.median_best_train_mse, enhanced.0),
            test: quotient(m.median_best_test_mse, enhanced.1),
        })
        .collect();
    let complete = runs.iter().all(|r| r.outcome.is_ok());
    Ok(ComparisonOutcome {
        report: ComparisonReport {
            problem: dataset.problem(),
            dataset_digest: dataset.digest(),
            config: config.clone(),
            early_epoch,
            complete,
            models,
            ratios,
        },
        runs,
    })
}

/// Writes `report.json` and one `<kind>/seed<s>/` directory per successful
/// run.
pub fn write_comparison(dir: &Path, outcome: &ComparisonOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&outcome.report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    for run in &outcome.runs {
        if let Ok(o) = &run.outcome {
            write_run_artifacts(&dir.join(run.kind.name()).join(format!("seed{}", run.seed_index)), o)?;
        }
    }
    Ok(())
}

/// Truth, prediction and pointwise absolute error on the solver grid.
#[derive(Debug, Clone)]
pub struct FieldEvaluation {
    pub truth: SolutionField,
    pub prediction: SolutionField,
    pub error: SolutionField,
    pub max_error: f64,
    pub mean_error: f64,
}

/// Queries `model` at every node of `truth`'s grid for the input pair.
pub fn evaluate_field(model: &OperatorModel, pair: &FunctionPair, truth: &SolutionField) -> Result<FieldEvaluation> {
    let grid = truth.grid();
    let m = pair.u.len();
    if model.spec().n_branches() != 2 || model.spec().sensor_counts.iter().any(|&c| c != m) {
        return Err(Error::Usage(format!(
            "model expects sensors {:?}, input pair has two functions of {m} sensors",
            model.spec().sensor_counts
        )));
    }
    let nodes: Vec<(usize, usize)> = (0..grid.nt).flat_map(|k| (0..grid.nx).map(move |j| (j, k))).collect();
    let mut predicted = Vec::with_capacity(nodes.len());
    for chunk in nodes.chunks(EVAL_CHUNK) {
        let b = chunk.len();
        let u = Tensor2::from_vec(b, m, pair.u.repeat(b))?;
        let v = Tensor2::from_vec(b, m, pair.v.repeat(b))?;
        let y = Tensor2::from_vec(b, 2, chunk.iter().flat_map(|&(j, k)| [grid.x(j), grid.t(k)]).collect())?;
        predicted.extend(model.predict(&[&u, &v], &y)?);
    }
    let prediction = SolutionField::from_values(grid, predicted)?;
    let errors: Vec<f64> = prediction
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| (p - t).abs())
        .collect();
    let max_error = errors.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(FieldEvaluation {
        truth: truth.clone(),
        prediction,
        error: SolutionField::from_values(grid, errors)?,
        max_error,
        mean_error,
    })
}

/// `nx nt` header line, then `nt` rows of `nx` values.
pub fn write_field_text<W: Write>(field: &SolutionField, mut w: W) -> Result<()> {
    let grid: SolverGrid = field.grid();
    writeln!(w, "{} {}", grid.nx, grid.nt)?;
    for k in 0..grid.nt {
        let row: Vec<String> = field.level(k).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Parses the format written by [`write_field_text`].
pub fn read_field_text(text: &str) -> Result<SolutionField> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty field file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::Format(format!("bad field header '{header}'"))))
        .collect::<Result<_>>()?;
    let [nx, nt] = dims[..] else {
        return Err(Error::Format(format!("bad field header '{header}'")));
    };
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("bad field value '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    SolutionField::from_values(SolverGrid::new(nx, nt)?, values)
}

/// Binary PGM (P5), `nx` wide and `nt` tall, time increasing downward,
/// linearly scaled from the field minimum (black) to maximum (white).
pub fn write_pgm<W: Write>(field: &SolutionField, mut w: W) -> Result<()> {
    let grid = field.grid();
    let (lo, hi) = field
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    write!(w, "P5\n{} {}\n255\n", grid.nx, grid.nt)?;
    let pixels: Vec<u8> = field
        .values()
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    w.write_all(&pixels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_hand_values() {
        assert_eq!(mse(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(mse(&[0.5, -2.0], &[0.5, -2.0]).unwrap(), 0.0);
        assert!(matches!(mse(&[], &[]), Err(Error::Parameter(_))));
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ratio_is_quotient() {
        // best MSEs (1.0e-5, 5.0e-6) give a 2x improvement
        assert_eq!(1.0e-5 / 5.0e-6, 2.0);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn default_batch_size() {
        let c = TrainConfig::default();
        assert_eq!(c.resolved_batch_size(90_000), 1000);
        assert_eq!(c.resolved_batch_size(500), 50);
        assert_eq!(c.resolved_batch_size(3), 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn field_text_round_trip_and_pgm_shape() {
        let grid = SolverGrid::new(5, 3).unwrap();
        let field = SolutionField::from_fn(grid, |x, t| x * 0.3 - t).unwrap();
        let mut text = Vec::new();
        write_field_text(&field, &mut text).unwrap();
        let back = read_field_text(std::str::from_utf8(&text).unwrap()).unwrap();
        assert_eq!(back.values(), field.values());
        let mut pgm = Vec::new();
        write_pgm(&field, &mut pgm).unwrap();
        assert!(pgm.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(pgm.len(), b"P5\n5 3\n255\n".len() + 15);
    }
}
