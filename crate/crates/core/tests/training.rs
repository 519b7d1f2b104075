use operon_core::dataset::{Dataset, FunctionDrawer, FunctionPair, GenerationParams, Problem};
use operon_core::model::{ModelKind, ModelSpec, OperatorModel};
use operon_core::pde::{SolutionField, SolverGrid};
use operon_core::train::{self, CompareConfig, TrainConfig};
use operon_core::Error;

fn small_params() -> GenerationParams {
    GenerationParams {
        solver: SolverGrid { nx: 41, nt: 21 },
        sensor_count: 21,
        ..GenerationParams::default()
    }
}

fn small_model(kind: ModelKind, seed: u64) -> OperatorModel {
    let spec = match kind {
        ModelKind::Fnn => ModelSpec::fnn(vec![21, 21], vec![16, 16], seed),
        ModelKind::DeepOnetConcat => ModelSpec::deeponet_concat(vec![21, 21], vec![16], vec![16], 8, seed),
        ModelKind::EDeepOnet => ModelSpec::edeeponet(vec![21, 21], vec![16], vec![16], 8, seed),
    };
    OperatorModel::build(spec).unwrap()
}

#[test]
fn frozen_optimizer_keeps_parameters_and_flat_curve() {
    let ds = Dataset::generate(Problem::Diffusion, 10, 8, 1, small_params()).unwrap();
    let split = ds.split(0.8, 0).unwrap();
    let mut model = small_model(ModelKind::EDeepOnet, 2);
    let before = model.parameters();
    let config = TrainConfig { lr: 0.0, epochs: 4, batch_size: Some(7), ..Default::default() };
    let out = train::train(&mut model, &ds, &split, &config).unwrap();
    assert_eq!(model.parameters(), before);
    let first = out.metrics.epochs[0].train_mse;
    assert!(out.metrics.epochs.iter().all(|e| e.train_mse.to_bits() == first.to_bits()));
    assert!((first - train::evaluate_mse(&model, &ds, &split.train_records()).unwrap()).abs() < 1e-14);
}

#[test]
fn single_record_is_memorized() {
    // two functions with one query each; the train side is a single record
    let ds = Dataset::generate(Problem::AdvectionDiffusion, 2, 1, 4, small_params()).unwrap();
    let split = ds.split(0.5, 0).unwrap();
    assert_eq!(split.train_records().len(), 1);
    for kind in ModelKind::ALL {
        let mut model = small_model(kind, 9);
        // one Adam step per epoch; at the default rate b0 alone moves at most 0.05
        let config = TrainConfig { epochs: 500, lr: 1e-2, ..Default::default() };
        let out = train::train(&mut model, &ds, &split, &config).unwrap();
        assert!(out.metrics.best_train_mse < 1e-6, "{kind}: {}", out.metrics.best_train_mse);
    }
}

#[test]
fn identical_runs_give_identical_curves() {
    let ds = Dataset::generate(Problem::Diffusion, 12, 10, 3, small_params()).unwrap();
    let split = ds.split(0.75, 1).unwrap();
    let config = TrainConfig { lr: 1e-3, epochs: 5, batch_size: Some(16), seed: 4, ..Default::default() };
    let run = || {
        let mut model = small_model(ModelKind::DeepOnetConcat, 5);
        let out = train::train(&mut model, &ds, &split, &config).unwrap();
        (out.metrics.curves_csv(), out.checkpoint.to_checkpoint_bytes())
    };
    assert_eq!(run(), run());
}

#[test]
fn best_values_are_curve_minima_and_checkpoint_reproduces_them() {
    let ds = Dataset::generate(Problem::Diffusion, 12, 10, 3, small_params()).unwrap();
    let split = ds.split(0.75, 1).unwrap();
    let config = TrainConfig { lr: 3e-3, epochs: 8, batch_size: Some(10), eval_every: 2, ..Default::default() };
    let mut model = small_model(ModelKind::Fnn, 1);
    let out = train::train(&mut model, &ds, &split, &config).unwrap();
    let csv = out.metrics.curves_csv();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().map(|r| r[0] as usize).collect::<Vec<_>>(), vec![2, 4, 6, 8]);
    let min_test = rows.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    assert_eq!(min_test, out.metrics.best_test_mse);
    let min_train = out.metrics.epochs.iter().map(|e| e.train_mse).fold(f64::INFINITY, f64::min);
    assert_eq!(min_train, out.metrics.best_train_mse);
    let test_records = split.test_records();
    let again = train::evaluate_mse(&out.checkpoint, &ds, &test_records).unwrap();
    assert_eq!(again, out.metrics.best_test_mse);
    assert_eq!(again, train::evaluate_mse(&out.checkpoint, &ds, &test_records).unwrap());
}

#[test]
fn mse_is_shift_invariant() {
    let p = [0.3, -1.2, 2.5, 0.0];
    let t = [0.1, -1.0, 2.0, 0.4];
    let base = train::mse(&p, &t).unwrap();
    for c in [-3.0, 0.5, 10.0] {
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        let ts: Vec<f64> = t.iter().map(|v| v + c).collect();
        assert!((train::mse(&ps, &ts).unwrap() - base).abs() < 1e-12);
    }
}

#[test]
fn diverging_run_aborts_with_diagnostics() {
    let ds = Dataset::generate(Problem::Diffusion, 4, 4, 3, small_params()).unwrap();
    let split = ds.split(0.5, 0).unwrap();
    let mut model = small_model(ModelKind::EDeepOnet, 0);
    let mut params = model.parameters();
    params[0] = 1e300;
    params[1] = -1e300;
    model.set_parameters(&params).unwrap();
    let config = TrainConfig { epochs: 2, ..Default::default() };
    match train::train(&mut model, &ds, &split, &config) {
        Err(Error::Diverged { epoch, max_abs_param, .. }) => {
            assert_eq!(epoch, 1);
            assert!(max_abs_param >= 1e300);
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.metrics)),
    }
}

#[test]
fn schema_mismatch_is_rejected() {
    let ds = Dataset::generate(Problem::Diffusion, 4, 4, 3, small_params()).unwrap();
    let split = ds.split(0.5, 0).unwrap();
    let mut three = OperatorModel::build(ModelSpec::edeeponet(vec![21; 3], vec![8], vec![8], 4, 0)).unwrap();
    assert!(matches!(
        train::train(&mut three, &ds, &split, &TrainConfig::default()),
        Err(Error::Usage(_))
    ));
}

#[test]
fn zero_model_on_zero_field_has_zero_error() {
    let grid = SolverGrid::new(21, 11).unwrap();
    let mut model = small_model(ModelKind::EDeepOnet, 0);
    let zeros = vec![0.0; model.parameter_count()];
    model.set_parameters(&zeros).unwrap();
    let truth = Problem::Diffusion.solve(&[0.1; 21], &[0.0; 21], grid).unwrap();
    let pair = FunctionPair { u: vec![0.0; 21], v: vec![0.0; 21] };
    let eval = train::evaluate_field(&model, &pair, &truth).unwrap();
    assert!(eval.error.values().iter().all(|&e| e == 0.0));
    assert_eq!(eval.max_error, 0.0);
}

#[test]
fn error_field_consistency() {
    let params = small_params();
    let drawn = FunctionDrawer::new(Problem::Diffusion, params).unwrap().draw(17).unwrap();
    let model = small_model(ModelKind::DeepOnetConcat, 3);
    let eval = train::evaluate_field(&model, &drawn.pair, &drawn.field).unwrap();
    assert!(eval.max_error >= eval.mean_error);
    let grid = drawn.field.grid();
    // the t = 0 slice of the truth is the initial condition on the solver grid
    for j in 0..grid.nx {
        let direct = (eval.prediction.at(j, 0) - drawn.v.finest()[j]).abs();
        assert_eq!(direct, eval.error.at(j, 0));
    }
    let mut text = Vec::new();
    train::write_field_text(&eval.error, &mut text).unwrap();
    let parsed = train::read_field_text(std::str::from_utf8(&text).unwrap()).unwrap();
    let max = parsed.values().iter().fold(0.0_f64, |a, &b| a.max(b));
    assert_eq!(max, eval.max_error);
}

#[test]
fn constant_field_round_trips_through_text() {
    let grid = SolverGrid::new(7, 4).unwrap();
    let field = SolutionField::from_fn(grid, |x, t| x.sin() + 1e-300 * t).unwrap();
    let mut text = Vec::new();
    train::write_field_text(&field, &mut text).unwrap();
    let back = train::read_field_text(std::str::from_utf8(&text).unwrap()).unwrap();
    assert_eq!(back.values(), field.values());
}

#[test]
fn comparison_report_is_consistent() {
    let ds = Dataset::generate(Problem::Diffusion, 20, 5, 6, small_params()).unwrap();
    let reference = ModelSpec::edeeponet(vec![21, 21], vec![12], vec![12], 8, 0);
    let config = CompareConfig {
        n_seeds: 2,
        train: TrainConfig { epochs: 3, lr: 1e-3, ..Default::default() },
        reference: Some(reference),
        ..Default::default()
    };
    let out = train::compare(&ds, &config).unwrap();
    let report = &out.report;
    assert!(report.complete);
    assert_eq!(report.models.len(), 3);
    let counts: Vec<f64> = report.models.iter().map(|m| m.param_count as f64).collect();
    let (lo, hi) = counts.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), &c| (l.min(c), h.max(c)));
    assert!(hi / lo <= 1.05 / 0.95);
    for m in &report.models {
        assert_eq!(m.runs.len(), 2);
        assert_eq!(m.spec_digest, m.spec.digest());
        let tests: Vec<f64> = m.runs.iter().map(|r| r.best_test_mse.unwrap()).collect();
        assert_eq!(m.median_best_test_mse, train::median(&tests));
    }
    let enhanced = report.model(ModelKind::EDeepOnet).unwrap();
    for r in &report.ratios {
        let base = report.model(r.baseline).unwrap();
        assert_eq!(r.test.unwrap(), base.median_best_test_mse.unwrap() / enhanced.median_best_test_mse.unwrap());
        assert_eq!(r.train.unwrap(), base.median_best_train_mse.unwrap() / enhanced.median_best_train_mse.unwrap());
    }
    let json = serde_json::to_string(report).unwrap();
    let back: train::ComparisonReport = serde_json::from_str(&json).unwrap();
    assert_eq!(&back, report);
    assert!(report.table().contains("edeeponet"));
}
