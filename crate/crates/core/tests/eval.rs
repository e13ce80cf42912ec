use demandfuse::eval::*;
use demandfuse::model::{FeatureSet, Variant};
use proptest::prelude::*;

fn input(y: &[f64], p: &[f64]) -> MetricsInput {
    MetricsInput::new(y.to_vec(), p.to_vec()).unwrap()
}

#[test]
fn hand_computed_example() {
    let m = compute_metrics(&input(&[100.0, 200.0], &[110.0, 190.0])).unwrap();
    assert!((m.mae - 10.0).abs() < 1e-9);
    assert!((m.rmse - 10.0).abs() < 1e-9);
    assert!((m.mape.unwrap() - 7.5).abs() < 1e-9);
    assert!((m.r2 - 0.96).abs() < 1e-9);
    assert_eq!(m.n, 2);
}

#[test]
fn perfect_prediction() {
    let y = [3.0, 7.0, 11.0, 2.0];
    let m = compute_metrics(&input(&y, &y)).unwrap();
    assert_eq!((m.mae, m.rmse, m.mape, m.r2), (0.0, 0.0, Some(0.0), 1.0));
}

#[test]
fn mean_predictor_has_zero_r2() {
    let y = [3.0, 7.0, 11.0, 3.0];
    let m = compute_metrics(&input(&y, &[6.0; 4])).unwrap();
    assert_eq!(m.r2, 0.0);
}

#[test]
fn constant_actuals_follow_the_degenerate_r2_rule() {
    assert_eq!(compute_metrics(&input(&[5.0, 5.0], &[5.0, 5.0])).unwrap().r2, 1.0);
    assert_eq!(compute_metrics(&input(&[5.0, 5.0], &[4.0, 5.0])).unwrap().r2, 0.0);
}

#[test]
fn zero_actual_is_a_mape_error_naming_the_index() {
    let err = compute_metrics(&input(&[3.0, 0.0, 1.0], &[1.0, 1.0, 1.0])).unwrap_err();
    match err {
        EvalError::Metric(msg) => assert!(msg.contains("index 1"), "{msg}"),
        e => panic!("{e}"),
    }
    let m = compute_metrics_without_mape(&input(&[3.0, 0.0, 1.0], &[1.0, 1.0, 1.0]));
    assert_eq!(m.mape, None);
    assert!((m.mae - 1.0).abs() < 1e-12);
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(MetricsInput::new(vec![1.0], vec![1.0, 2.0]).is_err());
    assert!(MetricsInput::new(vec![], vec![]).is_err());
    assert!(MetricsInput::new(vec![1.0, f64::NAN], vec![1.0, 2.0]).is_err());
}

proptest! {
    #[test]
    fn rmse_dominates_mae_and_r2_is_bounded(pairs in prop::collection::vec((1.0f64..1e3, -1e3f64..1e3), 1..60)) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = compute_metrics(&MetricsInput::new(y, p).unwrap()).unwrap();
        prop_assert!(m.rmse >= m.mae - 1e-12 * m.mae.max(1.0));
        prop_assert!(m.mae >= 0.0);
        prop_assert!(m.mape.unwrap() >= 0.0);
        prop_assert!(m.r2 <= 1.0);
    }

    #[test]
    fn metrics_ignore_a_common_permutation(pairs in prop::collection::vec((1.0f64..1e3, -1e3f64..1e3), 2..40), k in 0usize..40) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let a = compute_metrics(&MetricsInput::new(y.clone(), p.clone()).unwrap()).unwrap();
        let k = k % y.len();
        let mut y2 = y.clone();
        let mut p2 = p.clone();
        y2.rotate_left(k);
        p2.rotate_left(k);
        y2.reverse();
        p2.reverse();
        let b = compute_metrics(&MetricsInput::new(y2, p2).unwrap()).unwrap();
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * u.abs().max(1.0);
        prop_assert!(close(a.mae, b.mae) && close(a.rmse, b.rmse) && close(a.r2, b.r2));
        prop_assert!(close(a.mape.unwrap(), b.mape.unwrap()));
    }

    #[test]
    fn breakdown_partitions_and_reweights(
        rows in prop::collection::vec((1.0f64..1e3, 0.0f64..1e3, any::<bool>()), 1..60),
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let p: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let flags: Vec<bool> = rows.iter().map(|r| r.2).collect();
        let inp = MetricsInput::new(y, p).unwrap();
        let all = compute_metrics(&inp).unwrap();
        let b = breakdown(&inp, &flags).unwrap();
        let ne = b.event.map_or(0, |m| m.n);
        let nn = b.non_event.map_or(0, |m| m.n);
        prop_assert_eq!(ne + nn, inp.len());
        let weighted = (b.event.map_or(0.0, |m| m.mae * m.n as f64) + b.non_event.map_or(0.0, |m| m.mae * m.n as f64))
            / inp.len() as f64;
        prop_assert!((weighted - all.mae).abs() < 1e-9);
    }
}

#[test]
fn breakdown_marks_empty_groups() {
    let b = breakdown(&input(&[1.0, 2.0], &[1.0, 2.5]), &[false, false]).unwrap();
    assert!(b.event.is_none());
    assert_eq!(b.non_event.unwrap().n, 2);
    assert!(matches!(breakdown(&input(&[1.0], &[1.0]), &[true, false]), Err(EvalError::Contract(_))));
}

#[test]
fn sample_standard_deviation() {
    assert_eq!(Stat::of(&[4.0]).unwrap(), Stat { mean: 4.0, std: 0.0 });
    let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!((s.mean - 2.5).abs() < 1e-15);
    assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert!(Stat::of(&[]).is_none());
}

#[test]
fn cell_format_has_one_decimal() {
    assert_eq!(cell(Stat { mean: 93.24, std: 0.77 }, 1.0), "93.2 (±0.8)");
    assert_eq!(cell(Stat { mean: 0.6431, std: 0.012 }, 100.0), "64.3 (±1.2)");
}

#[test]
fn report_format_parses() {
    assert_eq!("table".parse::<ReportFormat>().unwrap(), ReportFormat::Table);
    assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
    assert!("json".parse::<ReportFormat>().is_err());
}

// ----- experiments ------------------------------------------------------------------

fn small_experiment(runs: usize) -> ExperimentConfig {
    let mut synth = demandfuse::data::SynthConfig::default();
    synth.n_days = 240;
    let mut c = ExperimentConfig::new(DataSource::Synthetic {
        seed: 3,
        synth,
        splits: SplitSpec {
            train: "2013-01-01:2013-05-31".into(),
            val: "2013-06-01:2013-07-15".into(),
            test: "2013-07-16:2013-08-28".into(),
        },
        embedding_dim: 8,
        lags: 6,
    });
    c.variants = vec![Variant::DlLstm, Variant::DlFc];
    c.feature_sets = vec![FeatureSet::LWET, FeatureSet::L];
    c.runs = runs;
    c.training.max_epochs = Some(3);
    c
}

#[test]
fn report_rows_follow_variant_then_ablation_order() {
    let cfg = small_experiment(2);
    let data = cfg.data.load().unwrap();
    let r = run_experiment::<f64>(&cfg, &data).unwrap();
    let labels: Vec<String> = r.cells.iter().map(CellReport::label).collect();
    assert_eq!(labels, ["DL-FC L", "DL-FC L+W+E+T", "DL-LSTM L", "DL-LSTM L+W+E+T"]);
    for c in &r.cells {
        assert_eq!(c.runs.len() + c.failures.len(), 2);
        let seeds: Vec<u64> = c.runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![0, 1]);
    }
    let csv = render_report(&r, ReportFormat::Csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    let table = render_report(&r, ReportFormat::Table).unwrap();
    assert!(table.contains("Event days") && table.contains("Non-event days"));
    assert!(table.contains("(±"));
}

#[test]
fn experiments_are_reproducible_byte_for_byte() {
    let mut cfg = small_experiment(2);
    cfg.baselines = vec![BaselineKind::Ha, BaselineKind::Gp];
    let data = cfg.data.load().unwrap();
    let a = run_experiment::<f64>(&cfg, &data).unwrap();
    let b = run_experiment::<f64>(&cfg, &cfg.data.load().unwrap()).unwrap();
    assert_eq!(a, b);
    for f in [ReportFormat::Table, ReportFormat::Csv] {
        assert_eq!(render_report(&a, f).unwrap(), render_report(&b, f).unwrap());
    }
    // GP rows skip the text feature set; the historical average has one row
    assert!(a.cell(Method::Gp, Some(FeatureSet::L)).is_some());
    assert!(a.cell(Method::Gp, Some(FeatureSet::LWET)).is_none());
    assert_eq!(a.cell(Method::Ha, None).unwrap().runs.len(), 1);
}

#[test]
fn single_run_has_zero_spread() {
    let mut cfg = small_experiment(1);
    cfg.variants = vec![Variant::DlFc];
    let data = cfg.data.load().unwrap();
    let r = run_experiment::<f64>(&cfg, &data).unwrap();
    for c in &r.cells {
        let s = c.summary(Group::All).unwrap();
        assert_eq!((s.mae.std, s.rmse.std, s.r2.std), (0.0, 0.0, 0.0));
        assert_eq!(s.mape.unwrap().std, 0.0);
    }
}

#[test]
fn failed_runs_are_excluded_and_counted() {
    let mut cfg = small_experiment(3);
    cfg.variants = vec![Variant::DlFc];
    cfg.feature_sets = vec![FeatureSet::L];
    cfg.training.keep_prob = Some(0.0);
    let data = cfg.data.load().unwrap();
    let r = run_experiment::<f64>(&cfg, &data).unwrap();
    let c = &r.cells[0];
    assert_eq!(c.runs.len(), 0);
    assert_eq!(c.failures.len(), 3);
    assert!(c.summary(Group::All).is_none());
    let table = render_report(&r, ReportFormat::Table).unwrap();
    assert!(table.contains("0/3") && table.contains("Excluded runs"));
    let csv = render_report(&r, ReportFormat::Csv).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("DL-FC,L,0,3,"));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_experiment(0);
    assert!(matches!(cfg.validate(), Err(EvalError::Config(_))));
    cfg.runs = 1;
    cfg.variants.clear();
    assert!(cfg.validate().is_err());
    cfg.baselines = vec![BaselineKind::Ha];
    assert!(cfg.validate().is_ok());
}
