use chrono::{Days, NaiveDate};
use demandfuse::data::{TrainingExample, TrendModel};
use demandfuse::model::layers::attend;
use demandfuse::model::params::{self as names};
use demandfuse::model::*;
use demandfuse::rng::seeded;
use demandfuse::tensor::{Mode, Tape, Tensor};
use demandfuse::text::{encode, random_embeddings, EmbeddingMatrix, Vocabulary};
use proptest::prelude::*;
use rand::Rng as _;

const VOCAB: usize = 7;

fn vocab() -> Vocabulary {
    Vocabulary::from((1..=VOCAB).map(|i| format!("w{i}")).collect::<Vec<_>>())
}

fn small_geometry() -> TextGeometry {
    TextGeometry { kernels: vec![2, 3], filters: vec![3, 2], pools: vec![2, 2] }
}

/// A model small enough for exhaustive finite differences.
fn small_config(variant: Variant, fs: FeatureSet) -> ModelConfig {
    let mut c = ModelConfig::new(variant, fs, 3, 14, VOCAB, 4);
    c.geometry = small_geometry();
    c.fc_hidden = 6;
    c.ts_dim = 4;
    c
}

fn table(dim: usize, seed: u64) -> EmbeddingMatrix<f64> {
    random_embeddings(&vocab(), dim, &mut seeded(seed))
}

fn examples(n: usize, lags: usize, max_len: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = seeded(seed);
    let v = vocab();
    let start = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
    (0..n)
        .map(|i| {
            let words = rng.random_range(0..=max_len);
            let tokens: Vec<String> = (0..words).map(|_| format!("w{}", rng.random_range(1..=VOCAB))).collect();
            let residual = rng.random_range(-40.0..40.0);
            TrainingExample {
                target_date: start + Days::new(i as u64),
                lags: (0..=lags).map(|_| rng.random_range(-40.0..40.0)).collect(),
                lag_event_flags: (0..=lags).map(|_| rng.random_bool(0.4)).collect(),
                event_flag: rng.random_bool(0.4),
                late_night_flag: rng.random_bool(0.3),
                weather: (0..6).map(|_| rng.random_range(-2.0..2.0)).collect(),
                text: encode(&tokens, &v, max_len),
                target_residual: residual,
                target_count: 500.0 + residual,
            }
        })
        .collect()
}

fn refs(e: &[TrainingExample]) -> Vec<&TrainingExample> {
    e.iter().collect()
}

fn flat_trend(level: f64) -> TrendModel {
    TrendModel { day_of_week_mean: [level; 7] }
}

fn build(config: ModelConfig) -> FusionModel<f64> {
    let t = config.feature_set.text().then(|| table(config.embedding_dim, 5));
    FusionModel::new(config, t.as_ref(), (1.5, 20.0)).unwrap()
}

/// Randomizes every parameter so that no gradient is trivially zero.
fn perturb(model: &mut FusionModel<f64>, seed: u64) {
    let mut rng = seeded(seed);
    for p in model.params_mut().iter_mut() {
        if p.name == names::NORM_TARGET {
            continue;
        }
        let cols = p.tensor.shape().last().copied().unwrap_or(1);
        let frozen = p.frozen_rows.clone();
        for (i, v) in p.tensor.values_mut().iter_mut().enumerate() {
            if frozen.contains(&(i / cols)) {
                continue;
            }
            *v = if p.name.ends_with("running_var") {
                rng.random_range(0.5..2.0)
            } else {
                rng.random_range(-0.6..0.6)
            };
        }
    }
}

/// Weighted sum of predictions, so every output contributes differently.
fn objective(model: &FusionModel<f64>, batch: &[&TrainingExample], mode: Mode) -> (f64, Vec<(String, Vec<f64>)>) {
    let mut tape = Tape::new();
    let f = model.forward(&mut tape, batch, mode, &mut seeded(0)).unwrap();
    let w: Vec<f64> = (0..batch.len()).map(|i| 1.0 + 0.37 * i as f64).collect();
    let w = tape.constant(Tensor::matrix(batch.len(), 1, w).unwrap());
    let prod = tape.mul(f.prediction, w).unwrap();
    let loss = tape.sum(prod).unwrap();
    let value = tape.tensor(loss).item().unwrap();
    tape.backward(loss).unwrap();
    let grads = model
        .params()
        .iter()
        .filter(|p| p.trainable)
        .map(|p| (p.name.clone(), tape.grad(f.bound.var(&p.name).unwrap()).unwrap().to_vec()))
        .collect();
    (value, grads)
}

/// Compares tape gradients with central differences, for at most
/// `per_param` entries of each trainable tensor.
fn fd_check(mut model: FusionModel<f64>, batch: &[&TrainingExample], mode: Mode, per_param: usize) -> f64 {
    let (_, grads) = objective(&model, batch, mode);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (name, g) in grads {
        let stride = (g.len() / per_param).max(1);
        for idx in (0..g.len()).step_by(stride) {
            let orig = model.params().get(&name).unwrap().tensor.values()[idx];
            model.params_mut().get_mut(&name).unwrap().tensor.values_mut()[idx] = orig + h;
            let plus = objective(&model, batch, mode).0;
            model.params_mut().get_mut(&name).unwrap().tensor.values_mut()[idx] = orig - h;
            let minus = objective(&model, batch, mode).0;
            model.params_mut().get_mut(&name).unwrap().tensor.values_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = (g[idx] - numeric).abs() / g[idx].abs().max(numeric.abs()).max(1e-6);
            assert!(err < 1e-4, "{name}[{idx}]: analytic {} vs numeric {numeric}", g[idx]);
            worst = worst.max(err);
        }
    }
    worst
}

// ----- whole-network gradients ----------------------------------------------------

#[test]
fn fd_gradients_every_variant_and_feature_set_eval_mode() {
    for variant in Variant::ALL {
        for fs in FeatureSet::ALL {
            let mut m = build(small_config(variant, fs));
            perturb(&mut m, 11);
            let ex = examples(3, 3, 14, 2);
            fd_check(m, &refs(&ex), Mode::Eval, usize::MAX);
        }
    }
}

#[test]
fn fd_gradients_with_batch_statistics() {
    // keep_prob = 1 makes training mode deterministic, leaving batch-statistic
    // normalization as the only difference from eval mode.
    for fs in FeatureSet::ALL {
        let mut c = small_config(Variant::DlFc, fs);
        c.keep_prob = 1.0;
        let mut m = build(c);
        perturb(&mut m, 12);
        let ex = examples(4, 3, 14, 3);
        fd_check(m, &refs(&ex), Mode::Train, usize::MAX);
    }
}

#[test]
fn fd_gradients_default_text_stack() {
    for variant in Variant::ALL {
        let c = ModelConfig::new(variant, FeatureSet::LWET, 6, 89, VOCAB, 6);
        let mut m = build(c);
        perturb(&mut m, 13);
        let ex = examples(2, 6, 89, 4);
        fd_check(m, &refs(&ex), Mode::Eval, 12);
    }
}

// ----- shapes and configuration ----------------------------------------------------

#[test]
fn parameter_shapes_of_the_full_text_model() {
    let c = ModelConfig::new(Variant::DlFc, FeatureSet::LWET, 6, 500, 150, 300);
    let m = build_with_table(c, 150, 300);
    let shape = |n: &str| m.params().get(n).unwrap().tensor.shape().to_vec();
    assert_eq!(shape(names::EMBEDDING), vec![151, 300]);
    assert_eq!(shape("text.conv1.kernel"), vec![3, 300, 50]);
    assert_eq!(shape("text.conv2.kernel"), vec![3, 50, 30]);
    assert_eq!(shape("text.conv3.kernel"), vec![5, 30, 30]);
    assert_eq!(shape(&names::dense_w(1)), vec![7 + 8, 128]);
    assert_eq!(shape(&names::dense_w(2)), vec![128, 50]);
    assert_eq!(shape(names::HEAD_TEXT), vec![300, 1]);
    assert_eq!(shape(names::ATTN_WC), vec![50, 1]);
    assert!(m.params().get(names::HEAD_EXTRA).is_none());
    assert!(!m.params().get(&names::bn(1, "running_mean")).unwrap().trainable);
}

fn build_with_table(c: ModelConfig, v: usize, dim: usize) -> FusionModel<f64> {
    let vocab = Vocabulary::from((1..=v).map(|i| format!("x{i}")).collect::<Vec<_>>());
    let t = random_embeddings(&vocab, dim, &mut seeded(1));
    FusionModel::new(c, Some(&t), (0.0, 1.0)).unwrap()
}

#[test]
fn lstm_parameters_and_forget_bias() {
    let m = build(small_config(Variant::DlLstm, FeatureSet::LWE));
    let h = 4;
    assert_eq!(m.params().get(names::LSTM_WX).unwrap().tensor.shape(), &[2, 4 * h]);
    assert_eq!(m.params().get(names::HEAD_EXTRA).unwrap().tensor.shape(), &[8, 1]);
    let b = m.params().values(names::LSTM_B).unwrap();
    assert!(b[..h].iter().all(|&v| v == 0.0));
    assert!(b[h..2 * h].iter().all(|&v| v == 1.0));
    assert!(b[2 * h..].iter().all(|&v| v == 0.0));
    let l = build(small_config(Variant::DlLstm, FeatureSet::LW));
    assert_eq!(l.params().get(names::LSTM_WX).unwrap().tensor.shape(), &[1, 4 * h]);
}

#[test]
fn text_shorter_than_encoder_minimum_is_a_configuration_error() {
    let c = ModelConfig::new(Variant::DlFc, FeatureSet::LWET, 6, 88, VOCAB, 4);
    assert!(matches!(c.validate(), Err(ModelError::Config(_))));
    let t = table(4, 1);
    assert!(matches!(FusionModel::new(c, Some(&t), (0.0, 1.0)), Err(ModelError::Config(_))));
    // the length limit only applies when text is used
    let c = ModelConfig::new(Variant::DlFc, FeatureSet::LWE, 6, 10, VOCAB, 4);
    assert!(c.validate().is_ok());
}

#[test]
fn encode_text_rejects_short_sequences_directly() {
    use demandfuse::model::layers::{encode_text, TextVars};
    let g = TextGeometry::default();
    let mut tape = Tape::<f64>::new();
    let emb = tape.constant(Tensor::zeros(vec![3, 4]).unwrap());
    let vars = TextVars {
        embedding: emb,
        kernels: vec![emb; 3],
        biases: vec![emb; 3],
    };
    let err = encode_text(&mut tape, &vars, &[1; 88], 1, &g, 1.0, Mode::Eval, &mut seeded(0)).unwrap_err();
    assert!(matches!(err, ModelError::Config(_)), "{err}");
}

#[test]
fn feature_set_and_variant_names_roundtrip() {
    for fs in FeatureSet::ALL {
        assert_eq!(fs.name().parse::<FeatureSet>().unwrap(), fs);
    }
    assert_eq!("l + w + e".parse::<FeatureSet>().unwrap(), FeatureSet::LWE);
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert!("L+T".parse::<FeatureSet>().is_err());
    assert!("dl-cnn".parse::<Variant>().is_err());
}

#[test]
fn mismatched_example_is_a_contract_error() {
    let m = build(small_config(Variant::DlFc, FeatureSet::LWET));
    let mut ex = examples(1, 3, 14, 1);
    ex[0].lags.pop();
    assert!(matches!(m.predict(&refs(&ex)), Err(ModelError::Contract(_))));
    let mut ex = examples(1, 3, 13, 1);
    ex[0].lag_event_flags.truncate(4);
    assert!(matches!(m.predict(&refs(&ex)), Err(ModelError::Contract(_))));
}

// ----- attention -------------------------------------------------------------------

#[test]
fn attention_matches_hand_computation() {
    let mut tape = Tape::<f64>::new();
    let z = tape.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, -1.0]).unwrap());
    let c = tape.constant(Tensor::matrix(1, 2, vec![0.5, -0.25]).unwrap());
    let wz = tape.constant(Tensor::vector(vec![0.5]));
    let wc = tape.constant(Tensor::matrix(2, 1, vec![2.0, 4.0]).unwrap());
    let b = tape.constant(Tensor::vector(vec![0.1]));
    let (h, alpha) = attend(&mut tape, z, c, wz, wc, b).unwrap();
    // c·wc + b = 0.1
    let e: Vec<f64> = [1.0f64, 2.0, -1.0].iter().map(|&v| (0.5 * v + 0.1).tanh()).collect();
    let s: f64 = e.iter().map(|v| v.exp()).sum();
    let want: Vec<f64> = e.iter().map(|v| v.exp() / s).collect();
    for (got, w) in tape.values(alpha).iter().zip(&want) {
        assert!((got - w).abs() < 1e-15);
    }
    for ((got, a), zv) in tape.values(h).iter().zip(&want).zip([1.0, 2.0, -1.0]) {
        assert!((got - a * zv).abs() < 1e-15);
    }
}

#[test]
fn model_attention_rows_are_distributions() {
    let mut m = build(small_config(Variant::DlLstm, FeatureSet::LWET));
    perturb(&mut m, 3);
    let ex = examples(5, 3, 14, 9);
    let rows = m.attention(&refs(&ex)).unwrap().unwrap();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert_eq!(r.len(), m.config().text_len().unwrap());
        assert!(r.iter().all(|&a| a > 0.0));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(build(small_config(Variant::DlFc, FeatureSet::LWE)).attention(&refs(&ex)).unwrap().is_none());
}

proptest! {
    #[test]
    fn attention_normalizes_any_input(
        z in prop::collection::vec(-50.0f64..50.0, 1..20),
        c in prop::collection::vec(-5.0f64..5.0, 3),
        wz in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let k = z.len();
        let mut tape = Tape::<f64>::new();
        let zv = tape.constant(Tensor::matrix(1, k, z.clone()).unwrap());
        let cv = tape.constant(Tensor::matrix(1, 3, c).unwrap());
        let wzv = tape.constant(Tensor::vector(vec![wz]));
        let wcv = tape.constant(Tensor::matrix(3, 1, vec![0.3, -0.7, 1.1]).unwrap());
        let bv = tape.constant(Tensor::vector(vec![b]));
        let (_, alpha) = attend(&mut tape, zv, cv, wzv, wcv, bv).unwrap();
        let a = tape.values(alpha);
        prop_assert!(a.iter().all(|&x| x > 0.0 && x <= 1.0));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unused_inputs_do_not_change_predictions(seed in 0u64..1000, variant_lstm in any::<bool>()) {
        let variant = if variant_lstm { Variant::DlLstm } else { Variant::DlFc };
        for fs in [FeatureSet::L, FeatureSet::LW, FeatureSet::LWE] {
            let mut m = build(small_config(variant, fs));
            perturb(&mut m, seed);
            let ex = examples(3, 3, 14, seed);
            let base = m.predict(&refs(&ex)).unwrap();
            let mut other = examples(3, 3, 14, seed + 7);
            for (o, e) in other.iter_mut().zip(&ex) {
                o.target_date = e.target_date;
                o.lags = e.lags.clone();
                if fs.weather() {
                    o.weather = e.weather.clone();
                }
                if fs.events() {
                    o.event_flag = e.event_flag;
                    o.late_night_flag = e.late_night_flag;
                    o.lag_event_flags = e.lag_event_flags.clone();
                }
            }
            prop_assert_eq!(m.predict(&refs(&other)).unwrap(), base);
        }
    }
}

#[test]
fn used_inputs_do_change_predictions() {
    // full-width filters, so some text units are active
    let mut m = build(ModelConfig::new(Variant::DlFc, FeatureSet::LWET, 3, 89, VOCAB, 6));
    perturb(&mut m, 4);
    let ex = examples(1, 3, 89, 5);
    let base = m.predict(&refs(&ex)).unwrap()[0];
    let mut alt = ex.clone();
    alt[0].weather[0] += 1.0;
    assert_ne!(m.predict(&refs(&alt)).unwrap()[0], base);
    let mut alt = ex.clone();
    alt[0].text = encode(&["w1".into(), "w2".into(), "w3".into()], &vocab(), 89);
    assert_ne!(m.predict(&refs(&alt)).unwrap()[0], base);
}

#[test]
fn eval_predictions_do_not_depend_on_batch_composition() {
    for variant in Variant::ALL {
        let mut m = build(small_config(variant, FeatureSet::LWET));
        perturb(&mut m, 8);
        let ex = examples(6, 3, 14, 6);
        let all = m.predict(&refs(&ex)).unwrap();
        for (i, e) in ex.iter().enumerate() {
            assert_eq!(m.predict(&[e]).unwrap()[0], all[i]);
        }
    }
}

#[test]
fn forecasts_are_retrended_and_clamped() {
    let mut m = build(small_config(Variant::DlFc, FeatureSet::L));
    let ex = examples(3, 3, 14, 1);
    let res = m.predict_residuals(&refs(&ex)).unwrap();
    let f = m.forecast(&refs(&ex), &flat_trend(300.0)).unwrap();
    for (r, f) in res.iter().zip(&f) {
        assert!((f - (r + 300.0)).abs() < 1e-9);
    }
    m.params_mut().get_mut(names::HEAD_B).unwrap().tensor.values_mut()[0] = -1e6;
    assert!(m.forecast(&refs(&ex), &flat_trend(300.0)).unwrap().iter().all(|&v| v == 0.0));
}

// ----- training -----------------------------------------------------------------------

/// Residual of the next day follows the most recent lag.
fn linear_examples(n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut ex = examples(n, 3, 14, seed);
    let mut rng = seeded(seed ^ 99);
    for e in &mut ex {
        e.target_residual = 0.8 * e.lags[0] - 0.3 * e.lags[1] + rng.random_range(-1.0..1.0);
        e.target_count = (500.0 + e.target_residual).max(0.0);
    }
    ex
}

fn quick(mut c: ModelConfig) -> ModelConfig {
    c.max_epochs = 60;
    c.patience = 60;
    c.batch_size = 32;
    c.learning_rate = 1e-2;
    c
}

#[test]
fn training_learns_a_linear_lag_relation() {
    let train_set = linear_examples(300, 1);
    let val_set = linear_examples(80, 2);
    let test_set = linear_examples(100, 3);
    let zero_mae = test_set.iter().map(|e| e.target_residual.abs()).sum::<f64>() / test_set.len() as f64;
    for variant in Variant::ALL {
        let c = quick(small_config(variant, FeatureSet::L));
        let (m, h) = train::<f64>(&c, &train_set, &val_set, None, &flat_trend(500.0)).unwrap();
        let mae = count_mae(&m, &refs(&test_set), &flat_trend(500.0)).unwrap();
        assert!(mae < 0.35 * zero_mae, "{variant}: MAE {mae} vs zero-forecast {zero_mae}");
        assert!(h.best_epoch >= 1 && h.best_epoch <= h.epochs.len());
        assert!(h.epochs.last().unwrap().train_loss < h.epochs[0].train_loss);
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let train_set = linear_examples(90, 4);
    let val_set = linear_examples(30, 5);
    let mut c = quick(small_config(Variant::DlFc, FeatureSet::LWET));
    c.max_epochs = 5;
    let t = table(4, 3);
    let (a, ha) = train(&c, &train_set, &val_set, Some(&t), &flat_trend(500.0)).unwrap();
    let (b, hb) = train(&c, &train_set, &val_set, Some(&t), &flat_trend(500.0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let (d, _) = train(&c.clone().with_seed(1), &train_set, &val_set, Some(&t), &flat_trend(500.0)).unwrap();
    assert_ne!(a, d);
}

#[test]
fn padding_row_stays_zero_and_frozen_embeddings_stay_put() {
    let train_set = linear_examples(64, 6);
    let mut c = quick(small_config(Variant::DlLstm, FeatureSet::LWET));
    c.max_epochs = 3;
    let t = table(4, 3);
    let (m, _) = train(&c, &train_set, &[], Some(&t), &flat_trend(500.0)).unwrap();
    let e = m.params().values(names::EMBEDDING).unwrap();
    assert!(e[..4].iter().all(|&v| v == 0.0));
    assert_ne!(&e[4..], &t.values()[4..]);

    c.train_embeddings = false;
    let (m, _) = train(&c, &train_set, &[], Some(&t), &flat_trend(500.0)).unwrap();
    assert_eq!(m.params().values(names::EMBEDDING).unwrap(), t.values());
}

#[test]
fn early_stopping_restores_the_best_epoch() {
    let train_set = linear_examples(60, 7);
    let val_set = linear_examples(40, 8);
    let mut c = small_config(Variant::DlFc, FeatureSet::LW);
    c.learning_rate = 0.05;
    c.max_epochs = 150;
    c.patience = 3;
    let trend = flat_trend(500.0);
    let (m, h) = train::<f64>(&c, &train_set, &val_set, None, &trend).unwrap();
    assert!(h.stopped_early);
    assert_eq!(h.epochs.len(), h.best_epoch + 3);
    let best = h.epochs.iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min);
    assert_eq!(h.best_val_mae, best);
    let mae = count_mae(&m, &refs(&val_set), &trend).unwrap();
    assert!((mae - best).abs() < 1e-9, "{mae} vs {best}");
}

#[test]
fn lstm_l2_penalty_shrinks_recurrent_weights() {
    let train_set = linear_examples(64, 9);
    let mut c = quick(small_config(Variant::DlLstm, FeatureSet::L));
    c.max_epochs = 20;
    let norm = |m: &FusionModel<f64>| m.params().values(names::LSTM_WH).unwrap().iter().map(|v| v * v).sum::<f64>();
    c.lstm_l2 = 0.0;
    let (free, _) = train::<f64>(&c, &train_set, &[], None, &flat_trend(500.0)).unwrap();
    c.lstm_l2 = 1.0;
    let (tied, _) = train::<f64>(&c, &train_set, &[], None, &flat_trend(500.0)).unwrap();
    assert!(norm(&tied) < norm(&free));
}

#[test]
fn non_finite_inputs_are_reported_as_divergence() {
    let mut train_set = linear_examples(10, 1);
    train_set[3].lags[0] = f64::NAN;
    let c = quick(small_config(Variant::DlFc, FeatureSet::L));
    let err = train::<f64>(&c, &train_set, &[], None, &flat_trend(500.0)).unwrap_err();
    assert!(matches!(err, ModelError::Divergence { epoch: 1, .. }), "{err}");
}

#[test]
fn running_statistics_track_the_inputs() {
    let mut train_set = linear_examples(128, 2);
    for e in &mut train_set {
        e.weather = vec![3.0; 6];
    }
    let mut c = quick(small_config(Variant::DlFc, FeatureSet::LW));
    c.max_epochs = 40;
    c.patience = 40;
    c.batch_size = 8;
    let (m, _) = train::<f64>(&c, &train_set, &[], None, &flat_trend(500.0)).unwrap();
    let mean = m.params().values(&names::bn(1, "running_mean")).unwrap();
    let var = m.params().values(&names::bn(1, "running_var")).unwrap();
    // columns 4.. are the constant weather features
    for j in 4..10 {
        assert!((mean[j] - 3.0).abs() < 0.1, "mean[{j}] = {}", mean[j]);
        assert!(var[j] < 0.05, "var[{j}] = {}", var[j]);
    }
}

#[test]
fn single_precision_model_tracks_double_precision() {
    let c = small_config(Variant::DlLstm, FeatureSet::LWET);
    let t64 = table(4, 5);
    let t32 = EmbeddingMatrix::<f32>::new(t64.rows(), 4, t64.values().iter().map(|&v| v as f32).collect()).unwrap();
    let m64 = FusionModel::<f64>::new(c.clone(), Some(&t64), (1.0, 10.0)).unwrap();
    let m32 = FusionModel::<f32>::new(c, Some(&t32), (1.0, 10.0)).unwrap();
    let ex = examples(4, 3, 14, 2);
    let a = m64.predict_residuals(&refs(&ex)).unwrap();
    let b = m32.predict_residuals(&refs(&ex)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-3 * (1.0 + x.abs()), "{x} vs {y}");
    }
}

// ----- checkpoints ----------------------------------------------------------------------

#[test]
fn checkpoint_roundtrip_preserves_predictions_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for variant in Variant::ALL {
        for fs in FeatureSet::ALL {
            let mut m = build(small_config(variant, fs));
            perturb(&mut m, 21);
            let path = dir.path().join(format!("{variant}-{}.ckpt", fs as u8));
            save(&m, &path).unwrap();
            let back: FusionModel<f64> = load(&path).unwrap();
            assert_eq!(back, m);
            let ex = examples(3, 3, 14, 1);
            assert_eq!(back.predict(&refs(&ex)).unwrap(), m.predict(&refs(&ex)).unwrap());
        }
    }
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let m = build(small_config(Variant::DlFc, FeatureSet::LWET));
    let bytes = to_bytes(&m).unwrap();
    assert!(from_bytes::<f64>(&bytes[..bytes.len() - 3]).is_err());
    assert!(from_bytes::<f64>(b"not a checkpoint\n").is_err());

    let text = String::from_utf8_lossy(&bytes).into_owned();
    let wrong_shape = text.replacen("head.w_ts 1 4x1", "head.w_ts 1 5x1", 1).into_bytes();
    assert!(matches!(from_bytes::<f64>(&wrong_shape), Err(ModelError::Checkpoint(_))));

    let mut nan = bytes.clone();
    let n = nan.len();
    nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(from_bytes::<f64>(&nan).is_err());
}

