use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::TassError;
use crate::featureio::{Dataset, FeatureDims};
use crate::numcore::{Tape, Tensor};

const DIMS: FeatureDims = FeatureDims { d: 8, h: 2, w: 2, t: 3 };

fn data(seed: u64, n: usize) -> Dataset {
    random_dataset(DIMS, n, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        d: 8,
        h: 2,
        w: 2,
        t: 3,
        n_heads: 2,
        batch_size: 4,
        epochs: 2,
        lr: 1e-2,
        ..TrainConfig::default()
    }
}

#[test]
fn all_ones_question_passes_features_through() {
    let mut store = nn_head(3, 2);
    store.tensors_mut()[0] = Tensor::new(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    store.tensors_mut()[1] = Tensor::zeros(&[1, 2]);
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let f = tape.leaf(Tensor::row(vec![0.3, -0.4, 0.9]));
    let q = tape.leaf(Tensor::ones(&[1, 3]));
    let logits = answer_logits(&mut tape, &p, f, q).unwrap();
    assert_eq!(tape.value(logits).data(), &[0.3, -0.4]);
}

fn nn_head(d: usize, c: usize) -> crate::nn::ParamStore {
    let mut store = crate::nn::ParamStore::new();
    store.add_linear(HEAD, d, c, &mut ChaCha8Rng::seed_from_u64(0));
    store
}

#[test]
fn zero_head_gives_log_c() {
    let mut store = nn_head(4, 5);
    for t in store.tensors_mut() {
        *t = Tensor::zeros(t.shape());
    }
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let f = tape.leaf(Tensor::row(vec![0.1, 0.2, 0.3, 0.4]));
    let q = tape.leaf(Tensor::row(vec![1.0, -1.0, 2.0, 0.5]));
    let logits = answer_logits(&mut tape, &p, f, q).unwrap();
    let loss = tape.cross_entropy(logits, &[2]).unwrap();
    assert!((tape.value(loss).item() - 5f64.ln()).abs() < 1e-15);
}

#[test]
fn total_loss_arithmetic() {
    let l = LossComponents::combine(1.0, 0.2, 0.4, 0.5);
    assert!((l.total - 1.4).abs() < 1e-15);
}

fn model_for(config: &TrainConfig) -> TassModel {
    init_model(config, 4).unwrap()
}

#[test]
fn qa_only_when_auxiliaries_disabled() {
    let mut config = small_config();
    config.lambda = 0.0;
    config.ablation.no_cms = true;
    let ds = data(1, 4);
    let model = model_for(&config);
    let out = batch_gradients(&model, &ds, &[0, 1, 2, 3], &[], config.loss_weights()).unwrap();
    assert_eq!(out.loss.total, out.loss.qa);
    assert_eq!(out.loss.cms, 0.0);
    assert_eq!(out.loss.match_loss, 0.0);
}

#[test]
fn every_parameter_receives_gradient() {
    for stream in [Stream::Single, Stream::Dual] {
        let mut config = small_config();
        config.ablation.stream = stream;
        let ds = data(2, 6);
        let model = model_for(&config);
        let batch: Vec<usize> = (0..6).collect();
        let pairs = draw_pairs(&ds, &batch, &mut ChaCha8Rng::seed_from_u64(3));
        let out = batch_gradients(&model, &ds, &batch, &pairs, config.loss_weights()).unwrap();
        for ((name, _), g) in model.params.iter().zip(&out.grads) {
            assert!(g.data().iter().any(|&x| x != 0.0), "{name} has no gradient ({stream:?})");
        }
    }
}

#[test]
fn split_backward_matches_single_tape() {
    let config = small_config();
    let ds = data(4, 5);
    let model = model_for(&config);
    let batch = [4, 0, 2];
    let weights = config.loss_weights();
    let pairs = draw_pairs(&ds, &batch, &mut ChaCha8Rng::seed_from_u64(5));
    let split = batch_gradients(&model, &ds, &batch, &pairs, weights).unwrap();

    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let loss = batch_loss_on_tape(&mut tape, &bound, &model, &ds, &batch, &pairs, weights).unwrap();
    assert!((tape.value(loss).item() - split.loss.total).abs() < 1e-12);
    tape.backward(loss).unwrap();
    let whole = bound.grads(&tape, &model.params);
    for (a, b) in split.grads.iter().zip(&whole) {
        assert!(a.max_abs_diff(b) < 1e-12);
    }
}

#[test]
fn gradcheck_suite_ops_and_modules_pass() {
    let cases = run_gradcheck_suite(&[17], 1e-5, 1e-5).unwrap();
    let failing: Vec<_> = cases.iter().filter(|c| !c.pass && !c.name.starts_with("end_to_end")).collect();
    assert!(failing.is_empty(), "{failing:?}");
    // Composite mismatches stay at the central-difference roundoff floor.
    for c in cases.iter().filter(|c| c.name.starts_with("end_to_end")) {
        assert!(c.max_abs_diff < 1e-10, "{c:?}");
        assert!(c.largest_failing < 1e-5, "{c:?}");
    }
}

#[test]
fn zero_epochs_reports_initial_evaluation() {
    let config = TrainConfig { epochs: 0, ..small_config() };
    let (train_set, val_set) = (data(6, 8), data(7, 4));
    let outcome = train(&config, &train_set, &val_set, |_| {}).unwrap();
    assert_eq!(outcome.history.len(), 1);
    let fresh = model_for(&config);
    assert_eq!(outcome.model, fresh);
    let direct = evaluate(&fresh, &val_set, config.loss_weights(), config.batch_size, config.seed).unwrap();
    assert!(outcome.final_report().same_results(&direct));
}

#[test]
fn same_seed_same_trajectory() {
    let config = small_config();
    let (train_set, val_set) = (data(8, 10), data(9, 4));
    let a = train(&config, &train_set, &val_set, |_| {}).unwrap();
    let b = train(&config, &train_set, &val_set, |_| {}).unwrap();
    let losses = |o: &TrainOutcome| -> Vec<u64> {
        o.history.iter().flat_map(|r| r.batch_losses.iter().map(|x| x.to_bits())).collect()
    };
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(losses(&a).len(), 2 * 3);
    assert_eq!(a.model, b.model);
    let c = train(&TrainConfig { seed: 1, ..config }, &train_set, &val_set, |_| {}).unwrap();
    assert_ne!(losses(&a), losses(&c));
}

#[test]
fn cms_flag_does_not_touch_inference() {
    let config = small_config();
    let ds = data(10, 3);
    let model = model_for(&config);
    for i in 0..ds.len() {
        let run = |cms: bool| {
            let mut tape = Tape::new();
            let p = model.bind_body(&mut tape);
            let w = LossWeights { cms, lambda: 0.5 };
            let out = model.forward(&mut tape, &p, ds.video_of(i), &ds.samples[i], w).unwrap();
            (tape.value(out.logits).clone(), tape.value(out.attention.f_avq).clone())
        };
        assert_eq!(run(true), run(false));
    }
}

#[test]
fn single_stream_has_fewer_parameters() {
    let config = small_config();
    let single = model_for(&config);
    let mut dual_config = config.clone();
    dual_config.ablation.stream = Stream::Dual;
    let dual = model_for(&dual_config);
    let w = config.loss_weights();
    assert!(single.trainable_params(w) < dual.trainable_params(w));
}

#[test]
fn per_type_accuracy_recombines() {
    let config = small_config();
    let ds = data(11, 9);
    let report = evaluate(&model_for(&config), &ds, config.loss_weights(), 4, 0).unwrap();
    let weighted: f64 = report.per_type.iter().map(|t| t.accuracy * t.total as f64).sum::<f64>() / ds.len() as f64;
    assert!((weighted - report.overall).abs() < 1e-15);
    assert_eq!(report.per_type.iter().map(|t| t.total).sum::<usize>(), ds.len());
}

#[test]
fn checkpoint_round_trip_and_repeatable_eval() {
    let config = small_config();
    let ds = data(12, 5);
    let model = model_for(&config);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &model, &config, &ds.answer_vocab).unwrap();
    let loaded = load_checkpoint(dir.path()).unwrap();
    assert_eq!(loaded.train, config);
    assert_eq!(loaded.model.config, model.config);
    for (a, b) in loaded.model.params.tensors().iter().zip(model.params.tensors()) {
        assert!(a.max_abs_diff(b) < 1e-7);
    }
    let w = config.loss_weights();
    let r1 = evaluate(&loaded.model, &ds, w, 2, 3).unwrap();
    let r2 = evaluate(&loaded.model, &ds, w, 2, 3).unwrap();
    assert!(r1.same_results(&r2));
}

#[test]
fn checkpoint_shape_mismatch_is_reported() {
    let config = small_config();
    let model = model_for(&config);
    let mut other = model.config;
    other.d = 4;
    other.n_heads = 2;
    let err = TassModel::from_params(other, model.params.clone()).unwrap_err();
    assert_eq!(err.kind(), "checkpoint");
}

#[test]
fn nan_parameter_aborts_with_batch_id() {
    let config = small_config();
    let (train_set, val_set) = (data(13, 8), data(14, 4));
    let mut model = model_for(&config);
    model.params.tensors_mut()[0].data_mut()[0] = f64::NAN;
    let err = train_model(&config, model, &train_set, &val_set, &mut |_| {}).unwrap_err();
    assert!(matches!(err, TassError::NonFiniteLoss { epoch: 1, batch: 0 }), "{err:?}");
}

#[test]
fn dims_and_vocab_checked_before_training() {
    let config = TrainConfig { d: 16, ..small_config() };
    let (train_set, val_set) = (data(15, 4), data(16, 4));
    assert_eq!(train(&config, &train_set, &val_set, |_| {}).unwrap_err().kind(), "config");
    let mut val_set = val_set;
    val_set.answer_vocab.push("extra".into());
    assert_eq!(train(&small_config(), &train_set, &val_set, |_| {}).unwrap_err().kind(), "config");
}

#[test]
fn attention_dump_writes_maps() {
    let config = small_config();
    let ds = data(18, 2);
    let dir = tempfile::tempdir().unwrap();
    dump_attention(&model_for(&config), &ds, dir.path()).unwrap();
    let w_av = crate::featureio::read_tensor_file(dir.path().join("000001/w_av.tass")).unwrap();
    assert_eq!(w_av.shape(), &[1, 6]);
    let s_a = crate::featureio::read_tensor_file(dir.path().join("000000/s_a.tass")).unwrap();
    assert_eq!(s_a.shape(), &[3, 4]);
    assert!(dir.path().join("predictions.json").exists());
}
