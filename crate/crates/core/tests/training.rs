use tempattn::data::synth::{gen_keyframe, KeyframeSpec};
use tempattn::data::{SequenceDataset, Target};
use tempattn::error::Error;
use tempattn::layers::Activation;
use tempattn::metrics::attention_report;
use tempattn::model::{Model, ModelConfig};
use tempattn::rng::Rng;
use tempattn::train::{train, EarlyStop, TrainConfig};

fn keyframe(count: usize) -> SequenceDataset {
    gen_keyframe(0, count, &KeyframeSpec::default()).unwrap()
}

fn keyframe_model(seed: u64) -> Model {
    let mut cfg = ModelConfig::autoencoder(10, 1, 32, 16);
    cfg.encoder_activation = Activation::Relu;
    Model::init(cfg, &mut Rng::new(seed)).unwrap()
}

#[test]
fn loss_falls_in_the_first_epochs() {
    let data = keyframe(120);
    let cfg = TrainConfig { max_epochs: 6, learning_rate: 1e-3, sparsity_lambda: 0.01, ..Default::default() };
    let (_, hist) = train(keyframe_model(0), &data, &cfg).unwrap();
    assert_eq!(hist.epochs.len(), 6);
    assert!(hist.epochs[5].train_loss < hist.epochs[0].train_loss);
    assert!(hist.epochs[5].val_loss < hist.epochs[0].val_loss);
}

#[test]
fn strong_sparsity_sharpens_attention() {
    let data = keyframe(100);
    let entropy = |lambda: f64| {
        let cfg = TrainConfig { max_epochs: 15, learning_rate: 3e-3, sparsity_lambda: lambda, ..Default::default() };
        let (model, _) = train(keyframe_model(1), &data, &cfg).unwrap();
        attention_report(&model, &data).unwrap().median_entropy()
    };
    let free = entropy(0.0);
    let pushed = entropy(10.0);
    assert!(pushed < free, "lambda=10 entropy {pushed} vs lambda=0 entropy {free}");
}

#[test]
fn early_stop_ends_a_plateaued_run() {
    let data = keyframe(40);
    let cfg = TrainConfig {
        max_epochs: 40,
        learning_rate: 1e-12,
        early_stop: Some(EarlyStop { min_delta: 0.01, patience: 10 }),
        ..Default::default()
    };
    let (_, hist) = train(keyframe_model(0), &data, &cfg).unwrap();
    assert!(hist.stopped_early);
    assert_eq!(hist.epochs.len(), 11);
}

#[test]
fn returned_weights_come_from_the_best_validation_epoch() {
    let data = keyframe(60);
    let cfg = TrainConfig { max_epochs: 12, learning_rate: 1e-2, ..Default::default() };
    let (_, hist) = train(keyframe_model(2), &data, &cfg).unwrap();
    let losses = hist.val_losses();
    let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(losses[hist.best_epoch], min);
    assert!(losses[..hist.best_epoch].iter().all(|&l| l > min));
}

#[test]
fn identical_runs_give_identical_weights() {
    let data = keyframe(40);
    let cfg = TrainConfig { max_epochs: 3, seed: 5, ..Default::default() };
    let (a, ha) = train(keyframe_model(5), &data, &cfg).unwrap();
    let (b, hb) = train(keyframe_model(5), &data, &cfg).unwrap();
    assert_eq!(ha.to_csv(), hb.to_csv());
    for ((na, pa), (nb, pb)) in a.params().into_iter().zip(b.params()) {
        assert_eq!(na, nb);
        assert_eq!(pa.as_slice(), pb.as_slice());
    }
}

#[test]
fn overflowing_data_is_reported_as_non_finite() {
    let mut data = keyframe(20);
    for s in &mut data.samples {
        if let Target::Sequence(t) = &mut s.target {
            t.as_mut_slice().iter_mut().for_each(|v| *v = 1e200);
        }
    }
    let cfg = TrainConfig { max_epochs: 2, ..Default::default() };
    let err = train(keyframe_model(0), &data, &cfg).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
}

#[test]
fn empty_dataset_is_rejected() {
    let data = keyframe(5).subset(&[]);
    let err = train(keyframe_model(0), &data, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}
