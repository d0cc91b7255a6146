use idmotion::dataset::synth::synth_generate;
use idmotion::dataset::DatasetIndex;
use idmotion::model::{Model, ModelConfig};
use idmotion::training::{fit, load_run, read_metrics, resume, Checkpoint, FitOutput, TrainConfig, METRICS_FILE};

fn setup(epochs: usize) -> (DatasetIndex, TrainConfig) {
    let index = synth_generate(3, 3, 16, 0).unwrap();
    let config = TrainConfig {
        batch_size: 2,
        max_epochs: epochs,
        autoencoder_lr: 1e-3,
        ..TrainConfig::default()
    };
    (index, config)
}

#[test]
fn zero_epochs_is_the_initialization() {
    let (index, config) = setup(0);
    let ck = fit(&index, ModelConfig::scaled(16), config.clone(), &FitOutput::default(), |_| {}).unwrap();
    let init = Model::new(ModelConfig::scaled(16), config.seed).unwrap();
    assert_eq!(ck.model().store.digest(None), init.store.digest(None));
    assert_eq!(ck.trainer.step, 0);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let (index, config) = setup(3);
    let dir = tempfile::tempdir().unwrap();
    let straight = fit(&index, ModelConfig::scaled(16), config.clone(), &FitOutput::default(), |_| {}).unwrap();

    let out = FitOutput::in_dir(dir.path());
    let partial = fit(&index, ModelConfig::scaled(16), TrainConfig { max_epochs: 1, ..config }, &out, |_| {}).unwrap();
    assert_eq!(partial.trainer.epoch, 1);
    let reloaded = load_run(dir.path()).unwrap();
    let finished = resume(reloaded, &index, 3, &out, |_| {}).unwrap();

    assert_eq!(finished.model().store.digest(None), straight.model().store.digest(None));
    assert_eq!(finished.trainer.step, straight.trainer.step);
    assert_eq!(finished.trainer.decoder_calls, straight.trainer.decoder_calls);
    let records = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(records.len() as u64, straight.trainer.step);
    assert!(records.windows(2).all(|w| w[1].step == w[0].step + 1));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (index, config) = setup(1);
    let ck = fit(&index, ModelConfig::scaled(16), config, &FitOutput::default(), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.dataset_digest, index.digest());
    for clip in index.clips().take(4) {
        let (a, b) = (ck.model(), back.model());
        assert_eq!(a.reconstruct(clip).unwrap().data(), b.reconstruct(clip).unwrap().data());
        assert_eq!(
            a.discriminate(clip.data()).unwrap().to_bits(),
            b.discriminate(clip.data()).unwrap().to_bits()
        );
    }
    assert_eq!(back.trainer.adam_g.steps(), ck.trainer.adam_g.steps());
}
