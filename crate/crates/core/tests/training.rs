use histo_adapt::checkpoint::Checkpoint;
use histo_adapt::ingest::{split_patient_disjoint, Slide};
use histo_adapt::networks::ModelBundle;
use histo_adapt::nn::Parameterized;
use histo_adapt::synth::{generate_dataset, Domain, SynthConfig};
use histo_adapt::training::{
    adapt_target, predict_patches, sample_pair_batch, train_source, AdaptMode, Adapter, MapperChoice, TrainConfig,
};
use histo_adapt::Error;

fn synth(per_class: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_slides_per_class: per_class,
        patches_per_slide_min: 4,
        patches_per_slide_max: 6,
        seed,
        ..SynthConfig::default()
    }
}

fn quick_config() -> TrainConfig {
    let mut c = TrainConfig::desk();
    c.source_epochs = 4;
    c.adapt_iterations = 4;
    c.batch_size = 8;
    c.pair_batch_size = 8;
    c
}

fn source_checkpoint(cfg: &TrainConfig) -> (Checkpoint, Vec<Slide>, Vec<Slide>) {
    let source = generate_dataset(&synth(3, 1), Domain::Source).unwrap();
    let target: Vec<Slide> = generate_dataset(&synth(3, 2), Domain::Target)
        .unwrap()
        .iter()
        .map(Slide::unlabeled)
        .collect();
    let bundle = ModelBundle::new_source(cfg.arch.clone(), cfg.seed).unwrap();
    (Checkpoint::new(cfg.clone(), bundle, 0, &[]), source, target)
}

#[test]
fn source_training_reduces_loss() {
    let mut cfg = quick_config();
    cfg.source_epochs = 6;
    let slides = generate_dataset(&synth(8, 5), Domain::Source).unwrap();
    let split = split_patient_disjoint(slides, 0.8, 0).unwrap();
    let run = train_source(&split, &cfg).unwrap();
    let l: Vec<f64> = run.log.iter().map(|r| r.l_c.unwrap()).collect();
    let head = l[..3].iter().sum::<f64>() / 3.0;
    let tail = l[l.len() - 3..].iter().sum::<f64>() / 3.0;
    assert!(tail < head, "loss {head:.4} -> {tail:.4}");
    assert!((1..=cfg.source_epochs).contains(&run.selected_epoch));
    assert_eq!(run.validation_accuracy.len(), cfg.source_epochs);
}

#[test]
fn source_training_is_deterministic() {
    let cfg = quick_config();
    let slides = generate_dataset(&synth(3, 6), Domain::Source).unwrap();
    let split = split_patient_disjoint(slides, 0.8, 0).unwrap();
    let a = train_source(&split, &cfg).unwrap();
    let b = train_source(&split, &cfg).unwrap();
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    assert_eq!(a.log, b.log);
}

#[test]
fn unlabeled_training_slide_is_rejected() {
    let cfg = quick_config();
    let mut slides = generate_dataset(&synth(3, 7), Domain::Source).unwrap();
    let split = {
        let mut s = split_patient_disjoint(slides.drain(..).collect(), 0.8, 0).unwrap();
        s.train[0] = s.train[0].unlabeled();
        s
    };
    assert!(matches!(train_source(&split, &cfg), Err(Error::InvalidInput(_))));
}

#[test]
fn adaptation_is_deterministic_and_never_touches_source() {
    let cfg = quick_config();
    let (ckpt, source, target) = source_checkpoint(&cfg);
    let before = ckpt.bundle.source.param_hash();
    let (a, log_a) = adapt_target(&ckpt, &source, &target, &cfg, AdaptMode::AdvPlusSiamese).unwrap();
    let (b, log_b) = adapt_target(&ckpt, &source, &target, &cfg, AdaptMode::AdvPlusSiamese).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.len(), cfg.adapt_iterations);
    assert!(log_a.iter().all(|r| r.l_s.is_some() && r.l_t.is_some() && r.is_finite()));
    assert_eq!(a.bundle.source.param_hash(), before);
    assert_ne!(a.bundle.target.as_ref().unwrap().param_hash(), ckpt.bundle.source.mapper.param_hash());
}

#[test]
fn adversarial_only_logs_no_siamese_term() {
    let cfg = quick_config();
    let (ckpt, source, target) = source_checkpoint(&cfg);
    let (_, log) = adapt_target(&ckpt, &source, &target, &cfg, AdaptMode::AdvOnly).unwrap();
    assert!(log.iter().all(|r| r.l_s.is_none() && r.l_a.is_some()));
}

#[test]
fn zero_iterations_leave_target_equal_to_source() {
    let mut cfg = quick_config();
    cfg.adapt_iterations = 0;
    let (ckpt, source, target) = source_checkpoint(&cfg);
    let (out, log) = adapt_target(&ckpt, &source, &target, &cfg, AdaptMode::AdvPlusSiamese).unwrap();
    assert!(log.is_empty());
    let s = predict_patches(&out.bundle, MapperChoice::Source, &target, &cfg.input).unwrap();
    let t = predict_patches(&out.bundle, MapperChoice::Target, &target, &cfg.input).unwrap();
    assert_eq!(s, t);
}

#[test]
fn zero_learning_rates_keep_parameters() {
    let mut cfg = quick_config();
    cfg.lr_discriminator = 0.0;
    cfg.lr_target = 0.0;
    cfg.lr_head = 0.0;
    let (ckpt, source, target) = source_checkpoint(&cfg);
    let mut adapter = Adapter::new(&ckpt, &source, &target, &cfg, AdaptMode::AdvPlusSiamese).unwrap();
    let d0 = adapter.bundle().discriminator.as_ref().unwrap().param_hash();
    let h0 = adapter.bundle().siamese_head.as_ref().unwrap().param_hash();
    for _ in 0..3 {
        adapter.step().unwrap();
    }
    let b = adapter.bundle();
    assert_eq!(b.target.as_ref().unwrap().param_hash(), b.source.mapper.param_hash());
    assert_eq!(b.discriminator.as_ref().unwrap().param_hash(), d0);
    assert_eq!(b.siamese_head.as_ref().unwrap().param_hash(), h0);
    assert_eq!(adapter.steps_taken(), 3);
}

#[test]
fn feature_dimension_mismatch_is_a_config_error() {
    let cfg = quick_config();
    let (ckpt, source, target) = source_checkpoint(&cfg);
    let mut other = cfg.clone();
    other.arch = other.arch.with_feature_dim(cfg.arch.feature_dim() + 1);
    let err = Adapter::new(&ckpt, &source, &target, &other, AdaptMode::AdvOnly).err().unwrap();
    assert!(matches!(err, Error::Config { .. }), "{err}");
}

#[test]
fn predictions_are_probabilities_and_repeatable() {
    let cfg = quick_config();
    let (ckpt, _, target) = source_checkpoint(&cfg);
    let a = predict_patches(&ckpt.bundle, MapperChoice::Source, &target, &cfg.input).unwrap();
    let b = predict_patches(&ckpt.bundle, MapperChoice::Source, &target, &cfg.input).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), target.len());
    for (probs, slide) in a.iter().zip(&target) {
        assert_eq!(probs.len(), slide.patches.len());
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }
    assert!(predict_patches(&ckpt.bundle, MapperChoice::Target, &target, &cfg.input).is_err());
}

#[test]
fn pair_batches_have_requested_mix() {
    let slides = generate_dataset(&synth(3, 11), Domain::Target).unwrap();
    let batch = sample_pair_batch(&slides, 10, 0.5, 4).unwrap();
    assert_eq!(batch.len(), 10);
    let positives = batch.same_slide.iter().filter(|&&y| y == 1.0).count();
    assert_eq!(positives, 5);
    for i in 0..batch.len() {
        let (a, b) = (batch.first[i], batch.second[i]);
        assert_eq!(batch.same_slide[i] == 1.0, a.slide == b.slide);
        if a.slide == b.slide {
            assert_ne!(a.patch, b.patch);
        }
    }
    assert_eq!(batch, sample_pair_batch(&slides, 10, 0.5, 4).unwrap());
}

#[test]
fn pair_sampling_needs_two_slides() {
    let slides = generate_dataset(&synth(1, 12), Domain::Target).unwrap();
    assert!(matches!(sample_pair_batch(&slides[..1], 8, 0.5, 0), Err(Error::Sampling(_))));
}
