use rand::seq::SliceRandom;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::ingest::{split_patient_disjoint, DatasetSplit, GradeLabel, InputMode, Slide};
use crate::losses::{classification_loss_grad, LossReport};
use crate::networks::ModelBundle;
use crate::nn::{Adam, Mode, Parameterized};
use crate::rng::{derive_seed, rng_for, TAG_SHUFFLE, TAG_SOURCE_BATCH, TAG_VALIDATION};

use super::data::{all_patches, grade_of, input_batch, one_hot_labels};
use super::predict::{predict_patches, MapperChoice};
use super::TrainConfig;

/// Result of supervised source training.
#[derive(Debug, Clone)]
pub struct SourceRun {
    pub checkpoint: Checkpoint,
    /// One record per optimizer step.
    pub log: Vec<LossReport>,
    /// Patch accuracy on the held-out validation slides, per epoch.
    pub validation_accuracy: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept.
    pub selected_epoch: usize,
}

fn patch_accuracy(bundle: &ModelBundle, slides: &[Slide], config: &TrainConfig) -> Result<f64> {
    let probs = predict_patches(bundle, MapperChoice::Source, slides, &config.input)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (slide, p) in slides.iter().zip(&probs) {
        let truth = grade_of(slide)?;
        for &v in p {
            let pred = if v >= 0.5 { GradeLabel::High } else { GradeLabel::Low };
            hit += usize::from(pred == truth);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Stage one: minimize classification loss over the training slides' patches.
///
/// A patient-disjoint validation subset is carved out of `split.train`; the
/// epoch with the best validation patch accuracy (latest on ties) is kept.
/// With `validation_fraction = 0` or too few patients, the last epoch is kept.
pub fn train_source(split: &DatasetSplit, config: &TrainConfig) -> Result<SourceRun> {
    config_check(config)?;
    for s in &split.train {
        grade_of(s)?;
    }
    if split.train.iter().all(|s| s.patches.is_empty()) {
        return Err(Error::InvalidInput("no training patches".into()));
    }

    let (fit, validation) = if config.validation_fraction > 0.0 {
        match split_patient_disjoint(
            split.train.clone(),
            1.0 - config.validation_fraction,
            derive_seed(config.seed, &[TAG_VALIDATION]),
        ) {
            Ok(s) => (s.train, s.test),
            Err(Error::DegenerateSplit(_)) => (split.train.clone(), Vec::new()),
            Err(e) => return Err(e),
        }
    } else {
        (split.train.clone(), Vec::new())
    };

    let mut bundle = ModelBundle::new_source(config.arch.clone(), config.seed)?;
    let mut adam = Adam::new(config.adam);
    let pool = all_patches(&fit);
    let mut log = Vec::new();
    let mut validation_accuracy = Vec::new();
    let mut best: Option<(f64, usize, ModelBundle)> = None;
    let mut step = 0u64;

    for epoch in 0..config.source_epochs {
        let mut order = pool.clone();
        order.shuffle(&mut rng_for(config.seed, &[TAG_SHUFFLE, epoch as u64]));
        for batch in order.chunks(config.batch_size) {
            // Batch norm needs at least two samples.
            if batch.len() < 2 {
                continue;
            }
            let x = input_batch(&fit, batch, &config.input, InputMode::Train, |i| {
                derive_seed(config.seed, &[TAG_SOURCE_BATCH, step, i as u64])
            })?;
            let labels = one_hot_labels(&fit, batch)?;
            let net = &mut bundle.source;
            net.zero_grad();
            let (feats, trace) = net.mapper.map_features(&x, Mode::Train)?;
            let logits = net.classifier.classify(&feats)?;
            let (loss, dlogits) = classification_loss_grad(&logits, &labels, config.epsilon)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("classification loss is {loss} at step {step}")));
            }
            let dfeats = net.classifier.backward(&feats, &dlogits);
            net.mapper.backward(&trace, &dfeats);
            adam.step(&mut [(config.lr_source, net.params_mut())]);
            log.push(LossReport {
                step,
                l_c: Some(loss),
                ..Default::default()
            });
            step += 1;
        }

        if !validation.is_empty() {
            let acc = patch_accuracy(&bundle, &validation, config)?;
            validation_accuracy.push(acc);
            if best.as_ref().is_none_or(|(b, _, _)| acc >= *b) {
                best = Some((acc, epoch + 1, bundle.clone()));
            }
        }
    }

    let (selected_epoch, mut bundle) = match best {
        Some((_, e, b)) => (e, b),
        None => (config.source_epochs, bundle),
    };
    bundle.source.zero_grad();
    Ok(SourceRun {
        checkpoint: Checkpoint::new(config.clone(), bundle, step, &log),
        log,
        validation_accuracy,
        selected_epoch,
    })
}

fn config_check(config: &TrainConfig) -> Result<()> {
    use crate::config::KeyValueConfig;
    config.validate()
}
